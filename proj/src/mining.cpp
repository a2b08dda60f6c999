#include "prolif/mining.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "json.hpp"
#include "prolif/error.hpp"
#include "prolif/rng.hpp"

namespace prolif {

namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(SampleLabel label) { return label == SampleLabel::kMitosis ? "mitosis" : "normal"; }

const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::kGroundTruth:
      return "ground_truth";
    case Provenance::kRandomNormal:
      return "random_normal";
    case Provenance::kMinedFalsePositive:
      return "mined_false_positive";
  }
  return "unknown";
}

std::size_t TrainingDataset::count(SampleLabel label) const {
  return static_cast<std::size_t>(
      std::count_if(samples.begin(), samples.end(), [&](const TrainingSample& s) { return s.label == label; }));
}

std::size_t TrainingDataset::count(Provenance provenance) const {
  return static_cast<std::size_t>(std::count_if(
      samples.begin(), samples.end(), [&](const TrainingSample& s) { return s.provenance == provenance; }));
}

void TrainingDataset::validate(int train_input) const {
  for (const TrainingSample& s : samples) {
    if (s.patch.width() != train_input || s.patch.height() != train_input || s.patch.channels() != 3) {
      throw invalid_argument("training dataset: sample is not a train_input RGB square");
    }
    const bool mitosis_prov = s.provenance == Provenance::kGroundTruth;
    if (mitosis_prov != (s.label == SampleLabel::kMitosis)) {
      throw invalid_argument("training dataset: label inconsistent with provenance");
    }
  }
}

namespace {

// Window origin for a requested center, clamped so the window stays inside.
std::pair<int, int> clamped_origin(const Pixmap& img, int cx, int cy, int side) {
  const int x0 = std::clamp(cx - side / 2, 0, std::max(0, img.width() - side));
  const int y0 = std::clamp(cy - side / 2, 0, std::max(0, img.height() - side));
  return {x0, y0};
}

TrainingSample cut(const AnnotatedPatch& patch, int cx, int cy, int side, SampleLabel label, Provenance prov) {
  const auto [x0, y0] = clamped_origin(patch.image, cx, cy, side);
  return {crop(patch.image, x0, y0, side, side), label, prov, patch.id, x0 + side / 2, y0 + side / 2};
}

}  // namespace

TrainingDataset sample_stage1_dataset(const std::vector<AnnotatedPatch>& patches, int n_mitosis, int n_normal,
                                      const Stage1Params& params) {
  if (n_mitosis < 0 || n_normal < 0) throw invalid_argument("stage1: negative sample counts");
  const int side = params.train_input;
  const int half = side / 2;
  for (const AnnotatedPatch& p : patches) {
    if (p.image.width() < side || p.image.height() < side) throw invalid_argument("stage1: patch smaller than window");
  }
  struct Ref {
    const AnnotatedPatch* patch;
    Point at;
  };
  std::vector<Ref> eligible;
  for (const AnnotatedPatch& p : patches) {
    for (const Point& m : p.mitoses) {
      if (m.x >= half && m.y >= half && m.x + half <= p.image.width() && m.y + half <= p.image.height()) {
        eligible.push_back({&p, m});
      }
    }
  }
  if (n_mitosis > 0 && eligible.empty()) throw invalid_argument("stage1: no annotated mitosis fits a window");
  if (n_normal > 0 && patches.empty()) throw invalid_argument("stage1: no patches");

  Rng rng(params.seed);
  TrainingDataset out;
  for (int i = 0; i < n_mitosis; ++i) {
    const Ref& ref = eligible[static_cast<std::size_t>(i) % eligible.size()];
    const int cx = static_cast<int>(std::lround(ref.at.x)) + rng.uniform_int(-params.jitter, params.jitter);
    const int cy = static_cast<int>(std::lround(ref.at.y)) + rng.uniform_int(-params.jitter, params.jitter);
    out.samples.push_back(cut(*ref.patch, cx, cy, side, SampleLabel::kMitosis, Provenance::kGroundTruth));
  }
  constexpr int kMaxAttempts = 100000;
  int attempts = 0;
  for (int i = 0; i < n_normal;) {
    if (++attempts > kMaxAttempts) throw invalid_argument("stage1: could not place normal windows");
    const AnnotatedPatch& p = patches[rng.below(patches.size())];
    const int cx = half + static_cast<int>(rng.below(static_cast<std::uint64_t>(p.image.width() - side + 1)));
    const int cy = half + static_cast<int>(rng.below(static_cast<std::uint64_t>(p.image.height() - side + 1)));
    const bool clear = std::none_of(p.mitoses.begin(), p.mitoses.end(), [&](const Point& m) {
      return std::max(std::abs(m.x - cx), std::abs(m.y - cy)) <= params.exclusion;
    });
    if (!clear) continue;
    out.samples.push_back(cut(p, cx, cy, side, SampleLabel::kNormal, Provenance::kRandomNormal));
    ++i;
  }
  return out;
}

std::vector<MinedLocation> mine_false_positives(const Detector& detector, const std::vector<AnnotatedPatch>& patches,
                                                const MiningParams& params) {
  std::vector<MinedLocation> out;
  const double r2 = params.match_radius * params.match_radius;
  for (const AnnotatedPatch& p : patches) {
    for (const Detection& d : detect_mitoses(detector.score_map(p.image), params.threshold, params.nms_radius)) {
      const bool hit = std::any_of(p.mitoses.begin(), p.mitoses.end(), [&](const Point& m) {
        const double dx = m.x - d.x, dy = m.y - d.y;
        return dx * dx + dy * dy <= r2;
      });
      if (!hit) out.push_back({d.x, d.y, p.id});
    }
  }
  return out;
}

TrainingDataset build_stage2_dataset(const TrainingDataset& stage1, const std::vector<MinedLocation>& fps,
                                     const std::vector<AnnotatedPatch>& patches, const Stage2Params& params) {
  if (params.n_new_normals < 0 || params.aug_translation_max < 0) throw invalid_argument("stage2: negative parameter");
  TrainingDataset out = stage1;
  if (params.n_new_normals == 0) return out;
  if (fps.empty()) throw invalid_argument("stage2: no false positives to sample from");
  std::map<std::string, const AnnotatedPatch*> by_id;
  for (const AnnotatedPatch& p : patches) by_id[p.id] = &p;

  Rng rng(params.seed);
  const int a = params.aug_translation_max;
  for (int i = 0; i < params.n_new_normals; ++i) {
    const MinedLocation& fp = fps[static_cast<std::size_t>(i) % fps.size()];
    const auto it = by_id.find(fp.patch_id);
    if (it == by_id.end()) throw invalid_argument("stage2: unknown patch id " + fp.patch_id);
    const int cx = static_cast<int>(std::lround(fp.x)) + rng.uniform_int(-a, a);
    const int cy = static_cast<int>(std::lround(fp.y)) + rng.uniform_int(-a, a);
    out.samples.push_back(
        cut(*it->second, cx, cy, params.train_input, SampleLabel::kNormal, Provenance::kMinedFalsePositive));
  }
  return out;
}

void write_dataset(const fs::path& dir, const TrainingDataset& dataset) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw io_error("unwritable directory: " + dir.string());
  json index = json::array();
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    const TrainingSample& s = dataset.samples[i];
    char name[32];
    std::snprintf(name, sizeof name, "s%06zu.ppm", i);
    write_pnm(dir / name, s.patch);
    index.push_back({{"file", name},
                     {"label", to_string(s.label)},
                     {"provenance", to_string(s.provenance)},
                     {"source", s.source},
                     {"x", s.x},
                     {"y", s.y}});
  }
  std::ofstream out(dir / "dataset.json");
  if (!out) throw io_error("unwritable directory: " + dir.string());
  out << index.dump(1) << '\n';
}

TrainingDataset read_dataset(const fs::path& dir) {
  std::ifstream in(dir / "dataset.json");
  if (!in) throw io_error("missing dataset.json in " + dir.string());
  TrainingDataset out;
  try {
    for (const auto& j : json::parse(in)) {
      TrainingSample s;
      s.patch = read_pnm(dir / j.at("file").get<std::string>());
      const std::string label = j.at("label").get<std::string>();
      const std::string prov = j.at("provenance").get<std::string>();
      s.label = label == "mitosis" ? SampleLabel::kMitosis : SampleLabel::kNormal;
      if (prov == "ground_truth") {
        s.provenance = Provenance::kGroundTruth;
      } else if (prov == "random_normal") {
        s.provenance = Provenance::kRandomNormal;
      } else if (prov == "mined_false_positive") {
        s.provenance = Provenance::kMinedFalsePositive;
      } else {
        throw format_error("dataset: unknown provenance " + prov);
      }
      s.source = j.value("source", "");
      s.x = j.value("x", 0);
      s.y = j.value("y", 0);
      out.samples.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw format_error(std::string("dataset: ") + e.what());
  }
  return out;
}

void write_mined_jsonl(const fs::path& path, const std::vector<MinedLocation>& fps) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path.string());
  for (const MinedLocation& m : fps) out << json{{"patch", m.patch_id}, {"x", m.x}, {"y", m.y}}.dump() << '\n';
}

std::vector<MinedLocation> read_mined_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path.string());
  std::vector<MinedLocation> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      out.push_back({j.at("x").get<double>(), j.at("y").get<double>(), j.at("patch").get<std::string>()});
    } catch (const json::exception& e) {
      throw format_error(std::string("mined locations: ") + e.what());
    }
  }
  return out;
}

}  // namespace prolif
