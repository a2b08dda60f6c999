#include "prolif/detection.hpp"

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "prolif/error.hpp"
#include "prolif/morphology.hpp"

namespace prolif {

namespace fs = std::filesystem;
using nlohmann::json;

void DetectorGeometry::validate() const {
  if (train_input <= 0 || valid_center <= 0 || stride <= 0) throw invalid_argument("geometry: sizes must be positive");
  if (valid_center > train_input) throw invalid_argument("geometry: valid_center exceeds train_input");
  if ((train_input - valid_center) % 2 != 0) throw invalid_argument("geometry: valid_center must be centered");
  if (receptive_field < stride) throw invalid_argument("geometry: receptive field smaller than stride");
}

int ScoreMap::valid_count() const {
  return static_cast<int>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

ScoreMap lview_valid_mask(const DetectorGeometry& g, int patch_w, int patch_h) {
  g.validate();
  ScoreMap map;
  const int half = g.train_input / 2;
  map.ox = half;
  map.oy = half;
  map.stride = g.stride;
  auto cells_along = [&](int extent) { return extent > half ? (extent - half + g.stride - 1) / g.stride : 0; };
  map.cols = cells_along(patch_w);
  map.rows = cells_along(patch_h);
  map.probs.assign(static_cast<std::size_t>(map.rows) * map.cols, 0.0);
  map.valid.assign(map.probs.size(), 0);
  for (int i = 0; i < map.rows; ++i) {
    for (int j = 0; j < map.cols; ++j) {
      const int cx = map.center_x(j), cy = map.center_y(i);
      const bool fits = cx - half >= 0 && cx + half <= patch_w && cy - half >= 0 && cy + half <= patch_h;
      map.valid[map.index(i, j)] = fits ? 1 : 0;
    }
  }
  return map;
}

std::vector<Detection> detect_mitoses(const ScoreMap& map, double threshold, double nms_radius) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw invalid_argument("detect_mitoses: threshold must be in (0, 1)");
  struct Cand {
    double p;
    int y, x;
  };
  std::vector<Cand> cands;
  for (int i = 0; i < map.rows; ++i) {
    for (int j = 0; j < map.cols; ++j) {
      if (map.is_valid(i, j) && map.prob(i, j) >= threshold) {
        cands.push_back({map.prob(i, j), map.center_y(i), map.center_x(j)});
      }
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    if (a.p != b.p) return a.p > b.p;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  });
  std::vector<Detection> out;
  const double r2 = nms_radius * nms_radius;
  for (const Cand& c : cands) {
    bool suppressed = false;
    for (const Detection& d : out) {
      const double dx = d.x - c.x, dy = d.y - c.y;
      if (dx * dx + dy * dy <= r2) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) out.push_back({static_cast<double>(c.x), static_cast<double>(c.y), c.p});
  }
  return out;
}

std::vector<float> hematoxylin_map(const Pixmap& patch, const StainMatrix& stain) {
  const ColorTable table = color_table(patch);
  const std::vector<Conc> conc = compute_concentrations(colors_to_od(table.colors), stain);
  std::vector<float> h(table.index.size());
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = static_cast<float>(conc[table.index[i]][0]);
  return h;
}

WindowFeatures window_features(const std::vector<float>& h_map, int map_width, int x0, int y0,
                               const DetectorGeometry& geometry, const WindowFeatureParams& params) {
  const int size = geometry.train_input;
  const int lo = (geometry.train_input - geometry.valid_center) / 2;
  const int hi = lo + geometry.valid_center;
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(geometry.valid_center) * geometry.valid_center);
  BinaryMask dark(size, size);
  double sum = 0.0;
  for (int y = 0; y < size; ++y) {
    const float* row = h_map.data() + static_cast<std::size_t>(y0 + y) * map_width + x0;
    const bool center_row = y >= lo && y < hi;
    for (int x = 0; x < size; ++x) {
      if (row[x] >= params.dark_threshold) dark.set(x, y);
      if (center_row && x >= lo && x < hi) {
        values.push_back(row[x]);
        sum += row[x];
      }
    }
  }
  WindowFeatures f{};
  f[2] = 1.0;  // no dark blob counts as perfectly compact
  f[0] = sum / static_cast<double>(values.size());
  f[1] = percentile(std::move(values), params.dark_percentile);

  const Labeling labels = label_components(dark);
  const Component* best = nullptr;
  for (const Component& c : labels.components) {
    const double cx = c.centroid_x(), cy = c.centroid_y();
    if (cx < lo || cx >= hi || cy < lo || cy >= hi) continue;
    if (best == nullptr || c.area > best->area) best = &c;
  }
  if (best != nullptr) {
    const double cx = best->centroid_x(), cy = best->centroid_y();
    double reach = 0.0;
    for (int y = best->min_y; y <= best->max_y; ++y) {
      for (int x = best->min_x; x <= best->max_x; ++x) {
        if (labels.labels[static_cast<std::size_t>(y) * size + x] == best->label) {
          reach = std::max(reach, std::hypot(x - cx, y - cy));
        }
      }
    }
    const double area = static_cast<double>(best->area);
    f[2] = std::min(1.0, area / (std::numbers::pi * (reach + 0.5) * (reach + 0.5)));
    f[3] = area * params.mpp * params.mpp / 100.0;
  }
  return f;
}

WindowFeatureDetector::WindowFeatureDetector(DetectorGeometry geometry, WindowFeatureParams params)
    : geometry_(geometry), params_(std::move(params)) {
  geometry_.validate();
  params_.stain.validate();
  if (!(params_.mpp > 0.0)) throw invalid_argument("detector: mpp must be positive");
}

ScoreMap WindowFeatureDetector::score_map(const Pixmap& patch) const {
  if (patch.channels() != 3) throw invalid_argument("score_map: expected RGB patch");
  if (patch.width() < geometry_.train_input || patch.height() < geometry_.train_input) {
    throw invalid_argument("score_map: patch smaller than the detector input");
  }
  ScoreMap map = lview_valid_mask(geometry_, patch.width(), patch.height());
  const std::vector<float> h = hematoxylin_map(patch, params_.stain);
  const int half = geometry_.train_input / 2;
  for (int i = 0; i < map.rows; ++i) {
    for (int j = 0; j < map.cols; ++j) {
      if (!map.is_valid(i, j)) continue;
      const WindowFeatures f =
          window_features(h, patch.width(), map.center_x(j) - half, map.center_y(i) - half, geometry_, params_);
      map.probs[map.index(i, j)] = score(f);
    }
  }
  return map;
}

WindowFeatures WindowFeatureDetector::features_of_window(const Pixmap& window) const {
  if (window.width() != geometry_.train_input || window.height() != geometry_.train_input) {
    throw invalid_argument("features_of_window: window must be train_input square");
  }
  const std::vector<float> h = hematoxylin_map(window, params_.stain);
  return window_features(h, window.width(), 0, 0, geometry_, params_);
}

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

json geometry_json(const DetectorGeometry& g) {
  return {{"train_input", g.train_input},
          {"valid_center", g.valid_center},
          {"stride", g.stride},
          {"receptive_field", g.receptive_field}};
}

DetectorGeometry geometry_from_json(const json& j) {
  DetectorGeometry g;
  g.train_input = j.at("train_input").get<int>();
  g.valid_center = j.at("valid_center").get<int>();
  g.stride = j.at("stride").get<int>();
  g.receptive_field = j.at("receptive_field").get<int>();
  return g;
}

json params_json(const WindowFeatureParams& p) {
  json stain = json::array();
  for (int c = 0; c < 3; ++c) stain.push_back({p.stain.h[c], p.stain.e[c]});
  return {{"stain_matrix", stain},
          {"mpp", p.mpp},
          {"dark_threshold", p.dark_threshold},
          {"dark_percentile", p.dark_percentile}};
}

WindowFeatureParams params_from_json(const json& j) {
  WindowFeatureParams p;
  const auto& m = j.at("stain_matrix");
  for (int c = 0; c < 3; ++c) {
    p.stain.h[c] = m.at(c).at(0).get<double>();
    p.stain.e[c] = m.at(c).at(1).get<double>();
  }
  p.mpp = j.at("mpp").get<double>();
  p.dark_threshold = j.at("dark_threshold").get<double>();
  p.dark_percentile = j.at("dark_percentile").get<double>();
  return p;
}

template <std::size_t N>
std::array<double, N> array_from_json(const json& j) {
  if (j.size() != N) throw format_error("detector model: wrong vector length");
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = j.at(i).get<double>();
  return out;
}

}  // namespace

ReferenceDetector::ReferenceDetector(DetectorGeometry geometry, WindowFeatureParams params)
    : WindowFeatureDetector(geometry, std::move(params)) {}

double ReferenceDetector::score(const WindowFeatures& f) const {
  double z = kBias;
  for (int k = 0; k < kWindowFeatureCount; ++k) z += kWeights[k] * f[k];
  return sigmoid(z);
}

json ReferenceDetector::to_json() const {
  return {{"kind", "reference"}, {"geometry", geometry_json(geometry())}, {"features", params_json(feature_params())}};
}

double LogisticModel::probability(const WindowFeatures& f) const {
  double z = bias;
  for (int k = 0; k < kWindowFeatureCount; ++k) z += weights[k] * (f[k] - mean[k]) / scale[k];
  return sigmoid(z);
}

LearnedDetector::LearnedDetector(LogisticModel model, DetectorGeometry geometry, WindowFeatureParams params)
    : WindowFeatureDetector(geometry, std::move(params)), model_(model) {}

json LearnedDetector::to_json() const {
  return {{"kind", "logistic"},
          {"geometry", geometry_json(geometry())},
          {"features", params_json(feature_params())},
          {"weights", model_.weights},
          {"bias", model_.bias},
          {"mean", model_.mean},
          {"scale", model_.scale},
          {"epochs", model_.epochs},
          {"grad_norm", model_.grad_norm}};
}

SubprocessDetector::SubprocessDetector(std::string command, DetectorGeometry geometry)
    : command_(std::move(command)), geometry_(geometry) {
  geometry_.validate();
  if (command_.empty()) throw invalid_argument("external detector: empty command");
}

ScoreMap SubprocessDetector::score_map(const Pixmap& patch) const {
  if (patch.width() < geometry_.train_input || patch.height() < geometry_.train_input) {
    throw invalid_argument("score_map: patch smaller than the detector input");
  }
  // Input goes through a temporary file so a child that writes before it
  // finishes reading cannot deadlock against us.
  std::string tmpl = (fs::temp_directory_path() / "prolif_patch_XXXXXX").string();
  const int fd = mkstemp(tmpl.data());
  if (fd < 0) throw io_error("external detector: cannot create temporary file");
  close(fd);
  struct Remove {
    std::string path;
    ~Remove() { std::remove(path.c_str()); }
  } cleanup{tmpl};
  write_pnm(fs::path(tmpl), patch);

  const std::string cmd = command_ + " < '" + tmpl + "'";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr) throw io_error("external detector: cannot start " + command_);
  std::string output;
  char buf[65536];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) output.append(buf, n);
  const int status = pclose(pipe);
  if (status != 0) throw io_error("external detector exited with status " + std::to_string(status));
  ScoreMap map;
  try {
    map = score_map_from_json(json::parse(output));
  } catch (const json::exception& e) {
    throw format_error(std::string("external detector: bad ScoreMap: ") + e.what());
  }
  return map;
}

json SubprocessDetector::to_json() const {
  return {{"kind", "external"}, {"command", command_}, {"geometry", geometry_json(geometry_)}};
}

json to_json(const ScoreMap& map) {
  return {{"ox", map.ox},       {"oy", map.oy},       {"stride", map.stride}, {"rows", map.rows},
          {"cols", map.cols},   {"probs", map.probs}, {"valid", map.valid}};
}

ScoreMap score_map_from_json(const json& doc) {
  ScoreMap map;
  try {
    map.ox = doc.at("ox").get<int>();
    map.oy = doc.at("oy").get<int>();
    map.stride = doc.at("stride").get<int>();
    map.rows = doc.at("rows").get<int>();
    map.cols = doc.at("cols").get<int>();
    map.probs = doc.at("probs").get<std::vector<double>>();
    for (const auto& v : doc.at("valid")) {
      map.valid.push_back(v.is_boolean() ? static_cast<std::uint8_t>(v.get<bool>()) : v.get<std::uint8_t>());
    }
  } catch (const json::exception& e) {
    throw format_error(std::string("score map: ") + e.what());
  }
  const std::size_t cells = static_cast<std::size_t>(std::max(map.rows, 0)) * std::max(map.cols, 0);
  if (map.stride <= 0 || map.rows < 0 || map.cols < 0 || map.probs.size() != cells || map.valid.size() != cells) {
    throw format_error("score map: inconsistent geometry");
  }
  for (double p : map.probs) {
    if (!(p >= 0.0 && p <= 1.0)) throw format_error("score map: probability outside [0, 1]");
  }
  return map;
}

std::unique_ptr<Detector> make_detector(const std::string& spec, const WindowFeatureParams& params,
                                        const DetectorGeometry& geometry) {
  if (spec == "reference") return std::make_unique<ReferenceDetector>(geometry, params);
  if (spec.rfind("cmd:", 0) == 0) return std::make_unique<SubprocessDetector>(spec.substr(4), geometry);
  std::ifstream in(spec);
  if (!in) throw io_error("cannot open detector model: " + spec);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw format_error("detector model: " + std::string(e.what()));
  }
  auto loaded = detector_from_json(doc);
  if (auto* learned = dynamic_cast<LearnedDetector*>(loaded.get())) {
    // Inference-time stain basis and mpp come from the caller.
    return std::make_unique<LearnedDetector>(learned->model(), learned->geometry(), params);
  }
  return loaded;
}

std::unique_ptr<Detector> detector_from_json(const json& doc) {
  try {
    const std::string kind = doc.at("kind").get<std::string>();
    const DetectorGeometry g = geometry_from_json(doc.at("geometry"));
    if (kind == "reference") return std::make_unique<ReferenceDetector>(g, params_from_json(doc.at("features")));
    if (kind == "external") return std::make_unique<SubprocessDetector>(doc.at("command").get<std::string>(), g);
    if (kind == "logistic") {
      LogisticModel m;
      m.weights = array_from_json<kWindowFeatureCount>(doc.at("weights"));
      m.bias = doc.at("bias").get<double>();
      m.mean = array_from_json<kWindowFeatureCount>(doc.at("mean"));
      m.scale = array_from_json<kWindowFeatureCount>(doc.at("scale"));
      m.epochs = doc.value("epochs", 0);
      m.grad_norm = doc.value("grad_norm", 0.0);
      return std::make_unique<LearnedDetector>(m, g, params_from_json(doc.at("features")));
    }
    throw format_error("detector model: unknown kind " + kind);
  } catch (const json::exception& e) {
    throw format_error(std::string("detector model: ") + e.what());
  }
}

void save_detector(const fs::path& path, const Detector& detector) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path.string());
  out << detector.to_json().dump(2) << '\n';
}

}  // namespace prolif
