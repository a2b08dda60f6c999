#include "prolif/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "prolif/error.hpp"
#include "prolif/features.hpp"
#include "prolif/rng.hpp"
#include "prolif/slide.hpp"

namespace prolif {

namespace fs = std::filesystem;
using nlohmann::json;

bool TissueRegion::contains(double px, double py) const {
  if (shape == Shape::kDisc) {
    const double dx = px - cx, dy = py - cy;
    return dx * dx + dy * dy <= radius * radius;
  }
  return px >= x && px < x + w && py >= y && py < y + h;
}

double TissueRegion::area_px() const {
  return shape == Shape::kDisc ? std::numbers::pi * radius * radius : w * h;
}

void SyntheticSlideSpec::validate() const {
  if (width <= 0 || height <= 0) throw invalid_argument("synthetic spec: dimensions must be positive");
  if (!(mpp > 0.0)) throw invalid_argument("synthetic spec: mpp must be positive");
  if (!(mitosis_density >= 0.0) || !(mimic_density >= 0.0)) {
    throw invalid_argument("synthetic spec: densities must be >= 0");
  }
  if (tile_size <= 0) throw invalid_argument("synthetic spec: tile_size must be positive");
  stain.validate();
  for (const TissueRegion& r : regions) {
    if (!(r.cell_density >= 0.0) || r.mitosis_density.value_or(0.0) < 0.0 || r.mimic_density.value_or(0.0) < 0.0) {
      throw invalid_argument("synthetic spec: densities must be >= 0");
    }
    if (r.shape == TissueRegion::Shape::kDisc ? !(r.radius > 0.0) : !(r.w > 0.0 && r.h > 0.0)) {
      throw invalid_argument("synthetic spec: empty tissue region");
    }
  }
}

namespace {

struct Bounds {
  int x0, y0, x1, y1;  // half-open
};

Bounds region_bounds(const TissueRegion& r, int width, int height) {
  double bx0, by0, bx1, by1;
  if (r.shape == TissueRegion::Shape::kDisc) {
    bx0 = r.cx - r.radius;
    by0 = r.cy - r.radius;
    bx1 = r.cx + r.radius + 1;
    by1 = r.cy + r.radius + 1;
  } else {
    bx0 = r.x;
    by0 = r.y;
    bx1 = r.x + r.w;
    by1 = r.y + r.h;
  }
  return {std::clamp(static_cast<int>(std::floor(bx0)), 0, width),
          std::clamp(static_cast<int>(std::floor(by0)), 0, height),
          std::clamp(static_cast<int>(std::ceil(bx1)), 0, width),
          std::clamp(static_cast<int>(std::ceil(by1)), 0, height)};
}

struct Blob {
  double x, y;
  double a, b, theta;  // semi-axes (px) and orientation
  double amplitude;
};

struct Canvas {
  int width, height;
  std::vector<float> h;     // hematoxylin from objects (max-combined)
  std::vector<float> keep;  // surviving eosin fraction
  std::vector<std::uint8_t> tissue;

  Canvas(int w, int hh)
      : width(w), height(hh), h(static_cast<std::size_t>(w) * hh, 0.0f),
        keep(static_cast<std::size_t>(w) * hh, 1.0f), tissue(static_cast<std::size_t>(w) * hh, 0) {}

  void stamp(const Blob& blob) {
    const double reach = std::max(blob.a, blob.b) + 1.5;
    const int x0 = std::max(0, static_cast<int>(std::floor(blob.x - reach)));
    const int x1 = std::min(width - 1, static_cast<int>(std::ceil(blob.x + reach)));
    const int y0 = std::max(0, static_cast<int>(std::floor(blob.y - reach)));
    const int y1 = std::min(height - 1, static_cast<int>(std::ceil(blob.y + reach)));
    const double c = std::cos(blob.theta), s = std::sin(blob.theta);
    const double edge = 1.0 / std::min(blob.a, blob.b);
    for (int py = y0; py <= y1; ++py) {
      for (int px = x0; px <= x1; ++px) {
        const double dx = px - blob.x, dy = py - blob.y;
        const double u = (c * dx + s * dy) / blob.a;
        const double v = (-s * dx + c * dy) / blob.b;
        const double d = std::sqrt(u * u + v * v);
        if (d >= 1.0 + edge) continue;
        const double cover = d <= 1.0 ? 1.0 : (1.0 + edge - d) / edge;
        const double value = blob.amplitude * (0.85 + 0.15 * std::max(0.0, 1.0 - d * d)) * cover;
        const std::size_t i = static_cast<std::size_t>(py) * width + px;
        h[i] = std::max(h[i], static_cast<float>(value));
        keep[i] = std::min(keep[i], static_cast<float>(1.0 - cover));
      }
    }
  }
};

int topmost_region(const std::vector<TissueRegion>& regions, double x, double y) {
  for (int k = static_cast<int>(regions.size()) - 1; k >= 0; --k) {
    if (regions[static_cast<std::size_t>(k)].contains(x, y)) return k;
  }
  return -1;
}

// Poisson placement restricted to the part of the slide where region k is on top.
std::vector<Point> place(Rng& rng, const SyntheticSlideSpec& spec, int k, double density) {
  const TissueRegion& region = spec.regions[static_cast<std::size_t>(k)];
  const Bounds b = region_bounds(region, spec.width, spec.height);
  std::vector<Point> out;
  if (density <= 0.0 || b.x1 <= b.x0 || b.y1 <= b.y0) return out;
  const double area_mm2 = static_cast<double>(b.x1 - b.x0) * (b.y1 - b.y0) * spec.mpp * spec.mpp / 1e6;
  const std::uint64_t n = rng.poisson(density * area_mm2);
  for (std::uint64_t i = 0; i < n; ++i) {
    const double x = rng.uniform(b.x0, b.x1);
    const double y = rng.uniform(b.y0, b.y1);
    if (topmost_region(spec.regions, x, y) == k) out.push_back({x, y});
  }
  return out;
}

double hotspot_mitoses_per_10hpf(const SyntheticSlideSpec& spec) {
  double best = 0.0;
  for (const TissueRegion& r : spec.regions) {
    best = std::max(best, r.mitosis_density.value_or(spec.mitosis_density) * 2.0);
  }
  return best;
}

}  // namespace

int planted_score_class(const SyntheticSlideSpec& spec) {
  return br_grade(hotspot_mitoses_per_10hpf(spec), BrThresholds{});
}

double planted_score_continuous(const SyntheticSlideSpec& spec) { return hotspot_mitoses_per_10hpf(spec) / 10.0; }

RenderedTissue render_synthetic(const SyntheticSlideSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  Canvas canvas(spec.width, spec.height);
  GroundTruth truth;
  const RenderParams& rp = spec.render;
  const double px_per_um = 1.0 / spec.mpp;

  for (int k = 0; k < static_cast<int>(spec.regions.size()); ++k) {
    const TissueRegion& region = spec.regions[static_cast<std::size_t>(k)];
    const Bounds b = region_bounds(region, spec.width, spec.height);
    for (int py = b.y0; py < b.y1; ++py) {
      for (int px = b.x0; px < b.x1; ++px) {
        if (region.contains(px, py)) canvas.tissue[static_cast<std::size_t>(py) * spec.width + px] = 1;
      }
    }

    for (const Point& p : place(rng, spec, k, region.cell_density)) {
      const double r = rp.cell_radius_um * px_per_um * rng.uniform(0.85, 1.15);
      const double aspect = rng.uniform(0.75, 1.0);
      const double theta = rng.uniform(0.0, std::numbers::pi);
      const double amp = rp.cell_h * rng.uniform(0.9, 1.1);
      canvas.stamp({p.x, p.y, r, r * aspect, theta, amp});
      truth.cells.push_back(p);
    }
    for (const Point& p : place(rng, spec, k, region.mitosis_density.value_or(spec.mitosis_density))) {
      const double r = rng.uniform(rp.mitosis_radius_um_min, rp.mitosis_radius_um_max) * px_per_um;
      const double amp = rp.mitosis_h * rng.uniform(0.92, 1.08);
      // Chromosome clumps strung along a plate axis: elongated and ragged,
      // unlike the round mimics.
      const int lobes = rng.uniform_int(4, 7);
      const double axis = rng.uniform(0.0, std::numbers::pi);
      const double ca = std::cos(axis), sa = std::sin(axis);
      for (int l = 0; l < lobes; ++l) {
        const double along = r * (-0.75 + 1.5 * l / (lobes - 1) + rng.uniform(-0.05, 0.05));
        const double across = r * rng.uniform(-0.2, 0.2);
        const double lr = r * rng.uniform(0.32, 0.45);
        canvas.stamp({p.x + along * ca - across * sa, p.y + along * sa + across * ca, lr,
                      lr * rng.uniform(0.6, 1.0), rng.uniform(0.0, std::numbers::pi), amp});
      }
      truth.mitoses.push_back(p);
    }
    for (const Point& p : place(rng, spec, k, region.mimic_density.value_or(spec.mimic_density))) {
      const double r = rng.uniform(rp.mimic_radius_um_min, rp.mimic_radius_um_max) * px_per_um;
      const double amp = rp.mimic_h * rng.uniform(0.92, 1.08);
      canvas.stamp({p.x, p.y, r, r * rng.uniform(0.85, 1.0), rng.uniform(0.0, std::numbers::pi), amp});
      truth.mimics.push_back(p);
    }
  }

  Pixmap image(spec.width, spec.height, 3);
  auto bytes = image.bytes();
  const double ln10 = std::log(10.0);
  for (std::size_t i = 0; i < canvas.h.size(); ++i) {
    double ch = canvas.h[i];
    double ce = 0.0;
    if (canvas.tissue[i]) {
      ch = std::max(ch, rp.tissue_h * rng.uniform(0.8, 1.2));
      ce = rp.tissue_e * rng.uniform(0.85, 1.15) * canvas.keep[i];
    }
    if (!canvas.tissue[i] && ch == 0.0) {
      bytes[3 * i] = spec.background.r;
      bytes[3 * i + 1] = spec.background.g;
      bytes[3 * i + 2] = spec.background.b;
      continue;
    }
    const Od od = spec.stain.apply({ch, ce});
    for (int c = 0; c < 3; ++c) {
      const double v = std::round(spec.i0 * std::exp(-od[c] * ln10));
      bytes[3 * i + c] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
    }
  }

  truth.score_class = planted_score_class(spec);
  truth.score_continuous = planted_score_continuous(spec);
  return {std::move(image), std::move(truth)};
}

SyntheticSlideSpec graded_slide_spec(int grade, std::uint64_t seed, const std::string& slide_id) {
  if (grade < 1 || grade > 3) throw invalid_argument("graded_slide_spec: grade must be 1..3");
  // Mitoses per mm^2; x2 gives the count per 10 HPF against thresholds 7 / 14.
  static constexpr double kBand[3][2] = {{0.75, 3.0}, {4.25, 6.5}, {8.0, 12.0}};
  Rng rng(seed);
  SyntheticSlideSpec spec;
  spec.slide_id = slide_id;
  spec.width = 7200;
  spec.height = 4600;
  spec.mpp = 1.0;
  spec.seed = rng.next();
  auto jitter = [&](Vec3 v) {
    for (double& c : v) c = std::max(0.01, c + rng.uniform(-0.04, 0.04));
    const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    for (double& c : v) c /= n;
    return v;
  };
  spec.stain.h = jitter(spec.stain.h);
  spec.stain.e = jitter(spec.stain.e);
  const double hot = rng.uniform(kBand[grade - 1][0], kBand[grade - 1][1]);
  spec.mitosis_density = hot;
  spec.mimic_density = rng.uniform(5.0, 20.0);

  TissueRegion main;
  main.shape = TissueRegion::Shape::kRect;
  main.w = rng.uniform(5800.0, 6800.0);
  main.h = rng.uniform(3000.0, 4200.0);
  main.x = rng.uniform(100.0, spec.width - main.w - 100.0);
  main.y = rng.uniform(100.0, spec.height - main.h - 100.0);
  main.cell_density = rng.uniform(1200.0, 2400.0);
  TissueRegion cold;
  cold.shape = TissueRegion::Shape::kDisc;
  cold.radius = rng.uniform(700.0, 1200.0);
  cold.cx = main.x + rng.uniform(0.2, 0.8) * main.w;
  cold.cy = main.y + rng.uniform(0.2, 0.8) * main.h;
  cold.cell_density = rng.uniform(600.0, 1200.0);
  cold.mitosis_density = hot * rng.uniform(0.2, 0.6);
  spec.regions = {main, cold};
  return spec;
}

SyntheticSlide generate_synthetic_slide(const SyntheticSlideSpec& spec, const fs::path& out_dir) {
  RenderedTissue rendered = render_synthetic(spec);
  PyramidOptions options;
  options.tile_size = spec.tile_size;
  const fs::path manifest = write_slide(rendered.image, spec.slide_id, spec.mpp, spec.mpp, out_dir, options);
  std::ofstream out(out_dir / "ground_truth.json");
  if (!out) throw io_error("unwritable directory: " + out_dir.string());
  out << to_json(rendered.truth).dump(2) << '\n';
  std::ofstream spec_out(out_dir / "synth_spec.json");
  spec_out << to_json(spec).dump(2) << '\n';
  return {manifest, std::move(rendered.truth)};
}

std::vector<AnnotatedPatch> generate_annotated_patches(const AnnotatedPatchSpec& spec) {
  if (spec.count < 0 || spec.side <= 0) throw invalid_argument("annotated patches: bad count or side");
  Rng seeds(spec.seed);
  std::vector<AnnotatedPatch> out;
  for (int i = 0; i < spec.count; ++i) {
    SyntheticSlideSpec s;
    s.slide_id = "patch" + std::to_string(i);
    s.width = s.height = spec.side;
    s.mpp = spec.mpp;
    s.stain = spec.stain;
    s.render = spec.render;
    TissueRegion all;
    all.w = all.h = spec.side;
    all.cell_density = spec.cell_density;
    s.regions = {all};
    s.mitosis_density = spec.mitosis_density;
    s.mimic_density = spec.mimic_density;
    s.seed = seeds.next();
    RenderedTissue r = render_synthetic(s);
    out.push_back({s.slide_id, std::move(r.image), std::move(r.truth.mitoses), std::move(r.truth.mimics)});
  }
  return out;
}

namespace {

json points_to_json(const std::vector<Point>& pts) {
  json arr = json::array();
  for (const Point& p : pts) arr.push_back({p.x, p.y});
  return arr;
}

std::vector<Point> points_from_json(const json& arr) {
  std::vector<Point> pts;
  for (const auto& p : arr) pts.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  return pts;
}

}  // namespace

void write_annotated_patches(const fs::path& dir, const std::vector<AnnotatedPatch>& patches) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw io_error("unwritable directory: " + dir.string());
  json index = json::array();
  for (const AnnotatedPatch& p : patches) {
    const std::string file = p.id + ".ppm";
    write_pnm(dir / file, p.image);
    index.push_back({{"id", p.id}, {"file", file}, {"mitoses", points_to_json(p.mitoses)},
                     {"mimics", points_to_json(p.mimics)}});
  }
  std::ofstream out(dir / "annotations.json");
  if (!out) throw io_error("unwritable directory: " + dir.string());
  out << index.dump(1) << '\n';
}

std::vector<AnnotatedPatch> read_annotated_patches(const fs::path& dir) {
  std::ifstream in(dir / "annotations.json");
  if (!in) throw io_error("missing annotations.json in " + dir.string());
  std::vector<AnnotatedPatch> out;
  try {
    for (const auto& j : json::parse(in)) {
      AnnotatedPatch p;
      p.id = j.at("id").get<std::string>();
      p.image = read_pnm(dir / j.at("file").get<std::string>());
      p.mitoses = points_from_json(j.at("mitoses"));
      if (j.contains("mimics")) p.mimics = points_from_json(j.at("mimics"));
      for (const Point& m : p.mitoses) {
        if (m.x < 0 || m.y < 0 || m.x >= p.image.width() || m.y >= p.image.height()) {
          throw format_error("annotations: mitosis outside patch " + p.id);
        }
      }
      out.push_back(std::move(p));
    }
  } catch (const json::exception& e) {
    throw format_error(std::string("annotations: ") + e.what());
  }
  return out;
}

json to_json(const GroundTruth& t) {
  return {{"cells", points_to_json(t.cells)},
          {"mitoses", points_to_json(t.mitoses)},
          {"mimics", points_to_json(t.mimics)},
          {"score_class", t.score_class},
          {"score_continuous", t.score_continuous}};
}

GroundTruth ground_truth_from_json(const json& doc) {
  GroundTruth t;
  try {
    t.cells = points_from_json(doc.at("cells"));
    t.mitoses = points_from_json(doc.at("mitoses"));
    if (doc.contains("mimics")) t.mimics = points_from_json(doc.at("mimics"));
    t.score_class = doc.at("score_class").get<int>();
    t.score_continuous = doc.at("score_continuous").get<double>();
  } catch (const json::exception& e) {
    throw format_error(std::string("ground truth: ") + e.what());
  }
  return t;
}

GroundTruth load_ground_truth(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open ground truth: " + path.string());
  try {
    return ground_truth_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw format_error(std::string("ground truth: ") + e.what());
  }
}

json to_json(const SyntheticSlideSpec& s) {
  json regions = json::array();
  for (const TissueRegion& r : s.regions) {
    json j;
    if (r.shape == TissueRegion::Shape::kDisc) {
      j = {{"shape", "disc"}, {"cx", r.cx}, {"cy", r.cy}, {"radius", r.radius}};
    } else {
      j = {{"shape", "rect"}, {"x", r.x}, {"y", r.y}, {"w", r.w}, {"h", r.h}};
    }
    j["cell_density"] = r.cell_density;
    if (r.mitosis_density) j["mitosis_density"] = *r.mitosis_density;
    if (r.mimic_density) j["mimic_density"] = *r.mimic_density;
    regions.push_back(std::move(j));
  }
  json stain = json::array();
  for (int c = 0; c < 3; ++c) stain.push_back({s.stain.h[c], s.stain.e[c]});
  const RenderParams& rp = s.render;
  return {{"slide_id", s.slide_id},
          {"width", s.width},
          {"height", s.height},
          {"mpp", s.mpp},
          {"background", {s.background.r, s.background.g, s.background.b}},
          {"stain_matrix", stain},
          {"i0", s.i0},
          {"regions", regions},
          {"mitosis_density", s.mitosis_density},
          {"mimic_density", s.mimic_density},
          {"render",
           {{"cell_radius_um", rp.cell_radius_um},
            {"cell_h", rp.cell_h},
            {"mitosis_radius_um_min", rp.mitosis_radius_um_min},
            {"mitosis_radius_um_max", rp.mitosis_radius_um_max},
            {"mitosis_h", rp.mitosis_h},
            {"mimic_radius_um_min", rp.mimic_radius_um_min},
            {"mimic_radius_um_max", rp.mimic_radius_um_max},
            {"mimic_h", rp.mimic_h},
            {"tissue_e", rp.tissue_e},
            {"tissue_h", rp.tissue_h}}},
          {"tile_size", s.tile_size},
          {"seed", s.seed}};
}

SyntheticSlideSpec synthetic_spec_from_json(const json& doc) {
  SyntheticSlideSpec s;
  try {
    s.slide_id = doc.value("slide_id", s.slide_id);
    s.width = doc.at("width").get<int>();
    s.height = doc.at("height").get<int>();
    s.mpp = doc.at("mpp").get<double>();
    if (doc.contains("background")) {
      const auto& bg = doc["background"];
      s.background = {bg.at(0).get<std::uint8_t>(), bg.at(1).get<std::uint8_t>(), bg.at(2).get<std::uint8_t>()};
    }
    if (doc.contains("stain_matrix")) {
      const auto& m = doc["stain_matrix"];
      for (int c = 0; c < 3; ++c) {
        s.stain.h[c] = m.at(c).at(0).get<double>();
        s.stain.e[c] = m.at(c).at(1).get<double>();
      }
    }
    s.i0 = doc.value("i0", s.i0);
    for (const auto& j : doc.value("regions", json::array())) {
      TissueRegion r;
      const std::string shape = j.at("shape").get<std::string>();
      if (shape == "disc") {
        r.shape = TissueRegion::Shape::kDisc;
        r.cx = j.at("cx").get<double>();
        r.cy = j.at("cy").get<double>();
        r.radius = j.at("radius").get<double>();
      } else if (shape == "rect") {
        r.x = j.at("x").get<double>();
        r.y = j.at("y").get<double>();
        r.w = j.at("w").get<double>();
        r.h = j.at("h").get<double>();
      } else {
        throw format_error("synthetic spec: unknown region shape " + shape);
      }
      r.cell_density = j.value("cell_density", 0.0);
      if (j.contains("mitosis_density")) r.mitosis_density = j["mitosis_density"].get<double>();
      if (j.contains("mimic_density")) r.mimic_density = j["mimic_density"].get<double>();
      s.regions.push_back(r);
    }
    s.mitosis_density = doc.value("mitosis_density", 0.0);
    s.mimic_density = doc.value("mimic_density", 0.0);
    if (doc.contains("render")) {
      const auto& j = doc["render"];
      RenderParams& rp = s.render;
      rp.cell_radius_um = j.value("cell_radius_um", rp.cell_radius_um);
      rp.cell_h = j.value("cell_h", rp.cell_h);
      rp.mitosis_radius_um_min = j.value("mitosis_radius_um_min", rp.mitosis_radius_um_min);
      rp.mitosis_radius_um_max = j.value("mitosis_radius_um_max", rp.mitosis_radius_um_max);
      rp.mitosis_h = j.value("mitosis_h", rp.mitosis_h);
      rp.mimic_radius_um_min = j.value("mimic_radius_um_min", rp.mimic_radius_um_min);
      rp.mimic_radius_um_max = j.value("mimic_radius_um_max", rp.mimic_radius_um_max);
      rp.mimic_h = j.value("mimic_h", rp.mimic_h);
      rp.tissue_e = j.value("tissue_e", rp.tissue_e);
      rp.tissue_h = j.value("tissue_h", rp.tissue_h);
    }
    s.tile_size = doc.value("tile_size", s.tile_size);
    s.seed = doc.value("seed", s.seed);
  } catch (const json::exception& e) {
    throw format_error(std::string("synthetic spec: ") + e.what());
  }
  s.validate();
  return s;
}

}  // namespace prolif
