#include "prolif/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <exception>
#include <fstream>
#include <thread>

#include "prolif/error.hpp"
#include "prolif/image.hpp"
#include "prolif/patches.hpp"
#include "prolif/slide.hpp"

namespace prolif {

namespace fs = std::filesystem;
using nlohmann::json;

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  auto guarded = [&](std::size_t i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) guarded(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < n; i += workers) guarded(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::string normalized_patch_name(int patch_index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "patch_%05d.ppm", patch_index);
  return buf;
}

double slide_mpp(const SlidePyramid& slide, const PipelineConfig& config) {
  return config.mpp_override > 0.0 ? config.mpp_override : 0.5 * (slide.mpp_x() + slide.mpp_y());
}

WindowFeatureParams detector_params(const PipelineConfig& config, double mpp) {
  WindowFeatureParams p;
  p.stain = target_profile(config).matrix;  // detection runs on normalized patches
  p.mpp = mpp;
  p.dark_threshold = config.dark_threshold;
  return p;
}

namespace {

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw io_error("unwritable directory: " + dir.string());
}

Pixmap read_patch(const SlidePyramid& slide, const PatchRef& p) { return read_region(slide, 0, p.x0(), p.y0(), p.side, p.side); }

}  // namespace

namespace stage {

TissueResult tissue(const fs::path& manifest, const PipelineConfig& config, const fs::path& out_dir) {
  const SlidePyramid slide = open_slide(manifest);
  TissueResult result = extract_tissue_blobs(slide, config.tissue);
  if (result.blobs.empty()) throw degenerate("no tissue found");
  make_dir(out_dir);
  write_tissue(out_dir, result);
  return result;
}

std::vector<PatchRef> patches(const fs::path& manifest, const fs::path& tissue_dir, const PipelineConfig& config,
                              const fs::path& out_jsonl) {
  const SlidePyramid slide = open_slide(manifest);
  const TissueResult t = read_tissue(tissue_dir);
  const int side = hpf_patch_side(slide_mpp(slide, config), config.hpf_area_mm2);
  const int stride = config.patch_stride > 0 ? config.patch_stride : std::max(1, side / 2);
  PatchParams params;
  params.min_tissue_fraction = config.min_tissue_fraction;
  params.slide_width = slide.level(0).width;
  params.slide_height = slide.level(0).height;
  std::vector<PatchRef> out = sample_patch_centers(t, side, stride, params, slide.slide_id());
  if (out.empty()) throw degenerate("no patch fits inside the tissue");
  make_dir(out_jsonl.parent_path());
  write_patches_jsonl(out_jsonl, out);
  return out;
}

SortedRoiList rois(const fs::path& manifest, const fs::path& patches_jsonl, const PipelineConfig& config,
                   const fs::path& out_dir, int jobs) {
  const SlidePyramid slide = open_slide(manifest);
  const std::vector<PatchRef> refs = read_patches_jsonl(patches_jsonl);
  if (refs.empty()) throw invalid_argument("no patches to rank");
  CellCountParams params;
  params.mpp = slide_mpp(slide, config);
  params.min_area_at_025 = config.cell_min_area;
  params.max_area_at_025 = config.cell_max_area;
  params.opening_radius = config.cell_opening_radius;
  params.nominal_cell_radius_um = config.cell_radius_um;
  params.min_h = config.cell_min_h;
  params.macenko = config.macenko();
  std::vector<CellCountResult> counts(refs.size());
  parallel_for(refs.size(), jobs, [&](std::size_t i) {
    counts[i] = count_cells(read_patch(slide, refs[i]), params, refs[i].index);
  });
  make_dir(out_dir);
  {
    std::ofstream out(out_dir / "cell_counts.jsonl");
    if (!out) throw io_error("cannot write cell counts");
    for (const CellCountResult& c : counts) {
      out << json{{"index", c.patch_index}, {"cells", c.count}, {"fallback_stain", c.fallback_stain}}.dump() << '\n';
    }
  }
  SortedRoiList list = rank_rois(counts, refs, config.k);
  save_roi_list(out_dir / "rois.json", list);
  return list;
}

std::vector<std::string> normalize(const fs::path& manifest, const fs::path& rois_json, const PipelineConfig& config,
                                   const fs::path& out_dir, int jobs) {
  const SlidePyramid slide = open_slide(manifest);
  const SortedRoiList list = load_roi_list(rois_json);
  const StainProfile target = target_profile(config);
  make_dir(out_dir);
  std::vector<std::string> warnings(list.entries.size());
  parallel_for(list.entries.size(), jobs, [&](std::size_t i) {
    const PatchRef& p = list.entries[i].patch;
    const NormalizeResult r = normalize_patch(read_patch(slide, p), std::nullopt, target, config.macenko());
    if (r.fallback) warnings[i] = "patch " + std::to_string(p.index) + ": " + r.warning;
    write_pnm(out_dir / normalized_patch_name(p.index), r.image);
  });
  std::vector<std::string> out;
  for (auto& w : warnings) {
    if (!w.empty()) out.push_back(std::move(w));
  }
  std::ofstream f(out_dir / "warnings.json");
  if (!f) throw io_error("cannot write warnings.json");
  f << json(out).dump(1) << '\n';
  return out;
}

SortedRoiList detect(const fs::path& manifest, const fs::path& rois_json, const fs::path& normalized_dir,
                     const PipelineConfig& config, const fs::path& out_dir, int jobs) {
  const SlidePyramid slide = open_slide(manifest);
  SortedRoiList list = load_roi_list(rois_json);
  const auto detector = make_detector(config.detector, detector_params(config, slide_mpp(slide, config)));
  std::vector<std::vector<Detection>> found(list.entries.size());
  parallel_for(list.entries.size(), jobs, [&](std::size_t i) {
    const Pixmap patch = read_pnm(normalized_dir / normalized_patch_name(list.entries[i].patch.index));
    found[i] = detect_mitoses(detector->score_map(patch), config.detection_threshold, config.nms_radius);
  });
  make_dir(out_dir);
  std::ofstream out(out_dir / "detections.jsonl");
  if (!out) throw io_error("cannot write detections.jsonl");
  for (std::size_t i = 0; i < list.entries.size(); ++i) {
    list.entries[i].mitoses = static_cast<int>(found[i].size());
    for (const Detection& d : found[i]) {
      out << json{{"patch_index", list.entries[i].patch.index}, {"x", d.x}, {"y", d.y}, {"p", d.p}}.dump() << '\n';
    }
  }
  save_roi_list(out_dir / "rois.json", list);
  return list;
}

FeatureRow featurize(const fs::path& rois_json, const PipelineConfig& config, const fs::path& out_csv) {
  const SortedRoiList list = load_roi_list(rois_json);
  FeatureRow row{list.slide, extract_features(list, config.br)};
  make_dir(out_csv.parent_path());
  write_features_csv(out_csv, {row});
  return row;
}

}  // namespace stage

json to_json(const SlideResult& r) {
  return {{"slide", r.slide},
          {"score_class", r.score_class ? json(*r.score_class) : json(nullptr)},
          {"score_continuous", r.score_continuous ? json(*r.score_continuous) : json(nullptr)},
          {"features", r.features},
          {"roi_mitoses", r.roi_mitoses},
          {"roi_cells", r.roi_cells},
          {"warnings", r.warnings}};
}

SlideResult predict_scores(const FeatureRow& row, const SvmModel* classifier, const SvmModel* regressor) {
  SlideResult r;
  r.slide = row.slide;
  r.features = row.values;
  auto project = [&](const SvmModel& m) {
    if (m.features.empty()) return std::vector<double>(row.values.begin(), row.values.end());
    return select_features(row.values, m.features);
  };
  if (classifier) r.score_class = static_cast<int>(predict(*classifier, project(*classifier)));
  if (regressor) r.score_continuous = predict(*regressor, project(*regressor));
  return r;
}

namespace {

template <typename F>
auto run_stage(const char* name, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.kind(), std::string(name) + ": " + e.what());
  } catch (const std::exception& e) {
    throw Error(ErrorKind::kStage, std::string(name) + ": " + e.what());
  }
}

}  // namespace

SlideResult run_pipeline(const fs::path& manifest, const PipelineConfig& config, const PipelineModels& models,
                         const fs::path& run_dir, int jobs) {
  config.validate();
  make_dir(run_dir);
  save_config(run_dir / "config.json", config);
  run_stage("tissue", [&] { return stage::tissue(manifest, config, run_dir / "tissue"); });
  run_stage("patches", [&] {
    return stage::patches(manifest, run_dir / "tissue", config, run_dir / "patches" / "patches.jsonl");
  });
  run_stage("rois", [&] {
    return stage::rois(manifest, run_dir / "patches" / "patches.jsonl", config, run_dir / "rois", jobs);
  });
  const std::vector<std::string> warnings = run_stage("normalize", [&] {
    return stage::normalize(manifest, run_dir / "rois" / "rois.json", config, run_dir / "normalize", jobs);
  });
  const SortedRoiList detected = run_stage("detect", [&] {
    return stage::detect(manifest, run_dir / "rois" / "rois.json", run_dir / "normalize", config,
                         run_dir / "detect", jobs);
  });
  const FeatureRow row = run_stage("featurize", [&] {
    return stage::featurize(run_dir / "detect" / "rois.json", config, run_dir / "featurize" / "features.csv");
  });
  SlideResult result = run_stage("predict", [&] {
    return predict_scores(row, models.classifier ? &*models.classifier : nullptr,
                          models.regressor ? &*models.regressor : nullptr);
  });
  result.warnings = warnings;
  for (const RoiEntry& e : detected.entries) {
    result.roi_mitoses.push_back(e.mitoses);
    result.roi_cells.push_back(e.cells);
  }
  std::ofstream out(run_dir / "result.json");
  if (!out) throw io_error("cannot write result.json");
  out << to_json(result).dump(1) << '\n';
  return result;
}

}  // namespace prolif
