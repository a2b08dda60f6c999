#include "prolif/config.hpp"

#include <fstream>
#include <set>

#include "prolif/error.hpp"
#include "prolif/synth.hpp"

namespace prolif {

using nlohmann::json;

json to_json(const PipelineConfig& c) {
  return {{"mpp_override", c.mpp_override},
          {"tissue",
           {{"thumb_max_side", c.tissue.thumb_max_side},
            {"dilation_radius", c.tissue.dilation_radius},
            {"min_blob_area_mm2", c.tissue.min_blob_area_mm2}}},
          {"patches",
           {{"hpf_area_mm2", c.hpf_area_mm2},
            {"stride", c.patch_stride},
            {"min_tissue_fraction", c.min_tissue_fraction}}},
          {"rois",
           {{"k", c.k},
            {"cell_min_area", c.cell_min_area},
            {"cell_max_area", c.cell_max_area},
            {"opening_radius", c.cell_opening_radius},
            {"cell_radius_um", c.cell_radius_um},
            {"cell_min_h", c.cell_min_h}}},
          {"stain", {{"alpha", c.alpha}, {"beta", c.beta}, {"i0", c.i0}, {"target", c.target_stain}}},
          {"detection",
           {{"detector", c.detector},
            {"threshold", c.detection_threshold},
            {"nms_radius", c.nms_radius},
            {"match_radius", c.match_radius},
            {"dark_threshold", c.dark_threshold}}},
          {"scoring",
           {{"br_t1", c.br.t1},
            {"br_t2", c.br.t2},
            {"svc_c", c.svc_c},
            {"svr_c", c.svr_c},
            {"svr_epsilon", c.svr_epsilon},
            {"classifier_features", c.classifier_features},
            {"regressor_features", c.regressor_features}}},
          {"seed", c.seed}};
}

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw invalid_argument("config: " + where + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) throw invalid_argument("config: unknown key " + where + key);
  }
}

template <typename T>
void take(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

void check(bool ok, const std::string& what) {
  if (!ok) throw invalid_argument("config: " + what);
}

void check_subset(const std::vector<int>& idx, const char* name) {
  check(!idx.empty(), std::string(name) + " must be nonempty");
  std::set<int> seen;
  for (int i : idx) {
    check(i >= 0 && i < kFeatureCount && seen.insert(i).second, std::string(name) + " has a bad or repeated index");
  }
}

}  // namespace

PipelineConfig config_from_json(const json& doc, PipelineConfig c) {
  try {
    reject_unknown(doc, {"mpp_override", "tissue", "patches", "rois", "stain", "detection", "scoring", "seed"}, "");
    take(doc, "mpp_override", c.mpp_override);
    take(doc, "seed", c.seed);
    if (doc.contains("tissue")) {
      const json& t = doc["tissue"];
      reject_unknown(t, {"thumb_max_side", "dilation_radius", "min_blob_area_mm2"}, "tissue.");
      take(t, "thumb_max_side", c.tissue.thumb_max_side);
      take(t, "dilation_radius", c.tissue.dilation_radius);
      take(t, "min_blob_area_mm2", c.tissue.min_blob_area_mm2);
    }
    if (doc.contains("patches")) {
      const json& p = doc["patches"];
      reject_unknown(p, {"hpf_area_mm2", "stride", "min_tissue_fraction"}, "patches.");
      take(p, "hpf_area_mm2", c.hpf_area_mm2);
      take(p, "stride", c.patch_stride);
      take(p, "min_tissue_fraction", c.min_tissue_fraction);
    }
    if (doc.contains("rois")) {
      const json& r = doc["rois"];
      reject_unknown(r, {"k", "cell_min_area", "cell_max_area", "opening_radius", "cell_radius_um", "cell_min_h"},
                     "rois.");
      take(r, "k", c.k);
      take(r, "cell_min_area", c.cell_min_area);
      take(r, "cell_max_area", c.cell_max_area);
      take(r, "opening_radius", c.cell_opening_radius);
      take(r, "cell_radius_um", c.cell_radius_um);
      take(r, "cell_min_h", c.cell_min_h);
    }
    if (doc.contains("stain")) {
      const json& s = doc["stain"];
      reject_unknown(s, {"alpha", "beta", "i0", "target"}, "stain.");
      take(s, "alpha", c.alpha);
      take(s, "beta", c.beta);
      take(s, "i0", c.i0);
      take(s, "target", c.target_stain);
    }
    if (doc.contains("detection")) {
      const json& d = doc["detection"];
      reject_unknown(d, {"detector", "threshold", "nms_radius", "match_radius", "dark_threshold"}, "detection.");
      take(d, "detector", c.detector);
      take(d, "threshold", c.detection_threshold);
      take(d, "nms_radius", c.nms_radius);
      take(d, "match_radius", c.match_radius);
      take(d, "dark_threshold", c.dark_threshold);
    }
    if (doc.contains("scoring")) {
      const json& s = doc["scoring"];
      reject_unknown(s, {"br_t1", "br_t2", "svc_c", "svr_c", "svr_epsilon", "classifier_features",
                         "regressor_features"},
                     "scoring.");
      take(s, "br_t1", c.br.t1);
      take(s, "br_t2", c.br.t2);
      take(s, "svc_c", c.svc_c);
      take(s, "svr_c", c.svr_c);
      take(s, "svr_epsilon", c.svr_epsilon);
      take(s, "classifier_features", c.classifier_features);
      take(s, "regressor_features", c.regressor_features);
    }
  } catch (const json::exception& e) {
    throw invalid_argument(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

void PipelineConfig::validate() const {
  check(mpp_override >= 0.0, "mpp_override must be >= 0");
  check(tissue.thumb_max_side >= 16, "tissue.thumb_max_side must be >= 16");
  check(tissue.dilation_radius >= 0, "tissue.dilation_radius must be >= 0");
  check(tissue.min_blob_area_mm2 >= 0.0, "tissue.min_blob_area_mm2 must be >= 0");
  check(hpf_area_mm2 > 0.0, "patches.hpf_area_mm2 must be positive");
  check(patch_stride >= 0, "patches.stride must be >= 0");
  check(min_tissue_fraction >= 0.0 && min_tissue_fraction <= 1.0, "patches.min_tissue_fraction must be in [0,1]");
  check(k >= 1, "rois.k must be >= 1");
  check(cell_min_area > 0.0 && cell_max_area > cell_min_area, "rois cell area bounds must satisfy 0 < min < max");
  check(cell_opening_radius >= 0, "rois.opening_radius must be >= 0");
  check(cell_radius_um > 0.0, "rois.cell_radius_um must be positive");
  check(cell_min_h >= 0.0, "rois.cell_min_h must be >= 0");
  check(alpha > 0.0 && alpha < 50.0, "stain.alpha must be in (0,50)");
  check(beta >= 0.0, "stain.beta must be >= 0");
  check(i0 > 0.0 && i0 <= 255.0, "stain.i0 must be in (0,255]");
  check(!detector.empty(), "detection.detector must be set");
  check(detection_threshold > 0.0 && detection_threshold < 1.0, "detection.threshold must be in (0,1)");
  check(nms_radius >= 0.0, "detection.nms_radius must be >= 0");
  check(match_radius > 0.0, "detection.match_radius must be positive");
  check(dark_threshold > 0.0, "detection.dark_threshold must be positive");
  check(br.t1 >= 0.0 && br.t1 < br.t2, "scoring thresholds must satisfy 0 <= br_t1 < br_t2");
  check(svc_c > 0.0 && svr_c > 0.0, "scoring C values must be positive");
  check(svr_epsilon >= 0.0, "scoring.svr_epsilon must be >= 0");
  check_subset(classifier_features, "scoring.classifier_features");
  check_subset(regressor_features, "scoring.regressor_features");
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw format_error("config: " + std::string(e.what()));
  }
  return config_from_json(doc);
}

void save_config(const std::filesystem::path& path, const PipelineConfig& config) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path.string());
  out << to_json(config).dump(1) << '\n';
}

StainProfile reference_target_profile() {
  // A fixed synthetic patch of ordinary tissue (few dark figures, so c99 is
  // set by interphase nuclei) rendered with the default basis; the checked-in
  // data/target_stain_profile.json is this estimate.
  static const StainProfile profile = [] {
    AnnotatedPatchSpec spec;
    spec.count = 1;
    spec.side = 1024;
    spec.cell_density = 1800.0;
    spec.mitosis_density = 5.0;
    spec.mimic_density = 10.0;
    spec.seed = 20240501;
    const std::vector<AnnotatedPatch> patches = generate_annotated_patches(spec);
    return estimate_profile(patches.front().image);
  }();
  return profile;
}

StainProfile target_profile(const PipelineConfig& config) {
  if (config.target_stain.empty()) return reference_target_profile();
  return load_stain_profile(config.target_stain);
}

}  // namespace prolif
