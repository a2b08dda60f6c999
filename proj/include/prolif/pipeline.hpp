#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "prolif/config.hpp"
#include "prolif/detection.hpp"
#include "prolif/features.hpp"
#include "prolif/roi.hpp"
#include "prolif/svm.hpp"
#include "prolif/tissue.hpp"

namespace prolif {

// Runs fn(0..n-1) on up to `jobs` threads; the first exception (by index) is
// rethrown after all workers stop.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

// Each stage reads its inputs from files written by the previous one and
// writes its own outputs into `out`, so the CLI subcommands and run_pipeline
// share one code path.
namespace stage {

TissueResult tissue(const std::filesystem::path& manifest, const PipelineConfig& config,
                    const std::filesystem::path& out_dir);
std::vector<PatchRef> patches(const std::filesystem::path& manifest, const std::filesystem::path& tissue_dir,
                              const PipelineConfig& config, const std::filesystem::path& out_jsonl);
SortedRoiList rois(const std::filesystem::path& manifest, const std::filesystem::path& patches_jsonl,
                   const PipelineConfig& config, const std::filesystem::path& out_dir, int jobs);
// Writes patch_<index>.ppm per ROI and warnings.json; returns the warnings.
std::vector<std::string> normalize(const std::filesystem::path& manifest, const std::filesystem::path& rois_json,
                                   const PipelineConfig& config, const std::filesystem::path& out_dir, int jobs);
// Scores the normalized ROI patches; writes detections.jsonl and rois.json
// with mitosis counts filled in.
SortedRoiList detect(const std::filesystem::path& manifest, const std::filesystem::path& rois_json,
                     const std::filesystem::path& normalized_dir, const PipelineConfig& config,
                     const std::filesystem::path& out_dir, int jobs);
FeatureRow featurize(const std::filesystem::path& rois_json, const PipelineConfig& config,
                     const std::filesystem::path& out_csv);

}  // namespace stage

std::string normalized_patch_name(int patch_index);
double slide_mpp(const SlidePyramid& slide, const PipelineConfig& config);
WindowFeatureParams detector_params(const PipelineConfig& config, double mpp);

struct SlideResult {
  std::string slide;
  std::optional<int> score_class;
  std::optional<double> score_continuous;
  FeatureVector21 features{};
  std::vector<int> roi_mitoses;  // rank order
  std::vector<int> roi_cells;
  std::vector<std::string> warnings;
};

nlohmann::json to_json(const SlideResult& result);

// Applies optional models to a feature row; features are projected with the
// subset stored in each model.
SlideResult predict_scores(const FeatureRow& row, const SvmModel* classifier, const SvmModel* regressor);

struct PipelineModels {
  std::optional<SvmModel> classifier;
  std::optional<SvmModel> regressor;
};

// tissue -> patches -> rois -> normalize -> detect -> featurize -> predict,
// every intermediate under run_dir/<stage>/ plus run_dir/config.json and
// run_dir/result.json. Stage failures are rethrown as "<stage>: <message>"
// with the original error kind.
SlideResult run_pipeline(const std::filesystem::path& manifest, const PipelineConfig& config,
                         const PipelineModels& models, const std::filesystem::path& run_dir, int jobs = 1);

}  // namespace prolif
