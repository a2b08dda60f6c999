#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "prolif/features.hpp"
#include "prolif/roi.hpp"
#include "prolif/stain.hpp"
#include "prolif/tissue.hpp"

namespace prolif {

// Every pipeline knob. JSON layout mirrors the nesting below; unknown keys
// are rejected and values are range-checked by validate().
struct PipelineConfig {
  double mpp_override = 0.0;  // 0: use the manifest's mpp

  TissueParams tissue;

  double hpf_area_mm2 = 2.0;
  int patch_stride = 0;  // 0: half the patch side (50% overlap)
  double min_tissue_fraction = 0.25;

  int k = 30;
  double cell_min_area = 40.0;   // px^2 at 0.25 mpp
  double cell_max_area = 2000.0;
  int cell_opening_radius = 1;
  double cell_radius_um = 4.0;
  double cell_min_h = 0.3;

  double alpha = 1.0;
  double beta = 0.15;
  double i0 = 255.0;
  std::string target_stain;  // profile JSON; empty: built-in reference profile

  std::string detector = "reference";  // "reference", model JSON path or "cmd:<command>"
  double detection_threshold = 0.5;
  double nms_radius = 16.0;
  double match_radius = 30.0;
  double dark_threshold = 1.0;

  BrThresholds br;
  double svc_c = 0.03125;
  double svr_c = 0.25;
  double svr_epsilon = 0.1;
  std::vector<int> classifier_features{kMitosisScoreFeatures.begin(), kMitosisScoreFeatures.end()};
  std::vector<int> regressor_features{kMolecularScoreFeatures.begin(), kMolecularScoreFeatures.end()};

  std::uint64_t seed = 0;

  void validate() const;
  MacenkoParams macenko() const { return {alpha, beta}; }
};

nlohmann::json to_json(const PipelineConfig& config);
// Fields absent from `doc` keep their value in `base`.
PipelineConfig config_from_json(const nlohmann::json& doc, PipelineConfig base = {});
PipelineConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const PipelineConfig& config);

// Target stain profile: the configured file, else the profile estimated from
// the built-in synthetic reference patch.
StainProfile target_profile(const PipelineConfig& config);
StainProfile reference_target_profile();

}  // namespace prolif
