#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "prolif/detection.hpp"
#include "prolif/synth.hpp"

namespace prolif {

enum class SampleLabel { kNormal = 0, kMitosis = 1 };
enum class Provenance { kGroundTruth, kRandomNormal, kMinedFalsePositive };

const char* to_string(SampleLabel label);
const char* to_string(Provenance provenance);

struct TrainingSample {
  Pixmap patch;  // train_input square
  SampleLabel label = SampleLabel::kNormal;
  Provenance provenance = Provenance::kRandomNormal;
  std::string source;  // annotated patch id
  int x = 0;           // window center in the source patch
  int y = 0;
};

struct TrainingDataset {
  std::vector<TrainingSample> samples;

  std::size_t count(SampleLabel label) const;
  std::size_t count(Provenance provenance) const;
  // Patch sides must equal train_input and labels must agree with provenance.
  void validate(int train_input) const;
};

struct Stage1Params {
  int train_input = 128;
  int jitter = 16;  // mitosis windows are shifted by up to this many px
  // Random normals keep every annotated mitosis farther than this (Chebyshev)
  // from the window center, i.e. outside the valid center plus a margin.
  int exclusion = 40;
  std::uint64_t seed = 0;
};

// Initial dataset: mitosis windows cycle through every annotated mitosis whose
// unshifted window fits in its patch; normals are uniform random windows.
TrainingDataset sample_stage1_dataset(const std::vector<AnnotatedPatch>& patches, int n_mitosis, int n_normal,
                                      const Stage1Params& params);

struct MinedLocation {
  double x = 0.0;
  double y = 0.0;
  std::string patch_id;
  bool operator==(const MinedLocation&) const = default;
};

struct MiningParams {
  double threshold = 0.5;
  double nms_radius = 16.0;
  double match_radius = 30.0;  // a detection within this distance (inclusive) of a mitosis is a hit
};

std::vector<MinedLocation> mine_false_positives(const Detector& detector,
                                                const std::vector<AnnotatedPatch>& patches,
                                                const MiningParams& params = {});

struct Stage2Params {
  int n_new_normals = 0;
  int aug_translation_max = 16;
  int train_input = 128;
  std::uint64_t seed = 0;
};

// Stage-1 samples plus n_new_normals windows cut around false positives
// (round-robin over `fps`), each shifted by a uniform random translation that
// is clamped to keep the window inside its patch.
TrainingDataset build_stage2_dataset(const TrainingDataset& stage1, const std::vector<MinedLocation>& fps,
                                     const std::vector<AnnotatedPatch>& patches, const Stage2Params& params);

void write_dataset(const std::filesystem::path& dir, const TrainingDataset& dataset);
TrainingDataset read_dataset(const std::filesystem::path& dir);

void write_mined_jsonl(const std::filesystem::path& path, const std::vector<MinedLocation>& fps);
std::vector<MinedLocation> read_mined_jsonl(const std::filesystem::path& path);

}  // namespace prolif
