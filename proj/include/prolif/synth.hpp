#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "prolif/image.hpp"
#include "prolif/stain.hpp"

namespace prolif {

struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

// A tissue area with its own object densities (per mm^2). Where regions
// overlap, the later one wins.
struct TissueRegion {
  enum class Shape { kDisc, kRect };
  Shape shape = Shape::kRect;
  double x = 0, y = 0, w = 0, h = 0;  // rect: top-left + size (level-0 px)
  double cx = 0, cy = 0, radius = 0;  // disc
  double cell_density = 0.0;
  std::optional<double> mitosis_density;  // falls back to the slide-wide value
  std::optional<double> mimic_density;

  bool contains(double px, double py) const;
  double area_px() const;
};

// Appearance of rendered objects; sizes in microns so they scale with mpp.
struct RenderParams {
  double cell_radius_um = 4.0;
  double cell_h = 0.75;
  double mitosis_radius_um_min = 6.0;
  double mitosis_radius_um_max = 9.0;
  double mitosis_h = 1.35;
  double mimic_radius_um_min = 5.5;
  double mimic_radius_um_max = 7.5;
  double mimic_h = 1.6;
  double tissue_e = 0.30;
  double tissue_h = 0.05;
};

struct SyntheticSlideSpec {
  std::string slide_id = "synthetic";
  int width = 1024;
  int height = 1024;
  double mpp = 1.0;
  Rgb background{255, 255, 255};
  StainMatrix stain = default_he_matrix();
  double i0 = 255.0;
  std::vector<TissueRegion> regions;
  double mitosis_density = 0.0;  // per mm^2, slide-wide default
  double mimic_density = 0.0;    // dark non-mitotic distractors per mm^2
  RenderParams render;
  int tile_size = 512;
  std::uint64_t seed = 0;

  void validate() const;
};

struct GroundTruth {
  std::vector<Point> cells;
  std::vector<Point> mitoses;
  std::vector<Point> mimics;
  int score_class = 1;
  double score_continuous = 0.0;
};

struct RenderedTissue {
  Pixmap image;
  GroundTruth truth;
};

// Renders level 0 in memory. Objects are placed by a seeded Poisson process
// and drawn as stain concentrations, then mapped to RGB via Beer-Lambert.
RenderedTissue render_synthetic(const SyntheticSlideSpec& spec);

// Hotspot rule: the grade/score of the region with the most expected
// mitoses per 2 mm^2 (B&R thresholds 7/14).
int planted_score_class(const SyntheticSlideSpec& spec);
double planted_score_continuous(const SyntheticSlideSpec& spec);

struct SyntheticSlide {
  std::filesystem::path manifest_path;
  GroundTruth truth;
};

// Writes tiles, manifest.json and ground_truth.json into out_dir.
SyntheticSlide generate_synthetic_slide(const SyntheticSlideSpec& spec, const std::filesystem::path& out_dir);

// Randomized slide whose hotspot mitosis density falls inside the band of
// the requested B&R grade (1..3): a large tissue rectangle plus a colder
// disc, a mildly perturbed stain basis, and distractors.
SyntheticSlideSpec graded_slide_spec(int grade, std::uint64_t seed, const std::string& slide_id);

// Tissue-filled patch with its mitosis annotations, as in an auxiliary
// mitosis-detection dataset.
struct AnnotatedPatch {
  std::string id;
  Pixmap image;
  std::vector<Point> mitoses;
  std::vector<Point> mimics;  // known only for synthetic data
};

struct AnnotatedPatchSpec {
  int count = 10;
  int side = 512;
  double mpp = 1.0;
  double cell_density = 2000.0;
  double mitosis_density = 60.0;
  double mimic_density = 60.0;
  StainMatrix stain = default_he_matrix();
  RenderParams render;
  std::uint64_t seed = 0;
};

std::vector<AnnotatedPatch> generate_annotated_patches(const AnnotatedPatchSpec& spec);

// Directory layout: annotations.json ([{id, file, mitoses, mimics}]) plus one P6 per patch.
void write_annotated_patches(const std::filesystem::path& dir, const std::vector<AnnotatedPatch>& patches);
std::vector<AnnotatedPatch> read_annotated_patches(const std::filesystem::path& dir);

nlohmann::json to_json(const GroundTruth& truth);
GroundTruth ground_truth_from_json(const nlohmann::json& doc);
GroundTruth load_ground_truth(const std::filesystem::path& path);

nlohmann::json to_json(const SyntheticSlideSpec& spec);
SyntheticSlideSpec synthetic_spec_from_json(const nlohmann::json& doc);

}  // namespace prolif
