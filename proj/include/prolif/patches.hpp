#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "prolif/tissue.hpp"

namespace prolif {

// Square level-0 patch covering roughly 10 consecutive HPFs.
struct PatchRef {
  std::string slide;
  int index = 0;
  int cx = 0;
  int cy = 0;
  int side = 0;

  int x0() const { return cx - side / 2; }
  int y0() const { return cy - side / 2; }
  bool operator==(const PatchRef&) const = default;
};

// round(sqrt(area_mm2 * 1e6 um^2) / mpp).
int hpf_patch_side(double mpp, double area_mm2 = 2.0);

struct PatchParams {
  double min_tissue_fraction = 0.25;
  int slide_width = 0;   // level-0 bounds; patches crossing them are dropped
  int slide_height = 0;
};

// Centered grid over each blob's bounding box (blobs in area order, row-major
// within a blob). A center is kept iff its square lies inside the slide and
// the tissue mask covers at least min_tissue_fraction of it.
std::vector<PatchRef> sample_patch_centers(const TissueResult& tissue, int side, int stride,
                                           const PatchParams& params, const std::string& slide_id);

// Fraction of mask pixels (by pixel center) inside the level-0 square that are set.
double mask_coverage(const BinaryMask& mask, int x0, int y0, int side);

void write_patches_jsonl(const std::filesystem::path& path, const std::vector<PatchRef>& patches);
std::vector<PatchRef> read_patches_jsonl(const std::filesystem::path& path);

}  // namespace prolif
