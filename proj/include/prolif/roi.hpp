#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "prolif/image.hpp"
#include "prolif/patches.hpp"
#include "prolif/stain.hpp"
#include "prolif/synth.hpp"

namespace prolif {

struct CellCountParams {
  double mpp = 0.25;
  // Area window in px^2 at 0.25 um/px; rescaled by (0.25 / mpp)^2.
  double min_area_at_025 = 40.0;
  double max_area_at_025 = 2000.0;
  int opening_radius = 1;
  double nominal_cell_radius_um = 4.0;
  // Otsu runs on H concentration quantized over [0, h_scale]; the threshold
  // is never allowed below min_h so nucleus-free tissue yields no cells.
  double h_scale = 2.5;
  double min_h = 0.3;
  MacenkoParams macenko;
  StainMatrix fallback = default_he_matrix();
};

struct CellCountResult {
  int patch_index = 0;
  int count = 0;
  std::vector<Point> centroids;  // patch-local px
  bool fallback_stain = false;
};

CellCountResult count_cells(const Pixmap& patch, const CellCountParams& params, int patch_index = 0);

struct RoiEntry {
  PatchRef patch;
  int cells = 0;
  int mitoses = -1;  // -1 until detection fills it
};

// Sorted by cells descending, ties by patch index ascending; rank = position + 1.
struct SortedRoiList {
  std::string slide;
  int k = 30;
  std::vector<RoiEntry> entries;
};

SortedRoiList rank_rois(const std::vector<CellCountResult>& counts, const std::vector<PatchRef>& patches,
                        int k = 30);

nlohmann::json to_json(const SortedRoiList& rois);
SortedRoiList roi_list_from_json(const nlohmann::json& doc);
void save_roi_list(const std::filesystem::path& path, const SortedRoiList& rois);
SortedRoiList load_roi_list(const std::filesystem::path& path);

}  // namespace prolif
