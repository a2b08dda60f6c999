#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "prolif/image.hpp"

namespace prolif {

struct LevelInfo {
  int width = 0;
  int height = 0;
  double downsample = 1.0;  // relative to level 0
  int tile_cols = 0;
  int tile_rows = 0;
};

// Multi-resolution slide stored as a JSON manifest next to a grid of P6
// tiles named L{level}_r{row}_c{col}.ppm. Immutable after open, so reads
// may run concurrently.
class SlidePyramid {
 public:
  const std::string& slide_id() const { return slide_id_; }
  const std::vector<LevelInfo>& levels() const { return levels_; }
  const LevelInfo& level(int index) const;
  int level_count() const { return static_cast<int>(levels_.size()); }
  double mpp_x() const { return mpp_x_; }
  double mpp_y() const { return mpp_y_; }
  int tile_size() const { return tile_size_; }
  const std::filesystem::path& manifest_path() const { return manifest_path_; }

  std::filesystem::path tile_path(int level, int row, int col) const;

 private:
  friend SlidePyramid open_slide(const std::filesystem::path& manifest_path);

  std::string slide_id_;
  std::vector<LevelInfo> levels_;
  double mpp_x_ = 0.0;
  double mpp_y_ = 0.0;
  int tile_size_ = 0;
  std::filesystem::path manifest_path_;
};

std::string tile_file_name(int level, int row, int col);

SlidePyramid open_slide(const std::filesystem::path& manifest_path);

// Reads [x, x+w) x [y, y+h) in the pixel space of `level`. Pixels outside
// the level are white (glass background).
Pixmap read_region(const SlidePyramid& slide, int level, int x, int y, int w, int h);

struct PyramidOptions {
  int tile_size = 512;
  int level_factor = 4;
  int max_top_side = 1024;  // add levels until the coarsest fits this side
};

// Writes tiles and manifest for an in-memory level-0 image; returns the
// manifest path.
std::filesystem::path write_slide(const Pixmap& level0, const std::string& slide_id, double mpp_x,
                                  double mpp_y, const std::filesystem::path& out_dir,
                                  const PyramidOptions& options = {});

// Box-filter downsample by an integer factor; partial edge blocks average
// only the pixels they cover.
Pixmap downsample_area(const Pixmap& src, int factor);

}  // namespace prolif
