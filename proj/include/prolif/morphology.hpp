#pragma once

#include <cstdint>
#include <vector>

namespace prolif {

// Row-major 0/1 mask. `downsample` maps mask pixels to level-0 pixels.
struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;
  int level = 0;
  double downsample = 1.0;

  BinaryMask() = default;
  BinaryMask(int w, int h) : width(w), height(h), bits(static_cast<std::size_t>(w) * h, 0) {}

  bool get(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v = true) { bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
  std::size_t count() const;
  bool operator==(const BinaryMask& o) const {
    return width == o.width && height == o.height && bits == o.bits;
  }
};

// Square structuring element of side 2r+1 (Chebyshev ball).
BinaryMask binary_dilate(const BinaryMask& mask, int radius);
BinaryMask binary_erode(const BinaryMask& mask, int radius);
BinaryMask binary_open(const BinaryMask& mask, int radius);

struct Component {
  int label = 0;  // 1-based
  std::int64_t area = 0;
  int min_x = 0, min_y = 0, max_x = 0, max_y = 0;  // inclusive
  double sum_x = 0.0, sum_y = 0.0;

  double centroid_x() const { return sum_x / static_cast<double>(area); }
  double centroid_y() const { return sum_y / static_cast<double>(area); }
};

struct Labeling {
  int width = 0;
  int height = 0;
  std::vector<std::int32_t> labels;  // 0 = background
  std::vector<Component> components;  // components[k].label == k + 1, raster order of first pixel
};

Labeling label_components(const BinaryMask& mask);  // 8-connectivity

// Exact Euclidean distance from each set pixel to the nearest unset pixel
// (pixels beyond the border count as unset). Unset pixels get 0.
std::vector<float> distance_transform(const BinaryMask& mask);

}  // namespace prolif
