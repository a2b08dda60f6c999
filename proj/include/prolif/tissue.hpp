#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "json.hpp"
#include "prolif/image.hpp"
#include "prolif/morphology.hpp"
#include "prolif/slide.hpp"

namespace prolif {

using Histogram = std::array<std::uint64_t, 256>;

// round(0.299 R + 0.587 G + 0.114 B); input must be RGB.
Pixmap to_grayscale(const Pixmap& rgb);
Histogram histogram(const Pixmap& gray);

// Threshold t maximizing between-class variance of {v < t} vs {v >= t};
// ties go to the smallest t. Throws kDegenerate when all mass is in one bin.
int otsu_threshold(const Histogram& hist);

struct TissueBlob {
  int label = 0;
  std::int64_t area_px = 0;  // mask pixels
  int min_x = 0, min_y = 0, max_x = 0, max_y = 0;  // inclusive, mask px
  double area_mm2 = 0.0;
};

struct TissueParams {
  int thumb_max_side = 2048;
  int dilation_radius = 2;
  double min_blob_area_mm2 = 0.05;
};

struct TissueResult {
  BinaryMask mask;  // only pixels of retained blobs are set
  std::vector<TissueBlob> blobs;  // area descending
  int threshold = 0;
};

TissueResult extract_tissue_blobs(const SlidePyramid& slide, const TissueParams& params = {});

// Mask as P5 with 0/255 values.
Pixmap mask_to_pixmap(const BinaryMask& mask);
nlohmann::json to_json(const TissueResult& result);
void write_tissue(const std::filesystem::path& dir, const TissueResult& result);
TissueResult read_tissue(const std::filesystem::path& dir);

}  // namespace prolif
