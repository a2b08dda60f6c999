#include "prolif/tissue.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <boost/multiprecision/cpp_int.hpp>

#include "prolif/error.hpp"

namespace prolif {

namespace fs = std::filesystem;
using nlohmann::json;

Pixmap to_grayscale(const Pixmap& rgb) {
  if (rgb.channels() != 3) throw invalid_argument("to_grayscale: input must be RGB");
  Pixmap gray(rgb.width(), rgb.height(), 1);
  const auto src = rgb.bytes();
  auto dst = gray.bytes();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    // integer form of round(0.299R + 0.587G + 0.114B)
    const std::uint32_t v = 299u * src[3 * i] + 587u * src[3 * i + 1] + 114u * src[3 * i + 2];
    dst[i] = static_cast<std::uint8_t>((v + 500u) / 1000u);
  }
  return gray;
}

Histogram histogram(const Pixmap& gray) {
  if (gray.channels() != 1) throw invalid_argument("histogram: expected a gray image");
  Histogram h{};
  for (std::uint8_t v : gray.bytes()) ++h[v];
  return h;
}

int otsu_threshold(const Histogram& hist) {
  using boost::multiprecision::int256_t;
  int nonzero = 0;
  std::uint64_t total = 0;
  std::uint64_t weighted = 0;
  for (int v = 0; v < 256; ++v) {
    if (hist[v] > 0) ++nonzero;
    total += hist[v];
    weighted += hist[v] * static_cast<std::uint64_t>(v);
  }
  if (nonzero < 2) throw degenerate("degenerate histogram");

  // sigma_b^2 * N^2 = D^2 / (n0 n1) with D = S0 N - S n0; compared exactly.
  const int256_t n = total;
  const int256_t s = weighted;
  int best_t = 0;
  int256_t best_num = 0;
  int256_t best_den = 1;
  std::uint64_t n0 = 0;
  std::uint64_t s0 = 0;
  for (int t = 1; t < 256; ++t) {
    n0 += hist[t - 1];
    s0 += hist[t - 1] * static_cast<std::uint64_t>(t - 1);
    const std::uint64_t n1 = total - n0;
    if (n0 == 0 || n1 == 0) continue;
    const int256_t d = int256_t(s0) * n - s * int256_t(n0);
    const int256_t num = d * d;
    const int256_t den = int256_t(n0) * int256_t(n1);
    if (num * best_den > best_num * den) {
      best_num = num;
      best_den = den;
      best_t = t;
    }
  }
  return best_t;
}

TissueResult extract_tissue_blobs(const SlidePyramid& slide, const TissueParams& params) {
  if (params.thumb_max_side <= 0) throw invalid_argument("thumb_max_side must be positive");
  // Highest-resolution level that fits; otherwise the coarsest level, area-averaged down.
  int level = -1;
  for (int l = 0; l < slide.level_count(); ++l) {
    const LevelInfo& info = slide.level(l);
    if (std::max(info.width, info.height) <= params.thumb_max_side) {
      level = l;
      break;
    }
  }
  int extra = 1;
  if (level < 0) {
    level = slide.level_count() - 1;
    const LevelInfo& info = slide.level(level);
    const int side = std::max(info.width, info.height);
    extra = (side + params.thumb_max_side - 1) / params.thumb_max_side;
  }
  const LevelInfo& info = slide.level(level);
  Pixmap thumb = read_region(slide, level, 0, 0, info.width, info.height);
  if (extra > 1) thumb = downsample_area(thumb, extra);

  const Pixmap gray = to_grayscale(thumb);
  TissueResult result;
  result.threshold = otsu_threshold(histogram(gray));

  BinaryMask raw(gray.width(), gray.height());
  const auto g = gray.bytes();
  for (std::size_t i = 0; i < g.size(); ++i) raw.bits[i] = g[i] < result.threshold ? 1 : 0;
  BinaryMask dilated = binary_dilate(raw, params.dilation_radius);
  dilated.level = level;
  dilated.downsample = info.downsample * extra;

  const Labeling labels = label_components(dilated);
  const double mm2_per_px =
      slide.mpp_x() * dilated.downsample * slide.mpp_y() * dilated.downsample / 1e6;
  std::vector<std::uint8_t> keep(labels.components.size() + 1, 0);
  for (const Component& c : labels.components) {
    const double area_mm2 = static_cast<double>(c.area) * mm2_per_px;
    if (area_mm2 < params.min_blob_area_mm2) continue;
    keep[static_cast<std::size_t>(c.label)] = 1;
    result.blobs.push_back({c.label, c.area, c.min_x, c.min_y, c.max_x, c.max_y, area_mm2});
  }
  std::stable_sort(result.blobs.begin(), result.blobs.end(),
                   [](const TissueBlob& a, const TissueBlob& b) { return a.area_px > b.area_px; });

  result.mask = dilated;
  for (std::size_t i = 0; i < result.mask.bits.size(); ++i) {
    result.mask.bits[i] = keep[static_cast<std::size_t>(labels.labels[i])];
  }
  return result;
}

Pixmap mask_to_pixmap(const BinaryMask& mask) {
  Pixmap img(mask.width, mask.height, 1);
  auto bytes = img.bytes();
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = mask.bits[i] ? 255 : 0;
  return img;
}

json to_json(const TissueResult& r) {
  json blobs = json::array();
  for (const TissueBlob& b : r.blobs) {
    blobs.push_back({{"label", b.label},
                     {"area_px", b.area_px},
                     {"bbox", {b.min_x, b.min_y, b.max_x, b.max_y}},
                     {"area_mm2", b.area_mm2}});
  }
  return {{"level", r.mask.level},
          {"downsample", r.mask.downsample},
          {"width", r.mask.width},
          {"height", r.mask.height},
          {"threshold", r.threshold},
          {"blobs", blobs}};
}

void write_tissue(const fs::path& dir, const TissueResult& result) {
  fs::create_directories(dir);
  write_pnm(dir / "mask.pgm", mask_to_pixmap(result.mask));
  std::ofstream out(dir / "blobs.json");
  if (!out) throw io_error("cannot write " + (dir / "blobs.json").string());
  out << to_json(result).dump(2) << '\n';
}

TissueResult read_tissue(const fs::path& dir) {
  const Pixmap img = read_pnm(dir / "mask.pgm");
  if (img.channels() != 1) throw format_error("tissue mask must be P5");
  std::ifstream in(dir / "blobs.json");
  if (!in) throw io_error("cannot open " + (dir / "blobs.json").string());
  TissueResult r;
  try {
    const json doc = json::parse(in);
    r.mask = BinaryMask(img.width(), img.height());
    r.mask.level = doc.at("level").get<int>();
    r.mask.downsample = doc.at("downsample").get<double>();
    r.threshold = doc.at("threshold").get<int>();
    for (const auto& b : doc.at("blobs")) {
      const auto& box = b.at("bbox");
      r.blobs.push_back({b.at("label").get<int>(), b.at("area_px").get<std::int64_t>(), box.at(0).get<int>(),
                         box.at(1).get<int>(), box.at(2).get<int>(), box.at(3).get<int>(),
                         b.at("area_mm2").get<double>()});
    }
  } catch (const json::exception& e) {
    throw format_error(std::string("blobs.json: ") + e.what());
  }
  const auto bytes = img.bytes();
  for (std::size_t i = 0; i < bytes.size(); ++i) r.mask.bits[i] = bytes[i] ? 1 : 0;
  return r;
}

}  // namespace prolif
