#include "prolif/patches.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <utility>

#include "json.hpp"
#include "prolif/error.hpp"

namespace prolif {

using nlohmann::json;

int hpf_patch_side(double mpp, double area_mm2) {
  if (!(mpp > 0.0)) throw invalid_argument("hpf_patch_side: mpp must be positive");
  if (!(area_mm2 >= 0.0)) throw invalid_argument("hpf_patch_side: area must be >= 0");
  const double side = std::round(std::sqrt(area_mm2 * 1e6) / mpp);
  if (!(side > 0.0)) throw invalid_argument("hpf_patch_side: patch side rounds to 0");
  return static_cast<int>(side);
}

double mask_coverage(const BinaryMask& mask, int x0, int y0, int side) {
  const double ds = mask.downsample;
  // mask pixel m is inside iff x0 <= (m + 0.5) * ds < x0 + side
  const int mx0 = std::max(0, static_cast<int>(std::ceil(x0 / ds - 0.5)));
  const int mx1 = std::min(mask.width, static_cast<int>(std::ceil((x0 + side) / ds - 0.5)));
  const int my0 = std::max(0, static_cast<int>(std::ceil(y0 / ds - 0.5)));
  const int my1 = std::min(mask.height, static_cast<int>(std::ceil((y0 + side) / ds - 0.5)));
  if (mx1 <= mx0 || my1 <= my0) return 0.0;
  std::int64_t set = 0;
  for (int y = my0; y < my1; ++y) {
    for (int x = mx0; x < mx1; ++x) set += mask.get(x, y) ? 1 : 0;
  }
  return static_cast<double>(set) / (static_cast<double>(mx1 - mx0) * (my1 - my0));
}

namespace {

std::vector<int> grid_positions(int lo, int extent, int side, int stride) {
  if (extent < side) return {lo + extent / 2};
  const int n = (extent - side) / stride + 1;
  const int offset = (extent - side - (n - 1) * stride) / 2;
  std::vector<int> out;
  for (int k = 0; k < n; ++k) out.push_back(lo + offset + side / 2 + k * stride);
  return out;
}

}  // namespace

std::vector<PatchRef> sample_patch_centers(const TissueResult& tissue, int side, int stride,
                                           const PatchParams& params, const std::string& slide_id) {
  if (stride <= 0) throw invalid_argument("sample_patch_centers: stride must be positive");
  if (side <= 0) throw invalid_argument("sample_patch_centers: side must be positive");
  std::vector<PatchRef> out;
  std::set<std::pair<int, int>> seen;
  const double ds = tissue.mask.downsample;
  for (const TissueBlob& blob : tissue.blobs) {
    const int bx0 = static_cast<int>(std::floor(blob.min_x * ds));
    const int by0 = static_cast<int>(std::floor(blob.min_y * ds));
    const int bx1 = static_cast<int>(std::ceil((blob.max_x + 1) * ds));
    const int by1 = static_cast<int>(std::ceil((blob.max_y + 1) * ds));
    const std::vector<int> xs = grid_positions(bx0, bx1 - bx0, side, stride);
    const std::vector<int> ys = grid_positions(by0, by1 - by0, side, stride);
    for (int cy : ys) {
      for (int cx : xs) {
        const int x0 = cx - side / 2;
        const int y0 = cy - side / 2;
        if (x0 < 0 || y0 < 0) continue;
        if (params.slide_width > 0 && x0 + side > params.slide_width) continue;
        if (params.slide_height > 0 && y0 + side > params.slide_height) continue;
        if (mask_coverage(tissue.mask, x0, y0, side) < params.min_tissue_fraction) continue;
        if (!seen.insert({cx, cy}).second) continue;
        out.push_back({slide_id, static_cast<int>(out.size()), cx, cy, side});
      }
    }
  }
  return out;
}

void write_patches_jsonl(const std::filesystem::path& path, const std::vector<PatchRef>& patches) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path.string());
  for (const PatchRef& p : patches) {
    out << json{{"slide", p.slide}, {"index", p.index}, {"cx", p.cx}, {"cy", p.cy}, {"side", p.side}}.dump()
        << '\n';
  }
}

std::vector<PatchRef> read_patches_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path.string());
  std::vector<PatchRef> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      out.push_back({j.at("slide").get<std::string>(), j.at("index").get<int>(), j.at("cx").get<int>(),
                     j.at("cy").get<int>(), j.at("side").get<int>()});
    } catch (const json::exception& e) {
      throw format_error("patches: " + std::string(e.what()));
    }
  }
  return out;
}

}  // namespace prolif
