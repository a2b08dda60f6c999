#include "prolif/roi.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "prolif/error.hpp"
#include "prolif/morphology.hpp"
#include "prolif/tissue.hpp"

namespace prolif {

using nlohmann::json;

namespace {

// Peaks of the distance transform inside one component, greedily thinned so
// that accepted peaks are at least `separation` apart.
std::vector<Point> split_by_distance_peaks(const Labeling& labels, const std::vector<float>& dist,
                                           const Component& comp, double separation, double min_depth) {
  struct Peak {
    float depth;
    int x, y;
  };
  std::vector<Peak> peaks;
  const int w = labels.width;
  for (int y = comp.min_y; y <= comp.max_y; ++y) {
    for (int x = comp.min_x; x <= comp.max_x; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (labels.labels[i] != comp.label || dist[i] < min_depth) continue;
      bool is_max = true;
      for (int dy = -1; dy <= 1 && is_max; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int nx = x + dx, ny = y + dy;
          if ((dx == 0 && dy == 0) || nx < 0 || ny < 0 || nx >= w || ny >= labels.height) continue;
          if (dist[static_cast<std::size_t>(ny) * w + nx] > dist[i]) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) peaks.push_back({dist[i], x, y});
    }
  }
  std::stable_sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) { return a.depth > b.depth; });
  std::vector<Point> accepted;
  for (const Peak& p : peaks) {
    bool far = true;
    for (const Point& q : accepted) {
      if (std::hypot(q.x - p.x, q.y - p.y) < separation) {
        far = false;
        break;
      }
    }
    if (far) accepted.push_back({static_cast<double>(p.x), static_cast<double>(p.y)});
  }
  if (accepted.empty()) accepted.push_back({comp.centroid_x(), comp.centroid_y()});
  return accepted;
}

}  // namespace

CellCountResult count_cells(const Pixmap& patch, const CellCountParams& params, int patch_index) {
  if (patch.channels() != 3) throw invalid_argument("count_cells: expected RGB patch");
  if (!(params.mpp > 0.0)) throw invalid_argument("count_cells: mpp must be positive");
  CellCountResult result;
  result.patch_index = patch_index;

  const ColorTable table = color_table(patch);
  const std::vector<Od> od = colors_to_od(table.colors);
  StainMatrix matrix;
  try {
    matrix = estimate_stain_matrix(od, table.counts, params.macenko);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kDegenerate) throw;
    matrix = params.fallback;
    result.fallback_stain = true;
  }
  const std::vector<Conc> conc = compute_concentrations(od, matrix);

  Histogram hist{};
  std::vector<std::uint8_t> quantized(conc.size());
  for (std::size_t i = 0; i < conc.size(); ++i) {
    const double q = std::round(std::clamp(conc[i][0] / params.h_scale, 0.0, 1.0) * 255.0);
    quantized[i] = static_cast<std::uint8_t>(q);
    hist[quantized[i]] += table.counts[i];
  }
  int threshold;
  try {
    threshold = otsu_threshold(hist);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kDegenerate) throw;
    return result;  // uniform H channel: nothing to count
  }
  const int floor_q = static_cast<int>(std::ceil(params.min_h / params.h_scale * 255.0));
  threshold = std::max(threshold, floor_q);

  BinaryMask fg(patch.width(), patch.height());
  for (std::size_t i = 0; i < table.index.size(); ++i) fg.bits[i] = quantized[table.index[i]] >= threshold ? 1 : 0;
  fg = binary_open(fg, params.opening_radius);

  const double scale = (0.25 / params.mpp) * (0.25 / params.mpp);
  const double min_area = params.min_area_at_025 * scale;
  const double max_area = params.max_area_at_025 * scale;
  const double radius_px = params.nominal_cell_radius_um / params.mpp;

  const Labeling labels = label_components(fg);
  std::vector<float> dist;
  for (const Component& c : labels.components) {
    const double area = static_cast<double>(c.area);
    if (area < min_area) continue;
    if (area <= max_area) {
      result.centroids.push_back({c.centroid_x(), c.centroid_y()});
      continue;
    }
    if (dist.empty()) dist = distance_transform(fg);
    for (const Point& p : split_by_distance_peaks(labels, dist, c, radius_px, 0.5 * radius_px)) {
      result.centroids.push_back(p);
    }
  }
  result.count = static_cast<int>(result.centroids.size());
  return result;
}

SortedRoiList rank_rois(const std::vector<CellCountResult>& counts, const std::vector<PatchRef>& patches, int k) {
  if (counts.empty()) throw invalid_argument("rank_rois: empty input");
  if (k < 1) throw invalid_argument("rank_rois: K must be >= 1");
  std::vector<const CellCountResult*> order;
  for (const CellCountResult& c : counts) order.push_back(&c);
  std::sort(order.begin(), order.end(), [](const CellCountResult* a, const CellCountResult* b) {
    if (a->count != b->count) return a->count > b->count;
    return a->patch_index < b->patch_index;
  });
  SortedRoiList out;
  out.k = k;
  out.slide = patches.empty() ? std::string{} : patches.front().slide;
  for (std::size_t i = 0; i < order.size() && static_cast<int>(i) < k; ++i) {
    const auto it = std::find_if(patches.begin(), patches.end(),
                                 [&](const PatchRef& p) { return p.index == order[i]->patch_index; });
    if (it == patches.end()) throw invalid_argument("rank_rois: no patch with index " +
                                                    std::to_string(order[i]->patch_index));
    out.entries.push_back({*it, order[i]->count, -1});
  }
  return out;
}

json to_json(const SortedRoiList& rois) {
  json arr = json::array();
  for (const RoiEntry& e : rois.entries) {
    json j = {{"index", e.patch.index}, {"cx", e.patch.cx}, {"cy", e.patch.cy}, {"side", e.patch.side},
              {"cells", e.cells}};
    if (e.mitoses >= 0) j["mitoses"] = e.mitoses;
    arr.push_back(std::move(j));
  }
  return {{"slide", rois.slide}, {"K", rois.k}, {"rois", arr}};
}

SortedRoiList roi_list_from_json(const json& doc) {
  SortedRoiList out;
  try {
    out.slide = doc.at("slide").get<std::string>();
    out.k = doc.at("K").get<int>();
    for (const auto& j : doc.at("rois")) {
      RoiEntry e;
      e.patch = {out.slide, j.at("index").get<int>(), j.at("cx").get<int>(), j.at("cy").get<int>(),
                 j.at("side").get<int>()};
      e.cells = j.at("cells").get<int>();
      e.mitoses = j.value("mitoses", -1);
      out.entries.push_back(e);
    }
  } catch (const json::exception& e) {
    throw format_error(std::string("roi list: ") + e.what());
  }
  return out;
}

void save_roi_list(const std::filesystem::path& path, const SortedRoiList& rois) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path.string());
  out << to_json(rois).dump(2) << '\n';
}

SortedRoiList load_roi_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path.string());
  try {
    return roi_list_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw format_error(std::string("roi list: ") + e.what());
  }
}

}  // namespace prolif
