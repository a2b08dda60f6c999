#include "prolif/features.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "prolif/error.hpp"

namespace prolif {

int br_grade(double count, const BrThresholds& t) {
  if (!(t.t1 < t.t2)) throw invalid_argument("br_grade: thresholds must satisfy t1 < t2");
  if (!(count >= 0.0)) throw invalid_argument("br_grade: count must be >= 0");
  if (count <= t.t1) return 1;
  if (count <= t.t2) return 2;
  return 3;
}

std::pair<RankBand, RankBand> rank_bands(int k) {
  if (k < 1) throw invalid_argument("rank_bands: K must be >= 1");
  auto clamp_band = [k](int lo, int hi) {
    lo = std::clamp(lo, 1, k);
    hi = std::clamp(hi, lo, k);
    return RankBand{lo, hi};
  };
  // integer ceil/floor keep K=30 exact: ceil(3.0000000000000004) would be 4
  const int top_last = (k + 9) / 10;
  const int mid_first = (3 * k) / 10;
  const int mid_last = (7 * k + 9) / 10;
  return {clamp_band(1, top_last), clamp_band(mid_first, mid_last)};
}

const char* feature_name(int index) {
  static const char* const kNames[kFeatureCount] = {
      "avg_mts",      "max_mts",       "std_mts",       "br_avg_mts",      "br_max_mts",     "avg_cells",
      "max_cells",    "std_cells",     "ratio_avg",     "ratio_max",       "avg_mts_top10",  "min_mts",
      "min_cells",    "ratio_min",     "std_mts_top10", "std_cells_top10", "min_mts_top10",  "min_cells_top10",
      "avg_mts_mid",  "max_mts_mid",   "std_mts_mid"};
  if (index < 0 || index >= kFeatureCount) throw invalid_argument("feature index out of range");
  return kNames[index];
}

namespace {

struct Stats {
  double mean = 0, max = 0, min = 0, sd = 0;
};

Stats stats(std::span<const double> v) {
  Stats s;
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  s.max = *std::max_element(v.begin(), v.end());
  s.min = *std::min_element(v.begin(), v.end());
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.sd = std::sqrt(ss / static_cast<double>(v.size()));
  return s;
}

double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

}  // namespace

FeatureVector21 extract_features(const SortedRoiList& rois, const BrThresholds& thresholds) {
  if (rois.entries.empty()) throw invalid_argument("extract_features: empty ROI list");
  std::vector<RoiEntry> entries = rois.entries;
  std::sort(entries.begin(), entries.end(), [](const RoiEntry& a, const RoiEntry& b) {
    if (a.cells != b.cells) return a.cells > b.cells;
    return a.patch.index < b.patch.index;
  });
  std::vector<double> mts, cells;
  for (const RoiEntry& e : entries) {
    if (e.mitoses < 0 || e.cells < 0) throw invalid_argument("extract_features: ROI counts not filled");
    mts.push_back(e.mitoses);
    cells.push_back(e.cells);
  }
  const auto [top, mid] = rank_bands(static_cast<int>(entries.size()));
  auto band = [](const std::vector<double>& v, RankBand b) {
    return std::span<const double>(v).subspan(static_cast<std::size_t>(b.first - 1),
                                              static_cast<std::size_t>(b.last - b.first + 1));
  };

  const Stats m = stats(mts), c = stats(cells);
  const Stats mt = stats(band(mts, top)), ct = stats(band(cells, top));
  const Stats mm = stats(band(mts, mid));
  FeatureVector21 f{};
  f[0] = m.mean;
  f[1] = m.max;
  f[2] = m.sd;
  f[3] = br_grade(m.mean, thresholds);
  f[4] = br_grade(m.max, thresholds);
  f[5] = c.mean;
  f[6] = c.max;
  f[7] = c.sd;
  f[8] = ratio(m.mean, c.mean);
  f[9] = ratio(m.max, c.max);
  f[10] = mt.mean;
  f[11] = m.min;
  f[12] = c.min;
  f[13] = ratio(m.min, c.min);
  f[14] = mt.sd;
  f[15] = ct.sd;
  f[16] = mt.min;
  f[17] = ct.min;
  f[18] = mm.mean;
  f[19] = mm.max;
  f[20] = mm.sd;
  return f;
}

std::vector<double> select_features(std::span<const double> features, std::span<const int> indices) {
  if (indices.empty()) throw invalid_argument("select_features: empty selection");
  std::set<int> seen;
  std::vector<double> out;
  out.reserve(indices.size());
  for (int idx : indices) {
    if (idx < 0 || static_cast<std::size_t>(idx) >= features.size()) {
      throw invalid_argument("select_features: index out of range: " + std::to_string(idx));
    }
    if (!seen.insert(idx).second) throw invalid_argument("select_features: duplicate index");
    out.push_back(features[static_cast<std::size_t>(idx)]);
  }
  return out;
}

void write_features_csv(const std::filesystem::path& path, const std::vector<FeatureRow>& rows) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path.string());
  out << "slide";
  for (int i = 0; i < kFeatureCount; ++i) out << ",f" << i;
  out << '\n';
  char buf[32];
  for (const FeatureRow& r : rows) {
    out << r.slide;
    for (double v : r.values) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << ',' << buf;
    }
    out << '\n';
  }
}

std::vector<FeatureRow> read_features_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("slide,f0,", 0) != 0) throw format_error("features csv: bad header");
  std::vector<FeatureRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    FeatureRow row;
    std::getline(ss, row.slide, ',');
    std::string cell;
    int i = 0;
    while (std::getline(ss, cell, ',')) {
      if (i >= kFeatureCount) throw format_error("features csv: too many columns");
      try {
        row.values[static_cast<std::size_t>(i++)] = std::stod(cell);
      } catch (const std::exception&) {
        throw format_error("features csv: bad number " + cell);
      }
    }
    if (i != kFeatureCount) throw format_error("features csv: expected 21 features");
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace prolif
