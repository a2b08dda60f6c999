#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "prolif/roi.hpp"

namespace prolif {

// Bloom & Richardson mitotic-count cutoffs per 10 HPF. The defaults are a
// configuration choice; nothing upstream pins them.
struct BrThresholds {
  double t1 = 7.0;
  double t2 = 14.0;
};

// 1 iff count <= t1, 2 iff t1 < count <= t2, else 3.
int br_grade(double count, const BrThresholds& thresholds = {});

struct RankBand {
  int first = 1;  // 1-based, inclusive
  int last = 1;
  bool operator==(const RankBand&) const = default;
};

// top = ranks 1..ceil(0.1K); mid = floor(0.3K)..ceil(0.7K), clamped to 1..K.
std::pair<RankBand, RankBand> rank_bands(int k);

inline constexpr int kFeatureCount = 21;
using FeatureVector21 = std::array<double, kFeatureCount>;

// Feature subsets reported as best for the two scores.
inline const std::vector<int> kMitosisScoreFeatures = {0, 1, 2, 3, 4, 5, 6, 7, 10, 15, 18, 20};
inline const std::vector<int> kMolecularScoreFeatures = {0, 1, 2, 3, 4, 5, 6, 7, 8, 10, 14, 18, 20};

const char* feature_name(int index);

// Statistics over the ROI entries after re-sorting them by rank. Population
// std; ratios are 0 when the cell denominator is 0; bands use the number of
// entries actually present.
FeatureVector21 extract_features(const SortedRoiList& rois, const BrThresholds& thresholds = {});

std::vector<double> select_features(std::span<const double> features, std::span<const int> indices);

struct FeatureRow {
  std::string slide;
  FeatureVector21 values{};
};

void write_features_csv(const std::filesystem::path& path, const std::vector<FeatureRow>& rows);
std::vector<FeatureRow> read_features_csv(const std::filesystem::path& path);

}  // namespace prolif
