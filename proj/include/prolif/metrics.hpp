#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "prolif/detection.hpp"
#include "prolif/synth.hpp"

namespace prolif {

struct MatchResult {
  int tp = 0;
  int fp = 0;
  int fn = 0;
  std::vector<std::pair<int, int>> pairs;  // (detection, truth)
};

// Greedy by ascending distance over pairs within radius (inclusive); ties by
// detection index, then truth index.
MatchResult match_detections(std::span<const Point> detections, std::span<const Point> truths, double radius);
MatchResult match_detections(std::span<const Detection> detections, std::span<const Point> truths, double radius);

struct F1Score {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};
F1Score f1(const MatchResult& m);
F1Score f1(int tp, int fp, int fn);

// Classes are 1..n_classes.
double quadratic_weighted_kappa(std::span<const int> preds, std::span<const int> labels, int n_classes = 3);

// Pearson correlation of average ranks.
double spearman(std::span<const double> x, std::span<const double> y);
std::vector<double> average_ranks(std::span<const double> x);

struct SlideEvaluation {
  std::string slide;
  int predicted_class = 0;
  int true_class = 0;
  double predicted_continuous = 0.0;
  double true_continuous = 0.0;
};

// Per-slide scores, used both for ground truth labels and predictions.
// CSV header: slide,score_class,score_continuous (empty cell = absent).
struct SlideScore {
  std::string slide;
  std::optional<int> score_class;
  std::optional<double> score_continuous;
};
void write_scores_csv(const std::filesystem::path& path, const std::vector<SlideScore>& scores);
std::vector<SlideScore> read_scores_csv(const std::filesystem::path& path);

struct MetricsReport {
  F1Score detection;
  double kappa = 0.0;
  double spearman = 0.0;
  std::vector<SlideEvaluation> slides;
};

nlohmann::json to_json(const MetricsReport& report);
void write_metrics_report(const std::filesystem::path& json_path, const std::filesystem::path& csv_path,
                          const MetricsReport& report);

}  // namespace prolif
