#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "prolif/features.hpp"
#include "prolif/svm.hpp"

namespace prolif {

using Predictor = std::function<double(std::span<const double>)>;
using Trainer = std::function<Predictor(const Matrix& x, const std::vector<double>& y)>;
using Metric = std::function<double(std::span<const double> predicted, std::span<const double> truth)>;

// Seeded shuffle of 0..n-1, then fold = position mod folds.
std::vector<int> fold_assignment(std::size_t n, int folds, std::uint64_t seed);

struct CvResult {
  std::vector<double> fold_scores;  // NaN where the metric is undefined on a fold
  double mean = 0.0;                // over the defined folds
  std::vector<double> out_of_fold;  // held-out prediction per sample
  double pooled = 0.0;              // metric over all out-of-fold predictions
};

CvResult cross_validate(const Matrix& x, const std::vector<double>& y, int folds, std::uint64_t seed,
                        const Trainer& trainer, const Metric& metric, int jobs = 1);

double kappa_metric(std::span<const double> predicted, std::span<const double> truth);
double spearman_metric(std::span<const double> predicted, std::span<const double> truth);
double accuracy_metric(std::span<const double> predicted, std::span<const double> truth);

Trainer svc_trainer(SvmParams params);
Trainer svr_trainer(SvmParams params);

struct SearchEvaluation {
  std::vector<int> indices;
  double c = 0.0;
  CvResult cv;
};

struct SearchResult {
  std::vector<int> indices;
  double c = 0.0;
  double score = 0.0;
  std::vector<SearchEvaluation> evaluations;
};

// Exhaustive search ranked by the pooled out-of-fold metric; ties go to
// fewer features, then smaller C, then the lexicographically smaller set.
SearchResult feature_search(const std::vector<FeatureVector21>& rows, const std::vector<double>& y,
                            const std::vector<std::vector<int>>& candidates, const std::vector<double>& c_grid,
                            SvmKind kind, int folds, std::uint64_t seed, double epsilon = 0.1, int jobs = 1);

Matrix project_rows(const std::vector<FeatureVector21>& rows, std::span<const int> indices);

}  // namespace prolif
