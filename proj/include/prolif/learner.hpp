#pragma once

#include <span>
#include <vector>

#include "prolif/detection.hpp"
#include "prolif/mining.hpp"

namespace prolif {

struct LearnerParams {
  double l2 = 1e-3;
  int max_epochs = 10000;
  double grad_tolerance = 1e-6;
};

// Mean log-loss plus (l2/2)|w|^2 over standardized features; the bias is not
// penalized. Parameters are laid out as [w_0 .. w_{d-1}, b].
class LogisticObjective {
 public:
  LogisticObjective(std::vector<WindowFeatures> x, std::vector<int> y, double l2);
  double value(std::span<const double> params) const;
  std::vector<double> gradient(std::span<const double> params) const;
  std::size_t size() const { return y_.size(); }

 private:
  std::vector<WindowFeatures> x_;
  std::vector<int> y_;
  double l2_;
};

// Full-batch gradient descent from zero weights with step 1/L (L bounds the
// gradient's Lipschitz constant); stops at grad_tolerance or max_epochs.
// Throws if only one class is present.
LogisticModel train_logistic(const std::vector<WindowFeatures>& features, const std::vector<int>& labels,
                             const LearnerParams& params = {});

// Features come from `feature_source` applied to each sample's window.
LearnedDetector train_reference_learner(const TrainingDataset& dataset, const WindowFeatureDetector& feature_source,
                                        const LearnerParams& params = {});

}  // namespace prolif
