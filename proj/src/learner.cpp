#include "prolif/learner.hpp"

#include <cmath>

#include "prolif/error.hpp"

namespace prolif {

namespace {

constexpr int kDim = kWindowFeatureCount;

double log1p_exp(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double linear(const WindowFeatures& x, std::span<const double> params) {
  double z = params[kDim];
  for (int k = 0; k < kDim; ++k) z += params[k] * x[k];
  return z;
}

}  // namespace

LogisticObjective::LogisticObjective(std::vector<WindowFeatures> x, std::vector<int> y, double l2)
    : x_(std::move(x)), y_(std::move(y)), l2_(l2) {
  if (x_.size() != y_.size() || x_.empty()) throw invalid_argument("logistic: features and labels must match");
}

double LogisticObjective::value(std::span<const double> params) const {
  double loss = 0.0;
  for (std::size_t i = 0; i < x_.size(); ++i) {
    const double z = linear(x_[i], params);
    // -y log p - (1-y) log(1-p) = log(1 + e^z) - y z
    loss += log1p_exp(z) - y_[i] * z;
  }
  loss /= static_cast<double>(x_.size());
  double reg = 0.0;
  for (int k = 0; k < kDim; ++k) reg += params[k] * params[k];
  return loss + 0.5 * l2_ * reg;
}

std::vector<double> LogisticObjective::gradient(std::span<const double> params) const {
  std::vector<double> g(kDim + 1, 0.0);
  for (std::size_t i = 0; i < x_.size(); ++i) {
    const double r = sigmoid(linear(x_[i], params)) - y_[i];
    for (int k = 0; k < kDim; ++k) g[k] += r * x_[i][k];
    g[kDim] += r;
  }
  for (double& v : g) v /= static_cast<double>(x_.size());
  for (int k = 0; k < kDim; ++k) g[k] += l2_ * params[k];
  return g;
}

LogisticModel train_logistic(const std::vector<WindowFeatures>& features, const std::vector<int>& labels,
                             const LearnerParams& params) {
  if (features.size() != labels.size() || features.empty()) throw invalid_argument("train_logistic: empty dataset");
  bool has0 = false, has1 = false;
  for (int y : labels) {
    if (y != 0 && y != 1) throw invalid_argument("train_logistic: labels must be 0/1");
    (y == 1 ? has1 : has0) = true;
  }
  if (!has0 || !has1) throw invalid_argument("train_logistic: single-class dataset");

  LogisticModel model;
  const double n = static_cast<double>(features.size());
  for (int k = 0; k < kDim; ++k) {
    double m = 0.0;
    for (const auto& f : features) m += f[k];
    m /= n;
    double ss = 0.0;
    for (const auto& f : features) ss += (f[k] - m) * (f[k] - m);
    const double sd = std::sqrt(ss / n);
    model.mean[k] = m;
    model.scale[k] = sd > 1e-12 ? sd : 1.0;
  }
  std::vector<WindowFeatures> z(features.size());
  double frob = 0.0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    for (int k = 0; k < kDim; ++k) {
      z[i][k] = (features[i][k] - model.mean[k]) / model.scale[k];
      frob += z[i][k] * z[i][k];
    }
    frob += 1.0;  // bias column
  }
  const LogisticObjective objective(z, labels, params.l2);
  const double lipschitz = 0.25 * frob / n + params.l2;
  const double step = 1.0 / lipschitz;

  std::vector<double> theta(kDim + 1, 0.0);
  int epoch = 0;
  double gnorm = 0.0;
  for (; epoch < params.max_epochs; ++epoch) {
    const std::vector<double> g = objective.gradient(theta);
    gnorm = 0.0;
    for (double v : g) gnorm += v * v;
    gnorm = std::sqrt(gnorm);
    if (gnorm < params.grad_tolerance) break;
    for (int k = 0; k <= kDim; ++k) theta[k] -= step * g[k];
  }
  for (int k = 0; k < kDim; ++k) model.weights[k] = theta[k];
  model.bias = theta[kDim];
  model.epochs = epoch;
  model.grad_norm = gnorm;
  return model;
}

LearnedDetector train_reference_learner(const TrainingDataset& dataset, const WindowFeatureDetector& feature_source,
                                        const LearnerParams& params) {
  dataset.validate(feature_source.geometry().train_input);
  std::vector<WindowFeatures> x;
  std::vector<int> y;
  for (const TrainingSample& s : dataset.samples) {
    x.push_back(feature_source.features_of_window(s.patch));
    y.push_back(s.label == SampleLabel::kMitosis ? 1 : 0);
  }
  return LearnedDetector(train_logistic(x, y, params), feature_source.geometry(), feature_source.feature_params());
}

}  // namespace prolif
