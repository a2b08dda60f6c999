#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "json.hpp"

namespace prolif {

using Matrix = std::vector<std::vector<double>>;

double rbf_kernel(std::span<const double> x, std::span<const double> y, double gamma);

struct SmoOptions {
  double tolerance = 1e-3;  // stop when the maximal violating pair gap drops below this
  long max_iterations = 10'000'000;
  bool record_objective = false;
};

// Solution of  min 1/2 a'Qa + p'a  s.t.  y'a = const, 0 <= a <= C  with
// Q_ij = y_i y_j K_ij. decision(x) = sum_i a_i y_i K(x_i, x) + bias.
struct SmoSolution {
  std::vector<double> alpha;
  double bias = 0.0;
  long iterations = 0;
  bool converged = false;
  std::vector<double> dual_objective;  // -(1/2 a'Qa + p'a) per step when recorded
};

// Binary C-SVC on labels +1/-1.
SmoSolution solve_svc(const Matrix& x, const std::vector<int>& y, double c, double gamma,
                      const SmoOptions& options = {});

// epsilon-SVR; alpha has 2n entries, coefficient of sample i is alpha[i] - alpha[n + i].
SmoSolution solve_svr(const Matrix& x, const std::vector<double>& z, double c, double gamma, double epsilon,
                      const SmoOptions& options = {});

// Largest amount by which any sample violates the box-constrained KKT
// conditions of a binary C-SVC solution (0 when all hold exactly).
double svc_kkt_violation(const Matrix& x, const std::vector<int>& y, const std::vector<double>& alpha, double bias,
                         double c, double gamma);

enum class SvmKind { kClassifier, kRegressor };

// decision(x) = sum coef_k K(sv_k, x) + bias over standardized inputs. For a
// classifier machine a positive decision votes for `positive`.
struct BinaryMachine {
  int positive = 0;
  int negative = 0;
  Matrix support_vectors;
  std::vector<double> coef;
  std::vector<int> sv_index;  // row in the training set
  double bias = 0.0;
  long iterations = 0;
};

struct SvmModel {
  SvmKind kind = SvmKind::kClassifier;
  double gamma = 0.0;
  double c = 1.0;
  double epsilon = 0.0;
  std::vector<int> features;  // indices into the 21-dim slide vector
  std::vector<double> mean;
  std::vector<double> scale;
  std::vector<int> labels;  // classifier only, ascending
  std::vector<BinaryMachine> machines;

  std::size_t dim() const { return mean.size(); }
  std::vector<double> standardize(std::span<const double> x) const;
  void validate() const;
};

struct SvmParams {
  double c = 1.0;
  double gamma = 0.0;  // <= 0 selects 1/dim
  double epsilon = 0.1;
  std::vector<int> features;  // recorded in the model only
  SmoOptions smo;
};

inline constexpr double kMitosisScoreC = 0.03125;
inline constexpr double kMolecularScoreC = 0.25;

// One-vs-one over the distinct labels; inputs are z-scored with training
// statistics first.
SvmModel train_svc(const Matrix& x, const std::vector<int>& labels, const SvmParams& params);
SvmModel train_svr(const Matrix& x, const std::vector<double>& targets, const SvmParams& params);

// Per machine decision values for an input of model.dim() features.
std::vector<double> decision_values(const SvmModel& model, std::span<const double> x);
// Class by majority vote (ties to the smaller label) or regression value.
double predict(const SvmModel& model, std::span<const double> x);

nlohmann::json to_json(const SvmModel& model);
SvmModel svm_model_from_json(const nlohmann::json& j);
void save_svm_model(const std::filesystem::path& path, const SvmModel& model);
SvmModel load_svm_model(const std::filesystem::path& path);

}  // namespace prolif
