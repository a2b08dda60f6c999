#include "prolif/svm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "prolif/error.hpp"

namespace prolif {

using nlohmann::json;

double rbf_kernel(std::span<const double> x, std::span<const double> y, double gamma) {
  if (x.size() != y.size()) throw invalid_argument("rbf_kernel: dimension mismatch");
  if (!(gamma > 0.0)) throw invalid_argument("rbf_kernel: gamma must be positive");
  double d2 = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double d = x[k] - y[k];
    d2 += d * d;
  }
  return std::exp(-gamma * d2);
}

namespace {

void check_matrix(const Matrix& x, std::size_t n, const char* who) {
  if (x.size() != n) throw invalid_argument(std::string(who) + ": sample/target count mismatch");
  if (x.empty()) throw invalid_argument(std::string(who) + ": no samples");
  const std::size_t d = x.front().size();
  if (d == 0) throw invalid_argument(std::string(who) + ": zero-dimensional samples");
  for (const auto& row : x) {
    if (row.size() != d) throw invalid_argument(std::string(who) + ": ragged samples");
    for (double v : row) {
      if (!std::isfinite(v)) throw invalid_argument(std::string(who) + ": non-finite feature");
    }
  }
}

Matrix gram(const Matrix& x, double gamma) {
  const std::size_t n = x.size();
  Matrix k(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    k[i][i] = 1.0;
    for (std::size_t j = 0; j < i; ++j) k[i][j] = k[j][i] = rbf_kernel(x[i], x[j], gamma);
  }
  return k;
}

// Generic solver over m variables; q(i, j) = y_i y_j K(i mod n, j mod n).
struct Problem {
  const Matrix& k;
  std::vector<int> y;   // +1 / -1, size m
  std::vector<double> p;
  double c;
  std::size_t n;  // distinct samples (m = n or 2n)

  double q(std::size_t i, std::size_t j) const { return y[i] * y[j] * k[i % n][j % n]; }
};

double objective(const Problem& pr, const std::vector<double>& alpha, const std::vector<double>& grad) {
  // 1/2 a'Qa + p'a = 1/2 a'(G + p)
  double v = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) v += alpha[i] * (grad[i] + pr.p[i]);
  return 0.5 * v;
}

SmoSolution solve(const Problem& pr, std::vector<double> alpha, const SmoOptions& opt) {
  const std::size_t m = pr.y.size();
  const double c = pr.c;
  std::vector<double> grad(pr.p);
  for (std::size_t i = 0; i < m; ++i) {
    if (alpha[i] == 0.0) continue;
    for (std::size_t j = 0; j < m; ++j) grad[j] += pr.q(j, i) * alpha[i];
  }
  auto up = [&](std::size_t t) { return pr.y[t] > 0 ? alpha[t] < c : alpha[t] > 0.0; };
  auto low = [&](std::size_t t) { return pr.y[t] > 0 ? alpha[t] > 0.0 : alpha[t] < c; };

  SmoSolution sol;
  if (opt.record_objective) sol.dual_objective.push_back(-objective(pr, alpha, grad));
  constexpr double kTau = 1e-12;
  while (true) {
    // Maximal violating pair.
    double gmax = -std::numeric_limits<double>::infinity();
    double gmin = std::numeric_limits<double>::infinity();
    std::size_t i = m, j = m;
    for (std::size_t t = 0; t < m; ++t) {
      const double v = -pr.y[t] * grad[t];
      if (up(t) && v > gmax) gmax = v, i = t;
      if (low(t) && v < gmin) gmin = v, j = t;
    }
    if (i == m || j == m || gmax - gmin < opt.tolerance) {
      sol.converged = true;
      break;
    }
    if (sol.iterations >= opt.max_iterations) break;
    ++sol.iterations;

    const double yi = pr.y[i], yj = pr.y[j];
    const double ai_old = alpha[i], aj_old = alpha[j];
    double a = pr.q(i, i) + pr.q(j, j) - 2.0 * yi * yj * pr.q(i, j);
    if (a <= 0.0) a = kTau;
    // Move along y_i d_i = -y_j d_j = step, step > 0 decreases the objective.
    double step = (gmax - gmin) / a;
    // Bounds on the step from both boxes.
    const double room_i = yi > 0 ? c - ai_old : ai_old;
    const double room_j = yj > 0 ? aj_old : c - aj_old;
    step = std::min({step, room_i, room_j});
    alpha[i] = std::clamp(ai_old + yi * step, 0.0, c);
    alpha[j] = std::clamp(aj_old - yj * step, 0.0, c);
    // Snap to the bound that limited the step so the index set changes.
    if (step == room_i) alpha[i] = yi > 0 ? c : 0.0;
    if (step == room_j) alpha[j] = yj > 0 ? 0.0 : c;

    const double di = alpha[i] - ai_old, dj = alpha[j] - aj_old;
    for (std::size_t t = 0; t < m; ++t) grad[t] += pr.q(t, i) * di + pr.q(t, j) * dj;
    if (opt.record_objective) sol.dual_objective.push_back(-objective(pr, alpha, grad));
  }

  // Bias: average over free variables, else midpoint of the feasible interval.
  double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum = 0.0;
  int free = 0;
  for (std::size_t t = 0; t < m; ++t) {
    const double yg = pr.y[t] * grad[t];
    if (alpha[t] > 0.0 && alpha[t] < c) {
      ++free;
      sum += yg;
    } else if ((alpha[t] >= c) == (pr.y[t] > 0)) {
      lb = std::max(lb, yg);
    } else {
      ub = std::min(ub, yg);
    }
  }
  double rho;
  if (free > 0) {
    rho = sum / free;
  } else if (std::isfinite(ub) && std::isfinite(lb)) {
    rho = 0.5 * (ub + lb);
  } else {
    rho = std::isfinite(ub) ? ub : (std::isfinite(lb) ? lb : 0.0);
  }
  sol.bias = -rho;
  sol.alpha = std::move(alpha);
  return sol;
}

}  // namespace

SmoSolution solve_svc(const Matrix& x, const std::vector<int>& y, double c, double gamma, const SmoOptions& options) {
  check_matrix(x, y.size(), "svc");
  if (!(c > 0.0) || !std::isfinite(c)) throw invalid_argument("svc: C must be positive");
  for (int v : y) {
    if (v != 1 && v != -1) throw invalid_argument("svc: binary labels must be +1/-1");
  }
  const Matrix k = gram(x, gamma);
  Problem pr{k, y, std::vector<double>(y.size(), -1.0), c, y.size()};
  return solve(pr, std::vector<double>(y.size(), 0.0), options);
}

SmoSolution solve_svr(const Matrix& x, const std::vector<double>& z, double c, double gamma, double epsilon,
                      const SmoOptions& options) {
  check_matrix(x, z.size(), "svr");
  if (!(c > 0.0) || !std::isfinite(c)) throw invalid_argument("svr: C must be positive");
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw invalid_argument("svr: epsilon must be >= 0");
  for (double v : z) {
    if (!std::isfinite(v)) throw invalid_argument("svr: non-finite target");
  }
  const std::size_t n = z.size();
  const Matrix k = gram(x, gamma);
  Problem pr{k, std::vector<int>(2 * n), std::vector<double>(2 * n), c, n};
  for (std::size_t i = 0; i < n; ++i) {
    pr.y[i] = 1;
    pr.y[n + i] = -1;
    pr.p[i] = epsilon - z[i];
    pr.p[n + i] = epsilon + z[i];
  }
  return solve(pr, std::vector<double>(2 * n, 0.0), options);
}

double svc_kkt_violation(const Matrix& x, const std::vector<int>& y, const std::vector<double>& alpha, double bias,
                         double c, double gamma) {
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double f = bias;
    for (std::size_t j = 0; j < x.size(); ++j) {
      if (alpha[j] != 0.0) f += alpha[j] * y[j] * rbf_kernel(x[j], x[i], gamma);
    }
    const double m = y[i] * f;
    double v = 0.0;
    if (alpha[i] <= 0.0) {
      v = 1.0 - m;
    } else if (alpha[i] >= c) {
      v = m - 1.0;
    } else {
      v = std::abs(m - 1.0);
    }
    worst = std::max(worst, v);
  }
  return worst;
}

std::vector<double> SvmModel::standardize(std::span<const double> x) const {
  if (x.size() != dim()) throw invalid_argument("svm: input has " + std::to_string(x.size()) +
                                                " features, model expects " + std::to_string(dim()));
  std::vector<double> out(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = (x[k] - mean[k]) / scale[k];
  return out;
}

void SvmModel::validate() const {
  if (!(gamma > 0.0)) throw format_error("svm model: gamma must be positive");
  if (!(c > 0.0)) throw format_error("svm model: C must be positive");
  if (mean.empty() || mean.size() != scale.size()) throw format_error("svm model: bad standardization");
  for (double s : scale) {
    if (!(s > 0.0)) throw format_error("svm model: non-positive scale");
  }
  if (!features.empty() && features.size() != dim()) throw format_error("svm model: feature subset size mismatch");
  if (machines.empty()) throw format_error("svm model: no machines");
  if (kind == SvmKind::kClassifier && labels.size() * (labels.size() - 1) / 2 != machines.size()) {
    throw format_error("svm model: machine count does not match labels");
  }
  if (kind == SvmKind::kRegressor && machines.size() != 1) throw format_error("svm model: regressor needs one machine");
  const double slack = 1e-12 * c;
  for (const BinaryMachine& m : machines) {
    if (m.support_vectors.size() != m.coef.size()) throw format_error("svm model: coefficient count mismatch");
    for (const auto& sv : m.support_vectors) {
      if (sv.size() != dim()) throw format_error("svm model: support vector dimension mismatch");
    }
    for (double a : m.coef) {
      const bool ok = kind == SvmKind::kClassifier ? std::abs(a) <= c + slack : (a >= -c - slack && a <= c + slack);
      if (!ok) throw format_error("svm model: coefficient outside box");
    }
  }
}

namespace {

void standardization(const Matrix& x, std::vector<double>& mean, std::vector<double>& scale) {
  const std::size_t d = x.front().size();
  mean.assign(d, 0.0);
  scale.assign(d, 0.0);
  for (const auto& row : x) {
    for (std::size_t k = 0; k < d; ++k) mean[k] += row[k];
  }
  for (double& m : mean) m /= static_cast<double>(x.size());
  for (const auto& row : x) {
    for (std::size_t k = 0; k < d; ++k) scale[k] += (row[k] - mean[k]) * (row[k] - mean[k]);
  }
  for (double& s : scale) {
    s = std::sqrt(s / static_cast<double>(x.size()));
    if (!(s > 1e-12)) s = 1.0;  // constant feature: centre only
  }
}

SvmModel base_model(const Matrix& x, const SvmParams& params, SvmKind kind) {
  SvmModel model;
  model.kind = kind;
  model.c = params.c;
  model.epsilon = kind == SvmKind::kRegressor ? params.epsilon : 0.0;
  standardization(x, model.mean, model.scale);
  model.gamma = params.gamma > 0.0 ? params.gamma : 1.0 / static_cast<double>(model.dim());
  model.features = params.features;
  if (!model.features.empty() && model.features.size() != model.dim()) {
    throw invalid_argument("svm: feature subset size does not match sample dimension");
  }
  return model;
}

}  // namespace

SvmModel train_svc(const Matrix& x, const std::vector<int>& labels, const SvmParams& params) {
  check_matrix(x, labels.size(), "train_svc");
  if (!(params.c > 0.0)) throw invalid_argument("train_svc: C must be positive");
  const std::set<int> distinct(labels.begin(), labels.end());
  if (distinct.size() < 2) throw invalid_argument("train_svc: need at least two classes");
  SvmModel model = base_model(x, params, SvmKind::kClassifier);
  model.labels.assign(distinct.begin(), distinct.end());
  Matrix z(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) z[i] = model.standardize(x[i]);

  for (std::size_t a = 0; a < model.labels.size(); ++a) {
    for (std::size_t b = a + 1; b < model.labels.size(); ++b) {
      BinaryMachine m;
      m.positive = model.labels[a];
      m.negative = model.labels[b];
      Matrix sub;
      std::vector<int> y, rows;
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (labels[i] == m.positive || labels[i] == m.negative) {
          sub.push_back(z[i]);
          y.push_back(labels[i] == m.positive ? 1 : -1);
          rows.push_back(static_cast<int>(i));
        }
      }
      const SmoSolution s = solve_svc(sub, y, params.c, model.gamma, params.smo);
      if (!s.converged) throw degenerate("train_svc: SMO did not converge");
      for (std::size_t i = 0; i < sub.size(); ++i) {
        if (s.alpha[i] > 0.0) {
          m.support_vectors.push_back(sub[i]);
          m.coef.push_back(s.alpha[i] * y[i]);
          m.sv_index.push_back(rows[i]);
        }
      }
      m.bias = s.bias;
      m.iterations = s.iterations;
      model.machines.push_back(std::move(m));
    }
  }
  return model;
}

SvmModel train_svr(const Matrix& x, const std::vector<double>& targets, const SvmParams& params) {
  check_matrix(x, targets.size(), "train_svr");
  SvmModel model = base_model(x, params, SvmKind::kRegressor);
  Matrix z(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) z[i] = model.standardize(x[i]);
  const SmoSolution s = solve_svr(z, targets, params.c, model.gamma, params.epsilon, params.smo);
  if (!s.converged) throw degenerate("train_svr: SMO did not converge");
  BinaryMachine m;
  const std::size_t n = z.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double coef = s.alpha[i] - s.alpha[n + i];
    if (coef != 0.0) {
      m.support_vectors.push_back(z[i]);
      m.coef.push_back(coef);
      m.sv_index.push_back(static_cast<int>(i));
    }
  }
  m.bias = s.bias;
  m.iterations = s.iterations;
  model.machines.push_back(std::move(m));
  return model;
}

std::vector<double> decision_values(const SvmModel& model, std::span<const double> x) {
  const std::vector<double> z = model.standardize(x);
  std::vector<double> out;
  out.reserve(model.machines.size());
  for (const BinaryMachine& m : model.machines) {
    double f = m.bias;
    for (std::size_t k = 0; k < m.coef.size(); ++k) f += m.coef[k] * rbf_kernel(m.support_vectors[k], z, model.gamma);
    out.push_back(f);
  }
  return out;
}

double predict(const SvmModel& model, std::span<const double> x) {
  const std::vector<double> dv = decision_values(model, x);
  if (model.kind == SvmKind::kRegressor) return dv.front();
  std::vector<int> votes(model.labels.size(), 0);
  std::size_t k = 0;
  for (std::size_t a = 0; a < model.labels.size(); ++a) {
    for (std::size_t b = a + 1; b < model.labels.size(); ++b, ++k) ++votes[dv[k] > 0.0 ? a : b];
  }
  // max_element returns the first maximum, i.e. the smaller label.
  return model.labels[static_cast<std::size_t>(std::max_element(votes.begin(), votes.end()) - votes.begin())];
}

json to_json(const SvmModel& model) {
  json machines = json::array();
  for (const BinaryMachine& m : model.machines) {
    machines.push_back({{"positive", m.positive},
                        {"negative", m.negative},
                        {"support_vectors", m.support_vectors},
                        {"coef", m.coef},
                        {"sv_index", m.sv_index},
                        {"bias", m.bias},
                        {"iterations", m.iterations}});
  }
  return {{"format", "prolif-svm"},
          {"version", 1},
          {"kind", model.kind == SvmKind::kClassifier ? "classifier" : "regressor"},
          {"gamma", model.gamma},
          {"C", model.c},
          {"epsilon", model.epsilon},
          {"features", model.features},
          {"mean", model.mean},
          {"scale", model.scale},
          {"labels", model.labels},
          {"machines", machines}};
}

SvmModel svm_model_from_json(const json& j) {
  SvmModel model;
  try {
    if (j.at("format") != "prolif-svm") throw format_error("svm model: unexpected format tag");
    if (j.at("version") != 1) throw format_error("svm model: unsupported version");
    const std::string kind = j.at("kind");
    if (kind == "classifier") {
      model.kind = SvmKind::kClassifier;
    } else if (kind == "regressor") {
      model.kind = SvmKind::kRegressor;
    } else {
      throw format_error("svm model: unknown kind " + kind);
    }
    model.gamma = j.at("gamma");
    model.c = j.at("C");
    model.epsilon = j.at("epsilon");
    model.features = j.at("features").get<std::vector<int>>();
    model.mean = j.at("mean").get<std::vector<double>>();
    model.scale = j.at("scale").get<std::vector<double>>();
    model.labels = j.at("labels").get<std::vector<int>>();
    for (const auto& jm : j.at("machines")) {
      BinaryMachine m;
      m.positive = jm.at("positive");
      m.negative = jm.at("negative");
      m.support_vectors = jm.at("support_vectors").get<Matrix>();
      m.coef = jm.at("coef").get<std::vector<double>>();
      m.sv_index = jm.value("sv_index", std::vector<int>{});
      m.bias = jm.at("bias");
      m.iterations = jm.value("iterations", 0L);
      model.machines.push_back(std::move(m));
    }
  } catch (const json::exception& e) {
    throw format_error(std::string("svm model: ") + e.what());
  }
  model.validate();
  return model;
}

void save_svm_model(const std::filesystem::path& path, const SvmModel& model) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path.string());
  out << to_json(model).dump(1) << '\n';
}

SvmModel load_svm_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw format_error(std::string("svm model: ") + e.what());
  }
  return svm_model_from_json(j);
}

}  // namespace prolif
