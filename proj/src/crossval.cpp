#include "prolif/crossval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

#include "prolif/error.hpp"
#include "prolif/metrics.hpp"
#include "prolif/rng.hpp"

namespace prolif {

std::vector<int> fold_assignment(std::size_t n, int folds, std::uint64_t seed) {
  if (folds < 2) throw invalid_argument("cross validation needs at least 2 folds");
  if (n < static_cast<std::size_t>(folds)) throw invalid_argument("cross validation: fewer samples than folds");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<int> fold(n);
  for (std::size_t pos = 0; pos < n; ++pos) fold[order[pos]] = static_cast<int>(pos % static_cast<std::size_t>(folds));
  return fold;
}

namespace {

double safe_metric(const Metric& metric, std::span<const double> p, std::span<const double> t) {
  try {
    return metric(p, t);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kDegenerate) throw;
    return std::numeric_limits<double>::quiet_NaN();
  }
}

}  // namespace

CvResult cross_validate(const Matrix& x, const std::vector<double>& y, int folds, std::uint64_t seed,
                        const Trainer& trainer, const Metric& metric, int jobs) {
  if (x.size() != y.size()) throw invalid_argument("cross validation: sample/target count mismatch");
  const std::vector<int> fold = fold_assignment(x.size(), folds, seed);
  CvResult result;
  result.fold_scores.assign(static_cast<std::size_t>(folds), 0.0);
  result.out_of_fold.assign(x.size(), 0.0);

  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(folds));
  auto run_fold = [&](int f) {
    try {
      Matrix tx;
      std::vector<double> ty;
      std::vector<std::size_t> held;
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (fold[i] == f) {
          held.push_back(i);
        } else {
          tx.push_back(x[i]);
          ty.push_back(y[i]);
        }
      }
      const Predictor predict = trainer(tx, ty);
      std::vector<double> p, t;
      for (std::size_t i : held) {
        result.out_of_fold[i] = predict(x[i]);
        p.push_back(result.out_of_fold[i]);
        t.push_back(y[i]);
      }
      result.fold_scores[static_cast<std::size_t>(f)] = safe_metric(metric, p, t);
    } catch (...) {
      errors[static_cast<std::size_t>(f)] = std::current_exception();
    }
  };
  const int workers = std::clamp(jobs, 1, folds);
  if (workers == 1) {
    for (int f = 0; f < folds; ++f) run_fold(f);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (int f = w; f < folds; f += workers) run_fold(f);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  double sum = 0.0;
  int defined = 0;
  for (double s : result.fold_scores) {
    if (std::isfinite(s)) sum += s, ++defined;
  }
  result.mean = defined > 0 ? sum / defined : std::numeric_limits<double>::quiet_NaN();
  result.pooled = safe_metric(metric, result.out_of_fold, y);
  return result;
}

namespace {

std::vector<int> to_classes(std::span<const double> v) {
  std::vector<int> out;
  out.reserve(v.size());
  for (double d : v) out.push_back(static_cast<int>(std::lround(d)));
  return out;
}

}  // namespace

double kappa_metric(std::span<const double> predicted, std::span<const double> truth) {
  const std::vector<int> p = to_classes(predicted), t = to_classes(truth);
  return quadratic_weighted_kappa(p, t, 3);
}

double spearman_metric(std::span<const double> predicted, std::span<const double> truth) {
  return spearman(predicted, truth);
}

double accuracy_metric(std::span<const double> predicted, std::span<const double> truth) {
  if (predicted.size() != truth.size() || predicted.empty()) throw invalid_argument("accuracy: bad lengths");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) hits += std::lround(predicted[i]) == std::lround(truth[i]);
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

Trainer svc_trainer(SvmParams params) {
  return [params](const Matrix& x, const std::vector<double>& y) -> Predictor {
    const std::vector<int> labels = to_classes(y);
    auto model = std::make_shared<SvmModel>(train_svc(x, labels, params));
    return [model](std::span<const double> v) { return predict(*model, v); };
  };
}

Trainer svr_trainer(SvmParams params) {
  return [params](const Matrix& x, const std::vector<double>& y) -> Predictor {
    auto model = std::make_shared<SvmModel>(train_svr(x, y, params));
    return [model](std::span<const double> v) { return predict(*model, v); };
  };
}

Matrix project_rows(const std::vector<FeatureVector21>& rows, std::span<const int> indices) {
  Matrix out;
  out.reserve(rows.size());
  for (const FeatureVector21& r : rows) out.push_back(select_features(r, indices));
  return out;
}

SearchResult feature_search(const std::vector<FeatureVector21>& rows, const std::vector<double>& y,
                            const std::vector<std::vector<int>>& candidates, const std::vector<double>& c_grid,
                            SvmKind kind, int folds, std::uint64_t seed, double epsilon, int jobs) {
  if (candidates.empty()) throw invalid_argument("feature search: no candidate feature sets");
  if (c_grid.empty()) throw invalid_argument("feature search: empty C grid");
  SearchResult best;
  best.score = -std::numeric_limits<double>::infinity();
  bool have = false;
  for (const std::vector<int>& indices : candidates) {
    const Matrix x = project_rows(rows, indices);
    for (double c : c_grid) {
      SvmParams params;
      params.c = c;
      params.epsilon = epsilon;
      params.features = indices;
      const Trainer trainer = kind == SvmKind::kClassifier ? svc_trainer(params) : svr_trainer(params);
      const Metric metric = kind == SvmKind::kClassifier ? Metric(kappa_metric) : Metric(spearman_metric);
      SearchEvaluation ev{indices, c, cross_validate(x, y, folds, seed, trainer, metric, jobs)};
      const double score = std::isfinite(ev.cv.pooled) ? ev.cv.pooled : -std::numeric_limits<double>::infinity();
      const bool better =
          !have || score > best.score ||
          (score == best.score &&
           std::tuple(indices.size(), c, indices) < std::tuple(best.indices.size(), best.c, best.indices));
      if (better) {
        best.indices = indices;
        best.c = c;
        best.score = score;
        have = true;
      }
      best.evaluations.push_back(std::move(ev));
    }
  }
  return best;
}

}  // namespace prolif
