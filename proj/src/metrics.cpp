#include "prolif/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <tuple>

#include "prolif/error.hpp"

namespace prolif {

using nlohmann::json;

MatchResult match_detections(std::span<const Point> detections, std::span<const Point> truths, double radius) {
  if (!(radius > 0.0)) throw invalid_argument("match radius must be positive");
  std::vector<std::tuple<double, int, int>> candidates;
  const double r2 = radius * radius;
  for (std::size_t d = 0; d < detections.size(); ++d) {
    for (std::size_t t = 0; t < truths.size(); ++t) {
      const double dx = detections[d].x - truths[t].x, dy = detections[d].y - truths[t].y;
      const double dist2 = dx * dx + dy * dy;
      if (dist2 <= r2) candidates.emplace_back(dist2, static_cast<int>(d), static_cast<int>(t));
    }
  }
  std::sort(candidates.begin(), candidates.end());
  std::vector<char> det_used(detections.size(), 0), truth_used(truths.size(), 0);
  MatchResult m;
  for (const auto& [dist2, d, t] : candidates) {
    if (det_used[d] || truth_used[t]) continue;
    det_used[d] = truth_used[t] = 1;
    m.pairs.emplace_back(d, t);
  }
  m.tp = static_cast<int>(m.pairs.size());
  m.fp = static_cast<int>(detections.size()) - m.tp;
  m.fn = static_cast<int>(truths.size()) - m.tp;
  return m;
}

MatchResult match_detections(std::span<const Detection> detections, std::span<const Point> truths, double radius) {
  std::vector<Point> pts;
  pts.reserve(detections.size());
  for (const Detection& d : detections) pts.push_back({d.x, d.y});
  return match_detections(std::span<const Point>(pts), truths, radius);
}

F1Score f1(int tp, int fp, int fn) {
  F1Score s;
  if (tp + fp > 0) s.precision = static_cast<double>(tp) / (tp + fp);
  if (tp + fn > 0) s.recall = static_cast<double>(tp) / (tp + fn);
  if (s.precision + s.recall > 0.0) s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

F1Score f1(const MatchResult& m) { return f1(m.tp, m.fp, m.fn); }

double quadratic_weighted_kappa(std::span<const int> preds, std::span<const int> labels, int n_classes) {
  if (preds.size() != labels.size()) throw invalid_argument("kappa: length mismatch");
  if (preds.empty()) throw invalid_argument("kappa: empty input");
  if (n_classes < 2) throw invalid_argument("kappa: need at least two classes");
  const auto n = static_cast<std::size_t>(n_classes);
  std::vector<double> observed(n * n, 0.0), hist_p(n, 0.0), hist_l(n, 0.0);
  for (std::size_t k = 0; k < preds.size(); ++k) {
    if (preds[k] < 1 || preds[k] > n_classes || labels[k] < 1 || labels[k] > n_classes) {
      throw invalid_argument("kappa: class outside 1.." + std::to_string(n_classes));
    }
    const auto i = static_cast<std::size_t>(preds[k] - 1), j = static_cast<std::size_t>(labels[k] - 1);
    observed[i * n + j] += 1.0;
    hist_p[i] += 1.0;
    hist_l[j] += 1.0;
  }
  const double total = static_cast<double>(preds.size());
  const double norm = static_cast<double>((n - 1) * (n - 1));
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double d = static_cast<double>(i) - static_cast<double>(j);
      const double w = d * d / norm;
      num += w * observed[i * n + j];
      den += w * hist_p[i] * hist_l[j] / total;
    }
  }
  if (den == 0.0) {
    if (num == 0.0) return 1.0;
    throw degenerate("kappa: degenerate marginals");
  }
  return 1.0 - num / den;
}

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw invalid_argument("spearman: length mismatch");
  if (x.size() < 2) throw invalid_argument("spearman: need at least two observations");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw invalid_argument("spearman: non-finite value");
  }
  const std::vector<double> rx = average_ranks(x), ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw degenerate("spearman: constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

void write_scores_csv(const std::filesystem::path& path, const std::vector<SlideScore>& scores) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path.string());
  out << "slide,score_class,score_continuous\n";
  char buf[64];
  for (const SlideScore& s : scores) {
    out << s.slide << ',';
    if (s.score_class) out << *s.score_class;
    out << ',';
    if (s.score_continuous) {
      std::snprintf(buf, sizeof buf, "%.17g", *s.score_continuous);
      out << buf;
    }
    out << '\n';
  }
}

std::vector<SlideScore> read_scores_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("slide,score_class,score_continuous", 0) != 0) {
    throw format_error(path.string() + ": expected header slide,score_class,score_continuous");
  }
  std::vector<SlideScore> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c1 = line.find(','), c2 = line.find(',', c1 == std::string::npos ? 0 : c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) throw format_error(path.string() + ": bad row " + line);
    SlideScore s;
    s.slide = line.substr(0, c1);
    const std::string a = line.substr(c1 + 1, c2 - c1 - 1), b = line.substr(c2 + 1);
    try {
      if (!a.empty()) s.score_class = std::stoi(a);
      if (!b.empty()) s.score_continuous = std::stod(b);
    } catch (const std::exception&) {
      throw format_error(path.string() + ": bad row " + line);
    }
    out.push_back(std::move(s));
  }
  return out;
}

json to_json(const MetricsReport& report) {
  return {{"f1", {{"p", report.detection.precision}, {"r", report.detection.recall}, {"f1", report.detection.f1}}},
          {"kappa", report.kappa},
          {"spearman", report.spearman}};
}

void write_metrics_report(const std::filesystem::path& json_path, const std::filesystem::path& csv_path,
                          const MetricsReport& report) {
  {
    std::ofstream out(json_path);
    if (!out) throw io_error("cannot write " + json_path.string());
    out << to_json(report).dump(1) << '\n';
  }
  std::ofstream csv(csv_path);
  if (!csv) throw io_error("cannot write " + csv_path.string());
  csv << "slide,predicted_class,true_class,predicted_continuous,true_continuous\n";
  char buf[128];
  for (const SlideEvaluation& s : report.slides) {
    std::snprintf(buf, sizeof buf, ",%d,%d,%.17g,%.17g\n", s.predicted_class, s.true_class, s.predicted_continuous,
                  s.true_continuous);
    csv << s.slide << buf;
  }
}

}  // namespace prolif
