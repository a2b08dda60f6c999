#include <algorithm>
#include <cmath>
#include <functional>

#include "doctest.h"
#include "prolif/error.hpp"
#include "prolif/metrics.hpp"
#include "prolif/rng.hpp"
#include "support.hpp"

using namespace prolif;
using prolif::test::TempDir;

namespace {

// Maximum-cardinality matching by exhaustive search.
int optimal_tp(const std::vector<Point>& d, const std::vector<Point>& t, double r) {
  std::vector<bool> used(t.size(), false);
  std::function<int(std::size_t)> go = [&](std::size_t i) -> int {
    if (i == d.size()) return 0;
    int best = go(i + 1);
    for (std::size_t j = 0; j < t.size(); ++j) {
      if (used[j] || std::hypot(d[i].x - t[j].x, d[i].y - t[j].y) > r) continue;
      used[j] = true;
      best = std::max(best, 1 + go(i + 1));
      used[j] = false;
    }
    return best;
  };
  return go(0);
}

double kappa_oracle(const std::vector<int>& p, const std::vector<int>& l, int n) {
  std::vector<std::vector<double>> o(std::size_t(n), std::vector<double>(std::size_t(n), 0.0));
  std::vector<double> rp(std::size_t(n), 0.0), rl(std::size_t(n), 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    o[std::size_t(p[i] - 1)][std::size_t(l[i] - 1)] += 1;
    rp[std::size_t(p[i] - 1)] += 1;
    rl[std::size_t(l[i] - 1)] += 1;
  }
  double num = 0, den = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double w = double((i - j) * (i - j)) / double((n - 1) * (n - 1));
      num += w * o[std::size_t(i)][std::size_t(j)];
      den += w * rp[std::size_t(i)] * rl[std::size_t(j)] / double(p.size());
    }
  }
  return 1.0 - num / den;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = double(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i] / n;
    mb += b[i] / n;
  }
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

// Rank = 1 + #smaller + (#equal - 1) / 2.
std::vector<double> rank_oracle(const std::vector<double>& x) {
  std::vector<double> r;
  for (double v : x) {
    double less = 0, eq = 0;
    for (double w : x) {
      less += w < v;
      eq += w == v;
    }
    r.push_back(1 + less + (eq - 1) / 2);
  }
  return r;
}

}  // namespace

TEST_CASE("match_detections examples") {
  const std::vector<Point> pts{{0, 0}, {100, 0}, {0, 100}};
  const MatchResult same = match_detections(std::span<const Point>(pts), pts, 5);
  CHECK(same.tp == 3);
  CHECK(same.fp == 0);
  CHECK(same.fn == 0);

  const std::vector<Point> det{{10, 0}};
  const std::vector<Point> truths{{0, 0}, {22, 0}};
  const MatchResult m = match_detections(std::span<const Point>(det), truths, 15);
  CHECK(m.tp == 1);
  CHECK(m.fn == 1);
  REQUIRE(m.pairs.size() == 1);
  CHECK(m.pairs[0] == std::pair{0, 0});

  const std::vector<Point> edge{{30, 0}};
  CHECK(match_detections(std::span<const Point>(edge), std::vector<Point>{{0, 0}}, 30).tp == 1);
  CHECK(match_detections(std::span<const Point>{}, truths, 30).fn == 2);
}

TEST_CASE("greedy matching reaches the optimal TP count on small random fixtures") {
  Rng rng(71);
  int mismatches = 0, fixtures = 0;
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<Point> d(std::size_t(rng.uniform_int(0, 8))), t(std::size_t(rng.uniform_int(0, 8)));
    for (auto& p : d) p = {rng.uniform(0, 300), rng.uniform(0, 300)};
    for (auto& p : t) p = {rng.uniform(0, 300), rng.uniform(0, 300)};
    const MatchResult m = match_detections(std::span<const Point>(d), t, 30);
    const int opt = optimal_tp(d, t, 30);
    CHECK(m.tp <= opt);
    CHECK(m.tp == int(m.pairs.size()));
    CHECK(m.tp + m.fp == int(d.size()));
    CHECK(m.tp + m.fn == int(t.size()));
    std::vector<int> dd, tt;
    for (auto [a, b] : m.pairs) {
      dd.push_back(a);
      tt.push_back(b);
      CHECK(std::hypot(d[std::size_t(a)].x - t[std::size_t(b)].x, d[std::size_t(a)].y - t[std::size_t(b)].y) <= 30);
    }
    std::sort(dd.begin(), dd.end());
    std::sort(tt.begin(), tt.end());
    CHECK(std::adjacent_find(dd.begin(), dd.end()) == dd.end());
    CHECK(std::adjacent_find(tt.begin(), tt.end()) == tt.end());
    mismatches += m.tp != opt;
    ++fixtures;
  }
  MESSAGE("greedy vs optimal TP mismatches: " << mismatches << "/" << fixtures);
  CHECK(mismatches == 0);
}

TEST_CASE("f1 examples and bounds") {
  const F1Score a = f1(2, 1, 1);
  CHECK(a.precision == doctest::Approx(2.0 / 3));
  CHECK(a.recall == doctest::Approx(2.0 / 3));
  CHECK(a.f1 == doctest::Approx(2.0 / 3));
  const F1Score z = f1(0, 0, 0);
  CHECK(z.precision == 0);
  CHECK(z.recall == 0);
  CHECK(z.f1 == 0);
  const F1Score p = f1(5, 0, 0);
  CHECK(p.f1 == 1.0);
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const F1Score s = f1(int(rng.uniform_int(0, 20)), int(rng.uniform_int(0, 20)), int(rng.uniform_int(0, 20)));
    CHECK(s.f1 <= 1.0);
    CHECK(s.f1 <= 2 * s.precision + 1e-12);
    CHECK(s.f1 <= 2 * s.recall + 1e-12);
  }
}

TEST_CASE("quadratic weighted kappa") {
  const std::vector<int> l{1, 2, 3, 2, 1};
  CHECK(quadratic_weighted_kappa(l, l) == doctest::Approx(1.0));
  const std::vector<int> p{1, 2, 3, 1, 2}, q{1, 2, 3, 2, 2};
  CHECK(quadratic_weighted_kappa(p, q) == doctest::Approx(kappa_oracle(p, q, 3)).epsilon(1e-12));
  const std::vector<int> constant(5, 2);
  CHECK(quadratic_weighted_kappa(constant, l) <= 0.0);

  const std::vector<int> ones(4, 1);
  CHECK(quadratic_weighted_kappa(ones, ones) == 1.0);
  // Zero expected disagreement needs both raters on one shared class, which
  // forces exact agreement; opposite constant raters are simply kappa 0.
  CHECK(quadratic_weighted_kappa(ones, std::vector<int>(4, 3)) == doctest::Approx(0.0));
  CHECK_THROWS_AS(quadratic_weighted_kappa(ones, std::vector<int>(3, 1)), Error);
  CHECK_THROWS_AS(quadratic_weighted_kappa(std::vector<int>{4}, std::vector<int>{1}), Error);

  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> a(std::size_t(rng.uniform_int(2, 40))), b(a.size());
    for (int& v : a) v = int(rng.uniform_int(1, 3));
    for (int& v : b) v = int(rng.uniform_int(1, 3));
    a[0] = 1;
    a[1] = 3;
    const double k = quadratic_weighted_kappa(a, b);
    CHECK(k == doctest::Approx(kappa_oracle(a, b, 3)).epsilon(1e-12));
    CHECK(k == doctest::Approx(quadratic_weighted_kappa(b, a)).epsilon(1e-12));
    CHECK(k >= -1.0);
    CHECK(k <= 1.0);
  }
}

TEST_CASE("spearman") {
  const std::vector<double> x{1, 2, 3, 4, 5};
  CHECK(spearman(x, std::vector<double>{2, 4, 8, 16, 32}) == doctest::Approx(1.0));
  CHECK(spearman(x, std::vector<double>{5, 3, 1, 0, -9}) == doctest::Approx(-1.0));
  const std::vector<double> a{1, 2, 2, 4}, b{10, 20, 30, 40};
  CHECK(average_ranks(a) == std::vector<double>{1, 2.5, 2.5, 4});
  CHECK(spearman(a, b) == doctest::Approx(pearson(rank_oracle(a), rank_oracle(b))).epsilon(1e-12));
  CHECK_THROWS_AS(spearman(a, std::vector<double>{3, 3, 3, 3}), Error);
  CHECK_THROWS_AS(spearman(std::vector<double>{1}, std::vector<double>{2}), Error);

  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> u(std::size_t(rng.uniform_int(3, 30))), v(u.size());
    for (double& e : u) e = std::round(rng.uniform(0, 10));
    for (double& e : v) e = rng.uniform(-5, 5);
    u[0] = -1;
    const double s = spearman(u, v);
    CHECK(s == doctest::Approx(pearson(rank_oracle(u), rank_oracle(v))).epsilon(1e-9));
    std::vector<double> tu;
    for (double e : u) tu.push_back(std::exp(e / 3) + 7);
    CHECK(spearman(tu, v) == doctest::Approx(s).epsilon(1e-12));
  }
}

TEST_CASE("scores CSV and metrics report") {
  TempDir dir;
  const std::vector<SlideScore> scores{{"a", 2, 0.5}, {"b", std::nullopt, -1.25}, {"c", 3, std::nullopt}};
  write_scores_csv(dir / "s.csv", scores);
  const auto back = read_scores_csv(dir / "s.csv");
  REQUIRE(back.size() == 3);
  CHECK(back[0].slide == "a");
  CHECK(back[0].score_class == 2);
  CHECK(back[1].score_class == std::nullopt);
  CHECK(back[1].score_continuous == -1.25);
  CHECK(back[2].score_continuous == std::nullopt);

  MetricsReport r;
  r.detection = f1(2, 1, 1);
  r.kappa = 0.5;
  r.spearman = 0.25;
  r.slides.push_back({"a", 2, 2, 0.5, 0.4});
  write_metrics_report(dir / "m.json", dir / "m.csv", r);
  const auto j = to_json(r);
  CHECK(j.at("f1").at("f1").get<double>() == doctest::Approx(2.0 / 3));
  CHECK(j.at("kappa").get<double>() == 0.5);
  CHECK(std::filesystem::exists(dir / "m.csv"));
}
