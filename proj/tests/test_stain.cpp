#include <cmath>

#include "doctest.h"
#include "prolif/config.hpp"
#include "prolif/error.hpp"
#include "prolif/rng.hpp"
#include "prolif/stain.hpp"
#include "prolif/synth.hpp"

using namespace prolif;

namespace {

Vec3 unit(Vec3 v) {
  const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  return {v[0] / n, v[1] / n, v[2] / n};
}

// Perturbed H&E basis with H the bluer stain and the columns well apart.
StainMatrix random_basis(Rng& rng) {
  const StainMatrix base = default_he_matrix();
  StainMatrix m;
  do {
    for (int c = 0; c < 3; ++c) {
      m.h[c] = std::max(0.0, base.h[c] + rng.uniform(-0.15, 0.15));
      m.e[c] = std::max(0.0, base.e[c] + rng.uniform(-0.15, 0.15));
    }
    m.h = unit(m.h);
    m.e = unit(m.e);
  } while (m.h[2] < m.e[2] + 0.05 || angle_degrees(m.h, m.e) < 20.0);
  return m;
}

// A third of the pixels carry only hematoxylin, a third only eosin, the rest
// a mixture; one in ten is bare glass.
std::vector<Conc> concentration_field(Rng& rng, std::size_t n) {
  std::vector<Conc> c(n);
  for (auto& v : c) {
    const double u = rng.uniform();
    if (u < 0.1) {
      v = {0.0, 0.0};
    } else if (u < 0.4) {
      v = {rng.uniform(0.3, 1.2), 0.0};
    } else if (u < 0.7) {
      v = {0.0, rng.uniform(0.3, 1.0)};
    } else {
      v = {rng.uniform(0.1, 1.0), rng.uniform(0.1, 0.8)};
    }
  }
  return c;
}

std::vector<Od> stain_od(const StainMatrix& m, const std::vector<Conc>& c, double k = 1.0) {
  std::vector<Od> od;
  od.reserve(c.size());
  for (const Conc& v : c) od.push_back(m.apply({k * v[0], k * v[1]}));
  return od;
}

double worst_angle(const StainMatrix& a, const StainMatrix& b) {
  return std::max(angle_degrees(a.h, b.h), angle_degrees(a.e, b.e));
}

}  // namespace

TEST_CASE("rgb_to_od examples") {
  Pixmap img(3, 1, 3);
  img.set_rgb(0, 0, {255, 255, 255});
  img.set_rgb(1, 0, {25, 25, 25});
  img.set_rgb(2, 0, {0, 0, 0});
  const auto od = rgb_to_od(img);
  for (int c = 0; c < 3; ++c) {
    CHECK(od[0][c] == 0.0);
    CHECK(od[1][c] == doctest::Approx(1.0086).epsilon(1e-4));
    CHECK(od[2][c] == doctest::Approx(2.4065).epsilon(1e-4));
  }
  CHECK_THROWS_AS(rgb_to_od(Pixmap(1, 1, 1)), Error);
}

TEST_CASE("estimate_stain_matrix recovers random bases") {
  Rng rng(5);
  for (int trial = 0; trial < 25; ++trial) {
    const StainMatrix truth = random_basis(rng);
    const auto od = stain_od(truth, concentration_field(rng, 20000));
    const StainMatrix est = estimate_stain_matrix(od);
    CHECK(worst_angle(est, truth) <= 1.0);
    CHECK_NOTHROW(est.validate());
  }
}

TEST_CASE("estimate_stain_matrix recovers the basis of a rendered patch") {
  Rng rng(6);
  for (int trial = 0; trial < 5; ++trial) {
    AnnotatedPatchSpec spec;
    spec.count = 1;
    spec.side = 256;
    spec.stain = random_basis(rng);
    spec.render.tissue_h = 0.0;
    spec.seed = 60 + std::uint64_t(trial);
    const Pixmap img = generate_annotated_patches(spec).front().image;
    CHECK(worst_angle(estimate_profile(img).matrix, spec.stain) <= 1.0);
  }
}

TEST_CASE("estimate_stain_matrix degenerate inputs") {
  const std::vector<Od> white(5000, Od{0.0, 0.0, 0.0});
  try {
    estimate_stain_matrix(white);
    FAIL("expected degenerate");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kDegenerate);
  }

  Rng rng(1);
  std::vector<Conc> single(5000);
  for (auto& c : single) c = {rng.uniform(0.2, 1.5), 0.0};
  try {
    estimate_stain_matrix(stain_od(default_he_matrix(), single));
    FAIL("expected degenerate");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kDegenerate);
    CHECK(std::string(e.what()).find("degenerate stain") != std::string::npos);
  }
}

TEST_CASE("estimate_stain_matrix is scale invariant") {
  Rng rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    const StainMatrix truth = random_basis(rng);
    const auto field = concentration_field(rng, 10000);
    const StainMatrix ref = estimate_stain_matrix(stain_od(truth, field));
    for (double k : {0.6, 1.7, 3.0}) {
      CHECK(worst_angle(estimate_stain_matrix(stain_od(truth, field, k)), ref) < 1.0);
    }
  }
}

TEST_CASE("weighted estimate equals the unweighted estimate on the expanded sample") {
  Rng rng(10);
  const StainMatrix truth = random_basis(rng);
  const auto unique = stain_od(truth, concentration_field(rng, 3000));
  std::vector<std::uint32_t> weights(unique.size());
  std::vector<Od> expanded;
  for (std::size_t i = 0; i < unique.size(); ++i) {
    weights[i] = std::uint32_t(rng.uniform_int(1, 4));
    for (std::uint32_t k = 0; k < weights[i]; ++k) expanded.push_back(unique[i]);
  }
  const StainMatrix a = estimate_stain_matrix(unique, weights);
  const StainMatrix b = estimate_stain_matrix(expanded);
  CHECK(worst_angle(a, b) < 1e-6);
}

TEST_CASE("percentiles") {
  CHECK(percentile({4, 1, 3, 2}, 50) == doctest::Approx(2.5));
  CHECK(percentile({4, 1, 3, 2}, 0) == 1.0);
  CHECK(percentile({4, 1, 3, 2}, 100) == 4.0);
  const std::vector<double> v{1.0, 2.0, 7.0};
  const std::vector<std::uint32_t> w{1, 3, 2};
  for (double p : {0.0, 10.0, 33.0, 50.0, 90.0, 99.0, 100.0}) {
    CHECK(weighted_percentile(v, w, p) == doctest::Approx(percentile({1, 2, 2, 2, 7, 7}, p)));
  }
  CHECK_THROWS_AS(percentile({}, 50), Error);
}

TEST_CASE("compute_concentrations examples") {
  const StainMatrix m = default_he_matrix();
  const std::vector<Od> od{m.apply({1.0, 2.0}), Od{0, 0, 0}};
  const auto c = compute_concentrations(od, m);
  CHECK(c[0][0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(c[0][1] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(c[1][0] == 0.0);
  CHECK(c[1][1] == 0.0);

  Rng rng(12);
  std::vector<Conc> truth(2000);
  std::vector<Od> noisy;
  for (auto& t : truth) {
    t = {rng.uniform(0.0, 1.5), rng.uniform(0.0, 1.5)};
    Od o = m.apply(t);
    for (double& x : o) x += rng.normal(0.0, 0.01);
    noisy.push_back(o);
  }
  const auto got = compute_concentrations(noisy, m);
  // Least squares scales per-channel noise by 1/sin(angle between columns),
  // so 0.05 is only ~3 sigma here: a handful of the 4000 components may
  // exceed it. Require 99% within 0.05 and the RMS error the theory predicts.
  const double sin_t = std::sin(angle_degrees(m.h, m.e) * M_PI / 180.0);
  const double sigma = 0.01 / sin_t;
  std::size_t within = 0;
  double sq = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    for (int k = 0; k < 2; ++k) {
      const double err = std::abs(got[i][k] - truth[i][k]);
      within += err <= 0.05;
      sq += err * err;
      CHECK(err <= 6.0 * sigma);
    }
  }
  CHECK(double(within) / (2.0 * double(truth.size())) >= 0.99);
  CHECK(std::sqrt(sq / (2.0 * double(truth.size()))) <= 1.1 * sigma);
}

TEST_CASE("concentrations then reconstruction is a left inverse") {
  Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const StainMatrix m = random_basis(rng);
    const auto field = concentration_field(rng, 2000);
    const auto od = stain_od(m, field);
    const auto c = compute_concentrations(od, m);
    for (std::size_t i = 0; i < od.size(); ++i) {
      const Od back = m.apply(c[i]);
      for (int k = 0; k < 3; ++k) REQUIRE(std::abs(back[k] - od[i][k]) <= 1e-6);
    }
  }
}

TEST_CASE("normalize_patch: self target is near identity; white stays white") {
  AnnotatedPatchSpec spec;
  spec.count = 1;
  spec.side = 256;
  spec.render.tissue_h = 0.0;
  spec.seed = 77;
  Pixmap img = generate_annotated_patches(spec).front().image;
  img.set_rgb(0, 0, {255, 255, 255});
  const StainProfile self = estimate_profile(img);
  const NormalizeResult r = normalize_patch(img, std::nullopt, self);
  CHECK_FALSE(r.fallback);
  std::size_t close = 0;
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    bool ok = true;
    for (int c = 0; c < 3; ++c) ok = ok && std::abs(int(img.bytes()[3 * i + c]) - int(r.image.bytes()[3 * i + c])) <= 2;
    close += ok;
  }
  CHECK(double(close) / double(img.pixel_count()) >= 0.99);
  CHECK(r.image.rgb(0, 0) == Rgb{255, 255, 255});
}

TEST_CASE("normalize_patch: two stainings of one field converge to the target") {
  Rng rng(21);
  const int w = 200, h = 200;
  const auto field = concentration_field(rng, std::size_t(w) * h);
  const StainProfile target = reference_target_profile();
  for (int trial = 0; trial < 5; ++trial) {
    const Pixmap a = render_concentrations(field, w, h, random_basis(rng));
    const Pixmap b = render_concentrations(field, w, h, random_basis(rng));
    const Pixmap na = normalize_patch(a, std::nullopt, target).image;
    const Pixmap nb = normalize_patch(b, std::nullopt, target).image;
    double sum = 0.0;
    for (std::size_t i = 0; i < na.bytes().size(); ++i) sum += std::abs(int(na.bytes()[i]) - int(nb.bytes()[i]));
    CHECK(sum / double(na.bytes().size()) <= 5.0);
  }
}

TEST_CASE("normalize_patch falls back on a blank patch") {
  const Pixmap white = make_rgb(64, 64, {255, 255, 255});
  const NormalizeResult r = normalize_patch(white, std::nullopt, reference_target_profile());
  CHECK(r.fallback);
  CHECK_FALSE(r.warning.empty());
  CHECK(r.image == white);
}

TEST_CASE("color_table indexes every pixel") {
  AnnotatedPatchSpec spec;
  spec.count = 1;
  spec.side = 128;
  const Pixmap img = generate_annotated_patches(spec).front().image;
  const ColorTable t = color_table(img);
  REQUIRE(t.index.size() == img.pixel_count());
  std::vector<std::uint32_t> counts(t.colors.size(), 0);
  for (std::size_t i = 0; i < t.index.size(); ++i) {
    REQUIRE(t.colors[t.index[i]] == img.rgb(int(i % 128), int(i / 128)));
    ++counts[t.index[i]];
  }
  CHECK(counts == t.counts);
  CHECK(t.index[0] == 0);
}

TEST_CASE("symmetric_eigen3 diagonalizes") {
  const std::array<Vec3, 3> m{{{4, 1, 0.5}, {1, 3, 0.2}, {0.5, 0.2, 1}}};
  const SymEigen3 e = symmetric_eigen3(m);
  CHECK(e.values[0] >= e.values[1]);
  CHECK(e.values[1] >= e.values[2]);
  for (int k = 0; k < 3; ++k) {
    for (int r = 0; r < 3; ++r) {
      const double mv = m[r][0] * e.vectors[k][0] + m[r][1] * e.vectors[k][1] + m[r][2] * e.vectors[k][2];
      CHECK(mv == doctest::Approx(e.values[k] * e.vectors[k][r]).epsilon(1e-10));
    }
  }
}

TEST_CASE("checked-in stain fixtures match the code") {
  const StainProfile target = load_stain_profile(std::string(PROLIF_DATA_DIR) + "/target_stain_profile.json");
  const StainProfile ref = reference_target_profile();
  CHECK(target.matrix.h == ref.matrix.h);
  CHECK(target.matrix.e == ref.matrix.e);
  CHECK(target.c99 == ref.c99);
  CHECK(target.i0 == ref.i0);

  const StainProfile he = load_stain_profile(std::string(PROLIF_DATA_DIR) + "/default_he_stain.json");
  CHECK(he.matrix.h == default_he_matrix().h);
  CHECK(he.matrix.e == default_he_matrix().e);
}

TEST_CASE("stain profile JSON round trip and validation") {
  const StainProfile p = reference_target_profile();
  const StainProfile q = stain_profile_from_json(to_json(p));
  CHECK(q.matrix.h == p.matrix.h);
  CHECK(q.c99 == p.c99);
  auto bad = to_json(p);
  bad["c99"][0] = 0.0;
  CHECK_THROWS_AS(stain_profile_from_json(bad), Error);
  bad = to_json(p);
  bad["stain_matrix"].erase(0);
  CHECK_THROWS_AS(stain_profile_from_json(bad), Error);
}
