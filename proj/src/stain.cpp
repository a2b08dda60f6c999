#include "prolif/stain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "prolif/error.hpp"

namespace prolif {

namespace {

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

Vec3 unit(const Vec3& a) {
  const double n = norm(a);
  return {a[0] / n, a[1] / n, a[2] / n};
}

constexpr double kMinColumnAngleDeg = 1.0;
// Second eigenvalue below this fraction of the first: one stain only.
constexpr double kRankTolerance = 1e-3;

}  // namespace

double angle_degrees(const Vec3& a, const Vec3& b) {
  const double c = std::clamp(dot(a, b) / (norm(a) * norm(b)), -1.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

void StainMatrix::validate() const {
  for (const Vec3* col : {&h, &e}) {
    if (std::abs(norm(*col) - 1.0) > 1e-6) throw invalid_argument("stain matrix: column is not unit norm");
    for (double v : *col) {
      if (!(v >= 0.0)) throw invalid_argument("stain matrix: negative component");
    }
  }
  if (angle_degrees(h, e) < kMinColumnAngleDeg) throw invalid_argument("stain matrix: columns are parallel");
}

void StainProfile::validate() const {
  matrix.validate();
  if (!(c99[0] > 0.0) || !(c99[1] > 0.0)) throw invalid_argument("stain profile: c99 must be positive");
  if (!(i0 > 0.0)) throw invalid_argument("stain profile: i0 must be positive");
}

StainMatrix default_he_matrix() {
  return {unit({0.650, 0.704, 0.286}), unit({0.072, 0.990, 0.105})};
}

std::vector<Od> rgb_to_od(const Pixmap& rgb, double i0) {
  if (rgb.channels() != 3) throw invalid_argument("rgb_to_od: expected RGB input");
  if (!(i0 > 0.0)) throw invalid_argument("rgb_to_od: i0 must be positive");
  std::array<double, 256> table{};
  for (int v = 0; v < 256; ++v) table[v] = -std::log10(std::max(v, 1) / i0);
  std::vector<Od> od(rgb.pixel_count());
  const auto bytes = rgb.bytes();
  for (std::size_t i = 0; i < od.size(); ++i) {
    od[i] = {table[bytes[3 * i]], table[bytes[3 * i + 1]], table[bytes[3 * i + 2]]};
  }
  return od;
}

SymEigen3 symmetric_eigen3(const std::array<Vec3, 3>& m) {
  std::array<Vec3, 3> a = m;
  std::array<Vec3, 3> v{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};  // columns are eigenvectors
  for (int sweep = 0; sweep < 64; ++sweep) {
    const double off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
    if (off < 1e-300) break;
    for (int p = 0; p < 2; ++p) {
      for (int q = p + 1; q < 3; ++q) {
        if (a[p][q] == 0.0) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < 3; ++k) {  // A <- A J
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (int k = 0; k < 3; ++k) {  // A <- J^T A
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        for (int k = 0; k < 3; ++k) {
          const double vkp = v[k][p], vkq = v[k][q];
          v[k][p] = c * vkp - s * vkq;
          v[k][q] = s * vkp + c * vkq;
        }
      }
    }
  }
  std::array<int, 3> order{0, 1, 2};
  std::sort(order.begin(), order.end(), [&](int i, int j) { return a[i][i] > a[j][j]; });
  SymEigen3 out;
  for (int k = 0; k < 3; ++k) {
    const int src = order[k];
    out.values[k] = a[src][src];
    out.vectors[k] = {v[0][src], v[1][src], v[2][src]};
  }
  return out;
}

double percentile(std::vector<double> values, double pct) {
  if (values.empty()) throw invalid_argument("percentile of empty sample");
  const double rank = std::clamp(pct, 0.0, 100.0) / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const double frac = rank - static_cast<double>(lo);
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(lo), values.end());
  const double v_lo = values[lo];
  if (frac == 0.0 || lo + 1 >= values.size()) return v_lo;
  const double v_hi = *std::min_element(values.begin() + static_cast<std::ptrdiff_t>(lo) + 1, values.end());
  return v_lo + frac * (v_hi - v_lo);
}

ColorTable color_table(const Pixmap& rgb) {
  if (rgb.channels() != 3) throw invalid_argument("color_table: expected RGB input");
  ColorTable t;
  t.index.resize(rgb.pixel_count());
  // Open addressing on the packed 24-bit color; slot value is entry + 1.
  std::vector<std::uint32_t> keys(1u << 12), slots(1u << 12, 0);
  std::size_t mask = keys.size() - 1;
  auto hash = [](std::uint32_t k) { return static_cast<std::size_t>((k * 0x9E3779B1u) >> 8); };
  const auto bytes = rgb.bytes();
  for (std::size_t i = 0; i < t.index.size(); ++i) {
    const std::uint32_t key = static_cast<std::uint32_t>(bytes[3 * i]) << 16 |
                              static_cast<std::uint32_t>(bytes[3 * i + 1]) << 8 | bytes[3 * i + 2];
    std::size_t h = hash(key) & mask;
    while (slots[h] != 0 && keys[h] != key) h = (h + 1) & mask;
    if (slots[h] == 0) {
      t.colors.push_back({bytes[3 * i], bytes[3 * i + 1], bytes[3 * i + 2]});
      t.counts.push_back(0);
      keys[h] = key;
      slots[h] = static_cast<std::uint32_t>(t.colors.size());
      if (2 * t.colors.size() > keys.size()) {
        std::vector<std::uint32_t> nk(keys.size() * 2), ns(keys.size() * 2, 0);
        mask = nk.size() - 1;
        for (std::size_t s = 0; s < keys.size(); ++s) {
          if (slots[s] == 0) continue;
          std::size_t g = hash(keys[s]) & mask;
          while (ns[g] != 0) g = (g + 1) & mask;
          nk[g] = keys[s];
          ns[g] = slots[s];
        }
        keys.swap(nk);
        slots.swap(ns);
        h = hash(key) & mask;
        while (keys[h] != key || slots[h] == 0) h = (h + 1) & mask;
      }
    }
    const std::uint32_t entry = slots[h] - 1;
    ++t.counts[entry];
    t.index[i] = entry;
  }
  return t;
}

std::vector<Od> colors_to_od(std::span<const Rgb> colors, double i0) {
  if (!(i0 > 0.0)) throw invalid_argument("colors_to_od: i0 must be positive");
  std::array<double, 256> table{};
  for (int v = 0; v < 256; ++v) table[v] = -std::log10(std::max(v, 1) / i0);
  std::vector<Od> od(colors.size());
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = {table[colors[i].r], table[colors[i].g], table[colors[i].b]};
  return od;
}

double weighted_percentile(std::span<const double> values, std::span<const std::uint32_t> weights, double pct) {
  if (values.size() != weights.size()) throw invalid_argument("weighted_percentile: size mismatch");
  std::vector<std::size_t> order;
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (weights[i] == 0) continue;
    order.push_back(i);
    total += weights[i];
  }
  if (total == 0) throw invalid_argument("percentile of empty sample");
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  const double rank = std::clamp(pct, 0.0, 100.0) / 100.0 * static_cast<double>(total - 1);
  const auto lo = static_cast<std::uint64_t>(std::floor(rank));
  const double frac = rank - static_cast<double>(lo);
  // k-th order statistic (0-based) of the expanded sample.
  std::size_t pos = 0;
  std::uint64_t below = 0;  // expanded samples before order[pos]
  auto stat = [&](std::uint64_t k) {
    while (below + weights[order[pos]] <= k) below += weights[order[pos++]];
    return values[order[pos]];
  };
  const double v_lo = stat(lo);
  if (frac == 0.0 || lo + 1 >= total) return v_lo;
  return v_lo + frac * (stat(lo + 1) - v_lo);
}

StainMatrix estimate_stain_matrix(std::span<const Od> od, const MacenkoParams& params) {
  const std::vector<std::uint32_t> ones(od.size(), 1);
  return estimate_stain_matrix(od, ones, params);
}

StainMatrix estimate_stain_matrix(std::span<const Od> od, std::span<const std::uint32_t> weights,
                                  const MacenkoParams& params) {
  if (od.size() != weights.size()) throw invalid_argument("estimate_stain_matrix: size mismatch");
  const double beta2 = params.beta < 0.0 ? -1.0 : params.beta * params.beta;
  auto tissue = [&](std::size_t i) { return weights[i] > 0 && dot(od[i], od[i]) > beta2; };
  std::uint64_t n = 0;
  Vec3 mean{};
  for (std::size_t i = 0; i < od.size(); ++i) {
    if (!tissue(i)) continue;
    n += weights[i];
    for (int c = 0; c < 3; ++c) mean[c] += weights[i] * od[i][c];
  }
  if (n < std::max<std::uint64_t>(params.min_pixels, 2)) {
    throw degenerate("too few pixels above beta for stain estimation");
  }
  for (double& m : mean) m /= static_cast<double>(n);
  std::array<Vec3, 3> cov{};
  for (std::size_t i = 0; i < od.size(); ++i) {
    if (!tissue(i)) continue;
    const Vec3 d{od[i][0] - mean[0], od[i][1] - mean[1], od[i][2] - mean[2]};
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) cov[r][c] += weights[i] * d[r] * d[c];
    }
  }
  for (auto& row : cov) {
    for (double& x : row) x /= static_cast<double>(n - 1);
  }

  const SymEigen3 eig = symmetric_eigen3(cov);
  if (!(eig.values[0] > 0.0) || eig.values[1] < kRankTolerance * eig.values[0]) {
    throw degenerate("degenerate stain: OD covariance has rank < 2");
  }
  Vec3 v1 = eig.vectors[0];
  Vec3 v2 = eig.vectors[1];
  if (v1[0] + v1[1] + v1[2] < 0) v1 = {-v1[0], -v1[1], -v1[2]};
  if (v2[0] + v2[1] + v2[2] < 0) v2 = {-v2[0], -v2[1], -v2[2]};

  std::vector<double> phi(od.size(), 0.0);
  std::vector<std::uint32_t> w(od.size(), 0);
  for (std::size_t i = 0; i < od.size(); ++i) {
    if (!tissue(i)) continue;
    phi[i] = std::atan2(dot(od[i], v2), dot(od[i], v1));
    w[i] = weights[i];
  }
  double phi_min, phi_max;
  if (std::all_of(w.begin(), w.end(), [](std::uint32_t x) { return x <= 1; })) {
    std::vector<double> sample;
    sample.reserve(n);
    for (std::size_t i = 0; i < od.size(); ++i) {
      if (w[i] == 1) sample.push_back(phi[i]);
    }
    phi_min = percentile(sample, params.alpha);
    phi_max = percentile(std::move(sample), 100.0 - params.alpha);
  } else {
    phi_min = weighted_percentile(phi, w, params.alpha);
    phi_max = weighted_percentile(phi, w, 100.0 - params.alpha);
  }

  auto direction = [&](double angle) {
    Vec3 v{};
    for (int c = 0; c < 3; ++c) v[c] = std::cos(angle) * v1[c] + std::sin(angle) * v2[c];
    if (v[0] + v[1] + v[2] < 0) v = {-v[0], -v[1], -v[2]};
    for (double& x : v) x = std::max(x, 0.0);
    if (!(norm(v) > 0.0)) throw degenerate("degenerate stain: extreme direction vanished");
    return unit(v);
  };
  const Vec3 a = direction(phi_min);
  const Vec3 b = direction(phi_max);
  if (angle_degrees(a, b) < kMinColumnAngleDeg) throw degenerate("degenerate stain: stain vectors are parallel");
  return a[2] >= b[2] ? StainMatrix{a, b} : StainMatrix{b, a};
}

std::vector<Conc> compute_concentrations(std::span<const Od> od, const StainMatrix& m) {
  // Normal equations of the 3x2 system: (S^T S) C = S^T OD.
  const double g00 = dot(m.h, m.h), g01 = dot(m.h, m.e), g11 = dot(m.e, m.e);
  const double det = g00 * g11 - g01 * g01;
  if (!(std::abs(det) > 1e-12)) throw invalid_argument("compute_concentrations: singular stain matrix");
  const double i00 = g11 / det, i01 = -g01 / det, i11 = g00 / det;
  std::vector<Conc> out(od.size());
  for (std::size_t i = 0; i < od.size(); ++i) {
    const double bh = dot(m.h, od[i]);
    const double be = dot(m.e, od[i]);
    out[i] = {std::max(0.0, i00 * bh + i01 * be), std::max(0.0, i01 * bh + i11 * be)};
  }
  return out;
}

namespace {

// Profile of the image behind `table`; `conc` receives per-color concentrations.
StainProfile profile_from_table(const ColorTable& table, std::span<const Od> od, const MacenkoParams& params,
                                double i0, std::vector<Conc>& conc) {
  StainProfile profile;
  profile.i0 = i0;
  profile.matrix = estimate_stain_matrix(od, table.counts, params);
  conc = compute_concentrations(od, profile.matrix);
  for (int s = 0; s < 2; ++s) {
    std::vector<double> channel(conc.size());
    for (std::size_t i = 0; i < conc.size(); ++i) channel[i] = conc[i][s];
    profile.c99[s] = weighted_percentile(channel, table.counts, 99.0);
    if (!(profile.c99[s] > 0.0)) throw degenerate("degenerate stain: zero reference concentration");
  }
  return profile;
}

}  // namespace

StainProfile estimate_profile(const Pixmap& rgb, const MacenkoParams& params, double i0) {
  const ColorTable table = color_table(rgb);
  std::vector<Conc> conc;
  return profile_from_table(table, colors_to_od(table.colors, i0), params, i0, conc);
}

Pixmap render_concentrations(std::span<const Conc> conc, int width, int height, const StainMatrix& matrix,
                             double i0) {
  if (conc.size() != static_cast<std::size_t>(width) * height) {
    throw invalid_argument("render_concentrations: size mismatch");
  }
  Pixmap out(width, height, 3);
  auto bytes = out.bytes();
  for (std::size_t i = 0; i < conc.size(); ++i) {
    const Od od = matrix.apply(conc[i]);
    for (int c = 0; c < 3; ++c) {
      const double v = std::round(i0 * std::pow(10.0, -od[c]));
      bytes[3 * i + c] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
    }
  }
  return out;
}

NormalizeResult normalize_patch(const Pixmap& rgb, const std::optional<StainProfile>& source,
                                const StainProfile& target, const MacenkoParams& params) {
  target.validate();
  const ColorTable table = color_table(rgb);
  StainProfile src;
  std::vector<Conc> conc;
  if (source) {
    src = *source;
    src.validate();
    conc = compute_concentrations(colors_to_od(table.colors, src.i0), src.matrix);
  } else {
    try {
      src = profile_from_table(table, colors_to_od(table.colors, target.i0), params, target.i0, conc);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kDegenerate) throw;
      return {rgb, true, e.what()};
    }
  }
  const double scale_h = target.c99[0] / src.c99[0];
  const double scale_e = target.c99[1] / src.c99[1];
  for (Conc& c : conc) {
    c[0] *= scale_h;
    c[1] *= scale_e;
  }
  const Pixmap palette =
      render_concentrations(conc, static_cast<int>(conc.size()), 1, target.matrix, target.i0);
  Pixmap out(rgb.width(), rgb.height(), 3);
  auto dst = out.bytes();
  const auto pal = palette.bytes();
  for (std::size_t i = 0; i < table.index.size(); ++i) {
    std::copy_n(pal.data() + 3 * static_cast<std::size_t>(table.index[i]), 3, dst.data() + 3 * i);
  }
  return {std::move(out), false, {}};
}

nlohmann::json to_json(const StainProfile& p) {
  nlohmann::json matrix = nlohmann::json::array();
  for (int c = 0; c < 3; ++c) matrix.push_back({p.matrix.h[c], p.matrix.e[c]});
  return {{"stain_matrix", matrix}, {"c99", {p.c99[0], p.c99[1]}}, {"i0", p.i0}};
}

StainProfile stain_profile_from_json(const nlohmann::json& doc) {
  StainProfile p;
  try {
    const auto& m = doc.at("stain_matrix");
    if (m.size() != 3) throw format_error("stain profile: stain_matrix must be 3x2");
    for (int c = 0; c < 3; ++c) {
      if (m[c].size() != 2) throw format_error("stain profile: stain_matrix must be 3x2");
      p.matrix.h[c] = m[c][0].get<double>();
      p.matrix.e[c] = m[c][1].get<double>();
    }
    p.c99 = {doc.at("c99").at(0).get<double>(), doc.at("c99").at(1).get<double>()};
    p.i0 = doc.at("i0").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw format_error(std::string("stain profile: ") + e.what());
  }
  p.validate();
  return p;
}

StainProfile load_stain_profile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open stain profile: " + path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw format_error("stain profile: " + std::string(e.what()));
  }
  return stain_profile_from_json(doc);
}

void save_stain_profile(const std::string& path, const StainProfile& profile) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write stain profile: " + path);
  out << to_json(profile).dump(2) << '\n';
}

}  // namespace prolif
