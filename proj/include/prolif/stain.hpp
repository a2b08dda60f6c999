#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "prolif/image.hpp"

namespace prolif {

using Vec3 = std::array<double, 3>;
using Od = Vec3;                        // optical density per RGB channel
using Conc = std::array<double, 2>;     // (hematoxylin, eosin) concentration

// Two unit OD-space stain vectors; hematoxylin first.
struct StainMatrix {
  Vec3 h{};
  Vec3 e{};

  Od apply(const Conc& c) const {
    return {h[0] * c[0] + e[0] * c[1], h[1] * c[0] + e[1] * c[1], h[2] * c[0] + e[2] * c[1]};
  }
  // Throws if a column is not unit-norm and non-negative or the columns are
  // closer than 1 degree.
  void validate() const;
};

struct StainProfile {
  StainMatrix matrix;
  Conc c99{1.0, 1.0};  // 99th-percentile concentration per stain
  double i0 = 255.0;

  void validate() const;
};

// Ruifrok & Johnston H&E basis; used when per-patch estimation degenerates.
StainMatrix default_he_matrix();

double angle_degrees(const Vec3& a, const Vec3& b);

// OD_c = -log10(max(I_c, 1) / i0).
std::vector<Od> rgb_to_od(const Pixmap& rgb, double i0 = 255.0);

struct MacenkoParams {
  double alpha = 1.0;   // robust angle percentile
  double beta = 0.15;   // OD magnitude below which pixels count as transparent
  std::size_t min_pixels = 100;
};

// Distinct colors of an RGB image in first-appearance order, with their
// multiplicities and a per-pixel index into `colors`. Stain math depends on
// color alone, so it can run once per entry instead of once per pixel.
struct ColorTable {
  std::vector<Rgb> colors;
  std::vector<std::uint32_t> counts;
  std::vector<std::uint32_t> index;
};
ColorTable color_table(const Pixmap& rgb);
std::vector<Od> colors_to_od(std::span<const Rgb> colors, double i0 = 255.0);

// Throws ErrorKind::kDegenerate for too few tissue pixels or a single stain.
StainMatrix estimate_stain_matrix(std::span<const Od> od, const MacenkoParams& params = {});
// Sample i stands for weights[i] identical pixels; same result as the
// unweighted estimate on the expanded sample.
StainMatrix estimate_stain_matrix(std::span<const Od> od, std::span<const std::uint32_t> weights,
                                  const MacenkoParams& params = {});

// Per-pixel least squares against the stain basis, clamped to >= 0.
std::vector<Conc> compute_concentrations(std::span<const Od> od, const StainMatrix& matrix);

StainProfile estimate_profile(const Pixmap& rgb, const MacenkoParams& params = {}, double i0 = 255.0);

// Beer-Lambert forward model, rounded and clamped to [0, 255].
Pixmap render_concentrations(std::span<const Conc> conc, int width, int height, const StainMatrix& matrix,
                             double i0 = 255.0);

struct NormalizeResult {
  Pixmap image;
  bool fallback = false;  // source estimation degenerated; image is the unmodified input
  std::string warning;
};

NormalizeResult normalize_patch(const Pixmap& rgb, const std::optional<StainProfile>& source,
                                const StainProfile& target, const MacenkoParams& params = {});

// Eigen-decomposition of a symmetric 3x3 matrix by cyclic Jacobi rotations.
// Eigenvalues are returned in descending order; vectors[k] pairs values[k].
struct SymEigen3 {
  Vec3 values{};
  std::array<Vec3, 3> vectors{};
};
SymEigen3 symmetric_eigen3(const std::array<Vec3, 3>& m);

// Linear-interpolated percentile (0..100) of an unsorted sample.
double percentile(std::vector<double> values, double pct);
// Percentile of the sample in which values[i] occurs weights[i] times.
double weighted_percentile(std::span<const double> values, std::span<const std::uint32_t> weights, double pct);

nlohmann::json to_json(const StainProfile& profile);
StainProfile stain_profile_from_json(const nlohmann::json& doc);
StainProfile load_stain_profile(const std::string& path);
void save_stain_profile(const std::string& path, const StainProfile& profile);

}  // namespace prolif
