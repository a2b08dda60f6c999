#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "prolif/image.hpp"
#include "prolif/stain.hpp"

namespace prolif {

// Window geometry shared by training and fully-convolutional inference: the
// detector is trained on train_input squares but only the central
// valid_center square contributes to its decision.
struct DetectorGeometry {
  int train_input = 128;
  int valid_center = 64;
  int stride = 64;
  int receptive_field = 128;

  void validate() const;
  bool operator==(const DetectorGeometry&) const = default;
};

// Grid cell (i, j) scores the window centered at (ox + j*stride, oy + i*stride).
struct ScoreMap {
  int ox = 0;
  int oy = 0;
  int stride = 1;
  int rows = 0;
  int cols = 0;
  std::vector<double> probs;
  std::vector<std::uint8_t> valid;

  std::size_t index(int i, int j) const { return static_cast<std::size_t>(i) * cols + j; }
  double prob(int i, int j) const { return probs[index(i, j)]; }
  bool is_valid(int i, int j) const { return valid[index(i, j)] != 0; }
  int center_x(int j) const { return ox + j * stride; }
  int center_y(int i) const { return oy + i * stride; }
  int valid_count() const;

  bool operator==(const ScoreMap&) const = default;
};

// Cell (i, j) is valid iff its train_input window lies entirely inside the
// patch. Probabilities are zero-filled.
ScoreMap lview_valid_mask(const DetectorGeometry& geometry, int patch_w, int patch_h);

struct Detection {
  double x = 0.0;
  double y = 0.0;
  double p = 0.0;
};

// Greedy NMS over valid cells with p >= threshold: take the most probable
// remaining cell (ties: smaller y, then smaller x) and suppress everything
// within nms_radius (inclusive).
std::vector<Detection> detect_mitoses(const ScoreMap& map, double threshold = 0.5, double nms_radius = 16.0);

// Detectors are immutable once built and may be shared across threads.
class Detector {
 public:
  virtual ~Detector() = default;
  virtual const DetectorGeometry& geometry() const = 0;
  // Throws if the patch is smaller than train_input in either axis.
  virtual ScoreMap score_map(const Pixmap& patch) const = 0;
  virtual nlohmann::json to_json() const = 0;
};

inline constexpr int kWindowFeatureCount = 4;
using WindowFeatures = std::array<double, kWindowFeatureCount>;

// What the classical scorers look at inside a window's valid center.
struct WindowFeatureParams {
  StainMatrix stain = default_he_matrix();
  double mpp = 1.0;
  double dark_threshold = 1.0;  // H concentration defining "dark" pixels
  double dark_percentile = 99.5;
};

// Features of the train_input window with origin (x0, y0): mean H and H at
// dark_percentile over the valid center; compactness and area (units of
// 100 um^2) of the largest dark blob whose centroid lies in the valid center,
// measured over the whole window so blobs straddling cell borders are seen
// whole and owned by exactly one cell. Without such a blob compactness is 1.
WindowFeatures window_features(const std::vector<float>& h_map, int map_width, int x0, int y0,
                               const DetectorGeometry& geometry, const WindowFeatureParams& params);

// H concentration per pixel under a fixed stain basis.
std::vector<float> hematoxylin_map(const Pixmap& patch, const StainMatrix& stain);

// Shared sliding-window machinery: H map once per patch, then a
// per-window scorer over the valid center of every valid cell.
class WindowFeatureDetector : public Detector {
 public:
  WindowFeatureDetector(DetectorGeometry geometry, WindowFeatureParams params);
  const DetectorGeometry& geometry() const override { return geometry_; }
  const WindowFeatureParams& feature_params() const { return params_; }
  ScoreMap score_map(const Pixmap& patch) const override;
  // Features of the single window of a train_input-sized patch.
  WindowFeatures features_of_window(const Pixmap& window) const;
  virtual double score(const WindowFeatures& f) const = 0;

 private:
  DetectorGeometry geometry_;
  WindowFeatureParams params_;
};

// Fixed logistic combination of the window features: dark and ragged wins,
// round (debris, pyknotic nuclei) or pale loses. Calibrated on synthetic
// fixtures.
class ReferenceDetector : public WindowFeatureDetector {
 public:
  explicit ReferenceDetector(DetectorGeometry geometry = {}, WindowFeatureParams params = {});
  double score(const WindowFeatures& f) const override;
  nlohmann::json to_json() const override;

  static constexpr std::array<double, kWindowFeatureCount> kWeights = {0.0, 6.0, -12.0, 1.0};
  static constexpr double kBias = -3.0;
};

struct LogisticModel {
  std::array<double, kWindowFeatureCount> weights{};
  double bias = 0.0;
  std::array<double, kWindowFeatureCount> mean{};   // standardization
  std::array<double, kWindowFeatureCount> scale{1.0, 1.0, 1.0, 1.0};
  int epochs = 0;
  double grad_norm = 0.0;

  double probability(const WindowFeatures& f) const;
};

class LearnedDetector : public WindowFeatureDetector {
 public:
  LearnedDetector(LogisticModel model, DetectorGeometry geometry = {}, WindowFeatureParams params = {});
  double score(const WindowFeatures& f) const override { return model_.probability(f); }
  const LogisticModel& model() const { return model_; }
  nlohmann::json to_json() const override;

 private:
  LogisticModel model_;
};

// Plug-in boundary: runs `command` through /bin/sh with the patch as P6 on
// stdin and parses a ScoreMap JSON document from stdout.
class SubprocessDetector : public Detector {
 public:
  SubprocessDetector(std::string command, DetectorGeometry geometry = {});
  const DetectorGeometry& geometry() const override { return geometry_; }
  ScoreMap score_map(const Pixmap& patch) const override;
  nlohmann::json to_json() const override;

 private:
  std::string command_;
  DetectorGeometry geometry_;
};

nlohmann::json to_json(const ScoreMap& map);
ScoreMap score_map_from_json(const nlohmann::json& doc);

// "reference", a learned-model JSON path, or "cmd:<shell command>".
std::unique_ptr<Detector> make_detector(const std::string& spec, const WindowFeatureParams& params,
                                        const DetectorGeometry& geometry = {});
std::unique_ptr<Detector> detector_from_json(const nlohmann::json& doc);
void save_detector(const std::filesystem::path& path, const Detector& detector);

}  // namespace prolif
