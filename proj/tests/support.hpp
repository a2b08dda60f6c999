#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "prolif/synth.hpp"

namespace prolif::test {

// Fresh directory under the system temp dir, removed on scope exit.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("prolif_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

inline TissueRegion disc(double cx, double cy, double radius, double cell_density) {
  TissueRegion r;
  r.shape = TissueRegion::Shape::kDisc;
  r.cx = cx;
  r.cy = cy;
  r.radius = radius;
  r.cell_density = cell_density;
  return r;
}

inline TissueRegion rect(double x, double y, double w, double h, double cell_density) {
  TissueRegion r;
  r.x = x;
  r.y = y;
  r.w = w;
  r.h = h;
  r.cell_density = cell_density;
  return r;
}

}  // namespace prolif::test
