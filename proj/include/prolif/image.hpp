#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace prolif {

struct Rgb {
  std::uint8_t r = 255, g = 255, b = 255;
  bool operator==(const Rgb&) const = default;
};

// 8-bit row-major image, 1 (gray) or 3 (RGB) interleaved channels.
class Pixmap {
 public:
  Pixmap() = default;
  Pixmap(int width, int height, int channels, std::uint8_t fill = 0);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }

  std::uint8_t* row(int y) { return data_.data() + static_cast<std::size_t>(y) * width_ * channels_; }
  const std::uint8_t* row(int y) const {
    return data_.data() + static_cast<std::size_t>(y) * width_ * channels_;
  }
  std::uint8_t& at(int x, int y, int c = 0) {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  std::uint8_t at(int x, int y, int c = 0) const {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  Rgb rgb(int x, int y) const {
    const auto* p = &data_[(static_cast<std::size_t>(y) * width_ + x) * channels_];
    return channels_ == 3 ? Rgb{p[0], p[1], p[2]} : Rgb{p[0], p[0], p[0]};
  }
  void set_rgb(int x, int y, Rgb v) {
    auto* p = &data_[(static_cast<std::size_t>(y) * width_ + x) * 3];
    p[0] = v.r;
    p[1] = v.g;
    p[2] = v.b;
  }

  std::span<std::uint8_t> bytes() { return data_; }
  std::span<const std::uint8_t> bytes() const { return data_; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }

  bool operator==(const Pixmap&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<std::uint8_t> data_;
};

Pixmap make_rgb(int width, int height, Rgb fill);

// Copy of [x, x+w) x [y, y+h); pixels outside the source are `fill`.
Pixmap crop(const Pixmap& src, int x, int y, int w, int h, Rgb fill = {});

// Netpbm binary formats: P6 for RGB, P5 for gray, maxval 255.
void write_pnm(std::ostream& out, const Pixmap& img);
Pixmap read_pnm(std::istream& in);
void write_pnm(const std::filesystem::path& path, const Pixmap& img);
Pixmap read_pnm(const std::filesystem::path& path);

struct PnmInfo {
  int width = 0;
  int height = 0;
  int channels = 0;
};
// Parses only the header.
PnmInfo read_pnm_info(const std::filesystem::path& path);

}  // namespace prolif
