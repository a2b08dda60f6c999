#include "prolif/image.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <ostream>

#include "prolif/error.hpp"

namespace prolif {

Pixmap::Pixmap(int width, int height, int channels, std::uint8_t fill)
    : width_(width), height_(height), channels_(channels) {
  if (width < 0 || height < 0) throw invalid_argument("pixmap: negative dimensions");
  if (channels != 1 && channels != 3) throw invalid_argument("pixmap: channels must be 1 or 3");
  data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

Pixmap make_rgb(int width, int height, Rgb fill) {
  Pixmap img(width, height, 3);
  auto bytes = img.bytes();
  for (std::size_t i = 0; i < bytes.size(); i += 3) {
    bytes[i] = fill.r;
    bytes[i + 1] = fill.g;
    bytes[i + 2] = fill.b;
  }
  return img;
}

Pixmap crop(const Pixmap& src, int x, int y, int w, int h, Rgb fill) {
  if (w <= 0 || h <= 0) throw invalid_argument("crop: zero-area rectangle");
  const int ch = src.channels();
  Pixmap out(w, h, ch);
  const std::uint8_t fill_px[3] = {fill.r, fill.g, fill.b};
  for (int r = 0; r < h; ++r) {
    std::uint8_t* dst = out.row(r);
    const int sy = y + r;
    const bool row_in = sy >= 0 && sy < src.height();
    for (int c = 0; c < w; ++c) {
      const int sx = x + c;
      if (row_in && sx >= 0 && sx < src.width()) {
        std::copy_n(src.row(sy) + static_cast<std::size_t>(sx) * ch, ch, dst + static_cast<std::size_t>(c) * ch);
      } else {
        std::copy_n(fill_px, ch, dst + static_cast<std::size_t>(c) * ch);
      }
    }
  }
  return out;
}

void write_pnm(std::ostream& out, const Pixmap& img) {
  out << (img.channels() == 3 ? "P6" : "P5") << '\n' << img.width() << ' ' << img.height() << "\n255\n";
  const auto bytes = img.bytes();
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw io_error("pnm: write failed");
}

namespace {

int read_header_int(std::istream& in) {
  int ch = in.get();
  while (ch != EOF) {
    if (ch == '#') {
      while (ch != EOF && ch != '\n') ch = in.get();
    } else if (!std::isspace(ch)) {
      break;
    }
    ch = in.get();
  }
  if (ch == EOF || !std::isdigit(ch)) throw format_error("pnm: malformed header");
  long value = 0;
  while (ch != EOF && std::isdigit(ch)) {
    value = value * 10 + (ch - '0');
    if (value > (1L << 20)) throw format_error("pnm: header value too large");
    ch = in.get();
  }
  // exactly one whitespace byte terminates the final header field
  if (ch == EOF || !std::isspace(ch)) throw format_error("pnm: malformed header");
  return static_cast<int>(value);
}

PnmInfo read_header(std::istream& in) {
  char magic[2] = {};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6')) {
    throw format_error("pnm: expected P5 or P6 magic");
  }
  PnmInfo info;
  info.channels = magic[1] == '6' ? 3 : 1;
  info.width = read_header_int(in);
  info.height = read_header_int(in);
  const int maxval = read_header_int(in);
  if (maxval != 255) throw format_error("pnm: only maxval 255 is supported");
  return info;
}

}  // namespace

Pixmap read_pnm(std::istream& in) {
  const PnmInfo info = read_header(in);
  Pixmap img(info.width, info.height, info.channels);
  auto bytes = img.bytes();
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) throw format_error("pnm: truncated pixel data");
  return img;
}

void write_pnm(const std::filesystem::path& path, const Pixmap& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot open for writing: " + path.string());
  write_pnm(out, img);
}

Pixmap read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open: " + path.string());
  return read_pnm(in);
}

PnmInfo read_pnm_info(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open: " + path.string());
  return read_header(in);
}

}  // namespace prolif
