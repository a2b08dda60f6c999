#include "prolif/slide.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "prolif/error.hpp"

namespace prolif {

namespace fs = std::filesystem;
using nlohmann::json;

std::string tile_file_name(int level, int row, int col) {
  return "L" + std::to_string(level) + "_r" + std::to_string(row) + "_c" + std::to_string(col) + ".ppm";
}

const LevelInfo& SlidePyramid::level(int index) const {
  if (index < 0 || index >= level_count()) {
    throw invalid_argument("level out of range: " + std::to_string(index));
  }
  return levels_[static_cast<std::size_t>(index)];
}

fs::path SlidePyramid::tile_path(int level, int row, int col) const {
  return manifest_path_.parent_path() / tile_file_name(level, row, col);
}

namespace {

int tiles_along(int extent, int tile_size) { return (extent + tile_size - 1) / tile_size; }

}  // namespace

SlidePyramid open_slide(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw io_error("missing manifest: " + manifest_path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw format_error("malformed manifest: " + std::string(e.what()));
  }

  SlidePyramid slide;
  slide.manifest_path_ = manifest_path;
  try {
    if (doc.at("format").get<std::string>() != "prolif-slide") throw format_error("malformed manifest: bad format tag");
    slide.slide_id_ = doc.at("slide_id").get<std::string>();
    slide.mpp_x_ = doc.at("mpp_x").get<double>();
    slide.mpp_y_ = doc.at("mpp_y").get<double>();
    slide.tile_size_ = doc.at("tile_size").get<int>();
    for (const auto& lv : doc.at("levels")) {
      LevelInfo info;
      info.width = lv.at("width").get<int>();
      info.height = lv.at("height").get<int>();
      info.downsample = lv.at("downsample").get<double>();
      const auto& tiles = lv.at("tiles");
      info.tile_rows = static_cast<int>(tiles.size());
      info.tile_cols = info.tile_rows > 0 ? static_cast<int>(tiles.at(0).size()) : 0;
      slide.levels_.push_back(info);
    }
  } catch (const json::exception& e) {
    throw format_error("malformed manifest: " + std::string(e.what()));
  }

  if (!(slide.mpp_x_ > 0.0) || !(slide.mpp_y_ > 0.0)) throw format_error("malformed manifest: mpp must be positive");
  if (slide.tile_size_ <= 0) throw format_error("malformed manifest: tile_size must be positive");
  if (slide.levels_.empty()) throw format_error("malformed manifest: no levels");
  if (slide.levels_[0].downsample != 1.0) throw format_error("malformed manifest: level 0 downsample must be 1");

  const int ts = slide.tile_size_;
  for (std::size_t l = 0; l < slide.levels_.size(); ++l) {
    const LevelInfo& info = slide.levels_[l];
    if (info.width <= 0 || info.height <= 0) throw format_error("malformed manifest: empty level");
    if (l > 0 && !(info.downsample > slide.levels_[l - 1].downsample)) {
      throw format_error("malformed manifest: downsample factors must strictly increase");
    }
    if (info.tile_cols != tiles_along(info.width, ts) || info.tile_rows != tiles_along(info.height, ts)) {
      throw format_error("malformed manifest: tile grid does not match level size");
    }
    const auto& rows = doc["levels"][l]["tiles"];
    for (int r = 0; r < info.tile_rows; ++r) {
      if (static_cast<int>(rows[r].size()) != info.tile_cols) throw format_error("malformed manifest: ragged tile grid");
      for (int c = 0; c < info.tile_cols; ++c) {
        const std::string name = rows[r][c].get<std::string>();
        if (name != tile_file_name(static_cast<int>(l), r, c)) {
          throw format_error("malformed manifest: unexpected tile name " + name);
        }
        const fs::path path = slide.tile_path(static_cast<int>(l), r, c);
        if (!fs::exists(path)) throw io_error("missing tile: " + path.string());
        const PnmInfo tile = read_pnm_info(path);
        const int want_w = std::min(ts, info.width - c * ts);
        const int want_h = std::min(ts, info.height - r * ts);
        if (tile.channels != 3 || tile.width != want_w || tile.height != want_h) {
          throw format_error("tile dimension mismatch: " + path.string());
        }
      }
    }
  }
  return slide;
}

Pixmap read_region(const SlidePyramid& slide, int level, int x, int y, int w, int h) {
  const LevelInfo& info = slide.level(level);
  if (w <= 0 || h <= 0) throw invalid_argument("read_region: zero-area rectangle");
  const int x0 = std::max(x, 0);
  const int y0 = std::max(y, 0);
  const int x1 = std::min(x + w, info.width);
  const int y1 = std::min(y + h, info.height);
  if (x0 >= x1 || y0 >= y1) throw invalid_argument("read_region: rectangle outside level bounds");

  Pixmap out = make_rgb(w, h, Rgb{});
  const int ts = slide.tile_size();
  for (int tr = y0 / ts; tr <= (y1 - 1) / ts; ++tr) {
    for (int tc = x0 / ts; tc <= (x1 - 1) / ts; ++tc) {
      const Pixmap tile = read_pnm(slide.tile_path(level, tr, tc));
      const int tx0 = tc * ts;
      const int ty0 = tr * ts;
      const int cx0 = std::max(x0, tx0);
      const int cx1 = std::min(x1, tx0 + tile.width());
      const int cy0 = std::max(y0, ty0);
      const int cy1 = std::min(y1, ty0 + tile.height());
      for (int yy = cy0; yy < cy1; ++yy) {
        std::copy_n(tile.row(yy - ty0) + static_cast<std::size_t>(cx0 - tx0) * 3,
                    static_cast<std::size_t>(cx1 - cx0) * 3,
                    out.row(yy - y) + static_cast<std::size_t>(cx0 - x) * 3);
      }
    }
  }
  return out;
}

Pixmap downsample_area(const Pixmap& src, int factor) {
  if (factor < 1) throw invalid_argument("downsample factor must be >= 1");
  if (factor == 1) return src;
  const int ch = src.channels();
  const int w = (src.width() + factor - 1) / factor;
  const int h = (src.height() + factor - 1) / factor;
  Pixmap out(w, h, ch);
  std::vector<std::uint64_t> sums(static_cast<std::size_t>(w) * ch);
  for (int oy = 0; oy < h; ++oy) {
    std::fill(sums.begin(), sums.end(), 0);
    const int sy0 = oy * factor;
    const int sy1 = std::min(sy0 + factor, src.height());
    for (int sy = sy0; sy < sy1; ++sy) {
      const std::uint8_t* row = src.row(sy);
      for (int sx = 0; sx < src.width(); ++sx) {
        for (int c = 0; c < ch; ++c) sums[static_cast<std::size_t>(sx / factor) * ch + c] += row[sx * ch + c];
      }
    }
    for (int ox = 0; ox < w; ++ox) {
      const int sx0 = ox * factor;
      const std::uint64_t n = static_cast<std::uint64_t>(std::min(sx0 + factor, src.width()) - sx0) * (sy1 - sy0);
      for (int c = 0; c < ch; ++c) {
        out.at(ox, oy, c) = static_cast<std::uint8_t>((sums[static_cast<std::size_t>(ox) * ch + c] + n / 2) / n);
      }
    }
  }
  return out;
}

fs::path write_slide(const Pixmap& level0, const std::string& slide_id, double mpp_x, double mpp_y,
                     const fs::path& out_dir, const PyramidOptions& options) {
  if (level0.channels() != 3) throw invalid_argument("write_slide: level 0 must be RGB");
  if (!(mpp_x > 0.0) || !(mpp_y > 0.0)) throw invalid_argument("write_slide: mpp must be positive");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw io_error("unwritable directory: " + out_dir.string());

  const int ts = options.tile_size;
  json levels = json::array();
  Pixmap current = level0;
  int downsample = 1;
  for (int level = 0;; ++level) {
    json tiles = json::array();
    for (int r = 0; r < tiles_along(current.height(), ts); ++r) {
      json row = json::array();
      for (int c = 0; c < tiles_along(current.width(), ts); ++c) {
        const int tw = std::min(ts, current.width() - c * ts);
        const int th = std::min(ts, current.height() - r * ts);
        write_pnm(out_dir / tile_file_name(level, r, c), crop(current, c * ts, r * ts, tw, th));
        row.push_back(tile_file_name(level, r, c));
      }
      tiles.push_back(std::move(row));
    }
    levels.push_back({{"level", level},
                      {"width", current.width()},
                      {"height", current.height()},
                      {"downsample", static_cast<double>(downsample)},
                      {"tiles", std::move(tiles)}});
    if (std::max(current.width(), current.height()) <= options.max_top_side) break;
    downsample *= options.level_factor;
    current = downsample_area(level0, downsample);
  }

  json manifest = {{"format", "prolif-slide"},
                   {"version", 1},
                   {"slide_id", slide_id},
                   {"mpp_x", mpp_x},
                   {"mpp_y", mpp_y},
                   {"tile_size", ts},
                   {"levels", std::move(levels)}};
  const fs::path manifest_path = out_dir / "manifest.json";
  std::ofstream out(manifest_path);
  if (!out) throw io_error("unwritable directory: " + out_dir.string());
  out << manifest.dump(2) << '\n';
  return manifest_path;
}

}  // namespace prolif
