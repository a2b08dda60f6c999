#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "prolif/error.hpp"
#include "prolif/image.hpp"
#include "prolif/slide.hpp"
#include "prolif/synth.hpp"
#include "support.hpp"

using namespace prolif;
using prolif::test::TempDir;

namespace {

Pixmap gradient(int w, int h) {
  Pixmap img(w, h, 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) img.set_rgb(x, y, {std::uint8_t(x * 7 + y), std::uint8_t(y * 3), std::uint8_t(x ^ y)});
  }
  return img;
}

}  // namespace

TEST_CASE("pnm round trip for P6 and P5") {
  const Pixmap rgb = gradient(37, 19);
  std::stringstream ss;
  write_pnm(ss, rgb);
  CHECK(read_pnm(ss) == rgb);

  Pixmap gray(5, 4, 1, 9);
  gray.at(2, 3) = 200;
  std::stringstream gs;
  write_pnm(gs, gray);
  CHECK(read_pnm(gs) == gray);
}

TEST_CASE("pnm rejects truncated and foreign data") {
  std::stringstream bad("P6\n4 4\n255\nabc");
  CHECK_THROWS_AS(read_pnm(bad), Error);
  std::stringstream foreign("P3\n1 1\n255\n0 0 0\n");
  CHECK_THROWS_AS(read_pnm(foreign), Error);
}

TEST_CASE("open_slide reads back a two-level pyramid") {
  TempDir dir;
  PyramidOptions opt;
  opt.tile_size = 64;
  opt.max_top_side = 100;
  const auto manifest = write_slide(gradient(300, 200), "two", 0.5, 0.5, dir.path(), opt);
  const SlidePyramid s = open_slide(manifest);
  CHECK(s.level_count() == 2);
  CHECK(s.slide_id() == "two");
  CHECK(s.mpp_x() == 0.5);
  CHECK(s.level(0).width == 300);
  CHECK(s.level(0).height == 200);
  CHECK(s.level(1).downsample > s.level(0).downsample);
  CHECK(s.level(1).width == 75);
}

TEST_CASE("open_slide errors") {
  TempDir dir;
  CHECK_THROWS_AS(open_slide(dir / "absent.json"), Error);

  PyramidOptions opt;
  opt.tile_size = 64;
  const auto manifest = write_slide(gradient(100, 100), "m", 1.0, 1.0, dir.path(), opt);
  std::filesystem::remove(dir / tile_file_name(0, 1, 1));
  try {
    open_slide(manifest);
    FAIL("expected missing tile error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("missing tile") != std::string::npos);
  }

  std::ofstream(dir / "bad.json") << "{ not json";
  CHECK_THROWS_AS(open_slide(dir / "bad.json"), Error);
}

TEST_CASE("open_slide rejects a tile with the wrong size") {
  TempDir dir;
  PyramidOptions opt;
  opt.tile_size = 64;
  const auto manifest = write_slide(gradient(100, 100), "m", 1.0, 1.0, dir.path(), opt);
  write_pnm(dir / tile_file_name(0, 0, 0), gradient(10, 10));
  CHECK_THROWS_AS(open_slide(manifest), Error);
}

TEST_CASE("read_region: stitch oracle, single pixel, edge padding, purity") {
  TempDir dir;
  PyramidOptions opt;
  opt.tile_size = 64;
  opt.max_top_side = 64;
  const Pixmap level0 = gradient(200, 150);
  const auto manifest = write_slide(level0, "r", 1.0, 1.0, dir.path(), opt);
  const SlidePyramid s = open_slide(manifest);

  // Every level equals its tiles stitched by hand.
  for (int l = 0; l < s.level_count(); ++l) {
    const LevelInfo& info = s.level(l);
    Pixmap stitched(info.width, info.height, 3);
    for (int r = 0; r < info.tile_rows; ++r) {
      for (int c = 0; c < info.tile_cols; ++c) {
        const Pixmap tile = read_pnm(s.tile_path(l, r, c));
        for (int y = 0; y < tile.height(); ++y) {
          for (int x = 0; x < tile.width(); ++x) stitched.set_rgb(c * 64 + x, r * 64 + y, tile.rgb(x, y));
        }
      }
    }
    CHECK(read_region(s, l, 0, 0, info.width, info.height) == stitched);
  }
  CHECK(read_region(s, 0, 0, 0, 200, 150) == level0);

  const Pixmap one = read_region(s, 0, 130, 70, 1, 1);
  CHECK(one.rgb(0, 0) == level0.rgb(130, 70));

  const Pixmap edge = read_region(s, 0, 190, 10, 20, 5);
  for (int y = 0; y < 5; ++y) {
    for (int x = 0; x < 20; ++x) {
      if (x < 10) {
        CHECK(edge.rgb(x, y) == level0.rgb(190 + x, 10 + y));
      } else {
        CHECK(edge.rgb(x, y) == Rgb{255, 255, 255});
      }
    }
  }
  CHECK(read_region(s, 0, 17, 33, 90, 80) == read_region(s, 0, 17, 33, 90, 80));

  CHECK_THROWS_AS(read_region(s, 9, 0, 0, 1, 1), Error);
  CHECK_THROWS_AS(read_region(s, 0, 0, 0, 0, 5), Error);
  CHECK_THROWS_AS(read_region(s, 0, 500, 500, 5, 5), Error);
}

TEST_CASE("downsample_area averages only covered pixels") {
  Pixmap g(3, 1, 1);
  g.at(0, 0) = 10;
  g.at(1, 0) = 20;
  g.at(2, 0) = 101;
  const Pixmap d = downsample_area(g, 2);
  CHECK(d.width() == 2);
  CHECK(d.at(0, 0) == 15);
  CHECK(d.at(1, 0) == 101);
}

TEST_CASE("synthetic slide: zero density gives an empty uniform slide") {
  TempDir dir;
  SyntheticSlideSpec spec;
  spec.width = 300;
  spec.height = 200;
  spec.regions = {prolif::test::rect(0, 0, 300, 200, 0.0)};
  spec.render.tissue_e = 0.0;
  spec.render.tissue_h = 0.0;
  const auto out = generate_synthetic_slide(spec, dir.path());
  CHECK(out.truth.cells.empty());
  CHECK(out.truth.mitoses.empty());
  const Pixmap img = read_region(open_slide(out.manifest_path), 0, 0, 0, 300, 200);
  for (std::size_t i = 0; i < img.bytes().size(); ++i) REQUIRE(img.bytes()[i] == img.bytes()[0]);
}

TEST_CASE("synthetic slide: Poisson count within 3 sigma") {
  // 1 mm^2 disc-free square at 1 um/px, 100 cells/mm^2: expect 100 +- 30.
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    SyntheticSlideSpec spec;
    spec.width = 1000;
    spec.height = 1000;
    spec.seed = seed;
    spec.regions = {prolif::test::rect(0, 0, 1000, 1000, 100.0)};
    const auto r = render_synthetic(spec);
    CHECK(r.truth.cells.size() >= 70);
    CHECK(r.truth.cells.size() <= 130);
  }
}

TEST_CASE("synthetic slide: determinism and metadata round trip") {
  TempDir a, b;
  SyntheticSlideSpec spec;
  spec.slide_id = "det";
  spec.width = 700;
  spec.height = 600;
  spec.mpp = 0.5;
  spec.tile_size = 256;
  spec.seed = 77;
  spec.mitosis_density = 40;
  spec.regions = {prolif::test::disc(350, 300, 250, 2000)};
  const auto ra = generate_synthetic_slide(spec, a.path());
  const auto rb = generate_synthetic_slide(spec, b.path());
  for (const auto& entry : std::filesystem::directory_iterator(a.path())) {
    const auto name = entry.path().filename();
    CHECK(prolif::test::slurp(entry.path()) == prolif::test::slurp(b.path() / name));
  }
  const SlidePyramid s = open_slide(ra.manifest_path);
  CHECK(s.slide_id() == "det");
  CHECK(s.mpp_x() == 0.5);
  CHECK(s.mpp_y() == 0.5);
  CHECK(s.tile_size() == 256);
  CHECK(s.level(0).width == 700);
  CHECK(s.level(0).height == 600);
  const GroundTruth t = load_ground_truth(a / "ground_truth.json");
  CHECK(t.cells == ra.truth.cells);
  CHECK(t.mitoses == ra.truth.mitoses);
}

TEST_CASE("synthetic slide: truth lies in bounds and mitoses on tissue") {
  SyntheticSlideSpec spec;
  spec.width = 800;
  spec.height = 800;
  spec.seed = 5;
  spec.mitosis_density = 80;
  spec.regions = {prolif::test::disc(400, 400, 300, 1500)};
  const auto r = render_synthetic(spec);
  REQUIRE(!r.truth.mitoses.empty());
  for (const Point& p : r.truth.cells) {
    CHECK(p.x >= 0);
    CHECK(p.x < 800);
    CHECK(p.y >= 0);
    CHECK(p.y < 800);
  }
  for (const Point& p : r.truth.mitoses) {
    CHECK(r.image.rgb(int(p.x), int(p.y)) != spec.background);
  }
}

TEST_CASE("synthetic spec JSON round trip and validation") {
  SyntheticSlideSpec spec = graded_slide_spec(2, 9, "g2");
  const SyntheticSlideSpec back = synthetic_spec_from_json(to_json(spec));
  CHECK(to_json(back) == to_json(spec));
  CHECK(planted_score_class(spec) == 2);

  spec.mitosis_density = -1;
  CHECK_THROWS_AS(spec.validate(), Error);
}

TEST_CASE("graded slides plant the requested grade") {
  for (int g = 1; g <= 3; ++g) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      CHECK(planted_score_class(graded_slide_spec(g, seed, "s")) == g);
    }
  }
  CHECK_THROWS_AS(graded_slide_spec(4, 0, "s"), Error);
}

TEST_CASE("annotated patches round trip through disk") {
  TempDir dir;
  AnnotatedPatchSpec spec;
  spec.count = 2;
  spec.side = 200;
  spec.seed = 3;
  const auto patches = generate_annotated_patches(spec);
  write_annotated_patches(dir.path(), patches);
  const auto back = read_annotated_patches(dir.path());
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back[i].id == patches[i].id);
    CHECK(back[i].image == patches[i].image);
    CHECK(back[i].mitoses == patches[i].mitoses);
  }
}
