#include <cmath>

#include "doctest.h"
#include "prolif/error.hpp"
#include "prolif/patches.hpp"
#include "prolif/rng.hpp"
#include "prolif/slide.hpp"
#include "prolif/synth.hpp"
#include "support.hpp"

using namespace prolif;
using prolif::test::TempDir;

namespace {

// Level-0 mask (downsample 1) with a filled rectangle and one blob record.
TissueResult rect_tissue(int w, int h, int x0, int y0, int rw, int rh) {
  TissueResult t;
  t.mask = BinaryMask(w, h);
  for (int y = y0; y < y0 + rh; ++y) {
    for (int x = x0; x < x0 + rw; ++x) t.mask.set(x, y);
  }
  TissueBlob b;
  b.label = 1;
  b.area_px = std::int64_t(rw) * rh;
  b.min_x = x0;
  b.min_y = y0;
  b.max_x = x0 + rw - 1;
  b.max_y = y0 + rh - 1;
  t.blobs.push_back(b);
  return t;
}

PatchParams bounds(int w, int h) {
  PatchParams p;
  p.slide_width = w;
  p.slide_height = h;
  return p;
}

}  // namespace

TEST_CASE("hpf_patch_side examples") {
  CHECK(hpf_patch_side(0.25) == 5657);
  CHECK(hpf_patch_side(1.0) == 1414);
  CHECK_THROWS_AS(hpf_patch_side(1.0, 0.0), Error);
  CHECK_THROWS_AS(hpf_patch_side(0.0), Error);
}

TEST_CASE("grid examples: one patch and a 3x3 tiling") {
  const TissueResult one = rect_tissue(200, 200, 50, 50, 100, 100);
  const auto p1 = sample_patch_centers(one, 100, 100, bounds(200, 200), "s");
  REQUIRE(p1.size() == 1);
  CHECK(p1[0].x0() == 50);
  CHECK(p1[0].y0() == 50);

  const TissueResult nine = rect_tissue(400, 400, 50, 50, 300, 300);
  const auto p9 = sample_patch_centers(nine, 100, 100, bounds(400, 400), "s");
  CHECK(p9.size() == 9);
  for (std::size_t i = 0; i < p9.size(); ++i) CHECK(p9[i].index == int(i));

  TissueResult empty;
  empty.mask = BinaryMask(10, 10);
  CHECK(sample_patch_centers(empty, 5, 5, bounds(10, 10), "s").empty());
  CHECK_THROWS_AS(sample_patch_centers(nine, 100, 0, bounds(400, 400), "s"), Error);
}

TEST_CASE("patch properties on random blobs") {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const int w = 600, h = 500;
    const int rw = int(rng.uniform_int(60, 400)), rh = int(rng.uniform_int(60, 350));
    const int x0 = int(rng.uniform_int(0, w - rw)), y0 = int(rng.uniform_int(0, h - rh));
    const TissueResult t = rect_tissue(w, h, x0, y0, rw, rh);
    const int side = int(rng.uniform_int(40, 120));
    const PatchParams params = bounds(w, h);

    std::size_t prev = SIZE_MAX;
    for (int stride = side / 4; stride <= 2 * side; stride += std::max(1, side / 4)) {
      const auto ps = sample_patch_centers(t, side, stride, params, "s");
      CHECK(ps.size() <= prev);
      prev = ps.size();
      for (const PatchRef& p : ps) {
        CHECK(p.side == side);
        CHECK(p.x0() >= 0);
        CHECK(p.y0() >= 0);
        CHECK(p.x0() + side <= w);
        CHECK(p.y0() + side <= h);
        CHECK(mask_coverage(t.mask, p.x0(), p.y0(), side) >= params.min_tissue_fraction);
      }
      if (stride == side) {
        for (std::size_t i = 0; i < ps.size(); ++i) {
          for (std::size_t j = i + 1; j < ps.size(); ++j) {
            CHECK(std::max(std::abs(ps[i].cx - ps[j].cx), std::abs(ps[i].cy - ps[j].cy)) >= side);
          }
        }
      }
    }
  }
}

TEST_CASE("about 300 patches on a slide with 75 patch areas of tissue") {
  // mpp 4 keeps the slide small: side = round(1414.2 / 4) = 354 px.
  TempDir dir;
  SyntheticSlideSpec spec;
  spec.mpp = 4.0;
  const int side = hpf_patch_side(spec.mpp);
  REQUIRE(side == 354);
  spec.width = 17 * side;
  spec.height = 7 * side;
  spec.seed = 4;
  spec.regions = {prolif::test::rect(side, side, 15 * side, 5 * side, 500)};
  const auto out = generate_synthetic_slide(spec, dir.path());
  const SlidePyramid slide = open_slide(out.manifest_path);
  const TissueResult t = extract_tissue_blobs(slide);
  const auto ps = sample_patch_centers(t, side, side / 2, bounds(spec.width, spec.height), "s");
  CHECK(ps.size() >= 240);
  CHECK(ps.size() <= 360);
}

TEST_CASE("patches jsonl round trip") {
  TempDir dir;
  const auto ps = sample_patch_centers(rect_tissue(400, 400, 50, 50, 300, 300), 100, 50, bounds(400, 400), "slide_a");
  write_patches_jsonl(dir / "p.jsonl", ps);
  CHECK(read_patches_jsonl(dir / "p.jsonl") == ps);
}
