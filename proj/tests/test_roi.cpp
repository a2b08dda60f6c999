#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "prolif/error.hpp"
#include "prolif/patches.hpp"
#include "prolif/rng.hpp"
#include "prolif/roi.hpp"
#include "prolif/slide.hpp"
#include "prolif/synth.hpp"
#include "prolif/tissue.hpp"
#include "support.hpp"

using namespace prolif;
using prolif::test::TempDir;

namespace {

// Eosin stroma with hematoxylin discs of radius r at the given centers.
Pixmap render_cells(int w, int h, const std::vector<Point>& centers, double r) {
  std::vector<Conc> field(std::size_t(w) * h, Conc{0.0, 0.3});
  for (const Point& c : centers) {
    for (int y = int(c.y - r) - 1; y <= int(c.y + r) + 1; ++y) {
      for (int x = int(c.x - r) - 1; x <= int(c.x + r) + 1; ++x) {
        if (x < 0 || y < 0 || x >= w || y >= h) continue;
        if (std::hypot(x + 0.5 - c.x, y + 0.5 - c.y) <= r) field[std::size_t(y) * w + x] = {0.8, 0.1};
      }
    }
  }
  return render_concentrations(field, w, h, default_he_matrix());
}

std::vector<Point> spaced_centers(Rng& rng, int n, int w, int h, double margin, double min_dist) {
  std::vector<Point> out;
  while (int(out.size()) < n) {
    const Point p{rng.uniform(margin, w - margin), rng.uniform(margin, h - margin)};
    bool ok = true;
    for (const Point& q : out) ok = ok && std::hypot(p.x - q.x, p.y - q.y) >= min_dist;
    if (ok) out.push_back(p);
  }
  return out;
}

std::vector<PatchRef> refs(int n) {
  std::vector<PatchRef> out;
  for (int i = 0; i < n; ++i) out.push_back({"s", i, 100 * i, 50, 10});
  return out;
}

std::vector<CellCountResult> counts_of(const std::vector<int>& c) {
  std::vector<CellCountResult> out;
  for (std::size_t i = 0; i < c.size(); ++i) {
    CellCountResult r;
    r.patch_index = int(i);
    r.count = c[i];
    out.push_back(r);
  }
  return out;
}

}  // namespace

TEST_CASE("count_cells: blank patch has no cells") {
  CellCountParams params;
  params.mpp = 0.5;
  const CellCountResult r = count_cells(make_rgb(200, 200, {255, 255, 255}), params, 4);
  CHECK(r.count == 0);
  CHECK(r.centroids.empty());
  CHECK(r.patch_index == 4);
  CHECK(count_cells(render_cells(200, 200, {}, 8), params).count == 0);
}

TEST_CASE("count_cells: 50 planted cells") {
  CellCountParams params;
  params.mpp = 0.5;  // 4 um radius = 8 px
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Rng rng(seed);
    const auto centers = spaced_centers(rng, 50, 500, 500, 12, 24);
    const CellCountResult r = count_cells(render_cells(500, 500, centers, 8), params);
    CHECK(r.count >= 45);
    CHECK(r.count <= 55);
    CHECK(r.count == int(r.centroids.size()));
    for (const Point& p : r.centroids) {
      CHECK(p.x >= 0);
      CHECK(p.x < 500);
      CHECK(p.y >= 0);
      CHECK(p.y < 500);
    }
  }
}

TEST_CASE("count_cells: a merged pair is split by the distance transform") {
  CellCountParams params;  // mpp 0.25: the pair exceeds the 2000 px^2 area window
  const Pixmap img = render_cells(200, 200, {{84, 100}, {116, 100}}, 20);
  const CellCountResult r = count_cells(img, params);
  REQUIRE(r.count == 2);
  std::vector<double> xs{r.centroids[0].x, r.centroids[1].x};
  std::sort(xs.begin(), xs.end());
  CHECK(xs[0] < 100);
  CHECK(xs[1] > 100);
}

TEST_CASE("count_cells is translation equivariant") {
  CellCountParams params;
  params.mpp = 0.5;
  Rng rng(17);
  const auto centers = spaced_centers(rng, 20, 300, 300, 40, 24);
  const CellCountResult base = count_cells(render_cells(300, 300, centers, 8), params);
  for (auto [dx, dy] : {std::pair{7, -3}, std::pair{-20, 15}, std::pair{25, 25}}) {
    std::vector<Point> moved;
    for (const Point& p : centers) moved.push_back({p.x + dx, p.y + dy});
    const CellCountResult r = count_cells(render_cells(300, 300, moved, 8), params);
    REQUIRE(r.count == base.count);
    auto key = [](const Point& a, const Point& b) { return std::pair{a.y, a.x} < std::pair{b.y, b.x}; };
    std::vector<Point> a = base.centroids, b = r.centroids;
    std::sort(a.begin(), a.end(), key);
    std::sort(b.begin(), b.end(), key);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(b[i].x == doctest::Approx(a[i].x + dx).epsilon(1e-9));
      CHECK(b[i].y == doctest::Approx(a[i].y + dy).epsilon(1e-9));
    }
  }
}

TEST_CASE("rank_rois examples") {
  const SortedRoiList r = rank_rois(counts_of({5, 9, 1}), refs(3), 2);
  REQUIRE(r.entries.size() == 2);
  CHECK(r.entries[0].patch.index == 1);
  CHECK(r.entries[0].cells == 9);
  CHECK(r.entries[1].patch.index == 0);
  CHECK(r.entries[1].cells == 5);

  const SortedRoiList eq = rank_rois(counts_of({4, 4, 4, 4}), refs(4), 30);
  REQUIRE(eq.entries.size() == 4);
  for (int i = 0; i < 4; ++i) CHECK(eq.entries[std::size_t(i)].patch.index == i);

  CHECK_THROWS_AS(rank_rois({}, refs(1), 2), Error);
  CHECK_THROWS_AS(rank_rois(counts_of({1}), refs(1), 0), Error);
}

TEST_CASE("rank_rois equals sort-then-truncate") {
  Rng rng(300);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> c(300);
    for (int& v : c) v = int(rng.uniform_int(0, 60));
    const SortedRoiList r = rank_rois(counts_of(c), refs(300), 30);
    std::vector<std::pair<int, int>> oracle;
    for (int i = 0; i < 300; ++i) oracle.push_back({-c[std::size_t(i)], i});
    std::sort(oracle.begin(), oracle.end());
    REQUIRE(r.entries.size() == 30);
    for (std::size_t i = 0; i < 30; ++i) {
      CHECK(r.entries[i].patch.index == oracle[i].second);
      CHECK(r.entries[i].cells == -oracle[i].first);
      if (i > 0) CHECK(r.entries[i].cells <= r.entries[i - 1].cells);
    }
  }
}

TEST_CASE("roi list JSON round trip") {
  TempDir dir;
  SortedRoiList r = rank_rois(counts_of({5, 9, 1}), refs(3), 3);
  r.entries[0].mitoses = 2;
  save_roi_list(dir / "rois.json", r);
  const SortedRoiList back = load_roi_list(dir / "rois.json");
  CHECK(back.k == 3);
  REQUIRE(back.entries.size() == 3);
  CHECK(back.entries[0].mitoses == 2);
  CHECK(back.entries[1].mitoses == -1);
  CHECK(back.entries[2].patch == r.entries[2].patch);
}

TEST_CASE("top-K patches are denser than the slide average") {
  TempDir dir;
  SyntheticSlideSpec spec;
  spec.width = 1800;
  spec.height = 1200;
  spec.seed = 8;
  spec.regions = {prolif::test::rect(100, 100, 1600, 1000, 800), prolif::test::disc(500, 600, 300, 3500)};
  const auto out = generate_synthetic_slide(spec, dir.path());
  const SlidePyramid slide = open_slide(out.manifest_path);
  const TissueResult tissue = extract_tissue_blobs(slide);
  PatchParams pp;
  pp.slide_width = spec.width;
  pp.slide_height = spec.height;
  const int side = 200;
  const auto patches = sample_patch_centers(tissue, side, side, pp, "s");
  REQUIRE(patches.size() > 20);

  CellCountParams params;
  params.mpp = spec.mpp;
  std::vector<CellCountResult> counts;
  for (const PatchRef& p : patches) counts.push_back(count_cells(read_region(slide, 0, p.x0(), p.y0(), side, side), params, p.index));
  const int k = 8;
  const SortedRoiList top = rank_rois(counts, patches, k);

  auto planted = [&](const PatchRef& p) {
    int n = 0;
    for (const Point& c : out.truth.cells) n += c.x >= p.x0() && c.x < p.x0() + side && c.y >= p.y0() && c.y < p.y0() + side;
    return n;
  };
  double all = 0.0, sel = 0.0;
  for (const PatchRef& p : patches) all += planted(p);
  for (const RoiEntry& e : top.entries) sel += planted(e.patch);
  CHECK(sel / k >= all / double(patches.size()));
}
