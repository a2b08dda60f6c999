#include "prolif/morphology.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "prolif/error.hpp"

namespace prolif {

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

namespace {

// Sliding-window OR (dilate) or AND (erode) along one axis. Out-of-image
// pixels are neutral for dilation and set for erosion.
BinaryMask sweep(const BinaryMask& in, int radius, bool horizontal, bool erode) {
  BinaryMask out = in;
  const int len = horizontal ? in.width : in.height;
  const int lines = horizontal ? in.height : in.width;
  for (int line = 0; line < lines; ++line) {
    auto at = [&](int i) {
      return horizontal ? in.get(i, line) : in.get(line, i);
    };
    int ones = 0;
    for (int i = -radius; i <= radius - 1; ++i) {
      if (i >= 0 && i < len && at(i)) ++ones;
    }
    for (int i = 0; i < len; ++i) {
      const int enter = i + radius;
      const int leave = i - radius - 1;
      if (enter < len && at(enter)) ++ones;
      if (leave >= 0 && at(leave)) --ones;
      bool v;
      if (erode) {
        const int lo = std::max(0, i - radius);
        const int hi = std::min(len - 1, i + radius);
        v = ones == hi - lo + 1;
      } else {
        v = ones > 0;
      }
      if (horizontal) {
        out.set(i, line, v);
      } else {
        out.set(line, i, v);
      }
    }
  }
  return out;
}

}  // namespace

BinaryMask binary_dilate(const BinaryMask& mask, int radius) {
  if (radius < 0) throw invalid_argument("dilation radius must be >= 0");
  if (radius == 0) return mask;
  return sweep(sweep(mask, radius, true, false), radius, false, false);
}

BinaryMask binary_erode(const BinaryMask& mask, int radius) {
  if (radius < 0) throw invalid_argument("erosion radius must be >= 0");
  if (radius == 0) return mask;
  return sweep(sweep(mask, radius, true, true), radius, false, true);
}

BinaryMask binary_open(const BinaryMask& mask, int radius) {
  return binary_dilate(binary_erode(mask, radius), radius);
}

Labeling label_components(const BinaryMask& mask) {
  Labeling out;
  out.width = mask.width;
  out.height = mask.height;
  out.labels.assign(mask.bits.size(), 0);

  // Union-find over provisional labels, then a compacting pass.
  std::vector<std::int32_t> parent{0};
  auto find = [&](std::int32_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  auto unite = [&](std::int32_t a, std::int32_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  };

  const int w = mask.width;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!mask.get(x, y)) continue;
      std::int32_t label = 0;
      const int nx[4] = {x - 1, x - 1, x, x + 1};
      const int ny[4] = {y, y - 1, y - 1, y - 1};
      for (int k = 0; k < 4; ++k) {
        if (nx[k] < 0 || nx[k] >= w || ny[k] < 0) continue;
        const std::int32_t n = out.labels[static_cast<std::size_t>(ny[k]) * w + nx[k]];
        if (n == 0) continue;
        if (label == 0) {
          label = n;
        } else {
          unite(label, n);
        }
      }
      if (label == 0) {
        label = static_cast<std::int32_t>(parent.size());
        parent.push_back(label);
      }
      out.labels[static_cast<std::size_t>(y) * w + x] = label;
    }
  }

  std::vector<std::int32_t> remap(parent.size(), 0);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < w; ++x) {
      std::int32_t& l = out.labels[static_cast<std::size_t>(y) * w + x];
      if (l == 0) continue;
      const std::int32_t root = find(l);
      if (remap[root] == 0) {
        remap[root] = static_cast<std::int32_t>(out.components.size()) + 1;
        Component c;
        c.label = remap[root];
        c.min_x = c.max_x = x;
        c.min_y = c.max_y = y;
        out.components.push_back(c);
      }
      l = remap[root];
      Component& c = out.components[static_cast<std::size_t>(l) - 1];
      ++c.area;
      c.min_x = std::min(c.min_x, x);
      c.max_x = std::max(c.max_x, x);
      c.min_y = std::min(c.min_y, y);
      c.max_y = std::max(c.max_y, y);
      c.sum_x += x;
      c.sum_y += y;
    }
  }
  return out;
}

namespace {

// Felzenszwalb-Huttenlocher lower envelope of parabolas, squared distances.
void edt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v, std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  const double inf = std::numeric_limits<double>::infinity();
  int k = 0;
  v[0] = 0;
  z[0] = -inf;
  z[1] = inf;
  for (int q = 1; q < n; ++q) {
    if (f[q] == inf) continue;
    if (f[v[k]] == inf) {
      v[k] = q;
      continue;
    }
    double s;
    while (true) {
      s = ((f[q] + static_cast<double>(q) * q) - (f[v[k]] + static_cast<double>(v[k]) * v[k])) /
          (2.0 * (q - v[k]));
      if (s <= z[k] && k > 0) {
        --k;
      } else {
        break;
      }
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = inf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = q - v[k];
    d[q] = f[v[k]] == inf ? inf : dq * dq + f[v[k]];
  }
}

}  // namespace

std::vector<float> distance_transform(const BinaryMask& mask) {
  // Pad by one unset pixel on each side so the border acts as background.
  const int w = mask.width + 2;
  const int h = mask.height + 2;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> grid(static_cast<std::size_t>(w) * h, 0.0);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (mask.get(x, y)) grid[static_cast<std::size_t>(y + 1) * w + x + 1] = inf;
    }
  }
  const int n = std::max(w, h);
  std::vector<double> f(n), d(n), z(n + 1);
  std::vector<int> v(n);
  for (int x = 0; x < w; ++x) {
    f.resize(h);
    d.resize(h);
    for (int y = 0; y < h; ++y) f[y] = grid[static_cast<std::size_t>(y) * w + x];
    edt_1d(f, d, v, z);
    for (int y = 0; y < h; ++y) grid[static_cast<std::size_t>(y) * w + x] = d[y];
  }
  for (int y = 0; y < h; ++y) {
    f.resize(w);
    d.resize(w);
    for (int x = 0; x < w; ++x) f[x] = grid[static_cast<std::size_t>(y) * w + x];
    edt_1d(f, d, v, z);
    for (int x = 0; x < w; ++x) grid[static_cast<std::size_t>(y) * w + x] = d[x];
  }
  std::vector<float> out(mask.bits.size());
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      out[static_cast<std::size_t>(y) * mask.width + x] =
          static_cast<float>(std::sqrt(grid[static_cast<std::size_t>(y + 1) * w + x + 1]));
    }
  }
  return out;
}

}  // namespace prolif
