#include "san/slic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace san {

Lab srgb_to_lab(double r, double g, double b) {
  auto linearize = [](double c) {
    return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
  };
  double rl = linearize(r), gl = linearize(g), bl = linearize(b);
  double x = 0.4124564 * rl + 0.3575761 * gl + 0.1804375 * bl;
  double y = 0.2126729 * rl + 0.7151522 * gl + 0.0721750 * bl;
  double z = 0.0193339 * rl + 0.1191920 * gl + 0.9503041 * bl;
  // D65 white point
  x /= 0.95047;
  z /= 1.08883;
  auto f = [](double t) {
    constexpr double delta = 6.0 / 29.0;
    return t > delta * delta * delta ? std::cbrt(t)
                                     : t / (3.0 * delta * delta) + 4.0 / 29.0;
  };
  double fx = f(x), fy = f(y), fz = f(z);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

namespace {

struct Cluster {
  double l, a, b, x, y;
};

i64 clamp_i(i64 v, i64 lo, i64 hi) { return std::max(lo, std::min(hi, v)); }

// Union-find over connected components for the connectivity pass.
struct Dsu {
  std::vector<int> parent;
  std::vector<i64> size;
  explicit Dsu(int n) : parent(n), size(n, 0) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  }
  void merge_into(int from, int into) {
    from = find(from);
    into = find(into);
    if (from == into) return;
    parent[from] = into;
    size[into] += size[from];
  }
};

}  // namespace

SuperpixelMap slic(const Tensor& image, int k, double compactness, int iters) {
  if (image.n() != 1 || image.c() != 3)
    fail(ErrorKind::kShape, "slic: expected a (1,3,h,w) image, got " + image.shape().str());
  const i64 h = image.h(), w = image.w(), n_px = h * w;
  if (k < 2 || static_cast<i64>(k) > n_px)
    fail(ErrorKind::kArgument, "slic: k must be in [2, pixel count]");
  if (iters < 1) fail(ErrorKind::kArgument, "slic: iters must be >= 1");

  std::vector<Lab> lab(static_cast<size_t>(n_px));
  for (i64 y = 0; y < h; ++y)
    for (i64 x = 0; x < w; ++x)
      lab[static_cast<size_t>(y * w + x)] =
          srgb_to_lab(image(0, 0, y, x), image(0, 1, y, x), image(0, 2, y, x));

  // Grid seeds, roughly k of them, aspect-aware.
  const double step = std::sqrt(static_cast<double>(n_px) / static_cast<double>(k));
  i64 nx = std::max<i64>(1, std::llround(std::sqrt(static_cast<double>(k) *
                                                   static_cast<double>(w) /
                                                   static_cast<double>(h))));
  i64 ny = std::max<i64>(1, std::llround(static_cast<double>(k) / static_cast<double>(nx)));
  nx = std::min(nx, w);
  ny = std::min(ny, h);

  auto grad_at = [&](i64 y, i64 x) {
    i64 xm = clamp_i(x - 1, 0, w - 1), xp = clamp_i(x + 1, 0, w - 1);
    i64 ym = clamp_i(y - 1, 0, h - 1), yp = clamp_i(y + 1, 0, h - 1);
    const Lab& gx0 = lab[static_cast<size_t>(y * w + xm)];
    const Lab& gx1 = lab[static_cast<size_t>(y * w + xp)];
    const Lab& gy0 = lab[static_cast<size_t>(ym * w + x)];
    const Lab& gy1 = lab[static_cast<size_t>(yp * w + x)];
    auto sq = [](double v) { return v * v; };
    return sq(gx1.l - gx0.l) + sq(gx1.a - gx0.a) + sq(gx1.b - gx0.b) + sq(gy1.l - gy0.l) +
           sq(gy1.a - gy0.a) + sq(gy1.b - gy0.b);
  };

  std::vector<Cluster> clusters;
  for (i64 iy = 0; iy < ny; ++iy)
    for (i64 ix = 0; ix < nx; ++ix) {
      i64 sx = (2 * ix + 1) * w / (2 * nx);
      i64 sy = (2 * iy + 1) * h / (2 * ny);
      // Nudge to the lowest-gradient neighbor in the 3x3 window.
      i64 bx = sx, by = sy;
      double best = grad_at(sy, sx);
      for (i64 dy = -1; dy <= 1; ++dy)
        for (i64 dx = -1; dx <= 1; ++dx) {
          i64 cx = clamp_i(sx + dx, 0, w - 1), cy = clamp_i(sy + dy, 0, h - 1);
          double g = grad_at(cy, cx);
          if (g < best) {
            best = g;
            bx = cx;
            by = cy;
          }
        }
      const Lab& c = lab[static_cast<size_t>(by * w + bx)];
      clusters.push_back({c.l, c.a, c.b, static_cast<double>(bx), static_cast<double>(by)});
    }

  const double spatial_w = compactness / step;  // m/S
  std::vector<int> labels(static_cast<size_t>(n_px), -1);
  std::vector<double> dist(static_cast<size_t>(n_px));

  for (int it = 0; it < iters; ++it) {
    std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::max());
    std::fill(labels.begin(), labels.end(), -1);
    for (size_t ci = 0; ci < clusters.size(); ++ci) {
      const Cluster& c = clusters[ci];
      i64 x0 = clamp_i(static_cast<i64>(c.x - 2.0 * step), 0, w - 1);
      i64 x1 = clamp_i(static_cast<i64>(c.x + 2.0 * step) + 1, 0, w - 1);
      i64 y0 = clamp_i(static_cast<i64>(c.y - 2.0 * step), 0, h - 1);
      i64 y1 = clamp_i(static_cast<i64>(c.y + 2.0 * step) + 1, 0, h - 1);
      for (i64 y = y0; y <= y1; ++y)
        for (i64 x = x0; x <= x1; ++x) {
          const Lab& p = lab[static_cast<size_t>(y * w + x)];
          double dl = p.l - c.l, da = p.a - c.a, db = p.b - c.b;
          double dx = (x - c.x) * spatial_w, dy = (y - c.y) * spatial_w;
          double d = dl * dl + da * da + db * db + dx * dx + dy * dy;
          size_t idx = static_cast<size_t>(y * w + x);
          if (d < dist[idx]) {
            dist[idx] = d;
            labels[idx] = static_cast<int>(ci);
          }
        }
    }
    // Window misses are possible once centers drift; assign spatially.
    for (i64 y = 0; y < h; ++y)
      for (i64 x = 0; x < w; ++x) {
        size_t idx = static_cast<size_t>(y * w + x);
        if (labels[idx] >= 0) continue;
        double best = std::numeric_limits<double>::max();
        for (size_t ci = 0; ci < clusters.size(); ++ci) {
          double dx = x - clusters[ci].x, dy = y - clusters[ci].y;
          double d = dx * dx + dy * dy;
          if (d < best) {
            best = d;
            labels[idx] = static_cast<int>(ci);
          }
        }
      }
    // Recenter.
    std::vector<Cluster> acc(clusters.size(), {0, 0, 0, 0, 0});
    std::vector<i64> cnt(clusters.size(), 0);
    for (i64 y = 0; y < h; ++y)
      for (i64 x = 0; x < w; ++x) {
        size_t idx = static_cast<size_t>(y * w + x);
        int ci = labels[idx];
        const Lab& p = lab[idx];
        acc[static_cast<size_t>(ci)].l += p.l;
        acc[static_cast<size_t>(ci)].a += p.a;
        acc[static_cast<size_t>(ci)].b += p.b;
        acc[static_cast<size_t>(ci)].x += static_cast<double>(x);
        acc[static_cast<size_t>(ci)].y += static_cast<double>(y);
        ++cnt[static_cast<size_t>(ci)];
      }
    for (size_t ci = 0; ci < clusters.size(); ++ci) {
      if (cnt[ci] == 0) continue;  // starved cluster keeps its old center
      double inv = 1.0 / static_cast<double>(cnt[ci]);
      clusters[ci] = {acc[ci].l * inv, acc[ci].a * inv, acc[ci].b * inv, acc[ci].x * inv,
                      acc[ci].y * inv};
    }
  }

  // Connectivity: find 4-connected components per label, keep the largest
  // component of each label, absorb every other (orphan) component into the
  // largest adjacent segment.
  std::vector<int> comp(static_cast<size_t>(n_px), -1);
  std::vector<i64> comp_size;
  std::vector<int> comp_label;
  std::vector<i64> stack;
  for (i64 start = 0; start < n_px; ++start) {
    if (comp[static_cast<size_t>(start)] >= 0) continue;
    int cid = static_cast<int>(comp_size.size());
    int lab_id = labels[static_cast<size_t>(start)];
    comp_size.push_back(0);
    comp_label.push_back(lab_id);
    stack.push_back(start);
    comp[static_cast<size_t>(start)] = cid;
    while (!stack.empty()) {
      i64 p = stack.back();
      stack.pop_back();
      ++comp_size[static_cast<size_t>(cid)];
      i64 y = p / w, x = p % w;
      const i64 nb[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
      for (auto& [ny2, nx2] : nb) {
        if (ny2 < 0 || ny2 >= h || nx2 < 0 || nx2 >= w) continue;
        i64 q = ny2 * w + nx2;
        if (comp[static_cast<size_t>(q)] < 0 && labels[static_cast<size_t>(q)] == lab_id) {
          comp[static_cast<size_t>(q)] = cid;
          stack.push_back(q);
        }
      }
    }
  }

  const int n_comp = static_cast<int>(comp_size.size());
  std::vector<int> keeper_of_label(clusters.size(), -1);
  for (int c = 0; c < n_comp; ++c) {
    int lab_id = comp_label[static_cast<size_t>(c)];
    int& keep = keeper_of_label[static_cast<size_t>(lab_id)];
    if (keep < 0 || comp_size[static_cast<size_t>(c)] > comp_size[static_cast<size_t>(keep)])
      keep = c;
  }
  std::vector<bool> is_keeper(static_cast<size_t>(n_comp), false);
  for (int keep : keeper_of_label)
    if (keep >= 0) is_keeper[static_cast<size_t>(keep)] = true;

  // Component adjacency.
  std::vector<std::vector<int>> adj(static_cast<size_t>(n_comp));
  auto add_adj = [&](int a, int b) {
    if (a == b) return;
    adj[static_cast<size_t>(a)].push_back(b);
    adj[static_cast<size_t>(b)].push_back(a);
  };
  for (i64 y = 0; y < h; ++y)
    for (i64 x = 0; x < w; ++x) {
      int c0 = comp[static_cast<size_t>(y * w + x)];
      if (x + 1 < w) add_adj(c0, comp[static_cast<size_t>(y * w + x + 1)]);
      if (y + 1 < h) add_adj(c0, comp[static_cast<size_t>((y + 1) * w + x)]);
    }
  for (auto& v : adj) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }

  Dsu dsu(n_comp);
  for (int c = 0; c < n_comp; ++c) dsu.size[c] = comp_size[static_cast<size_t>(c)];
  std::vector<bool> settled = is_keeper;
  bool progress = true;
  while (progress) {
    progress = false;
    for (int c = 0; c < n_comp; ++c) {
      if (settled[static_cast<size_t>(c)] || dsu.find(c) != c) continue;
      int best = -1;
      i64 best_size = -1;
      for (int nb2 : adj[static_cast<size_t>(c)]) {
        int root = dsu.find(nb2);
        if (root == c || !settled[static_cast<size_t>(root)]) continue;
        if (dsu.size[root] > best_size) {
          best_size = dsu.size[root];
          best = root;
        }
      }
      if (best >= 0) {
        dsu.merge_into(c, best);
        progress = true;
      }
    }
    // Propagate settledness through merged roots.
    for (int c = 0; c < n_comp; ++c)
      if (settled[static_cast<size_t>(dsu.find(c))]) settled[static_cast<size_t>(c)] = true;
  }

  // Dense relabel of the surviving roots.
  std::vector<int> dense(static_cast<size_t>(n_comp), -1);
  int next_label = 0;
  for (i64 p = 0; p < n_px; ++p) {
    int root = dsu.find(comp[static_cast<size_t>(p)]);
    if (dense[static_cast<size_t>(root)] < 0) dense[static_cast<size_t>(root)] = next_label++;
    labels[static_cast<size_t>(p)] = dense[static_cast<size_t>(root)];
  }

  SuperpixelMap out;
  out.height = h;
  out.width = w;
  out.labels = std::move(labels);
  out.segments.assign(static_cast<size_t>(next_label), {});
  for (i64 y = 0; y < h; ++y)
    for (i64 x = 0; x < w; ++x) {
      auto& seg = out.segments[static_cast<size_t>(out.labels[static_cast<size_t>(y * w + x)])];
      const Lab& p = lab[static_cast<size_t>(y * w + x)];
      seg.color.l += p.l;
      seg.color.a += p.a;
      seg.color.b += p.b;
      seg.cx += static_cast<double>(x);
      seg.cy += static_cast<double>(y);
      ++seg.count;
    }
  for (auto& seg : out.segments) {
    double inv = 1.0 / static_cast<double>(seg.count);
    seg.color.l *= inv;
    seg.color.a *= inv;
    seg.color.b *= inv;
    seg.cx *= inv;
    seg.cy *= inv;
  }
  return out;
}

}  // namespace san
