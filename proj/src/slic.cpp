#include "gdc/slic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace gdc {
namespace {

double srgb_to_linear(double c) { return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4); }

double lab_f(double t) {
  constexpr double kDelta = 6.0 / 29.0;
  return t > kDelta * kDelta * kDelta ? std::cbrt(t) : t / (3 * kDelta * kDelta) + 4.0 / 29.0;
}

struct UnionFind {
  std::vector<int> parent;
  std::vector<Index> size;

  explicit UnionFind(int n) : parent(static_cast<std::size_t>(n)), size(static_cast<std::size_t>(n), 0) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int a) {
    while (parent[static_cast<std::size_t>(a)] != a) {
      parent[static_cast<std::size_t>(a)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(a)])];
      a = parent[static_cast<std::size_t>(a)];
    }
    return a;
  }
  // Attaches a's set under b's root.
  void merge_into(int a, int b) {
    a = find(a), b = find(b);
    if (a == b) return;
    parent[static_cast<std::size_t>(a)] = b;
    size[static_cast<std::size_t>(b)] += size[static_cast<std::size_t>(a)];
  }
};

}  // namespace

Eigen::Matrix3Xd rgb_to_lab(const RgbImage& image) {
  static const Eigen::Matrix3d kRgbToXyz = (Eigen::Matrix3d() << 0.4124564, 0.3575761, 0.1804375,  //
                                            0.2126729, 0.7151522, 0.0721750,                        //
                                            0.0193339, 0.1191920, 0.9503041)
                                               .finished();
  const Eigen::Vector3d white(0.95047, 1.0, 1.08883);
  const Index n = image.height * image.width;
  Eigen::Matrix3Xd lab(3, n);
  for (Index i = 0; i < n; ++i) {
    Eigen::Vector3d rgb;
    for (int c = 0; c < 3; ++c) rgb[c] = srgb_to_linear(image.pixels[static_cast<std::size_t>(i * 3 + c)] / 255.0);
    const Eigen::Vector3d xyz = (kRgbToXyz * rgb).cwiseQuotient(white);
    const double fx = lab_f(xyz[0]), fy = lab_f(xyz[1]), fz = lab_f(xyz[2]);
    lab.col(i) << 116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz);
  }
  return lab;
}

double slic_step(Index height, Index width, int n_segments) {
  return std::sqrt(static_cast<double>(height * width) / n_segments);
}

SuperpixelMap slic(const RgbImage& image, const SlicOptions& options, std::vector<SlicCenter>* centers_out) {
  const Index h = image.height, w = image.width;
  if (h <= 0 || w <= 0) throw ShapeError("slic: empty image");
  const int n_segments = options.n_segments > 0 ? options.n_segments
                                                : static_cast<int>(std::max<Index>(1, h * w / 256));
  if (n_segments > h * w) throw ShapeError("slic: image is smaller than one cell (more segments than pixels)");
  if (options.iters < 1) throw ShapeError("slic: iters must be >= 1");
  if (!(options.compactness >= 0)) throw ShapeError("slic: compactness must be >= 0");

  const Eigen::Matrix3Xd lab = rgb_to_lab(image);
  const double step = slic_step(h, w, n_segments);

  // Grid seeding: ny x nx cells of (nearly) equal size.
  const Index ny = std::clamp<Index>(std::llround(h / step), 1, h);
  const Index nx = std::clamp<Index>(std::llround(w / step), 1, w);
  std::vector<SlicCenter> centers;
  for (Index i = 0; i < ny; ++i)
    for (Index j = 0; j < nx; ++j) {
      SlicCenter c;
      // centroid of the cell in pixel-index coordinates
      c.y = (i + 0.5) * static_cast<double>(h) / ny - 0.5;
      c.x = (j + 0.5) * static_cast<double>(w) / nx - 0.5;
      const Index py = std::clamp<Index>(std::llround(c.y), 0, h - 1);
      const Index px = std::clamp<Index>(std::llround(c.x), 0, w - 1);
      c.lab = lab.col(py * w + px);
      centers.push_back(c);
    }
  const int k = static_cast<int>(centers.size());

  std::vector<int> labels(static_cast<std::size_t>(h * w), -1);
  std::vector<double> best(static_cast<std::size_t>(h * w));
  for (int iter = 0; iter < options.iters; ++iter) {
    // Assignment. Centres are visited in id order and only a strictly smaller
    // distance takes a pixel, so ties go to the lower id.
    std::fill(labels.begin(), labels.end(), -1);
    std::fill(best.begin(), best.end(), std::numeric_limits<double>::infinity());
    for (int ci = 0; ci < k; ++ci) {
      const SlicCenter& c = centers[static_cast<std::size_t>(ci)];
      const Index y0 = std::max<Index>(0, static_cast<Index>(std::ceil(c.y - step)));
      const Index y1 = std::min<Index>(h - 1, static_cast<Index>(std::floor(c.y + step)));
      const Index x0 = std::max<Index>(0, static_cast<Index>(std::ceil(c.x - step)));
      const Index x1 = std::min<Index>(w - 1, static_cast<Index>(std::floor(c.x + step)));
      for (Index y = y0; y <= y1; ++y)
        for (Index x = x0; x <= x1; ++x) {
          const Index p = y * w + x;
          const double d = slic_distance_sq(lab.col(p), static_cast<double>(y), static_cast<double>(x), c, step,
                                            options.compactness);
          if (d < best[static_cast<std::size_t>(p)]) {
            best[static_cast<std::size_t>(p)] = d;
            labels[static_cast<std::size_t>(p)] = ci;
          }
        }
    }
    // Pixels no window reached fall back to the globally nearest centre.
    for (Index p = 0; p < h * w; ++p) {
      if (labels[static_cast<std::size_t>(p)] >= 0) continue;
      const double y = static_cast<double>(p / w), x = static_cast<double>(p % w);
      double d_best = std::numeric_limits<double>::infinity();
      for (int ci = 0; ci < k; ++ci) {
        const double d =
            slic_distance_sq(lab.col(p), y, x, centers[static_cast<std::size_t>(ci)], step, options.compactness);
        if (d < d_best) d_best = d, labels[static_cast<std::size_t>(p)] = ci;
      }
    }
    if (iter + 1 == options.iters) break;

    // Update: each centre moves to the mean of its members; empty clusters stay put.
    std::vector<Eigen::Matrix<double, 5, 1>> sums(static_cast<std::size_t>(k), Eigen::Matrix<double, 5, 1>::Zero());
    std::vector<Index> counts(static_cast<std::size_t>(k), 0);
    for (Index p = 0; p < h * w; ++p) {
      const auto ci = static_cast<std::size_t>(labels[static_cast<std::size_t>(p)]);
      sums[ci].head<3>() += lab.col(p);
      sums[ci][3] += static_cast<double>(p / w);
      sums[ci][4] += static_cast<double>(p % w);
      ++counts[ci];
    }
    for (std::size_t ci = 0; ci < centers.size(); ++ci) {
      if (counts[ci] == 0) continue;
      const Eigen::Matrix<double, 5, 1> mean = sums[ci] / static_cast<double>(counts[ci]);
      centers[ci].lab = mean.head<3>();
      centers[ci].y = mean[3];
      centers[ci].x = mean[4];
    }
  }
  if (centers_out) *centers_out = centers;

  SuperpixelMap map{h, w, std::move(labels), k};
  return options.enforce_connectivity ? enforce_connectivity(map) : map;
}

SuperpixelMap enforce_connectivity(const SuperpixelMap& map) {
  const Index h = map.height, w = map.width;
  const auto n = static_cast<std::size_t>(h * w);
  if (map.labels.size() != n) throw ShapeError("enforce_connectivity: label buffer does not match dimensions");

  // 4-connected components, numbered in raster order of their first pixel.
  std::vector<int> component(n, -1);
  std::vector<int> component_label;
  std::vector<Index> stack;
  for (Index start = 0; start < h * w; ++start) {
    if (component[static_cast<std::size_t>(start)] >= 0) continue;
    const int id = static_cast<int>(component_label.size());
    const int label = map.labels[static_cast<std::size_t>(start)];
    component_label.push_back(label);
    component[static_cast<std::size_t>(start)] = id;
    stack.assign(1, start);
    while (!stack.empty()) {
      const Index p = stack.back();
      stack.pop_back();
      const Index y = p / w, x = p % w;
      const Index nbrs[4] = {y > 0 ? p - w : -1, y + 1 < h ? p + w : -1, x > 0 ? p - 1 : -1, x + 1 < w ? p + 1 : -1};
      for (Index q : nbrs) {
        if (q < 0 || component[static_cast<std::size_t>(q)] >= 0) continue;
        if (map.labels[static_cast<std::size_t>(q)] != label) continue;
        component[static_cast<std::size_t>(q)] = id;
        stack.push_back(q);
      }
    }
  }
  const int nc = static_cast<int>(component_label.size());
  UnionFind uf(nc);
  for (std::size_t p = 0; p < n; ++p) ++uf.size[static_cast<std::size_t>(component[p])];

  // The largest piece of each label keeps it (ties: earliest); the rest are orphans.
  std::vector<int> keeper;
  for (int c = 0; c < nc; ++c) {
    const auto label = static_cast<std::size_t>(std::max(0, component_label[static_cast<std::size_t>(c)]));
    if (label >= keeper.size()) keeper.resize(label + 1, -1);
    int& kc = keeper[label];
    if (kc < 0 || uf.size[static_cast<std::size_t>(c)] > uf.size[static_cast<std::size_t>(kc)]) kc = c;
  }

  std::vector<std::vector<int>> adjacent(static_cast<std::size_t>(nc));
  for (Index p = 0; p < h * w; ++p) {
    const int a = component[static_cast<std::size_t>(p)];
    const Index y = p / w, x = p % w;
    if (x + 1 < w && component[static_cast<std::size_t>(p + 1)] != a) {
      const int b = component[static_cast<std::size_t>(p + 1)];
      adjacent[static_cast<std::size_t>(a)].push_back(b);
      adjacent[static_cast<std::size_t>(b)].push_back(a);
    }
    if (y + 1 < h && component[static_cast<std::size_t>(p + w)] != a) {
      const int b = component[static_cast<std::size_t>(p + w)];
      adjacent[static_cast<std::size_t>(a)].push_back(b);
      adjacent[static_cast<std::size_t>(b)].push_back(a);
    }
  }

  for (int c = 0; c < nc; ++c) {
    const auto label = static_cast<std::size_t>(std::max(0, component_label[static_cast<std::size_t>(c)]));
    if (keeper[label] == c) continue;
    int target = -1;
    Index target_size = -1;
    for (int b : adjacent[static_cast<std::size_t>(c)]) {
      const int root = uf.find(b);
      if (root == uf.find(c)) continue;
      const Index s = uf.size[static_cast<std::size_t>(root)];
      if (s > target_size || (s == target_size && root < target)) target = root, target_size = s;
    }
    if (target >= 0) uf.merge_into(c, target);
  }

  SuperpixelMap out{h, w, std::vector<int>(n), 0};
  std::vector<int> dense(static_cast<std::size_t>(nc), -1);
  for (std::size_t p = 0; p < n; ++p) {
    int& id = dense[static_cast<std::size_t>(uf.find(component[p]))];
    if (id < 0) id = out.count++;
    out.labels[p] = id;
  }
  return out;
}

}  // namespace gdc
