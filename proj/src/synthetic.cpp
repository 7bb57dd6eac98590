#include "gdc/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <fstream>
#include <numbers>
#include <random>

namespace gdc {
namespace {

using Colour = std::array<double, 3>;

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

Colour random_colour(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(20.0, 235.0);
  return {u(rng), u(rng), u(rng)};
}

// Per-region appearance: a function of pixel position returning RGB in [0, 255].
struct Appearance {
  enum Kind { flat, gradient, stripes, checker } kind = flat;
  Colour a{}, b{};
  double period = 8, angle = 0, noise = 8;
};

Colour shade(const Appearance& ap, double y, double x, Index size) {
  switch (ap.kind) {
    case Appearance::flat:
      return ap.a;
    case Appearance::gradient: {
      const double t = std::clamp((std::cos(ap.angle) * x + std::sin(ap.angle) * y) / static_cast<double>(size) + 0.5,
                                  0.0, 1.0);
      return {ap.a[0] + t * (ap.b[0] - ap.a[0]), ap.a[1] + t * (ap.b[1] - ap.a[1]), ap.a[2] + t * (ap.b[2] - ap.a[2])};
    }
    case Appearance::stripes: {
      const double u = std::cos(ap.angle) * x + std::sin(ap.angle) * y;
      return std::fmod(std::floor(u / ap.period), 2.0) == 0.0 ? ap.a : ap.b;
    }
    case Appearance::checker: {
      const auto cy = static_cast<long>(std::floor(y / ap.period)), cx = static_cast<long>(std::floor(x / ap.period));
      return ((cy + cx) & 1) ? ap.b : ap.a;
    }
  }
  return ap.a;
}

// Warped Voronoi partition into k cells; every cell keeps its seed pixel.
LabelMask voronoi_layout(Index size, int k, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> pos(0.15 * size, 0.85 * size), phase(0, 2 * std::numbers::pi);
  std::vector<std::array<double, 2>> seeds;
  while (static_cast<int>(seeds.size()) < k) {
    std::array<double, 2> s{pos(rng), pos(rng)};
    bool far = true;
    for (const auto& o : seeds) far &= std::hypot(s[0] - o[0], s[1] - o[1]) > 0.3 * size;
    if (far) seeds.push_back(s);
  }
  const double amp = std::uniform_real_distribution<double>(0.0, 0.08 * size)(rng);
  const double p1 = phase(rng), p2 = phase(rng);
  LabelMask m(size, size, 0);
  for (Index y = 0; y < size; ++y)
    for (Index x = 0; x < size; ++x) {
      const double wy = y + amp * std::sin(2 * std::numbers::pi * x / size * 2 + p1);
      const double wx = x + amp * std::sin(2 * std::numbers::pi * y / size * 2 + p2);
      int best = 0;
      double d_best = 1e300;
      for (int c = 0; c < k; ++c) {
        const double d = std::hypot(wy - seeds[static_cast<std::size_t>(c)][0], wx - seeds[static_cast<std::size_t>(c)][1]);
        if (d < d_best) d_best = d, best = c;
      }
      m.at(y, x) = best;
    }
  return m;
}

// Background 0 with an ellipse 1 and, for k = 3, a band 2 along one side.
LabelMask object_layout(Index size, int k, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> centre(0.35 * size, 0.65 * size), radius(0.18 * size, 0.3 * size);
  const double cy = centre(rng), cx = centre(rng), ry = radius(rng), rx = radius(rng);
  const Index band = k == 3 ? size / 5 : 0;
  LabelMask m(size, size, 0);
  for (Index y = 0; y < size; ++y)
    for (Index x = 0; x < size; ++x) {
      const double e = (y - cy) * (y - cy) / (ry * ry) + (x - cx) * (x - cx) / (rx * rx);
      if (y >= size - band) m.at(y, x) = 2;
      else if (e <= 1.0) m.at(y, x) = 1;
    }
  return m;
}

// 4-neighbour distance to the nearest pixel of another category (or the border).
std::vector<Index> interior_distance(const LabelMask& gt) {
  const Index h = gt.height, w = gt.width;
  std::vector<Index> dist(static_cast<std::size_t>(h * w), -1);
  std::deque<Index> queue;
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      const int l = gt.at(y, x);
      const bool edge = y == 0 || x == 0 || y == h - 1 || x == w - 1 || gt.at(y - 1, x) != l ||
                        gt.at(y + 1, x) != l || gt.at(y, x - 1) != l || gt.at(y, x + 1) != l;
      if (edge) dist[static_cast<std::size_t>(y * w + x)] = 0, queue.push_back(y * w + x);
    }
  while (!queue.empty()) {
    const Index p = queue.front();
    queue.pop_front();
    const Index y = p / w, x = p % w;
    const Index nbrs[4] = {y > 0 ? p - w : -1, y + 1 < h ? p + w : -1, x > 0 ? p - 1 : -1, x + 1 < w ? p + 1 : -1};
    for (Index q : nbrs)
      if (q >= 0 && dist[static_cast<std::size_t>(q)] < 0) {
        dist[static_cast<std::size_t>(q)] = dist[static_cast<std::size_t>(p)] + 1;
        queue.push_back(q);
      }
  }
  return dist;
}

}  // namespace

ScribbleSet skeleton_scribbles(const LabelMask& gt, int radius, Index max_half_length) {
  const Index h = gt.height, w = gt.width;
  const std::vector<Index> dist = interior_distance(gt);
  int categories = 0;
  for (int l : gt.labels) categories = std::max(categories, l + 1);
  ScribbleSet out;
  for (int c = 0; c < categories; ++c) {
    Index best = -1, best_p = -1;
    for (Index p = 0; p < h * w; ++p)
      if (gt.labels[static_cast<std::size_t>(p)] == c && dist[static_cast<std::size_t>(p)] > best)
        best = dist[static_cast<std::size_t>(p)], best_p = p;
    if (best_p < 0) throw ShapeError("skeleton_scribbles: category " + std::to_string(c) + " has no pixels");
    const Index py = best_p / w, px = best_p % w;
    const Index keep = std::min<Index>(best, radius + 2);  // stay this far from the region edge
    const auto inside = [&](Index y, Index x) {
      return y >= 0 && x >= 0 && y < h && x < w && gt.at(y, x) == c && dist[static_cast<std::size_t>(y * w + x)] >= keep;
    };
    const auto reach = [&](Index dy, Index dx) {
      Index n = 0;
      while (n < max_half_length && inside(py + (n + 1) * dy, px + (n + 1) * dx)) ++n;
      return n;
    };
    const Index left = reach(0, -1), right = reach(0, 1), up = reach(-1, 0), down = reach(1, 0);
    Stroke s{c, std::max<int>(1, static_cast<int>(std::min<Index>(radius, std::max<Index>(best, 1)))), {}};
    if (left + right >= up + down) s.points = {{px - left, py}, {px + right, py}};
    else s.points = {{px, py - up}, {px, py + down}};
    out.strokes.push_back(std::move(s));
  }
  return out;
}

SyntheticCase two_region_fixture(Index size) {
  SyntheticCase c;
  c.name = "two_region";
  c.image = RgbImage(size, size);
  c.gt = LabelMask(size, size, 0);
  const Rgb left{200, 60, 50}, right{40, 90, 200};
  for (Index y = 0; y < size; ++y)
    for (Index x = 0; x < size; ++x) {
      const bool r = x >= size / 2;
      c.gt.at(y, x) = r ? 1 : 0;
      for (int k = 0; k < 3; ++k) c.image.at(y, x, k) = (r ? right : left)[static_cast<std::size_t>(k)];
    }
  const Index q = size / 4;
  c.scribbles.strokes = {Stroke{0, 2, {{q - q / 4, q}, {q - q / 4, size - q}}},
                         Stroke{1, 2, {{size - q + q / 4, q}, {size - q + q / 4, size - q}}}};
  return c;
}

std::vector<SyntheticCase> synthetic_suite(int count, std::uint64_t seed, Index size) {
  std::vector<SyntheticCase> out;
  std::mt19937_64 rng(seed);
  for (int i = 0; i < count; ++i) {
    SyntheticCase c;
    c.name = "synthetic_" + std::string(i < 10 ? "0" : "") + std::to_string(i);
    const int k = 2 + i % 3;
    c.gt = (i % 2 == 0 || k == 4) ? voronoi_layout(size, k, rng) : object_layout(size, k, rng);

    // Appearances rotate through flat, gradient and two textures. Each region
    // has its own base colour; texture contrast, gradient span and noise are
    // large enough that single pixels of neighbouring regions overlap in colour.
    std::vector<Appearance> looks;
    for (int r = 0; r < k; ++r) {
      Appearance ap;
      ap.kind = static_cast<Appearance::Kind>((i + r) % 4);
      ap.a = random_colour(rng);
      const double contrast = std::uniform_real_distribution<double>(30.0, 70.0)(rng);
      for (int ch = 0; ch < 3; ++ch) {
        const double sign = std::bernoulli_distribution(0.5)(rng) ? 1.0 : -1.0;
        ap.b[static_cast<std::size_t>(ch)] = ap.a[static_cast<std::size_t>(ch)] + sign * contrast;
      }
      ap.period = std::uniform_real_distribution<double>(3.0, 7.0)(rng);
      ap.angle = std::uniform_real_distribution<double>(0.0, std::numbers::pi)(rng);
      ap.noise = std::uniform_real_distribution<double>(8.0, 24.0)(rng);
      looks.push_back(ap);
    }
    c.image = RgbImage(size, size);
    for (Index y = 0; y < size; ++y)
      for (Index x = 0; x < size; ++x) {
        const Appearance& ap = looks[static_cast<std::size_t>(c.gt.at(y, x))];
        const Colour v = shade(ap, static_cast<double>(y), static_cast<double>(x), size);
        std::normal_distribution<double> noise(0.0, ap.noise);
        for (int ch = 0; ch < 3; ++ch) c.image.at(y, x, ch) = to_byte(v[static_cast<std::size_t>(ch)] + noise(rng));
      }
    c.scribbles = skeleton_scribbles(c.gt);
    c.scribbles.image = "image.png";
    out.push_back(std::move(c));
  }
  return out;
}

void write_dataset(const std::filesystem::path& dir, const std::vector<SyntheticCase>& cases) {
  for (const auto& c : cases) {
    const auto sub = dir / c.name;
    std::filesystem::create_directories(sub);
    write_file(sub / "image.png", encode_png(c.image));
    write_file(sub / "gt.png", encode_mask_png(c.gt));
    ScribbleSet s = c.scribbles;
    s.image = "image.png";
    std::ofstream(sub / "scribbles.json") << to_json(s).dump(2) << '\n';
  }
}

}  // namespace gdc
