#pragma once

// SLIC superpixels: k-means in (L, a, b, x, y) with grid seeding and
// 2S x 2S search windows, then 4-connectivity enforcement.

#include "gdc/image.hpp"
#include "gdc/scribble.hpp"

#include <Eigen/Core>

#include <vector>

namespace gdc {

/// sRGB (D65) to CIELAB, one column per pixel in row-major order.
Eigen::Matrix3Xd rgb_to_lab(const RgbImage& image);

struct SlicOptions {
  int n_segments = 0;  // <= 0 picks H*W / 256
  double compactness = 10.0;
  int iters = 10;
  bool enforce_connectivity = true;
};

struct SlicCenter {
  Eigen::Vector3d lab;
  double y = 0;
  double x = 0;
};

/// Grid step S = sqrt(H*W / n_segments).
double slic_step(Index height, Index width, int n_segments);

/// Squared SLIC distance d_lab^2 + (d_xy / S)^2 m^2.
inline double slic_distance_sq(const Eigen::Vector3d& lab, double y, double x, const SlicCenter& c, double step,
                               double compactness) {
  const double dy = y - c.y, dx = x - c.x;
  return (lab - c.lab).squaredNorm() + (dy * dy + dx * dx) / (step * step) * compactness * compactness;
}

/// `centers`, if given, receives the cluster centres used for the final
/// assignment (indexed by the pre-connectivity cluster id).
SuperpixelMap slic(const RgbImage& image, const SlicOptions& options = {}, std::vector<SlicCenter>* centers = nullptr);

inline SuperpixelMap slic(const RgbImage& image, int n_segments, double compactness, int iters) {
  return slic(image, SlicOptions{n_segments, compactness, iters, true});
}

/// Merges every non-largest 4-connected piece of a label into its largest
/// adjacent region and relabels densely in raster order of first appearance.
SuperpixelMap enforce_connectivity(const SuperpixelMap& map);

}  // namespace gdc
