#pragma once

// Gaussian dynamic convolution.
//
// A k x k kernel keeps its centre tap fixed and displaces every other tap
// along its direction e in {-r..r}^2 by an offset drawn from a half-Gaussian:
//
//   tap_i = c + round(eff_i (*) e_i),   eff_i = s * delta_i            (per-direction)
//                                       eff   = delta_base + s * delta (shared)
//
// where (*) is the elementwise product and s the adaptive scale. Once an
// OffsetSample is fixed the operator is an ordinary linear gather + GEMM, so
// gradients flow to the kernel and the input but never to the offsets.

#include "gdc/graph.hpp"
#include "gdc/ops.hpp"
#include "gdc/tensor.hpp"

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

namespace gdc {

using Rng = std::mt19937_64;
using Offset = Eigen::Vector2d;                // <row, col>, non-negative
using Coord = Eigen::Matrix<Index, 2, 1>;       // <row, col>
using Direction = Eigen::Vector2i;

enum class OffsetMode { per_direction, shared };
enum class OffsetSharing { per_forward, per_position };
enum class OffsetDistribution { half_gaussian, uniform };

struct GdcConfig {
  double sigma = 0.2;
  int kernel_size = 3;
  OffsetMode mode = OffsetMode::per_direction;
  double delta_base = 0.0;  // shared mode only
  bool adaptive_scale = true;
  OffsetSharing sharing = OffsetSharing::per_forward;
  OffsetDistribution distribution = OffsetDistribution::half_gaussian;
  double uniform_range = 1.0;  // offsets ~ U[0, uniform_range] for the uniform ablation

  void validate() const;
};

/// Row-major {-r..r}^2 grid; for k = 3 this is <-1,-1>, <-1,0>, ..., <1,1> with <0,0> at index 4.
std::vector<Direction> direction_basis(int kernel_size);
inline int center_direction(int kernel_size) { return kernel_size * kernel_size / 2; }

struct OffsetSample {
  OffsetMode mode = OffsetMode::per_direction;
  OffsetSharing sharing = OffsetSharing::per_forward;
  int kernel_size = 3;
  std::vector<Offset> offsets;  // positions x offsets_per_position()
  double delta_base = 0.0;
  double scale = 1.0;
  std::uint64_t seed = 0;
  Index positions = 1;  // 1 unless sharing == per_position

  int offsets_per_position() const {
    return mode == OffsetMode::shared ? 1 : kernel_size * kernel_size - 1;
  }

  /// Effective displacement for basis direction `direction` (never the centre).
  Offset effective(int direction, Index position = 0) const;

  void validate() const;
  bool operator==(const OffsetSample&) const = default;
};

/// |z| with z ~ Normal(0, sigma^2). sigma == 0 returns exactly 0.
double half_gaussian_sample(Rng& rng, double sigma);
/// sqrt(2) / (sigma sqrt(pi)) * exp(-x^2 / (2 sigma^2)) on x >= 0.
double half_gaussian_density(double x, double sigma);
double half_gaussian_cdf(double x, double sigma);
inline double half_gaussian_mean(double sigma) { return sigma * 0.79788456080286535588; }

/// Draws one OffsetSample. `short_side` is the adaptive scale s when
/// config.adaptive_scale is set; `positions` is the map size for per-position sharing.
OffsetSample sample_offsets(Rng& rng, const GdcConfig& config, Index short_side, Index positions = 1);

/// Sample with every offset pinned to `value` (scale 1), for degeneracy checks.
OffsetSample pinned_offsets(OffsetMode mode, const Offset& value, double delta_base = 0.0, int kernel_size = 3);

/// All k*k tap coordinates for output position `c`, clamped into the map.
std::vector<Coord> taps_for_position(const Coord& c, const OffsetSample& sample, Index height, Index width);

TapTable gdc_tap_table(const OffsetSample& sample, Index height, Index width);

/// Same-size, stride-1 dynamic convolution for a fixed sample.
template <typename Scalar>
Tensor<Scalar> gdc_forward(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel, const OffsetSample& sample);

template <typename Scalar>
ConvGrads<Scalar> gdc_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel,
                               const OffsetSample& sample, const Tensor<Scalar>& grad_output);

/// Stateful form that remembers the sample it ran forward with and refuses a
/// backward pass against a different one.
template <typename Scalar>
class GdcOperator {
 public:
  explicit GdcOperator(OffsetSample sample) : sample_(std::move(sample)) {}

  Tensor<Scalar> forward(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel);
  /// Throws std::logic_error if forward() has not run or `sample` differs from it.
  ConvGrads<Scalar> backward(const Tensor<Scalar>& grad_output, const OffsetSample& sample) const;

  const OffsetSample& sample() const { return sample_; }

 private:
  OffsetSample sample_;
  std::optional<TapTable> table_;
  Tensor<Scalar> input_;
  Tensor<Scalar> kernel_;
};

template <typename Scalar>
Var<Scalar> gdc_conv(Var<Scalar> input, Var<Scalar> kernel, const OffsetSample& sample);

/// Per-channel variant; kernel is [C, 1, k, k].
template <typename Scalar>
Var<Scalar> gdc_depthwise_conv(Var<Scalar> input, Var<Scalar> kernel, const OffsetSample& sample);

void to_json(nlohmann::json& j, const OffsetSample& sample);
void from_json(const nlohmann::json& j, OffsetSample& sample);

const char* to_string(OffsetMode mode);
const char* to_string(OffsetSharing sharing);

}  // namespace gdc
