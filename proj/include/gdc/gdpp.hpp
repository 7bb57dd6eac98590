#pragma once

// Gaussian dynamic pyramid pooling: three parallel 3x3 branches over the same
// input, the smallest and largest at fixed dilations and the middle one a
// shared-mode GDC whose radius is delta_base plus a half-Gaussian draw.
// Branch outputs are concatenated and fused by a 1x1 convolution.

#include "gdc/gdc_kernel.hpp"
#include "gdc/graph.hpp"
#include "gdc/tensor.hpp"

#include <vector>

namespace gdc {

struct GdppConfig {
  int small_dilation = 1;
  int large_dilation = 18;
  double delta_base = 9.0;
  double sigma = 2.0;  // pixels; the middle branch never rescales by map size
  int branch_channels = 8;
  int out_channels = 8;
  bool separable = true;

  void validate() const;
  /// GdcConfig of the middle branch.
  GdcConfig middle() const;
};

/// Weights for one module. Separable branches hold a [C,1,3,3] depthwise
/// kernel and a [B,C,1,1] pointwise kernel; full branches a [B,C,3,3] kernel.
template <typename Scalar>
struct GdppParams {
  Index in_channels = 0;
  bool separable = true;
  Parameter<Scalar> small_dw, small_pw, small_b;
  Parameter<Scalar> middle_dw, middle_pw, middle_b;
  Parameter<Scalar> large_dw, large_pw, large_b;
  Parameter<Scalar> fuse_w, fuse_b;

  std::vector<Parameter<Scalar>*> all();
  /// Number of scalar weights.
  Index count();
};

/// He-normal weights, zero biases. Throws ShapeError on an invalid config.
template <typename Scalar>
GdppParams<Scalar> init_gdpp(Index in_channels, const GdppConfig& config, Rng& rng);

/// One middle-branch draw.
OffsetSample sample_gdpp_offsets(Rng& rng, const GdppConfig& config);

/// Graph form. Throws ShapeError if the input channel count does not match.
template <typename Scalar>
Var<Scalar> gdpp_forward(Graph<Scalar>& g, Var<Scalar> input, GdppParams<Scalar>& params, const GdppConfig& config,
                         const OffsetSample& sample);

/// Eager form: draws a sample from `rng` and returns [out_channels, H, W].
template <typename Scalar>
Tensor<Scalar> gdpp_forward(const Tensor<Scalar>& input, GdppParams<Scalar>& params, const GdppConfig& config,
                            Rng& rng);

template <typename Scalar>
struct GdppGrads {
  Tensor<Scalar> input;
  std::vector<Tensor<Scalar>> params;  // in GdppParams::all() order
};

/// Vector-Jacobian product for a fixed sample.
template <typename Scalar>
GdppGrads<Scalar> gdpp_backward(const Tensor<Scalar>& input, GdppParams<Scalar>& params, const GdppConfig& config,
                                const OffsetSample& sample, const Tensor<Scalar>& grad_output);

}  // namespace gdc
