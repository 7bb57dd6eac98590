#pragma once

// Eager forward operations and their vector-Jacobian products.
//
// Every convolution flavour (plain, strided, dilated, Gaussian dynamic) is a
// gather of input pixels into a column matrix followed by one GEMM; the
// flavours differ only in how the TapTable of source pixels is built.

#include "gdc/label_mask.hpp"
#include "gdc/tensor.hpp"

#include <span>
#include <vector>

namespace gdc {

struct Conv2dOptions {
  int stride = 1;
  int pad = 0;
  int dilation = 1;
};

/// Source pixel for every (tap, output position) pair. -1 reads as zero.
struct TapTable {
  int taps = 0;
  Index in_height = 0;
  Index in_width = 0;
  Index out_height = 0;
  Index out_width = 0;
  std::vector<Index> source;  // taps x positions, tap-major

  Index positions() const { return out_height * out_width; }
  Index at(int tap, Index position) const {
    return source[static_cast<std::size_t>(tap * positions() + position)];
  }
};

/// Zero-padded cross-correlation taps for a k x k kernel.
TapTable conv_tap_table(Index height, Index width, int kernel_size, const Conv2dOptions& options);

template <typename Scalar>
struct ConvGrads {
  Tensor<Scalar> input;
  Tensor<Scalar> kernel;
};

template <typename Scalar>
typename Tensor<Scalar>::Matrix gather_columns(const Tensor<Scalar>& input, const TapTable& table);

/// Adjoint of gather_columns: accumulates column rows back onto their source pixels.
template <typename Scalar>
Tensor<Scalar> scatter_columns(const typename Tensor<Scalar>::Matrix& columns, const TapTable& table,
                               Index channels);

/// output[o, p] = sum_{c,t} kernel[o, c, t] * input[c, table(t, p)]
template <typename Scalar>
Tensor<Scalar> correlate(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel, const TapTable& table);

template <typename Scalar>
ConvGrads<Scalar> correlate_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel,
                                     const TapTable& table, const Tensor<Scalar>& grad_output);

/// Per-channel correlation; kernel is [C, 1, k, k].
template <typename Scalar>
Tensor<Scalar> depthwise_correlate(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel,
                                   const TapTable& table);

template <typename Scalar>
ConvGrads<Scalar> depthwise_correlate_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel,
                                               const TapTable& table, const Tensor<Scalar>& grad_output);

// Output size is (H + 2*pad - dilation*(k-1) - 1) / stride + 1.
template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel,
                      const Conv2dOptions& options = {});

template <typename Scalar>
ConvGrads<Scalar> conv2d_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel,
                                  const Conv2dOptions& options, const Tensor<Scalar>& grad_output);

template <typename Scalar>
Tensor<Scalar> depthwise_conv2d(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel,
                                const Conv2dOptions& options = {});

template <typename Scalar>
ConvGrads<Scalar> depthwise_conv2d_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel,
                                            const Conv2dOptions& options, const Tensor<Scalar>& grad_output);

template <typename Scalar>
Tensor<Scalar> pointwise_conv(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel);

template <typename Scalar>
ConvGrads<Scalar> pointwise_conv_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel,
                                          const Tensor<Scalar>& grad_output);

/// Depthwise filtering then pointwise mixing, "same" padding at the given dilation.
template <typename Scalar>
Tensor<Scalar> separable_conv(const Tensor<Scalar>& input, const Tensor<Scalar>& depthwise,
                              const Tensor<Scalar>& pointwise, int dilation = 1);

template <typename Scalar>
Tensor<Scalar> add_channel_bias(const Tensor<Scalar>& input, const Tensor<Scalar>& bias);

/// Gradient wrt the bias: per-channel sum of grad_output.
template <typename Scalar>
Tensor<Scalar> channel_bias_backward(const Tensor<Scalar>& grad_output);

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& input);

template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& grad_output);

template <typename Scalar>
Tensor<Scalar> softmax_channels(const Tensor<Scalar>& logits);

template <typename Scalar>
Tensor<Scalar> softmax_channels_backward(const Tensor<Scalar>& probs, const Tensor<Scalar>& grad_output);

/// Half-pixel-centre bilinear interpolation (align_corners = false), edge clamped.
template <typename Scalar>
Tensor<Scalar> bilinear_resize(const Tensor<Scalar>& input, Index out_height, Index out_width);

template <typename Scalar>
Tensor<Scalar> bilinear_resize_backward(const Shape& input_shape, const Tensor<Scalar>& grad_output);

template <typename Scalar>
Tensor<Scalar> concat_channels(const Tensor<Scalar>& a, const Tensor<Scalar>& b);

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b);

enum class LossReduction { sum, mean };

struct LossStats {
  Index labeled_pixels = 0;
  Index clamped_pixels = 0;  // labeled pixels whose probability fell below the clamp floor
};

inline constexpr double kProbabilityFloor = 1e-12;

/// -sum over labeled pixels of w[label] * log p[label], optionally divided by the
/// labeled pixel count. Unlabeled pixels contribute nothing.
template <typename Scalar>
Scalar weighted_ce_loss(const Tensor<Scalar>& probs, const LabelMask& labels, std::span<const double> weights,
                        LossReduction reduction = LossReduction::mean, LossStats* stats = nullptr);

template <typename Scalar>
Tensor<Scalar> weighted_ce_loss_backward(const Tensor<Scalar>& probs, const LabelMask& labels,
                                         std::span<const double> weights,
                                         LossReduction reduction = LossReduction::mean);

}  // namespace gdc
