#include "gdc/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace gdc {

namespace {

void require_rank(const Shape& shape, int rank, const char* op, const char* what) {
  if (static_cast<int>(shape.size()) != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must be rank " + std::to_string(rank) + ", got " +
                     to_string(shape));
  }
}

template <typename Scalar>
int check_kernel(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel, const char* op) {
  require_rank(input.shape(), 3, op, "input");
  require_rank(kernel.shape(), 4, op, "kernel");
  if (kernel.dim(2) != kernel.dim(3)) throw ShapeError(std::string(op) + ": kernel must be square");
  if (kernel.dim(2) % 2 == 0) throw ShapeError(std::string(op) + ": kernel size must be odd");
  if (kernel.dim(1) != input.channels()) {
    throw ShapeError(std::string(op) + ": kernel expects " + std::to_string(kernel.dim(1)) +
                     " input channels, got " + std::to_string(input.channels()));
  }
  return static_cast<int>(kernel.dim(2));
}

template <typename Scalar>
void check_depthwise_kernel(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel, const char* op) {
  require_rank(input.shape(), 3, op, "input");
  require_rank(kernel.shape(), 4, op, "kernel");
  if (kernel.dim(0) != input.channels() || kernel.dim(1) != 1) {
    throw ShapeError(std::string(op) + ": depthwise kernel must be [C,1,k,k] with C = " +
                     std::to_string(input.channels()) + ", got " + to_string(kernel.shape()));
  }
  if (kernel.dim(2) != kernel.dim(3) || kernel.dim(2) % 2 == 0) {
    throw ShapeError(std::string(op) + ": kernel must be square with odd size");
  }
}

void check_table(const TapTable& table, Index height, Index width, Index taps, const char* op) {
  if (table.in_height != height || table.in_width != width || table.taps != taps) {
    throw ShapeError(std::string(op) + ": tap table does not match operands");
  }
}

struct Lerp {
  Index i0;
  Index i1;
  double w1;
};

std::vector<Lerp> lerp_axis(Index in, Index out) {
  std::vector<Lerp> axis(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (Index o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    Index i0 = static_cast<Index>(std::floor(src));
    if (i0 >= in - 1) {
      axis[static_cast<std::size_t>(o)] = {in - 1, in - 1, 0.0};
      continue;
    }
    axis[static_cast<std::size_t>(o)] = {i0, i0 + 1, src - static_cast<double>(i0)};
  }
  return axis;
}

}  // namespace

TapTable conv_tap_table(Index height, Index width, int kernel_size, const Conv2dOptions& options) {
  if (kernel_size < 1 || kernel_size % 2 == 0) throw ShapeError("conv: kernel size must be odd");
  if (options.stride < 1) throw ShapeError("conv: stride must be >= 1");
  if (options.pad < 0) throw ShapeError("conv: pad must be >= 0");
  if (options.dilation < 1) throw ShapeError("conv: dilation must be >= 1");
  const Index span = static_cast<Index>(options.dilation) * (kernel_size - 1) + 1;
  const Index padded_h = height + 2 * options.pad;
  const Index padded_w = width + 2 * options.pad;
  if (padded_h < span || padded_w < span) {
    throw ShapeError("conv: input " + std::to_string(height) + "x" + std::to_string(width) +
                     " is smaller than the kernel footprint");
  }
  TapTable table;
  table.taps = kernel_size * kernel_size;
  table.in_height = height;
  table.in_width = width;
  table.out_height = (padded_h - span) / options.stride + 1;
  table.out_width = (padded_w - span) / options.stride + 1;
  const Index positions = table.positions();
  table.source.resize(static_cast<std::size_t>(table.taps * positions));
  for (int ky = 0; ky < kernel_size; ++ky) {
    for (int kx = 0; kx < kernel_size; ++kx) {
      Index* row = table.source.data() + (ky * kernel_size + kx) * positions;
      for (Index oy = 0; oy < table.out_height; ++oy) {
        const Index y = oy * options.stride - options.pad + static_cast<Index>(ky) * options.dilation;
        for (Index ox = 0; ox < table.out_width; ++ox) {
          const Index x = ox * options.stride - options.pad + static_cast<Index>(kx) * options.dilation;
          const bool inside = y >= 0 && y < height && x >= 0 && x < width;
          row[oy * table.out_width + ox] = inside ? y * width + x : -1;
        }
      }
    }
  }
  return table;
}

template <typename Scalar>
typename Tensor<Scalar>::Matrix gather_columns(const Tensor<Scalar>& input, const TapTable& table) {
  const Index channels = input.channels();
  const Index plane = input.height() * input.width();
  const Index positions = table.positions();
  typename Tensor<Scalar>::Matrix columns(channels * table.taps, positions);
  for (Index c = 0; c < channels; ++c) {
    const Scalar* in = input.data() + c * plane;
    for (int t = 0; t < table.taps; ++t) {
      Scalar* row = columns.data() + (c * table.taps + t) * positions;
      const Index* src = table.source.data() + t * positions;
      for (Index p = 0; p < positions; ++p) row[p] = src[p] < 0 ? Scalar(0) : in[src[p]];
    }
  }
  return columns;
}

template <typename Scalar>
Tensor<Scalar> scatter_columns(const typename Tensor<Scalar>::Matrix& columns, const TapTable& table,
                               Index channels) {
  Tensor<Scalar> out({channels, table.in_height, table.in_width});
  const Index plane = table.in_height * table.in_width;
  const Index positions = table.positions();
  for (Index c = 0; c < channels; ++c) {
    Scalar* dst = out.data() + c * plane;
    for (int t = 0; t < table.taps; ++t) {
      const Scalar* row = columns.data() + (c * table.taps + t) * positions;
      const Index* src = table.source.data() + t * positions;
      for (Index p = 0; p < positions; ++p) {
        if (src[p] >= 0) dst[src[p]] += row[p];
      }
    }
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> correlate(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel, const TapTable& table) {
  const int k = check_kernel(input, kernel, "correlate");
  check_table(table, input.height(), input.width(), static_cast<Index>(k) * k, "correlate");
  const auto columns = gather_columns(input, table);
  Tensor<Scalar> out({kernel.dim(0), table.out_height, table.out_width});
  out.matrix().noalias() = kernel.matrix() * columns;
  return out;
}

template <typename Scalar>
ConvGrads<Scalar> correlate_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel,
                                     const TapTable& table, const Tensor<Scalar>& grad_output) {
  check_kernel(input, kernel, "correlate_backward");
  const Shape expected{kernel.dim(0), table.out_height, table.out_width};
  if (grad_output.shape() != expected) {
    throw ShapeError("correlate_backward: upstream gradient has shape " + to_string(grad_output.shape()) +
                     ", expected " + to_string(expected));
  }
  const auto columns = gather_columns(input, table);
  ConvGrads<Scalar> grads;
  grads.kernel = Tensor<Scalar>(kernel.shape());
  grads.kernel.matrix().noalias() = grad_output.matrix() * columns.transpose();
  typename Tensor<Scalar>::Matrix grad_columns = kernel.matrix().transpose() * grad_output.matrix();
  grads.input = scatter_columns<Scalar>(grad_columns, table, input.channels());
  return grads;
}

template <typename Scalar>
Tensor<Scalar> depthwise_correlate(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel,
                                   const TapTable& table) {
  check_depthwise_kernel(input, kernel, "depthwise_correlate");
  const Index taps = kernel.dim(2) * kernel.dim(3);
  check_table(table, input.height(), input.width(), taps, "depthwise_correlate");
  const auto columns = gather_columns(input, table);
  Tensor<Scalar> out({input.channels(), table.out_height, table.out_width});
  auto w = kernel.matrix();  // C x taps
  auto o = out.matrix();
  for (Index c = 0; c < input.channels(); ++c) {
    o.row(c).noalias() = w.row(c) * columns.middleRows(c * taps, taps);
  }
  return out;
}

template <typename Scalar>
ConvGrads<Scalar> depthwise_correlate_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel,
                                               const TapTable& table, const Tensor<Scalar>& grad_output) {
  check_depthwise_kernel(input, kernel, "depthwise_correlate_backward");
  const Index taps = kernel.dim(2) * kernel.dim(3);
  const Shape expected{input.channels(), table.out_height, table.out_width};
  if (grad_output.shape() != expected) {
    throw ShapeError("depthwise_correlate_backward: upstream gradient has shape " +
                     to_string(grad_output.shape()) + ", expected " + to_string(expected));
  }
  const auto columns = gather_columns(input, table);
  ConvGrads<Scalar> grads;
  grads.kernel = Tensor<Scalar>(kernel.shape());
  typename Tensor<Scalar>::Matrix grad_columns(columns.rows(), columns.cols());
  auto w = kernel.matrix();
  auto g = grad_output.matrix();
  auto gw = grads.kernel.matrix();
  for (Index c = 0; c < input.channels(); ++c) {
    gw.row(c).noalias() = g.row(c) * columns.middleRows(c * taps, taps).transpose();
    grad_columns.middleRows(c * taps, taps).noalias() = w.row(c).transpose() * g.row(c);
  }
  grads.input = scatter_columns<Scalar>(grad_columns, table, input.channels());
  return grads;
}

template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel, const Conv2dOptions& options) {
  const int k = check_kernel(input, kernel, "conv2d");
  return correlate(input, kernel, conv_tap_table(input.height(), input.width(), k, options));
}

template <typename Scalar>
ConvGrads<Scalar> conv2d_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel,
                                  const Conv2dOptions& options, const Tensor<Scalar>& grad_output) {
  const int k = check_kernel(input, kernel, "conv2d_backward");
  return correlate_backward(input, kernel, conv_tap_table(input.height(), input.width(), k, options),
                            grad_output);
}

template <typename Scalar>
Tensor<Scalar> depthwise_conv2d(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel,
                                const Conv2dOptions& options) {
  check_depthwise_kernel(input, kernel, "depthwise_conv2d");
  const auto table = conv_tap_table(input.height(), input.width(), static_cast<int>(kernel.dim(2)), options);
  return depthwise_correlate(input, kernel, table);
}

template <typename Scalar>
ConvGrads<Scalar> depthwise_conv2d_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel,
                                            const Conv2dOptions& options, const Tensor<Scalar>& grad_output) {
  check_depthwise_kernel(input, kernel, "depthwise_conv2d_backward");
  const auto table = conv_tap_table(input.height(), input.width(), static_cast<int>(kernel.dim(2)), options);
  return depthwise_correlate_backward(input, kernel, table, grad_output);
}

template <typename Scalar>
Tensor<Scalar> pointwise_conv(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel) {
  require_rank(input.shape(), 3, "pointwise_conv", "input");
  require_rank(kernel.shape(), 4, "pointwise_conv", "kernel");
  if (kernel.dim(2) != 1 || kernel.dim(3) != 1) throw ShapeError("pointwise_conv: kernel must be 1x1");
  if (kernel.dim(1) != input.channels()) {
    throw ShapeError("pointwise_conv: kernel expects " + std::to_string(kernel.dim(1)) + " channels, got " +
                     std::to_string(input.channels()));
  }
  Tensor<Scalar> out({kernel.dim(0), input.height(), input.width()});
  out.matrix().noalias() = kernel.matrix() * input.matrix();
  return out;
}

template <typename Scalar>
ConvGrads<Scalar> pointwise_conv_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel,
                                          const Tensor<Scalar>& grad_output) {
  if (grad_output.shape() != Shape{kernel.dim(0), input.height(), input.width()}) {
    throw ShapeError("pointwise_conv_backward: upstream gradient shape mismatch");
  }
  ConvGrads<Scalar> grads;
  grads.kernel = Tensor<Scalar>(kernel.shape());
  grads.kernel.matrix().noalias() = grad_output.matrix() * input.matrix().transpose();
  grads.input = Tensor<Scalar>(input.shape());
  grads.input.matrix().noalias() = kernel.matrix().transpose() * grad_output.matrix();
  return grads;
}

template <typename Scalar>
Tensor<Scalar> separable_conv(const Tensor<Scalar>& input, const Tensor<Scalar>& depthwise,
                              const Tensor<Scalar>& pointwise, int dilation) {
  check_depthwise_kernel(input, depthwise, "separable_conv");
  const int k = static_cast<int>(depthwise.dim(2));
  const Conv2dOptions options{1, dilation * (k / 2), dilation};
  return pointwise_conv(depthwise_conv2d(input, depthwise, options), pointwise);
}

template <typename Scalar>
Tensor<Scalar> add_channel_bias(const Tensor<Scalar>& input, const Tensor<Scalar>& bias) {
  if (bias.size() != input.dim(0)) {
    throw ShapeError("add_channel_bias: bias has " + std::to_string(bias.size()) + " entries for " +
                     std::to_string(input.dim(0)) + " channels");
  }
  Tensor<Scalar> out = input;
  out.matrix().colwise() += Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(bias.data(), bias.size());
  return out;
}

template <typename Scalar>
Tensor<Scalar> channel_bias_backward(const Tensor<Scalar>& grad_output) {
  Tensor<Scalar> grad({grad_output.dim(0)});
  Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(grad.data(), grad.size()) =
      grad_output.matrix().rowwise().sum();
  return grad;
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& input) {
  return Tensor<Scalar>(input.shape(), input.array().max(Scalar(0)));
}

template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& grad_output) {
  if (!same_shape(input, grad_output)) throw ShapeError("relu_backward: shape mismatch");
  return Tensor<Scalar>(input.shape(), (input.array() > Scalar(0)).select(grad_output.array(), Scalar(0)));
}

template <typename Scalar>
Tensor<Scalar> softmax_channels(const Tensor<Scalar>& logits) {
  require_rank(logits.shape(), 3, "softmax_channels", "input");
  if (logits.channels() == 0) throw ShapeError("softmax_channels: zero channels");
  Tensor<Scalar> out(logits.shape());
  auto z = logits.matrix();
  auto p = out.matrix();
  p = (z.rowwise() - z.colwise().maxCoeff()).array().exp().matrix();
  p.array().rowwise() /= p.colwise().sum().array();
  return out;
}

template <typename Scalar>
Tensor<Scalar> softmax_channels_backward(const Tensor<Scalar>& probs, const Tensor<Scalar>& grad_output) {
  if (!same_shape(probs, grad_output)) throw ShapeError("softmax_channels_backward: shape mismatch");
  Tensor<Scalar> out(probs.shape());
  auto p = probs.matrix();
  auto g = grad_output.matrix();
  const auto dot = (p.array() * g.array()).colwise().sum().eval();
  out.matrix() = (p.array() * (g.array().rowwise() - dot)).matrix();
  return out;
}

template <typename Scalar>
Tensor<Scalar> bilinear_resize(const Tensor<Scalar>& input, Index out_height, Index out_width) {
  require_rank(input.shape(), 3, "bilinear_resize", "input");
  if (out_height <= 0 || out_width <= 0) throw ShapeError("bilinear_resize: target size must be positive");
  if (input.height() == 0 || input.width() == 0) throw ShapeError("bilinear_resize: empty input");
  const auto ys = lerp_axis(input.height(), out_height);
  const auto xs = lerp_axis(input.width(), out_width);
  Tensor<Scalar> out({input.channels(), out_height, out_width});
  for (Index c = 0; c < input.channels(); ++c) {
    for (Index y = 0; y < out_height; ++y) {
      const Lerp& ly = ys[static_cast<std::size_t>(y)];
      for (Index x = 0; x < out_width; ++x) {
        const Lerp& lx = xs[static_cast<std::size_t>(x)];
        const double top = (1 - lx.w1) * input(c, ly.i0, lx.i0) + lx.w1 * input(c, ly.i0, lx.i1);
        const double bottom = (1 - lx.w1) * input(c, ly.i1, lx.i0) + lx.w1 * input(c, ly.i1, lx.i1);
        out(c, y, x) = static_cast<Scalar>((1 - ly.w1) * top + ly.w1 * bottom);
      }
    }
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> bilinear_resize_backward(const Shape& input_shape, const Tensor<Scalar>& grad_output) {
  require_rank(input_shape, 3, "bilinear_resize_backward", "input");
  const auto ys = lerp_axis(input_shape[1], grad_output.height());
  const auto xs = lerp_axis(input_shape[2], grad_output.width());
  Tensor<Scalar> grad(input_shape);
  for (Index c = 0; c < input_shape[0]; ++c) {
    for (Index y = 0; y < grad_output.height(); ++y) {
      const Lerp& ly = ys[static_cast<std::size_t>(y)];
      for (Index x = 0; x < grad_output.width(); ++x) {
        const Lerp& lx = xs[static_cast<std::size_t>(x)];
        const double g = grad_output(c, y, x);
        grad(c, ly.i0, lx.i0) += static_cast<Scalar>(g * (1 - ly.w1) * (1 - lx.w1));
        grad(c, ly.i0, lx.i1) += static_cast<Scalar>(g * (1 - ly.w1) * lx.w1);
        grad(c, ly.i1, lx.i0) += static_cast<Scalar>(g * ly.w1 * (1 - lx.w1));
        grad(c, ly.i1, lx.i1) += static_cast<Scalar>(g * ly.w1 * lx.w1);
      }
    }
  }
  return grad;
}

template <typename Scalar>
Tensor<Scalar> concat_channels(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_rank(a.shape(), 3, "concat_channels", "first operand");
  require_rank(b.shape(), 3, "concat_channels", "second operand");
  if (a.height() != b.height() || a.width() != b.width()) {
    throw ShapeError("concat_channels: spatial sizes differ: " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
  Tensor<Scalar> out({a.channels() + b.channels(), a.height(), a.width()});
  out.array().head(a.size()) = a.array();
  out.array().tail(b.size()) = b.array();
  return out;
}

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (!same_shape(a, b)) throw ShapeError("add: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  return Tensor<Scalar>(a.shape(), a.array() + b.array());
}

namespace {

template <typename Scalar>
void check_loss_operands(const Tensor<Scalar>& probs, const LabelMask& labels, std::span<const double> weights) {
  require_rank(probs.shape(), 3, "weighted_ce_loss", "probs");
  if (labels.height != probs.height() || labels.width != probs.width()) {
    throw ShapeError("weighted_ce_loss: label mask size differs from probabilities");
  }
  if (static_cast<Index>(weights.size()) < probs.channels()) {
    throw ShapeError("weighted_ce_loss: need one weight per category");
  }
}

}  // namespace

template <typename Scalar>
Scalar weighted_ce_loss(const Tensor<Scalar>& probs, const LabelMask& labels, std::span<const double> weights,
                        LossReduction reduction, LossStats* stats) {
  check_loss_operands(probs, labels, weights);
  const Index plane = probs.height() * probs.width();
  double total = 0;
  Index labeled = 0;
  Index clamped = 0;
  for (Index p = 0; p < plane; ++p) {
    const int c = labels.labels[static_cast<std::size_t>(p)];
    if (c == LabelMask::kUnlabeled) continue;
    if (c < 0 || c >= probs.channels()) throw ShapeError("weighted_ce_loss: label out of range");
    double prob = probs.data()[c * plane + p];
    if (prob < kProbabilityFloor) {
      prob = kProbabilityFloor;
      ++clamped;
    }
    total -= weights[static_cast<std::size_t>(c)] * std::log(prob);
    ++labeled;
  }
  if (stats) *stats = {labeled, clamped};
  if (reduction == LossReduction::mean && labeled > 0) total /= static_cast<double>(labeled);
  return static_cast<Scalar>(total);
}

template <typename Scalar>
Tensor<Scalar> weighted_ce_loss_backward(const Tensor<Scalar>& probs, const LabelMask& labels,
                                         std::span<const double> weights, LossReduction reduction) {
  check_loss_operands(probs, labels, weights);
  const Index plane = probs.height() * probs.width();
  const Index labeled = labels.labeled_count();
  const double norm = reduction == LossReduction::mean && labeled > 0 ? 1.0 / static_cast<double>(labeled) : 1.0;
  Tensor<Scalar> grad(probs.shape());
  for (Index p = 0; p < plane; ++p) {
    const int c = labels.labels[static_cast<std::size_t>(p)];
    if (c == LabelMask::kUnlabeled) continue;
    const double prob = probs.data()[c * plane + p];
    // the clamp is flat below the floor
    if (prob >= kProbabilityFloor) {
      grad.data()[c * plane + p] = static_cast<Scalar>(-weights[static_cast<std::size_t>(c)] * norm / prob);
    }
  }
  return grad;
}

#define GDC_INSTANTIATE_OPS(S)                                                                              \
  template typename Tensor<S>::Matrix gather_columns(const Tensor<S>&, const TapTable&);                   \
  template Tensor<S> scatter_columns<S>(const typename Tensor<S>::Matrix&, const TapTable&, Index);        \
  template Tensor<S> correlate(const Tensor<S>&, const Tensor<S>&, const TapTable&);                       \
  template ConvGrads<S> correlate_backward(const Tensor<S>&, const Tensor<S>&, const TapTable&,            \
                                           const Tensor<S>&);                                              \
  template Tensor<S> depthwise_correlate(const Tensor<S>&, const Tensor<S>&, const TapTable&);             \
  template ConvGrads<S> depthwise_correlate_backward(const Tensor<S>&, const Tensor<S>&, const TapTable&,  \
                                                     const Tensor<S>&);                                    \
  template Tensor<S> conv2d(const Tensor<S>&, const Tensor<S>&, const Conv2dOptions&);                     \
  template ConvGrads<S> conv2d_backward(const Tensor<S>&, const Tensor<S>&, const Conv2dOptions&,          \
                                        const Tensor<S>&);                                                 \
  template Tensor<S> depthwise_conv2d(const Tensor<S>&, const Tensor<S>&, const Conv2dOptions&);           \
  template ConvGrads<S> depthwise_conv2d_backward(const Tensor<S>&, const Tensor<S>&, const Conv2dOptions&, \
                                                  const Tensor<S>&);                                       \
  template Tensor<S> pointwise_conv(const Tensor<S>&, const Tensor<S>&);                                   \
  template ConvGrads<S> pointwise_conv_backward(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);     \
  template Tensor<S> separable_conv(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, int);            \
  template Tensor<S> add_channel_bias(const Tensor<S>&, const Tensor<S>&);                                 \
  template Tensor<S> channel_bias_backward(const Tensor<S>&);                                              \
  template Tensor<S> relu(const Tensor<S>&);                                                               \
  template Tensor<S> relu_backward(const Tensor<S>&, const Tensor<S>&);                                    \
  template Tensor<S> softmax_channels(const Tensor<S>&);                                                   \
  template Tensor<S> softmax_channels_backward(const Tensor<S>&, const Tensor<S>&);                        \
  template Tensor<S> bilinear_resize(const Tensor<S>&, Index, Index);                                      \
  template Tensor<S> bilinear_resize_backward(const Shape&, const Tensor<S>&);                             \
  template Tensor<S> concat_channels(const Tensor<S>&, const Tensor<S>&);                                  \
  template Tensor<S> add(const Tensor<S>&, const Tensor<S>&);                                              \
  template S weighted_ce_loss(const Tensor<S>&, const LabelMask&, std::span<const double>, LossReduction,  \
                              LossStats*);                                                                 \
  template Tensor<S> weighted_ce_loss_backward(const Tensor<S>&, const LabelMask&, std::span<const double>, \
                                               LossReduction);

GDC_INSTANTIATE_OPS(float)
GDC_INSTANTIATE_OPS(double)

}  // namespace gdc
