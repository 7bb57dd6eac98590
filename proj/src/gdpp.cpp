#include "gdc/gdpp.hpp"

#include <cmath>
#include <string>

namespace gdc {
namespace {

constexpr int kTaps = 3;

template <typename Scalar>
void init_branch(const std::string& name, Index c, const GdppConfig& config, Rng& rng, Parameter<Scalar>& dw,
                 Parameter<Scalar>& pw, Parameter<Scalar>& b) {
  const Index bc = config.branch_channels;
  if (config.separable) {
    dw = he_normal<Scalar>(name + ".dw.weight", {c, 1, kTaps, kTaps}, kTaps * kTaps, rng);
    pw = he_normal<Scalar>(name + ".pw.weight", {bc, c, 1, 1}, c, rng);
  } else {
    dw = he_normal<Scalar>(name + ".weight", {bc, c, kTaps, kTaps}, c * kTaps * kTaps, rng);
  }
  b = zero_parameter<Scalar>(name + ".bias", bc);
}

// relu(bias + pw(dw_dilated(x))) or its full-convolution counterpart.
template <typename Scalar>
Var<Scalar> fixed_branch(Graph<Scalar>& g, Var<Scalar> x, Parameter<Scalar>& dw, Parameter<Scalar>& pw,
                         Parameter<Scalar>& b, int dilation, bool separable) {
  const Conv2dOptions options{1, dilation, dilation};
  Var<Scalar> y = separable ? pointwise_conv(depthwise_conv2d(x, g.parameter(dw), options), g.parameter(pw))
                            : conv2d(x, g.parameter(dw), options);
  return relu(add_channel_bias(y, g.parameter(b)));
}

template <typename Scalar>
Var<Scalar> dynamic_branch(Graph<Scalar>& g, Var<Scalar> x, Parameter<Scalar>& dw, Parameter<Scalar>& pw,
                           Parameter<Scalar>& b, const OffsetSample& sample, bool separable) {
  Var<Scalar> y = separable ? pointwise_conv(gdc_depthwise_conv(x, g.parameter(dw), sample), g.parameter(pw))
                            : gdc_conv(x, g.parameter(dw), sample);
  return relu(add_channel_bias(y, g.parameter(b)));
}

}  // namespace

void GdppConfig::validate() const {
  if (small_dilation < 1) throw ShapeError("GdppConfig: small_dilation must be >= 1");
  if (!(small_dilation <= delta_base && delta_base <= large_dilation) || !std::isfinite(delta_base)) {
    throw ShapeError("GdppConfig: need small_dilation <= delta_base <= large_dilation");
  }
  if (!(sigma >= 0) || !std::isfinite(sigma)) throw ShapeError("GdppConfig: sigma must be finite and >= 0");
  if (branch_channels < 1 || out_channels < 1) throw ShapeError("GdppConfig: channel counts must be >= 1");
}

GdcConfig GdppConfig::middle() const {
  GdcConfig c;
  c.sigma = sigma;
  c.kernel_size = kTaps;
  c.mode = OffsetMode::shared;
  c.delta_base = delta_base;
  c.adaptive_scale = false;
  return c;
}

template <typename Scalar>
std::vector<Parameter<Scalar>*> GdppParams<Scalar>::all() {
  if (separable) {
    return {&small_dw, &small_pw, &small_b, &middle_dw, &middle_pw, &middle_b,
            &large_dw, &large_pw, &large_b, &fuse_w,    &fuse_b};
  }
  return {&small_dw, &small_b, &middle_dw, &middle_b, &large_dw, &large_b, &fuse_w, &fuse_b};
}

template <typename Scalar>
Index GdppParams<Scalar>::count() {
  Index n = 0;
  for (const Parameter<Scalar>* p : all()) n += p->value.size();
  return n;
}

template <typename Scalar>
GdppParams<Scalar> init_gdpp(Index in_channels, const GdppConfig& config, Rng& rng) {
  config.validate();
  if (in_channels < 1) throw ShapeError("gdpp: in_channels must be >= 1");
  GdppParams<Scalar> p;
  p.in_channels = in_channels;
  p.separable = config.separable;
  init_branch("gdpp.small", in_channels, config, rng, p.small_dw, p.small_pw, p.small_b);
  init_branch("gdpp.middle", in_channels, config, rng, p.middle_dw, p.middle_pw, p.middle_b);
  init_branch("gdpp.large", in_channels, config, rng, p.large_dw, p.large_pw, p.large_b);
  const Index cat = 3 * static_cast<Index>(config.branch_channels);
  p.fuse_w = he_normal<Scalar>("gdpp.fuse.weight", {config.out_channels, cat, 1, 1}, cat, rng);
  p.fuse_b = zero_parameter<Scalar>("gdpp.fuse.bias", config.out_channels);
  return p;
}

OffsetSample sample_gdpp_offsets(Rng& rng, const GdppConfig& config) {
  config.validate();
  return sample_offsets(rng, config.middle(), 1);
}

template <typename Scalar>
Var<Scalar> gdpp_forward(Graph<Scalar>& g, Var<Scalar> input, GdppParams<Scalar>& params, const GdppConfig& config,
                         const OffsetSample& sample) {
  config.validate();
  const Tensor<Scalar>& x = input.value();
  if (x.rank() != 3 || x.channels() != params.in_channels) {
    throw ShapeError("gdpp: expected [" + std::to_string(params.in_channels) + ",H,W] input, got " +
                     to_string(x.shape()));
  }
  if (params.separable != config.separable) throw ShapeError("gdpp: params and config disagree on separable");
  if (sample.mode != OffsetMode::shared) throw ShapeError("gdpp: middle branch needs a shared-mode sample");
  const bool sep = config.separable;
  Var<Scalar> small = fixed_branch(g, input, params.small_dw, params.small_pw, params.small_b,
                                   config.small_dilation, sep);
  Var<Scalar> middle = dynamic_branch(g, input, params.middle_dw, params.middle_pw, params.middle_b, sample, sep);
  Var<Scalar> large = fixed_branch(g, input, params.large_dw, params.large_pw, params.large_b,
                                   config.large_dilation, sep);
  Var<Scalar> cat = concat_channels(concat_channels(small, middle), large);
  return add_channel_bias(pointwise_conv(cat, g.parameter(params.fuse_w)), g.parameter(params.fuse_b));
}

template <typename Scalar>
Tensor<Scalar> gdpp_forward(const Tensor<Scalar>& input, GdppParams<Scalar>& params, const GdppConfig& config,
                            Rng& rng) {
  const OffsetSample sample = sample_gdpp_offsets(rng, config);
  Graph<Scalar> g;
  return gdpp_forward(g, g.constant(input), params, config, sample).value();
}

template <typename Scalar>
GdppGrads<Scalar> gdpp_backward(const Tensor<Scalar>& input, GdppParams<Scalar>& params, const GdppConfig& config,
                                const OffsetSample& sample, const Tensor<Scalar>& grad_output) {
  Graph<Scalar> g;
  Var<Scalar> x = g.variable(input);
  Var<Scalar> y = gdpp_forward(g, x, params, config, sample);
  if (y.shape() != grad_output.shape()) {
    throw ShapeError("gdpp: grad_output shape " + to_string(grad_output.shape()) + " != output " +
                     to_string(y.shape()));
  }
  // <y, grad_output> has gradient grad_output wrt y.
  Tensor<Scalar> dot({1});
  dot.values()[0] = (y.value().array() * grad_output.array()).sum();
  Var<Scalar> target = g.record("dot", std::move(dot), {y}, [grad_output](const Tensor<Scalar>& go) {
    Tensor<Scalar> gy = grad_output;
    gy.array() *= go.values()[0];
    return std::vector<Tensor<Scalar>>{std::move(gy)};
  });
  g.backward(target);
  GdppGrads<Scalar> out;
  out.input = g.grad(x);
  for (Parameter<Scalar>* p : params.all()) out.params.push_back(p->grad);
  return out;
}

#define GDC_INSTANTIATE_GDPP(S)                                                                                  \
  template struct GdppParams<S>;                                                                                \
  template GdppParams<S> init_gdpp(Index, const GdppConfig&, Rng&);                                             \
  template Var<S> gdpp_forward(Graph<S>&, Var<S>, GdppParams<S>&, const GdppConfig&, const OffsetSample&);      \
  template Tensor<S> gdpp_forward(const Tensor<S>&, GdppParams<S>&, const GdppConfig&, Rng&);                   \
  template GdppGrads<S> gdpp_backward(const Tensor<S>&, GdppParams<S>&, const GdppConfig&, const OffsetSample&, \
                                      const Tensor<S>&);

GDC_INSTANTIATE_GDPP(float)
GDC_INSTANTIATE_GDPP(double)

}  // namespace gdc
