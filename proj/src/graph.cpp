#include "gdc/graph.hpp"

#include <stdexcept>

namespace gdc {

template <typename Scalar>
Var<Scalar> Graph<Scalar>::push(Node node) {
  if (backward_done_) throw std::logic_error("graph: cannot record after backward");
  nodes_.push_back(std::move(node));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

template <typename Scalar>
const typename Graph<Scalar>::Node& Graph<Scalar>::node(Var<Scalar> v) const {
  if (v.graph != this || v.id < 0 || v.id >= static_cast<int>(nodes_.size())) {
    throw std::logic_error("graph: variable does not belong to this graph");
  }
  return nodes_[static_cast<std::size_t>(v.id)];
}

template <typename Scalar>
Var<Scalar> Graph<Scalar>::constant(Tensor<Scalar> value) {
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  return push(std::move(n));
}

template <typename Scalar>
Var<Scalar> Graph<Scalar>::variable(Tensor<Scalar> value) {
  Node n;
  n.op = "variable";
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

template <typename Scalar>
Var<Scalar> Graph<Scalar>::parameter(Parameter<Scalar>& p) {
  if (auto it = parameter_nodes_.find(&p); it != parameter_nodes_.end()) return {this, it->second};
  Node n;
  n.op = "parameter:" + p.name;
  n.value = p.value;
  n.requires_grad = !p.frozen;
  n.parameter = &p;
  Var<Scalar> v = push(std::move(n));
  parameter_nodes_.emplace(&p, v.id);
  return v;
}

template <typename Scalar>
Var<Scalar> Graph<Scalar>::record(std::string op, Tensor<Scalar> value, std::vector<Var<Scalar>> inputs,
                                  BackwardFn backward) {
  require_finite(value, op.c_str());
  Node n;
  n.op = std::move(op);
  n.value = std::move(value);
  for (const auto& in : inputs) {
    node(in);  // ownership check
    n.inputs.push_back(in.id);
    n.requires_grad = n.requires_grad || nodes_[static_cast<std::size_t>(in.id)].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

template <typename Scalar>
const Tensor<Scalar>& Graph<Scalar>::value(Var<Scalar> v) const {
  return node(v).value;
}

template <typename Scalar>
Tensor<Scalar> Graph<Scalar>::grad(Var<Scalar> v) const {
  const Node& n = node(v);
  return n.grad.empty() ? Tensor<Scalar>(n.value.shape()) : n.grad;
}

template <typename Scalar>
void Graph<Scalar>::backward(Var<Scalar> loss) {
  if (nodes_.empty()) throw std::logic_error("graph: backward called before any forward pass");
  if (backward_done_) throw std::logic_error("graph: backward already ran; rebuild the graph");
  const Node& target = node(loss);
  if (target.value.size() != 1) throw std::logic_error("graph: backward target must be a scalar");
  backward_done_ = true;

  nodes_[static_cast<std::size_t>(loss.id)].grad = Tensor<Scalar>::constant(target.value.shape(), Scalar(1));
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    std::vector<Tensor<Scalar>> input_grads = n.backward(n.grad);
    for (std::size_t k = 0; k < n.inputs.size() && k < input_grads.size(); ++k) {
      Node& in = nodes_[static_cast<std::size_t>(n.inputs[k])];
      if (!in.requires_grad || input_grads[k].empty()) continue;
      if (input_grads[k].shape() != in.value.shape()) {
        throw std::logic_error("graph: op '" + n.op + "' produced a gradient of shape " +
                               to_string(input_grads[k].shape()) + " for input of shape " +
                               to_string(in.value.shape()));
      }
      if (in.grad.empty()) {
        in.grad = std::move(input_grads[k]);
      } else {
        in.grad.array() += input_grads[k].array();
      }
    }
  }
  for (const auto& [param, id] : parameter_nodes_) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    auto* p = const_cast<Parameter<Scalar>*>(param);
    p->grad = n.grad.empty() || p->frozen ? Tensor<Scalar>(p->value.shape()) : n.grad;
  }
}

template <typename Scalar>
void sgd_step(std::span<Parameter<Scalar>* const> params, double lr) {
  for (Parameter<Scalar>* p : params) {
    if (p->frozen || p->grad.empty()) continue;
    if (!same_shape(p->value, p->grad)) throw ShapeError("sgd_step: gradient shape mismatch for " + p->name);
    p->value.array() -= static_cast<Scalar>(lr) * p->grad.array();
  }
}

template <typename Scalar>
void SgdOptimizer<Scalar>::step(std::span<Parameter<Scalar>* const> params) {
  if (momentum_ == 0.0) {
    sgd_step(params, lr_);
    return;
  }
  if (velocity_.size() != params.size()) {
    velocity_.clear();
    for (Parameter<Scalar>* p : params) velocity_.emplace_back(p->value.shape());
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter<Scalar>* p = params[i];
    if (p->frozen || p->grad.empty()) continue;
    velocity_[i].array() = static_cast<Scalar>(momentum_) * velocity_[i].array() + p->grad.array();
    p->value.array() -= static_cast<Scalar>(lr_) * velocity_[i].array();
  }
}

// ---- differentiable ops ----

template <typename Scalar>
Var<Scalar> correlate(Var<Scalar> input, Var<Scalar> kernel, TapTable table, std::string op) {
  Graph<Scalar>& g = *input.graph;
  const Tensor<Scalar>& x = input.value();
  const Tensor<Scalar>& k = kernel.value();
  Tensor<Scalar> out = gdc::correlate(x, k, table);
  return g.record(std::move(op), std::move(out), {input, kernel},
                  [x, k, table = std::move(table)](const Tensor<Scalar>& go) {
                    auto grads = correlate_backward(x, k, table, go);
                    return std::vector<Tensor<Scalar>>{std::move(grads.input), std::move(grads.kernel)};
                  });
}

template <typename Scalar>
Var<Scalar> depthwise_correlate(Var<Scalar> input, Var<Scalar> kernel, TapTable table, std::string op) {
  Graph<Scalar>& g = *input.graph;
  const Tensor<Scalar>& x = input.value();
  const Tensor<Scalar>& k = kernel.value();
  Tensor<Scalar> out = gdc::depthwise_correlate(x, k, table);
  return g.record(std::move(op), std::move(out), {input, kernel},
                  [x, k, table = std::move(table)](const Tensor<Scalar>& go) {
                    auto grads = depthwise_correlate_backward(x, k, table, go);
                    return std::vector<Tensor<Scalar>>{std::move(grads.input), std::move(grads.kernel)};
                  });
}

template <typename Scalar>
Var<Scalar> conv2d(Var<Scalar> input, Var<Scalar> kernel, const Conv2dOptions& options) {
  const Tensor<Scalar>& x = input.value();
  const Tensor<Scalar>& k = kernel.value();
  if (k.rank() != 4) throw ShapeError("conv2d: kernel must be rank 4");
  if (x.rank() != 3) throw ShapeError("conv2d: input must be rank 3");
  return correlate(input, kernel, conv_tap_table(x.height(), x.width(), static_cast<int>(k.dim(2)), options),
                   "conv2d");
}

template <typename Scalar>
Var<Scalar> depthwise_conv2d(Var<Scalar> input, Var<Scalar> kernel, const Conv2dOptions& options) {
  Graph<Scalar>& g = *input.graph;
  const Tensor<Scalar>& x = input.value();
  const Tensor<Scalar>& k = kernel.value();
  Tensor<Scalar> out = gdc::depthwise_conv2d(x, k, options);
  return g.record("depthwise_conv2d", std::move(out), {input, kernel}, [x, k, options](const Tensor<Scalar>& go) {
    auto grads = depthwise_conv2d_backward(x, k, options, go);
    return std::vector<Tensor<Scalar>>{std::move(grads.input), std::move(grads.kernel)};
  });
}

template <typename Scalar>
Var<Scalar> pointwise_conv(Var<Scalar> input, Var<Scalar> kernel) {
  Graph<Scalar>& g = *input.graph;
  const Tensor<Scalar>& x = input.value();
  const Tensor<Scalar>& k = kernel.value();
  Tensor<Scalar> out = gdc::pointwise_conv(x, k);
  return g.record("pointwise_conv", std::move(out), {input, kernel}, [x, k](const Tensor<Scalar>& go) {
    auto grads = pointwise_conv_backward(x, k, go);
    return std::vector<Tensor<Scalar>>{std::move(grads.input), std::move(grads.kernel)};
  });
}

template <typename Scalar>
Var<Scalar> separable_conv(Var<Scalar> input, Var<Scalar> depthwise, Var<Scalar> pointwise, int dilation) {
  const Index k = depthwise.value().dim(2);
  const Conv2dOptions options{1, dilation * static_cast<int>(k / 2), dilation};
  return pointwise_conv(depthwise_conv2d(input, depthwise, options), pointwise);
}

template <typename Scalar>
Var<Scalar> add_channel_bias(Var<Scalar> input, Var<Scalar> bias) {
  Graph<Scalar>& g = *input.graph;
  Tensor<Scalar> out = gdc::add_channel_bias(input.value(), bias.value());
  return g.record("add_channel_bias", std::move(out), {input, bias}, [](const Tensor<Scalar>& go) {
    return std::vector<Tensor<Scalar>>{go, channel_bias_backward(go)};
  });
}

template <typename Scalar>
Var<Scalar> relu(Var<Scalar> input) {
  Graph<Scalar>& g = *input.graph;
  const Tensor<Scalar>& x = input.value();
  return g.record("relu", gdc::relu(x), {input}, [x](const Tensor<Scalar>& go) {
    return std::vector<Tensor<Scalar>>{relu_backward(x, go)};
  });
}

template <typename Scalar>
Var<Scalar> softmax_channels(Var<Scalar> logits) {
  Graph<Scalar>& g = *logits.graph;
  Tensor<Scalar> probs = gdc::softmax_channels(logits.value());
  return g.record("softmax_channels", probs, {logits}, [probs](const Tensor<Scalar>& go) {
    return std::vector<Tensor<Scalar>>{softmax_channels_backward(probs, go)};
  });
}

template <typename Scalar>
Var<Scalar> bilinear_resize(Var<Scalar> input, Index out_height, Index out_width) {
  Graph<Scalar>& g = *input.graph;
  const Shape in_shape = input.value().shape();
  return g.record("bilinear_resize", gdc::bilinear_resize(input.value(), out_height, out_width), {input},
                  [in_shape](const Tensor<Scalar>& go) {
                    return std::vector<Tensor<Scalar>>{bilinear_resize_backward(in_shape, go)};
                  });
}

template <typename Scalar>
Var<Scalar> concat_channels(Var<Scalar> a, Var<Scalar> b) {
  Graph<Scalar>& g = *a.graph;
  const Shape sa = a.value().shape();
  const Shape sb = b.value().shape();
  return g.record("concat_channels", gdc::concat_channels(a.value(), b.value()), {a, b},
                  [sa, sb](const Tensor<Scalar>& go) {
                    const Index na = element_count(sa);
                    Tensor<Scalar> ga(sa, go.array().head(na));
                    Tensor<Scalar> gb(sb, go.array().tail(element_count(sb)));
                    return std::vector<Tensor<Scalar>>{std::move(ga), std::move(gb)};
                  });
}

template <typename Scalar>
Var<Scalar> add(Var<Scalar> a, Var<Scalar> b) {
  Graph<Scalar>& g = *a.graph;
  return g.record("add", gdc::add(a.value(), b.value()), {a, b}, [](const Tensor<Scalar>& go) {
    return std::vector<Tensor<Scalar>>{go, go};
  });
}

template <typename Scalar>
Var<Scalar> sum(Var<Scalar> input) {
  Graph<Scalar>& g = *input.graph;
  const Shape shape = input.value().shape();
  Tensor<Scalar> out({1});
  out.data()[0] = input.value().array().sum();
  return g.record("sum", std::move(out), {input}, [shape](const Tensor<Scalar>& go) {
    return std::vector<Tensor<Scalar>>{Tensor<Scalar>::constant(shape, go.data()[0])};
  });
}

template <typename Scalar>
Var<Scalar> weighted_ce_loss(Var<Scalar> probs, const LabelMask& labels, std::vector<double> weights,
                             LossReduction reduction, LossStats* stats) {
  Graph<Scalar>& g = *probs.graph;
  const Tensor<Scalar>& p = probs.value();
  Tensor<Scalar> out({1});
  out.data()[0] = gdc::weighted_ce_loss(p, labels, weights, reduction, stats);
  return g.record("weighted_ce_loss", std::move(out), {probs},
                  [p, labels, weights = std::move(weights), reduction](const Tensor<Scalar>& go) {
                    Tensor<Scalar> grad = weighted_ce_loss_backward(p, labels, weights, reduction);
                    grad.array() *= go.data()[0];
                    return std::vector<Tensor<Scalar>>{std::move(grad)};
                  });
}

#define GDC_INSTANTIATE_GRAPH(S)                                                                        \
  template class Graph<S>;                                                                             \
  template class SgdOptimizer<S>;                                                                      \
  template void sgd_step(std::span<Parameter<S>* const>, double);                                      \
  template Var<S> conv2d(Var<S>, Var<S>, const Conv2dOptions&);                                        \
  template Var<S> correlate(Var<S>, Var<S>, TapTable, std::string);                                    \
  template Var<S> depthwise_correlate(Var<S>, Var<S>, TapTable, std::string);                          \
  template Var<S> depthwise_conv2d(Var<S>, Var<S>, const Conv2dOptions&);                              \
  template Var<S> pointwise_conv(Var<S>, Var<S>);                                                      \
  template Var<S> separable_conv(Var<S>, Var<S>, Var<S>, int);                                         \
  template Var<S> add_channel_bias(Var<S>, Var<S>);                                                    \
  template Var<S> relu(Var<S>);                                                                        \
  template Var<S> softmax_channels(Var<S>);                                                            \
  template Var<S> bilinear_resize(Var<S>, Index, Index);                                               \
  template Var<S> concat_channels(Var<S>, Var<S>);                                                     \
  template Var<S> add(Var<S>, Var<S>);                                                                 \
  template Var<S> sum(Var<S>);                                                                         \
  template Var<S> weighted_ce_loss(Var<S>, const LabelMask&, std::vector<double>, LossReduction, LossStats*);

GDC_INSTANTIATE_GRAPH(float)
GDC_INSTANTIATE_GRAPH(double)

}  // namespace gdc
