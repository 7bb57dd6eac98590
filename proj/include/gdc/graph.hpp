#pragma once

// Tape-based reverse mode over the eager ops in ops.hpp.
//
// A Graph is rebuilt for every forward pass: each recorded node owns its
// forward value and a closure mapping the upstream gradient to one gradient
// per input. Nodes are appended in execution order, so the tape is already
// topologically sorted and backward() is a single reverse sweep.

#include "gdc/ops.hpp"
#include "gdc/tensor.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace gdc {

template <typename Scalar>
struct Parameter {
  std::string name;
  Tensor<Scalar> value;
  Tensor<Scalar> grad;
  bool frozen = false;
};

/// Weights ~ Normal(0, 2 / fan_in).
template <typename Scalar, typename Urng>
Parameter<Scalar> he_normal(std::string name, Shape shape, Index fan_in, Urng& rng) {
  Parameter<Scalar> p{std::move(name), Tensor<Scalar>(std::move(shape)), {}, false};
  std::normal_distribution<double> n(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (Scalar& v : p.value.values()) v = static_cast<Scalar>(n(rng));
  return p;
}

/// Zero-initialised vector parameter, used for biases.
template <typename Scalar>
Parameter<Scalar> zero_parameter(std::string name, Index n) {
  return Parameter<Scalar>{std::move(name), Tensor<Scalar>({n}), {}, false};
}

template <typename Scalar>
class Graph;

template <typename Scalar>
struct Var {
  Graph<Scalar>* graph = nullptr;
  int id = -1;

  bool valid() const { return graph != nullptr && id >= 0; }
  const Tensor<Scalar>& value() const;
  const Shape& shape() const { return value().shape(); }
};

template <typename Scalar>
class Graph {
 public:
  using BackwardFn = std::function<std::vector<Tensor<Scalar>>(const Tensor<Scalar>& grad_output)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<Scalar> constant(Tensor<Scalar> value);
  /// Leaf whose gradient is retained, for gradient checks on inputs.
  Var<Scalar> variable(Tensor<Scalar> value);
  /// Binds a parameter; repeated calls with the same parameter return the same node.
  Var<Scalar> parameter(Parameter<Scalar>& p);

  /// Appends an op node. Throws NumericError if `value` is not finite.
  Var<Scalar> record(std::string op, Tensor<Scalar> value, std::vector<Var<Scalar>> inputs, BackwardFn backward);

  const Tensor<Scalar>& value(Var<Scalar> v) const;
  /// Gradient of the last backward() target wrt `v`; zeros if `v` was not reached.
  Tensor<Scalar> grad(Var<Scalar> v) const;

  /// Reverse sweep from a single-element node. Writes every bound parameter's `grad`
  /// (zeros for frozen or unreached ones). Throws std::logic_error if the graph holds
  /// no forward pass, the target is foreign, or backward already ran.
  void backward(Var<Scalar> loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::string op;
    Tensor<Scalar> value;
    Tensor<Scalar> grad;
    std::vector<int> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    Parameter<Scalar>* parameter = nullptr;
  };

  Var<Scalar> push(Node node);
  const Node& node(Var<Scalar> v) const;

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<Scalar>*, int> parameter_nodes_;
  bool backward_done_ = false;
};

template <typename Scalar>
const Tensor<Scalar>& Var<Scalar>::value() const {
  return graph->value(*this);
}

/// p <- p - lr * g for every non-frozen parameter.
template <typename Scalar>
void sgd_step(std::span<Parameter<Scalar>* const> params, double lr);

/// Heavy-ball SGD; momentum 0 reduces to sgd_step.
template <typename Scalar>
class SgdOptimizer {
 public:
  SgdOptimizer(double lr, double momentum) : lr_(lr), momentum_(momentum) {}
  void step(std::span<Parameter<Scalar>* const> params);

 private:
  double lr_;
  double momentum_;
  std::vector<Tensor<Scalar>> velocity_;
};

// Differentiable counterparts of the eager ops.
template <typename Scalar>
Var<Scalar> conv2d(Var<Scalar> input, Var<Scalar> kernel, const Conv2dOptions& options = {});
template <typename Scalar>
Var<Scalar> correlate(Var<Scalar> input, Var<Scalar> kernel, TapTable table, std::string op = "correlate");
template <typename Scalar>
Var<Scalar> depthwise_correlate(Var<Scalar> input, Var<Scalar> kernel, TapTable table,
                                std::string op = "depthwise_correlate");
template <typename Scalar>
Var<Scalar> depthwise_conv2d(Var<Scalar> input, Var<Scalar> kernel, const Conv2dOptions& options = {});
template <typename Scalar>
Var<Scalar> pointwise_conv(Var<Scalar> input, Var<Scalar> kernel);
template <typename Scalar>
Var<Scalar> separable_conv(Var<Scalar> input, Var<Scalar> depthwise, Var<Scalar> pointwise, int dilation = 1);
template <typename Scalar>
Var<Scalar> add_channel_bias(Var<Scalar> input, Var<Scalar> bias);
template <typename Scalar>
Var<Scalar> relu(Var<Scalar> input);
template <typename Scalar>
Var<Scalar> softmax_channels(Var<Scalar> logits);
template <typename Scalar>
Var<Scalar> bilinear_resize(Var<Scalar> input, Index out_height, Index out_width);
template <typename Scalar>
Var<Scalar> concat_channels(Var<Scalar> a, Var<Scalar> b);
template <typename Scalar>
Var<Scalar> add(Var<Scalar> a, Var<Scalar> b);
template <typename Scalar>
Var<Scalar> sum(Var<Scalar> input);
template <typename Scalar>
Var<Scalar> weighted_ce_loss(Var<Scalar> probs, const LabelMask& labels, std::vector<double> weights,
                             LossReduction reduction = LossReduction::mean, LossStats* stats = nullptr);

}  // namespace gdc
