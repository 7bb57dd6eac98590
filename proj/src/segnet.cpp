#include "gdc/segnet.hpp"

#include "gdc/scribble.hpp"
#include "gdc/weight_file.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gdc {
namespace {

Index half(Index n) { return (n + 1) / 2; }

}  // namespace

void NetConfig::validate() const {
  if (num_categories < 1) throw ShapeError("NetConfig: num_categories must be >= 1");
  if (steps < 1) throw ShapeError("NetConfig: steps must be >= 1");
  if (inference_samples < 1) throw ShapeError("NetConfig: inference_samples must be >= 1");
  if (hidden_channels < 1) throw ShapeError("NetConfig: hidden_channels must be >= 1");
  if (!(lr >= 0) || !std::isfinite(lr)) throw ShapeError("NetConfig: lr must be finite and >= 0");
  if (!(momentum >= 0 && momentum < 1)) throw ShapeError("NetConfig: momentum must lie in [0, 1)");
  if (branch == BranchKind::dilated && dilation < 1) throw ShapeError("NetConfig: dilation must be >= 1");
  if (branch == BranchKind::gdc) {
    gdc.validate();
    if (gdc.kernel_size != 3) throw ShapeError("NetConfig: the GDC branch uses a 3x3 kernel");
  }
}

const char* to_string(BranchKind kind) {
  switch (kind) {
    case BranchKind::gdc: return "gdc";
    case BranchKind::normal: return "normal";
    case BranchKind::dilated: return "dilated";
  }
  return "?";
}

const char* to_string(AverageMode mode) {
  return mode == AverageMode::probabilities ? "probabilities" : "majority_vote";
}

// ---------------------------------------------------------------------------
// Stem

template <typename Scalar>
Stem<Scalar>::Stem(const StemConfig& config) {
  Rng rng(config.seed);
  conv_w = he_normal<Scalar>("stem.conv.weight", {kStemChannelsA, 3, 3, 3}, 27, rng);
  conv_b = zero_parameter<Scalar>("stem.conv.bias", kStemChannelsA);
  dw_w = he_normal<Scalar>("stem.dw.weight", {kStemChannelsA, 1, 3, 3}, 9, rng);
  dw_b = zero_parameter<Scalar>("stem.dw.bias", kStemChannelsA);
  pw_w = he_normal<Scalar>("stem.pw.weight", {kStemChannelsB, kStemChannelsA, 1, 1}, kStemChannelsA, rng);
  pw_b = zero_parameter<Scalar>("stem.pw.bias", kStemChannelsB);
  if (!config.weight_file.empty()) {
    const auto params = parameters();
    load_parameters<Scalar>(config.weight_file, params);
  }
  for (auto* p : parameters()) p->frozen = true;
}

template <typename Scalar>
std::vector<Parameter<Scalar>*> Stem<Scalar>::parameters() {
  return {&conv_w, &conv_b, &dw_w, &dw_b, &pw_w, &pw_b};
}

template <typename Scalar>
typename Stem<Scalar>::Groups Stem<Scalar>::groups(const Tensor<Scalar>& image) const {
  if (image.rank() != 3 || image.channels() != 3) throw ShapeError("stem: expected a [3, H, W] image");
  const Conv2dOptions s2{2, 1, 1};
  Groups g;
  g.a = relu(add_channel_bias(conv2d(image, conv_w.value, s2), conv_b.value));
  const Tensor<Scalar> d = relu(add_channel_bias(depthwise_conv2d(g.a, dw_w.value, s2), dw_b.value));
  g.b = add_channel_bias(pointwise_conv(d, pw_w.value), pw_b.value);
  return g;
}

template <typename Scalar>
Tensor<Scalar> Stem<Scalar>::features(const Tensor<Scalar>& image) const {
  const Groups g = groups(image);
  const Index h = half(image.height()), w = half(image.width());
  return concat_channels(bilinear_resize(g.a, h, w), bilinear_resize(g.b, h, w));
}

// ---------------------------------------------------------------------------
// Network

template <typename Scalar>
SegNet<Scalar>::SegNet(NetConfig config, Rng& init_rng) : config_(std::move(config)), stem_(config_.stem) {
  config_.validate();
  const Index c = config_.hidden_channels, n = config_.num_categories;
  const Index feat = kStemChannelsA + kStemChannelsB;
  fuse_w_ = he_normal<Scalar>("fuse.weight", {c, feat, 1, 1}, feat, init_rng);
  fuse_b_ = zero_parameter<Scalar>("fuse.bias", c);
  local_w_ = he_normal<Scalar>("local.weight", {c, c, 3, 3}, 9 * c, init_rng);
  local_b_ = zero_parameter<Scalar>("local.bias", c);
  branch_w_ = he_normal<Scalar>("branch.weight", {c, c, 3, 3}, 9 * c, init_rng);
  branch_b_ = zero_parameter<Scalar>("branch.bias", c);
  mix_w_ = he_normal<Scalar>("mix.weight", {c, 2 * c, 1, 1}, 2 * c, init_rng);
  mix_b_ = zero_parameter<Scalar>("mix.bias", c);
  cls_w_ = he_normal<Scalar>("classifier.conv.weight", {c, c, 3, 3}, 9 * c, init_rng);
  cls_b_ = zero_parameter<Scalar>("classifier.conv.bias", c);
  out_w_ = he_normal<Scalar>("classifier.out.weight", {n, c, 1, 1}, c, init_rng);
  out_b_ = zero_parameter<Scalar>("classifier.out.bias", n);
}

template <typename Scalar>
std::vector<Parameter<Scalar>*> SegNet<Scalar>::trainable() {
  std::vector<Parameter<Scalar>*> out{&fuse_w_, &fuse_b_, &local_w_, &local_b_, &branch_w_, &branch_b_};
  if (config_.fusion == BranchFusion::concat) {
    out.push_back(&mix_w_);
    out.push_back(&mix_b_);
  }
  for (auto* p : {&cls_w_, &cls_b_, &out_w_, &out_b_}) out.push_back(p);
  return out;
}

template <typename Scalar>
std::vector<Parameter<Scalar>*> SegNet<Scalar>::parameters() {
  auto out = stem_.parameters();
  for (auto* p : trainable()) out.push_back(p);
  return out;
}

template <typename Scalar>
std::optional<OffsetSample> SegNet<Scalar>::draw_sample(Rng& rng, Index feature_height, Index feature_width) const {
  if (config_.branch != BranchKind::gdc) return std::nullopt;
  return sample_offsets(rng, config_.gdc, std::min(feature_height, feature_width), feature_height * feature_width);
}

template <typename Scalar>
Var<Scalar> SegNet<Scalar>::branch(Graph<Scalar>& graph, Var<Scalar> fused, const std::optional<OffsetSample>& sample) {
  const Var<Scalar> w = graph.parameter(branch_w_);
  Var<Scalar> out;
  switch (config_.branch) {
    case BranchKind::gdc:
      if (!sample) throw std::logic_error("SegNet: the GDC branch needs an offset sample");
      out = gdc_conv(fused, w, *sample);
      break;
    case BranchKind::normal:
      out = conv2d(fused, w, Conv2dOptions{1, 1, 1});
      break;
    case BranchKind::dilated:
      out = conv2d(fused, w, Conv2dOptions{1, config_.dilation, config_.dilation});
      break;
  }
  return add_channel_bias(out, graph.parameter(branch_b_));
}

template <typename Scalar>
std::pair<Var<Scalar>, Var<Scalar>> SegNet<Scalar>::fuse_and_local(Graph<Scalar>& g, const Tensor<Scalar>& features) {
  if (features.rank() != 3 || features.channels() != kStemChannelsA + kStemChannelsB)
    throw ShapeError("SegNet: stem features must be [40, h, w], got " + to_string(features.shape()));
  const Var<Scalar> fused =
      add_channel_bias(pointwise_conv(g.constant(features), g.parameter(fuse_w_)), g.parameter(fuse_b_));
  const Var<Scalar> local =
      add_channel_bias(conv2d(fused, g.parameter(local_w_), Conv2dOptions{1, 1, 1}), g.parameter(local_b_));
  return {fused, local};
}

template <typename Scalar>
typename SegNet<Scalar>::Trunk SegNet<Scalar>::trunk(const Tensor<Scalar>& features) {
  Graph<Scalar> g;
  const auto [fused, local] = fuse_and_local(g, features);
  return {fused.value(), local.value()};
}

template <typename Scalar>
Var<Scalar> SegNet<Scalar>::head(Graph<Scalar>& g, Var<Scalar> fused, Var<Scalar> local, Index out_height,
                                 Index out_width, const std::optional<OffsetSample>& sample) {
  const Var<Scalar> context = branch(g, fused, sample);
  const Var<Scalar> merged =
      config_.fusion == BranchFusion::sum
          ? add(local, context)
          : add_channel_bias(pointwise_conv(concat_channels(local, context), g.parameter(mix_w_)),
                             g.parameter(mix_b_));
  const Var<Scalar> hidden =
      relu(add_channel_bias(conv2d(merged, g.parameter(cls_w_), Conv2dOptions{1, 1, 1}), g.parameter(cls_b_)));
  const Var<Scalar> logits = add_channel_bias(pointwise_conv(hidden, g.parameter(out_w_)), g.parameter(out_b_));
  return softmax_channels(bilinear_resize(logits, out_height, out_width));
}

template <typename Scalar>
Var<Scalar> SegNet<Scalar>::forward(Graph<Scalar>& g, const Tensor<Scalar>& features, Index out_height,
                                    Index out_width, const std::optional<OffsetSample>& sample) {
  const auto [fused, local] = fuse_and_local(g, features);
  return head(g, fused, local, out_height, out_width, sample);
}

template <typename Scalar>
Tensor<Scalar> SegNet<Scalar>::forward(const Tensor<Scalar>& image, const std::optional<OffsetSample>& sample) {
  Graph<Scalar> g;
  return forward(g, stem_.features(image), image.height(), image.width(), sample).value();
}

template <typename Scalar>
Tensor<Scalar> SegNet<Scalar>::branch_features(const Tensor<Scalar>& features,
                                               const std::optional<OffsetSample>& sample) {
  Graph<Scalar> g;
  return branch(g, fuse_and_local(g, features).first, sample).value();
}

// ---------------------------------------------------------------------------
// Training and inference

template <typename Scalar>
LabelMask argmax_mask(const Tensor<Scalar>& probs) {
  if (probs.rank() != 3) throw ShapeError("argmax_mask: expected [N, H, W]");
  LabelMask mask(probs.height(), probs.width(), 0);
  for (Index y = 0; y < probs.height(); ++y)
    for (Index x = 0; x < probs.width(); ++x) {
      int best = 0;
      for (Index c = 1; c < probs.channels(); ++c)
        if (probs(c, y, x) > probs(best, y, x)) best = static_cast<int>(c);
      mask.at(y, x) = best;
    }
  return mask;
}

template <typename Scalar>
TrainReport optimize_single_image(SegNet<Scalar>& net, const Tensor<Scalar>& image, const LabelMask& mask, Rng& rng,
                                  const ProgressFn& progress) {
  const NetConfig& cfg = net.config();
  if (image.rank() != 3 || mask.height != image.height() || mask.width != image.width())
    throw ShapeError("optimize_single_image: mask and image sizes differ");
  if (mask.labeled_count() == 0) throw ShapeError("optimize_single_image: mask has no labeled pixels");
  const std::vector<double> weights = class_weights(mask, cfg.num_categories);

  const Tensor<Scalar> features = net.stem().features(image);
  const auto params = net.trainable();
  SgdOptimizer<Scalar> optimizer(cfg.lr, cfg.momentum);
  TrainReport report;
  report.loss.reserve(static_cast<std::size_t>(cfg.steps));
  for (int step = 0; step < cfg.steps; ++step) {
    const auto sample = net.draw_sample(rng, features.height(), features.width());
    Graph<Scalar> g;
    const Var<Scalar> probs = net.forward(g, features, image.height(), image.width(), sample);
    const Var<Scalar> loss = weighted_ce_loss(probs, mask, weights, cfg.reduction);
    g.backward(loss);
    optimizer.step(params);
    report.loss.push_back(static_cast<double>(loss.value().data()[0]));
    if (sample) report.samples.push_back(*sample);
    if (step + 1 == cfg.steps) {
      const LabelMask pred = argmax_mask(probs.value());
      Index hit = 0;
      for (std::size_t i = 0; i < mask.labels.size(); ++i)
        hit += mask.labels[i] != LabelMask::kUnlabeled && pred.labels[i] == mask.labels[i];
      report.train_accuracy = static_cast<double>(hit) / static_cast<double>(mask.labeled_count());
    }
    if (progress) progress(step + 1, cfg.steps, report.loss.back());
  }
  return report;
}

template <typename Scalar>
SegmentationResult<Scalar> infer_averaged(SegNet<Scalar>& net, const Tensor<Scalar>& image, Rng& rng) {
  const NetConfig& cfg = net.config();
  const Tensor<Scalar> features = net.stem().features(image);
  const auto trunk = net.trunk(features);
  const Index n = cfg.num_categories, h = image.height(), w = image.width();

  SegmentationResult<Scalar> result;
  Tensor<Scalar> total({n, h, w});
  std::vector<int> votes(static_cast<std::size_t>(n * h * w), 0);
  for (int s = 0; s < cfg.inference_samples; ++s) {
    const auto sample = net.draw_sample(rng, features.height(), features.width());
    Graph<Scalar> g;
    const Tensor<Scalar>& probs = net.head(g, g.constant(trunk.fused), g.constant(trunk.local), h, w, sample).value();
    total.array() += probs.array();
    if (sample) result.samples.push_back(*sample);
    if (cfg.average_mode == AverageMode::majority_vote || cfg.keep_per_sample_masks) {
      LabelMask m = argmax_mask(probs);
      if (cfg.average_mode == AverageMode::majority_vote)
        for (Index p = 0; p < h * w; ++p) ++votes[static_cast<std::size_t>(m.labels[static_cast<std::size_t>(p)] * h * w + p)];
      if (cfg.keep_per_sample_masks) result.per_sample_masks.push_back(std::move(m));
    }
  }
  result.probs = Tensor<Scalar>(total.shape(), total.array() / static_cast<Scalar>(cfg.inference_samples));
  if (cfg.average_mode == AverageMode::probabilities) {
    result.mask = argmax_mask(result.probs);
  } else {
    result.mask = LabelMask(h, w, 0);
    for (Index p = 0; p < h * w; ++p) {
      int best = 0;
      for (Index c = 1; c < n; ++c)
        if (votes[static_cast<std::size_t>(c * h * w + p)] > votes[static_cast<std::size_t>(best * h * w + p)])
          best = static_cast<int>(c);
      result.mask.labels[static_cast<std::size_t>(p)] = best;
    }
  }
  return result;
}

#define GDC_INSTANTIATE_SEGNET(S)                                                                             \
  template struct Stem<S>;                                                                                   \
  template class SegNet<S>;                                                                                  \
  template LabelMask argmax_mask<S>(const Tensor<S>&);                                                       \
  template TrainReport optimize_single_image<S>(SegNet<S>&, const Tensor<S>&, const LabelMask&, Rng&,       \
                                                const ProgressFn&);                                          \
  template SegmentationResult<S> infer_averaged<S>(SegNet<S>&, const Tensor<S>&, Rng&);

GDC_INSTANTIATE_SEGNET(float)
GDC_INSTANTIATE_SEGNET(double)

}  // namespace gdc
