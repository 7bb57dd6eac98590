#pragma once

// Lightweight single-image segmentation network.
//
//   image -> frozen stem -> {16ch @ H/2, 24ch @ H/4}
//         -> bilinear to H/2 x W/2, concat, 1x1 fuse
//         -> [3x3 local branch] + [context branch]     (GDC, or a fixed baseline)
//         -> 3x3 conv + ReLU -> 1x1 -> bilinear to H x W -> softmax
//
// Only the layers after the stem are trained, one image at a time.

#include "gdc/gdc_kernel.hpp"
#include "gdc/graph.hpp"
#include "gdc/label_mask.hpp"
#include "gdc/ops.hpp"
#include "gdc/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace gdc {

/// What fills the context branch of the GDC module.
enum class BranchKind { gdc, normal, dilated };
enum class BranchFusion { sum, concat };
enum class AverageMode { probabilities, majority_vote };

struct StemConfig {
  std::uint64_t seed = 0;              // seeded He initialisation when no weight file is given
  std::filesystem::path weight_file;   // optional GDCW file with stem.* records
};

struct NetConfig {
  int num_categories = 2;
  int steps = 50;
  double lr = 0.01;
  double momentum = 0.9;
  GdcConfig gdc;
  BranchKind branch = BranchKind::gdc;
  int dilation = 6;  // BranchKind::dilated only
  int inference_samples = 50;
  int hidden_channels = 32;
  BranchFusion fusion = BranchFusion::sum;
  AverageMode average_mode = AverageMode::probabilities;
  LossReduction reduction = LossReduction::mean;
  StemConfig stem;
  bool keep_per_sample_masks = false;

  void validate() const;
};

const char* to_string(BranchKind kind);
const char* to_string(AverageMode mode);

/// Frozen feature extractor: group A = relu(conv3x3 s2, 3 -> 16),
/// group B = 1x1(relu(depthwise3x3 s2 (A)), 16 -> 24), linear.
template <typename Scalar>
struct Stem {
  Parameter<Scalar> conv_w, conv_b, dw_w, dw_b, pw_w, pw_b;

  explicit Stem(const StemConfig& config);
  std::vector<Parameter<Scalar>*> parameters();

  struct Groups {
    Tensor<Scalar> a;  // [16, ceil(H/2), ceil(W/2)]
    Tensor<Scalar> b;  // [24, ceil(H/4), ceil(W/4)]
  };
  Groups groups(const Tensor<Scalar>& image) const;
  /// Both groups resized to the half-size grid and concatenated: [40, ceil(H/2), ceil(W/2)].
  Tensor<Scalar> features(const Tensor<Scalar>& image) const;
};

inline constexpr int kStemChannelsA = 16;
inline constexpr int kStemChannelsB = 24;

template <typename Scalar>
struct SegmentationResult {
  Tensor<Scalar> probs;  // [N, H, W], each pixel on the simplex
  LabelMask mask;
  std::vector<LabelMask> per_sample_masks;  // filled when keep_per_sample_masks is set
  std::vector<OffsetSample> samples;        // the inference draws, for replay
};

struct TrainReport {
  std::vector<double> loss;       // one entry per step
  double train_accuracy = 0;      // on labeled pixels, from the final step's forward
  std::vector<OffsetSample> samples;
};

/// (step, total, loss) after each optimisation step.
using ProgressFn = std::function<void(int, int, double)>;

template <typename Scalar>
class SegNet {
 public:
  /// Builds the stem from config.stem and draws the trainable layers from `init_rng`.
  SegNet(NetConfig config, Rng& init_rng);

  const NetConfig& config() const { return config_; }
  const Stem<Scalar>& stem() const { return stem_; }
  Stem<Scalar>& stem() { return stem_; }

  std::vector<Parameter<Scalar>*> trainable();
  std::vector<Parameter<Scalar>*> parameters();  // stem first, then trainable

  /// Draws one offset sample for a feature map of the given size (nullopt for baselines).
  std::optional<OffsetSample> draw_sample(Rng& rng, Index feature_height, Index feature_width) const;

  /// Probabilities [N, H, W] for a [3, H, W] image in [0, 1].
  Tensor<Scalar> forward(const Tensor<Scalar>& image, const std::optional<OffsetSample>& sample);

  /// Differentiable head on precomputed stem features; output is [N, out_h, out_w] probabilities.
  Var<Scalar> forward(Graph<Scalar>& graph, const Tensor<Scalar>& features, Index out_height, Index out_width,
                      const std::optional<OffsetSample>& sample);

  /// The fused features and local branch output; independent of the offset sample.
  struct Trunk {
    Tensor<Scalar> fused;
    Tensor<Scalar> local;
  };
  Trunk trunk(const Tensor<Scalar>& features);
  /// The sample-dependent remainder of forward().
  Var<Scalar> head(Graph<Scalar>& graph, Var<Scalar> fused, Var<Scalar> local, Index out_height, Index out_width,
                   const std::optional<OffsetSample>& sample);

  /// Output of the context branch alone, [C, H/2, W/2].
  Tensor<Scalar> branch_features(const Tensor<Scalar>& features, const std::optional<OffsetSample>& sample);

 private:
  NetConfig config_;
  Stem<Scalar> stem_;
  Parameter<Scalar> fuse_w_, fuse_b_, local_w_, local_b_, branch_w_, branch_b_, mix_w_, mix_b_, cls_w_, cls_b_,
      out_w_, out_b_;

  std::pair<Var<Scalar>, Var<Scalar>> fuse_and_local(Graph<Scalar>& graph, const Tensor<Scalar>& features);
  Var<Scalar> branch(Graph<Scalar>& graph, Var<Scalar> fused, const std::optional<OffsetSample>& sample);
};

/// `config.steps` SGD iterations on weighted cross-entropy over labeled pixels,
/// with a fresh offset sample per step.
template <typename Scalar>
TrainReport optimize_single_image(SegNet<Scalar>& net, const Tensor<Scalar>& image, const LabelMask& mask, Rng& rng,
                                  const ProgressFn& progress = {});

/// Averages `inference_samples` forwards (probabilities or votes per config).
template <typename Scalar>
SegmentationResult<Scalar> infer_averaged(SegNet<Scalar>& net, const Tensor<Scalar>& image, Rng& rng);

/// argmax over channels; ties go to the lower category.
template <typename Scalar>
LabelMask argmax_mask(const Tensor<Scalar>& probs);

}  // namespace gdc
