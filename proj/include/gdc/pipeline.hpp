#pragma once

// Scribbles + image in, mask out. The CLI and the HTTP service both call
// run_segmentation, so identical inputs give identical masks.

#include "gdc/image.hpp"
#include "gdc/scribble.hpp"
#include "gdc/segnet.hpp"
#include "gdc/slic.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>

namespace gdc {

struct SegmentConfig {
  NetConfig net;  // num_categories is taken from the scribbles
  SlicOptions slic;
  std::uint64_t seed = 0;
};

struct SegmentOutput {
  SegmentationResult<float> result;
  LabelMask training_mask;  // superpixel-expanded scribbles
  int conflicts = 0;
  TrainReport train;
  NetConfig net;  // as run
};

/// Independent generator streams derived from one run seed.
enum class SeedStream : std::uint64_t { init = 1, train = 2, inference = 3 };
Rng make_rng(std::uint64_t seed, SeedStream stream);

/// Throws FormatError when the scribbles are empty or do not fit the image.
SegmentOutput run_segmentation(const RgbImage& image, const ScribbleSet& scribbles, const SegmentConfig& config,
                               const ProgressFn& progress = {});

/// Everything needed to rerun a segmentation bit-exactly.
nlohmann::json to_json(const SegmentConfig& config);

struct ExportOptions {
  bool probs = true;                // probs.f32 + probs.json
  const LabelMask* gt = nullptr;    // writes metrics.json when set
};

/// Writes mask.png, overlay.png, replay.json and, per `options`, probs.f32 with
/// its probs.json sidecar and metrics.json. probs.f32 is little-endian float32,
/// planar [N, H, W]. Returns the metrics record (null without gt).
nlohmann::json write_segment_outputs(const std::filesystem::path& dir, const RgbImage& image,
                                     const SegmentConfig& config, const SegmentOutput& output,
                                     const ExportOptions& options = {});

}  // namespace gdc
