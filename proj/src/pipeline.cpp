#include "gdc/pipeline.hpp"

#include "gdc/metrics.hpp"

#include <bit>
#include <fstream>
#include <random>

namespace gdc {

Rng make_rng(std::uint64_t seed, SeedStream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return Rng(seq);
}

SegmentOutput run_segmentation(const RgbImage& image, const ScribbleSet& scribbles, const SegmentConfig& config,
                               const ProgressFn& progress) {
  if (scribbles.empty()) throw FormatError("no scribbles to train from");
  scribbles.validate(image.height, image.width);

  SegmentOutput out;
  out.net = config.net;
  out.net.num_categories = scribbles.num_categories();

  const SuperpixelMap superpixels = slic(image, config.slic);
  Expansion expansion = expand_scribbles(superpixels, scribbles);
  out.training_mask = std::move(expansion.mask);
  out.conflicts = expansion.conflicts;

  Rng init = make_rng(config.seed, SeedStream::init);
  Rng train = make_rng(config.seed, SeedStream::train);
  Rng infer = make_rng(config.seed, SeedStream::inference);
  SegNet<float> net(out.net, init);
  const Tensor<float> input = to_tensor<float>(image);
  out.train = optimize_single_image(net, input, out.training_mask, train, progress);
  out.result = infer_averaged(net, input, infer);
  return out;
}

nlohmann::json to_json(const SegmentConfig& config) {
  const NetConfig& n = config.net;
  const GdcConfig& g = n.gdc;
  return {{"seed", config.seed},
          {"net",
           {{"num_categories", n.num_categories},
            {"steps", n.steps},
            {"lr", n.lr},
            {"momentum", n.momentum},
            {"branch", to_string(n.branch)},
            {"dilation", n.dilation},
            {"inference_samples", n.inference_samples},
            {"hidden_channels", n.hidden_channels},
            {"fusion", n.fusion == BranchFusion::sum ? "sum" : "concat"},
            {"average_mode", to_string(n.average_mode)},
            {"reduction", n.reduction == LossReduction::mean ? "mean" : "sum"},
            {"stem", {{"seed", n.stem.seed}, {"weight_file", n.stem.weight_file.string()}}},
            {"gdc",
             {{"sigma", g.sigma},
              {"kernel_size", g.kernel_size},
              {"mode", to_string(g.mode)},
              {"delta_base", g.delta_base},
              {"adaptive_scale", g.adaptive_scale},
              {"sharing", to_string(g.sharing)},
              {"distribution", g.distribution == OffsetDistribution::uniform ? "uniform" : "half_gaussian"},
              {"uniform_range", g.uniform_range}}}}},
          {"slic",
           {{"n_segments", config.slic.n_segments},
            {"compactness", config.slic.compactness},
            {"iters", config.slic.iters},
            {"enforce_connectivity", config.slic.enforce_connectivity}}}};
}

nlohmann::json write_segment_outputs(const std::filesystem::path& dir, const RgbImage& image,
                                     const SegmentConfig& config, const SegmentOutput& output,
                                     const ExportOptions& options) {
  static_assert(std::endian::native == std::endian::little, "probs dump assumes a little-endian host");
  std::filesystem::create_directories(dir);
  const SegmentationResult<float>& r = output.result;
  write_file(dir / "mask.png", encode_mask_png(r.mask));
  write_file(dir / "overlay.png", encode_png(overlay(image, r.mask)));

  nlohmann::json samples = nlohmann::json::array();
  for (const OffsetSample& s : r.samples) samples.push_back(s);
  if (options.probs) {
    std::ofstream f(dir / "probs.f32", std::ios::binary);
    f.write(reinterpret_cast<const char*>(r.probs.data()),
            static_cast<std::streamsize>(r.probs.size() * static_cast<Index>(sizeof(float))));
    if (!f) throw std::runtime_error("cannot write " + (dir / "probs.f32").string());
    std::ofstream(dir / "probs.json") << nlohmann::json{{"file", "probs.f32"},
                                                        {"dtype", "float32"},
                                                        {"byte_order", "little"},
                                                        {"layout", "planar"},
                                                        {"shape", r.probs.shape()},
                                                        {"categories", output.net.num_categories},
                                                        {"seed", config.seed},
                                                        {"offset_samples", samples}}
                                                           .dump(2)
                                      << '\n';
  }

  SegmentConfig as_run = config;
  as_run.net = output.net;
  nlohmann::json train_samples = nlohmann::json::array();
  for (const OffsetSample& s : output.train.samples) train_samples.push_back(s);
  std::ofstream(dir / "replay.json") << nlohmann::json{{"config", to_json(as_run)},
                                                       {"conflicts", output.conflicts},
                                                       {"loss", output.train.loss},
                                                       {"train_accuracy", output.train.train_accuracy},
                                                       {"train_samples", train_samples},
                                                       {"inference_samples", samples}}
                                                          .dump(2)
                                     << '\n';

  if (options.gt == nullptr) return nullptr;
  const EvalReport e = miou(r.mask, *options.gt);
  nlohmann::json iou = nlohmann::json::array();
  for (std::size_t c = 0; c < e.iou.size(); ++c) iou.push_back(e.present[c] ? nlohmann::json(e.iou[c]) : nlohmann::json(nullptr));
  const nlohmann::json metrics{{"miou", e.miou},
                               {"accuracy", e.accuracy},
                               {"iou", iou},
                               {"evaluated_pixels", e.evaluated_pixels},
                               {"seed", config.seed}};
  std::ofstream(dir / "metrics.json") << metrics.dump(2) << '\n';
  return metrics;
}

}  // namespace gdc
