#include "cli.hpp"

#include "gdc/experiments.hpp"
#include "gdc/pipeline.hpp"
#include "gdc/service.hpp"
#include "gdc/synthetic.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iomanip>
#include <ostream>

namespace gdc {
namespace {

namespace fs = std::filesystem;

struct SegmentArgs {
  std::string image, scribbles, gt, out = "out", variant = "gdc", average = "probs", weights;
  std::optional<double> sigma;
  int steps = 50, samples = 50;
  std::uint64_t seed = 0;
  bool no_probs = false;
};

struct DatasetArgs {
  std::string data;
  int synthetic = 20;
  std::uint64_t synthetic_seed = 7;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  int steps = 50, samples = 50, workers = 1;
  std::string out = "report";
};

struct ScatterArgs {
  std::vector<double> sigmas{0.1, 0.15};
  int n = 100;
  std::uint64_t seed = 0;
  std::string mode = "per_direction", out = "scatter";
  double delta_base = 0;
};

struct SynthArgs {
  std::string out;
  int count = 20, size = 64;
  std::uint64_t seed = 7;
};

void add_dataset_options(CLI::App* cmd, DatasetArgs& a) {
  cmd->add_option("--data", a.data, "Dataset directory (subdirs with image.png, scribbles.json, gt.png)");
  cmd->add_option("--synthetic", a.synthetic, "Size of the generated suite when --data is absent")->check(CLI::PositiveNumber);
  cmd->add_option("--synthetic-seed", a.synthetic_seed, "Generator seed for the synthetic suite");
  cmd->add_option("--seeds", a.seeds, "Run seeds")->delimiter(',');
  cmd->add_option("--steps", a.steps, "Optimisation steps per image")->check(CLI::PositiveNumber);
  cmd->add_option("--samples", a.samples, "Inference samples per image")->check(CLI::PositiveNumber);
  cmd->add_option("--workers", a.workers, "Parallel runs")->check(CLI::PositiveNumber);
  cmd->add_option("--out", a.out, "Report directory");
}

std::vector<DatasetCase> dataset(const DatasetArgs& a) {
  return a.data.empty() ? synthetic_suite(a.synthetic, a.synthetic_seed) : load_dataset(a.data);
}

ExperimentOptions experiment_options(const DatasetArgs& a) {
  ExperimentOptions o;
  o.base.net.steps = a.steps;
  o.base.net.inference_samples = a.samples;
  o.seeds = a.seeds;
  o.workers = a.workers;
  return o;
}

void report(const ComparisonTable& t, const DatasetArgs& a, std::ostream& out) {
  write_report(t, a.out);
  out << summary_csv(t);
  out << "# " << t.runs.size() << " runs in " << std::fixed << std::setprecision(1) << t.seconds << " s; report in "
      << a.out << '\n';
}

int segment(const SegmentArgs& a, std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const RgbImage image = read_png(a.image);
  const ScribbleSet scribbles = read_scribbles(a.scribbles);
  std::optional<LabelMask> gt;
  if (!a.gt.empty()) {
    gt = read_mask_png(a.gt);
    if (gt->height != image.height || gt->width != image.width)
      throw FormatError("--gt size does not match --image");
  }
  SegmentConfig config;
  Variant v = parse_variant(a.variant);
  if (a.sigma) v.sigma = *a.sigma;
  v.apply(config.net);
  config.net.steps = a.steps;
  config.net.inference_samples = a.samples;
  config.net.average_mode = a.average == "vote" ? AverageMode::majority_vote : AverageMode::probabilities;
  config.net.stem.weight_file = a.weights;
  config.seed = a.seed;
  config.net.validate();

  const SegmentOutput result = run_segmentation(image, scribbles, config);
  ExportOptions e;
  e.probs = !a.no_probs;
  e.gt = gt ? &*gt : nullptr;
  const nlohmann::json metrics = write_segment_outputs(a.out, image, config, result, e);
  nlohmann::json summary{{"out", a.out},
                         {"categories", result.net.num_categories},
                         {"final_loss", result.train.loss.empty() ? 0.0 : result.train.loss.back()},
                         {"seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}};
  if (!metrics.is_null()) summary["miou"] = metrics["miou"], summary["accuracy"] = metrics["accuracy"];
  out << summary.dump() << '\n';
  return 0;
}

int scatter(const ScatterArgs& a, std::ostream& out) {
  if (a.mode != "per_direction" && a.mode != "shared") throw FormatError("--mode must be per_direction or shared");
  fs::create_directories(a.out);
  out << "sigma,mean_radius,csv,svg\n";
  for (double s : a.sigmas) {
    if (s < 0) throw FormatError("sigma must be >= 0");
    GdcConfig c;
    c.sigma = s;
    c.mode = a.mode == "shared" ? OffsetMode::shared : OffsetMode::per_direction;
    c.delta_base = a.delta_base;
    const auto points = emit_offset_scatter(c, a.n, a.seed);
    std::ostringstream stem;
    stem << "scatter_" << s;
    const fs::path csv = fs::path(a.out) / (stem.str() + ".csv"), svg = fs::path(a.out) / (stem.str() + ".svg");
    std::ofstream(csv) << scatter_csv(points);
    std::ofstream(svg) << scatter_svg(points);
    out << s << ',' << mean_radius(points) << ',' << csv.string() << ',' << svg.string() << '\n';
  }
  return 0;
}

int synth(const SynthArgs& a, std::ostream& out) {
  auto cases = synthetic_suite(a.count, a.seed, a.size);
  SyntheticCase fixture = two_region_fixture();
  fixture.scribbles.image = "image.png";
  cases.insert(cases.begin(), std::move(fixture));
  write_dataset(a.out, cases);
  out << "wrote " << cases.size() << " cases to " << a.out << '\n';
  return 0;
}

int serve(const std::string& bind, std::ostream& out) {
  const BindAddress address = bind.empty() ? bind_from_env() : parse_bind(bind);
  HttpService service;
  const int port = service.bind(address);
  out << "listening on " << address.host << ':' << port << std::endl;
  service.listen();
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Scribble-seeded segmentation with Gaussian dynamic convolution", "gdc"};
  app.require_subcommand(1);

  SegmentArgs seg;
  CLI::App* seg_cmd = app.add_subcommand("segment", "Segment one image from scribbles");
  seg_cmd->add_option("--image", seg.image, "RGB PNG")->required();
  seg_cmd->add_option("--scribbles", seg.scribbles, "Scribble JSON")->required();
  seg_cmd->add_option("--gt", seg.gt, "Ground-truth mask PNG (255 = ignore); writes metrics.json");
  seg_cmd->add_option("--sigma", seg.sigma, "Offset spread of the GDC branch");
  seg_cmd->add_option("--steps", seg.steps, "Optimisation steps")->check(CLI::PositiveNumber);
  seg_cmd->add_option("--samples", seg.samples, "Averaged inference samples")->check(CLI::PositiveNumber);
  seg_cmd->add_option("--seed", seg.seed, "Run seed");
  seg_cmd->add_option("--out", seg.out, "Output directory");
  seg_cmd->add_option("--variant", seg.variant, "normal | dilated:<d> | gdc:<sigma> | uniform:<range>");
  seg_cmd->add_option("--average", seg.average, "probs | vote")->check(CLI::IsMember({"probs", "vote"}));
  seg_cmd->add_option("--weights", seg.weights, "Stem weight file");
  seg_cmd->add_flag("--no-probs", seg.no_probs, "Skip the probability dump");

  CLI::App* exp_cmd = app.add_subcommand("experiment", "Evaluation harnesses");
  exp_cmd->require_subcommand(1);
  DatasetArgs cmp;
  std::vector<std::string> variants{"normal", "dilated:6", "gdc:0.2", "uniform:1"};
  CLI::App* cmp_cmd = exp_cmd->add_subcommand("compare", "Compare context-branch variants");
  add_dataset_options(cmp_cmd, cmp);
  cmp_cmd->add_option("--variants", variants, "Variant list")->delimiter(',');
  DatasetArgs abl;
  std::vector<double> sigmas{0.1, 0.2, 0.3};
  CLI::App* abl_cmd = exp_cmd->add_subcommand("ablate-sigma", "Sweep the GDC offset spread");
  add_dataset_options(abl_cmd, abl);
  abl_cmd->add_option("--sigmas", sigmas, "Sigma list")->delimiter(',');
  ScatterArgs sc;
  CLI::App* sc_cmd = exp_cmd->add_subcommand("scatter", "Dump sampled tap positions as CSV and SVG");
  sc_cmd->add_option("--sigma", sc.sigmas, "One or more sigmas")->delimiter(',');
  sc_cmd->add_option("--n", sc.n, "Samples per sigma")->check(CLI::PositiveNumber);
  sc_cmd->add_option("--seed", sc.seed, "Sampling seed");
  sc_cmd->add_option("--mode", sc.mode, "per_direction | shared");
  sc_cmd->add_option("--delta-base", sc.delta_base, "Base offset for shared mode");
  sc_cmd->add_option("--out", sc.out, "Output directory");

  SynthArgs sy;
  CLI::App* sy_cmd = app.add_subcommand("synth", "Write the synthetic suite and the two-region fixture as a dataset");
  sy_cmd->add_option("--out", sy.out, "Dataset directory")->required();
  sy_cmd->add_option("--count", sy.count, "Number of suite images")->check(CLI::PositiveNumber);
  sy_cmd->add_option("--size", sy.size, "Image side")->check(CLI::Range(16, 2048));
  sy_cmd->add_option("--seed", sy.seed, "Generator seed");

  std::string bind;
  CLI::App* serve_cmd = app.add_subcommand("serve", "Run the HTTP session service (GDC_BIND, default 127.0.0.1:8080)");
  serve_cmd->add_option("--bind", bind, "host:port, overrides GDC_BIND");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "gdc: " << e.what() << '\n';
    return kExitBadInput;
  }

  try {
    if (*seg_cmd) return segment(seg, out);
    if (*cmp_cmd) {
      std::vector<Variant> vs;
      for (const auto& v : variants) vs.push_back(parse_variant(v));
      report(run_comparison(dataset(cmp), vs, experiment_options(cmp)), cmp, out);
      return 0;
    }
    if (*abl_cmd) {
      for (double s : sigmas)
        if (s < 0) throw FormatError("sigma must be >= 0");
      report(sigma_ablation(dataset(abl), sigmas, experiment_options(abl)), abl, out);
      return 0;
    }
    if (*sc_cmd) return scatter(sc, out);
    if (*sy_cmd) return synth(sy, out);
    if (*serve_cmd) return serve(bind, out);
  } catch (const FormatError& e) {
    err << "gdc: " << e.what() << '\n';
    return kExitBadInput;
  } catch (const ShapeError& e) {
    err << "gdc: " << e.what() << '\n';
    return kExitBadInput;
  } catch (const std::exception& e) {
    err << "gdc: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitBadInput;
}

}  // namespace gdc
