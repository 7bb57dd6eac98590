#include "gdc/experiments.hpp"

#include "gdc/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

namespace gdc {
namespace {

namespace fs = std::filesystem;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string format_number(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

double parse_number(const std::string& text, const std::string& token) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size() || !std::isfinite(v)) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw FormatError("variant '" + token + "': bad number '" + text + "'");
  }
}

struct Job {
  std::size_t variant;
  std::uint64_t seed;
  std::size_t image;
};

// Runs every job exactly once, in any order, storing results by job index.
template <typename Fn>
void run_queue(std::size_t jobs, int workers, Fn&& fn) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  const auto worker = [&] {
    for (std::size_t i = next++; i < jobs; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = jobs;
      }
    }
  };
  const int n = std::clamp<int>(workers, 1, static_cast<int>(std::max<std::size_t>(jobs, 1)));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace

std::vector<DatasetCase> load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw FormatError("dataset: " + dir.string() + " is not a directory");
  std::vector<fs::path> subdirs;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_directory()) subdirs.push_back(entry.path());
  std::sort(subdirs.begin(), subdirs.end());
  std::vector<DatasetCase> out;
  for (const fs::path& sub : subdirs) {
    for (const char* file : {"image.png", "scribbles.json", "gt.png"})
      if (!fs::is_regular_file(sub / file))
        throw FormatError("dataset: " + sub.filename().string() + " is missing " + file);
    DatasetCase c;
    c.name = sub.filename().string();
    c.image = read_png(sub / "image.png");
    c.scribbles = read_scribbles(sub / "scribbles.json");
    c.gt = read_mask_png(sub / "gt.png");
    if (c.gt.height != c.image.height || c.gt.width != c.image.width)
      throw FormatError("dataset: " + c.name + ": gt.png and image.png sizes differ");
    out.push_back(std::move(c));
  }
  if (out.empty()) throw FormatError("dataset: no cases under " + dir.string());
  return out;
}

void Variant::apply(NetConfig& net) const {
  net.branch = kind;
  net.dilation = dilation;
  net.gdc.sigma = sigma;
  net.gdc.distribution = distribution;
  net.gdc.uniform_range = uniform_range;
}

Variant normal_variant() { return Variant{"normal", BranchKind::normal}; }

Variant dilated_variant(int dilation) {
  Variant v{"dilated(" + std::to_string(dilation) + ")", BranchKind::dilated};
  v.dilation = dilation;
  return v;
}

Variant gdc_variant(double sigma) {
  std::ostringstream os;
  os << "gdc(" << sigma << ")";
  Variant v{os.str(), BranchKind::gdc};
  v.sigma = sigma;
  return v;
}

Variant uniform_variant(double range) {
  std::ostringstream os;
  os << "uniform(" << range << ")";
  Variant v{os.str(), BranchKind::gdc};
  v.distribution = OffsetDistribution::uniform;
  v.uniform_range = range;
  return v;
}

Variant parse_variant(const std::string& token) {
  const auto colon = token.find(':');
  const std::string head = token.substr(0, colon);
  const bool has_arg = colon != std::string::npos;
  const std::string arg = has_arg ? token.substr(colon + 1) : "";
  if (head == "normal" && !has_arg) return normal_variant();
  if (head == "dilated") {
    const double d = has_arg ? parse_number(arg, token) : 6.0;
    if (d < 1 || d != std::floor(d)) throw FormatError("variant '" + token + "': dilation must be a positive integer");
    return dilated_variant(static_cast<int>(d));
  }
  if (head == "gdc") {
    const double s = has_arg ? parse_number(arg, token) : 0.2;
    if (s < 0) throw FormatError("variant '" + token + "': sigma must be >= 0");
    return gdc_variant(s);
  }
  if (head == "uniform") {
    const double r = has_arg ? parse_number(arg, token) : 1.0;
    if (r < 0) throw FormatError("variant '" + token + "': range must be >= 0");
    return uniform_variant(r);
  }
  throw FormatError("unknown variant '" + token + "' (normal, dilated:<d>, gdc:<sigma>, uniform:<range>)");
}

const VariantSummary& ComparisonTable::at(const std::string& variant) const {
  for (const auto& s : summary)
    if (s.variant == variant) return s;
  throw std::out_of_range("no variant '" + variant + "' in table");
}

ComparisonTable run_comparison(const std::vector<DatasetCase>& cases, const std::vector<Variant>& variants,
                               const ExperimentOptions& options) {
  if (cases.empty()) throw FormatError("run_comparison: no cases");
  if (variants.empty()) throw FormatError("run_comparison: no variants");
  if (options.seeds.empty()) throw FormatError("run_comparison: no seeds");
  const auto t0 = std::chrono::steady_clock::now();

  std::vector<Job> jobs;
  for (std::size_t v = 0; v < variants.size(); ++v)
    for (std::uint64_t seed : options.seeds)
      for (std::size_t i = 0; i < cases.size(); ++i) jobs.push_back({v, seed, i});

  ComparisonTable table;
  table.runs.resize(jobs.size());
  run_queue(jobs.size(), options.workers, [&](std::size_t j) {
    const Job& job = jobs[j];
    const DatasetCase& c = cases[job.image];
    SegmentConfig config = options.base;
    config.seed = job.seed;
    variants[job.variant].apply(config.net);
    const auto start = std::chrono::steady_clock::now();
    const SegmentOutput out = run_segmentation(c.image, c.scribbles, config);
    const EvalReport eval = miou(out.result.mask, c.gt);
    RunRecord& r = table.runs[j];
    r.case_name = c.name;
    r.variant = variants[job.variant].name;
    r.seed = job.seed;
    r.miou = eval.miou;
    r.accuracy = eval.accuracy;
    r.train_accuracy = out.train.train_accuracy;
    r.final_loss = out.train.loss.empty() ? 0.0 : out.train.loss.back();
    r.seconds = seconds_since(start);
  });

  for (const Variant& v : variants) {
    VariantSummary s{v.name};
    for (const RunRecord& r : table.runs)
      if (r.variant == v.name) s.mean_miou += r.miou, s.mean_accuracy += r.accuracy, ++s.runs;
    if (s.runs > 0) s.mean_miou /= s.runs, s.mean_accuracy /= s.runs;
    table.summary.push_back(s);
  }

  const NetConfig& net = options.base.net;
  table.meta = {{"images", cases.size()},
                {"seeds", options.seeds},
                {"steps", net.steps},
                {"lr", net.lr},
                {"momentum", net.momentum},
                {"inference_samples", net.inference_samples},
                {"hidden_channels", net.hidden_channels},
                {"average_mode", to_string(net.average_mode)},
                {"miou_convention", "per image: mean IoU over categories present in gt (255 ignored); "
                                    "then mean over images and seeds"}};
  table.seconds = seconds_since(t0);
  return table;
}

ComparisonTable sigma_ablation(const std::vector<DatasetCase>& cases, const std::vector<double>& sigmas,
                               const ExperimentOptions& options) {
  std::vector<Variant> variants;
  for (double s : sigmas) variants.push_back(gdc_variant(s));
  return run_comparison(cases, variants, options);
}

std::string runs_csv(const ComparisonTable& table) {
  std::ostringstream os;
  os << "variant,seed,case,miou,accuracy,train_accuracy,final_loss,seconds\n";
  for (const RunRecord& r : table.runs)
    os << r.variant << ',' << r.seed << ',' << r.case_name << ',' << format_number(r.miou) << ','
       << format_number(r.accuracy) << ',' << format_number(r.train_accuracy) << ',' << format_number(r.final_loss)
       << ',' << format_number(r.seconds) << '\n';
  return os.str();
}

std::string summary_csv(const ComparisonTable& table) {
  std::ostringstream os;
  os << "variant,mean_miou,mean_accuracy,runs\n";
  for (const VariantSummary& s : table.summary)
    os << s.variant << ',' << format_number(s.mean_miou) << ',' << format_number(s.mean_accuracy) << ',' << s.runs
       << '\n';
  return os.str();
}

nlohmann::json to_json(const ComparisonTable& table) {
  nlohmann::json runs = nlohmann::json::array(), summary = nlohmann::json::array();
  for (const RunRecord& r : table.runs)
    runs.push_back({{"variant", r.variant},
                    {"seed", r.seed},
                    {"case", r.case_name},
                    {"miou", r.miou},
                    {"accuracy", r.accuracy},
                    {"train_accuracy", r.train_accuracy},
                    {"final_loss", r.final_loss},
                    {"seconds", r.seconds}});
  for (const VariantSummary& s : table.summary)
    summary.push_back(
        {{"variant", s.variant}, {"mean_miou", s.mean_miou}, {"mean_accuracy", s.mean_accuracy}, {"runs", s.runs}});
  return {{"meta", table.meta}, {"summary", summary}, {"runs", runs}, {"seconds", table.seconds}};
}

void write_report(const ComparisonTable& table, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream(dir / "runs.csv") << runs_csv(table);
  std::ofstream(dir / "summary.csv") << summary_csv(table);
  std::ofstream(dir / "report.json") << to_json(table).dump(2) << '\n';
}

std::vector<ScatterPoint> emit_offset_scatter(const GdcConfig& config, int n, std::uint64_t seed) {
  if (n < 1) throw ShapeError("emit_offset_scatter: n must be >= 1");
  GdcConfig c = config;
  c.adaptive_scale = false;
  c.sharing = OffsetSharing::per_forward;
  Rng rng(seed);
  const std::vector<Direction> basis = direction_basis(c.kernel_size);
  const int centre = center_direction(c.kernel_size);
  std::vector<ScatterPoint> out;
  for (int i = 0; i < n; ++i) {
    const OffsetSample s = sample_offsets(rng, c, 1);
    for (int d = 0; d < static_cast<int>(basis.size()); ++d) {
      if (d == centre) continue;
      const Offset eff = s.effective(d);
      out.push_back({i, d, eff(0) * basis[static_cast<std::size_t>(d)](0), eff(1) * basis[static_cast<std::size_t>(d)](1)});
    }
  }
  return out;
}

double mean_radius(const std::vector<ScatterPoint>& points) {
  if (points.empty()) return 0.0;
  double total = 0;
  for (const auto& p : points) total += std::hypot(p.dy, p.dx);
  return total / static_cast<double>(points.size());
}

std::string scatter_csv(const std::vector<ScatterPoint>& points) {
  std::ostringstream os;
  os << "sample,direction,dy,dx\n";
  for (const auto& p : points) os << p.sample << ',' << p.direction << ',' << format_number(p.dy) << ',' << format_number(p.dx) << '\n';
  return os.str();
}

std::string scatter_svg(const std::vector<ScatterPoint>& points, double extent) {
  if (extent <= 0) {
    for (const auto& p : points) extent = std::max({extent, std::abs(p.dy), std::abs(p.dx)});
    extent = extent > 0 ? extent * 1.1 : 1.0;
  }
  constexpr double kSize = 400, kHalf = kSize / 2;
  const double k = kHalf / extent;
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kSize << "\" height=\"" << kSize << "\" viewBox=\"0 0 "
     << kSize << ' ' << kSize << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"0\" y1=\"" << kHalf << "\" x2=\"" << kSize << "\" y2=\"" << kHalf << "\" stroke=\"#ccc\"/>\n";
  os << "<line x1=\"" << kHalf << "\" y1=\"0\" x2=\"" << kHalf << "\" y2=\"" << kSize << "\" stroke=\"#ccc\"/>\n";
  for (const auto& p : points)
    os << "<circle cx=\"" << kHalf + p.dx * k << "\" cy=\"" << kHalf + p.dy * k
       << "\" r=\"2\" fill=\"#1f77b4\" fill-opacity=\"0.5\"/>\n";
  os << "<circle cx=\"" << kHalf << "\" cy=\"" << kHalf << "\" r=\"4\" fill=\"#d62728\"/>\n";
  os << "</svg>\n";
  return os.str();
}

double feature_diversity(SegNet<float>& net, const RgbImage& image, int n, Rng& rng) {
  if (n < 2) throw ShapeError("feature_diversity: need at least 2 samples");
  const Tensor<float> features = net.stem().features(to_tensor<float>(image));
  const Index fh = features.height(), fw = features.width();
  std::vector<Eigen::ArrayXd> draws;
  for (int i = 0; i < n; ++i)
    draws.push_back(net.branch_features(features, net.draw_sample(rng, fh, fw)).array().cast<double>());
  Eigen::ArrayXd mean = Eigen::ArrayXd::Zero(draws.front().size());
  for (const auto& d : draws) mean += d;
  mean /= n;
  // Two passes so identical draws give exactly zero.
  Eigen::ArrayXd var = Eigen::ArrayXd::Zero(mean.size());
  for (const auto& d : draws) var += (d - mean).square();
  var /= n - 1;
  return var.mean();
}

}  // namespace gdc
