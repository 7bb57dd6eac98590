#pragma once

// Evaluation harnesses: per-image runs over a dataset for several context
// branch variants, the sigma sweep, offset scatter dumps and a feature
// diversity probe.
//
// Dataset layout: one subdirectory per image holding image.png, scribbles.json
// and gt.png (palette or gray, 255 = ignore). Subdirectories run in name order.

#include "gdc/pipeline.hpp"
#include "gdc/synthetic.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace gdc {

using DatasetCase = SyntheticCase;

/// Throws FormatError if the directory has no cases or a case lacks one of its three files.
std::vector<DatasetCase> load_dataset(const std::filesystem::path& dir);

struct Variant {
  std::string name;
  BranchKind kind = BranchKind::gdc;
  int dilation = 6;
  double sigma = 0.2;
  OffsetDistribution distribution = OffsetDistribution::half_gaussian;
  double uniform_range = 1.0;

  /// Copies the branch settings into `net`.
  void apply(NetConfig& net) const;
};

Variant normal_variant();
Variant dilated_variant(int dilation);
Variant gdc_variant(double sigma);
Variant uniform_variant(double range = 1.0);

/// "normal", "dilated:<d>", "gdc:<sigma>" or "uniform:<range>"; throws FormatError otherwise.
Variant parse_variant(const std::string& token);

struct ExperimentOptions {
  SegmentConfig base;                  // branch fields are overwritten per variant
  std::vector<std::uint64_t> seeds{0};
  int workers = 1;                     // >1 fans runs out over threads; results do not depend on it
};

struct RunRecord {
  std::string case_name;
  std::string variant;
  std::uint64_t seed = 0;
  double miou = 0;
  double accuracy = 0;
  double train_accuracy = 0;
  double final_loss = 0;
  double seconds = 0;
};

struct VariantSummary {
  std::string variant;
  double mean_miou = 0;      // over images, then over seeds
  double mean_accuracy = 0;
  int runs = 0;
};

struct ComparisonTable {
  std::vector<RunRecord> runs;  // variant-major, then seed, then case
  std::vector<VariantSummary> summary;
  nlohmann::json meta;
  double seconds = 0;

  const VariantSummary& at(const std::string& variant) const;
};

/// Trains and evaluates one net per (variant, seed, case).
ComparisonTable run_comparison(const std::vector<DatasetCase>& cases, const std::vector<Variant>& variants,
                               const ExperimentOptions& options);

/// run_comparison over gdc variants differing only in sigma.
ComparisonTable sigma_ablation(const std::vector<DatasetCase>& cases, const std::vector<double>& sigmas,
                               const ExperimentOptions& options);

std::string runs_csv(const ComparisonTable& table);
std::string summary_csv(const ComparisonTable& table);
nlohmann::json to_json(const ComparisonTable& table);
/// Writes runs.csv, summary.csv and report.json into `dir`.
void write_report(const ComparisonTable& table, const std::filesystem::path& dir);

struct ScatterPoint {
  int sample = 0;
  int direction = 0;  // basis index, centre excluded
  double dy = 0;
  double dx = 0;
};

/// Continuous tap displacements eff (*) e of `n` samples around a centre at the
/// origin, in units of the adaptive scale (which is therefore held at 1).
std::vector<ScatterPoint> emit_offset_scatter(const GdcConfig& config, int n = 100, std::uint64_t seed = 0);
double mean_radius(const std::vector<ScatterPoint>& points);
std::string scatter_csv(const std::vector<ScatterPoint>& points);
std::string scatter_svg(const std::vector<ScatterPoint>& points, double extent = 0);

/// Mean over positions and channels of the across-sample variance of the
/// context-branch output, for `n` independent offset draws.
double feature_diversity(SegNet<float>& net, const RgbImage& image, int n, Rng& rng);

}  // namespace gdc
