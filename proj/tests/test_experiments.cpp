#include "gdc/experiments.hpp"
#include "gdc/metrics.hpp"

#include "doctest.h"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

using namespace gdc;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

LabelMask columns_mask(const std::vector<int>& column_labels, Index h) {
  LabelMask m(h, static_cast<Index>(column_labels.size()), 0);
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < m.width; ++x) m.at(y, x) = column_labels[static_cast<std::size_t>(x)];
  return m;
}

ExperimentOptions quick_options() {
  ExperimentOptions o;
  o.base.net.steps = 5;
  o.base.net.inference_samples = 3;
  o.base.net.hidden_channels = 8;
  return o;
}

}  // namespace

TEST_CASE("miou on hand-checked masks") {
  SUBCASE("perfect prediction") {
    const LabelMask gt = columns_mask({0, 1, 2, 1}, 4);
    const EvalReport r = miou(gt, gt);
    CHECK(r.miou == 1.0);
    CHECK(r.accuracy == 1.0);
  }
  SUBCASE("disjoint binary masks") {
    const EvalReport r = miou(columns_mask({1, 1, 0, 0}, 3), columns_mask({0, 0, 1, 1}, 3));
    CHECK(r.iou[0] == 0.0);
    CHECK(r.iou[1] == 0.0);
    CHECK(r.miou == 0.0);
  }
  SUBCASE("4x4 half overlap gives one third") {
    // gt 1 on columns 0-1, prediction 1 on columns 1-2: 4 shared pixels of 12.
    const EvalReport r = miou(columns_mask({0, 1, 1, 0}, 4), columns_mask({1, 1, 0, 0}, 4));
    CHECK(r.iou[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(r.iou[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(r.accuracy == 0.5);
  }
  SUBCASE("ignored gt pixels and absent categories") {
    LabelMask gt = columns_mask({0, 0, 1, 1}, 2);
    gt.at(0, 0) = LabelMask::kUnlabeled;
    LabelMask pred = columns_mask({2, 0, 1, 1}, 2);
    const EvalReport r = miou(pred, gt, 3);
    CHECK(r.evaluated_pixels == 7);
    CHECK_FALSE(r.present[2]);
    CHECK(r.iou[2] == 0.0);  // predicted but absent from gt: excluded from the mean
    CHECK(r.iou[0] == doctest::Approx(2.0 / 3.0));
    CHECK(r.miou == doctest::Approx((2.0 / 3.0 + 1.0) / 2.0));
  }
  CHECK_THROWS_AS(miou(LabelMask(2, 2, 0), LabelMask(2, 3, 0)), ShapeError);
}

TEST_CASE("miou agrees with a confusion-matrix oracle") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    std::uniform_int_distribution<Index> side(1, 16);
    std::uniform_int_distribution<int> cats(1, 5);
    const Index h = side(rng), w = side(rng);
    const int n = cats(rng);
    std::uniform_int_distribution<int> label(0, n - 1);
    std::bernoulli_distribution ignore(0.1);
    LabelMask pred(h, w, 0), gt(h, w, 0);
    for (std::size_t i = 0; i < gt.labels.size(); ++i) {
      pred.labels[i] = label(rng);
      gt.labels[i] = ignore(rng) ? LabelMask::kUnlabeled : label(rng);
    }
    std::vector<std::vector<Index>> conf(static_cast<std::size_t>(n), std::vector<Index>(static_cast<std::size_t>(n), 0));
    Index total = 0, diag = 0;
    for (std::size_t i = 0; i < gt.labels.size(); ++i) {
      if (gt.labels[i] == LabelMask::kUnlabeled) continue;
      ++conf[static_cast<std::size_t>(gt.labels[i])][static_cast<std::size_t>(pred.labels[i])];
      ++total;
    }
    double sum = 0;
    int present = 0;
    for (int c = 0; c < n; ++c) {
      Index row = 0, col = 0;
      for (int k = 0; k < n; ++k) row += conf[c][k], col += conf[k][c];
      diag += conf[c][c];
      if (row == 0) continue;
      sum += static_cast<double>(conf[c][c]) / static_cast<double>(row + col - conf[c][c]);
      ++present;
    }
    const EvalReport r = miou(pred, gt, n);
    CHECK(r.miou == (present ? sum / present : 0.0));
    CHECK(r.accuracy == (total ? static_cast<double>(diag) / static_cast<double>(total) : 0.0));
    CHECK(r.miou >= 0.0);
    CHECK(r.miou <= 1.0);
  }
}

TEST_CASE("offset scatter") {
  GdcConfig c;
  SUBCASE("sigma 0 collapses onto the centre or the base ring") {
    c.sigma = 0;
    for (const auto& p : emit_offset_scatter(c, 10)) {
      CHECK(p.dy == 0.0);
      CHECK(p.dx == 0.0);
    }
    c.mode = OffsetMode::shared;
    c.delta_base = 1;
    const std::vector<Direction> basis = direction_basis(3);
    for (const auto& p : emit_offset_scatter(c, 10)) {
      CHECK(p.dy == basis[static_cast<std::size_t>(p.direction)](0));
      CHECK(p.dx == basis[static_cast<std::size_t>(p.direction)](1));
    }
  }
  SUBCASE("wider sigma spreads further, monotonically") {
    double previous = 0;
    for (double s : {0.05, 0.1, 0.15, 0.2, 0.3}) {
      c.sigma = s;
      const double r = mean_radius(emit_offset_scatter(c, 100, 3));
      CHECK(r > previous);
      previous = r;
    }
  }
  SUBCASE("deterministic, with one row per non-centre tap") {
    c.sigma = 0.15;
    const auto a = emit_offset_scatter(c, 100, 9);
    const auto b = emit_offset_scatter(c, 100, 9);
    CHECK(scatter_csv(a) == scatter_csv(b));
    CHECK(a.size() == 800);
    const std::string csv = scatter_csv(a);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 801);
    const std::string svg = scatter_svg(a);
    std::size_t circles = 0;
    for (auto pos = svg.find("<circle"); pos != std::string::npos; pos = svg.find("<circle", pos + 1)) ++circles;
    CHECK(circles == 801);
  }
  CHECK_THROWS_AS(emit_offset_scatter(c, 0), ShapeError);
}

TEST_CASE("variant parsing") {
  CHECK(parse_variant("normal").kind == BranchKind::normal);
  CHECK(parse_variant("dilated:6").dilation == 6);
  CHECK(parse_variant("dilated:6").name == "dilated(6)");
  CHECK(parse_variant("gdc:0.2").sigma == 0.2);
  CHECK(parse_variant("gdc:0.2").name == "gdc(0.2)");
  CHECK(parse_variant("uniform:1").distribution == OffsetDistribution::uniform);
  for (const char* bad : {"", "normal:1", "dilated:0", "dilated:2.5", "gdc:-1", "gdc:x", "gdc:0.2x", "sobel"})
    CHECK_THROWS_AS(parse_variant(bad), FormatError);
}

TEST_CASE("dataset round trip and missing files") {
  const fs::path dir = fresh_dir("gdc_test_dataset");
  const auto cases = synthetic_suite(2, 5, 32);
  write_dataset(dir, cases);
  const auto loaded = load_dataset(dir);
  REQUIRE(loaded.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(loaded[i].name == cases[i].name);
    CHECK(loaded[i].image == cases[i].image);
    CHECK(loaded[i].gt.labels == cases[i].gt.labels);
    CHECK(loaded[i].scribbles.strokes.size() == cases[i].scribbles.strokes.size());
  }
  fs::remove(dir / cases[1].name / "gt.png");
  CHECK_THROWS_AS(load_dataset(dir), FormatError);
  CHECK_THROWS_AS(load_dataset(fresh_dir("gdc_test_dataset_empty")), FormatError);
  CHECK_THROWS_AS(load_dataset(dir / "nope"), FormatError);
  fs::remove_all(dir);
}

TEST_CASE("comparison tables are seed-reproducible and worker-independent") {
  const auto cases = synthetic_suite(2, 3, 32);
  const std::vector<Variant> variants{normal_variant(), dilated_variant(2), gdc_variant(0.2), uniform_variant(1.0)};
  ExperimentOptions o = quick_options();
  o.seeds = {0, 1};
  const ComparisonTable a = run_comparison(cases, variants, o);
  o.workers = 3;
  const ComparisonTable b = run_comparison(cases, variants, o);
  REQUIRE(a.runs.size() == 16);
  for (std::size_t i = 0; i < a.runs.size(); ++i) {
    CHECK(a.runs[i].variant == b.runs[i].variant);
    CHECK(a.runs[i].case_name == b.runs[i].case_name);
    CHECK(a.runs[i].miou == b.runs[i].miou);
    CHECK(a.runs[i].final_loss == b.runs[i].final_loss);
  }
  CHECK(summary_csv(a) == summary_csv(b));
  double sum = 0;
  for (const auto& r : a.runs)
    if (r.variant == "gdc(0.2)") sum += r.miou;
  CHECK(a.at("gdc(0.2)").mean_miou == doctest::Approx(sum / 4));
  CHECK(a.at("gdc(0.2)").runs == 4);
  CHECK_THROWS_AS(a.at("sobel"), std::out_of_range);

  const nlohmann::json j = to_json(a);
  CHECK(j["runs"].size() == 16);
  CHECK(j["summary"].size() == 4);
  CHECK(j["meta"].contains("miou_convention"));
  const fs::path dir = fresh_dir("gdc_test_report");
  write_report(a, dir);
  for (const char* f : {"runs.csv", "summary.csv", "report.json"}) CHECK(fs::is_regular_file(dir / f));
  fs::remove_all(dir);

  CHECK_THROWS_AS(run_comparison({}, variants, o), FormatError);
  CHECK_THROWS_AS(run_comparison(cases, {}, o), FormatError);
}

TEST_CASE("sigma ablation emits one row per sigma within the per-image budget") {
  const auto cases = synthetic_suite(1, 11, 128);
  ExperimentOptions o;  // full-size training on a 128x128 image
  const auto t0 = std::chrono::steady_clock::now();
  const ComparisonTable t = sigma_ablation(cases, {0.1, 0.2, 0.3}, o);
  const double per_run = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 3;
  REQUIRE(t.summary.size() == 3);
  CHECK(t.summary[0].variant == "gdc(0.1)");
  CHECK(t.summary[2].variant == "gdc(0.3)");
  CHECK(per_run < 10.0);
  for (const auto& r : t.runs) CHECK(r.seconds < 10.0);

  ExperimentOptions q = quick_options();
  const auto small = synthetic_suite(2, 4, 32);
  CHECK(summary_csv(sigma_ablation(small, {0.1, 0.2, 0.3}, q)) == summary_csv(sigma_ablation(small, {0.1, 0.2, 0.3}, q)));
}

TEST_CASE("feature diversity") {
  const RgbImage image = synthetic_suite(1, 2, 64)[0].image;
  const auto diversity = [&](BranchKind kind, double sigma) {
    NetConfig c;
    c.branch = kind;
    c.gdc.sigma = sigma;
    Rng init(5), draws(6);
    SegNet<float> net(c, init);
    return feature_diversity(net, image, 20, draws);
  };
  CHECK(diversity(BranchKind::gdc, 0.0) == 0.0);
  CHECK(diversity(BranchKind::dilated, 0.2) == 0.0);
  CHECK(diversity(BranchKind::normal, 0.2) == 0.0);
  const double d1 = diversity(BranchKind::gdc, 0.1), d2 = diversity(BranchKind::gdc, 0.2),
               d3 = diversity(BranchKind::gdc, 0.3);
  CHECK(d1 > 0.0);
  CHECK(d1 < d2);
  CHECK(d2 < d3);
  NetConfig c;
  Rng init(1), draws(2);
  SegNet<float> net(c, init);
  CHECK_THROWS_AS(feature_diversity(net, image, 1, draws), ShapeError);
}
