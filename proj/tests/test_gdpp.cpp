#include "gdc/gdpp.hpp"

#include "doctest.h"
#include "oracles.hpp"

#include <cmath>
#include <numbers>

using namespace gdc;
using gdc::testing::identical;
using gdc::testing::interior_max_diff;
using gdc::testing::random_tensor;

namespace {

GdppConfig toy_config() {
  GdppConfig c;
  c.branch_channels = 3;
  c.out_channels = 2;
  return c;
}

// Three separable dilated branches built straight from graph ops.
Tensor<double> dilated_pyramid(const Tensor<double>& x, GdppParams<double>& p, int d_small, int d_mid, int d_large) {
  Graph<double> g;
  Var<double> in = g.constant(x);
  const auto branch = [&](Parameter<double>& dw, Parameter<double>& pw, Parameter<double>& b, int d) {
    return relu(add_channel_bias(separable_conv(in, g.parameter(dw), g.parameter(pw), d), g.parameter(b)));
  };
  Var<double> cat = concat_channels(concat_channels(branch(p.small_dw, p.small_pw, p.small_b, d_small),
                                                    branch(p.middle_dw, p.middle_pw, p.middle_b, d_mid)),
                                    branch(p.large_dw, p.large_pw, p.large_b, d_large));
  return add_channel_bias(pointwise_conv(cat, g.parameter(p.fuse_w)), g.parameter(p.fuse_b)).value();
}

double projected_output(const Tensor<double>& x, GdppParams<double>& p, const GdppConfig& c, const OffsetSample& s,
                        const Tensor<double>& r) {
  Graph<double> g;
  return (gdpp_forward(g, g.constant(x), p, c, s).value().array() * r.array()).sum();
}

}  // namespace

TEST_CASE("gdpp output keeps spatial size and has out_channels channels") {
  Rng rng(1);
  const GdppConfig c = toy_config();
  auto p = init_gdpp<double>(4, c, rng);
  const Tensor<double> y = gdpp_forward(random_tensor({4, 20, 28}, rng), p, c, rng);
  CHECK(y.shape() == Shape{2, 20, 28});
}

TEST_CASE("sigma 0 reduces the module to a dilated pyramid on interior pixels") {
  Rng rng(2);
  GdppConfig c = toy_config();
  c.sigma = 0.0;
  auto p = init_gdpp<double>(3, c, rng);
  const Tensor<double> x = random_tensor({3, 32, 32}, rng);
  const Tensor<double> expected = dilated_pyramid(x, p, 1, 9, 18);
  for (int trial = 0; trial < 3; ++trial) {
    const Tensor<double> y = gdpp_forward(x, p, c, rng);
    CHECK(interior_max_diff(y, expected, 9) < 1e-12);
  }
  // Different rng states must not matter once sigma is 0.
  Rng a(10), b(99);
  CHECK(identical(gdpp_forward(x, p, c, a), gdpp_forward(x, p, c, b)));
}

TEST_CASE("middle-branch tap radius concentrates just above delta_base") {
  const GdppConfig c;  // delta_base 9, sigma 2
  Rng rng(3);
  double total = 0;
  Index min_radius = 1 << 30;
  const int n = 1000;
  for (int i = 0; i < n; ++i) {
    const OffsetSample s = sample_gdpp_offsets(rng, c);
    // Horizontal neighbour of the centre of a large map.
    const auto taps = taps_for_position(Coord(100, 100), s, 201, 201);
    const Index r = taps[5](1) - 100;
    min_radius = std::min(min_radius, r);
    total += static_cast<double>(r);
  }
  const double mean = total / n;
  CHECK(min_radius >= 9);
  CHECK(mean >= 9.0);
  CHECK(mean <= 9.0 + 2.0 * std::sqrt(2.0 / std::numbers::pi) * 1.1);
}

TEST_CASE("separable branches hold fewer parameters than full ones") {
  Rng rng(4);
  GdppConfig sep = toy_config();
  GdppConfig full = sep;
  full.separable = false;
  for (Index cin : {2, 8, 24}) {
    auto a = init_gdpp<float>(cin, sep, rng);
    auto b = init_gdpp<float>(cin, full, rng);
    CHECK(a.count() < b.count());
  }
  GdppConfig def;
  auto a = init_gdpp<float>(40, def, rng);
  def.separable = false;
  auto b = init_gdpp<float>(40, def, rng);
  CHECK(a.count() == 3 * (40 * 9 + 40 * 8 + 8) + 8 * 24 + 8);
  CHECK(b.count() == 3 * (8 * 40 * 9 + 8) + 8 * 24 + 8);
}

TEST_CASE("gdpp backward matches central differences") {
  for (bool separable : {true, false}) {
    for (std::uint64_t seed : {11u, 12u, 13u}) {
      CAPTURE(seed);
      CAPTURE(separable);
      Rng rng(seed);
      GdppConfig c = toy_config();
      c.separable = separable;
      c.large_dilation = 12;
      c.delta_base = 5;
      c.sigma = 1.5;
      auto p = init_gdpp<double>(2, c, rng);
      // Non-zero biases keep ReLU inputs away from exact zeros.
      for (Parameter<double>* q : p.all())
        if (q->value.rank() == 1) q->value = random_tensor(q->value.shape(), rng, -0.3, 0.3);
      const Tensor<double> x = random_tensor({2, 18, 18}, rng);
      const OffsetSample s = sample_gdpp_offsets(rng, c);
      const Tensor<double> r = random_tensor({2, 18, 18}, rng);
      const GdppGrads<double> grads = gdpp_backward(x, p, c, s, r);

      // Small enough that no probe straddles a ReLU kink at these seeds (1e-5 does once).
      const double h = 1e-6;
      double worst = 0;
      const auto compare = [&](double analytic, double numeric) {
        worst = std::max(worst, std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6}));
      };
      Tensor<double> xw = x;
      for (Index j = 0; j < x.size(); ++j) {
        const double orig = xw.data()[j];
        xw.data()[j] = orig + h;
        const double up = projected_output(xw, p, c, s, r);
        xw.data()[j] = orig - h;
        const double down = projected_output(xw, p, c, s, r);
        xw.data()[j] = orig;
        compare(grads.input.data()[j], (up - down) / (2 * h));
      }
      const auto params = p.all();
      for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor<double>& v = params[i]->value;
        for (Index j = 0; j < v.size(); ++j) {
          const double orig = v.data()[j];
          v.data()[j] = orig + h;
          const double up = projected_output(x, p, c, s, r);
          v.data()[j] = orig - h;
          const double down = projected_output(x, p, c, s, r);
          v.data()[j] = orig;
          compare(grads.params[i].data()[j], (up - down) / (2 * h));
        }
      }
      CHECK(worst < 1e-4);
    }
  }
}

TEST_CASE("zero upstream gradient gives zero gradients") {
  Rng rng(5);
  const GdppConfig c = toy_config();
  auto p = init_gdpp<double>(2, c, rng);
  const Tensor<double> x = random_tensor({2, 24, 24}, rng);
  const OffsetSample s = sample_gdpp_offsets(rng, c);
  const GdppGrads<double> g = gdpp_backward(x, p, c, s, Tensor<double>({2, 24, 24}));
  CHECK(g.input.array().abs().maxCoeff() == 0.0);
  for (const auto& t : g.params) CHECK(t.array().abs().maxCoeff() == 0.0);
}

TEST_CASE("a frozen sample gives a deterministic gradient") {
  Rng rng(6);
  const GdppConfig c = toy_config();
  auto p = init_gdpp<double>(2, c, rng);
  const Tensor<double> x = random_tensor({2, 24, 24}, rng);
  const Tensor<double> r = random_tensor({2, 24, 24}, rng);
  const OffsetSample s = sample_gdpp_offsets(rng, c);
  const GdppGrads<double> a = gdpp_backward(x, p, c, s, r);
  const GdppGrads<double> b = gdpp_backward(x, p, c, s, r);
  CHECK(identical(a.input, b.input));
  for (std::size_t i = 0; i < a.params.size(); ++i) CHECK(identical(a.params[i], b.params[i]));
}

TEST_CASE("gdpp rejects bad shapes and configs") {
  Rng rng(7);
  GdppConfig c = toy_config();
  auto p = init_gdpp<double>(3, c, rng);
  CHECK_THROWS_AS(gdpp_forward(random_tensor({2, 16, 16}, rng), p, c, rng), ShapeError);
  const OffsetSample s = sample_gdpp_offsets(rng, c);
  CHECK_THROWS_AS(gdpp_backward(random_tensor({3, 16, 16}, rng), p, c, s, Tensor<double>({1, 16, 16})), ShapeError);

  GdppConfig bad = c;
  bad.delta_base = 20;
  CHECK_THROWS_AS(bad.validate(), ShapeError);
  bad = c;
  bad.delta_base = 0.5;
  CHECK_THROWS_AS(bad.validate(), ShapeError);
  bad = c;
  bad.sigma = -1;
  CHECK_THROWS_AS(bad.validate(), ShapeError);
  bad = c;
  bad.separable = false;
  CHECK_THROWS_AS(gdpp_forward(random_tensor({3, 16, 16}, rng), p, bad, rng), ShapeError);
}
