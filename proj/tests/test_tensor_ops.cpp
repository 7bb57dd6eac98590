#include "doctest.h"
#include "oracles.hpp"

#include "gdc/graph.hpp"
#include "gdc/ops.hpp"
#include "gdc/weight_file.hpp"

#include <cmath>
#include <filesystem>
#include <random>

using namespace gdc;
using gdc::testing::brute_conv2d;
using gdc::testing::check_gradients;
using gdc::testing::project;
using gdc::testing::random_tensor;

TEST_CASE("tensor invariants") {
  Tensor<double> t({2, 3, 4});
  CHECK(t.size() == 24);
  CHECK(t.matrix().rows() == 2);
  CHECK(t.matrix().cols() == 12);
  CHECK_THROWS_AS(Tensor<double>({2, 2}, Tensor<double>::Array::Zero(3)), ShapeError);
  t(1, 2, 3) = 5;
  CHECK(t.data()[23] == 5);
  CHECK(t.cast<float>()(1, 2, 3) == 5.0f);
}

TEST_CASE("conv2d examples") {
  std::mt19937_64 rng(1);
  const auto x = random_tensor({3, 5, 6}, rng);

  SUBCASE("1x1 unit kernel is the identity") {
    const auto k = Tensor<double>::constant({1, 1, 1, 1}, 1.0);
    const auto x1 = random_tensor({1, 5, 6}, rng);
    CHECK((conv2d(x1, k).array() == x1.array()).all());
  }
  SUBCASE("zero kernel gives zero output") {
    const Tensor<double> k({2, 3, 3, 3});
    CHECK(conv2d(x, k, {1, 1, 1}).array().abs().maxCoeff() == 0.0);
  }
  SUBCASE("ones kernel on ones input sums the neighbourhood") {
    const auto ones = Tensor<double>::constant({1, 3, 3}, 1.0);
    const auto k = Tensor<double>::constant({1, 1, 3, 3}, 1.0);
    const auto out = conv2d(ones, k, {1, 1, 1});
    CHECK(out(0, 1, 1) == 9.0);
    CHECK(out(0, 0, 0) == 4.0);
    CHECK(out(0, 0, 1) == 6.0);
  }
  SUBCASE("output size follows the stride arithmetic") {
    const Tensor<double> k({4, 3, 3, 3});
    CHECK(conv2d(x, k, {2, 1, 1}).shape() == Shape{4, 3, 3});
    CHECK(conv2d(x, k, {1, 0, 1}).shape() == Shape{4, 3, 4});
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(conv2d(x, Tensor<double>({1, 2, 3, 3})), ShapeError);
    CHECK_THROWS_AS(conv2d(x, Tensor<double>({1, 3, 2, 2})), ShapeError);
    CHECK_THROWS_AS(conv2d(x, Tensor<double>({1, 3, 3, 3}), {0, 1, 1}), ShapeError);
  }
}

TEST_CASE("conv2d matches the brute-force oracle") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> dim(1, 4), side(3, 8), stride(1, 2), pad(0, 2), dil(1, 2);
  for (int trial = 0; trial < 40; ++trial) {
    const Index cin = dim(rng), cout = dim(rng);
    const int k = trial % 3 == 0 ? 1 : 3;
    const Conv2dOptions opt{stride(rng), pad(rng), dil(rng)};
    const Index h = side(rng), w = side(rng);
    if (h + 2 * opt.pad < opt.dilation * (k - 1) + 1 || w + 2 * opt.pad < opt.dilation * (k - 1) + 1) continue;
    const auto x = random_tensor({cin, h, w}, rng);
    const auto kern = random_tensor({cout, cin, k, k}, rng);
    const auto got = conv2d(x, kern, opt);
    const auto want = brute_conv2d(x, kern, opt.stride, opt.pad, opt.dilation);
    REQUIRE(got.shape() == want.shape());
    CHECK((got.array() - want.array()).abs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("pointwise_conv") {
  std::mt19937_64 rng(3);
  const auto x = random_tensor({4, 5, 5}, rng);

  Tensor<double> eye({4, 4, 1, 1});
  for (Index i = 0; i < 4; ++i) eye(i, i, 0, 0) = 1;
  CHECK((pointwise_conv(x, eye).array() == x.array()).all());

  Tensor<double> summer({1, 4, 1, 1});
  summer(0, 0, 0, 0) = summer(0, 1, 0, 0) = 1;
  const auto s = pointwise_conv(x, summer);
  CHECK(s(0, 2, 3) == doctest::Approx(x(0, 2, 3) + x(1, 2, 3)).epsilon(1e-15));

  const auto k = random_tensor({2, 4, 1, 1}, rng);
  const auto out = pointwise_conv(x, k);
  double worst = 0;
  for (Index o = 0; o < 2; ++o)
    for (Index y = 0; y < 5; ++y)
      for (Index xx = 0; xx < 5; ++xx) {
        double acc = 0;
        for (Index c = 0; c < 4; ++c) acc += k(o, c, 0, 0) * x(c, y, xx);
        worst = std::max(worst, std::abs(acc - out(o, y, xx)));
      }
  CHECK(worst < 1e-12);
  CHECK_THROWS_AS(pointwise_conv(x, Tensor<double>({2, 3, 1, 1})), ShapeError);
}

TEST_CASE("separable_conv") {
  std::mt19937_64 rng(5);
  const auto x = random_tensor({3, 9, 9}, rng);

  SUBCASE("delta depthwise and identity pointwise reproduce the input") {
    Tensor<double> delta({3, 1, 3, 3});
    for (Index c = 0; c < 3; ++c) delta(c, 0, 1, 1) = 1;
    Tensor<double> eye({3, 3, 1, 1});
    for (Index c = 0; c < 3; ++c) eye(c, c, 0, 0) = 1;
    CHECK((separable_conv(x, delta, eye, 2).array() == x.array()).all());
  }
  SUBCASE("equals conv2d with the composed kernel") {
    for (int dilation : {1, 2, 3}) {
      const auto dw = random_tensor({3, 1, 3, 3}, rng);
      const auto pw = random_tensor({4, 3, 1, 1}, rng);
      Tensor<double> composed({4, 3, 3, 3});
      for (Index o = 0; o < 4; ++o)
        for (Index c = 0; c < 3; ++c)
          for (Index ky = 0; ky < 3; ++ky)
            for (Index kx = 0; kx < 3; ++kx) composed(o, c, ky, kx) = pw(o, c, 0, 0) * dw(c, 0, ky, kx);
      const auto want = brute_conv2d(x, composed, 1, dilation, dilation);
      const auto got = separable_conv(x, dw, pw, dilation);
      CHECK((got.array() - want.array()).abs().maxCoeff() < 1e-10);
    }
  }
  SUBCASE("dilation 2 taps sit at c + <2,2> (*) e") {
    const auto table = conv_tap_table(9, 9, 3, {1, 2, 2});
    const Index c = 4 * 9 + 4;
    int tap = 0;
    for (int ey = -1; ey <= 1; ++ey)
      for (int ex = -1; ex <= 1; ++ex, ++tap) CHECK(table.at(tap, c) == (4 + 2 * ey) * 9 + (4 + 2 * ex));
  }
}

TEST_CASE("elementwise and layout ops") {
  const auto x = Tensor<double>::from_values({1, 1, 2}, {-1.0, 2.0});
  const auto r = relu(x);
  CHECK(r.data()[0] == 0.0);
  CHECK(r.data()[1] == 2.0);

  const auto equal = Tensor<double>::constant({5, 3, 3}, 0.7);
  const auto p = softmax_channels(equal);
  CHECK((p.array() - 0.2).abs().maxCoeff() < 1e-15);

  std::mt19937_64 rng(11);
  const auto logits = random_tensor({4, 6, 7}, rng, -30, 30);
  const auto q = softmax_channels(logits);
  CHECK(q.array().minCoeff() >= 0.0);
  CHECK((q.matrix().colwise().sum().array() - 1.0).abs().maxCoeff() < 1e-6);

  const auto constant = Tensor<double>::constant({2, 4, 5}, 3.25);
  const auto up = bilinear_resize(constant, 11, 7);
  CHECK((up.array() - 3.25).abs().maxCoeff() < 1e-14);
  const auto same = bilinear_resize(logits, 6, 7);
  CHECK((same.array() == logits.array()).all());
  CHECK_THROWS_AS(bilinear_resize(logits, 0, 3), ShapeError);

  const auto cat = concat_channels(constant, Tensor<double>({3, 4, 5}));
  CHECK(cat.channels() == 5);
  CHECK(cat(1, 3, 4) == 3.25);
  CHECK(cat(2, 0, 0) == 0.0);
  CHECK_THROWS_AS(concat_channels(constant, Tensor<double>({1, 4, 4})), ShapeError);
}

TEST_CASE("weighted cross-entropy") {
  const std::vector<double> unit{1.0, 1.0, 1.0};

  SUBCASE("one-hot prediction on labeled pixels costs nothing") {
    Tensor<double> probs({3, 1, 3});
    LabelMask mask(1, 3);
    mask.labels = {0, 2, LabelMask::kUnlabeled};
    probs(0, 0, 0) = 1;
    probs(2, 0, 1) = 1;
    probs(1, 0, 2) = 1;
    CHECK(weighted_ce_loss(probs, mask, unit) == doctest::Approx(0.0));
  }
  SUBCASE("uniform prediction costs ln N per labeled pixel") {
    const auto probs = Tensor<double>::constant({3, 2, 2}, 1.0 / 3);
    LabelMask mask(2, 2);
    mask.labels = {0, 1, 2, LabelMask::kUnlabeled};
    CHECK(weighted_ce_loss(probs, mask, unit, LossReduction::sum) == doctest::Approx(3 * std::log(3.0)));
    CHECK(weighted_ce_loss(probs, mask, unit, LossReduction::mean) == doctest::Approx(std::log(3.0)));
  }
  SUBCASE("two-pixel hand computation") {
    // pixel 0: label 0, p = 0.8; pixel 1: label 1, p = 0.4; weights {0.3, 0.7}
    const auto probs = Tensor<double>::from_values({2, 1, 2}, {0.8, 0.6, 0.2, 0.4});
    LabelMask mask(1, 2);
    mask.labels = {0, 1};
    const std::vector<double> w{0.3, 0.7};
    CHECK(std::abs(weighted_ce_loss(probs, mask, w, LossReduction::sum) - 0.7083465777061714) < 1e-12);
    CHECK(std::abs(weighted_ce_loss(probs, mask, w, LossReduction::mean) - 0.3541732888530857) < 1e-12);
  }
  SUBCASE("unlabeled content is irrelevant") {
    std::mt19937_64 rng(2);
    auto a = softmax_channels(random_tensor({3, 4, 4}, rng));
    LabelMask mask(4, 4);
    mask.at(0, 0) = 1;
    mask.at(2, 3) = 2;
    const double before = weighted_ce_loss(a, mask, unit);
    const auto other = softmax_channels(random_tensor({3, 4, 4}, rng));
    for (Index p = 0; p < 16; ++p) {
      if (mask.labels[static_cast<std::size_t>(p)] != LabelMask::kUnlabeled) continue;
      for (Index c = 0; c < 3; ++c) a.data()[c * 16 + p] = other.data()[c * 16 + p];
    }
    CHECK(weighted_ce_loss(a, mask, unit) == before);
  }
  SUBCASE("probabilities below the floor are clamped and counted") {
    const auto probs = Tensor<double>::from_values({2, 1, 2}, {0.0, 1.0, 1.0, 0.0});
    LabelMask mask(1, 2);
    mask.labels = {0, 0};
    LossStats stats;
    const double loss = weighted_ce_loss(probs, mask, unit, LossReduction::sum, &stats);
    CHECK(stats.clamped_pixels == 1);
    CHECK(stats.labeled_pixels == 2);
    CHECK(loss == doctest::Approx(-std::log(kProbabilityFloor)));
  }
}

TEST_CASE("graph basics") {
  Parameter<double> p{"p", Tensor<double>::from_values({2, 1, 2}, {1.0, -2.0, 3.0, 0.5}), {}, false};
  {
    Graph<double> g;
    g.backward(sum(g.parameter(p)));
    CHECK((p.grad.array() == 1.0).all());
    CHECK_THROWS_AS(g.backward(sum(g.parameter(p))), std::logic_error);
  }
  SUBCASE("sgd with zero learning rate leaves parameters unchanged") {
    const auto before = p.value;
    std::vector<Parameter<double>*> params{&p};
    sgd_step<double>(params, 0.0);
    CHECK((p.value.array() == before.array()).all());
    sgd_step<double>(params, 0.5);
    CHECK(p.value.data()[0] == doctest::Approx(0.5));
  }
  SUBCASE("backward without a forward pass is an error") {
    Graph<double> g;
    CHECK_THROWS_AS(g.backward(Var<double>{&g, 0}), std::logic_error);
  }
  SUBCASE("frozen parameters receive zero gradient") {
    Parameter<double> f{"f", Tensor<double>::constant({2, 1, 2}, 1.0), {}, true};
    Graph<double> g;
    g.backward(sum(add(g.parameter(p), g.parameter(f))));
    CHECK(f.grad.shape() == f.value.shape());
    CHECK(f.grad.array().abs().maxCoeff() == 0.0);
  }
  SUBCASE("non-finite forward values are surfaced") {
    Graph<double> g;
    auto x = g.variable(Tensor<double>::from_values({1, 1, 1}, {std::nan("")}));
    CHECK_THROWS_AS(relu(x), NumericError);
  }
}

TEST_CASE("analytic gradients match central differences for every op") {
  constexpr double kTol = 1e-4;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CAPTURE(seed);
    std::mt19937_64 rng(seed);
    const auto x = random_tensor({2, 5, 6}, rng);
    const auto r = random_tensor({3, 5, 6}, rng);

    // conv2d, strided and dilated
    const Conv2dOptions opt{1 + static_cast<int>(seed % 2), 1 + static_cast<int>(seed % 3), 1 + static_cast<int>(seed % 2)};
    const auto k = random_tensor({3, 2, 3, 3}, rng);
    const auto y = brute_conv2d(x, k, opt.stride, opt.pad, opt.dilation);
    const auto ry = random_tensor(y.shape(), rng);
    CHECK(check_gradients([&](Graph<double>&, const auto& v) { return project(conv2d(v[0], v[1], opt), ry); },
                          {x, k})
              .max_rel_error < kTol);

    // depthwise + pointwise (separable)
    const auto dw = random_tensor({2, 1, 3, 3}, rng);
    const auto pw = random_tensor({3, 2, 1, 1}, rng);
    CHECK(check_gradients(
              [&](Graph<double>&, const auto& v) { return project(separable_conv(v[0], v[1], v[2], 2), r); },
              {x, dw, pw})
              .max_rel_error < kTol);

    // bias, relu (inputs kept away from the kink), add
    const auto b = random_tensor({2}, rng);
    auto shifted = x;
    for (double& v : shifted.values()) v += v >= 0 ? 0.1 : -0.1;
    const auto r2 = random_tensor({2, 5, 6}, rng);
    CHECK(check_gradients(
              [&](Graph<double>&, const auto& v) { return project(relu(add(add_channel_bias(v[0], v[1]), v[2])), r2); },
              {shifted, b, x})
              .max_rel_error < kTol);

    // softmax
    CHECK(check_gradients([&](Graph<double>&, const auto& v) { return project(softmax_channels(v[0]), r2); }, {x})
              .max_rel_error < kTol);

    // bilinear resize, both directions
    const auto rup = random_tensor({2, 9, 7}, rng);
    const auto rdown = random_tensor({2, 3, 4}, rng);
    CHECK(check_gradients([&](Graph<double>&, const auto& v) { return project(bilinear_resize(v[0], 9, 7), rup); },
                          {x})
              .max_rel_error < kTol);
    CHECK(check_gradients([&](Graph<double>&, const auto& v) { return project(bilinear_resize(v[0], 3, 4), rdown); },
                          {x})
              .max_rel_error < kTol);

    // concat
    const auto z = random_tensor({1, 5, 6}, rng);
    CHECK(check_gradients([&](Graph<double>&, const auto& v) { return project(concat_channels(v[0], v[1]), r); },
                          {x, z})
              .max_rel_error < kTol);

    // weighted CE through softmax
    LabelMask mask(5, 6);
    std::uniform_int_distribution<int> lab(-1, 2);
    for (int& l : mask.labels) l = lab(rng);
    mask.labels[0] = 0;
    const std::vector<double> w{0.2, 0.5, 0.3};
    const auto logits = random_tensor({3, 5, 6}, rng);
    for (auto red : {LossReduction::sum, LossReduction::mean}) {
      CHECK(check_gradients([&](Graph<double>&, const auto& v) { return weighted_ce_loss(softmax_channels(v[0]), mask, w, red); },
                            {logits})
                .max_rel_error < kTol);
    }
  }
}

TEST_CASE("weight file round trip and validation") {
  const auto dir = std::filesystem::temp_directory_path() / "gdc_weight_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "w.gdcw";

  Parameter<float> a{"stem.conv", Tensor<float>::from_values({2, 1, 1, 1}, {1.5f, -2.25f}), {}, true};
  Parameter<float> b{"stem.bias", Tensor<float>::from_values({2}, {0.125f, 7.0f}), {}, true};
  std::vector<Parameter<float>*> params{&a, &b};
  save_parameters<float>(path, params);

  const auto records = read_weight_file(path);
  REQUIRE(records.size() == 2);
  CHECK(records[0].name == "stem.conv");
  CHECK(records[0].shape == Shape{2, 1, 1, 1});

  const auto bytes = encode_weight_records(records);
  CHECK(bytes[0] == 'G');
  CHECK(bytes[3] == 'W');
  CHECK(bytes[4] == 1);  // version, little-endian
  CHECK(bytes[8] == 9);  // first name length

  Parameter<float> a2{"stem.conv", Tensor<float>({2, 1, 1, 1}), {}, true};
  Parameter<float> b2{"stem.bias", Tensor<float>({2}), {}, true};
  std::vector<Parameter<float>*> loaded{&a2, &b2};
  load_parameters<float>(path, loaded);
  CHECK((a2.value.array() == a.value.array()).all());
  CHECK((b2.value.array() == b.value.array()).all());

  Parameter<float> wrong{"stem.conv", Tensor<float>({3, 1, 1, 1}), {}, true};
  std::vector<Parameter<float>*> bad{&wrong};
  CHECK_THROWS_AS(load_parameters<float>(path, bad), ShapeError);

  std::vector<unsigned char> junk{'N', 'O', 'P', 'E', 1, 0, 0, 0};
  CHECK_THROWS_AS(decode_weight_records(junk), FormatError);
  auto truncated = bytes;
  truncated.resize(truncated.size() - 2);
  CHECK_THROWS_AS(decode_weight_records(truncated), FormatError);
}
