#include "gdc/gdc_kernel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace gdc {

void GdcConfig::validate() const {
  if (!(sigma >= 0) || !std::isfinite(sigma)) throw ShapeError("gdc: sigma must be finite and >= 0");
  if (kernel_size < 3 || kernel_size % 2 == 0) throw ShapeError("gdc: kernel size must be odd and >= 3");
  if (delta_base < 0) throw ShapeError("gdc: delta_base must be >= 0");
  if (mode == OffsetMode::per_direction && delta_base != 0) {
    throw ShapeError("gdc: delta_base applies to shared mode only");
  }
  if (distribution == OffsetDistribution::uniform && !(uniform_range >= 0)) {
    throw ShapeError("gdc: uniform range must be >= 0");
  }
}

std::vector<Direction> direction_basis(int kernel_size) {
  if (kernel_size < 1 || kernel_size % 2 == 0) throw ShapeError("direction_basis: kernel size must be odd");
  const int r = kernel_size / 2;
  std::vector<Direction> basis;
  basis.reserve(static_cast<std::size_t>(kernel_size * kernel_size));
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) basis.emplace_back(dy, dx);
  }
  return basis;
}

Offset OffsetSample::effective(int direction, Index position) const {
  const int center = center_direction(kernel_size);
  if (direction == center) return Offset::Zero();
  const int per_position = offsets_per_position();
  const Index base = (sharing == OffsetSharing::per_position ? position : 0) * per_position;
  if (mode == OffsetMode::shared) {
    return Offset::Constant(delta_base) + scale * offsets[static_cast<std::size_t>(base)];
  }
  const int slot = direction < center ? direction : direction - 1;
  return scale * offsets[static_cast<std::size_t>(base + slot)];
}

void OffsetSample::validate() const {
  if (kernel_size < 3 || kernel_size % 2 == 0) throw ShapeError("offset sample: bad kernel size");
  if (positions < 1) throw ShapeError("offset sample: positions must be >= 1");
  if (sharing == OffsetSharing::per_forward && positions != 1) {
    throw ShapeError("offset sample: per-forward sharing carries a single position");
  }
  const auto expected = static_cast<std::size_t>(positions * offsets_per_position());
  if (offsets.size() != expected) {
    throw ShapeError("offset sample: expected " + std::to_string(expected) + " offsets, got " +
                     std::to_string(offsets.size()));
  }
  for (const Offset& o : offsets) {
    if (!(o.minCoeff() >= 0) || !o.allFinite()) throw ShapeError("offset sample: offsets must be finite and >= 0");
  }
  if (!(scale > 0)) throw ShapeError("offset sample: scale must be positive");
  if (!(delta_base >= 0)) throw ShapeError("offset sample: delta_base must be >= 0");
}

double half_gaussian_sample(Rng& rng, double sigma) {
  if (sigma < 0 || std::isnan(sigma)) throw ShapeError("half_gaussian_sample: sigma must be >= 0");
  if (sigma == 0) return 0.0;
  std::normal_distribution<double> normal(0.0, sigma);
  return std::abs(normal(rng));
}

double half_gaussian_density(double x, double sigma) {
  if (x < 0) return 0.0;
  return std::numbers::sqrt2 / (sigma * std::sqrt(std::numbers::pi)) * std::exp(-x * x / (2 * sigma * sigma));
}

double half_gaussian_cdf(double x, double sigma) {
  if (x <= 0) return 0.0;
  return std::erf(x / (sigma * std::numbers::sqrt2));
}

OffsetSample sample_offsets(Rng& rng, const GdcConfig& config, Index short_side, Index positions) {
  config.validate();
  if (config.adaptive_scale && short_side <= 0) throw ShapeError("sample_offsets: short side must be positive");
  OffsetSample s;
  s.mode = config.mode;
  s.sharing = config.sharing;
  s.kernel_size = config.kernel_size;
  s.delta_base = config.mode == OffsetMode::shared ? config.delta_base : 0.0;
  s.scale = config.adaptive_scale ? static_cast<double>(short_side) : 1.0;
  s.positions = config.sharing == OffsetSharing::per_position ? positions : 1;
  if (s.positions < 1) throw ShapeError("sample_offsets: positions must be >= 1");

  const auto draw = [&]() {
    if (config.distribution == OffsetDistribution::uniform) {
      if (config.uniform_range == 0) return 0.0;
      return std::uniform_real_distribution<double>(0.0, config.uniform_range)(rng);
    }
    return half_gaussian_sample(rng, config.sigma);
  };
  const auto count = static_cast<std::size_t>(s.positions * s.offsets_per_position());
  s.offsets.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double dy = draw();
    const double dx = draw();
    s.offsets.emplace_back(dy, dx);
  }
  return s;
}

OffsetSample pinned_offsets(OffsetMode mode, const Offset& value, double delta_base, int kernel_size) {
  OffsetSample s;
  s.mode = mode;
  s.kernel_size = kernel_size;
  s.delta_base = mode == OffsetMode::shared ? delta_base : 0.0;
  s.offsets.assign(static_cast<std::size_t>(s.offsets_per_position()), value);
  s.validate();
  return s;
}

namespace {

Index clamp_index(Index v, Index size) { return std::clamp<Index>(v, 0, size - 1); }

Index displace(double eff, int direction) {
  // round half away from zero after the elementwise product
  return static_cast<Index>(std::llround(eff * static_cast<double>(direction)));
}

}  // namespace

std::vector<Coord> taps_for_position(const Coord& c, const OffsetSample& sample, Index height, Index width) {
  if (c(0) < 0 || c(0) >= height || c(1) < 0 || c(1) >= width) {
    throw ShapeError("taps_for_position: centre lies outside the map");
  }
  if (sample.sharing == OffsetSharing::per_position && sample.positions != height * width) {
    throw ShapeError("taps_for_position: per-position sample does not match the map size");
  }
  const auto basis = direction_basis(sample.kernel_size);
  const Index position = c(0) * width + c(1);
  std::vector<Coord> taps;
  taps.reserve(basis.size());
  for (int d = 0; d < static_cast<int>(basis.size()); ++d) {
    const Offset eff = sample.effective(d, position);
    const Index y = clamp_index(c(0) + displace(eff(0), basis[d](0)), height);
    const Index x = clamp_index(c(1) + displace(eff(1), basis[d](1)), width);
    taps.emplace_back(y, x);
  }
  return taps;
}

TapTable gdc_tap_table(const OffsetSample& sample, Index height, Index width) {
  sample.validate();
  if (height <= 0 || width <= 0) throw ShapeError("gdc: empty feature map");
  if (sample.sharing == OffsetSharing::per_position && sample.positions != height * width) {
    throw ShapeError("gdc: per-position sample holds " + std::to_string(sample.positions) + " positions for a " +
                     std::to_string(height) + "x" + std::to_string(width) + " map");
  }
  const auto basis = direction_basis(sample.kernel_size);
  TapTable table;
  table.taps = static_cast<int>(basis.size());
  table.in_height = table.out_height = height;
  table.in_width = table.out_width = width;
  const Index positions = height * width;
  table.source.resize(static_cast<std::size_t>(table.taps * positions));

  for (int d = 0; d < table.taps; ++d) {
    Index* row = table.source.data() + d * positions;
    const Direction& e = basis[static_cast<std::size_t>(d)];
    if (sample.sharing == OffsetSharing::per_forward) {
      const Offset eff = sample.effective(d);
      const Index dy = displace(eff(0), e(0));
      const Index dx = displace(eff(1), e(1));
      for (Index y = 0; y < height; ++y) {
        const Index sy = clamp_index(y + dy, height);
        for (Index x = 0; x < width; ++x) row[y * width + x] = sy * width + clamp_index(x + dx, width);
      }
    } else {
      for (Index y = 0; y < height; ++y) {
        for (Index x = 0; x < width; ++x) {
          const Index p = y * width + x;
          const Offset eff = sample.effective(d, p);
          row[p] = clamp_index(y + displace(eff(0), e(0)), height) * width +
                   clamp_index(x + displace(eff(1), e(1)), width);
        }
      }
    }
  }
  return table;
}

namespace {

template <typename Scalar>
void check_gdc_kernel(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel, const OffsetSample& sample) {
  if (input.rank() != 3) throw ShapeError("gdc: input must be [C,H,W]");
  if (kernel.rank() != 4 || kernel.dim(2) != sample.kernel_size || kernel.dim(3) != sample.kernel_size) {
    throw ShapeError("gdc: kernel must be [Cout,Cin," + std::to_string(sample.kernel_size) + "," +
                     std::to_string(sample.kernel_size) + "], got " + to_string(kernel.shape()));
  }
  if (kernel.dim(1) != input.channels()) throw ShapeError("gdc: kernel/input channel mismatch");
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> gdc_forward(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel, const OffsetSample& sample) {
  check_gdc_kernel(input, kernel, sample);
  return correlate(input, kernel, gdc_tap_table(sample, input.height(), input.width()));
}

template <typename Scalar>
ConvGrads<Scalar> gdc_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel,
                               const OffsetSample& sample, const Tensor<Scalar>& grad_output) {
  check_gdc_kernel(input, kernel, sample);
  return correlate_backward(input, kernel, gdc_tap_table(sample, input.height(), input.width()), grad_output);
}

template <typename Scalar>
Tensor<Scalar> GdcOperator<Scalar>::forward(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel) {
  check_gdc_kernel(input, kernel, sample_);
  table_ = gdc_tap_table(sample_, input.height(), input.width());
  input_ = input;
  kernel_ = kernel;
  return correlate(input_, kernel_, *table_);
}

template <typename Scalar>
ConvGrads<Scalar> GdcOperator<Scalar>::backward(const Tensor<Scalar>& grad_output, const OffsetSample& sample) const {
  if (!table_) throw std::logic_error("gdc: backward called before forward");
  if (!(sample == sample_)) throw std::logic_error("gdc: backward sample differs from the forward sample");
  return correlate_backward(input_, kernel_, *table_, grad_output);
}

template <typename Scalar>
Var<Scalar> gdc_conv(Var<Scalar> input, Var<Scalar> kernel, const OffsetSample& sample) {
  check_gdc_kernel(input.value(), kernel.value(), sample);
  const Tensor<Scalar>& x = input.value();
  return correlate(input, kernel, gdc_tap_table(sample, x.height(), x.width()), "gdc");
}

template <typename Scalar>
Var<Scalar> gdc_depthwise_conv(Var<Scalar> input, Var<Scalar> kernel, const OffsetSample& sample) {
  const Tensor<Scalar>& x = input.value();
  const Tensor<Scalar>& k = kernel.value();
  if (x.rank() != 3) throw ShapeError("gdc: input must be [C,H,W]");
  if (k.rank() != 4 || k.dim(0) != x.channels() || k.dim(1) != 1 || k.dim(2) != sample.kernel_size ||
      k.dim(3) != sample.kernel_size) {
    throw ShapeError("gdc: depthwise kernel must be [C,1,k,k], got " + to_string(k.shape()));
  }
  return depthwise_correlate(input, kernel, gdc_tap_table(sample, x.height(), x.width()), "gdc_depthwise");
}

template Tensor<float> gdc_forward(const Tensor<float>&, const Tensor<float>&, const OffsetSample&);
template Tensor<double> gdc_forward(const Tensor<double>&, const Tensor<double>&, const OffsetSample&);
template ConvGrads<float> gdc_backward(const Tensor<float>&, const Tensor<float>&, const OffsetSample&,
                                       const Tensor<float>&);
template ConvGrads<double> gdc_backward(const Tensor<double>&, const Tensor<double>&, const OffsetSample&,
                                        const Tensor<double>&);
template class GdcOperator<float>;
template class GdcOperator<double>;
template Var<float> gdc_conv(Var<float>, Var<float>, const OffsetSample&);
template Var<double> gdc_conv(Var<double>, Var<double>, const OffsetSample&);
template Var<float> gdc_depthwise_conv(Var<float>, Var<float>, const OffsetSample&);
template Var<double> gdc_depthwise_conv(Var<double>, Var<double>, const OffsetSample&);

const char* to_string(OffsetMode mode) { return mode == OffsetMode::shared ? "shared" : "per_direction"; }
const char* to_string(OffsetSharing sharing) {
  return sharing == OffsetSharing::per_position ? "per_position" : "per_forward";
}

void to_json(nlohmann::json& j, const OffsetSample& s) {
  nlohmann::json offsets = nlohmann::json::array();
  for (const Offset& o : s.offsets) offsets.push_back({o(0), o(1)});
  j = {{"mode", to_string(s.mode)},
       {"sharing", to_string(s.sharing)},
       {"kernel_size", s.kernel_size},
       {"offsets", std::move(offsets)},
       {"delta_base", s.delta_base},
       {"scale", s.scale},
       {"seed", s.seed},
       {"positions", s.positions}};
}

void from_json(const nlohmann::json& j, OffsetSample& s) {
  try {
    const std::string mode = j.at("mode").get<std::string>();
    if (mode == "shared") {
      s.mode = OffsetMode::shared;
    } else if (mode == "per_direction") {
      s.mode = OffsetMode::per_direction;
    } else {
      throw FormatError("offset sample: unknown mode '" + mode + "'");
    }
    s.sharing = j.value("sharing", std::string("per_forward")) == "per_position" ? OffsetSharing::per_position
                                                                                 : OffsetSharing::per_forward;
    s.kernel_size = j.value("kernel_size", 3);
    s.delta_base = j.value("delta_base", 0.0);
    s.scale = j.at("scale").get<double>();
    s.seed = j.value("seed", std::uint64_t{0});
    s.positions = j.value("positions", Index{1});
    s.offsets.clear();
    for (const auto& o : j.at("offsets")) s.offsets.emplace_back(o.at(0).get<double>(), o.at(1).get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("offset sample: ") + e.what());
  }
  try {
    s.validate();
  } catch (const ShapeError& e) {
    throw FormatError(e.what());
  }
}

}  // namespace gdc
