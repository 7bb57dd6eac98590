#pragma once

// 8-bit RGB images, palette label masks and their PNG encodings.

#include "gdc/label_mask.hpp"
#include "gdc/tensor.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

namespace gdc {

using Bytes = std::vector<std::uint8_t>;
using Rgb = std::array<std::uint8_t, 3>;

/// Interleaved 8-bit RGB, row-major.
struct RgbImage {
  Index height = 0;
  Index width = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(Index h, Index w) : height(h), width(w), pixels(static_cast<std::size_t>(h * w * 3), 0) {}

  std::uint8_t& at(Index y, Index x, int c) { return pixels[static_cast<std::size_t>((y * width + x) * 3 + c)]; }
  std::uint8_t at(Index y, Index x, int c) const {
    return pixels[static_cast<std::size_t>((y * width + x) * 3 + c)];
  }
  bool operator==(const RgbImage&) const = default;
};

/// [3, H, W] tensor with values in [0, 1].
template <typename Scalar>
Tensor<Scalar> to_tensor(const RgbImage& image);

/// Fixed category palette: index i maps to palette_color(i); the ignore index 255 is black.
Rgb palette_color(int category);

/// Index stored for unlabeled / ignored pixels in palette PNGs.
inline constexpr std::uint8_t kIgnoreIndex = 255;

RgbImage decode_png(std::span<const std::uint8_t> bytes);
/// {height, width} from the IHDR chunk without decoding pixels.
std::pair<Index, Index> png_size(std::span<const std::uint8_t> bytes);
Bytes encode_png(const RgbImage& image);

/// Palette-indexed PNG; unlabeled pixels are written as kIgnoreIndex.
Bytes encode_mask_png(const LabelMask& mask);
/// Reads an 8-bit palette or grayscale PNG as raw indices; kIgnoreIndex becomes unlabeled.
LabelMask decode_mask_png(std::span<const std::uint8_t> bytes);

/// image * (1 - alpha) + palette_color(mask) * alpha on labeled pixels.
RgbImage overlay(const RgbImage& image, const LabelMask& mask, double alpha = 0.5);

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

inline RgbImage read_png(const std::filesystem::path& path) { return decode_png(read_file(path)); }
inline LabelMask read_mask_png(const std::filesystem::path& path) { return decode_mask_png(read_file(path)); }

}  // namespace gdc
