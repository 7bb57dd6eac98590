#include "gdc/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <tuple>

namespace gdc {
namespace {

// libpng reports errors through longjmp. Every function that arms setjmp below
// keeps only trivially destructible locals, and buffers are sized by the caller
// before the jump point, so no destructor is ever skipped.

struct MemoryReader {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t pos;
};

void read_callback(png_structp png, png_bytep out, png_size_t n) {
  auto* src = static_cast<MemoryReader*>(png_get_io_ptr(png));
  if (src->size - src->pos < n) png_error(png, "truncated PNG stream");
  std::memcpy(out, src->data + src->pos, n);
  src->pos += n;
}

void write_callback(png_structp png, png_bytep data, png_size_t n) {
  auto* dst = static_cast<Bytes*>(png_get_io_ptr(png));
  dst->insert(dst->end(), data, data + n);
}

void flush_callback(png_structp) {}

void silent_warning(png_structp, png_const_charp) {}

struct ReadHandle {
  png_structp png = nullptr;
  png_infop info = nullptr;
  MemoryReader src{};
  char message[160] = {};

  ReadHandle() = default;
  ReadHandle(const ReadHandle&) = delete;
  ReadHandle& operator=(const ReadHandle&) = delete;
  ~ReadHandle() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
  }
};

void error_callback(png_structp png, png_const_charp msg) {
  auto* message = static_cast<char*>(png_get_error_ptr(png));
  std::snprintf(message, 160, "%s", msg);
  png_longjmp(png, 1);
}

enum class ReadAs { rgb, indices };

struct Header {
  png_uint_32 width = 0;
  png_uint_32 height = 0;
  int color_type = 0;
  int bit_depth = 0;
  std::size_t row_bytes = 0;
};

bool read_header(ReadHandle& h, ReadAs mode, Header* out) {
  if (setjmp(png_jmpbuf(h.png))) return false;
  png_set_read_fn(h.png, &h.src, read_callback);
  png_read_info(h.png, h.info);
  out->width = png_get_image_width(h.png, h.info);
  out->height = png_get_image_height(h.png, h.info);
  out->color_type = png_get_color_type(h.png, h.info);
  out->bit_depth = png_get_bit_depth(h.png, h.info);
  if (mode == ReadAs::rgb) {
    png_set_expand(h.png);
    png_set_strip_16(h.png);
    png_set_strip_alpha(h.png);
    png_set_gray_to_rgb(h.png);
  } else {
    if (out->color_type != PNG_COLOR_TYPE_PALETTE && out->color_type != PNG_COLOR_TYPE_GRAY) {
      std::snprintf(h.message, sizeof h.message, "label PNG must be palette or grayscale");
      return false;
    }
    if (out->bit_depth == 16) {
      std::snprintf(h.message, sizeof h.message, "16-bit label PNGs are not supported");
      return false;
    }
    png_set_packing(h.png);
  }
  png_read_update_info(h.png, h.info);
  out->row_bytes = png_get_rowbytes(h.png, h.info);
  return true;
}

bool read_rows(ReadHandle& h, png_bytep* rows) {
  if (setjmp(png_jmpbuf(h.png))) return false;
  png_read_image(h.png, rows);
  png_read_end(h.png, nullptr);
  return true;
}

constexpr png_uint_32 kMaxSide = 1u << 15;

// Decodes into `pixels` with `channels` bytes per pixel; returns <height, width>.
std::pair<Index, Index> decode(std::span<const std::uint8_t> bytes, ReadAs mode, std::vector<std::uint8_t>& pixels) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw FormatError("not a PNG stream");
  ReadHandle h;
  h.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, h.message, error_callback, silent_warning);
  if (!h.png) throw std::bad_alloc();
  h.info = png_create_info_struct(h.png);
  if (!h.info) throw std::bad_alloc();
  h.src = MemoryReader{bytes.data(), bytes.size(), 0};

  Header header;
  if (!read_header(h, mode, &header)) throw FormatError(std::string("PNG decode: ") + h.message);
  if (header.width == 0 || header.height == 0 || header.width > kMaxSide || header.height > kMaxSide)
    throw FormatError("PNG decode: unsupported dimensions");
  const std::size_t channels = mode == ReadAs::rgb ? 3 : 1;
  if (header.row_bytes != header.width * channels) throw FormatError("PNG decode: unexpected row layout");

  pixels.assign(static_cast<std::size_t>(header.width) * header.height * channels, 0);
  std::vector<png_bytep> rows(header.height);
  for (png_uint_32 y = 0; y < header.height; ++y) rows[y] = pixels.data() + y * header.row_bytes;
  if (!read_rows(h, rows.data())) throw FormatError(std::string("PNG decode: ") + h.message);
  return {static_cast<Index>(header.height), static_cast<Index>(header.width)};
}

struct WriteHandle {
  png_structp png = nullptr;
  png_infop info = nullptr;
  char message[160] = {};

  WriteHandle() = default;
  WriteHandle(const WriteHandle&) = delete;
  WriteHandle& operator=(const WriteHandle&) = delete;
  ~WriteHandle() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
  }
};

bool write_png(WriteHandle& h, Bytes* out, png_uint_32 width, png_uint_32 height, int color_type,
               const png_color* palette, int palette_size, png_bytep* rows) {
  if (setjmp(png_jmpbuf(h.png))) return false;
  png_set_write_fn(h.png, out, write_callback, flush_callback);
  png_set_IHDR(h.png, h.info, width, height, 8, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  if (palette) png_set_PLTE(h.png, h.info, palette, palette_size);
  png_write_info(h.png, h.info);
  png_write_image(h.png, rows);
  png_write_end(h.png, nullptr);
  return true;
}

Bytes encode(const std::uint8_t* pixels, Index height, Index width, int color_type, const png_color* palette,
             int palette_size) {
  if (height <= 0 || width <= 0) throw ShapeError("PNG encode: empty image");
  const std::size_t channels = color_type == PNG_COLOR_TYPE_RGB ? 3 : 1;
  WriteHandle h;
  h.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, h.message, error_callback, silent_warning);
  if (!h.png) throw std::bad_alloc();
  h.info = png_create_info_struct(h.png);
  if (!h.info) throw std::bad_alloc();
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  for (Index y = 0; y < height; ++y)
    rows[static_cast<std::size_t>(y)] = const_cast<png_bytep>(pixels + static_cast<std::size_t>(y * width) * channels);
  Bytes out;
  if (!write_png(h, &out, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), color_type, palette,
                 palette_size, rows.data()))
    throw FormatError(std::string("PNG encode: ") + h.message);
  return out;
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> to_tensor(const RgbImage& image) {
  Tensor<Scalar> out({3, image.height, image.width});
  for (int c = 0; c < 3; ++c)
    for (Index y = 0; y < image.height; ++y)
      for (Index x = 0; x < image.width; ++x) out(c, y, x) = static_cast<Scalar>(image.at(y, x, c)) / Scalar(255);
  return out;
}

template Tensor<float> to_tensor<float>(const RgbImage&);
template Tensor<double> to_tensor<double>(const RgbImage&);

Rgb palette_color(int category) {
  static constexpr Rgb kBase[] = {
      {230, 25, 75},  {60, 180, 75},   {255, 225, 25}, {0, 130, 200},  {245, 130, 48},  {145, 30, 180},
      {70, 240, 240}, {240, 50, 230},  {210, 245, 60}, {250, 190, 212}, {0, 128, 128}, {220, 190, 255},
      {170, 110, 40}, {255, 250, 200}, {128, 0, 0},    {170, 255, 195}, {128, 128, 0}, {255, 215, 180},
      {0, 0, 128},    {128, 128, 128},
  };
  constexpr int n = static_cast<int>(std::size(kBase));
  if (category < 0 || category == kIgnoreIndex) return {0, 0, 0};
  if (category < n) return kBase[category];
  // Deterministic fill for larger ids.
  const auto h = static_cast<std::uint32_t>(category) * 2654435761u;
  return {static_cast<std::uint8_t>(h >> 24), static_cast<std::uint8_t>(h >> 16), static_cast<std::uint8_t>(h >> 8)};
}

RgbImage decode_png(std::span<const std::uint8_t> bytes) {
  RgbImage image;
  std::tie(image.height, image.width) = decode(bytes, ReadAs::rgb, image.pixels);
  return image;
}

std::pair<Index, Index> png_size(std::span<const std::uint8_t> bytes) {
  static constexpr std::uint8_t kSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() < 24 || !std::equal(kSignature, kSignature + 8, bytes.begin()) ||
      !std::equal(bytes.begin() + 12, bytes.begin() + 16, "IHDR"))
    throw FormatError("png: not a PNG stream");
  const auto be32 = [&](std::size_t at) {
    return static_cast<Index>(bytes[at]) << 24 | static_cast<Index>(bytes[at + 1]) << 16 |
           static_cast<Index>(bytes[at + 2]) << 8 | static_cast<Index>(bytes[at + 3]);
  };
  return {be32(20), be32(16)};
}

Bytes encode_png(const RgbImage& image) {
  if (image.pixels.size() != static_cast<std::size_t>(image.height * image.width * 3))
    throw ShapeError("encode_png: pixel buffer does not match dimensions");
  return encode(image.pixels.data(), image.height, image.width, PNG_COLOR_TYPE_RGB, nullptr, 0);
}

Bytes encode_mask_png(const LabelMask& mask) {
  if (mask.labels.size() != static_cast<std::size_t>(mask.size()))
    throw ShapeError("encode_mask_png: label buffer does not match dimensions");
  std::vector<std::uint8_t> indices(mask.labels.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int l = mask.labels[i];
    if (l == LabelMask::kUnlabeled) {
      indices[i] = kIgnoreIndex;
    } else if (l < 0 || l >= kIgnoreIndex) {
      throw ShapeError("encode_mask_png: category id " + std::to_string(l) + " does not fit a palette");
    } else {
      indices[i] = static_cast<std::uint8_t>(l);
    }
  }
  std::array<png_color, 256> palette{};
  for (int i = 0; i < 256; ++i) {
    const Rgb c = palette_color(i);
    palette[static_cast<std::size_t>(i)] = png_color{c[0], c[1], c[2]};
  }
  return encode(indices.data(), mask.height, mask.width, PNG_COLOR_TYPE_PALETTE, palette.data(), 256);
}

LabelMask decode_mask_png(std::span<const std::uint8_t> bytes) {
  std::vector<std::uint8_t> indices;
  const auto [h, w] = decode(bytes, ReadAs::indices, indices);
  LabelMask mask(h, w);
  for (std::size_t i = 0; i < indices.size(); ++i)
    mask.labels[i] = indices[i] == kIgnoreIndex ? LabelMask::kUnlabeled : indices[i];
  return mask;
}

RgbImage overlay(const RgbImage& image, const LabelMask& mask, double alpha) {
  if (image.height != mask.height || image.width != mask.width)
    throw ShapeError("overlay: image and mask sizes differ");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ShapeError("overlay: alpha must lie in [0, 1]");
  RgbImage out = image;
  for (Index y = 0; y < image.height; ++y)
    for (Index x = 0; x < image.width; ++x) {
      const int l = mask.at(y, x);
      if (l == LabelMask::kUnlabeled) continue;
      const Rgb c = palette_color(l);
      for (int k = 0; k < 3; ++k)
        out.at(y, x, k) = static_cast<std::uint8_t>(std::lround((1.0 - alpha) * image.at(y, x, k) + alpha * c[k]));
    }
  return out;
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("short write to " + path.string());
}

}  // namespace gdc
