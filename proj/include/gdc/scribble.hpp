#pragma once

// Scribble strokes, their rasterization, superpixel expansion into a training
// mask, and the per-category loss weights derived from that mask.

#include "gdc/label_mask.hpp"
#include "gdc/tensor.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace gdc {

/// Pixel coordinate, origin top-left, x rightward, y downward.
struct Point {
  Index x = 0;
  Index y = 0;
  bool operator==(const Point&) const = default;
};

struct Stroke {
  int category = 0;
  int radius = 1;
  std::vector<Point> points;
  bool operator==(const Stroke&) const = default;
};

struct ScribbleSet {
  std::string image;
  std::vector<Stroke> strokes;

  /// 1 + the largest category id, 0 when there are no strokes.
  int num_categories() const;
  bool empty() const { return strokes.empty(); }

  /// Structural checks: category >= 0, radius >= 1, non-empty polylines, dense ids.
  void validate() const;
  /// validate() plus every point inside a height x width image.
  void validate(Index height, Index width) const;

  bool operator==(const ScribbleSet&) const = default;
};

/// Parses and structurally validates; throws FormatError.
ScribbleSet parse_scribbles(const nlohmann::json& j);
ScribbleSet parse_scribbles(const std::string& text);
ScribbleSet read_scribbles(const std::filesystem::path& path);
nlohmann::json to_json(const ScribbleSet& scribbles);

/// Row-major indices of pixels within `radius` of any segment of the polyline,
/// clipped to the image, sorted and unique.
std::vector<Index> rasterize(const Stroke& stroke, Index height, Index width);

/// Direct stroke labels (later strokes overwrite earlier ones).
LabelMask rasterize(const ScribbleSet& scribbles, Index height, Index width);

/// Superpixel ids per pixel, dense in [0, count).
struct SuperpixelMap {
  Index height = 0;
  Index width = 0;
  std::vector<int> labels;
  int count = 0;

  int at(Index y, Index x) const { return labels[static_cast<std::size_t>(y * width + x)]; }
};

struct Expansion {
  LabelMask mask;
  int conflicts = 0;  // superpixels overlapped by more than one category
};

/// Labels every superpixel touched by a stroke with that stroke's category.
/// When several categories touch one superpixel the one with the most stroke
/// pixels inside it wins, ties going to the lower id.
Expansion expand_scribbles(const SuperpixelMap& superpixels, const ScribbleSet& scribbles);

/// w_c = n_c / N_all over labeled pixels. `num_categories` < 0 sizes the result
/// by the largest id present; absent categories get weight 0.
std::vector<double> class_weights(const LabelMask& mask, int num_categories = -1);

}  // namespace gdc
