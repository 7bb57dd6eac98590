#pragma once

#include "gdc/tensor.hpp"

#include <vector>

namespace gdc {

/// Per-pixel category ids, row-major. `kUnlabeled` marks pixels without a label.
struct LabelMask {
  static constexpr int kUnlabeled = -1;

  Index height = 0;
  Index width = 0;
  std::vector<int> labels;

  LabelMask() = default;
  LabelMask(Index h, Index w, int fill = kUnlabeled)
      : height(h), width(w), labels(static_cast<std::size_t>(h * w), fill) {}

  int& at(Index y, Index x) { return labels[static_cast<std::size_t>(y * width + x)]; }
  int at(Index y, Index x) const { return labels[static_cast<std::size_t>(y * width + x)]; }
  Index size() const { return height * width; }

  Index labeled_count() const {
    Index n = 0;
    for (int l : labels) n += l != kUnlabeled;
    return n;
  }

  bool operator==(const LabelMask&) const = default;
};

}  // namespace gdc
