#pragma once

#include "gdc/label_mask.hpp"

#include <vector>

namespace gdc {

struct EvalReport {
  std::vector<double> iou;      // per category id; NaN for categories absent from gt
  std::vector<bool> present;    // category appears in gt
  double miou = 0;              // mean IoU over categories present in gt
  double accuracy = 0;          // over non-ignored gt pixels
  Index evaluated_pixels = 0;
};

/// IoU_c = |pred = c and gt = c| / |pred = c or gt = c| over pixels whose gt is
/// labeled. `num_categories` < 0 sizes by the largest id seen in either mask.
EvalReport miou(const LabelMask& pred, const LabelMask& gt, int num_categories = -1);

}  // namespace gdc
