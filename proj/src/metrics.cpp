#include "gdc/metrics.hpp"

#include <algorithm>
#include <limits>
#include <string>

namespace gdc {

EvalReport miou(const LabelMask& pred, const LabelMask& gt, int num_categories) {
  if (pred.height != gt.height || pred.width != gt.width || pred.labels.size() != gt.labels.size())
    throw ShapeError("miou: prediction and ground truth sizes differ");
  int n = num_categories;
  if (n < 0) {
    n = 0;
    for (int l : pred.labels) n = std::max(n, l + 1);
    for (int l : gt.labels) n = std::max(n, l + 1);
  }
  std::vector<Index> inter(static_cast<std::size_t>(n), 0), pred_count(static_cast<std::size_t>(n), 0),
      gt_count(static_cast<std::size_t>(n), 0);
  EvalReport r;
  Index correct = 0;
  for (std::size_t i = 0; i < gt.labels.size(); ++i) {
    const int g = gt.labels[i], p = pred.labels[i];
    if (g == LabelMask::kUnlabeled) continue;
    if (g < 0 || g >= n || p >= n) throw ShapeError("miou: category id outside [0, " + std::to_string(n) + ")");
    ++r.evaluated_pixels;
    ++gt_count[static_cast<std::size_t>(g)];
    if (p >= 0) ++pred_count[static_cast<std::size_t>(p)];
    if (p == g) ++inter[static_cast<std::size_t>(g)], ++correct;
  }
  r.iou.assign(static_cast<std::size_t>(n), std::numeric_limits<double>::quiet_NaN());
  r.present.assign(static_cast<std::size_t>(n), false);
  int present = 0;
  double total = 0;
  for (std::size_t c = 0; c < static_cast<std::size_t>(n); ++c) {
    const Index uni = gt_count[c] + pred_count[c] - inter[c];
    if (uni > 0) r.iou[c] = static_cast<double>(inter[c]) / static_cast<double>(uni);
    if (gt_count[c] > 0) {
      r.present[c] = true;
      total += r.iou[c];
      ++present;
    }
  }
  r.miou = present > 0 ? total / present : 0.0;
  r.accuracy = r.evaluated_pixels > 0 ? static_cast<double>(correct) / static_cast<double>(r.evaluated_pixels) : 0.0;
  return r;
}

}  // namespace gdc
