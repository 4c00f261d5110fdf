#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <vector>

namespace cgr {

// Plain double-precision box math on (cx, cy, w, h) boxes. The loss module
// has its own differentiable GIoU built from tensor ops; these serve
// matching costs, suppression and evaluation.

inline double box_area(const std::array<double, 4>& b) { return b[2] * b[3]; }

inline double box_iou(const std::array<double, 4>& a, const std::array<double, 4>& b) {
  const double ax1 = a[0] - a[2] / 2, ax2 = a[0] + a[2] / 2;
  const double ay1 = a[1] - a[3] / 2, ay2 = a[1] + a[3] / 2;
  const double bx1 = b[0] - b[2] / 2, bx2 = b[0] + b[2] / 2;
  const double by1 = b[1] - b[3] / 2, by2 = b[1] + b[3] / 2;
  const double iw = std::max(0.0, std::min(ax2, bx2) - std::max(ax1, bx1));
  const double ih = std::max(0.0, std::min(ay2, by2) - std::max(ay1, by1));
  const double inter = iw * ih;
  const double uni = box_area(a) + box_area(b) - inter;
  return uni <= 0.0 ? 0.0 : inter / uni;
}

inline double box_giou_value(const std::array<double, 4>& a, const std::array<double, 4>& b) {
  const double ax1 = a[0] - a[2] / 2, ax2 = a[0] + a[2] / 2;
  const double ay1 = a[1] - a[3] / 2, ay2 = a[1] + a[3] / 2;
  const double bx1 = b[0] - b[2] / 2, bx2 = b[0] + b[2] / 2;
  const double by1 = b[1] - b[3] / 2, by2 = b[1] + b[3] / 2;
  const double iw = std::max(0.0, std::min(ax2, bx2) - std::max(ax1, bx1));
  const double ih = std::max(0.0, std::min(ay2, by2) - std::max(ay1, by1));
  const double inter = iw * ih;
  const double uni = box_area(a) + box_area(b) - inter;
  const double ew = std::max(ax2, bx2) - std::min(ax1, bx1);
  const double eh = std::max(ay2, by2) - std::min(ay1, by1);
  const double enclosing = ew * eh;
  const double iou = uni <= 0.0 ? 0.0 : inter / uni;
  return enclosing <= 0.0 ? iou : iou - (enclosing - uni) / enclosing;
}

// Greedy suppression by descending score; returns kept indices in that order.
inline std::vector<int> nms_keep(const std::vector<std::array<double, 4>>& boxes,
                                 const std::vector<double>& scores, double iou_thr) {
  std::vector<int> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return scores[a] > scores[b]; });
  std::vector<int> kept;
  std::vector<bool> dead(boxes.size(), false);
  for (int i : order) {
    if (dead[i]) continue;
    kept.push_back(i);
    for (int j : order)
      if (!dead[j] && j != i && box_iou(boxes[i], boxes[j]) > iou_thr) dead[j] = true;
  }
  return kept;
}

}  // namespace cgr
