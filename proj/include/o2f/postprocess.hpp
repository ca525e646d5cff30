#pragma once

#include <span>
#include <vector>

#include "o2f/geometry.hpp"

namespace o2f {

struct Detection {
  Box box;
  double score = 0.0;
  int category = 0;
  int image = 0;
  int anchor_id = 0;  // tie-break key; 0 when the source has no anchors

  friend bool operator==(const Detection&, const Detection&) = default;
};

/// Canonical detection order: descending score, then ascending anchor id,
/// image, category.
bool detection_before(const Detection& a, const Detection& b);

/// Class-aware greedy NMS. A box is dropped when its IoU with an already kept
/// box of the same image and category is strictly greater than the
/// threshold. Groups are processed in parallel; the result is in canonical
/// order.
std::vector<Detection> nms(std::span<const Detection> dets, double iou_threshold);

namespace serial {
/// Brute-force O(n^2) reference over the whole list.
std::vector<Detection> nms(std::span<const Detection> dets, double iou_threshold);
}  // namespace serial

/// Drops scores below score_threshold and keeps the max_per_image best per
/// image. Output is grouped by ascending image id, canonical order within.
std::vector<Detection> filter_detections(std::span<const Detection> dets, double score_threshold,
                                         int max_per_image);

}  // namespace o2f
