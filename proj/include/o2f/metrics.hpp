#pragma once

#include <optional>
#include <span>
#include <vector>

#include "o2f/geometry.hpp"
#include "o2f/postprocess.hpp"

namespace o2f {

struct GroundTruth {
  Box box;
  int category = 0;
  int image = 0;

  friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

struct MatchResult {
  std::vector<char> det_tp;       // per detection
  std::vector<int> det_gt;        // matched GT index or -1
  std::vector<char> gt_matched;   // per GT
};

/// Greedy matching for a single image and category. `dets` must be sorted by
/// descending score; each takes the unmatched GT with the highest IoU that is
/// >= iou_threshold (ties: lower GT index).
MatchResult match_detections(std::span<const Detection> dets, std::span<const GroundTruth> gts,
                             double iou_threshold);

/// 101-point interpolated AP over TP/FP flags ordered by descending score.
/// nullopt when there is nothing to score (n_gt == 0 and no detections);
/// 0 when n_gt == 0 but detections exist.
std::optional<double> average_precision(std::span<const char> tp_flags, std::size_t n_gt);

/// 0.50, 0.55, ..., 0.95.
std::vector<double> coco_iou_thresholds();

struct EvalParams {
  std::vector<double> iou_thresholds = coco_iou_thresholds();
  int max_dets = 100;
};

struct ThresholdCounts {
  double iou_threshold = 0.0;
  long tp = 0;
  long fp = 0;
  long fn = 0;
};

struct EvalResult {
  std::vector<double> iou_thresholds;
  std::vector<double> ap_per_iou;
  double mean_ap = 0.0;
  double average_recall = 0.0;
  /// Recall at IoU 0.5 over every retained detection, all categories pooled.
  double recall50 = 0.0;
  std::optional<double> mmr;
  std::vector<ThresholdCounts> counts;
};

/// COCO-style AP: per category per IoU threshold, averaged over categories
/// then thresholds. Cells run in parallel.
EvalResult coco_map(std::span<const Detection> dets, std::span<const GroundTruth> gts,
                    const EvalParams& params = {});

namespace serial {
EvalResult coco_map(std::span<const Detection> dets, std::span<const GroundTruth> gts,
                    const EvalParams& params = {});
}  // namespace serial

/// Nine log-spaced FPPI points in [1e-2, 1].
std::vector<double> default_fppi_points();

struct MmrParams {
  std::vector<double> fppi_points = default_fppi_points();
  double iou_threshold = 0.5;
  double miss_floor = 1e-4;
  /// Number of images for FPPI; defaults to the distinct image ids in dets/gts.
  std::optional<int> num_images;
};

/// Log-average miss rate for a single category. Throws std::invalid_argument
/// on zero GT or when more than one category is present.
double mmr(std::span<const Detection> dets, std::span<const GroundTruth> gts,
           const MmrParams& params = {});

/// Mean number of detections with score > score_threshold assigned (best
/// IoU >= iou_threshold, same category) to each GT that receives at least
/// one. 0 when no GT receives any.
double duplicates_per_gt(std::span<const Detection> dets, std::span<const GroundTruth> gts,
                         double score_threshold, double iou_threshold = 0.5);

}  // namespace o2f
