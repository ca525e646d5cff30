#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "o2f/assignment.hpp"
#include "o2f/metrics.hpp"
#include "o2f/postprocess.hpp"
#include "o2f/train.hpp"

namespace o2f {

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Json = nlohmann::ordered_json;

// Detection dump: [{"image_id", "category_id", "box": [x1, y1, x2, y2], "score"}].
// "anchor_id" is optional. The GT dump is the same without "score".
std::vector<Detection> detections_from_json(const Json& doc);
Json detections_to_json(const std::vector<Detection>& dets);
std::vector<GroundTruth> ground_truth_from_json(const Json& doc);
Json ground_truth_to_json(const std::vector<GroundTruth>& gts);

/// Single-image predictions for standalone assignment:
/// [{"anchor_id", "point": [x, y], "stride", "cls": [...], "ctr", "box": [...]}]
/// "level" is optional. Anchor ids must be 0..n-1 (any order).
struct PredictionSet {
  std::vector<Anchor> anchors;
  std::vector<Prediction> predictions;
};
PredictionSet predictions_from_json(const Json& doc);
Json predictions_to_json(const PredictionSet& set);

Json eval_result_to_json(const EvalResult& result, bool include_ap, bool include_mmr);

Json assignment_to_json(const AssignmentResult& result);
AssignmentResult assignment_from_json(const Json& doc);

Json run_record_to_json(const RunRecord& record);
RunRecord run_record_from_json(const Json& doc);

/// Fixed columns: epoch,T_j,loss_total,loss_cls,loss_reg,ap_nms,ap_nonms,dup_per_gt,seconds.
/// `seconds` is 0 unless the config enables wall-time output (see train_run).
std::string metrics_csv(const RunRecord& record);

Json read_json_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace o2f
