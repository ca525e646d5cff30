#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "o2f/config.hpp"
#include "o2f/metrics.hpp"
#include "o2f/model.hpp"
#include "o2f/scene.hpp"

namespace o2f {

struct EpochRecord {
  int epoch = 0;
  double temperature = 0.0;
  double loss_total = 0.0;
  double loss_cls = 0.0;
  double loss_reg = 0.0;
  double ap_nms = 0.0;
  double ap_nonms = 0.0;
  double dup_per_gt = 0.0;
  /// Single-category runs only.
  std::optional<double> mmr_nms;
  std::optional<double> mmr_nonms;
  double seconds = 0.0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct RunRecord {
  ExperimentConfig config;
  std::vector<EpochRecord> epochs;
  std::size_t parameter_count = 0;
  int degenerate_events = 0;
  bool truncated = false;
  std::string diagnostic;
};

/// Thrown when a loss or gradient turns non-finite; carries the epochs
/// completed so far.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, RunRecord record)
      : std::runtime_error(what), record_(std::move(record)) {}
  const RunRecord& record() const { return record_; }

 private:
  RunRecord record_;
};

struct TrainData {
  AnchorGrid grid;
  std::vector<Scene> train;
  /// Held-out scenes (seed + 10^6). Tabular models cannot generalize, so
  /// they are evaluated on `train` instead.
  std::vector<Scene> eval;
};

TrainData make_train_data(const ExperimentConfig& cfg);
PredictionModel make_model(const ExperimentConfig& cfg, const TrainData& data);

/// Assignment for one scene at temperature T under the configured mode.
AssignmentResult assign_scene(const ExperimentConfig& cfg, const AnchorGrid& grid,
                              std::span<const Prediction> preds, std::span<const Instance> instances,
                              double temperature);

/// Joint-score detections for every (anchor, category), before filtering.
std::vector<Detection> scene_detections(std::span<const Prediction> preds, int image);

struct EvalSnapshot {
  double ap_nms = 0.0;
  double ap_nonms = 0.0;
  double dup_per_gt = 0.0;
  std::optional<double> mmr_nms;
  std::optional<double> mmr_nonms;
};

/// Runs inference over `scenes` (tabular slot i for scene i) and scores the
/// detections with and without NMS.
EvalSnapshot evaluate_model(const PredictionModel& model, const AnchorGrid& grid,
                            const std::vector<Scene>& scenes, const EvalConfig& eval);

/// Epoch loop: per batch, scenes are processed in parallel (forward, assign,
/// loss, backward) and their gradients summed in scene order before one
/// optimizer step, so results do not depend on the thread count.
RunRecord train_run(const ExperimentConfig& cfg, const TrainData& data, PredictionModel& model);

/// make_train_data + make_model + train_run.
RunRecord run_experiment(const ExperimentConfig& cfg);

}  // namespace o2f
