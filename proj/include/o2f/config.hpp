#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "o2f/assignment.hpp"
#include "o2f/loss.hpp"
#include "o2f/model.hpp"
#include "o2f/optimizer.hpp"
#include "o2f/scene.hpp"
#include "o2f/schedule.hpp"

namespace o2f {

enum class AssignMode { kO2f, kO2o, kHungarian, kO2m };

std::string to_string(AssignMode mode);
AssignMode parse_assign_mode(const std::string& name);

struct AssignConfig {
  AssignMode mode = AssignMode::kO2f;
  int k = 7;      // ambiguous anchors per instance (o2f)
  int topk = 9;   // positives per instance (o2m); 2 gives one-to-two
  MatchParams match;
};

struct EvalConfig {
  double nms_threshold = 0.6;
  double score_threshold = 0.05;
  int max_dets = 100;
  double dup_threshold = 0.3;
};

struct SimConfig {
  SceneConfig scene;
  std::vector<double> strides{8.0, 16.0};
  int train_scenes = 10;
  int eval_scenes = 10;
  ModelConfig model;
  OptimizerConfig optim;
};

struct OutputConfig {
  /// Write measured wall time into metrics.csv; otherwise the column is 0
  /// so identical runs produce identical files.
  bool wall_time = false;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  AssignConfig assign;
  ScheduleConfig schedule{0.6, 0.2, 50, ScheduleMode::kLinear, std::nullopt};
  LossConfig loss;
  SimConfig sim;
  EvalConfig eval;
  OutputConfig output;

  /// Throws ConfigError naming the offending section.
  void validate() const;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Ordered dotted-key settings, e.g. {"assign.k", "7"}.
using FlatConfig = std::vector<std::pair<std::string, std::string>>;

/// Parses `section.key = value` lines; '#' starts a comment.
FlatConfig parse_flat_text(const std::string& text);
/// Flattens a JSON object into dotted keys (arrays become comma lists).
FlatConfig parse_json_config(const std::string& text);
/// Picks the JSON or key/value parser from the first non-blank character.
FlatConfig parse_config_text(const std::string& text);

void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value);
ExperimentConfig config_from_flat(const FlatConfig& flat);
ExperimentConfig load_config_file(const std::string& path);

/// Every setting with defaults materialized, in a fixed key order.
FlatConfig to_flat(const ExperimentConfig& cfg);
std::string to_flat_text(const ExperimentConfig& cfg);

struct SweepRun {
  std::string name;
  FlatConfig settings;
};

/// Expands `sweep.<key> = v1, v2, ...` entries into the cartesian product of
/// runs, in file order. Run names concatenate a short key tag with the value
/// (assign.k = 7 -> "K7"), joined by '_'. Without sweep keys a single run
/// named "run" is returned.
std::vector<SweepRun> expand_sweep(const FlatConfig& flat);

}  // namespace o2f
