#pragma once

#include <optional>
#include <string>

namespace o2f {

enum class ScheduleMode {
  kLinear,        // "o2f-linear": T^j interpolates t_max -> t_min across epochs
  kHybridStatic,  // "hybrid-epoch-static": t_max before switch_epoch, t_min after
};

std::string to_string(ScheduleMode mode);
ScheduleMode parse_schedule_mode(const std::string& name);

struct ScheduleConfig {
  double t_max = 0.6;
  double t_min = 0.2;
  int n_epochs = 12;
  ScheduleMode mode = ScheduleMode::kLinear;
  /// Hybrid mode only; defaults to floor(2N/3) when unset.
  std::optional<int> switch_epoch;

  void validate() const;
  int resolved_switch_epoch() const;
};

/// Epoch temperature T^j for the 0-based epoch index j.
double epoch_temperature(const ScheduleConfig& cfg, int epoch);

/// Positive degree of an ambiguous anchor: (p / p_max) * T.
/// Throws std::domain_error when p_max is zero.
double soft_positive_degree(double p, double p_max, double temperature);

}  // namespace o2f
