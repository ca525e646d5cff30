#include "o2f/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace o2f {

std::string to_string(ScheduleMode mode) {
  switch (mode) {
    case ScheduleMode::kLinear:
      return "o2f-linear";
    case ScheduleMode::kHybridStatic:
      return "hybrid-epoch-static";
  }
  return "unknown";
}

ScheduleMode parse_schedule_mode(const std::string& name) {
  if (name == "o2f-linear" || name == "linear") return ScheduleMode::kLinear;
  if (name == "hybrid-epoch-static" || name == "hybrid") return ScheduleMode::kHybridStatic;
  throw std::invalid_argument("unknown schedule mode '" + name + "'");
}

void ScheduleConfig::validate() const {
  if (!(t_max > 0.0 && t_max <= 1.0)) throw std::invalid_argument("schedule: t_max must be in (0, 1]");
  if (!(t_min >= 0.0 && t_min <= 1.0)) throw std::invalid_argument("schedule: t_min must be in [0, 1]");
  if (t_min > t_max) throw std::invalid_argument("schedule: t_min must not exceed t_max");
  if (n_epochs < 1) throw std::invalid_argument("schedule: n_epochs must be >= 1");
  if (switch_epoch && (*switch_epoch < 0 || *switch_epoch > n_epochs)) {
    throw std::invalid_argument("schedule: switch_epoch must be in [0, n_epochs]");
  }
}

int ScheduleConfig::resolved_switch_epoch() const {
  return switch_epoch.value_or((2 * n_epochs) / 3);
}

double epoch_temperature(const ScheduleConfig& cfg, int epoch) {
  cfg.validate();
  if (epoch < 0 || epoch >= cfg.n_epochs) {
    throw std::out_of_range("epoch_temperature: epoch " + std::to_string(epoch) +
                            " outside [0, " + std::to_string(cfg.n_epochs) + ")");
  }
  if (cfg.mode == ScheduleMode::kHybridStatic) {
    return epoch < cfg.resolved_switch_epoch() ? cfg.t_max : cfg.t_min;
  }
  if (cfg.n_epochs == 1) return cfg.t_max;
  if (epoch == cfg.n_epochs - 1) return cfg.t_min;
  const double slope = (cfg.t_min - cfg.t_max) / static_cast<double>(cfg.n_epochs - 1);
  return slope * epoch + cfg.t_max;
}

double soft_positive_degree(double p, double p_max, double temperature) {
  if (!(p_max > 0.0)) {
    throw std::domain_error("soft_positive_degree: p_max must be positive");
  }
  if (p < 0.0 || p > p_max) {
    throw std::invalid_argument("soft_positive_degree: p must lie in [0, p_max]");
  }
  return p / p_max * temperature;
}

}  // namespace o2f
