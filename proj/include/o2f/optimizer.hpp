#pragma once

#include <span>

namespace o2f {

struct OptimizerConfig {
  double lr = 0.02;
  double momentum = 0.9;
  /// Scenes per gradient step.
  int batch_size = 1;
  /// Passes over the training scenes per epoch.
  int passes = 8;
  /// Element-wise gradient clip; 0 disables.
  double grad_clip = 0.0;

  void validate() const;
};

/// Heavy-ball SGD: v <- momentum * v + g; p <- p - lr * v.
/// Throws std::domain_error on non-finite gradients (params left untouched).
void optimizer_step(std::span<double> params, std::span<const double> grads, std::span<double> velocity,
                    const OptimizerConfig& cfg);

}  // namespace o2f
