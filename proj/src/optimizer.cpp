#include "o2f/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace o2f {

void OptimizerConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("optim: lr must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("optim: momentum must be in [0, 1)");
  if (batch_size < 1) throw std::invalid_argument("optim: batch_size must be >= 1");
  if (passes < 1) throw std::invalid_argument("optim: passes must be >= 1");
  if (!(grad_clip >= 0.0)) throw std::invalid_argument("optim: grad_clip must be >= 0");
}

void optimizer_step(std::span<double> params, std::span<const double> grads, std::span<double> velocity,
                    const OptimizerConfig& cfg) {
  cfg.validate();
  if (params.size() != grads.size() || params.size() != velocity.size()) {
    throw std::invalid_argument("optimizer_step: shape mismatch");
  }
  for (double g : grads) {
    if (!std::isfinite(g)) throw std::domain_error("optimizer_step: non-finite gradient");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    double g = grads[k];
    if (cfg.grad_clip > 0.0) g = std::clamp(g, -cfg.grad_clip, cfg.grad_clip);
    velocity[k] = cfg.momentum * velocity[k] + g;
    params[k] -= cfg.lr * velocity[k];
  }
}

}  // namespace o2f
