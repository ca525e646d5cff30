#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "o2f/loss.hpp"

namespace o2f {

/// Finite-difference check of every loss op at `trials` random points each.
struct GradSuiteEntry {
  std::string op;
  int points = 0;
  GradCheckReport worst;  // report of the worst point
};

struct GradSuiteOptions {
  std::uint64_t seed = 1;
  int trials = 1000;
  double step = 3e-5;
  /// Test hook: scales the analytic soft-BCE gradient by 1.01.
  bool corrupt = false;
};

struct GradSuiteResult {
  std::vector<GradSuiteEntry> entries;

  double max_rel_error() const;
  int total_points() const;
  bool passed(double tol = 1e-4) const { return max_rel_error() < tol; }
};

/// Ops: soft_bce, focal_negative, cls_loss (w.r.t. cls and ctr logits),
/// giou_loss, reg_loss (w.r.t. predicted boxes).
GradSuiteResult run_gradient_suite(const GradSuiteOptions& options);

}  // namespace o2f
