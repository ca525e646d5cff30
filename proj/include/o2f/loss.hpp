#pragma once

#include <array>
#include <functional>
#include <span>
#include <vector>

#include "o2f/assignment.hpp"
#include "o2f/types.hpp"

namespace o2f {

struct LossConfig {
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;
  double reg_weight = 1.0;
  double eps = 1e-7;
  /// Divide classification terms by (1 + #anchors with target > 0.01) and
  /// average regression over contributing anchors.
  bool normalize = true;

  void validate() const;
};

double clamp_probability(double p, double eps);

/// -t log p - (1 - t) log(1 - p), p clamped to [eps, 1 - eps].
double soft_bce(double p, double t, double eps = 1e-7);
/// d soft_bce / dp; zero where the clamp is active.
double soft_bce_grad(double p, double t, double eps = 1e-7);

/// (1 - alpha) p^gamma (-log(1 - p)): focal loss against label 0.
double focal_negative(double p, double gamma, double alpha, double eps = 1e-7);
double focal_negative_grad(double p, double gamma, double alpha, double eps = 1e-7);

/// Gradient of the total loss w.r.t. one anchor's raw outputs.
struct AnchorGrad {
  std::vector<double> cls_logit;   // per category
  double ctr_logit = 0.0;
  std::array<double, 4> box{};     // w.r.t. predicted (x1, y1, x2, y2)
};

struct LossBreakdown {
  double cls_certain = 0.0;
  double cls_ambiguous = 0.0;
  double cls_negative = 0.0;
  double reg = 0.0;
  double total = 0.0;
  std::vector<AnchorGrad> grad;

  double cls() const { return cls_certain + cls_ambiguous + cls_negative; }
};

/// Classification objective over the joint score: BCE(p, 1) on certain
/// anchors, soft BCE(p, t) on ambiguous anchors, focal(p, 0) on everything
/// else (including the non-target categories of positive anchors). Gradients
/// chain through joint = sigmoid(cls_logit) * sigmoid(ctr_logit).
LossBreakdown cls_loss(const AssignmentResult& assignment, std::span<const Prediction> preds,
                       std::span<const Instance> instances, const LossConfig& cfg);

struct RegLoss {
  double value = 0.0;
  int contributors = 0;
  std::vector<std::array<double, 4>> box_grad;  // per anchor
};

/// GIoU loss summed (or averaged, when cfg.normalize) over every
/// non-negative anchor against its owner's box.
RegLoss reg_loss(const AssignmentResult& assignment, std::span<const Prediction> preds,
                 std::span<const Instance> instances, const LossConfig& cfg);

/// cls_loss + reg_weight * reg_loss, with the merged gradient table.
LossBreakdown total_loss(const AssignmentResult& assignment, std::span<const Prediction> preds,
                         std::span<const Instance> instances, const LossConfig& cfg);

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t n_params = 0;

  bool passed(double tol) const { return max_rel_error < tol; }
};

/// Compares an analytic gradient against central finite differences of f at
/// x. Relative error per coordinate is |a - n| / max(|a|, |n|, 1e-6).
/// Throws std::invalid_argument for step outside [1e-5, 1e-2] and
/// std::domain_error when f or the gradient is non-finite.
GradCheckReport grad_check(const std::function<double(std::span<const double>)>& f,
                           std::span<const double> x, std::span<const double> analytic,
                           double step);

}  // namespace o2f
