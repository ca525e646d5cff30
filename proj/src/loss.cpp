#include "o2f/loss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace o2f {

void LossConfig::validate() const {
  if (!(focal_gamma >= 0.0)) throw std::invalid_argument("loss: focal_gamma must be >= 0");
  if (!(focal_alpha >= 0.0 && focal_alpha <= 1.0)) throw std::invalid_argument("loss: focal_alpha must be in [0, 1]");
  if (!(reg_weight > 0.0)) throw std::invalid_argument("loss: reg_weight must be positive");
  if (!(eps > 0.0 && eps <= 1e-3)) throw std::invalid_argument("loss: eps must be in (0, 1e-3]");
}

double clamp_probability(double p, double eps) { return std::clamp(p, eps, 1.0 - eps); }

namespace {

bool clamped(double p, double eps) { return p <= eps || p >= 1.0 - eps; }

}  // namespace

double soft_bce(double p, double t, double eps) {
  const double q = clamp_probability(p, eps);
  return -t * std::log(q) - (1.0 - t) * std::log1p(-q);
}

double soft_bce_grad(double p, double t, double eps) {
  if (clamped(p, eps)) return 0.0;
  return -t / p + (1.0 - t) / (1.0 - p);
}

double focal_negative(double p, double gamma, double alpha, double eps) {
  const double q = clamp_probability(p, eps);
  return (1.0 - alpha) * std::pow(q, gamma) * -std::log1p(-q);
}

double focal_negative_grad(double p, double gamma, double alpha, double eps) {
  if (clamped(p, eps)) return 0.0;
  const double neg_log = -std::log1p(-p);
  const double d_pow = gamma == 0.0 ? 0.0 : gamma * std::pow(p, gamma - 1.0);
  return (1.0 - alpha) * (d_pow * neg_log + std::pow(p, gamma) / (1.0 - p));
}

namespace {

void check_shapes(const AssignmentResult& assignment, std::span<const Prediction> preds,
                  std::span<const Instance> instances) {
  if (assignment.num_anchors() != preds.size()) {
    throw std::invalid_argument("loss: assignment and predictions cover different anchor sets");
  }
  if (assignment.instances.size() != instances.size()) {
    throw std::invalid_argument("loss: assignment and instance list differ in size");
  }
}

std::size_t count_supervised(const AssignmentResult& assignment) {
  return static_cast<std::size_t>(std::count_if(assignment.target.begin(), assignment.target.end(),
                                                [](double t) { return t > 0.01; }));
}

}  // namespace

LossBreakdown cls_loss(const AssignmentResult& assignment, std::span<const Prediction> preds,
                       std::span<const Instance> instances, const LossConfig& cfg) {
  cfg.validate();
  check_shapes(assignment, preds, instances);
  const double scale = cfg.normalize ? 1.0 / (1.0 + static_cast<double>(count_supervised(assignment))) : 1.0;

  LossBreakdown out;
  out.grad.resize(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const Prediction& pred = preds[i];
    const std::size_t n_cat = pred.cls_score.size();
    AnchorGrad& g = out.grad[i];
    g.cls_logit.assign(n_cat, 0.0);

    const AnchorRole role = assignment.role[i];
    const int owner = assignment.owner[i];
    int target_cat = -1;
    if (role != AnchorRole::kNegative) {
      if (owner < 0) throw std::invalid_argument("loss: positive anchor without owner");
      target_cat = instances[static_cast<std::size_t>(owner)].category;
    }

    const double s_ctr = pred.ctr_score;
    for (std::size_t c = 0; c < n_cat; ++c) {
      const double s_cls = pred.cls_score[c];
      const double p = pred.joint_score[c];
      double d_p = 0.0;
      if (static_cast<int>(c) == target_cat) {
        const double t = assignment.target[i];
        const double value = soft_bce(p, t, cfg.eps) * scale;
        (role == AnchorRole::kCertain ? out.cls_certain : out.cls_ambiguous) += value;
        d_p = soft_bce_grad(p, t, cfg.eps) * scale;
      } else {
        out.cls_negative += focal_negative(p, cfg.focal_gamma, cfg.focal_alpha, cfg.eps) * scale;
        d_p = focal_negative_grad(p, cfg.focal_gamma, cfg.focal_alpha, cfg.eps) * scale;
      }
      g.cls_logit[c] = d_p * s_ctr * s_cls * (1.0 - s_cls);
      g.ctr_logit += d_p * s_cls * s_ctr * (1.0 - s_ctr);
    }
  }
  out.total = out.cls();
  return out;
}

RegLoss reg_loss(const AssignmentResult& assignment, std::span<const Prediction> preds,
                 std::span<const Instance> instances, const LossConfig& cfg) {
  check_shapes(assignment, preds, instances);
  RegLoss out;
  out.box_grad.assign(preds.size(), {0.0, 0.0, 0.0, 0.0});
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (assignment.role[i] == AnchorRole::kNegative) continue;
    const int owner = assignment.owner[i];
    if (owner < 0) throw std::invalid_argument("reg_loss: positive anchor without owner");
    const Box& gt = instances[static_cast<std::size_t>(owner)].box;
    out.value += giou_loss(preds[i].box, gt);
    out.box_grad[i] = giou_loss_grad(preds[i].box, gt);
    ++out.contributors;
  }
  if (cfg.normalize && out.contributors > 0) {
    const double inv = 1.0 / out.contributors;
    out.value *= inv;
    for (auto& g : out.box_grad) {
      for (double& v : g) v *= inv;
    }
  }
  return out;
}

LossBreakdown total_loss(const AssignmentResult& assignment, std::span<const Prediction> preds,
                         std::span<const Instance> instances, const LossConfig& cfg) {
  LossBreakdown out = cls_loss(assignment, preds, instances, cfg);
  const RegLoss reg = reg_loss(assignment, preds, instances, cfg);
  out.reg = reg.value;
  out.total = out.cls() + cfg.reg_weight * reg.value;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    for (int k = 0; k < 4; ++k) out.grad[i].box[k] = cfg.reg_weight * reg.box_grad[i][k];
  }
  return out;
}

GradCheckReport grad_check(const std::function<double(std::span<const double>)>& f,
                           std::span<const double> x, std::span<const double> analytic,
                           double step) {
  if (!(step >= 1e-5 && step <= 1e-2)) throw std::invalid_argument("grad_check: step must be in [1e-5, 1e-2]");
  if (x.size() != analytic.size()) throw std::invalid_argument("grad_check: gradient size mismatch");
  GradCheckReport report;
  report.n_params = x.size();
  std::vector<double> probe(x.begin(), x.end());
  for (std::size_t k = 0; k < x.size(); ++k) {
    probe[k] = x[k] + step;
    const double up = f(probe);
    probe[k] = x[k] - step;
    const double down = f(probe);
    probe[k] = x[k];
    const double numeric = (up - down) / (2.0 * step);
    if (!std::isfinite(numeric) || !std::isfinite(analytic[k])) {
      throw std::domain_error("grad_check: non-finite value at parameter " + std::to_string(k));
    }
    const double abs_err = std::abs(analytic[k] - numeric);
    const double rel_err = abs_err / std::max({std::abs(analytic[k]), std::abs(numeric), 1e-6});
    report.max_abs_error = std::max(report.max_abs_error, abs_err);
    if (rel_err > report.max_rel_error) {
      report.max_rel_error = rel_err;
      report.worst_index = k;
    }
  }
  return report;
}

}  // namespace o2f
