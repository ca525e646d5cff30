#include "o2f/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "o2f/model.hpp"
#include "o2f/rng.hpp"

namespace o2f {

double GradSuiteResult::max_rel_error() const {
  double worst = 0.0;
  for (const auto& e : entries) worst = std::max(worst, e.worst.max_rel_error);
  return worst;
}

int GradSuiteResult::total_points() const {
  int n = 0;
  for (const auto& e : entries) n += e.points;
  return n;
}

namespace {

void record(GradSuiteEntry& entry, const GradCheckReport& report) {
  ++entry.points;
  if (entry.points == 1 || report.max_rel_error > entry.worst.max_rel_error) entry.worst = report;
}

// Box pairs whose edges are well separated, so no finite-difference probe
// crosses a min/max kink of the intersection or enclosing box.
bool separated(const Box& a, const Box& b, double margin) {
  const double xs[] = {a.x1() - b.x1(), a.x2() - b.x2(), a.x1() - b.x2(), a.x2() - b.x1()};
  const double ys[] = {a.y1() - b.y1(), a.y2() - b.y2(), a.y1() - b.y2(), a.y2() - b.y1()};
  for (double d : xs) if (std::abs(d) < margin) return false;
  for (double d : ys) if (std::abs(d) < margin) return false;
  return true;
}

Box random_box(Rng& rng) {
  const double x1 = rng.uniform(0.0, 40.0);
  const double y1 = rng.uniform(0.0, 40.0);
  return Box(x1, y1, x1 + rng.uniform(2.0, 30.0), y1 + rng.uniform(2.0, 30.0));
}

std::pair<Box, Box> separated_pair(Rng& rng) {
  for (;;) {
    Box a = random_box(rng);
    Box b = random_box(rng);
    if (separated(a, b, 1e-3)) return {a, b};
  }
}

Box box_at(std::span<const double> x, std::size_t k) {
  return Box(x[4 * k], x[4 * k + 1], x[4 * k + 2], x[4 * k + 3]);
}

// Random partition of n anchors among m instances with hand-picked roles.
AssignmentResult random_assignment(Rng& rng, std::size_t n, std::size_t m) {
  AssignmentResult r;
  r.instances.resize(m);
  r.role.assign(n, AnchorRole::kNegative);
  r.owner.assign(n, -1);
  r.target.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const int kind = rng.integer(0, 2);
    if (kind == 0) continue;
    const int j = rng.integer(0, static_cast<int>(m) - 1);
    r.owner[i] = j;
    if (kind == 1) {
      r.role[i] = AnchorRole::kCertain;
      r.target[i] = 1.0;
      r.instances[static_cast<std::size_t>(j)].certain.push_back(static_cast<int>(i));
    } else {
      const double t = rng.uniform(0.0, 0.6);
      r.role[i] = AnchorRole::kAmbiguous;
      r.target[i] = t;
      r.instances[static_cast<std::size_t>(j)].ambiguous.push_back({static_cast<int>(i), t});
    }
  }
  return r;
}

}  // namespace

GradSuiteResult run_gradient_suite(const GradSuiteOptions& opt) {
  if (opt.trials < 1) throw std::invalid_argument("gradient suite: trials must be >= 1");
  Rng rng(opt.seed);
  const LossConfig loss_cfg;
  const double eps = loss_cfg.eps;
  GradSuiteResult result;
  result.entries = {{"soft_bce", 0, {}}, {"focal_negative", 0, {}}, {"cls_loss", 0, {}},
                    {"giou_loss", 0, {}}, {"reg_loss", 0, {}}};
  const double corrupt = opt.corrupt ? 1.01 : 1.0;

  for (int trial = 0; trial < opt.trials; ++trial) {
    {
      const double p = rng.uniform(0.02, 0.98);
      const double t = rng.uniform(0.0, 1.0);
      const double x[] = {p};
      const double g[] = {soft_bce_grad(p, t, eps) * corrupt};
      record(result.entries[0],
             grad_check([&](std::span<const double> v) { return soft_bce(v[0], t, eps); }, x, g, opt.step));
    }
    {
      const double p = rng.uniform(0.02, 0.98);
      const double x[] = {p};
      const double g[] = {focal_negative_grad(p, loss_cfg.focal_gamma, loss_cfg.focal_alpha, eps)};
      record(result.entries[1], grad_check(
                                    [&](std::span<const double> v) {
                                      return focal_negative(v[0], loss_cfg.focal_gamma, loss_cfg.focal_alpha, eps);
                                    },
                                    x, g, opt.step));
    }
    {
      // cls_loss w.r.t. raw logits: [cls (n x C) | ctr (n)].
      const auto n = static_cast<std::size_t>(rng.integer(2, 8));
      const auto cats = static_cast<std::size_t>(rng.integer(1, 3));
      const auto m = static_cast<std::size_t>(rng.integer(1, 3));
      std::vector<Instance> instances;
      for (std::size_t j = 0; j < m; ++j) {
        instances.push_back({random_box(rng), rng.integer(0, static_cast<int>(cats) - 1)});
      }
      const AssignmentResult assignment = random_assignment(rng, n, m);
      std::vector<Box> boxes;
      for (std::size_t i = 0; i < n; ++i) boxes.push_back(random_box(rng));
      std::vector<double> x(n * cats + n);
      for (double& v : x) v = rng.uniform(-4.0, 4.0);
      auto preds_of = [&](std::span<const double> v) {
        std::vector<Prediction> preds;
        for (std::size_t i = 0; i < n; ++i) {
          std::vector<double> cls(cats);
          for (std::size_t c = 0; c < cats; ++c) cls[c] = sigmoid(v[i * cats + c]);
          preds.push_back(Prediction::make(static_cast<int>(i), cls, sigmoid(v[n * cats + i]), boxes[i]));
        }
        return preds;
      };
      const LossBreakdown base = cls_loss(assignment, preds_of(x), instances, loss_cfg);
      std::vector<double> g(x.size());
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < cats; ++c) g[i * cats + c] = base.grad[i].cls_logit[c];
        g[n * cats + i] = base.grad[i].ctr_logit;
      }
      record(result.entries[2], grad_check(
                                    [&](std::span<const double> v) {
                                      return cls_loss(assignment, preds_of(v), instances, loss_cfg).total;
                                    },
                                    x, g, opt.step));
    }
    {
      const auto [pred, gt] = separated_pair(rng);
      const auto c = pred.coords();
      const auto g = giou_loss_grad(pred, gt);
      record(result.entries[3], grad_check(
                                    [&](std::span<const double> v) { return giou_loss(box_at(v, 0), gt); },
                                    std::span<const double>(c.data(), 4), g, opt.step));
    }
    {
      // reg_loss w.r.t. every predicted box, normalization on.
      const auto n = static_cast<std::size_t>(rng.integer(2, 6));
      const auto m = static_cast<std::size_t>(rng.integer(1, 2));
      std::vector<Instance> instances;
      for (std::size_t j = 0; j < m; ++j) instances.push_back({random_box(rng), 0});
      const AssignmentResult assignment = random_assignment(rng, n, m);
      std::vector<double> x;
      for (std::size_t i = 0; i < n; ++i) {
        const Box& gt = instances[static_cast<std::size_t>(std::max(assignment.owner[i], 0))].box;
        Box b = random_box(rng);
        while (!separated(b, gt, 1e-3)) b = random_box(rng);
        for (double v : b.coords()) x.push_back(v);
      }
      auto preds_of = [&](std::span<const double> v) {
        std::vector<Prediction> preds;
        for (std::size_t i = 0; i < n; ++i) preds.push_back(Prediction::make(static_cast<int>(i), {0.5}, 0.5, box_at(v, i)));
        return preds;
      };
      const RegLoss base = reg_loss(assignment, preds_of(x), instances, loss_cfg);
      std::vector<double> g;
      for (const auto& bg : base.box_grad) g.insert(g.end(), bg.begin(), bg.end());
      record(result.entries[4], grad_check(
                                    [&](std::span<const double> v) {
                                      return reg_loss(assignment, preds_of(v), instances, loss_cfg).value;
                                    },
                                    x, g, opt.step));
    }
  }
  return result;
}

}  // namespace o2f
