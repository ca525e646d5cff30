#include <doctest.h>

#include <cmath>
#include <vector>

#include "o2f/gradcheck.hpp"
#include "o2f/loss.hpp"
#include "o2f/model.hpp"
#include "o2f/schedule.hpp"
#include "support.hpp"

using namespace o2f;
using testing::uniform;

namespace {

const double kLn2 = std::log(2.0);

AssignmentResult single_certain() {
  AssignmentResult r;
  r.instances.resize(1);
  r.instances[0].certain = {0};
  r.role = {AnchorRole::kCertain};
  r.owner = {0};
  r.target = {1.0};
  return r;
}

LossConfig raw() {
  LossConfig cfg;
  cfg.normalize = false;
  return cfg;
}

}  // namespace

TEST_CASE("soft bce examples") {
  CHECK(soft_bce(1 - 1e-7, 1.0) == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(soft_bce(0.5, 1.0) == doctest::Approx(kLn2).epsilon(1e-12));
  CHECK(soft_bce(0.5, 0.5) == doctest::Approx(kLn2).epsilon(1e-12));
  CHECK(soft_bce(0.5, 0.0) == doctest::Approx(kLn2).epsilon(1e-12));
  // Clamped: finite at the ends.
  CHECK(std::isfinite(soft_bce(0.0, 1.0)));
  CHECK(soft_bce(0.0, 1.0) == doctest::Approx(-std::log(1e-7)));
  CHECK(soft_bce_grad(0.0, 1.0) == 0.0);
}

TEST_CASE("focal negative examples") {
  CHECK(focal_negative(1e-7, 2.0, 0.25) < 1e-12);
  CHECK(focal_negative(0.5, 2.0, 0.25) == doctest::Approx(0.75 * 0.25 * kLn2).epsilon(1e-12));
  CHECK(focal_negative(0.5, 2.0, 0.25) == doctest::Approx(0.1300).epsilon(1e-3));
  for (int i = 0; i < 100; ++i) {
    const double p = uniform(1e-6, 1 - 1e-6);
    CHECK(focal_negative(p, 0.0, 0.0) == doctest::Approx(soft_bce(p, 0.0)).epsilon(1e-12));
  }
}

TEST_CASE("loss terms are non-negative") {
  for (int i = 0; i < 10000; ++i) {
    const double p = uniform(0.0, 1.0), t = uniform(0.0, 1.0);
    CHECK(soft_bce(p, t) >= 0.0);
    CHECK(focal_negative(p, uniform(0, 5), uniform(0, 1)) >= 0.0);
  }
}

TEST_CASE("soft bce is minimized at p = t") {
  const int n = 1000;
  for (int trial = 0; trial < 50; ++trial) {
    const double t = uniform(0.01, 0.99);
    double best_p = 0, best = 1e300;
    for (int k = 1; k < n; ++k) {
      const double p = static_cast<double>(k) / n;
      const double v = soft_bce(p, t);
      if (v < best) {
        best = v;
        best_p = p;
      }
    }
    CHECK(std::abs(best_p - t) <= 1.0 / n);
  }
}

TEST_CASE("loss config validation") {
  LossConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.eps = 1e-2;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = LossConfig{};
  cfg.reg_weight = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = LossConfig{};
  cfg.focal_alpha = 1.5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = LossConfig{};
  cfg.focal_gamma = -1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("cls loss examples") {
  SUBCASE("all-negative image at p = eps") {
    AssignmentResult r;
    r.role.assign(5, AnchorRole::kNegative);
    r.owner.assign(5, -1);
    r.target.assign(5, 0.0);
    std::vector<Prediction> preds;
    for (int i = 0; i < 5; ++i) preds.push_back(Prediction::make(i, {1e-7, 1e-7}, 1.0, Box(0, 0, 1, 1)));
    CHECK(cls_loss(r, preds, {}, LossConfig{}).total < 1e-12);
  }
  SUBCASE("single certain anchor at p = 0.5") {
    const std::vector<Prediction> preds = {Prediction::make(0, {0.5}, 1.0, Box(0, 0, 1, 1))};
    const std::vector<Instance> inst = {{Box(0, 0, 1, 1), 0}};
    const auto b = cls_loss(single_certain(), preds, inst, raw());
    CHECK(b.cls_certain == doctest::Approx(kLn2).epsilon(1e-12));
    CHECK(b.cls_ambiguous == 0.0);
    CHECK(b.cls_negative == 0.0);
    // Normalized: divided by 1 + one supervised anchor.
    CHECK(cls_loss(single_certain(), preds, inst, LossConfig{}).total == doctest::Approx(kLn2 / 2).epsilon(1e-12));
  }
  SUBCASE("three-anchor hand sum") {
    std::vector<Anchor> anchors;
    std::vector<Prediction> preds;
    const double scores[] = {0.9, 0.7, 0.2};
    const double heights[] = {8.0, 7.0, 3.0};
    for (int i = 0; i < 3; ++i) {
      Anchor a;
      a.id = i;
      a.point = {4.0 + i, 5.0};
      a.stride = 4.0;
      anchors.push_back(a);
      preds.push_back(Prediction::make(i, {scores[i]}, 1.0, Box(0, 0, 10, heights[i])));
    }
    const std::vector<Instance> inst = {{Box(0, 0, 10, 10), 0}};
    O2fParams params;
    params.k = 1;
    params.temperature = 0.6;
    const auto r = assign_o2f(anchors, preds, inst, params);
    const double t = 0.7 / 0.9 * 0.6;
    const double certain = -std::log(0.9);
    const double ambiguous = -t * std::log(0.7) - (1 - t) * std::log(0.3);
    const double negative = 0.75 * 0.2 * 0.2 * -std::log(0.8);
    const auto b = cls_loss(r, preds, inst, raw());
    CHECK(b.cls_certain == doctest::Approx(certain).epsilon(1e-12));
    CHECK(b.cls_ambiguous == doctest::Approx(ambiguous).epsilon(1e-12));
    CHECK(b.cls_negative == doctest::Approx(negative).epsilon(1e-12));
    CHECK(b.total == doctest::Approx(certain + ambiguous + negative).epsilon(1e-12));
  }
}

TEST_CASE("cls loss rejects mismatched inputs") {
  const std::vector<Prediction> preds = {Prediction::make(0, {0.5}, 1.0, Box(0, 0, 1, 1)),
                                         Prediction::make(1, {0.5}, 1.0, Box(0, 0, 1, 1))};
  const std::vector<Instance> inst = {{Box(0, 0, 1, 1), 0}};
  CHECK_THROWS_AS(cls_loss(single_certain(), preds, inst, LossConfig{}), std::invalid_argument);
  CHECK_THROWS_AS(cls_loss(single_certain(), std::span(preds).first(1), {}, LossConfig{}), std::invalid_argument);
  auto orphan = single_certain();
  orphan.owner[0] = -1;
  CHECK_THROWS_AS(reg_loss(orphan, std::span(preds).first(1), inst, LossConfig{}), std::invalid_argument);
}

TEST_CASE("reg loss examples") {
  const std::vector<Instance> inst = {{Box(2, 2, 3, 3), 0}};
  std::vector<Prediction> preds = {Prediction::make(0, {0.5}, 1.0, Box(0, 0, 1, 1))};
  const auto r = reg_loss(single_certain(), preds, inst, raw());
  CHECK(r.value == doctest::Approx(16.0 / 9.0).epsilon(1e-12));
  CHECK(r.contributors == 1);
  preds[0].box = inst[0].box;
  CHECK(reg_loss(single_certain(), preds, inst, raw()).value == doctest::Approx(0.0));

  // Only positive anchors count; with K = 0 that is the certain one alone.
  std::vector<Prediction> three;
  std::vector<Anchor> anchors;
  for (int i = 0; i < 3; ++i) {
    Anchor a;
    a.id = i;
    a.point = {2.5, 2.5};
    a.stride = 1.0;
    anchors.push_back(a);
    three.push_back(Prediction::make(i, {0.3 + 0.2 * i}, 1.0, Box(0, 0, 1 + i, 1 + i)));
  }
  const auto a = assign_o2o_top1(anchors, three, inst, MatchParams{});
  const auto rl = reg_loss(a, three, inst, raw());
  CHECK(rl.contributors == 1);
  const int c = a.instances[0].certain[0];
  CHECK(rl.value == doctest::Approx(giou_loss(three[static_cast<std::size_t>(c)].box, inst[0].box)));
  for (int i = 0; i < 3; ++i) {
    if (i == c) continue;
    for (double g : rl.box_grad[static_cast<std::size_t>(i)]) CHECK(g == 0.0);
  }
}

TEST_CASE("total loss combines the parts") {
  const std::vector<Instance> inst = {{Box(2, 2, 3, 3), 0}};
  const std::vector<Prediction> preds = {Prediction::make(0, {0.5}, 1.0, Box(0, 0, 1, 1))};
  LossConfig cfg = raw();
  cfg.reg_weight = 2.5;
  const auto b = total_loss(single_certain(), preds, inst, cfg);
  CHECK(b.reg == doctest::Approx(16.0 / 9.0));
  CHECK(b.total == doctest::Approx(b.cls_certain + b.cls_ambiguous + b.cls_negative + 2.5 * b.reg));
  const auto g = giou_loss_grad(preds[0].box, inst[0].box);
  for (int k = 0; k < 4; ++k) CHECK(b.grad[0].box[k] == doctest::Approx(2.5 * g[k]));
}

TEST_CASE("grad_check examples") {
  SUBCASE("soft bce through a logit") {
    const double x0 = 0.3, t = 0.4;
    auto f = [t](std::span<const double> x) { return soft_bce(sigmoid(x[0]), t); };
    const double p = sigmoid(x0);
    const std::vector<double> x = {x0}, g = {soft_bce_grad(p, t) * p * (1 - p)};
    CHECK(grad_check(f, x, g, 1e-3).max_rel_error < 1e-4);
  }
  SUBCASE("focal at logit 0") {
    auto f = [](std::span<const double> x) { return focal_negative(sigmoid(x[0]), 2.0, 0.25); };
    const std::vector<double> x = {0.0}, g = {focal_negative_grad(0.5, 2.0, 0.25) * 0.25};
    CHECK(grad_check(f, x, g, 1e-3).max_rel_error < 1e-4);
  }
  SUBCASE("giou at a random pair") {
    const Box a(0.3, 0.2, 4.1, 3.3), b(1.7, -0.5, 5.2, 2.9);
    auto f = [&b](std::span<const double> x) { return giou_loss(Box(x[0], x[1], x[2], x[3]), b); };
    const std::vector<double> x = {a.x1(), a.y1(), a.x2(), a.y2()};
    const auto ga = giou_loss_grad(a, b);
    const std::vector<double> g(ga.begin(), ga.end());
    const auto rep = grad_check(f, x, g, 1e-3);
    CHECK(rep.max_rel_error < 1e-4);
    CHECK(rep.n_params == 4);
  }
  SUBCASE("errors") {
    auto f = [](std::span<const double> x) { return x[0] * x[0]; };
    const std::vector<double> x = {1.0}, g = {2.0};
    CHECK_THROWS_AS(grad_check(f, x, g, 1e-6), std::invalid_argument);
    CHECK_THROWS_AS(grad_check(f, x, g, 0.1), std::invalid_argument);
    auto bad = [](std::span<const double>) { return std::nan(""); };
    CHECK_THROWS_AS(grad_check(bad, x, g, 1e-3), std::domain_error);
    // A wrong gradient is reported, not hidden.
    const std::vector<double> wrong = {2.1};
    CHECK_FALSE(grad_check(f, x, wrong, 1e-3).passed(1e-4));
  }
}

TEST_CASE("gradient suite") {
  const auto res = run_gradient_suite(GradSuiteOptions{});
  CHECK(res.entries.size() == 5);
  CHECK(res.total_points() >= 1000);
  CHECK(res.passed(1e-4));
  GradSuiteOptions corrupt;
  corrupt.corrupt = true;
  corrupt.trials = 50;
  CHECK_FALSE(run_gradient_suite(corrupt).passed(1e-4));
  GradSuiteOptions none;
  none.trials = 0;
  CHECK_THROWS(run_gradient_suite(none));
}

TEST_CASE("ambiguous mass shrinks over the schedule") {
  // Fixed predictions, one instance with several candidates.
  std::vector<Anchor> anchors;
  std::vector<Prediction> preds;
  for (int i = 0; i < 9; ++i) {
    Anchor a;
    a.id = i;
    a.point = {3.0 + i % 3 * 2.0, 3.0 + i / 3 * 2.0};
    a.stride = 4.0;
    anchors.push_back(a);
    preds.push_back(Prediction::make(i, {uniform(0.05, 0.95)}, uniform(0.2, 1.0), Box(1, 1, 9 - 0.3 * i, 9)));
  }
  const std::vector<Instance> inst = {{Box(0, 0, 10, 10), 0}};
  ScheduleConfig sched;
  sched.n_epochs = 12;
  double prev = 1e300;
  for (int j = 0; j < sched.n_epochs; ++j) {
    O2fParams params;
    params.temperature = epoch_temperature(sched, j);
    const auto r = assign_o2f(anchors, preds, inst, params);
    double mass = 0;
    for (const auto& s : r.instances[0].ambiguous) mass += s.t;
    CHECK(mass <= prev + 1e-15);
    prev = mass;
  }
}
