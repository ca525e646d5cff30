#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>
#include <vector>

#include "o2f/assignment.hpp"
#include "o2f/hungarian.hpp"
#include "support.hpp"

using namespace o2f;
using testing::oracle_iou;
using testing::uniform;
using testing::uniform_int;

namespace {

struct Fixture {
  std::vector<Anchor> anchors;
  std::vector<Prediction> preds;
  std::vector<Instance> instances;
};

Anchor anchor_at(int id, double x, double y, double stride = 4.0) {
  Anchor a;
  a.id = id;
  a.point = {x, y};
  a.stride = stride;
  return a;
}

// Three anchors inside one 10x10 instance. Predicted boxes are nested in the
// ground truth so their IoU is simply their area / 100.
Fixture three_anchor_fixture() {
  Fixture f;
  f.instances.push_back({Box(0, 0, 10, 10), 0});
  const double scores[] = {0.9, 0.7, 0.2};
  const double heights[] = {8.0, 7.0, 3.0};
  const double xs[] = {5.0, 4.0, 6.0};
  for (int i = 0; i < 3; ++i) {
    f.anchors.push_back(anchor_at(i, xs[i], 5.0));
    f.preds.push_back(Prediction::make(i, {scores[i]}, 1.0, Box(0, 0, 10, heights[i])));
  }
  return f;
}

// 8x8 grid of stride-4 anchors over a 32x32 image, a few random instances.
Fixture random_fixture(int categories = 2) {
  Fixture f;
  int id = 0;
  for (int gy = 0; gy < 8; ++gy) {
    for (int gx = 0; gx < 8; ++gx) {
      f.anchors.push_back(anchor_at(id, 2.0 + 4.0 * gx, 2.0 + 4.0 * gy));
      std::vector<double> cls(static_cast<std::size_t>(categories));
      for (auto& c : cls) c = uniform(0.0, 1.0);
      const double cx = 2.0 + 4.0 * gx + uniform(-3, 3);
      const double cy = 2.0 + 4.0 * gy + uniform(-3, 3);
      f.preds.push_back(Prediction::make(id, cls, uniform(0.0, 1.0),
                                         Box::from_center(cx, cy, uniform(2, 14), uniform(2, 14))));
      ++id;
    }
  }
  const int n = uniform_int(1, 5);
  for (int j = 0; j < n; ++j) {
    const double x = uniform(0, 26), y = uniform(0, 26);
    f.instances.push_back({Box(x, y, x + uniform(1, 12), y + uniform(1, 12)), uniform_int(0, categories - 1)});
  }
  return f;
}

double oracle_score(const Prediction& p, const Anchor& a, const Instance& inst, const MatchParams& mp) {
  if (!in_center_region(a.point, CenterRegion(inst.box, mp.center_radius), a.stride)) return 0.0;
  const double s = p.joint_score[static_cast<std::size_t>(inst.category)];
  const double o = oracle_iou(p.box, inst.box);
  if (mp.combine == Combine::kAdd) return (1 - mp.alpha) * s + mp.alpha * o;
  const double ps = mp.alpha == 1.0 ? 1.0 : std::pow(s, 1 - mp.alpha);
  const double po = mp.alpha == 0.0 ? 1.0 : std::pow(o, mp.alpha);
  return ps * po;
}

// Straightforward O(n^3) greedy: repeatedly take the best remaining
// (score desc, anchor asc, instance asc) candidate pair, then fall back to the
// nearest free anchor for instances that got nothing.
struct OracleClaims {
  std::vector<std::vector<int>> claims;
  std::vector<bool> degenerate;
};

OracleClaims oracle_greedy(const Fixture& f, const MatchParams& mp, std::size_t capacity) {
  const std::size_t na = f.anchors.size(), ni = f.instances.size();
  OracleClaims out{std::vector<std::vector<int>>(ni), std::vector<bool>(ni, false)};
  std::vector<bool> taken(na, false);
  for (;;) {
    int bj = -1, bi = -1;
    double bs = -1;
    for (std::size_t i = 0; i < na; ++i) {
      if (taken[i]) continue;
      for (std::size_t j = 0; j < ni; ++j) {
        if (out.claims[j].size() >= capacity) continue;
        if (!in_center_region(f.anchors[i].point, CenterRegion(f.instances[j].box, mp.center_radius),
                              f.anchors[i].stride)) {
          continue;
        }
        const double s = oracle_score(f.preds[i], f.anchors[i], f.instances[j], mp);
        // Iterating anchors ascending and instances ascending, strict > keeps the
        // lowest ids on ties.
        if (s > bs) {
          bs = s;
          bi = static_cast<int>(i);
          bj = static_cast<int>(j);
        }
      }
    }
    if (bi < 0) break;
    taken[static_cast<std::size_t>(bi)] = true;
    out.claims[static_cast<std::size_t>(bj)].push_back(bi);
  }
  for (std::size_t j = 0; j < ni; ++j) {
    if (!out.claims[j].empty()) continue;
    int best = -1;
    double bd = 1e300;
    for (std::size_t i = 0; i < na; ++i) {
      if (taken[i]) continue;
      const double dx = f.anchors[i].point.x - f.instances[j].box.center_x();
      const double dy = f.anchors[i].point.y - f.instances[j].box.center_y();
      if (dx * dx + dy * dy < bd) {
        bd = dx * dx + dy * dy;
        best = static_cast<int>(i);
      }
    }
    if (best >= 0) {
      taken[static_cast<std::size_t>(best)] = true;
      out.claims[j].push_back(best);
      out.degenerate[j] = true;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("matching score examples") {
  CHECK(matching_score(0.9, 0.9, false, 0.8, Combine::kMultiply) == 0.0);
  CHECK(matching_score(0.9, 0.9, false, 0.8, Combine::kAdd) == 0.0);
  for (double a : {0.0, 0.3, 0.8, 1.0}) CHECK(matching_score(1, 1, true, a, Combine::kMultiply) == 1.0);
  CHECK(matching_score(0.5, 0.6, true, 0.8, Combine::kMultiply) ==
        doctest::Approx(std::pow(0.5, 0.2) * std::pow(0.6, 0.8)).epsilon(1e-14));
  CHECK(matching_score(0.5, 0.6, true, 0.8, Combine::kMultiply) == doctest::Approx(0.5785).epsilon(1e-4));
  // 0^0 is 1: a zero score must not poison a pure-IoU match.
  CHECK(matching_score(0.0, 0.7, true, 1.0, Combine::kMultiply) == doctest::Approx(0.7));
  CHECK(matching_score(0.4, 0.0, true, 0.0, Combine::kMultiply) == doctest::Approx(0.4));
  CHECK(matching_score(0.5, 0.6, true, 0.8, Combine::kAdd) == doctest::Approx(0.1 + 0.48));
}

TEST_CASE("prediction joint score is cls times ctr") {
  const auto p = Prediction::make(0, {0.3, 0.8}, 0.5, Box(0, 0, 1, 1));
  CHECK(p.joint_score[0] == 0.3 * 0.5);
  CHECK(p.joint_score[1] == 0.8 * 0.5);
}

TEST_CASE("three-anchor fixture") {
  const Fixture f = three_anchor_fixture();
  O2fParams params;
  params.k = 1;
  params.temperature = 0.6;
  const auto m = compute_score_matrix(f.anchors, f.preds, f.instances, params.match);
  CHECK(m.at(0, 0) == doctest::Approx(std::pow(0.9, 0.2) * std::pow(0.8, 0.8)).epsilon(1e-12));
  CHECK(m.at(0, 0) == doctest::Approx(0.8191).epsilon(1e-4));
  CHECK(m.at(0, 1) == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(m.at(0, 2) == doctest::Approx(std::pow(0.2, 0.2) * std::pow(0.3, 0.8)).epsilon(1e-12));

  SUBCASE("o2f") {
    const auto r = assign_o2f(f.anchors, f.preds, f.instances, params);
    REQUIRE(r.instances.size() == 1);
    CHECK(r.instances[0].certain == std::vector<int>{0});
    REQUIRE(r.instances[0].ambiguous.size() == 1);
    CHECK(r.instances[0].ambiguous[0].anchor == 1);
    CHECK(r.instances[0].ambiguous[0].t == doctest::Approx(0.7 / 0.9 * 0.6).epsilon(1e-12));
    CHECK(r.instances[0].ambiguous[0].t == doctest::Approx(0.4667).epsilon(1e-4));
    CHECK(r.role[2] == AnchorRole::kNegative);
    CHECK(r.target == std::vector<double>{1.0, r.instances[0].ambiguous[0].t, 0.0});
    CHECK_NOTHROW(check_assignment(r, 1, 0.6));
  }
  SUBCASE("o2o top-1") {
    const auto r = assign_o2o_top1(f.anchors, f.preds, f.instances, params.match);
    CHECK(r.instances[0].certain == std::vector<int>{0});
    CHECK(r.instances[0].ambiguous.empty());
    CHECK(r.num_positive() == 1);
  }
  SUBCASE("one-to-two") {
    const auto r = assign_o2m_topk(f.anchors, f.preds, f.instances, 2, params.match);
    CHECK(r.instances[0].certain == std::vector<int>{0, 1});
    CHECK(r.role[2] == AnchorRole::kNegative);
  }
  SUBCASE("k beyond candidates") {
    const auto r = assign_o2m_topk(f.anchors, f.preds, f.instances, 9, params.match);
    CHECK(r.num_positive() == 3);
    CHECK(r.instances[0].certain == std::vector<int>{0, 1, 2});
  }
}

TEST_CASE("single anchor single instance") {
  Fixture f;
  f.anchors.push_back(anchor_at(0, 5, 5));
  f.preds.push_back(Prediction::make(0, {0.4}, 1.0, Box(1, 1, 9, 9)));
  f.instances.push_back({Box(0, 0, 10, 10), 0});
  const auto r = assign_o2f(f.anchors, f.preds, f.instances, O2fParams{});
  CHECK(r.instances[0].certain == std::vector<int>{0});
  CHECK(r.instances[0].ambiguous.empty());
  const auto h = assign_o2o_hungarian(f.anchors, f.preds, f.instances, MatchParams{});
  CHECK(h.instances[0].certain == std::vector<int>{0});
}

TEST_CASE("disjoint and colliding instances") {
  // Four anchors on a line; two instances.
  Fixture f;
  for (int i = 0; i < 4; ++i) f.anchors.push_back(anchor_at(i, 2.0 + 4.0 * i, 6.0, 2.0));
  SUBCASE("disjoint candidate sets") {
    f.instances = {{Box(0, 2, 8, 10), 0}, {Box(10, 2, 18, 10), 0}};
    for (int i = 0; i < 4; ++i) {
      const Box& gt = f.instances[static_cast<std::size_t>(i / 2)].box;
      f.preds.push_back(Prediction::make(i, {i % 2 == 0 ? 0.8 : 0.4}, 1.0, gt));
    }
    const auto r = assign_o2o_top1(f.anchors, f.preds, f.instances, MatchParams{});
    CHECK(r.instances[0].certain == std::vector<int>{0});
    // Anchor 2 sits on the edge of the second box, outside its center region.
    CHECK(r.instances[1].certain == std::vector<int>{3});
  }
  SUBCASE("top-1 collision") {
    // Both instances cover anchors 1 and 2; anchor 1 is the best for both.
    f.instances = {{Box(2, 2, 14, 10), 0}, {Box(3, 2, 15, 10), 0}};
    const std::vector<double> s = {0.3, 0.95, 0.6, 0.2};
    for (int i = 0; i < 4; ++i) f.preds.push_back(Prediction::make(i, {s[static_cast<std::size_t>(i)]}, 1.0, Box(2, 2, 14, 10)));
    MatchParams mp;
    mp.center_radius = 10.0;
    const auto r = assign_o2o_top1(f.anchors, f.preds, f.instances, mp);
    // Instance 0 has IoU 1 with every prediction, so it wins anchor 1; instance 1
    // takes its next-best.
    CHECK(r.instances[0].certain == std::vector<int>{1});
    CHECK(r.instances[1].certain == std::vector<int>{2});
    const auto o = oracle_greedy(f, mp, 1);
    CHECK(o.claims[0] == r.instances[0].certain);
    CHECK(o.claims[1] == r.instances[1].certain);
  }
}

TEST_CASE("equal scores break ties by anchor id") {
  Fixture f;
  f.instances.push_back({Box(0, 0, 10, 10), 0});
  for (int i = 0; i < 3; ++i) {
    f.anchors.push_back(anchor_at(i, 4.0 + i, 5.0));
    f.preds.push_back(Prediction::make(i, {0.5}, 1.0, Box(0, 0, 10, 10)));
  }
  const auto r = assign_o2f(f.anchors, f.preds, f.instances, O2fParams{});
  CHECK(r.instances[0].certain == std::vector<int>{0});
  CHECK(r.instances[0].ambiguous == std::vector<SoftAnchor>{{1, 0.6}, {2, 0.6}});
}

TEST_CASE("zero candidates fall back to the nearest anchor") {
  Fixture f;
  f.anchors = {anchor_at(0, 0, 0), anchor_at(1, 40, 40), anchor_at(2, 20, 20)};
  for (int i = 0; i < 3; ++i) f.preds.push_back(Prediction::make(i, {0.5}, 1.0, Box(0, 0, 1, 1)));
  f.instances.push_back({Box(25, 25, 27, 27), 0});
  const auto r = assign_o2f(f.anchors, f.preds, f.instances, O2fParams{});
  CHECK(r.degenerate_events == 1);
  CHECK(r.instances[0].degenerate);
  CHECK(r.instances[0].certain == std::vector<int>{2});
  CHECK(r.instances[0].ambiguous.empty());
}

TEST_CASE("all-zero joint scores give uniform T") {
  Fixture f = three_anchor_fixture();
  for (auto& p : f.preds) p = Prediction::make(p.anchor_id, {0.0}, 1.0, p.box);
  O2fParams params;
  params.k = 2;
  params.match.alpha = 1.0;
  const auto r = assign_o2f(f.anchors, f.preds, f.instances, params);
  REQUIRE(r.instances[0].ambiguous.size() == 2);
  for (const auto& s : r.instances[0].ambiguous) CHECK(s.t == 0.6);
}

TEST_CASE("static weights when not normalizing") {
  const Fixture f = three_anchor_fixture();
  O2fParams params;
  params.k = 2;
  params.temperature = 0.3;
  params.normalize_by_max = false;
  const auto r = assign_o2f(f.anchors, f.preds, f.instances, params);
  for (const auto& s : r.instances[0].ambiguous) CHECK(s.t == 0.3);
}

TEST_CASE("assignment errors") {
  Fixture f = three_anchor_fixture();
  CHECK_THROWS_AS(assign_o2f(f.anchors, {}, f.instances, O2fParams{}), std::invalid_argument);
  CHECK_THROWS_AS(assign_o2m_topk(f.anchors, f.preds, f.instances, 0, MatchParams{}), std::invalid_argument);
  O2fParams bad;
  bad.match.alpha = 1.5;
  CHECK_THROWS_AS(assign_o2f(f.anchors, f.preds, f.instances, bad), std::invalid_argument);
  Fixture g = f;
  g.instances.assign(4, f.instances[0]);
  CHECK_THROWS_AS(assign_o2o_hungarian(g.anchors, g.preds, g.instances, MatchParams{}), std::invalid_argument);
  g = f;
  g.instances[0].category = 3;
  CHECK_THROWS_AS(assign_o2f(g.anchors, g.preds, g.instances, O2fParams{}), std::invalid_argument);
}

TEST_CASE("random fixtures match the greedy oracle") {
  for (int trial = 0; trial < 200; ++trial) {
    const Fixture f = random_fixture();
    O2fParams params;
    params.k = uniform_int(0, 8);
    params.temperature = uniform(0.0, 1.0);
    params.match.alpha = uniform(0.0, 1.0);
    params.match.combine = trial % 2 ? Combine::kAdd : Combine::kMultiply;
    const auto r = assign_o2f(f.anchors, f.preds, f.instances, params);
    const auto o = oracle_greedy(f, params.match, 1 + static_cast<std::size_t>(params.k));
    int degenerate = 0;
    for (std::size_t j = 0; j < f.instances.size(); ++j) {
      const auto& got = r.instances[j];
      const auto& want = o.claims[j];
      CHECK(got.degenerate == o.degenerate[j]);
      degenerate += o.degenerate[j];
      if (want.empty()) {
        CHECK(got.certain.empty());
        continue;
      }
      REQUIRE(got.certain.size() == 1);
      CHECK(got.certain[0] == want[0]);
      REQUIRE(got.ambiguous.size() == want.size() - 1);
      const auto c = static_cast<std::size_t>(f.instances[j].category);
      double pmax = 0;
      for (int a : want) pmax = std::max(pmax, f.preds[static_cast<std::size_t>(a)].joint_score[c]);
      for (std::size_t q = 1; q < want.size(); ++q) {
        CHECK(got.ambiguous[q - 1].anchor == want[q]);
        const double p = f.preds[static_cast<std::size_t>(want[q])].joint_score[c];
        const double t = pmax > 0 ? params.temperature * p / pmax : params.temperature;
        CHECK(got.ambiguous[q - 1].t == doctest::Approx(t).epsilon(1e-12));
      }
    }
    CHECK(r.degenerate_events == degenerate);
    CHECK_NOTHROW(check_assignment(r, params.k, params.temperature));
    CHECK(r.num_positive() <= (1 + static_cast<std::size_t>(params.k)) * f.instances.size());
  }
}

TEST_CASE("reductions: K = 0, top-1 and top-k with k = 1 agree") {
  for (int trial = 0; trial < 200; ++trial) {
    const Fixture f = random_fixture();
    O2fParams params;
    params.k = 0;
    params.match.alpha = uniform(0.0, 1.0);
    const auto a = assign_o2f(f.anchors, f.preds, f.instances, params);
    const auto b = assign_o2o_top1(f.anchors, f.preds, f.instances, params.match);
    const auto c = assign_o2m_topk(f.anchors, f.preds, f.instances, 1, params.match);
    CHECK(a == b);
    CHECK(b == c);
    for (const auto& inst : a.instances) CHECK(inst.ambiguous.empty());
  }
}

TEST_CASE("determinism") {
  const Fixture f = random_fixture();
  const auto a = assign_o2f(f.anchors, f.preds, f.instances, O2fParams{});
  const auto b = assign_o2f(f.anchors, f.preds, f.instances, O2fParams{});
  CHECK(a == b);
}

TEST_CASE("parallel and serial score matrices are identical") {
  for (int trial = 0; trial < 20; ++trial) {
    const Fixture f = random_fixture(3);
    const auto a = compute_score_matrix(f.anchors, f.preds, f.instances, MatchParams{});
    const auto b = serial::compute_score_matrix(f.anchors, f.preds, f.instances, MatchParams{});
    CHECK(a.score == b.score);
    CHECK(a.inside == b.inside);
  }
}

TEST_CASE("argmax invariance under score scaling") {
  auto scaled = [](Fixture f, double c) {
    for (auto& p : f.preds) p = Prediction::make(p.anchor_id, p.cls_score, p.ctr_score * c, p.box);
    return f;
  };
  auto membership = [](const AssignmentResult& r) {
    std::vector<std::tuple<std::vector<int>, std::vector<int>>> out;
    for (const auto& inst : r.instances) {
      std::vector<int> amb;
      for (const auto& s : inst.ambiguous) amb.push_back(s.anchor);
      std::sort(amb.begin(), amb.end());
      out.emplace_back(inst.certain, amb);
    }
    return out;
  };
  for (int trial = 0; trial < 200; ++trial) {
    Fixture f = random_fixture();
    for (auto& p : f.preds) p = Prediction::make(p.anchor_id, p.cls_score, p.ctr_score * 0.5, p.box);
    const double c = uniform(0.05, 2.0);
    O2fParams params;
    params.k = uniform_int(0, 6);
    params.match.alpha = uniform(0.0, 1.0);
    const auto base = assign_o2f(f.anchors, f.preds, f.instances, params);
    CHECK(membership(base) == membership(assign_o2f(f.anchors, scaled(f, c).preds, f.instances, params)));
    // The additive score is an affine mix, so a common scale only preserves
    // the ranking when one of the two terms is switched off.
    params.match.combine = Combine::kAdd;
    for (double a : {0.0, 1.0}) {
      params.match.alpha = a;
      const auto add_base = assign_o2f(f.anchors, f.preds, f.instances, params);
      CHECK(membership(add_base) == membership(assign_o2f(f.anchors, scaled(f, c).preds, f.instances, params)));
    }
  }
}

namespace {

double brute_force_max(const std::vector<std::vector<double>>& s) {
  const std::size_t r = s.size(), c = s[0].size();
  std::vector<std::size_t> cols(c);
  std::iota(cols.begin(), cols.end(), 0);
  double best = -1e300;
  // Every permutation of the columns; the first r entries are the row matches.
  do {
    double total = 0;
    for (std::size_t i = 0; i < r; ++i) total += s[i][cols[i]];
    best = std::max(best, total);
  } while (std::next_permutation(cols.begin(), cols.end()));
  return best;
}

}  // namespace

TEST_CASE("hungarian two-by-two fixture") {
  CostMatrix cost(2, 2);
  const double s[2][2] = {{0.9, 0.8}, {0.85, 0.1}};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) cost(i, j) = -s[i][j];
  const auto m = solve_min_cost_assignment(cost);
  CHECK(m == std::vector<std::size_t>{1, 0});
  CHECK_THROWS_AS(solve_min_cost_assignment(CostMatrix(3, 2)), std::invalid_argument);
  CHECK(solve_min_cost_assignment(CostMatrix(0, 3)).empty());
}

TEST_CASE("hungarian matches the permutation oracle") {
  for (int trial = 0; trial < 1000; ++trial) {
    const int cols = uniform_int(1, 7);
    const int rows = uniform_int(1, cols);
    std::vector<std::vector<double>> s(static_cast<std::size_t>(rows), std::vector<double>(static_cast<std::size_t>(cols)));
    CostMatrix cost(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols));
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) {
        // Some trials use coarse values so ties are common.
        const double v = trial % 3 == 0 ? uniform_int(0, 3) / 3.0 : uniform(0.0, 1.0);
        s[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = v;
        cost(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = -v;
      }
    }
    const auto m = solve_min_cost_assignment(cost);
    REQUIRE(m.size() == static_cast<std::size_t>(rows));
    std::vector<std::size_t> sorted = m;
    std::sort(sorted.begin(), sorted.end());
    CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
    double total = 0;
    for (int i = 0; i < rows; ++i) total += s[static_cast<std::size_t>(i)][m[static_cast<std::size_t>(i)]];
    CHECK(total == doctest::Approx(brute_force_max(s)).epsilon(1e-12));
  }
}

TEST_CASE("hungarian assignment is a valid one-to-one partition") {
  for (int trial = 0; trial < 50; ++trial) {
    const Fixture f = random_fixture();
    const auto r = assign_o2o_hungarian(f.anchors, f.preds, f.instances, MatchParams{});
    CHECK_NOTHROW(check_assignment(r, 0, 1.0));
    CHECK(r.num_positive() == f.instances.size());
    // Its total score is never below the greedy top-1 total.
    const auto g = assign_o2o_top1(f.anchors, f.preds, f.instances, MatchParams{});
    const auto m = compute_score_matrix(f.anchors, f.preds, f.instances, MatchParams{});
    double th = 0, tg = 0;
    for (std::size_t j = 0; j < f.instances.size(); ++j) {
      th += m.at(j, static_cast<std::size_t>(r.instances[j].certain[0]));
      if (!g.instances[j].certain.empty()) tg += m.at(j, static_cast<std::size_t>(g.instances[j].certain[0]));
    }
    CHECK(th >= tg - 1e-12);
  }
}

TEST_CASE("check_assignment rejects double ownership") {
  const Fixture f = three_anchor_fixture();
  auto r = assign_o2f(f.anchors, f.preds, f.instances, O2fParams{});
  r.instances[0].ambiguous.push_back({0, 0.1});
  CHECK_THROWS_AS(check_assignment(r, 7, 0.6), std::logic_error);
}
