#include "o2f/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <tuple>

#include "o2f/hungarian.hpp"
#include "o2f/parallel.hpp"
#include "o2f/schedule.hpp"

namespace o2f {

Prediction Prediction::make(int anchor_id, std::vector<double> cls, double ctr, const Box& box) {
  Prediction p;
  p.anchor_id = anchor_id;
  p.ctr_score = ctr;
  p.joint_score.resize(cls.size());
  for (std::size_t c = 0; c < cls.size(); ++c) p.joint_score[c] = cls[c] * ctr;
  p.cls_score = std::move(cls);
  p.box = box;
  return p;
}

std::string to_string(Combine combine) { return combine == Combine::kMultiply ? "multiply" : "add"; }

Combine parse_combine(const std::string& name) {
  if (name == "multiply") return Combine::kMultiply;
  if (name == "add") return Combine::kAdd;
  throw std::invalid_argument("unknown combine mode '" + name + "'");
}

std::string to_string(ScoreSource source) { return source == ScoreSource::kJoint ? "joint" : "cls"; }

ScoreSource parse_score_source(const std::string& name) {
  if (name == "joint") return ScoreSource::kJoint;
  if (name == "cls") return ScoreSource::kCls;
  throw std::invalid_argument("unknown score source '" + name + "'");
}

std::string to_string(AnchorRole role) {
  switch (role) {
    case AnchorRole::kCertain:
      return "certain";
    case AnchorRole::kAmbiguous:
      return "ambiguous";
    case AnchorRole::kNegative:
      return "negative";
  }
  return "unknown";
}

void MatchParams::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("assign: alpha must be in [0, 1]");
  if (!(center_radius > 0.0)) throw std::invalid_argument("assign: center_radius must be positive");
}

std::size_t AssignmentResult::num_positive() const {
  return static_cast<std::size_t>(
      std::count_if(role.begin(), role.end(), [](AnchorRole r) { return r != AnchorRole::kNegative; }));
}

namespace {

// 0^0 == 1 so alpha in {0, 1} never zeroes a score through the other factor.
double safe_pow(double base, double exponent) {
  if (exponent == 0.0) return 1.0;
  return std::pow(base, exponent);
}

void check_inputs(std::span<const Anchor> anchors, std::span<const Prediction> preds,
                  std::span<const Instance> instances) {
  if (preds.empty()) throw std::invalid_argument("assign: empty prediction list");
  if (anchors.size() != preds.size()) {
    throw std::invalid_argument("assign: anchor and prediction counts differ");
  }
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (anchors[i].id != static_cast<int>(i) || preds[i].anchor_id != static_cast<int>(i)) {
      throw std::invalid_argument("assign: anchor ids must equal their positions");
    }
  }
  for (const auto& inst : instances) {
    if (inst.category < 0 || inst.category >= preds.front().num_categories()) {
      throw std::invalid_argument("assign: instance category outside the prediction range");
    }
  }
}

double class_score(const Prediction& pred, int category, ScoreSource source) {
  const auto c = static_cast<std::size_t>(category);
  return source == ScoreSource::kJoint ? pred.joint_score[c] : pred.cls_score[c];
}

void fill_score_row(ScoreMatrix& m, std::size_t i, std::span<const Anchor> anchors,
                    std::span<const Prediction> preds, std::span<const Instance> instances,
                    const MatchParams& params) {
  const Anchor& anchor = anchors[i];
  const Prediction& pred = preds[i];
  for (std::size_t j = 0; j < instances.size(); ++j) {
    const Instance& inst = instances[j];
    const bool inside =
        in_center_region(anchor.point, CenterRegion(inst.box, params.center_radius), anchor.stride);
    const double p = class_score(pred, inst.category, params.score);
    const double overlap = inside ? iou(pred.box, inst.box) : 0.0;
    m.inside[j * m.anchors + i] = inside ? 1 : 0;
    m.score[j * m.anchors + i] = matching_score(p, overlap, inside, params.alpha, params.combine);
  }
}

ScoreMatrix empty_matrix(std::size_t n_inst, std::size_t n_anchor) {
  ScoreMatrix m;
  m.instances = n_inst;
  m.anchors = n_anchor;
  m.score.assign(n_inst * n_anchor, 0.0);
  m.inside.assign(n_inst * n_anchor, 0);
  return m;
}

AssignmentResult make_empty_result(std::size_t n_anchor, std::size_t n_inst) {
  AssignmentResult r;
  r.instances.resize(n_inst);
  r.role.assign(n_anchor, AnchorRole::kNegative);
  r.owner.assign(n_anchor, -1);
  r.target.assign(n_anchor, 0.0);
  return r;
}

// Claims anchors in descending global score order (ties: lower anchor id,
// then lower instance index). Instance j stops claiming after `capacity`
// anchors. Returns per-instance claimed anchors in claim order.
std::vector<std::vector<int>> greedy_claim(const ScoreMatrix& m, std::size_t capacity,
                                           std::vector<int>& claimed_by) {
  struct Entry {
    double score;
    int anchor;
    int instance;
  };
  std::vector<Entry> entries;
  for (std::size_t j = 0; j < m.instances; ++j) {
    for (std::size_t i = 0; i < m.anchors; ++i) {
      if (m.candidate(j, i)) {
        entries.push_back({m.at(j, i), static_cast<int>(i), static_cast<int>(j)});
      }
    }
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.anchor != b.anchor) return a.anchor < b.anchor;
    return a.instance < b.instance;
  });
  std::vector<std::vector<int>> claims(m.instances);
  for (const auto& e : entries) {
    auto& mine = claims[static_cast<std::size_t>(e.instance)];
    if (claimed_by[static_cast<std::size_t>(e.anchor)] >= 0 || mine.size() >= capacity) continue;
    claimed_by[static_cast<std::size_t>(e.anchor)] = e.instance;
    mine.push_back(e.anchor);
  }
  return claims;
}

// Nearest unclaimed anchor to the instance center; -1 if all are taken.
int nearest_free_anchor(std::span<const Anchor> anchors, const Instance& inst,
                        const std::vector<int>& claimed_by) {
  int best = -1;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    if (claimed_by[i] >= 0) continue;
    const double dx = anchors[i].point.x - inst.box.center_x();
    const double dy = anchors[i].point.y - inst.box.center_y();
    const double d2 = dx * dx + dy * dy;
    if (d2 < best_d2) {
      best_d2 = d2;
      best = static_cast<int>(i);
    }
  }
  return best;
}

// Shared top-n machinery: certain_slots anchors become fully positive, the
// next ambiguous_slots become ambiguous with soft degrees.
AssignmentResult assign_ranked(std::span<const Anchor> anchors, std::span<const Prediction> preds,
                               std::span<const Instance> instances, const MatchParams& match,
                               std::size_t certain_slots, std::size_t ambiguous_slots,
                               double temperature, bool normalize_by_max) {
  match.validate();
  check_inputs(anchors, preds, instances);
  const ScoreMatrix m = compute_score_matrix(anchors, preds, instances, match);
  std::vector<int> claimed_by(anchors.size(), -1);
  auto claims = greedy_claim(m, certain_slots + ambiguous_slots, claimed_by);

  AssignmentResult result = make_empty_result(anchors.size(), instances.size());
  for (std::size_t j = 0; j < instances.size(); ++j) {
    if (!claims[j].empty()) continue;
    const int fallback = nearest_free_anchor(anchors, instances[j], claimed_by);
    if (fallback < 0) continue;
    claimed_by[static_cast<std::size_t>(fallback)] = static_cast<int>(j);
    claims[j].push_back(fallback);
    result.instances[j].degenerate = true;
    ++result.degenerate_events;
  }

  for (std::size_t j = 0; j < instances.size(); ++j) {
    auto& out = result.instances[j];
    const auto& mine = claims[j];
    const std::size_t n_certain = std::min(mine.size(), certain_slots);
    out.certain.assign(mine.begin(), mine.begin() + static_cast<std::ptrdiff_t>(n_certain));

    double p_max = 0.0;
    for (int a : mine) {
      p_max = std::max(p_max, class_score(preds[static_cast<std::size_t>(a)], instances[j].category, match.score));
    }
    for (std::size_t r = n_certain; r < mine.size(); ++r) {
      const int a = mine[r];
      double t = temperature;
      if (normalize_by_max && p_max > 0.0) {
        const double p = class_score(preds[static_cast<std::size_t>(a)], instances[j].category, match.score);
        t = soft_positive_degree(p, p_max, temperature);
      }
      out.ambiguous.push_back({a, t});
    }

    for (int a : out.certain) {
      const auto idx = static_cast<std::size_t>(a);
      result.role[idx] = AnchorRole::kCertain;
      result.owner[idx] = static_cast<int>(j);
      result.target[idx] = 1.0;
    }
    for (const auto& s : out.ambiguous) {
      const auto idx = static_cast<std::size_t>(s.anchor);
      result.role[idx] = AnchorRole::kAmbiguous;
      result.owner[idx] = static_cast<int>(j);
      result.target[idx] = s.t;
    }
  }
  return result;
}

}  // namespace

double matching_score(double p, double iou_val, bool inside, double alpha, Combine combine) {
  if (!inside) return 0.0;
  if (combine == Combine::kMultiply) {
    return safe_pow(p, 1.0 - alpha) * safe_pow(iou_val, alpha);
  }
  return (1.0 - alpha) * p + alpha * iou_val;
}

ScoreMatrix compute_score_matrix(std::span<const Anchor> anchors, std::span<const Prediction> preds,
                                 std::span<const Instance> instances, const MatchParams& params) {
  ScoreMatrix m = empty_matrix(instances.size(), anchors.size());
  const auto n = static_cast<std::ptrdiff_t>(anchors.size());
#pragma omp parallel for schedule(static) num_threads(thread_budget())
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    fill_score_row(m, static_cast<std::size_t>(i), anchors, preds, instances, params);
  }
  return m;
}

namespace serial {

ScoreMatrix compute_score_matrix(std::span<const Anchor> anchors, std::span<const Prediction> preds,
                                 std::span<const Instance> instances, const MatchParams& params) {
  ScoreMatrix m = empty_matrix(instances.size(), anchors.size());
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    fill_score_row(m, i, anchors, preds, instances, params);
  }
  return m;
}

}  // namespace serial

AssignmentResult assign_o2f(std::span<const Anchor> anchors, std::span<const Prediction> preds,
                            std::span<const Instance> instances, const O2fParams& params) {
  if (params.k < 0) throw std::invalid_argument("assign_o2f: K must be >= 0");
  if (!(params.temperature >= 0.0 && params.temperature <= 1.0)) {
    throw std::invalid_argument("assign_o2f: temperature must be in [0, 1]");
  }
  return assign_ranked(anchors, preds, instances, params.match, 1,
                       static_cast<std::size_t>(params.k), params.temperature,
                       params.normalize_by_max);
}

AssignmentResult assign_o2o_top1(std::span<const Anchor> anchors, std::span<const Prediction> preds,
                                 std::span<const Instance> instances, const MatchParams& params) {
  return assign_ranked(anchors, preds, instances, params, 1, 0, 0.0, true);
}

AssignmentResult assign_o2m_topk(std::span<const Anchor> anchors, std::span<const Prediction> preds,
                                 std::span<const Instance> instances, int k,
                                 const MatchParams& params) {
  if (k < 1) throw std::invalid_argument("assign_o2m_topk: k must be >= 1");
  return assign_ranked(anchors, preds, instances, params, static_cast<std::size_t>(k), 0, 0.0, true);
}

AssignmentResult assign_o2o_hungarian(std::span<const Anchor> anchors,
                                      std::span<const Prediction> preds,
                                      std::span<const Instance> instances,
                                      const MatchParams& params) {
  params.validate();
  check_inputs(anchors, preds, instances);
  if (instances.size() > anchors.size()) {
    throw std::invalid_argument("assign_o2o_hungarian: more instances than anchors");
  }
  const ScoreMatrix m = compute_score_matrix(anchors, preds, instances, params);
  CostMatrix cost(m.instances, m.anchors);
  for (std::size_t k = 0; k < m.score.size(); ++k) cost.data[k] = -m.score[k];
  const auto match = solve_min_cost_assignment(cost);

  AssignmentResult result = make_empty_result(anchors.size(), instances.size());
  for (std::size_t j = 0; j < instances.size(); ++j) {
    const auto a = match[j];
    result.instances[j].certain.push_back(static_cast<int>(a));
    result.role[a] = AnchorRole::kCertain;
    result.owner[a] = static_cast<int>(j);
    result.target[a] = 1.0;
  }
  return result;
}

void check_assignment(const AssignmentResult& result, int max_ambiguous, double max_t) {
  const std::size_t n = result.num_anchors();
  if (result.owner.size() != n || result.target.size() != n) {
    throw std::logic_error("assignment: per-anchor tables have different sizes");
  }
  std::vector<int> seen(n, -1);
  for (std::size_t j = 0; j < result.instances.size(); ++j) {
    const auto& inst = result.instances[j];
    if (static_cast<int>(inst.ambiguous.size()) > max_ambiguous) {
      throw std::logic_error("assignment: too many ambiguous anchors");
    }
    auto claim = [&](int a) {
      const auto idx = static_cast<std::size_t>(a);
      if (idx >= n) throw std::logic_error("assignment: anchor id out of range");
      if (seen[idx] >= 0) throw std::logic_error("assignment: anchor owned twice");
      seen[idx] = static_cast<int>(j);
      if (result.owner[idx] != static_cast<int>(j)) throw std::logic_error("assignment: owner mismatch");
    };
    for (int a : inst.certain) {
      claim(a);
      if (result.role[static_cast<std::size_t>(a)] != AnchorRole::kCertain) {
        throw std::logic_error("assignment: certain anchor has wrong role");
      }
    }
    for (const auto& s : inst.ambiguous) {
      claim(s.anchor);
      if (result.role[static_cast<std::size_t>(s.anchor)] != AnchorRole::kAmbiguous) {
        throw std::logic_error("assignment: ambiguous anchor has wrong role");
      }
      if (!(s.t >= 0.0 && s.t <= max_t)) throw std::logic_error("assignment: t outside [0, T]");
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if ((seen[i] < 0) != (result.role[i] == AnchorRole::kNegative)) {
      throw std::logic_error("assignment: role table disagrees with instance lists");
    }
  }
}

}  // namespace o2f
