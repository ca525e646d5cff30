#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "o2f/types.hpp"

namespace o2f {

enum class Combine { kMultiply, kAdd };
enum class ScoreSource { kJoint, kCls };

std::string to_string(Combine combine);
Combine parse_combine(const std::string& name);
std::string to_string(ScoreSource source);
ScoreSource parse_score_source(const std::string& name);

/// Matching-score hyper-parameters shared by every assigner.
struct MatchParams {
  double alpha = 0.8;
  Combine combine = Combine::kMultiply;
  double center_radius = kDefaultCenterRadius;
  ScoreSource score = ScoreSource::kJoint;

  void validate() const;
};

/// Spatially gated score of an anchor against an instance.
///   multiply: 1[inside] * p^(1-alpha) * iou^alpha   (0^0 == 1)
///   add:      1[inside] * ((1-alpha) * p + alpha * iou)
double matching_score(double p, double iou_val, bool inside, double alpha, Combine combine);

/// Instances x anchors matrix of matching scores plus the spatial-prior mask.
struct ScoreMatrix {
  std::size_t instances = 0;
  std::size_t anchors = 0;
  std::vector<double> score;
  std::vector<std::uint8_t> inside;

  double at(std::size_t j, std::size_t i) const { return score[j * anchors + i]; }
  bool candidate(std::size_t j, std::size_t i) const { return inside[j * anchors + i] != 0; }
};

/// OpenMP kernel: rows are filled in parallel over anchors.
ScoreMatrix compute_score_matrix(std::span<const Anchor> anchors, std::span<const Prediction> preds,
                                 std::span<const Instance> instances, const MatchParams& params);

namespace serial {
ScoreMatrix compute_score_matrix(std::span<const Anchor> anchors, std::span<const Prediction> preds,
                                 std::span<const Instance> instances, const MatchParams& params);
}  // namespace serial

enum class AnchorRole : std::uint8_t { kNegative, kCertain, kAmbiguous };

std::string to_string(AnchorRole role);

struct SoftAnchor {
  int anchor = 0;
  double t = 0.0;

  friend bool operator==(const SoftAnchor&, const SoftAnchor&) = default;
};

struct InstanceAssignment {
  /// Fully positive anchors in descending matching-score order. One entry for
  /// one-to-one and one-to-few assignment, up to k for top-k.
  std::vector<int> certain;
  std::vector<SoftAnchor> ambiguous;
  /// Set when no candidate survived the spatial prior and the nearest-anchor
  /// fallback was used.
  bool degenerate = false;

  friend bool operator==(const InstanceAssignment&, const InstanceAssignment&) = default;
};

struct AssignmentResult {
  std::vector<InstanceAssignment> instances;
  std::vector<AnchorRole> role;  // per anchor
  std::vector<int> owner;        // per anchor; -1 for negatives
  std::vector<double> target;    // per anchor; 1 certain, t ambiguous, 0 negative
  int degenerate_events = 0;

  std::size_t num_anchors() const { return role.size(); }
  std::size_t num_positive() const;

  friend bool operator==(const AssignmentResult&, const AssignmentResult&) = default;
};

struct O2fParams {
  MatchParams match;
  int k = 7;
  double temperature = 0.6;
  /// When false every ambiguous anchor receives t = temperature (static
  /// weights, used by the hybrid-epoch baseline).
  bool normalize_by_max = true;
};

/// One certain anchor plus up to K ambiguous anchors with soft degrees.
AssignmentResult assign_o2f(std::span<const Anchor> anchors, std::span<const Prediction> preds,
                            std::span<const Instance> instances, const O2fParams& params);

AssignmentResult assign_o2o_top1(std::span<const Anchor> anchors, std::span<const Prediction> preds,
                                 std::span<const Instance> instances, const MatchParams& params);

/// Globally optimal one-to-one matching (maximum total matching score).
AssignmentResult assign_o2o_hungarian(std::span<const Anchor> anchors,
                                      std::span<const Prediction> preds,
                                      std::span<const Instance> instances,
                                      const MatchParams& params);

/// Top-k anchors per instance, all fully positive. k = 2 is one-to-two.
AssignmentResult assign_o2m_topk(std::span<const Anchor> anchors, std::span<const Prediction> preds,
                                 std::span<const Instance> instances, int k,
                                 const MatchParams& params);

/// Checks the partition invariants; throws std::logic_error on violation.
void check_assignment(const AssignmentResult& result, int max_ambiguous, double max_t);

}  // namespace o2f
