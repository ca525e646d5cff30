#pragma once

#include <vector>

#include "o2f/geometry.hpp"

namespace o2f {

/// Dense candidate location. Within one image, anchor ids are the positions
/// 0..n-1 of the anchor list.
struct Anchor {
  int id = 0;
  Point point;
  double stride = 1.0;
  int level = 0;
};

/// Ground-truth object.
struct Instance {
  Box box;
  int category = 0;

  friend bool operator==(const Instance&, const Instance&) = default;
};

/// Per-anchor network output after the sigmoid.
struct Prediction {
  int anchor_id = 0;
  std::vector<double> cls_score;    // per category, in [0, 1]
  double ctr_score = 1.0;           // in [0, 1]
  std::vector<double> joint_score;  // cls_score[c] * ctr_score
  Box box;

  static Prediction make(int anchor_id, std::vector<double> cls, double ctr, const Box& box);
  int num_categories() const { return static_cast<int>(cls_score.size()); }
};

}  // namespace o2f
