#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include "o2f/geometry.hpp"

namespace testing {

inline std::mt19937_64& rng() {
  static std::mt19937_64 engine(20240611);
  return engine;
}

inline double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng()); }
inline int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng()); }

inline o2f::Box random_box(double extent = 50.0, double min_side = 0.5, double max_side = 20.0) {
  const double x = uniform(0.0, extent);
  const double y = uniform(0.0, extent);
  return o2f::Box(x, y, x + uniform(min_side, max_side), y + uniform(min_side, max_side));
}

// Independent area oracle: overlap of the two 1-D intervals, multiplied.
inline double overlap_1d(double a1, double a2, double b1, double b2) {
  const double lo = a1 > b1 ? a1 : b1;
  const double hi = a2 < b2 ? a2 : b2;
  return hi > lo ? hi - lo : 0.0;
}

inline double oracle_iou(const o2f::Box& a, const o2f::Box& b) {
  const double inter = overlap_1d(a.x1(), a.x2(), b.x1(), b.x2()) * overlap_1d(a.y1(), a.y2(), b.y1(), b.y2());
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

inline double oracle_giou(const o2f::Box& a, const o2f::Box& b) {
  const double inter = overlap_1d(a.x1(), a.x2(), b.x1(), b.x2()) * overlap_1d(a.y1(), a.y2(), b.y1(), b.y2());
  const double uni = a.area() + b.area() - inter;
  const double cw = std::max(a.x2(), b.x2()) - std::min(a.x1(), b.x1());
  const double ch = std::max(a.y2(), b.y2()) - std::min(a.y1(), b.y1());
  const double c = cw * ch;
  return inter / uni - (c - uni) / c;
}

}  // namespace testing
