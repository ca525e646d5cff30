#pragma once

#include <array>

namespace o2f {

/// Axis-aligned box in corner form. Construction rejects inverted or
/// non-finite coordinates; zero-area boxes are allowed.
class Box {
 public:
  Box() = default;
  Box(double x1, double y1, double x2, double y2);

  static Box from_center(double cx, double cy, double w, double h);

  double x1() const { return x1_; }
  double y1() const { return y1_; }
  double x2() const { return x2_; }
  double y2() const { return y2_; }
  double width() const { return x2_ - x1_; }
  double height() const { return y2_ - y1_; }
  double area() const { return width() * height(); }
  double center_x() const { return 0.5 * (x1_ + x2_); }
  double center_y() const { return 0.5 * (y1_ + y2_); }
  std::array<double, 4> coords() const { return {x1_, y1_, x2_, y2_}; }

  Box translated(double dx, double dy) const;

  friend bool operator==(const Box&, const Box&) = default;

 private:
  double x1_ = 0.0;
  double y1_ = 0.0;
  double x2_ = 0.0;
  double y2_ = 0.0;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Square of half-width radius_factor * stride around the instance center,
/// clipped to the instance box.
struct CenterRegion {
  CenterRegion(const Box& box, double radius_factor);

  Box instance_box;
  double radius_factor;
};

inline constexpr double kDefaultCenterRadius = 1.5;

double intersection_area(const Box& a, const Box& b);

/// Intersection over union; 0 when the union is empty.
double iou(const Box& a, const Box& b);

/// Generalized IoU. Throws std::domain_error when the enclosing box has zero
/// area (both inputs degenerate).
double giou(const Box& a, const Box& b);

double giou_loss(const Box& pred, const Box& gt);

/// d giou_loss / d (x1, y1, x2, y2) of pred. Uses one-sided subgradients at
/// coordinate ties.
std::array<double, 4> giou_loss_grad(const Box& pred, const Box& gt);

bool in_center_region(Point anchor, const CenterRegion& region, double stride);

}  // namespace o2f
