#include "o2f/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace o2f {

Box::Box(double x1, double y1, double x2, double y2) : x1_(x1), y1_(y1), x2_(x2), y2_(y2) {
  if (!std::isfinite(x1) || !std::isfinite(y1) || !std::isfinite(x2) || !std::isfinite(y2)) {
    throw std::invalid_argument("Box: non-finite coordinate");
  }
  if (x2 < x1 || y2 < y1) {
    throw std::invalid_argument("Box: inverted box [" + std::to_string(x1) + ", " +
                                std::to_string(y1) + ", " + std::to_string(x2) + ", " +
                                std::to_string(y2) + "]");
  }
}

Box Box::from_center(double cx, double cy, double w, double h) {
  return Box(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h);
}

Box Box::translated(double dx, double dy) const {
  return Box(x1_ + dx, y1_ + dy, x2_ + dx, y2_ + dy);
}

CenterRegion::CenterRegion(const Box& box, double radius)
    : instance_box(box), radius_factor(radius) {
  if (!(radius > 0.0) || !std::isfinite(radius)) {
    throw std::invalid_argument("CenterRegion: radius_factor must be positive");
  }
}

double intersection_area(const Box& a, const Box& b) {
  const double iw = std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1());
  const double ih = std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1());
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  return iw * ih;
}

double iou(const Box& a, const Box& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

double giou(const Box& a, const Box& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  const double cw = std::max(a.x2(), b.x2()) - std::min(a.x1(), b.x1());
  const double ch = std::max(a.y2(), b.y2()) - std::min(a.y1(), b.y1());
  const double enclose = cw * ch;
  if (enclose <= 0.0) {
    throw std::domain_error("giou: enclosing box has zero area");
  }
  const double iou_val = uni > 0.0 ? inter / uni : 0.0;
  return iou_val - (enclose - uni) / enclose;
}

double giou_loss(const Box& pred, const Box& gt) { return 1.0 - giou(pred, gt); }

std::array<double, 4> giou_loss_grad(const Box& pred, const Box& gt) {
  const auto& a = pred;
  const auto& b = gt;
  const double aw = a.width();
  const double ah = a.height();

  const double iw = std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1());
  const double ih = std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1());
  const bool overlap = iw > 0.0 && ih > 0.0;
  const double inter = overlap ? iw * ih : 0.0;
  const double uni = a.area() + b.area() - inter;
  const double cw = std::max(a.x2(), b.x2()) - std::min(a.x1(), b.x1());
  const double ch = std::max(a.y2(), b.y2()) - std::min(a.y1(), b.y1());
  const double enclose = cw * ch;
  if (enclose <= 0.0) {
    throw std::domain_error("giou_loss_grad: enclosing box has zero area");
  }

  // Partial derivatives of the intersection width/height, the enclosing
  // width/height, and the predicted area, w.r.t. (x1, y1, x2, y2).
  std::array<double, 4> d_inter{};
  if (overlap) {
    d_inter[0] = a.x1() > b.x1() ? -ih : 0.0;
    d_inter[2] = a.x2() < b.x2() ? ih : 0.0;
    d_inter[1] = a.y1() > b.y1() ? -iw : 0.0;
    d_inter[3] = a.y2() < b.y2() ? iw : 0.0;
  }
  std::array<double, 4> d_enclose{};
  d_enclose[0] = a.x1() < b.x1() ? -ch : 0.0;
  d_enclose[2] = a.x2() > b.x2() ? ch : 0.0;
  d_enclose[1] = a.y1() < b.y1() ? -cw : 0.0;
  d_enclose[3] = a.y2() > b.y2() ? cw : 0.0;
  const std::array<double, 4> d_area{-ah, -aw, ah, aw};

  std::array<double, 4> grad{};
  for (int k = 0; k < 4; ++k) {
    const double d_uni = d_area[k] - d_inter[k];
    double d_giou = 0.0;
    if (uni > 0.0) {
      d_giou += d_inter[k] / uni - inter * d_uni / (uni * uni);
    }
    d_giou += d_uni / enclose - uni * d_enclose[k] / (enclose * enclose);
    grad[k] = -d_giou;
  }
  return grad;
}

bool in_center_region(Point anchor, const CenterRegion& region, double stride) {
  if (!(stride > 0.0)) {
    throw std::invalid_argument("in_center_region: stride must be positive");
  }
  const Box& box = region.instance_box;
  const double r = region.radius_factor * stride;
  const double lo_x = std::max(box.x1(), box.center_x() - r);
  const double hi_x = std::min(box.x2(), box.center_x() + r);
  const double lo_y = std::max(box.y1(), box.center_y() - r);
  const double hi_y = std::min(box.y2(), box.center_y() + r);
  return anchor.x >= lo_x && anchor.x <= hi_x && anchor.y >= lo_y && anchor.y <= hi_y;
}

}  // namespace o2f
