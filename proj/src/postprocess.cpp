#include "o2f/postprocess.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>
#include <utility>

#include "o2f/parallel.hpp"

namespace o2f {

bool detection_before(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.anchor_id != b.anchor_id) return a.anchor_id < b.anchor_id;
  if (a.image != b.image) return a.image < b.image;
  return a.category < b.category;
}

namespace {

void check_threshold(double t) {
  if (!(t > 0.0 && t <= 1.0)) throw std::invalid_argument("nms: iou_threshold must be in (0, 1]");
}

std::vector<Detection> sorted_copy(std::span<const Detection> dets) {
  std::vector<Detection> out(dets.begin(), dets.end());
  std::stable_sort(out.begin(), out.end(), detection_before);
  return out;
}

// Greedy suppression over one (image, category) group already in canonical order.
std::vector<Detection> suppress_group(const std::vector<Detection>& group, double thr) {
  std::vector<Detection> kept;
  for (const auto& d : group) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(),
                                        [&](const Detection& k) { return iou(k.box, d.box) > thr; });
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

}  // namespace

std::vector<Detection> nms(std::span<const Detection> dets, double iou_threshold) {
  check_threshold(iou_threshold);
  if (dets.empty()) return {};
  std::map<std::pair<int, int>, std::vector<Detection>> by_group;
  for (const auto& d : sorted_copy(dets)) by_group[{d.image, d.category}].push_back(d);

  std::vector<std::vector<Detection>*> groups;
  groups.reserve(by_group.size());
  for (auto& [key, g] : by_group) groups.push_back(&g);

  std::vector<std::vector<Detection>> kept(groups.size());
  const auto n = static_cast<std::ptrdiff_t>(groups.size());
#pragma omp parallel for schedule(dynamic) num_threads(thread_budget())
  for (std::ptrdiff_t g = 0; g < n; ++g) {
    kept[static_cast<std::size_t>(g)] = suppress_group(*groups[static_cast<std::size_t>(g)], iou_threshold);
  }

  std::vector<Detection> out;
  for (auto& k : kept) out.insert(out.end(), k.begin(), k.end());
  std::stable_sort(out.begin(), out.end(), detection_before);
  return out;
}

namespace serial {

std::vector<Detection> nms(std::span<const Detection> dets, double iou_threshold) {
  check_threshold(iou_threshold);
  const std::vector<Detection> order = sorted_copy(dets);
  std::vector<char> alive(order.size(), 1);
  std::vector<Detection> out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (!alive[i]) continue;
    out.push_back(order[i]);
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      if (alive[j] && order[j].image == order[i].image && order[j].category == order[i].category &&
          iou(order[i].box, order[j].box) > iou_threshold) {
        alive[j] = 0;
      }
    }
  }
  return out;
}

}  // namespace serial

std::vector<Detection> filter_detections(std::span<const Detection> dets, double score_threshold,
                                         int max_per_image) {
  if (max_per_image < 0) throw std::invalid_argument("filter_detections: max_per_image must be >= 0");
  std::map<int, std::vector<Detection>> by_image;
  for (const auto& d : dets) {
    if (d.score >= score_threshold) by_image[d.image].push_back(d);
  }
  std::vector<Detection> out;
  for (auto& [image, list] : by_image) {
    std::stable_sort(list.begin(), list.end(), detection_before);
    const auto keep = std::min(list.size(), static_cast<std::size_t>(max_per_image));
    out.insert(out.end(), list.begin(), list.begin() + static_cast<std::ptrdiff_t>(keep));
  }
  return out;
}

}  // namespace o2f
