#include "o2f/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>

#include "o2f/parallel.hpp"

namespace o2f {

MatchResult match_detections(std::span<const Detection> dets, std::span<const GroundTruth> gts,
                             double iou_threshold) {
  MatchResult r;
  r.det_tp.assign(dets.size(), 0);
  r.det_gt.assign(dets.size(), -1);
  r.gt_matched.assign(gts.size(), 0);
  for (std::size_t d = 0; d < dets.size(); ++d) {
    double best = -1.0;
    int best_gt = -1;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (r.gt_matched[g]) continue;
      const double o = iou(dets[d].box, gts[g].box);
      if (o >= iou_threshold && o > best) {
        best = o;
        best_gt = static_cast<int>(g);
      }
    }
    if (best_gt >= 0) {
      r.det_tp[d] = 1;
      r.det_gt[d] = best_gt;
      r.gt_matched[static_cast<std::size_t>(best_gt)] = 1;
    }
  }
  return r;
}

std::optional<double> average_precision(std::span<const char> tp_flags, std::size_t n_gt) {
  if (n_gt == 0) {
    if (tp_flags.empty()) return std::nullopt;
    return 0.0;
  }
  const std::size_t n = tp_flags.size();
  std::vector<double> recall(n), precision(n);
  double tp = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (tp_flags[k]) tp += 1.0;
    recall[k] = tp / static_cast<double>(n_gt);
    precision[k] = tp / static_cast<double>(k + 1);
  }
  // Monotone envelope from the right.
  for (std::size_t k = n; k-- > 1;) precision[k - 1] = std::max(precision[k - 1], precision[k]);

  double sum = 0.0;
  for (int r = 0; r <= 100; ++r) {
    const double level = r / 100.0;
    const auto it = std::lower_bound(recall.begin(), recall.end(), level);
    if (it != recall.end()) sum += precision[static_cast<std::size_t>(it - recall.begin())];
  }
  return sum / 101.0;
}

std::vector<double> coco_iou_thresholds() {
  std::vector<double> t;
  for (int k = 0; k < 10; ++k) t.push_back((50 + 5 * k) / 100.0);
  return t;
}

std::vector<double> default_fppi_points() {
  std::vector<double> p;
  for (int k = 0; k < 9; ++k) p.push_back(std::pow(10.0, -2.0 + 0.25 * k));
  return p;
}

namespace {

struct Cell {
  std::optional<double> ap;
  std::optional<double> recall;
  long tp = 0;
  long fp = 0;
  long fn = 0;
};

// Detections and GTs bucketed by (category, image), both in ascending key order.
struct Buckets {
  std::vector<int> categories;
  std::vector<int> images;
  std::map<std::pair<int, int>, std::vector<Detection>> dets;
  std::map<std::pair<int, int>, std::vector<GroundTruth>> gts;
};

Buckets bucket(std::span<const Detection> dets, std::span<const GroundTruth> gts, int max_dets) {
  Buckets b;
  std::set<int> cats, imgs;
  for (const auto& d : filter_detections(dets, -std::numeric_limits<double>::infinity(), max_dets)) {
    b.dets[{d.category, d.image}].push_back(d);
    cats.insert(d.category);
    imgs.insert(d.image);
  }
  for (const auto& g : gts) {
    b.gts[{g.category, g.image}].push_back(g);
    cats.insert(g.category);
    imgs.insert(g.image);
  }
  for (auto& [key, list] : b.dets) std::stable_sort(list.begin(), list.end(), detection_before);
  b.categories.assign(cats.begin(), cats.end());
  b.images.assign(imgs.begin(), imgs.end());
  return b;
}

Cell evaluate_cell(const Buckets& b, int category, double threshold) {
  struct Scored {
    Detection det;
    char tp;
  };
  std::vector<Scored> pooled;
  std::size_t n_gt = 0;
  Cell cell;
  for (int image : b.images) {
    static const std::vector<Detection> kNoDets;
    static const std::vector<GroundTruth> kNoGts;
    const auto dit = b.dets.find({category, image});
    const auto git = b.gts.find({category, image});
    const auto& d = dit == b.dets.end() ? kNoDets : dit->second;
    const auto& g = git == b.gts.end() ? kNoGts : git->second;
    n_gt += g.size();
    const MatchResult m = match_detections(d, g, threshold);
    for (std::size_t k = 0; k < d.size(); ++k) pooled.push_back({d[k], m.det_tp[k]});
  }
  std::stable_sort(pooled.begin(), pooled.end(),
                   [](const Scored& x, const Scored& y) { return detection_before(x.det, y.det); });
  std::vector<char> flags;
  flags.reserve(pooled.size());
  for (const auto& s : pooled) {
    flags.push_back(s.tp);
    (s.tp ? cell.tp : cell.fp) += 1;
  }
  cell.fn = static_cast<long>(n_gt) - cell.tp;
  cell.ap = average_precision(flags, n_gt);
  if (n_gt > 0) cell.recall = static_cast<double>(cell.tp) / static_cast<double>(n_gt);
  return cell;
}

EvalResult reduce_cells(const Buckets& b, const EvalParams& params, const std::vector<Cell>& cells) {
  EvalResult r;
  r.iou_thresholds = params.iou_thresholds;
  const std::size_t n_cat = b.categories.size();
  double recall_sum = 0.0;
  std::size_t recall_terms = 0;
  for (std::size_t t = 0; t < params.iou_thresholds.size(); ++t) {
    double ap_sum = 0.0;
    std::size_t ap_terms = 0;
    double rc_sum = 0.0;
    std::size_t rc_terms = 0;
    ThresholdCounts counts{params.iou_thresholds[t], 0, 0, 0};
    for (std::size_t c = 0; c < n_cat; ++c) {
      const Cell& cell = cells[c * params.iou_thresholds.size() + t];
      if (cell.ap) {
        ap_sum += *cell.ap;
        ++ap_terms;
      }
      if (cell.recall) {
        rc_sum += *cell.recall;
        ++rc_terms;
      }
      counts.tp += cell.tp;
      counts.fp += cell.fp;
      counts.fn += cell.fn;
    }
    r.ap_per_iou.push_back(ap_terms ? ap_sum / static_cast<double>(ap_terms) : 0.0);
    if (rc_terms) {
      recall_sum += rc_sum / static_cast<double>(rc_terms);
      ++recall_terms;
    }
    r.counts.push_back(counts);
  }
  if (!r.ap_per_iou.empty()) {
    double s = 0.0;
    for (double v : r.ap_per_iou) s += v;
    r.mean_ap = s / static_cast<double>(r.ap_per_iou.size());
  }
  r.average_recall = recall_terms ? recall_sum / static_cast<double>(recall_terms) : 0.0;

  long tp50 = 0;
  long gt_total = 0;
  for (int category : b.categories) {
    const Cell cell = evaluate_cell(b, category, 0.5);
    tp50 += cell.tp;
    gt_total += cell.tp + cell.fn;
  }
  r.recall50 = gt_total > 0 ? static_cast<double>(tp50) / static_cast<double>(gt_total) : 0.0;
  return r;
}

void check_params(const EvalParams& params) {
  if (params.max_dets < 1) throw std::invalid_argument("coco_map: max_dets must be >= 1");
  for (double t : params.iou_thresholds) {
    if (!(t > 0.0 && t <= 1.0)) throw std::invalid_argument("coco_map: IoU thresholds must be in (0, 1]");
  }
}

}  // namespace

EvalResult coco_map(std::span<const Detection> dets, std::span<const GroundTruth> gts,
                    const EvalParams& params) {
  check_params(params);
  const Buckets b = bucket(dets, gts, params.max_dets);
  const std::size_t n_thr = params.iou_thresholds.size();
  std::vector<Cell> cells(b.categories.size() * n_thr);
  const auto n = static_cast<std::ptrdiff_t>(cells.size());
#pragma omp parallel for schedule(dynamic) num_threads(thread_budget())
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    const auto idx = static_cast<std::size_t>(k);
    cells[idx] = evaluate_cell(b, b.categories[idx / n_thr], params.iou_thresholds[idx % n_thr]);
  }
  return reduce_cells(b, params, cells);
}

namespace serial {

EvalResult coco_map(std::span<const Detection> dets, std::span<const GroundTruth> gts,
                    const EvalParams& params) {
  check_params(params);
  const Buckets b = bucket(dets, gts, params.max_dets);
  std::vector<Cell> cells;
  for (int category : b.categories) {
    for (double t : params.iou_thresholds) cells.push_back(evaluate_cell(b, category, t));
  }
  return reduce_cells(b, params, cells);
}

}  // namespace serial

double mmr(std::span<const Detection> dets, std::span<const GroundTruth> gts, const MmrParams& params) {
  if (gts.empty()) throw std::invalid_argument("mmr: no ground truth");
  std::set<int> cats, imgs;
  for (const auto& d : dets) {
    cats.insert(d.category);
    imgs.insert(d.image);
  }
  for (const auto& g : gts) {
    cats.insert(g.category);
    imgs.insert(g.image);
  }
  if (cats.size() > 1) throw std::invalid_argument("mmr: expects a single category");
  const int n_images = params.num_images.value_or(static_cast<int>(imgs.size()));
  if (n_images < 1) throw std::invalid_argument("mmr: num_images must be >= 1");

  struct Scored {
    Detection det;
    char tp;
  };
  std::vector<Scored> pooled;
  for (int image : imgs) {
    std::vector<Detection> d;
    std::vector<GroundTruth> g;
    for (const auto& x : dets) {
      if (x.image == image) d.push_back(x);
    }
    for (const auto& x : gts) {
      if (x.image == image) g.push_back(x);
    }
    std::stable_sort(d.begin(), d.end(), detection_before);
    const MatchResult m = match_detections(d, g, params.iou_threshold);
    for (std::size_t k = 0; k < d.size(); ++k) pooled.push_back({d[k], m.det_tp[k]});
  }
  std::stable_sort(pooled.begin(), pooled.end(),
                   [](const Scored& x, const Scored& y) { return detection_before(x.det, y.det); });

  // Operating points: cut after each run of equal scores (plus the empty cut).
  struct Point {
    double fppi;
    double miss;
  };
  const double n_gt = static_cast<double>(gts.size());
  std::vector<Point> curve{{0.0, 1.0}};
  long tp = 0;
  long fp = 0;
  for (std::size_t k = 0; k < pooled.size(); ++k) {
    (pooled[k].tp ? tp : fp) += 1;
    const bool run_ends = k + 1 == pooled.size() || pooled[k + 1].det.score != pooled[k].det.score;
    if (run_ends) {
      curve.push_back({static_cast<double>(fp) / n_images, 1.0 - static_cast<double>(tp) / n_gt});
    }
  }

  double log_sum = 0.0;
  for (double ref : params.fppi_points) {
    double miss = 1.0;
    for (const auto& p : curve) {
      if (p.fppi <= ref) miss = p.miss;
    }
    log_sum += std::log(std::max(miss, params.miss_floor));
  }
  return std::exp(log_sum / static_cast<double>(params.fppi_points.size()));
}

double duplicates_per_gt(std::span<const Detection> dets, std::span<const GroundTruth> gts,
                         double score_threshold, double iou_threshold) {
  std::vector<int> hits(gts.size(), 0);
  for (const auto& d : dets) {
    if (!(d.score > score_threshold)) continue;
    double best = -1.0;
    int best_gt = -1;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (gts[g].image != d.image || gts[g].category != d.category) continue;
      const double o = iou(d.box, gts[g].box);
      if (o > best) {
        best = o;
        best_gt = static_cast<int>(g);
      }
    }
    if (best_gt >= 0 && best >= iou_threshold) ++hits[static_cast<std::size_t>(best_gt)];
  }
  long total = 0;
  long covered = 0;
  for (int h : hits) {
    if (h > 0) {
      total += h;
      ++covered;
    }
  }
  return covered ? static_cast<double>(total) / static_cast<double>(covered) : 0.0;
}

}  // namespace o2f
