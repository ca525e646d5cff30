#include "o2f/scene.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "o2f/rng.hpp"

namespace o2f {

std::string to_string(Regime regime) { return regime == Regime::kSparse ? "sparse" : "crowded"; }

Regime parse_regime(const std::string& name) {
  if (name == "sparse") return Regime::kSparse;
  if (name == "crowded") return Regime::kCrowded;
  throw std::invalid_argument("unknown scene regime '" + name + "'");
}

void SceneConfig::validate() const {
  if (width < 1 || height < 1) throw std::invalid_argument("scene: image size must be positive");
  if (min_instances < 0 || max_instances < min_instances) {
    throw std::invalid_argument("scene: need 0 <= min_instances <= max_instances");
  }
  if (!(min_size > 0.0) || max_size < min_size) throw std::invalid_argument("scene: need 0 < min_size <= max_size");
  if (max_size > std::min(width, height)) throw std::invalid_argument("scene: max_size exceeds the image");
  if (categories < 1) throw std::invalid_argument("scene: categories must be >= 1");
  if (!(crowded_fraction >= 0.0 && crowded_fraction <= 1.0)) {
    throw std::invalid_argument("scene: crowded_fraction must be in [0, 1]");
  }
  if (!(crowded_iou > 0.0 && crowded_iou < crowded_max_iou && crowded_max_iou <= 1.0)) {
    throw std::invalid_argument("scene: need 0 < crowded_iou < crowded_max_iou <= 1");
  }
  if (max_retries < 1) throw std::invalid_argument("scene: max_retries must be >= 1");
}

std::uint64_t scene_seed(std::uint64_t run_seed, std::uint64_t index) {
  return splitmix64(run_seed ^ splitmix64(index + 0x5eedULL));
}

namespace {

Box clamp_into(double cx, double cy, double w, double h, int width, int height) {
  w = std::min(w, static_cast<double>(width));
  h = std::min(h, static_cast<double>(height));
  cx = std::clamp(cx, 0.5 * w, width - 0.5 * w);
  cy = std::clamp(cy, 0.5 * h, height - 0.5 * h);
  return Box::from_center(cx, cy, w, h);
}

Box random_box(const SceneConfig& cfg, Rng& rng) {
  const double w = rng.uniform(cfg.min_size, cfg.max_size);
  const double h = rng.uniform(cfg.min_size, cfg.max_size);
  const double cx = rng.uniform(0.5 * w, cfg.width - 0.5 * w);
  const double cy = rng.uniform(0.5 * h, cfg.height - 0.5 * h);
  return Box::from_center(cx, cy, w, h);
}

bool try_sparse(const SceneConfig& cfg, int n, Rng& rng, std::vector<Instance>& out) {
  out.clear();
  for (int k = 0; k < n; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < 50 && !placed; ++attempt) {
      const Box b = random_box(cfg, rng);
      const bool clear = std::all_of(out.begin(), out.end(),
                                     [&](const Instance& o) { return iou(o.box, b) < cfg.sparse_max_iou; });
      if (clear) {
        out.push_back({b, rng.integer(0, cfg.categories - 1)});
        placed = true;
      }
    }
    if (!placed) return false;
  }
  return true;
}

// Instances come in clusters of up to three jittered copies of a seed box.
bool try_crowded(const SceneConfig& cfg, int n, Rng& rng, std::vector<Instance>& out) {
  out.clear();
  const int n_clusters = (n + 2) / 3;
  for (int c = 0; c < n_clusters; ++c) {
    const Box seed_box = random_box(cfg, rng);
    const int members = std::min(3, n - 3 * c);
    for (int m = 0; m < members; ++m) {
      const double w = std::clamp(seed_box.width() * rng.uniform(0.85, 1.15), cfg.min_size, cfg.max_size);
      const double h = std::clamp(seed_box.height() * rng.uniform(0.85, 1.15), cfg.min_size, cfg.max_size);
      const double cx = seed_box.center_x() + rng.uniform(-0.3, 0.3) * seed_box.width();
      const double cy = seed_box.center_y() + rng.uniform(-0.3, 0.3) * seed_box.height();
      out.push_back({clamp_into(cx, cy, w, h, cfg.width, cfg.height), rng.integer(0, cfg.categories - 1)});
    }
  }
  int pairs = 0;
  int crowded_pairs = 0;
  for (std::size_t a = 0; a < out.size(); ++a) {
    for (std::size_t b = a + 1; b < out.size(); ++b) {
      const double o = iou(out[a].box, out[b].box);
      if (o > cfg.crowded_max_iou) return false;
      ++pairs;
      if (o >= cfg.crowded_iou) ++crowded_pairs;
    }
  }
  return pairs == 0 || crowded_pairs >= cfg.crowded_fraction * pairs;
}

}  // namespace

Scene generate_scene(const SceneConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  Scene scene;
  scene.width = cfg.width;
  scene.height = cfg.height;
  scene.seed = seed;
  const int n = rng.integer(cfg.min_instances, cfg.max_instances);
  for (int attempt = 0; attempt < cfg.max_retries; ++attempt) {
    const bool ok = cfg.regime == Regime::kSparse ? try_sparse(cfg, n, rng, scene.instances)
                                                  : try_crowded(cfg, n, rng, scene.instances);
    if (ok) return scene;
  }
  throw std::runtime_error("generate_scene: could not place " + std::to_string(n) + " instances in " +
                           std::to_string(cfg.max_retries) + " attempts");
}

int AnchorGrid::index_of(int level, int row, int col) const {
  if (level < 0 || level >= num_levels()) throw std::out_of_range("AnchorGrid: level out of range");
  const auto& spec = levels[static_cast<std::size_t>(level)];
  if (row < 0 || row >= spec.rows || col < 0 || col >= spec.cols) {
    throw std::out_of_range("AnchorGrid: cell out of range");
  }
  int offset = 0;
  for (int l = 0; l < level; ++l) offset += levels[static_cast<std::size_t>(l)].rows * levels[static_cast<std::size_t>(l)].cols;
  return offset + row * spec.cols + col;
}

AnchorGrid build_anchor_grid(int width, int height, const std::vector<double>& strides) {
  if (strides.empty()) throw std::invalid_argument("build_anchor_grid: empty level list");
  if (width < 1 || height < 1) throw std::invalid_argument("build_anchor_grid: image size must be positive");
  AnchorGrid grid;
  grid.width = width;
  grid.height = height;
  for (std::size_t l = 0; l < strides.size(); ++l) {
    const double s = strides[l];
    if (!(s > 0.0)) throw std::invalid_argument("build_anchor_grid: strides must be positive");
    if (l > 0 && !(s > strides[l - 1])) throw std::invalid_argument("build_anchor_grid: strides must increase");
    LevelSpec spec{s, static_cast<int>(std::ceil(width / s)), static_cast<int>(std::ceil(height / s))};
    for (int r = 0; r < spec.rows; ++r) {
      for (int c = 0; c < spec.cols; ++c) {
        grid.anchors.push_back({static_cast<int>(grid.anchors.size()), {s * (c + 0.5), s * (r + 0.5)}, s,
                                static_cast<int>(l)});
      }
    }
    grid.levels.push_back(spec);
  }
  return grid;
}

}  // namespace o2f
