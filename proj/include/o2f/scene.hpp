#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "o2f/types.hpp"

namespace o2f {

enum class Regime { kSparse, kCrowded };

std::string to_string(Regime regime);
Regime parse_regime(const std::string& name);

struct SceneConfig {
  int width = 64;
  int height = 64;
  int min_instances = 1;
  int max_instances = 6;
  double min_size = 12.0;
  double max_size = 40.0;
  int categories = 3;
  Regime regime = Regime::kSparse;
  /// Sparse: every pair stays below this IoU.
  double sparse_max_iou = 0.1;
  /// Crowded: at least this fraction of pairs reaches crowded_iou.
  double crowded_fraction = 0.4;
  double crowded_iou = 0.3;
  /// Crowded: no pair exceeds this IoU (near-identical boxes are unlabelable).
  double crowded_max_iou = 0.8;
  int max_retries = 2000;

  void validate() const;
};

struct Scene {
  int width = 0;
  int height = 0;
  std::vector<Instance> instances;
  std::uint64_t seed = 0;
};

/// Deterministic scene from (config, seed). Throws std::runtime_error when no
/// valid placement is found within max_retries attempts.
Scene generate_scene(const SceneConfig& cfg, std::uint64_t seed);

/// Seed of the index-th scene of a run (splitmix64 of seed and index).
std::uint64_t scene_seed(std::uint64_t run_seed, std::uint64_t index);

struct LevelSpec {
  double stride = 8.0;
  int cols = 0;
  int rows = 0;
};

/// Anchor points at stride * (c + 0.5), level-major then row-major ids.
struct AnchorGrid {
  int width = 0;
  int height = 0;
  std::vector<LevelSpec> levels;
  std::vector<Anchor> anchors;

  std::size_t size() const { return anchors.size(); }
  int num_levels() const { return static_cast<int>(levels.size()); }
  /// Id of the anchor at (level, row, col).
  int index_of(int level, int row, int col) const;
};

AnchorGrid build_anchor_grid(int width, int height, const std::vector<double>& strides);

}  // namespace o2f
