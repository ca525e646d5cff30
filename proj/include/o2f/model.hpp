#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "o2f/loss.hpp"
#include "o2f/scene.hpp"
#include "o2f/types.hpp"

namespace o2f {

enum class ModelMode { kTabular, kMlp };

std::string to_string(ModelMode mode);
ModelMode parse_model_mode(const std::string& name);

struct ModelConfig {
  ModelMode mode = ModelMode::kMlp;
  int hidden = 32;
  /// Initial foreground probability of the classification logits.
  double cls_prior = 0.01;
  /// Scale of the random initialization.
  double init_scale = 1.0;
  /// Per-instance class evidence: the category one-hot of an instance is
  /// softened to v = 1 - class_ambiguity * u, u ~ U(0, 1) fixed per scene, so
  /// some objects are harder to classify than others.
  double class_ambiguity = 0.5;

  void validate() const;
};

/// Number of handcrafted per-anchor features fed to the MLP.
inline constexpr int kGeometricFeatures = 6;
int mlp_feature_count(int levels, int categories);

/// Features relative to the instance whose center is nearest the anchor:
/// offset to that center in strides (clipped to +-4), log(w / stride),
/// log(h / stride), half extents w / 2 stride and h / 2 stride (clipped to 8),
/// level one-hot, category channels (see ModelConfig::class_ambiguity).
std::vector<double> anchor_features(const AnchorGrid& grid, const Scene& scene, int categories,
                                    double ambiguity = 0.0);

/// Raw per-anchor outputs: categories cls logits, 1 ctr logit, 4 ltrb params.
struct ForwardPass {
  std::vector<double> raw;        // anchors x (categories + 5)
  std::vector<double> features;   // MLP only
  std::vector<double> hidden;     // MLP only, post-tanh
  std::vector<Prediction> predictions;
  int slot = 0;
};

/// Per-anchor prediction head standing in for a dense detector. Tabular mode
/// keeps an independent parameter table per training scene (slot); MLP mode
/// shares one hidden layer across all anchors and scenes.
class PredictionModel {
 public:
  static PredictionModel tabular(int slots, int anchors, int categories, const ModelConfig& cfg,
                                 std::uint64_t seed);
  static PredictionModel mlp(int levels, int categories, const ModelConfig& cfg, std::uint64_t seed);

  ModelMode mode() const { return mode_; }
  int categories() const { return categories_; }
  int outputs_per_anchor() const { return categories_ + 5; }
  std::size_t parameter_count() const { return params_.size(); }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  /// `slot` selects the tabular table; ignored by the MLP.
  ForwardPass forward(const AnchorGrid& grid, const Scene& scene, int slot = 0) const;

  /// Accumulates d loss / d params into `grad` (same size as params()).
  void backward(const AnchorGrid& grid, const ForwardPass& pass, std::span<const AnchorGrad> out_grad,
                std::span<double> grad) const;

  /// Decodes one anchor's raw outputs. Distances are stride * softplus(param).
  static Prediction decode(const Anchor& anchor, std::span<const double> raw, int categories);

 private:
  PredictionModel(ModelMode mode, int categories) : mode_(mode), categories_(categories) {}

  std::size_t w1_offset() const { return 0; }
  std::size_t b1_offset() const { return static_cast<std::size_t>(hidden_ * inputs_); }
  std::size_t w2_offset() const { return b1_offset() + static_cast<std::size_t>(hidden_); }
  std::size_t b2_offset() const { return w2_offset() + static_cast<std::size_t>(outputs_per_anchor() * hidden_); }

  ModelMode mode_;
  int categories_;
  int anchors_ = 0;   // tabular
  int slots_ = 0;     // tabular
  int levels_ = 0;    // mlp
  int inputs_ = 0;    // mlp
  int hidden_ = 0;    // mlp
  double class_ambiguity_ = 0.0;  // mlp
  std::vector<double> params_;
};

double sigmoid(double x);
double softplus(double x);

}  // namespace o2f
