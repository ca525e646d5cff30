#include "o2f/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "o2f/rng.hpp"

namespace o2f {

std::string to_string(ModelMode mode) { return mode == ModelMode::kMlp ? "mlp" : "tabular"; }

ModelMode parse_model_mode(const std::string& name) {
  if (name == "mlp") return ModelMode::kMlp;
  if (name == "tabular") return ModelMode::kTabular;
  throw std::invalid_argument("unknown model mode '" + name + "'");
}

void ModelConfig::validate() const {
  if (hidden < 1) throw std::invalid_argument("model: hidden width must be >= 1");
  if (!(cls_prior > 0.0 && cls_prior < 1.0)) throw std::invalid_argument("model: cls_prior must be in (0, 1)");
  if (!(init_scale >= 0.0)) throw std::invalid_argument("model: init_scale must be >= 0");
  if (!(class_ambiguity >= 0.0 && class_ambiguity < 1.0)) {
    throw std::invalid_argument("model: class_ambiguity must be in [0, 1)");
  }
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

int mlp_feature_count(int levels, int categories) { return kGeometricFeatures + levels + categories; }

namespace {

constexpr double kOffsetClip = 4.0;
constexpr double kExtentClip = 8.0;

double prior_logit(double prior) { return -std::log((1.0 - prior) / prior); }

}  // namespace

std::vector<double> anchor_features(const AnchorGrid& grid, const Scene& scene, int categories,
                                    double ambiguity) {
  const int levels = grid.num_levels();
  const auto dim = static_cast<std::size_t>(mlp_feature_count(levels, categories));
  std::vector<double> feats(grid.size() * dim, 0.0);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Anchor& a = grid.anchors[i];
    double* f = feats.data() + i * dim;
    int nearest = -1;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < scene.instances.size(); ++j) {
      const Box& b = scene.instances[j].box;
      const double dx = a.point.x - b.center_x();
      const double dy = a.point.y - b.center_y();
      const double d2 = dx * dx + dy * dy;
      if (d2 < best) {
        best = d2;
        nearest = static_cast<int>(j);
      }
    }
    if (nearest >= 0) {
      const Instance& inst = scene.instances[static_cast<std::size_t>(nearest)];
      f[0] = std::clamp((a.point.x - inst.box.center_x()) / a.stride, -kOffsetClip, kOffsetClip);
      f[1] = std::clamp((a.point.y - inst.box.center_y()) / a.stride, -kOffsetClip, kOffsetClip);
      f[2] = std::log(std::max(inst.box.width(), 1e-3) / a.stride);
      f[3] = std::log(std::max(inst.box.height(), 1e-3) / a.stride);
      f[4] = std::min(0.5 * inst.box.width() / a.stride, kExtentClip);
      f[5] = std::min(0.5 * inst.box.height() / a.stride, kExtentClip);
      if (inst.category < categories) {
        // Instance-level class evidence: the true category's channel carries
        // v in [1 - ambiguity, 1], the rest share 1 - v.
        double v = 1.0;
        if (ambiguity > 0.0 && categories > 1) {
          Rng draw(splitmix64(scene.seed ^ 0x616d62ULL) + static_cast<std::uint64_t>(nearest));
          v = 1.0 - ambiguity * draw.uniform();
        }
        double* cat = f + kGeometricFeatures + levels;
        for (int c = 0; c < categories; ++c) cat[c] = (1.0 - v) / (categories - 1);
        cat[inst.category] = v;
      }
    } else {
      f[0] = kOffsetClip;
      f[1] = kOffsetClip;
    }
    f[kGeometricFeatures + a.level] = 1.0;
  }
  return feats;
}

PredictionModel PredictionModel::tabular(int slots, int anchors, int categories, const ModelConfig& cfg,
                                         std::uint64_t seed) {
  cfg.validate();
  if (slots < 1 || anchors < 1 || categories < 1) throw std::invalid_argument("tabular model: empty shape");
  PredictionModel m(ModelMode::kTabular, categories);
  m.slots_ = slots;
  m.anchors_ = anchors;
  const int per = m.outputs_per_anchor();
  m.params_.assign(static_cast<std::size_t>(slots) * anchors * per, 0.0);
  Rng rng(seed);
  const double bias = prior_logit(cfg.cls_prior);
  for (std::size_t k = 0; k < m.params_.size(); ++k) {
    const auto o = static_cast<int>(k % static_cast<std::size_t>(per));
    const double noise = 0.01 * cfg.init_scale * rng.uniform(-1.0, 1.0);
    m.params_[k] = (o < categories ? bias : 0.0) + noise;
  }
  return m;
}

PredictionModel PredictionModel::mlp(int levels, int categories, const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (levels < 1 || categories < 1) throw std::invalid_argument("mlp model: empty shape");
  PredictionModel m(ModelMode::kMlp, categories);
  m.levels_ = levels;
  m.inputs_ = mlp_feature_count(levels, categories);
  m.hidden_ = cfg.hidden;
  m.class_ambiguity_ = cfg.class_ambiguity;
  const int out = m.outputs_per_anchor();
  m.params_.assign(m.b2_offset() + static_cast<std::size_t>(out), 0.0);
  Rng rng(seed);
  const double a1 = cfg.init_scale * std::sqrt(6.0 / (m.inputs_ + m.hidden_));
  for (std::size_t k = m.w1_offset(); k < m.b1_offset(); ++k) m.params_[k] = rng.uniform(-a1, a1);
  const double a2 = cfg.init_scale * std::sqrt(6.0 / (m.hidden_ + out));
  for (std::size_t k = m.w2_offset(); k < m.b2_offset(); ++k) m.params_[k] = rng.uniform(-a2, a2) * 0.1;
  for (int c = 0; c < categories; ++c) m.params_[m.b2_offset() + static_cast<std::size_t>(c)] = prior_logit(cfg.cls_prior);
  return m;
}

Prediction PredictionModel::decode(const Anchor& anchor, std::span<const double> raw, int categories) {
  std::vector<double> cls(static_cast<std::size_t>(categories));
  for (int c = 0; c < categories; ++c) cls[static_cast<std::size_t>(c)] = sigmoid(raw[static_cast<std::size_t>(c)]);
  const double ctr = sigmoid(raw[static_cast<std::size_t>(categories)]);
  const std::size_t b = static_cast<std::size_t>(categories) + 1;
  const double l = anchor.stride * softplus(raw[b + 0]);
  const double t = anchor.stride * softplus(raw[b + 1]);
  const double r = anchor.stride * softplus(raw[b + 2]);
  const double btm = anchor.stride * softplus(raw[b + 3]);
  const Box box(anchor.point.x - l, anchor.point.y - t, anchor.point.x + r, anchor.point.y + btm);
  return Prediction::make(anchor.id, std::move(cls), ctr, box);
}

ForwardPass PredictionModel::forward(const AnchorGrid& grid, const Scene& scene, int slot) const {
  for (double p : params_) {
    if (!std::isfinite(p)) throw std::domain_error("forward: non-finite model parameter");
  }
  const int per = outputs_per_anchor();
  const std::size_t n = grid.size();
  ForwardPass pass;
  pass.slot = slot;
  pass.raw.assign(n * static_cast<std::size_t>(per), 0.0);

  if (mode_ == ModelMode::kTabular) {
    if (slot < 0 || slot >= slots_) throw std::out_of_range("forward: tabular slot out of range");
    if (static_cast<int>(n) != anchors_) throw std::invalid_argument("forward: grid does not match the table");
    const auto begin = static_cast<std::ptrdiff_t>(static_cast<std::size_t>(slot) * n * static_cast<std::size_t>(per));
    std::copy(params_.begin() + begin, params_.begin() + begin + static_cast<std::ptrdiff_t>(pass.raw.size()),
              pass.raw.begin());
  } else {
    if (grid.num_levels() != levels_) throw std::invalid_argument("forward: grid does not match the MLP");
    pass.features = anchor_features(grid, scene, categories_, class_ambiguity_);
    pass.hidden.assign(n * static_cast<std::size_t>(hidden_), 0.0);
    const double* w1 = params_.data() + w1_offset();
    const double* b1 = params_.data() + b1_offset();
    const double* w2 = params_.data() + w2_offset();
    const double* b2 = params_.data() + b2_offset();
    for (std::size_t i = 0; i < n; ++i) {
      const double* x = pass.features.data() + i * static_cast<std::size_t>(inputs_);
      double* h = pass.hidden.data() + i * static_cast<std::size_t>(hidden_);
      for (int u = 0; u < hidden_; ++u) {
        double acc = b1[u];
        const double* w = w1 + static_cast<std::size_t>(u) * static_cast<std::size_t>(inputs_);
        for (int k = 0; k < inputs_; ++k) acc += w[k] * x[k];
        h[u] = std::tanh(acc);
      }
      double* out = pass.raw.data() + i * static_cast<std::size_t>(per);
      for (int o = 0; o < per; ++o) {
        double acc = b2[o];
        const double* w = w2 + static_cast<std::size_t>(o) * static_cast<std::size_t>(hidden_);
        for (int u = 0; u < hidden_; ++u) acc += w[u] * h[u];
        out[o] = acc;
      }
    }
  }

  pass.predictions.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    pass.predictions.push_back(decode(
        grid.anchors[i], std::span<const double>(pass.raw).subspan(i * static_cast<std::size_t>(per), static_cast<std::size_t>(per)),
        categories_));
  }
  return pass;
}

void PredictionModel::backward(const AnchorGrid& grid, const ForwardPass& pass,
                               std::span<const AnchorGrad> out_grad, std::span<double> grad) const {
  if (grad.size() != params_.size()) throw std::invalid_argument("backward: gradient buffer size mismatch");
  if (out_grad.size() != grid.size()) throw std::invalid_argument("backward: one AnchorGrad per anchor expected");
  const int per = outputs_per_anchor();
  const std::size_t n = grid.size();
  std::vector<double> d_raw(static_cast<std::size_t>(per));

  for (std::size_t i = 0; i < n; ++i) {
    const AnchorGrad& g = out_grad[i];
    const double* raw = pass.raw.data() + i * static_cast<std::size_t>(per);
    for (int c = 0; c < categories_; ++c) d_raw[static_cast<std::size_t>(c)] = g.cls_logit[static_cast<std::size_t>(c)];
    d_raw[static_cast<std::size_t>(categories_)] = g.ctr_logit;
    // box = (x - l, y - t, x + r, y + b); d dist / d param = stride * sigmoid(param)
    const double s = grid.anchors[i].stride;
    const std::size_t b = static_cast<std::size_t>(categories_) + 1;
    d_raw[b + 0] = -g.box[0] * s * sigmoid(raw[b + 0]);
    d_raw[b + 1] = -g.box[1] * s * sigmoid(raw[b + 1]);
    d_raw[b + 2] = g.box[2] * s * sigmoid(raw[b + 2]);
    d_raw[b + 3] = g.box[3] * s * sigmoid(raw[b + 3]);

    if (mode_ == ModelMode::kTabular) {
      const std::size_t base = (static_cast<std::size_t>(pass.slot) * n + i) * static_cast<std::size_t>(per);
      for (int o = 0; o < per; ++o) grad[base + static_cast<std::size_t>(o)] += d_raw[static_cast<std::size_t>(o)];
      continue;
    }

    const double* x = pass.features.data() + i * static_cast<std::size_t>(inputs_);
    const double* h = pass.hidden.data() + i * static_cast<std::size_t>(hidden_);
    const double* w2 = params_.data() + w2_offset();
    double* gw1 = grad.data() + w1_offset();
    double* gb1 = grad.data() + b1_offset();
    double* gw2 = grad.data() + w2_offset();
    double* gb2 = grad.data() + b2_offset();
    for (int u = 0; u < hidden_; ++u) {
      double d_h = 0.0;
      for (int o = 0; o < per; ++o) {
        const double d = d_raw[static_cast<std::size_t>(o)];
        gw2[static_cast<std::size_t>(o) * static_cast<std::size_t>(hidden_) + static_cast<std::size_t>(u)] += d * h[u];
        d_h += d * w2[static_cast<std::size_t>(o) * static_cast<std::size_t>(hidden_) + static_cast<std::size_t>(u)];
      }
      const double d_pre = d_h * (1.0 - h[u] * h[u]);
      gb1[u] += d_pre;
      double* row = gw1 + static_cast<std::size_t>(u) * static_cast<std::size_t>(inputs_);
      for (int k = 0; k < inputs_; ++k) row[k] += d_pre * x[k];
    }
    for (int o = 0; o < per; ++o) gb2[o] += d_raw[static_cast<std::size_t>(o)];
  }
}

}  // namespace o2f
