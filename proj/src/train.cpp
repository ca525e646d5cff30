#include "o2f/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "o2f/optimizer.hpp"
#include "o2f/parallel.hpp"
#include "o2f/postprocess.hpp"
#include "o2f/rng.hpp"

namespace o2f {

namespace {

constexpr std::uint64_t kEvalSeedOffset = 1'000'000;

std::vector<GroundTruth> scene_ground_truth(const Scene& scene, int image) {
  std::vector<GroundTruth> out;
  for (const auto& inst : scene.instances) out.push_back({inst.box, inst.category, image});
  return out;
}

struct SceneStep {
  std::vector<double> grad;
  double total = 0.0;
  double cls = 0.0;
  double reg = 0.0;
  int degenerate = 0;
  std::string error;
};

}  // namespace

TrainData make_train_data(const ExperimentConfig& cfg) {
  cfg.validate();
  TrainData data;
  data.grid = build_anchor_grid(cfg.sim.scene.width, cfg.sim.scene.height, cfg.sim.strides);
  for (int s = 0; s < cfg.sim.train_scenes; ++s) {
    data.train.push_back(generate_scene(cfg.sim.scene, scene_seed(cfg.seed, static_cast<std::uint64_t>(s))));
  }
  if (cfg.sim.model.mode == ModelMode::kTabular) {
    data.eval = data.train;
  } else {
    for (int s = 0; s < cfg.sim.eval_scenes; ++s) {
      data.eval.push_back(generate_scene(
          cfg.sim.scene, scene_seed(cfg.seed + kEvalSeedOffset, static_cast<std::uint64_t>(s))));
    }
  }
  return data;
}

PredictionModel make_model(const ExperimentConfig& cfg, const TrainData& data) {
  const std::uint64_t model_seed = splitmix64(cfg.seed ^ 0x6d6f64656cULL);
  if (cfg.sim.model.mode == ModelMode::kTabular) {
    return PredictionModel::tabular(static_cast<int>(data.train.size()), static_cast<int>(data.grid.size()),
                                    cfg.sim.scene.categories, cfg.sim.model, model_seed);
  }
  return PredictionModel::mlp(data.grid.num_levels(), cfg.sim.scene.categories, cfg.sim.model, model_seed);
}

AssignmentResult assign_scene(const ExperimentConfig& cfg, const AnchorGrid& grid,
                              std::span<const Prediction> preds, std::span<const Instance> instances,
                              double temperature) {
  const auto& a = cfg.assign;
  switch (a.mode) {
    case AssignMode::kO2f: {
      O2fParams p;
      p.match = a.match;
      p.k = a.k;
      p.temperature = temperature;
      p.normalize_by_max = cfg.schedule.mode == ScheduleMode::kLinear;
      return assign_o2f(grid.anchors, preds, instances, p);
    }
    case AssignMode::kO2o:
      return assign_o2o_top1(grid.anchors, preds, instances, a.match);
    case AssignMode::kHungarian:
      return assign_o2o_hungarian(grid.anchors, preds, instances, a.match);
    case AssignMode::kO2m:
      return assign_o2m_topk(grid.anchors, preds, instances, a.topk, a.match);
  }
  throw std::logic_error("assign_scene: unhandled mode");
}

std::vector<Detection> scene_detections(std::span<const Prediction> preds, int image) {
  std::vector<Detection> out;
  for (const auto& p : preds) {
    for (int c = 0; c < p.num_categories(); ++c) {
      out.push_back({p.box, p.joint_score[static_cast<std::size_t>(c)], c, image, p.anchor_id});
    }
  }
  return out;
}

EvalSnapshot evaluate_model(const PredictionModel& model, const AnchorGrid& grid,
                            const std::vector<Scene>& scenes, const EvalConfig& eval) {
  std::vector<std::vector<Detection>> per_scene(scenes.size());
  std::vector<std::string> errors(scenes.size());
  const auto n = static_cast<std::ptrdiff_t>(scenes.size());
#pragma omp parallel for schedule(static) num_threads(thread_budget())
  for (std::ptrdiff_t s = 0; s < n; ++s) {
    const auto idx = static_cast<std::size_t>(s);
    try {
      const ForwardPass pass = model.forward(grid, scenes[idx], static_cast<int>(s));
      per_scene[idx] = filter_detections(scene_detections(pass.predictions, static_cast<int>(s)),
                                         eval.score_threshold, eval.max_dets);
    } catch (const std::exception& e) {
      errors[idx] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw std::domain_error(e);
  }
  std::vector<Detection> dets;
  std::vector<GroundTruth> gts;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    dets.insert(dets.end(), per_scene[s].begin(), per_scene[s].end());
    const auto g = scene_ground_truth(scenes[s], static_cast<int>(s));
    gts.insert(gts.end(), g.begin(), g.end());
  }
  const std::vector<Detection> kept = nms(dets, eval.nms_threshold);

  EvalParams params;
  params.max_dets = eval.max_dets;
  EvalSnapshot snap;
  snap.ap_nonms = coco_map(dets, gts, params).mean_ap;
  snap.ap_nms = coco_map(kept, gts, params).mean_ap;
  snap.dup_per_gt = duplicates_per_gt(dets, gts, eval.dup_threshold);
  if (model.categories() == 1 && !gts.empty()) {
    MmrParams mp;
    mp.num_images = static_cast<int>(scenes.size());
    snap.mmr_nonms = mmr(dets, gts, mp);
    snap.mmr_nms = mmr(kept, gts, mp);
  }
  return snap;
}

RunRecord train_run(const ExperimentConfig& cfg, const TrainData& data, PredictionModel& model) {
  cfg.validate();
  if (data.train.empty()) throw std::invalid_argument("train_run: no training scenes");
  RunRecord record;
  record.config = cfg;
  record.parameter_count = model.parameter_count();

  const auto& optim = cfg.sim.optim;
  const std::size_t n_scenes = data.train.size();
  const auto batch = static_cast<std::size_t>(optim.batch_size);
  std::vector<double> velocity(model.parameter_count(), 0.0);
  std::vector<double> grad(model.parameter_count(), 0.0);
  std::vector<SceneStep> steps(std::min(batch, n_scenes));

  auto diverge = [&](const std::string& why) {
    record.truncated = true;
    record.diagnostic = why;
    throw DivergenceError(why, record);
  };

  for (int epoch = 0; epoch < cfg.schedule.n_epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const double temperature = epoch_temperature(cfg.schedule, epoch);
    double sum_total = 0.0, sum_cls = 0.0, sum_reg = 0.0;
    std::size_t visits = 0;

    for (int pass = 0; pass < optim.passes; ++pass) {
      std::vector<std::size_t> order(n_scenes);
      std::iota(order.begin(), order.end(), std::size_t{0});
      Rng shuffle(splitmix64(cfg.seed ^ (static_cast<std::uint64_t>(epoch) << 20) ^ static_cast<std::uint64_t>(pass)));
      for (std::size_t k = n_scenes; k > 1; --k) {
        std::swap(order[k - 1], order[static_cast<std::size_t>(shuffle.integer(0, static_cast<int>(k) - 1))]);
      }

      for (std::size_t start = 0; start < n_scenes; start += batch) {
        const std::size_t count = std::min(batch, n_scenes - start);
        const auto n = static_cast<std::ptrdiff_t>(count);
#pragma omp parallel for schedule(static) num_threads(thread_budget())
        for (std::ptrdiff_t b = 0; b < n; ++b) {
          const std::size_t s = order[start + static_cast<std::size_t>(b)];
          SceneStep& step = steps[static_cast<std::size_t>(b)];
          step.grad.assign(model.parameter_count(), 0.0);
          step.error.clear();
          const Scene& scene = data.train[s];
          try {
            const ForwardPass fp = model.forward(data.grid, scene, static_cast<int>(s));
            const AssignmentResult assignment =
                assign_scene(cfg, data.grid, fp.predictions, scene.instances, temperature);
            const LossBreakdown loss = total_loss(assignment, fp.predictions, scene.instances, cfg.loss);
            model.backward(data.grid, fp, loss.grad, step.grad);
            step.total = loss.total;
            step.cls = loss.cls();
            step.reg = loss.reg;
            step.degenerate = assignment.degenerate_events;
          } catch (const std::exception& e) {
            step.error = e.what();
          }
        }

        std::fill(grad.begin(), grad.end(), 0.0);
        for (std::size_t b = 0; b < count; ++b) {
          const SceneStep& step = steps[b];
          if (!step.error.empty()) {
            diverge(step.error + " at epoch " + std::to_string(epoch));
          }
          if (!std::isfinite(step.total)) {
            diverge("non-finite loss at epoch " + std::to_string(epoch));
          }
          for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += step.grad[k];
          sum_total += step.total;
          sum_cls += step.cls;
          sum_reg += step.reg;
          record.degenerate_events += step.degenerate;
          ++visits;
        }
        const double inv = 1.0 / static_cast<double>(count);
        for (double& g : grad) g *= inv;
        try {
          optimizer_step(model.params(), grad, velocity, optim);
        } catch (const std::domain_error& e) {
          diverge(std::string(e.what()) + " at epoch " + std::to_string(epoch));
        }
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.temperature = temperature;
    rec.loss_total = sum_total / static_cast<double>(visits);
    rec.loss_cls = sum_cls / static_cast<double>(visits);
    rec.loss_reg = sum_reg / static_cast<double>(visits);
    try {
      const EvalSnapshot snap = evaluate_model(model, data.grid, data.eval, cfg.eval);
      rec.ap_nms = snap.ap_nms;
      rec.ap_nonms = snap.ap_nonms;
      rec.dup_per_gt = snap.dup_per_gt;
      rec.mmr_nms = snap.mmr_nms;
      rec.mmr_nonms = snap.mmr_nonms;
    } catch (const std::domain_error& e) {
      diverge(std::string(e.what()) + " during evaluation at epoch " + std::to_string(epoch));
    }
    if (cfg.output.wall_time) {
      rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    }
    record.epochs.push_back(rec);
  }
  return record;
}

RunRecord run_experiment(const ExperimentConfig& cfg) {
  const TrainData data = make_train_data(cfg);
  PredictionModel model = make_model(cfg, data);
  return train_run(cfg, data, model);
}

}  // namespace o2f
