// o2f: train / eval / assign / gradcheck / sweep.
//
// Exit codes: 0 ok, 1 failure (gradcheck mismatch, I/O), 2 config or schema
// error, 3 training diverged.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "o2f/config.hpp"
#include "o2f/gradcheck.hpp"
#include "o2f/io.hpp"
#include "o2f/parallel.hpp"
#include "o2f/postprocess.hpp"
#include "o2f/train.hpp"

namespace fs = std::filesystem;
using namespace o2f;

namespace {

constexpr int kExitFail = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;

struct TrainOpts {
  std::string config;
  std::string out = "o2f_run";
  std::optional<std::uint64_t> seed;
  std::string mode;
};

ExperimentConfig resolve_config(const FlatConfig& flat, const TrainOpts& opts) {
  ExperimentConfig cfg = config_from_flat(flat);
  if (opts.seed) cfg.seed = *opts.seed;
  if (!opts.mode.empty()) apply_setting(cfg, "assign.mode", opts.mode);
  cfg.validate();
  return cfg;
}

FlatConfig read_flat(const std::string& path) {
  if (path.empty()) return {};
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

void write_run(const fs::path& dir, const RunRecord& record) {
  fs::create_directories(dir);
  write_text_file((dir / "runrecord.json").string(), run_record_to_json(record).dump(2) + "\n");
  write_text_file((dir / "metrics.csv").string(), metrics_csv(record));
}

// Trains one configuration into `dir`; returns the exit code.
int train_into(const ExperimentConfig& cfg, const fs::path& dir, const std::string& label) {
  try {
    const RunRecord record = run_experiment(cfg);
    write_run(dir, record);
    const auto& last = record.epochs.back();
    std::printf("%s: %zu epochs, final ap_nms %.4f ap_nonms %.4f dup_per_gt %.3f -> %s\n", label.c_str(),
                record.epochs.size(), last.ap_nms, last.ap_nonms, last.dup_per_gt, dir.string().c_str());
    return 0;
  } catch (const DivergenceError& e) {
    write_run(dir, e.record());
    std::fprintf(stderr, "%s: diverged: %s (partial outputs marked truncated)\n", label.c_str(), e.what());
    return kExitDiverged;
  }
}

int cmd_train(const TrainOpts& opts) {
  ExperimentConfig cfg;
  try {
    FlatConfig flat = read_flat(opts.config);
    for (const auto& [key, value] : flat) {
      if (key.rfind("sweep.", 0) == 0) throw ConfigError("'" + key + "' is only valid with the sweep command");
    }
    cfg = resolve_config(flat, opts);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  }
  return train_into(cfg, opts.out, "train");
}

int cmd_sweep(const TrainOpts& opts) {
  std::vector<SweepRun> runs;
  std::vector<ExperimentConfig> configs;
  try {
    runs = expand_sweep(read_flat(opts.config));
    for (const auto& run : runs) configs.push_back(resolve_config(run.settings, opts));
  } catch (const std::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  }
  // Runs are independent and write only to their own directory. Each run's
  // own scene loop is nested and therefore serial inside this region.
  std::vector<int> codes(runs.size(), 0);
  std::vector<std::string> errors(runs.size());
  const auto n = static_cast<std::ptrdiff_t>(runs.size());
#pragma omp parallel for schedule(dynamic) num_threads(thread_budget())
  for (std::ptrdiff_t r = 0; r < n; ++r) {
    const auto k = static_cast<std::size_t>(r);
    try {
      codes[k] = train_into(configs[k], fs::path(opts.out) / runs[k].name, runs[k].name);
    } catch (const std::exception& e) {
      errors[k] = e.what();
      codes[k] = kExitFail;
    }
  }
  int worst = 0;
  for (std::size_t k = 0; k < runs.size(); ++k) {
    if (!errors[k].empty()) std::fprintf(stderr, "%s: %s\n", runs[k].name.c_str(), errors[k].c_str());
    worst = std::max(worst, codes[k]);
  }
  return worst;
}

struct EvalOpts {
  std::string detections;
  std::string gt;
  std::string out = ".";
  std::string metric = "all";
  std::optional<double> nms_threshold;
};

int cmd_eval(const EvalOpts& opts) {
  std::vector<Detection> dets;
  std::vector<GroundTruth> gts;
  try {
    dets = detections_from_json(read_json_file(opts.detections));
    gts = ground_truth_from_json(read_json_file(opts.gt));
  } catch (const SchemaError& e) {
    std::fprintf(stderr, "schema error: %s\n", e.what());
    return kExitConfig;
  }
  if (opts.nms_threshold) dets = nms(dets, *opts.nms_threshold);

  const bool want_ap = opts.metric != "mmr";
  const bool want_mmr = opts.metric != "ap";
  EvalResult result;
  if (want_ap) result = coco_map(dets, gts);
  if (want_mmr) {
    bool single = !gts.empty();
    for (const auto& g : gts) single = single && g.category == gts.front().category;
    for (const auto& d : dets) single = single && d.category == gts.front().category;
    if (single) {
      result.mmr = mmr(dets, gts);
    } else if (opts.metric == "mmr") {
      std::fprintf(stderr, "schema error: mMR needs ground truth of exactly one category\n");
      return kExitConfig;
    }
  }
  const Json doc = eval_result_to_json(result, want_ap, want_mmr);
  fs::create_directories(opts.out);
  const fs::path path = fs::path(opts.out) / "eval.json";
  write_text_file(path.string(), doc.dump(2) + "\n");
  std::cout << doc.dump(2) << "\n";
  return 0;
}

struct AssignOpts {
  std::string predictions;
  std::string gt;
  std::string out;
  std::string mode = "o2f";
  int k = 7;
  int topk = 9;
  double alpha = 0.8;
  std::string combine = "multiply";
  double temperature = 0.6;
};

int cmd_assign(const AssignOpts& opts) {
  PredictionSet set;
  std::vector<Instance> instances;
  ExperimentConfig cfg;
  try {
    set = predictions_from_json(read_json_file(opts.predictions));
    for (const auto& g : ground_truth_from_json(read_json_file(opts.gt))) {
      if (g.category < 0 || g.category >= set.predictions.front().num_categories()) {
        throw SchemaError("gt category " + std::to_string(g.category) + " outside the predicted categories");
      }
      instances.push_back({g.box, g.category});
    }
    apply_setting(cfg, "assign.mode", opts.mode);
    apply_setting(cfg, "assign.k", std::to_string(opts.k));
    apply_setting(cfg, "assign.topk", std::to_string(opts.topk));
    apply_setting(cfg, "assign.combine", opts.combine);
    cfg.assign.match.alpha = opts.alpha;
    cfg.validate();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "schema error: %s\n", e.what());
    return kExitConfig;
  }
  AnchorGrid grid;
  grid.anchors = set.anchors;
  const AssignmentResult r = assign_scene(cfg, grid, set.predictions, instances, opts.temperature);
  Json doc = assignment_to_json(r);
  doc["mode"] = to_string(cfg.assign.mode);
  const std::string text = doc.dump(2) + "\n";
  if (!opts.out.empty()) write_text_file(opts.out, text);
  std::cout << text;
  return 0;
}

struct GradOpts {
  std::uint64_t seed = 1;
  int trials = 1000;
  bool corrupt = false;
};

int cmd_gradcheck(const GradOpts& opts) {
  GradSuiteOptions suite;
  suite.seed = opts.seed;
  suite.trials = opts.trials;
  suite.corrupt = opts.corrupt;
  const GradSuiteResult r = run_gradient_suite(suite);
  constexpr double kTol = 1e-4;
  for (const auto& e : r.entries) {
    std::printf("%-15s points %-5d max_rel_err %.3e max_abs_err %.3e %s\n", e.op.c_str(), e.points,
                e.worst.max_rel_error, e.worst.max_abs_error, e.worst.passed(kTol) ? "ok" : "FAIL");
  }
  std::printf("gradcheck: %d points, max relative error %.3e (tolerance %.0e) -> %s\n", r.total_points(),
              r.max_rel_error(), kTol, r.passed(kTol) ? "PASS" : "FAIL");
  return r.passed(kTol) ? 0 : kExitFail;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"o2f: one-to-few label assignment experiments"};
  app.require_subcommand(1);

  TrainOpts train_opts;
  auto add_train_flags = [&](CLI::App* sub) {
    sub->add_option("--config", train_opts.config, "Config file (key = value lines or JSON)");
    sub->add_option("--out", train_opts.out, "Output directory");
    sub->add_option("--seed", train_opts.seed, "Override the config seed");
    sub->add_option("--mode", train_opts.mode, "Override assign.mode (o2f|o2o|hungarian|o2m)");
  };
  auto* train = app.add_subcommand("train", "Train on synthetic scenes; writes runrecord.json and metrics.csv");
  add_train_flags(train);
  auto* sweep = app.add_subcommand("sweep", "Expand sweep.<key> = a,b,c entries and train every combination");
  add_train_flags(sweep);

  EvalOpts eval_opts;
  auto* eval = app.add_subcommand("eval", "Score a detection dump against ground truth; writes eval.json");
  eval->add_option("--detections", eval_opts.detections, "Detections JSON")->required();
  eval->add_option("--gt", eval_opts.gt, "Ground-truth JSON")->required();
  eval->add_option("--out", eval_opts.out, "Output directory");
  eval->add_option("--metric", eval_opts.metric, "ap, mmr or all")
      ->check(CLI::IsMember({"ap", "mmr", "all"}));
  eval->add_option("--nms-threshold", eval_opts.nms_threshold, "Apply class-aware NMS first")
      ->check(CLI::Range(0.0, 1.0));

  AssignOpts assign_opts;
  auto* assign = app.add_subcommand("assign", "Run one label assignment on a prediction dump");
  assign->add_option("--predictions", assign_opts.predictions, "Predictions JSON")->required();
  assign->add_option("--gt", assign_opts.gt, "Ground-truth JSON")->required();
  assign->add_option("--out", assign_opts.out, "Also write the dump to this file");
  assign->add_option("--mode", assign_opts.mode, "o2f, o2o, hungarian or o2m");
  assign->add_option("--k", assign_opts.k, "Ambiguous anchors per instance (o2f)");
  assign->add_option("--topk", assign_opts.topk, "Positives per instance (o2m)");
  assign->add_option("--alpha", assign_opts.alpha, "Matching-score alpha");
  assign->add_option("--combine", assign_opts.combine, "multiply or add");
  assign->add_option("--temperature", assign_opts.temperature, "Epoch temperature T");

  GradOpts grad_opts;
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every loss gradient");
  grad->add_option("--seed", grad_opts.seed, "RNG seed");
  grad->add_option("--trials", grad_opts.trials, "Random points per op")->check(CLI::PositiveNumber);
  grad->add_flag("--corrupt-gradient", grad_opts.corrupt)->group("");  // test hook

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*train) return cmd_train(train_opts);
    if (*sweep) return cmd_sweep(train_opts);
    if (*eval) return cmd_eval(eval_opts);
    if (*assign) return cmd_assign(assign_opts);
    if (*grad) return cmd_gradcheck(grad_opts);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFail;
  }
  return kExitFail;
}
