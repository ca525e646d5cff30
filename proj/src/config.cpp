#include "o2f/config.hpp"

#include <charconv>
#include <cstdlib>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <json.hpp>

namespace o2f {

std::string to_string(AssignMode mode) {
  switch (mode) {
    case AssignMode::kO2f:
      return "o2f";
    case AssignMode::kO2o:
      return "o2o";
    case AssignMode::kHungarian:
      return "hungarian";
    case AssignMode::kO2m:
      return "o2m";
  }
  return "unknown";
}

AssignMode parse_assign_mode(const std::string& name) {
  if (name == "o2f") return AssignMode::kO2f;
  if (name == "o2o" || name == "top1") return AssignMode::kO2o;
  if (name == "hungarian") return AssignMode::kHungarian;
  if (name == "o2m" || name == "topk") return AssignMode::kO2m;
  throw std::invalid_argument("unknown assignment mode '" + name + "'");
}

void ExperimentConfig::validate() const {
  auto section = [](const char* name, auto&& check) {
    try {
      check();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string(name) + ": " + e.what());
    }
  };
  section("assign", [&] {
    assign.match.validate();
    if (assign.k < 0) throw std::invalid_argument("k must be >= 0");
    if (assign.topk < 1) throw std::invalid_argument("topk must be >= 1");
  });
  section("schedule", [&] { schedule.validate(); });
  section("loss", [&] { loss.validate(); });
  section("sim", [&] {
    sim.scene.validate();
    sim.model.validate();
    sim.optim.validate();
    if (sim.strides.empty()) throw std::invalid_argument("strides must not be empty");
    for (std::size_t l = 0; l < sim.strides.size(); ++l) {
      if (!(sim.strides[l] > 0.0) || (l > 0 && !(sim.strides[l] > sim.strides[l - 1]))) {
        throw std::invalid_argument("strides must be positive and strictly increasing");
      }
    }
    if (sim.train_scenes < 1) throw std::invalid_argument("train_scenes must be >= 1");
    if (sim.eval_scenes < 1) throw std::invalid_argument("eval_scenes must be >= 1");
  });
  section("eval", [&] {
    if (!(eval.nms_threshold > 0.0 && eval.nms_threshold <= 1.0)) throw std::invalid_argument("nms_threshold must be in (0, 1]");
    if (!(eval.score_threshold >= 0.0 && eval.score_threshold < 1.0)) throw std::invalid_argument("score_threshold must be in [0, 1)");
    if (eval.max_dets < 1) throw std::invalid_argument("max_dets must be >= 1");
    if (!(eval.dup_threshold >= 0.0 && eval.dup_threshold < 1.0)) throw std::invalid_argument("dup_threshold must be in [0, 1)");
  });
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

long long to_integer(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return out;
}

int to_int(const std::string& key, const std::string& v) { return static_cast<int>(to_integer(key, v)); }

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  // Prefer the shortest representation that round-trips.
  for (int prec = 1; prec <= 17; ++prec) {
    char shorter[32];
    std::snprintf(shorter, sizeof shorter, "%.*g", prec, v);
    if (std::strtod(shorter, nullptr) == v) return shorter;
  }
  return buf;
}

template <typename Enum, typename Parse>
Enum parse_enum(const std::string& key, const std::string& v, Parse parse) {
  try {
    return parse(v);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

struct Field {
  std::string key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define O2F_DOUBLE(KEY, MEMBER)                                                                         \
  Field {                                                                                               \
    KEY, [](ExperimentConfig& c, const std::string& v) { c.MEMBER = to_double(KEY, v); },              \
        [](const ExperimentConfig& c) { return fmt_double(c.MEMBER); }                                  \
  }
#define O2F_INT(KEY, MEMBER)                                                                            \
  Field {                                                                                               \
    KEY, [](ExperimentConfig& c, const std::string& v) { c.MEMBER = to_int(KEY, v); },                 \
        [](const ExperimentConfig& c) { return std::to_string(c.MEMBER); }                              \
  }
#define O2F_BOOL(KEY, MEMBER)                                                                           \
  Field {                                                                                               \
    KEY, [](ExperimentConfig& c, const std::string& v) { c.MEMBER = to_bool(KEY, v); },                \
        [](const ExperimentConfig& c) { return std::string(c.MEMBER ? "true" : "false"); }              \
  }
#define O2F_ENUM(KEY, MEMBER, PARSE)                                                                    \
  Field {                                                                                               \
    KEY,                                                                                                \
        [](ExperimentConfig& c, const std::string& v) {                                                 \
          c.MEMBER = parse_enum<decltype(c.MEMBER)>(KEY, v, [](const std::string& s) { return PARSE(s); }); \
        },                                                                                              \
        [](const ExperimentConfig& c) { return to_string(c.MEMBER); }                                   \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"seed",
            [](ExperimentConfig& c, const std::string& v) {
              const long long s = to_integer("seed", v);
              if (s < 0) throw ConfigError("seed: must be non-negative");
              c.seed = static_cast<std::uint64_t>(s);
            },
            [](const ExperimentConfig& c) { return std::to_string(c.seed); }},
      O2F_ENUM("assign.mode", assign.mode, parse_assign_mode),
      O2F_INT("assign.k", assign.k),
      O2F_INT("assign.topk", assign.topk),
      O2F_DOUBLE("assign.alpha", assign.match.alpha),
      O2F_ENUM("assign.combine", assign.match.combine, parse_combine),
      O2F_DOUBLE("assign.center_radius", assign.match.center_radius),
      O2F_ENUM("assign.score", assign.match.score, parse_score_source),
      O2F_DOUBLE("schedule.t_max", schedule.t_max),
      O2F_DOUBLE("schedule.t_min", schedule.t_min),
      O2F_INT("schedule.epochs", schedule.n_epochs),
      O2F_ENUM("schedule.mode", schedule.mode, parse_schedule_mode),
      Field{"schedule.switch_epoch",
            [](ExperimentConfig& c, const std::string& v) {
              if (v == "auto" || v.empty()) {
                c.schedule.switch_epoch.reset();
              } else {
                c.schedule.switch_epoch = to_int("schedule.switch_epoch", v);
              }
            },
            [](const ExperimentConfig& c) { return std::to_string(c.schedule.resolved_switch_epoch()); }},
      O2F_DOUBLE("loss.focal_gamma", loss.focal_gamma),
      O2F_DOUBLE("loss.focal_alpha", loss.focal_alpha),
      O2F_DOUBLE("loss.reg_weight", loss.reg_weight),
      O2F_DOUBLE("loss.eps", loss.eps),
      O2F_BOOL("loss.normalize", loss.normalize),
      O2F_ENUM("sim.regime", sim.scene.regime, parse_regime),
      O2F_INT("sim.width", sim.scene.width),
      O2F_INT("sim.height", sim.scene.height),
      O2F_INT("sim.min_instances", sim.scene.min_instances),
      O2F_INT("sim.max_instances", sim.scene.max_instances),
      O2F_DOUBLE("sim.min_size", sim.scene.min_size),
      O2F_DOUBLE("sim.max_size", sim.scene.max_size),
      O2F_INT("sim.categories", sim.scene.categories),
      O2F_DOUBLE("sim.sparse_max_iou", sim.scene.sparse_max_iou),
      O2F_DOUBLE("sim.crowded_fraction", sim.scene.crowded_fraction),
      O2F_DOUBLE("sim.crowded_iou", sim.scene.crowded_iou),
      O2F_DOUBLE("sim.crowded_max_iou", sim.scene.crowded_max_iou),
      Field{"sim.strides",
            [](ExperimentConfig& c, const std::string& v) {
              c.sim.strides.clear();
              for (const auto& s : split_list(v)) c.sim.strides.push_back(to_double("sim.strides", s));
            },
            [](const ExperimentConfig& c) {
              std::string out;
              for (std::size_t k = 0; k < c.sim.strides.size(); ++k) {
                if (k) out += ",";
                out += fmt_double(c.sim.strides[k]);
              }
              return out;
            }},
      O2F_INT("sim.train_scenes", sim.train_scenes),
      O2F_INT("sim.eval_scenes", sim.eval_scenes),
      O2F_ENUM("model.mode", sim.model.mode, parse_model_mode),
      O2F_INT("model.hidden", sim.model.hidden),
      O2F_DOUBLE("model.cls_prior", sim.model.cls_prior),
      O2F_DOUBLE("model.init_scale", sim.model.init_scale),
      O2F_DOUBLE("model.class_ambiguity", sim.model.class_ambiguity),
      O2F_DOUBLE("optim.lr", sim.optim.lr),
      O2F_DOUBLE("optim.momentum", sim.optim.momentum),
      O2F_INT("optim.batch_size", sim.optim.batch_size),
      O2F_INT("optim.passes", sim.optim.passes),
      O2F_DOUBLE("optim.grad_clip", sim.optim.grad_clip),
      O2F_DOUBLE("eval.nms_threshold", eval.nms_threshold),
      O2F_DOUBLE("eval.score_threshold", eval.score_threshold),
      O2F_INT("eval.max_dets", eval.max_dets),
      O2F_DOUBLE("eval.dup_threshold", eval.dup_threshold),
      O2F_BOOL("output.wall_time", output.wall_time),
  };
  return table;
}

#undef O2F_DOUBLE
#undef O2F_INT
#undef O2F_BOOL
#undef O2F_ENUM

const Field* find_field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.key == key) return &f;
  }
  return nullptr;
}

void flatten(const nlohmann::json& node, const std::string& prefix, FlatConfig& out) {
  if (node.is_object()) {
    for (const auto& [k, v] : node.items()) flatten(v, prefix.empty() ? k : prefix + "." + k, out);
    return;
  }
  if (prefix.empty()) throw ConfigError("config: JSON root must be an object");
  if (node.is_array()) {
    std::string joined;
    for (std::size_t k = 0; k < node.size(); ++k) {
      if (k) joined += ",";
      const auto& item = node[k];
      joined += item.is_string() ? item.get<std::string>() : item.dump();
    }
    out.emplace_back(prefix, joined);
  } else if (node.is_string()) {
    out.emplace_back(prefix, node.get<std::string>());
  } else if (node.is_null()) {
    throw ConfigError(prefix + ": null is not a valid setting");
  } else {
    out.emplace_back(prefix, node.dump());
  }
}

}  // namespace

FlatConfig parse_flat_text(const std::string& text) {
  FlatConfig out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    out.emplace_back(key, trim(line.substr(eq + 1)));
  }
  return out;
}

FlatConfig parse_json_config(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config: JSON root must be an object");
  FlatConfig out;
  flatten(doc, "", out);
  return out;
}

FlatConfig parse_config_text(const std::string& text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') return parse_json_config(text);
  return parse_flat_text(text);
}

void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  const Field* f = find_field(key);
  if (!f) throw ConfigError("unknown config key '" + key + "'");
  f->set(cfg, value);
}

ExperimentConfig config_from_flat(const FlatConfig& flat) {
  ExperimentConfig cfg;
  for (const auto& [key, value] : flat) {
    if (key.rfind("sweep.", 0) == 0) continue;
    apply_setting(cfg, key, value);
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return config_from_flat(parse_config_text(buf.str()));
}

FlatConfig to_flat(const ExperimentConfig& cfg) {
  FlatConfig out;
  for (const auto& f : fields()) out.emplace_back(f.key, f.get(cfg));
  return out;
}

std::string to_flat_text(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : to_flat(cfg)) out += k + " = " + v + "\n";
  return out;
}

namespace {

std::string sweep_tag(const std::string& key) {
  static const std::map<std::string, std::string> tags = {
      {"assign.k", "K"},         {"assign.topk", "topk"},     {"assign.alpha", "alpha"},
      {"assign.mode", ""},       {"schedule.t_max", "Tmax"},  {"schedule.t_min", "Tmin"},
      {"schedule.mode", ""},     {"seed", "seed"},            {"sim.regime", ""},
  };
  if (const auto it = tags.find(key); it != tags.end()) return it->second;
  const auto dot = key.rfind('.');
  return dot == std::string::npos ? key : key.substr(dot + 1);
}

}  // namespace

std::vector<SweepRun> expand_sweep(const FlatConfig& flat) {
  FlatConfig base;
  std::vector<std::pair<std::string, std::vector<std::string>>> axes;
  for (const auto& [key, value] : flat) {
    if (key.rfind("sweep.", 0) == 0) {
      const std::string target = key.substr(6);
      if (!find_field(target)) throw ConfigError("sweep over unknown key '" + target + "'");
      auto values = split_list(value);
      if (values.empty()) throw ConfigError("sweep." + target + ": empty value list");
      axes.emplace_back(target, std::move(values));
    } else {
      base.emplace_back(key, value);
    }
  }
  std::vector<SweepRun> runs{{"", base}};
  for (const auto& [key, values] : axes) {
    std::vector<SweepRun> next;
    for (const auto& run : runs) {
      for (const auto& v : values) {
        SweepRun r = run;
        r.name += (r.name.empty() ? "" : "_") + sweep_tag(key) + v;
        r.settings.emplace_back(key, v);
        next.push_back(std::move(r));
      }
    }
    runs = std::move(next);
  }
  if (axes.empty()) runs.front().name = "run";
  return runs;
}

}  // namespace o2f
