#include "o2f/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace o2f {

namespace {

const Json& require(const Json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) throw SchemaError(where + ": expected an object");
  const auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(where + ": missing \"" + key + "\"");
  return *it;
}

double number(const Json& v, const std::string& where) {
  if (!v.is_number()) throw SchemaError(where + ": expected a number");
  return v.get<double>();
}

int integer(const Json& v, const std::string& where) {
  if (!v.is_number_integer()) throw SchemaError(where + ": expected an integer");
  return v.get<int>();
}

Box box_from(const Json& v, const std::string& where) {
  if (!v.is_array() || v.size() != 4) throw SchemaError(where + ": box must be [x1, y1, x2, y2]");
  try {
    return Box(number(v[0], where), number(v[1], where), number(v[2], where), number(v[3], where));
  } catch (const std::invalid_argument& e) {
    throw SchemaError(where + ": " + e.what());
  }
}

Json box_to(const Box& b) { return Json::array({b.x1(), b.y1(), b.x2(), b.y2()}); }

void require_array(const Json& doc, const std::string& what) {
  if (!doc.is_array()) throw SchemaError(what + ": top level must be an array");
}

std::string at(const std::string& what, std::size_t k) { return what + "[" + std::to_string(k) + "]"; }

}  // namespace

std::vector<Detection> detections_from_json(const Json& doc) {
  require_array(doc, "detections");
  std::vector<Detection> out;
  for (std::size_t k = 0; k < doc.size(); ++k) {
    const auto where = at("detections", k);
    const Json& d = doc[k];
    Detection det;
    det.image = integer(require(d, "image_id", where), where + ".image_id");
    det.category = integer(require(d, "category_id", where), where + ".category_id");
    det.box = box_from(require(d, "box", where), where + ".box");
    det.score = number(require(d, "score", where), where + ".score");
    if (!std::isfinite(det.score)) throw SchemaError(where + ".score: must be finite");
    if (d.contains("anchor_id")) det.anchor_id = integer(d["anchor_id"], where + ".anchor_id");
    out.push_back(det);
  }
  return out;
}

Json detections_to_json(const std::vector<Detection>& dets) {
  Json out = Json::array();
  for (const auto& d : dets) {
    out.push_back({{"image_id", d.image},
                   {"category_id", d.category},
                   {"box", box_to(d.box)},
                   {"score", d.score},
                   {"anchor_id", d.anchor_id}});
  }
  return out;
}

std::vector<GroundTruth> ground_truth_from_json(const Json& doc) {
  require_array(doc, "ground truth");
  std::vector<GroundTruth> out;
  for (std::size_t k = 0; k < doc.size(); ++k) {
    const auto where = at("gt", k);
    const Json& g = doc[k];
    GroundTruth gt;
    gt.image = integer(require(g, "image_id", where), where + ".image_id");
    gt.category = integer(require(g, "category_id", where), where + ".category_id");
    gt.box = box_from(require(g, "box", where), where + ".box");
    out.push_back(gt);
  }
  return out;
}

Json ground_truth_to_json(const std::vector<GroundTruth>& gts) {
  Json out = Json::array();
  for (const auto& g : gts) {
    out.push_back({{"image_id", g.image}, {"category_id", g.category}, {"box", box_to(g.box)}});
  }
  return out;
}

PredictionSet predictions_from_json(const Json& doc) {
  require_array(doc, "predictions");
  const std::size_t n = doc.size();
  if (n == 0) throw SchemaError("predictions: empty list");
  PredictionSet set;
  set.anchors.resize(n);
  set.predictions.resize(n);
  std::vector<char> seen(n, 0);
  std::size_t n_cat = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const auto where = at("predictions", k);
    const Json& p = doc[k];
    const int id = integer(require(p, "anchor_id", where), where + ".anchor_id");
    if (id < 0 || static_cast<std::size_t>(id) >= n || seen[static_cast<std::size_t>(id)]) {
      throw SchemaError(where + ".anchor_id: ids must be a permutation of 0..n-1");
    }
    seen[static_cast<std::size_t>(id)] = 1;
    const Json& point = require(p, "point", where);
    if (!point.is_array() || point.size() != 2) throw SchemaError(where + ".point: expected [x, y]");
    Anchor a;
    a.id = id;
    a.point = {number(point[0], where + ".point"), number(point[1], where + ".point")};
    a.stride = number(require(p, "stride", where), where + ".stride");
    if (!(a.stride > 0.0)) throw SchemaError(where + ".stride: must be positive");
    if (p.contains("level")) a.level = integer(p["level"], where + ".level");

    const Json& cls = require(p, "cls", where);
    if (!cls.is_array() || cls.empty()) throw SchemaError(where + ".cls: expected a non-empty array");
    if (n_cat == 0) n_cat = cls.size();
    if (cls.size() != n_cat) throw SchemaError(where + ".cls: inconsistent category count");
    std::vector<double> scores;
    for (const auto& v : cls) {
      const double s = number(v, where + ".cls");
      if (!(s >= 0.0 && s <= 1.0)) throw SchemaError(where + ".cls: scores must be in [0, 1]");
      scores.push_back(s);
    }
    const double ctr = p.contains("ctr") ? number(p["ctr"], where + ".ctr") : 1.0;
    if (!(ctr >= 0.0 && ctr <= 1.0)) throw SchemaError(where + ".ctr: must be in [0, 1]");
    const Box box = box_from(require(p, "box", where), where + ".box");
    set.anchors[static_cast<std::size_t>(id)] = a;
    set.predictions[static_cast<std::size_t>(id)] = Prediction::make(id, std::move(scores), ctr, box);
  }
  return set;
}

Json predictions_to_json(const PredictionSet& set) {
  Json out = Json::array();
  for (std::size_t i = 0; i < set.predictions.size(); ++i) {
    const auto& a = set.anchors[i];
    const auto& p = set.predictions[i];
    out.push_back({{"anchor_id", p.anchor_id},
                   {"point", Json::array({a.point.x, a.point.y})},
                   {"stride", a.stride},
                   {"level", a.level},
                   {"cls", p.cls_score},
                   {"ctr", p.ctr_score},
                   {"box", box_to(p.box)}});
  }
  return out;
}

Json eval_result_to_json(const EvalResult& r, bool include_ap, bool include_mmr) {
  Json out = Json::object();
  if (include_ap) {
    Json per = Json::array();
    for (std::size_t k = 0; k < r.iou_thresholds.size(); ++k) {
      per.push_back({{"iou", r.iou_thresholds[k]}, {"ap", r.ap_per_iou[k]}});
    }
    out["mean_ap"] = r.mean_ap;
    out["ap_per_iou"] = per;
    out["average_recall"] = r.average_recall;
    out["recall50"] = r.recall50;
    Json counts = Json::array();
    for (const auto& c : r.counts) {
      counts.push_back({{"iou", c.iou_threshold}, {"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}});
    }
    out["counts"] = counts;
  }
  if (include_mmr && r.mmr) out["mmr"] = *r.mmr;
  return out;
}

Json assignment_to_json(const AssignmentResult& r) {
  Json instances = Json::array();
  for (std::size_t j = 0; j < r.instances.size(); ++j) {
    const auto& inst = r.instances[j];
    Json amb = Json::array();
    for (const auto& s : inst.ambiguous) amb.push_back({{"anchor_id", s.anchor}, {"t", s.t}});
    instances.push_back(
        {{"instance", j}, {"certain", inst.certain}, {"ambiguous", amb}, {"degenerate", inst.degenerate}});
  }
  std::vector<int> negatives;
  for (std::size_t i = 0; i < r.role.size(); ++i) {
    if (r.role[i] == AnchorRole::kNegative) negatives.push_back(static_cast<int>(i));
  }
  return {{"num_anchors", r.role.size()},
          {"instances", instances},
          {"negative", negatives},
          {"degenerate_events", r.degenerate_events}};
}

AssignmentResult assignment_from_json(const Json& doc) {
  const std::string where = "assignment";
  const int n = integer(require(doc, "num_anchors", where), where + ".num_anchors");
  if (n < 0) throw SchemaError(where + ".num_anchors: must be >= 0");
  AssignmentResult r;
  r.role.assign(static_cast<std::size_t>(n), AnchorRole::kNegative);
  r.owner.assign(static_cast<std::size_t>(n), -1);
  r.target.assign(static_cast<std::size_t>(n), 0.0);
  r.degenerate_events = integer(require(doc, "degenerate_events", where), where + ".degenerate_events");
  auto check_id = [&](int a) {
    if (a < 0 || a >= n) throw SchemaError(where + ": anchor id out of range");
    return static_cast<std::size_t>(a);
  };
  const Json& instances = require(doc, "instances", where);
  if (!instances.is_array()) throw SchemaError(where + ".instances: expected an array");
  for (std::size_t j = 0; j < instances.size(); ++j) {
    const Json& inst = instances[j];
    InstanceAssignment out;
    for (const auto& c : require(inst, "certain", where)) {
      const auto idx = check_id(integer(c, where + ".certain"));
      out.certain.push_back(static_cast<int>(idx));
      r.role[idx] = AnchorRole::kCertain;
      r.owner[idx] = static_cast<int>(j);
      r.target[idx] = 1.0;
    }
    for (const auto& s : require(inst, "ambiguous", where)) {
      const auto idx = check_id(integer(require(s, "anchor_id", where), where + ".ambiguous"));
      const double t = number(require(s, "t", where), where + ".ambiguous.t");
      out.ambiguous.push_back({static_cast<int>(idx), t});
      r.role[idx] = AnchorRole::kAmbiguous;
      r.owner[idx] = static_cast<int>(j);
      r.target[idx] = t;
    }
    out.degenerate = require(inst, "degenerate", where).get<bool>();
    r.instances.push_back(std::move(out));
  }
  return r;
}

namespace {

Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

std::optional<double> optional_from(const Json& obj, const char* key) {
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  return it->get<double>();
}

}  // namespace

Json run_record_to_json(const RunRecord& record) {
  Json config = Json::object();
  for (const auto& [k, v] : to_flat(record.config)) config[k] = v;
  Json epochs = Json::array();
  for (const auto& e : record.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"T_j", e.temperature},
                      {"loss_total", e.loss_total},
                      {"loss_cls", e.loss_cls},
                      {"loss_reg", e.loss_reg},
                      {"ap_nms", e.ap_nms},
                      {"ap_nonms", e.ap_nonms},
                      {"dup_per_gt", e.dup_per_gt},
                      {"mmr_nms", optional_number(e.mmr_nms)},
                      {"mmr_nonms", optional_number(e.mmr_nonms)},
                      {"seconds", e.seconds}});
  }
  return {{"config", config},
          {"seed", record.config.seed},
          {"parameter_count", record.parameter_count},
          {"degenerate_events", record.degenerate_events},
          {"truncated", record.truncated},
          {"diagnostic", record.diagnostic},
          {"epochs", epochs}};
}

RunRecord run_record_from_json(const Json& doc) {
  const std::string where = "runrecord";
  RunRecord r;
  FlatConfig flat;
  for (const auto& [k, v] : require(doc, "config", where).items()) {
    if (!v.is_string()) throw SchemaError(where + ".config." + k + ": expected a string");
    flat.emplace_back(k, v.get<std::string>());
  }
  r.config = config_from_flat(flat);
  r.parameter_count = require(doc, "parameter_count", where).get<std::size_t>();
  r.degenerate_events = integer(require(doc, "degenerate_events", where), where + ".degenerate_events");
  r.truncated = require(doc, "truncated", where).get<bool>();
  r.diagnostic = require(doc, "diagnostic", where).get<std::string>();
  for (const auto& e : require(doc, "epochs", where)) {
    EpochRecord rec;
    rec.epoch = integer(require(e, "epoch", where), where + ".epoch");
    rec.temperature = number(require(e, "T_j", where), where + ".T_j");
    rec.loss_total = number(require(e, "loss_total", where), where + ".loss_total");
    rec.loss_cls = number(require(e, "loss_cls", where), where + ".loss_cls");
    rec.loss_reg = number(require(e, "loss_reg", where), where + ".loss_reg");
    rec.ap_nms = number(require(e, "ap_nms", where), where + ".ap_nms");
    rec.ap_nonms = number(require(e, "ap_nonms", where), where + ".ap_nonms");
    rec.dup_per_gt = number(require(e, "dup_per_gt", where), where + ".dup_per_gt");
    rec.mmr_nms = optional_from(e, "mmr_nms");
    rec.mmr_nonms = optional_from(e, "mmr_nonms");
    rec.seconds = number(require(e, "seconds", where), where + ".seconds");
    r.epochs.push_back(rec);
  }
  return r;
}

std::string metrics_csv(const RunRecord& record) {
  std::string out = "epoch,T_j,loss_total,loss_cls,loss_reg,ap_nms,ap_nonms,dup_per_gt,seconds\n";
  char line[512];
  for (const auto& e : record.epochs) {
    std::snprintf(line, sizeof line, "%d,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.6f\n", e.epoch,
                  e.temperature, e.loss_total, e.loss_cls, e.loss_reg, e.ap_nms, e.ap_nonms, e.dup_per_gt,
                  e.seconds);
    out += line;
  }
  if (record.truncated) out += "# truncated: " + record.diagnostic + "\n";
  return out;
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot read '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError("'" + path + "' is not valid JSON: " + e.what());
  }
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace o2f
