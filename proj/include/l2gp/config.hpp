#ifndef L2GP_CONFIG_HPP_
#define L2GP_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "l2gp/adapt.hpp"
#include "l2gp/data.hpp"
#include "l2gp/error.hpp"
#include "l2gp/model.hpp"
#include "l2gp/trainer.hpp"

namespace l2gp {

using Json = nlohmann::ordered_json;

struct EvalConfig {
  std::vector<EvalMode> modes{EvalMode::kSourceStats, EvalMode::kTtbn};
  std::vector<int> heads{1, 2};
  std::size_t batch_size = 64;
  std::size_t warmup_batches = 0;
  double momentum = 0.1;
};

struct SweepGrid {
  std::vector<double> lr_plus{1e-3, 1e-2, 0.1, 1.0, 10.0, 100.0};
  std::vector<double> alpha{1e-3, 1e-2, 0.1, 1.0, 10.0, 100.0};
};

/// Everything a run needs; a file of this round-trips through to_json.
struct ExperimentConfig {
  std::vector<Variant> variants{Variant::kL2gp};
  TrainConfig train;
  std::vector<std::size_t> hidden{64, 64};
  bool input_bn = true;
  ShortcutSpec data;
  ShiftSpec shift;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  EvalConfig eval;
  SweepGrid sweep;

  ModelSpec model_spec(std::uint64_t seed) const {
    ModelSpec m;
    m.input_dim = data.dim();
    m.hidden = hidden;
    m.n_classes = data.n_classes;
    m.input_bn = input_bn;
    m.seed = seed;
    return m;
  }

  /// Training settings of one job.
  TrainConfig train_config(Variant v, std::uint64_t seed) const {
    TrainConfig t = train;
    t.variant = v;
    t.seed = seed;
    return t;
  }

  void validate() const {
    if (variants.empty()) throw ConfigError("variants: at least one variant is required");
    std::set<Variant> uniq_v(variants.begin(), variants.end());
    if (uniq_v.size() != variants.size()) throw ConfigError("variants: duplicate variant");
    if (seeds.empty()) throw ConfigError("seeds: at least one seed is required");
    std::set<std::uint64_t> uniq(seeds.begin(), seeds.end());
    if (uniq.size() != seeds.size()) throw ConfigError("seeds: duplicate seed");
    train.validate();
    model_spec(0).validate();
    data.validate();
    shift.validate(data.dim());
    if (eval.modes.empty()) throw ConfigError("eval.modes: at least one mode is required");
    if (eval.heads.empty()) throw ConfigError("eval.heads: at least one head is required");
    for (int h : eval.heads) {
      if (h != 1 && h != 2) throw ConfigError("eval.heads: heads are 1 or 2");
    }
    if (eval.batch_size < 2) throw ConfigError("eval.batch_size must be at least 2");
    if (!(eval.momentum > 0.0 && eval.momentum <= 1.0)) throw ConfigError("eval.momentum must be in (0, 1]");
    if (sweep.lr_plus.empty() || sweep.alpha.empty()) throw ConfigError("sweep: grid axes must be non-empty");
    for (double v : sweep.lr_plus) {
      if (!(v >= 0.0)) throw ConfigError("sweep.lr_plus entries must be >= 0");
    }
    for (double v : sweep.alpha) {
      if (!(v >= 0.0)) throw ConfigError("sweep.alpha entries must be >= 0");
    }
  }
};

namespace detail {

/// Typed field reader that reports the dotted path of whatever is wrong.
class Reader {
 public:
  Reader(const Json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(where() + "expected an object");
  }

  /// Throws on keys that were never read.
  void finish() const {
    for (const auto& [key, _] : obj_.items()) {
      if (!seen_.count(key)) throw ConfigError(field(key) + ": unknown field");
    }
  }

  const Json* get(const std::string& key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  void real(const std::string& key, double& out) {
    if (const Json* j = get(key)) {
      if (!j->is_number()) throw ConfigError(field(key) + ": expected a number");
      out = j->get<double>();
    }
  }

  void boolean(const std::string& key, bool& out) {
    if (const Json* j = get(key)) {
      if (!j->is_boolean()) throw ConfigError(field(key) + ": expected true or false");
      out = j->get<bool>();
    }
  }

  template <typename Int>
  void integer(const std::string& key, Int& out) {
    if (const Json* j = get(key)) out = as_int<Int>(*j, field(key));
  }

  void reals(const std::string& key, std::vector<double>& out) {
    if (const Json* j = get(key)) {
      if (!j->is_array()) throw ConfigError(field(key) + ": expected an array of numbers");
      out.clear();
      for (const auto& v : *j) {
        if (!v.is_number()) throw ConfigError(field(key) + ": expected an array of numbers");
        out.push_back(v.get<double>());
      }
    }
  }

  template <typename Int>
  void integers(const std::string& key, std::vector<Int>& out) {
    if (const Json* j = get(key)) {
      if (!j->is_array()) throw ConfigError(field(key) + ": expected an array of integers");
      out.clear();
      for (const auto& v : *j) out.push_back(as_int<Int>(v, field(key)));
    }
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  template <typename Int>
  static Int as_int(const Json& j, const std::string& name) {
    if constexpr (std::is_unsigned_v<Int>) {
      if (!j.is_number_unsigned()) throw ConfigError(name + ": expected a non-negative integer");
      return static_cast<Int>(j.get<std::uint64_t>());
    } else {
      if (!j.is_number_integer()) throw ConfigError(name + ": expected an integer");
      return static_cast<Int>(j.get<std::int64_t>());
    }
  }

  std::string where() const { return path_.empty() ? "config: " : path_ + ": "; }

  const Json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

inline EvalMode parse_eval_mode(const std::string& s) {
  if (s == "source-stats") return EvalMode::kSourceStats;
  if (s == "ttbn") return EvalMode::kTtbn;
  throw ConfigError("eval.modes: unknown mode '" + s + "' (expected source-stats or ttbn)");
}

}  // namespace detail

inline ExperimentConfig config_from_json(const Json& root) {
  ExperimentConfig c;
  detail::Reader r(root, "");
  if (const Json* v = r.get("variants")) {
    if (!v->is_array()) throw ConfigError("variants: expected an array of names");
    c.variants.clear();
    for (const auto& name : *v) {
      if (!name.is_string()) throw ConfigError("variants: expected an array of names");
      try {
        c.variants.push_back(parse_variant(name.get<std::string>()));
      } catch (const Error& e) {
        throw ConfigError(std::string("variants: ") + e.what());
      }
    }
  }
  r.integers("seeds", c.seeds);
  if (const Json* t = r.get("train")) {
    detail::Reader tr(*t, "train");
    tr.real("alpha", c.train.alpha);
    tr.real("lr_plus", c.train.lr_plus);
    tr.boolean("extend_graph", c.train.extend_graph);
    tr.real("lr", c.train.lr);
    tr.integer("batch_size", c.train.batch_size);
    tr.integer("epochs", c.train.epochs);
    tr.integer("lr_drop_epoch", c.train.lr_drop_epoch);
    tr.real("weight_decay", c.train.weight_decay);
    tr.real("momentum", c.train.momentum);
    tr.finish();
  }
  if (const Json* m = r.get("model")) {
    detail::Reader mr(*m, "model");
    mr.integers("hidden", c.hidden);
    mr.boolean("input_bn", c.input_bn);
    mr.finish();
  }
  if (const Json* d = r.get("data")) {
    detail::Reader dr(*d, "data");
    dr.integer("n_classes", c.data.n_classes);
    dr.integer("d_core", c.data.d_core);
    dr.integer("d_shortcut", c.data.d_shortcut);
    dr.real("shortcut_margin", c.data.shortcut_margin);
    dr.real("core_noise", c.data.core_noise);
    dr.integer("n_train", c.data.n_train);
    dr.integer("n_val", c.data.n_val);
    dr.integer("n_test", c.data.n_test);
    dr.integer("seed", c.data.seed);
    dr.finish();
  }
  if (const Json* s = r.get("shift")) {
    detail::Reader sr(*s, "shift");
    sr.real("correlation", c.shift.correlation);
    std::vector<double> tmp;
    if (sr.get("scale") && !(*s)["scale"].is_null()) {
      sr.reals("scale", tmp);
      c.shift.scale = tmp;
    }
    if (sr.get("offset") && !(*s)["offset"].is_null()) {
      sr.reals("offset", tmp);
      c.shift.offset = tmp;
    }
    sr.integer("seed", c.shift.seed);
    sr.finish();
  }
  if (const Json* e = r.get("eval")) {
    detail::Reader er(*e, "eval");
    if (const Json* modes = er.get("modes")) {
      if (!modes->is_array()) throw ConfigError("eval.modes: expected an array of names");
      c.eval.modes.clear();
      for (const auto& m : *modes) {
        if (!m.is_string()) throw ConfigError("eval.modes: expected an array of names");
        c.eval.modes.push_back(detail::parse_eval_mode(m.get<std::string>()));
      }
    }
    er.integers("heads", c.eval.heads);
    er.integer("batch_size", c.eval.batch_size);
    er.integer("warmup_batches", c.eval.warmup_batches);
    er.real("momentum", c.eval.momentum);
    er.finish();
  }
  if (const Json* g = r.get("sweep")) {
    detail::Reader gr(*g, "sweep");
    gr.reals("lr_plus", c.sweep.lr_plus);
    gr.reals("alpha", c.sweep.alpha);
    gr.finish();
  }
  r.finish();
  c.validate();
  return c;
}

/// Canonical form: every field present, fixed key order.
inline Json config_to_json(const ExperimentConfig& c) {
  Json j;
  j["variants"] = Json::array();
  for (Variant v : c.variants) j["variants"].push_back(to_string(v));
  j["seeds"] = c.seeds;
  j["train"] = {{"alpha", c.train.alpha},
                {"lr_plus", c.train.lr_plus},
                {"extend_graph", c.train.extend_graph},
                {"lr", c.train.lr},
                {"batch_size", c.train.batch_size},
                {"epochs", c.train.epochs},
                {"lr_drop_epoch", c.train.lr_drop_epoch},
                {"weight_decay", c.train.weight_decay},
                {"momentum", c.train.momentum}};
  j["model"] = {{"hidden", c.hidden}, {"input_bn", c.input_bn}};
  j["data"] = {{"n_classes", c.data.n_classes},
               {"d_core", c.data.d_core},
               {"d_shortcut", c.data.d_shortcut},
               {"shortcut_margin", c.data.shortcut_margin},
               {"core_noise", c.data.core_noise},
               {"n_train", c.data.n_train},
               {"n_val", c.data.n_val},
               {"n_test", c.data.n_test},
               {"seed", c.data.seed}};
  j["shift"] = {{"correlation", c.shift.correlation},
                {"scale", c.shift.scale ? Json(*c.shift.scale) : Json(nullptr)},
                {"offset", c.shift.offset ? Json(*c.shift.offset) : Json(nullptr)},
                {"seed", c.shift.seed}};
  Json modes = Json::array();
  for (EvalMode m : c.eval.modes) modes.push_back(to_string(m));
  j["eval"] = {{"modes", modes},
               {"heads", c.eval.heads},
               {"batch_size", c.eval.batch_size},
               {"warmup_batches", c.eval.warmup_batches},
               {"momentum", c.eval.momentum}};
  j["sweep"] = {{"lr_plus", c.sweep.lr_plus}, {"alpha", c.sweep.alpha}};
  return j;
}

inline ExperimentConfig parse_config(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return parse_config(os.str());
}

/// Names a run: hash of the canonical serialization.
inline std::string config_hash(const ExperimentConfig& c) {
  return detail::hex64(detail::fnv1a(config_to_json(c).dump()));
}

}  // namespace l2gp

#endif  // L2GP_CONFIG_HPP_
