#include "igb/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "igb/data.hpp"
#include "igb/dynamics.hpp"
#include "igb/error.hpp"
#include "igb/hash.hpp"
#include "igb/io.hpp"
#include "igb/metrics.hpp"
#include "igb/network.hpp"
#include "igb/sampling.hpp"
#include "igb/stats.hpp"
#include "igb/theory.hpp"
#include "igb/trainer.hpp"

namespace igb::experiment {

using nlohmann::json;
namespace fs = std::filesystem;

std::string to_string(Kind k) {
  switch (k) {
    case Kind::StaticEnsemble: return "static-ensemble";
    case Kind::GammaScan: return "gamma-scan";
    case Kind::TheoryTable: return "theory-table";
    case Kind::FilteredDynamics: return "filtered-dynamics";
    case Kind::DistributionTest: return "dist-test";
  }
  return "?";
}

Kind parse_kind(const std::string& s) {
  for (Kind k : {Kind::StaticEnsemble, Kind::GammaScan, Kind::TheoryTable, Kind::FilteredDynamics,
                 Kind::DistributionTest}) {
    if (s == to_string(k)) return k;
  }
  throw ConfigError("kind: unknown experiment kind '" + s + "'");
}

namespace {

std::optional<std::uint64_t> env_u64(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  char* end = nullptr;
  const unsigned long long x = std::strtoull(v, &end, 10);
  if (*end != '\0') throw ConfigError(std::string(name) + ": not an unsigned integer");
  return static_cast<std::uint64_t>(x);
}

}  // namespace

void apply_env(Overrides& o) {
  if (!o.out) {
    if (const char* v = std::getenv("IGB_OUT"); v && *v) o.out = fs::path(v);
  }
  if (!o.seed) o.seed = env_u64("IGB_SEED");
  if (!o.runs) {
    if (auto v = env_u64("IGB_RUNS")) o.runs = static_cast<std::size_t>(*v);
  }
  if (!o.threads) {
    if (auto v = env_u64("IGB_THREADS")) o.threads = static_cast<std::size_t>(*v);
  }
}

json load_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(io::read_text(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  } catch (const Error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError(path.string() + ": top level must be an object");
  if (j.contains("manifest_version") && j.contains("config")) return j["config"];
  return j;
}

// ---------------------------------------------------------------------------
// Config reading. Every accessor records the key as known; leftover keys are
// reported as violations. Defaults are written back so the resolved config is
// complete.

namespace {

class Section {
 public:
  Section(json& obj, std::string path, std::vector<std::string>& errors)
      : obj_(obj), path_(std::move(path)), errors_(errors) {
    if (!obj_.is_object()) {
      errors_.push_back(path_ + ": must be an object");
      obj_ = json::object();
    }
  }

  ~Section() = default;

  std::string name(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  bool has(const std::string& key) const { return obj_.contains(key); }

  json& raw(const std::string& key) {
    known_.insert(key);
    return obj_[key];
  }

  std::uint64_t u64(const std::string& key, std::uint64_t def) {
    known_.insert(key);
    if (!obj_.contains(key)) return obj_[key] = def, def;
    const json& v = obj_[key];
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return v.get<std::uint64_t>();
    errors_.push_back(name(key) + ": must be a non-negative integer");
    return obj_[key] = def, def;
  }

  std::size_t count(const std::string& key, std::size_t def, std::size_t min) {
    const std::size_t v = static_cast<std::size_t>(u64(key, def));
    if (v < min) errors_.push_back(name(key) + ": must be >= " + std::to_string(min));
    return v;
  }

  std::size_t count_value(const json& v, const std::string& what, std::size_t min) {
    if (v.is_number_integer() && v.get<std::int64_t>() >= static_cast<std::int64_t>(min)) {
      return v.get<std::size_t>();
    }
    errors_.push_back(what + ": must be an integer >= " + std::to_string(min));
    return min;
  }

  double num(const std::string& key, double def) {
    known_.insert(key);
    if (!obj_.contains(key)) return obj_[key] = def, def;
    const json& v = obj_[key];
    if (v.is_number() && std::isfinite(v.get<double>())) return v.get<double>();
    errors_.push_back(name(key) + ": must be a finite number");
    return obj_[key] = def, def;
  }

  bool flag(const std::string& key, bool def) {
    known_.insert(key);
    if (!obj_.contains(key)) return obj_[key] = def, def;
    if (obj_[key].is_boolean()) return obj_[key].get<bool>();
    errors_.push_back(name(key) + ": must be true or false");
    return obj_[key] = def, def;
  }

  std::string str(const std::string& key, const std::string& def) {
    known_.insert(key);
    if (!obj_.contains(key)) return obj_[key] = def, def;
    if (obj_[key].is_string()) return obj_[key].get<std::string>();
    errors_.push_back(name(key) + ": must be a string");
    return obj_[key] = def, def;
  }

  std::vector<std::size_t> counts(const std::string& key, std::vector<std::size_t> def,
                                  std::size_t min) {
    known_.insert(key);
    if (!obj_.contains(key)) {
      obj_[key] = def;
      return def;
    }
    std::vector<std::size_t> out;
    if (!obj_[key].is_array()) {
      errors_.push_back(name(key) + ": must be an array of integers");
      return def;
    }
    for (std::size_t i = 0; i < obj_[key].size(); ++i) {
      out.push_back(count_value(obj_[key][i], name(key) + "[" + std::to_string(i) + "]", min));
    }
    return out;
  }

  std::vector<double> nums(const std::string& key, std::vector<double> def) {
    known_.insert(key);
    if (!obj_.contains(key)) {
      obj_[key] = def;
      return def;
    }
    std::vector<double> out;
    if (!obj_[key].is_array()) {
      errors_.push_back(name(key) + ": must be an array of numbers");
      return def;
    }
    for (std::size_t i = 0; i < obj_[key].size(); ++i) {
      const json& v = obj_[key][i];
      if (v.is_number() && std::isfinite(v.get<double>())) {
        out.push_back(v.get<double>());
      } else {
        errors_.push_back(name(key) + "[" + std::to_string(i) + "]: must be a finite number");
      }
    }
    return out;
  }

  void drop(const std::string& key) {
    known_.insert(key);
    obj_.erase(key);
  }

  void reject_unknown() {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!known_.count(it.key())) errors_.push_back(name(it.key()) + ": unknown key");
    }
  }

  // An empty key means msg already starts with a field name.
  void error(const std::string& key, const std::string& msg) {
    if (key.empty()) {
      errors_.push_back(path_.empty() ? msg : path_ + "." + msg);
    } else {
      errors_.push_back(name(key) + ": " + msg);
    }
  }

  json& obj() { return obj_; }

 private:
  json& obj_;
  std::string path_;
  std::vector<std::string>& errors_;
  std::set<std::string> known_;
};

json& child(json& parent, const std::string& key) {
  if (!parent.contains(key)) parent[key] = json::object();
  return parent[key];
}

NetworkConfig read_network(Section& s, bool training) {
  NetworkConfig c;
  c.input_dim = s.count("input_dim", 1000, 1);
  if (s.has("hidden_widths")) {
    c.hidden_widths = s.counts("hidden_widths", {}, 1);
    if (s.has("width") || s.has("depth")) {
      s.error("hidden_widths", "give either hidden_widths or width/depth, not both");
      s.drop("width");
      s.drop("depth");
    }
  } else {
    const std::size_t width = s.count("width", 100, 1);
    const std::size_t depth = static_cast<std::size_t>(s.u64("depth", 1));
    c.hidden_widths.assign(depth, width);
    s.drop("width");
    s.drop("depth");
    s.raw("hidden_widths") = c.hidden_widths;
  }
  c.num_classes = s.count("num_classes", 2, 2);
  c.sigma_w2 = s.num("sigma_w2", 2.0);
  const std::string kind_name = s.str("norm_kind", "none");
  try {
    c.norm_kind = parse_norm_kind(kind_name);
  } catch (const ConfigError&) {
    s.error("norm_kind", "unknown value '" + kind_name + "'");
  }
  const std::string default_place = c.norm_kind == NormKind::None ? "absent" : "pre";
  const std::string place_name = s.str("placement", default_place);
  try {
    c.placement = parse_placement(place_name);
  } catch (const ConfigError&) {
    s.error("placement", "unknown value '" + place_name + "'");
  }
  s.raw("norm_kind") = std::string(to_string(c.norm_kind));
  s.raw("placement") = std::string(to_string(c.placement));
  c.epsilon = s.num("epsilon", training ? 1e-5 : 0.0);
  json& bb = s.raw("bn_batch_size");
  if (bb.is_null() || (bb.is_string() && bb.get<std::string>() == "full")) {
    bb = "full";
  } else {
    c.bn_batch_size = s.count_value(bb, s.name("bn_batch_size"), 2);
  }
  c.loo_estimators = s.flag("loo_estimators", false);
  for (const auto& v : c.violations()) s.error("", v);
  s.reject_unknown();
  return c;
}

FilterThresholds read_thresholds(Section& s) {
  FilterThresholds t;
  t.neutral_halfwidth = s.num("neutral_halfwidth", 0.05);
  t.deep_threshold = s.num("deep_threshold", 0.95);
  try {
    t.validate();
  } catch (const ConfigError& e) {
    for (const auto& v : e.violations()) s.error("", v);
  }
  s.reject_unknown();
  return t;
}

void read_file_source(Section& s, const std::string& type) {
  if (type == "csv") {
    s.str("path", "");
    json& lc = s.raw("label_column");
    if (lc.is_null()) lc = "label";
    if (!lc.is_string() && !lc.is_number_unsigned()) {
      s.error("label_column", "must be a column name or a non-negative index");
    }
  } else {
    s.str("images", "");
    s.str("labels", "");
  }
  s.flag("standardize", false);
  json& lm = s.raw("label_map");
  if (lm.is_null()) lm = json::object();
  if (!lm.is_object()) s.error("label_map", "must map label strings to integers");
  for (auto it = lm.begin(); it != lm.end(); ++it) {
    if (!it.value().is_number_integer()) s.error("label_map", "values must be integers");
  }
}

void read_static_data(Section& s, std::uint64_t seed) {
  const std::string type = s.str("type", "gaussian");
  s.num("shift", 0.0);
  if (type == "gaussian") {
    s.count("n_samples", 10000, 2);
    s.flag("fresh_per_run", false);
    s.u64("seed", seed);
  } else if (type == "csv" || type == "idx") {
    read_file_source(s, type);
  } else {
    s.error("type", "must be 'gaussian', 'csv' or 'idx'");
  }
  s.reject_unknown();
}

void read_blob_data(Section& s, std::uint64_t seed) {
  const std::string type = s.str("type", "blob");
  if (type == "blob") {
    s.count("n_per_class", 5000, 1);
    s.num("mu_scale", 1.0);
    s.count("test_per_class", 0, 0);
    s.u64("seed", seed);
  } else if (type == "csv" || type == "idx") {
    read_file_source(s, type);
  } else {
    s.error("type", "must be 'blob', 'csv' or 'idx'");
  }
  s.reject_unknown();
}

TrainConfig read_train(Section& s, const NetworkConfig& net) {
  TrainConfig t;
  t.learning_rate = s.num("learning_rate", 1e-3);
  t.batch_size = s.count("batch_size", 512, 1);
  t.steps = s.count("steps", 2000, 0);
  t.eval_cadence = s.count("eval_cadence", 10, 1);
  t.relabel_dominant = s.flag("relabel_dominant", true);
  t.bn_momentum = s.num("bn_momentum", 0.9);
  t.seed = s.u64("seed", 0);
  for (const auto& v : t.violations(net)) s.error("", v);
  return t;
}

}  // namespace

json resolve(const json& config, const Overrides& o, std::optional<Kind> expected) {
  json c = config;
  std::vector<std::string> errors;
  if (!c.is_object()) throw ConfigError("config: top level must be an object");
  Section top(c, "", errors);
  Kind kind = Kind::StaticEnsemble;
  if (!c.contains("kind") && expected) c["kind"] = to_string(*expected);
  try {
    kind = parse_kind(top.str("kind", ""));
  } catch (const ConfigError& e) {
    throw ConfigError(std::vector<std::string>{e.violations().front()});
  }
  if (expected && *expected != kind) {
    throw ConfigError("kind: config is '" + to_string(kind) + "' but subcommand is '" +
                      to_string(*expected) + "'");
  }
  c["kind"] = to_string(kind);

  if (o.seed) c["seed"] = *o.seed;
  if (o.runs) c["runs"] = *o.runs;
  if (o.threads) c["threads"] = *o.threads;
  if (o.out) c["output_dir"] = o.out->string();
  const std::uint64_t seed = top.u64("seed", 0);
  top.count("threads", 0, 0);
  top.str("output_dir", "results/" + to_string(kind));

  const bool uses_network = kind != Kind::TheoryTable && kind != Kind::DistributionTest;
  NetworkConfig net;
  if (uses_network) {
    Section ns(child(c, "network"), "network", errors);
    net = read_network(ns, kind == Kind::FilteredDynamics);
    top.raw("network");
  }

  switch (kind) {
    case Kind::StaticEnsemble:
    case Kind::GammaScan: {
      top.count("runs", kind == Kind::GammaScan ? 100 : 200, kind == Kind::GammaScan ? 10 : 2);
      Section sw(child(c, "sweep"), "sweep", errors);
      top.raw("sweep");
      const bool uniform = std::adjacent_find(net.hidden_widths.begin(), net.hidden_widths.end(),
                                              std::not_equal_to<>()) == net.hidden_widths.end();
      const std::size_t w0 = net.hidden_widths.empty() ? 1 : net.hidden_widths.front();
      if (!uniform && (sw.has("depths") || sw.has("widths"))) {
        sw.error("depths", "sweeps need uniform network widths");
      }
      sw.counts("depths", {net.depth()}, 0);
      sw.counts("widths", {w0}, 1);
      sw.nums("shifts", {0.0});
      sw.reject_unknown();
      Section ds(child(c, "data"), "data", errors);
      top.raw("data");
      read_static_data(ds, seed);
      top.count("histogram_bins", 40, 1);
      if (kind == Kind::StaticEnsemble) {
        top.flag("collect_gamma", false);
        Section ts(child(c, "thresholds"), "thresholds", errors);
        top.raw("thresholds");
        read_thresholds(ts);
      }
      break;
    }
    case Kind::TheoryTable: {
      Section ts(child(c, "theory"), "theory", errors);
      top.raw("theory");
      ts.counts("depths", {1, 20}, 0);
      auto bs = ts.counts("batch_sizes", {5, 8, 16, 32, 64, 128, 512, 1024}, 5);
      ts.num("sigma_w2", 2.0);
      ts.reject_unknown();
      (void)bs;
      break;
    }
    case Kind::FilteredDynamics: {
      top.count("runs", 500, 1);
      top.count("runs_per_group", 10, 0);
      top.flag("train_weak", false);
      top.num("accuracy_level", 0.6);
      Section ds(child(c, "data"), "data", errors);
      top.raw("data");
      read_blob_data(ds, seed);
      Section ts(child(c, "thresholds"), "thresholds", errors);
      top.raw("thresholds");
      read_thresholds(ts);
      Section tr(child(c, "train"), "train", errors);
      top.raw("train");
      read_train(tr, net);
      tr.reject_unknown();
      break;
    }
    case Kind::DistributionTest: {
      Section ds(child(c, "dist"), "dist", errors);
      top.raw("dist");
      ds.count("batch_size", 16, 5);
      ds.count("samples", 1000000, 20);
      ds.num("range", 8.0);
      ds.reject_unknown();
      top.count("histogram_bins", 160, 1);
      break;
    }
  }
  top.reject_unknown();
  if (!errors.empty()) throw ConfigError(std::move(errors));
  return c;
}

// ---------------------------------------------------------------------------
// Result emission.

namespace {

std::string fmt(double x) { return io::format_double(x); }

class CsvWriter {
 public:
  explicit CsvWriter(const std::vector<std::string>& header) {
    for (std::size_t i = 0; i < header.size(); ++i) os_ << (i ? "," : "") << header[i];
    os_ << '\n';
  }
  CsvWriter& cell(const std::string& s) {
    os_ << (first_ ? "" : ",") << s;
    first_ = false;
    return *this;
  }
  CsvWriter& cell(double x) { return cell(fmt(x)); }
  CsvWriter& cell(std::uint64_t x) { return cell(std::to_string(x)); }
  CsvWriter& cell(std::size_t x, int) { return cell(std::to_string(x)); }
  void end_row() {
    os_ << '\n';
    first_ = true;
  }
  std::string str() const { return os_.str(); }

 private:
  std::ostringstream os_;
  bool first_ = true;
};

class Emitter {
 public:
  explicit Emitter(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }
  void write(const std::string& name, const std::string& text) {
    io::write_text(dir_ / name, text);
    files_.push_back(name);
  }
  void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }
  const std::vector<std::string>& files() const { return files_; }
  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  std::vector<std::string> files_;
};

std::map<int, int> label_map(const json& m) {
  std::map<int, int> out;
  for (auto it = m.begin(); it != m.end(); ++it) {
    try {
      out[std::stoi(it.key())] = it.value().get<int>();
    } catch (const std::exception&) {
      throw ConfigError("data.label_map: key '" + it.key() + "' is not an integer");
    }
  }
  return out;
}

Dataset load_file_data(const json& d) {
  const std::string type = d["type"];
  Dataset data;
  if (type == "csv") {
    const json& lc = d["label_column"];
    LabelColumn col = lc.is_string() ? LabelColumn{lc.get<std::string>()}
                                     : LabelColumn{lc.get<std::size_t>()};
    data = load_csv(d["path"].get<std::string>(), col);
  } else {
    data = load_idx(d["images"].get<std::string>(), d["labels"].get<std::string>());
  }
  if (!d["label_map"].empty()) data = remap_labels(data, label_map(d["label_map"]));
  if (d["standardize"].get<bool>()) data = standardize(data);
  return data;
}

NetworkConfig network_from(const json& n) {
  NetworkConfig c;
  c.input_dim = n["input_dim"];
  c.hidden_widths = n["hidden_widths"].get<std::vector<std::size_t>>();
  c.num_classes = n["num_classes"];
  c.sigma_w2 = n["sigma_w2"];
  c.norm_kind = parse_norm_kind(n["norm_kind"].get<std::string>());
  c.placement = parse_placement(n["placement"].get<std::string>());
  c.epsilon = n["epsilon"];
  if (!n["bn_batch_size"].is_string()) c.bn_batch_size = n["bn_batch_size"].get<std::size_t>();
  c.loo_estimators = n["loo_estimators"];
  return c;
}

json network_json(const NetworkConfig& c) {
  json j = {{"input_dim", c.input_dim},
            {"hidden_widths", c.hidden_widths},
            {"num_classes", c.num_classes},
            {"sigma_w2", c.sigma_w2},
            {"norm_kind", std::string(to_string(c.norm_kind))},
            {"placement", std::string(to_string(c.placement))},
            {"epsilon", c.epsilon},
            {"loo_estimators", c.loo_estimators}};
  if (c.bn_batch_size) {
    j["bn_batch_size"] = *c.bn_batch_size;
  } else {
    j["bn_batch_size"] = "full";
  }
  return j;
}

json theory_json(const theory::TheoryPrediction& p) {
  json j = {{"regime", theory::to_string(p.regime)},
            {"defers_to_no_norm", p.defers_to_no_norm},
            {"rationale", p.rationale}};
  j["gamma"] = p.gamma ? json(*p.gamma) : json(nullptr);
  return j;
}

json nan_safe(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json report_json(const VarianceRatioReport& r) {
  json layers = json::array();
  for (const auto& l : r.layers) {
    layers.push_back({{"layer", l.layer},
                      {"gamma", nan_safe(l.gamma)},
                      {"se", nan_safe(l.se)},
                      {"var_w", nan_safe(l.var_w)},
                      {"var_d", nan_safe(l.var_d)},
                      {"gamma_node0", nan_safe(l.gamma_node0)},
                      {"nodes", l.nodes}});
  }
  return {{"runs", r.runs}, {"layers", layers}};
}

json decisions_common() {
  return {{"weight_init", "W ~ N(0, sigma_w2 / fan_in), biases 0, norm scale 1, shift 0"},
          {"argmax_ties", "lowest class index"},
          {"bn_variance", "biased (divide by B); leave-one-out uses divide by B-1 over B-1 samples"},
          {"precision", "float64 throughout"},
          {"seeds", "run i uses base seed + i; data seed recorded separately"}};
}

struct Point {
  std::size_t width;
  std::size_t depth;
  double shift;
  std::string tag;
};

std::vector<Point> sweep_points(const json& c, const NetworkConfig& base) {
  const auto depths = c["sweep"]["depths"].get<std::vector<std::size_t>>();
  const auto widths = c["sweep"]["widths"].get<std::vector<std::size_t>>();
  const auto shifts = c["sweep"]["shifts"].get<std::vector<double>>();
  const bool custom = depths.size() != 1 || widths.size() != 1 || depths[0] != base.depth() ||
                      (base.depth() > 0 && widths[0] != base.hidden_widths[0]);
  std::vector<Point> pts;
  for (double s : shifts) {
    for (std::size_t w : widths) {
      for (std::size_t d : depths) {
        std::string tag = "L" + std::to_string(d);
        if (widths.size() > 1) tag = "W" + std::to_string(w) + "_" + tag;
        if (shifts.size() > 1 || s != 0.0) tag += "_c" + fmt(s);
        pts.push_back({w, d, s, tag});
      }
    }
  }
  (void)custom;
  return pts;
}

NetworkConfig at_point(const NetworkConfig& base, const Point& p) {
  NetworkConfig c = base;
  const bool uniform = std::adjacent_find(base.hidden_widths.begin(), base.hidden_widths.end(),
                                          std::not_equal_to<>()) == base.hidden_widths.end();
  if (uniform) c.hidden_widths.assign(p.depth, p.width);
  return c;
}

struct EnsembleInputs {
  DataSpec spec;
  std::optional<Dataset> file;
};

EnsembleInputs static_inputs(const json& d) {
  EnsembleInputs in;
  const std::string type = d["type"];
  if (type == "gaussian") {
    in.spec.n_samples = d["n_samples"];
    in.spec.fresh_per_run = d["fresh_per_run"];
    in.spec.seed = d["seed"];
  } else {
    in.file = load_file_data(d);
  }
  in.spec.shift = d["shift"];
  return in;
}

json run_static(const json& c, Emitter& em, bool gamma_scan) {
  const NetworkConfig base = network_from(c["network"]);
  const std::size_t runs = c["runs"];
  const std::uint64_t seed = c["seed"];
  const std::size_t threads = c["threads"];
  const std::size_t bins = c["histogram_bins"];
  const bool collect = gamma_scan || c.value("collect_gamma", false);
  FilterThresholds thr;
  if (!gamma_scan) {
    thr.neutral_halfwidth = c["thresholds"]["neutral_halfwidth"];
    thr.deep_threshold = c["thresholds"]["deep_threshold"];
  }
  EnsembleInputs in = static_inputs(c["data"]);

  json points = json::array();
  CsvWriter gamma_csv({"point", "depth", "width", "shift", "layer", "gamma", "se", "var_w",
                       "var_d", "gamma_node0", "nodes"});
  for (const Point& p : sweep_points(c, base)) {
    NetworkConfig cfg = at_point(base, p);
    DataSpec spec = in.spec;
    spec.shift += p.shift;
    std::optional<Dataset> shifted;
    EnsembleOptions opt;
    opt.threads = threads;
    opt.collect_gamma = collect;
    opt.bins = bins;
    if (in.file) {
      shifted = p.shift != 0.0 || in.spec.shift != 0.0 ? shift_pixels(*in.file, spec.shift)
                                                      : *in.file;
      cfg.input_dim = shifted->dim();
      opt.fixed_data = &*shifted;
    }
    const EnsembleResult r = run_ensemble(cfg, spec, runs, seed, opt);

    json pt = {{"tag", p.tag}, {"depth", p.depth}, {"width", p.width}, {"shift", p.shift},
               {"network", network_json(cfg)}};
    try {
      pt["theory"] = theory_json(theory::gamma_prediction(cfg));
    } catch (const ConfigError& e) {
      pt["theory"] = {{"error", e.what()}};
    }
    if (r.gamma) {
      pt["gamma"] = report_json(*r.gamma);
      for (const auto& l : r.gamma->layers) {
        gamma_csv.cell(p.tag).cell(std::to_string(p.depth)).cell(std::to_string(p.width))
            .cell(p.shift).cell(std::to_string(l.layer)).cell(l.gamma).cell(l.se).cell(l.var_w)
            .cell(l.var_d).cell(l.gamma_node0).cell(std::to_string(l.nodes));
        gamma_csv.end_row();
      }
    }
    if (!gamma_scan) {
      std::vector<std::string> header{"seed", "G0", "Ghat0"};
      if (collect) {
        for (std::size_t l = 1; l <= cfg.depth() + 1; ++l) header.push_back("gamma_l" + std::to_string(l));
      }
      CsvWriter runs_csv(header);
      double abs_dev = 0.0;
      for (std::size_t i = 0; i < runs; ++i) {
        runs_csv.cell(r.seeds[i]).cell(r.g0[i]).cell(r.ghat0[i]);
        if (collect) {
          for (double g : r.run_gamma[i]) runs_csv.cell(g);
        }
        runs_csv.end_row();
        abs_dev += std::abs(r.g0[i] - 0.5);
      }
      em.write("runs_" + p.tag + ".csv", runs_csv.str());
      CsvWriter hist({"bin_lo", "bin_hi", "count", "density"});
      const double width = 1.0 / static_cast<double>(bins);
      for (std::size_t b = 0; b < bins; ++b) {
        hist.cell(r.histogram.edges[b]).cell(r.histogram.edges[b + 1])
            .cell(std::to_string(r.histogram.counts[b]))
            .cell(static_cast<double>(r.histogram.counts[b]) / (static_cast<double>(runs) * width));
        hist.end_row();
      }
      em.write("histogram_" + p.tag + ".csv", hist.str());
      const FilteredSeeds f = filter_initializations(r, thr);
      pt["runs"] = runs;
      pt["g0_mean"] = stats::mean(r.g0);
      pt["g0_se"] = runs >= 2 ? stats::standard_error(r.g0) : 0.0;
      pt["mean_abs_deviation"] = abs_dev / static_cast<double>(runs);
      pt["g0_min"] = *std::min_element(r.g0.begin(), r.g0.end());
      pt["g0_max"] = *std::max_element(r.g0.begin(), r.g0.end());
      pt["mass_0.45_0.55"] = r.histogram.mass_between(0.45, 0.55);
      pt["groups"] = {{"neutral", f.neutral.size()},
                      {"weak_prejudice", f.weak.size()},
                      {"deep_prejudice", f.deep.size()}};
      pt["g0"] = r.g0;
    }
    points.push_back(pt);
  }
  if (gamma_scan) em.write("gamma.csv", gamma_csv.str());
  json summary = {{"kind", gamma_scan ? "gamma-scan" : "static-ensemble"}, {"points", points}};
  if (!gamma_scan) summary["thresholds"] = c["thresholds"];
  em.write_json("summary.json", summary);
  return summary;
}

json run_theory(const json& c, Emitter& em) {
  const auto depths = c["theory"]["depths"].get<std::vector<std::size_t>>();
  const auto batches = c["theory"]["batch_sizes"].get<std::vector<std::size_t>>();
  const double s2 = c["theory"]["sigma_w2"];
  CsvWriter tbl({"norm_kind", "placement", "depth", "bn_batch_size", "regime", "gamma",
                 "defers_to_no_norm", "output_var", "center_var"});
  json rows = json::array();
  struct Combo {
    NormKind k;
    NormPlacement p;
  };
  const std::vector<Combo> combos{
      {NormKind::None, NormPlacement::Absent},
      {NormKind::BatchNorm, NormPlacement::PreActivation},
      {NormKind::BatchNorm, NormPlacement::PostActivation},
      {NormKind::LayerNorm, NormPlacement::PreActivation},
      {NormKind::LayerNorm, NormPlacement::PostActivation},
      {NormKind::RmsNorm, NormPlacement::PreActivation},
      {NormKind::RmsNorm, NormPlacement::PostActivation}};
  for (const auto& cb : combos) {
    for (std::size_t d : depths) {
      std::vector<std::optional<std::size_t>> bs{std::nullopt};
      if (cb.k == NormKind::BatchNorm && cb.p == NormPlacement::PreActivation) {
        for (auto b : batches) bs.emplace_back(b);
      }
      for (const auto& b : bs) {
        NetworkConfig cfg = make_config(1000, 100, d, cb.k, cb.p);
        cfg.sigma_w2 = s2;
        cfg.bn_batch_size = b;
        const auto pr = theory::gamma_prediction(cfg);
        const std::string bstr = b ? std::to_string(*b) : "full";
        tbl.cell(std::string(to_string(cb.k))).cell(std::string(to_string(cb.p)))
            .cell(std::to_string(d)).cell(bstr).cell(theory::to_string(pr.regime))
            .cell(pr.gamma ? fmt(*pr.gamma) : "nan").cell(pr.defers_to_no_norm ? "1" : "0")
            .cell(pr.output_dist.variance)
            .cell(pr.center_dist ? pr.center_dist->variance : 0.0);
        tbl.end_row();
        json row = theory_json(pr);
        row["norm_kind"] = to_string(cb.k);
        row["placement"] = to_string(cb.p);
        row["depth"] = d;
        row["bn_batch_size"] = bstr;
        rows.push_back(row);
      }
    }
  }
  em.write("theory.csv", tbl.str());
  CsvWriter mom({"B", "pdf_at_0", "relu_mean", "relu_variance", "gamma", "var_btilde",
                 "loo_var_expectation"});
  json moments = json::array();
  for (auto b : batches) {
    const auto m = theory::bn_relu_moments(b);
    const double bd = static_cast<double>(b);
    mom.cell(std::to_string(b)).cell(theory::bn_unit_pdf(0.0, b)).cell(m.mean).cell(m.variance)
        .cell(m.mean * m.mean / m.variance).cell(bd / (bd - 4.0))
        .cell(theory::loo_var_expectation(1.0, b));
    mom.end_row();
    moments.push_back({{"B", b}, {"relu_mean", m.mean}, {"relu_variance", m.variance},
                       {"gamma", m.mean * m.mean / m.variance}});
  }
  const auto full = theory::rectified_gaussian_moments(0.0, 1.0);
  em.write("bn_moments.csv", mom.str());
  json summary = {{"kind", "theory-table"},
                  {"rows", rows},
                  {"bn_moments", moments},
                  {"full_batch", {{"relu_mean", full.mean},
                                  {"relu_variance", full.variance},
                                  {"gamma", full.mean * full.mean / full.variance}}}};
  em.write_json("summary.json", summary);
  return summary;
}

json run_dist(const json& c, Emitter& em) {
  const std::size_t B = c["dist"]["batch_size"];
  const std::size_t n = c["dist"]["samples"];
  const double range = c["dist"]["range"];
  const std::size_t bins = c["histogram_bins"];
  const std::uint64_t seed = c["seed"];
  const std::size_t threads = c["threads"];
  const double b = static_cast<double>(B);
  auto pdf = [B](double z) { return theory::bn_unit_pdf(z, B); };
  const auto relu_theory = theory::bn_relu_moments(B);

  json report = {{"kind", "dist-test"}, {"batch_size", B}, {"samples", n}};
  CsvWriter hist({"estimator", "bin_lo", "bin_hi", "count", "density", "theory_density"});
  for (auto est : {norm::Estimator::LeaveOneOut, norm::Estimator::Standard}) {
    const std::string name = est == norm::Estimator::LeaveOneOut ? "loo" : "standard";
    const auto draws = norm::sample_normalized_columns(B, n, seed, est, threads);
    const auto& z = draws.normalized;
    std::vector<double> relu(z.size());
    std::transform(z.begin(), z.end(), relu.begin(), [](double v) { return std::max(v, 0.0); });
    const double var_theory = b / (b - 4.0);
    const double mean_var_est = stats::mean(draws.variance);
    const double var_expect =
        est == norm::Estimator::LeaveOneOut ? theory::loo_var_expectation(1.0, B) : (b - 1.0) / b;
    json blk = {
        {"ks_vs_bn_unit_pdf", stats::ks_distance_pdf(z, pdf, -std::numeric_limits<double>::infinity())},
        {"mean", stats::mean(z)},
        {"mean_se", stats::standard_error(z)},
        {"variance", stats::sample_variance(z)},
        {"variance_theory", var_theory},
        {"variance_delta", stats::sample_variance(z) - var_theory},
        {"relu_mean", stats::mean(relu)},
        {"relu_mean_theory", relu_theory.mean},
        {"relu_mean_delta", stats::mean(relu) - relu_theory.mean},
        {"relu_mean_se", stats::standard_error(relu)},
        {"relu_variance", stats::sample_variance(relu)},
        {"relu_variance_theory", relu_theory.variance},
        {"relu_variance_delta", stats::sample_variance(relu) - relu_theory.variance},
        {"variance_estimate_mean", mean_var_est},
        {"variance_estimate_expectation", var_expect},
        {"variance_estimate_delta", mean_var_est - var_expect}};
    report[name] = blk;
    std::vector<double> inside;
    inside.reserve(z.size());
    for (double v : z) {
      if (v >= -range && v <= range) inside.push_back(v);
    }
    const auto h = stats::make_histogram(inside, bins, -range, range);
    const double w = 2.0 * range / static_cast<double>(bins);
    for (std::size_t k = 0; k < bins; ++k) {
      const double mid = 0.5 * (h.edges[k] + h.edges[k + 1]);
      hist.cell(name).cell(h.edges[k]).cell(h.edges[k + 1]).cell(std::to_string(h.counts[k]))
          .cell(static_cast<double>(h.counts[k]) / (static_cast<double>(n) * w)).cell(pdf(mid));
      hist.end_row();
    }
    report[name]["outside_range"] = z.size() - inside.size();
  }
  em.write("histogram_btilde.csv", hist.str());
  em.write_json("dist.json", report);
  return report;
}

json run_dynamics(const json& c, Emitter& em) {
  FilteredDynamicsSpec s;
  s.network = network_from(c["network"]);
  s.screen_runs = c["runs"];
  s.base_seed = c["seed"];
  s.threads = c["threads"];
  s.runs_per_group = c["runs_per_group"];
  s.train_weak = c["train_weak"];
  s.accuracy_level = c["accuracy_level"];
  s.thresholds.neutral_halfwidth = c["thresholds"]["neutral_halfwidth"];
  s.thresholds.deep_threshold = c["thresholds"]["deep_threshold"];
  const json& t = c["train"];
  s.train.learning_rate = t["learning_rate"];
  s.train.batch_size = t["batch_size"];
  s.train.steps = t["steps"];
  s.train.eval_cadence = t["eval_cadence"];
  s.train.relabel_dominant = t["relabel_dominant"];
  s.train.bn_momentum = t["bn_momentum"];
  s.train.seed = t["seed"];
  const json& d = c["data"];
  std::optional<Dataset> file;
  if (d["type"] == "blob") {
    s.n_per_class = d["n_per_class"];
    s.mu_scale = d["mu_scale"];
    s.test_per_class = d["test_per_class"];
    s.data_seed = d["seed"];
  } else {
    file = load_file_data(d);
    s.train_data = &*file;
  }
  const FilteredDynamicsResult r = run_filtered_dynamics(s);

  CsvWriter scr({"seed", "G0", "Ghat0", "group"});
  for (std::size_t i = 0; i < r.seeds.size(); ++i) {
    scr.cell(r.seeds[i]).cell(r.g0[i]).cell(r.ghat0[i]).cell(to_string(r.groups[i]));
    scr.end_row();
  }
  em.write("screening.csv", scr.str());

  const std::size_t nc = s.network.num_classes;
  json runs = json::array();
  for (const auto& run : r.runs) {
    std::vector<std::string> header{"step", "loss", "acc_global_train"};
    for (std::size_t k = 0; k < nc; ++k) header.push_back("acc_class_" + std::to_string(k) + "_train");
    header.push_back("acc_global_test");
    for (std::size_t k = 0; k < nc; ++k) header.push_back("acc_class_" + std::to_string(k) + "_test");
    header.push_back("max_guess_fraction");
    CsvWriter tr(header);
    for (const auto& rec : run.trajectory.records) {
      tr.cell(std::to_string(rec.step)).cell(rec.loss).cell(rec.acc_train);
      for (double a : rec.acc_class_train) tr.cell(a);
      tr.cell(rec.acc_test ? fmt(*rec.acc_test) : "nan");
      for (std::size_t k = 0; k < nc; ++k) {
        tr.cell(rec.acc_class_test.empty() ? "nan" : fmt(rec.acc_class_test[k]));
      }
      tr.cell(rec.max_guess_fraction);
      tr.end_row();
    }
    em.write("trajectory_" + std::to_string(run.seed) + ".csv", tr.str());
    const auto& first = run.trajectory.records.front();
    const auto& last = run.trajectory.records.back();
    runs.push_back({{"seed", run.seed},
                    {"group", to_string(run.group)},
                    {"tau", run.tau ? json(*run.tau) : json(nullptr)},
                    {"permutation", run.trajectory.permutation},
                    {"t0_acc_class", first.acc_class_train},
                    {"t0_max_guess_fraction", first.max_guess_fraction},
                    {"final_acc", last.acc_train},
                    {"final_max_guess_fraction", last.max_guess_fraction}});
  }
  auto med = [&](InitGroup g) {
    const auto m = median_tau(r, g);
    if (!m) return json(nullptr);
    return std::isinf(*m) ? json("censored") : json(*m);
  };
  json summary = {{"kind", "filtered-dynamics"},
                  {"screened", r.seeds.size()},
                  {"groups", {{"neutral", r.filtered.neutral.size()},
                              {"weak_prejudice", r.filtered.weak.size()},
                              {"deep_prejudice", r.filtered.deep.size()}}},
                  {"accuracy_level", s.accuracy_level},
                  {"median_tau", {{"neutral", med(InitGroup::Neutral)},
                                  {"weak_prejudice", med(InitGroup::WeakPrejudice)},
                                  {"deep_prejudice", med(InitGroup::DeepPrejudice)}}},
                  {"runs", runs},
                  {"steps_per_epoch_dropped_samples",
                   r.runs.empty() ? json(nullptr) : json(r.runs.front().trajectory.dropped_per_epoch)}};
  em.write_json("summary.json", summary);
  return summary;
}

json decisions_for(Kind k) {
  json d = decisions_common();
  switch (k) {
    case Kind::StaticEnsemble:
    case Kind::GammaScan:
      d["bn_statistics"] = "full batch over the whole dataset";
      d["gamma_pooling"] = "Var_W pooled over runs and nodes; node-0-only estimate reported";
      d["gamma_se"] = "jackknife over runs";
      d["histogram"] = "equal-width bins on [0, 1]";
      break;
    case Kind::FilteredDynamics:
      d["optimizer"] = "plain SGD, softmax cross-entropy, mean over batch";
      d["partial_batches"] = "last partial batch of each epoch dropped";
      d["bn_eval"] = "running averages, momentum 0.9, started from full-batch statistics";
      d["tau"] = "first evaluated step with global train accuracy >= accuracy_level";
      d["relabel"] = "step-0 dominant class swapped into index 0";
      d["filter"] = "neutral if |max G - 1/N_C| <= halfwidth, deep if max G >= deep_threshold";
      break;
    case Kind::DistributionTest:
      d["sampling"] = "one normalized value per independent N(0,1) column of size B";
      d["standard_estimator"] = "compared against the leave-one-out closed form (no exact density)";
      break;
    case Kind::TheoryTable:
      d["deep_unnormalized"] = "gamma deferred to empirical no-norm estimate for depth > 1";
      d["mini_batch_bn_pre"] = "leave-one-out closed form used for either estimator";
      break;
  }
  return d;
}

std::string utc_timestamp() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

}  // namespace

Outcome run(const json& resolved) {
  // Re-resolving is idempotent and guards against hand-edited input.
  const json c = resolve(resolved, {});
  const Kind kind = parse_kind(c["kind"]);
  Emitter em(fs::path(c["output_dir"].get<std::string>()));
  json summary;
  switch (kind) {
    case Kind::StaticEnsemble: summary = run_static(c, em, false); break;
    case Kind::GammaScan: summary = run_static(c, em, true); break;
    case Kind::TheoryTable: summary = run_theory(c, em); break;
    case Kind::FilteredDynamics: summary = run_dynamics(c, em); break;
    case Kind::DistributionTest: summary = run_dist(c, em); break;
  }
  json files = json::array();
  for (const auto& f : em.files()) {
    files.push_back({{"path", f},
                     {"sha256", sha256_file(em.dir() / f)},
                     {"bytes", fs::file_size(em.dir() / f)}});
  }
  json manifest = {{"manifest_version", 1},
                   {"tool", "igb"},
                   {"version", kVersion},
                   {"kind", to_string(kind)},
                   {"config", c},
                   {"seeds", {{"base_seed", c["seed"]}, {"rule", "run i uses base_seed + i"}}},
                   {"decisions", decisions_for(kind)},
                   {"files", files},
                   {"created_utc", utc_timestamp()}};
  if (c.contains("runs")) manifest["seeds"]["runs"] = c["runs"];
  if (c.contains("data") && c["data"].contains("seed")) manifest["seeds"]["data_seed"] = c["data"]["seed"];
  io::write_text(em.dir() / "manifest.json", manifest.dump(2) + "\n");
  return {em.dir(), em.files(), summary};
}

// ---------------------------------------------------------------------------
// compare

namespace {

json read_summary(const fs::path& p) {
  const fs::path file = fs::is_directory(p) ? p / "summary.json" : p;
  fs::path f = file;
  if (!fs::exists(f) && fs::is_directory(p)) f = p / "dist.json";
  try {
    return json::parse(io::read_text(f));
  } catch (const json::exception& e) {
    throw FormatError(f.string() + ": " + e.what());
  }
}

json gamma_deltas(const json& a, const json& b) {
  json out = json::array();
  if (!a.contains("gamma") || !b.contains("gamma")) return out;
  const auto& la = a["gamma"]["layers"];
  const auto& lb = b["gamma"]["layers"];
  for (std::size_t i = 0; i < la.size() && i < lb.size(); ++i) {
    if (la[i]["gamma"].is_null() || lb[i]["gamma"].is_null()) continue;
    out.push_back({{"layer", la[i]["layer"]},
                   {"gamma_a", la[i]["gamma"]},
                   {"gamma_b", lb[i]["gamma"]},
                   {"delta", la[i]["gamma"].get<double>() - lb[i]["gamma"].get<double>()}});
  }
  return out;
}

}  // namespace

json compare(const fs::path& pa, const fs::path& pb) {
  const json a = read_summary(pa);
  const json b = read_summary(pb);
  const std::string ka = a.value("kind", ""), kb = b.value("kind", "");
  if (ka != kb) throw ConfigError("compare: kind mismatch ('" + ka + "' vs '" + kb + "')");
  json diff = {{"kind", ka}};
  if (ka == "static-ensemble" || ka == "gamma-scan") {
    json pts = json::array();
    for (const auto& p : a["points"]) {
      for (const auto& q : b["points"]) {
        if (p["tag"] != q["tag"]) continue;
        json d = {{"tag", p["tag"]}, {"gamma", gamma_deltas(p, q)}};
        if (p.contains("g0") && q.contains("g0")) {
          const auto ga = p["g0"].get<std::vector<double>>();
          const auto gb = q["g0"].get<std::vector<double>>();
          d["ks_distance"] = ga.size() >= 20 && gb.size() >= 20 ? json(stats::ks_two_sample(ga, gb))
                                                                : json(nullptr);
          d["g0_mean_delta"] = p["g0_mean"].get<double>() - q["g0_mean"].get<double>();
        }
        pts.push_back(d);
      }
    }
    diff["points"] = pts;
  } else if (ka == "filtered-dynamics") {
    json med = json::object();
    for (const char* g : {"neutral", "weak_prejudice", "deep_prejudice"}) {
      const json& x = a["median_tau"][g];
      const json& y = b["median_tau"][g];
      med[g] = x.is_number() && y.is_number() ? json(x.get<double>() - y.get<double>())
                                              : json(nullptr);
    }
    diff["median_tau_delta"] = med;
    json per = json::array();
    for (const auto& r : a["runs"]) {
      for (const auto& s : b["runs"]) {
        if (r["seed"] != s["seed"]) continue;
        per.push_back({{"seed", r["seed"]},
                       {"tau_delta", r["tau"].is_number() && s["tau"].is_number()
                                         ? json(r["tau"].get<double>() - s["tau"].get<double>())
                                         : json(nullptr)}});
      }
    }
    diff["runs"] = per;
  } else if (ka == "theory-table") {
    json rows = json::array();
    for (std::size_t i = 0; i < a["rows"].size() && i < b["rows"].size(); ++i) {
      const auto& x = a["rows"][i];
      const auto& y = b["rows"][i];
      rows.push_back({{"norm_kind", x["norm_kind"]},
                      {"placement", x["placement"]},
                      {"depth", x["depth"]},
                      {"gamma_delta", x["gamma"].is_number() && y["gamma"].is_number()
                                          ? json(x["gamma"].get<double>() - y["gamma"].get<double>())
                                          : json(nullptr)}});
    }
    diff["rows"] = rows;
  } else if (ka == "dist-test") {
    for (const char* e : {"loo", "standard"}) {
      diff[e] = {{"ks_delta", a[e]["ks_vs_bn_unit_pdf"].get<double>() -
                                  b[e]["ks_vs_bn_unit_pdf"].get<double>()},
                 {"variance_delta", a[e]["variance"].get<double>() - b[e]["variance"].get<double>()}};
    }
  } else {
    throw FormatError("compare: unrecognized result kind '" + ka + "'");
  }
  return diff;
}

}  // namespace igb::experiment
