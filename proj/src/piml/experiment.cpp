#include "piml/experiment.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "piml/error.hpp"
#include "piml/oracle.hpp"

namespace piml {

namespace fs = std::filesystem;

static_assert(std::is_same_v<std::uint64_t, unsigned long> && std::is_same_v<std::size_t, unsigned long>,
              "seed and count fields share one reader");

const char* to_string(TaskKind k) {
  switch (k) {
    case TaskKind::lwr: return "lwr";
    case TaskKind::carfollowing: return "carfollowing";
    case TaskKind::toy: return "toy";
  }
  return "unknown";
}

TaskKind task_from_string(const std::string& s) {
  for (const TaskKind k : {TaskKind::lwr, TaskKind::carfollowing, TaskKind::toy}) {
    if (s == to_string(k)) return k;
  }
  fail_validation("unknown task '" + s + "' (expected lwr, carfollowing or toy)");
}

namespace {

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_io("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail_io("cannot write '" + path.string() + "'");
  out << text;
  if (!out) fail_io("write failed for '" + path.string() + "'");
}

void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

Json read_json(const std::string& path) {
  try {
    return Json::parse(read_text(path));
  } catch (const Json::parse_error& e) {
    fail_validation("'" + path + "' is not valid JSON: " + e.what());
  }
}

// Typed, strict view of one JSON object. Every key read is recorded so
// finish() can reject the rest.
class Fields {
 public:
  Fields(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail_validation("config: " + where() + " must be an object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  const Json* sub(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string child(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  void get(const char* key, double& out) {
    if (const Json* v = sub(key)) {
      if (!v->is_number()) type_error(key, "a number");
      out = v->get<double>();
    }
  }
  void get(const char* key, int& out) {
    if (const Json* v = sub(key)) {
      if (!v->is_number_integer()) type_error(key, "an integer");
      out = v->get<int>();
    }
  }
  void get(const char* key, std::size_t& out) {
    if (const Json* v = sub(key)) {
      if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<std::int64_t>() >= 0)) {
        type_error(key, "a nonnegative integer");
      }
      out = v->get<std::size_t>();
    }
  }
  void get(const char* key, bool& out) {
    if (const Json* v = sub(key)) {
      if (!v->is_boolean()) type_error(key, "true or false");
      out = v->get<bool>();
    }
  }
  void get(const char* key, std::string& out) {
    if (const Json* v = sub(key)) {
      if (!v->is_string()) type_error(key, "a string");
      out = v->get<std::string>();
    }
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) fail_validation("config: unknown key '" + child(key.c_str()) + "'");
    }
  }

  [[noreturn]] void type_error(const char* key, const char* what) const {
    fail_validation("config: '" + child(key) + "' must be " + what);
  }

 private:
  std::string where() const { return path_.empty() ? "top level" : "'" + path_ + "'"; }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename F>
void with_object(Fields& parent, const char* key, F&& body) {
  if (const Json* v = parent.sub(key)) {
    Fields f(*v, parent.child(key));
    body(f);
    f.finish();
  }
}

constexpr std::array<const char*, IdmParams::kCount> kIdmNames{"v0", "T0", "s0", "a_max", "b",
                                                               "delta"};

Json idm_to_json(const IdmParams& p) {
  Json j;
  const auto a = p.to_array();
  for (std::size_t i = 0; i < a.size(); ++i) j[kIdmNames[i]] = a[i];
  return j;
}

void idm_from(Fields& f, IdmParams& p) {
  auto a = p.to_array();
  for (std::size_t i = 0; i < a.size(); ++i) f.get(kIdmNames[i], a[i]);
  p = IdmParams::from_array(a);
}

IdmParams idm_from_json(const Json& j, const std::string& path) {
  IdmParams p;
  Fields f(j, path);
  idm_from(f, p);
  f.finish();
  return p;
}

Json weights_to_json(const LossWeights& w) { return {{"data", w.data}, {"physics", w.physics}}; }

LossWeights weights_from(const Json& j, const std::string& path) {
  LossWeights w;
  Fields f(j, path);
  f.get("data", w.data);
  f.get("physics", w.physics);
  f.finish();
  return w;
}

Json hidden_to_json(const MlpSpec& s) {
  return {{"hidden_layers", s.hidden_layers}, {"hidden_width", s.hidden_width}};
}

void hidden_from(Fields& f, MlpSpec& s) {
  f.get("hidden_layers", s.hidden_layers);
  f.get("hidden_width", s.hidden_width);
}

Json spec_to_json(const MlpSpec& s) {
  return {{"input_dim", s.input_dim},
          {"output_dim", s.output_dim},
          {"hidden_layers", s.hidden_layers},
          {"hidden_width", s.hidden_width}};
}

Json macro_columns_to_json(const MacroSchema& s) {
  return {{"sensor_id", s.sensor_id}, {"x", s.x}, {"t", s.t},
          {"q", s.q},                 {"rho", s.rho}, {"u", s.u}};
}

Json cf_columns_to_json(const CfSchema& s) {
  return {{"traj_id", s.traj_id},       {"t", s.t},
          {"leader_x", s.leader_x},     {"leader_v", s.leader_v},
          {"follower_x", s.follower_x}, {"follower_v", s.follower_v},
          {"h", s.h},                   {"dv", s.dv},
          {"acc", s.acc}};
}

Json train_to_json(const TrainConfig& t) {
  Json j;
  j["method"] = to_string(t.method);
  j["learning_rate"] = t.learning_rate;
  j["max_epochs"] = t.max_epochs;
  j["seed"] = t.seed;
  if (t.weights) j["weights"] = weights_to_json(*t.weights);
  j["gradient_threshold"] = t.gradient_threshold;
  j["conflict_threshold"] = t.conflict_threshold;
  j["eval_every"] = t.eval_every;
  j["optimizer"] = to_string(t.resolved_optimizer());
  j["adam"] = {{"beta1", t.adam.beta1}, {"beta2", t.adam.beta2}, {"eps", t.adam.eps}};
  return j;
}

void train_from(Fields& f, TrainConfig& t) {
  std::string method = to_string(t.method);
  f.get("method", method);
  t.method = method_from_string(method);
  f.get("learning_rate", t.learning_rate);
  f.get("max_epochs", t.max_epochs);
  f.get("seed", t.seed);
  if (const Json* w = f.sub("weights")) t.weights = weights_from(*w, f.child("weights"));
  f.get("gradient_threshold", t.gradient_threshold);
  f.get("conflict_threshold", t.conflict_threshold);
  f.get("eval_every", t.eval_every);
  if (f.has("optimizer")) {
    std::string opt;
    f.get("optimizer", opt);
    t.optimizer = optimizer_from_string(opt);
  }
  with_object(f, "adam", [&](Fields& a) {
    a.get("beta1", t.adam.beta1);
    a.get("beta2", t.adam.beta2);
    a.get("eps", t.adam.eps);
  });
}

Json ga_to_json(const GaConfig& g, const std::string& idm_file) {
  Json bounds;
  for (std::size_t i = 0; i < g.bounds.size(); ++i) {
    bounds[kIdmNames[i]] = {g.bounds[i].lo, g.bounds[i].hi};
  }
  return {{"population", g.population},
          {"generations", g.generations},
          {"crossover_rate", g.crossover_rate},
          {"mutation_rate", g.mutation_rate},
          {"mutation_scale", g.mutation_scale},
          {"final_mutation_ratio", g.final_mutation_ratio},
          {"blend_alpha", g.blend_alpha},
          {"bounds", bounds},
          {"calibrate_delta", g.calibrate_delta},
          {"fixed_delta", g.fixed_delta},
          {"polish", g.polish},
          {"seed", g.seed},
          {"idm_file", idm_file}};
}

void ga_from(Fields& f, GaConfig& g, std::string& idm_file) {
  f.get("population", g.population);
  f.get("generations", g.generations);
  f.get("crossover_rate", g.crossover_rate);
  f.get("mutation_rate", g.mutation_rate);
  f.get("mutation_scale", g.mutation_scale);
  f.get("final_mutation_ratio", g.final_mutation_ratio);
  f.get("blend_alpha", g.blend_alpha);
  with_object(f, "bounds", [&](Fields& b) {
    for (std::size_t i = 0; i < g.bounds.size(); ++i) {
      if (const Json* v = b.sub(kIdmNames[i])) {
        if (!v->is_array() || v->size() != 2 || !(*v)[0].is_number() || !(*v)[1].is_number()) {
          b.type_error(kIdmNames[i], "a [lo, hi] pair of numbers");
        }
        g.bounds[i] = {(*v)[0].get<double>(), (*v)[1].get<double>()};
      }
    }
  });
  f.get("calibrate_delta", g.calibrate_delta);
  f.get("fixed_delta", g.fixed_delta);
  f.get("polish", g.polish);
  f.get("seed", g.seed);
  f.get("idm_file", idm_file);
}

}  // namespace

void ExperimentConfig::validate() const {
  // Weights are checked where a scalarized run is started; sweeps and
  // comparisons supply their own.
  TrainConfig t = train;
  if (t.method == Method::scalarized && !t.weights) t.weights = LossWeights{};
  t.validate();
  if (task != TaskKind::toy) {
    if (!(data.split_ratio > 0.0 && data.split_ratio < 1.0)) {
      fail_validation("data.split_ratio must lie in (0, 1)");
    }
    if (data.path.empty() && !data.test_path.empty()) {
      fail_validation("data.test_path needs data.path");
    }
  }
  switch (task) {
    case TaskKind::lwr:
      macro_synth.validate();
      lwr.punn.validate();
      lwr.fd.validate();
      if (lwr.auxiliary < 1) fail_validation("sampling.auxiliary must be >= 1");
      break;
    case TaskKind::carfollowing:
      cf_synth.validate();
      cf.punn.validate();
      if (cf.observations < 1 || cf.collocation < 1) {
        fail_validation("sampling needs at least one observation and one collocation point");
      }
      if (idm_file.empty()) calibration.validate();
      break;
    case TaskKind::toy:
      if (toy.dim < 1) fail_validation("toy.dim must be >= 1");
      if (!(toy.init_scale > 0.0)) fail_validation("toy.init_scale must be positive");
      break;
  }
  if (sweep.seeds < 1) fail_validation("sweep.seeds must be >= 1");
  for (const auto& w : sweep.grid) w.validate();
  if (compare.seeds < 1) fail_validation("compare.seeds must be >= 1");
  if (compare.baseline_weights) compare.baseline_weights->validate();
  if (compare.metrics_csv.empty()) {
    bool found = false;
    for (const Method m : compare_methods()) found = found || compare.baseline == to_string(m);
    if (!found) fail_validation("compare.baseline '" + compare.baseline + "' is not a compared method");
  }
}

std::vector<LossWeights> ExperimentConfig::sweep_grid() const {
  if (!sweep.grid.empty()) return sweep.grid;
  switch (task) {
    case TaskKind::lwr: return beta_grid(1.0, {1.0, 10.0, 100.0, 1000.0, 10000.0});
    case TaskKind::carfollowing:
      return convex_grid({0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9});
    case TaskKind::toy: return convex_grid({0.1, 0.5, 0.9});
  }
  return {};
}

std::vector<Method> ExperimentConfig::compare_methods() const {
  if (!compare.methods.empty()) return compare.methods;
  return {Method::scalarized, Method::tmgd, Method::dcgd_center, Method::dcgd_avg,
          Method::dcgd_proj};
}

ExperimentConfig parse_experiment(const Json& j) {
  ExperimentConfig c;
  Fields top(j, "");
  if (!top.has("task")) fail_validation("config: missing key 'task'");
  std::string task;
  top.get("task", task);
  c.task = task_from_string(task);
  top.get("output_dir", c.output_dir);

  if (c.task != TaskKind::toy) {
    with_object(top, "data", [&](Fields& f) {
      f.get("path", c.data.path);
      f.get("test_path", c.data.test_path);
      f.get("split_ratio", c.data.split_ratio);
      f.get("split_seed", c.data.split_seed);
      with_object(f, "columns", [&](Fields& col) {
        if (c.task == TaskKind::lwr) {
          MacroSchema& s = c.data.macro_columns;
          col.get("sensor_id", s.sensor_id);
          col.get("x", s.x);
          col.get("t", s.t);
          col.get("q", s.q);
          col.get("rho", s.rho);
          col.get("u", s.u);
        } else {
          CfSchema& s = c.data.cf_columns;
          col.get("traj_id", s.traj_id);
          col.get("t", s.t);
          col.get("leader_x", s.leader_x);
          col.get("leader_v", s.leader_v);
          col.get("follower_x", s.follower_x);
          col.get("follower_v", s.follower_v);
          col.get("h", s.h);
          col.get("dv", s.dv);
          col.get("acc", s.acc);
        }
      });
    });
  }

  if (c.task == TaskKind::lwr) {
    with_object(top, "synthetic", [&](Fields& f) {
      MacroSynthConfig& s = c.macro_synth;
      f.get("v_free", s.fd.v_free);
      f.get("rho_jam", s.fd.rho_jam);
      f.get("road_length", s.road_length);
      f.get("horizon", s.horizon);
      f.get("cells", s.cells);
      f.get("sensors", s.sensors);
      f.get("sample_every", s.sample_every);
      f.get("noise", s.noise);
      f.get("seed", s.seed);
    });
    with_object(top, "network", [&](Fields& f) {
      with_object(f, "punn", [&](Fields& n) { hidden_from(n, c.lwr.punn); });
      with_object(f, "fd", [&](Fields& n) { hidden_from(n, c.lwr.fd); });
    });
    with_object(top, "sampling", [&](Fields& f) {
      f.get("auxiliary", c.lwr.auxiliary);
      f.get("seed", c.lwr.sample_seed);
    });
  } else if (c.task == TaskKind::carfollowing) {
    with_object(top, "synthetic", [&](Fields& f) {
      CfSynthConfig& s = c.cf_synth;
      std::string profile = to_string(s.profile);
      f.get("profile", profile);
      s.profile = leader_profile_from_string(profile);
      f.get("count", s.count);
      f.get("horizon", s.horizon);
      f.get("dt", s.dt);
      f.get("noise", s.noise);
      f.get("seed", s.seed);
      with_object(f, "idm", [&](Fields& p) { idm_from(p, s.idm); });
    });
    with_object(top, "network", [&](Fields& f) {
      with_object(f, "punn", [&](Fields& n) { hidden_from(n, c.cf.punn); });
    });
    with_object(top, "sampling", [&](Fields& f) {
      f.get("observations", c.cf.observations);
      f.get("collocation", c.cf.collocation);
      f.get("seed", c.cf.sample_seed);
    });
    with_object(top, "calibration", [&](Fields& f) { ga_from(f, c.calibration, c.idm_file); });
  } else {
    with_object(top, "toy", [&](Fields& f) {
      f.get("dim", c.toy.dim);
      f.get("seed", c.toy.seed);
      f.get("init_scale", c.toy.init_scale);
    });
  }

  with_object(top, "train", [&](Fields& f) { train_from(f, c.train); });
  with_object(top, "sweep", [&](Fields& f) {
    if (const Json* g = f.sub("grid")) {
      if (!g->is_array()) f.type_error("grid", "an array of weight objects");
      for (std::size_t i = 0; i < g->size(); ++i) {
        c.sweep.grid.push_back(weights_from((*g)[i], f.child("grid") + "[" + std::to_string(i) + "]"));
      }
    }
    f.get("seeds", c.sweep.seeds);
  });
  with_object(top, "compare", [&](Fields& f) {
    if (const Json* m = f.sub("methods")) {
      if (!m->is_array()) f.type_error("methods", "an array of method names");
      for (const auto& name : *m) {
        if (!name.is_string()) f.type_error("methods", "an array of method names");
        c.compare.methods.push_back(method_from_string(name.get<std::string>()));
      }
    }
    f.get("seeds", c.compare.seeds);
    f.get("baseline", c.compare.baseline);
    if (const Json* w = f.sub("baseline_weights")) {
      c.compare.baseline_weights = weights_from(*w, f.child("baseline_weights"));
    }
    f.get("metrics_csv", c.compare.metrics_csv);
  });
  top.finish();
  c.validate();
  return c;
}

Json experiment_to_json(const ExperimentConfig& c) {
  Json j;
  j["task"] = to_string(c.task);
  j["output_dir"] = c.output_dir;
  if (c.task != TaskKind::toy) {
    j["data"] = {{"path", c.data.path},
                 {"test_path", c.data.test_path},
                 {"split_ratio", c.data.split_ratio},
                 {"split_seed", c.data.split_seed},
                 {"columns", c.task == TaskKind::lwr ? macro_columns_to_json(c.data.macro_columns)
                                                     : cf_columns_to_json(c.data.cf_columns)}};
  }
  if (c.task == TaskKind::lwr) {
    const MacroSynthConfig& s = c.macro_synth;
    j["synthetic"] = {{"v_free", s.fd.v_free},       {"rho_jam", s.fd.rho_jam},
                      {"road_length", s.road_length}, {"horizon", s.horizon},
                      {"cells", s.cells},             {"sensors", s.sensors},
                      {"sample_every", s.sample_every}, {"noise", s.noise},
                      {"seed", s.seed}};
    j["network"] = {{"punn", hidden_to_json(c.lwr.punn)}, {"fd", hidden_to_json(c.lwr.fd)}};
    j["sampling"] = {{"auxiliary", c.lwr.auxiliary}, {"seed", c.lwr.sample_seed}};
  } else if (c.task == TaskKind::carfollowing) {
    const CfSynthConfig& s = c.cf_synth;
    j["synthetic"] = {{"profile", to_string(s.profile)},
                      {"count", s.count},
                      {"horizon", s.horizon},
                      {"dt", s.dt},
                      {"noise", s.noise},
                      {"seed", s.seed},
                      {"idm", idm_to_json(s.idm)}};
    j["network"] = {{"punn", hidden_to_json(c.cf.punn)}};
    j["sampling"] = {{"observations", c.cf.observations},
                     {"collocation", c.cf.collocation},
                     {"seed", c.cf.sample_seed}};
    j["calibration"] = ga_to_json(c.calibration, c.idm_file);
  } else {
    j["toy"] = {{"dim", c.toy.dim}, {"seed", c.toy.seed}, {"init_scale", c.toy.init_scale}};
  }
  j["train"] = train_to_json(c.train);
  Json grid = Json::array();
  for (const auto& w : c.sweep_grid()) grid.push_back(weights_to_json(w));
  j["sweep"] = {{"grid", grid}, {"seeds", c.sweep.seeds}};
  Json methods = Json::array();
  for (const Method m : c.compare_methods()) methods.push_back(to_string(m));
  Json cmp = {{"methods", methods}, {"seeds", c.compare.seeds}, {"baseline", c.compare.baseline}};
  if (c.compare.baseline_weights) cmp["baseline_weights"] = weights_to_json(*c.compare.baseline_weights);
  cmp["metrics_csv"] = c.compare.metrics_csv;
  j["compare"] = cmp;
  return j;
}

ExperimentConfig load_experiment(const std::string& path, const Json& overrides) {
  Json j = read_json(path);
  if (!overrides.is_null() && !overrides.empty()) j.merge_patch(overrides);
  return parse_experiment(j);
}

// ---------------------------------------------------------------------------
// Checkpoints

std::vector<TensorSlot> Checkpoint::layout() const {
  std::vector<TensorSlot> out;
  for (const auto& net : networks) {
    std::size_t off = net.offset;
    int in = net.spec.input_dim;
    for (int l = 0; l <= net.spec.hidden_layers; ++l) {
      const int width = l == net.spec.hidden_layers ? net.spec.output_dim : net.spec.hidden_width;
      out.push_back({net.name + ".w" + std::to_string(l), width, in, off});
      off += static_cast<std::size_t>(width * in);
      out.push_back({net.name + ".b" + std::to_string(l), 1, width, off});
      off += static_cast<std::size_t>(width);
      in = width;
    }
  }
  return out;
}

namespace {

Json vec_to_json(const Vec& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Vec vec_from_json(const Json& j, const std::string& what) {
  if (!j.is_array()) fail_validation("checkpoint: '" + what + "' must be an array");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) fail_validation("checkpoint: non-numeric entry in '" + what + "'");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

const Json& require(const Json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) fail_validation(std::string("checkpoint: missing '") + key + "'");
  return *it;
}

}  // namespace

Json checkpoint_to_json(const Checkpoint& c) {
  Json j;
  j["format"] = "piml-checkpoint";
  j["version"] = 1;
  j["task"] = to_string(c.task);
  j["method"] = to_string(c.method);
  j["seed"] = c.seed;
  Json nets = Json::array();
  for (const auto& n : c.networks) {
    Json e = spec_to_json(n.spec);
    e["name"] = n.name;
    e["offset"] = n.offset;
    nets.push_back(e);
  }
  j["networks"] = nets;
  Json layout = Json::array();
  for (const auto& s : c.layout()) {
    layout.push_back({{"name", s.name}, {"rows", s.rows}, {"cols", s.cols}, {"offset", s.offset}});
  }
  j["layout"] = layout;
  if (c.lwr_scales) {
    const LwrScales& s = *c.lwr_scales;
    j["lwr_scales"] = {{"t_min", s.t_min},         {"t_span", s.t_span},
                       {"x_min", s.x_min},         {"x_span", s.x_span},
                       {"rho_scale", s.rho_scale}, {"q_scale", s.q_scale}};
  }
  if (c.cf_scales) {
    const CfScales& s = *c.cf_scales;
    j["cf_scales"] = {{"v_max", s.v_max},
                      {"dv_abs_max", s.dv_abs_max},
                      {"h_min", s.h_min},
                      {"h_span", s.h_span}};
  }
  if (c.idm) j["idm"] = idm_to_json(*c.idm);
  if (c.toy_a) j["toy_a"] = vec_to_json(*c.toy_a);
  if (c.toy_b) j["toy_b"] = vec_to_json(*c.toy_b);
  j["params"] = vec_to_json(c.params);
  return j;
}

Checkpoint checkpoint_from_json(const Json& j) {
  if (!j.is_object() || j.value("format", "") != "piml-checkpoint") {
    fail_validation("not a checkpoint file");
  }
  if (require(j, "version") != 1) fail_validation("unsupported checkpoint version");
  Checkpoint c;
  try {
    c.task = task_from_string(require(j, "task").get<std::string>());
    c.method = method_from_string(require(j, "method").get<std::string>());
    c.seed = require(j, "seed").get<std::uint64_t>();
    std::size_t expected = 0;
    for (const auto& e : require(j, "networks")) {
      NetworkEntry n;
      n.name = require(e, "name").get<std::string>();
      n.spec = {require(e, "input_dim").get<int>(), require(e, "output_dim").get<int>(),
                require(e, "hidden_layers").get<int>(), require(e, "hidden_width").get<int>()};
      n.spec.validate();
      n.offset = require(e, "offset").get<std::size_t>();
      if (n.offset != expected) fail_validation("checkpoint: networks are not contiguous");
      expected += n.spec.num_params();
      c.networks.push_back(n);
    }
    c.params = vec_from_json(require(j, "params"), "params");
    if (c.task == TaskKind::toy) expected = static_cast<std::size_t>(c.params.size());
    if (static_cast<std::size_t>(c.params.size()) != expected) {
      fail_validation("checkpoint: " + std::to_string(c.params.size()) +
                      " parameters, networks need " + std::to_string(expected));
    }
    if (j.contains("lwr_scales")) {
      const Json& s = j["lwr_scales"];
      c.lwr_scales = LwrScales{require(s, "t_min").get<double>(), require(s, "t_span").get<double>(),
                               require(s, "x_min").get<double>(), require(s, "x_span").get<double>(),
                               require(s, "rho_scale").get<double>(),
                               require(s, "q_scale").get<double>()};
      c.lwr_scales->validate();
    }
    if (j.contains("cf_scales")) {
      const Json& s = j["cf_scales"];
      c.cf_scales = CfScales{require(s, "v_max").get<double>(), require(s, "dv_abs_max").get<double>(),
                             require(s, "h_min").get<double>(), require(s, "h_span").get<double>()};
      c.cf_scales->validate();
    }
    if (j.contains("idm")) c.idm = idm_from_json(j["idm"], "idm");
    if (j.contains("toy_a")) c.toy_a = vec_from_json(j["toy_a"], "toy_a");
    if (j.contains("toy_b")) c.toy_b = vec_from_json(j["toy_b"], "toy_b");
  } catch (const Json::exception& e) {
    fail_validation(std::string("checkpoint: malformed field: ") + e.what());
  }
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& c) {
  write_json(path, checkpoint_to_json(c));
}

Checkpoint load_checkpoint(const std::string& path) { return checkpoint_from_json(read_json(path)); }

// ---------------------------------------------------------------------------
// Data and task preparation

namespace {

struct MacroData {
  std::vector<MacroRow> train;
  std::vector<MacroRow> test;
  std::size_t flags = 0;
};

struct CfData {
  std::vector<CfTrajectory> train;
  std::vector<CfTrajectory> test;
};

// Raw bytes of the data files, hashed into run summaries.
std::string data_inputs(const ExperimentConfig& c) {
  std::string out;
  if (!c.data.path.empty()) out += read_text(c.data.path);
  if (!c.data.test_path.empty()) out += read_text(c.data.test_path);
  return out;
}

MacroData macro_data(const ExperimentConfig& c) {
  MacroscopicDataset all = c.data.path.empty() ? generate_synthetic_macro(c.macro_synth)
                                               : load_macroscopic(c.data.path, c.data.macro_columns);
  MacroData out;
  out.flags = all.flags.size();
  if (!c.data.test_path.empty()) {
    out.train = std::move(all.rows);
    out.test = load_macroscopic(c.data.test_path, c.data.macro_columns).rows;
  } else {
    auto s = split(all.rows, c.data.split_ratio, c.data.split_seed);
    out.train = std::move(s.train);
    out.test = std::move(s.test);
  }
  return out;
}

CfData cf_data(const ExperimentConfig& c) {
  std::vector<CfTrajectory> all = c.data.path.empty()
                                      ? generate_synthetic_cf(c.cf_synth)
                                      : load_trajectories(c.data.path, c.data.cf_columns);
  CfData out;
  if (!c.data.test_path.empty()) {
    out.train = std::move(all);
    out.test = load_trajectories(c.data.test_path, c.data.cf_columns);
  } else {
    auto s = split(all, c.data.split_ratio, c.data.split_seed);
    out.train = std::move(s.train);
    out.test = std::move(s.test);
  }
  return out;
}

Json calibration_to_json(const CalibrationResult& r, std::size_t samples) {
  Json log = Json::array();
  for (const auto& g : r.log) {
    log.push_back({{"generation", g.generation}, {"best", g.best_fitness}, {"mean", g.mean_fitness}});
  }
  return {{"params", idm_to_json(r.params)},
          {"fitness", r.fitness},
          {"samples", samples},
          {"log", log}};
}

struct Calibrated {
  CalibrationResult result;
  std::size_t samples = 0;
  bool from_file = false;
};

Calibrated calibrate(const ExperimentConfig& c, const std::vector<CfTrajectory>& train) {
  const auto samples = calibration_samples(train);
  Calibrated out;
  out.samples = samples.size();
  if (!c.idm_file.empty()) {
    const Json j = read_json(c.idm_file);
    if (!j.is_object() || !j.contains("params")) {
      fail_validation("'" + c.idm_file + "' has no 'params' object");
    }
    out.result.params = idm_from_json(j["params"], "params");
    out.result.params.validate();
    out.result.fitness = idm_fitness(out.result.params, samples);
    out.from_file = true;
  } else {
    out.result = calibrate_idm(samples, c.calibration);
  }
  return out;
}

struct Prepared {
  std::unique_ptr<Task> task;
  std::optional<Calibrated> calibration;
};

Prepared prepare(const ExperimentConfig& c) {
  Prepared p;
  switch (c.task) {
    case TaskKind::lwr: {
      MacroData d = macro_data(c);
      p.task = std::make_unique<LwrTask>(std::move(d.train), std::move(d.test), c.lwr);
      break;
    }
    case TaskKind::carfollowing: {
      CfData d = cf_data(c);
      p.calibration = calibrate(c, d.train);
      p.task = std::make_unique<CfTask>(d.train, std::move(d.test), p.calibration->result.params, c.cf);
      break;
    }
    case TaskKind::toy:
      p.task = std::make_unique<QuadraticToyTask>(
          QuadraticToyTask::random(c.toy.dim, c.toy.seed));
      if (c.toy.init_scale != 1.0) {
        const auto& t = static_cast<const QuadraticToyTask&>(*p.task);
        p.task = std::make_unique<QuadraticToyTask>(t.a(), t.b(), c.toy.init_scale);
      }
      break;
  }
  return p;
}

Checkpoint make_checkpoint(const ExperimentConfig& c, const Task& task, const Vec& params) {
  Checkpoint ck;
  ck.task = c.task;
  ck.method = c.train.method;
  ck.seed = c.train.seed;
  ck.params = params;
  if (const auto* lwr = dynamic_cast<const LwrTask*>(&task)) {
    ck.networks = {{"punn", lwr->model().punn.spec(), 0},
                   {"fd", lwr->model().fd.spec(), lwr->model().fd.offset()}};
    ck.lwr_scales = lwr->model().scales;
  } else if (const auto* cf = dynamic_cast<const CfTask*>(&task)) {
    ck.networks = {{"punn", cf->punn().spec(), 0}};
    ck.cf_scales = cf->scales();
    ck.idm = cf->idm();
  } else if (const auto* toy = dynamic_cast<const QuadraticToyTask*>(&task)) {
    ck.toy_a = toy->a();
    ck.toy_b = toy->b();
  }
  return ck;
}

Json metrics_to_json(const Metrics& m) {
  Json j = Json::object();
  for (const auto& [k, v] : m) j[k] = v;
  return j;
}

void prepare_output(const ExperimentConfig& c) {
  std::error_code ec;
  fs::create_directories(c.output_dir, ec);
  if (ec) fail_io("cannot create output directory '" + c.output_dir + "': " + ec.message());
  write_json(fs::path(c.output_dir) / "config.json", experiment_to_json(c));
}

// Trains one run of `c.train` and writes the run directory.
Json run_one(const ExperimentConfig& c, const Prepared& p, const std::string& inputs) {
  prepare_output(c);
  const Json config = experiment_to_json(c);
  TrainResult r = train(*p.task, c.train);
  const fs::path dir(c.output_dir);
  write_text(dir / "runlog.csv", r.log.to_csv());
  const Checkpoint ck = make_checkpoint(c, *p.task, r.params);
  write_json(dir / "checkpoint.json", checkpoint_to_json(ck));
  Json summary;
  summary["task"] = to_string(c.task);
  summary["method"] = to_string(c.train.method);
  summary["seed"] = c.train.seed;
  summary["stop_reason"] = to_string(r.log.stop);
  summary["epochs_run"] = r.log.epochs_run;
  summary["metrics"] = metrics_to_json(r.log.metrics);
  if (p.calibration) summary["idm"] = idm_to_json(p.calibration->result.params);
  summary["input_hash"] = git_blob_sha1(config.dump() + "\n" + inputs);
  summary["config"] = config;
  write_json(dir / "summary.json", summary);
  return summary;
}

double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (const double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double stddev_of(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double s = 0.0;
  for (const double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

std::string plus_minus(double mean, double sd) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%.4f \xC2\xB1 %.4f", mean, sd);
  return buf;
}

}  // namespace

Metrics checkpoint_metrics(const Checkpoint& ck, const ExperimentConfig& cfg,
                           const std::string& data_path) {
  if (ck.task != cfg.task) {
    fail_validation(std::string("checkpoint is for task ") + to_string(ck.task) + ", config is " +
                    to_string(cfg.task));
  }
  switch (ck.task) {
    case TaskKind::lwr: {
      if (ck.networks.size() != 2 || !ck.lwr_scales) fail_validation("checkpoint lacks the LWR model");
      const std::vector<MacroRow> rows =
          data_path.empty() ? macro_data(cfg).test
                            : load_macroscopic(data_path, cfg.data.macro_columns).rows;
      const LwrModel model{Mlp(ck.networks[0].spec, ck.networks[0].offset),
                           Mlp(ck.networks[1].spec, ck.networks[1].offset), *ck.lwr_scales};
      return lwr_metrics(model, ck.params, rows);
    }
    case TaskKind::carfollowing: {
      if (ck.networks.size() != 1 || !ck.cf_scales) fail_validation("checkpoint lacks the PUNN");
      const std::vector<CfTrajectory> trajs =
          data_path.empty() ? cf_data(cfg).test : load_trajectories(data_path, cfg.data.cf_columns);
      return cf_metrics(Mlp(ck.networks[0].spec, 0), *ck.cf_scales, ck.params, trajs);
    }
    case TaskKind::toy: {
      if (!ck.toy_a || !ck.toy_b) fail_validation("checkpoint lacks the toy objectives");
      return QuadraticToyTask(*ck.toy_a, *ck.toy_b).metrics(ck.params);
    }
  }
  return {};
}

std::string git_blob_sha1(std::string_view content) {
  const std::string blob = "blob " + std::to_string(content.size()) + '\0' + std::string(content);
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(blob.data(), blob.size(), md, &len, EVP_sha1(), nullptr) != 1) {
    fail_io("SHA-1 digest failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 0xF];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Commands

Json cmd_simulate(const ExperimentConfig& c) {
  prepare_output(c);
  const fs::path dir(c.output_dir);
  if (c.task == TaskKind::lwr) {
    const MacroscopicDataset ds = generate_synthetic_macro(c.macro_synth);
    write_macroscopic((dir / "macro.csv").string(), ds);
    const MacroBounds b = ds.bounds();
    const Json sidecar = {{"rows", ds.rows.size()},
                          {"flagged_rows", ds.flags.size()},
                          {"bounds",
                           {{"t_min", b.t_min}, {"t_max", b.t_max}, {"x_min", b.x_min},
                            {"x_max", b.x_max}, {"rho_max", b.rho_max}, {"q_max", b.q_max}}},
                          {"fd", {{"v_free", c.macro_synth.fd.v_free},
                                  {"rho_jam", c.macro_synth.fd.rho_jam}}}};
    write_json(dir / "macro.json", sidecar);
    return {{"data", (dir / "macro.csv").string()}, {"rows", ds.rows.size()}};
  }
  if (c.task == TaskKind::carfollowing) {
    const auto trajs = generate_synthetic_cf(c.cf_synth);
    write_trajectories((dir / "trajectories.csv").string(), trajs);
    std::vector<CfState> states;
    for (const auto& tr : trajs) {
      for (std::size_t i = 0; i < tr.size(); ++i) states.push_back(tr.state(i));
    }
    const CfScales s = CfScales::fit(states);
    const Json sidecar = {{"trajectories", trajs.size()},
                          {"samples", states.size()},
                          {"dt", c.cf_synth.dt},
                          {"normalization",
                           {{"v_max", s.v_max}, {"dv_abs_max", s.dv_abs_max},
                            {"h_min", s.h_min}, {"h_span", s.h_span}}},
                          {"idm", idm_to_json(c.cf_synth.idm)}};
    write_json(dir / "trajectories.json", sidecar);
    return {{"data", (dir / "trajectories.csv").string()}, {"trajectories", trajs.size()}};
  }
  fail_validation("simulate generates lwr or carfollowing data, not toy");
}

Json cmd_calibrate(const ExperimentConfig& c) {
  if (c.task != TaskKind::carfollowing) fail_validation("calibrate needs task carfollowing");
  prepare_output(c);
  const CfData d = cf_data(c);
  const Calibrated cal = calibrate(c, d.train);
  const Json j = calibration_to_json(cal.result, cal.samples);
  write_json(fs::path(c.output_dir) / "idm.json", j);
  return {{"idm", j["params"]}, {"fitness", cal.result.fitness}};
}

Json cmd_train(const ExperimentConfig& c) {
  prepare_output(c);
  const Prepared p = prepare(c);
  if (p.calibration && !p.calibration->from_file) {
    write_json(fs::path(c.output_dir) / "idm.json",
               calibration_to_json(p.calibration->result, p.calibration->samples));
  }
  const Json s = run_one(c, p, data_inputs(c));
  return {{"method", s["method"]}, {"stop_reason", s["stop_reason"]},
          {"epochs_run", s["epochs_run"]}, {"metrics", s["metrics"]}};
}

Json cmd_eval(const ExperimentConfig& c, const std::string& target, const std::string& data_path) {
  prepare_output(c);
  std::vector<fs::path> files;
  if (fs::is_directory(target)) {
    for (const auto& e : fs::recursive_directory_iterator(target)) {
      if (e.is_regular_file() && e.path().filename() == "checkpoint.json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) fail_validation("no checkpoint.json under '" + target + "'");
  } else if (fs::exists(target)) {
    files.push_back(target);
  } else {
    fail_io("no such checkpoint '" + target + "'");
  }
  Json runs = Json::array();
  std::map<std::string, std::vector<double>> samples;
  for (const auto& f : files) {
    const Metrics m = checkpoint_metrics(load_checkpoint(f.string()), c, data_path);
    for (const auto& [k, v] : m) samples[k].push_back(v);
    runs.push_back({{"checkpoint", f.string()}, {"metrics", metrics_to_json(m)}});
  }
  Json mean = Json::object(), sd = Json::object(), row = Json::object();
  for (const auto& [k, xs] : samples) {
    mean[k] = mean_of(xs);
    sd[k] = stddev_of(xs);
    row[k] = plus_minus(mean_of(xs), stddev_of(xs));
  }
  const Json out = {{"data", data_path.empty() ? std::string("config test split") : data_path},
                    {"checkpoints", files.size()},
                    {"mean", mean},
                    {"std", sd},
                    {"row", row},
                    {"runs", runs}};
  write_json(fs::path(c.output_dir) / "metrics.json", out);
  return {{"checkpoints", files.size()}, {"mean", mean}, {"std", sd}};
}

Json cmd_sweep(const ExperimentConfig& c) {
  prepare_output(c);
  const Prepared p = prepare(c);
  const auto rows = sweep_scalarization(*p.task, c.train, c.sweep_grid(), c.sweep.seeds);
  write_text(fs::path(c.output_dir) / "sweep.csv", sweep_to_csv(rows));
  for (const auto& r : rows) {
    if (r.best) {
      return {{"rows", rows.size()},
              {"best", weights_to_json(r.weights)},
              {"mean", metrics_to_json(r.mean)}};
    }
  }
  return {{"rows", rows.size()}};
}

Json cmd_compare(const ExperimentConfig& c) {
  prepare_output(c);
  const fs::path dir(c.output_dir);
  MetricTable means;
  if (!c.compare.metrics_csv.empty()) {
    means = parse_metric_table(read_text(c.compare.metrics_csv));
    write_text(dir / "comparison.csv", format_metric_table(means, ""));
  } else {
    const Prepared p = prepare(c);
    const std::string inputs = data_inputs(c);
    const auto methods = c.compare_methods();
    std::optional<LossWeights> baseline_w = c.compare.baseline_weights;
    const bool needs_weights =
        std::find(methods.begin(), methods.end(), Method::scalarized) != methods.end();
    if (needs_weights && !baseline_w) {
      const auto rows = sweep_scalarization(*p.task, c.train, c.sweep_grid(), c.sweep.seeds);
      write_text(dir / "sweep.csv", sweep_to_csv(rows));
      for (const auto& r : rows) {
        if (r.best) baseline_w = r.weights;
      }
    }
    std::map<std::string, std::vector<double>> stds;
    for (const Method m : methods) {
      std::map<std::string, std::vector<double>> samples;
      for (int s = 0; s < c.compare.seeds; ++s) {
        ExperimentConfig run = c;
        run.train.method = m;
        run.train.seed = c.train.seed + static_cast<std::uint64_t>(s);
        run.train.weights = m == Method::scalarized ? baseline_w : std::nullopt;
        run.output_dir = (dir / "runs" / (std::string(to_string(m)) + "_seed" +
                                          std::to_string(run.train.seed)))
                             .string();
        const Json summary = run_one(run, p, inputs);
        for (const auto& [k, v] : summary["metrics"].items()) samples[k].push_back(v.get<double>());
      }
      if (means.metrics.empty()) {
        for (const auto& [k, xs] : samples) means.metrics.push_back(k);
      }
      means.methods.push_back(to_string(m));
      std::vector<double> row;
      for (const auto& k : means.metrics) {
        row.push_back(mean_of(samples.at(k)));
        stds[to_string(m)].push_back(stddev_of(samples.at(k)));
      }
      means.values.push_back(std::move(row));
    }
    std::string csv = "method";
    for (const auto& k : means.metrics) csv += "," + k + "_mean," + k + "_std";
    csv += "\n";
    for (std::size_t i = 0; i < means.methods.size(); ++i) {
      csv += means.methods[i];
      for (std::size_t k = 0; k < means.metrics.size(); ++k) {
        csv += "," + format_double(means.values[i][k]) + "," +
               format_double(stds[means.methods[i]][k]);
      }
      csv += "\n";
    }
    write_text(dir / "comparison.csv", csv);
  }
  const MetricTable imp = relative_improvement(means, c.compare.baseline);
  write_text(dir / "improvement.csv", format_metric_table(imp, "_improvement_pct"));
  Json rows = Json::object();
  for (std::size_t i = 0; i < imp.methods.size(); ++i) {
    Json r = Json::object();
    for (std::size_t k = 0; k < imp.metrics.size(); ++k) r[imp.metrics[k]] = imp.values[i][k];
    rows[imp.methods[i]] = r;
  }
  return {{"baseline", c.compare.baseline}, {"improvement_pct", rows}};
}

Json cmd_oracle(int instances, std::uint64_t seed, double grid_step) {
  const OracleReport r = run_min_norm_oracle(instances, seed, grid_step);
  return {{"instances", r.instances},
          {"max_grid_deviation", r.max_grid_deviation},
          {"max_closed_form_deviation", r.max_closed_form_deviation},
          {"min_certificate", r.min_certificate},
          {"seconds", r.seconds}};
}

// ---------------------------------------------------------------------------
// Relative improvement tables

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

MetricTable parse_metric_table(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> header;
  while (header.empty() && std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") != std::string::npos) header = split_csv_line(line);
  }
  if (header.empty() || header[0] != "method") {
    fail_validation("metrics table must start with a 'method' column");
  }
  MetricTable t;
  std::vector<std::size_t> cols;
  for (std::size_t i = 1; i < header.size(); ++i) {
    std::string name = header[i];
    if (ends_with(name, "_std")) continue;
    if (ends_with(name, "_mean")) name.resize(name.size() - 5);
    t.metrics.push_back(name);
    cols.push_back(i);
  }
  if (t.metrics.empty()) fail_validation("metrics table has no metric columns");
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      fail_validation("metrics table line " + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " fields");
    }
    std::vector<double> row;
    for (const std::size_t c : cols) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cells[c], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != cells[c].size()) {
        fail_validation("metrics table line " + std::to_string(line_no) + ": non-numeric value '" +
                        cells[c] + "'");
      }
      row.push_back(v);
    }
    t.methods.push_back(cells[0]);
    t.values.push_back(std::move(row));
  }
  if (t.methods.empty()) fail_validation("metrics table has no rows");
  return t;
}

std::string format_metric_table(const MetricTable& t, const std::string& suffix) {
  std::string out = "method";
  for (const auto& m : t.metrics) out += "," + m + suffix;
  out += "\n";
  for (std::size_t i = 0; i < t.methods.size(); ++i) {
    out += t.methods[i];
    for (const double v : t.values[i]) out += "," + format_double(v);
    out += "\n";
  }
  return out;
}

MetricTable relative_improvement(const MetricTable& t, const std::string& baseline) {
  const auto it = std::find(t.methods.begin(), t.methods.end(), baseline);
  if (it == t.methods.end()) fail_validation("baseline row '" + baseline + "' is missing");
  const auto& base = t.values[static_cast<std::size_t>(it - t.methods.begin())];
  // Metrics with a zero baseline (e.g. collision counts) have no relative
  // improvement and are left out.
  std::vector<std::size_t> kept;
  MetricTable out;
  for (std::size_t k = 0; k < t.metrics.size(); ++k) {
    if (base[k] == 0.0) continue;
    kept.push_back(k);
    out.metrics.push_back(t.metrics[k]);
  }
  if (kept.empty()) fail_numerical("baseline '" + baseline + "' is zero on every metric");
  for (std::size_t i = 0; i < t.methods.size(); ++i) {
    std::vector<double> row;
    for (const std::size_t k : kept) row.push_back(100.0 * (base[k] - t.values[i][k]) / base[k]);
    out.methods.push_back(t.methods[i]);
    out.values.push_back(std::move(row));
  }
  return out;
}

}  // namespace piml
