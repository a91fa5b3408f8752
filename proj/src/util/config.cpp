#include <array>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"
#include "ttdioc/config.hpp"

namespace ttdioc::util {
namespace {

using nlohmann::json;

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

void convert(const json& j, double& out, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path, "expected a number");
  out = j.get<double>();
}

void convert(const json& j, int& out, const std::string& path) {
  if (!j.is_number_integer()) throw ConfigError(path, "expected an integer");
  const auto v = j.get<std::int64_t>();
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    throw ConfigError(path, "integer out of range");
  }
  out = static_cast<int>(v);
}

void convert(const json& j, std::uint64_t& out, const std::string& path) {
  if (!j.is_number_unsigned()) throw ConfigError(path, "expected a nonnegative integer");
  out = j.get<std::uint64_t>();
}

void convert(const json& j, bool& out, const std::string& path) {
  if (!j.is_boolean()) throw ConfigError(path, "expected true or false");
  out = j.get<bool>();
}

void convert(const json& j, std::string& out, const std::string& path) {
  if (!j.is_string()) throw ConfigError(path, "expected a string");
  out = j.get<std::string>();
}

template <class T>
void convert(const json& j, std::vector<T>& out, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path, "expected an array");
  out.assign(j.size(), T{});
  for (std::size_t i = 0; i < j.size(); ++i) convert(j[i], out[i], path + "[" + std::to_string(i) + "]");
}

void convert(const json& j, Eigen::VectorXd& out, const std::string& path) {
  std::vector<double> v;
  convert(j, v, path);
  out = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void convert(const json& j, std::array<double, 3>& out, const std::string& path) {
  std::vector<double> v;
  convert(j, v, path);
  if (v.size() != 3) throw ConfigError(path, "expected 3 entries");
  std::copy(v.begin(), v.end(), out.begin());
}

/// One JSON object; remembers which keys were consumed so the rest can be
/// reported as unknown.
class Section {
 public:
  Section(const json& node, std::string path) : node_(&node), path_(std::move(path)) {
    if (!node.is_object()) throw ConfigError(path_, "expected an object");
  }

  bool has(const std::string& key) const { return node_->contains(key); }

  template <class T>
  void read(const std::string& key, T& target) {
    seen_.insert(key);
    auto it = node_->find(key);
    if (it != node_->end()) convert(*it, target, join(path_, key));
  }

  template <class Fn>
  void child(const std::string& key, Fn&& fn) {
    seen_.insert(key);
    auto it = node_->find(key);
    if (it == node_->end()) return;
    Section sub(*it, join(path_, key));
    fn(sub);
    sub.finish();
  }

  void finish() const {
    for (auto it = node_->begin(); it != node_->end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(join(path_, it.key()), "unknown key");
    }
  }

  const std::string& path() const { return path_; }

 private:
  const json* node_;
  std::string path_;
  std::set<std::string> seen_;
};

json vec(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

void check(bool ok, const std::string& path, const std::string& what) {
  if (!ok) throw ConfigError(path, what);
}

}  // namespace

RunConfig default_run_config(std::string_view system) {
  RunConfig c;
  c.setup = experiments::default_setup(cost::benchmark_from_string(system));
  c.kf.anchor = c.setup.anchor;
  return c;
}

RunConfig parse_run_config(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("malformed JSON: ") + e.what());
  }
  Section root(doc, "");
  std::string system;
  root.read("system", system);
  check(!system.empty(), "system", "required");
  RunConfig c;
  try {
    c = default_run_config(system);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("system", e.what());
  }
  experiments::BenchmarkSetup& s = c.setup;

  root.read("profile", c.profile);
  try {
    (void)cost::TruthProfile::parse(c.profile);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("profile", e.what());
  }
  root.read("seed", c.seed);
  root.read("threads", c.threads);
  check(c.threads >= 1, "threads", "must be at least 1");
  root.read("out", c.out);
  root.read("solution", c.solution);

  dynamics::PhysicalParams params = s.model.params();
  root.child("params", [&](Section& p) {
    p.read("mass", params.mass);
    p.read("spring", params.spring);
    p.read("damping", params.damping);
    p.read("length", params.length);
    p.read("attach_height", params.attach_height);
    p.read("pendulum_mass", params.pendulum_mass);
    p.read("pendulum_spring", params.pendulum_spring);
    p.read("pendulum_damping", params.pendulum_damping);
    p.read("gravity", params.gravity);
  });
  double ts = s.model.ts();
  root.read("ts", ts);
  check(ts > 0.0, "ts", "must be positive");
  try {
    s.model = dynamics::SystemModel(s.model.kind(), params, ts);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("params", e.what());
  }

  root.read("horizon", s.horizon);
  root.read("n_gen", s.n_gen);
  root.read("stride", s.stride);
  check(s.horizon >= 1, "horizon", "must be at least 1");
  check(s.stride >= 1, "stride", "must be at least 1");
  check(s.n_gen >= s.horizon, "n_gen", "must be at least the horizon");
  root.read("training_states", s.training_states);
  root.read("validation_states", s.validation_states);
  check(s.training_states >= 1, "training_states", "must be at least 1");
  check(s.validation_states >= 1, "validation_states", "must be at least 1");
  root.read("state_bounds", s.state_bounds);
  check(s.state_bounds.size() == s.model.state_dim(), "state_bounds", "one entry per state required");

  const double default_anchor = s.anchor;
  root.read("anchor", s.anchor);
  check(s.anchor != 0.0, "anchor", "must be nonzero");
  // The TTD anchor follows a changed scalar anchor unless set explicitly.
  if (s.anchor != default_anchor) s.ttd.anchor_scale = s.anchor;
  c.kf.anchor = s.anchor;

  root.child("solver", [&](Section& f) {
    f.read("tol_term", s.options.tol_term);
    f.read("tol_grad", s.options.tol_grad);
    f.read("max_outer", s.options.max_outer);
    f.read("max_inner", s.options.max_inner);
    f.read("eps_act", s.options.eps_act);
  });

  root.child("ttd", [&](Section& t) {
    kktioc::TtdConfig& cfg = s.ttd;
    t.read("basis_count", cfg.basis_count);
    t.child("omega", [&](Section& o) {
      o.read("init", cfg.omega_init);
      o.read("final", cfg.omega_final);
      o.read("step", cfg.omega_step);
    });
    t.child("beta", [&](Section& b) {
      b.read("init", cfg.beta_init);
      b.read("final", cfg.beta_final);
      b.read("step", cfg.beta_step);
    });
    t.read("anchor_scale", cfg.anchor_scale);
    t.read("anchor", cfg.anchor);
    t.read("nonneg_theta", cfg.nonneg_theta);
    t.read("fista_tol", cfg.fista_tol);
    t.read("fista_max_iter", cfg.fista_max_iter);
    t.read("lbfgs_tol", cfg.lbfgs_tol);
    t.read("refine_rounds", cfg.refine_rounds);
    t.read("refine_tol", cfg.refine_tol);
    try {
      cfg.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(t.path(), e.what());
    }
  });

  root.child("kf", [&](Section& k) {
    k.read("window", c.kf.window);
    k.read("process_var", c.kf.process_var);
    k.read("measurement_var", c.kf.measurement_var);
    k.read("initial_var", c.kf.initial_var);
    try {
      c.kf.validate(s.model.input_dim(), s.features.dim());
    } catch (const std::invalid_argument& e) {
      throw ConfigError(k.path(), e.what());
    }
  });

  root.child("sweep", [&](Section& w) {
    w.read("ts", c.sweep.ts);
    w.read("horizon", c.sweep.horizon);
    w.read("basis", c.sweep.basis);
    w.read("orders", c.sweep.orders);
    for (double v : c.sweep.ts) check(v > 0.0, "sweep.ts", "entries must be positive");
    for (int v : c.sweep.horizon) check(v >= 1, "sweep.horizon", "entries must be at least 1");
    for (int v : c.sweep.basis) check(v >= 0, "sweep.basis", "entries must be nonnegative");
    for (int v : c.sweep.orders) check(v >= 0, "sweep.orders", "entries must be nonnegative");
  });

  root.child("forward", [&](Section& f) {
    f.read("x0", c.forward.x0);
    f.read("xn", c.forward.xn);
    f.read("t_start", c.forward.t_start);
    const Eigen::Index n = s.model.state_dim();
    check(c.forward.x0.size() == 0 || c.forward.x0.size() == n, "forward.x0", "one entry per state required");
    check(c.forward.xn.size() == 0 || c.forward.xn.size() == n, "forward.xn", "one entry per state required");
  });

  root.finish();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str());
}

std::string run_config_to_json(const RunConfig& c) {
  const experiments::BenchmarkSetup& s = c.setup;
  const dynamics::PhysicalParams& p = s.model.params();
  const kktioc::TtdConfig& t = s.ttd;
  json j;
  j["system"] = std::string(cost::to_string(s.benchmark));
  j["profile"] = c.profile;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["out"] = c.out;
  j["solution"] = c.solution;
  j["params"] = {{"mass", p.mass},
                 {"spring", p.spring},
                 {"damping", p.damping},
                 {"length", p.length},
                 {"attach_height", p.attach_height},
                 {"pendulum_mass", p.pendulum_mass},
                 {"pendulum_spring", p.pendulum_spring},
                 {"pendulum_damping", p.pendulum_damping},
                 {"gravity", p.gravity}};
  j["ts"] = s.model.ts();
  j["horizon"] = s.horizon;
  j["n_gen"] = s.n_gen;
  j["stride"] = s.stride;
  j["training_states"] = s.training_states;
  j["validation_states"] = s.validation_states;
  j["state_bounds"] = vec(s.state_bounds);
  j["anchor"] = s.anchor;
  j["solver"] = {{"tol_term", s.options.tol_term},
                 {"tol_grad", s.options.tol_grad},
                 {"max_outer", s.options.max_outer},
                 {"max_inner", s.options.max_inner},
                 {"eps_act", s.options.eps_act}};
  j["ttd"] = {{"basis_count", t.basis_count},
              {"omega", {{"init", t.omega_init}, {"final", t.omega_final}, {"step", t.omega_step}}},
              {"beta", {{"init", t.beta_init}, {"final", t.beta_final}, {"step", t.beta_step}}},
              {"anchor_scale", t.anchor_scale},
              {"anchor", vec(t.anchor)},
              {"nonneg_theta", t.nonneg_theta},
              {"fista_tol", t.fista_tol},
              {"fista_max_iter", t.fista_max_iter},
              {"lbfgs_tol", t.lbfgs_tol},
              {"refine_rounds", t.refine_rounds},
              {"refine_tol", t.refine_tol}};
  j["kf"] = {{"window", c.kf.window},
             {"process_var", c.kf.process_var},
             {"measurement_var", c.kf.measurement_var},
             {"initial_var", c.kf.initial_var}};
  j["sweep"] = {{"ts", c.sweep.ts}, {"horizon", c.sweep.horizon}, {"basis", c.sweep.basis}, {"orders", c.sweep.orders}};
  j["forward"] = {{"x0", vec(c.forward.x0)}, {"xn", vec(c.forward.xn)}, {"t_start", c.forward.t_start}};
  return j.dump(2) + "\n";
}

}  // namespace ttdioc::util
