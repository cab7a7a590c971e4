#include "qrnet/config.hpp"

#include <fstream>

#include "qrnet/errors.hpp"

namespace qrnet {

Json default_config() {
  return Json::parse(R"({
  "problem": {"type": "burgers", "n": 16, "nu": 0.02, "beta": 0.1, "kappa": 25.0, "R": 0.5},
  "datagen": {
    "trajectories": 16, "workers": 1,
    "tf_initial": 10.0, "tf_extension": 10.0, "max_extensions": 5,
    "eps_L": 1e-6, "eps_H": 1e-3, "truncation_T": 3.0,
    "bvp_tol": 1e-6, "bvp_max_nodes": 5000, "bvp_max_newton": 20,
    "initial_mesh_nodes": 60, "warm_rtol": 1e-6, "warm_atol": 1e-8
  },
  "model": {"mode": "qrnet", "hidden": [32, 32, 32, 32]},
  "train": {
    "mu_lambda": 0.0, "mu_u": 5.0, "max_iter": 2000, "memory": 10,
    "grad_tol": 1e-8, "rel_decrease_tol": 1e-12, "workers": 1, "chunk": 512
  },
  "experiment": {
    "sizes": [16], "trials": 5, "validation_trajectories": 50,
    "norms": [0.2, 0.6, 1.0], "per_group": 20, "tf": 30.0,
    "rtol": 1e-6, "atol": 1e-8, "workers": 1, "record_timing": false
  }
})");
}

namespace {

bool compatible(const Json& def, const Json& val) {
  if (def.is_number()) {
    if (def.is_number_integer()) return val.is_number_integer();
    return val.is_number();
  }
  if (def.is_boolean()) return val.is_boolean();
  if (def.is_string()) return val.is_string();
  if (def.is_array()) {
    if (!val.is_array()) return false;
    if (def.empty()) return true;
    for (const auto& e : val)
      if (!compatible(def.front(), e)) return false;
    return true;
  }
  if (def.is_object()) return val.is_object();
  return true;
}

}  // namespace

void merge_config(Json& base, const Json& user, const std::string& where) {
  if (!user.is_object()) throw ConfigError("config" + where + ": expected an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string path = where.empty() ? it.key() : where + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown config key '" + path + "'");
    Json& slot = base[it.key()];
    if (slot.is_object()) {
      merge_config(slot, it.value(), path);
    } else {
      if (!compatible(slot, it.value()))
        throw ConfigError("config key '" + path + "' has the wrong type");
      slot = it.value();
    }
  }
}

Json load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  Json user;
  try {
    user = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  Json cfg = default_config();
  merge_config(cfg, user);
  return cfg;
}

void apply_override(Json& config, const std::string& dotted, const std::string& value) {
  Json parsed;
  try {
    parsed = Json::parse(value);
  } catch (const nlohmann::json::exception&) {
    parsed = value;
  }
  // Build a nested object and merge it so the same type checks apply.
  Json user = Json::object();
  Json* cur = &user;
  std::size_t start = 0;
  while (true) {
    const auto dot = dotted.find('.', start);
    const std::string key = dotted.substr(start, dot - start);
    if (key.empty()) throw ConfigError("bad override key '" + dotted + "'");
    if (dot == std::string::npos) {
      (*cur)[key] = parsed;
      break;
    }
    cur = &(*cur)[key];
    *cur = Json::object();
    start = dot + 1;
  }
  merge_config(config, user);
}

namespace {

template <class T>
T get(const Json& config, const char* section, const char* key) {
  try {
    return config.at(section).at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config ") + section + "." + key + ": " + e.what());
  }
}

void positive(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("config " + what + " out of range");
}

}  // namespace

ProblemSpec problem_spec(const Json& config) {
  ProblemSpec s;
  s.type = get<std::string>(config, "problem", "type");
  if (s.type != "burgers" && s.type != "linear-burgers")
    throw ConfigError("problem.type must be burgers or linear-burgers");
  s.n = get<int>(config, "problem", "n");
  positive(s.n >= 2, "problem.n");
  s.params.nu = get<double>(config, "problem", "nu");
  s.params.beta = get<double>(config, "problem", "beta");
  s.params.kappa = get<double>(config, "problem", "kappa");
  s.params.R = get<double>(config, "problem", "R");
  positive(s.params.R > 0.0, "problem.R");
  return s;
}

burgers::BurgersProblem build_problem(const ProblemSpec& spec) {
  return spec.type == "burgers" ? burgers::build_problem(spec.n, spec.params)
                                : burgers::build_linearized_problem(spec.n, spec.params);
}

HorizonConfig horizon_config(const Json& config) {
  HorizonConfig h;
  h.tf_initial = get<double>(config, "datagen", "tf_initial");
  h.tf_extension = get<double>(config, "datagen", "tf_extension");
  h.max_extensions = get<int>(config, "datagen", "max_extensions");
  h.eps_L = get<double>(config, "datagen", "eps_L");
  h.eps_H = get<double>(config, "datagen", "eps_H");
  h.truncation_T = get<double>(config, "datagen", "truncation_T");
  h.bvp.tol = get<double>(config, "datagen", "bvp_tol");
  h.bvp.max_nodes = get<int>(config, "datagen", "bvp_max_nodes");
  h.bvp.max_newton = get<int>(config, "datagen", "bvp_max_newton");
  h.initial_mesh_nodes = get<int>(config, "datagen", "initial_mesh_nodes");
  h.warm.rtol = get<double>(config, "datagen", "warm_rtol");
  h.warm.atol = get<double>(config, "datagen", "warm_atol");
  positive(h.tf_initial > 0 && h.tf_extension > 0 && h.max_extensions >= 0,
           "datagen horizon schedule");
  positive(h.truncation_T >= 1.0, "datagen.truncation_T");
  positive(h.bvp.tol > 0 && h.bvp.max_nodes >= 3, "datagen.bvp_*");
  return h;
}

TrainConfig train_config(const Json& config) {
  TrainConfig t;
  t.weights.mu_lambda = get<double>(config, "train", "mu_lambda");
  t.weights.mu_u = get<double>(config, "train", "mu_u");
  positive(t.weights.mu_lambda >= 0 && t.weights.mu_u >= 0, "train.mu_*");
  t.lbfgs.max_iter = get<int>(config, "train", "max_iter");
  t.lbfgs.memory = get<int>(config, "train", "memory");
  t.lbfgs.grad_tol = get<double>(config, "train", "grad_tol");
  t.lbfgs.rel_decrease_tol = get<double>(config, "train", "rel_decrease_tol");
  t.workers = get<int>(config, "train", "workers");
  t.chunk = get<int>(config, "train", "chunk");
  positive(t.lbfgs.max_iter >= 0 && t.lbfgs.memory >= 1 && t.chunk >= 1, "train.*");
  return t;
}

std::vector<int> hidden_layers(const Json& config) {
  auto h = get<std::vector<int>>(config, "model", "hidden");
  for (int w : h) positive(w >= 1, "model.hidden");
  return h;
}

ModelMode model_mode(const Json& config) {
  return parse_model_mode(get<std::string>(config, "model", "mode"));
}

SensitivityConfig sensitivity_config(const Json& config, std::uint64_t seed) {
  SensitivityConfig s;
  s.sizes = get<std::vector<int>>(config, "experiment", "sizes");
  s.trials = get<int>(config, "experiment", "trials");
  s.validation_trajectories = get<int>(config, "experiment", "validation_trajectories");
  s.workers = get<int>(config, "experiment", "workers");
  s.record_timing = get<bool>(config, "experiment", "record_timing");
  positive(!s.sizes.empty() && s.trials >= 1 && s.validation_trajectories >= 1,
           "experiment counts");
  for (int v : s.sizes) positive(v >= 1, "experiment.sizes");
  s.hidden = hidden_layers(config);
  s.train = train_config(config);
  s.horizon = horizon_config(config);
  s.seed = seed;
  return s;
}

CostGapConfig cost_gap_config(const Json& config, std::uint64_t seed) {
  CostGapConfig c;
  c.norms = get<std::vector<double>>(config, "experiment", "norms");
  c.per_group = get<int>(config, "experiment", "per_group");
  c.tf = get<double>(config, "experiment", "tf");
  c.sim.rtol = get<double>(config, "experiment", "rtol");
  c.sim.atol = get<double>(config, "experiment", "atol");
  c.workers = get<int>(config, "experiment", "workers");
  positive(!c.norms.empty() && c.per_group >= 1 && c.tf > 0, "experiment cost-gap settings");
  for (double v : c.norms) positive(v >= 0, "experiment.norms");
  c.horizon = horizon_config(config);
  c.seed = seed;
  return c;
}

}  // namespace qrnet
