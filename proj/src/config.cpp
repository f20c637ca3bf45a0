#include "markovlens/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "markovlens/env.hpp"
#include "markovlens/errors.hpp"

namespace markovlens {

namespace {

using Json = nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& path, const std::string& message) {
  throw ConfigError("config " + path + ": " + message);
}

void reject_unknown_keys(const Json& obj, const std::string& path, std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) fail(path, "expected an object");
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) fail(path + "." + key, "unknown key");
  }
}

double get_number(const Json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) fail(path, "must be finite");
  return v;
}

std::size_t get_count(const Json& j, const std::string& path) {
  if (!j.is_number_integer()) fail(path, "expected an integer");
  const auto v = j.get<std::int64_t>();
  if (v < 0) fail(path, "must be non-negative");
  return static_cast<std::size_t>(v);
}

std::string get_string(const Json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a string");
  return j.get<std::string>();
}

DimRef parse_dim_ref(const Json& j, const std::string& path) {
  if (j.is_string()) return j.get<std::string>();
  return get_count(j, path);
}

std::vector<DimRef> parse_dim_list(const Json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected a list of dimension labels or indices");
  std::vector<DimRef> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(parse_dim_ref(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

// Each entry is a single dimension or a list of dimensions dropped together.
std::vector<std::vector<DimRef>> parse_drop_sets(const Json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected a list");
  std::vector<std::vector<DimRef>> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string p = path + "[" + std::to_string(i) + "]";
    if (j[i].is_array()) {
      out.push_back(parse_dim_list(j[i], p));
      if (out.back().empty()) fail(p, "empty drop set");
    } else {
      out.push_back({parse_dim_ref(j[i], p)});
    }
  }
  return out;
}

EnvironmentConfig parse_environment(const Json& j, const std::string& path) {
  reject_unknown_keys(j, path, {"name", "time_steps", "observations", "n_envs", "drop_dimensions"});
  EnvironmentConfig env;
  if (!j.contains("name")) fail(path + ".name", "missing");
  env.name = get_string(j["name"], path + ".name");
  std::unique_ptr<ClassicControlEnv> probe;
  try {
    probe = make_env(env.name);
  } catch (const ConfigError& e) {
    fail(path + ".name", e.what());
  }
  if (!j.contains("time_steps")) fail(path + ".time_steps", "missing");
  env.time_steps = get_count(j["time_steps"], path + ".time_steps");
  if (env.time_steps == 0) fail(path + ".time_steps", "must be > 0");

  if (j.contains("observations")) {
    const Json& obs = j["observations"];
    if (!obs.is_array()) fail(path + ".observations", "expected a list of labels");
    for (std::size_t i = 0; i < obs.size(); ++i) {
      env.observations.push_back(get_string(obs[i], path + ".observations[" + std::to_string(i) + "]"));
    }
    if (env.observations.size() != probe->observation_dim()) {
      fail(path + ".observations", "expected " + std::to_string(probe->observation_dim()) + " labels for " +
                                       env.name + ", got " + std::to_string(env.observations.size()));
    }
    if (std::set<std::string>(env.observations.begin(), env.observations.end()).size() != env.observations.size()) {
      fail(path + ".observations", "duplicate label");
    }
  } else {
    env.observations = default_observation_labels(env.name);
  }
  if (j.contains("n_envs")) {
    env.n_envs = get_count(j["n_envs"], path + ".n_envs");
    if (env.n_envs != 1) fail(path + ".n_envs", "only a single environment per run is supported");
  }
  if (j.contains("drop_dimensions")) env.drop_dimensions = parse_drop_sets(j["drop_dimensions"], path + ".drop_dimensions");
  return env;
}

std::optional<std::vector<DimRef>> parse_targets(const Json& j, const std::string& path) {
  if (!j.contains("target_dims")) return std::nullopt;
  auto dims = parse_dim_list(j["target_dims"], path + ".target_dims");
  if (dims.empty()) fail(path + ".target_dims", "must not be empty");
  return dims;
}

GaussianSetting parse_gaussian(const Json& j, const std::string& path) {
  reject_unknown_keys(j, path, {"mean", "variance", "target_dims"});
  GaussianSetting g;
  if (j.contains("mean")) g.mean = get_number(j["mean"], path + ".mean");
  if (!j.contains("variance")) fail(path + ".variance", "missing");
  g.variance = get_number(j["variance"], path + ".variance");
  if (g.variance < 0.0) fail(path + ".variance", "must be >= 0");
  g.target_dims = parse_targets(j, path);
  return g;
}

ArSetting parse_ar(const Json& j, const std::string& label, const std::string& path) {
  reject_unknown_keys(j, path, {"alphas", "sigma", "target_dims"});
  ArSetting a;
  a.order_label = label;
  if (!j.contains("alphas") || !j["alphas"].is_array()) fail(path + ".alphas", "expected a list of numbers");
  for (std::size_t i = 0; i < j["alphas"].size(); ++i) {
    a.alphas.push_back(get_number(j["alphas"][i], path + ".alphas[" + std::to_string(i) + "]"));
  }
  if (a.alphas.empty()) fail(path + ".alphas", "must not be empty");
  if (!j.contains("sigma")) fail(path + ".sigma", "missing");
  a.sigma = get_number(j["sigma"], path + ".sigma");
  if (a.sigma < 0.0) fail(path + ".sigma", "must be >= 0");
  a.target_dims = parse_targets(j, path);
  return a;
}

void parse_ppo(const Json& j, ppo::PpoConfig& cfg, const std::string& path) {
  reject_unknown_keys(j, path,
                      {"learning_rate", "gamma", "gae_lambda", "clip_ratio", "entropy_coef", "value_coef",
                       "minibatch_size", "epochs_per_update", "rollout_length", "max_grad_norm",
                       "normalize_advantage"});
  auto num = [&](const char* key, double& out) {
    if (j.contains(key)) out = get_number(j[key], path + "." + key);
  };
  auto count = [&](const char* key, std::size_t& out) {
    if (j.contains(key)) out = get_count(j[key], path + "." + key);
  };
  num("learning_rate", cfg.learning_rate);
  num("gamma", cfg.gamma);
  num("gae_lambda", cfg.gae_lambda);
  num("clip_ratio", cfg.clip_ratio);
  num("entropy_coef", cfg.entropy_coef);
  num("value_coef", cfg.value_coef);
  num("max_grad_norm", cfg.max_grad_norm);
  count("minibatch_size", cfg.minibatch_size);
  count("epochs_per_update", cfg.epochs_per_update);
  count("rollout_length", cfg.rollout_length);
  if (j.contains("normalize_advantage")) {
    if (!j["normalize_advantage"].is_boolean()) fail(path + ".normalize_advantage", "expected a boolean");
    cfg.normalize_advantage = j["normalize_advantage"].get<bool>();
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    fail(path, e.what());
  }
}

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '+' || c == '_') out += c;
  }
  return out;
}

std::string dims_suffix(const std::vector<std::size_t>& dims, const EnvironmentConfig& env, bool all) {
  if (all) return "";
  std::string s = "_dims";
  for (std::size_t i = 0; i < dims.size(); ++i) s += (i ? "+" : "") + sanitize(env.observations[dims[i]]);
  return s;
}

std::vector<std::size_t> all_dims(const EnvironmentConfig& env) {
  std::vector<std::size_t> d(env.observations.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = i;
  return d;
}

}  // namespace

std::size_t resolve_dim(const DimRef& ref, const EnvironmentConfig& env) {
  if (const auto* idx = std::get_if<std::size_t>(&ref)) {
    if (*idx >= env.observations.size()) {
      throw ConfigError("dimension index " + std::to_string(*idx) + " out of range for " + env.name);
    }
    return *idx;
  }
  const auto& label = std::get<std::string>(ref);
  const auto it = std::find(env.observations.begin(), env.observations.end(), label);
  if (it == env.observations.end()) throw ConfigError("unknown dimension label '" + label + "' for " + env.name);
  return static_cast<std::size_t>(it - env.observations.begin());
}

std::vector<std::size_t> resolve_dims(const std::vector<DimRef>& refs, const EnvironmentConfig& env) {
  std::vector<std::size_t> out;
  for (const DimRef& r : refs) {
    const std::size_t d = resolve_dim(r, env);
    if (std::find(out.begin(), out.end(), d) != out.end()) {
      throw ConfigError("dimension " + env.observations[d] + " listed twice for " + env.name);
    }
    out.push_back(d);
  }
  return out;
}

ExperimentConfig parse_config(std::string_view text) {
  Json doc;
  try {
    doc = Json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config: malformed document: ") + e.what());
  }
  reject_unknown_keys(doc, "$", {"environments", "noise_strategies", "drop_dimensions", "seeds", "pcmci", "ppo"});

  ExperimentConfig cfg;
  if (!doc.contains("environments") || !doc["environments"].is_array()) {
    fail("$.environments", "expected a list of environments");
  }
  const Json& envs = doc["environments"];
  if (envs.empty()) fail("$.environments", "at least one environment is required");
  for (std::size_t i = 0; i < envs.size(); ++i) {
    cfg.environments.push_back(parse_environment(envs[i], "$.environments[" + std::to_string(i) + "]"));
  }

  if (doc.contains("noise_strategies")) {
    const Json& ns = doc["noise_strategies"];
    reject_unknown_keys(ns, "$.noise_strategies", {"gaussian", "auto_regressive"});
    if (ns.contains("gaussian")) {
      if (!ns["gaussian"].is_array()) fail("$.noise_strategies.gaussian", "expected a list");
      for (std::size_t i = 0; i < ns["gaussian"].size(); ++i) {
        cfg.gaussian.push_back(
            parse_gaussian(ns["gaussian"][i], "$.noise_strategies.gaussian[" + std::to_string(i) + "]"));
      }
    }
    if (ns.contains("auto_regressive")) {
      const Json& ar = ns["auto_regressive"];
      if (!ar.is_object()) fail("$.noise_strategies.auto_regressive", "expected an object keyed by order label");
      for (const auto& [label, list] : ar.items()) {
        const std::string p = "$.noise_strategies.auto_regressive." + label;
        if (!list.is_array()) fail(p, "expected a list");
        for (std::size_t i = 0; i < list.size(); ++i) {
          cfg.auto_regressive.push_back(parse_ar(list[i], label, p + "[" + std::to_string(i) + "]"));
        }
      }
    }
  }

  if (doc.contains("drop_dimensions")) cfg.drop_dimensions = parse_drop_sets(doc["drop_dimensions"], "$.drop_dimensions");

  if (doc.contains("seeds")) {
    cfg.seeds = get_count(doc["seeds"], "$.seeds");
    if (cfg.seeds == 0) fail("$.seeds", "must be >= 1");
  }

  if (doc.contains("pcmci")) {
    const Json& p = doc["pcmci"];
    reject_unknown_keys(p, "$.pcmci", {"tau_max", "alpha", "rollout_steps", "runs", "action_mode"});
    if (p.contains("tau_max")) cfg.pcmci.tau_max = get_count(p["tau_max"], "$.pcmci.tau_max");
    if (p.contains("alpha")) cfg.pcmci.alpha = get_number(p["alpha"], "$.pcmci.alpha");
    if (p.contains("rollout_steps")) cfg.pcmci.rollout_steps = get_count(p["rollout_steps"], "$.pcmci.rollout_steps");
    if (p.contains("runs")) cfg.pcmci.runs = get_count(p["runs"], "$.pcmci.runs");
    if (p.contains("action_mode")) {
      const std::string mode = get_string(p["action_mode"], "$.pcmci.action_mode");
      if (mode == "sampled") {
        cfg.pcmci.actions = PanelActions::kSampled;
      } else if (mode == "deterministic") {
        cfg.pcmci.actions = PanelActions::kDeterministic;
      } else {
        fail("$.pcmci.action_mode", "expected \"sampled\" or \"deterministic\"");
      }
    }
  }
  if (cfg.pcmci.tau_max < 2) fail("$.pcmci.tau_max", "must be >= 2");
  if (!(cfg.pcmci.alpha > 0.0 && cfg.pcmci.alpha < 1.0)) fail("$.pcmci.alpha", "must lie in (0, 1)");
  if (cfg.pcmci.rollout_steps <= 10 * (cfg.pcmci.tau_max + 1)) {
    fail("$.pcmci.rollout_steps", "must exceed 10 (tau_max + 1)");
  }
  if (cfg.pcmci.runs == 0) fail("$.pcmci.runs", "must be >= 1");

  if (doc.contains("ppo")) parse_ppo(doc["ppo"], cfg.ppo, "$.ppo");
  for (std::size_t i = 0; i < cfg.environments.size(); ++i) {
    if (cfg.environments[i].time_steps < cfg.ppo.rollout_length) {
      fail("$.environments[" + std::to_string(i) + "].time_steps",
           "must be >= the PPO rollout length (" + std::to_string(cfg.ppo.rollout_length) + ")");
    }
  }

  // Every dimension reference has to resolve for every environment it applies to.
  for (std::size_t e = 0; e < cfg.environments.size(); ++e) {
    const EnvironmentConfig& env = cfg.environments[e];
    const std::string ep = "$.environments[" + std::to_string(e) + "] (" + env.name + ")";
    try {
      build_conditions(cfg, env);
    } catch (const ConfigError& err) {
      fail(ep, err.what());
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::uint64_t seed_for(std::size_t run_index, std::size_t seed_count) {
  if (run_index >= seed_count) {
    throw ContractViolation("seed_for: run index " + std::to_string(run_index) + " outside [0, " +
                            std::to_string(seed_count) + ")");
  }
  return 10000 + run_index;
}

std::uint64_t panel_seed_for(std::size_t panel_index) { return 20000 + panel_index; }

std::vector<Condition> build_conditions(const ExperimentConfig& config, const EnvironmentConfig& env) {
  std::vector<Condition> out;
  const std::size_t dim = env.observations.size();

  auto labels_after_drop = [&](const std::vector<std::size_t>& dropped) {
    std::vector<std::string> labels;
    for (std::size_t d = 0; d < dim; ++d) {
      if (std::find(dropped.begin(), dropped.end(), d) == dropped.end()) labels.push_back(env.observations[d]);
    }
    return labels;
  };

  Condition baseline;
  baseline.kind = Condition::Kind::kBaseline;
  baseline.id = "baseline";
  baseline.recipe.env_name = env.name;
  baseline.observation_labels = env.observations;
  out.push_back(baseline);

  for (const GaussianSetting& g : config.gaussian) {
    Condition c = baseline;
    c.kind = Condition::Kind::kGaussian;
    const auto dims = g.target_dims ? resolve_dims(*g.target_dims, env) : all_dims(env);
    GaussianNoiseSpec spec{g.mean, g.variance, dims};
    validate(spec, dim);
    c.recipe.noise = spec;
    c.id = "gaussian_mean" + format_number(g.mean) + "_var" + format_number(g.variance) +
           dims_suffix(dims, env, !g.target_dims);
    out.push_back(std::move(c));
  }

  for (const ArSetting& a : config.auto_regressive) {
    Condition c = baseline;
    c.kind = Condition::Kind::kAutoRegressive;
    const auto dims = a.target_dims ? resolve_dims(*a.target_dims, env) : all_dims(env);
    ArNoiseSpec spec{a.alphas, a.sigma, dims};
    validate(spec, dim);
    c.recipe.noise = spec;
    std::string alphas;
    for (std::size_t i = 0; i < a.alphas.size(); ++i) alphas += (i ? "+" : "") + format_number(a.alphas[i]);
    c.id = "ar_" + sanitize(a.order_label) + "_alphas" + alphas + "_sigma" + format_number(a.sigma) +
           dims_suffix(dims, env, !a.target_dims);
    out.push_back(std::move(c));
  }

  std::vector<std::vector<DimRef>> drops = config.drop_dimensions;
  drops.insert(drops.end(), env.drop_dimensions.begin(), env.drop_dimensions.end());
  for (const auto& refs : drops) {
    Condition c = baseline;
    c.kind = Condition::Kind::kDrop;
    const auto dims = resolve_dims(refs, env);
    c.recipe.drop.dropped_dims = dims;
    validate(c.recipe.drop, dim);
    c.observation_labels = labels_after_drop(dims);
    c.id = "drop";
    for (std::size_t i = 0; i < dims.size(); ++i) c.id += (i ? "+" : "_") + sanitize(env.observations[dims[i]]);
    out.push_back(std::move(c));
  }

  std::set<std::string> ids;
  for (const Condition& c : out) {
    if (!ids.insert(c.id).second) throw ConfigError("duplicate condition '" + c.id + "' for " + env.name);
  }
  return out;
}

}  // namespace markovlens
