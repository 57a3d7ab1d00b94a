#include "tsynth/config_io.hpp"

#include <fstream>
#include <functional>
#include <map>

#include "tsynth/instance_io.hpp"

namespace tsynth {

using nlohmann::json;

namespace {

template <class T>
T get_as(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

Rational get_rational(const json& v, const std::string& key) {
  try {
    return rational_from_json(v);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' must be a rational");
  }
}

std::optional<double> get_seconds(const json& v, const std::string& key) {
  if (v.is_null()) return std::nullopt;
  const double s = get_as<double>(v, key);
  if (!(s > 0)) throw ConfigError("config key '" + key + "' must be positive or null");
  return s;
}

json seconds_json(const std::optional<double>& s) { return s ? json(*s) : json(nullptr); }

void check_model(const Defaults& d) {
  auto positive = [](const Rational& r, const char* name) {
    if (!(r > Rational(0))) throw ConfigError(std::string(name) + " must be positive");
  };
  positive(d.epsilon, "epsilon");
  positive(d.nominal_speed, "nominal_speed");
  positive(d.section_length, "section_length");
  positive(d.diagonal_length, "diagonal_length");
  positive(d.max_speed, "max_speed");
  positive(d.max_accel, "max_accel");
  positive(d.max_decel, "max_decel");
  if (d.timing_slack < 0) throw ConfigError("timing_slack must be non-negative");
  if (d.horizon_cap < 1) throw ConfigError("horizon_cap must be at least 1");
  if (d.episode_cap < 1) throw ConfigError("episode_cap must be at least 1");
  if (d.presence_probability < 0 || d.presence_probability > 1) {
    throw ConfigError("presence_probability must lie in [0, 1]");
  }
  if (d.position_grid < 1 || d.speed_grid < 1) throw ConfigError("grids must be at least 1");
  if (!(d.clamp_factor > 0)) throw ConfigError("clamp_factor must be positive");
  if (d.solve_timeout_seconds < 0) throw ConfigError("solve_timeout_seconds must be non-negative (0: none)");
}

}  // namespace

PipelineBudget ToolConfig::budget() const {
  PipelineBudget b;
  b.stage1_node_cap = model.solve_node_cap;
  if (model.solve_timeout_seconds > 0) b.stage1_seconds = model.solve_timeout_seconds;
  b.stage2_seconds = stage2_seconds;
  return b;
}

json config_to_json(const ToolConfig& c) {
  const Defaults& d = c.model;
  json model{{"epsilon", rational_to_json(d.epsilon)},
             {"nominal_speed", rational_to_json(d.nominal_speed)},
             {"section_length", rational_to_json(d.section_length)},
             {"diagonal_length", rational_to_json(d.diagonal_length)},
             {"max_speed", rational_to_json(d.max_speed)},
             {"max_accel", rational_to_json(d.max_accel)},
             {"max_decel", rational_to_json(d.max_decel)},
             {"timing_slack", d.timing_slack},
             {"horizon_cap", d.horizon_cap},
             {"episode_cap", d.episode_cap},
             {"reward_success", d.reward_success},
             {"reward_failure", d.reward_failure},
             {"speed_coeff", d.speed_coeff},
             {"distance_coeff", d.distance_coeff},
             {"clamp_factor", d.clamp_factor},
             {"presence_probability", d.presence_probability},
             {"position_grid", d.position_grid},
             {"speed_grid", d.speed_grid},
             {"solve_timeout_seconds", d.solve_timeout_seconds},
             {"solve_node_cap", d.solve_node_cap}};
  json pipeline{{"stage2_seconds", seconds_json(c.stage2_seconds)},
                {"solver_path", c.solver_path},
                {"solver_rlimit", c.solver_rlimit},
                {"workers", c.workers}};
  return {{"format", "tsynth-config"}, {"version", 1}, {"model", model}, {"pipeline", pipeline}};
}

ToolConfig merge_config(ToolConfig c, const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  Defaults& d = c.model;
  using Setter = std::function<void(const json&, const std::string&)>;
  const std::map<std::string, Setter> model_keys{
      {"epsilon", [&](const json& v, const std::string& k) { d.epsilon = get_rational(v, k); }},
      {"nominal_speed", [&](const json& v, const std::string& k) { d.nominal_speed = get_rational(v, k); }},
      {"section_length", [&](const json& v, const std::string& k) { d.section_length = get_rational(v, k); }},
      {"diagonal_length", [&](const json& v, const std::string& k) { d.diagonal_length = get_rational(v, k); }},
      {"max_speed", [&](const json& v, const std::string& k) { d.max_speed = get_rational(v, k); }},
      {"max_accel", [&](const json& v, const std::string& k) { d.max_accel = get_rational(v, k); }},
      {"max_decel", [&](const json& v, const std::string& k) { d.max_decel = get_rational(v, k); }},
      {"timing_slack", [&](const json& v, const std::string& k) { d.timing_slack = get_as<std::int64_t>(v, k); }},
      {"horizon_cap", [&](const json& v, const std::string& k) { d.horizon_cap = get_as<std::int64_t>(v, k); }},
      {"episode_cap", [&](const json& v, const std::string& k) { d.episode_cap = get_as<std::int64_t>(v, k); }},
      {"reward_success", [&](const json& v, const std::string& k) { d.reward_success = get_as<double>(v, k); }},
      {"reward_failure", [&](const json& v, const std::string& k) { d.reward_failure = get_as<double>(v, k); }},
      {"speed_coeff", [&](const json& v, const std::string& k) { d.speed_coeff = get_as<double>(v, k); }},
      {"distance_coeff", [&](const json& v, const std::string& k) { d.distance_coeff = get_as<double>(v, k); }},
      {"clamp_factor", [&](const json& v, const std::string& k) { d.clamp_factor = get_as<double>(v, k); }},
      {"presence_probability",
       [&](const json& v, const std::string& k) { d.presence_probability = get_as<double>(v, k); }},
      {"position_grid", [&](const json& v, const std::string& k) { d.position_grid = get_as<std::int64_t>(v, k); }},
      {"speed_grid", [&](const json& v, const std::string& k) { d.speed_grid = get_as<std::int64_t>(v, k); }},
      {"solve_timeout_seconds",
       [&](const json& v, const std::string& k) { d.solve_timeout_seconds = get_as<double>(v, k); }},
      {"solve_node_cap", [&](const json& v, const std::string& k) { d.solve_node_cap = get_as<std::uint64_t>(v, k); }},
  };
  const std::map<std::string, Setter> pipeline_keys{
      {"stage2_seconds", [&](const json& v, const std::string& k) { c.stage2_seconds = get_seconds(v, k); }},
      {"solver_path", [&](const json& v, const std::string& k) { c.solver_path = get_as<std::string>(v, k); }},
      {"solver_rlimit", [&](const json& v, const std::string& k) { c.solver_rlimit = get_as<std::uint64_t>(v, k); }},
      {"workers", [&](const json& v, const std::string& k) { c.workers = get_as<std::size_t>(v, k); }},
  };
  auto apply = [](const json& block, const std::map<std::string, Setter>& keys, const std::string& prefix) {
    if (!block.is_object()) throw ConfigError("config block '" + prefix + "' must be an object");
    for (const auto& [key, value] : block.items()) {
      auto it = keys.find(key);
      if (it == keys.end()) throw ConfigError("unknown config key '" + prefix + "." + key + "'");
      it->second(value, prefix + "." + key);
    }
  };
  for (const auto& [key, value] : j.items()) {
    if (key == "format") {
      if (value != "tsynth-config") throw ConfigError("not a config document");
    } else if (key == "version") {
      if (value != 1) throw ConfigError("unsupported config version " + value.dump());
    } else if (key == "model") {
      apply(value, model_keys, "model");
    } else if (key == "pipeline") {
      apply(value, pipeline_keys, "pipeline");
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  check_model(d);
  if (c.workers < 1) throw ConfigError("workers must be at least 1");
  return c;
}

ToolConfig load_config(const std::filesystem::path& file, ToolConfig base) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot read config " + file.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + file.string() + " is not valid JSON: " + e.what());
  }
  return merge_config(std::move(base), j);
}

}  // namespace tsynth
