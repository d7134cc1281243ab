#pragma once

/**
 * @file
 * @brief Flat key-value configuration files with [section] headers.
 *
 * Format: one `key = value` pair per line, sections introduced by
 * `[section]`, `#` starts a comment. Every key is validated against the set
 * the loader consumes; unknown keys are an error. Angles are given in
 * degrees at this boundary and converted to radians internally.
 */

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "common.hpp"
#include "kmpc.hpp"
#include "plant.hpp"

namespace koopctl {

class ConfigMap
{
public:
  ConfigMap() = default;

  static ConfigMap parse_file(const std::string & path)
  {
    std::ifstream is(path);
    if (!is) { throw ConfigError("cannot open config file " + path); }
    return parse_stream(is, path);
  }

  static ConfigMap parse_string(const std::string & text)
  {
    std::istringstream is(text);
    return parse_stream(is, "<string>");
  }

  bool has(const std::string & section, const std::string & key) const
  {
    return values_.count(section + "." + key) > 0;
  }

  /// Set or override a value (used for command-line overrides).
  void set(const std::string & section, const std::string & key, const std::string & value)
  {
    values_[section + "." + key] = value;
  }

  double get_double(const std::string & section, const std::string & key, double fallback) const
  {
    const auto * s = find(section, key);
    if (!s) { return fallback; }
    try {
      std::size_t pos = 0;
      const double v = std::stod(*s, &pos);
      if (pos != s->size()) { throw std::invalid_argument(""); }
      return v;
    } catch (const std::exception &) {
      throw ConfigError("config key " + section + "." + key + ": not a number: " + *s);
    }
  }

  int get_int(const std::string & section, const std::string & key, int fallback) const
  {
    const double v = get_double(section, key, fallback);
    const int i = static_cast<int>(v);
    if (static_cast<double>(i) != v) {
      throw ConfigError("config key " + section + "." + key + ": not an integer");
    }
    return i;
  }

  bool get_bool(const std::string & section, const std::string & key, bool fallback) const
  {
    const auto * s = find(section, key);
    if (!s) { return fallback; }
    if (*s == "true" || *s == "1" || *s == "yes") { return true; }
    if (*s == "false" || *s == "0" || *s == "no") { return false; }
    throw ConfigError("config key " + section + "." + key + ": not a boolean: " + *s);
  }

  std::string get_string(const std::string & section, const std::string & key,
                         const std::string & fallback) const
  {
    const auto * s = find(section, key);
    return s ? *s : fallback;
  }

  /// Comma-separated list of numbers.
  std::vector<double> get_list(const std::string & section, const std::string & key,
                               const std::vector<double> & fallback) const
  {
    const auto * s = find(section, key);
    if (!s) { return fallback; }
    std::vector<double> out;
    std::istringstream ss(*s);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        out.push_back(std::stod(item));
      } catch (const std::exception &) {
        throw ConfigError("config key " + section + "." + key + ": bad list entry: " + item);
      }
    }
    if (out.empty()) {
      throw ConfigError("config key " + section + "." + key + ": empty list");
    }
    return out;
  }

  /// Throws ConfigError naming every key the loader never consumed.
  void ensure_all_consumed() const
  {
    std::string unknown;
    for (const auto & [k, v] : values_) {
      if (!consumed_.count(k)) { unknown += (unknown.empty() ? "" : ", ") + k; }
    }
    if (!unknown.empty()) { throw ConfigError("unknown config keys: " + unknown); }
  }

private:
  static ConfigMap parse_stream(std::istream & is, const std::string & origin)
  {
    ConfigMap cfg;
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) { line.erase(hash); }
      line = trim(line);
      if (line.empty()) { continue; }
      if (line.front() == '[') {
        if (line.back() != ']') {
          throw ConfigError(origin + ":" + std::to_string(lineno) + ": malformed section header");
        }
        section = trim(line.substr(1, line.size() - 2));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
      }
      const std::string key = trim(line.substr(0, eq));
      const std::string val = trim(line.substr(eq + 1));
      if (key.empty()) {
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
      }
      cfg.values_[section + "." + key] = val;
    }
    return cfg;
  }

  static std::string trim(const std::string & s)
  {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) { return ""; }
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  }

  const std::string * find(const std::string & section, const std::string & key) const
  {
    const std::string full = section + "." + key;
    consumed_.insert(full);
    auto it = values_.find(full);
    return it == values_.end() ? nullptr : &it->second;
  }

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> consumed_;
};

enum class Scenario {
  initial_tilt,
  excite_then_damp,
  pulse_disturbance,
  step_tracking,
  ramp_tracking,
  collect
};

inline Scenario scenario_from_string(const std::string & s)
{
  if (s == "initial_tilt") { return Scenario::initial_tilt; }
  if (s == "excite_then_damp") { return Scenario::excite_then_damp; }
  if (s == "pulse_disturbance") { return Scenario::pulse_disturbance; }
  if (s == "step_tracking") { return Scenario::step_tracking; }
  if (s == "ramp_tracking") { return Scenario::ramp_tracking; }
  if (s == "collect") { return Scenario::collect; }
  throw ConfigError("unknown scenario: " + s);
}

enum class ControllerKind { none, lqr, kmpc };

inline ControllerKind controller_from_string(const std::string & s)
{
  if (s == "none") { return ControllerKind::none; }
  if (s == "lqr") { return ControllerKind::lqr; }
  if (s == "kmpc") { return ControllerKind::kmpc; }
  throw ConfigError("unknown controller: " + s);
}

/// Full run configuration with built-in defaults; a config file overrides
/// individual keys.
struct RunConfig {
  PlantParams plant;

  // [lifting]
  int delays = 2;

  // [collect]
  double collect_duration = 135.0;     ///< seconds per trajectory
  double collect_amplitude = 0.3;      ///< excitation amplitude [N m]
  double collect_min_std = 1e-4;       ///< minimum output std to accept a dataset

  // [edmd]
  std::optional<double> ridge;         ///< empty selects the automatic default
  int eval_horizon = 25;

  // [lqr]
  double lqr_q_phi = 10.0;
  double lqr_q_phi_dot = 1.0;
  double lqr_r = 50.0;

  // [kmpc]
  int np = 10;
  double kmpc_qe_phi = 10.0;
  double kmpc_qe_phi_dot = 1.0;
  double kmpc_s_scale = 10.0;          ///< S = s_scale * Qe
  double kmpc_r = 0.0;
  double kmpc_du_rate = 2.0;           ///< rate bound [N m / s], <= 0 disables
  double kmpc_disturbance_gain = 0.05;
  double kmpc_eps = 1e-6;
  int kmpc_max_iter = 4000;

  // [scenario]
  Scenario scenario = Scenario::initial_tilt;
  ControllerKind controller = ControllerKind::lqr;
  bool compare_uncontrolled = true;
  double duration = 15.0;
  double tilt = deg2rad(-20.0);
  double excite_amplitude = 0.3;
  double excite_freq = 0.8;
  double excite_duration = 6.0;
  double pulse_amplitude = 0.05;
  double pulse_width = 0.5;
  std::vector<double> pulse_times = {2.0, 6.0};
  std::vector<double> step_levels = {0.0, deg2rad(3.0), deg2rad(-3.0), deg2rad(1.5), 0.0};
  double step_dwell = 3.0;
  double ramp_amplitude = deg2rad(3.0);
  double ramp_slope = deg2rad(1.0);    ///< rad/s
  double const_ref = deg2rad(3.0);
  double input_bias = 0.0;             ///< constant input-side disturbance [N m]
  double transient_skip = 1.5;         ///< seconds excluded after a reference step

  // [noise]
  double noise_phi = 0.0;              ///< uniform amplitude [rad]
  double noise_phi_dot = 0.0;          ///< uniform amplitude [rad/s]

  std::uint64_t seed = 1;
};

inline RunConfig load_run_config(const ConfigMap & cfg)
{
  RunConfig rc;
  rc.plant.n_links = cfg.get_int("plant", "n_links", rc.plant.n_links);
  rc.plant.link_mass = cfg.get_double("plant", "link_mass", rc.plant.link_mass);
  rc.plant.link_length = cfg.get_double("plant", "link_length", rc.plant.link_length);
  rc.plant.stiffness = cfg.get_double("plant", "stiffness", rc.plant.stiffness);
  rc.plant.damping = cfg.get_double("plant", "damping", rc.plant.damping);
  rc.plant.gravity = cfg.get_double("plant", "gravity", rc.plant.gravity);
  rc.plant.sensor_link = cfg.get_int("plant", "sensor_link", rc.plant.sensor_link);
  rc.plant.torque_limit = cfg.get_double("plant", "torque_limit", rc.plant.torque_limit);
  rc.plant.dt = cfg.get_double("plant", "dt", rc.plant.dt);
  try {
    rc.plant.validate();
  } catch (const InvalidInput & e) {
    throw ConfigError(std::string("invalid plant parameters: ") + e.what());
  }

  rc.delays = cfg.get_int("lifting", "delays", rc.delays);
  if (rc.delays < 0) { throw ConfigError("lifting.delays must be >= 0"); }

  rc.collect_duration = cfg.get_double("collect", "duration_s", rc.collect_duration);
  rc.collect_amplitude = cfg.get_double("collect", "amplitude", rc.collect_amplitude);
  rc.collect_min_std = cfg.get_double("collect", "min_output_std", rc.collect_min_std);

  if (cfg.has("edmd", "ridge")) { rc.ridge = cfg.get_double("edmd", "ridge", 0.0); }
  rc.eval_horizon = cfg.get_int("edmd", "eval_horizon", rc.eval_horizon);

  rc.lqr_q_phi = cfg.get_double("lqr", "q_phi", rc.lqr_q_phi);
  rc.lqr_q_phi_dot = cfg.get_double("lqr", "q_phi_dot", rc.lqr_q_phi_dot);
  rc.lqr_r = cfg.get_double("lqr", "r", rc.lqr_r);

  rc.np = cfg.get_int("kmpc", "np", rc.np);
  rc.kmpc_qe_phi = cfg.get_double("kmpc", "qe_phi", rc.kmpc_qe_phi);
  rc.kmpc_qe_phi_dot = cfg.get_double("kmpc", "qe_phi_dot", rc.kmpc_qe_phi_dot);
  rc.kmpc_s_scale = cfg.get_double("kmpc", "s_scale", rc.kmpc_s_scale);
  rc.kmpc_r = cfg.get_double("kmpc", "r", rc.kmpc_r);
  rc.kmpc_du_rate = cfg.get_double("kmpc", "du_rate", rc.kmpc_du_rate);
  rc.kmpc_disturbance_gain =
    cfg.get_double("kmpc", "disturbance_gain", rc.kmpc_disturbance_gain);
  rc.kmpc_eps = cfg.get_double("kmpc", "eps", rc.kmpc_eps);
  rc.kmpc_max_iter = cfg.get_int("kmpc", "max_iter", rc.kmpc_max_iter);

  rc.scenario = scenario_from_string(
    cfg.get_string("scenario", "name", "initial_tilt"));
  rc.controller = controller_from_string(cfg.get_string(
    "scenario", "controller",
    rc.scenario == Scenario::step_tracking || rc.scenario == Scenario::ramp_tracking ? "kmpc"
                                                                                     : "lqr"));
  rc.compare_uncontrolled =
    cfg.get_bool("scenario", "compare_uncontrolled", rc.compare_uncontrolled);
  rc.duration = cfg.get_double("scenario", "duration_s", rc.duration);
  rc.tilt = deg2rad(cfg.get_double("scenario", "tilt_deg", rad2deg(rc.tilt)));
  rc.excite_amplitude = cfg.get_double("scenario", "excite_amplitude", rc.excite_amplitude);
  rc.excite_freq = cfg.get_double("scenario", "excite_freq_hz", rc.excite_freq);
  rc.excite_duration = cfg.get_double("scenario", "excite_duration_s", rc.excite_duration);
  rc.pulse_amplitude = cfg.get_double("scenario", "pulse_amplitude", rc.pulse_amplitude);
  rc.pulse_width = cfg.get_double("scenario", "pulse_width_s", rc.pulse_width);
  rc.pulse_times = cfg.get_list("scenario", "pulse_times_s", rc.pulse_times);
  {
    std::vector<double> deg;
    for (double v : rc.step_levels) { deg.push_back(rad2deg(v)); }
    deg = cfg.get_list("scenario", "step_levels_deg", deg);
    rc.step_levels.clear();
    for (double v : deg) { rc.step_levels.push_back(deg2rad(v)); }
  }
  rc.step_dwell = cfg.get_double("scenario", "step_dwell_s", rc.step_dwell);
  rc.ramp_amplitude = deg2rad(cfg.get_double("scenario", "ramp_amp_deg", rad2deg(rc.ramp_amplitude)));
  rc.ramp_slope = deg2rad(cfg.get_double("scenario", "ramp_slope_deg_s", rad2deg(rc.ramp_slope)));
  rc.const_ref = deg2rad(cfg.get_double("scenario", "const_ref_deg", rad2deg(rc.const_ref)));
  rc.input_bias = cfg.get_double("scenario", "input_bias", rc.input_bias);
  rc.transient_skip = cfg.get_double("scenario", "transient_skip_s", rc.transient_skip);

  rc.noise_phi = deg2rad(cfg.get_double("noise", "amp_phi_deg", rad2deg(rc.noise_phi)));
  rc.noise_phi_dot =
    deg2rad(cfg.get_double("noise", "amp_phi_dot_deg_s", rad2deg(rc.noise_phi_dot)));

  cfg.ensure_all_consumed();
  return rc;
}

/// Assemble the KMPC tuning structures from a run configuration.
inline KmpcConfig make_kmpc_config(const RunConfig & rc)
{
  KmpcConfig k;
  k.Np = rc.np;
  k.Qe = Eigen::Vector2d(rc.kmpc_qe_phi, rc.kmpc_qe_phi_dot).asDiagonal();
  k.S = rc.kmpc_s_scale * k.Qe;
  k.R = Eigen::MatrixXd::Constant(1, 1, rc.kmpc_r);
  k.u_min = -rc.plant.torque_limit;
  k.u_max = rc.plant.torque_limit;
  if (rc.kmpc_du_rate > 0.0) {
    k.du_min = -rc.kmpc_du_rate * rc.plant.dt;
    k.du_max = rc.kmpc_du_rate * rc.plant.dt;
  }
  return k;
}

inline KmpcControllerOptions make_kmpc_options(const RunConfig & rc)
{
  KmpcControllerOptions o;
  o.disturbance_gain = rc.kmpc_disturbance_gain;
  o.qp.eps_abs = rc.kmpc_eps;
  o.qp.eps_rel = rc.kmpc_eps;
  o.qp.max_iter = rc.kmpc_max_iter;
  return o;
}

}  // namespace koopctl
