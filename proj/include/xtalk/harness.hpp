#pragma once

// Run configuration, experiment dispatch and result files.
//
// Files use reporting units: linear GHz for frequencies, ns for
// times and fractions of 2π for angles. Internally everything is angular.

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "xtalk/calibration_metrics.hpp"
#include "xtalk/device_model.hpp"
#include "xtalk/errors.hpp"
#include "xtalk/mitigation.hpp"

namespace xtalk {

inline constexpr const char* kCodeVersion = "1.0.0";

inline const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{"calibrate", "zz-sweep", "leakage-sweep", "mitigate-point",
                                              "mitigation-sweep"};
  return names;
}

struct SpecFractions {
  double theta_2pi = 0.0, phi_2pi = 0.0, lambda_2pi = 0.0;
  bool operator==(const SpecFractions&) const = default;
};

struct OptimizerSettings {
  int max_evaluations = 500;
  int restarts = 0;
  double tolerance = 1e-10;
  double x_tolerance = 1e-5;
  bool operator==(const OptimizerSettings&) const = default;
};

struct RunConfig {
  std::string experiment;
  std::string name;

  double omega0_ghz = 0.0;
  std::optional<double> omega1_ghz;
  double eta0_ghz = -0.3, eta1_ghz = -0.3, etac_ghz = -0.1;
  double g0c_ghz = 0.07, g1c_ghz = 0.07, g01_ghz = 0.005;
  double p0 = 0.0, p1 = 0.0;
  double crosstalk_phase_2pi = 0.0;

  double gate_time_ns = 12.0;
  std::array<int, 3> truncation{4, 4, 4};
  double step_ns = 0.002;
  std::vector<double> delta_grid_ghz;
  std::vector<double> p_values{0.01, 0.1, 0.5};
  std::vector<double> omegac_grid_ghz;  // zz-sweep; empty = coupler window around omega1
  std::array<double, 2> coupler_window_ghz{0.5, 2.5};
  int coupler_grid_points = 61;
  double collision_overlap = 0.8;
  std::array<SpecFractions, 2> nominal_specs{SpecFractions{0.704, 0.277, 0.020},
                                             SpecFractions{0.987, 0.790, 0.560}};
  OptimizerSettings optimizer{};
  OptimizerSettings calibration_optimizer{300, 2, 1e-9, 1e-3};
  int workers = 1;
  std::uint64_t seed = 1;
  std::string output_dir = ".";
  std::string calibration_cache;  // optional JSON file shared across runs

  bool operator==(const RunConfig&) const = default;

  DeviceParams device() const {
    DeviceParams d;
    d.omega0 = angular(omega0_ghz);
    d.omega1 = angular(omega1_ghz.value_or(omega0_ghz + 0.18));
    d.eta0 = angular(eta0_ghz);
    d.eta1 = angular(eta1_ghz);
    d.etac = angular(etac_ghz);
    d.g0c = angular(g0c_ghz);
    d.g1c = angular(g1c_ghz);
    d.g01 = angular(g01_ghz);
    d.p0 = p0;
    d.p1 = p1;
    d.crosstalk_phase = kTwoPi * crosstalk_phase_2pi;
    return d;
  }

  ModeLayout layout() const { return ModeLayout(truncation[0], truncation[1], truncation[2]); }

  SpecPair nominal() const {
    SpecPair s;
    for (int l = 0; l < 2; ++l) {
      s[l] = {kTwoPi * nominal_specs[l].theta_2pi, kTwoPi * nominal_specs[l].phi_2pi,
              kTwoPi * nominal_specs[l].lambda_2pi};
    }
    return s;
  }

  SweepSettings sweep_settings() const {
    SweepSettings s;
    s.base = device();
    s.gate_time = gate_time_ns;
    s.layout = layout();
    s.coupler_low = angular(coupler_window_ghz[0]);
    s.coupler_high = angular(coupler_window_ghz[1]);
    s.coupler_grid_points = coupler_grid_points;
    s.collision_overlap = collision_overlap;
    s.calibration.optimizer = {calibration_optimizer.max_evaluations, calibration_optimizer.restarts,
                               calibration_optimizer.tolerance, calibration_optimizer.x_tolerance, 7, 2e-5};
    s.calibration.propagation.step = step_ns;
    s.optimizer = {optimizer.max_evaluations, optimizer.restarts, optimizer.tolerance, optimizer.x_tolerance, seed};
    s.propagation.step = step_ns;
    s.workers = workers;
    return s;
  }

  /// Throws ConfigError naming the offending field.
  void validate() const {
    if (std::find(experiment_names().begin(), experiment_names().end(), experiment) == experiment_names().end()) {
      throw ConfigError("experiment: unknown experiment '" + experiment + "'");
    }
    try {
      device().validate();
    } catch (const ContractViolation& e) {
      throw ConfigError(std::string("device: ") + e.what());
    }
    if (!(omega0_ghz > 0)) throw ConfigError("omega0_ghz must be positive");
    if (omega1_ghz && !(*omega1_ghz > 0)) throw ConfigError("omega1_ghz must be positive");
    const bool needs_omega1 = experiment == "calibrate" || experiment == "zz-sweep" || experiment == "mitigate-point";
    if (needs_omega1 && !omega1_ghz) throw ConfigError("omega1_ghz is required for experiment " + experiment);
    const bool needs_grid = experiment == "leakage-sweep" || experiment == "mitigation-sweep";
    if (needs_grid && delta_grid_ghz.empty()) throw ConfigError("delta_grid_ghz is required for " + experiment);
    for (std::size_t i = 1; i < delta_grid_ghz.size(); ++i) {
      if (!(delta_grid_ghz[i] > delta_grid_ghz[i - 1])) throw ConfigError("delta_grid_ghz must be strictly increasing");
    }
    if (experiment == "mitigation-sweep" && p_values.empty()) throw ConfigError("p_values must not be empty");
    for (double p : p_values) {
      if (!(p >= 0 && p < 1)) throw ConfigError("p_values entries must lie in [0, 1)");
    }
    if (!(gate_time_ns > 0)) throw ConfigError("gate_time_ns must be positive");
    for (int t : truncation) {
      if (t < 3) throw ConfigError("truncation: every mode needs at least 3 levels");
    }
    if (!(step_ns > 0) || step_ns > 0.002) throw ConfigError("step_ns must lie in (0, 0.002]");
    if (!(coupler_window_ghz[1] > coupler_window_ghz[0])) throw ConfigError("coupler_window_ghz must be increasing");
    if (coupler_grid_points < 50) throw ConfigError("coupler_grid_points must be at least 50");
    if (!(collision_overlap > 0.5 && collision_overlap <= 1)) throw ConfigError("collision_overlap must lie in (0.5, 1]");
    for (const auto* o : {&optimizer, &calibration_optimizer}) {
      const char* which = o == &optimizer ? "optimizer" : "calibration_optimizer";
      if (o->max_evaluations < 100) throw ConfigError(std::string(which) + ".max_evaluations must be at least 100");
      if (o->restarts < 0) throw ConfigError(std::string(which) + ".restarts must be non-negative");
      if (!(o->tolerance > 0 && o->tolerance <= 1e-7)) throw ConfigError(std::string(which) + ".tolerance must lie in (0, 1e-7]");
      if (!(o->x_tolerance > 0)) throw ConfigError(std::string(which) + ".x_tolerance must be positive");
    }
    if (workers < 1) throw ConfigError("workers must be at least 1");
  }
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::string& where, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <class T>
T field(const nlohmann::json& j, const std::string& key) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

template <class T>
void optional_field(const nlohmann::json& j, const std::string& key, T& out) {
  if (j.contains(key)) out = field<T>(j, key);
}

/// Either an explicit list or {"start", "stop", "step"} (inclusive).
inline std::vector<double> grid_field(const nlohmann::json& j, const std::string& key) {
  const nlohmann::json& g = j.at(key);
  if (g.is_array()) return field<std::vector<double>>(j, key);
  check_keys(g, key, {"start", "stop", "step"});
  const double start = field<double>(g, "start"), stop = field<double>(g, "stop"), step = field<double>(g, "step");
  if (!(step > 0) || !(stop >= start)) throw ConfigError(key + ": need step > 0 and stop >= start");
  std::vector<double> out;
  const long n = std::lround(std::floor((stop - start) / step + 1e-9));
  for (long i = 0; i <= n; ++i) out.push_back(std::round((start + step * i) * 1e12) / 1e12);
  return out;
}

inline OptimizerSettings optimizer_field(const nlohmann::json& j, const std::string& key, OptimizerSettings def) {
  if (!j.contains(key)) return def;
  const nlohmann::json& o = j.at(key);
  check_keys(o, key, {"max_evaluations", "restarts", "tolerance", "x_tolerance"});
  optional_field(o, "max_evaluations", def.max_evaluations);
  optional_field(o, "restarts", def.restarts);
  optional_field(o, "tolerance", def.tolerance);
  optional_field(o, "x_tolerance", def.x_tolerance);
  return def;
}

inline std::string line_context(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

}  // namespace detail

inline RunConfig config_from_json(const nlohmann::json& j) {
  detail::check_keys(j, "config",
                     {"experiment", "name", "omega0_ghz", "omega1_ghz", "eta0_ghz", "eta1_ghz", "etac_ghz", "g0c_ghz",
                      "g1c_ghz", "g01_ghz", "p0", "p1", "crosstalk_phase_2pi", "gate_time_ns", "truncation",
                      "step_ns", "delta_grid_ghz", "p_values", "omegac_grid_ghz", "coupler_window_ghz",
                      "coupler_grid_points", "collision_overlap", "nominal_specs", "optimizer",
                      "calibration_optimizer", "workers", "seed", "output_dir", "calibration_cache"});
  RunConfig c;
  if (!j.contains("omega0_ghz")) throw ConfigError("missing required key omega0_ghz");
  c.omega0_ghz = detail::field<double>(j, "omega0_ghz");
  detail::optional_field(j, "experiment", c.experiment);
  detail::optional_field(j, "name", c.name);
  if (j.contains("omega1_ghz") && !j.at("omega1_ghz").is_null()) c.omega1_ghz = detail::field<double>(j, "omega1_ghz");
  detail::optional_field(j, "eta0_ghz", c.eta0_ghz);
  detail::optional_field(j, "eta1_ghz", c.eta1_ghz);
  detail::optional_field(j, "etac_ghz", c.etac_ghz);
  detail::optional_field(j, "g0c_ghz", c.g0c_ghz);
  detail::optional_field(j, "g1c_ghz", c.g1c_ghz);
  detail::optional_field(j, "g01_ghz", c.g01_ghz);
  detail::optional_field(j, "p0", c.p0);
  detail::optional_field(j, "p1", c.p1);
  detail::optional_field(j, "crosstalk_phase_2pi", c.crosstalk_phase_2pi);
  detail::optional_field(j, "gate_time_ns", c.gate_time_ns);
  if (j.contains("truncation")) {
    if (j.at("truncation").is_number_integer()) {
      const int t = detail::field<int>(j, "truncation");
      c.truncation = {t, t, t};
    } else {
      c.truncation = detail::field<std::array<int, 3>>(j, "truncation");
    }
  }
  detail::optional_field(j, "step_ns", c.step_ns);
  if (j.contains("delta_grid_ghz")) c.delta_grid_ghz = detail::grid_field(j, "delta_grid_ghz");
  detail::optional_field(j, "p_values", c.p_values);
  if (j.contains("omegac_grid_ghz")) c.omegac_grid_ghz = detail::grid_field(j, "omegac_grid_ghz");
  detail::optional_field(j, "coupler_window_ghz", c.coupler_window_ghz);
  detail::optional_field(j, "coupler_grid_points", c.coupler_grid_points);
  detail::optional_field(j, "collision_overlap", c.collision_overlap);
  if (j.contains("nominal_specs")) {
    const nlohmann::json& ns = j.at("nominal_specs");
    detail::check_keys(ns, "nominal_specs", {"q0", "q1"});
    for (int l = 0; l < 2; ++l) {
      const std::string q = "q" + std::to_string(l);
      if (!ns.contains(q)) continue;
      const nlohmann::json& s = ns.at(q);
      detail::check_keys(s, "nominal_specs." + q, {"theta_2pi", "phi_2pi", "lambda_2pi"});
      detail::optional_field(s, "theta_2pi", c.nominal_specs[l].theta_2pi);
      detail::optional_field(s, "phi_2pi", c.nominal_specs[l].phi_2pi);
      detail::optional_field(s, "lambda_2pi", c.nominal_specs[l].lambda_2pi);
    }
  }
  c.optimizer = detail::optimizer_field(j, "optimizer", c.optimizer);
  c.calibration_optimizer = detail::optimizer_field(j, "calibration_optimizer", c.calibration_optimizer);
  detail::optional_field(j, "workers", c.workers);
  detail::optional_field(j, "seed", c.seed);
  detail::optional_field(j, "output_dir", c.output_dir);
  detail::optional_field(j, "calibration_cache", c.calibration_cache);
  if (c.name.empty()) c.name = c.experiment;
  return c;
}

inline nlohmann::json to_json(const RunConfig& c) {
  auto opt = [](const OptimizerSettings& o) {
    return nlohmann::json{{"max_evaluations", o.max_evaluations},
                          {"restarts", o.restarts},
                          {"tolerance", o.tolerance},
                          {"x_tolerance", o.x_tolerance}};
  };
  auto spec = [](const SpecFractions& s) {
    return nlohmann::json{{"theta_2pi", s.theta_2pi}, {"phi_2pi", s.phi_2pi}, {"lambda_2pi", s.lambda_2pi}};
  };
  nlohmann::json j{{"experiment", c.experiment},
                   {"name", c.name},
                   {"omega0_ghz", c.omega0_ghz},
                   {"eta0_ghz", c.eta0_ghz},
                   {"eta1_ghz", c.eta1_ghz},
                   {"etac_ghz", c.etac_ghz},
                   {"g0c_ghz", c.g0c_ghz},
                   {"g1c_ghz", c.g1c_ghz},
                   {"g01_ghz", c.g01_ghz},
                   {"p0", c.p0},
                   {"p1", c.p1},
                   {"crosstalk_phase_2pi", c.crosstalk_phase_2pi},
                   {"gate_time_ns", c.gate_time_ns},
                   {"truncation", c.truncation},
                   {"step_ns", c.step_ns},
                   {"delta_grid_ghz", c.delta_grid_ghz},
                   {"p_values", c.p_values},
                   {"omegac_grid_ghz", c.omegac_grid_ghz},
                   {"coupler_window_ghz", c.coupler_window_ghz},
                   {"coupler_grid_points", c.coupler_grid_points},
                   {"collision_overlap", c.collision_overlap},
                   {"nominal_specs", {{"q0", spec(c.nominal_specs[0])}, {"q1", spec(c.nominal_specs[1])}}},
                   {"optimizer", opt(c.optimizer)},
                   {"calibration_optimizer", opt(c.calibration_optimizer)},
                   {"workers", c.workers},
                   {"seed", c.seed},
                   {"output_dir", c.output_dir},
                   {"calibration_cache", c.calibration_cache}};
  j["omega1_ghz"] = c.omega1_ghz ? nlohmann::json(*c.omega1_ghz) : nlohmann::json(nullptr);
  return j;
}

inline RunConfig parse_config(const std::string& text, const std::string& origin = "<config>") {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(origin + ": JSON parse error at " + detail::line_context(text, e.byte > 0 ? e.byte - 1 : 0) +
                      ": " + e.what());
  }
  return config_from_json(j);
}

/// Parsed but not validated: the experiment may still come from the CLI.
inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path);
}

// ---------------------------------------------------------------------------
// Output

/// Writes via a temporary file in the same directory and renames it into place.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  const std::filesystem::path tmp = path.string() + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << content;
    out.flush();
    if (!out) {
      std::filesystem::remove(tmp, ec);
      throw IoError("write to " + tmp.string() + " failed");
    }
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot rename into " + path.string());
  }
}

inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

inline std::string join_flags(const std::vector<std::string>& flags) {
  std::string out;
  for (const auto& f : flags) out += (out.empty() ? "" : ";") + f;
  return out;
}

inline const std::string& csv_schema(const std::string& experiment) {
  static const std::map<std::string, std::string> schemas{
      {"calibrate", "qubit,delta_ghz,omegac_ghz,amplitude_ghz,drag_alpha,offset_ghz,frequency_ghz,infidelity,flags"},
      {"zz-sweep", "omegac_ghz,zeta_ghz,j_ghz,flags"},
      {"leakage-sweep", "delta_ghz,leak_q0_200,leak_q1_002,flags"},
      {"mitigate-point",
       "p0,p1,delta_ghz,omegac_ghz,infidelity_ideal,infidelity_crosstalk,infidelity_mitigated,theta0_2pi,phi0_2pi,"
       "lambda0_2pi,theta1_2pi,phi1_2pi,lambda1_2pi,leak_q0_200,leak_q1_002,evaluations,flags"},
      {"mitigation-sweep",
       "p0,p1,delta_ghz,omegac_ghz,infidelity_ideal,infidelity_crosstalk,infidelity_mitigated,theta0_2pi,phi0_2pi,"
       "lambda0_2pi,theta1_2pi,phi1_2pi,lambda1_2pi,leak_q0_200,leak_q1_002,evaluations,flags"}};
  return schemas.at(experiment);
}

/// Header comment plus column row.
inline std::string csv_header(const std::string& experiment) {
  const std::string& cols = csv_schema(experiment);
  return "# xtalk-sim " + experiment + " v" + kCodeVersion + ": " + cols + "\n" + cols + "\n";
}

inline std::string record_csv_row(const SweepRecord& r, const std::string& experiment) {
  std::ostringstream row;
  if (experiment == "leakage-sweep") {
    row << fmt(r.delta_ghz) << ',' << fmt(r.leak_q0_200) << ',' << fmt(r.leak_q1_002) << ',' << join_flags(r.flags);
    return row.str();
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::array<double, 6> angles;
  angles.fill(nan);
  if (r.optimized) {
    for (int l = 0; l < 2; ++l) {
      angles[3 * l] = (*r.optimized)[l].theta / kTwoPi;
      angles[3 * l + 1] = (*r.optimized)[l].phi / kTwoPi;
      angles[3 * l + 2] = (*r.optimized)[l].lambda / kTwoPi;
    }
  }
  row << fmt(r.p0) << ',' << fmt(r.p1) << ',' << fmt(r.delta_ghz) << ',' << fmt(r.omegac_ghz) << ','
      << fmt(1 - r.fidelity_ideal) << ',' << fmt(1 - r.fidelity_crosstalk) << ',' << fmt(1 - r.fidelity_mitigated);
  for (double a : angles) row << ',' << fmt(a);
  row << ',' << fmt(r.leak_q0_200) << ',' << fmt(r.leak_q1_002) << ',' << r.evaluations << ','
      << join_flags(r.flags);
  return row.str();
}

/// One CSV row per record, in record order.
inline std::string format_records(const std::vector<SweepRecord>& records, const std::string& experiment) {
  std::string out;
  for (const SweepRecord& r : records) out += record_csv_row(r, experiment) + "\n";
  return out;
}

inline nlohmann::json record_json(const SweepRecord& r) {
  auto num = [](double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); };
  nlohmann::json j{{"delta_ghz", r.delta_ghz},
                   {"omegac_ghz", num(r.omegac_ghz)},
                   {"p0", r.p0},
                   {"p1", r.p1},
                   {"fidelity_ideal", num(r.fidelity_ideal)},
                   {"fidelity_crosstalk", num(r.fidelity_crosstalk)},
                   {"fidelity_mitigated", num(r.fidelity_mitigated)},
                   {"leak_q0_200", num(r.leak_q0_200)},
                   {"leak_q1_002", num(r.leak_q1_002)},
                   {"calibration_infidelity", {num(r.calibration_infidelity[0]), num(r.calibration_infidelity[1])}},
                   {"evaluations", r.evaluations},
                   {"flags", r.flags},
                   {"error", r.error}};
  if (r.optimized) {
    for (int l = 0; l < 2; ++l) {
      const GateSpec& s = (*r.optimized)[l];
      j["optimized_specs"]["q" + std::to_string(l)] = {
          {"theta_2pi", s.theta / kTwoPi}, {"phi_2pi", s.phi / kTwoPi}, {"lambda_2pi", s.lambda / kTwoPi}};
    }
  }
  return j;
}

struct RunOutput {
  std::string csv;
  nlohmann::json metadata;
  int failures = 0;
};

// ---------------------------------------------------------------------------
// Experiments

inline RunOutput run_experiment(const RunConfig& c, CalibrationCache& cache) {
  c.validate();
  RunOutput out;
  out.csv = csv_header(c.experiment);
  out.metadata = {{"code_version", kCodeVersion}, {"experiment", c.experiment}, {"config", to_json(c)}};
  const SweepSettings s = c.sweep_settings();
  std::ostringstream rows;

  if (c.experiment == "calibrate") {
    const double delta = *c.omega1_ghz - c.omega0_ghz;
    PointSetup setup = prepare_point(delta, s, cache);
    for (int q = 0; q < 2; ++q) {
      const CalibratedGate& g = setup.gates[q];
      rows << q << ',' << fmt(delta) << ',' << fmt(linear(setup.coupler.omegac)) << ','
           << fmt(linear(g.pulse.amplitude)) << ',' << fmt(g.pulse.drag) << ',' << fmt(linear(g.pulse.offset)) << ','
           << fmt(linear(g.pulse.frequency)) << ',' << fmt(g.infidelity()) << ',' << join_flags(setup.flags) << '\n';
      out.metadata["calibrations"].push_back({{"qubit", q},
                                              {"pulse", to_json(g.pulse)},
                                              {"infidelity", g.infidelity()},
                                              {"evaluations", g.evaluations}});
    }
    for (const auto& f : setup.flags) {
      if (f.rfind("calibration", 0) == 0) ++out.failures;
    }
    out.metadata["coupler"] = {{"omegac_ghz", linear(setup.coupler.omegac)},
                               {"zeta_ghz", linear(setup.coupler.zeta)},
                               {"kind", to_string(setup.coupler.kind)}};
  } else if (c.experiment == "zz-sweep") {
    DeviceParams d = c.device().without_crosstalk();
    std::vector<double> grid = c.omegac_grid_ghz;
    if (grid.empty()) {
      for (int i = 0; i <= 100; ++i) {
        grid.push_back(*c.omega1_ghz + c.coupler_window_ghz[0] +
                       (c.coupler_window_ghz[1] - c.coupler_window_ghz[0]) * i / 100.0);
      }
    }
    for (double wc : grid) {
      d.omegac = angular(wc);
      std::string flags;
      double zeta = std::numeric_limits<double>::quiet_NaN(), j = zeta;
      try {
        zeta = zz_coupling(d, s.layout);
        j = xy_coupling(d);
      } catch (const Error& e) {
        flags = "hybridization";
        ++out.failures;
      }
      rows << fmt(wc) << ',' << fmt(linear(zeta)) << ',' << fmt(linear(j)) << ',' << flags << '\n';
    }
    const ZzSuppressionPoint z = find_zz_suppression_point(d, d.omega1 + s.coupler_low, d.omega1 + s.coupler_high,
                                                           s.layout, s.coupler_grid_points);
    out.metadata["suppression_point"] = {
        {"omegac_ghz", linear(z.omegac)}, {"zeta_ghz", linear(z.zeta)}, {"kind", to_string(z.kind)}};
  } else {
    std::vector<SweepRecord> records;
    if (c.experiment == "leakage-sweep") {
      records = run_leakage_sweep(c.delta_grid_ghz, s, cache);
    } else if (c.experiment == "mitigation-sweep") {
      records = run_mitigation_sweep(c.delta_grid_ghz, c.p_values, c.nominal(), s, cache);
    } else {
      records = {mitigate_point(*c.omega1_ghz - c.omega0_ghz, c.p0, c.p1, c.nominal(), s, cache)};
    }
    rows << format_records(records, c.experiment);
    out.metadata["records"] = nlohmann::json::array();
    for (const SweepRecord& r : records) {
      out.metadata["records"].push_back(record_json(r));
      if (r.failed()) ++out.failures;
    }
  }
  out.csv += rows.str();
  out.metadata["failures"] = out.failures;
  return out;
}

/// Runs the experiment and writes <output_dir>/<name>.csv and .json.
/// Returns the number of hard-failed points.
inline int run(const RunConfig& c, std::ostream& log = std::cerr) {
  CalibrationCache cache;
  if (!c.calibration_cache.empty() && std::filesystem::exists(c.calibration_cache)) {
    std::ifstream in(c.calibration_cache);
    try {
      cache.merge_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
      log << "ignoring unreadable calibration cache " << c.calibration_cache << ": " << e.what() << '\n';
    }
  }
  const RunOutput out = run_experiment(c, cache);
  const std::filesystem::path dir(c.output_dir);
  write_atomic(dir / (c.name + ".csv"), out.csv);
  write_atomic(dir / (c.name + ".json"), out.metadata.dump(2) + "\n");
  if (!c.calibration_cache.empty()) write_atomic(c.calibration_cache, cache.to_json().dump(1) + "\n");
  log << c.experiment << ": wrote " << (dir / (c.name + ".csv")).string() << " (" << out.failures
      << " failed points)\n";
  return out.failures;
}

}  // namespace xtalk
