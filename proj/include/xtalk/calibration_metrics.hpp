#pragma once

// Gate fidelity for possibly leaky implemented gates, a seeded Nelder-Mead
// simplex optimizer and isolated √X pulse calibration.

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "xtalk/device_model.hpp"
#include "xtalk/drive_model.hpp"
#include "xtalk/errors.hpp"
#include "xtalk/propagation.hpp"
#include "xtalk/quantum_ops.hpp"

namespace xtalk {

namespace detail {

inline void check_fidelity_inputs(const ComplexMatrix& target, const ComplexMatrix& implemented, int d) {
  if (target.rows() != d || target.cols() != d || implemented.rows() != d || implemented.cols() != d) {
    throw InvalidDimensionError("fidelity: expected " + std::to_string(d) + "x" + std::to_string(d) +
                                " matrices");
  }
  if (unitarity_defect(target) > 1e-10) throw ContractViolation("fidelity: target is not unitary");
  if (operator_norm(implemented) > 1.0 + 1e-8) {
    throw ContractViolation("fidelity: implemented gate has a singular value above 1");
  }
}

inline double overlap_fidelity(const ComplexMatrix& target, const ComplexMatrix& implemented) {
  const double d = static_cast<double>(target.rows());
  const double norm = (implemented.adjoint() * implemented).trace().real();
  const double overlap = std::norm((target.adjoint() * implemented).trace());
  return (norm + overlap) / (d * (d + 1));
}

}  // namespace detail

/// F = [Tr(U_imp† U_imp) + |Tr(U† U_imp)|²] / (d(d+1)) with d = 4.
inline double gate_fidelity(const ComplexMatrix& target, const ComplexMatrix& implemented) {
  detail::check_fidelity_inputs(target, implemented, 4);
  return detail::overlap_fidelity(target, implemented);
}

/// Same metric with d = 2.
inline double single_qubit_fidelity(const ComplexMatrix& target, const ComplexMatrix& implemented) {
  detail::check_fidelity_inputs(target, implemented, 2);
  return detail::overlap_fidelity(target, implemented);
}

/// exp(−i(π/4)X).
inline ComplexMatrix sqrt_x_target() {
  const double s = 1.0 / std::sqrt(2.0);
  ComplexMatrix m(2, 2);
  m << Complex(s, 0), Complex(0, -s), Complex(0, -s), Complex(s, 0);
  return m;
}

struct OptimizerConfig {
  int max_evaluations = 500;  // per restart
  int restarts = 3;           // runs after the first one
  double tolerance = 1e-9;    // spread of objective values over the simplex
  double x_tolerance = 1e-7;  // simplex diameter, max-norm
  std::uint64_t seed = 20240601;
  double target = -std::numeric_limits<double>::infinity();  // skip remaining restarts once reached

  void validate() const {
    if (max_evaluations < 100) throw ContractViolation("optimizer: max_evaluations must be at least 100");
    if (restarts < 0) throw ContractViolation("optimizer: restarts must be non-negative");
    if (!(tolerance > 0) || tolerance > 1e-7) throw ContractViolation("optimizer: tolerance must lie in (0, 1e-7]");
    if (!(x_tolerance > 0)) throw ContractViolation("optimizer: x_tolerance must be positive");
  }
};

struct OptimizationResult {
  std::vector<double> x;
  double value = 0.0;
  int evaluations = 0;
};

namespace detail {

/// One simplex run from x0 with per-coordinate initial steps.
inline OptimizationResult simplex_run(const std::function<double(const std::vector<double>&)>& f,
                                      const std::vector<double>& x0, const std::vector<double>& steps,
                                      const OptimizerConfig& opt) {
  const std::size_t n = x0.size();
  int evals = 0;
  auto eval = [&](const std::vector<double>& x) {
    ++evals;
    const double v = f(x);
    if (!std::isfinite(v)) throw NonFiniteObjective("nelder_mead: objective is not finite", x);
    return v;
  };

  std::vector<std::vector<double>> pts{x0};
  std::vector<double> vals{eval(x0)};
  if (n == 0) return {x0, vals[0], evals};
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> x = x0;
    x[i] += steps[i];
    pts.push_back(x);
    vals.push_back(eval(x));
  }

  std::vector<std::size_t> order(n + 1);
  auto sort_simplex = [&] {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
    std::vector<std::vector<double>> p2;
    std::vector<double> v2;
    for (std::size_t i : order) {
      p2.push_back(pts[i]);
      v2.push_back(vals[i]);
    }
    pts = std::move(p2);
    vals = std::move(v2);
  };

  auto combine = [&](const std::vector<double>& a, const std::vector<double>& b, double t) {
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + t * (b[i] - a[i]);
    return out;
  };

  sort_simplex();
  while (evals < opt.max_evaluations) {
    double diameter = 0.0;
    for (std::size_t k = 1; k <= n; ++k) {
      for (std::size_t i = 0; i < n; ++i) diameter = std::max(diameter, std::abs(pts[k][i] - pts[0][i]));
    }
    if (vals[n] - vals[0] <= opt.tolerance && diameter <= opt.x_tolerance) break;

    std::vector<double> centroid(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t i = 0; i < n; ++i) centroid[i] += pts[k][i] / static_cast<double>(n);
    }
    const std::vector<double> xr = combine(centroid, pts[n], -1.0);
    const double fr = eval(xr);
    if (fr < vals[0]) {
      const std::vector<double> xe = combine(centroid, pts[n], -2.0);
      const double fe = eval(xe);
      if (fe < fr) {
        pts[n] = xe;
        vals[n] = fe;
      } else {
        pts[n] = xr;
        vals[n] = fr;
      }
    } else if (fr < vals[n - 1]) {
      pts[n] = xr;
      vals[n] = fr;
    } else {
      const bool outside = fr < vals[n];
      const std::vector<double> xc = outside ? combine(centroid, xr, 0.5) : combine(centroid, pts[n], 0.5);
      const double fc = eval(xc);
      if (fc < (outside ? fr : vals[n])) {
        pts[n] = xc;
        vals[n] = fc;
      } else {
        for (std::size_t k = 1; k <= n; ++k) {
          pts[k] = combine(pts[0], pts[k], 0.5);
          vals[k] = eval(pts[k]);
        }
      }
    }
    sort_simplex();
  }
  return {pts[0], vals[0], evals};
}

inline std::vector<double> default_steps(const std::vector<double>& x) {
  std::vector<double> s(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) s[i] = x[i] != 0.0 ? 0.05 * x[i] : 0.00025;
  return s;
}

}  // namespace detail

/// Minimises f from x0. Restart r starts from the incumbent with every
/// coordinate perturbed by a uniform factor in [−10%, +10%] (absolute ±0.1
/// for zero coordinates) drawn from a generator seeded by opt.seed.
inline OptimizationResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                                      const std::vector<double>& x0, const OptimizerConfig& opt,
                                      std::optional<std::vector<double>> steps = std::nullopt) {
  opt.validate();
  if (steps && steps->size() != x0.size()) throw InvalidDimensionError("nelder_mead: step vector size mismatch");
  const std::vector<double> s0 = steps ? *steps : detail::default_steps(x0);

  OptimizationResult best = detail::simplex_run(f, x0, s0, opt);
  int total = best.evaluations;
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (int r = 0; r < opt.restarts && best.value > opt.target; ++r) {
    std::vector<double> start = best.x;
    for (double& v : start) v = v != 0.0 ? v * (1.0 + 0.1 * unit(rng)) : 0.1 * unit(rng);
    OptimizationResult run = detail::simplex_run(f, start, steps ? *steps : detail::default_steps(start), opt);
    total += run.evaluations;
    if (run.value < best.value) best = std::move(run);
  }
  best.evaluations = total;
  return best;
}

struct CalibratedGate {
  int qubit = 0;
  PulseParams pulse;       // start = 0, phase = 0
  double fidelity = 0.0;   // isolated single-qubit fidelity against √X
  DeviceParams params;     // calibration context, p0 = p1 = 0
  int evaluations = 0;

  double infidelity() const { return 1.0 - fidelity; }
};

class CalibrationFailure : public Error {
 public:
  explicit CalibrationFailure(CalibratedGate best)
      : Error("calibration of qubit " + std::to_string(best.qubit) + " reached infidelity " +
              std::to_string(1.0 - best.fidelity) + " only"),
        best_(std::move(best)) {}
  const CalibratedGate& best() const noexcept { return best_; }

 private:
  CalibratedGate best_;
};

struct CalibrationOptions {
  OptimizerConfig optimizer{300, 2, 1e-9, 1e-3, 7, 2e-5};
  PropagationOptions propagation{};
  double required_fidelity = 0.9999;
};

/// Isolated 2×2 block of a √X pulse on `qubit` (spectator and coupler in
/// the ground state), in the dressed rotating frame.
inline ComplexMatrix isolated_gate(const MagnusPropagator& engine, const DressedSpectrum& spectrum, int qubit,
                                   const PulseParams& pulse, const PropagationOptions& popt) {
  const std::vector<Label> basis{{0, 0, 0}, qubit == 0 ? Label{1, 0, 0} : Label{0, 0, 1}};
  const DriveSchedule schedule = append_pulse(DriveSchedule{}, qubit, pulse);
  const PropagationResult r = propagate_dressed(engine, spectrum, schedule, pulse.end(), popt, basis);
  return project_columns(r.frame, spectrum, basis);
}

namespace detail {

// Optimised coordinates: A/A0, α, δω̃ in units of 2π·10 MHz.
inline constexpr double kOffsetUnit = angular(0.01);

inline PulseParams pulse_from(const std::vector<double>& x, double a0, double tg, double omega_q) {
  PulseParams p;
  p.amplitude = x[0] * a0;
  p.duration = tg;
  p.drag = x[1];
  p.offset = x[2] * kOffsetUnit;
  p.frequency = omega_q + p.offset;
  return p;
}

}  // namespace detail

/// Optimises (A, α, δω̃) of a raised-cosine DRAG pulse so the isolated block
/// matches exp(−i(π/4)X). Starts from A0 = π/(2Tg), α = 0.5, δω̃ = 0 unless an
/// initial pulse is given. Throws CalibrationFailure below the required
/// fidelity.
inline CalibratedGate calibrate_sqrt_x(int qubit, const DeviceParams& params, double tg, const ModeLayout& layout,
                                       const CalibrationOptions& copt = {},
                                       const std::optional<PulseParams>& initial = std::nullopt) {
  check_line(qubit);
  if (params.p0 != 0.0 || params.p1 != 0.0) {
    throw ContractViolation("calibrate_sqrt_x: calibration runs without crosstalk (p0 = p1 = 0)");
  }
  if (!(tg > 0)) throw ContractViolation("calibrate_sqrt_x: gate time must be positive");
  const DressedSpectrum spectrum = dressed_spectrum(params, layout);
  const MagnusPropagator engine(build_static_hamiltonian(params, layout), params, layout);
  const double omega_q = spectrum.omega_qubit(qubit);
  const double a0 = kPi / (2.0 * tg);
  const ComplexMatrix target = sqrt_x_target();

  auto objective = [&](const std::vector<double>& x) {
    const PulseParams p = detail::pulse_from(x, a0, tg, omega_q);
    if (std::abs(p.offset) >= omega_q / 10.0 || !(p.amplitude >= 0.0)) return 1.0;
    return 1.0 - single_qubit_fidelity(target, isolated_gate(engine, spectrum, qubit, p, copt.propagation));
  };

  std::vector<double> x0{1.0, 0.5, 0.0};
  if (initial) x0 = {initial->amplitude / a0, initial->drag, initial->offset / detail::kOffsetUnit};
  const std::vector<double> steps{0.02, 0.1, 0.05};
  const OptimizationResult r = nelder_mead(objective, x0, copt.optimizer, steps);

  CalibratedGate gate;
  gate.qubit = qubit;
  gate.pulse = detail::pulse_from(r.x, a0, tg, omega_q);
  gate.fidelity = 1.0 - r.value;
  gate.params = params;
  gate.evaluations = r.evaluations;
  // Step-halving check on the final pulse.
  PropagationOptions check = copt.propagation;
  check.verify_step = true;
  isolated_gate(engine, spectrum, qubit, gate.pulse, check);
  if (gate.fidelity < copt.required_fidelity) throw CalibrationFailure(gate);
  return gate;
}

inline nlohmann::json to_json(const PulseParams& p) {
  return {{"amplitude", p.amplitude}, {"duration", p.duration}, {"drag", p.drag},   {"frequency", p.frequency},
          {"offset", p.offset},       {"phase", p.phase},       {"start", p.start}};
}

inline PulseParams pulse_from_json(const nlohmann::json& j) {
  PulseParams p;
  p.amplitude = j.at("amplitude").get<double>();
  p.duration = j.at("duration").get<double>();
  p.drag = j.at("drag").get<double>();
  p.frequency = j.at("frequency").get<double>();
  p.offset = j.at("offset").get<double>();
  p.phase = j.at("phase").get<double>();
  p.start = j.at("start").get<double>();
  return p;
}

/// FNV-1a over the printed device, layout, gate time and calibration
/// settings. Crosstalk coefficients are excluded (calibration runs at p = 0).
inline std::string calibration_key(const DeviceParams& d, const ModeLayout& layout, int qubit, double tg,
                                   const CalibrationOptions& copt) {
  std::ostringstream s;
  s.precision(17);
  s << d.omega0 << ' ' << d.omega1 << ' ' << d.omegac << ' ' << d.eta0 << ' ' << d.eta1 << ' ' << d.etac << ' '
    << d.g0c << ' ' << d.g1c << ' ' << d.g01 << '|' << layout.levels(Mode::Q0) << layout.levels(Mode::C)
    << layout.levels(Mode::Q1) << '|' << copt.propagation.step << ' ' << copt.optimizer.max_evaluations << ' '
    << copt.optimizer.restarts << ' ' << copt.optimizer.tolerance << ' ' << copt.optimizer.x_tolerance << ' '
    << copt.optimizer.seed << ' ' << copt.required_fidelity;
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s.str()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream key;
  key << std::hex << h << "/q" << qubit << "/tg" << std::defaultfloat << tg;
  return key.str();
}

/// Calibrated pulses keyed by (device hash, qubit, Tg). Safe for concurrent
/// use; serialises to a flat JSON object.
class CalibrationCache {
 public:
  std::optional<CalibratedGate> find(const std::string& key) const {
    std::shared_lock lock(mutex_);
    const auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  void insert(const std::string& key, const CalibratedGate& gate) {
    std::unique_lock lock(mutex_);
    entries_[key] = gate;
  }

  std::size_t size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
  }

  /// Calibrates on a miss. Failures are not cached.
  CalibratedGate get_or_calibrate(int qubit, const DeviceParams& params, double tg, const ModeLayout& layout,
                                  const CalibrationOptions& copt = {}) {
    const std::string key = calibration_key(params, layout, qubit, tg, copt);
    if (auto hit = find(key)) {
      hit->params = params;
      return *hit;
    }
    CalibratedGate g = calibrate_sqrt_x(qubit, params, tg, layout, copt);
    insert(key, g);
    return g;
  }

  nlohmann::json to_json() const {
    std::shared_lock lock(mutex_);
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [key, g] : entries_) {
      j[key] = {{"qubit", g.qubit},
                {"pulse", xtalk::to_json(g.pulse)},
                {"fidelity", g.fidelity},
                {"evaluations", g.evaluations}};
    }
    return j;
  }

  /// Entries carry no device; find() callers restore it.
  void merge_json(const nlohmann::json& j) {
    std::unique_lock lock(mutex_);
    for (const auto& [key, v] : j.items()) {
      CalibratedGate g;
      g.qubit = v.at("qubit").get<int>();
      g.pulse = pulse_from_json(v.at("pulse"));
      g.fidelity = v.at("fidelity").get<double>();
      g.evaluations = v.at("evaluations").get<int>();
      entries_[key] = g;
    }
  }

 private:
  mutable std::shared_mutex mutex_;
  std::map<std::string, CalibratedGate> entries_;
};

}  // namespace xtalk
