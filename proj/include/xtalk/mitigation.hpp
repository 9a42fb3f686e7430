#pragma once

// Z-X-Z-X-Z gate decomposition, the simultaneous two-layer √X circuit,
// virtual-Z crosstalk mitigation and the Δ sweeps built on them.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "xtalk/calibration_metrics.hpp"
#include "xtalk/device_model.hpp"
#include "xtalk/drive_model.hpp"
#include "xtalk/errors.hpp"
#include "xtalk/propagation.hpp"
#include "xtalk/quantum_ops.hpp"

namespace xtalk {

struct GateSpec {
  double theta = 0.0;
  double phi = 0.0;
  double lambda = 0.0;

  bool operator==(const GateSpec&) const = default;
};

using SpecPair = std::array<GateSpec, 2>;

/// exp(−i(α/2)Z).
inline ComplexMatrix rz(double alpha) {
  ComplexMatrix m = ComplexMatrix::Zero(2, 2);
  m(0, 0) = std::exp(Complex(0.0, -alpha / 2));
  m(1, 1) = std::exp(Complex(0.0, alpha / 2));
  return m;
}

/// Z_{φ−π/2} X_{π/2} Z_{π−θ} X_{π/2} Z_{λ−π/2}.
inline ComplexMatrix u3_matrix(const GateSpec& s) {
  const ComplexMatrix x = sqrt_x_target();
  return rz(s.phi - kPi / 2) * x * rz(kPi - s.theta) * x * rz(s.lambda - kPi / 2);
}

/// u3(spec0) ⊗ u3(spec1) in (|00>, |01>, |10>, |11>) order.
inline ComplexMatrix two_qubit_target(const SpecPair& specs) {
  return kron(u3_matrix(specs[0]), u3_matrix(specs[1]));
}

struct CircuitPlan {
  DriveSchedule schedule;
  std::array<double, 2> trailing{0.0, 0.0};  // φ_l − π/2
};

/// Per line: Z(λ − π/2), √X at 0, Z(π − θ), √X at Tg. The trailing
/// Z(φ − π/2) is left to software.
inline CircuitPlan build_simultaneous_circuit(const SpecPair& specs, const std::array<CalibratedGate, 2>& gates) {
  const double tg = gates[0].pulse.duration;
  if (std::abs(gates[1].pulse.duration - tg) > 1e-12) {
    throw ConfigError("build_simultaneous_circuit: calibrated gate times differ (" + std::to_string(tg) + " vs " +
                      std::to_string(gates[1].pulse.duration) + " ns)");
  }
  CircuitPlan plan;
  for (int l = 0; l < 2; ++l) {
    PulseParams p = gates[l].pulse;
    p.phase = 0.0;
    p.start = 0.0;
    plan.schedule = apply_virtual_z(plan.schedule, l, specs[l].lambda - kPi / 2);
    plan.schedule = append_pulse(plan.schedule, l, p);
    plan.schedule = apply_virtual_z(plan.schedule, l, kPi - specs[l].theta);
    p.start = tg;
    plan.schedule = append_pulse(plan.schedule, l, p);
    plan.trailing[l] = specs[l].phi - kPi / 2;
  }
  return plan;
}

/// Software Z rotations applied after the pulses: the trailing angle plus the
/// phase the line accumulated, which a physical pulse does not undo.
inline ComplexMatrix trailing_frame(const CircuitPlan& plan) {
  return kron(rz(plan.trailing[0] + plan.schedule.accumulated_phase(0)),
              rz(plan.trailing[1] + plan.schedule.accumulated_phase(1)));
}

/// Engine and spectrum for one device configuration.
class CircuitSimulator {
 public:
  CircuitSimulator(const DeviceParams& params, const DressedSpectrum& spectrum, const ModeLayout& layout,
                   PropagationOptions opt = {})
      : params_(params),
        spectrum_(spectrum),
        engine_(build_static_hamiltonian(params, layout), params, layout),
        opt_(opt) {}

  const DeviceParams& params() const { return params_; }
  const DressedSpectrum& spectrum() const { return spectrum_; }
  const PropagationOptions& options() const { return opt_; }

  /// Rotating-frame images of the four dressed computational states, before
  /// the trailing software Z.
  PropagationResult run(const DriveSchedule& schedule, bool verify = false) const {
    const std::vector<Label> cols(computational_labels().begin(), computational_labels().end());
    PropagationOptions opt = opt_;
    opt.verify_step = opt.verify_step || verify;
    PropagationResult r = propagate_dressed(engine_, spectrum_, schedule, schedule.duration(), opt, cols);
    r.gate = project_columns(r.frame, spectrum_, cols);
    const ComplexVector from101 = r.frame.col(3);
    for (const Label& t : {Label{2, 0, 0}, Label{0, 0, 2}}) {
      r.populations[to_string(t)] = std::norm(spectrum_.vector(t).dot(from101));
    }
    return r;
  }

 private:
  DeviceParams params_;
  DressedSpectrum spectrum_;
  MagnusPropagator engine_;
  PropagationOptions opt_;
};

/// Implemented 4×4 gate (trailing Z included) and the raw propagation.
inline std::pair<ComplexMatrix, PropagationResult> simulate_circuit(const CircuitPlan& plan,
                                                                    const CircuitSimulator& sim) {
  PropagationResult r = sim.run(plan.schedule);
  ComplexMatrix gate = trailing_frame(plan) * r.gate;
  return {gate, std::move(r)};
}

inline std::pair<ComplexMatrix, PropagationResult> simulate_circuit(const CircuitPlan& plan,
                                                                    const DeviceParams& params,
                                                                    const DressedSpectrum& spectrum,
                                                                    const ModeLayout& layout,
                                                                    const PropagationOptions& opt = {}) {
  return simulate_circuit(plan, CircuitSimulator(params, spectrum, layout, opt));
}

struct MitigationResult {
  SpecPair nominal;
  SpecPair optimized;
  double fidelity_ideal = 0.0;
  double fidelity_crosstalk = 0.0;
  double fidelity_mitigated = 0.0;
  int evaluations = 0;
  std::map<std::string, double> leakage;  // crosstalk run, nominal specs, from |101>
};

namespace detail {

inline double wrap_angle(double a) { return std::remainder(a, kTwoPi); }

/// Trailing angles (ζ0, ζ1) maximising |Tr(U† (Z_ζ0 ⊗ Z_ζ1) M)| where
/// m_k = (M U†)_kk. For fixed ζ1 the optimum over ζ0 is analytic, leaving
/// g(ζ1) = |m0 + e^{iζ1} m1| + |m2 + e^{iζ1} m3| to a 1-D search.
inline std::array<double, 2> best_trailing(const ComplexMatrix& m, const ComplexMatrix& target) {
  const ComplexMatrix prod = m * target.adjoint();
  const Complex m0 = prod(0, 0), m1 = prod(1, 1), m2 = prod(2, 2), m3 = prod(3, 3);
  auto g = [&](double z) {
    const Complex e = std::exp(Complex(0.0, z));
    return std::abs(m0 + e * m1) + std::abs(m2 + e * m3);
  };
  constexpr int kGrid = 256;
  int best = 0;
  double gbest = -1.0;
  for (int i = 0; i < kGrid; ++i) {
    const double v = g(kTwoPi * i / kGrid);
    if (v > gbest) {
      gbest = v;
      best = i;
    }
  }
  double a = kTwoPi * (best - 1) / kGrid, b = kTwoPi * (best + 1) / kGrid;
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - invphi * (b - a), x2 = a + invphi * (b - a);
  double f1 = g(x1), f2 = g(x2);
  while (b - a > 1e-12) {
    if (f1 > f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - invphi * (b - a);
      f1 = g(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + invphi * (b - a);
      f2 = g(x2);
    }
  }
  const double z1 = 0.5 * (a + b);
  const Complex e1 = std::exp(Complex(0.0, z1 / 2));
  const Complex p = std::conj(e1) * m0 + e1 * m1;
  const Complex q = std::conj(e1) * m2 + e1 * m3;
  const double z0 = std::arg(p) - std::arg(q);
  return {wrap_angle(z0), wrap_angle(z1)};
}

inline std::array<double, 2> trailing_to_phi(const std::array<double, 2>& zeta, const CircuitPlan& plan) {
  return {wrap_angle(zeta[0] + kPi / 2 - plan.schedule.accumulated_phase(0)),
          wrap_angle(zeta[1] + kPi / 2 - plan.schedule.accumulated_phase(1))};
}

}  // namespace detail

/// Everything the mitigation needs at one device point. `ideal` runs with
/// p = 0, `crosstalk` with the device's crosstalk coefficients; both use the
/// same calibrated pulses.
struct MitigationContext {
  std::array<CalibratedGate, 2> gates;
  const CircuitSimulator* ideal = nullptr;
  const CircuitSimulator* crosstalk = nullptr;
};

/// Maximises gate_fidelity over the six primed angles, target fixed at the
/// nominal specs. The simplex runs over (θ′0, λ′0, θ′1, λ′1); for each of its
/// points the trailing angles φ′ are set to their exact optimum, so the
/// search covers the full six-dimensional space.
inline MitigationResult optimize_virtual_z(const SpecPair& nominal, const MitigationContext& ctx,
                                           const OptimizerConfig& opt) {
  const ComplexMatrix target = two_qubit_target(nominal);
  MitigationResult out;
  out.nominal = nominal;

  const CircuitPlan nominal_plan = build_simultaneous_circuit(nominal, ctx.gates);
  out.fidelity_ideal = gate_fidelity(target, simulate_circuit(nominal_plan, *ctx.ideal).first);
  const auto [xt_gate, xt_run] = simulate_circuit(nominal_plan, *ctx.crosstalk);
  out.fidelity_crosstalk = gate_fidelity(target, xt_gate);
  out.leakage = xt_run.populations;

  auto specs_from = [&](const std::vector<double>& x, SpecPair* full) {
    SpecPair s = nominal;
    s[0].theta = x[0];
    s[0].lambda = x[1];
    s[1].theta = x[2];
    s[1].lambda = x[3];
    const CircuitPlan plan = build_simultaneous_circuit(s, ctx.gates);
    const PropagationResult r = ctx.crosstalk->run(plan.schedule);
    const auto zeta = detail::best_trailing(r.gate, target);
    const auto phi = detail::trailing_to_phi(zeta, plan);
    s[0].phi = phi[0];
    s[1].phi = phi[1];
    const CircuitPlan final_plan = build_simultaneous_circuit(s, ctx.gates);
    if (full) *full = s;
    return gate_fidelity(target, trailing_frame(final_plan) * r.gate);
  };

  const std::vector<double> x0{nominal[0].theta, nominal[0].lambda, nominal[1].theta, nominal[1].lambda};
  const OptimizationResult r =
      nelder_mead([&](const std::vector<double>& x) { return 1.0 - specs_from(x, nullptr); }, x0, opt,
                  std::vector<double>(4, 0.02));
  out.evaluations = r.evaluations + 2;

  SpecPair best;
  specs_from(r.x, &best);
  // One step-halving check on the final circuit.
  const CircuitPlan best_plan = build_simultaneous_circuit(best, ctx.gates);
  const PropagationResult checked = ctx.crosstalk->run(best_plan.schedule, true);
  const double mitigated = gate_fidelity(target, trailing_frame(best_plan) * checked.gate);

  // The nominal point with its own optimal trailing angles is in the search
  // space; keep whichever is better so mitigation never loses to no change.
  if (mitigated >= out.fidelity_crosstalk) {
    out.optimized = best;
    out.fidelity_mitigated = mitigated;
  } else {
    out.optimized = nominal;
    out.fidelity_mitigated = out.fidelity_crosstalk;
  }
  for (auto& s : out.optimized) {
    s.theta = detail::wrap_angle(s.theta);
    s.phi = detail::wrap_angle(s.phi);
    s.lambda = detail::wrap_angle(s.lambda);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sweeps

struct SweepSettings {
  DeviceParams base;                          // omega1 is replaced by omega0 + Δ
  double gate_time = 12.0;                    // ns
  ModeLayout layout{4};
  double coupler_low = angular(0.5);          // window above omega1
  double coupler_high = angular(2.5);
  int coupler_grid_points = 61;
  double collision_overlap = 0.8;             // flag points whose dressed labels are weaker
  CalibrationOptions calibration{};
  OptimizerConfig optimizer{500, 0, 1e-10, 1e-5, 11};
  PropagationOptions propagation{};
  int workers = 1;
};

struct SweepRecord {
  double delta_ghz = 0.0;
  double omegac_ghz = std::numeric_limits<double>::quiet_NaN();
  double p0 = 0.0, p1 = 0.0;
  double fidelity_ideal = std::numeric_limits<double>::quiet_NaN();
  double fidelity_crosstalk = std::numeric_limits<double>::quiet_NaN();
  double fidelity_mitigated = std::numeric_limits<double>::quiet_NaN();
  double leak_q0_200 = std::numeric_limits<double>::quiet_NaN();
  double leak_q1_002 = std::numeric_limits<double>::quiet_NaN();
  std::array<double, 2> calibration_infidelity{std::numeric_limits<double>::quiet_NaN(),
                                               std::numeric_limits<double>::quiet_NaN()};
  std::optional<SpecPair> optimized;
  int evaluations = 0;
  std::vector<std::string> flags;
  std::string error;  // non-empty for hard failures

  bool failed() const { return !error.empty(); }
  bool flagged(const std::string& f) const { return std::find(flags.begin(), flags.end(), f) != flags.end(); }
};

/// Device, coupler placement and calibrated pulses for one Δ.
struct PointSetup {
  DeviceParams params;  // p0 = p1 = 0
  ZzSuppressionPoint coupler{};
  std::optional<DressedSpectrum> spectrum;
  std::array<CalibratedGate, 2> gates;
  std::vector<std::string> flags;
};

inline PointSetup prepare_point(double delta_ghz, const SweepSettings& s, CalibrationCache& cache) {
  PointSetup out;
  out.params = s.base.without_crosstalk();
  out.params.omega1 = out.params.omega0 + angular(delta_ghz);
  out.coupler = find_zz_suppression_point(out.params, out.params.omega1 + s.coupler_low,
                                          out.params.omega1 + s.coupler_high, s.layout, s.coupler_grid_points);
  out.params.omegac = out.coupler.omegac;
  out.spectrum = dressed_spectrum(out.params, s.layout);
  if (out.spectrum->min_overlap(default_labels()) < s.collision_overlap) out.flags.push_back("collision");
  for (int q = 0; q < 2; ++q) {
    try {
      out.gates[q] = cache.get_or_calibrate(q, out.params, s.gate_time, s.layout, s.calibration);
    } catch (const CalibrationFailure& e) {
      out.gates[q] = e.best();
      const std::string flag = "calibration_q" + std::to_string(q);
      out.flags.push_back(flag);
    }
  }
  return out;
}

namespace detail {

/// Runs job(i) for i in [0, n) on up to `workers` threads. Exceptions are
/// the job's business.
template <class Job>
void parallel_for(std::size_t n, int workers, Job job) {
  const std::size_t w = std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), n));
  std::atomic<std::size_t> next{0};
  auto loop = [&] {
    for (std::size_t i = next++; i < n; i = next++) job(i);
  };
  if (w == 1) {
    loop();
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t k = 0; k < w; ++k) pool.emplace_back(loop);
  for (auto& t : pool) t.join();
}

inline void check_grid(const std::vector<double>& grid) {
  if (grid.empty()) throw ConfigError("sweep: empty Δ grid");
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) throw ConfigError("sweep: Δ grid must be strictly increasing");
  }
}

template <class Body>
SweepRecord guarded_point(double delta, Body body) {
  SweepRecord rec;
  rec.delta_ghz = delta;
  try {
    body(rec);
  } catch (const HybridizationError& e) {
    rec.flags.push_back("hybridization");
    rec.error = e.what();
  } catch (const AccuracyError& e) {
    rec.flags.push_back("accuracy");
    rec.error = e.what();
  } catch (const std::exception& e) {
    rec.flags.push_back("error");
    rec.error = e.what();
  }
  return rec;
}

}  // namespace detail

/// Two back-to-back simultaneous √X layers from dressed |101>, crosstalk
/// coefficients taken from settings.base.
inline std::vector<SweepRecord> run_leakage_sweep(const std::vector<double>& grid_ghz, const SweepSettings& s,
                                                  CalibrationCache& cache) {
  detail::check_grid(grid_ghz);
  std::vector<SweepRecord> out(grid_ghz.size());
  detail::parallel_for(grid_ghz.size(), s.workers, [&](std::size_t i) {
    out[i] = detail::guarded_point(grid_ghz[i], [&](SweepRecord& rec) {
      rec.p0 = s.base.p0;
      rec.p1 = s.base.p1;
      const PointSetup setup = prepare_point(grid_ghz[i], s, cache);
      rec.omegac_ghz = linear(setup.coupler.omegac);
      rec.flags = setup.flags;
      for (int q = 0; q < 2; ++q) rec.calibration_infidelity[q] = setup.gates[q].infidelity();
      DeviceParams xt = setup.params;
      xt.p0 = s.base.p0;
      xt.p1 = s.base.p1;
      xt.crosstalk_phase = s.base.crosstalk_phase;
      const CircuitSimulator sim(xt, *setup.spectrum, s.layout, s.propagation);
      const SpecPair sqrt_x_twice{GateSpec{kPi / 2, -kPi / 2, kPi / 2}, GateSpec{kPi / 2, -kPi / 2, kPi / 2}};
      CircuitPlan plan = build_simultaneous_circuit(sqrt_x_twice, setup.gates);
      // Plain pulses: no virtual Z between or before the layers.
      DriveSchedule plain;
      for (int l = 0; l < 2; ++l) {
        for (const PulseParams& p : plan.schedule.pulses(l)) {
          PulseParams q = p;
          q.phase = 0.0;
          plain = append_pulse(plain, l, q);
        }
      }
      const PropagationResult r = sim.run(plain, true);
      rec.leak_q0_200 = r.populations.at("200");
      rec.leak_q1_002 = r.populations.at("002");
    });
  });
  return out;
}

/// Ideal / crosstalk / mitigated fidelities at one Δ with crosstalk (p0, p1).
/// With `optimize` false only the ideal and crosstalk fidelities are computed.
inline SweepRecord mitigate_point(double delta_ghz, double p0, double p1, const SpecPair& nominal,
                                  const SweepSettings& s, CalibrationCache& cache, bool optimize = true) {
  SweepRecord out = detail::guarded_point(delta_ghz, [&](SweepRecord& rec) {
    const PointSetup setup = prepare_point(delta_ghz, s, cache);
    rec.omegac_ghz = linear(setup.coupler.omegac);
    rec.flags = setup.flags;
    for (int q = 0; q < 2; ++q) rec.calibration_infidelity[q] = setup.gates[q].infidelity();
    DeviceParams xt = setup.params;
    xt.p0 = p0;
    xt.p1 = p1;
    xt.crosstalk_phase = s.base.crosstalk_phase;
    const CircuitSimulator ideal(setup.params, *setup.spectrum, s.layout, s.propagation);
    const CircuitSimulator crosstalk(xt, *setup.spectrum, s.layout, s.propagation);
    const MitigationContext ctx{setup.gates, &ideal, &crosstalk};
    if (!optimize) {
      const ComplexMatrix target = two_qubit_target(nominal);
      const CircuitPlan plan = build_simultaneous_circuit(nominal, setup.gates);
      rec.fidelity_ideal = gate_fidelity(target, simulate_circuit(plan, ideal).first);
      const auto [gate, run] = simulate_circuit(plan, crosstalk);
      rec.fidelity_crosstalk = gate_fidelity(target, gate);
      rec.leak_q0_200 = run.populations.at("200");
      rec.leak_q1_002 = run.populations.at("002");
      return;
    }
    const MitigationResult m = optimize_virtual_z(nominal, ctx, s.optimizer);
    rec.fidelity_ideal = m.fidelity_ideal;
    rec.fidelity_crosstalk = m.fidelity_crosstalk;
    rec.fidelity_mitigated = m.fidelity_mitigated;
    rec.leak_q0_200 = m.leakage.at("200");
    rec.leak_q1_002 = m.leakage.at("002");
    rec.optimized = m.optimized;
    rec.evaluations = m.evaluations;
  });
  out.p0 = p0;
  out.p1 = p1;
  return out;
}

/// Ideal / crosstalk / mitigated fidelity per (p, Δ); records sorted by p
/// then Δ. Each p applies to both qubits.
inline std::vector<SweepRecord> run_mitigation_sweep(const std::vector<double>& grid_ghz,
                                                     const std::vector<double>& p_values, const SpecPair& nominal,
                                                     const SweepSettings& s, CalibrationCache& cache) {
  detail::check_grid(grid_ghz);
  if (p_values.empty()) throw ConfigError("mitigation sweep: no crosstalk values");
  const std::size_t n = grid_ghz.size() * p_values.size();
  std::vector<SweepRecord> out(n);
  detail::parallel_for(n, s.workers, [&](std::size_t k) {
    const double p = p_values[k / grid_ghz.size()];
    out[k] = mitigate_point(grid_ghz[k % grid_ghz.size()], p, p, nominal, s, cache);
  });
  std::stable_sort(out.begin(), out.end(), [](const SweepRecord& a, const SweepRecord& b) {
    return a.p0 != b.p0 ? a.p0 < b.p0 : a.delta_ghz < b.delta_ghz;
  });
  return out;
}

}  // namespace xtalk
