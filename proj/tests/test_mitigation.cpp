#include <gtest/gtest.h>

#include <random>

#include "test_support.hpp"

using namespace xtalk;
using xtalk::testing::benchmark_specs;
using xtalk::testing::point_at;

namespace {

ComplexMatrix pauli(char which) {
  ComplexMatrix m(2, 2);
  if (which == 'x') m << 0, 1, 1, 0;
  if (which == 'y') m << 0, Complex(0, -1), Complex(0, 1), 0;
  if (which == 'z') m << 1, 0, 0, -1;
  return m;
}

// exp(-i a/2 σ) from the Hermitian exponential, independent of rz / sqrt_x_target.
ComplexMatrix rot(char axis, double a) { return unitary_exp(pauli(axis), a / 2); }

ComplexMatrix five_factor(const GateSpec& s) {
  return rot('z', s.phi - kPi / 2) * rot('x', kPi / 2) * rot('z', kPi - s.theta) * rot('x', kPi / 2) *
         rot('z', s.lambda - kPi / 2);
}

// 1 − |Tr(A†B)|/d, zero iff equal up to global phase.
double phase_distance(const ComplexMatrix& a, const ComplexMatrix& b) {
  return 1.0 - std::abs((a.adjoint() * b).trace()) / static_cast<double>(a.rows());
}

GateSpec random_spec(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-2 * kTwoPi, 2 * kTwoPi);
  return {u(rng), u(rng), u(rng)};
}

SweepSettings quick_settings() {
  SweepSettings s;
  s.optimizer = OptimizerConfig{150, 0, 1e-10, 1e-5, 11};
  return s;
}

}  // namespace

TEST(U3, IdentityForOpposedPhases) {
  for (double a : {0.0, 0.3, -2.1, 5.0}) EXPECT_LT(phase_distance(u3_matrix({0.0, a, -a}), ComplexMatrix::Identity(2, 2)), 1e-14);
}

// With Z_a = exp(-i a Z/2) and the product read right to left, these two
// specs land on Y-axis rotations, not on X.
TEST(U3, HalfPiSpecIsMinusHalfPiAboutY) {
  const ComplexMatrix expected = unitary_exp(pauli('y'), -kPi / 4);
  EXPECT_LT(phase_distance(u3_matrix({kPi / 2, -kPi / 2, kPi / 2}), expected), 1e-14);
}

TEST(U3, PiSpecIsPauliY) { EXPECT_LT(phase_distance(u3_matrix({kPi, 0.0, kPi}), pauli('y')), 1e-14); }

TEST(U3, MatchesFiveFactorProduct) {
  std::mt19937_64 rng(31);
  for (int k = 0; k < 1000; ++k) {
    const GateSpec s = random_spec(rng);
    EXPECT_LT(max_abs(u3_matrix(s) - five_factor(s)), 1e-12);
  }
}

TEST(U3, VirtualZAbsorbedIntoLambda) {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(-kPi, kPi);
  for (int k = 0; k < 200; ++k) {
    const GateSpec s = random_spec(rng);
    const double a = u(rng);
    EXPECT_LT(phase_distance(u3_matrix(s) * rz(a), u3_matrix({s.theta, s.phi, s.lambda + a})), 1e-12);
  }
}

TEST(Circuit, SqrtXPairHasAlignedLayers) {
  const PointSetup& setup = point_at(0.18);
  const SpecPair specs{GateSpec{kPi / 2, -kPi / 2, kPi / 2}, GateSpec{kPi / 2, -kPi / 2, kPi / 2}};
  const CircuitPlan plan = build_simultaneous_circuit(specs, setup.gates);
  for (int l = 0; l < 2; ++l) {
    ASSERT_EQ(plan.schedule.pulses(l).size(), 2u);
    EXPECT_EQ(plan.schedule.pulses(l)[0].start, 0.0);
    EXPECT_EQ(plan.schedule.pulses(l)[1].start, 12.0);
    EXPECT_NEAR(detail::wrap_angle(plan.schedule.pulses(l)[0].phase), 0.0, 1e-15);
    EXPECT_NEAR(plan.schedule.pulses(l)[1].phase, kPi / 2, 1e-15);
    EXPECT_NEAR(plan.trailing[l], -kPi, 1e-15);
  }
  EXPECT_DOUBLE_EQ(plan.schedule.duration(), 24.0);
}

TEST(Circuit, GateTimeMismatchIsConfigError) {
  std::array<CalibratedGate, 2> gates = point_at(0.18).gates;
  gates[1].pulse.duration = 24.0;
  EXPECT_THROW(build_simultaneous_circuit(benchmark_specs(), gates), ConfigError);
}

TEST(Circuit, EmptyScheduleIsIdentity) {
  const PointSetup& setup = point_at(0.18);
  const CircuitSimulator sim(setup.params, *setup.spectrum, ModeLayout());
  CircuitPlan plan;
  EXPECT_LT(max_abs(simulate_circuit(plan, sim).first - ComplexMatrix::Identity(4, 4)), 1e-12);
  plan.trailing = {kTwoPi, kTwoPi};
  EXPECT_LT(phase_distance(simulate_circuit(plan, sim).first, ComplexMatrix::Identity(4, 4)), 1e-12);
}

TEST(Circuit, IdealEndToEnd) {
  const PointSetup& setup = point_at(0.18);
  const CircuitSimulator sim(setup.params, *setup.spectrum, ModeLayout());
  for (const SpecPair& specs :
       {benchmark_specs(), SpecPair{GateSpec{kPi / 2, -kPi / 2, kPi / 2}, GateSpec{kPi, 0.0, kPi}}}) {
    const ComplexMatrix g = simulate_circuit(build_simultaneous_circuit(specs, setup.gates), sim).first;
    const double f = gate_fidelity(two_qubit_target(specs), g);
    EXPECT_GT(f, 0.9998);
    EXPECT_LE(f, 1.0 + 1e-8);
  }
}

TEST(Circuit, CrosstalkDegradesFidelity) {
  const PointSetup& setup = point_at(0.18);
  DeviceParams xt = setup.params;
  xt.p0 = xt.p1 = 0.1;
  const CircuitSimulator ideal(setup.params, *setup.spectrum, ModeLayout());
  const CircuitSimulator crosstalk(xt, *setup.spectrum, ModeLayout());
  const CircuitPlan plan = build_simultaneous_circuit(benchmark_specs(), setup.gates);
  const ComplexMatrix target = two_qubit_target(benchmark_specs());
  EXPECT_LT(gate_fidelity(target, simulate_circuit(plan, crosstalk).first),
            gate_fidelity(target, simulate_circuit(plan, ideal).first));
}

TEST(Trailing, MatchesBruteForce) {
  std::mt19937_64 rng(43);
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> u(-kPi, kPi);
  for (int k = 0; k < 10; ++k) {
    const SpecPair specs{random_spec(rng), random_spec(rng)};
    const ComplexMatrix target = two_qubit_target(specs);
    // Target with unknown Z phases, a little noise, and a contraction.
    ComplexMatrix noise(4, 4);
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) noise(i, j) = Complex(n(rng), n(rng));
    }
    ComplexMatrix m = kron(rz(u(rng)), rz(u(rng))) * target + 0.05 * noise;
    m /= operator_norm(m) * 1.01;
    const auto z = detail::best_trailing(m, target);
    const double found = gate_fidelity(target, kron(rz(z[0]), rz(z[1])) * m);
    double brute = 0.0;
    const int grid = 360;
    for (int a = 0; a < grid; ++a) {
      for (int b = 0; b < grid; ++b) {
        brute = std::max(brute, gate_fidelity(target, kron(rz(kTwoPi * a / grid), rz(kTwoPi * b / grid)) * m));
      }
    }
    EXPECT_GE(found, brute - 1e-12);
    EXPECT_LT(found - brute, 1e-3);
  }
}

TEST(Trailing, PhiRoundTrip) {
  const PointSetup& setup = point_at(0.18);
  const CircuitPlan plan = build_simultaneous_circuit(benchmark_specs(), setup.gates);
  const auto phi = detail::trailing_to_phi({plan.trailing[0] + plan.schedule.accumulated_phase(0),
                                            plan.trailing[1] + plan.schedule.accumulated_phase(1)},
                                           plan);
  EXPECT_NEAR(detail::wrap_angle(phi[0] - benchmark_specs()[0].phi), 0.0, 1e-12);
  EXPECT_NEAR(detail::wrap_angle(phi[1] - benchmark_specs()[1].phi), 0.0, 1e-12);
}

TEST(Optimize, NothingToCorrectWithoutCrosstalk) {
  const PointSetup& setup = point_at(0.18);
  const CircuitSimulator ideal(setup.params, *setup.spectrum, ModeLayout());
  const MitigationContext ctx{setup.gates, &ideal, &ideal};
  const MitigationResult r = optimize_virtual_z(benchmark_specs(), ctx, OptimizerConfig{300, 0, 1e-10, 1e-5, 11});
  EXPECT_NEAR(r.fidelity_mitigated, r.fidelity_ideal, 1e-6);
  EXPECT_GE(r.fidelity_mitigated, r.fidelity_crosstalk - 1e-9);
  // The landscape is flat to ~1e-6 near nominal, so only a loose drift bound.
  for (int l = 0; l < 2; ++l) {
    EXPECT_LT(std::abs(detail::wrap_angle(r.optimized[l].theta - r.nominal[l].theta)), 1e-2);
    EXPECT_LT(std::abs(detail::wrap_angle(r.optimized[l].lambda - r.nominal[l].lambda)), 1e-2);
    EXPECT_LT(std::abs(detail::wrap_angle(r.optimized[l].phi - r.nominal[l].phi)), 1e-2);
  }
}

TEST(Optimize, MitigationRecoversFidelity) {
  const SweepRecord rec = mitigate_point(0.10, 0.1, 0.1, benchmark_specs(), quick_settings(), xtalk::testing::shared_cache());
  ASSERT_FALSE(rec.failed()) << rec.error;
  EXPECT_LT(rec.fidelity_crosstalk, rec.fidelity_ideal);
  EXPECT_GE(rec.fidelity_mitigated, rec.fidelity_crosstalk - 1e-9);
  EXPECT_LT(1 - rec.fidelity_mitigated, 0.5 * (1 - rec.fidelity_crosstalk));
  ASSERT_TRUE(rec.optimized.has_value());
  for (const GateSpec& g : *rec.optimized) {
    for (double a : {g.theta, g.phi, g.lambda}) EXPECT_LE(std::abs(a), kPi);
  }
  EXPECT_GT(rec.evaluations, 0);
  EXPECT_GT(rec.leak_q1_002, 0.0);
}

TEST(Optimize, UnoptimizedPointLeavesMitigatedEmpty) {
  const SweepRecord rec =
      mitigate_point(0.18, 0.01, 0.01, benchmark_specs(), quick_settings(), xtalk::testing::shared_cache(), false);
  ASSERT_FALSE(rec.failed()) << rec.error;
  EXPECT_TRUE(std::isnan(rec.fidelity_mitigated));
  EXPECT_FALSE(rec.optimized.has_value());
  EXPECT_LT(rec.fidelity_ideal - rec.fidelity_crosstalk, 1e-4);
}

TEST(Sweep, LeakageWithoutCrosstalkIsSmall) {
  SweepSettings s;
  const auto recs = run_leakage_sweep({0.10, 0.18}, s, xtalk::testing::shared_cache());
  ASSERT_EQ(recs.size(), 2u);
  for (const SweepRecord& r : recs) {
    ASSERT_FALSE(r.failed()) << r.error;
    // Residual leakage of the calibrated pulses themselves, under the 1e-4
    // calibration bound.
    EXPECT_LT(r.leak_q0_200, 1e-4);
    EXPECT_LT(r.leak_q1_002, 1e-4);
  }
}

TEST(Sweep, DeterministicAcrossWorkerCounts) {
  SweepSettings s;
  s.base.p0 = s.base.p1 = 0.1;
  const auto a = run_leakage_sweep({0.16, 0.18}, s, xtalk::testing::shared_cache());
  s.workers = 2;
  CalibrationCache fresh;
  const auto b = run_leakage_sweep({0.16, 0.18}, s, fresh);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].delta_ghz, b[i].delta_ghz);
    EXPECT_EQ(a[i].omegac_ghz, b[i].omegac_ghz);
    EXPECT_EQ(a[i].leak_q0_200, b[i].leak_q0_200);
    EXPECT_EQ(a[i].leak_q1_002, b[i].leak_q1_002);
    EXPECT_EQ(a[i].flags, b[i].flags);
  }
}

TEST(Sweep, GridValidation) {
  SweepSettings s;
  CalibrationCache& cache = xtalk::testing::shared_cache();
  EXPECT_THROW(run_leakage_sweep({}, s, cache), ConfigError);
  EXPECT_THROW(run_leakage_sweep({0.2, 0.1}, s, cache), ConfigError);
  EXPECT_THROW(run_mitigation_sweep({0.1, 0.1}, {0.1}, benchmark_specs(), s, cache), ConfigError);
  EXPECT_THROW(run_mitigation_sweep({0.1}, {}, benchmark_specs(), s, cache), ConfigError);
}

TEST(Sweep, FailingPointIsRecordedNotThrown) {
  SweepSettings s;
  s.coupler_low = angular(-0.4);  // window crosses both qubits
  s.coupler_high = angular(0.1);
  const auto recs = run_leakage_sweep({0.18}, s, xtalk::testing::shared_cache());
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_TRUE(recs[0].failed());
  EXPECT_TRUE(recs[0].flagged("hybridization"));
}
