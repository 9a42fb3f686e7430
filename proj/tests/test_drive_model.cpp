#include <gtest/gtest.h>

#include <random>

#include "xtalk/drive_model.hpp"

using namespace xtalk;

namespace {

PulseParams sample_pulse() {
  PulseParams p;
  p.amplitude = angular(0.02);
  p.duration = 12.0;
  p.drag = 0.5;
  p.frequency = angular(5.34);
  p.offset = angular(0.001);
  return p;
}

DeviceParams with_crosstalk(double p0, double p1) {
  DeviceParams d;
  d.p0 = p0;
  d.p1 = p1;
  return d;
}

}  // namespace

TEST(Envelope, StartsAtZero) {
  const Envelope e = drag_envelope(sample_pulse(), angular(-0.3), 0.0);
  EXPECT_EQ(e.x, 0.0);
  EXPECT_EQ(e.y, 0.0);
}

TEST(Envelope, PeakAtMidpoint) {
  const PulseParams p = sample_pulse();
  const Envelope e = drag_envelope(p, angular(-0.3), 6.0);
  EXPECT_NEAR(e.x, 2 * p.amplitude, 1e-15);
  EXPECT_NEAR(e.y, 0.0, 1e-15);
}

TEST(Envelope, NoDragNoQuadrature) {
  PulseParams p = sample_pulse();
  p.drag = 0.0;
  for (double t = -1.0; t <= 13.0; t += 0.01) EXPECT_EQ(drag_envelope(p, angular(-0.3), t).y, 0.0);
}

TEST(Envelope, ZeroOutsideWindow) {
  PulseParams p = sample_pulse();
  p.start = 5.0;
  EXPECT_EQ(drag_envelope(p, angular(-0.3), 4.999).x, 0.0);
  EXPECT_EQ(drag_envelope(p, angular(-0.3), 17.001).x, 0.0);
}

TEST(Envelope, QuadratureIsScaledDerivative) {
  const PulseParams p = sample_pulse();
  const double eta = angular(-0.3), h = 1e-5;
  for (double t : {1.0, 3.3, 7.7, 11.0}) {
    const double dx = (drag_envelope(p, eta, t + h).x - drag_envelope(p, eta, t - h).x) / (2 * h);
    EXPECT_NEAR(drag_envelope(p, eta, t).y, -(p.drag / eta) * dx, 1e-8);
  }
}

TEST(Envelope, AreaIsAmplitudeTimesDuration) {
  const PulseParams p = sample_pulse();
  // Simpson's rule, integrand is smooth and periodic.
  const int n = 2000;
  const double h = p.duration / n;
  double s = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    s += w * drag_envelope(p, angular(-0.3), i * h).x;
  }
  s *= h / 3;
  EXPECT_NEAR(s / (p.amplitude * p.duration), 1.0, 1e-9);
}

TEST(Pulse, ValidationRejectsBadInput) {
  PulseParams p = sample_pulse();
  p.duration = 0.0;
  EXPECT_THROW(p.validate(), ContractViolation);
  p = sample_pulse();
  p.amplitude = -1.0;
  EXPECT_THROW(p.validate(), ContractViolation);
  p = sample_pulse();
  p.phase = std::nan("");
  EXPECT_THROW(p.validate(), ContractViolation);
}

TEST(Schedule, OverlapThrows) {
  DriveSchedule s = append_pulse(DriveSchedule{}, 0, sample_pulse());
  PulseParams second = sample_pulse();
  second.start = 11.0;
  EXPECT_THROW(append_pulse(s, 0, second), ContractViolation);
  second.start = 12.0;
  EXPECT_NO_THROW(append_pulse(s, 0, second));
  // Other line is independent.
  second.start = 0.0;
  EXPECT_NO_THROW(append_pulse(s, 1, second));
  EXPECT_THROW(append_pulse(s, 2, second), ContractViolation);
}

TEST(Schedule, DurationAndEmpty) {
  DriveSchedule s;
  EXPECT_TRUE(s.empty());
  EXPECT_EQ(s.duration(), 0.0);
  PulseParams p = sample_pulse();
  p.start = 12.0;
  s = append_pulse(s, 1, p);
  EXPECT_FALSE(s.empty());
  EXPECT_DOUBLE_EQ(s.duration(), 24.0);
}

TEST(Crosstalk, VanishesWithoutCoefficients) {
  const DriveSchedule s = append_pulse(DriveSchedule{}, 0, sample_pulse());
  const DeviceParams d = with_crosstalk(0.0, 0.0);
  for (double t = 0.0; t <= 12.0; t += 0.37) EXPECT_EQ(mode_drive_coefficients(s, d, t)[1], 0.0);
}

TEST(Crosstalk, ScalesLinearlyInP) {
  const PulseParams p = sample_pulse();
  const DriveSchedule s = append_pulse(DriveSchedule{}, 0, p);
  const DeviceParams d = with_crosstalk(0.0, 0.1);
  const double t = p.start + p.duration / 2;
  const auto f = mode_drive_coefficients(s, d, t);
  EXPECT_NE(f[0], 0.0);
  EXPECT_NEAR(f[1], 0.1 * f[0], 1e-15);
}

TEST(Crosstalk, PiPhaseFlipsOwnAndLeakedTerms) {
  const DeviceParams d = with_crosstalk(0.0, 0.2);
  const ModeLayout layout(3);
  const DriveSchedule a = append_pulse(DriveSchedule{}, 0, sample_pulse());
  const DriveSchedule b = append_pulse(apply_virtual_z(DriveSchedule{}, 0, kPi), 0, sample_pulse());
  const int g = layout.index({0, 0, 0});
  const int e0 = layout.index({1, 0, 0}), e1 = layout.index({0, 0, 1});
  for (double t : {0.9, 3.1, 6.0, 8.4}) {
    const ComplexMatrix ha = drive_hamiltonian(a, d, t, layout);
    const ComplexMatrix hb = drive_hamiltonian(b, d, t, layout);
    EXPECT_NEAR(std::abs(ha(e0, g) + hb(e0, g)), 0.0, 1e-12);
    EXPECT_NEAR(std::abs(ha(e1, g) + hb(e1, g)), 0.0, 1e-12);
    EXPECT_GT(std::abs(ha(e1, g)), 0.0);
  }
}

TEST(VirtualZ, ZeroAngleLeavesScheduleUnchanged) {
  const DriveSchedule base = append_pulse(DriveSchedule{}, 0, sample_pulse());
  const DriveSchedule s = apply_virtual_z(base, 0, 0.0);
  EXPECT_EQ(s.accumulated_phase(0), 0.0);
  EXPECT_EQ(s.pulses(0)[0].phase, base.pulses(0)[0].phase);
}

TEST(VirtualZ, FullTurnIsIdentity) {
  const DeviceParams d = with_crosstalk(0.1, 0.1);
  const ModeLayout layout(3);
  const DriveSchedule a = append_pulse(DriveSchedule{}, 0, sample_pulse());
  const DriveSchedule b = append_pulse(apply_virtual_z(DriveSchedule{}, 0, kTwoPi), 0, sample_pulse());
  for (double t = 0.0; t <= 12.0; t += 0.5) {
    EXPECT_LT(max_abs(drive_hamiltonian(a, d, t, layout) - drive_hamiltonian(b, d, t, layout)), 1e-12);
  }
}

TEST(VirtualZ, Additive) {
  const DeviceParams d = with_crosstalk(0.1, 0.1);
  const ModeLayout layout(3);
  const DriveSchedule two = apply_virtual_z(apply_virtual_z(DriveSchedule{}, 1, 0.4), 1, 1.3);
  const DriveSchedule one = apply_virtual_z(DriveSchedule{}, 1, 1.7);
  EXPECT_NEAR(two.accumulated_phase(1), one.accumulated_phase(1), 1e-15);
  const DriveSchedule a = append_pulse(two, 1, sample_pulse());
  const DriveSchedule b = append_pulse(one, 1, sample_pulse());
  for (double t = 0.0; t <= 12.0; t += 0.5) {
    EXPECT_LT(max_abs(drive_hamiltonian(a, d, t, layout) - drive_hamiltonian(b, d, t, layout)), 1e-12);
  }
}

TEST(VirtualZ, OnlyLaterPulsesAreShifted) {
  DriveSchedule s = append_pulse(DriveSchedule{}, 0, sample_pulse());
  s = apply_virtual_z(s, 0, 0.8);
  PulseParams second = sample_pulse();
  second.start = 12.0;
  s = append_pulse(s, 0, second);
  EXPECT_EQ(s.pulses(0)[0].phase, 0.0);
  EXPECT_DOUBLE_EQ(s.pulses(0)[1].phase, 0.8);
}

TEST(Properties, DriveHamiltonianHermitian) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const ModeLayout layout;
  for (int k = 0; k < 30; ++k) {
    DeviceParams d = with_crosstalk(0.9 * u(rng), 0.9 * u(rng));
    d.crosstalk_phase = kTwoPi * u(rng);
    PulseParams p = sample_pulse();
    p.drag = u(rng);
    p.phase = kTwoPi * u(rng);
    DriveSchedule s = append_pulse(DriveSchedule{}, 0, p);
    p.frequency = angular(5.52);
    s = append_pulse(s, 1, p);
    EXPECT_TRUE(is_hermitian(drive_hamiltonian(s, d, 12.0 * u(rng), layout), 1e-15));
  }
}

TEST(Properties, VirtualZShiftsOwnAndCrosstalkPhaseAlike) {
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 50; ++k) {
    DeviceParams d = with_crosstalk(0.3 * u(rng), 0.3 * u(rng));
    d.crosstalk_phase = kTwoPi * u(rng);
    const int line = k % 2;
    const double alpha = kTwoPi * u(rng);
    PulseParams p = sample_pulse();
    p.drag = u(rng);
    const DriveSchedule s = append_pulse(apply_virtual_z(DriveSchedule{}, line, alpha), line, p);
    const double t = 12.0 * u(rng);
    const auto f = mode_drive_coefficients(s, d, t);
    const double eta = d.eta(line);
    EXPECT_NEAR(f[line], pulse_signal(p, eta, t, alpha), 1e-13);
    EXPECT_NEAR(f[1 - line], d.crosstalk(1 - line) * pulse_signal(p, eta, t, alpha + d.crosstalk_phase), 1e-13);
  }
}

TEST(Properties, SingleLineCommutesWithOtherQubitNumber) {
  DeviceParams d;
  d.g0c = d.g1c = d.g01 = 0.0;
  const ModeLayout layout;
  const ComplexMatrix n1 = embed(number_operator(4), Mode::Q1, layout);
  const DriveSchedule s = append_pulse(DriveSchedule{}, 0, sample_pulse());
  for (double t : {1.0, 6.0, 10.5}) {
    const ComplexMatrix h = drive_hamiltonian(s, d, t, layout) + build_static_hamiltonian(d, layout);
    EXPECT_LT(max_abs(h * n1 - n1 * h), 1e-12);
  }
}
