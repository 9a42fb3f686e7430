#pragma once

// Drive-line pulses, DRAG envelopes and the lab-frame drive + crosstalk
// Hamiltonian. Virtual Z gates are phase offsets accumulated per drive line,
// so crosstalk copies of a pulse carry the source line's frame.

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "xtalk/device_model.hpp"
#include "xtalk/errors.hpp"
#include "xtalk/quantum_ops.hpp"

namespace xtalk {

struct PulseParams {
  double amplitude = 0.0;  // A, rad/ns
  double duration = 12.0;  // Tg, ns
  double drag = 0.0;       // α, dimensionless
  double frequency = 0.0;  // carrier ω_d = ω̃ + δω̃, rad/ns
  double offset = 0.0;     // δω̃, rad/ns
  double phase = 0.0;      // line phase, rad
  double start = 0.0;      // ns

  double end() const { return start + duration; }
  /// Frequency of the frame the line tracks (the carrier minus its offset).
  double frame_frequency() const { return frequency - offset; }

  void validate() const {
    if (!(duration > 0)) throw ContractViolation("pulse duration must be positive");
    if (!(amplitude >= 0)) throw ContractViolation("pulse amplitude must be non-negative");
    if (!std::isfinite(frequency) || !std::isfinite(offset) || !std::isfinite(phase) ||
        !std::isfinite(drag) || !std::isfinite(start)) {
      throw ContractViolation("pulse parameters must be finite");
    }
  }
};

struct Envelope {
  double x = 0.0;
  double y = 0.0;
};

/// Ω_X = A(1 − cos 2πτ/Tg), Ω_Y = −(α/η) dΩ_X/dt with τ = t − start.
/// Zero outside [start, start + Tg].
inline Envelope drag_envelope(const PulseParams& pulse, double eta, double t) {
  const double tau = t - pulse.start;
  if (tau < 0.0 || tau > pulse.duration) return {};
  const double w = kTwoPi / pulse.duration;
  const double x = pulse.amplitude * (1.0 - std::cos(w * tau));
  const double y = -(pulse.drag / eta) * pulse.amplitude * w * std::sin(w * tau);
  return {x, y};
}

/// Real coefficient multiplying (a + a†) for one pulse at time t, with an
/// extra phase (the crosstalk phase for copies on the neighbouring qubit).
inline double pulse_signal(const PulseParams& pulse, double eta, double t, double extra_phase = 0.0) {
  const Envelope e = drag_envelope(pulse, eta, t);
  if (e.x == 0.0 && e.y == 0.0) return 0.0;
  // The carrier phase is referenced to the tracked frame at the pulse start.
  const double arg = pulse.frequency * t - pulse.offset * pulse.start + pulse.phase + extra_phase;
  return e.x * std::cos(arg) + e.y * std::sin(arg);
}

/// Per-line pulse lists plus the virtual-Z phase accumulated on each line.
/// Value type; every modifier returns a new schedule.
class DriveSchedule {
 public:
  DriveSchedule() = default;

  const std::vector<PulseParams>& pulses(int line) const { return lines_.at(line); }
  double accumulated_phase(int line) const { return phase_.at(line); }

  double duration() const {
    double d = 0.0;
    for (const auto& line : lines_) {
      for (const auto& p : line) d = std::max(d, p.end());
    }
    return d;
  }

  bool empty() const { return lines_[0].empty() && lines_[1].empty(); }

  /// Pulse on `line` at time t (nullptr if the line is idle).
  const PulseParams* active(int line, double t) const {
    for (const auto& p : lines_[line]) {
      if (t >= p.start && t <= p.end()) return &p;
    }
    return nullptr;
  }

  friend DriveSchedule apply_virtual_z(const DriveSchedule& s, int line, double angle);
  friend DriveSchedule append_pulse(const DriveSchedule& s, int line, PulseParams pulse);

 private:
  std::array<std::vector<PulseParams>, 2> lines_;
  std::array<double, 2> phase_{0.0, 0.0};
};

inline void check_line(int line) {
  if (line != 0 && line != 1) throw ContractViolation("drive line must be 0 or 1");
}

/// Zero-duration Z rotation: every later pulse on the line is phase shifted.
inline DriveSchedule apply_virtual_z(const DriveSchedule& s, int line, double angle) {
  check_line(line);
  DriveSchedule out = s;
  out.phase_[line] += angle;
  return out;
}

/// Appends a pulse whose line phase is offset by the accumulated virtual-Z phase.
inline DriveSchedule append_pulse(const DriveSchedule& s, int line, PulseParams pulse) {
  check_line(line);
  pulse.validate();
  for (const auto& p : s.lines_[line]) {
    if (pulse.start < p.end() && p.start < pulse.end()) {
      throw ContractViolation("pulses on line " + std::to_string(line) + " overlap in time");
    }
  }
  DriveSchedule out = s;
  pulse.phase += s.phase_[line];
  out.lines_[line].push_back(pulse);
  return out;
}

/// Coefficients F_Q0(t), F_Q1(t) of (a_l + a_l†): own drive plus the
/// crosstalk copy of the neighbouring line.
inline std::array<double, 2> mode_drive_coefficients(const DriveSchedule& s, const DeviceParams& params,
                                                     double t) {
  std::array<double, 2> own{0.0, 0.0}, leaked{0.0, 0.0};
  for (int l = 0; l < 2; ++l) {
    const PulseParams* p = s.active(l, t);
    if (p == nullptr) continue;
    own[l] = pulse_signal(*p, params.eta(l), t);
    if (params.crosstalk(1 - l) != 0.0) {
      leaked[1 - l] = pulse_signal(*p, params.eta(l), t, params.crosstalk_phase);
    }
  }
  return {own[0] + params.p0 * leaked[0], own[1] + params.p1 * leaked[1]};
}

inline ComplexMatrix drive_hamiltonian(const DriveSchedule& s, const DeviceParams& params, double t,
                                       const ModeLayout& layout) {
  const auto f = mode_drive_coefficients(s, params, t);
  const ComplexMatrix x0 = embed(annihilation(layout.levels(Mode::Q0)) + creation(layout.levels(Mode::Q0)),
                                 Mode::Q0, layout);
  const ComplexMatrix x1 = embed(annihilation(layout.levels(Mode::Q1)) + creation(layout.levels(Mode::Q1)),
                                 Mode::Q1, layout);
  return f[0] * x0 + f[1] * x1;
}

}  // namespace xtalk
