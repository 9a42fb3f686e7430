#pragma once

// Shared fixtures: device points with calibrated pulses, memoised per binary.

#include <map>
#include <mutex>

#include "xtalk/mitigation.hpp"

namespace xtalk::testing {

inline CalibrationCache& shared_cache() {
  static CalibrationCache cache;
  return cache;
}

/// Coupler at the ZZ-suppression point and both qubits calibrated.
inline const PointSetup& point_at(double delta_ghz, const SweepSettings& s = {}) {
  static std::mutex mutex;
  static std::map<std::pair<double, double>, PointSetup> points;
  std::lock_guard lock(mutex);
  const auto key = std::make_pair(delta_ghz, s.base.eta1);
  auto it = points.find(key);
  if (it == points.end()) it = points.emplace(key, prepare_point(delta_ghz, s, shared_cache())).first;
  return it->second;
}

/// Nominal gate pair of the mitigation benchmark.
inline SpecPair benchmark_specs() {
  return {GateSpec{kTwoPi * 0.704, kTwoPi * 0.277, kTwoPi * 0.020},
          GateSpec{kTwoPi * 0.987, kTwoPi * 0.790, kTwoPi * 0.560}};
}

inline DriveSchedule two_layers(const PointSetup& setup, bool line0, bool line1) {
  DriveSchedule s;
  for (int l = 0; l < 2; ++l) {
    if ((l == 0 && !line0) || (l == 1 && !line1)) continue;
    PulseParams p = setup.gates[l].pulse;
    s = append_pulse(s, l, p);
    p.start = p.duration;
    s = append_pulse(s, l, p);
  }
  return s;
}

}  // namespace xtalk::testing
