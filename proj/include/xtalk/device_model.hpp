#pragma once

// Static three-mode Hamiltonian, dressed-state labelling, effective couplings
// and the closed-form crosstalk error scales.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "xtalk/errors.hpp"
#include "xtalk/quantum_ops.hpp"

namespace xtalk {

/// Static device description. Frequencies, anharmonicities and couplings are
/// angular (rad/ns); crosstalk coefficients are dimensionless.
struct DeviceParams {
  double omega0 = angular(5.34);
  double omega1 = angular(5.52);
  double omegac = angular(6.4);
  double eta0 = angular(-0.3);
  double eta1 = angular(-0.3);
  double etac = angular(-0.1);
  double g0c = angular(0.07);
  double g1c = angular(0.07);
  double g01 = angular(0.005);
  double p0 = 0.0;  // fraction of line 1 felt by Q0
  double p1 = 0.0;  // fraction of line 0 felt by Q1
  double crosstalk_phase = 0.0;

  double omega(int qubit) const { return qubit == 0 ? omega0 : omega1; }
  double eta(int qubit) const { return qubit == 0 ? eta0 : eta1; }
  double coupling(int qubit) const { return qubit == 0 ? g0c : g1c; }
  double crosstalk(int qubit) const { return qubit == 0 ? p0 : p1; }

  /// Throws ContractViolation naming the first offending field.
  void validate() const {
    const std::array<std::pair<const char*, double>, 12> all{{{"omega0", omega0},
                                                             {"omega1", omega1},
                                                             {"omegac", omegac},
                                                             {"eta0", eta0},
                                                             {"eta1", eta1},
                                                             {"etac", etac},
                                                             {"g0c", g0c},
                                                             {"g1c", g1c},
                                                             {"g01", g01},
                                                             {"p0", p0},
                                                             {"p1", p1},
                                                             {"crosstalk_phase", crosstalk_phase}}};
    for (const auto& [name, v] : all) {
      if (!std::isfinite(v)) throw ContractViolation(std::string(name) + " must be finite");
    }
    if (!(eta0 < 0)) throw ContractViolation("eta0 must be negative");
    if (!(eta1 < 0)) throw ContractViolation("eta1 must be negative");
    if (!(etac < 0)) throw ContractViolation("etac must be negative");
    if (g0c < 0) throw ContractViolation("g0c must be non-negative");
    if (g1c < 0) throw ContractViolation("g1c must be non-negative");
    if (g01 < 0) throw ContractViolation("g01 must be non-negative");
    if (p0 < 0 || p0 >= 1) throw ContractViolation("p0 must lie in [0, 1)");
    if (p1 < 0 || p1 >= 1) throw ContractViolation("p1 must lie in [0, 1)");
  }

  /// |ω_l − ωc| > 5 g_lc for both qubits. Advisory only.
  bool dispersive() const {
    return std::abs(omega0 - omegac) > 5 * g0c && std::abs(omega1 - omegac) > 5 * g1c;
  }

  DeviceParams without_crosstalk() const {
    DeviceParams out = *this;
    out.p0 = out.p1 = 0.0;
    return out;
  }
};

inline ComplexMatrix build_static_hamiltonian(const DeviceParams& p, const ModeLayout& layout) {
  p.validate();
  const ComplexMatrix a0 = embed(annihilation(layout.levels(Mode::Q0)), Mode::Q0, layout);
  const ComplexMatrix c = embed(annihilation(layout.levels(Mode::C)), Mode::C, layout);
  const ComplexMatrix a1 = embed(annihilation(layout.levels(Mode::Q1)), Mode::Q1, layout);

  auto oscillator = [](const ComplexMatrix& a, double omega, double eta) -> ComplexMatrix {
    const ComplexMatrix ad = a.adjoint();
    return omega * ad * a + 0.5 * eta * ad * ad * a * a;
  };
  auto exchange = [](const ComplexMatrix& x, const ComplexMatrix& y, double g) -> ComplexMatrix {
    return g * (x.adjoint() * y + y.adjoint() * x);
  };

  ComplexMatrix h = oscillator(a0, p.omega0, p.eta0) + oscillator(a1, p.omega1, p.eta1) +
                    oscillator(c, p.omegac, p.etac);
  h += exchange(a0, c, p.g0c) + exchange(a1, c, p.g1c) + exchange(a0, a1, p.g01);
  // Exact symmetrisation; the products above are Hermitian only up to rounding.
  return 0.5 * (h + h.adjoint());
}

/// Bare labels every downstream computation relies on.
inline const std::vector<Label>& default_labels() {
  static const std::vector<Label> labels{{0, 0, 0}, {0, 0, 1}, {1, 0, 0}, {1, 0, 1},
                                         {0, 0, 2}, {2, 0, 0}, {0, 1, 0}};
  return labels;
}

/// Computational labels in (|00>, |01>, |10>, |11>) order, coupler in ground.
inline const std::array<Label, 4>& computational_labels() {
  static const std::array<Label, 4> labels{{{0, 0, 0}, {0, 0, 1}, {1, 0, 0}, {1, 0, 1}}};
  return labels;
}

struct DressedLevel {
  double energy;
  int column;
  double overlap;  // |<bare|dressed>|^2
};

/// Eigen-decomposition of the static Hamiltonian with each eigenvector
/// labelled by the bare state it overlaps most.
class DressedSpectrum {
 public:
  DressedSpectrum(ModeLayout layout, RealVector energies, ComplexMatrix vectors,
                  std::vector<int> column_of_bare, std::vector<double> overlap_of_bare)
      : layout_(layout),
        energies_(std::move(energies)),
        vectors_(std::move(vectors)),
        column_of_bare_(std::move(column_of_bare)),
        overlap_of_bare_(std::move(overlap_of_bare)) {}

  const ModeLayout& layout() const { return layout_; }
  const RealVector& energies() const { return energies_; }
  const ComplexMatrix& vectors() const { return vectors_; }

  /// Throws HybridizationError when the assignment for `l` is not valid.
  DressedLevel level(const Label& l) const {
    const int b = layout_.index(l);
    const double ov = overlap_of_bare_[b];
    if (!(ov > 0.5)) throw HybridizationError(to_string(l), ov);
    const int col = column_of_bare_[b];
    return {energies_(col), col, ov};
  }

  double energy(const Label& l) const { return level(l).energy; }
  ComplexVector vector(const Label& l) const { return vectors_.col(level(l).column); }
  double overlap(const Label& l) const { return overlap_of_bare_[layout_.index(l)]; }
  int column(const Label& l) const { return level(l).column; }

  /// Excitation number of a dressed column (exact: the Hamiltonian conserves it).
  int excitations(int column) const {
    for (std::size_t b = 0; b < column_of_bare_.size(); ++b) {
      if (column_of_bare_[b] == column) return layout_.excitations(static_cast<int>(b));
    }
    return -1;
  }

  double omega_q0() const { return energy({1, 0, 0}) - energy({0, 0, 0}); }
  double omega_q1() const { return energy({0, 0, 1}) - energy({0, 0, 0}); }
  double omega_q0_12() const { return energy({2, 0, 0}) - energy({1, 0, 0}); }
  double omega_q1_12() const { return energy({0, 0, 2}) - energy({0, 0, 1}); }
  double omega_qubit(int q) const { return q == 0 ? omega_q0() : omega_q1(); }

  double min_overlap(const std::vector<Label>& labels) const {
    double m = 1.0;
    for (const auto& l : labels) m = std::min(m, overlap(l));
    return m;
  }

 private:
  ModeLayout layout_;
  RealVector energies_;
  ComplexMatrix vectors_;
  std::vector<int> column_of_bare_;
  std::vector<double> overlap_of_bare_;
};

/// Diagonalises excitation-number sectors separately (the static Hamiltonian
/// conserves total excitation number) and assigns labels greedily by overlap.
inline DressedSpectrum dressed_spectrum(const DeviceParams& params, const ModeLayout& layout,
                                        const std::vector<Label>& required = default_labels()) {
  const ComplexMatrix h = build_static_hamiltonian(params, layout);
  const int dim = layout.dim();

  std::map<int, std::vector<int>> sectors;
  for (int b = 0; b < dim; ++b) sectors[layout.excitations(b)].push_back(b);

  ComplexMatrix vectors = ComplexMatrix::Zero(dim, dim);
  RealVector energies(dim);
  std::vector<int> column_of_bare(dim, -1);
  std::vector<double> overlap_of_bare(dim, 0.0);

  int next_col = 0;
  for (const auto& [n, members] : sectors) {
    const int m = static_cast<int>(members.size());
    ComplexMatrix block(m, m);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < m; ++j) block(i, j) = h(members[i], members[j]);
    }
    const Eigensystem es = hermitian_eigensystem(block);

    struct Pair {
      double overlap;
      int bare;
      int eig;
    };
    std::vector<Pair> pairs;
    pairs.reserve(static_cast<std::size_t>(m) * m);
    for (int i = 0; i < m; ++i) {
      for (int k = 0; k < m; ++k) pairs.push_back({std::norm(es.vectors(i, k)), i, k});
    }
    std::stable_sort(pairs.begin(), pairs.end(),
                     [](const Pair& a, const Pair& b) { return a.overlap > b.overlap; });
    std::vector<bool> bare_used(m, false), eig_used(m, false);
    std::vector<int> eig_for_bare(m, -1);
    for (const Pair& pr : pairs) {
      if (bare_used[pr.bare] || eig_used[pr.eig]) continue;
      bare_used[pr.bare] = eig_used[pr.eig] = true;
      eig_for_bare[pr.bare] = pr.eig;
      overlap_of_bare[members[pr.bare]] = pr.overlap;
    }
    // Columns ordered like the bare states of the sector; phase fixed so the
    // overlap with the own bare state is real and positive.
    for (int i = 0; i < m; ++i) {
      const int k = eig_for_bare[i];
      ComplexVector v = ComplexVector::Zero(dim);
      for (int r = 0; r < m; ++r) v(members[r]) = es.vectors(r, k);
      const Complex own = v(members[i]);
      if (std::abs(own) > 0) v *= std::conj(own) / std::abs(own);
      vectors.col(next_col) = v;
      energies(next_col) = es.values(k);
      column_of_bare[members[i]] = next_col;
      ++next_col;
    }
  }

  DressedSpectrum spectrum(layout, std::move(energies), std::move(vectors),
                           std::move(column_of_bare), std::move(overlap_of_bare));
  for (const Label& l : required) spectrum.level(l);
  return spectrum;
}

/// ζ = (E101 − E100) − (E001 − E000).
inline double zz_coupling(const DeviceParams& params, const ModeLayout& layout) {
  static const std::vector<Label> needed{{0, 0, 0}, {0, 0, 1}, {1, 0, 0}, {1, 0, 1}};
  const DressedSpectrum s = dressed_spectrum(params, layout, needed);
  return (s.energy({1, 0, 1}) - s.energy({1, 0, 0})) - (s.energy({0, 0, 1}) - s.energy({0, 0, 0}));
}

/// J = g01 + g0c g1c / Δ12 with 1/Δ12 = (1/Δ1 + 1/Δ2)/2 and Δ_l = ω_l − ωc.
inline double xy_coupling(const DeviceParams& p) {
  const double d0 = p.omega0 - p.omegac;
  const double d1 = p.omega1 - p.omegac;
  if (d0 == 0.0 || d1 == 0.0) throw DivisionError("xy_coupling: a qubit is resonant with the coupler");
  return p.g01 + p.g0c * p.g1c * 0.5 * (1.0 / d0 + 1.0 / d1);
}

enum class SuppressionKind { ZeroCrossing, Minimum };

inline std::string to_string(SuppressionKind k) {
  return k == SuppressionKind::ZeroCrossing ? "zero-crossing" : "minimum";
}

struct ZzSuppressionPoint {
  double omegac;
  double zeta;
  SuppressionKind kind;
};

/// Coupler frequency that switches off the static ZZ interaction, or
/// minimises it when no zero exists inside [lo, hi].
///
/// A coarse grid locates sign changes; when several exist the one at the
/// highest coupler frequency (deepest in the dispersive regime) is refined by
/// bisection until |ζ|/2π < 10 Hz. Without a sign change |ζ| is minimised by
/// golden-section search around the best grid point.
inline ZzSuppressionPoint find_zz_suppression_point(const DeviceParams& params, double lo, double hi,
                                                    const ModeLayout& layout, int grid_points = 61) {
  if (grid_points < 50) throw ContractViolation("find_zz_suppression_point: need at least 50 grid points");
  if (!(hi > lo)) throw ContractViolation("find_zz_suppression_point: empty coupler range");

  auto zeta_at = [&](double wc) {
    DeviceParams q = params;
    q.omegac = wc;
    try {
      return zz_coupling(q, layout);
    } catch (const HybridizationError& e) {
      throw HybridizationError(e.label() + " at omega_c/2pi=" + std::to_string(linear(wc)) + " GHz",
                               e.overlap());
    }
  };

  std::vector<double> grid(grid_points), zeta(grid_points);
  for (int i = 0; i < grid_points; ++i) {
    grid[i] = lo + (hi - lo) * i / (grid_points - 1);
    zeta[i] = zeta_at(grid[i]);
  }

  const double zero_tol = angular(1e-11);
  if (std::all_of(zeta.begin(), zeta.end(), [&](double z) { return std::abs(z) < zero_tol; })) {
    const double mid = 0.5 * (lo + hi);
    return {mid, zeta_at(mid), SuppressionKind::ZeroCrossing};
  }

  for (int i = grid_points - 2; i >= 0; --i) {
    if (zeta[i] == 0.0) return {grid[i], 0.0, SuppressionKind::ZeroCrossing};
    if (std::signbit(zeta[i]) == std::signbit(zeta[i + 1])) continue;
    double a = grid[i], b = grid[i + 1], za = zeta[i];
    double mid = 0.5 * (a + b), zm = zeta_at(mid);
    for (int it = 0; it < 200 && std::abs(zm) >= angular(1e-8) && (b - a) > 1e-13; ++it) {
      if (std::signbit(zm) == std::signbit(za)) {
        a = mid;
        za = zm;
      } else {
        b = mid;
      }
      mid = 0.5 * (a + b);
      zm = zeta_at(mid);
    }
    return {mid, zm, SuppressionKind::ZeroCrossing};
  }

  const auto best = static_cast<int>(std::distance(
      zeta.begin(), std::min_element(zeta.begin(), zeta.end(),
                                     [](double x, double y) { return std::abs(x) < std::abs(y); })));
  double a = grid[std::max(best - 1, 0)];
  double b = grid[std::min(best + 1, grid_points - 1)];
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - invphi * (b - a), x2 = a + invphi * (b - a);
  double f1 = std::abs(zeta_at(x1)), f2 = std::abs(zeta_at(x2));
  while (b - a > angular(1e-7)) {
    if (f1 < f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - invphi * (b - a);
      f1 = std::abs(zeta_at(x1));
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + invphi * (b - a);
      f2 = std::abs(zeta_at(x2));
    }
  }
  double x = 0.5 * (a + b), z = zeta_at(x);
  if (std::abs(zeta[best]) < std::abs(z)) {
    x = grid[best];
    z = zeta[best];
  }
  return {x, z, SuppressionKind::Minimum};
}

/// Closed-form crosstalk error scales for drive amplitudes Ω_d0, Ω_d1 and
/// qubit-qubit detuning Δ (all angular).
struct ErrorScales {
  double stark0;    // |p0 Ω_d1|^2 / 2Δ
  double stark1;    // |p1 Ω_d0|^2 / 2Δ
  double bitflip0;  // p0² Ω_d1² / (p0² Ω_d1² + Δ²)
  double bitflip1;
  double swap;      // 4J² / (4J² + Δ²)
};

inline ErrorScales predict_error_scales(const DeviceParams& p, double omega_d0, double omega_d1,
                                        double delta, double j) {
  if (delta == 0.0) throw DivisionError("predict_error_scales: zero qubit-qubit detuning");
  const double x0 = std::pow(p.p0 * omega_d1, 2);
  const double x1 = std::pow(p.p1 * omega_d0, 2);
  const double d2 = delta * delta;
  return {x0 / (2 * delta), x1 / (2 * delta), x0 / (x0 + d2), x1 / (x1 + d2),
          4 * j * j / (4 * j * j + d2)};
}

/// Detuning of each qubit's 1→2 transition from the neighbour's drive:
/// δ0 = ω_d1 − ω̃0^(12), δ1 = ω_d0 − ω̃1^(12).
inline std::array<double, 2> leakage_detunings(const DressedSpectrum& s, double omega_d0, double omega_d1) {
  return {omega_d1 - s.omega_q0_12(), omega_d0 - s.omega_q1_12()};
}

}  // namespace xtalk
