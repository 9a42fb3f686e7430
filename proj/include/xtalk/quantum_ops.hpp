#pragma once

// Truncated bosonic operators on the three-mode (Q0, C, Q1) product space and
// the dense linear-algebra helpers everything else is built on.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <string>

#include "xtalk/errors.hpp"

namespace xtalk {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;
inline constexpr Complex kI{0.0, 1.0};

/// Linear frequency in GHz to angular frequency in rad/ns.
constexpr double angular(double ghz) { return kTwoPi * ghz; }
/// Angular frequency in rad/ns to linear GHz.
constexpr double linear(double rad_per_ns) { return rad_per_ns / kTwoPi; }

/// Modes in storage order. Q1 is the fastest-varying index.
enum class Mode : std::size_t { Q0 = 0, C = 1, Q1 = 2 };

/// Bare occupation numbers (n_Q0, n_C, n_Q1).
using Label = std::array<int, 3>;

inline std::string to_string(const Label& l) {
  return std::to_string(l[0]) + std::to_string(l[1]) + std::to_string(l[2]);
}

class ModeLayout {
 public:
  ModeLayout() : ModeLayout(4) {}
  explicit ModeLayout(int levels) : ModeLayout(levels, levels, levels) {}
  ModeLayout(int q0, int c, int q1) : levels_{q0, c, q1} {
    for (int l : levels_) {
      if (l < 3) {
        throw InvalidDimensionError("ModeLayout: every mode needs at least 3 levels, got " +
                                    std::to_string(l));
      }
    }
  }

  int levels(Mode m) const { return levels_[static_cast<std::size_t>(m)]; }
  int dim() const { return levels_[0] * levels_[1] * levels_[2]; }

  bool contains(const Label& l) const {
    for (std::size_t m = 0; m < 3; ++m) {
      if (l[m] < 0 || l[m] >= levels_[m]) return false;
    }
    return true;
  }

  int index(const Label& l) const {
    if (!contains(l)) throw InvalidDimensionError("label |" + to_string(l) + "> outside layout");
    return (l[0] * levels_[1] + l[1]) * levels_[2] + l[2];
  }

  Label label(int index) const {
    Label l{};
    l[2] = index % levels_[2];
    index /= levels_[2];
    l[1] = index % levels_[1];
    l[0] = index / levels_[1];
    return l;
  }

  int excitations(int index) const {
    const Label l = label(index);
    return l[0] + l[1] + l[2];
  }

  bool operator==(const ModeLayout&) const = default;

 private:
  std::array<int, 3> levels_;
};

inline ComplexMatrix annihilation(int levels) {
  if (levels < 2) {
    throw InvalidDimensionError("annihilation: need at least 2 levels, got " + std::to_string(levels));
  }
  ComplexMatrix a = ComplexMatrix::Zero(levels, levels);
  for (int n = 1; n < levels; ++n) a(n - 1, n) = std::sqrt(static_cast<double>(n));
  return a;
}

inline ComplexMatrix creation(int levels) { return annihilation(levels).adjoint(); }

inline ComplexMatrix number_operator(int levels) {
  ComplexMatrix n = ComplexMatrix::Zero(levels, levels);
  for (int k = 0; k < levels; ++k) n(k, k) = static_cast<double>(k);
  return n;
}

inline ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b) {
  ComplexMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

/// I ⊗ … ⊗ op ⊗ … ⊗ I in (Q0, C, Q1) order.
inline ComplexMatrix embed(const ComplexMatrix& op, Mode mode, const ModeLayout& layout) {
  const int d = layout.levels(mode);
  if (op.rows() != d || op.cols() != d) {
    throw InvalidDimensionError("embed: operator is " + std::to_string(op.rows()) + "x" +
                                std::to_string(op.cols()) + " but mode has " + std::to_string(d) +
                                " levels");
  }
  std::array<ComplexMatrix, 3> factors;
  for (std::size_t m = 0; m < 3; ++m) {
    const int dm = layout.levels(static_cast<Mode>(m));
    factors[m] = (m == static_cast<std::size_t>(mode)) ? op : ComplexMatrix::Identity(dm, dm);
  }
  return kron(kron(factors[0], factors[1]), factors[2]);
}

inline bool is_hermitian(const ComplexMatrix& m, double tol = 1e-12) {
  if (m.rows() != m.cols()) return false;
  return (m - m.adjoint()).cwiseAbs().maxCoeff() <= tol;
}

/// Largest absolute entry; the "max-norm" used for matrix comparisons.
inline double max_abs(const ComplexMatrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

/// ‖U†U − I‖ in max-norm.
inline double unitarity_defect(const ComplexMatrix& u) {
  return max_abs(u.adjoint() * u - ComplexMatrix::Identity(u.cols(), u.cols()));
}

struct Eigensystem {
  RealVector values;     // ascending
  ComplexMatrix vectors;  // orthonormal columns
};

inline Eigensystem hermitian_eigensystem(const ComplexMatrix& m, double tol = 1e-10) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    throw InvalidDimensionError("hermitian_eigensystem: matrix must be square and non-empty");
  }
  const double scale = std::max(1.0, max_abs(m));
  if (!is_hermitian(m, tol * scale)) {
    throw ContractViolation("hermitian_eigensystem: input is not Hermitian");
  }
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(m);
  if (solver.info() != Eigen::Success) {
    throw ContractViolation("hermitian_eigensystem: eigen solver did not converge");
  }
  return {solver.eigenvalues(), solver.eigenvectors()};
}

/// exp(-i H t) for Hermitian H via its eigensystem.
inline ComplexMatrix unitary_exp(const ComplexMatrix& h, double t) {
  const Eigensystem es = hermitian_eigensystem(h);
  ComplexVector phases(es.values.size());
  for (Eigen::Index k = 0; k < es.values.size(); ++k) phases(k) = std::exp(-kI * es.values(k) * t);
  return es.vectors * phases.asDiagonal() * es.vectors.adjoint();
}

}  // namespace xtalk
