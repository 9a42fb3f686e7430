#pragma once

// Time-dependent Schrödinger propagation of the full three-mode system.
//
// The integrator is the fourth-order Magnus scheme with two Gauss-Legendre
// nodes per step. It runs in the frame exp(i ω_ref N t), N the total
// excitation number. The static Hamiltonian conserves N, so this frame change
// is exact: no rotating-wave approximation is made and counter-rotating drive
// terms are kept. The frame only shrinks the norm of the step exponent, which
// is applied to a block of states by a truncated Taylor series on a fixed
// sparsity pattern.

#include <Eigen/SVD>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "xtalk/device_model.hpp"
#include "xtalk/drive_model.hpp"
#include "xtalk/errors.hpp"
#include "xtalk/quantum_ops.hpp"

namespace xtalk {

struct PropagationOptions {
  double step = 0.002;      // ns
  double max_step = 0.002;  // resolves the ~5 GHz lab-frame carrier
  bool verify_step = false;  // re-run at half step and compare
  double verify_tolerance = 1e-6;
};

namespace detail {

/// Complex sparse matrix with a fixed pattern, values split into re/im.
struct SparsePattern {
  int dim = 0;
  std::vector<int> row_ptr;
  std::vector<int> col;
  std::map<std::pair<int, int>, int> slot;

  static SparsePattern from_union(const std::vector<const ComplexMatrix*>& terms, double tol) {
    SparsePattern p;
    p.dim = static_cast<int>(terms.front()->rows());
    p.row_ptr.assign(p.dim + 1, 0);
    for (int r = 0; r < p.dim; ++r) {
      for (int c = 0; c < p.dim; ++c) {
        bool nz = false;
        for (const ComplexMatrix* t : terms) nz = nz || std::abs((*t)(r, c)) > tol;
        if (nz) {
          p.slot[{r, c}] = static_cast<int>(p.col.size());
          p.col.push_back(c);
        }
      }
      p.row_ptr[r + 1] = static_cast<int>(p.col.size());
    }
    return p;
  }

  int nnz() const { return static_cast<int>(col.size()); }
};

/// Entries of one operator on the shared pattern.
struct SparseTerm {
  std::vector<int> slot;
  std::vector<double> re, im;

  static SparseTerm on(const SparsePattern& p, const ComplexMatrix& m, double tol) {
    SparseTerm t;
    for (int r = 0; r < m.rows(); ++r) {
      for (int c = 0; c < m.cols(); ++c) {
        if (std::abs(m(r, c)) > tol) {
          t.slot.push_back(p.slot.at({r, c}));
          t.re.push_back(m(r, c).real());
          t.im.push_back(m(r, c).imag());
        }
      }
    }
    return t;
  }

  void accumulate(Complex coef, std::vector<double>& vr, std::vector<double>& vi) const {
    const double cr = coef.real(), ci = coef.imag();
    for (std::size_t e = 0; e < slot.size(); ++e) {
      vr[slot[e]] += cr * re[e] - ci * im[e];
      vi[slot[e]] += cr * im[e] + ci * re[e];
    }
  }
};

/// Row-major block of k state vectors, real and imaginary parts separate.
struct StateBlock {
  int dim = 0, k = 0;
  std::vector<double> re, im;

  StateBlock(int d, int cols) : dim(d), k(cols), re(static_cast<std::size_t>(d) * cols, 0.0),
                                 im(static_cast<std::size_t>(d) * cols, 0.0) {}

  static StateBlock from(const ComplexMatrix& m) {
    StateBlock b(static_cast<int>(m.rows()), static_cast<int>(m.cols()));
    for (int r = 0; r < b.dim; ++r) {
      for (int j = 0; j < b.k; ++j) {
        b.re[r * b.k + j] = m(r, j).real();
        b.im[r * b.k + j] = m(r, j).imag();
      }
    }
    return b;
  }

  ComplexMatrix to_matrix() const {
    ComplexMatrix m(dim, k);
    for (int r = 0; r < dim; ++r) {
      for (int j = 0; j < k; ++j) m(r, j) = Complex(re[r * k + j], im[r * k + j]);
    }
    return m;
  }
};

}  // namespace detail

/// Propagator for H(t) = H_static + F_0(t)(a_0 + a_0†) + F_1(t)(a_1 + a_1†),
/// with F_l from a DriveSchedule (own line plus crosstalk copy).
class MagnusPropagator {
 public:
  MagnusPropagator(const ComplexMatrix& h_static, const DeviceParams& params, const ModeLayout& layout)
      : params_(params), layout_(layout) {
    const int dim = layout.dim();
    if (h_static.rows() != dim || h_static.cols() != dim) {
      throw InvalidDimensionError("MagnusPropagator: static Hamiltonian does not match layout");
    }
    if (!is_hermitian(h_static, 1e-10 * std::max(1.0, max_abs(h_static)))) {
      throw ContractViolation("MagnusPropagator: static Hamiltonian is not Hermitian");
    }
    excitations_.resize(dim);
    for (int b = 0; b < dim; ++b) excitations_[b] = layout.excitations(b);
    choose_reference_frame(h_static);

    ComplexMatrix k = h_static;
    for (int b = 0; b < dim; ++b) k(b, b) -= omega_ref_ * excitations_[b] + shift_;
    const ComplexMatrix a0 = embed(annihilation(layout.levels(Mode::Q0)), Mode::Q0, layout);
    const ComplexMatrix a1 = embed(annihilation(layout.levels(Mode::Q1)), Mode::Q1, layout);
    const std::array<ComplexMatrix, 2> a{a0, a1};
    std::array<ComplexMatrix, 2> ad, comm, comm_adj, ladder_comm;
    for (int m = 0; m < 2; ++m) {
      ad[m] = a[m].adjoint();
      comm[m] = k * a[m] - a[m] * k;  // [K, a_m]
      comm_adj[m] = comm[m].adjoint();
      ladder_comm[m] = a[m] * ad[m] - ad[m] * a[m];
    }
    const double tol = 1e-14 * std::max(1.0, max_abs(k));
    pattern_ = detail::SparsePattern::from_union(
        {&k, &a[0], &ad[0], &a[1], &ad[1], &comm[0], &comm[1], &comm_adj[0], &comm_adj[1], &ladder_comm[0],
         &ladder_comm[1]}, tol);
    k_ = detail::SparseTerm::on(pattern_, k, tol);
    for (int m = 0; m < 2; ++m) {
      a_[m] = detail::SparseTerm::on(pattern_, a[m], tol);
      ad_[m] = detail::SparseTerm::on(pattern_, ad[m], tol);
      comm_[m] = detail::SparseTerm::on(pattern_, comm[m], tol);
      comm_adj_[m] = detail::SparseTerm::on(pattern_, comm_adj[m], tol);
      ladder_[m] = detail::SparseTerm::on(pattern_, ladder_comm[m], tol);
    }
  }

  double reference_frequency() const { return omega_ref_; }
  const ModeLayout& layout() const { return layout_; }
  int nonzeros() const { return pattern_.nnz(); }

  /// Evolves lab-frame states (columns) from t0 to t1 with steps of at most `step`.
  ComplexMatrix evolve(const DriveSchedule& schedule, const ComplexMatrix& states, double t0, double t1,
                       double step) const {
    if (!(t1 > t0)) throw ContractViolation("propagate: need t1 > t0");
    if (!(step > 0)) throw ContractViolation("propagate: step must be positive");
    if (states.rows() != layout_.dim()) throw InvalidDimensionError("propagate: state dimension mismatch");
    const int n_steps = std::max(1, static_cast<int>(std::ceil((t1 - t0) / step - 1e-9)));
    const double h = (t1 - t0) / n_steps;

    ComplexMatrix rotated = states;
    for (int b = 0; b < layout_.dim(); ++b) rotated.row(b) *= std::exp(Complex(0.0, omega_ref_ * excitations_[b] * t0));
    detail::StateBlock psi = detail::StateBlock::from(rotated);
    detail::StateBlock term(psi.dim, psi.k), next(psi.dim, psi.k);

    std::vector<double> base_re(pattern_.nnz(), 0.0), base_im(pattern_.nnz(), 0.0);
    k_.accumulate(Complex(0.0, -h), base_re, base_im);
    std::vector<double> vr(pattern_.nnz()), vi(pattern_.nnz());

    const double node = std::sqrt(3.0) / 6.0 * h;
    const double g1_scale = std::sqrt(3.0) * h * h / 12.0;
    for (int s = 0; s < n_steps; ++s) {
      const double tm = t0 + (s + 0.5) * h;
      const double ta = tm - node, tb = tm + node;
      const auto fa = mode_drive_coefficients(schedule, params_, ta);
      const auto fb = mode_drive_coefficients(schedule, params_, tb);
      const Complex ea = std::exp(Complex(0.0, -omega_ref_ * ta));
      const Complex eb = std::exp(Complex(0.0, -omega_ref_ * tb));

      std::copy(base_re.begin(), base_re.end(), vr.begin());
      std::copy(base_im.begin(), base_im.end(), vi.begin());
      for (int m = 0; m < 2; ++m) {
        if (fa[m] == 0.0 && fb[m] == 0.0) continue;
        const Complex ga = fa[m] * ea, gb = fb[m] * eb;
        const Complex g0 = 0.5 * h * (ga + gb);        // ∫ g dt
        const Complex g1 = g1_scale * (gb - ga);       // ∫ (t − t_mid) g dt
        a_[m].accumulate(-kI * g0, vr, vi);
        ad_[m].accumulate(-kI * std::conj(g0), vr, vi);
        comm_[m].accumulate(g1, vr, vi);
        comm_adj_[m].accumulate(-std::conj(g1), vr, vi);
        ladder_[m].accumulate(Complex(0.0, 2.0 / h * std::imag(g0 * std::conj(g1))), vr, vi);
      }
      apply_exponential(vr, vi, psi, term, next);
    }

    ComplexMatrix out = psi.to_matrix();
    const Complex global = std::exp(Complex(0.0, -shift_ * (t1 - t0)));
    for (int b = 0; b < layout_.dim(); ++b) {
      out.row(b) *= global * std::exp(Complex(0.0, -omega_ref_ * excitations_[b] * t1));
    }
    return out;
  }

 private:
  void choose_reference_frame(const ComplexMatrix& h) {
    const int dim = layout_.dim();
    auto spread = [&](double w, double* centre) {
      double lo = 1e300, hi = -1e300;
      for (int b = 0; b < dim; ++b) {
        const double v = h(b, b).real() - w * excitations_[b];
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      if (centre) *centre = 0.5 * (lo + hi);
      return hi - lo;
    };
    double a = 0.0, b = 0.0;
    for (int m = 0; m < dim; ++m) b = std::max(b, std::abs(h(m, m).real()));
    // Spread is convex in w; golden section over [0, max diagonal].
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = b - invphi * (b - a), x2 = a + invphi * (b - a);
    double f1 = spread(x1, nullptr), f2 = spread(x2, nullptr);
    for (int it = 0; it < 200 && b - a > 1e-9; ++it) {
      if (f1 < f2) {
        b = x2, x2 = x1, f2 = f1, x1 = b - invphi * (b - a), f1 = spread(x1, nullptr);
      } else {
        a = x1, x1 = x2, f1 = f2, x2 = a + invphi * (b - a), f2 = spread(x2, nullptr);
      }
    }
    omega_ref_ = 0.5 * (a + b);
    spread(omega_ref_, &shift_);
  }

  template <int K>
  void multiply_fixed(const std::vector<double>& vr, const std::vector<double>& vi, const detail::StateBlock& x,
                      detail::StateBlock& y) const {
    const int* __restrict rp = pattern_.row_ptr.data();
    const int* __restrict cols = pattern_.col.data();
    const double* __restrict ar = vr.data();
    const double* __restrict ai = vi.data();
    const double* __restrict xr = x.re.data();
    const double* __restrict xi = x.im.data();
    for (int r = 0; r < pattern_.dim; ++r) {
      double sr[K] = {}, si[K] = {};
      for (int e = rp[r]; e < rp[r + 1]; ++e) {
        const double* __restrict cr = xr + static_cast<std::size_t>(cols[e]) * K;
        const double* __restrict ci = xi + static_cast<std::size_t>(cols[e]) * K;
        const double vre = ar[e], vim = ai[e];
        for (int j = 0; j < K; ++j) {
          sr[j] += vre * cr[j] - vim * ci[j];
          si[j] += vre * ci[j] + vim * cr[j];
        }
      }
      for (int j = 0; j < K; ++j) {
        y.re[static_cast<std::size_t>(r) * K + j] = sr[j];
        y.im[static_cast<std::size_t>(r) * K + j] = si[j];
      }
    }
  }

  void multiply(const std::vector<double>& vr, const std::vector<double>& vi, const detail::StateBlock& x,
                detail::StateBlock& y) const {
    switch (x.k) {
      case 1: return multiply_fixed<1>(vr, vi, x, y);
      case 2: return multiply_fixed<2>(vr, vi, x, y);
      case 4: return multiply_fixed<4>(vr, vi, x, y);
      case 8: return multiply_fixed<8>(vr, vi, x, y);
      default: break;
    }
    const int k = x.k;
    std::fill(y.re.begin(), y.re.end(), 0.0);
    std::fill(y.im.begin(), y.im.end(), 0.0);
    for (int r = 0; r < pattern_.dim; ++r) {
      double* __restrict yr = y.re.data() + static_cast<std::size_t>(r) * k;
      double* __restrict yi = y.im.data() + static_cast<std::size_t>(r) * k;
      for (int e = pattern_.row_ptr[r]; e < pattern_.row_ptr[r + 1]; ++e) {
        const double ar = vr[e], ai = vi[e];
        const double* __restrict xr = x.re.data() + static_cast<std::size_t>(pattern_.col[e]) * k;
        const double* __restrict xi = x.im.data() + static_cast<std::size_t>(pattern_.col[e]) * k;
        for (int j = 0; j < k; ++j) {
          yr[j] += ar * xr[j] - ai * xi[j];
          yi[j] += ar * xi[j] + ai * xr[j];
        }
      }
    }
  }

  /// psi <- exp(Ω) psi by Taylor series, Ω given on the pattern.
  void apply_exponential(const std::vector<double>& vr, const std::vector<double>& vi, detail::StateBlock& psi,
                         detail::StateBlock& term, detail::StateBlock& next) const {
    term.re = psi.re;
    term.im = psi.im;
    for (int n = 1; n <= 40; ++n) {
      multiply(vr, vi, term, next);
      const double inv = 1.0 / n;
      double biggest = 0.0;
      for (std::size_t i = 0; i < next.re.size(); ++i) {
        next.re[i] *= inv;
        next.im[i] *= inv;
        psi.re[i] += next.re[i];
        psi.im[i] += next.im[i];
        biggest = std::max(biggest, std::abs(next.re[i]) + std::abs(next.im[i]));
      }
      std::swap(term, next);
      if (biggest < 1e-16) break;
    }
  }

  DeviceParams params_;
  ModeLayout layout_;
  std::vector<int> excitations_;
  double omega_ref_ = 0.0;
  double shift_ = 0.0;
  detail::SparsePattern pattern_;
  detail::SparseTerm k_;
  std::array<detail::SparseTerm, 2> a_, ad_, comm_, comm_adj_, ladder_;
};

/// Spectral norm.
inline double operator_norm(const ComplexMatrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<ComplexMatrix> svd(m);
  return svd.singularValues()(0);
}

namespace detail {

inline void check_step(double step, const PropagationOptions& opt) {
  if (!(step > 0) || step > opt.max_step * (1 + 1e-12)) {
    throw ContractViolation("propagate: step " + std::to_string(step * 1e3) + " ps exceeds the " +
                            std::to_string(opt.max_step * 1e3) + " ps limit");
  }
}

inline ComplexMatrix evolve_checked(const MagnusPropagator& engine, const DriveSchedule& schedule,
                                    const ComplexMatrix& initial, double t0, double t1,
                                    const PropagationOptions& opt) {
  check_step(opt.step, opt);
  ComplexMatrix u = engine.evolve(schedule, initial, t0, t1, opt.step);
  if (opt.verify_step) {
    const ComplexMatrix fine = engine.evolve(schedule, initial, t0, t1, 0.5 * opt.step);
    const double diff = operator_norm(u - fine);
    if (diff > opt.verify_tolerance) {
      throw AccuracyError("propagate: halving the step changed the result by " + std::to_string(diff), diff);
    }
  }
  return u;
}

}  // namespace detail

/// Full lab-frame propagator U(t1, t0) for H_static + H_d + H_c.
inline ComplexMatrix propagate(const ComplexMatrix& h_static, const DriveSchedule& schedule,
                               const DeviceParams& params, const ModeLayout& layout, double t0, double t1,
                               const PropagationOptions& opt = {}) {
  const MagnusPropagator engine(h_static, params, layout);
  return detail::evolve_checked(engine, schedule, ComplexMatrix::Identity(layout.dim(), layout.dim()), t0, t1,
                                opt);
}

/// Lab-frame images U(t1, t0)·states of the given columns.
inline ComplexMatrix propagate_states(const ComplexMatrix& h_static, const DriveSchedule& schedule,
                                      const DeviceParams& params, const ModeLayout& layout,
                                      const ComplexMatrix& states, double t0, double t1,
                                      const PropagationOptions& opt = {}) {
  const MagnusPropagator engine(h_static, params, layout);
  return detail::evolve_checked(engine, schedule, states, t0, t1, opt);
}

/// R(T)† U with R(t) = exp(−i H_diag t), H_diag the static Hamiltonian in its
/// dressed eigenbasis. Assumes the propagation started at t = 0. Works for the
/// full propagator and for blocks of propagated columns alike.
inline ComplexMatrix to_rotating_frame(const ComplexMatrix& lab, const DressedSpectrum& spectrum,
                                       double duration) {
  const ComplexMatrix& v = spectrum.vectors();
  ComplexVector phases(v.cols());
  for (Eigen::Index k = 0; k < v.cols(); ++k) phases(k) = std::exp(kI * spectrum.energies()(k) * duration);
  return v * (phases.asDiagonal() * (v.adjoint() * lab));
}

/// 4×4 block between dressed |000>, |001>, |100>, |101> of a square frame propagator.
inline ComplexMatrix project_computational(const ComplexMatrix& frame, const DressedSpectrum& spectrum) {
  if (frame.rows() != frame.cols()) {
    throw InvalidDimensionError("project_computational: expects the full square frame propagator");
  }
  ComplexMatrix basis(frame.rows(), 4);
  for (int i = 0; i < 4; ++i) basis.col(i) = spectrum.vector(computational_labels()[i]);
  return basis.adjoint() * frame * basis;
}

/// |<target|U|initial>|² for dressed labels; `frame` is square.
inline std::map<std::string, double> leakage_populations(const ComplexMatrix& frame,
                                                         const DressedSpectrum& spectrum, const Label& initial,
                                                         const std::vector<Label>& targets) {
  const ComplexVector out = frame * spectrum.vector(initial);
  std::map<std::string, double> pops;
  for (const Label& t : targets) pops[to_string(t)] = std::norm(spectrum.vector(t).dot(out));
  return pops;
}

/// Outcome of one propagation. `full` and `frame` are either the square
/// propagators or, when `columns` is non-empty, the images of those dressed
/// states only (dim × columns.size()).
struct PropagationResult {
  ComplexMatrix full;
  ComplexMatrix frame;
  std::vector<Label> columns;
  ComplexMatrix gate;  // 4×4 computational projection
  std::map<std::string, double> populations;

  bool full_space() const { return columns.empty(); }
};

/// Propagates dressed states through the schedule from t = 0 and returns
/// their rotating-frame images. With an empty `columns` list the full
/// propagator is computed.
inline PropagationResult propagate_dressed(const MagnusPropagator& engine, const DressedSpectrum& spectrum,
                                           const DriveSchedule& schedule, double duration,
                                           const PropagationOptions& opt,
                                           const std::vector<Label>& columns) {
  const int dim = spectrum.layout().dim();
  PropagationResult r;
  r.columns = columns;
  ComplexMatrix initial;
  if (columns.empty()) {
    initial = ComplexMatrix::Identity(dim, dim);
  } else {
    initial.resize(dim, static_cast<Eigen::Index>(columns.size()));
    for (std::size_t i = 0; i < columns.size(); ++i) initial.col(static_cast<Eigen::Index>(i)) = spectrum.vector(columns[i]);
  }
  if (duration > 0) {
    r.full = detail::evolve_checked(engine, schedule, initial, 0.0, duration, opt);
  } else {
    r.full = initial;
  }
  r.frame = to_rotating_frame(r.full, spectrum, std::max(duration, 0.0));
  return r;
}

/// Rows of the computational dressed states applied to a frame block whose
/// columns are the images of `columns`.
inline ComplexMatrix project_columns(const ComplexMatrix& frame_block, const DressedSpectrum& spectrum,
                                     const std::vector<Label>& rows) {
  ComplexMatrix basis(frame_block.rows(), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) basis.col(static_cast<Eigen::Index>(i)) = spectrum.vector(rows[i]);
  return basis.adjoint() * frame_block;
}

}  // namespace xtalk
