#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>

#include "dpo/errors.hpp"
#include "dpo/model.hpp"
#include "dpo/observables.hpp"

// Moment-equation oracle for the linearized fluctuations. Everything here is
// computed numerically from the drift and diffusion matrices alone, with no
// input from the closed-form expressions, so the two pipelines can be checked
// against each other.
//
// Basis order throughout: (A, A', B, B') where primes denote daggers and the
// moments are ordered (daggered operators to the left), not symmetrized.

namespace dpo::oracle {

using model::WorkingPoint;

using Matrix4 = Eigen::Matrix4d;
using Vector4 = Eigen::Vector4d;

inline constexpr double kStabilityGuard = 1e-9;

/// Default integrator step, in units of 1/kappa.
inline constexpr double kDefaultDtFactor = 0.005;
/// Hard cap on the step size, in units of 1/kappa.
inline constexpr double kMaxDtFactor = 0.01;

/// First moments and ordered second moments at one time. For the steady state
/// t is +infinity and m is zero.
struct MomentState {
  double t;
  Vector4 m;
  Matrix4 n;
};

inline Matrix4 build_drift(const WorkingPoint& wp) {
  const double k = wp.params.kappa, e1 = wp.eps1, e2 = wp.eps2;
  Matrix4 M;
  M << -0.5 * k, e2, e1, 0.0,
       e2, -0.5 * k, 0.0, e1,
       -e1, 0.0, -0.5 * k, 0.0,
       0.0, -e1, 0.0, -0.5 * k;
  return M;
}

inline Matrix4 build_diffusion(const WorkingPoint& wp) {
  Matrix4 D = Matrix4::Zero();
  D(0, 1) = wp.params.kappa;
  D(2, 3) = wp.params.kappa;
  return D;
}

/// Drift eigenvalues sorted by descending real part (ties: descending imag).
inline std::array<std::complex<double>, 4> stability_spectrum(
    const WorkingPoint& wp) {
  Eigen::EigenSolver<Matrix4> es(build_drift(wp), /*computeEigenvectors=*/false);
  std::array<std::complex<double>, 4> ev;
  for (int i = 0; i < 4; ++i) ev[i] = es.eigenvalues()(i);
  std::sort(ev.begin(), ev.end(), [](const auto& a, const auto& b) {
    if (a.real() != b.real()) return a.real() > b.real();
    return a.imag() > b.imag();
  });
  return ev;
}

inline bool is_stable(const WorkingPoint& wp, double guard = kStabilityGuard) {
  return stability_spectrum(wp)[0].real() < -guard * wp.params.kappa;
}

/// Vacuum start: fluctuation means offset by the coherent amplitudes, second
/// moments holding only the commutator pins <AA'> = <BB'> = 1.
inline MomentState vacuum_state(const WorkingPoint& wp) {
  MomentState ms{};
  ms.t = 0.0;
  ms.m << -wp.alpha, -wp.alpha, -wp.beta, -wp.beta;
  ms.n = Matrix4::Zero();
  ms.n(0, 1) = 1.0;
  ms.n(2, 3) = 1.0;
  return ms;
}

/// Largest deviation of the two commutator pins from 1.
inline double pin_error(const MomentState& ms) {
  return std::max(std::abs(ms.n(0, 1) - ms.n(1, 0) - 1.0),
                  std::abs(ms.n(2, 3) - ms.n(3, 2) - 1.0));
}

/// Largest asymmetry among the cross-mode entries that must be pairwise equal.
inline double cross_symmetry_error(const MomentState& ms) {
  return std::max({std::abs(ms.n(0, 2) - ms.n(2, 0)),
                   std::abs(ms.n(1, 3) - ms.n(3, 1)),
                   std::abs(ms.n(0, 3) - ms.n(3, 0)),
                   std::abs(ms.n(1, 2) - ms.n(2, 1))});
}

/// Steady second moments from the dense 16-unknown linear system
/// M N + N M^T + D = 0. Refuses to run within the stability guard.
inline MomentState steady_moments(const WorkingPoint& wp,
                                  double guard = kStabilityGuard) {
  if (!is_stable(wp, guard))
    throw Unstable("steady_moments: drift spectrum within guard of the imaginary axis");
  const Matrix4 M = build_drift(wp);
  const Matrix4 D = build_diffusion(wp);

  Eigen::Matrix<double, 16, 16> K = Eigen::Matrix<double, 16, 16>::Zero();
  Eigen::Matrix<double, 16, 1> b;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      for (int k = 0; k < 4; ++k) K(i + 4 * j, k + 4 * j) += M(i, k);
      for (int l = 0; l < 4; ++l) K(i + 4 * j, i + 4 * l) += M(j, l);
      b(i + 4 * j) = -D(i, j);
    }
  Eigen::FullPivLU<Eigen::Matrix<double, 16, 16>> lu(K);
  if (!lu.isInvertible())
    throw SingularSolve("steady_moments: vectorized system is singular");
  const Eigen::Matrix<double, 16, 1> x = lu.solve(b);

  MomentState ms{};
  ms.t = std::numeric_limits<double>::infinity();
  ms.m.setZero();
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) ms.n(i, j) = x(i + 4 * j);

  const Matrix4 R = M * ms.n + ms.n * M.transpose() + D;
  const double tol = 1e-10 * wp.params.kappa * (1.0 + ms.n.cwiseAbs().maxCoeff());
  if (R.cwiseAbs().maxCoeff() > tol)
    throw SingularSolve("steady_moments: residual check failed");
  return ms;
}

namespace detail {

template <typename State, typename Deriv>
inline void rk4_advance(State& y, double& t, double t_final, double dt,
                        const Deriv& f) {
  while (t < t_final) {
    const double h = std::min(dt, t_final - t);
    if (h <= 0.0) break;
    const State k1 = f(y);
    State y2 = y; y2.axpy(0.5 * h, k1);
    const State k2 = f(y2);
    State y3 = y; y3.axpy(0.5 * h, k2);
    const State k3 = f(y3);
    State y4 = y; y4.axpy(h, k3);
    const State k4 = f(y4);
    State incr = k1; incr.scale_add(k2, k3, k4);
    y.axpy(h / 6.0, incr);
    t += h;
    if (h < dt) break;
  }
}

struct MNState {
  Vector4 m;
  Matrix4 n;
  void axpy(double a, const MNState& o) {
    m += a * o.m;
    n += a * o.n;
  }
  // k1 + 2 k2 + 2 k3 + k4 accumulated into *this (which holds k1)
  void scale_add(const MNState& k2, const MNState& k3, const MNState& k4) {
    m += 2.0 * k2.m + 2.0 * k3.m + k4.m;
    n += 2.0 * k2.n + 2.0 * k3.n + k4.n;
  }
};

}  // namespace detail

/// Fixed-step RK4 evolution of (m, N) from init.t to t_final. dt must satisfy
/// dt <= 0.01/kappa; the final step is shortened to land exactly on t_final.
inline MomentState integrate_moments(const WorkingPoint& wp,
                                     const MomentState& init, double t_final,
                                     double dt) {
  if (!(dt > 0.0) || dt > kMaxDtFactor / wp.params.kappa)
    throw StepTooLarge("integrate_moments: dt must be in (0, 0.01/kappa]");
  if (!std::isfinite(init.t) || !(t_final >= init.t))
    throw std::invalid_argument("integrate_moments: need finite init.t <= t_final");
  const Matrix4 M = build_drift(wp);
  const Matrix4 D = build_diffusion(wp);
  detail::MNState y{init.m, init.n};
  double t = init.t;
  detail::rk4_advance(y, t, t_final, dt, [&](const detail::MNState& s) {
    return detail::MNState{M * s.m,
                           M * s.n + s.n * M.transpose() + D};
  });
  return MomentState{t, y.m, y.n};
}

inline MomentState integrate_moments(const WorkingPoint& wp,
                                     const MomentState& init, double t_final) {
  return integrate_moments(wp, init, t_final,
                           kDefaultDtFactor / wp.params.kappa);
}

namespace detail {

struct PhiState {
  Matrix4 phi;
  void axpy(double a, const PhiState& o) { phi += a * o.phi; }
  void scale_add(const PhiState& k2, const PhiState& k3, const PhiState& k4) {
    phi += 2.0 * k2.phi + 2.0 * k3.phi + k4.phi;
  }
};

}  // namespace detail

/// Propagator Phi(t) of the mean-field system, dPhi/dt = M Phi, Phi(0) = I.
inline Matrix4 fundamental_matrix(const WorkingPoint& wp, double t,
                                  double dt) {
  if (!(dt > 0.0) || dt > kMaxDtFactor / wp.params.kappa)
    throw StepTooLarge("fundamental_matrix: dt must be in (0, 0.01/kappa]");
  if (!(t >= 0.0) || !std::isfinite(t))
    throw std::invalid_argument("fundamental_matrix: t must be finite and >= 0");
  const Matrix4 M = build_drift(wp);
  detail::PhiState y{Matrix4::Identity()};
  double tcur = 0.0;
  detail::rk4_advance(y, tcur, t, dt, [&](const detail::PhiState& s) {
    return detail::PhiState{M * s.phi};
  });
  return y.phi;
}

inline Matrix4 fundamental_matrix(const WorkingPoint& wp, double t) {
  return fundamental_matrix(wp, t, kDefaultDtFactor / wp.params.kappa);
}

/// Observable bundle from a moment state. Pair-insensitive quantities are
/// evaluated in the gauge with non-negative fundamental amplitude so they are
/// even in the branch sign; mean fields stay covariant.
inline Observables observables_from_moments(const WorkingPoint& wp,
                                            const MomentState& ms) {
  const double sigma = wp.eps1 < 0.0 ? -1.0 : 1.0;
  const auto& n = ms.n;
  const double ff = n(1, 0), gg = n(3, 2);
  const double alpha = std::abs(wp.alpha), beta = wp.beta;

  Observables o{};
  o.duan_sum = 2.0 + 2.0 * ff + 2.0 * gg -
               2.0 * sigma * n(0, 2) - 2.0 * sigma * n(1, 3);
  const double base = 1.0 + ff + gg + sigma * (n(1, 2) + n(0, 3));
  const double swing = sigma * (n(0, 2) + n(1, 3)) +
                       0.5 * (n(0, 0) + n(1, 1) + n(2, 2) + n(3, 3));
  o.var_plus = base + swing;
  o.var_minus = base - swing;
  o.mean_photon = 0.5 * (alpha + beta) * (alpha + beta) +
                  0.5 * (ff + gg + sigma * (n(1, 2) + n(3, 0)));
  o.intensity_diff = wp.alpha * wp.alpha - beta * beta + ff - gg;
  o.mean_a = wp.alpha + ms.m(0);
  o.mean_b = wp.beta + ms.m(2);
  o.entangled = entangled_by_sum(o.duan_sum);
  return o;
}

}  // namespace dpo::oracle
