#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <utility>

#include "dpo/errors.hpp"
#include "dpo/model.hpp"
#include "dpo/observables.hpp"

// Closed-form steady-state and transient expressions for the linearized
// fluctuations around a working point. These are transcribed verbatim from
// their analytic source and are deliberately NOT derived from each other or
// from the moment oracle; the validation harness cross-checks the three routes
// and flags every disagreement instead of repairing it here.
//
// All observable-valued functions are even in the sign of eps1: they evaluate
// in the gauge with a non-negative fundamental amplitude. Mean fields stay
// covariant (they flip sign with the branch).

namespace dpo::closedform {

using model::kDefaultGuard;
using model::Regime;
using model::WorkingPoint;

enum class Form { General, Reduced };

inline const char* to_string(Form f) {
  return f == Form::General ? "general" : "reduced";
}

/// Hyperbolic-to-oscillatory branch coefficients p = eps2/sqrt(eta2),
/// q = 2 eps1/sqrt(eta2) with eta2 = eps2^2 - 4 eps1^2. Real when eta2 > 0,
/// purely imaginary when eta2 < 0; p^2 - q^2 = 1 in both regimes.
struct PQCoeffs {
  std::complex<double> p;
  std::complex<double> q;
};

/// Scalar transient amplitudes at one time. a1 and a2 are the closed-form
/// fluctuation means (in units of 1/lambda_c); a3..a6 assemble the propagator.
/// All entries are stored real: in the oscillatory regime a4 and a6 as written
/// are purely imaginary and the imaginary part is stored (the matching factors
/// of i live in p and q, so every assembled product stays real).
struct TransientCoeffs {
  double t;
  double a1, a2, a3, a4, a5, a6;
};

/// Steady second moments of the fluctuation operators:
/// ff = <A'A>, gg = <B'B>, fg = <AB>, ab_cross = <A'B> (primes: daggers).
struct NoiseMoments {
  double ff;
  double gg;
  double fg;
  double ab_cross;
};

namespace detail {

/// Largest real part of the linearized drift spectrum,
/// (-kappa ± eps2 ± sqrt(eps2^2 - 4 eps1^2)) / 2.
inline double max_drift_real(double k, double e1, double e2) {
  const double eta2 = e2 * e2 - 4.0 * e1 * e1;
  const double re = eta2 > 0.0 ? std::sqrt(eta2) : 0.0;
  return 0.5 * (-k + std::abs(e2) + re);
}

inline void require_stable(const WorkingPoint& wp, double guard) {
  if (max_drift_real(wp.params.kappa, wp.eps1, wp.eps2) >= -guard * wp.params.kappa)
    throw Unstable("drift spectrum touches the imaginary axis at this working point");
}

inline void require_outside_band(double denom, double scale, double guard,
                                 const char* what) {
  if (std::abs(denom) <= guard * scale)
    throw SingularRegime(std::string("guard band: ") + what);
}

inline double real_checked(const std::complex<double>& z) {
  if (std::abs(z.imag()) > 1e-12 * (1.0 + std::abs(z.real())))
    throw std::logic_error("closed form produced a complex residue");
  return z.real();
}

/// Shared evaluation context, gauged to e1 >= 0 for observables.
struct Ctx {
  double k, e1, e2;
  double eta2, dm, dp;
  std::complex<double> s, p, q;
  double p2, q2, pq, ps;  // p^2, q^2, p*q, p*sqrt(eta2): all real-valued
};

inline Ctx make_ctx(const WorkingPoint& wp, double guard, bool gauged) {
  Ctx c{};
  c.k = wp.params.kappa;
  c.e1 = gauged ? std::abs(wp.eps1) : wp.eps1;
  c.e2 = wp.eps2;
  c.eta2 = c.e2 * c.e2 - 4.0 * c.e1 * c.e1;
  c.dm = c.k * (c.k - 2.0 * c.e2) + 4.0 * c.e1 * c.e1;
  c.dp = c.k * (c.k + 2.0 * c.e2) + 4.0 * c.e1 * c.e1;
  if (c.e1 == 0.0) {
    // exact limit of p, q as e1 -> 0; keeps the undriven point finite
    c.s = c.e2;
    c.p = 1.0;
    c.q = 0.0;
    c.p2 = 1.0;
    c.q2 = 0.0;
    c.pq = 0.0;
    c.ps = c.e2;
  } else {
    require_outside_band(c.eta2, c.k * c.k, guard, "eps2^2 - 4 eps1^2");
    c.s = std::sqrt(std::complex<double>(c.eta2, 0.0));
    c.p = c.e2 / c.s;
    c.q = 2.0 * c.e1 / c.s;
    c.p2 = real_checked(c.p * c.p);
    c.q2 = real_checked(c.q * c.q);
    c.pq = real_checked(c.p * c.q);
    c.ps = real_checked(c.p * c.s);
  }
  return c;
}

inline void require_steady_bands(const Ctx& c, double guard) {
  const double k2 = c.k * c.k;
  require_outside_band(c.dm, k2, guard, "kappa(kappa - 2 eps2) + 4 eps1^2");
  require_outside_band(c.dp, k2, guard, "kappa(kappa + 2 eps2) + 4 eps1^2");
  require_outside_band(k2 - c.e2 * c.e2, k2, guard, "kappa^2 - eps2^2");
  require_outside_band(k2 - c.eta2, k2, guard, "kappa^2 - eta^2");
}

/// Occupation expression shared by ff and gg; they differ only in the sign of
/// the two p*sqrt(eta2) terms (sign = +1 selects ff).
inline double occupation_term(const Ctx& c, int sign) {
  const double S = 1.0 + c.p2 + c.q2;
  const double k2 = c.k * c.k;
  return c.k * (S * (c.k - c.e2) - sign * 2.0 * c.ps) / (8.0 * c.dm) +
         c.k * (S * (c.k + c.e2) + sign * 2.0 * c.ps) / (8.0 * c.dp) +
         k2 * (1.0 - c.p2 - c.q2) / (4.0 * (k2 - c.e2 * c.e2)) -
         k2 * (1.0 - c.p2 + c.q2) / (4.0 * (k2 - c.eta2)) -
         (1.0 + c.p2 - c.q2) / 4.0;
}

inline double cross_fg(const Ctx& c) {
  const double k2 = c.k * c.k;
  return -c.k * c.pq * (c.k - c.e2) / (4.0 * c.dm) -
         c.k * c.pq * (c.k + c.e2) / (4.0 * c.dp) +
         c.pq * k2 / (2.0 * (k2 - c.e2 * c.e2)) -
         k2 * c.pq / (2.0 * (k2 - c.eta2)) + c.pq / 2.0;
}

inline double cross_ab(const Ctx& c) {
  if (c.e1 == 0.0) return 0.0;
  const double k2 = c.k * c.k;
  return -c.k * c.e1 * c.e2 / (4.0 * c.eta2) *
         ((c.k - c.e2) / c.dm - (c.k + c.e2) / c.dp +
          2.0 * c.e2 / (k2 - c.e2 * c.e2));
}

inline void require_reduced(const WorkingPoint& wp, double guard,
                            bool pole_band) {
  if (wp.regime != Regime::AboveThreshold)
    throw FormMismatch("reduced form is only defined above threshold");
  const double k2 = wp.params.kappa * wp.params.kappa;
  const double e1 = std::abs(wp.eps1);
  require_outside_band(e1 * e1, k2, guard, "eps1^2");
  if (pole_band)
    require_outside_band(k2 - 16.0 * e1 * e1, k2, guard, "kappa^2 - 16 eps1^2");
}

}  // namespace detail

/// Branch coefficients for the working point. Throws SingularRegime inside the
/// guard band around eta2 = 0 (except at eps1 = 0, which uses the exact limit
/// p = 1, q = 0).
inline PQCoeffs pq(const WorkingPoint& wp, double guard = kDefaultGuard) {
  if (wp.eps1 == 0.0) return {1.0, 0.0};
  const double k2 = wp.params.kappa * wp.params.kappa;
  const double eta2 = wp.eps2 * wp.eps2 - 4.0 * wp.eps1 * wp.eps1;
  detail::require_outside_band(eta2, k2, guard, "eps2^2 - 4 eps1^2");
  const auto s = std::sqrt(std::complex<double>(eta2, 0.0));
  return {wp.eps2 / s, 2.0 * wp.eps1 / s};
}

/// Transient amplitudes at time t >= 0 (t in units of 1/kappa scale set by the
/// working point's rates). a1(0) = -eps1/lambda_c, a2(0) = +eps2/lambda_c,
/// a3(0) = 1, a4..a6(0) = 0.
inline TransientCoeffs transient_coeffs(const WorkingPoint& wp, double t,
                                        double guard = kDefaultGuard) {
  if (!(t >= 0.0) || !std::isfinite(t))
    throw std::invalid_argument("transient_coeffs: t must be finite and >= 0");
  const auto c = detail::make_ctx(wp, guard, /*gauged=*/false);
  const double k = c.k, e1 = c.e1, e2 = c.e2, lam = wp.params.lambda_c;
  const std::complex<double> ch = std::cosh(c.s * (0.5 * t));
  const std::complex<double> sh = std::sinh(c.s * (0.5 * t));
  const double env = std::exp(-0.5 * k * t);
  const double che = std::cosh(0.5 * e2 * t), she = std::sinh(0.5 * e2 * t);
  const double env12 = std::exp(-0.5 * (k - e2) * t);

  TransientCoeffs out{};
  out.t = t;
  out.a1 = detail::real_checked(-(env12 / lam) *
                                (e1 * ch + (e1 * c.p + e2 * c.q) * sh));
  out.a2 = detail::real_checked(-(env12 / lam) *
                                ((e1 * c.q + e2 * c.p) * sh - e2 * ch));
  out.a3 = detail::real_checked(env * che * ch);
  out.a5 = detail::real_checked(env * she * ch);
  const std::complex<double> a4c = env * she * sh;
  const std::complex<double> a6c = env * che * sh;
  if (c.eta2 < 0.0) {
    out.a4 = a4c.imag();
    out.a6 = a6c.imag();
    if (std::abs(a4c.real()) > 1e-12 * (1.0 + std::abs(out.a4)) ||
        std::abs(a6c.real()) > 1e-12 * (1.0 + std::abs(out.a6)))
      throw std::logic_error("oscillatory a4/a6 produced a real residue");
  } else {
    out.a4 = detail::real_checked(a4c);
    out.a6 = detail::real_checked(a6c);
  }
  return out;
}

/// Closed-form mode means (alpha + a1(t), beta + a2(t)). Note: a2 carries the
/// source's sign convention, so the pump mean starts at 2*beta rather than 0;
/// the moment oracle adjudicates (see the validation flags).
inline std::pair<double, double> mean_fields(const WorkingPoint& wp, double t,
                                             double guard = kDefaultGuard) {
  const auto tc = transient_coeffs(wp, t, guard);
  return {wp.alpha + tc.a1, wp.beta + tc.a2};
}

/// Steady fluctuation moments, transcribed verbatim. Throws Unstable on or
/// past the stability edge and SingularRegime inside any guard band.
inline NoiseMoments steady_noise_moments(const WorkingPoint& wp,
                                         double guard = kDefaultGuard) {
  detail::require_stable(wp, guard);
  const auto c = detail::make_ctx(wp, guard, /*gauged=*/true);
  detail::require_steady_bands(c, guard);
  return {detail::occupation_term(c, +1), detail::occupation_term(c, -1),
          detail::cross_fg(c), detail::cross_ab(c)};
}

/// Total variance of the inseparability pair. General: full working-point
/// expression. Reduced: the pump-clamped simplification, valid only above
/// threshold and away from its 16 eps1^2 = kappa^2 pole.
inline double duan_sum(const WorkingPoint& wp, Form form,
                       double guard = kDefaultGuard) {
  detail::require_stable(wp, guard);
  if (form == Form::General) {
    const auto c = detail::make_ctx(wp, guard, /*gauged=*/true);
    detail::require_steady_bands(c, guard);
    const double k2 = c.k * c.k;
    const double Sp = 1.0 + c.p2 + c.q2 + 2.0 * c.pq;
    return 2.0 + c.k * Sp * (c.k - c.e2) / (2.0 * c.dm) +
           c.k * Sp * (c.k + c.e2) / (2.0 * c.dp) +
           k2 * (1.0 - c.p2 - c.q2 - 2.0 * c.pq) / (k2 - c.e2 * c.e2) -
           k2 * (1.0 - c.p2 + c.q2 - 2.0 * c.pq) / (k2 - c.eta2) -
           (1.0 + c.p2 - c.q2 + 2.0 * c.pq);
  }
  detail::require_reduced(wp, guard, /*pole_band=*/true);
  const double k = wp.params.kappa, e1 = std::abs(wp.eps1);
  const double k2 = k * k, e12 = e1 * e1;
  const double pole = k2 - 16.0 * e12;
  return k2 * k * (k + 4.0 * e1) / (8.0 * e12 * pole) +
         3.0 * k2 * k * (k + 4.0 * e1) / (4.0 * pole * (k2 + 2.0 * e12)) -
         (16.0 * e1 * (4.0 * e1 + k) + 24.0 * k * e1) / (3.0 * pole) +
         16.0 * k2 * k * e1 / (pole * (3.0 * k2 + 16.0 * e12));
}

/// Pump quadrature variances {var_plus, var_minus}.
inline std::pair<double, double> quadrature_variances(
    const WorkingPoint& wp, Form form, double guard = kDefaultGuard) {
  detail::require_stable(wp, guard);
  const double k = wp.params.kappa, e1 = std::abs(wp.eps1), e2 = wp.eps2;
  const double k2 = k * k;
  if (form == Form::General) {
    const double dm = k * (k - 2.0 * e2) + 4.0 * e1 * e1;
    const double dp = k * (k + 2.0 * e2) + 4.0 * e1 * e1;
    detail::require_outside_band(k - e2, k, guard, "kappa - eps2");
    detail::require_outside_band(dm, k2, guard,
                                 "kappa(kappa - 2 eps2) + 4 eps1^2");
    const double vp =
        (k2 * (k - 2.0 * e2) + k * e2 * e2 + 4.0 * k * e1 * e1 +
         2.0 * k * e2 * e1) /
        ((k - e2) * dm);
    const double vm =
        (k2 * (k + 2.0 * e2) + k * e2 * e2 + 4.0 * k * e1 * e1 -
         2.0 * k * e2 * e1) /
        ((k + e2) * dp);
    return {vp, vm};
  }
  detail::require_reduced(wp, guard, /*pole_band=*/false);
  const double e12 = e1 * e1;
  const double vp = (k2 + 16.0 * e12 + 4.0 * e1 * k) / (8.0 * e12);
  const double vm =
      (9.0 * k2 + 16.0 * e12 - 4.0 * e1 * k) / (12.0 * (k2 + 2.0 * e12));
  return {vp, vm};
}

/// Mean photon number of the symmetric combined mode, coherent plus noise.
inline double mean_photon_number(const WorkingPoint& wp, Form form,
                                 double guard = kDefaultGuard) {
  detail::require_stable(wp, guard);
  const double lam = wp.params.lambda_c;
  if (form == Form::General) {
    const auto c = detail::make_ctx(wp, guard, /*gauged=*/true);
    detail::require_steady_bands(c, guard);
    const double alpha = std::abs(wp.alpha), beta = wp.beta;
    const double S = 1.0 + c.p2 + c.q2;
    const double k2 = c.k * c.k;
    return 0.5 * (alpha + beta) * (alpha + beta) +
           c.k * (c.k - c.e2) * S / (8.0 * c.dm) +
           c.k * (c.k + c.e2) * S / (8.0 * c.dp) +
           k2 * (1.0 - c.p2 - c.q2) / (4.0 * (k2 - c.e2 * c.e2)) -
           k2 * (1.0 - c.p2 + c.q2) / (4.0 * (k2 - c.eta2)) -
           (1.0 + c.p2 - c.q2) / 4.0 + detail::cross_ab(c);
  }
  detail::require_reduced(wp, guard, /*pole_band=*/true);
  const double k = wp.params.kappa, e1 = std::abs(wp.eps1);
  const double k2 = k * k, e12 = e1 * e1;
  const double pole = k2 - 16.0 * e12;
  return (2.0 * e1 - k) * (2.0 * e1 - k) / (8.0 * lam * lam) - 0.5 +
         k2 * k * (k - 2.0 * e1) / (32.0 * e12 * pole) +
         3.0 * k2 * k * (k + 2.0 * e1) / (16.0 * pole * (k2 + 2.0 * e12)) -
         2.0 * e1 * (k + 16.0 * e1) / (3.0 * pole);
}

/// Intensity difference <a'a> - <b'b> including coherent parts.
inline double intensity_difference(const WorkingPoint& wp, Form form,
                                   double guard = kDefaultGuard) {
  detail::require_stable(wp, guard);
  const double lam = wp.params.lambda_c;
  const double alpha = std::abs(wp.alpha), beta = wp.beta;
  if (form == Form::General) {
    const auto c = detail::make_ctx(wp, guard, /*gauged=*/true);
    detail::require_steady_bands(c, guard);
    return alpha * alpha - beta * beta - c.k * c.ps / (2.0 * c.dm) +
           c.k * c.ps / (2.0 * c.dp);
  }
  detail::require_reduced(wp, guard, /*pole_band=*/false);
  const double k = wp.params.kappa, e1 = std::abs(wp.eps1);
  const double k2 = k * k, e12 = e1 * e1;
  return (4.0 * e12 - k2) / (4.0 * lam * lam) - k2 / (16.0 * e12) +
         k2 / (8.0 * (k2 + 2.0 * e12));
}

}  // namespace dpo::closedform
