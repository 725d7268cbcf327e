#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "dpo/errors.hpp"

namespace dpo::model {

/// Default width of guard bands around vanishing denominators, in units of
/// kappa^2 (or kappa for rate-like quantities).
inline constexpr double kDefaultGuard = 1e-9;

/// Relative tolerance for classifying a drive as sitting on threshold.
inline constexpr double kRegimeTol = 1e-12;

/// Cavity rates. kappa: common damping rate of both modes. lambda_c: two-photon
/// coupling. epsilon_d: coherent pump drive amplitude.
///
/// Scale covariance: the joint rescaling (kappa, lambda_c, epsilon_d) ->
/// (s*kappa, s*lambda_c, s*epsilon_d) maps steady states onto steady states
/// with alpha, beta unchanged and every steady observable (pair-variance sum,
/// quadrature variances, mean photon number, intensity difference, fraction)
/// invariant; time contracts as t -> t/s.
struct SystemParams {
  double kappa;
  double lambda_c;
  double epsilon_d;

  SystemParams(double kappa_, double lambda_c_, double epsilon_d_)
      : kappa(kappa_), lambda_c(lambda_c_), epsilon_d(epsilon_d_) {
    if (!(std::isfinite(kappa) && kappa > 0.0))
      throw std::invalid_argument("SystemParams: kappa must be finite and > 0");
    if (!(std::isfinite(lambda_c) && lambda_c > 0.0))
      throw std::invalid_argument("SystemParams: lambda_c must be finite and > 0");
    if (!(std::isfinite(epsilon_d) && epsilon_d >= 0.0))
      throw std::invalid_argument("SystemParams: epsilon_d must be finite and >= 0");
  }
};

enum class Regime { BelowThreshold, AtThreshold, AboveThreshold };

inline const char* to_string(Regime r) {
  switch (r) {
    case Regime::BelowThreshold: return "below";
    case Regime::AtThreshold: return "at";
    case Regime::AboveThreshold: return "above";
  }
  return "?";
}

/// Drive amplitude at which the fundamental mode starts to oscillate.
inline double threshold_drive(const SystemParams& p) {
  return p.kappa * p.kappa / (4.0 * p.lambda_c);
}

inline Regime classify_regime(const SystemParams& p, double tol = kRegimeTol) {
  const double eth = threshold_drive(p);
  if (std::abs(p.epsilon_d - eth) <= tol * eth) return Regime::AtThreshold;
  return p.epsilon_d < eth ? Regime::BelowThreshold : Regime::AboveThreshold;
}

/// Semiclassical steady state of the two coupled modes plus the gain terms
/// eps1 = lambda_c*alpha and eps2 = lambda_c*beta that drive the linearized
/// fluctuations. Above threshold the pump amplitude clamps to beta = kappa /
/// (2 lambda_c) and the fundamental acquires alpha = eps1/lambda_c with a free
/// sign (branch). Below and at threshold alpha = 0.
struct WorkingPoint {
  SystemParams params;
  Regime regime;
  double alpha;
  double beta;
  double eps1;
  double eps2;
  int branch;
};

namespace detail {

inline void check_steady_residuals(const WorkingPoint& wp) {
  const auto& p = wp.params;
  const double r1 = p.lambda_c * wp.alpha * wp.beta - 0.5 * p.kappa * wp.alpha;
  const double r2 = p.lambda_c * wp.alpha * wp.alpha + p.kappa * wp.beta -
                    2.0 * p.epsilon_d;
  const double scale =
      std::max({p.kappa, 2.0 * p.epsilon_d}) * std::max(1.0, std::abs(wp.alpha));
  if (std::abs(r1) > 1e-12 * scale || std::abs(r2) > 1e-12 * scale)
    throw std::invalid_argument("WorkingPoint: steady-state residuals exceed tolerance");
}

}  // namespace detail

/// Solve the semiclassical steady state. branch selects the sign of alpha
/// above threshold; it is recorded but has no effect below threshold.
inline WorkingPoint solve_steady_state(const SystemParams& p, int branch = +1,
                                       double tol = kRegimeTol) {
  if (branch != +1 && branch != -1)
    throw std::invalid_argument("solve_steady_state: branch must be +1 or -1");
  const Regime regime = classify_regime(p, tol);
  WorkingPoint wp{p, regime, 0.0, 0.0, 0.0, 0.0, branch};
  if (regime == Regime::AboveThreshold) {
    wp.eps2 = 0.5 * p.kappa;
    wp.eps1 = branch *
              std::sqrt(2.0 * p.lambda_c * p.epsilon_d - 0.5 * p.kappa * p.kappa);
    wp.alpha = wp.eps1 / p.lambda_c;
    wp.beta = 0.5 * p.kappa / p.lambda_c;
  } else {
    wp.beta = 2.0 * p.epsilon_d / p.kappa;
    wp.eps2 = p.lambda_c * wp.beta;
  }
  detail::check_steady_residuals(wp);
  return wp;
}

/// Working point with eps1 as the primary coordinate; the drive is
/// back-computed as epsilon_d = (eps1^2 + kappa^2/2) / (2 lambda_c).
inline WorkingPoint working_point_at_eps1(double kappa, double lambda_c,
                                          double eps1) {
  const double drive = (eps1 * eps1 + 0.5 * kappa * kappa) / (2.0 * lambda_c);
  const int branch = eps1 < 0.0 ? -1 : +1;
  return solve_steady_state(SystemParams(kappa, lambda_c, drive), branch);
}

/// Fraction of the pump input converted down into the fundamental,
/// lambda_c*alpha^2 / (2 epsilon_d). Zero below and at threshold.
inline double down_conversion_fraction(const WorkingPoint& wp) {
  if (wp.regime != Regime::AboveThreshold) return 0.0;
  return wp.params.lambda_c * wp.alpha * wp.alpha / (2.0 * wp.params.epsilon_d);
}

}  // namespace dpo::model
