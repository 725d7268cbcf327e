#pragma once

namespace dpo {

/// Steady-state (or instantaneous) derived quantities shared by the
/// closed-form and moment pipelines.
///
/// duan_sum: total variance of the inseparability pair u = X_a - X_b,
/// v = P_a + P_b; values below 2 witness entanglement. var_plus/var_minus are
/// the pump-quadrature variances along the anti-squeezed and squeezed
/// directions. mean_photon counts photons in the symmetric combined mode.
/// intensity_diff is <a'a> - <b'b> including coherent parts.
struct Observables {
  double duan_sum;
  double var_plus;
  double var_minus;
  double mean_photon;
  double intensity_diff;
  double mean_a;
  double mean_b;
  bool entangled;
};

/// Strict inseparability test on the pair-variance sum.
inline bool entangled_by_sum(double duan_sum) { return duan_sum < 2.0; }

/// Noise reduction below vacuum, in percent. 1.0 -> 0%, 7/12 -> 41.67%.
inline double squeezing_percent(double variance) {
  return (1.0 - variance) * 100.0;
}

}  // namespace dpo
