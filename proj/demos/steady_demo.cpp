// Minimal library walkthrough: pick a working point above threshold, evaluate
// the closed-form observables, then confirm them against the moment oracle.

#include <cstdio>

#include "dpo/dpo.hpp"

int main() {
  const double kappa = 1.0, lambda_c = 0.5, eps1 = 1.0;
  const auto wp = dpo::model::working_point_at_eps1(kappa, lambda_c, eps1);
  std::printf("regime %s, drive %.6f (threshold %.6f), alpha=%.4f beta=%.4f\n",
              dpo::model::to_string(wp.regime), wp.params.epsilon_d,
              dpo::model::threshold_drive(wp.params), wp.alpha, wp.beta);

  const auto row =
      dpo::harness::evaluate_row(wp, dpo::closedform::Form::General, 1e-9);
  std::printf("closed general : duan=%.8f var-=%.8f nbar=%.8f dI=%.8f\n",
              row.duan_sum, row.var_minus, row.nbar, row.delta_I);

  const auto ms = dpo::oracle::steady_moments(wp);
  const auto obs = dpo::oracle::observables_from_moments(wp, ms);
  std::printf("moment oracle  : duan=%.8f var-=%.8f nbar=%.8f dI=%.8f\n",
              obs.duan_sum, obs.var_minus, obs.mean_photon, obs.intensity_diff);

  std::printf("down-conversion fraction %.4f, %sentangled by the pair sum\n",
              dpo::model::down_conversion_fraction(wp),
              obs.entangled ? "" : "not ");
  return 0;
}
