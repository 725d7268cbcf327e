#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dpo/closedform.hpp"
#include "dpo/errors.hpp"
#include "dpo/model.hpp"
#include "dpo/observables.hpp"
#include "dpo/oracle.hpp"

// Sweep, figure, search and cross-validation drivers. eps1 is the primary
// sweep coordinate; the drive is back-computed per point. All outputs are
// deterministic: fixed grids, sorted (kappa, eps1) ordering, 17-significant-
// digit CSV, and parallel execution writes into preassigned slots.

namespace dpo::harness {

using closedform::Form;
using model::Regime;
using model::WorkingPoint;

enum class Spacing { Linear, Log };

struct Eps1Grid {
  double start = 0.0;
  double stop = 0.0;
  int count = 0;
  Spacing spacing = Spacing::Linear;
};

struct SweepSpec {
  std::vector<double> kappa_values;
  double lambda_c = 0.5;
  Eps1Grid eps1_grid;
  double guard = model::kDefaultGuard;
  std::vector<Form> forms = {Form::General};
  std::vector<std::string> observables = {"duan_sum", "var_plus", "var_minus",
                                          "nbar", "delta_I"};
};

inline const std::vector<std::string>& known_observables() {
  static const std::vector<std::string> v{"duan_sum", "var_plus", "var_minus",
                                          "nbar", "delta_I"};
  return v;
}

inline void validate_spec(const SweepSpec& s) {
  if (s.kappa_values.empty())
    throw std::invalid_argument("spec: kappa_values must be non-empty");
  for (double k : s.kappa_values)
    if (!(std::isfinite(k) && k > 0.0))
      throw std::invalid_argument("spec: kappa values must be finite and > 0");
  if (!(std::isfinite(s.lambda_c) && s.lambda_c > 0.0))
    throw std::invalid_argument("spec: lambda_c must be finite and > 0");
  const auto& g = s.eps1_grid;
  if (g.count < 2) throw std::invalid_argument("spec: eps1_grid.count must be >= 2");
  if (!(std::isfinite(g.start) && std::isfinite(g.stop) && g.start < g.stop))
    throw std::invalid_argument("spec: eps1_grid needs finite start < stop");
  if (g.start < 0.0)
    throw std::invalid_argument("spec: eps1_grid.start must be >= 0");
  if (g.spacing == Spacing::Log && !(g.start > 0.0))
    throw std::invalid_argument("spec: log spacing needs start > 0");
  if (!(std::isfinite(s.guard) && s.guard > 0.0))
    throw std::invalid_argument("spec: guard must be finite and > 0");
  if (s.forms.empty()) throw std::invalid_argument("spec: forms must be non-empty");
  if (s.observables.empty())
    throw std::invalid_argument("spec: observables must be non-empty");
  for (const auto& o : s.observables)
    if (std::find(known_observables().begin(), known_observables().end(), o) ==
        known_observables().end())
      throw std::invalid_argument("spec: unknown observable '" + o + "'");
}

inline std::vector<double> grid_points(const Eps1Grid& g) {
  std::vector<double> pts(static_cast<size_t>(g.count));
  const int n = g.count - 1;
  for (int i = 0; i <= n; ++i) {
    if (g.spacing == Spacing::Linear)
      pts[i] = g.start + (g.stop - g.start) * i / n;
    else
      pts[i] = g.start * std::exp(std::log(g.stop / g.start) * i / n);
  }
  pts.front() = g.start;
  pts.back() = g.stop;
  return pts;
}

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline std::string fmt6(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

/// Deterministic parallel map: worker i fills slots [lo, hi).
template <typename Fn>
inline void parallel_for(size_t n, int threads, const Fn& fn) {
  const int nt = std::max(1, std::min<int>(threads, static_cast<int>(n)));
  if (nt == 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(nt);
  for (int w = 0; w < nt; ++w)
    pool.emplace_back([&, w] {
      for (size_t i = static_cast<size_t>(w); i < n; i += nt) fn(i);
    });
  for (auto& th : pool) th.join();
}

inline double rel_diff(double x, double y) {
  const double scale = std::max(std::abs(x), std::abs(y));
  if (scale == 0.0) return 0.0;
  return std::abs(x - y) / scale;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// sweep

struct SweepRow {
  double kappa, eps1;
  double duan_sum, var_plus, var_minus, nbar, delta_I, fraction;
  bool entangled;
  Regime regime;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  int evaluated = 0;
  int skipped = 0;
};

/// Closed-form row evaluation for one working point with one form.
inline SweepRow evaluate_row(const WorkingPoint& wp, Form form, double guard) {
  SweepRow r{};
  r.kappa = wp.params.kappa;
  r.eps1 = wp.eps1;
  r.duan_sum = closedform::duan_sum(wp, form, guard);
  const auto [vp, vm] = closedform::quadrature_variances(wp, form, guard);
  r.var_plus = vp;
  r.var_minus = vm;
  r.nbar = closedform::mean_photon_number(wp, form, guard);
  r.delta_I = closedform::intensity_difference(wp, form, guard);
  r.fraction = model::down_conversion_fraction(wp);
  r.entangled = entangled_by_sum(r.duan_sum);
  r.regime = wp.regime;
  return r;
}

/// Evaluate the closed-form observable table on the grid. Points inside guard
/// bands or unstable are skipped and counted. The emitted form is General when
/// the spec selects it (default), otherwise Reduced.
inline SweepResult run_sweep(const SweepSpec& spec, int threads = 1) {
  validate_spec(spec);
  const Form form = std::find(spec.forms.begin(), spec.forms.end(),
                              Form::General) != spec.forms.end()
                        ? Form::General
                        : Form::Reduced;
  std::vector<double> kappas = spec.kappa_values;
  std::sort(kappas.begin(), kappas.end());
  const std::vector<double> eps1s = grid_points(spec.eps1_grid);

  struct Task {
    double kappa, eps1;
  };
  std::vector<Task> tasks;
  tasks.reserve(kappas.size() * eps1s.size());
  for (double k : kappas)
    for (double e1 : eps1s) tasks.push_back({k, e1});

  std::vector<std::optional<SweepRow>> slots(tasks.size());
  detail::parallel_for(tasks.size(), threads, [&](size_t i) {
    try {
      const WorkingPoint wp =
          model::working_point_at_eps1(tasks[i].kappa, spec.lambda_c, tasks[i].eps1);
      slots[i] = evaluate_row(wp, form, spec.guard);
    } catch (const Error&) {
      slots[i] = std::nullopt;
    }
  });

  SweepResult out;
  for (auto& s : slots) {
    if (s)
      out.rows.push_back(*s);
    else
      ++out.skipped;
  }
  out.evaluated = static_cast<int>(out.rows.size());
  if (out.rows.empty())
    throw AllPointsSingular("run_sweep: every grid point was skipped");
  return out;
}

inline void write_sweep_csv(std::ostream& os, const SweepResult& res) {
  os << "kappa,eps1,duan_sum,var_plus,var_minus,nbar,delta_I,fraction,entangled,regime\n";
  for (const auto& r : res.rows) {
    os << fmt17(r.kappa) << ',' << fmt17(r.eps1) << ',' << fmt17(r.duan_sum)
       << ',' << fmt17(r.var_plus) << ',' << fmt17(r.var_minus) << ','
       << fmt17(r.nbar) << ',' << fmt17(r.delta_I) << ',' << fmt17(r.fraction)
       << ',' << (r.entangled ? '1' : '0') << ',' << model::to_string(r.regime)
       << '\n';
  }
}

// ---------------------------------------------------------------------------
// figures

struct FigureOptions {
  std::vector<double> kappas{0.1, 0.3, 0.5};
  double lambda_c = 0.5;
  int points = 200;
  double min_ratio = 0.3;
  double max_ratio = 3.0;
  double guard = model::kDefaultGuard;
};

struct FigureData {
  int figure = 0;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  std::vector<std::string> notes;
  int skipped = 0;
};

/// Reproduce one of the four standard curves:
///   1: pair-variance sum vs eps1 (reduced form), one curve per kappa
///   2: squeezed pump variance vs eps1 (reduced form)
///   3: combined-mode mean photon number vs eps1 (general closed form plus an
///      oracle-backed column: coherent part + moment-oracle noise)
///   4: intensity difference vs eps1 (reduced form)
inline FigureData reproduce_figure(int n, const FigureOptions& opt = {}) {
  if (n < 1 || n > 4)
    throw std::invalid_argument("reproduce_figure: figure index must be 1..4");
  if (opt.points < 2)
    throw std::invalid_argument("reproduce_figure: need at least 2 points");
  FigureData fd;
  fd.figure = n;
  switch (n) {
    case 1: fd.columns = {"kappa", "eps1", "duan_sum"}; break;
    case 2: fd.columns = {"kappa", "eps1", "var_minus"}; break;
    case 3: fd.columns = {"kappa", "eps1", "nbar", "nbar_oracle"}; break;
    case 4: fd.columns = {"kappa", "eps1", "delta_I"}; break;
  }
  {
    std::ostringstream note;
    note << "figure " << n << ": ";
    switch (n) {
      case 1: note << "pair-variance sum vs eps1 (reduced closed form)"; break;
      case 2: note << "squeezed pump variance vs eps1 (reduced closed form)"; break;
      case 3:
        note << "combined-mode mean photon number vs eps1 "
                "(nbar: general closed form; nbar_oracle: coherent part + "
                "moment-oracle noise)";
        break;
      case 4: note << "intensity difference vs eps1 (reduced closed form)"; break;
    }
    fd.notes.push_back(note.str());
  }
  {
    std::ostringstream note;
    note << "kappa in {";
    for (size_t i = 0; i < opt.kappas.size(); ++i)
      note << (i ? "," : "") << detail::fmt6(opt.kappas[i]);
    note << "}; eps1/kappa in [" << detail::fmt6(opt.min_ratio) << ", "
         << detail::fmt6(opt.max_ratio) << "], " << opt.points
         << " points per curve";
    if (n >= 3) note << "; lambda_c = " << detail::fmt6(opt.lambda_c);
    fd.notes.push_back(note.str());
  }

  std::vector<double> kappas = opt.kappas;
  std::sort(kappas.begin(), kappas.end());
  for (double k : kappas) {
    for (int i = 0; i < opt.points; ++i) {
      const double ratio = opt.min_ratio + (opt.max_ratio - opt.min_ratio) * i /
                                               (opt.points - 1);
      const double e1 = ratio * k;
      try {
        const WorkingPoint wp =
            model::working_point_at_eps1(k, opt.lambda_c, e1);
        switch (n) {
          case 1:
            fd.rows.push_back(
                {k, e1, closedform::duan_sum(wp, Form::Reduced, opt.guard)});
            break;
          case 2:
            fd.rows.push_back(
                {k, e1,
                 closedform::quadrature_variances(wp, Form::Reduced, opt.guard)
                     .second});
            break;
          case 3: {
            const double closed =
                closedform::mean_photon_number(wp, Form::General, opt.guard);
            const auto ms = oracle::steady_moments(wp, opt.guard);
            const auto obs = oracle::observables_from_moments(wp, ms);
            fd.rows.push_back({k, e1, closed, obs.mean_photon});
            break;
          }
          case 4:
            fd.rows.push_back(
                {k, e1,
                 closedform::intensity_difference(wp, Form::Reduced, opt.guard)});
            break;
        }
      } catch (const Error&) {
        ++fd.skipped;
      }
    }
  }
  if (fd.rows.empty())
    throw AllPointsSingular("reproduce_figure: every grid point was skipped");
  return fd;
}

inline void write_figure_csv(std::ostream& os, const FigureData& fd) {
  for (const auto& note : fd.notes) os << "# " << note << '\n';
  if (fd.skipped > 0) os << "# skipped " << fd.skipped << " guard-band points\n";
  for (size_t i = 0; i < fd.columns.size(); ++i)
    os << (i ? "," : "") << fd.columns[i];
  os << '\n';
  for (const auto& row : fd.rows) {
    for (size_t i = 0; i < row.size(); ++i)
      os << (i ? "," : "") << fmt17(row[i]);
    os << '\n';
  }
}

// ---------------------------------------------------------------------------
// searches

struct OptimumResult {
  double eps1_star;
  double var_minus_star;
  double squeezing;
};

namespace detail {

inline double reduced_var_minus_at_ratio(double kappa, double lambda_c,
                                         double ratio, double guard) {
  const WorkingPoint wp =
      model::working_point_at_eps1(kappa, lambda_c, ratio * kappa);
  return closedform::quadrature_variances(wp, Form::Reduced, guard).second;
}

inline double reduced_duan_at_ratio(double kappa, double ratio, double guard) {
  // lambda_c only rescales the coherent amplitudes; the pair-variance sum
  // depends on (eps1, kappa) alone.
  const WorkingPoint wp = model::working_point_at_eps1(kappa, 1.0, ratio * kappa);
  return closedform::duan_sum(wp, Form::Reduced, guard);
}

}  // namespace detail

/// Locate the squeezing optimum of the reduced pump variance on
/// eps1 in [0.3 kappa, 5 kappa]: coarse scan, then golden-section refinement
/// to |delta eps1| < 1e-8 kappa.
inline OptimumResult find_optimal_squeezing(double kappa, double lambda_c,
                                            double guard = model::kDefaultGuard) {
  if (!(std::isfinite(kappa) && kappa > 0.0) ||
      !(std::isfinite(lambda_c) && lambda_c > 0.0))
    throw std::invalid_argument("find_optimal_squeezing: bad kappa or lambda_c");
  constexpr int kScan = 211;
  constexpr double kLo = 0.3, kHi = 5.0;
  std::vector<std::pair<double, double>> valid;  // (ratio, var_minus)
  valid.reserve(kScan);
  for (int i = 0; i < kScan; ++i) {
    const double x = kLo + (kHi - kLo) * i / (kScan - 1);
    try {
      valid.emplace_back(
          x, detail::reduced_var_minus_at_ratio(kappa, lambda_c, x, guard));
    } catch (const Error&) {
    }
  }
  if (valid.empty())
    throw BracketSingular("find_optimal_squeezing: bracket is entirely singular");
  size_t best = 0;
  for (size_t i = 1; i < valid.size(); ++i)
    if (valid[i].second < valid[best].second) best = i;
  double lo = valid[best > 0 ? best - 1 : best].first;
  double hi = valid[best + 1 < valid.size() ? best + 1 : best].first;
  if (!(lo < hi))
    throw BracketSingular("find_optimal_squeezing: cannot bracket the minimum");

  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  auto f = [&](double x) {
    return detail::reduced_var_minus_at_ratio(kappa, lambda_c, x, guard);
  };
  double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
  double f1 = f(x1), f2 = f(x2);
  while (hi - lo > 1e-8) {
    if (f1 < f2) {
      hi = x2; x2 = x1; f2 = f1;
      x1 = hi - gr * (hi - lo); f1 = f(x1);
    } else {
      lo = x1; x1 = x2; f1 = f2;
      x2 = lo + gr * (hi - lo); f2 = f(x2);
    }
  }
  const double xm = 0.5 * (lo + hi);
  const double vm = f(xm);
  return {xm * kappa, vm, squeezing_percent(vm)};
}

/// Rightmost descending crossing of the reduced pair-variance sum through 2
/// on eps1 in [0.3 kappa, 5 kappa], bisected to |delta eps1| < 1e-8 kappa.
/// The curve also crosses 2 ascending near the left edge; the quoted
/// entanglement boundary is the descending one.
inline double find_entanglement_boundary(double kappa,
                                         double guard = model::kDefaultGuard) {
  if (!(std::isfinite(kappa) && kappa > 0.0))
    throw std::invalid_argument("find_entanglement_boundary: bad kappa");
  constexpr int kScan = 471;
  constexpr double kLo = 0.3, kHi = 5.0;
  std::vector<std::pair<double, double>> valid;
  valid.reserve(kScan);
  for (int i = 0; i < kScan; ++i) {
    const double x = kLo + (kHi - kLo) * i / (kScan - 1);
    try {
      valid.emplace_back(x, detail::reduced_duan_at_ratio(kappa, x, guard));
    } catch (const Error&) {
    }
  }
  for (size_t i = valid.size(); i-- > 1;) {
    const auto& [xr, fr] = valid[i];
    const auto& [xl, fl] = valid[i - 1];
    if (fl > 2.0 && fr < 2.0) {
      double lo = xl, hi = xr;
      while (hi - lo > 1e-8) {
        const double mid = 0.5 * (lo + hi);
        if (detail::reduced_duan_at_ratio(kappa, mid, guard) > 2.0)
          lo = mid;
        else
          hi = mid;
      }
      return 0.5 * (lo + hi) * kappa;
    }
  }
  throw NoCrossing("find_entanglement_boundary: no descending crossing of 2 in [0.3, 5] kappa");
}

// ---------------------------------------------------------------------------
// validation

struct PipelineValues {
  std::optional<double> closed_general;
  std::optional<double> closed_reduced;
  std::optional<double> oracle_value;
  double abs_diff = 0.0;
  double rel_diff = 0.0;
};

struct PointRecord {
  double kappa = 0.0, eps1 = 0.0;
  std::vector<std::pair<std::string, PipelineValues>> observables;
};

struct Flag {
  std::string id;
  std::string region;
  double magnitude = 0.0;
  double ratio_lo = 0.0, ratio_hi = 0.0;
  int count = 0;
};

struct Offender {
  double kappa = 0.0, eps1 = 0.0;
  std::string observable;
  std::string pair;
  double rel_diff = 0.0;
};

struct ValidationReport {
  SweepSpec spec;
  std::vector<PointRecord> points;
  std::vector<Offender> worst_offenders;
  std::vector<Flag> flags;
  int evaluated = 0;
  int skipped = 0;
};

inline constexpr double kFlagRelTol = 1e-6;

namespace detail {

struct RawPoint {
  double kappa = 0.0, eps1 = 0.0;
  bool any = false;
  std::array<PipelineValues, 5> vals;  // indexed like known_observables()
};

/// All three pipelines at one working point; absent values mean the pipeline
/// was singular, unstable or out of its domain there.
inline RawPoint evaluate_point(double kappa, double lambda_c, double eps1,
                               double guard) {
  RawPoint rp;
  rp.kappa = kappa;
  rp.eps1 = eps1;
  WorkingPoint wp = model::working_point_at_eps1(kappa, lambda_c, eps1);

  auto set = [&](int idx, int pipe, double v) {
    auto& pv = rp.vals[idx];
    (pipe == 0   ? pv.closed_general
     : pipe == 1 ? pv.closed_reduced
                 : pv.oracle_value) = v;
    rp.any = true;
  };
  for (int pipe = 0; pipe < 2; ++pipe) {
    const Form form = pipe == 0 ? Form::General : Form::Reduced;
    try { set(0, pipe, closedform::duan_sum(wp, form, guard)); } catch (const Error&) {}
    try {
      const auto [vp, vm] = closedform::quadrature_variances(wp, form, guard);
      set(1, pipe, vp);
      set(2, pipe, vm);
    } catch (const Error&) {}
    try { set(3, pipe, closedform::mean_photon_number(wp, form, guard)); } catch (const Error&) {}
    try { set(4, pipe, closedform::intensity_difference(wp, form, guard)); } catch (const Error&) {}
  }
  try {
    const auto ms = oracle::steady_moments(wp, guard);
    const auto obs = oracle::observables_from_moments(wp, ms);
    set(0, 2, obs.duan_sum);
    set(1, 2, obs.var_plus);
    set(2, 2, obs.var_minus);
    set(3, 2, obs.mean_photon);
    set(4, 2, obs.intensity_diff);
  } catch (const Error&) {}
  return rp;
}

struct FlagAccumulator {
  double lo = 0.0, hi = 0.0, mag = 0.0;
  int count = 0;
  void add(double ratio, double magnitude) {
    if (count == 0) {
      lo = hi = ratio;
    } else {
      lo = std::min(lo, ratio);
      hi = std::max(hi, ratio);
    }
    mag = std::max(mag, magnitude);
    ++count;
  }
};

inline Flag finish_flag(const std::string& id, const FlagAccumulator& acc,
                        const char* extra = nullptr) {
  Flag f;
  f.id = id;
  f.magnitude = acc.mag;
  f.ratio_lo = acc.lo;
  f.ratio_hi = acc.hi;
  f.count = acc.count;
  std::ostringstream os;
  os << "eps1/kappa in [" << fmt6(acc.lo) << ", " << fmt6(acc.hi) << "] ("
     << acc.count << " points)";
  if (extra) os << "; " << extra;
  f.region = os.str();
  return f;
}

}  // namespace detail

/// Cross-check the closed-form pipelines against the moment oracle on the
/// grid. Any pair of pipelines differing by more than 1e-6 relative raises a
/// flag; nothing is suppressed or repaired. Observables can be restricted via
/// spec.observables.
inline ValidationReport validate(const SweepSpec& spec, int threads = 1) {
  validate_spec(spec);
  std::vector<double> kappas = spec.kappa_values;
  std::sort(kappas.begin(), kappas.end());
  const std::vector<double> eps1s = grid_points(spec.eps1_grid);

  struct Task {
    double kappa, eps1;
  };
  std::vector<Task> tasks;
  for (double k : kappas)
    for (double e1 : eps1s) tasks.push_back({k, e1});

  std::vector<detail::RawPoint> raw(tasks.size());
  detail::parallel_for(tasks.size(), threads, [&](size_t i) {
    raw[i] = detail::evaluate_point(tasks[i].kappa, spec.lambda_c,
                                    tasks[i].eps1, spec.guard);
  });

  ValidationReport rep;
  rep.spec = spec;

  const auto& names = known_observables();
  std::vector<bool> selected(names.size());
  for (size_t i = 0; i < names.size(); ++i)
    selected[i] = std::find(spec.observables.begin(), spec.observables.end(),
                            names[i]) != spec.observables.end();

  std::map<std::string, detail::FlagAccumulator> acc;
  std::vector<Offender> offenders;

  for (const auto& rp : raw) {
    if (!rp.any) {
      ++rep.skipped;
      continue;
    }
    PointRecord pr;
    pr.kappa = rp.kappa;
    pr.eps1 = rp.eps1;
    const double ratio = rp.eps1 / rp.kappa;
    for (size_t oi = 0; oi < names.size(); ++oi) {
      if (!selected[oi]) continue;
      PipelineValues pv = rp.vals[oi];
      struct Pair {
        const char* name;
        const std::optional<double>*a, *b;
      };
      const Pair pairs[] = {
          {"general_vs_reduced", &pv.closed_general, &pv.closed_reduced},
          {"general_vs_oracle", &pv.closed_general, &pv.oracle_value},
          {"reduced_vs_oracle", &pv.closed_reduced, &pv.oracle_value},
      };
      for (const auto& p : pairs) {
        if (!p.a->has_value() || !p.b->has_value()) continue;
        const double rd = detail::rel_diff(**p.a, **p.b);
        const double ad = std::abs(**p.a - **p.b);
        if (rd > pv.rel_diff) {
          pv.rel_diff = rd;
          pv.abs_diff = ad;
        }
        if (rd > kFlagRelTol) {
          acc[names[oi] + "_" + p.name].add(ratio, rd);
          offenders.push_back({rp.kappa, rp.eps1, names[oi], p.name, rd});
        }
      }
      pr.observables.emplace_back(names[oi], pv);
    }
    rep.points.push_back(std::move(pr));
    ++rep.evaluated;
  }
  if (rep.points.empty())
    throw AllPointsSingular("validate: every grid point was skipped");

  // Specialized diagnoses on top of the generic pairwise flags.
  detail::FlagAccumulator coh, pole, isign;
  for (const auto& rp : raw) {
    if (!rp.any) continue;
    const double k = rp.kappa, e1 = std::abs(rp.eps1), lam = spec.lambda_c;
    const double ratio = e1 / k;
    const auto& nbar = rp.vals[3];
    if (nbar.closed_reduced && nbar.closed_general) {
      // coherent parts of the two mean-photon forms disagree term-by-term
      const WorkingPoint wp = model::working_point_at_eps1(k, lam, rp.eps1);
      const double coh_general =
          0.5 * (std::abs(wp.alpha) + wp.beta) * (std::abs(wp.alpha) + wp.beta);
      const double coh_reduced =
          ((2.0 * e1 - k) * (2.0 * e1 - k) - 4.0 * lam * lam) /
          (8.0 * lam * lam);
      const double d = std::abs(coh_general - coh_reduced);
      if (d > kFlagRelTol * std::max(1.0, std::abs(coh_general)))
        coh.add(ratio, d);
    }
    const auto& duan = rp.vals[0];
    if (duan.closed_reduced && duan.oracle_value &&
        std::abs(k * k - 16.0 * e1 * e1) < 0.5 * k * k) {
      // the reduced form blows up approaching eps1 = kappa/4 while the oracle
      // stays O(1); detect by absolute departure, relative is bounded by 2
      const double ad = std::abs(*duan.closed_reduced - *duan.oracle_value);
      if (ad > 5.0 * std::max(1.0, std::abs(*duan.oracle_value)))
        pole.add(ratio, ad);
    }
    const auto& di = rp.vals[4];
    if (di.closed_general && di.oracle_value) {
      const WorkingPoint wp = model::working_point_at_eps1(k, lam, rp.eps1);
      const double coherent = wp.alpha * wp.alpha - wp.beta * wp.beta;
      const double ng = *di.closed_general - coherent;
      const double no = *di.oracle_value - coherent;
      if (std::abs(ng) > 0.0 &&
          std::abs(ng + no) <= 1e-6 * std::max(std::abs(ng), std::abs(no)))
        isign.add(ratio, std::abs(ng - no));
    }
  }
  if (coh.count > 0)
    rep.flags.push_back(detail::finish_flag(
        "mean_photon_coherent_term", coh,
        "reduced coherent term disagrees with (alpha+beta)^2/2"));
  if (pole.count > 0)
    rep.flags.push_back(detail::finish_flag(
        "reduced_duan_pole_quarter_ratio", pole,
        "reduced form diverges near eps1 = kappa/4, oracle stays finite"));
  if (isign.count > 0)
    rep.flags.push_back(detail::finish_flag(
        "intensity_noise_sign", isign,
        "closed-form noise part has the opposite sign of the oracle's"));
  try {
    // transient pump-mean start value: closed form gives 2*beta, oracle 0
    const WorkingPoint wp =
        model::working_point_at_eps1(kappas.front(), spec.lambda_c, eps1s.front());
    const double closed_b0 = closedform::mean_fields(wp, 0.0, spec.guard).second;
    const double oracle_b0 = wp.beta + oracle::vacuum_state(wp).m(2);
    if (wp.beta > 0.0 &&
        std::abs(closed_b0 - oracle_b0) > kFlagRelTol * wp.beta) {
      Flag f;
      f.id = "mean_b_transient_start";
      f.magnitude = std::abs(closed_b0 - oracle_b0) / wp.beta;
      f.count = 1;
      f.region = "t = 0, vacuum start (every working point)";
      rep.flags.push_back(std::move(f));
    }
  } catch (const Error&) {
  }
  for (auto& [id, a] : acc) rep.flags.push_back(detail::finish_flag(id, a));
  std::sort(rep.flags.begin(), rep.flags.end(),
            [](const Flag& a, const Flag& b) { return a.id < b.id; });

  std::sort(offenders.begin(), offenders.end(),
            [](const Offender& a, const Offender& b) {
              if (a.rel_diff != b.rel_diff) return a.rel_diff > b.rel_diff;
              if (a.kappa != b.kappa) return a.kappa < b.kappa;
              if (a.eps1 != b.eps1) return a.eps1 < b.eps1;
              if (a.observable != b.observable) return a.observable < b.observable;
              return a.pair < b.pair;
            });
  if (offenders.size() > 10) offenders.resize(10);
  rep.worst_offenders = std::move(offenders);
  return rep;
}

// ---------------------------------------------------------------------------
// JSON (config mirror of SweepSpec, report serialization)

inline SweepSpec spec_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> allowed{
      "kappa_values", "lambda_c", "eps1_grid", "guard", "forms", "observables"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      throw std::invalid_argument("config: unknown key '" + it.key() + "'");

  SweepSpec s;
  s.kappa_values = j.at("kappa_values").get<std::vector<double>>();
  if (j.contains("lambda_c")) s.lambda_c = j.at("lambda_c").get<double>();
  const auto& g = j.at("eps1_grid");
  static const std::vector<std::string> gallowed{"start", "stop", "count",
                                                 "spacing"};
  for (auto it = g.begin(); it != g.end(); ++it)
    if (std::find(gallowed.begin(), gallowed.end(), it.key()) == gallowed.end())
      throw std::invalid_argument("config: unknown eps1_grid key '" + it.key() + "'");
  s.eps1_grid.start = g.at("start").get<double>();
  s.eps1_grid.stop = g.at("stop").get<double>();
  s.eps1_grid.count = g.at("count").get<int>();
  if (g.contains("spacing")) {
    const auto sp = g.at("spacing").get<std::string>();
    if (sp == "linear")
      s.eps1_grid.spacing = Spacing::Linear;
    else if (sp == "log")
      s.eps1_grid.spacing = Spacing::Log;
    else
      throw std::invalid_argument("config: spacing must be 'linear' or 'log'");
  }
  if (j.contains("guard")) s.guard = j.at("guard").get<double>();
  if (j.contains("forms")) {
    s.forms.clear();
    for (const auto& f : j.at("forms")) {
      const auto name = f.get<std::string>();
      if (name == "general")
        s.forms.push_back(Form::General);
      else if (name == "reduced")
        s.forms.push_back(Form::Reduced);
      else
        throw std::invalid_argument("config: form must be 'general' or 'reduced'");
    }
  }
  if (j.contains("observables"))
    s.observables = j.at("observables").get<std::vector<std::string>>();
  validate_spec(s);
  return s;
}

inline nlohmann::ordered_json spec_to_json(const SweepSpec& s) {
  nlohmann::ordered_json j;
  j["kappa_values"] = s.kappa_values;
  j["lambda_c"] = s.lambda_c;
  j["eps1_grid"] = {{"start", s.eps1_grid.start},
                    {"stop", s.eps1_grid.stop},
                    {"count", s.eps1_grid.count},
                    {"spacing", s.eps1_grid.spacing == Spacing::Linear
                                    ? "linear"
                                    : "log"}};
  j["guard"] = s.guard;
  nlohmann::ordered_json forms = nlohmann::ordered_json::array();
  for (auto f : s.forms) forms.push_back(closedform::to_string(f));
  j["forms"] = forms;
  j["observables"] = s.observables;
  return j;
}

inline nlohmann::ordered_json report_to_json(const ValidationReport& rep) {
  nlohmann::ordered_json j;
  j["grid"] = spec_to_json(rep.spec);
  j["grid"]["evaluated"] = rep.evaluated;
  j["grid"]["skipped"] = rep.skipped;

  auto opt = [](const std::optional<double>& v) -> nlohmann::ordered_json {
    if (v) return *v;
    return nullptr;
  };
  nlohmann::ordered_json pts = nlohmann::ordered_json::array();
  for (const auto& p : rep.points) {
    nlohmann::ordered_json jp;
    jp["kappa"] = p.kappa;
    jp["eps1"] = p.eps1;
    nlohmann::ordered_json obs;
    for (const auto& [name, pv] : p.observables) {
      obs[name] = {{"closed_general", opt(pv.closed_general)},
                   {"closed_reduced", opt(pv.closed_reduced)},
                   {"oracle_value", opt(pv.oracle_value)},
                   {"abs_diff", pv.abs_diff},
                   {"rel_diff", pv.rel_diff}};
    }
    jp["observables"] = std::move(obs);
    pts.push_back(std::move(jp));
  }
  j["points"] = std::move(pts);

  nlohmann::ordered_json wo = nlohmann::ordered_json::array();
  for (const auto& o : rep.worst_offenders)
    wo.push_back({{"kappa", o.kappa},
                  {"eps1", o.eps1},
                  {"observable", o.observable},
                  {"pair", o.pair},
                  {"rel_diff", o.rel_diff}});
  j["worst_offenders"] = std::move(wo);

  nlohmann::ordered_json fl = nlohmann::ordered_json::array();
  for (const auto& f : rep.flags)
    fl.push_back({{"id", f.id}, {"region", f.region}, {"magnitude", f.magnitude}});
  j["flags"] = std::move(fl);
  return j;
}

}  // namespace dpo::harness
