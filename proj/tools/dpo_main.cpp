// Command-line front end for the dpo library.
//
// Exit codes: 0 success, 2 usage/config error, 3 domain error (singular,
// unstable, no crossing, ...), 4 I/O error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dpo/dpo.hpp"

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitDomain = 3;
constexpr int kExitIo = 4;

/// Stream that is either stdout or a freshly opened file.
struct OutStream {
  std::ofstream file;
  bool use_file = false;
  std::ostream& stream() { return use_file ? file : std::cout; }
};

OutStream open_out(const std::string& path) {
  OutStream o;
  if (!path.empty()) {
    o.file.open(path);
    if (!o.file) throw std::ios_base::failure("cannot open output file: " + path);
    o.use_file = true;
  }
  return o;
}

nlohmann::json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot open config file: " + path);
  nlohmann::json j;
  in >> j;
  return j;
}

std::string f17(double v) { return dpo::harness::fmt17(v); }

struct SteadyArgs {
  double kappa = 1.0, lambda_c = 0.5;
  std::optional<double> drive, eps1;
  int branch = 1;
  std::string form = "general";
  double guard = dpo::model::kDefaultGuard;
  bool json = false;
};

int run_steady(const SteadyArgs& a) {
  if (a.drive.has_value() == a.eps1.has_value())
    throw std::invalid_argument("steady: give exactly one of --drive or --eps1");
  dpo::model::WorkingPoint wp =
      a.eps1 ? dpo::model::working_point_at_eps1(a.kappa, a.lambda_c, *a.eps1)
             : dpo::model::solve_steady_state(
                   dpo::model::SystemParams(a.kappa, a.lambda_c, *a.drive),
                   a.branch);
  const dpo::closedform::Form form = a.form == "reduced"
                                         ? dpo::closedform::Form::Reduced
                                         : dpo::closedform::Form::General;

  std::optional<dpo::harness::SweepRow> closed;
  std::string closed_error;
  try {
    closed = dpo::harness::evaluate_row(wp, form, a.guard);
  } catch (const dpo::Error& e) {
    closed_error = e.what();
  }
  std::optional<dpo::Observables> orc;
  std::string oracle_error;
  try {
    const auto ms = dpo::oracle::steady_moments(wp, a.guard);
    orc = dpo::oracle::observables_from_moments(wp, ms);
  } catch (const dpo::Error& e) {
    oracle_error = e.what();
  }
  if (!closed && !orc) throw dpo::SingularRegime(closed_error + "; " + oracle_error);

  const auto spectrum = dpo::oracle::stability_spectrum(wp);
  const double max_re = spectrum[0].real();

  if (a.json) {
    nlohmann::ordered_json j;
    j["params"] = {{"kappa", wp.params.kappa},
                   {"lambda_c", wp.params.lambda_c},
                   {"drive", wp.params.epsilon_d}};
    j["threshold_drive"] = dpo::model::threshold_drive(wp.params);
    j["regime"] = dpo::model::to_string(wp.regime);
    j["branch"] = wp.branch;
    j["alpha"] = wp.alpha;
    j["beta"] = wp.beta;
    j["eps1"] = wp.eps1;
    j["eps2"] = wp.eps2;
    j["fraction"] = dpo::model::down_conversion_fraction(wp);
    j["max_re_eigenvalue"] = max_re;
    if (closed) {
      j["closed"] = {{"form", dpo::closedform::to_string(form)},
                     {"duan_sum", closed->duan_sum},
                     {"var_plus", closed->var_plus},
                     {"var_minus", closed->var_minus},
                     {"nbar", closed->nbar},
                     {"delta_I", closed->delta_I},
                     {"entangled", closed->entangled}};
    } else {
      j["closed"] = {{"error", closed_error}};
    }
    if (orc) {
      j["oracle"] = {{"duan_sum", orc->duan_sum},
                     {"var_plus", orc->var_plus},
                     {"var_minus", orc->var_minus},
                     {"nbar", orc->mean_photon},
                     {"delta_I", orc->intensity_diff},
                     {"mean_a", orc->mean_a},
                     {"mean_b", orc->mean_b},
                     {"entangled", orc->entangled}};
    } else {
      j["oracle"] = {{"error", oracle_error}};
    }
    std::cout << j.dump(2) << '\n';
    return 0;
  }

  std::printf("working point (kappa=%g, lambda_c=%g, drive=%g)\n",
              wp.params.kappa, wp.params.lambda_c, wp.params.epsilon_d);
  std::printf("  regime          %s (threshold drive %.10g)\n",
              dpo::model::to_string(wp.regime), dpo::model::threshold_drive(wp.params));
  std::printf("  alpha, beta     %.10g, %.10g  (branch %+d)\n", wp.alpha,
              wp.beta, wp.branch);
  std::printf("  eps1, eps2      %.10g, %.10g\n", wp.eps1, wp.eps2);
  std::printf("  fraction        %.10g\n", dpo::model::down_conversion_fraction(wp));
  std::printf("  max Re eig      %.10g\n", max_re);
  if (closed) {
    std::printf("closed form (%s)\n", dpo::closedform::to_string(form));
    std::printf("  duan_sum        %.10g  (%sentangled)\n", closed->duan_sum,
                closed->entangled ? "" : "not ");
    std::printf("  var_plus        %.10g\n", closed->var_plus);
    std::printf("  var_minus       %.10g\n", closed->var_minus);
    std::printf("  nbar            %.10g\n", closed->nbar);
    std::printf("  delta_I         %.10g\n", closed->delta_I);
  } else {
    std::printf("closed form (%s): unavailable (%s)\n",
                dpo::closedform::to_string(form), closed_error.c_str());
  }
  if (orc) {
    std::printf("moment oracle\n");
    std::printf("  duan_sum        %.10g  (%sentangled)\n", orc->duan_sum,
                orc->entangled ? "" : "not ");
    std::printf("  var_plus        %.10g\n", orc->var_plus);
    std::printf("  var_minus       %.10g\n", orc->var_minus);
    std::printf("  nbar            %.10g\n", orc->mean_photon);
    std::printf("  delta_I         %.10g\n", orc->intensity_diff);
    std::printf("  mean_a, mean_b  %.10g, %.10g\n", orc->mean_a, orc->mean_b);
  } else {
    std::printf("moment oracle: unavailable (%s)\n", oracle_error.c_str());
  }
  return 0;
}

struct GridArgs {
  std::string config;
  std::vector<double> kappas;
  double lambda_c = 0.5;
  double start = 0.0, stop = 0.0;
  int count = 0;
  bool log_spacing = false;
  double guard = dpo::model::kDefaultGuard;
  std::string form = "general";
  int threads = 1;
  std::string out;
};

dpo::harness::SweepSpec spec_from_args(const GridArgs& g) {
  if (!g.config.empty()) return dpo::harness::spec_from_json(load_json(g.config));
  dpo::harness::SweepSpec s;
  s.kappa_values = g.kappas.empty() ? std::vector<double>{1.0} : g.kappas;
  s.lambda_c = g.lambda_c;
  s.eps1_grid = {g.start, g.stop, g.count,
                 g.log_spacing ? dpo::harness::Spacing::Log
                               : dpo::harness::Spacing::Linear};
  s.guard = g.guard;
  s.forms = {g.form == "reduced" ? dpo::closedform::Form::Reduced
                                 : dpo::closedform::Form::General};
  dpo::harness::validate_spec(s);
  return s;
}

int run_sweep_cmd(const GridArgs& g) {
  const auto spec = spec_from_args(g);
  const auto res = dpo::harness::run_sweep(spec, g.threads);
  auto out = open_out(g.out);
  dpo::harness::write_sweep_csv(out.stream(), res);
  if (res.skipped > 0)
    std::cerr << "sweep: skipped " << res.skipped << " guard-band points ("
              << res.evaluated << " evaluated)\n";
  return 0;
}

int run_validate_cmd(const GridArgs& g, bool pretty) {
  if (g.config.empty() && g.count == 0)
    throw std::invalid_argument("validate: give --config or an inline grid");
  const auto spec = spec_from_args(g);
  const auto rep = dpo::harness::validate(spec, g.threads);
  auto out = open_out(g.out);
  out.stream() << dpo::harness::report_to_json(rep).dump(pretty ? 2 : -1) << '\n';
  std::cerr << "validate: " << rep.evaluated << " points evaluated, "
            << rep.skipped << " skipped, " << rep.flags.size()
            << " flags raised\n";
  return 0;
}

struct FigureArgs {
  int figure = 1;
  dpo::harness::FigureOptions opt;
  std::string out;
};

int run_figure_cmd(const FigureArgs& a) {
  const auto fd = dpo::harness::reproduce_figure(a.figure, a.opt);
  auto out = open_out(a.out);
  dpo::harness::write_figure_csv(out.stream(), fd);
  return 0;
}

int run_optimum_cmd(double kappa, double lambda_c, double guard, bool json) {
  const auto r = dpo::harness::find_optimal_squeezing(kappa, lambda_c, guard);
  if (json) {
    nlohmann::ordered_json j{{"kappa", kappa},
                             {"eps1_star", r.eps1_star},
                             {"eps1_star_over_kappa", r.eps1_star / kappa},
                             {"var_minus_star", r.var_minus_star},
                             {"squeezing_percent", r.squeezing}};
    std::cout << j.dump(2) << '\n';
  } else {
    std::printf("optimal pump squeezing (kappa=%g)\n", kappa);
    std::printf("  eps1*           %.10g  (%.10g kappa)\n", r.eps1_star,
                r.eps1_star / kappa);
    std::printf("  var_minus*      %.10g\n", r.var_minus_star);
    std::printf("  squeezing       %.6f %%\n", r.squeezing);
  }
  return 0;
}

int run_boundary_cmd(double kappa, double guard, bool json) {
  const double e1 = dpo::harness::find_entanglement_boundary(kappa, guard);
  if (json) {
    nlohmann::ordered_json j{{"kappa", kappa},
                             {"eps1_boundary", e1},
                             {"eps1_boundary_over_kappa", e1 / kappa}};
    std::cout << j.dump(2) << '\n';
  } else {
    std::printf("entanglement boundary (kappa=%g)\n", kappa);
    std::printf("  eps1            %.10g  (%.10g kappa)\n", e1, e1 / kappa);
  }
  return 0;
}

struct TransientArgs {
  double kappa = 1.0, lambda_c = 0.5;
  std::optional<double> drive, eps1, dt;
  int branch = 1;
  double t_final = 5.0;
  int steps = 200;
  double guard = dpo::model::kDefaultGuard;
  std::string out;
};

int run_transient_cmd(const TransientArgs& a) {
  if (a.drive.has_value() == a.eps1.has_value())
    throw std::invalid_argument("transient: give exactly one of --drive or --eps1");
  if (!(std::isfinite(a.t_final) && a.t_final > 0.0))
    throw std::invalid_argument("transient: --t-final must be finite and > 0");
  if (a.steps < 1) throw std::invalid_argument("transient: --steps must be >= 1");
  const auto wp =
      a.eps1 ? dpo::model::working_point_at_eps1(a.kappa, a.lambda_c, *a.eps1)
             : dpo::model::solve_steady_state(
                   dpo::model::SystemParams(a.kappa, a.lambda_c, *a.drive),
                   a.branch);
  const double dt = a.dt.value_or(dpo::oracle::kDefaultDtFactor / a.kappa);
  auto out = open_out(a.out);
  std::ostream& os = out.stream();
  os << "# vacuum start; closed-form coefficients vs moment-oracle means\n";
  os << "# a4,a6 hold the imaginary parts of the oscillatory coefficients when "
        "4*eps1^2 > eps2^2\n";
  os << "t,a1,a2,a3,a4,a5,a6,mean_a,mean_b,oracle_mean_a,oracle_mean_b\n";
  dpo::oracle::MomentState cur = dpo::oracle::vacuum_state(wp);
  for (int i = 0; i <= a.steps; ++i) {
    const double t = a.t_final * i / a.steps;
    if (t > cur.t) cur = dpo::oracle::integrate_moments(wp, cur, t, dt);
    const auto tc = dpo::closedform::transient_coeffs(wp, t, a.guard);
    const auto [ma, mb] = dpo::closedform::mean_fields(wp, t, a.guard);
    os << f17(t) << ',' << f17(tc.a1) << ',' << f17(tc.a2) << ',' << f17(tc.a3)
       << ',' << f17(tc.a4) << ',' << f17(tc.a5) << ',' << f17(tc.a6) << ','
       << f17(ma) << ',' << f17(mb) << ',' << f17(wp.alpha + cur.m(0)) << ','
       << f17(wp.beta + cur.m(2)) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"degenerate parametric oscillator steady states, closed-form "
               "observables and a moment-equation oracle"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "dpo 0.1.0");

  SteadyArgs st;
  auto* steady = app.add_subcommand(
      "steady", "solve one working point and print both pipelines");
  steady->add_option("--kappa", st.kappa, "decay rate")->check(CLI::PositiveNumber);
  steady->add_option("--lambda", st.lambda_c, "coupling")->check(CLI::PositiveNumber);
  double drive_v = 0.0, eps1_v = 0.0;
  auto* drive_opt = steady->add_option("--drive", drive_v, "drive amplitude");
  auto* eps1_opt =
      steady->add_option("--eps1", eps1_v, "signal gain eps1 (sets the drive)");
  steady->add_option("--branch", st.branch, "sign branch above threshold")
      ->check(CLI::IsMember({1, -1}));
  steady->add_option("--form", st.form, "closed form to evaluate")
      ->check(CLI::IsMember({"general", "reduced"}));
  steady->add_option("--guard", st.guard, "relative guard band")
      ->check(CLI::PositiveNumber);
  steady->add_flag("--json", st.json, "JSON output");

  GridArgs sw;
  auto* sweep = app.add_subcommand("sweep", "closed-form observable table on a grid (CSV)");
  auto add_grid = [](CLI::App* cmd, GridArgs& g) {
    cmd->add_option("--config", g.config, "JSON sweep spec");
    cmd->add_option("--kappa", g.kappas, "kappa values (inline grid)");
    cmd->add_option("--lambda", g.lambda_c, "coupling")->check(CLI::PositiveNumber);
    cmd->add_option("--start", g.start, "eps1 grid start");
    cmd->add_option("--stop", g.stop, "eps1 grid stop");
    cmd->add_option("--count", g.count, "eps1 grid size");
    cmd->add_flag("--log", g.log_spacing, "log-spaced eps1 grid");
    cmd->add_option("--guard", g.guard, "relative guard band")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--threads", g.threads, "worker threads")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--out", g.out, "output file (default stdout)");
  };
  add_grid(sweep, sw);
  sweep->add_option("--form", sw.form, "closed form to emit")
      ->check(CLI::IsMember({"general", "reduced"}));

  GridArgs va;
  bool pretty = false;
  auto* validate = app.add_subcommand(
      "validate", "cross-check closed forms against the moment oracle (JSON)");
  add_grid(validate, va);
  validate->add_flag("--pretty", pretty, "indent the JSON report");

  FigureArgs fg;
  auto* figure = app.add_subcommand("figure", "reproduce a standard curve (CSV)");
  figure->add_option("--n", fg.figure, "figure index 1..4")->required();
  figure->add_option("--kappas", fg.opt.kappas, "kappa values");
  figure->add_option("--lambda", fg.opt.lambda_c, "coupling")
      ->check(CLI::PositiveNumber);
  figure->add_option("--points", fg.opt.points, "points per curve");
  figure->add_option("--min-ratio", fg.opt.min_ratio, "eps1/kappa lower edge");
  figure->add_option("--max-ratio", fg.opt.max_ratio, "eps1/kappa upper edge");
  figure->add_option("--guard", fg.opt.guard, "relative guard band")
      ->check(CLI::PositiveNumber);
  figure->add_option("--out", fg.out, "output file (default stdout)");

  double opt_kappa = 1.0, opt_lambda = 0.5, opt_guard = dpo::model::kDefaultGuard;
  bool opt_json = false;
  auto* optimum = app.add_subcommand(
      "optimum", "locate the pump-squeezing optimum (reduced form)");
  optimum->add_option("--kappa", opt_kappa, "decay rate")->check(CLI::PositiveNumber);
  optimum->add_option("--lambda", opt_lambda, "coupling")->check(CLI::PositiveNumber);
  optimum->add_option("--guard", opt_guard, "relative guard band")
      ->check(CLI::PositiveNumber);
  optimum->add_flag("--json", opt_json, "JSON output");

  double bnd_kappa = 1.0, bnd_guard = dpo::model::kDefaultGuard;
  bool bnd_json = false;
  auto* boundary = app.add_subcommand(
      "boundary", "locate the pair-variance entanglement boundary (reduced form)");
  boundary->add_option("--kappa", bnd_kappa, "decay rate")->check(CLI::PositiveNumber);
  boundary->add_option("--guard", bnd_guard, "relative guard band")
      ->check(CLI::PositiveNumber);
  boundary->add_flag("--json", bnd_json, "JSON output");

  TransientArgs tr;
  auto* transient = app.add_subcommand(
      "transient", "mean-field relaxation from vacuum, both pipelines (CSV)");
  transient->add_option("--kappa", tr.kappa, "decay rate")->check(CLI::PositiveNumber);
  transient->add_option("--lambda", tr.lambda_c, "coupling")
      ->check(CLI::PositiveNumber);
  double tr_drive = 0.0, tr_eps1 = 0.0, tr_dt = 0.0;
  auto* tr_drive_opt = transient->add_option("--drive", tr_drive, "drive amplitude");
  auto* tr_eps1_opt =
      transient->add_option("--eps1", tr_eps1, "signal gain eps1 (sets the drive)");
  transient->add_option("--branch", tr.branch, "sign branch above threshold")
      ->check(CLI::IsMember({1, -1}));
  transient->add_option("--t-final", tr.t_final, "final time");
  auto* tr_dt_opt = transient->add_option(
      "--dt", tr_dt, "RK4 step (default 0.005/kappa, at most 0.01/kappa)");
  transient->add_option("--steps", tr.steps, "output rows after t=0");
  transient->add_option("--guard", tr.guard, "relative guard band")
      ->check(CLI::PositiveNumber);
  transient->add_option("--out", tr.out, "output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*steady) {
      if (*drive_opt) st.drive = drive_v;
      if (*eps1_opt) st.eps1 = eps1_v;
      return run_steady(st);
    }
    if (*sweep) return run_sweep_cmd(sw);
    if (*validate) return run_validate_cmd(va, pretty);
    if (*figure) return run_figure_cmd(fg);
    if (*optimum) return run_optimum_cmd(opt_kappa, opt_lambda, opt_guard, opt_json);
    if (*boundary) return run_boundary_cmd(bnd_kappa, bnd_guard, bnd_json);
    if (*transient) {
      if (*tr_drive_opt) tr.drive = tr_drive;
      if (*tr_eps1_opt) tr.eps1 = tr_eps1;
      if (*tr_dt_opt) tr.dt = tr_dt;
      return run_transient_cmd(tr);
    }
  } catch (const dpo::StepTooLarge& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const dpo::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDomain;
  } catch (const std::ios_base::failure& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return 0;
}
