#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <json.hpp>

#include "dpo/harness.hpp"

using namespace dpo;
using harness::Eps1Grid;
using harness::Spacing;
using harness::SweepSpec;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

SweepSpec small_spec() {
  SweepSpec s;
  s.kappa_values = {1.0};
  s.lambda_c = 0.5;
  s.eps1_grid = {0.35, 3.0, 28, Spacing::Linear};
  return s;
}

const harness::Flag* find_flag(const harness::ValidationReport& rep,
                               const std::string& id) {
  for (const auto& f : rep.flags)
    if (f.id == id) return &f;
  return nullptr;
}

}  // namespace

TEST_CASE("grid points hit both endpoints exactly") {
  const auto lin = harness::grid_points({0.3, 5.0, 50, Spacing::Linear});
  REQUIRE(lin.size() == 50);
  CHECK(lin.front() == 0.3);
  CHECK(lin.back() == 5.0);
  CHECK_THAT(lin[1] - lin[0], WithinRel((5.0 - 0.3) / 49.0, 1e-12));

  const auto lg = harness::grid_points({1.0, 100.0, 3, Spacing::Log});
  REQUIRE(lg.size() == 3);
  CHECK(lg.front() == 1.0);
  CHECK(lg.back() == 100.0);
  CHECK_THAT(lg[1], WithinRel(10.0, 1e-13));
}

TEST_CASE("spec validation rejects malformed grids") {
  SweepSpec s = small_spec();
  CHECK_NOTHROW(harness::validate_spec(s));

  SweepSpec bad = s;
  bad.kappa_values.clear();
  CHECK_THROWS_AS(harness::validate_spec(bad), std::invalid_argument);

  bad = s;
  bad.kappa_values = {1.0, -0.5};
  CHECK_THROWS_AS(harness::validate_spec(bad), std::invalid_argument);

  bad = s;
  bad.eps1_grid.count = 1;
  CHECK_THROWS_AS(harness::validate_spec(bad), std::invalid_argument);

  bad = s;
  bad.eps1_grid = {2.0, 1.0, 5, Spacing::Linear};
  CHECK_THROWS_AS(harness::validate_spec(bad), std::invalid_argument);

  bad = s;
  bad.eps1_grid = {0.0, 1.0, 5, Spacing::Log};
  CHECK_THROWS_AS(harness::validate_spec(bad), std::invalid_argument);

  bad = s;
  bad.guard = 0.0;
  CHECK_THROWS_AS(harness::validate_spec(bad), std::invalid_argument);

  bad = s;
  bad.observables = {"duan_sum", "does_not_exist"};
  CHECK_THROWS_AS(harness::validate_spec(bad), std::invalid_argument);

  bad = s;
  bad.forms.clear();
  CHECK_THROWS_AS(harness::validate_spec(bad), std::invalid_argument);
}

TEST_CASE("sweep skips guard-band points and sorts its rows") {
  SweepSpec s;
  s.kappa_values = {1.0, 0.5};
  s.lambda_c = 0.5;
  s.eps1_grid = {0.2, 0.3, 3, Spacing::Linear};  // middle point 0.25 is
                                                 // singular for kappa = 1
  const auto res = harness::run_sweep(s);
  CHECK(res.skipped == 1);
  CHECK(res.evaluated == 5);
  REQUIRE(res.rows.size() == 5);
  // kappa ascending, eps1 ascending within each kappa
  CHECK(res.rows[0].kappa == 0.5);
  CHECK(res.rows[2].kappa == 0.5);
  CHECK(res.rows[3].kappa == 1.0);
  CHECK(res.rows[0].eps1 == 0.2);
  CHECK(res.rows[2].eps1 == 0.3);

  // rows agree with a direct evaluation
  const auto wp = model::working_point_at_eps1(1.0, 0.5, 0.3);
  const auto direct = harness::evaluate_row(wp, closedform::Form::General, s.guard);
  CHECK(res.rows[4].duan_sum == direct.duan_sum);
  CHECK(res.rows[4].var_minus == direct.var_minus);
  CHECK(res.rows[4].regime == model::Regime::AboveThreshold);
}

TEST_CASE("sweep CSV format") {
  SweepSpec s = small_spec();
  s.eps1_grid.count = 4;
  const auto res = harness::run_sweep(s);
  std::ostringstream os;
  harness::write_sweep_csv(os, res);
  std::istringstream is(os.str());
  std::string header;
  std::getline(is, header);
  CHECK(header ==
        "kappa,eps1,duan_sum,var_plus,var_minus,nbar,delta_I,fraction,"
        "entangled,regime");
  int rows = 0;
  std::string line;
  while (std::getline(is, line)) {
    ++rows;
    CHECK(line.find("above") != std::string::npos);
  }
  CHECK(rows == 4);
}

TEST_CASE("figure reproduction") {
  harness::FigureOptions opt;
  opt.kappas = {0.3, 1.0};
  opt.points = 9;

  const auto f1 = harness::reproduce_figure(1, opt);
  CHECK(f1.columns == std::vector<std::string>{"kappa", "eps1", "duan_sum"});
  CHECK(f1.rows.size() == 18);
  CHECK_FALSE(f1.notes.empty());
  // curves are tabulated against eps1 proportional to each kappa
  CHECK(f1.rows.front()[0] == 0.3);
  CHECK_THAT(f1.rows.front()[1], WithinRel(0.3 * 0.3, 1e-14));

  const auto f3 = harness::reproduce_figure(3, opt);
  CHECK(f3.columns ==
        std::vector<std::string>{"kappa", "eps1", "nbar", "nbar_oracle"});
  for (const auto& row : f3.rows) {
    REQUIRE(row.size() == 4);
    CHECK(std::isfinite(row[2]));
    CHECK(std::isfinite(row[3]));
  }

  CHECK_THROWS_AS(harness::reproduce_figure(0, opt), std::invalid_argument);
  CHECK_THROWS_AS(harness::reproduce_figure(5, opt), std::invalid_argument);

  std::ostringstream os;
  harness::write_figure_csv(os, f1);
  CHECK(os.str().rfind("# figure 1", 0) == 0);
  CHECK(os.str().find("kappa,eps1,duan_sum\n") != std::string::npos);
}

TEST_CASE("squeezing optimum sits at eps1 = kappa") {
  for (double kappa : {0.3, 1.0}) {
    const auto r = harness::find_optimal_squeezing(kappa, 0.5);
    CHECK_THAT(r.eps1_star, WithinRel(kappa, 1e-6));
    CHECK_THAT(r.var_minus_star, WithinAbs(7.0 / 12.0, 1e-9));
    CHECK_THAT(r.squeezing, WithinAbs(100.0 * 5.0 / 12.0, 1e-6));
  }
  CHECK_THROWS_AS(harness::find_optimal_squeezing(-1.0, 0.5),
                  std::invalid_argument);
}

TEST_CASE("entanglement boundary is scale-free") {
  const double b1 = harness::find_entanglement_boundary(1.0);
  CHECK_THAT(b1, WithinAbs(1.2253232886283213, 2e-8));
  const double b03 = harness::find_entanglement_boundary(0.3);
  CHECK_THAT(b03 / 0.3, WithinAbs(b1 / 1.0, 1e-6));
}

TEST_CASE("validation report structure and generic flags") {
  const auto rep = harness::validate(small_spec());
  CHECK(rep.evaluated == 28);
  CHECK(rep.skipped == 0);
  REQUIRE(rep.points.size() == 28);
  for (const auto& p : rep.points) {
    REQUIRE(p.observables.size() == 5);
    for (const auto& [name, pv] : p.observables) {
      CHECK(pv.closed_general.has_value());
      CHECK(pv.closed_reduced.has_value());
      CHECK(pv.oracle_value.has_value());
    }
  }

  // the pair-variance sum disagrees between all three pipelines
  CHECK(find_flag(rep, "duan_sum_general_vs_oracle") != nullptr);
  CHECK(find_flag(rep, "duan_sum_general_vs_reduced") != nullptr);
  CHECK(find_flag(rep, "duan_sum_reduced_vs_oracle") != nullptr);

  // quadrature variances: the two closed forms agree, both differ from the
  // oracle
  CHECK(find_flag(rep, "var_plus_general_vs_reduced") == nullptr);
  CHECK(find_flag(rep, "var_plus_general_vs_oracle") != nullptr);
  CHECK(find_flag(rep, "var_minus_reduced_vs_oracle") != nullptr);

  const auto* isign = find_flag(rep, "intensity_noise_sign");
  REQUIRE(isign != nullptr);
  CHECK(isign->count == 28);

  const auto* coh = find_flag(rep, "mean_photon_coherent_term");
  REQUIRE(coh != nullptr);
  CHECK(coh->count == 28);

  const auto* mb = find_flag(rep, "mean_b_transient_start");
  REQUIRE(mb != nullptr);
  CHECK_THAT(mb->magnitude, WithinRel(2.0, 1e-9));

  // flags come out sorted by id, offenders by descending mismatch
  for (size_t i = 1; i < rep.flags.size(); ++i)
    CHECK(rep.flags[i - 1].id < rep.flags[i].id);
  REQUIRE(rep.worst_offenders.size() == 10);
  for (size_t i = 1; i < rep.worst_offenders.size(); ++i)
    CHECK(rep.worst_offenders[i - 1].rel_diff >= rep.worst_offenders[i].rel_diff);
}

TEST_CASE("validation flags the reduced-form pole that the oracle lacks") {
  SweepSpec s;
  s.kappa_values = {1.0};
  s.lambda_c = 0.5;
  s.eps1_grid = {0.2505, 0.3005, 2, Spacing::Linear};
  const auto rep = harness::validate(s);
  const auto* pole = find_flag(rep, "reduced_duan_pole_quarter_ratio");
  REQUIRE(pole != nullptr);
  CHECK(pole->magnitude > 100.0);
  CHECK_THAT(pole->ratio_lo, WithinRel(0.2505, 1e-12));
}

TEST_CASE("validation is deterministic across thread counts") {
  SweepSpec s = small_spec();
  s.eps1_grid.count = 12;
  const auto one = harness::report_to_json(harness::validate(s, 1)).dump();
  const auto four = harness::report_to_json(harness::validate(s, 4)).dump();
  CHECK(one == four);
}

TEST_CASE("spec JSON round trip") {
  SweepSpec s;
  s.kappa_values = {0.3, 1.0};
  s.lambda_c = 0.25;
  s.eps1_grid = {0.4, 4.0, 17, Spacing::Log};
  s.guard = 1e-8;
  s.forms = {closedform::Form::Reduced};
  s.observables = {"duan_sum", "var_minus"};

  const auto j = harness::spec_to_json(s);
  const auto back = harness::spec_from_json(nlohmann::json::parse(j.dump()));
  CHECK(back.kappa_values == s.kappa_values);
  CHECK(back.lambda_c == s.lambda_c);
  CHECK(back.eps1_grid.start == s.eps1_grid.start);
  CHECK(back.eps1_grid.stop == s.eps1_grid.stop);
  CHECK(back.eps1_grid.count == s.eps1_grid.count);
  CHECK(back.eps1_grid.spacing == Spacing::Log);
  CHECK(back.guard == s.guard);
  CHECK(back.forms == s.forms);
  CHECK(back.observables == s.observables);
}

TEST_CASE("spec JSON rejects unknown keys and bad enums") {
  using nlohmann::json;
  const char* base = R"({"kappa_values":[1.0],
                         "eps1_grid":{"start":0.3,"stop":3.0,"count":5}})";
  CHECK_NOTHROW(harness::spec_from_json(json::parse(base)));

  auto j = json::parse(base);
  j["typo_key"] = 1;
  CHECK_THROWS_AS(harness::spec_from_json(j), std::invalid_argument);

  j = json::parse(base);
  j["eps1_grid"]["step"] = 0.1;
  CHECK_THROWS_AS(harness::spec_from_json(j), std::invalid_argument);

  j = json::parse(base);
  j["eps1_grid"]["spacing"] = "geometric";
  CHECK_THROWS_AS(harness::spec_from_json(j), std::invalid_argument);

  j = json::parse(base);
  j["forms"] = {"full"};
  CHECK_THROWS_AS(harness::spec_from_json(j), std::invalid_argument);
}

TEST_CASE("report JSON carries the documented keys") {
  SweepSpec s = small_spec();
  s.eps1_grid.count = 6;
  const auto j = harness::report_to_json(harness::validate(s));
  REQUIRE(j.contains("grid"));
  REQUIRE(j.contains("points"));
  REQUIRE(j.contains("worst_offenders"));
  REQUIRE(j.contains("flags"));
  CHECK(j["grid"]["evaluated"] == 6);
  CHECK(j["grid"]["eps1_grid"]["count"] == 6);
  REQUIRE(j["points"].is_array());
  const auto& p0 = j["points"][0];
  REQUIRE(p0.contains("observables"));
  const auto& duan = p0["observables"]["duan_sum"];
  for (const char* key :
       {"closed_general", "closed_reduced", "oracle_value", "abs_diff", "rel_diff"})
    CHECK(duan.contains(key));
  CHECK(duan["oracle_value"].is_number());
  for (const auto& f : j["flags"]) {
    CHECK(f.contains("id"));
    CHECK(f.contains("region"));
    CHECK(f.contains("magnitude"));
  }
}

// ---------------------------------------------------------------------------
// command-line front end, driven as a subprocess

namespace {

struct CliResult {
  int code = -1;
  std::string out;
};

CliResult run_cli(const std::string& args) {
  const std::string cmd = std::string(DPO_CLI_PATH) + " " + args + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  CliResult r;
  char buf[4096];
  size_t got;
  while ((got = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, got);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string temp_path(const char* name) {
  return std::string("/tmp/") + name;
}

}  // namespace

TEST_CASE("cli: steady point, both pipelines") {
  const auto r = run_cli("steady --kappa 1 --lambda 0.5 --eps1 1 --json");
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["regime"] == "above");
  CHECK_THAT(j["alpha"].get<double>(), WithinRel(2.0, 1e-12));
  CHECK_THAT(j["fraction"].get<double>(), WithinRel(2.0 / 3.0, 1e-12));
  CHECK_THAT(j["closed"]["duan_sum"].get<double>(),
             WithinRel(3.85160818713, 1e-9));
  CHECK_THAT(j["oracle"]["duan_sum"].get<double>(),
             WithinRel(247.0 / 72.0, 1e-11));
  CHECK_THAT(j["oracle"]["var_minus"].get<double>(),
             WithinRel(29.0 / 36.0, 1e-11));
  CHECK(j["closed"]["entangled"] == false);
}

TEST_CASE("cli: steady below threshold via the drive") {
  const auto r = run_cli("steady --kappa 1 --lambda 0.5 --drive 0.2 --json");
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["regime"] == "below");
  CHECK(j["alpha"].get<double>() == 0.0);
  CHECK_THAT(j["beta"].get<double>(), WithinRel(0.4, 1e-12));
  // below threshold the general closed form and the oracle agree
  CHECK_THAT(j["closed"]["duan_sum"].get<double>(),
             WithinRel(j["oracle"]["duan_sum"].get<double>(), 1e-10));
}

TEST_CASE("cli: exit codes") {
  // threshold point: every pipeline is unstable -> domain error
  CHECK(run_cli("steady --kappa 1 --lambda 0.5 --drive 0.5").code == 3);
  // usage errors
  CHECK(run_cli("steady --kappa 1 --eps1 1 --drive 1.5").code == 2);
  CHECK(run_cli("steady --kappa -1 --eps1 1").code == 2);
  CHECK(run_cli("").code == 2);
  CHECK(run_cli("figure --n 7").code == 2);
  CHECK(run_cli("transient --eps1 1 --dt 0.02").code == 2);
  CHECK(run_cli("transient --eps1 1 --drive 2").code == 2);
  CHECK(run_cli("sweep --kappa 1 --start 0.3 --stop 3 --count 5 --out "
                "/nonexistent/dir/out.csv")
            .code == 4);
  // version banner
  const auto v = run_cli("--version");
  CHECK(v.code == 0);
  CHECK(v.out.find("dpo") != std::string::npos);
}

TEST_CASE("cli: sweep inline grid and config file agree") {
  const auto inline_run =
      run_cli("sweep --kappa 1 --kappa 0.5 --start 0.3 --stop 3 --count 5");
  REQUIRE(inline_run.code == 0);
  std::istringstream is(inline_run.out);
  std::string header;
  std::getline(is, header);
  CHECK(header ==
        "kappa,eps1,duan_sum,var_plus,var_minus,nbar,delta_I,fraction,"
        "entangled,regime");
  int rows = 0;
  for (std::string line; std::getline(is, line);) ++rows;
  CHECK(rows == 10);

  const auto cfg = temp_path("dpo_sweep_cfg.json");
  {
    std::ofstream f(cfg);
    f << R"({"kappa_values":[1.0,0.5],"lambda_c":0.5,
             "eps1_grid":{"start":0.3,"stop":3.0,"count":5}})";
  }
  const auto cfg_run = run_cli("sweep --config " + cfg);
  REQUIRE(cfg_run.code == 0);
  CHECK(cfg_run.out == inline_run.out);
  std::remove(cfg.c_str());
}

TEST_CASE("cli: config errors map to the usage exit code") {
  const auto bad = temp_path("dpo_bad_cfg.json");
  {
    std::ofstream f(bad);
    f << "{not json";
  }
  CHECK(run_cli("sweep --config " + bad).code == 2);
  {
    std::ofstream f(bad);
    f << R"({"kappa_values":[1.0],"surprise":1,
             "eps1_grid":{"start":0.3,"stop":3.0,"count":5}})";
  }
  CHECK(run_cli("sweep --config " + bad).code == 2);
  std::remove(bad.c_str());
}

TEST_CASE("cli: validate emits the report JSON") {
  const auto r =
      run_cli("validate --kappa 1 --start 0.35 --stop 3 --count 8 --threads 2");
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["grid"]["evaluated"] == 8);
  CHECK(j["points"].size() == 8);
  REQUIRE(j["flags"].is_array());
  CHECK_FALSE(j["flags"].empty());
  bool has_isign = false;
  for (const auto& f : j["flags"])
    if (f["id"] == "intensity_noise_sign") has_isign = true;
  CHECK(has_isign);
  // missing grid -> usage error
  CHECK(run_cli("validate").code == 2);
}

TEST_CASE("cli: figure output") {
  const auto r = run_cli("figure --n 3 --kappas 0.5 --points 5");
  REQUIRE(r.code == 0);
  CHECK(r.out.rfind("# figure 3", 0) == 0);
  CHECK(r.out.find("kappa,eps1,nbar,nbar_oracle\n") != std::string::npos);
}

TEST_CASE("cli: optimum and boundary searches") {
  const auto opt = run_cli("optimum --kappa 0.5 --lambda 0.5 --json");
  REQUIRE(opt.code == 0);
  const auto jo = nlohmann::json::parse(opt.out);
  CHECK_THAT(jo["eps1_star_over_kappa"].get<double>(), WithinAbs(1.0, 1e-6));
  CHECK_THAT(jo["squeezing_percent"].get<double>(),
             WithinAbs(100.0 * 5.0 / 12.0, 1e-3));

  const auto bnd = run_cli("boundary --kappa 1 --json");
  REQUIRE(bnd.code == 0);
  const auto jb = nlohmann::json::parse(bnd.out);
  CHECK_THAT(jb["eps1_boundary_over_kappa"].get<double>(),
             WithinAbs(1.2253232886283213, 2e-8));
}

TEST_CASE("cli: transient CSV") {
  const auto out = temp_path("dpo_transient.csv");
  const auto r = run_cli("transient --kappa 1 --lambda 0.5 --eps1 0.15 "
                         "--t-final 1 --steps 4 --out " + out);
  REQUIRE(r.code == 0);
  std::ifstream f(out);
  REQUIRE(f.good());
  std::string l1, l2, header;
  std::getline(f, l1);
  std::getline(f, l2);
  std::getline(f, header);
  CHECK(l1.rfind("#", 0) == 0);
  CHECK(l2.rfind("#", 0) == 0);
  CHECK(header == "t,a1,a2,a3,a4,a5,a6,mean_a,mean_b,oracle_mean_a,oracle_mean_b");
  std::vector<std::string> rows;
  for (std::string line; std::getline(f, line);) rows.push_back(line);
  REQUIRE(rows.size() == 5);
  // first row: t = 0, closed pump mean starts at 2*beta, oracle at zero
  std::istringstream first(rows.front());
  std::vector<double> cols;
  for (std::string cell; std::getline(first, cell, ',');)
    cols.push_back(std::stod(cell));
  REQUIRE(cols.size() == 11);
  CHECK(cols[0] == 0.0);
  CHECK_THAT(cols[8], WithinRel(2.0, 1e-12));   // mean_b
  CHECK_THAT(cols[10], WithinAbs(0.0, 1e-15));  // oracle_mean_b
  std::remove(out.c_str());
}
