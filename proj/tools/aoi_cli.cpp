// Command-line front end: scenario runs, parameter sweeps and sim/analysis comparison.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "aoi/experiments/compare.hpp"
#include "aoi/experiments/runner.hpp"
#include "aoi/experiments/scenario.hpp"

namespace {

using aoi::exp::json;

struct Common {
  std::string config, preset, out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> replications, slots;
  unsigned threads = 0;
  bool full_scale = false, per_run = false, quiet = false;
  std::vector<double> xi, p, lambda, r, A, R;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "Scenario JSON (a manifest.json is accepted too)");
  app->add_option("--preset", c.preset, "Built-in scenario: fig4 ... fig9");
  app->add_option("--out", c.out, "Output directory (default from the scenario)");
  app->add_option("--seed", c.seed, "Master seed");
  app->add_option("--threads", c.threads, "Worker threads (0 = all cores)");
  app->add_option("--replications", c.replications, "Topologies per grid point");
  app->add_option("--slots", c.slots, "Slots per simulation run");
  app->add_flag("--full-scale", c.full_scale, "Use the 1 km region");
  app->add_flag("--per-run-csv", c.per_run, "Write per-run metrics (and policy traces)");
  app->add_flag("--quiet", c.quiet, "No progress lines on stderr");
  app->add_option("--xi", c.xi, "Override the xi grid");
  app->add_option("--p", c.p, "Override the p grid");
  app->add_option("--lambda", c.lambda, "Override the density grid");
  app->add_option("--r", c.r, "Override the link-distance grid");
  app->add_option("--A", c.A, "Override the peak-age thresholds");
  app->add_option("--R", c.R, "Override the policy window radii");
}

aoi::exp::Scenario resolve(const Common& c, std::optional<aoi::exp::Mode> force) {
  if (!c.config.empty() && !c.preset.empty()) throw aoi::ParameterError("give either --config or --preset, not both");
  aoi::exp::Scenario s;
  if (!c.config.empty()) s = aoi::exp::load_scenario(c.config);
  else if (!c.preset.empty()) s = aoi::exp::preset(c.preset);
  if (force) s.mode = *force;
  if (c.seed) s.seed = *c.seed;
  if (c.replications) s.replications = *c.replications;
  if (c.slots) s.slots = *c.slots;
  if (c.full_scale) s.full_scale = true;
  if (c.per_run) s.per_run_csv = true;
  if (c.threads) s.threads = c.threads;
  if (!c.out.empty()) s.output_dir = c.out;
  if (!c.xi.empty()) s.grid.xi = c.xi;
  if (!c.p.empty()) s.grid.p = c.p;
  if (!c.lambda.empty()) s.grid.lambda = c.lambda;
  if (!c.r.empty()) s.grid.r = c.r;
  if (!c.A.empty()) s.grid.A = c.A;
  if (!c.R.empty()) s.grid.R = c.R;
  s.validate();
  return s;
}

int run_scenario(const Common& c, std::optional<aoi::exp::Mode> force) {
  const auto s = resolve(c, force);
  const auto res = aoi::exp::execute(s, s.threads, c.quiet ? nullptr : &std::cerr);
  const auto files = aoi::exp::write_artifacts(res, s.output_dir);
  json ok = {{"status", "ok"}, {"scenario", s.name}, {"mode", aoi::exp::to_string(s.mode)},
             {"out", s.output_dir}, {"files", files.size()}};
  std::cout << ok.dump() << '\n';
  return 0;
}

int error(const std::string& type, const std::string& msg, int code) {
  json e = {{"status", "error"}, {"type", type}, {"message", msg}};
  std::cerr << e.dump() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Age-of-information analysis and simulation for Poisson bipolar networks"};
  app.require_subcommand(1);
  Common sim_c, ana_c, pol_c, sweep_c, cmp_c;
  auto* sim = app.add_subcommand("simulate", "Simulate every grid point");
  add_common(sim, sim_c);
  auto* ana = app.add_subcommand("analyze", "Solve the analysis at every grid point");
  add_common(ana, ana_c);
  auto* pol = app.add_subcommand("policy", "Compare the adaptive policy against constant access");
  add_common(pol, pol_c);
  auto* sweep = app.add_subcommand("sweep", "Run a scenario in its configured mode");
  add_common(sweep, sweep_c);
  auto* cmp = app.add_subcommand("compare", "Compare two CSVs, or run a scenario in compare mode");
  add_common(cmp, cmp_c);
  std::vector<std::string> cmp_files;
  std::string cmp_report;
  aoi::exp::CompareTolerances tol;
  cmp->add_option("files", cmp_files, "SIM_CSV ANALYSIS_CSV")->expected(0, 2);
  cmp->add_option("--report", cmp_report, "Write the per-point report CSV here");
  cmp->add_option("--avg-tol", tol.avg_aoi_rel, "Relative tolerance on average AoI");
  cmp->add_option("--outage-tol", tol.outage_abs, "Absolute tolerance on peak-age outage");
  cmp->add_option("--cdf-tol", tol.cdf_sup, "Sup-distance tolerance on CDFs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return error("usage", e.what(), 1);
  }

  using aoi::exp::Mode;
  try {
    if (*sim) return run_scenario(sim_c, Mode::simulate);
    if (*ana) return run_scenario(ana_c, Mode::analyze);
    if (*pol) return run_scenario(pol_c, Mode::policy);
    if (*sweep) return run_scenario(sweep_c, std::nullopt);
    if (cmp_files.empty()) return run_scenario(cmp_c, Mode::compare);
    if (cmp_files.size() != 2) return error("usage", "compare expects SIM_CSV and ANALYSIS_CSV", 1);
    const auto rep = aoi::exp::compare_files(cmp_files[0], cmp_files[1], tol);
    if (!cmp_report.empty()) {
      std::ofstream f(cmp_report, std::ios::binary);
      if (!f) return error("io", "cannot write '" + cmp_report + "'", 1);
      aoi::exp::write_compare_csv(f, rep);
    }
    json j = {{"status", rep.pass ? "pass" : "fail"},
              {"kind", rep.kind},
              {"points", rep.rows.size()},
              {"max_avg_rel_error", rep.max_avg_rel_error},
              {"max_outage_gap", rep.max_outage_gap},
              {"cdf_sup_distance", rep.cdf_sup_distance}};
    std::cout << j.dump() << '\n';
    return rep.pass ? 0 : 3;
  } catch (const aoi::exp::KeyMismatchError& e) {
    return error("key_mismatch", e.what(), 1);
  } catch (const aoi::ParameterError& e) {
    return error("invalid_config", e.what(), 1);
  } catch (const aoi::NumericalError& e) {
    return error("non_convergence", e.what(), 2);
  } catch (const aoi::DivergenceError& e) {
    return error("divergence", e.what(), 2);
  } catch (const std::exception& e) {
    return error("internal", e.what(), 1);
  }
}
