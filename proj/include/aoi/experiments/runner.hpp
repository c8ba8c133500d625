#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "aoi/adaptive_policy.hpp"
#include "aoi/aoi_analysis.hpp"
#include "aoi/experiments/scenario.hpp"
#include "aoi/meta_distribution.hpp"
#include "aoi/simulator.hpp"

namespace aoi::exp {

using aoi::detail::fmt_double;

// Runs f(0..n-1) on a pool of worker threads. The first exception is rethrown after all workers stop.
inline void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& f) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr err;
  std::mutex mu;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n || stop.load()) return;
      try {
        f(i);
      } catch (...) {
        std::lock_guard lk(mu);
        if (!err) err = std::current_exception();
        stop = true;
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (err) std::rethrow_exception(err);
}

struct MeanCi {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double ci95 = std::numeric_limits<double>::quiet_NaN();  // normal half-width; NaN for one sample
};

inline MeanCi mean_ci(const std::vector<double>& v) {
  MeanCi out;
  if (v.empty()) return out;
  double s = 0.0;
  for (double x : v) s += x;
  out.mean = s / static_cast<double>(v.size());
  if (v.size() < 2 || !std::isfinite(out.mean)) return out;
  double q = 0.0;
  for (double x : v) q += (x - out.mean) * (x - out.mean);
  out.ci95 = 1.96 * std::sqrt(q / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  return out;
}

struct SimStats {
  std::size_t links = 0, censored = 0;
  std::vector<double> per_rep_avg;  // network average AoI of each replication
  MeanCi avg_aoi;
  double peak_outage = std::numeric_limits<double>::quiet_NaN();
  double emp_success = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> link_success;  // per-link empirical success, links with attempts
};

struct AnaStats {
  BetaApprox beta;
  AverageAoi avg;
  std::optional<PeakOutage> peak;
  AoiReport report;
  std::optional<ExactSolution> exact;
};

struct PointResult {
  GridPoint pt;
  std::optional<SimStats> sim;
  std::optional<AnaStats> ana;
  double avg_rel_error = std::numeric_limits<double>::quiet_NaN();
  double cdf_sup_beta_empirical = std::numeric_limits<double>::quiet_NaN();
  double cdf_sup_exact_beta = std::numeric_limits<double>::quiet_NaN();
  std::vector<SimMetrics> runs;  // kept only when per-run CSVs are requested
};

struct PolicyArm {
  std::string policy;  // algorithm1 | ds_la | constant
  double p = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> per_rep_avg;
  std::size_t links = 0, censored = 0;
  MeanCi avg_aoi;
  MeanCi diff_vs_algorithm1;  // paired per-replication difference (this - algorithm1)
  bool best_constant = false;
  std::vector<SimMetrics> runs;
  std::vector<std::vector<PolicyTraceRow>> traces;
};

struct PolicyResult {
  GridPoint pt;
  double mean_activity = std::numeric_limits<double>::quiet_NaN();  // NaN: empirical
  std::vector<PolicyArm> arms;
};

struct ScenarioResult {
  Scenario scenario;
  std::vector<PointResult> points;
  std::vector<PolicyResult> policy;
};

namespace detail {

inline SimConfig sim_config(const Scenario& s, std::uint64_t seed) {
  SimConfig c;
  c.slots = s.slots;
  c.warmup = s.warmup;
  c.channel = s.channel;
  c.interference_radius = s.interference_radius;
  c.far_field_tolerance = s.far_field_tolerance;
  c.seed = seed;
  return c;
}

inline double network_avg(const SimMetrics& m) {
  return m.links.empty() ? std::numeric_limits<double>::quiet_NaN() : m.summary().avg_aoi;
}

inline void log_line(std::ostream* log, std::mutex& mu, const std::string& s) {
  if (!log) return;
  std::lock_guard lk(mu);
  *log << s << '\n' << std::flush;
}

inline AnaStats analyze_point(const Scenario& s, const GridPoint& g) {
  AnaStats a;
  const auto dp = derive(g.sp);
  a.beta = solve_beta_fixed_point(g.sp, dp, BetaSolveOptions{s.beta_tol, 100, 0.0});
  if (!a.beta.converged)
    throw NumericalError("Beta fixed point did not converge at lambda=" + fmt_double(g.sp.lambda) +
                         " xi=" + fmt_double(g.sp.xi) + " p=" + fmt_double(g.sp.p) + " r=" + fmt_double(g.sp.r));
  const auto dist = a.beta.distribution();
  std::optional<double> A;
  if (!std::isnan(g.A)) A = g.A;
  a.report = analyze(dist, g.sp, dp, A);
  a.avg = a.report.network_avg;
  a.peak = a.report.peak;
  if (s.exact_cdf) a.exact = solve_exact_fixed_point(g.sp, dp, dist);
  return a;
}

}  // namespace detail

inline ScenarioResult execute(const Scenario& s, unsigned threads = 0, std::ostream* log = nullptr) {
  s.validate();
  const auto pts = expand(s);
  check_unique_seeds(s, pts);
  const Region region{s.side(), Boundary::torus};
  ScenarioResult out;
  out.scenario = s;
  std::mutex log_mu;

  if (s.mode == Mode::policy) {
    // Arms: algorithm1, ds_la, then constant p values.
    struct ArmSpec {
      std::string name;
      double p;
    };
    std::vector<ArmSpec> arms{{"algorithm1", std::numeric_limits<double>::quiet_NaN()}};
    if (s.include_ds_la) arms.push_back({"ds_la", std::numeric_limits<double>::quiet_NaN()});
    for (double p : s.constant_p) arms.push_back({"constant", p});

    out.policy.resize(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
      out.policy[i].pt = pts[i];
      if (s.mean_activity == "analysis") {
        SystemParams sp = pts[i].sp;
        sp.p = 1.0;
        const auto d = solve_beta_fixed_point(sp, derive(sp)).distribution();
        out.policy[i].mean_activity = d.expect([&](double t) { return buffer_nonempty(sp.xi, 1.0, t); });
      }
      for (const auto& a : arms) {
        PolicyArm arm;
        arm.policy = a.name;
        arm.p = a.p;
        arm.per_rep_avg.assign(s.replications, 0.0);
        if (s.per_run_csv) {
          arm.runs.resize(s.replications);
          arm.traces.resize(s.replications);
        }
        out.policy[i].arms.push_back(std::move(arm));
      }
    }
    std::vector<std::vector<std::size_t>> links(pts.size(), std::vector<std::size_t>(arms.size() * s.replications, 0));
    auto cens = links;
    const std::size_t per_point = s.replications * arms.size();
    parallel_for(pts.size() * per_point, threads, [&](std::size_t task) {
      const std::size_t pi = task / per_point, rem = task % per_point;
      const std::size_t rep = rem / arms.size(), ai = rem % arms.size();
      const auto& g = pts[pi];
      const auto seeds = seeds_for(s.seed, g.spatial_index, g.index, rep);
      const auto topo = sample_bipolar(g.sp, region, seeds.topology);
      const auto cfg = detail::sim_config(s, seeds.sim);
      SimMetrics m;
      std::vector<PolicyTraceRow> trace;
      auto& res = out.policy[pi];
      if (arms[ai].name == "constant") {
        SystemParams sp = g.sp;
        sp.p = arms[ai].p;
        ConstantAccess pol(sp.p);
        m = run(topo, sp, cfg, pol);
      } else {
        AdaptiveConfig ac;
        ac.frame_len = s.frame_len;
        ac.window_radius = g.R;
        ac.variant = arms[ai].name == "ds_la" ? AdaptiveVariant::dominant_system : AdaptiveVariant::buffer_aware;
        if (!std::isnan(res.mean_activity)) ac.fixed_mean_activity = res.mean_activity;
        ac.record_trace = s.per_run_csv;
        LocallyAdaptiveAloha pol(g.sp, ac);
        m = run(topo, g.sp, cfg, pol);
        trace = pol.trace();
      }
      auto& arm = res.arms[ai];
      arm.per_rep_avg[rep] = topo.size() ? detail::network_avg(m) : std::numeric_limits<double>::quiet_NaN();
      links[pi][ai * s.replications + rep] = m.links.size();
      std::size_t c = 0;
      for (const auto& l : m.links) c += l.censored();
      cens[pi][ai * s.replications + rep] = c;
      if (s.per_run_csv) {
        arm.runs[rep] = std::move(m);
        arm.traces[rep] = std::move(trace);
      }
      detail::log_line(log, log_mu,
                       "point " + std::to_string(pi) + " rep " + std::to_string(rep) + " " + arms[ai].name +
                           (std::isnan(arms[ai].p) ? "" : " p=" + fmt_double(arms[ai].p)) + " avg_aoi=" +
                           fmt_double(arm.per_rep_avg[rep]));
    });
    for (std::size_t pi = 0; pi < pts.size(); ++pi) {
      auto& res = out.policy[pi];
      const auto& base = res.arms[0].per_rep_avg;
      double best = std::numeric_limits<double>::infinity();
      std::size_t best_i = res.arms.size();
      for (std::size_t ai = 0; ai < res.arms.size(); ++ai) {
        auto& arm = res.arms[ai];
        for (std::size_t r = 0; r < s.replications; ++r) {
          arm.links += links[pi][ai * s.replications + r];
          arm.censored += cens[pi][ai * s.replications + r];
        }
        arm.avg_aoi = mean_ci(arm.per_rep_avg);
        std::vector<double> d(s.replications);
        for (std::size_t r = 0; r < s.replications; ++r) d[r] = arm.per_rep_avg[r] - base[r];
        arm.diff_vs_algorithm1 = mean_ci(d);
        if (arm.policy == "constant" && arm.avg_aoi.mean < best) {
          best = arm.avg_aoi.mean;
          best_i = ai;
        }
      }
      if (best_i < res.arms.size()) res.arms[best_i].best_constant = true;
    }
    return out;
  }

  out.points.resize(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) out.points[i].pt = pts[i];
  const bool do_sim = s.mode == Mode::simulate || s.mode == Mode::compare;
  const bool do_ana = s.mode == Mode::analyze || s.mode == Mode::compare;

  if (do_ana) {
    parallel_for(pts.size(), threads, [&](std::size_t i) {
      out.points[i].ana = detail::analyze_point(s, pts[i]);
      detail::log_line(log, log_mu, "analysis point " + std::to_string(i) + " done");
    });
  }
  if (do_sim) {
    std::vector<SimMetrics> runs(pts.size() * s.replications);
    parallel_for(runs.size(), threads, [&](std::size_t task) {
      const std::size_t pi = task / s.replications, rep = task % s.replications;
      const auto& g = pts[pi];
      const auto seeds = seeds_for(s.seed, g.spatial_index, g.index, rep);
      const auto topo = sample_bipolar(g.sp, region, seeds.topology);
      ConstantAccess pol(g.sp.p);
      runs[task] = run(topo, g.sp, detail::sim_config(s, seeds.sim), pol);
      detail::log_line(log, log_mu, "sim point " + std::to_string(pi) + " rep " + std::to_string(rep) + " links " +
                                        std::to_string(topo.size()));
    });
    for (std::size_t pi = 0; pi < pts.size(); ++pi) {
      SimStats st;
      SimMetrics all;
      for (std::size_t r = 0; r < s.replications; ++r) {
        auto& m = runs[pi * s.replications + r];
        if (!m.links.empty()) st.per_rep_avg.push_back(detail::network_avg(m));
        all.merge(m);
        if (s.per_run_csv) out.points[pi].runs.push_back(std::move(m));
        else m = SimMetrics{};
      }
      st.links = all.links.size();
      st.avg_aoi = mean_ci(st.per_rep_avg);
      for (const auto& l : all.links) {
        st.censored += l.censored();
        if (l.attempts) st.link_success.push_back(l.emp_success());
      }
      if (!all.links.empty()) {
        st.emp_success = all.summary().emp_success;
        if (!std::isnan(pts[pi].A)) st.peak_outage = peak_outage_empirical(all, pts[pi].A);
      }
      out.points[pi].sim = std::move(st);
    }
  }
  for (auto& pr : out.points) {
    if (pr.sim && pr.ana) {
      if (!pr.ana->avg.divergent && std::isfinite(pr.sim->avg_aoi.mean))
        pr.avg_rel_error = std::abs(pr.sim->avg_aoi.mean - pr.ana->avg.value) / pr.ana->avg.value;
      if (!pr.sim->link_success.empty()) {
        const EmpiricalCdf emp(pr.sim->link_success);
        const auto dist = pr.ana->beta.distribution();
        pr.cdf_sup_beta_empirical =
            sup_distance(emp, [&](double u) { return dist.cdf(u); }, cdf_comparison_grid());
      }
    }
    if (pr.ana && pr.ana->exact) {
      const auto dist = pr.ana->beta.distribution();
      const auto& ex = pr.ana->exact->dist;
      pr.cdf_sup_exact_beta = sup_distance([&](double u) { return ex.cdf(u); },
                                           [&](double u) { return dist.cdf(u); }, cdf_comparison_grid());
    }
  }
  return out;
}

// ---- artifacts ----

namespace detail {

inline std::string cell(double v) { return std::isnan(v) ? std::string() : fmt_double(v); }

inline void write_summary(std::ostream& os, const ScenarioResult& r) {
  const auto& s = r.scenario;
  os << "# aoi-sweep-summary v1 scenario=" << s.name << " mode=" << to_string(s.mode) << '\n';
  os << "point,xi,p,lambda,r,A,R,replications,links,censored,sim_avg_aoi,sim_avg_aoi_ci95,sim_peak_outage,"
        "sim_emp_success,ana_avg_aoi,ana_divergent,ana_peak_outage,mu_threshold,beta_kappa,beta_a,beta_b,"
        "beta_iterations,bound_z,p_star,lambda0,noise_limited,avg_aoi_rel_error,cdf_sup_beta_empirical,"
        "cdf_sup_exact_beta\n";
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& p : r.points) {
    const auto& g = p.pt;
    os << g.index << ',' << cell(g.sp.xi) << ',' << cell(g.sp.p) << ',' << cell(g.sp.lambda) << ',' << cell(g.sp.r)
       << ',' << cell(g.A) << ',' << cell(g.R) << ',';
    if (p.sim) {
      os << s.replications << ',' << p.sim->links << ',' << p.sim->censored << ',' << cell(p.sim->avg_aoi.mean) << ','
         << cell(p.sim->avg_aoi.ci95) << ',' << cell(p.sim->peak_outage) << ',' << cell(p.sim->emp_success) << ',';
    } else {
      os << ",,,,,,,";
    }
    if (p.ana) {
      const auto& a = *p.ana;
      const bool deg = a.beta.degenerate;
      os << cell(a.avg.value) << ',' << (a.avg.divergent ? 1 : 0) << ','
         << cell(a.peak ? a.peak->probability : nan) << ',' << cell(a.peak ? a.peak->mu_threshold : nan) << ','
         << cell(a.beta.kappa) << ',' << cell(deg ? nan : a.beta.shape_a()) << ',' << cell(deg ? nan : a.beta.shape_b())
         << ',' << a.beta.iteration_count << ',' << cell(a.report.regime.bound_z) << ','
         << cell(a.report.regime.p_star) << ',' << cell(a.report.regime.lambda0) << ','
         << (a.report.noise_limited ? 1 : 0) << ',';
    } else {
      os << ",,,,,,,,,,,,";
    }
    os << cell(p.avg_rel_error) << ',' << cell(p.cdf_sup_beta_empirical) << ',' << cell(p.cdf_sup_exact_beta) << '\n';
  }
}

inline void write_policy_summary(std::ostream& os, const ScenarioResult& r) {
  os << "# aoi-policy-summary v1 scenario=" << r.scenario.name << " mode=policy\n";
  os << "point,xi,lambda,r,R,policy,p,replications,links,censored,avg_aoi,avg_aoi_ci95,diff_vs_algorithm1,"
        "diff_ci95,best_constant,mean_activity\n";
  for (const auto& pr : r.policy)
    for (const auto& a : pr.arms) {
      const auto& g = pr.pt;
      os << g.index << ',' << cell(g.sp.xi) << ',' << cell(g.sp.lambda) << ',' << cell(g.sp.r) << ',' << cell(g.R)
         << ',' << a.policy << ',' << cell(a.p) << ',' << r.scenario.replications << ',' << a.links << ','
         << a.censored << ',' << cell(a.avg_aoi.mean) << ',' << cell(a.avg_aoi.ci95) << ','
         << cell(a.diff_vs_algorithm1.mean) << ',' << cell(a.diff_vs_algorithm1.ci95) << ','
         << (a.best_constant ? 1 : 0) << ',' << (std::isnan(pr.mean_activity) ? "empirical" : cell(pr.mean_activity))
         << '\n';
    }
}

inline void write_empirical_cdf_csv(std::ostream& os, const std::vector<double>& samples,
                                    const std::vector<double>& grid) {
  const EmpiricalCdf e(samples);
  os << "# aoi-meta-cdf v1 provenance=empirical samples=" << e.size() << "\nu,F\n";
  for (double u : grid) os << fmt_double(u) << ',' << fmt_double(e(u)) << '\n';
}

inline json numerics_json(const Scenario& s) {
  const GilPelaezOptions gp;
  const MgfOptions mgf;
  const ExactSolveOptions ex;
  return {{"quadrature_tolerance", numerics::kQuadTol},
          {"beta_tolerance", s.beta_tol},
          {"exact_tolerance", ex.tol},
          {"exact_max_iterations", ex.max_iter},
          {"gil_pelaez", {{"log_span", gp.log_span}, {"omega_max", gp.omega_max}, {"tail_tolerance", gp.tail_tolerance}}},
          {"mgf", {{"t_nodes", mgf.t_nodes}, {"step", mgf.step}, {"path_depth", mgf.path_depth}}},
          {"far_field_tolerance", s.far_field_tolerance}};
}

}  // namespace detail

// Writes summary.csv, CDF files, optional per-run files and manifest.json. Returns the file names written.
inline std::vector<std::string> write_artifacts(const ScenarioResult& r, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::vector<std::string> files;
  auto open = [&](const std::string& name) {
    const fs::path p = dir / name;
    fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    if (!f) throw ParameterError("cannot write '" + p.string() + "'");
    files.push_back(name);
    return f;
  };
  const auto& s = r.scenario;
  json solutions = json::array();
  if (s.mode == Mode::policy) {
    auto f = open("summary.csv");
    detail::write_policy_summary(f, r);
    if (s.per_run_csv)
      for (const auto& pr : r.policy)
        for (const auto& a : pr.arms)
          for (std::size_t rep = 0; rep < a.runs.size(); ++rep) {
            const std::string tag = std::to_string(pr.pt.index) + "_" + std::to_string(rep) + "_" + a.policy +
                                    (std::isnan(a.p) ? "" : "_p" + fmt_double(a.p));
            auto m = open("runs/metrics_" + tag + ".csv");
            write_metrics_csv(m, a.runs[rep]);
            if (a.policy != "constant") {
              auto t = open("runs/trace_" + tag + ".csv");
              write_policy_trace_csv(t, a.traces[rep]);
            }
          }
  } else {
    {
      auto f = open("summary.csv");
      detail::write_summary(f, r);
    }
    const auto grid = cdf_comparison_grid();
    for (const auto& p : r.points) {
      const std::string id = std::to_string(p.pt.index);
      if (p.ana) {
        auto f = open("cdf_" + id + "_beta.csv");
        write_cdf_csv(f, p.ana->beta.distribution(), grid);
        json sol = {{"point", p.pt.index},
                    {"kappa", p.ana->beta.kappa},
                    {"beta", p.ana->beta.degenerate ? json(nullptr) : json(p.ana->beta.beta)},
                    {"iterations", p.ana->beta.iteration_count},
                    {"degenerate", p.ana->beta.degenerate}};
        if (p.ana->exact) {
          auto e = open("cdf_" + id + "_exact.csv");
          write_cdf_csv(e, p.ana->exact->dist, grid);
          const auto& inv = p.ana->exact->last_inversion;
          sol["exact"] = {{"iterations", p.ana->exact->iterations},
                          {"converged", p.ana->exact->converged},
                          {"last_change", p.ana->exact->last_change},
                          {"omega_stop", inv.omega_stop},
                          {"tapered", inv.tapered},
                          {"smoothing_width", inv.smoothing_width},
                          {"tail_bound", inv.tail_bound}};
        }
        solutions.push_back(sol);
      }
      if (p.sim && !p.sim->link_success.empty()) {
        auto f = open("cdf_" + id + "_empirical.csv");
        detail::write_empirical_cdf_csv(f, p.sim->link_success, grid);
      }
      for (std::size_t rep = 0; rep < p.runs.size(); ++rep) {
        auto f = open("runs/metrics_" + id + "_" + std::to_string(rep) + ".csv");
        write_metrics_csv(f, p.runs[rep]);
      }
    }
  }
  json seeds = json::array();
  for (const auto& g : expand(s))
    for (std::size_t rep = 0; rep < s.replications; ++rep) {
      const auto sd = seeds_for(s.seed, g.spatial_index, g.index, rep);
      seeds.push_back({{"point", g.index}, {"rep", rep}, {"topology", sd.topology}, {"sim", sd.sim}});
    }
  json man = {{"tool", "aoi_cli"},
              {"version", kToolVersion},
              {"scenario", scenario_to_json(s)},
              {"region_side_effective", s.side()},
              {"numerics", detail::numerics_json(s)},
              {"mean_activity_mode", s.mean_activity},
              {"seeds", seeds},
              {"solutions", solutions}};
  if (s.mode == Mode::policy) {
    json ma = json::array();
    for (const auto& pr : r.policy)
      ma.push_back({{"point", pr.pt.index},
                    {"mean_activity", std::isnan(pr.mean_activity) ? json("empirical") : json(pr.mean_activity)}});
    man["mean_activity"] = ma;
  }
  files.push_back("manifest.json");
  man["outputs"] = files;
  std::ofstream f(dir / "manifest.json", std::ios::binary);
  f << man.dump(2) << '\n';
  return files;
}

}  // namespace aoi::exp
