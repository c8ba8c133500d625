#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "aoi/errors.hpp"
#include "aoi/geometry.hpp"
#include "aoi/params.hpp"
#include "aoi/simulator.hpp"
#include "json.hpp"

namespace aoi::exp {

using json = nlohmann::json;

inline constexpr const char* kToolVersion = "1.0.0";

enum class Mode { simulate, analyze, compare, policy };

inline const char* to_string(Mode m) {
  switch (m) {
    case Mode::simulate: return "simulate";
    case Mode::analyze: return "analyze";
    case Mode::compare: return "compare";
    default: return "policy";
  }
}

inline Mode parse_mode(const std::string& s) {
  if (s == "simulate") return Mode::simulate;
  if (s == "analyze") return Mode::analyze;
  if (s == "compare") return Mode::compare;
  if (s == "policy") return Mode::policy;
  throw ParameterError("unknown mode '" + s + "'");
}

struct Grid {
  std::vector<double> xi{0.5}, p{1.0}, lambda{0.01}, r{0.5};
  std::vector<double> A;        // peak-age thresholds; empty: no outage columns
  std::vector<double> R{20.0};  // policy window radii
};

struct Scenario {
  std::string name = "custom";
  Mode mode = Mode::compare;
  // Physical layer
  double alpha = 3.8, theta_db = 0.0, ptx_dbm = 17.0;
  double sigma2_dbm = -90.0;  // -inf: noiseless
  Grid grid;
  std::size_t replications = 1;
  std::uint64_t seed = 1;
  double region_side = 200.0;
  bool full_scale = false;  // 1 km region
  // Simulation
  std::size_t slots = 10000;
  long long warmup = -1;
  ChannelModel channel = ChannelModel::marginalized;
  double interference_radius = 0.0;
  double far_field_tolerance = 1e-3;
  // Policy
  std::size_t frame_len = 200;
  std::vector<double> constant_p;   // constant-p baselines
  bool include_ds_la = true;
  std::string mean_activity = "empirical";  // or "analysis"
  // Analysis
  bool exact_cdf = false;
  double beta_tol = 1e-10;
  // Compare tolerances
  double avg_aoi_rel_tol = 0.05;
  double outage_abs_tol = 0.05;
  double cdf_sup_tol = 0.05;
  // Output
  std::string output_dir = "out";
  bool per_run_csv = false;
  unsigned threads = 0;

  double side() const { return full_scale ? 1000.0 : region_side; }

  SystemParams params_at(double xi, double p, double lambda, double r) const {
    SystemParams sp;
    sp.alpha = alpha;
    sp.theta = db_to_linear(theta_db);
    sp.ptx = dbm_to_mw(ptx_dbm);
    sp.sigma2 = std::isinf(sigma2_dbm) && sigma2_dbm < 0 ? 0.0 : dbm_to_mw(sigma2_dbm);
    sp.xi = xi;
    sp.p = p;
    sp.lambda = lambda;
    sp.r = r;
    return sp;
  }

  void validate() const {
    auto nonempty = [](const std::vector<double>& v, const char* what) {
      if (v.empty()) throw ParameterError(std::string("grid.") + what + " must be non-empty");
    };
    nonempty(grid.xi, "xi");
    nonempty(grid.lambda, "lambda");
    nonempty(grid.r, "r");
    if (mode != Mode::policy) nonempty(grid.p, "p");
    if (mode == Mode::policy) nonempty(grid.R, "R");
    for (double a : grid.A)
      if (!(a > 0.0)) throw ParameterError("grid.A entries must be positive");
    for (double R : grid.R)
      if (!(R >= 0.0)) throw ParameterError("grid.R entries must be >= 0");
    for (double p : constant_p)
      if (!(p > 0.0 && p <= 1.0)) throw ParameterError("policy.constant_p entries must lie in (0,1]");
    if (replications < 1) throw ParameterError("replications must be >= 1");
    if (slots < 1) throw ParameterError("sim.slots must be >= 1");
    if (warmup >= 0 && static_cast<std::size_t>(warmup) >= slots) throw ParameterError("sim.warmup must be < slots");
    if (frame_len < 1) throw ParameterError("policy.frame_len must be >= 1");
    if (mean_activity != "empirical" && mean_activity != "analysis")
      throw ParameterError("policy.mean_activity must be 'empirical' or 'analysis'");
    if (!(region_side > 0.0)) throw ParameterError("region.side must be positive");
    if (!(beta_tol > 0.0)) throw ParameterError("analysis.beta_tol must be positive");
    // Every grid point must form valid physical parameters.
    for (double xi : grid.xi)
      for (double p : (mode == Mode::policy ? std::vector<double>{1.0} : grid.p))
        for (double l : grid.lambda)
          for (double r : grid.r) params_at(xi, p, l, r).validate();
  }
};

// One grid point. Index order: lambda, r, xi, p, A, R (outermost first).
struct GridPoint {
  std::size_t index;
  SystemParams sp;
  double A = std::numeric_limits<double>::quiet_NaN();
  double R = std::numeric_limits<double>::quiet_NaN();
  std::size_t spatial_index;  // (lambda, r) pair; topologies are shared across the other axes
};

inline std::vector<GridPoint> expand(const Scenario& s) {
  std::vector<GridPoint> out;
  const std::vector<double> nanv{std::numeric_limits<double>::quiet_NaN()};
  const auto& As = s.grid.A.empty() ? nanv : s.grid.A;
  const auto& Rs = s.mode == Mode::policy ? s.grid.R : nanv;
  const std::vector<double> ps = s.mode == Mode::policy ? std::vector<double>{1.0} : s.grid.p;
  std::size_t spatial = 0;
  for (double l : s.grid.lambda)
    for (double r : s.grid.r) {
      for (double xi : s.grid.xi)
        for (double p : ps)
          for (double A : As)
            for (double R : Rs) out.push_back({out.size(), s.params_at(xi, p, l, r), A, R, spatial});
      ++spatial;
    }
  return out;
}

struct RunSeeds {
  std::uint64_t topology;
  std::uint64_t sim;
};

// Topology seeds depend on (master, spatial point, replication) so that points that differ only
// in xi, p, A or R see the same topologies. Simulation seeds additionally depend on the point.
inline RunSeeds seeds_for(std::uint64_t master, std::size_t spatial, std::size_t point, std::size_t rep) {
  auto draw = [&](std::initializer_list<std::uint64_t> tags) {
    std::vector<std::uint32_t> words{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32)};
    for (auto t : tags) {
      words.push_back(static_cast<std::uint32_t>(t));
      words.push_back(static_cast<std::uint32_t>(t >> 32));
    }
    std::seed_seq sq(words.begin(), words.end());
    std::uint32_t out[2];
    sq.generate(out, out + 2);
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
  };
  return {draw({0x746f706fULL, spatial, rep}), draw({0x73696dULL, point, rep})};
}

inline void check_unique_seeds(const Scenario& s, const std::vector<GridPoint>& pts) {
  std::set<std::uint64_t> seen;
  for (const auto& g : pts)
    for (std::size_t r = 0; r < s.replications; ++r)
      if (!seen.insert(seeds_for(s.seed, g.spatial_index, g.index, r).sim).second)
        throw ParameterError("derived simulation seeds collide; choose another master seed");
}

// ---- JSON ----

namespace detail {
inline void only_keys(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw ParameterError(where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return it.key() == k; }))
      throw ParameterError("unknown key '" + it.key() + "' in " + where);
  }
}

template <class T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline double get_dbm(const json& v) {
  if (v.is_null()) return -std::numeric_limits<double>::infinity();
  return v.get<double>();
}

inline std::string channel_name(ChannelModel c) {
  return c == ChannelModel::marginalized ? "marginalized" : "per_pair_fades";
}
}  // namespace detail

inline Scenario scenario_from_json(const json& root) {
  using detail::get_if;
  const json& j = root.contains("scenario") ? root.at("scenario") : root;  // manifests embed the scenario
  detail::only_keys(j, {"name", "mode", "params", "grid", "replications", "seed", "region", "sim", "policy", "analysis",
                        "compare", "output"},
                    "scenario");
  Scenario s;
  try {
    get_if(j, "name", s.name);
    if (j.contains("mode")) s.mode = parse_mode(j.at("mode").get<std::string>());
    get_if(j, "replications", s.replications);
    get_if(j, "seed", s.seed);
    if (j.contains("params")) {
      const auto& p = j.at("params");
      detail::only_keys(p, {"alpha", "theta_db", "ptx_dbm", "sigma2_dbm"}, "params");
      get_if(p, "alpha", s.alpha);
      get_if(p, "theta_db", s.theta_db);
      get_if(p, "ptx_dbm", s.ptx_dbm);
      if (p.contains("sigma2_dbm")) s.sigma2_dbm = detail::get_dbm(p.at("sigma2_dbm"));
    }
    if (j.contains("grid")) {
      const auto& g = j.at("grid");
      detail::only_keys(g, {"xi", "p", "lambda", "r", "A", "R"}, "grid");
      get_if(g, "xi", s.grid.xi);
      get_if(g, "p", s.grid.p);
      get_if(g, "lambda", s.grid.lambda);
      get_if(g, "r", s.grid.r);
      get_if(g, "A", s.grid.A);
      get_if(g, "R", s.grid.R);
    }
    if (j.contains("region")) {
      const auto& g = j.at("region");
      detail::only_keys(g, {"side", "full_scale"}, "region");
      get_if(g, "side", s.region_side);
      get_if(g, "full_scale", s.full_scale);
    }
    if (j.contains("sim")) {
      const auto& g = j.at("sim");
      detail::only_keys(g, {"slots", "warmup", "channel", "interference_radius", "far_field_tolerance"}, "sim");
      get_if(g, "slots", s.slots);
      get_if(g, "warmup", s.warmup);
      get_if(g, "interference_radius", s.interference_radius);
      get_if(g, "far_field_tolerance", s.far_field_tolerance);
      if (g.contains("channel")) {
        const auto c = g.at("channel").get<std::string>();
        if (c == "marginalized") s.channel = ChannelModel::marginalized;
        else if (c == "per_pair_fades") s.channel = ChannelModel::per_pair_fades;
        else throw ParameterError("sim.channel must be 'marginalized' or 'per_pair_fades'");
      }
    }
    if (j.contains("policy")) {
      const auto& g = j.at("policy");
      detail::only_keys(g, {"frame_len", "constant_p", "include_ds_la", "mean_activity"}, "policy");
      get_if(g, "frame_len", s.frame_len);
      get_if(g, "constant_p", s.constant_p);
      get_if(g, "include_ds_la", s.include_ds_la);
      get_if(g, "mean_activity", s.mean_activity);
    }
    if (j.contains("analysis")) {
      const auto& g = j.at("analysis");
      detail::only_keys(g, {"exact_cdf", "beta_tol"}, "analysis");
      get_if(g, "exact_cdf", s.exact_cdf);
      get_if(g, "beta_tol", s.beta_tol);
    }
    if (j.contains("compare")) {
      const auto& g = j.at("compare");
      detail::only_keys(g, {"avg_aoi_rel_tol", "outage_abs_tol", "cdf_sup_tol"}, "compare");
      get_if(g, "avg_aoi_rel_tol", s.avg_aoi_rel_tol);
      get_if(g, "outage_abs_tol", s.outage_abs_tol);
      get_if(g, "cdf_sup_tol", s.cdf_sup_tol);
    }
    if (j.contains("output")) {
      const auto& g = j.at("output");
      detail::only_keys(g, {"dir", "per_run_csv", "threads"}, "output");
      get_if(g, "dir", s.output_dir);
      get_if(g, "per_run_csv", s.per_run_csv);
      get_if(g, "threads", s.threads);
    }
  } catch (const json::exception& e) {
    throw ParameterError(std::string("config: ") + e.what());
  }
  s.validate();
  return s;
}

inline json scenario_to_json(const Scenario& s) {
  json j;
  j["name"] = s.name;
  j["mode"] = to_string(s.mode);
  j["params"] = {{"alpha", s.alpha}, {"theta_db", s.theta_db}, {"ptx_dbm", s.ptx_dbm}};
  j["params"]["sigma2_dbm"] = std::isinf(s.sigma2_dbm) ? json(nullptr) : json(s.sigma2_dbm);
  j["grid"] = {{"xi", s.grid.xi}, {"p", s.grid.p}, {"lambda", s.grid.lambda},
               {"r", s.grid.r},   {"A", s.grid.A}, {"R", s.grid.R}};
  j["replications"] = s.replications;
  j["seed"] = s.seed;
  j["region"] = {{"side", s.region_side}, {"full_scale", s.full_scale}};
  j["sim"] = {{"slots", s.slots},
              {"warmup", s.warmup},
              {"channel", detail::channel_name(s.channel)},
              {"interference_radius", s.interference_radius},
              {"far_field_tolerance", s.far_field_tolerance}};
  j["policy"] = {{"frame_len", s.frame_len},
                 {"constant_p", s.constant_p},
                 {"include_ds_la", s.include_ds_la},
                 {"mean_activity", s.mean_activity}};
  j["analysis"] = {{"exact_cdf", s.exact_cdf}, {"beta_tol", s.beta_tol}};
  j["compare"] = {
      {"avg_aoi_rel_tol", s.avg_aoi_rel_tol}, {"outage_abs_tol", s.outage_abs_tol}, {"cdf_sup_tol", s.cdf_sup_tol}};
  j["output"] = {{"dir", s.output_dir}, {"per_run_csv", s.per_run_csv}, {"threads", s.threads}};
  return j;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParameterError("cannot open config '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParameterError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return scenario_from_json(j);
}

// ---- presets ----

inline std::vector<double> linspace_step(double a, double b, double step) {
  std::vector<double> v;
  const int n = static_cast<int>(std::floor((b - a) / step + 1e-9));
  for (int i = 0; i <= n; ++i) v.push_back(std::round((a + i * step) * 1e12) / 1e12);
  return v;
}

inline std::vector<std::string> preset_names() { return {"fig4", "fig5", "fig6", "fig7", "fig8", "fig9"}; }

inline Scenario preset(const std::string& name) {
  Scenario s;
  s.name = name;
  s.output_dir = "out/" + name;
  if (name == "fig4") {
    // success-probability CDF at two update rates
    s.mode = Mode::compare;
    s.grid.xi = {0.2, 0.5};
    s.grid.lambda = {0.01};
    s.grid.r = {0.5};
    s.grid.p = {1.0};
    s.replications = 200;
    s.exact_cdf = true;
  } else if (name == "fig5") {
    s.mode = Mode::compare;
    s.grid.xi = linspace_step(0.05, 1.0, 0.05);
    s.grid.lambda = {0.01, 0.03, 0.05};
    s.grid.r = {0.5};
    s.grid.p = {1.0};
    s.replications = 10;
  } else if (name == "fig6") {
    s.mode = Mode::compare;
    s.grid.xi = {0.25, 0.5, 0.75};
    s.grid.p = linspace_step(0.05, 1.0, 0.05);
    s.grid.lambda = {0.05};
    s.grid.r = {0.5};
    s.replications = 10;
  } else if (name == "fig7") {
    s.mode = Mode::policy;
    s.grid.xi = {0.6};
    s.grid.r = {2.5};
    s.grid.R = {20.0};
    s.grid.lambda = {0.01, 0.02, 0.05, 0.1, 0.2, 0.5};
    s.constant_p = linspace_step(0.1, 1.0, 0.1);
    s.replications = 20;
    s.interference_radius = 25.0;
  } else if (name == "fig8") {
    s.mode = Mode::compare;
    s.grid.xi = linspace_step(0.05, 1.0, 0.05);
    s.grid.A = {5.0};
    s.grid.lambda = {0.05};
    s.grid.r = {0.5, 0.7, 1.0};
    s.grid.p = {1.0};
    s.replications = 10;
  } else if (name == "fig9") {
    s.mode = Mode::compare;
    s.grid.xi = {0.5, 0.7, 0.9};
    s.grid.p = linspace_step(0.05, 1.0, 0.05);
    s.grid.A = {5.0};
    s.grid.lambda = {0.05};
    s.grid.r = {0.7};
    s.replications = 10;
  } else {
    throw ParameterError("unknown preset '" + name + "'");
  }
  s.validate();
  return s;
}

}  // namespace aoi::exp
