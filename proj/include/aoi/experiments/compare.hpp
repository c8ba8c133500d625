#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "aoi/errors.hpp"
#include "aoi/geometry.hpp"

namespace aoi::exp {

class KeyMismatchError : public ParameterError {
 public:
  using ParameterError::ParameterError;
};

struct CsvTable {
  std::string header;  // leading "# ..." line
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::size_t col(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return i;
    throw ParameterError("csv: missing column '" + name + "'");
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

inline CsvTable read_csv(std::istream& is) {
  CsvTable t;
  std::string line;
  if (!std::getline(is, line) || line.rfind("# ", 0) != 0) throw ParameterError("csv: missing '# <schema>' header");
  t.header = line;
  if (!std::getline(is, line)) throw ParameterError("csv: missing column row");
  t.columns = split_csv_line(line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto r = split_csv_line(line);
    if (r.size() != t.columns.size()) throw ParameterError("csv: ragged row '" + line + "'");
    t.rows.push_back(std::move(r));
  }
  return t;
}

inline CsvTable read_csv_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParameterError("cannot open '" + path + "'");
  return read_csv(f);
}

struct CompareTolerances {
  double avg_aoi_rel = 0.05;
  double outage_abs = 0.05;
  double cdf_sup = 0.05;
};

struct CompareRow {
  std::string key;
  std::string metric;
  double sim, analysis, deviation, tolerance;
  bool pass;
};

struct CompareReport {
  std::string kind;  // summary | cdf
  std::vector<CompareRow> rows;
  double max_avg_rel_error = 0.0;
  double max_outage_gap = 0.0;
  double cdf_sup_distance = 0.0;
  bool pass = true;
};

namespace detail {
inline bool has_prefix(const std::string& s, const std::string& p) { return s.rfind(p, 0) == 0; }

inline double num(const std::string& s) { return s.empty() ? std::nan("") : aoi::detail::parse_double(s); }
}  // namespace detail

// Simulation columns of `sim` against analysis columns of `ana`, matched on the grid key.
inline CompareReport compare_summaries(const CsvTable& sim, const CsvTable& ana, const CompareTolerances& tol) {
  const std::vector<std::string> key_cols{"xi", "p", "lambda", "r", "A", "R"};
  auto keyed = [&](const CsvTable& t) {
    std::map<std::string, std::size_t> m;
    std::vector<std::size_t> idx;
    for (const auto& k : key_cols) idx.push_back(t.col(k));
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      std::string k;
      for (std::size_t j = 0; j < idx.size(); ++j) k += (j ? " " : "") + key_cols[j] + "=" + t.rows[i][idx[j]];
      if (!m.emplace(k, i).second) throw KeyMismatchError("duplicate grid key " + k);
    }
    return m;
  };
  const auto ks = keyed(sim), ka = keyed(ana);
  for (const auto& [k, i] : ks)
    if (!ka.count(k)) throw KeyMismatchError("grid key missing from analysis: " + k);
  for (const auto& [k, i] : ka)
    if (!ks.count(k)) throw KeyMismatchError("grid key missing from simulation: " + k);

  CompareReport rep;
  rep.kind = "summary";
  const auto s_avg = sim.col("sim_avg_aoi"), s_out = sim.col("sim_peak_outage");
  const auto a_avg = ana.col("ana_avg_aoi"), a_out = ana.col("ana_peak_outage"), a_div = ana.col("ana_divergent");
  for (const auto& [k, i] : ks) {
    const auto& rs = sim.rows[i];
    const auto& ra = ana.rows[ka.at(k)];
    const double sv = detail::num(rs[s_avg]), av = detail::num(ra[a_avg]);
    if (ra[a_div] != "1" && std::isfinite(sv) && std::isfinite(av)) {
      const double d = std::abs(sv - av) / av;
      rep.rows.push_back({k, "avg_aoi_rel_error", sv, av, d, tol.avg_aoi_rel, d <= tol.avg_aoi_rel});
      rep.max_avg_rel_error = std::max(rep.max_avg_rel_error, d);
    }
    const double so = detail::num(rs[s_out]), ao = detail::num(ra[a_out]);
    if (!std::isnan(so) && !std::isnan(ao)) {
      const double d = std::abs(so - ao);
      rep.rows.push_back({k, "peak_outage_abs_gap", so, ao, d, tol.outage_abs, d <= tol.outage_abs});
      rep.max_outage_gap = std::max(rep.max_outage_gap, d);
    }
  }
  for (const auto& r : rep.rows) rep.pass = rep.pass && r.pass;
  return rep;
}

// Sup distance between two (u, F) tables on identical grids.
inline CompareReport compare_cdfs(const CsvTable& a, const CsvTable& b, const CompareTolerances& tol) {
  const auto au = a.col("u"), af = a.col("F"), bu = b.col("u"), bf = b.col("F");
  if (a.rows.size() != b.rows.size()) throw KeyMismatchError("cdf grids differ in length");
  CompareReport rep;
  rep.kind = "cdf";
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    if (a.rows[i][au] != b.rows[i][bu]) throw KeyMismatchError("cdf grids differ at row " + std::to_string(i));
    rep.cdf_sup_distance =
        std::max(rep.cdf_sup_distance, std::abs(detail::num(a.rows[i][af]) - detail::num(b.rows[i][bf])));
  }
  rep.pass = rep.cdf_sup_distance <= tol.cdf_sup;
  rep.rows.push_back({"all", "cdf_sup_distance", std::nan(""), std::nan(""), rep.cdf_sup_distance, tol.cdf_sup, rep.pass});
  return rep;
}

inline CompareReport compare_files(const std::string& sim_path, const std::string& ana_path,
                                   const CompareTolerances& tol) {
  const auto s = read_csv_file(sim_path), a = read_csv_file(ana_path);
  const bool s_cdf = detail::has_prefix(s.header, "# aoi-meta-cdf"), a_cdf = detail::has_prefix(a.header, "# aoi-meta-cdf");
  if (s_cdf && a_cdf) return compare_cdfs(s, a, tol);
  if (detail::has_prefix(s.header, "# aoi-sweep-summary") && detail::has_prefix(a.header, "# aoi-sweep-summary"))
    return compare_summaries(s, a, tol);
  throw ParameterError("compare: inputs must both be sweep summaries or both be CDF tables");
}

inline void write_compare_csv(std::ostream& os, const CompareReport& r) {
  using aoi::detail::fmt_double;
  auto cell = [](double v) { return std::isnan(v) ? std::string() : fmt_double(v); };
  os << "# aoi-compare v1 kind=" << r.kind << " pass=" << (r.pass ? 1 : 0) << '\n';
  os << "key,metric,sim,analysis,deviation,tolerance,pass\n";
  for (const auto& x : r.rows)
    os << '"' << x.key << "\"," << x.metric << ',' << cell(x.sim) << ',' << cell(x.analysis) << ','
       << cell(x.deviation) << ',' << cell(x.tolerance) << ',' << (x.pass ? 1 : 0) << '\n';
}

}  // namespace aoi::exp
