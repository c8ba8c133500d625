#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "aoi/errors.hpp"
#include "aoi/params.hpp"
#include "aoi/rng.hpp"

namespace aoi {

struct Point {
  double x = 0.0, y = 0.0;
};

enum class Boundary { torus, open };

struct Region {
  double side = 200.0;
  Boundary boundary = Boundary::torus;

  void validate() const {
    if (!(side > 0.0) || !std::isfinite(side)) throw ParameterError("Region: side must be positive");
  }
  double max_distance() const {
    return boundary == Boundary::torus ? side * std::numbers::sqrt2 / 2.0 : side * std::numbers::sqrt2;
  }
};

// Minimum-image component difference on a circle of length `side`.
inline double torus_delta(double a, double b, double side) {
  double d = std::fabs(a - b);
  d = std::fmod(d, side);
  return d > side / 2.0 ? side - d : d;
}

inline double torus_distance(Point a, Point b, const Region& reg) {
  if (reg.boundary == Boundary::open) return std::hypot(a.x - b.x, a.y - b.y);
  return std::hypot(torus_delta(a.x, b.x, reg.side), torus_delta(a.y, b.y, reg.side));
}

inline double wrap(double v, double side) {
  double w = std::fmod(v, side);
  if (w < 0.0) w += side;
  if (w >= side) w = 0.0;
  return w;
}

struct BipolarTopology {
  std::vector<Point> tx, rx;
  Region region;
  double link_distance = 0.0;

  std::size_t size() const { return tx.size(); }
};

// Poisson count, then all transmitter positions, then all receiver angles, from one stream.
inline BipolarTopology sample_bipolar(const SystemParams& sp, const Region& reg, std::uint64_t seed) {
  reg.validate();
  if (!(sp.r > 0.0)) throw ParameterError("sample_bipolar: r must be positive");
  if (!(sp.lambda >= 0.0)) throw ParameterError("sample_bipolar: lambda must be >= 0");
  Rng g = make_rng(seed, {0x746f706fULL});
  BipolarTopology t;
  t.region = reg;
  t.link_distance = sp.r;
  const double mean = sp.lambda * reg.side * reg.side;
  std::size_t n = 0;
  if (mean > 0.0) n = std::poisson_distribution<std::size_t>(mean)(g);
  t.tx.resize(n);
  t.rx.resize(n);
  for (auto& p : t.tx) {
    p.x = uniform01(g) * reg.side;
    p.y = uniform01(g) * reg.side;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double phi = 2.0 * std::numbers::pi * uniform01(g);
    Point q{t.tx[i].x + sp.r * std::cos(phi), t.tx[i].y + sp.r * std::sin(phi)};
    if (reg.boundary == Boundary::torus) {
      q.x = wrap(q.x, reg.side);
      q.y = wrap(q.y, reg.side);
    }
    t.rx[i] = q;
  }
  return t;
}

// Uniform bucket grid over the region for radius queries.
class CellGrid {
 public:
  CellGrid(const std::vector<Point>& pts, const Region& reg, double cell_size) : reg_(reg) {
    reg.validate();
    cells_ = std::max<long>(1, static_cast<long>(std::floor(reg.side / std::max(cell_size, 1e-9))));
    cells_ = std::min<long>(cells_, 4096);
    width_ = reg.side / static_cast<double>(cells_);
    start_.assign(static_cast<std::size_t>(cells_ * cells_ + 1), 0);
    std::vector<std::size_t> cell_of(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
      cell_of[i] = cell_index(pts[i]);
      ++start_[cell_of[i] + 1];
    }
    for (std::size_t c = 1; c < start_.size(); ++c) start_[c] += start_[c - 1];
    items_.resize(pts.size());
    std::vector<std::size_t> fill(start_.begin(), start_.end() - 1);
    for (std::size_t i = 0; i < pts.size(); ++i) items_[fill[cell_of[i]]++] = static_cast<std::uint32_t>(i);
    pts_ = &pts;
  }

  // Calls f(index, distance) for every stored point within `radius` (inclusive) of q.
  template <class F>
  void for_each_within(Point q, double radius, F&& f) const {
    const long reach = static_cast<long>(std::ceil(radius / width_));
    const long cx = coord(q.x), cy = coord(q.y);
    const bool torus = reg_.boundary == Boundary::torus;
    long lo_x = cx - reach, hi_x = cx + reach, lo_y = cy - reach, hi_y = cy + reach;
    if (torus && 2 * reach + 1 >= cells_) {
      lo_x = lo_y = 0;
      hi_x = hi_y = cells_ - 1;
    } else if (!torus) {
      lo_x = std::max(0L, lo_x);
      lo_y = std::max(0L, lo_y);
      hi_x = std::min(cells_ - 1, hi_x);
      hi_y = std::min(cells_ - 1, hi_y);
    }
    for (long ix = lo_x; ix <= hi_x; ++ix) {
      const long wx = ((ix % cells_) + cells_) % cells_;
      for (long iy = lo_y; iy <= hi_y; ++iy) {
        const long wy = ((iy % cells_) + cells_) % cells_;
        const std::size_t c = static_cast<std::size_t>(wx * cells_ + wy);
        for (std::size_t k = start_[c]; k < start_[c + 1]; ++k) {
          const std::uint32_t j = items_[k];
          const double d = torus_distance(q, (*pts_)[j], reg_);
          if (d <= radius) f(static_cast<std::size_t>(j), d);
        }
      }
    }
  }

 private:
  long coord(double v) const {
    long c = static_cast<long>(std::floor(v / width_));
    return std::clamp(c, 0L, cells_ - 1);
  }
  std::size_t cell_index(Point p) const {
    return static_cast<std::size_t>(coord(p.x) * cells_ + coord(p.y));
  }

  Region reg_;
  long cells_ = 1;
  double width_ = 1.0;
  std::vector<std::size_t> start_;
  std::vector<std::uint32_t> items_;
  const std::vector<Point>* pts_ = nullptr;
};

struct StoppingSet {
  Point center;
  double radius = 0.0;
};

// Links j != self whose receiver lies in the closed disk `window` (torus metric).
inline std::vector<std::size_t> neighbors_in(const StoppingSet& window, const BipolarTopology& topo,
                                             std::size_t self) {
  if (!(window.radius >= 0.0)) throw ParameterError("neighbors_in: radius must be >= 0");
  std::vector<std::size_t> out;
  if (window.radius == 0.0) return out;
  const bool all = window.radius >= topo.region.max_distance();
  for (std::size_t j = 0; j < topo.size(); ++j) {
    if (j == self) continue;
    if (all || torus_distance(window.center, topo.rx[j], topo.region) <= window.radius) out.push_back(j);
  }
  return out;
}

namespace detail {
inline std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}
inline double parse_double(const std::string& s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw ParameterError("bad number '" + s + "'");
  return v;
}
}  // namespace detail

inline void write_topology_csv(std::ostream& os, const BipolarTopology& t) {
  using detail::fmt_double;
  os << "# aoi-topology v1 side=" << fmt_double(t.region.side)
     << " boundary=" << (t.region.boundary == Boundary::torus ? "torus" : "open")
     << " link_distance=" << fmt_double(t.link_distance) << "\n";
  os << "id,tx_x,tx_y,rx_x,rx_y\n";
  for (std::size_t i = 0; i < t.size(); ++i)
    os << i << ',' << fmt_double(t.tx[i].x) << ',' << fmt_double(t.tx[i].y) << ','
       << fmt_double(t.rx[i].x) << ',' << fmt_double(t.rx[i].y) << '\n';
}

inline BipolarTopology read_topology_csv(std::istream& is) {
  BipolarTopology t;
  std::string line;
  if (!std::getline(is, line) || line.rfind("# aoi-topology v1", 0) != 0)
    throw ParameterError("topology csv: missing '# aoi-topology v1' header");
  std::istringstream hs(line.substr(17));
  std::string kv;
  while (hs >> kv) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) continue;
    std::string k = kv.substr(0, eq), v = kv.substr(eq + 1);
    if (k == "side") t.region.side = detail::parse_double(v);
    else if (k == "boundary") t.region.boundary = v == "open" ? Boundary::open : Boundary::torus;
    else if (k == "link_distance") t.link_distance = detail::parse_double(v);
  }
  if (!std::getline(is, line) || line != "id,tx_x,tx_y,rx_x,rx_y")
    throw ParameterError("topology csv: bad column header");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 5) throw ParameterError("topology csv: expected 5 fields");
    t.tx.push_back({detail::parse_double(f[1]), detail::parse_double(f[2])});
    t.rx.push_back({detail::parse_double(f[3]), detail::parse_double(f[4])});
  }
  return t;
}

}  // namespace aoi
