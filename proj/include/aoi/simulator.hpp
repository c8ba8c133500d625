#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <ostream>
#include <span>
#include <vector>

#include "aoi/errors.hpp"
#include "aoi/geometry.hpp"
#include "aoi/params.hpp"
#include "aoi/rng.hpp"

namespace aoi {

// Per-link buffer and age state.
struct LinkState {
  bool buffer_occupied = false;
  std::int64_t gen_time = 0;
  std::int64_t aoi = 1;
  std::int64_t latest_delivered_gen = 0;
};

struct LinkMetrics {
  std::uint64_t attempts = 0;
  std::uint64_t successes = 0;
  std::uint64_t busy_slots = 0;
  std::uint64_t observed_slots = 0;
  double aoi_sum = 0.0;
  double peak_sum = 0.0;

  bool censored() const { return successes == 0; }
  double emp_success() const {
    return attempts ? static_cast<double>(successes) / static_cast<double>(attempts)
                    : std::numeric_limits<double>::quiet_NaN();
  }
  double emp_busy() const {
    return observed_slots ? static_cast<double>(busy_slots) / static_cast<double>(observed_slots)
                          : std::numeric_limits<double>::quiet_NaN();
  }
  double avg_aoi() const {
    return observed_slots ? aoi_sum / static_cast<double>(observed_slots)
                          : std::numeric_limits<double>::quiet_NaN();
  }
  double peak_aoi_mean() const {
    return successes ? peak_sum / static_cast<double>(successes) : std::numeric_limits<double>::infinity();
  }
};

struct NetworkSummary {
  std::size_t links = 0;
  std::size_t censored = 0;   // links with no delivery after warmup
  double avg_aoi = 0.0;       // mean over uncensored links
  double peak_aoi_mean = 0.0; // mean over uncensored links
  double emp_success = 0.0;   // mean over links with at least one attempt
  double emp_busy = 0.0;
  bool divergence = false;
};

struct SimMetrics {
  std::vector<LinkMetrics> links;

  // Concatenation; associative, so replications can be combined in any grouping.
  void merge(const SimMetrics& other) { links.insert(links.end(), other.links.begin(), other.links.end()); }

  NetworkSummary summary() const {
    if (links.empty()) throw ParameterError("network metrics undefined for an empty topology");
    NetworkSummary s;
    s.links = links.size();
    std::size_t n_ok = 0, n_att = 0;
    for (const auto& l : links) {
      s.emp_busy += l.emp_busy();
      if (l.attempts) {
        s.emp_success += l.emp_success();
        ++n_att;
      }
      if (l.censored()) {
        ++s.censored;
        continue;
      }
      s.avg_aoi += l.avg_aoi();
      s.peak_aoi_mean += l.peak_aoi_mean();
      ++n_ok;
    }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    s.emp_busy /= static_cast<double>(links.size());
    s.emp_success = n_att ? s.emp_success / static_cast<double>(n_att) : nan;
    s.avg_aoi = n_ok ? s.avg_aoi / static_cast<double>(n_ok) : std::numeric_limits<double>::infinity();
    s.peak_aoi_mean = n_ok ? s.peak_aoi_mean / static_cast<double>(n_ok) : std::numeric_limits<double>::infinity();
    s.divergence = s.censored > 0;
    return s;
  }
};

// Per-slot access probabilities. begin_slot sees the buffer state after arrivals.
class AccessPolicy {
 public:
  virtual ~AccessPolicy() = default;
  virtual void start(const BipolarTopology& /*topo*/) {}
  virtual void begin_slot(std::int64_t /*t*/, std::span<const std::uint8_t> /*occupied*/) {}
  virtual double access_probability(std::size_t link) const = 0;
};

class ConstantAccess final : public AccessPolicy {
 public:
  explicit ConstantAccess(double p) : p_(p) {
    if (!(p > 0.0 && p <= 1.0)) throw ParameterError("ConstantAccess: p must lie in (0,1]");
  }
  double access_probability(std::size_t) const override { return p_; }

 private:
  double p_;
};

// Per-link access probabilities, switching from `before` to `after` at slot `switch_slot`.
class ScheduledAccess final : public AccessPolicy {
 public:
  ScheduledAccess(std::vector<double> before, std::vector<double> after, std::int64_t switch_slot)
      : before_(std::move(before)), after_(std::move(after)), switch_(switch_slot) {}
  void begin_slot(std::int64_t t, std::span<const std::uint8_t>) override { late_ = t >= switch_; }
  double access_probability(std::size_t i) const override { return late_ ? after_[i] : before_[i]; }

 private:
  std::vector<double> before_, after_;
  std::int64_t switch_;
  bool late_ = false;
};

// Per-slot hook for invariant checks. Spans are indexed by link.
struct SlotView {
  std::int64_t t;
  std::span<const std::int64_t> aoi_before;
  std::span<const std::int64_t> aoi_after;
  std::span<const std::uint8_t> arrived;
  std::span<const std::uint8_t> delivered;
  std::span<const std::int64_t> gen_time;  // generation slot of the buffered packet at attempt time
};

class SlotObserver {
 public:
  virtual ~SlotObserver() = default;
  virtual void on_slot(const SlotView& v) = 0;
};

enum class ChannelModel {
  per_pair_fades,  // explicit unit-mean exponential fade per directed pair and slot
  marginalized,    // fades integrated out: success with prob exp(-noise) prod 1/(1+x_j)
};

enum class FadingMode { rayleigh, unit };

struct SimConfig {
  std::size_t slots = 10000;
  long long warmup = -1;                  // negative: 10% of slots
  double interference_radius = 0.0;       // 0: chosen from far_field_tolerance
  double far_field_tolerance = 1e-3;      // bound on neglected mean interference-to-threshold
  ChannelModel channel = ChannelModel::per_pair_fades;
  FadingMode fading = FadingMode::rayleigh;
  std::uint64_t seed = 1;

  std::size_t warmup_slots() const {
    return warmup < 0 ? slots / 10 : static_cast<std::size_t>(warmup);
  }
};

// Smallest radius whose neglected mean interference sum_j theta (r/d_j)^alpha is below tol.
inline double auto_interference_radius(const SystemParams& sp, double tol) {
  if (sp.lambda == 0.0) return 0.0;
  const double k = 2.0 * std::numbers::pi * sp.lambda * sp.theta * std::pow(sp.r, sp.alpha) / ((sp.alpha - 2.0) * tol);
  return std::max(3.0 * sp.r, std::pow(k, 1.0 / (sp.alpha - 2.0)));
}

// For each receiver i, the transmitters j != i within the cutoff, with
// x_ji = theta (d_ii/d_ji)^alpha and log(1/(1+x_ji)).
struct InterferenceGraph {
  std::vector<std::size_t> offset;
  std::vector<std::uint32_t> source;
  std::vector<double> x;
  std::vector<double> log_factor;
  std::vector<double> tail_log;  // sum of log_factor from this entry to the end of the receiver's list
  std::vector<double> noise;  // theta d_ii^alpha / rho per link
  double radius = 0.0;
  bool all_pairs = false;
};

inline void fill_tails(InterferenceGraph& g) {
  g.tail_log.assign(g.log_factor.size() + 1, 0.0);
  for (std::size_t i = 0; i + 1 < g.offset.size(); ++i) {
    double s = 0.0;
    for (std::size_t k = g.offset[i + 1]; k-- > g.offset[i];) {
      s += g.log_factor[k];
      g.tail_log[k] = s;
    }
  }
}

inline InterferenceGraph build_interference_graph(const BipolarTopology& topo, const SystemParams& sp,
                                                  const DerivedParams& dp, double radius) {
  InterferenceGraph g;
  const std::size_t n = topo.size();
  g.offset.assign(n + 1, 0);
  g.noise.resize(n);
  g.all_pairs = radius >= topo.region.max_distance();
  g.radius = radius;
  std::vector<double> self_d(n);
  for (std::size_t i = 0; i < n; ++i) {
    self_d[i] = torus_distance(topo.tx[i], topo.rx[i], topo.region);
    g.noise[i] = std::isinf(dp.rho) ? 0.0 : sp.theta * std::pow(self_d[i], sp.alpha) / dp.rho;
  }
  auto push = [&](std::size_t i, std::size_t j, double d) {
    const double xv = d > 0.0 ? sp.theta * std::pow(self_d[i] / d, sp.alpha) : std::numeric_limits<double>::infinity();
    g.source.push_back(static_cast<std::uint32_t>(j));
    g.x.push_back(xv);
    g.log_factor.push_back(-std::log1p(xv));
  };
  if (g.all_pairs) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) push(i, j, torus_distance(topo.tx[j], topo.rx[i], topo.region));
      g.offset[i + 1] = g.source.size();
    }
    fill_tails(g);
    return g;
  }
  if (radius > 0.0 && n > 0) {
    CellGrid grid(topo.tx, topo.region, radius);
    std::vector<std::pair<std::size_t, double>> found;
    for (std::size_t i = 0; i < n; ++i) {
      found.clear();
      grid.for_each_within(topo.rx[i], radius, [&](std::size_t j, double d) {
        if (j != i) found.emplace_back(j, d);
      });
      // Nearest first, so a failing delivery is usually decided after a few terms.
      std::sort(found.begin(), found.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second < b.second : a.first < b.first;
      });
      for (auto [j, d] : found) push(i, j, d);
      g.offset[i + 1] = g.source.size();
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) g.offset[i + 1] = 0;
  }
  fill_tails(g);
  return g;
}

namespace detail {

template <class Delivery>
SimMetrics run_loop(const BipolarTopology& topo, const SystemParams& sp, const SimConfig& cfg, AccessPolicy& policy,
                    SlotObserver* obs, Delivery&& deliver) {
  const std::size_t n = topo.size();
  const std::size_t warm = cfg.warmup_slots();
  if (cfg.slots <= warm) throw ParameterError("simulation: slots must exceed warmup");
  std::vector<Rng> rng;
  rng.reserve(n);
  for (std::size_t i = 0; i < n; ++i) rng.push_back(make_rng(cfg.seed, {0x6c696e6bULL, i}));

  std::vector<std::uint8_t> occ(n, 0), tx(n, 0), ok(n, 0), arrived(n, 0);
  std::vector<std::int64_t> gen(n, 0), aoi(n, 1), aoi_prev(obs ? n : 0), gen_seen(obs ? n : 0);
  SimMetrics m;
  m.links.resize(n);
  policy.start(topo);

  for (std::int64_t t = 0; t < static_cast<std::int64_t>(cfg.slots); ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      arrived[i] = uniform01(rng[i]) < sp.xi;
      if (arrived[i]) {
        occ[i] = 1;
        gen[i] = t;
      }
    }
    policy.begin_slot(t, occ);
    for (std::size_t i = 0; i < n; ++i) tx[i] = occ[i] && uniform01(rng[i]) < policy.access_probability(i);
    for (std::size_t i = 0; i < n; ++i) ok[i] = tx[i] ? deliver(i, tx, rng[i]) : 0;

    const bool record = static_cast<std::size_t>(t) >= warm;
    if (obs) {
      std::copy(aoi.begin(), aoi.end(), aoi_prev.begin());
      std::copy(gen.begin(), gen.end(), gen_seen.begin());
    }
    for (std::size_t i = 0; i < n; ++i) {
      auto& lm = m.links[i];
      if (record) {
        lm.aoi_sum += static_cast<double>(aoi[i]);
        ++lm.observed_slots;
        lm.busy_slots += occ[i];
        lm.attempts += tx[i];
      }
      if (ok[i]) {
        if (record) {
          ++lm.successes;
          lm.peak_sum += static_cast<double>(aoi[i]);
        }
        aoi[i] = t - gen[i] + 1;
        occ[i] = 0;
      } else {
        ++aoi[i];
      }
    }
    if (obs) obs->on_slot(SlotView{t, aoi_prev, aoi, arrived, ok, gen_seen});
  }
  return m;
}

}  // namespace detail

// Slot-synchronous simulation of LCFS-R unit buffers with ALOHA gating and SINR delivery.
inline SimMetrics run(const BipolarTopology& topo, const SystemParams& sp, const SimConfig& cfg, AccessPolicy& policy,
                      SlotObserver* observer = nullptr) {
  sp.validate();
  const DerivedParams dp = derive(sp);
  if (cfg.fading == FadingMode::unit && cfg.channel != ChannelModel::per_pair_fades)
    throw ParameterError("unit fading requires the per-pair fade channel model");
  double radius = cfg.interference_radius > 0.0 ? cfg.interference_radius
                                                : auto_interference_radius(sp, cfg.far_field_tolerance);
  if (sp.lambda == 0.0 && cfg.interference_radius <= 0.0) radius = topo.region.max_distance();
  const InterferenceGraph g = build_interference_graph(topo, sp, dp, radius);

  if (cfg.channel == ChannelModel::marginalized) {
    return detail::run_loop(topo, sp, cfg, policy, observer,
                            [&](std::size_t i, const std::vector<std::uint8_t>& active, Rng& r) -> std::uint8_t {
                              const double log_u = std::log(uniform01(r));
                              double acc = -g.noise[i];
                              if (!(log_u < acc)) return 0;
                              // acc only decreases, so a block-wise test gives the same verdict. Once even
                              // every remaining interferer being active cannot push acc below log_u, the
                              // delivery succeeds; the margin covers summation rounding.
                              constexpr std::size_t kBlock = 8;
                              const std::size_t end = g.offset[i + 1];
                              for (std::size_t k = g.offset[i]; k < end;) {
                                const std::size_t stop = std::min(end, k + kBlock);
                                for (; k < stop; ++k) acc += active[g.source[k]] ? g.log_factor[k] : 0.0;
                                if (!(log_u < acc)) return 0;
                                if (k < end && log_u < acc + g.tail_log[k] - 1e-9 * (1.0 - acc - g.tail_log[k])) return 1;
                              }
                              return 1;
                            });
  }
  const bool unit = cfg.fading == FadingMode::unit;
  return detail::run_loop(topo, sp, cfg, policy, observer,
                          [&](std::size_t i, const std::vector<std::uint8_t>& active, Rng& r) -> std::uint8_t {
                            const double h = unit ? 1.0 : exp1(r);
                            double need = g.noise[i];
                            if (!(h > need)) return 0;
                            for (std::size_t k = g.offset[i]; k < g.offset[i + 1]; ++k) {
                              if (active[g.source[k]]) {
                                need += (unit ? 1.0 : exp1(r)) * g.x[k];
                                if (!(h > need)) return 0;
                              }
                            }
                            return 1;
                          });
}

struct QueueEstimate {
  double avg_aoi;
  double peak_aoi;
  double busy_fraction;
};

// Isolated LCFS-R unit buffer with i.i.d. Bernoulli(s) success per attempt.
inline QueueEstimate queue_oracle(double xi, double s, std::size_t slots, std::uint64_t seed,
                                  std::size_t warmup = 0) {
  if (!(xi > 0.0 && xi <= 1.0)) throw ParameterError("queue_oracle: xi must lie in (0,1]");
  if (!(s > 0.0 && s <= 1.0)) throw ParameterError("queue_oracle: s must lie in (0,1]");
  if (slots <= warmup) throw ParameterError("queue_oracle: slots must exceed warmup");
  Rng g = make_rng(seed, {0x71756575ULL});
  bool full = false;
  std::int64_t gen = 0, age = 1;
  double sum = 0.0, peaks = 0.0;
  std::uint64_t busy = 0, n_peaks = 0, seen = 0;
  for (std::int64_t t = 0; t < static_cast<std::int64_t>(slots); ++t) {
    if (uniform01(g) < xi) {
      full = true;
      gen = t;
    }
    const bool rec = static_cast<std::size_t>(t) >= warmup;
    if (rec) {
      sum += static_cast<double>(age);
      busy += full;
      ++seen;
    }
    if (full && uniform01(g) < s) {
      if (rec) {
        peaks += static_cast<double>(age);
        ++n_peaks;
      }
      age = t - gen + 1;
      full = false;
    } else {
      ++age;
    }
  }
  return {sum / static_cast<double>(seen),
          n_peaks ? peaks / static_cast<double>(n_peaks) : std::numeric_limits<double>::infinity(),
          static_cast<double>(busy) / static_cast<double>(seen)};
}

// Fraction of links whose mean peak age exceeds the threshold; censored links count as outages.
inline double peak_outage_empirical(const SimMetrics& m, double a_threshold) {
  if (m.links.empty()) throw ParameterError("peak_outage_empirical: no links");
  std::size_t out = 0;
  for (const auto& l : m.links)
    if (l.censored() || l.peak_aoi_mean() > a_threshold) ++out;
  return static_cast<double>(out) / static_cast<double>(m.links.size());
}

inline void write_metrics_csv(std::ostream& os, const SimMetrics& m) {
  using detail::fmt_double;
  os << "# aoi-sim-metrics v1\n";
  os << "link_id,emp_success,emp_busy,avg_aoi,peak_aoi_mean,attempts,deliveries,censored\n";
  for (std::size_t i = 0; i < m.links.size(); ++i) {
    const auto& l = m.links[i];
    os << i << ',' << fmt_double(l.emp_success()) << ',' << fmt_double(l.emp_busy()) << ','
       << fmt_double(l.avg_aoi()) << ',' << fmt_double(l.peak_aoi_mean()) << ',' << l.attempts << ','
       << l.successes << ',' << (l.censored() ? 1 : 0) << '\n';
  }
  if (m.links.empty()) return;
  const auto s = m.summary();
  os << "network," << fmt_double(s.emp_success) << ',' << fmt_double(s.emp_busy) << ',' << fmt_double(s.avg_aoi)
     << ',' << fmt_double(s.peak_aoi_mean) << ",,," << s.censored << '\n';
}

}  // namespace aoi
