#pragma once

#include <boost/math/special_functions/beta.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "aoi/errors.hpp"
#include "aoi/geometry.hpp"
#include "aoi/numerics.hpp"
#include "aoi/params.hpp"
#include "aoi/simulator.hpp"

namespace aoi {

// lambda E[a] int_{|z|>R} dz / (1 + |z|^alpha / (theta r^alpha)), after the change of variables
// v = (|z| / (theta^{1/alpha} r))^2 and x = 1/(1 + v^{alpha/2}):
// pi lambda E[a] theta^delta r^2 * delta int_0^{x_R} x^{-delta} (1-x)^{delta-1} dx.
inline double tail_integral(double window_radius, double lambda, double mean_a, const SystemParams& sp,
                            const DerivedParams& dp) {
  if (!(window_radius >= 0.0)) throw ParameterError("tail_integral: window radius must be >= 0");
  if (lambda == 0.0 || mean_a == 0.0 || std::isinf(window_radius)) return 0.0;
  const double d = dp.delta;
  const double pref = std::numbers::pi * lambda * mean_a * std::pow(sp.theta, d) * sp.r * sp.r;
  if (window_radius == 0.0) return pref * dp.c_alpha;
  const double vR = std::pow(window_radius / (std::pow(sp.theta, 1.0 / sp.alpha) * sp.r), 2.0);
  const double vpow = std::pow(vR, sp.alpha / 2.0);
  const double xR = 1.0 / (1.0 + vpow);
  const double one_minus_xR = vpow / (1.0 + vpow);
  if (xR == 0.0) return 0.0;
  auto f = [&](double x, double xc) {
    if (!(x > 0.0)) return 0.0;
    // near the upper end, 1 - x = (1 - xR) + (xR - x)
    const double omx = (xc > 0.0) ? one_minus_xR + xc : 1.0 - x;
    return std::pow(x, -d) * std::pow(omx, d - 1.0);
  };
  return pref * d * numerics::integrate_endpoint_singular(f, 0.0, xR, 1e-13);
}

// Independent route through the regularized incomplete beta function.
inline double tail_integral_ibeta(double window_radius, double lambda, double mean_a, const SystemParams& sp,
                                  const DerivedParams& dp) {
  const double d = dp.delta;
  const double pref = std::numbers::pi * lambda * mean_a * std::pow(sp.theta, d) * sp.r * sp.r;
  const double vR = std::pow(window_radius / (std::pow(sp.theta, 1.0 / sp.alpha) * sp.r), 2.0);
  const double xR = 1.0 / (1.0 + std::pow(vR, sp.alpha / 2.0));
  return pref * d * boost::math::beta(1.0 - d, d, xR);
}

struct NeighborTerm {
  double D;  // |X_own - y_j|^alpha / (theta r^alpha)
  double a;  // reported buffer occupancy of link j
};

struct EtaSolution {
  double eta = 1.0;
  double residual = 0.0;  // |h(eta)| for an interior root, 0 on the eta = 1 branch
  bool interior = false;
};

// h(eta) = 1/eta - sum_j 1/(1 + D_j - a_j eta) - tail. Returns 1 when h(1) >= 0,
// else the unique root in (0,1) (h is strictly decreasing with h(0+) = +inf).
inline EtaSolution solve_eta(std::span<const NeighborTerm> terms, double tail) {
  for (const auto& t : terms) {
    if (!(t.D > 0.0) || !(t.a >= 0.0 && t.a <= 1.0)) throw ParameterError("solve_eta: need D > 0 and a in [0,1]");
    if (!(1.0 + t.D - t.a > 0.0)) throw ParameterError("solve_eta: 1 + D - a must be positive");
  }
  if (!(tail >= 0.0)) throw ParameterError("solve_eta: tail must be >= 0");
  auto h = [&](double eta) {
    double s = 1.0 / eta - tail;
    for (const auto& t : terms) s -= 1.0 / (1.0 + t.D - t.a * eta);
    return s;
  };
  EtaSolution out;
  if (h(1.0) >= 0.0) return out;
  double lo = 0.5;
  while (h(lo) <= 0.0) lo *= 0.5;
  out.eta = numerics::bisect(h, lo, 1.0);
  out.residual = std::abs(h(out.eta));
  out.interior = true;
  return out;
}

// Success probability of link `node` given in-window transmitters and a mean-field tail.
// The window is the disk of radius R around the node's receiver.
inline double conditional_success_given_window(std::size_t node, double window_radius, const BipolarTopology& topo,
                                               std::span<const double> etas, std::span<const double> a_hats,
                                               double mean_a, const SystemParams& sp, const DerivedParams& dp) {
  const Point y = topo.rx[node];
  const double denom = sp.theta * std::pow(sp.r, sp.alpha);
  double log_prod = -noise_exponent(sp, dp) - tail_integral(window_radius, sp.lambda, mean_a, sp, dp);
  for (std::size_t j = 0; j < topo.size(); ++j) {
    if (j == node) continue;
    const double d = torus_distance(topo.tx[j], y, topo.region);
    if (d > window_radius) continue;
    const double D = std::pow(d, sp.alpha) / denom;
    log_prod += std::log1p(-etas[j] * a_hats[j] / (1.0 + D));
  }
  return std::exp(log_prod);
}

enum class AdaptiveVariant {
  buffer_aware,     // reports are empirical busy fractions
  dominant_system,  // every report forced to 1
};

struct AdaptiveConfig {
  std::size_t frame_len = 200;
  double window_radius = 20.0;
  AdaptiveVariant variant = AdaptiveVariant::buffer_aware;
  std::optional<double> fixed_mean_activity;  // else the network-wide mean of the reports
  std::size_t max_updates = std::numeric_limits<std::size_t>::max();
  bool record_trace = true;
};

struct PolicyTraceRow {
  std::size_t frame;
  std::size_t node;
  double eta;
  double reported_a;
  double residual;
};

struct PolicyState {
  std::vector<double> eta;
  std::vector<double> reported_a;
  std::size_t frame_len = 0;
  double window_radius = 0.0;
  double mean_a = 1.0;
};

// Frame-based locally adaptive ALOHA: eta = 1 during the first frame, then at every frame
// boundary each node re-solves solve_eta from its neighbours' reports over the elapsed frame.
class LocallyAdaptiveAloha final : public AccessPolicy {
 public:
  LocallyAdaptiveAloha(const SystemParams& sp, AdaptiveConfig cfg) : sp_(sp), dp_(derive(sp)), cfg_(cfg) {
    if (cfg_.frame_len < 1) throw ParameterError("frame length must be >= 1");
    if (!(cfg_.window_radius >= 0.0)) throw ParameterError("window radius must be >= 0");
  }

  void start(const BipolarTopology& topo) override {
    const std::size_t n = topo.size();
    state_.eta.assign(n, 1.0);
    state_.reported_a.assign(n, 1.0);
    state_.frame_len = cfg_.frame_len;
    state_.window_radius = cfg_.window_radius;
    busy_.assign(n, 0);
    slots_in_frame_ = 0;
    updates_ = 0;
    trace_.clear();
    nbr_off_.assign(n + 1, 0);
    nbr_idx_.clear();
    nbr_D_.clear();
    const double denom = sp_.theta * std::pow(sp_.r, sp_.alpha);
    if (n > 0 && cfg_.window_radius > 0.0) {
      CellGrid grid(topo.rx, topo.region, std::max(cfg_.window_radius, 1e-6));
      std::vector<std::pair<std::size_t, double>> found;
      for (std::size_t i = 0; i < n; ++i) {
        found.clear();
        grid.for_each_within(topo.tx[i], cfg_.window_radius, [&](std::size_t j, double d) {
          if (j != i) found.emplace_back(j, d);
        });
        std::sort(found.begin(), found.end());
        for (auto [j, d] : found) {
          nbr_idx_.push_back(static_cast<std::uint32_t>(j));
          nbr_D_.push_back(std::max(std::pow(d, sp_.alpha) / denom, std::numeric_limits<double>::min()));
        }
        nbr_off_[i + 1] = nbr_idx_.size();
      }
    } else {
      std::fill(nbr_off_.begin(), nbr_off_.end(), 0);
    }
  }

  void begin_slot(std::int64_t t, std::span<const std::uint8_t> occupied) override {
    if (t > 0 && static_cast<std::size_t>(t) % cfg_.frame_len == 0 && updates_ < cfg_.max_updates) {
      update(static_cast<std::size_t>(t) / cfg_.frame_len);
    } else if (t > 0 && static_cast<std::size_t>(t) % cfg_.frame_len == 0) {
      std::fill(busy_.begin(), busy_.end(), 0);
      slots_in_frame_ = 0;
    }
    for (std::size_t i = 0; i < occupied.size(); ++i) busy_[i] += occupied[i];
    ++slots_in_frame_;
  }

  double access_probability(std::size_t i) const override { return state_.eta[i]; }

  const PolicyState& state() const { return state_; }
  const std::vector<PolicyTraceRow>& trace() const { return trace_; }
  std::size_t updates() const { return updates_; }

 private:
  void update(std::size_t frame) {
    const std::size_t n = busy_.size();
    const bool ds = cfg_.variant == AdaptiveVariant::dominant_system;
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      state_.reported_a[i] = ds ? 1.0 : static_cast<double>(busy_[i]) / static_cast<double>(slots_in_frame_);
      mean += state_.reported_a[i];
    }
    mean = n ? mean / static_cast<double>(n) : 0.0;
    state_.mean_a = ds ? 1.0 : cfg_.fixed_mean_activity.value_or(mean);
    const double tail = tail_integral(cfg_.window_radius, sp_.lambda, state_.mean_a, sp_, dp_);
    std::vector<NeighborTerm> terms;
    for (std::size_t i = 0; i < n; ++i) {
      terms.clear();
      for (std::size_t k = nbr_off_[i]; k < nbr_off_[i + 1]; ++k)
        terms.push_back({nbr_D_[k], state_.reported_a[nbr_idx_[k]]});
      const EtaSolution s = solve_eta(terms, tail);
      state_.eta[i] = s.eta;
      if (cfg_.record_trace) trace_.push_back({frame, i, s.eta, state_.reported_a[i], s.residual});
    }
    std::fill(busy_.begin(), busy_.end(), 0);
    slots_in_frame_ = 0;
    ++updates_;
  }

  SystemParams sp_;
  DerivedParams dp_;
  AdaptiveConfig cfg_;
  PolicyState state_;
  std::vector<std::uint64_t> busy_;
  std::size_t slots_in_frame_ = 0;
  std::size_t updates_ = 0;
  std::vector<std::size_t> nbr_off_;
  std::vector<std::uint32_t> nbr_idx_;
  std::vector<double> nbr_D_;
  std::vector<PolicyTraceRow> trace_;
};

struct PolicyRun {
  SimMetrics metrics;
  std::vector<PolicyTraceRow> trace;
  PolicyState final_state;
};

inline PolicyRun run_algorithm1(const BipolarTopology& topo, const SystemParams& sp, const SimConfig& sim,
                                std::size_t frame_len, double window_radius,
                                AdaptiveVariant variant = AdaptiveVariant::buffer_aware,
                                std::optional<double> fixed_mean_activity = std::nullopt) {
  AdaptiveConfig cfg;
  cfg.frame_len = frame_len;
  cfg.window_radius = window_radius;
  cfg.variant = variant;
  cfg.fixed_mean_activity = fixed_mean_activity;
  LocallyAdaptiveAloha policy(sp, cfg);
  PolicyRun out;
  out.metrics = run(topo, sp, sim, policy);
  out.trace = policy.trace();
  out.final_state = policy.state();
  return out;
}

inline void write_policy_trace_csv(std::ostream& os, const std::vector<PolicyTraceRow>& rows) {
  os << "# aoi-policy-trace v1\nframe_index,node_id,eta,reported_a\n";
  for (const auto& r : rows)
    os << r.frame << ',' << r.node << ',' << detail::fmt_double(r.eta) << ',' << detail::fmt_double(r.reported_a)
       << '\n';
}

}  // namespace aoi
