#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>

#include "aoi/conditional.hpp"
#include "aoi/meta_distribution.hpp"
#include "aoi/numerics.hpp"
#include "aoi/params.hpp"

namespace aoi {

struct AverageAoi {
  double value = 0.0;        // +inf when divergent
  bool divergent = false;
  std::string reason;        // empty unless divergent
  double lower_shape = 0.0;  // Beta shape a when the distribution is Beta
};

// 1/xi - 1 + E[1/(p T)] over the meta distribution.
inline AverageAoi network_avg_aoi(const MetaDistribution& dist, double xi, double p) {
  detail::check_queue_inputs(xi, p, 1.0, false);
  AverageAoi out;
  const double inf = std::numeric_limits<double>::infinity();
  if (auto* pm = std::get_if<PointMass>(&dist.rep())) {
    if (pm->at <= 0.0) {
      out = {inf, true, "point mass at zero success probability", 0.0};
      return out;
    }
    out.value = cond_avg_aoi(xi, p, pm->at);
    return out;
  }
  if (auto* b = std::get_if<BetaShape>(&dist.rep())) {
    out.lower_shape = b->a;
    if (b->a <= 1.0) {
      out.value = inf;
      out.divergent = true;
      out.reason = "Beta lower shape <= 1: E[1/T] diverges at the origin";
      return out;
    }
    out.value = 1.0 / xi - 1.0 + (b->a + b->b - 1.0) / (p * (b->a - 1.0));
    return out;
  }
  out.value = 1.0 / xi - 1.0 + dist.expect([p](double t) { return 1.0 / (p * t); });
  return out;
}

// Same quantity by quadrature against the density; independent of the Beta closed form.
inline double network_avg_aoi_quadrature(const MetaDistribution& dist, double xi, double p) {
  return 1.0 / xi - 1.0 + dist.expect([p](double t) { return t > 0.0 ? 1.0 / (p * t) : 0.0; });
}

struct CensoredAoi {
  double value;           // average over links with T >= eps
  double value_tenth;     // same with eps / 10
  double excluded_mass;   // P(T < eps)
};

// Links with success probability below eps are excluded, mirroring the simulator's
// treatment of links that never deliver.
inline CensoredAoi network_avg_aoi_censored(const MetaDistribution& dist, double xi, double p, double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw ParameterError("censoring level must lie in (0,1)");
  auto at = [&](double e) {
    const double kept = 1.0 - dist.cdf(e);
    const double s = dist.expect([&](double t) { return t >= e ? 1.0 / (p * t) : 0.0; });
    return 1.0 / xi - 1.0 + s / kept;
  };
  return {at(eps), at(eps / 10.0), dist.cdf(eps)};
}

struct PeakOutage {
  double probability = 0.0;
  double mu_threshold = std::numeric_limits<double>::quiet_NaN();  // links with mu below this exceed A
  double residual = 0.0;                                            // |g(mu_threshold)|
  double c = 0.0;
  // Closed-form candidates for mu_threshold, kept as diagnostics.
  double root_rederived = std::numeric_limits<double>::quiet_NaN();
  double root_compact_discriminant = std::numeric_limits<double>::quiet_NaN();
  double root_expanded_discriminant = std::numeric_limits<double>::quiet_NaN();
};

// g(x) = 1/(p x) + 1/(xi + (1-xi) p x) - c; peak age exceeds A iff g(mu) > 0.
inline double peak_gap(double x, double xi, double p, double c) {
  return 1.0 / (p * x) + 1.0 / (xi + (1.0 - xi) * p * x) - c;
}

// P(mean peak age of a link exceeds A), by monotone inversion of the conditional peak age.
inline PeakOutage peak_outage(double a_threshold, const MetaDistribution& dist, double xi, double p) {
  detail::check_queue_inputs(xi, p, 1.0, false);
  if (!(a_threshold > 0.0)) throw ParameterError("peak_outage: threshold must be positive");
  PeakOutage out;
  out.c = a_threshold + 2.0 - 1.0 / xi;
  const double c = out.c;
  if (std::isinf(a_threshold)) {
    out.probability = 0.0;
    out.mu_threshold = 0.0;
    return out;
  }
  if (c > 0.0 && xi < 1.0) {
    const double k = 2.0 * c * (1.0 - xi) * p;
    const double b = c * xi + xi - 2.0;
    out.root_rederived = (-b + std::sqrt(b * b + 4.0 * c * xi * (1.0 - xi))) / k;
    out.root_compact_discriminant =
        (-xi * (1.0 + c) + std::sqrt(xi * xi * c * c + 4.0 * xi * c + 2.0 * xi * xi * c - 3.0 * xi * xi)) / k;
    out.root_expanded_discriminant =
        (-xi * (1.0 + c) + std::sqrt(xi * (1.0 + c) * xi * (1.0 + c) + 4.0 * xi * c * (1.0 - xi))) / k;
  }
  auto g = [&](double x) { return peak_gap(x, xi, p, c); };
  if (g(1.0) >= 0.0) {
    out.probability = 1.0;
    out.mu_threshold = 1.0;
    out.residual = 0.0;
    return out;
  }
  // g(0+) = +inf and g is strictly decreasing, so the root in (0,1) is unique.
  double lo = 0.5;
  while (g(lo) <= 0.0) lo *= 0.5;
  const double x = numerics::bisect([&](double v) { return g(v); }, lo, 1.0);
  out.mu_threshold = x;
  out.residual = std::abs(g(x));
  out.probability = dist.cdf(x);
  return out;
}

// Z(xi, p) = 1/xi - 1 + exp(G p xi)/p with G = lambda pi r^2 theta^delta C(alpha).
inline double favorable_bound(double xi, double p, const SystemParams& sp, const DerivedParams& dp) {
  const double G = interference_scale(sp, dp) * dp.c_alpha;
  return 1.0 / xi - 1.0 + std::exp(G * p * xi) / p;
}

struct RegimeReport {
  double noise_limited_aoi = 0.0;  // 1/xi - 1 + e^{N}/p
  double bound_z = 0.0;            // favorable-system lower bound at (xi, p)
  double lambda0 = 0.0;            // density above which p < 1 lowers the bound
  double w0 = 0.0;                 // W0(p)
  double w0_residual = 0.0;
  double p_star = 1.0;             // argmin over p of the bound
};

inline RegimeReport regime_results(const SystemParams& sp, const DerivedParams& dp) {
  sp.validate();
  RegimeReport r;
  const double N = noise_exponent(sp, dp);
  r.noise_limited_aoi = 1.0 / sp.xi - 1.0 + std::exp(N) / sp.p;
  r.bound_z = favorable_bound(sp.xi, sp.p, sp, dp);
  const auto w = numerics::lambert_w0(sp.p);
  r.w0 = w.w;
  r.w0_residual = w.residual;
  const double per_density = std::numbers::pi * sp.r * sp.r * std::pow(sp.theta, dp.delta) * dp.c_alpha;
  r.lambda0 = w.w / (sp.p * per_density);
  const double G = interference_scale(sp, dp) * dp.c_alpha;
  r.p_star = G * sp.xi <= 1.0 ? 1.0 : 1.0 / (sp.xi * G);
  return r;
}

struct AoiReport {
  AverageAoi network_avg;
  std::optional<PeakOutage> peak;
  RegimeReport regime;
  bool noise_limited = false;         // interference exponent G p xi below 1e-3
  bool density_above_lambda0 = false;
  bool interference_singular = false; // xi = p = 1: every interferer always active
};

inline AoiReport analyze(const MetaDistribution& dist, const SystemParams& sp, const DerivedParams& dp,
                         std::optional<double> a_threshold = std::nullopt) {
  AoiReport rep;
  rep.regime = regime_results(sp, dp);
  rep.network_avg = network_avg_aoi(dist, sp.xi, sp.p);
  if (a_threshold) rep.peak = peak_outage(*a_threshold, dist, sp.xi, sp.p);
  const double G = interference_scale(sp, dp) * dp.c_alpha;
  rep.noise_limited = G * sp.p * sp.xi < 1e-3;
  rep.density_above_lambda0 = sp.lambda > rep.regime.lambda0;
  rep.interference_singular = sp.xi == 1.0 && sp.p == 1.0 && sp.lambda > 0.0;
  if (rep.interference_singular && !rep.network_avg.divergent) {
    rep.network_avg.divergent = true;
    rep.network_avg.value = std::numeric_limits<double>::infinity();
    rep.network_avg.reason = "xi = p = 1: interferers arbitrarily close to a receiver are always active";
  }
  return rep;
}

}  // namespace aoi
