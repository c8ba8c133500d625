#pragma once

#include <cmath>

#include "aoi/errors.hpp"

namespace aoi {

namespace detail {
inline void check_queue_inputs(double xi, double p, double mu, bool allow_zero_service) {
  if (!(xi > 0.0 && xi <= 1.0)) throw ParameterError("xi must lie in (0,1]");
  if (!(p > 0.0 && p <= 1.0)) throw ParameterError("p must lie in (0,1]");
  if (!(mu >= 0.0 && mu <= 1.0)) throw ParameterError("mu must lie in [0,1]");
  if (!allow_zero_service && !(p * mu > 0.0)) throw DivergenceError("age is infinite when p*mu == 0");
}
}  // namespace detail

// Mean age of an LCFS-R unit buffer with arrival prob xi and per-slot service prob p*mu.
inline double cond_avg_aoi(double xi, double p, double mu) {
  detail::check_queue_inputs(xi, p, mu, false);
  return 1.0 / xi + 1.0 / (p * mu) - 1.0;
}

// Mean age sampled at delivery instants.
inline double cond_peak_aoi(double xi, double p, double mu) {
  detail::check_queue_inputs(xi, p, mu, false);
  const double s = p * mu;
  return 1.0 / xi + 1.0 / s + 1.0 / (1.0 - (1.0 - xi) * (1.0 - s)) - 2.0;
}

// Stationary probability that the buffer holds a packet at the attempt instant.
inline double buffer_nonempty(double xi, double p, double mu) {
  detail::check_queue_inputs(xi, p, mu, true);
  return xi / (xi + (1.0 - xi) * p * mu);
}

// Effective interferer activity p * a(t) seen by the typical receiver from a link with success t.
inline double activity(double xi, double p, double t) { return p * xi / (xi + (1.0 - xi) * p * t); }

}  // namespace aoi
