#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "aoi/errors.hpp"
#include "aoi/numerics.hpp"

namespace aoi {

inline double dbm_to_mw(double dbm) { return std::pow(10.0, dbm / 10.0); }
inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double mw_to_dbm(double mw) { return 10.0 * std::log10(mw); }

// Model constants. All values linear; dB conversion happens at the config boundary.
struct SystemParams {
  double lambda = 0.01;              // transmitters per m^2
  double r = 0.5;                    // link distance, m
  double alpha = 3.8;                // path-loss exponent
  double theta = 1.0;                // SINR threshold
  double p = 1.0;                    // ALOHA access probability
  double xi = 0.5;                   // arrival probability per slot
  double ptx = dbm_to_mw(17.0);      // mW
  double sigma2 = dbm_to_mw(-90.0);  // mW

  void validate() const {
    auto bad = [](const std::string& what) { throw ParameterError("SystemParams: " + what); };
    if (!(alpha > 2.0) || !std::isfinite(alpha)) throw DivergenceError("SystemParams: alpha must exceed 2, the interference integral diverges otherwise");
    if (!(xi > 0.0 && xi <= 1.0)) bad("xi must lie in (0,1]");
    if (!(p > 0.0 && p <= 1.0)) bad("p must lie in (0,1]");
    if (!(theta > 0.0) || !std::isfinite(theta)) bad("theta must be positive");
    if (!(r > 0.0) || !std::isfinite(r)) bad("r must be positive");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) bad("lambda must be >= 0");
    if (!(ptx > 0.0) || !std::isfinite(ptx)) bad("ptx must be positive");
    if (!(sigma2 >= 0.0) || !std::isfinite(sigma2)) bad("sigma2 must be >= 0");
  }
};

// C(alpha) = int_0^inf dv / (1 + v^{alpha/2}), by quadrature.
// [0,1] directly; [1,inf) mapped to (0,1] via v = s^{-1/(k-1)}, k = alpha/2.
inline double c_alpha_quadrature(double alpha) {
  if (!(alpha > 2.0)) throw DivergenceError("C(alpha) diverges for alpha <= 2");
  const double k = alpha / 2.0;
  const double e = k / (k - 1.0);
  auto near = [k](double v, double) { return 1.0 / (1.0 + std::pow(v, k)); };
  auto far = [e](double s, double) { return 1.0 / (1.0 + std::pow(s, e)); };
  const double a = numerics::integrate_endpoint_singular(near, 0.0, 1.0);
  const double b = numerics::integrate_endpoint_singular(far, 0.0, 1.0) / (k - 1.0);
  return a + b;
}

// Reflection-formula value, used only as an independent check.
inline double c_alpha_closed_form(double alpha) {
  const double x = 2.0 * std::numbers::pi / alpha;
  return x / std::sin(x);
}

struct DerivedParams {
  double rho;      // ptx / sigma2, +inf when sigma2 == 0
  double delta;    // 2 / alpha
  double c_alpha;  // int_0^inf dv / (1 + v^{alpha/2})
};

inline DerivedParams derive(const SystemParams& sp) {
  sp.validate();
  DerivedParams d{};
  d.rho = sp.sigma2 > 0.0 ? sp.ptx / sp.sigma2 : std::numeric_limits<double>::infinity();
  d.delta = 2.0 / sp.alpha;
  d.c_alpha = c_alpha_quadrature(sp.alpha);
  return d;
}

// theta r^alpha / rho: the noise exponent, so that the noise-only success is exp(-noise_exponent).
inline double noise_exponent(const SystemParams& sp, const DerivedParams& d) {
  if (std::isinf(d.rho)) return 0.0;
  return sp.theta * std::pow(sp.r, sp.alpha) / d.rho;
}

// lambda pi r^2 theta^delta: the scale multiplying every interference integral.
inline double interference_scale(const SystemParams& sp, const DerivedParams& d) {
  return sp.lambda * std::numbers::pi * sp.r * sp.r * std::pow(sp.theta, d.delta);
}

}  // namespace aoi
