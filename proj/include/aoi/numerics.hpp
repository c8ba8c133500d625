#pragma once

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <vector>

#include "aoi/errors.hpp"

namespace aoi::numerics {

inline constexpr double kQuadTol = 1e-13;

// Adaptive Gauss-Kronrod on a finite interval with a smooth integrand.
template <class F>
double integrate_smooth(F&& f, double a, double b, double tol = kQuadTol, double* err = nullptr) {
  double e = 0.0;
  double v = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 20, tol, &e);
  if (err) *err = e;
  return v;
}

// Tanh-sinh on a finite interval; tolerates integrable endpoint singularities.
// The functor receives (x, distance-to-nearest-endpoint) like boost's two-argument form.
template <class F>
double integrate_endpoint_singular(F&& f, double a, double b, double tol = kQuadTol,
                                   double* err = nullptr) {
  // thread_local: the rule grows its abscissa tables lazily.
  thread_local boost::math::quadrature::tanh_sinh<double> rule(15);
  double e = 0.0, l1 = 0.0;
  std::size_t levels = 0;
  double v = rule.integrate(f, a, b, tol, &e, &l1, &levels);
  if (err) *err = e;
  return v;
}

// Fixed tanh-sinh rule on (0,1). Stores x, 1-x and weights so that integrands
// singular at either end can be evaluated without cancellation.
struct FixedTanhSinh {
  std::vector<double> x, one_minus_x, w;

  explicit FixedTanhSinh(double h = 1.0 / 32.0, double t_max = 3.6) {
    const double half_pi = std::numbers::pi / 2.0;
    const int n = static_cast<int>(std::ceil(t_max / h));
    for (int k = -n; k <= n; ++k) {
      const double t = k * h;
      const double u = half_pi * std::sinh(t);
      // x = (1 + tanh u)/2, 1-x = (1 - tanh u)/2 = 1/(1+e^{2u})
      const double e2u = std::exp(2.0 * u);
      const double xm = 1.0 / (1.0 + e2u);         // 1 - x
      const double xp = 1.0 / (1.0 + 1.0 / e2u);   // x
      const double ch = std::cosh(u);
      const double wt = h * half_pi * std::cosh(t) / (2.0 * ch * ch);
      if (!(xp > 0.0) || !(xm > 0.0) || !std::isfinite(wt) || wt == 0.0) continue;
      x.push_back(xp);
      one_minus_x.push_back(xm);
      w.push_back(wt);
    }
  }
  std::size_t size() const { return x.size(); }
};

// Bisection for a strictly monotone function with f(lo), f(hi) of opposite sign.
// Runs until the bracket stops shrinking in floating point.
template <class F>
double bisect(F&& f, double lo, double hi, int max_iter = 200) {
  double flo = f(lo);
  if (flo == 0.0) return lo;
  for (int i = 0; i < max_iter; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double fm = f(mid);
    if (fm == 0.0) return mid;
    if ((fm > 0.0) == (flo > 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

struct LambertResult {
  double w;
  double residual;  // |w e^w - x|
  int iterations;
};

// Principal branch W0 for x >= 0 by Newton iteration.
inline LambertResult lambert_w0(double x) {
  if (!(x >= 0.0) || !std::isfinite(x)) throw ParameterError("lambert_w0: x must be finite and >= 0");
  if (x == 0.0) return {0.0, 0.0, 0};
  double w = std::log1p(x);
  if (x > 3.0) w = std::log(x) - std::log(std::log(x));
  int it = 0;
  for (; it < 100; ++it) {
    const double ew = std::exp(w);
    const double f = w * ew - x;
    const double step = f / (ew * (w + 1.0));
    w -= step;
    if (std::abs(step) <= 1e-16 * std::max(1.0, std::abs(w))) {
      ++it;
      break;
    }
  }
  return {w, std::abs(w * std::exp(w) - x), it};
}

inline double log_beta(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

}  // namespace aoi::numerics
