#pragma once

#include <boost/math/special_functions/beta.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <numbers>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include "aoi/conditional.hpp"
#include "aoi/errors.hpp"
#include "aoi/geometry.hpp"
#include "aoi/numerics.hpp"
#include "aoi/params.hpp"

namespace aoi {

enum class Provenance { beta, exact, point_mass, user };

inline const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::beta: return "beta";
    case Provenance::exact: return "exact";
    case Provenance::point_mass: return "point_mass";
    default: return "user";
  }
}

struct PointMass {
  double at;
};
struct BetaShape {
  double a, b;
};
// CDF values F[i] = P(mu <= u[i]) on an increasing grid with u.front() == 0 and u.back() == 1.
struct Tabulated {
  std::vector<double> u, F;
};

namespace detail {

// E[g(T)] for T ~ Beta(a,b). Subtracts g(1) so the (1-t)^{b-1} end stays integrable for tiny b.
template <class G>
double beta_expect(double a, double b, G&& g) {
  const double lb = numerics::log_beta(a, b);
  const double g1 = g(1.0);
  double m = a / (a + b);
  if (!(m > 1e-3 && m < 1.0 - 1e-3)) m = 0.5;
  auto dens = [&](double t, double omt) {
    if (!(t > 0.0) || !(omt > 0.0)) return 0.0;
    return (g(t) - g1) * std::exp((a - 1.0) * std::log(t) + (b - 1.0) * std::log(omt) - lb);
  };
  auto lower = [&](double x, double) { return dens(x, 1.0 - x); };
  auto upper = [&](double x, double xc) { return dens(x, xc > 0.0 ? xc : 1.0 - x); };
  const double lo = numerics::integrate_endpoint_singular(lower, 0.0, m, 1e-12);
  const double hi = numerics::integrate_endpoint_singular(upper, m, 1.0, 1e-12);
  return g1 + lo + hi;
}

}  // namespace detail

// Distribution of the conditional success probability across links.
class MetaDistribution {
 public:
  using Rep = std::variant<PointMass, BetaShape, Tabulated>;

  static MetaDistribution point_mass(double at) {
    if (!(at >= 0.0 && at <= 1.0)) throw ParameterError("point mass must lie in [0,1]");
    return MetaDistribution(PointMass{at}, Provenance::point_mass);
  }
  static MetaDistribution beta(double a, double b, Provenance prov = Provenance::beta) {
    if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b))
      throw ParameterError("Beta shapes must be positive and finite");
    return MetaDistribution(BetaShape{a, b}, prov);
  }
  static MetaDistribution tabulated(std::vector<double> u, std::vector<double> F, Provenance prov = Provenance::exact) {
    if (u.size() != F.size() || u.size() < 2) throw ParameterError("tabulated CDF needs matching grids of size >= 2");
    if (u.front() != 0.0 || u.back() != 1.0) throw ParameterError("tabulated CDF grid must span [0,1]");
    for (std::size_t i = 1; i < u.size(); ++i) {
      if (!(u[i] > u[i - 1])) throw ParameterError("tabulated CDF grid must be increasing");
      if (F[i] < F[i - 1]) throw ParameterError("tabulated CDF must be nondecreasing");
    }
    if (F.front() != 0.0 || F.back() != 1.0) throw ParameterError("tabulated CDF must run from 0 to 1");
    return MetaDistribution(Tabulated{std::move(u), std::move(F)}, prov);
  }

  const Rep& rep() const { return rep_; }
  Provenance provenance() const { return prov_; }

  // P(mu <= u).
  double cdf(double u) const {
    if (u < 0.0) return 0.0;
    if (u >= 1.0) return 1.0;
    return std::visit(
        [u](const auto& r) -> double {
          using T = std::decay_t<decltype(r)>;
          if constexpr (std::is_same_v<T, PointMass>) {
            return u >= r.at ? 1.0 : 0.0;
          } else if constexpr (std::is_same_v<T, BetaShape>) {
            return u <= 0.0 ? 0.0 : boost::math::ibeta(r.a, r.b, u);
          } else {
            auto it = std::upper_bound(r.u.begin(), r.u.end(), u);
            const std::size_t i = static_cast<std::size_t>(it - r.u.begin());
            if (i >= r.u.size()) return 1.0;
            const double w = (u - r.u[i - 1]) / (r.u[i] - r.u[i - 1]);
            return r.F[i - 1] + w * (r.F[i] - r.F[i - 1]);
          }
        },
        rep_);
  }

  // E[g(mu)].
  template <class G>
  double expect(G&& g) const {
    return std::visit(
        [&g](const auto& r) -> double {
          using T = std::decay_t<decltype(r)>;
          if constexpr (std::is_same_v<T, PointMass>) {
            return g(r.at);
          } else if constexpr (std::is_same_v<T, BetaShape>) {
            return detail::beta_expect(r.a, r.b, g);
          } else {
            double s = 0.0;
            for (std::size_t i = 1; i < r.u.size(); ++i) {
              const double dF = r.F[i] - r.F[i - 1];
              if (dF > 0.0) s += dF * g(0.5 * (r.u[i] + r.u[i - 1]));
            }
            return s;
          }
        },
        rep_);
  }

  double mean() const {
    if (auto* b = std::get_if<BetaShape>(&rep_)) return b->a / (b->a + b->b);
    return expect([](double t) { return t; });
  }
  double second_moment() const {
    if (auto* b = std::get_if<BetaShape>(&rep_)) return b->a * (b->a + 1.0) / ((b->a + b->b) * (b->a + b->b + 1.0));
    return expect([](double t) { return t * t; });
  }

 private:
  MetaDistribution(Rep r, Provenance p) : rep_(std::move(r)), prov_(p) {}
  Rep rep_;
  Provenance prov_;
};

// V_k = int_0^inf dv / (1 + v^{alpha/2})^k by quadrature (split at v = 1).
inline double interference_moment_integral(int k, double alpha) {
  if (k < 1) throw ParameterError("interference_moment_integral: k >= 1");
  const double a = alpha / 2.0;
  const double e = a / (a - 1.0);
  const double kk = static_cast<double>(k);
  auto near = [a, kk](double v, double) { return std::pow(1.0 + std::pow(v, a), -kk); };
  auto far = [e, kk](double s, double) {
    if (s <= 0.0) return 0.0;
    return std::pow(s, (kk - 1.0) * e) * std::pow(1.0 + std::pow(s, e), -kk);
  };
  return numerics::integrate_endpoint_singular(near, 0.0, 1.0) +
         numerics::integrate_endpoint_singular(far, 0.0, 1.0) / (a - 1.0);
}

// Closed form of the same integral, delta * B(k - delta, delta); used for cross-checks.
inline double interference_moment_closed_form(int k, double alpha) {
  const double d = 2.0 / alpha;
  return d * std::exp(numerics::log_beta(k - d, d));
}

// eta^(k) for interferer success distribution `dist`: (-1)^{k+1} V_k E[q(T)^k].
inline double eta_term(int k, const MetaDistribution& dist, const SystemParams& sp, double v_k) {
  const double e = dist.expect([&](double t) { return std::pow(activity(sp.xi, sp.p, t), k); });
  return (k % 2 == 1 ? 1.0 : -1.0) * v_k * e;
}

// eta^(k) when every interferer is active with probability p*xi.
inline double favorable_eta(int k, const SystemParams& sp) {
  return (k % 2 == 1 ? 1.0 : -1.0) * std::pow(sp.p * sp.xi, k) * interference_moment_closed_form(k, sp.alpha);
}

// m-th moment of the success probability given the interferer distribution, via the binomial expansion.
inline double integer_moment(int m, const MetaDistribution& dist, const DerivedParams& dp, const SystemParams& sp) {
  if (m < 1) throw ParameterError("integer_moment: m >= 1");
  const double lam = interference_scale(sp, dp);
  double sum = 0.0;
  if (lam > 0.0) {
    double binom = 1.0;
    for (int k = 1; k <= m; ++k) {
      binom = binom * (m - k + 1) / k;
      sum += binom * eta_term(k, dist, sp, interference_moment_integral(k, sp.alpha));
    }
  }
  return std::exp(-m * noise_exponent(sp, dp) - lam * sum);
}

namespace detail {

inline std::complex<double> cexpm1(std::complex<double> z) {
  const double a = z.real(), b = z.imag();
  const double s = std::sin(0.5 * b);
  return {std::expm1(a) * std::cos(b) - 2.0 * s * s, std::exp(a) * std::sin(b)};
}

inline std::complex<double> clog1p(std::complex<double> w) {
  const double u = w.real(), v = w.imag();
  return {0.5 * std::log1p(2.0 * u + u * u + v * v), std::atan2(v, 1.0 + u)};
}

}  // namespace detail

struct MgfOptions {
  int t_nodes = 33;                 // Chebyshev-Lobatto nodes for the expectation over interferer success
  double step = 1.0 / 32.0;         // tanh-sinh step on the deformed x-path
  double path_depth = 1.0;          // x(tau) = tau - i c tau (1 - tau)
};

// log M(s) = -s N - Lambda E_F[K(s, q(T))],
// K(s,q) = delta int_0^1 [1 - (1 - q x)^s] x^{-delta-1} (1-x)^{delta-1} dx.
// The x-integral runs on a path bent into the lower half plane so (1-qx)^{s} decays for Im s > 0;
// Im s < 0 uses conjugate symmetry. The T-expectation is exact for degree-(n-1) polynomials in T.
class MgfEvaluator {
 public:
  MgfEvaluator(const MetaDistribution& dist, const DerivedParams& dp, const SystemParams& sp, MgfOptions opt = {})
      : noise_(noise_exponent(sp, dp)), lam_(interference_scale(sp, dp)) {
    sp.validate();
    build_t_rule(dist, sp, opt.t_nodes);
    build_path(dp.delta, opt);
  }

  std::complex<double> log_mgf(std::complex<double> s) const {
    if (s.imag() < 0.0) return std::conj(log_mgf(std::conj(s)));
    std::complex<double> acc = 0.0;
    if (lam_ > 0.0) {
      const std::size_t nx = base_.size();
      for (std::size_t i = 0; i < tw_.size(); ++i) {
        if (tw_[i] == 0.0) continue;
        std::complex<double> k = 0.0;
        const std::complex<double>* L = &logs_[i * nx];
        for (std::size_t j = 0; j < nx; ++j) k -= base_[j] * detail::cexpm1(s * L[j]);
        acc += tw_[i] * k;
      }
    }
    return -s * noise_ - lam_ * acc;
  }

  double noise() const { return noise_; }
  double scale() const { return lam_; }

 private:
  void build_t_rule(const MetaDistribution& dist, const SystemParams& sp, int n_nodes) {
    if (auto* pm = std::get_if<PointMass>(&dist.rep())) {
      q_ = {activity(sp.xi, sp.p, pm->at)};
      tw_ = {1.0};
      return;
    }
    const int n = std::max(2, n_nodes) - 1;
    std::vector<double> t(n + 1), bw(n + 1);
    for (int i = 0; i <= n; ++i) {
      t[i] = 0.5 * (1.0 - std::cos(std::numbers::pi * i / n));
      bw[i] = (i % 2 ? -1.0 : 1.0) * ((i == 0 || i == n) ? 0.5 : 1.0);
    }
    q_.resize(n + 1);
    tw_.resize(n + 1);
    for (int i = 0; i <= n; ++i) {
      q_[i] = activity(sp.xi, sp.p, t[i]);
      auto basis = [&, i](double x) {
        double den = 0.0, num = 0.0;
        for (int k = 0; k <= n; ++k) {
          const double d = x - t[k];
          if (d == 0.0) return k == i ? 1.0 : 0.0;
          const double c = bw[k] / d;
          den += c;
          if (k == i) num = c;
        }
        return num / den;
      };
      tw_[i] = dist.expect(basis);
    }
  }

  void build_path(double delta, const MgfOptions& opt) {
    numerics::FixedTanhSinh rule(opt.step);
    const double c = opt.path_depth;
    const std::complex<double> I(0.0, 1.0);
    base_.clear();
    std::vector<std::complex<double>> x, omx;
    for (std::size_t k = 0; k < rule.size(); ++k) {
      const double tau = rule.x[k], omt = rule.one_minus_x[k];
      const std::complex<double> xk = tau * (1.0 - I * c * omt);
      const std::complex<double> omxk = omt * (1.0 + I * c * tau);
      const std::complex<double> dx = 1.0 - I * c * (omt - tau);
      const std::complex<double> w =
          delta * rule.w[k] * dx * std::pow(xk, -delta - 1.0) * std::pow(omxk, delta - 1.0);
      if (!std::isfinite(w.real()) || !std::isfinite(w.imag())) continue;
      base_.push_back(w);
      x.push_back(xk);
      omx.push_back(omxk);
    }
    logs_.resize(q_.size() * base_.size());
    for (std::size_t i = 0; i < q_.size(); ++i) {
      const double q = q_[i];
      for (std::size_t j = 0; j < base_.size(); ++j) {
        const std::complex<double> qx = q * x[j];
        logs_[i * base_.size() + j] =
            std::abs(qx) < 0.5 ? detail::clog1p(-qx) : std::log((1.0 - q) + q * omx[j]);
      }
    }
  }

  double noise_, lam_;
  std::vector<double> q_, tw_;
  std::vector<std::complex<double>> base_, logs_;
};

inline std::complex<double> mgf_exponent(std::complex<double> s, const MetaDistribution& dist, const DerivedParams& dp,
                                         const SystemParams& sp, MgfOptions opt = {}) {
  return MgfEvaluator(dist, dp, sp, opt).log_mgf(s);
}

struct GilPelaezOptions {
  double log_span = 16.0;         // period in -ln(mu); mass of mu below e^{-span} aliases
  double omega_max = 6000.0;      // frequency cap
  double tail_tolerance = 1e-8;   // stop early once |M(j w)|/w falls below this
};

struct GilPelaezResult {
  std::vector<double> u, F;
  double omega_stop = 0.0;        // last frequency summed
  bool tapered = false;           // true when the cap was hit and a Gaussian taper was applied
  double smoothing_width = 0.0;   // sd of the Gaussian smoothing in -ln(mu) when tapered
  double tail_bound = 0.0;        // |M(j omega_stop)| / omega_stop
  std::size_t evaluations = 0;
  bool clamped = false;           // some raw value fell outside [0,1] by more than 1e-6
};

// F(u) = 1/2 - (1/pi) int_0^inf Im{u^{-jw} M(jw)} dw / w, evaluated as a midpoint sum in w.
// The midpoint grid keeps w = 0 out of the sum; the integrand is finite there.
inline GilPelaezResult gil_pelaez_cdf(const std::vector<double>& u, const MgfEvaluator& mgf, GilPelaezOptions opt = {}) {
  GilPelaezResult res;
  res.u = u;
  const double dw = 2.0 * std::numbers::pi / opt.log_span;
  std::vector<double> w;
  std::vector<std::complex<double>> M;
  for (std::size_t k = 0;; ++k) {
    const double om = (static_cast<double>(k) + 0.5) * dw;
    if (om > opt.omega_max) {
      res.tapered = true;
      break;
    }
    const std::complex<double> m = std::exp(mgf.log_mgf({0.0, om}));
    w.push_back(om);
    M.push_back(m);
    res.omega_stop = om;
    res.tail_bound = std::abs(m) / om;
    if (res.tail_bound < opt.tail_tolerance) break;
  }
  res.evaluations = w.size();
  std::vector<double> taper(w.size(), 1.0);
  if (res.tapered) {
    const double wc = opt.omega_max / 6.0;
    res.smoothing_width = 1.0 / wc;
    for (std::size_t k = 0; k < w.size(); ++k) taper[k] = std::exp(-0.5 * (w[k] / wc) * (w[k] / wc));
  }
  res.F.resize(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (u[i] <= 0.0) {
      res.F[i] = 0.0;
      continue;
    }
    if (u[i] >= 1.0) {
      res.F[i] = 1.0;
      continue;
    }
    const double y = std::log(u[i]);
    double s = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
      const std::complex<double> ph(std::cos(w[k] * y), -std::sin(w[k] * y));
      s += (ph * M[k]).imag() * taper[k] / w[k];
    }
    double F = 0.5 - dw / std::numbers::pi * s;
    if (F < -1e-6 || F > 1.0 + 1e-6) res.clamped = true;
    res.F[i] = std::clamp(F, 0.0, 1.0);
  }
  return res;
}

inline double gil_pelaez_cdf(double u, const MetaDistribution& dist, const DerivedParams& dp, const SystemParams& sp,
                             GilPelaezOptions opt = {}) {
  MgfEvaluator mgf(dist, dp, sp);
  return gil_pelaez_cdf(std::vector<double>{u}, mgf, opt).F[0];
}

struct BetaIterate {
  double kappa, beta, c1, c2;
};

struct BetaApprox {
  double kappa = 1.0;
  double beta = 0.0;
  int iteration_count = 0;
  bool converged = false;
  bool degenerate = false;  // variance below 1e-12; represented as a point mass at kappa
  double c1 = 1.0, c2 = 1.0;
  std::vector<BetaIterate> history;

  double shape_a() const { return kappa * beta / (1.0 - kappa); }
  double shape_b() const { return beta; }
  MetaDistribution distribution() const {
    if (degenerate) return MetaDistribution::point_mass(kappa);
    return MetaDistribution::beta(shape_a(), shape_b());
  }
};

struct BetaSolveOptions {
  double tol = 1e-10;
  int max_iter = 100;
  double damping = 0.0;  // 0: plain Picard; in (0,1): blend that fraction of the previous moments
};

// Moment-matched Beta projection of the fixed point, started from a point mass at t = 1.
inline BetaApprox solve_beta_fixed_point(const SystemParams& sp, const DerivedParams& dp, BetaSolveOptions opt = {}) {
  if (!(opt.tol > 0.0)) throw ParameterError("solve_beta_fixed_point: tol must be positive");
  sp.validate();
  const double N = noise_exponent(sp, dp);
  const double lam = interference_scale(sp, dp);
  const double v1 = interference_moment_integral(1, sp.alpha), v2 = interference_moment_integral(2, sp.alpha);
  BetaApprox out;
  MetaDistribution dist = MetaDistribution::point_mass(1.0);
  double prev_c1 = std::numeric_limits<double>::quiet_NaN(), prev_c2 = prev_c1;
  for (int it = 1; it <= opt.max_iter; ++it) {
    const double e1 = eta_term(1, dist, sp, v1), e2 = eta_term(2, dist, sp, v2);
    double c1 = std::exp(-N - lam * e1);
    double c2 = std::exp(-2.0 * N - lam * (2.0 * e1 + e2));
    if (opt.damping > 0.0 && it > 1) {
      c1 = opt.damping * prev_c1 + (1.0 - opt.damping) * c1;
      c2 = opt.damping * prev_c2 + (1.0 - opt.damping) * c2;
    }
    out.iteration_count = it;
    out.c1 = c1;
    out.c2 = c2;
    out.kappa = c1;
    const double var = c2 - c1 * c1;
    const bool done = it > 1 && std::abs(c1 - prev_c1) + std::abs(c2 - prev_c2) < opt.tol;
    if (var < 1e-12) {
      out.degenerate = true;
      out.beta = std::numeric_limits<double>::infinity();
      out.history.push_back({c1, out.beta, c1, c2});
      dist = MetaDistribution::point_mass(std::min(1.0, c1));
      if (done || lam == 0.0) {
        out.converged = true;
        break;
      }
    } else {
      out.degenerate = false;
      out.beta = (1.0 - c1) * (c1 - c2) / var;
      out.history.push_back({c1, out.beta, c1, c2});
      dist = MetaDistribution::beta(out.shape_a(), out.shape_b());
      if (done) {
        out.converged = true;
        break;
      }
    }
    prev_c1 = c1;
    prev_c2 = c2;
  }
  return out;
}

struct ExactSolveOptions {
  double tol = 1e-3;  // sup change of F between iterations
  int max_iter = 12;
  GilPelaezOptions gp;
  MgfOptions mgf;
};

struct ExactSolution {
  MetaDistribution dist = MetaDistribution::point_mass(1.0);
  int iterations = 0;
  bool converged = false;
  double last_change = 0.0;
  GilPelaezResult last_inversion;
};

// CDF grid for the exact solver: fine uniform spacing plus points clustering toward 1.
inline std::vector<double> exact_solver_grid() {
  std::vector<double> u;
  for (int i = 0; i <= 190; ++i) u.push_back(0.005 * i);
  for (double e = 1.35; e <= 4.0 + 1e-9; e += 0.05) u.push_back(1.0 - std::pow(10.0, -e));
  u.push_back(1.0);
  std::sort(u.begin(), u.end());
  u.erase(std::unique(u.begin(), u.end()), u.end());
  return u;
}

// Picard iteration of the exact fixed point with Gil-Pelaez inversion, started from `init`.
inline ExactSolution solve_exact_fixed_point(const SystemParams& sp, const DerivedParams& dp, const MetaDistribution& init,
                                             ExactSolveOptions opt = {}) {
  const std::vector<double> grid = exact_solver_grid();
  ExactSolution sol;
  sol.dist = init;
  std::vector<double> prev(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) prev[i] = init.cdf(grid[i]);
  for (int it = 1; it <= opt.max_iter; ++it) {
    MgfEvaluator mgf(sol.dist, dp, sp, opt.mgf);
    GilPelaezResult r = gil_pelaez_cdf(grid, mgf, opt.gp);
    std::vector<double> F = r.F;
    F.front() = 0.0;
    F.back() = 1.0;
    for (std::size_t i = 1; i < F.size(); ++i) F[i] = std::max(F[i], F[i - 1]);
    double change = 0.0;
    for (std::size_t i = 0; i < F.size(); ++i) change = std::max(change, std::abs(F[i] - prev[i]));
    sol.dist = MetaDistribution::tabulated(grid, F, Provenance::exact);
    sol.iterations = it;
    sol.last_change = change;
    sol.last_inversion = std::move(r);
    prev = std::move(F);
    if (change < opt.tol) {
      sol.converged = true;
      break;
    }
  }
  return sol;
}

// Empirical CDF of a sample, P(X <= u).
class EmpiricalCdf {
 public:
  explicit EmpiricalCdf(std::vector<double> xs) : xs_(std::move(xs)) {
    xs_.erase(std::remove_if(xs_.begin(), xs_.end(), [](double v) { return std::isnan(v); }), xs_.end());
    std::sort(xs_.begin(), xs_.end());
  }
  double operator()(double u) const {
    if (xs_.empty()) return std::numeric_limits<double>::quiet_NaN();
    return static_cast<double>(std::upper_bound(xs_.begin(), xs_.end(), u) - xs_.begin()) /
           static_cast<double>(xs_.size());
  }
  std::size_t size() const { return xs_.size(); }

 private:
  std::vector<double> xs_;
};

// Uniform comparison grid 0, 0.005, ..., 0.995. Stops short of 1, where per-link
// success estimates from finitely many attempts cannot resolve the distribution.
inline std::vector<double> cdf_comparison_grid() {
  std::vector<double> u;
  for (int i = 0; i < 200; ++i) u.push_back(0.005 * i);
  return u;
}

template <class F1, class F2>
double sup_distance(F1&& a, F2&& b, const std::vector<double>& grid) {
  double d = 0.0;
  for (double u : grid) d = std::max(d, std::abs(a(u) - b(u)));
  return d;
}

inline void write_cdf_csv(std::ostream& os, const MetaDistribution& dist, const std::vector<double>& grid) {
  os << "# aoi-meta-cdf v1 provenance=" << to_string(dist.provenance());
  if (auto* b = std::get_if<BetaShape>(&dist.rep())) os << " a=" << detail::fmt_double(b->a) << " b=" << detail::fmt_double(b->b);
  os << "\nu,F\n";
  for (double u : grid) os << detail::fmt_double(u) << ',' << detail::fmt_double(dist.cdf(u)) << '\n';
}

}  // namespace aoi
