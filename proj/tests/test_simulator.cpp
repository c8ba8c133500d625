#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "aoi/conditional.hpp"
#include "aoi/simulator.hpp"
#include "support/recursion_checker.hpp"

using namespace aoi;
using aoi::check::RecursionChecker;

namespace {

BipolarTopology single_link(double r, double side = 100.0) {
  BipolarTopology t;
  t.region = {side, Boundary::torus};
  t.link_distance = r;
  t.tx.push_back({10.0, 10.0});
  t.rx.push_back({10.0 + r, 10.0});
  return t;
}

}  // namespace

TEST(Simulator, IsolatedPerfectLinkHasUnitAge) {
  SystemParams sp;
  sp.xi = 1.0;
  sp.p = 1.0;
  sp.lambda = 0.0;
  sp.sigma2 = 0.0;
  auto t = single_link(sp.r);
  SimConfig cfg;
  cfg.slots = 1000;
  ConstantAccess pol(1.0);
  auto m = run(t, sp, cfg, pol);
  EXPECT_DOUBLE_EQ(m.links[0].avg_aoi(), 1.0);
  EXPECT_DOUBLE_EQ(m.links[0].peak_aoi_mean(), 1.0);
  EXPECT_DOUBLE_EQ(m.links[0].emp_busy(), 1.0);
  EXPECT_DOUBLE_EQ(m.links[0].emp_success(), 1.0);
}

TEST(Simulator, NoiseLimitedSingleLinkMatchesClosedForm) {
  SystemParams sp;
  sp.lambda = 0.0;
  sp.r = 10.0;
  const double N = std::log(1.0 / 0.7);  // noise-only success 0.7
  sp.sigma2 = sp.ptx * N / (sp.theta * std::pow(sp.r, sp.alpha));
  for (auto [xi, p] : {std::pair{0.3, 0.8}, std::pair{0.7, 0.5}}) {
    sp.xi = xi;
    sp.p = p;
    SimConfig cfg;
    cfg.slots = 400000;
    cfg.seed = 17;
    ConstantAccess pol(p);
    auto m = run(single_link(sp.r), sp, cfg, pol);
    const double expect = 1.0 / xi - 1.0 + std::exp(N) / p;
    EXPECT_NEAR(m.links[0].avg_aoi() / expect, 1.0, 0.02) << xi << "," << p;
    EXPECT_NEAR(m.links[0].emp_success(), 0.7, 0.01);
  }
}

TEST(Simulator, UnitFadesAreDeterministic) {
  SystemParams sp;
  sp.lambda = 0.0;
  sp.r = 10.0;
  sp.xi = 1.0;
  SimConfig cfg;
  cfg.slots = 500;
  cfg.fading = FadingMode::unit;
  // SINR = rho r^{-alpha}; threshold just above and just below it.
  const double snr = sp.ptx / sp.sigma2 * std::pow(sp.r, -sp.alpha);
  for (double factor : {0.5, 2.0}) {
    sp.theta = snr * factor;
    ConstantAccess pol(1.0);
    auto m = run(single_link(sp.r), sp, cfg, pol);
    EXPECT_EQ(m.links[0].emp_success(), factor < 1.0 ? 1.0 : 0.0);
  }
}

TEST(Simulator, UnitFadesRequirePerPairModel) {
  SystemParams sp;
  SimConfig cfg;
  cfg.fading = FadingMode::unit;
  cfg.channel = ChannelModel::marginalized;
  ConstantAccess pol(1.0);
  EXPECT_THROW(run(single_link(sp.r), sp, cfg, pol), ParameterError);
}

TEST(Simulator, AgeRecursionHoldsEverySlot) {
  SystemParams sp;
  sp.lambda = 0.05;
  sp.xi = 0.4;
  sp.p = 0.7;
  auto t = sample_bipolar(sp, Region{60.0}, 3);
  for (auto ch : {ChannelModel::per_pair_fades, ChannelModel::marginalized}) {
    SimConfig cfg;
    cfg.slots = 2000;
    cfg.channel = ch;
    RecursionChecker chk;
    ConstantAccess pol(sp.p);
    run(t, sp, cfg, pol, &chk);
    EXPECT_EQ(chk.checked, t.size() * cfg.slots);
    EXPECT_EQ(chk.violations, 0u);
  }
}

TEST(Simulator, SeedDeterminism) {
  SystemParams sp;
  sp.lambda = 0.03;
  auto t = sample_bipolar(sp, Region{80.0}, 8);
  SimConfig cfg;
  cfg.slots = 3000;
  cfg.seed = 99;
  ConstantAccess pol(0.8);
  auto a = run(t, sp, cfg, pol), b = run(t, sp, cfg, pol);
  ASSERT_EQ(a.links.size(), b.links.size());
  for (std::size_t i = 0; i < a.links.size(); ++i) {
    EXPECT_EQ(a.links[i].aoi_sum, b.links[i].aoi_sum);
    EXPECT_EQ(a.links[i].successes, b.links[i].successes);
  }
  cfg.seed = 100;
  auto c = run(t, sp, cfg, pol);
  bool differs = false;
  for (std::size_t i = 0; i < a.links.size(); ++i) differs |= a.links[i].aoi_sum != c.links[i].aoi_sum;
  EXPECT_TRUE(differs);
}

TEST(Simulator, BusyFractionTracksOccupancyFormula) {
  SystemParams sp;
  sp.lambda = 0.05;
  sp.xi = 0.3;
  auto t = sample_bipolar(sp, Region{80.0}, 4);
  SimConfig cfg;
  cfg.slots = 40000;
  cfg.channel = ChannelModel::marginalized;
  ConstantAccess pol(1.0);
  auto m = run(t, sp, cfg, pol);
  double err = 0.0;
  std::size_t n = 0;
  for (const auto& l : m.links) {
    if (l.censored()) continue;
    const double busy = l.emp_busy();
    ASSERT_GE(busy, sp.xi * 0.95);
    err += busy - buffer_nonempty(sp.xi, 1.0, l.emp_success());
    ++n;
  }
  EXPECT_LT(std::abs(err / n), 0.005);
}

TEST(Simulator, MarginalizedChannelMatchesExplicitFades) {
  SystemParams sp;
  sp.lambda = 0.05;
  sp.xi = 0.5;
  sp.r = 1.0;
  auto t = sample_bipolar(sp, Region{60.0}, 12);
  SimConfig cfg;
  cfg.slots = 20000;
  ConstantAccess pol(1.0);
  cfg.channel = ChannelModel::per_pair_fades;
  auto a = run(t, sp, cfg, pol);
  cfg.channel = ChannelModel::marginalized;
  cfg.seed = 2;
  auto b = run(t, sp, cfg, pol);
  // Paired z-score of per-link success estimates.
  double z = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.links.size(); ++i) {
    const auto &x = a.links[i], &y = b.links[i];
    if (x.attempts < 100 || y.attempts < 100) continue;
    const double px = x.emp_success(), py = y.emp_success();
    const double var = px * (1 - px) / x.attempts + py * (1 - py) / y.attempts;
    if (var <= 0) continue;
    z += (px - py) / std::sqrt(var);
    ++n;
  }
  ASSERT_GT(n, 50u);
  EXPECT_LT(std::abs(z / std::sqrt(static_cast<double>(n))), 4.0);
  EXPECT_NEAR(a.summary().emp_success, b.summary().emp_success, 0.01);
}

TEST(Simulator, AutoCutoffIsNegligible) {
  SystemParams sp;
  sp.lambda = 0.05;
  sp.xi = 0.6;
  auto t = sample_bipolar(sp, Region{60.0}, 21);
  SimConfig cfg;
  cfg.slots = 20000;
  cfg.channel = ChannelModel::marginalized;
  ConstantAccess pol(1.0);
  auto a = run(t, sp, cfg, pol);
  cfg.interference_radius = 1e6;  // all pairs
  auto b = run(t, sp, cfg, pol);
  EXPECT_NEAR(a.summary().emp_success, b.summary().emp_success, 0.003);
}

TEST(Simulator, QueueOracleExamples) {
  auto d = queue_oracle(1.0, 1.0, 10000, 1);
  EXPECT_DOUBLE_EQ(d.avg_aoi, 1.0);
  EXPECT_DOUBLE_EQ(d.peak_aoi, 1.0);
  EXPECT_DOUBLE_EQ(d.busy_fraction, 1.0);
  auto h = queue_oracle(0.5, 0.5, 1000000, 7);
  EXPECT_NEAR(h.avg_aoi / 3.0, 1.0, 0.01);
  EXPECT_NEAR(h.peak_aoi / (10.0 / 3.0), 1.0, 0.01);
  EXPECT_NEAR(h.busy_fraction / (2.0 / 3.0), 1.0, 0.01);
}

TEST(Simulator, QueueOracleGridWithinMonteCarloError) {
  // 20 (xi, s) points, 20 independent replications each; the formula must sit within
  // 4.5 standard errors of the replication mean (t with 19 dof, 60 checks).
  std::mt19937_64 g(5);
  std::uniform_real_distribution<double> U(0.1, 1.0);
  for (int k = 0; k < 20; ++k) {
    const double xi = U(g), s = U(g);
    std::vector<double> avg, peak, busy;
    for (int rep = 0; rep < 20; ++rep) {
      auto e = queue_oracle(xi, s, 100000, 1000 * k + rep, 1000);
      avg.push_back(e.avg_aoi);
      peak.push_back(e.peak_aoi);
      busy.push_back(e.busy_fraction);
    }
    auto check = [&](const std::vector<double>& v, double truth, const char* what) {
      double m = 0, s2 = 0;
      for (double x : v) m += x;
      m /= v.size();
      for (double x : v) s2 += (x - m) * (x - m);
      const double se = std::sqrt(s2 / (v.size() - 1) / v.size());
      EXPECT_LT(std::abs(m - truth), std::max(4.5 * se, 1e-3 * truth)) << what << " xi=" << xi << " s=" << s;
    };
    check(avg, cond_avg_aoi(xi, 1.0, s), "avg");
    check(peak, cond_peak_aoi(xi, 1.0, s), "peak");
    check(busy, buffer_nonempty(xi, 1.0, s), "busy");
  }
}

TEST(Simulator, PeakOutageEmpiricalThresholds) {
  SystemParams sp;
  sp.lambda = 0.02;
  auto t = sample_bipolar(sp, Region{60.0}, 2);
  SimConfig cfg;
  cfg.slots = 3000;
  ConstantAccess pol(1.0);
  auto m = run(t, sp, cfg, pol);
  EXPECT_EQ(peak_outage_empirical(m, 0.0), 1.0);
  EXPECT_EQ(peak_outage_empirical(m, std::numeric_limits<double>::infinity()), 0.0);
  const double mid = peak_outage_empirical(m, 3.0);
  EXPECT_GE(mid, 0.0);
  EXPECT_LE(mid, 1.0);
}

TEST(Simulator, EmptyTopologyNetworkMetricsRejected) {
  SystemParams sp;
  sp.lambda = 0.0;
  auto t = sample_bipolar(sp, Region{50.0}, 1);
  SimConfig cfg;
  cfg.slots = 10;
  ConstantAccess pol(1.0);
  auto m = run(t, sp, cfg, pol);
  EXPECT_THROW(m.summary(), ParameterError);
}

TEST(Simulator, CensoredLinksAreFlagged) {
  SystemParams sp;
  sp.lambda = 0.0;
  sp.r = 10.0;
  sp.theta = 1e9;  // never decodes
  SimConfig cfg;
  cfg.slots = 100;
  ConstantAccess pol(1.0);
  auto m = run(single_link(sp.r), sp, cfg, pol);
  auto s = m.summary();
  EXPECT_TRUE(s.divergence);
  EXPECT_EQ(s.censored, 1u);
  EXPECT_EQ(peak_outage_empirical(m, 1e9), 1.0);
}

TEST(Simulator, MergeIsAssociative) {
  SimMetrics a, b, c;
  a.links.resize(2);
  b.links.resize(3);
  c.links.resize(1);
  a.links[0].aoi_sum = 1;
  b.links[2].aoi_sum = 2;
  c.links[0].aoi_sum = 3;
  SimMetrics left = a, right = b;
  left.merge(b);
  left.merge(c);
  right.merge(c);
  SimMetrics r2 = a;
  r2.merge(right);
  ASSERT_EQ(left.links.size(), r2.links.size());
  for (std::size_t i = 0; i < left.links.size(); ++i) EXPECT_EQ(left.links[i].aoi_sum, r2.links[i].aoi_sum);
}

TEST(Simulator, ScheduledAccessAtOneEqualsConstantOne) {
  SystemParams sp;
  sp.lambda = 0.03;
  auto t = sample_bipolar(sp, Region{60.0}, 6);
  SimConfig cfg;
  cfg.slots = 2000;
  ConstantAccess one(1.0);
  ScheduledAccess sched(std::vector<double>(t.size(), 1.0), std::vector<double>(t.size(), 1.0), 500);
  auto a = run(t, sp, cfg, one), b = run(t, sp, cfg, sched);
  for (std::size_t i = 0; i < a.links.size(); ++i) EXPECT_EQ(a.links[i].aoi_sum, b.links[i].aoi_sum);
}

TEST(Simulator, MetricsCsvSchema) {
  SystemParams sp;
  sp.lambda = 0.02;
  auto t = sample_bipolar(sp, Region{40.0}, 2);
  SimConfig cfg;
  cfg.slots = 200;
  ConstantAccess pol(1.0);
  auto m = run(t, sp, cfg, pol);
  std::stringstream ss;
  write_metrics_csv(ss, m);
  std::string line;
  std::getline(ss, line);
  EXPECT_EQ(line, "# aoi-sim-metrics v1");
  std::getline(ss, line);
  EXPECT_EQ(line, "link_id,emp_success,emp_busy,avg_aoi,peak_aoi_mean,attempts,deliveries,censored");
  std::size_t rows = 0;
  std::string last;
  while (std::getline(ss, line)) {
    ++rows;
    last = line;
  }
  EXPECT_EQ(rows, t.size() + 1);
  EXPECT_EQ(last.rfind("network,", 0), 0u);
}

TEST(Simulator, WarmupMustBeShorterThanRun) {
  SystemParams sp;
  SimConfig cfg;
  cfg.slots = 10;
  cfg.warmup = 10;
  ConstantAccess pol(1.0);
  EXPECT_THROW(run(single_link(sp.r), sp, cfg, pol), ParameterError);
}

// With xi = 1 every buffer stays full, so interferers are active independently with prob p and
// E[1/mu] = exp(N + Lambda C(alpha) p (1-p)^(delta-1)) holds exactly for the Poisson field.
TEST(Simulator, SaturatedBuffersMatchNegativeMoment) {
  SystemParams sp;
  sp.lambda = 0.05;
  sp.r = 0.5;
  sp.xi = 1.0;
  sp.p = 0.6;
  const DerivedParams dp = derive(sp);
  const double expect = std::exp(noise_exponent(sp, dp) + interference_scale(sp, dp) * dp.c_alpha * sp.p *
                                                              std::pow(1.0 - sp.p, dp.delta - 1.0));
  double sum = 0.0;
  std::size_t n = 0;
  for (std::uint64_t k = 0; k < 3; ++k) {
    const auto topo = sample_bipolar(sp, Region{100.0}, 50 + k);
    SimConfig cfg;
    cfg.slots = 20000;
    cfg.seed = 90 + k;
    cfg.channel = ChannelModel::marginalized;
    ConstantAccess pol(sp.p);
    for (const auto& l : run(topo, sp, cfg, pol).links) {
      sum += 1.0 / l.emp_success();
      ++n;
    }
  }
  EXPECT_NEAR(sum / static_cast<double>(n), expect, 0.01 * expect);
}
