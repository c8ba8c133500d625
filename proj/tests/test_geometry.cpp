#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "aoi/geometry.hpp"

using namespace aoi;

namespace {

// Ripley K on the torus (no edge correction needed).
std::vector<double> ripley_k(const std::vector<Point>& pts, const Region& reg, const std::vector<double>& hs) {
  std::vector<double> k(hs.size(), 0.0);
  const double n = static_cast<double>(pts.size());
  if (pts.size() < 2) return k;
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      const double d = torus_distance(pts[i], pts[j], reg);
      for (std::size_t m = 0; m < hs.size(); ++m)
        if (d <= hs[m]) k[m] += 2.0;
    }
  const double area = reg.side * reg.side;
  for (auto& v : k) v *= area / (n * (n - 1.0));
  return k;
}

}  // namespace

TEST(Geometry, TorusDistanceBasics) {
  Region reg{100.0, Boundary::torus};
  EXPECT_EQ(torus_distance({0, 0}, {0, 0}, reg), 0.0);
  EXPECT_NEAR(torus_distance({1, 0}, {99, 0}, reg), 2.0, 1e-12);
  EXPECT_NEAR(torus_distance({0, 0}, {50, 50}, reg), 50.0 * std::numbers::sqrt2, 1e-12);
  Region open{100.0, Boundary::open};
  EXPECT_NEAR(torus_distance({1, 0}, {99, 0}, open), 98.0, 1e-12);
}

TEST(Geometry, TorusMetricFuzz) {
  Region reg{73.0, Boundary::torus};
  std::mt19937_64 g(11);
  std::uniform_real_distribution<double> U(0.0, reg.side);
  for (int i = 0; i < 100000; ++i) {
    Point a{U(g), U(g)}, b{U(g), U(g)}, c{U(g), U(g)};
    const double ab = torus_distance(a, b, reg), bc = torus_distance(b, c, reg), ac = torus_distance(a, c, reg);
    ASSERT_LE(ac, ab + bc + 1e-9);
    ASSERT_EQ(ab, torus_distance(b, a, reg));
    ASSERT_LE(ab, reg.side * std::numbers::sqrt2 / 2.0 + 1e-12);
  }
}

TEST(Geometry, TranslationInvariance) {
  SystemParams sp;
  sp.lambda = 0.02;
  Region reg{50.0, Boundary::torus};
  auto t = sample_bipolar(sp, reg, 5);
  const double sx = 17.3, sy = 41.9;
  for (std::size_t i = 0; i + 1 < t.size(); ++i) {
    Point a = t.tx[i], b = t.rx[i + 1];
    Point a2{wrap(a.x + sx, reg.side), wrap(a.y + sy, reg.side)};
    Point b2{wrap(b.x + sx, reg.side), wrap(b.y + sy, reg.side)};
    EXPECT_NEAR(torus_distance(a, b, reg), torus_distance(a2, b2, reg), 1e-9);
  }
}

TEST(Geometry, LinkDistanceInvariant) {
  SystemParams sp;
  sp.lambda = 0.05;
  Region reg{100.0, Boundary::torus};
  for (std::uint64_t s = 0; s < 20; ++s) {
    auto t = sample_bipolar(sp, reg, s);
    ASSERT_EQ(t.tx.size(), t.rx.size());
    for (std::size_t i = 0; i < t.size(); ++i) ASSERT_NEAR(torus_distance(t.tx[i], t.rx[i], reg), sp.r, 1e-9);
  }
}

TEST(Geometry, SeedDeterminism) {
  SystemParams sp;
  Region reg{100.0, Boundary::torus};
  auto a = sample_bipolar(sp, reg, 42), b = sample_bipolar(sp, reg, 42), c = sample_bipolar(sp, reg, 43);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.tx[i].x, b.tx[i].x);
    EXPECT_EQ(a.rx[i].y, b.rx[i].y);
  }
  EXPECT_TRUE(a.size() != c.size() || a.tx[0].x != c.tx[0].x);
}

TEST(Geometry, EmptyTopologyIsValid) {
  SystemParams sp;
  sp.lambda = 0.0;
  auto t = sample_bipolar(sp, Region{100.0}, 1);
  EXPECT_EQ(t.size(), 0u);
}

TEST(Geometry, PoissonMeanCount) {
  SystemParams sp;
  sp.lambda = 0.01;
  Region reg{100.0, Boundary::torus};
  double sum = 0.0;
  const int n = 2000;
  for (int s = 0; s < n; ++s) sum += static_cast<double>(sample_bipolar(sp, reg, s).size());
  // Poisson(100): sd of the mean is 10/sqrt(n)
  EXPECT_NEAR(sum / n, 100.0, 4.0 * 10.0 / std::sqrt(n));
}

TEST(Geometry, CompleteSpatialRandomness) {
  SystemParams sp;
  sp.lambda = 0.01;
  Region reg{100.0, Boundary::torus};
  const std::vector<double> hs{2.0, 5.0, 10.0, 20.0};
  const int seeds = 500;

  // Reference envelope from an independent uniform sampler with the same counts.
  std::mt19937_64 ref(999);
  std::uniform_real_distribution<double> U(0.0, reg.side);
  std::vector<std::vector<double>> env(hs.size());
  for (int s = 0; s < 400; ++s) {
    std::vector<Point> pts(100);
    for (auto& p : pts) p = {U(ref), U(ref)};
    auto k = ripley_k(pts, reg, hs);
    for (std::size_t m = 0; m < hs.size(); ++m) env[m].push_back(k[m] - std::numbers::pi * hs[m] * hs[m]);
  }
  std::vector<double> lo(hs.size()), hi(hs.size());
  for (std::size_t m = 0; m < hs.size(); ++m) {
    std::sort(env[m].begin(), env[m].end());
    lo[m] = env[m][2];
    hi[m] = env[m][env[m].size() - 3];
  }

  std::vector<double> mean(hs.size(), 0.0);
  int inside = 0, total = 0;
  for (int s = 0; s < seeds; ++s) {
    auto t = sample_bipolar(sp, reg, 10000 + s);
    auto k = ripley_k(t.tx, reg, hs);
    // Envelope was built at n = 100 and the K deviation scales like 1/n.
    const double scale = static_cast<double>(t.size()) / 100.0;
    for (std::size_t m = 0; m < hs.size(); ++m) {
      mean[m] += k[m] / (std::numbers::pi * hs[m] * hs[m]);
      const double dev = (k[m] - std::numbers::pi * hs[m] * hs[m]) * scale;
      inside += dev >= lo[m] && dev <= hi[m];
      ++total;
    }
  }
  for (std::size_t m = 0; m < hs.size(); ++m) EXPECT_NEAR(mean[m] / seeds, 1.0, 0.05) << hs[m];
  EXPECT_GE(static_cast<double>(inside) / total, 0.97);
}

TEST(Geometry, NeighborsInEdgeCases) {
  SystemParams sp;
  sp.lambda = 0.02;
  Region reg{60.0, Boundary::torus};
  auto t = sample_bipolar(sp, reg, 3);
  ASSERT_GT(t.size(), 5u);
  EXPECT_TRUE(neighbors_in({t.tx[0], 0.0}, t, 0).empty());
  EXPECT_EQ(neighbors_in({t.tx[0], reg.side * std::numbers::sqrt2 / 2.0}, t, 0).size(), t.size() - 1);
}

TEST(Geometry, NeighborsMatchBruteForceAndCellGrid) {
  SystemParams sp;
  sp.lambda = 0.03;
  Region reg{80.0, Boundary::torus};
  std::mt19937_64 g(1);
  for (std::uint64_t s = 0; s < 30; ++s) {
    auto t = sample_bipolar(sp, reg, s);
    const double R = 1.0 + 30.0 * std::uniform_real_distribution<double>(0, 1)(g);
    CellGrid grid(t.rx, reg, R);
    for (std::size_t i = 0; i < t.size(); i += 7) {
      auto got = neighbors_in({t.tx[i], R}, t, i);
      std::vector<std::size_t> brute, cells;
      for (std::size_t j = 0; j < t.size(); ++j)
        if (j != i && torus_distance(t.tx[i], t.rx[j], reg) <= R) brute.push_back(j);
      grid.for_each_within(t.tx[i], R, [&](std::size_t j, double) {
        if (j != i) cells.push_back(j);
      });
      std::sort(cells.begin(), cells.end());
      ASSERT_EQ(got, brute);
      ASSERT_EQ(cells, brute);
    }
  }
}

TEST(Geometry, CsvRoundTrip) {
  SystemParams sp;
  sp.lambda = 0.02;
  auto t = sample_bipolar(sp, Region{50.0}, 9);
  std::stringstream ss;
  write_topology_csv(ss, t);
  auto u = read_topology_csv(ss);
  ASSERT_EQ(u.size(), t.size());
  EXPECT_EQ(u.region.side, t.region.side);
  EXPECT_EQ(u.link_distance, t.link_distance);
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_EQ(u.tx[i].x, t.tx[i].x);
    EXPECT_EQ(u.rx[i].y, t.rx[i].y);
  }
  std::stringstream bad("id,tx_x\n");
  EXPECT_THROW(read_topology_csv(bad), ParameterError);
}
