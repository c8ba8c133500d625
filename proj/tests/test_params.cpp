#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "aoi/params.hpp"

using namespace aoi;

TEST(Params, UnitConversions) {
  EXPECT_NEAR(dbm_to_mw(17.0), 50.1187233627, 1e-9);
  EXPECT_DOUBLE_EQ(db_to_linear(0.0), 1.0);
  EXPECT_NEAR(dbm_to_mw(-90.0), 1e-9, 1e-24);
}

TEST(Params, CAlphaAtFourIsHalfPi) {
  EXPECT_NEAR(c_alpha_quadrature(4.0), std::numbers::pi / 2.0, 1e-12);
}

TEST(Params, CAlphaDefaultExponentMatchesReflection) {
  EXPECT_NEAR(c_alpha_quadrature(3.8), c_alpha_closed_form(3.8), 1e-10);
}

TEST(Params, CAlphaSweepMatchesReflection) {
  for (double a = 2.1; a <= 6.0 + 1e-12; a += 0.05)
    EXPECT_NEAR(c_alpha_quadrature(a), c_alpha_closed_form(a), 1e-9 * c_alpha_closed_form(a)) << a;
}

TEST(Params, DeriveDefaults) {
  SystemParams sp;
  auto d = derive(sp);
  EXPECT_NEAR(d.rho, 50.1187233627e9, 1e-1);
  EXPECT_DOUBLE_EQ(d.delta, 2.0 / 3.8);
  EXPECT_NEAR(noise_exponent(sp, d), std::pow(0.5, 3.8) / d.rho, 1e-25);
}

TEST(Params, DeriveIsBitIdentical) {
  std::mt19937_64 g(3);
  std::uniform_real_distribution<double> U(2.05, 6.0);
  for (int i = 0; i < 20; ++i) {
    SystemParams sp;
    sp.alpha = U(g);
    auto a = derive(sp), b = derive(sp);
    EXPECT_EQ(a.c_alpha, b.c_alpha);
    EXPECT_EQ(a.delta, b.delta);
    EXPECT_EQ(a.rho, b.rho);
  }
}

TEST(Params, Validation) {
  SystemParams sp;
  sp.alpha = 2.0;
  EXPECT_THROW(derive(sp), DivergenceError);
  sp = {};
  sp.xi = 0.0;
  EXPECT_THROW(derive(sp), ParameterError);
  sp = {};
  sp.p = 1.5;
  EXPECT_THROW(derive(sp), ParameterError);
  sp = {};
  sp.r = 0.0;
  EXPECT_THROW(derive(sp), ParameterError);
  sp = {};
  sp.sigma2 = 0.0;
  auto d = derive(sp);
  EXPECT_TRUE(std::isinf(d.rho));
  EXPECT_EQ(noise_exponent(sp, d), 0.0);
}

TEST(Params, LambertW0) {
  auto w = numerics::lambert_w0(1.0);
  EXPECT_NEAR(w.w, 0.5671432904097838, 1e-15);
  EXPECT_LT(w.residual, 1e-12);
  for (double x : {1e-8, 0.1, 0.5, 2.0, 10.0, 1e3}) {
    auto r = numerics::lambert_w0(x);
    EXPECT_LT(r.residual, 1e-12 * std::max(1.0, x)) << x;
  }
}
