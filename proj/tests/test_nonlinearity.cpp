#include <spbvp/nonlinearity.hpp>

#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace spbvp;

namespace {
std::vector<Nonlinearity> builtins() {
  return {Nonlinearity::linear(), Nonlinearity::critical(), Nonlinearity::power(3.0),
          Nonlinearity::power(1.5), Nonlinearity::power(5.0)};
}
}  // namespace

TEST(Nonlinearity, PointValues) {
  const auto lin = Nonlinearity::linear();
  EXPECT_DOUBLE_EQ(lin.f(2.0), 2.0);
  EXPECT_DOUBLE_EQ(lin.F(2.0), 2.0);
  const auto p3 = Nonlinearity::power(3.0);
  EXPECT_DOUBLE_EQ(p3.f(-2.0), -4.0);
  EXPECT_DOUBLE_EQ(p3.F(-2.0), 8.0 / 3.0);
  const auto crit = Nonlinearity::critical();
  EXPECT_DOUBLE_EQ(crit.f(-1.0), -1.0);
  EXPECT_DOUBLE_EQ(crit.F(-1.0), 0.2);
  for (const auto& nl : builtins()) {
    EXPECT_EQ(nl.F(0.0), 0.0) << nl.name();
    EXPECT_EQ(nl.f(0.0), 0.0) << nl.name();
  }
}

TEST(Nonlinearity, RejectsSingularPower) {
  EXPECT_THROW(Nonlinearity::power(1.0), std::invalid_argument);
  EXPECT_THROW(Nonlinearity::power(0.5), std::invalid_argument);
  EXPECT_NO_THROW(Nonlinearity::power(1.01));
}

TEST(Nonlinearity, GrowthCondition) {
  EXPECT_TRUE(check_growth(Nonlinearity::critical(), 10.0, 2001));
  EXPECT_FALSE(check_growth(Nonlinearity::power(6.0), 10.0, 2001));
  EXPECT_TRUE(check_growth(Nonlinearity::linear(), 100.0, 2001));
  EXPECT_TRUE(check_growth(Nonlinearity::power(5.0), 10.0, 2001));
  EXPECT_TRUE(check_growth(Nonlinearity::power(2.5), 10.0, 2001));
  EXPECT_THROW(check_growth(Nonlinearity::linear(), 0.0, 10), std::invalid_argument);
  EXPECT_THROW(check_growth(Nonlinearity::linear(), 1.0, 1), std::invalid_argument);
  // |s|^5 > 1 + s^4 already at s = 2: 32 > 17.
  EXPECT_FALSE(check_growth(Nonlinearity::power(6.0), 2.0, 2));
}

TEST(Nonlinearity, PrimitiveResidual) {
  for (const auto& nl : builtins()) EXPECT_EQ(primitive_residual(nl, 0.0), 0.0);
  EXPECT_LE(primitive_residual(Nonlinearity::linear(), 3.0), 1e-10);
  EXPECT_LE(primitive_residual(Nonlinearity::critical(), 2.0), 1e-8);
  for (const auto& nl : builtins()) {
    for (double s = -10.0; s <= 10.0; s += 0.37) {
      EXPECT_LE(primitive_residual(nl, s), 1e-8) << nl.name() << " s=" << s;
    }
  }
}

TEST(Nonlinearity, OddnessAndNonnegativePrimitive) {
  testkit::Rng rng(99);
  for (const auto& nl : builtins()) {
    for (int i = 0; i < 1000; ++i) {
      const double s = rng.uniform(-10.0, 10.0);
      EXPECT_EQ(nl.f(-s), -nl.f(s));
      EXPECT_EQ(nl.F(-s), nl.F(s));
      EXPECT_GE(nl.F(s), 0.0);
    }
  }
}

TEST(Nonlinearity, DerivativeMatchesFiniteDifference) {
  for (const auto& nl : builtins()) {
    for (double s : {-2.3, -0.7, 0.4, 1.9}) {
      const double e = 1e-6;
      const double fd = (nl.f(s + e) - nl.f(s - e)) / (2 * e);
      EXPECT_NEAR(nl.f_prime(s), fd, 1e-6 * std::max(1.0, std::abs(fd))) << nl.name();
    }
  }
}
