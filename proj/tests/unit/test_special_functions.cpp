#include <gtest/gtest.h>

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <cmath>
#include <numbers>

#include "bdmri/core/posterior.hpp"
#include "bdmri/core/special_functions.hpp"

using bdmri::UnivariateT;
namespace special = bdmri::special;

TEST(IncompleteBeta, MatchesBoost) {
  for (double a : {0.5, 1.0, 2.5, 15.0, 150.0}) {
    for (double b : {0.5, 1.0, 3.0, 40.0}) {
      for (double x : {0.001, 0.1, 0.37, 0.5, 0.9, 0.999}) {
        EXPECT_NEAR(special::incomplete_beta(a, b, x), boost::math::ibeta(a, b, x), 1e-13)
            << a << " " << b << " " << x;
      }
    }
  }
}

TEST(IncompleteBeta, RejectsBadArguments) {
  EXPECT_THROW(special::incomplete_beta(-1, 1, 0.5), bdmri::DataError);
  EXPECT_THROW(special::incomplete_beta(1, 1, 1.5), bdmri::DataError);
}

TEST(TQuantile, MedianIsLocation) {
  EXPECT_EQ(bdmri::t_quantile(0.5, UnivariateT{3.25, 2.0, 4.0}), 3.25);
}

TEST(TQuantile, CauchyClosedForm) {
  const UnivariateT cauchy{0.0, 1.0, 1.0};
  EXPECT_NEAR(bdmri::t_quantile(0.75, cauchy), std::tan(std::numbers::pi * 0.25), 1e-12);
  for (double p : {0.01, 0.2, 0.6, 0.95}) {
    EXPECT_NEAR(bdmri::t_quantile(p, cauchy), std::tan(std::numbers::pi * (p - 0.5)),
                1e-12 * std::max(1.0, std::abs(std::tan(std::numbers::pi * (p - 0.5)))));
  }
}

TEST(TQuantile, CdfRoundTrip) {
  for (double dof : {3.0, 4.0, 30.0, 300.0}) {
    for (double p : {0.01, 0.1, 0.25, 0.5, 0.9, 0.99}) {
      const UnivariateT t{-1.5, 0.7, dof};
      EXPECT_NEAR(t.cdf(t.quantile(p)), p, 1e-10) << dof << " " << p;
    }
  }
}

TEST(TQuantile, MatchesBoostOracle) {
  for (double dof : {0.5, 1.0, 2.0, 3.0, 7.5, 30.0, 300.0, 1e6}) {
    boost::math::students_t_distribution<double> ref(dof);
    for (double p : {0.001, 0.01, 0.1, 0.25, 0.4, 0.6, 0.75, 0.9, 0.99, 0.999}) {
      const double expected = boost::math::quantile(ref, p);
      EXPECT_NEAR(special::student_t_quantile(p, dof), expected, 1e-9 * std::max(1.0, std::abs(expected)))
          << dof << " " << p;
      EXPECT_NEAR(special::student_t_cdf(expected, dof), p, 1e-12);
    }
  }
}

TEST(TQuantile, RejectsOutOfRange) {
  const UnivariateT t{0, 1, 3};
  EXPECT_THROW(t.quantile(0.0), bdmri::DataError);
  EXPECT_THROW(t.quantile(1.0), bdmri::DataError);
  EXPECT_THROW(t.quantile(-0.2), bdmri::DataError);
}

TEST(TQuantile, PointMassReturnsLocation) {
  const UnivariateT t{2.0, 0.0, 5.0};
  EXPECT_EQ(t.quantile(0.01), 2.0);
  EXPECT_EQ(t.quantile(0.99), 2.0);
}
