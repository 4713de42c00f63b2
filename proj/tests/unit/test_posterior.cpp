#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <random>

#include "bdmri/core/posterior.hpp"
#include "bdmri/core/serialization.hpp"
#include "test_support.hpp"

using namespace bdmri;
using bdmri::testing::random_matrix;
using bdmri::testing::random_spd;
using bdmri::testing::random_vector;

namespace {

LinearSystem constant_model() {
  VectorXd y(5);
  y << 1, 2, 3, 4, 5;
  return LinearSystem(MatrixXd::Ones(5, 1), NoisePrecision::identity(5), y);
}

// Symmetric inverse square root by eigendecomposition; a different square
// root from the triangular one used by the implementation.
MatrixXd inverse_sqrt_sym(const MatrixXd& w) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(w);
  return eig.eigenvectors() * eig.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
         eig.eigenvectors().transpose();
}

struct Explicit {
  MatrixXd h;
  MatrixXd zzt;
  double nu;
};

// Direct matrix route: explicit inverses, no trace identities.
Explicit explicit_route(const MatrixXd& phi, const MatrixXd& w, const MatrixXd& lambda) {
  const MatrixXd q_inv = (phi.transpose() * w * phi + lambda).inverse();
  const MatrixXd h = phi * q_inv * phi.transpose() * w;
  const MatrixXd i = MatrixXd::Identity(phi.rows(), phi.rows());
  const MatrixXd z = (i - h) * inverse_sqrt_sym(w);
  return {h, z * z.transpose(), z.squaredNorm()};
}

}  // namespace

TEST(FitPosterior, ConstantModelClosedForm) {
  const auto post = fit_posterior(constant_model());
  EXPECT_NEAR(post.mean()[0], 3.0, 1e-12);
  EXPECT_NEAR(post.dof(), 4.0, 1e-12);
  EXPECT_NEAR(post.sigma2_hat(), 2.5, 1e-12);
  EXPECT_NEAR(post.covariance()(0, 0), 0.5, 1e-12);
  EXPECT_FALSE(post.heavy_tailed());
  EXPECT_TRUE(post.q_factor().has_value());
  EXPECT_NEAR(post.condition_estimate(), 1.0, 1e-12);
}

TEST(FitPosterior, NoiselessDataIsInterpolated) {
  std::mt19937_64 gen(1);
  const MatrixXd phi = random_matrix(gen, 30, 5);
  const VectorXd c = random_vector(gen, 5);
  const auto post = fit_posterior(LinearSystem(phi, NoisePrecision::identity(30), phi * c));
  EXPECT_LT((post.mean() - c).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LE(post.sigma2_hat(), 1e-20);
}

TEST(FitPosterior, OlsDofIsNMinusD) {
  std::mt19937_64 gen(2);
  const MatrixXd phi = random_matrix(gen, 20, 6);
  const VectorXd y = random_vector(gen, 20);
  const auto post = fit_posterior(LinearSystem(phi, NoisePrecision::identity(20), y));
  const auto ref = explicit_route(phi, MatrixXd::Identity(20, 20), MatrixXd::Zero(6, 6));
  EXPECT_NEAR(ref.nu, 14.0, 1e-10);
  EXPECT_NEAR(post.dof(), 14.0, 1e-10);
}

TEST(FitPosterior, DofMatchesExplicitZForGeneralSystems) {
  std::mt19937_64 gen(3);
  for (int rep = 0; rep < 5; ++rep) {
    const Index n = 25 + rep * 7;
    const Index d = 3 + rep;
    const MatrixXd phi = random_matrix(gen, n, d);
    const VectorXd y = random_vector(gen, n);
    const MatrixXd a = random_matrix(gen, d, d);
    const MatrixXd lambda = 0.5 * a * a.transpose();
    VectorXd w = random_vector(gen, n).cwiseAbs().array() + 0.2;
    const MatrixXd w_dense = random_spd(gen, n) / static_cast<double>(n);

    const auto diag_post = fit_posterior(LinearSystem(phi, NoisePrecision::diagonal(w), lambda, y));
    EXPECT_NEAR(diag_post.dof(), explicit_route(phi, w.asDiagonal(), lambda).nu, 1e-9);

    const auto dense_post = fit_posterior(LinearSystem(phi, NoisePrecision::dense(w_dense), lambda, y));
    const auto ref = explicit_route(phi, w_dense, lambda);
    EXPECT_NEAR(dense_post.dof(), ref.nu, 1e-9 * ref.nu);
    const MatrixXd q_inv = (phi.transpose() * w_dense * phi + lambda).inverse();
    EXPECT_LT((dense_post.mean() - q_inv * phi.transpose() * w_dense * y).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(FitPosterior, UnregularizedResidualCovarianceIdentity) {
  // Lambda = 0  =>  Z Z^T = (I - H) W^-1.
  std::mt19937_64 gen(4);
  const Index n = 15;
  const MatrixXd phi = random_matrix(gen, n, 4);
  const VectorXd w = random_vector(gen, n).cwiseAbs().array() + 0.5;
  for (const MatrixXd& wm : {MatrixXd(w.asDiagonal()), random_spd(gen, n)}) {
    const auto ref = explicit_route(phi, wm, MatrixXd::Zero(4, 4));
    const MatrixXd rhs = (MatrixXd::Identity(n, n) - ref.h) * wm.inverse();
    EXPECT_LT((ref.zzt - rhs).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(FitPosterior, CovarianceIdentity) {
  std::mt19937_64 gen(5);
  const MatrixXd phi = random_matrix(gen, 40, 5);
  const VectorXd w = random_vector(gen, 40).cwiseAbs().array() + 0.1;
  const MatrixXd lambda = 0.3 * MatrixXd::Identity(5, 5);
  const auto post = fit_posterior(LinearSystem(phi, NoisePrecision::diagonal(w), lambda, random_vector(gen, 40)));
  ASSERT_GT(post.dof(), 2.0);
  const MatrixXd q = phi.transpose() * w.asDiagonal() * phi + lambda;
  const MatrixXd expected = post.sigma2_hat() * q.llt().solve(MatrixXd::Identity(5, 5));
  EXPECT_LT((post.covariance() - expected).cwiseAbs().maxCoeff(), 1e-12 * expected.cwiseAbs().maxCoeff());
  const MatrixXd& l = *post.q_factor();
  EXPECT_LT((l * l.transpose() - q).cwiseAbs().maxCoeff(), 1e-10 * q.cwiseAbs().maxCoeff());
}

TEST(FitPosterior, ResidualVarianceIsUnbiasedUnderGaussianNoise) {
  // y = Phi c + eps, eps ~ N(0, sigma^2 W^-1), Lambda = 0.
  std::mt19937_64 gen(6);
  const Index n = 30;
  const MatrixXd phi = random_matrix(gen, n, 4);
  const VectorXd w = random_vector(gen, n).cwiseAbs().array() + 0.3;
  const VectorXd c = random_vector(gen, 4);
  const double sigma = 0.7;
  std::normal_distribution<double> nd;
  const int reps = 10000;
  std::vector<double> values;
  values.reserve(reps);
  for (int r = 0; r < reps; ++r) {
    VectorXd y = phi * c;
    for (Index i = 0; i < n; ++i) y[i] += sigma / std::sqrt(w[i]) * nd(gen);
    values.push_back(fit_posterior(LinearSystem(phi, NoisePrecision::diagonal(w), y)).sigma2_hat());
  }
  double mean = 0, sq = 0;
  for (double v : values) mean += v;
  mean /= reps;
  for (double v : values) sq += (v - mean) * (v - mean);
  const double se = std::sqrt(sq / (reps - 1) / reps);
  EXPECT_LT(std::abs(mean - sigma * sigma), 3 * se);
}

TEST(FitPosterior, PrecisionRescaling) {
  // W -> alpha W leaves mu, H and the covariance sigma2_hat Q^-1 unchanged;
  // nu scales by 1/alpha and sigma2_hat by alpha.
  std::mt19937_64 gen(7);
  const MatrixXd phi = random_matrix(gen, 50, 4);
  const VectorXd w = random_vector(gen, 50).cwiseAbs().array() + 0.5;
  const VectorXd y = random_vector(gen, 50);
  const MatrixXd lambda = 0.1 * MatrixXd::Identity(4, 4);
  const double alpha = 3.0;
  const LinearSystem s1(phi, NoisePrecision::diagonal(w), lambda, y);
  const LinearSystem s2(phi, NoisePrecision::diagonal(alpha * w), alpha * lambda, y);
  const auto p1 = fit_posterior(s1);
  const auto p2 = fit_posterior(s2);
  EXPECT_LT((p1.mean() - p2.mean()).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((smoother_matrix(s1, p1) - smoother_matrix(s2, p2)).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_NEAR(p2.dof(), p1.dof() / alpha, 1e-10 * p1.dof());
  EXPECT_NEAR(p2.sigma2_hat(), alpha * p1.sigma2_hat(), 1e-10 * p1.sigma2_hat() * alpha);
  EXPECT_LT((p1.covariance() - p2.covariance()).cwiseAbs().maxCoeff(), 1e-10 * p1.covariance().norm());
}

TEST(FitPosterior, SingularSystemReportsCondition) {
  MatrixXd phi(4, 2);
  phi << 1, 2, 1, 2, 1, 2, 1, 2;
  try {
    fit_posterior(LinearSystem(phi, NoisePrecision::identity(4), VectorXd::Ones(4)));
    FAIL() << "expected SingularSystemError";
  } catch (const SingularSystemError& e) {
    EXPECT_GT(e.condition_estimate(), 1e12);
  }
}

TEST(FitPosterior, NonpositiveDofIsRejected) {
  EXPECT_THROW(fit_posterior(LinearSystem(MatrixXd::Ones(1, 1), NoisePrecision::identity(1), VectorXd::Ones(1))),
               DegenerateDofError);
}

TEST(FitPosterior, SmallDofIsFlaggedHeavyTailed) {
  MatrixXd phi(3, 1);
  phi << 1, 1, 1;
  VectorXd y(3);
  y << 0, 1, 5;
  const auto post = fit_posterior(LinearSystem(phi, NoisePrecision::identity(3), y));
  EXPECT_NEAR(post.dof(), 2.0, 1e-12);
  EXPECT_TRUE(post.heavy_tailed());
  EXPECT_THROW(post.covariance(), NumericalError);
  // Sampling and quantiles still work.
  EXPECT_NO_THROW(sample_posterior(post, 10, 1));
  EXPECT_TRUE(std::isfinite(marginal(post, 0).quantile(0.9)));
}

TEST(LinearSystem, ValidatesInputs) {
  EXPECT_THROW(NoisePrecision::diagonal(VectorXd::Constant(3, -1.0)), DataError);
  MatrixXd not_spd(2, 2);
  not_spd << 1, 2, 2, 1;
  EXPECT_THROW(NoisePrecision::dense(not_spd), DataError);
  EXPECT_THROW(LinearSystem(MatrixXd::Ones(3, 2), NoisePrecision::identity(3), VectorXd::Ones(4)), DataError);
  EXPECT_THROW(LinearSystem(MatrixXd::Ones(3, 2), NoisePrecision::identity(3), -MatrixXd::Identity(2, 2),
                            VectorXd::Ones(3)),
               DataError);
  MatrixXd asym(2, 2);
  asym << 1, 0.5, 0, 1;
  EXPECT_THROW(LinearSystem(MatrixXd::Ones(3, 2), NoisePrecision::identity(3), asym, VectorXd::Ones(3)), DataError);
}

TEST(SmootherMatrix, ConstantModelAveragesObservations) {
  const auto sys = constant_model();
  const auto post = fit_posterior(sys);
  const MatrixXd h = smoother_matrix(sys, post);
  EXPECT_LT((h - MatrixXd::Constant(5, 5, 0.2)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(SmootherMatrix, ReproducesFittedValuesAndIsIdempotentForOls) {
  std::mt19937_64 gen(8);
  const MatrixXd phi = random_matrix(gen, 25, 5);
  const VectorXd y = random_vector(gen, 25);
  const LinearSystem sys(phi, NoisePrecision::identity(25), y);
  const auto post = fit_posterior(sys);
  const MatrixXd h = smoother_matrix(sys, post);
  EXPECT_LT((h * y - phi * post.mean()).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((h * h - h).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(SmootherMatrix, RegularizationShrinksEffectiveDof) {
  // Orthogonal design columns with norms s_i and diagonal Lambda:
  // tr(H) = sum s_i^2 / (s_i^2 + lambda_i).
  const VectorXd s = (VectorXd(3) << 2.0, 1.0, 0.5).finished();
  const VectorXd lam = (VectorXd(3) << 0.5, 1.0, 2.0).finished();
  MatrixXd phi = MatrixXd::Zero(6, 3);
  phi.topRows(3) = s.asDiagonal();
  const LinearSystem sys(phi, NoisePrecision::identity(6), MatrixXd(lam.asDiagonal()), VectorXd::LinSpaced(6, 0, 1));
  const auto post = fit_posterior(sys);
  double expected = 0;
  for (int i = 0; i < 3; ++i) expected += s[i] * s[i] / (s[i] * s[i] + lam[i]);
  const double trace = smoother_matrix(sys, post).trace();
  EXPECT_NEAR(trace, expected, 1e-12);
  EXPECT_LT(trace, 3.0);
}

TEST(Pushforward, IdentityMapPreservesPosterior) {
  std::mt19937_64 gen(9);
  const MatrixXd phi = random_matrix(gen, 12, 3);
  const auto post = fit_posterior(LinearSystem(phi, NoisePrecision::identity(12), random_vector(gen, 12)));
  const auto out = pushforward_affine(post, {MatrixXd::Identity(3, 3), VectorXd::Zero(3)});
  EXPECT_EQ(out.mean(), post.mean());
  EXPECT_EQ(out.dof(), post.dof());
  EXPECT_EQ(out.sigma2_hat(), post.sigma2_hat());
  EXPECT_LT((out.scale() - post.scale()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Pushforward, ZeroRowGivesPointMass) {
  const auto post = fit_posterior(constant_model());
  const auto out = pushforward_affine(post, {MatrixXd::Zero(1, 1), VectorXd::Constant(1, 7.0)});
  EXPECT_EQ(out.mean()[0], 7.0);
  EXPECT_EQ(out.scale()(0, 0), 0.0);
  EXPECT_TRUE(out.point_mass());
}

TEST(Pushforward, ConstantModelScalar) {
  const auto post = fit_posterior(constant_model());
  const auto out = pushforward_affine(post, {MatrixXd::Ones(1, 1), VectorXd::Zero(1)});
  EXPECT_NEAR(out.mean()[0], 3.0, 1e-12);
  EXPECT_NEAR(out.dof(), 4.0, 1e-12);
  // R = (nu - 2)/nu * sigma2_hat / n = 0.5 * 2.5 / 5.
  EXPECT_NEAR(out.scale()(0, 0), 0.25, 1e-12);
  const auto u = pushforward_scalar(post, VectorXd::Ones(1));
  EXPECT_NEAR(u.scale * u.scale, 0.25, 1e-12);
}

TEST(Pushforward, DimensionMismatchThrows) {
  const auto post = fit_posterior(constant_model());
  EXPECT_THROW(pushforward_affine(post, {MatrixXd::Ones(1, 2), VectorXd::Zero(1)}), DataError);
  EXPECT_THROW(pushforward_scalar(post, VectorXd::Ones(3)), DataError);
}

TEST(Marginal, ConstantModel) {
  const auto post = fit_posterior(constant_model());
  const auto m = marginal(post, 0);
  EXPECT_NEAR(m.location, 3.0, 1e-12);
  EXPECT_NEAR(m.scale, 0.5, 1e-12);
  EXPECT_NEAR(m.dof, 4.0, 1e-12);
  EXPECT_THROW(marginal(post, 1), DataError);
  EXPECT_THROW(marginal(post, -1), DataError);
}

TEST(Marginal, EqualsPushforwardWithUnitRow) {
  std::mt19937_64 gen(10);
  const MatrixXd phi = random_matrix(gen, 20, 4);
  const auto post = fit_posterior(LinearSystem(phi, NoisePrecision::identity(20), random_vector(gen, 20)));
  for (Index i = 0; i < 4; ++i) {
    const auto a = marginal(post, i);
    const auto b = pushforward_scalar(post, VectorXd::Unit(4, i));
    EXPECT_EQ(a.location, b.location);
    EXPECT_NEAR(a.scale, b.scale, 1e-15);
    EXPECT_EQ(a.dof, b.dof);
  }
}

TEST(Serialization, JsonRoundTrip) {
  std::mt19937_64 gen(11);
  const MatrixXd phi = random_matrix(gen, 20, 3);
  const auto post = fit_posterior(LinearSystem(phi, NoisePrecision::identity(20), random_vector(gen, 20)));
  const auto j = posterior_to_json(post);
  EXPECT_EQ(j["scale"].size(), 9u);
  const auto back = posterior_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(back.mean(), post.mean());
  EXPECT_EQ(back.scale(), post.scale());
  EXPECT_EQ(back.dof(), post.dof());
  EXPECT_EQ(back.sigma2_hat(), post.sigma2_hat());
}
