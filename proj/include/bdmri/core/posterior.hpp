#pragma once

// Closed-form posterior of a weighted, regularized least-squares fit.
//
// With a Gaussian likelihood N(Phi c, sigma^2 W^-1), a Gaussian prior
// N(0, sigma^2 Lambda^-1) and an inverse-Gamma prior on sigma^2 whose
// hyperparameters are chosen so that E[sigma^2] equals the residual-variance
// estimate, the marginal posterior of c is a multivariate t:
//
//   c ~ t_nu(mu, R),   mu = Q^-1 Phi^T W y,   Q = Phi^T W Phi + Lambda,
//   nu = ||(I - H) W^{-1/2}||_F^2,            H = Phi Q^-1 Phi^T W,
//   sigma2_hat = ||y - Phi mu||^2 / nu,       R = (nu - 2)/nu sigma2_hat Q^-1.
//
// The covariance (nu/(nu-2)) R equals sigma2_hat Q^-1.
//
// The unweighted variant ||I - H||_F^2 agrees with nu only for W = I; the
// weighted form is used throughout. nu is not invariant to rescaling W, so
// the absolute scale of the noise precision matters: W should be expressed
// in units where sigma^2 W^-1 is the noise covariance.

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>

#include "bdmri/core/errors.hpp"
#include "bdmri/core/linear_system.hpp"
#include "bdmri/core/rng.hpp"
#include "bdmri/core/special_functions.hpp"

namespace bdmri {

/// Location-scale Student t in one dimension.
struct UnivariateT {
  double location = 0.0;
  double scale = 1.0;
  double dof = 1.0;

  double cdf(double x) const {
    if (scale == 0.0) return x < location ? 0.0 : 1.0;
    return special::student_t_cdf((x - location) / scale, dof);
  }

  double quantile(double p) const {
    if (!(p > 0.0 && p < 1.0)) throw DataError("quantile: p must lie in (0, 1)");
    if (scale == 0.0) return location;
    return location + scale * special::student_t_quantile(p, dof);
  }
};

inline double t_quantile(double p, const UnivariateT& dist) { return dist.quantile(p); }
inline double t_cdf(double x, const UnivariateT& dist) { return dist.cdf(x); }

/// theta = A c + b.
struct AffineMap {
  MatrixXd matrix;
  VectorXd offset;
};

/// Multivariate t posterior t_nu(mean, scale).
///
/// Fitted posteriors also carry the Cholesky factor of Q and a condition
/// estimate; posteriors produced by pushforward do not.
class PosteriorT {
 public:
  PosteriorT(VectorXd mean, double dof, double sigma2_hat, MatrixXd scale,
             std::optional<MatrixXd> q_factor = std::nullopt,
             double condition_estimate = std::numeric_limits<double>::quiet_NaN())
      : mean_(std::move(mean)),
        dof_(dof),
        sigma2_hat_(sigma2_hat),
        scale_(std::move(scale)),
        q_factor_(std::move(q_factor)),
        condition_estimate_(condition_estimate) {
    if (!(dof_ > 0.0)) throw DataError("posterior: dof must be positive");
    if (sigma2_hat_ < 0.0) throw DataError("posterior: sigma2_hat must be nonnegative");
    if (scale_.rows() != mean_.size() || scale_.cols() != mean_.size())
      throw DataError("posterior: scale matrix does not match mean dimension");
  }

  const VectorXd& mean() const { return mean_; }
  double dof() const { return dof_; }
  double sigma2_hat() const { return sigma2_hat_; }
  /// Scale ("correlation") matrix R.
  const MatrixXd& scale() const { return scale_; }
  Index dim() const { return mean_.size(); }

  /// nu <= 2: the t distribution has no finite covariance.
  bool heavy_tailed() const { return dof_ <= 2.0; }
  bool point_mass() const { return scale_.isZero(0.0); }

  /// (nu / (nu - 2)) R.
  MatrixXd covariance() const {
    if (heavy_tailed())
      throw NumericalError("heavy-tailed posterior (dof " + std::to_string(dof_) +
                           " <= 2): covariance undefined");
    return dof_ / (dof_ - 2.0) * scale_;
  }

  /// Lower Cholesky factor of Q, when the posterior came from a fit.
  const std::optional<MatrixXd>& q_factor() const { return q_factor_; }
  double condition_estimate() const { return condition_estimate_; }

 private:
  VectorXd mean_;
  double dof_;
  double sigma2_hat_;
  MatrixXd scale_;
  std::optional<MatrixXd> q_factor_;
  double condition_estimate_;
};

/// Factorization of Q for a fixed (Phi, W, Lambda); solves for the posterior
/// mean of arbitrary observation vectors. Used by fit_posterior and by
/// resampling schemes that refit the same system many times.
class RegularizedSolver {
 public:
  explicit RegularizedSolver(const LinearSystem& sys)
      : design_(sys.design()), precision_(sys.precision()) {
    weighted_design_ = precision_.whiten(design_);
    MatrixXd q = weighted_design_.transpose() * weighted_design_ + sys.regularizer();
    q = 0.5 * (q + q.transpose());
    llt_.compute(q);
    const double rcond = llt_.info() == Eigen::Success ? llt_.rcond() : 0.0;
    condition_ = rcond > 0.0 ? 1.0 / rcond : std::numeric_limits<double>::infinity();
    if (llt_.info() != Eigen::Success || rcond < 1e3 * std::numeric_limits<double>::epsilon()) {
      throw SingularSystemError("Q = Phi^T W Phi + Lambda is singular (condition estimate " +
                                    std::to_string(condition_) + ")",
                                condition_);
    }
  }

  /// mu = Q^-1 Phi^T W y.
  VectorXd solve(const VectorXd& y) const {
    return llt_.solve(weighted_design_.transpose() * precision_.whiten(y));
  }

  /// Q^-1 X.
  MatrixXd solve_q(const MatrixXd& x) const { return llt_.solve(x); }

  MatrixXd q_factor() const { return llt_.matrixL(); }
  double condition_estimate() const { return condition_; }
  /// W^{1/2} Phi in the sense L_W^T Phi.
  const MatrixXd& weighted_design() const { return weighted_design_; }

 private:
  MatrixXd design_;
  NoisePrecision precision_;
  MatrixXd weighted_design_;
  Eigen::LLT<MatrixXd> llt_;
  double condition_ = 0.0;
};

/// nu = ||(I - H) W^{-1/2}||_F^2.
///
/// Diagonal W uses the trace expansion
///   nu = tr(W^-1) - 2 tr(Q^-1 Phi^T Phi) + tr(Q^-1 Phi^T Phi Q^-1 Phi^T W Phi),
/// which needs only d x d work. Dense W forms Z explicitly.
inline double residual_dof(const LinearSystem& sys, const RegularizedSolver& solver) {
  const MatrixXd& phi = sys.design();
  const MatrixXd& phi_w = solver.weighted_design();
  if (sys.precision().is_diagonal()) {
    const double trace_w_inv = sys.precision().weights().cwiseInverse().sum();
    const MatrixXd gram = phi.transpose() * phi;
    const MatrixXd x = solver.solve_q(gram);
    const MatrixXd y = solver.solve_q(phi_w.transpose() * phi_w);
    return trace_w_inv - 2.0 * x.trace() + (x * y).trace();
  }
  // Z = C - Phi Q^-1 (L_W^T Phi)^T with C C^T = W^-1.
  const MatrixXd z = sys.precision().inverse_sqrt() - phi * solver.solve_q(phi_w.transpose());
  return z.squaredNorm();
}

/// Closed-form multivariate t posterior of the coefficients.
///
/// Throws SingularSystemError when Q cannot be factorized and
/// DegenerateDofError when nu <= 0. For 0 < nu <= 2 the posterior is
/// returned with heavy_tailed() set; its scale is then the plug-in
/// sigma2_hat Q^-1 because (nu - 2)/nu would make it nonpositive.
inline PosteriorT fit_posterior(const LinearSystem& sys) {
  const RegularizedSolver solver(sys);
  VectorXd mu = solver.solve(sys.observations());
  const VectorXd residual = sys.observations() - sys.design() * mu;
  const double nu = residual_dof(sys, solver);
  if (!(nu > 0.0)) {
    throw DegenerateDofError("residual degrees of freedom " + std::to_string(nu) +
                                 " <= 0: too few observations for the effective model size",
                             nu);
  }
  const double sigma2 = residual.squaredNorm() / nu;
  const MatrixXd q_inv = solver.solve_q(MatrixXd::Identity(sys.d(), sys.d()));
  const double factor = nu > 2.0 ? (nu - 2.0) / nu : 1.0;
  MatrixXd scale = factor * sigma2 * q_inv;
  scale = 0.5 * (scale + scale.transpose());
  return PosteriorT(std::move(mu), nu, sigma2, std::move(scale), solver.q_factor(),
                    solver.condition_estimate());
}

/// Smoother ("hat") matrix H = Phi Q^-1 Phi^T W, so that y_hat = H y.
inline MatrixXd smoother_matrix(const LinearSystem& sys, const PosteriorT& fit) {
  if (!fit.q_factor()) throw DataError("smoother_matrix: posterior carries no Q factor");
  const MatrixXd& lower = *fit.q_factor();
  if (lower.rows() != sys.d()) throw DataError("smoother_matrix: posterior does not match system");
  MatrixXd rhs = sys.design().transpose();
  lower.triangularView<Eigen::Lower>().solveInPlace(rhs);
  lower.transpose().triangularView<Eigen::Upper>().solveInPlace(rhs);
  // rhs = Q^-1 Phi^T; H = Phi rhs W.
  MatrixXd h = sys.design() * rhs;
  return sys.precision().apply(h.transpose()).transpose();
}

/// theta = A c + b ~ t_nu(A mu + b, A R A^T).
inline PosteriorT pushforward_affine(const PosteriorT& post, const AffineMap& map) {
  if (map.matrix.cols() != post.dim())
    throw DataError("pushforward: map has " + std::to_string(map.matrix.cols()) +
                    " columns, posterior dimension is " + std::to_string(post.dim()));
  if (map.offset.size() != map.matrix.rows()) throw DataError("pushforward: offset length mismatch");
  VectorXd mean = map.matrix * post.mean() + map.offset;
  MatrixXd scale = map.matrix * post.scale() * map.matrix.transpose();
  scale = 0.5 * (scale + scale.transpose());
  return PosteriorT(std::move(mean), post.dof(), post.sigma2_hat(), std::move(scale));
}

/// Scalar functional theta = a^T c + b.
inline UnivariateT pushforward_scalar(const PosteriorT& post, const VectorXd& row, double offset = 0.0) {
  if (row.size() != post.dim()) throw DataError("pushforward: functional has wrong length");
  const double var = row.dot(post.scale() * row);
  return {row.dot(post.mean()) + offset, std::sqrt(std::max(var, 0.0)), post.dof()};
}

inline UnivariateT marginal(const PosteriorT& post, Index index) {
  if (index < 0 || index >= post.dim())
    throw DataError("marginal: index " + std::to_string(index) + " out of range");
  return {post.mean()[index], std::sqrt(std::max(post.scale()(index, index), 0.0)), post.dof()};
}

/// L with L L^T = R; Cholesky when possible, otherwise a clipped
/// eigendecomposition for positive-semidefinite R.
inline MatrixXd scale_factor(const MatrixXd& r) {
  if (r.isZero(0.0)) return MatrixXd::Zero(r.rows(), r.cols());
  Eigen::LLT<MatrixXd> llt(r);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(r);
  const VectorXd& values = eig.eigenvalues();
  const double largest = values.cwiseAbs().maxCoeff();
  if (values.minCoeff() < -1e-10 * largest)
    throw NumericalError("posterior scale matrix is not positive semidefinite");
  return eig.eigenvectors() * values.cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

/// i.i.d. draws (one per row) from t_nu(mu, R):
///   x = mu + L z sqrt(nu / g),  z ~ N(0, I),  g ~ chi^2_nu.
/// Draw k uses Philox stream k of `seed`, so any subset of rows can be
/// regenerated independently.
inline MatrixXd sample_posterior(const PosteriorT& post, Index n_draws, std::uint64_t seed) {
  if (n_draws < 1) throw DataError("sample_posterior: n_draws must be positive");
  const Index d = post.dim();
  MatrixXd draws(n_draws, d);
  if (post.point_mass()) {
    draws.rowwise() = post.mean().transpose();
    return draws;
  }
  const MatrixXd lower = scale_factor(post.scale());
  VectorXd z(d);
  for (Index k = 0; k < n_draws; ++k) {
    rng::Stream stream(seed, static_cast<std::uint64_t>(k));
    for (Index j = 0; j < d; ++j) z[j] = stream.normal();
    const double g = stream.chi_square(post.dof());
    draws.row(k) = (post.mean() + lower * z * std::sqrt(post.dof() / g)).transpose();
  }
  return draws;
}

}  // namespace bdmri
