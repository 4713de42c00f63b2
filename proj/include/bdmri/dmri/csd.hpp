#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "bdmri/core/errors.hpp"
#include "bdmri/core/posterior.hpp"
#include "bdmri/dmri/acquisition.hpp"
#include "bdmri/dmri/sphere_grid.hpp"
#include "bdmri/dmri/spherical_harmonics.hpp"

namespace bdmri::dmri {

/// How the user-facing lambda becomes the penalty weight.
///   absolute:  Lambda = lambda^2 L_c^T L_c in signal units.
///   reference: lambda is first multiplied by d r_0 / sqrt(N_grid * 362), the
///              normalization of the common reference implementation, which
///              makes the penalty independent of signal scale, order and
///              grid density.
enum class LambdaScaling { absolute, reference };

struct CsdOptions {
  int order = 10;
  double lambda = 5.0;
  LambdaScaling scaling = LambdaScaling::reference;
  double tau = 0.1;
  int max_iterations = 50;
  /// Order of the unconstrained initial fit that sets the amplitude threshold.
  int initial_order = 4;
};

struct ShFit {
  PosteriorT posterior;
  int order;
  /// r_l for l = 0, 2, ..., L.
  VectorXd response;
  /// Rows of the constraint-grid basis that ended up penalized (L_c).
  MatrixXd constraint_matrix;
  std::vector<Index> constrained_vertices;
  LinearSystem system;
  int iterations = 0;
  bool converged = false;
  /// Weight actually applied to the constraint rows.
  double effective_lambda = 0.0;
};

/// Convolution design Phi = B(directions) diag(r_l).
inline MatrixXd csd_design(const MatrixXd& directions, const VectorXd& response, int order) {
  if (response.size() != order / 2 + 1) throw DataError("CSD: response has wrong number of bands for the order");
  return sh_basis(directions, order) * expand_response(response, order).asDiagonal();
}

inline MatrixXd scheme_directions(const AcquisitionScheme& scheme) {
  MatrixXd d(static_cast<Index>(scheme.size()), 3);
  for (std::size_t i = 0; i < scheme.size(); ++i) d.row(static_cast<Index>(i)) = scheme[i].direction.transpose();
  return d;
}

/// Constrained spherical deconvolution of a single-shell signal.
///
/// The fODF is first fitted without constraints at a low order; tau times
/// its mean amplitude over the grid is the threshold. Each iteration then
/// penalizes grid points whose amplitude falls below the threshold:
///   c = (Phi^T Phi + lambda^2 L_c^T L_c)^-1 Phi^T y,
/// until the penalized set stops changing. The final system, with the
/// converged L_c held fixed, produces the posterior.
inline ShFit csd_fit(const AcquisitionScheme& shell, const VectorXd& signal, const VectorXd& response,
                     const CsdOptions& options = {}, const SphereGrid& grid = SphereGrid::default_grid()) {
  check_even_order(options.order);
  if (shell.size() == 0) throw DataError("CSD: empty scheme");
  if (signal.size() != static_cast<Index>(shell.size())) throw DataError("CSD: signal length does not match scheme");
  for (std::size_t i = 0; i < shell.size(); ++i) {
    if (shell[i].bval <= kShellTolerance) throw DataError("CSD: scheme contains b = 0 measurements");
    if (std::abs(shell[i].bval - shell[0].bval) > 2.0 * kShellTolerance || shell[i].shell_id != shell[0].shell_id)
      throw DataError("CSD: scheme mixes shells; select a single shell first");
  }
  if (!(options.lambda >= 0.0) || !(options.tau >= 0.0)) throw DataError("CSD: lambda and tau must be nonnegative");

  const MatrixXd phi = csd_design(scheme_directions(shell), response, options.order);
  const MatrixXd b_grid = sh_basis(grid.vertices(), options.order);
  const Index d = phi.cols();
  const Index n = phi.rows();

  const Index n_init = sh_count(std::min(options.initial_order, options.order));
  VectorXd c = VectorXd::Zero(d);
  c.head(n_init) = phi.leftCols(n_init).colPivHouseholderQr().solve(signal);
  const double threshold = options.tau * (b_grid * c).mean();

  const MatrixXd gram = phi.transpose() * phi;
  const VectorXd rhs = phi.transpose() * signal;
  const double lambda_eff =
      options.scaling == LambdaScaling::absolute
          ? options.lambda
          : options.lambda * static_cast<double>(d) * response[0] / std::sqrt(static_cast<double>(grid.size()) * 362.0);
  const double lambda2 = lambda_eff * lambda_eff;

  std::vector<Index> constrained;
  bool converged = false;
  int iterations = 0;
  if (threshold <= 0.0) {
    // Zero or negative mean amplitude: nothing to deconvolve, constrain all.
    constrained.resize(static_cast<std::size_t>(grid.size()));
    for (Index i = 0; i < grid.size(); ++i) constrained[static_cast<std::size_t>(i)] = i;
    converged = true;
  } else {
    for (iterations = 1; iterations <= options.max_iterations; ++iterations) {
      const VectorXd amp = b_grid * c;
      std::vector<Index> next;
      for (Index i = 0; i < amp.size(); ++i)
        if (amp[i] < threshold) next.push_back(i);
      if (iterations > 1 && next == constrained) {
        converged = true;
        break;
      }
      if (static_cast<Index>(next.size()) + n < d) {
        // Too few penalized points to determine all coefficients; keep the
        // previous set (or the full grid on the first pass).
        if (constrained.empty()) {
          constrained.resize(static_cast<std::size_t>(grid.size()));
          for (Index i = 0; i < grid.size(); ++i) constrained[static_cast<std::size_t>(i)] = i;
        }
        break;
      }
      constrained = std::move(next);
      MatrixXd lc(static_cast<Index>(constrained.size()), d);
      for (std::size_t r = 0; r < constrained.size(); ++r) lc.row(static_cast<Index>(r)) = b_grid.row(constrained[r]);
      const MatrixXd q = gram + lambda2 * lc.transpose() * lc;
      Eigen::LLT<MatrixXd> llt(q);
      if (llt.info() != Eigen::Success) throw NumericalError("CSD: penalized system is not positive definite");
      c = llt.solve(rhs);
    }
    iterations = std::min(iterations, options.max_iterations);
  }

  MatrixXd lc(static_cast<Index>(constrained.size()), d);
  for (std::size_t r = 0; r < constrained.size(); ++r) lc.row(static_cast<Index>(r)) = b_grid.row(constrained[r]);
  MatrixXd reg = lambda2 * lc.transpose() * lc;
  reg = 0.5 * (reg + reg.transpose());
  LinearSystem sys(phi, NoisePrecision::identity(n), std::move(reg), signal);
  PosteriorT post = fit_posterior(sys);
  return ShFit{std::move(post), options.order, response, std::move(lc), std::move(constrained), std::move(sys),
               iterations, converged, lambda_eff};
}

}  // namespace bdmri::dmri
