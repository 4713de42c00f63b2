#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "bdmri/core/errors.hpp"
#include "bdmri/core/posterior.hpp"
#include "bdmri/core/rng.hpp"

namespace bdmri::calibrate {

struct NormalizedResiduals {
  /// r_i / sqrt((Z Z^T)_ii); NaN where excluded.
  VectorXd values;
  /// Indices with (Z Z^T)_ii > 0, i.e. the resampling pool.
  std::vector<Index> pool;
  Index excluded = 0;
};

/// Diagonal of Z Z^T with Z = (I - H) W^{-1/2} = C - Phi Q^-1 (L_W^T Phi)^T.
inline VectorXd residual_leverage_diagonal(const LinearSystem& sys, const RegularizedSolver& solver) {
  const MatrixXd z = sys.precision().inverse_sqrt() - sys.design() * solver.solve_q(solver.weighted_design().transpose());
  return z.rowwise().squaredNorm();
}

/// r~_i = r_i / sqrt((Z Z^T)_ii). Measurements with (Z Z^T)_ii <= 1e-12 max
/// (leverage one) are excluded from the pool and counted.
inline NormalizedResiduals normalized_residuals(const LinearSystem& sys, const PosteriorT& fit) {
  if (fit.dim() != sys.d()) throw DataError("normalized_residuals: posterior does not match system");
  const RegularizedSolver solver(sys);
  const VectorXd diag = residual_leverage_diagonal(sys, solver);
  const VectorXd r = sys.observations() - sys.design() * fit.mean();
  const double cut = 1e-12 * std::max(diag.maxCoeff(), 0.0);
  NormalizedResiduals out;
  out.values.resize(r.size());
  for (Index i = 0; i < r.size(); ++i) {
    if (diag[i] > cut && diag[i] > 0.0) {
      out.values[i] = r[i] / std::sqrt(diag[i]);
      out.pool.push_back(i);
    } else {
      out.values[i] = std::numeric_limits<double>::quiet_NaN();
      ++out.excluded;
    }
  }
  return out;
}

/// A statistic of refitted coefficients; nullopt marks a failed draw (for
/// example, a peak that was not detected).
using CoefficientStatistic = std::function<std::optional<double>(const VectorXd&)>;

struct BootstrapResult {
  std::vector<double> samples;
  Index n_draws = 0;
  Index failures = 0;
  Index excluded_residuals = 0;
  /// More than 5% of draws failed.
  bool flagged = false;
};

inline constexpr Index kDefaultBootstrapDraws = 1000;

/// Residual bootstrap: draw k resamples the normalized residuals with
/// replacement (Philox stream k of `seed`), forms y* = y_hat + W^{-1/2} r~*,
/// refits the same system and records the statistic of the refitted mean.
/// For non-diagonal W, W^{-1/2} is the triangular factor L^-T.
inline BootstrapResult residual_bootstrap(const LinearSystem& sys, const PosteriorT& fit,
                                          const CoefficientStatistic& statistic,
                                          Index n_draws = kDefaultBootstrapDraws, std::uint64_t seed = 0) {
  if (n_draws < 1) throw DataError("bootstrap: n_draws must be positive");
  const RegularizedSolver solver(sys);
  const VectorXd diag = residual_leverage_diagonal(sys, solver);
  const VectorXd fitted = sys.design() * fit.mean();
  const VectorXd r = sys.observations() - fitted;
  const double cut = 1e-12 * std::max(diag.maxCoeff(), 0.0);
  std::vector<double> pool;
  for (Index i = 0; i < r.size(); ++i)
    if (diag[i] > cut && diag[i] > 0.0) pool.push_back(r[i] / std::sqrt(diag[i]));

  BootstrapResult out;
  out.n_draws = n_draws;
  out.excluded_residuals = r.size() - static_cast<Index>(pool.size());
  if (pool.empty()) throw NumericalError("bootstrap: no residuals with positive normalization");
  out.samples.reserve(static_cast<std::size_t>(n_draws));
  VectorXd resampled(r.size());
  for (Index k = 0; k < n_draws; ++k) {
    rng::Stream stream(seed, static_cast<std::uint64_t>(k));
    for (Index i = 0; i < r.size(); ++i) resampled[i] = pool[stream.below(pool.size())];
    const VectorXd y_star = fitted + sys.precision().apply_inverse_sqrt(resampled);
    std::optional<double> value;
    try {
      value = statistic(solver.solve(y_star));
    } catch (const std::exception&) {
      value.reset();
    }
    if (value && std::isfinite(*value)) {
      out.samples.push_back(*value);
    } else {
      ++out.failures;
    }
  }
  out.flagged = 20 * out.failures > n_draws;
  return out;
}

}  // namespace bdmri::calibrate
