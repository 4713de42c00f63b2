#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "bdmri/core/errors.hpp"
#include "bdmri/core/linear_system.hpp"

namespace bdmri::group {

/// Floor on standard deviations, in the units of the quantity.
inline constexpr double kSdFloor = 1e-6;

/// Posterior draws (S x V) of a scalar quantity for one subject.
struct SubjectPosterior {
  std::string id;
  MatrixXd draws;

  SubjectPosterior(std::string subject_id, MatrixXd d) : id(std::move(subject_id)), draws(std::move(d)) {
    if (draws.rows() < 2) throw DataError("subject " + id + ": need at least two draws");
    if (draws.cols() < 1) throw DataError("subject " + id + ": need at least one voxel");
    if (!draws.allFinite()) throw DataError("subject " + id + ": draws must be finite");
  }

  Index n_draws() const { return draws.rows(); }
  Index n_voxels() const { return draws.cols(); }
};

/// Column-wise sample standard deviation (denominator S - 1).
inline VectorXd column_sd(const MatrixXd& x) {
  const VectorXd mean = x.colwise().mean();
  const MatrixXd centered = x.rowwise() - mean.transpose();
  return (centered.colwise().squaredNorm() / static_cast<double>(x.rows() - 1)).cwiseSqrt().transpose();
}

/// w_v = 1 / max(SD_v, 1e-6).
inline VectorXd subject_weights(const SubjectPosterior& sp) {
  return column_sd(sp.draws).cwiseMax(kSdFloor).cwiseInverse();
}

struct GroupResult {
  /// S x V draws of (controls - patients).
  MatrixXd diff_draws;
  VectorXd t_score;
  /// Voxels whose SD hit the floor.
  std::vector<bool> saturated;
  /// Subject x V weights; empty for the unweighted analysis.
  std::optional<MatrixXd> weights;

  VectorXd mean() const { return diff_draws.colwise().mean().transpose(); }
  VectorXd sd() const { return column_sd(diff_draws); }
};

struct BayesianT {
  VectorXd t;
  std::vector<bool> saturated;
};

/// Per voxel: mean of the draws divided by max(SD, 1e-6).
inline BayesianT bayesian_t(const MatrixXd& diff_draws) {
  if (diff_draws.rows() < 2) throw DataError("bayesian_t: need at least two draws");
  const VectorXd mean = diff_draws.colwise().mean().transpose();
  const VectorXd sd = column_sd(diff_draws);
  BayesianT out{VectorXd(mean.size()), std::vector<bool>(static_cast<std::size_t>(mean.size()))};
  for (Index v = 0; v < mean.size(); ++v) {
    out.saturated[static_cast<std::size_t>(v)] = sd[v] < kSdFloor;
    out.t[v] = mean[v] / std::max(sd[v], kSdFloor);
  }
  return out;
}

inline BayesianT bayesian_t(const GroupResult& r) { return bayesian_t(r.diff_draws); }

namespace detail {

inline void check_cohorts(const std::vector<SubjectPosterior>& controls, const std::vector<SubjectPosterior>& patients) {
  if (controls.empty() || patients.empty()) throw DataError("group analysis: both groups need subjects");
  const Index s = controls.front().n_draws();
  const Index v = controls.front().n_voxels();
  for (const auto* group : {&controls, &patients})
    for (const auto& sp : *group)
      if (sp.n_draws() != s || sp.n_voxels() != v)
        throw DataError("group analysis: subject " + sp.id + " has mismatched draws or voxels");
}

// Per draw s and voxel v: sum_i w_iv x_isv / sum_i w_iv.
inline MatrixXd weighted_mean(const std::vector<SubjectPosterior>& group, const std::vector<VectorXd>& weights) {
  const Index s = group.front().n_draws();
  const Index v = group.front().n_voxels();
  MatrixXd num = MatrixXd::Zero(s, v);
  VectorXd den = VectorXd::Zero(v);
  for (std::size_t i = 0; i < group.size(); ++i) {
    num += group[i].draws * weights[i].asDiagonal();
    den += weights[i];
  }
  return num * den.cwiseInverse().asDiagonal();
}

inline GroupResult finish(MatrixXd diff, std::optional<MatrixXd> weights) {
  GroupResult r;
  r.diff_draws = std::move(diff);
  auto t = bayesian_t(r.diff_draws);
  r.t_score = std::move(t.t);
  r.saturated = std::move(t.saturated);
  r.weights = std::move(weights);
  return r;
}

}  // namespace detail

/// Draw s of every subject is paired; controls minus patients.
inline GroupResult unweighted_group_diff(const std::vector<SubjectPosterior>& controls,
                                         const std::vector<SubjectPosterior>& patients) {
  detail::check_cohorts(controls, patients);
  const Index v = controls.front().n_voxels();
  const std::vector<VectorXd> ones_c(controls.size(), VectorXd::Ones(v));
  const std::vector<VectorXd> ones_p(patients.size(), VectorXd::Ones(v));
  return detail::finish(detail::weighted_mean(controls, ones_c) - detail::weighted_mean(patients, ones_p),
                        std::nullopt);
}

/// Group means weighted by 1/SD of each subject's draws per voxel.
inline GroupResult weighted_group_diff(const std::vector<SubjectPosterior>& controls,
                                       const std::vector<SubjectPosterior>& patients) {
  detail::check_cohorts(controls, patients);
  std::vector<VectorXd> wc, wp;
  for (const auto& sp : controls) wc.push_back(subject_weights(sp));
  for (const auto& sp : patients) wp.push_back(subject_weights(sp));
  MatrixXd all(static_cast<Index>(wc.size() + wp.size()), controls.front().n_voxels());
  Index row = 0;
  for (const auto* ws : {&wc, &wp})
    for (const auto& w : *ws) all.row(row++) = w.transpose();
  return detail::finish(detail::weighted_mean(controls, wc) - detail::weighted_mean(patients, wp), std::move(all));
}

struct BetaFit {
  double alpha;
  double beta;
};

struct Moments {
  double mean;
  double variance;
};

/// Method of moments for Beta(alpha, beta) from the sample mean m and
/// unbiased variance v: k = m (1 - m) / v - 1, alpha = m k, beta = (1 - m) k.
/// Requires 0 < m < 1 and 0 < v < m (1 - m).
inline BetaFit fit_beta_moments(const Moments& mo) {
  const double m = mo.mean;
  const double v = mo.variance;
  if (!(m > 0.0 && m < 1.0)) throw DataError("beta fit: mean must lie in (0, 1)");
  if (!(v > 0.0)) throw DataError("beta fit: variance must be positive");
  if (!(v < m * (1.0 - m)))
    throw DataError("beta fit refused: variance " + std::to_string(v) + " >= m(1-m) = " + std::to_string(m * (1.0 - m)) +
                    " (mean " + std::to_string(m) + ")");
  const double k = m * (1.0 - m) / v - 1.0;
  return {m * k, (1.0 - m) * k};
}

inline Moments sample_moments(const std::vector<double>& x) {
  if (x.size() < 2) throw DataError("moments: need at least two samples");
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return {mean, ss / static_cast<double>(x.size() - 1)};
}

inline BetaFit fit_beta_mom(const std::vector<double>& samples) {
  for (double v : samples)
    if (!(v >= 0.0 && v <= 1.0)) throw DataError("beta fit: samples must lie in [0, 1]");
  return fit_beta_moments(sample_moments(samples));
}

}  // namespace bdmri::group
