#pragma once

#include <Eigen/Core>
#include <Eigen/QR>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "bdmri/core/errors.hpp"
#include "bdmri/core/posterior.hpp"
#include "bdmri/dmri/acquisition.hpp"
#include "bdmri/dmri/tensor.hpp"

namespace bdmri::dmri {

/// Coefficient order of a DTI fit.
enum DtiCoefficient : Index { kLogS0 = 0, kDxx, kDyy, kDzz, kDxy, kDxz, kDyz, kDtiDim };

/// Row j = [1, -b gx^2, -b gy^2, -b gz^2, -2b gx gy, -2b gx gz, -2b gy gz], so
/// that (design c)_j = ln S0 - b g^T D g.
inline MatrixXd dti_design(const AcquisitionScheme& scheme) {
  MatrixXd x(static_cast<Index>(scheme.size()), kDtiDim);
  for (std::size_t j = 0; j < scheme.size(); ++j) {
    const double b = scheme[j].bval;
    const Vector3d& g = scheme[j].direction;
    const auto r = static_cast<Index>(j);
    if (b == 0.0) {
      x.row(r) << 1, 0, 0, 0, 0, 0, 0;
      continue;
    }
    x.row(r) << 1.0, -b * g.x() * g.x(), -b * g.y() * g.y(), -b * g.z() * g.z(), -2.0 * b * g.x() * g.y(),
        -2.0 * b * g.x() * g.z(), -2.0 * b * g.y() * g.z();
  }
  return x;
}

inline DiffusionTensor tensor_from_coefficients(const VectorXd& c) {
  if (c.size() != kDtiDim) throw DataError("DTI coefficients must have length 7");
  return {c[kDxx], c[kDyy], c[kDzz], c[kDxy], c[kDxz], c[kDyz]};
}

inline VectorXd coefficients_from_tensor(const DiffusionTensor& d, double log_s0 = 0.0) {
  VectorXd c(kDtiDim);
  c << log_s0, d.xx, d.yy, d.zz, d.xy, d.xz, d.yz;
  return c;
}

struct DtiFit {
  LinearSystem system;
  PosteriorT posterior;

  DiffusionTensor mean_tensor() const { return tensor_from_coefficients(posterior.mean()); }
};

struct DtiOptions {
  /// Refit once with W = diag(S_fit^2) from the first pass.
  bool reweight = false;
};

/// Weighted least squares on the log signal with W = diag(S^2) of the
/// observed signal and no regularization.
inline DtiFit dti_fit_wls(const AcquisitionScheme& scheme, const VectorXd& signal, DtiOptions options = {}) {
  if (signal.size() != static_cast<Index>(scheme.size()))
    throw DataError("DTI fit: signal length " + std::to_string(signal.size()) + " does not match scheme size " +
                    std::to_string(scheme.size()));
  for (Index i = 0; i < signal.size(); ++i) {
    if (!(signal[i] > 0.0) || !std::isfinite(signal[i]))
      throw DataError("DTI fit: signal value " + std::to_string(i) + " is nonpositive; voxel rejected");
  }
  MatrixXd design = dti_design(scheme);
  Eigen::ColPivHouseholderQR<MatrixXd> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < kDtiDim)
    throw DataError("DTI fit: design has rank " + std::to_string(qr.rank()) +
                    " < 7 (too few informative measurements)");

  const VectorXd y = signal.array().log().matrix();
  LinearSystem sys(design, NoisePrecision::diagonal(signal.array().square().matrix()), y);
  PosteriorT post = fit_posterior(sys);
  if (options.reweight) {
    const VectorXd fitted = (sys.design() * post.mean()).array().exp().matrix();
    sys = LinearSystem(std::move(design), NoisePrecision::diagonal(fitted.array().square().matrix()), y);
    post = fit_posterior(sys);
  }
  return {std::move(sys), std::move(post)};
}

/// MD = (Dxx + Dyy + Dzz)/3 as a t marginal.
inline UnivariateT md_posterior(const PosteriorT& post) {
  if (post.dim() != kDtiDim) throw DataError("MD: posterior is not a DTI posterior");
  VectorXd row = VectorXd::Zero(kDtiDim);
  row[kDxx] = row[kDyy] = row[kDzz] = 1.0 / 3.0;
  return pushforward_scalar(post, row);
}

inline UnivariateT md_posterior(const DtiFit& fit) { return md_posterior(fit.posterior); }

struct FaSamples {
  std::vector<double> values;
  /// Fraction of draws whose raw FA left [0, 1].
  double clamped_fraction = 0.0;
};

inline FaSamples fa_posterior_samples(const PosteriorT& post, Index n_draws, std::uint64_t seed) {
  if (post.dim() != kDtiDim) throw DataError("FA: posterior is not a DTI posterior");
  const MatrixXd draws = sample_posterior(post, n_draws, seed);
  FaSamples out;
  out.values.reserve(static_cast<std::size_t>(n_draws));
  Index clamped = 0;
  for (Index k = 0; k < n_draws; ++k) {
    bool was_clamped = false;
    out.values.push_back(fa_of_tensor(tensor_from_coefficients(draws.row(k).transpose()), &was_clamped));
    clamped += was_clamped ? 1 : 0;
  }
  out.clamped_fraction = static_cast<double>(clamped) / static_cast<double>(n_draws);
  return out;
}

inline FaSamples fa_posterior_samples(const DtiFit& fit, Index n_draws, std::uint64_t seed) {
  return fa_posterior_samples(fit.posterior, n_draws, seed);
}

struct RtopSamples {
  std::vector<double> values;
  Index rejected = 0;
  /// More than half of the draws were not positive definite.
  bool unreliable = false;
};

inline RtopSamples rtop_posterior_samples(const PosteriorT& post, double diffusion_time, Index n_draws,
                                          std::uint64_t seed) {
  if (!(diffusion_time > 0.0)) throw DataError("RTOP: diffusion time must be positive");
  if (post.dim() != kDtiDim) throw DataError("RTOP: posterior is not a DTI posterior");
  const MatrixXd draws = sample_posterior(post, n_draws, seed);
  RtopSamples out;
  out.values.reserve(static_cast<std::size_t>(n_draws));
  for (Index k = 0; k < n_draws; ++k) {
    const DiffusionTensor d = tensor_from_coefficients(draws.row(k).transpose());
    Eigen::LLT<Matrix3d> llt(d.matrix());
    if (llt.info() != Eigen::Success) {
      ++out.rejected;
      continue;
    }
    const double det = llt.matrixLLT().diagonal().prod();
    const double scale = 4.0 * std::numbers::pi * diffusion_time;
    out.values.push_back(1.0 / (det * scale * std::sqrt(scale)));
  }
  out.unreliable = 2 * out.rejected > n_draws;
  return out;
}

inline RtopSamples rtop_posterior_samples(const DtiFit& fit, double diffusion_time, Index n_draws,
                                          std::uint64_t seed) {
  return rtop_posterior_samples(fit.posterior, diffusion_time, n_draws, seed);
}

}  // namespace bdmri::dmri
