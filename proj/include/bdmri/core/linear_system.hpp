#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <string>
#include <utility>
#include <variant>

#include "bdmri/core/errors.hpp"

namespace bdmri {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Noise precision W, either a positive diagonal or a dense SPD matrix.
class NoisePrecision {
 public:
  static NoisePrecision identity(Index n) { return diagonal(VectorXd::Ones(n)); }

  static NoisePrecision diagonal(VectorXd weights) {
    for (Index i = 0; i < weights.size(); ++i) {
      if (!(weights[i] > 0.0) || !std::isfinite(weights[i]))
        throw DataError("noise precision: diagonal entry " + std::to_string(i) +
                        " is not strictly positive and finite");
    }
    NoisePrecision p;
    p.value_ = std::move(weights);
    return p;
  }

  static NoisePrecision dense(MatrixXd w) {
    if (w.rows() != w.cols()) throw DataError("noise precision: matrix is not square");
    if (!w.allFinite()) throw DataError("noise precision: non-finite entries");
    const double tol = 1e-12 * std::max(1.0, w.cwiseAbs().maxCoeff());
    if ((w - w.transpose()).cwiseAbs().maxCoeff() > tol)
      throw DataError("noise precision: matrix is not symmetric");
    Eigen::LLT<MatrixXd> llt(w);
    if (llt.info() != Eigen::Success)
      throw DataError("noise precision: matrix is not positive definite");
    NoisePrecision p;
    p.value_ = Dense{std::move(w), llt.matrixL()};
    return p;
  }

  bool is_diagonal() const { return std::holds_alternative<VectorXd>(value_); }
  Index size() const {
    return is_diagonal() ? std::get<VectorXd>(value_).size() : std::get<Dense>(value_).w.rows();
  }

  /// Diagonal weights; only valid when is_diagonal().
  const VectorXd& weights() const { return std::get<VectorXd>(value_); }

  MatrixXd as_matrix() const {
    if (is_diagonal()) return weights().asDiagonal();
    return std::get<Dense>(value_).w;
  }

  /// Lower-triangular L with W = L L^T (the square root of a diagonal W is
  /// diagonal).
  MatrixXd factor() const {
    if (is_diagonal()) return weights().cwiseSqrt().asDiagonal();
    return std::get<Dense>(value_).lower;
  }

  /// L^T x, so that ||L^T x||^2 = x^T W x.
  MatrixXd whiten(const MatrixXd& x) const {
    if (is_diagonal()) return weights().cwiseSqrt().asDiagonal() * x;
    return std::get<Dense>(value_).lower.transpose() * x;
  }

  /// W x.
  MatrixXd apply(const MatrixXd& x) const {
    if (is_diagonal()) return weights().asDiagonal() * x;
    return std::get<Dense>(value_).w * x;
  }

  /// Triangular C with C C^T = W^{-1}; C = L^{-T} (diagonal 1/sqrt(w) for
  /// diagonal W).
  MatrixXd inverse_sqrt() const {
    if (is_diagonal()) return weights().cwiseSqrt().cwiseInverse().asDiagonal();
    const auto& lower = std::get<Dense>(value_).lower;
    MatrixXd c = MatrixXd::Identity(lower.rows(), lower.cols());
    lower.transpose().triangularView<Eigen::Upper>().solveInPlace(c);
    return c;
  }

  /// C x with C from inverse_sqrt(), without forming C.
  VectorXd apply_inverse_sqrt(const VectorXd& x) const {
    if (is_diagonal()) return x.cwiseQuotient(weights().cwiseSqrt());
    return std::get<Dense>(value_).lower.transpose().triangularView<Eigen::Upper>().solve(x);
  }

 private:
  struct Dense {
    MatrixXd w;
    MatrixXd lower;
  };
  NoisePrecision() = default;
  std::variant<VectorXd, Dense> value_;
};

/// A weighted, regularized least-squares problem
///   minimize (y - Phi c)^T W (y - Phi c) + c^T Lambda c.
/// Validated on construction and immutable afterwards.
class LinearSystem {
 public:
  LinearSystem(MatrixXd design, NoisePrecision precision, MatrixXd regularizer, VectorXd observations)
      : design_(std::move(design)),
        precision_(std::move(precision)),
        regularizer_(std::move(regularizer)),
        observations_(std::move(observations)) {
    validate();
  }

  /// Unregularized system.
  LinearSystem(MatrixXd design, NoisePrecision precision, VectorXd observations)
      : LinearSystem(design, std::move(precision), MatrixXd::Zero(design.cols(), design.cols()),
                     std::move(observations)) {}

  const MatrixXd& design() const { return design_; }
  const NoisePrecision& precision() const { return precision_; }
  const MatrixXd& regularizer() const { return regularizer_; }
  const VectorXd& observations() const { return observations_; }
  Index n() const { return design_.rows(); }
  Index d() const { return design_.cols(); }

  /// Same system with a different observation vector.
  LinearSystem with_observations(VectorXd y) const {
    if (y.size() != n()) throw DataError("observation vector has wrong length");
    LinearSystem copy = *this;
    copy.observations_ = std::move(y);
    return copy;
  }

 private:
  void validate() const {
    const Index n = design_.rows();
    const Index d = design_.cols();
    if (n < 1 || d < 1) throw DataError("linear system: design must have at least one row and column");
    if (observations_.size() != n)
      throw DataError("linear system: observations length " + std::to_string(observations_.size()) +
                      " does not match design rows " + std::to_string(n));
    if (precision_.size() != n) throw DataError("linear system: noise precision size does not match n");
    if (regularizer_.rows() != d || regularizer_.cols() != d)
      throw DataError("linear system: regularizer must be d x d");
    if (!design_.allFinite() || !observations_.allFinite() || !regularizer_.allFinite())
      throw DataError("linear system: non-finite entries");
    const double scale = std::max(1.0, regularizer_.cwiseAbs().maxCoeff());
    if ((regularizer_ - regularizer_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
      throw DataError("linear system: regularizer is not symmetric");
    if (!regularizer_.isZero(0.0)) {
      Eigen::SelfAdjointEigenSolver<MatrixXd> eig(regularizer_, Eigen::EigenvaluesOnly);
      const double largest = eig.eigenvalues().maxCoeff();
      const double eps_psd = 1e-10 * std::max(largest, 0.0);
      if (eig.eigenvalues().minCoeff() < -eps_psd)
        throw DataError("linear system: regularizer is not positive semidefinite");
    }
  }

  MatrixXd design_;
  NoisePrecision precision_;
  MatrixXd regularizer_;
  VectorXd observations_;
};

}  // namespace bdmri
