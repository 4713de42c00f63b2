#pragma once

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "bdmri/core/errors.hpp"

namespace bdmri::dmri {

using Eigen::Matrix3d;
using Eigen::Vector3d;

/// Symmetric 3x3 diffusion tensor in mm^2/s. Positive definiteness is not
/// enforced: linear fits can return indefinite estimates.
struct DiffusionTensor {
  double xx = 0, yy = 0, zz = 0, xy = 0, xz = 0, yz = 0;

  static DiffusionTensor from_matrix(const Matrix3d& m) {
    return {m(0, 0), m(1, 1), m(2, 2), 0.5 * (m(0, 1) + m(1, 0)), 0.5 * (m(0, 2) + m(2, 0)),
            0.5 * (m(1, 2) + m(2, 1))};
  }

  static DiffusionTensor diagonal(double a, double b, double c) { return {a, b, c, 0, 0, 0}; }

  Matrix3d matrix() const {
    Matrix3d m;
    m << xx, xy, xz, xy, yy, yz, xz, yz, zz;
    return m;
  }

  double trace() const { return xx + yy + zz; }

  /// Tr(D^2) = squared Frobenius norm.
  double trace_of_square() const {
    return xx * xx + yy * yy + zz * zz + 2.0 * (xy * xy + xz * xz + yz * yz);
  }

  /// g^T D g.
  double quadratic_form(const Vector3d& g) const {
    return xx * g.x() * g.x() + yy * g.y() * g.y() + zz * g.z() * g.z() +
           2.0 * (xy * g.x() * g.y() + xz * g.x() * g.z() + yz * g.y() * g.z());
  }

  Vector3d eigenvalues() const {
    return Eigen::SelfAdjointEigenSolver<Matrix3d>(matrix(), Eigen::EigenvaluesOnly).eigenvalues();
  }

  bool positive_definite() const { return eigenvalues().minCoeff() > 0.0; }
};

/// Tr(D)/3.
inline double mean_diffusivity(const DiffusionTensor& d) { return d.trace() / 3.0; }

/// FA = sqrt(1/2 (3 - Tr(D)^2 / Tr(D^2))), clamped to [0, 1]; 0 when
/// Tr(D^2) = 0. `clamped` reports whether the raw value left [0, 1], which
/// happens only for indefinite tensors.
inline double fa_of_tensor(const DiffusionTensor& d, bool* clamped = nullptr) {
  const double t2 = d.trace_of_square();
  if (clamped) *clamped = false;
  if (t2 <= 0.0) return 0.0;
  const double tr = d.trace();
  const double arg = 0.5 * (3.0 - tr * tr / t2);
  const double fa = std::sqrt(std::max(arg, 0.0));
  if (fa > 1.0) {
    if (clamped) *clamped = true;
    return 1.0;
  }
  return fa;
}

/// Return-to-origin probability det(4 pi t_d D)^{-1/2} in mm^-3 (D in mm^2/s,
/// t_d in s).
inline double rtop_of_tensor(const DiffusionTensor& d, double diffusion_time) {
  if (!(diffusion_time > 0.0)) throw DataError("RTOP: diffusion time must be positive");
  const Vector3d ev = d.eigenvalues();
  if (!(ev.minCoeff() > 0.0)) throw DataError("RTOP undefined: tensor is not positive definite");
  const double scale = 4.0 * std::numbers::pi * diffusion_time;
  return 1.0 / std::sqrt(scale * ev[0] * scale * ev[1] * scale * ev[2]);
}

/// Rotation by `angle_deg` about the y-axis.
inline Matrix3d rotation_about_y(double angle_deg) {
  const double a = angle_deg * std::numbers::pi / 180.0;
  Matrix3d r;
  r << std::cos(a), 0.0, std::sin(a), 0.0, 1.0, 0.0, -std::sin(a), 0.0, std::cos(a);
  return r;
}

inline DiffusionTensor rotate(const DiffusionTensor& d, const Matrix3d& r) {
  return DiffusionTensor::from_matrix(r * d.matrix() * r.transpose());
}

inline DiffusionTensor rotate_about_y(const DiffusionTensor& d, double angle_deg) {
  return rotate(d, rotation_about_y(angle_deg));
}

/// Angle between axes, folded into [0, 90] degrees.
inline double axis_angle_deg(const Vector3d& a, const Vector3d& b) {
  const double c = std::clamp(std::abs(a.normalized().dot(b.normalized())), 0.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

/// Axially symmetric eigenvalues (parallel, perpendicular).
struct AxialEigenvalues {
  double parallel;
  double perpendicular;
};

/// Prolate axially symmetric tensor with the given FA and MD:
/// parallel = MD + 2a, perpendicular = MD - a, a = FA MD / sqrt(3 - 2 FA^2).
inline AxialEigenvalues axial_from_fa_md(double fa, double md) {
  if (!(fa >= 0.0 && fa < 1.0)) throw DataError("axial tensor: FA must lie in [0, 1)");
  if (!(md > 0.0)) throw DataError("axial tensor: MD must be positive");
  const double a = fa * md / std::sqrt(3.0 - 2.0 * fa * fa);
  return {md + 2.0 * a, md - a};
}

/// Axially symmetric tensor with its principal axis along `axis`.
inline DiffusionTensor axial_tensor(const AxialEigenvalues& ev, const Vector3d& axis) {
  const Vector3d u = axis.normalized();
  const Matrix3d m = ev.perpendicular * Matrix3d::Identity() +
                     (ev.parallel - ev.perpendicular) * u * u.transpose();
  return DiffusionTensor::from_matrix(m);
}

}  // namespace bdmri::dmri
