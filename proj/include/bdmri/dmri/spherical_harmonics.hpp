#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "bdmri/core/errors.hpp"
#include "bdmri/core/linear_system.hpp"
#include "bdmri/dmri/tensor.hpp"

namespace bdmri::dmri {

/// Number of real even-order coefficients up to order L: (L+1)(L+2)/2.
inline Index sh_count(int order) { return static_cast<Index>((order + 1) * (order + 2) / 2); }

/// Column of (l, m), l even, |m| <= l.
inline Index sh_index(int l, int m) { return static_cast<Index>((l * l + l + 2) / 2 + m - 1); }

inline void check_even_order(int order) {
  if (order < 0 || order % 2 != 0)
    throw DataError("spherical harmonics: order " + std::to_string(order) + " must be even and nonnegative");
}

/// Orthonormal associated Legendre values Pbar_l^m(x) (Condon-Shortley phase
/// included, normalization sqrt((2l+1)/(4 pi) (l-m)!/(l+m)!)) for 0 <= m <= l
/// <= L, stored at [l (L+1) + m].
inline std::vector<double> normalized_legendre(int order, double x) {
  const int n = order + 1;
  std::vector<double> p(static_cast<std::size_t>(n * n), 0.0);
  auto at = [&](int l, int m) -> double& { return p[static_cast<std::size_t>(l * n + m)]; };
  const double s = std::sqrt(std::max(0.0, 1.0 - x * x));
  at(0, 0) = 1.0 / std::sqrt(4.0 * std::numbers::pi);
  for (int m = 1; m <= order; ++m) at(m, m) = -std::sqrt((2.0 * m + 1.0) / (2.0 * m)) * s * at(m - 1, m - 1);
  for (int m = 0; m < order; ++m) at(m + 1, m) = x * std::sqrt(2.0 * m + 3.0) * at(m, m);
  for (int m = 0; m <= order; ++m) {
    for (int l = m + 2; l <= order; ++l) {
      const double a = std::sqrt((4.0 * l * l - 1.0) / (static_cast<double>(l) * l - m * m));
      const double b = std::sqrt(((l - 1.0) * (l - 1.0) - m * m) / (4.0 * (l - 1.0) * (l - 1.0) - 1.0));
      at(l, m) = a * (x * at(l - 1, m) - b * at(l - 2, m));
    }
  }
  return p;
}

/// Real symmetric spherical harmonics at `directions` (rows are unit
/// vectors):
///   m > 0: sqrt(2) Pbar_l^m(cos theta) cos(m phi)
///   m = 0: Pbar_l^0(cos theta)
///   m < 0: sqrt(2) Pbar_l^|m|(cos theta) sin(|m| phi)
inline MatrixXd sh_basis(const MatrixXd& directions, int order) {
  check_even_order(order);
  if (directions.cols() != 3) throw DataError("sh_basis: directions must be n x 3");
  const Index n = directions.rows();
  MatrixXd b(n, sh_count(order));
  const int stride = order + 1;
  for (Index i = 0; i < n; ++i) {
    const double x = directions(i, 0), y = directions(i, 1), z = directions(i, 2);
    const double r = std::sqrt(x * x + y * y + z * z);
    const double phi = std::atan2(y, x);
    const auto p = normalized_legendre(order, std::clamp(z / r, -1.0, 1.0));
    for (int l = 0; l <= order; l += 2) {
      b(i, sh_index(l, 0)) = p[static_cast<std::size_t>(l * stride)];
      for (int m = 1; m <= l; ++m) {
        const double v = std::sqrt(2.0) * p[static_cast<std::size_t>(l * stride + m)];
        b(i, sh_index(l, m)) = v * std::cos(m * phi);
        b(i, sh_index(l, -m)) = v * std::sin(m * phi);
      }
    }
  }
  return b;
}

/// Legendre polynomial P_l(x) by the three-term recurrence.
inline double legendre(int l, double x) {
  if (l == 0) return 1.0;
  double p0 = 1.0, p1 = x;
  for (int k = 2; k <= l; ++k) {
    const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
    p0 = p1;
    p1 = p2;
  }
  return p1;
}

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// n-point Gauss-Legendre rule on [-1, 1] by Newton iteration on P_n.
inline QuadratureRule gauss_legendre(int n) {
  if (n < 1) throw DataError("gauss_legendre: need at least one node");
  QuadratureRule rule{std::vector<double>(static_cast<std::size_t>(n)),
                      std::vector<double>(static_cast<std::size_t>(n))};
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double step = p1 / dp;
      x -= step;
      if (std::abs(step) < 1e-16) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[static_cast<std::size_t>(i)] = -x;
    rule.nodes[static_cast<std::size_t>(n - 1 - i)] = x;
    rule.weights[static_cast<std::size_t>(i)] = w;
    rule.weights[static_cast<std::size_t>(n - 1 - i)] = w;
  }
  return rule;
}

/// Rotational harmonics r_l = 2 pi int_{-1}^{1} k(t) P_l(t) dt of the
/// single-fibre kernel k(t) = exp(-b (lambda_perp + (lambda_par - lambda_perp) t^2)),
/// with t the cosine between gradient and fibre axis. By Funk-Hecke, an fODF
/// with coefficients c_lm produces the signal sum_lm r_l c_lm Y_lm, and a
/// unit-mass delta maps to the kernel itself. Entry k holds l = 2k.
inline VectorXd response_from_tensor(const AxialEigenvalues& ev, double bval, int order, int nodes = 128) {
  check_even_order(order);
  const auto rule = gauss_legendre(nodes);
  VectorXd r = VectorXd::Zero(order / 2 + 1);
  for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
    const double t = rule.nodes[q];
    const double k = std::exp(-bval * (ev.perpendicular + (ev.parallel - ev.perpendicular) * t * t));
    for (int l = 0; l <= order; l += 2) r[l / 2] += rule.weights[q] * k * legendre(l, t);
  }
  return 2.0 * std::numbers::pi * r;
}

/// Response given as a tensor; it must be axially symmetric (two equal
/// eigenvalues to relative 1e-8) and prolate or isotropic.
inline VectorXd response_from_tensor(const DiffusionTensor& d, double bval, int order, int nodes = 128) {
  const Vector3d ev = d.eigenvalues();  // ascending
  const double scale = std::max(std::abs(ev[2]), 1e-300);
  if (std::abs(ev[1] - ev[0]) > 1e-8 * scale)
    throw DataError("response: tensor is not axially symmetric with a single long axis");
  return response_from_tensor(AxialEigenvalues{ev[2], ev[0]}, bval, order, nodes);
}

/// Per-column multipliers r_{l(j)} for the coefficient layout of sh_basis.
inline VectorXd expand_response(const VectorXd& rotational, int order) {
  VectorXd out(sh_count(order));
  for (int l = 0; l <= order; l += 2)
    for (int m = -l; m <= l; ++m) out[sh_index(l, m)] = rotational[l / 2];
  return out;
}

}  // namespace bdmri::dmri
