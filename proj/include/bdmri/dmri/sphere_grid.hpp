#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

#include "bdmri/core/errors.hpp"
#include "bdmri/core/linear_system.hpp"

namespace bdmri::dmri {

inline constexpr double kGoldenAngle = 2.399963229728653;  // pi (3 - sqrt 5)

/// Spherical Fibonacci lattice over the full sphere:
/// z_i = 1 - (2i + 1)/n, phi_i = i * golden angle.
inline MatrixXd fibonacci_sphere(Index n) {
  if (n < 1) throw DataError("fibonacci_sphere: need at least one point");
  MatrixXd p(n, 3);
  for (Index i = 0; i < n; ++i) {
    const double z = 1.0 - (2.0 * i + 1.0) / static_cast<double>(n);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = static_cast<double>(i) * kGoldenAngle;
    p.row(i) << r * std::cos(phi), r * std::sin(phi), z;
  }
  return p;
}

/// Fibonacci lattice over the upper hemisphere: z_i = 1 - (i + 0.5)/n.
inline MatrixXd fibonacci_hemisphere(Index n) {
  if (n < 1) throw DataError("fibonacci_hemisphere: need at least one point");
  MatrixXd p(n, 3);
  for (Index i = 0; i < n; ++i) {
    const double z = 1.0 - (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = static_cast<double>(i) * kGoldenAngle;
    p.row(i) << r * std::cos(phi), r * std::sin(phi), z;
  }
  return p;
}

/// Near-uniform point set on the sphere with nearest-neighbour lists.
class SphereGrid {
 public:
  SphereGrid(MatrixXd vertices, int neighbours) : vertices_(std::move(vertices)) {
    if (vertices_.cols() != 3) throw DataError("SphereGrid: vertices must be n x 3");
    const Index n = vertices_.rows();
    if (neighbours < 1 || neighbours >= n) throw DataError("SphereGrid: invalid neighbour count");
    neighbours_.resize(static_cast<std::size_t>(n));
    const MatrixXd dots = vertices_ * vertices_.transpose();
    std::vector<Index> order(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
      std::iota(order.begin(), order.end(), Index{0});
      std::partial_sort(order.begin(), order.begin() + neighbours + 1, order.end(),
                        [&](Index a, Index b) { return dots(i, a) > dots(i, b); });
      auto& list = neighbours_[static_cast<std::size_t>(i)];
      for (int k = 0; k <= neighbours && static_cast<int>(list.size()) < neighbours; ++k)
        if (order[static_cast<std::size_t>(k)] != i) list.push_back(order[static_cast<std::size_t>(k)]);
    }
    double sum = 0.0;
    for (Index i = 0; i < n; ++i) sum += std::acos(std::clamp(dots(i, neighbours_[static_cast<std::size_t>(i)].front()), -1.0, 1.0));
    spacing_deg_ = sum / static_cast<double>(n) * 180.0 / std::numbers::pi;
  }

  /// 724 Fibonacci points, 6 nearest neighbours each. Used both as the CSD
  /// constraint set and as the peak-search grid.
  static const SphereGrid& default_grid() {
    static const SphereGrid grid(fibonacci_sphere(724), 6);
    return grid;
  }

  const MatrixXd& vertices() const { return vertices_; }
  Index size() const { return vertices_.rows(); }
  const std::vector<Index>& neighbours(Index i) const { return neighbours_[static_cast<std::size_t>(i)]; }

  /// Mean angle (degrees) from each vertex to its nearest neighbour.
  double mean_spacing_deg() const { return spacing_deg_; }

 private:
  MatrixXd vertices_;
  std::vector<std::vector<Index>> neighbours_;
  double spacing_deg_ = 0.0;
};

}  // namespace bdmri::dmri
