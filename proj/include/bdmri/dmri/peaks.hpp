#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

#include "bdmri/core/errors.hpp"
#include "bdmri/dmri/sphere_grid.hpp"
#include "bdmri/dmri/spherical_harmonics.hpp"
#include "bdmri/dmri/tensor.hpp"

namespace bdmri::dmri {

struct Peak {
  Vector3d direction;
  double amplitude;
};

/// Sorted by amplitude, largest first.
struct FodfPeaks {
  std::vector<Peak> peaks;
};

struct PeakOptions {
  double min_separation_deg = 25.0;
  double relative_threshold = 0.5;
  /// Polish each grid maximum by a local search off the grid.
  bool refine = false;
};

/// Evaluates fODFs of a fixed order on a grid, caching the basis.
class FodfEvaluator {
 public:
  FodfEvaluator(int order, const SphereGrid& grid = SphereGrid::default_grid())
      : order_(order), grid_(&grid), basis_(sh_basis(grid.vertices(), order)) {}

  int order() const { return order_; }
  const SphereGrid& grid() const { return *grid_; }
  const MatrixXd& basis() const { return basis_; }

  VectorXd on_grid(const VectorXd& coeffs) const {
    if (coeffs.size() != basis_.cols()) throw DataError("fODF: coefficient count does not match order");
    return basis_ * coeffs;
  }

  double at(const VectorXd& coeffs, const Vector3d& direction) const {
    MatrixXd dir(1, 3);
    dir.row(0) = direction.transpose();
    return sh_basis(dir, order_).row(0).dot(coeffs);
  }

 private:
  int order_;
  const SphereGrid* grid_;
  MatrixXd basis_;
};

namespace detail {

inline Vector3d refine_peak(const FodfEvaluator& eval, const VectorXd& coeffs, Vector3d u, double& value) {
  double step = 0.5 * eval.grid().mean_spacing_deg() * std::numbers::pi / 180.0;
  while (step > 1e-5) {
    const Vector3d helper = std::abs(u.x()) < 0.9 ? Vector3d::UnitX() : Vector3d::UnitY();
    const Vector3d e1 = u.cross(helper).normalized();
    const Vector3d e2 = u.cross(e1);
    bool moved = false;
    for (const Vector3d& e : {e1, Vector3d(-e1), e2, Vector3d(-e2)}) {
      const Vector3d cand = (u + step * e).normalized();
      const double v = eval.at(coeffs, cand);
      if (v > value) {
        value = v;
        u = cand;
        moved = true;
        break;
      }
    }
    if (!moved) step *= 0.5;
  }
  return u;
}

// Greedy removal in descending order: keep a peak only if it is at least
// `min_sep` from every kept peak.
inline std::vector<Peak> separate(const std::vector<Peak>& sorted, double min_sep) {
  std::vector<Peak> kept;
  for (const auto& p : sorted) {
    const bool far = std::all_of(kept.begin(), kept.end(),
                                 [&](const Peak& k) { return axis_angle_deg(p.direction, k.direction) >= min_sep; });
    if (far) kept.push_back(p);
  }
  return kept;
}

}  // namespace detail

/// Local maxima of the amplitudes over grid neighbours. The threshold is
/// relative to the largest maximum after subtracting max(min amplitude, 0);
/// antipodal duplicates and peaks closer than the minimum separation are
/// collapsed onto the larger one.
inline FodfPeaks detect_peaks(const FodfEvaluator& eval, const VectorXd& coeffs, const PeakOptions& options = {}) {
  const SphereGrid& grid = eval.grid();
  const VectorXd amp = eval.on_grid(coeffs);
  std::vector<Peak> maxima;
  for (Index i = 0; i < grid.size(); ++i) {
    bool ge_all = true;
    bool gt_any = false;
    for (Index j : grid.neighbours(i)) {
      if (amp[j] > amp[i]) {
        ge_all = false;
        break;
      }
      if (amp[j] < amp[i]) gt_any = true;
    }
    if (ge_all && gt_any) maxima.push_back({grid.vertices().row(i).transpose(), amp[i]});
  }
  FodfPeaks out;
  if (maxima.empty()) return out;
  std::sort(maxima.begin(), maxima.end(), [](const Peak& a, const Peak& b) { return a.amplitude > b.amplitude; });
  if (maxima.front().amplitude <= 0.0) return out;

  const double floor = std::max(amp.minCoeff(), 0.0);
  const double cut = options.relative_threshold * (maxima.front().amplitude - floor);
  std::vector<Peak> strong;
  for (const auto& p : maxima)
    if (p.amplitude - floor >= cut) strong.push_back(p);
  strong = detail::separate(strong, options.min_separation_deg);

  if (options.refine) {
    for (auto& p : strong) p.direction = detail::refine_peak(eval, coeffs, p.direction, p.amplitude);
    std::sort(strong.begin(), strong.end(), [](const Peak& a, const Peak& b) { return a.amplitude > b.amplitude; });
    strong = detail::separate(strong, options.min_separation_deg);
    const double top = strong.front().amplitude;
    const double refined_cut = options.relative_threshold * (top - floor);
    std::erase_if(strong, [&](const Peak& p) { return p.amplitude - floor < refined_cut; });
  }

  for (std::size_t i = 0; i < strong.size(); ++i) {
    if (strong[i].amplitude < options.relative_threshold * strong.front().amplitude)
      throw NumericalError("detect_peaks: peak below relative threshold");
    for (std::size_t j = 0; j < i; ++j)
      if (axis_angle_deg(strong[i].direction, strong[j].direction) < options.min_separation_deg)
        throw NumericalError("detect_peaks: peaks closer than the minimum separation");
  }
  out.peaks = std::move(strong);
  return out;
}

/// Angle (degrees, [0, 90]) between the two largest peaks; nullopt when fewer
/// than two peaks were found.
inline std::optional<double> crossing_angle(const FodfPeaks& peaks) {
  if (peaks.peaks.size() < 2) return std::nullopt;
  return axis_angle_deg(peaks.peaks[0].direction, peaks.peaks[1].direction);
}

}  // namespace bdmri::dmri
