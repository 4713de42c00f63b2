#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "bdmri/calibrate/quantity.hpp"
#include "bdmri/core/errors.hpp"

namespace bdmri::calibrate {

/// 0.01, 0.02, ..., 0.99.
inline std::vector<double> default_p_grid() {
  std::vector<double> g;
  for (int i = 1; i <= 99; ++i) g.push_back(i / 100.0);
  return g;
}

/// lo, lo + step, ..., hi (inclusive up to rounding).
inline std::vector<double> p_grid(double lo, double hi, double step) {
  std::vector<double> g;
  const int n = static_cast<int>(std::llround((hi - lo) / step));
  for (int i = 0; i <= n; ++i) g.push_back(lo + i * step);
  return g;
}

struct PPCurve {
  std::vector<double> p;
  std::vector<double> coverage;
  std::vector<double> band_lo;
  std::vector<double> band_hi;
  std::size_t n_trials = 0;

  /// max |coverage - p| over grid points with lo <= p <= hi.
  double sup_deviation(double lo = 0.0, double hi = 1.0) const {
    double worst = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
      if (p[i] >= lo - 1e-12 && p[i] <= hi + 1e-12) worst = std::max(worst, std::abs(coverage[i] - p[i]));
    return worst;
  }

  /// Fraction of grid points whose coverage lies inside the band.
  double fraction_in_band() const {
    std::size_t inside = 0;
    for (std::size_t i = 0; i < p.size(); ++i) inside += coverage[i] >= band_lo[i] && coverage[i] <= band_hi[i];
    return static_cast<double>(inside) / static_cast<double>(p.size());
  }
};

/// max_p |a(p) - b(p)| for curves on the same grid.
inline double sup_difference(const PPCurve& a, const PPCurve& b) {
  if (a.p.size() != b.p.size()) throw DataError("P-P curves are on different grids");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.p.size(); ++i) worst = std::max(worst, std::abs(a.coverage[i] - b.coverage[i]));
  return worst;
}

namespace detail {

inline PPCurve pp_with_shift(const std::vector<QuantityPosterior>& posteriors, const std::vector<double>& truths,
                             const std::vector<double>& grid, double shift) {
  if (posteriors.empty()) throw DataError("P-P curve: no posteriors");
  if (truths.size() != posteriors.size()) throw DataError("P-P curve: one truth per posterior required");
  for (double t : truths)
    if (!std::isfinite(t)) throw DataError("P-P curve: truth must be finite");
  PPCurve c;
  c.n_trials = posteriors.size();
  const double n = static_cast<double>(posteriors.size());
  for (double p : grid) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < posteriors.size(); ++i) hits += truths[i] <= posteriors[i].quantile(p) - shift;
    const double half = 1.96 * std::sqrt(p * (1.0 - p) / n);
    c.p.push_back(p);
    c.coverage.push_back(static_cast<double>(hits) / n);
    c.band_lo.push_back(std::max(0.0, p - half));
    c.band_hi.push_back(std::min(1.0, p + half));
  }
  return c;
}

}  // namespace detail

/// coverage(p) = fraction of trials with truth <= Q_i(p); band
/// p +- 1.96 sqrt(p (1 - p) / n).
inline PPCurve pp_curve(const std::vector<QuantityPosterior>& posteriors, const std::vector<double>& truths,
                        const std::vector<double>& grid = default_p_grid()) {
  return detail::pp_with_shift(posteriors, truths, grid, 0.0);
}

inline PPCurve pp_curve(const std::vector<QuantityPosterior>& posteriors, double truth,
                        const std::vector<double>& grid = default_p_grid()) {
  return pp_curve(posteriors, std::vector<double>(posteriors.size(), truth), grid);
}

/// Mean over trials of (posterior mean - truth).
inline double empirical_bias(const std::vector<QuantityPosterior>& posteriors, const std::vector<double>& truths) {
  if (posteriors.empty() || truths.size() != posteriors.size()) throw DataError("bias: one truth per posterior required");
  double sum = 0.0;
  for (std::size_t i = 0; i < posteriors.size(); ++i) sum += posteriors[i].mean() - truths[i];
  return sum / static_cast<double>(posteriors.size());
}

/// As pp_curve, but every quantile is shifted by the empirical bias first.
inline PPCurve bias_corrected_pp(const std::vector<QuantityPosterior>& posteriors, const std::vector<double>& truths,
                                 const std::vector<double>& grid = default_p_grid()) {
  return detail::pp_with_shift(posteriors, truths, grid, empirical_bias(posteriors, truths));
}

inline PPCurve bias_corrected_pp(const std::vector<QuantityPosterior>& posteriors, double truth,
                                 const std::vector<double>& grid = default_p_grid()) {
  return bias_corrected_pp(posteriors, std::vector<double>(posteriors.size(), truth), grid);
}

}  // namespace bdmri::calibrate
