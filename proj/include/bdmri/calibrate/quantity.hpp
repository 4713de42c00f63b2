#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

#include "bdmri/core/errors.hpp"
#include "bdmri/core/posterior.hpp"

namespace bdmri::calibrate {

/// Sorted sample set; quantiles interpolate order statistics.
class EmpiricalDistribution {
 public:
  explicit EmpiricalDistribution(std::vector<double> samples) : sorted_(std::move(samples)) {
    if (sorted_.empty()) throw DataError("empirical distribution: empty sample set");
    for (double v : sorted_)
      if (!std::isfinite(v)) throw DataError("empirical distribution: non-finite sample");
    std::sort(sorted_.begin(), sorted_.end());
  }

  /// Linear interpolation at 1-based position h = p (n - 1) + 1.
  double quantile(double p) const {
    if (!(p > 0.0 && p < 1.0)) throw DataError("quantile: p must lie in (0, 1)");
    const double h = p * static_cast<double>(sorted_.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= sorted_.size()) return sorted_.back();
    const double frac = h - static_cast<double>(lo);
    return sorted_[lo] + frac * (sorted_[lo + 1] - sorted_[lo]);
  }

  double mean() const { return std::accumulate(sorted_.begin(), sorted_.end(), 0.0) / static_cast<double>(size()); }
  std::size_t size() const { return sorted_.size(); }
  const std::vector<double>& sorted() const { return sorted_; }

 private:
  std::vector<double> sorted_;
};

/// Posterior of a derived scalar: closed-form t or a sample set.
class QuantityPosterior {
 public:
  QuantityPosterior(UnivariateT t) : form_(t) {}  // NOLINT(google-explicit-constructor)
  QuantityPosterior(EmpiricalDistribution e) : form_(std::move(e)) {}  // NOLINT
  static QuantityPosterior from_samples(std::vector<double> samples) {
    return QuantityPosterior(EmpiricalDistribution(std::move(samples)));
  }

  double quantile(double p) const {
    return std::visit([p](const auto& f) { return f.quantile(p); }, form_);
  }

  /// Location of the t form, sample mean of the empirical form.
  double mean() const {
    if (const auto* t = std::get_if<UnivariateT>(&form_)) return t->location;
    return std::get<EmpiricalDistribution>(form_).mean();
  }

  bool closed_form() const { return std::holds_alternative<UnivariateT>(form_); }

 private:
  std::variant<UnivariateT, EmpiricalDistribution> form_;
};

inline double quantile(const QuantityPosterior& qp, double p) { return qp.quantile(p); }

/// Q(0.75) - Q(0.25).
inline double iqr(const QuantityPosterior& qp) { return qp.quantile(0.75) - qp.quantile(0.25); }

}  // namespace bdmri::calibrate
