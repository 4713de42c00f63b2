#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bdmri/core/errors.hpp"

namespace bdmri::dmri {

using Eigen::Vector3d;

/// Gradient pulse timing in seconds; diffusion time t_d = Delta - delta/3.
struct PulseTiming {
  double delta;  ///< pulse duration
  double Delta;  ///< pulse separation

  double diffusion_time() const { return Delta - delta / 3.0; }
};

struct Measurement {
  double bval;        ///< s/mm^2
  Vector3d direction; ///< unit vector; arbitrary when bval = 0
  int shell_id;
};

/// b-values within this distance (s/mm^2) share a shell.
inline constexpr double kShellTolerance = 50.0;

/// An ordered list of measurements plus optional timing.
class AcquisitionScheme {
 public:
  AcquisitionScheme() = default;

  AcquisitionScheme(std::vector<Measurement> entries, std::optional<double> diffusion_time = std::nullopt,
                    std::optional<PulseTiming> timing = std::nullopt)
      : entries_(std::move(entries)), diffusion_time_(diffusion_time), timing_(timing) {
    if (timing_ && !diffusion_time_) diffusion_time_ = timing_->diffusion_time();
    validate();
  }

  /// Builds a scheme from b-values and directions, assigning shell ids by
  /// clustering b-values within +-50 s/mm^2 (shell 0 is b = 0 when present).
  static AcquisitionScheme from_bvals_bvecs(const std::vector<double>& bvals, const std::vector<Vector3d>& bvecs,
                                            std::optional<double> diffusion_time = std::nullopt,
                                            std::optional<PulseTiming> timing = std::nullopt) {
    if (bvals.size() != bvecs.size()) throw DataError("scheme: bvals and bvecs lengths differ");
    const auto ids = cluster_shells(bvals);
    std::vector<Measurement> entries;
    entries.reserve(bvals.size());
    for (std::size_t i = 0; i < bvals.size(); ++i) {
      Vector3d dir = bvecs[i];
      if (bvals[i] <= kShellTolerance && dir.norm() < 0.5) dir = Vector3d::UnitZ();
      entries.push_back({bvals[i], dir, ids[i]});
    }
    return AcquisitionScheme(std::move(entries), diffusion_time, timing);
  }

  const std::vector<Measurement>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  const Measurement& operator[](std::size_t i) const { return entries_[i]; }
  std::optional<double> diffusion_time() const { return diffusion_time_; }
  std::optional<PulseTiming> timing() const { return timing_; }

  /// q-value (1/mm) of measurement i: b = 4 pi^2 t_d q^2.
  double q_value(std::size_t i) const {
    if (!diffusion_time_) throw DataError("scheme: q-values need a diffusion time");
    return std::sqrt(entries_[i].bval / (4.0 * std::numbers::pi * std::numbers::pi * *diffusion_time_));
  }

  std::vector<double> bvals() const {
    std::vector<double> out;
    for (const auto& m : entries_) out.push_back(m.bval);
    return out;
  }

  /// Indices of measurements satisfying `pred`.
  template <class Pred>
  std::vector<std::size_t> select(Pred pred) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < entries_.size(); ++i)
      if (pred(entries_[i])) idx.push_back(i);
    return idx;
  }

  AcquisitionScheme subset(const std::vector<std::size_t>& idx) const {
    std::vector<Measurement> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(entries_.at(i));
    AcquisitionScheme s;
    s.entries_ = std::move(out);
    s.diffusion_time_ = diffusion_time_;
    s.timing_ = timing_;
    return s;
  }

  /// Shell-id per entry from b-value clustering.
  static std::vector<int> cluster_shells(const std::vector<double>& bvals) {
    std::vector<double> sorted = bvals;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> centers;
    for (double b : sorted) {
      if (centers.empty() || b - centers.back() > kShellTolerance) centers.push_back(b);
    }
    const bool has_b0 = !centers.empty() && centers.front() <= kShellTolerance;
    std::vector<int> ids(bvals.size());
    for (std::size_t i = 0; i < bvals.size(); ++i) {
      const auto it = std::upper_bound(centers.begin(), centers.end(), bvals[i]) - 1;
      const int k = static_cast<int>(it - centers.begin());
      ids[i] = has_b0 ? k : k + 1;
    }
    return ids;
  }

 private:
  void validate() const {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const auto& m = entries_[i];
      if (!(m.bval >= 0.0) || !std::isfinite(m.bval))
        throw DataError("scheme: b-value " + std::to_string(i) + " is negative or non-finite");
      if (m.bval > 0.0 && std::abs(m.direction.norm() - 1.0) > 1e-8)
        throw DataError("scheme: direction " + std::to_string(i) + " is not a unit vector");
    }
    if (diffusion_time_ && !(*diffusion_time_ > 0.0)) throw DataError("scheme: diffusion time must be positive");
    if (timing_ && diffusion_time_ && std::abs(timing_->diffusion_time() - *diffusion_time_) > 1e-12)
      throw DataError("scheme: diffusion time inconsistent with pulse timing");
  }

  std::vector<Measurement> entries_;
  std::optional<double> diffusion_time_;
  std::optional<PulseTiming> timing_;
};

// FSL gradient tables: `bvals` is one whitespace-separated row, `bvecs` three
// rows (x, y, z).

inline void write_fsl(const AcquisitionScheme& scheme, const std::string& bvals_path, const std::string& bvecs_path) {
  std::ofstream bv(bvals_path);
  std::ofstream bd(bvecs_path);
  if (!bv || !bd) throw DataError("cannot write gradient table to " + bvals_path);
  bv << std::setprecision(17);
  bd << std::setprecision(17);
  for (std::size_t i = 0; i < scheme.size(); ++i) bv << (i ? " " : "") << scheme[i].bval;
  bv << "\n";
  for (int axis = 0; axis < 3; ++axis) {
    for (std::size_t i = 0; i < scheme.size(); ++i) {
      const double v = scheme[i].bval > 0.0 ? scheme[i].direction[axis] : 0.0;
      bd << (i ? " " : "") << v;
    }
    bd << "\n";
  }
}

inline std::vector<double> read_numbers_line(std::istream& in) {
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::vector<double> row;
    double v;
    while (ls >> v) row.push_back(v);
    if (!row.empty()) return row;
  }
  return {};
}

inline AcquisitionScheme read_fsl(const std::string& bvals_path, const std::string& bvecs_path,
                                  std::optional<double> diffusion_time = std::nullopt,
                                  std::optional<PulseTiming> timing = std::nullopt) {
  std::ifstream bv(bvals_path);
  std::ifstream bd(bvecs_path);
  if (!bv) throw DataError("cannot read " + bvals_path);
  if (!bd) throw DataError("cannot read " + bvecs_path);
  const auto bvals = read_numbers_line(bv);
  std::vector<std::vector<double>> rows;
  for (int axis = 0; axis < 3; ++axis) rows.push_back(read_numbers_line(bd));
  for (const auto& r : rows)
    if (r.size() != bvals.size()) throw DataError("bvecs rows do not match bvals length");
  std::vector<Vector3d> dirs;
  for (std::size_t i = 0; i < bvals.size(); ++i) {
    Vector3d g(rows[0][i], rows[1][i], rows[2][i]);
    if (bvals[i] > 0.0 && g.norm() > 0.0) g.normalize();
    dirs.push_back(g);
  }
  return AcquisitionScheme::from_bvals_bvecs(bvals, dirs, diffusion_time, timing);
}

}  // namespace bdmri::dmri
