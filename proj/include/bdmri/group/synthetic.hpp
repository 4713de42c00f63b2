#pragma once

#include <algorithm>
#include <cstdint>
#include <string>

#include "bdmri/core/errors.hpp"
#include "bdmri/core/rng.hpp"
#include "bdmri/group/cohort_io.hpp"

namespace bdmri::group {

/// Two groups of subjects whose per-voxel posteriors are normal draws
/// clipped to [0, 1]. Each subject's centre is its group mean plus a
/// between-subject offset; optionally the first patient gets `outlier_factor`
/// times the posterior SD and a centre shifted by `outlier_shift`.
struct SyntheticCohortSpec {
  int controls = 20;
  int patients = 20;
  Index voxels = 8;
  Index draws = 1000;
  double control_mean = 0.50;
  double patient_mean = 0.45;
  double between_sd = 0.01;
  double posterior_sd = 0.02;
  double outlier_factor = 0.0;  ///< 0 disables the outlier
  double outlier_shift = 0.0;
  std::uint64_t seed = 0;
};

inline Cohort synthetic_cohort(const SyntheticCohortSpec& spec) {
  if (spec.controls < 1 || spec.patients < 1) throw DataError("synthetic cohort: both groups need subjects");
  if (spec.voxels < 1 || spec.draws < 2) throw DataError("synthetic cohort: need voxels >= 1 and draws >= 2");
  if (!(spec.posterior_sd > 0.0) || !(spec.between_sd >= 0.0) || !(spec.outlier_factor >= 0.0))
    throw DataError("synthetic cohort: spreads must be positive");
  Cohort c;
  std::uint64_t subject = 0;
  auto make = [&](const std::string& id, double centre, double sd) {
    rng::Stream stream(spec.seed, subject++);
    MatrixXd d(spec.draws, spec.voxels);
    for (Index v = 0; v < spec.voxels; ++v) {
      const double mu = centre + spec.between_sd * stream.normal();
      for (Index s = 0; s < spec.draws; ++s) d(s, v) = std::clamp(mu + sd * stream.normal(), 0.0, 1.0);
    }
    return SubjectPosterior(id, std::move(d));
  };
  for (int i = 0; i < spec.controls; ++i)
    c.controls.push_back(make("control" + std::to_string(i), spec.control_mean, spec.posterior_sd));
  for (int i = 0; i < spec.patients; ++i) {
    const bool outlier = i == 0 && spec.outlier_factor > 0.0;
    c.patients.push_back(make(outlier ? "patient0_outlier" : "patient" + std::to_string(i),
                              spec.patient_mean + (outlier ? spec.outlier_shift : 0.0),
                              outlier ? spec.outlier_factor * spec.posterior_sd : spec.posterior_sd));
  }
  return c;
}

}  // namespace bdmri::group
