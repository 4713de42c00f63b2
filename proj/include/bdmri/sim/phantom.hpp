#pragma once

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bdmri/core/errors.hpp"
#include "bdmri/core/linear_system.hpp"
#include "bdmri/core/rng.hpp"
#include "bdmri/dmri/acquisition.hpp"
#include "bdmri/dmri/sphere_grid.hpp"
#include "bdmri/dmri/tensor.hpp"

namespace bdmri::sim {

using dmri::AcquisitionScheme;
using dmri::DiffusionTensor;
using dmri::Vector3d;

struct Component {
  DiffusionTensor tensor;
  double fraction;
};

/// Mixture of Gaussian compartments with baseline signal s0.
class Phantom {
 public:
  Phantom(std::vector<Component> components, double s0 = 1.0) : components_(std::move(components)), s0_(s0) {
    if (components_.empty()) throw DataError("phantom: needs at least one component");
    if (!(s0_ > 0.0)) throw DataError("phantom: s0 must be positive");
    double total = 0.0;
    for (const auto& c : components_) {
      if (!(c.fraction >= 0.0)) throw DataError("phantom: fractions must be nonnegative");
      if (!c.tensor.positive_definite()) throw DataError("phantom: component tensor is not positive definite");
      total += c.fraction;
    }
    if (std::abs(total - 1.0) > 1e-12) throw DataError("phantom: fractions must sum to 1");
  }

  /// Axially symmetric tensor along x with the given FA and MD.
  static Phantom single(double fa, double md, double s0 = 1.0) {
    return Phantom({{dmri::axial_tensor(dmri::axial_from_fa_md(fa, md), Vector3d::UnitX()), 1.0}}, s0);
  }

  /// Two equal tensors (along x, and rotated by `angle_deg` about y) with
  /// equal fractions.
  static Phantom crossing(double fa, double md, double angle_deg, double s0 = 1.0) {
    const DiffusionTensor first = dmri::axial_tensor(dmri::axial_from_fa_md(fa, md), Vector3d::UnitX());
    return Phantom({{first, 0.5}, {dmri::rotate_about_y(first, angle_deg), 0.5}}, s0);
  }

  const std::vector<Component>& components() const { return components_; }
  double s0() const { return s0_; }

  /// Joint rotation R D R^T of every component.
  Phantom rotated(const Eigen::Matrix3d& r) const {
    std::vector<Component> out = components_;
    for (auto& c : out) c.tensor = dmri::rotate(c.tensor, r);
    return Phantom(std::move(out), s0_);
  }

 private:
  std::vector<Component> components_;
  double s0_;
};

/// S_j = S0 sum_k f_k exp(-b_j g_j^T D_k g_j).
inline VectorXd latent_signal(const Phantom& phantom, const AcquisitionScheme& scheme) {
  VectorXd s(static_cast<Index>(scheme.size()));
  for (std::size_t j = 0; j < scheme.size(); ++j) {
    const auto& m = scheme[j];
    double v = 0.0;
    for (const auto& c : phantom.components())
      v += c.fraction * (m.bval == 0.0 ? 1.0 : std::exp(-m.bval * c.tensor.quadratic_form(m.direction)));
    s[static_cast<Index>(j)] = phantom.s0() * v;
  }
  return s;
}

enum class NoiseKind { rician, gaussian };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::rician;
  double sigma = 0.05;
};

inline std::string to_string(NoiseKind k) { return k == NoiseKind::rician ? "rician" : "gaussian"; }

inline NoiseKind noise_kind_from_string(const std::string& s) {
  if (s == "rician") return NoiseKind::rician;
  if (s == "gaussian") return NoiseKind::gaussian;
  throw DataError("unknown noise kind '" + s + "'");
}

/// trials x n noisy realizations. Measurement j of trial t uses Philox block
/// j of stream t under `seed`, so any entry can be regenerated alone.
///   rician:   sqrt((S + e1)^2 + e2^2)
///   gaussian: S + e1
inline MatrixXd add_noise(const VectorXd& latent, const NoiseSpec& spec, Index trials, std::uint64_t seed) {
  if (!(spec.sigma >= 0.0)) throw DataError("noise: sigma must be nonnegative");
  if (trials < 1) throw DataError("noise: trials must be positive");
  MatrixXd out(trials, latent.size());
  for (Index t = 0; t < trials; ++t) {
    const rng::Stream stream(seed, static_cast<std::uint64_t>(t));
    for (Index j = 0; j < latent.size(); ++j) {
      if (spec.sigma == 0.0) {
        out(t, j) = latent[j];
        continue;
      }
      const auto e = rng::normal_pair(stream.block_at(static_cast<std::uint64_t>(j)));
      const double re = latent[j] + spec.sigma * e[0];
      out(t, j) = spec.kind == NoiseKind::rician ? std::hypot(re, spec.sigma * e[1]) : re;
    }
  }
  return out;
}

/// Shells in the order given, directions from a hemispherical Fibonacci
/// lattice per shell, and n_b0 b = 0 entries at positions round(k N / n_b0).
inline AcquisitionScheme make_scheme(const std::vector<double>& shell_bvals, const std::vector<int>& dirs_per_shell,
                                     int n_b0, std::optional<double> diffusion_time = std::nullopt,
                                     std::optional<dmri::PulseTiming> timing = std::nullopt) {
  if (shell_bvals.size() != dirs_per_shell.size()) throw DataError("scheme: one direction count per shell required");
  if (n_b0 < 0) throw DataError("scheme: negative b0 count");
  std::vector<dmri::Measurement> weighted;
  for (std::size_t s = 0; s < shell_bvals.size(); ++s) {
    if (!(shell_bvals[s] > 0.0)) throw DataError("scheme: shell b-values must be positive");
    if (dirs_per_shell[s] < 1) throw DataError("scheme: direction counts must be positive");
    const MatrixXd dirs = dmri::fibonacci_hemisphere(dirs_per_shell[s]);
    for (Index i = 0; i < dirs.rows(); ++i)
      weighted.push_back({shell_bvals[s], dirs.row(i).transpose(), static_cast<int>(s) + 1});
  }
  const std::size_t total = weighted.size() + static_cast<std::size_t>(n_b0);
  if (total == 0) throw DataError("scheme: no measurements requested");
  std::vector<bool> is_b0(total, false);
  for (int k = 0; k < n_b0; ++k)
    is_b0[static_cast<std::size_t>(std::llround(static_cast<double>(k) * static_cast<double>(total) / n_b0))] = true;

  std::vector<double> bvals;
  std::vector<Vector3d> bvecs;
  std::size_t next = 0;
  for (std::size_t i = 0; i < total; ++i) {
    if (is_b0[i]) {
      bvals.push_back(0.0);
      bvecs.push_back(Vector3d::Zero());
    } else {
      bvals.push_back(weighted[next].bval);
      bvecs.push_back(weighted[next].direction);
      ++next;
    }
  }
  return AcquisitionScheme::from_bvals_bvecs(bvals, bvecs, diffusion_time, timing);
}

/// Pulse timing of the reference in vivo protocol: delta 12.9 ms, Delta 21.8 ms.
inline constexpr dmri::PulseTiming kReferenceTiming{0.0129, 0.0218};

/// Reference protocol (shells 1000, 3000, 5000, 10000 with 64, 64, 128, 256
/// directions and 40 b = 0 images) keeping only shells with b <= bmax.
inline AcquisitionScheme reference_scheme(double bmax = 10000.0) {
  const std::vector<double> shells{1000.0, 3000.0, 5000.0, 10000.0};
  const std::vector<int> dirs{64, 64, 128, 256};
  std::vector<double> b;
  std::vector<int> n;
  for (std::size_t s = 0; s < shells.size(); ++s) {
    if (shells[s] <= bmax + dmri::kShellTolerance) {
      b.push_back(shells[s]);
      n.push_back(dirs[s]);
    }
  }
  if (b.empty()) throw DataError("reference scheme: bmax below the lowest shell");
  return make_scheme(b, n, 40, std::nullopt, kReferenceTiming);
}

/// Ground truth of a phantom. Fields are empty when undefined for its shape.
struct Truth {
  std::optional<double> md;
  std::optional<double> fa;
  std::optional<double> rtop;
  std::optional<double> crossing_angle_deg;
};

namespace detail {
inline bool same_shape(const DiffusionTensor& a, const DiffusionTensor& b) {
  const Vector3d ea = a.eigenvalues();
  const Vector3d eb = b.eigenvalues();
  return (ea - eb).norm() <= 1e-12 * ea.norm();
}
}  // namespace detail

/// Single component: MD, FA, RTOP. Two equal-shape components: MD and RTOP
/// of the shared tensor, plus the angle between principal axes.
inline Truth phantom_truth(const Phantom& phantom, std::optional<double> diffusion_time) {
  Truth t;
  const auto& comps = phantom.components();
  const DiffusionTensor& first = comps.front().tensor;
  bool equal_shapes = true;
  for (const auto& c : comps) equal_shapes = equal_shapes && detail::same_shape(c.tensor, first);
  if (equal_shapes) {
    t.md = dmri::mean_diffusivity(first);
    if (diffusion_time) t.rtop = dmri::rtop_of_tensor(first, *diffusion_time);
  }
  if (comps.size() == 1) {
    t.fa = dmri::fa_of_tensor(first);
  } else if (comps.size() == 2) {
    auto principal = [](const DiffusionTensor& d) {
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(d.matrix());
      return Vector3d(eig.eigenvectors().col(2));
    };
    t.crossing_angle_deg = dmri::axis_angle_deg(principal(comps[0].tensor), principal(comps[1].tensor));
  }
  return t;
}

}  // namespace bdmri::sim
