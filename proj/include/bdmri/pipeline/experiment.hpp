#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bdmri/calibrate/bootstrap.hpp"
#include "bdmri/calibrate/pp.hpp"
#include "bdmri/calibrate/quantity.hpp"
#include "bdmri/core/errors.hpp"
#include "bdmri/core/rng.hpp"
#include "bdmri/dmri/csd.hpp"
#include "bdmri/dmri/dti.hpp"
#include "bdmri/dmri/peaks.hpp"

namespace bdmri::pipeline {

enum class Quantity { md, fa, rtop, angle };

inline std::string to_string(Quantity q) {
  switch (q) {
    case Quantity::md: return "md";
    case Quantity::fa: return "fa";
    case Quantity::rtop: return "rtop";
    case Quantity::angle: return "angle";
  }
  return "?";
}

inline Quantity quantity_from_string(const std::string& s) {
  if (s == "md") return Quantity::md;
  if (s == "fa") return Quantity::fa;
  if (s == "rtop") return Quantity::rtop;
  if (s == "angle") return Quantity::angle;
  throw DataError("unknown quantity '" + s + "'");
}

// Child-seed indices, so sampling and bootstrap of one trial never share streams.
inline constexpr std::uint64_t kSamplingStream = 0;
inline constexpr std::uint64_t kBootstrapStream = 1;

inline std::uint64_t trial_seed(std::uint64_t seed, std::uint64_t purpose, std::uint64_t trial) {
  return rng::derive_seed(rng::derive_seed(seed, purpose), trial);
}

/// The b = 0 entries and one diffusion-weighted shell of a scheme.
struct ShellSelection {
  std::vector<std::size_t> b0;
  std::vector<std::size_t> shell;
  dmri::AcquisitionScheme scheme;
  double bval = 0.0;
};

inline ShellSelection select_shell(const dmri::AcquisitionScheme& scheme, double bval) {
  ShellSelection s;
  s.bval = bval;
  s.b0 = scheme.select([](const dmri::Measurement& m) { return m.bval <= dmri::kShellTolerance; });
  s.shell = scheme.select([bval](const dmri::Measurement& m) {
    return m.bval > dmri::kShellTolerance && std::abs(m.bval - bval) <= dmri::kShellTolerance;
  });
  if (s.b0.empty()) throw DataError("shell selection: scheme has no b = 0 measurements for normalization");
  if (s.shell.empty()) throw DataError("shell selection: no measurements near b = " + std::to_string(bval));
  s.scheme = scheme.subset(s.shell);
  return s;
}

/// Shell measurements divided by the mean of the b = 0 measurements.
inline VectorXd normalized_shell_signal(const ShellSelection& sel, const VectorXd& signal) {
  double s0 = 0.0;
  for (auto i : sel.b0) s0 += signal[static_cast<Index>(i)];
  s0 /= static_cast<double>(sel.b0.size());
  if (!(s0 > 0.0)) throw DataError("shell normalization: mean b = 0 signal is not positive");
  VectorXd y(static_cast<Index>(sel.shell.size()));
  for (std::size_t k = 0; k < sel.shell.size(); ++k) y[static_cast<Index>(k)] = signal[static_cast<Index>(sel.shell[k])] / s0;
  return y;
}

/// Everything needed to fit and read out CSD for one trial set.
struct CsdSetup {
  ShellSelection selection;
  VectorXd response;
  dmri::CsdOptions csd;
  dmri::PeakOptions peaks;
};

/// Response from an axially symmetric tensor with the given FA and MD.
inline CsdSetup make_csd_setup(const dmri::AcquisitionScheme& scheme, double shell_bval, double response_fa,
                               double response_md, const dmri::CsdOptions& csd = {},
                               const dmri::PeakOptions& peaks = {}) {
  CsdSetup s{select_shell(scheme, shell_bval), {}, csd, peaks};
  s.response = dmri::response_from_tensor(dmri::axial_from_fa_md(response_fa, response_md), shell_bval, csd.order);
  return s;
}

inline dmri::ShFit fit_csd_trial(const CsdSetup& setup, const VectorXd& signal) {
  return dmri::csd_fit(setup.selection.scheme, normalized_shell_signal(setup.selection, signal), setup.response,
                       setup.csd);
}

inline std::optional<double> angle_of(const dmri::FodfEvaluator& eval, const VectorXd& coeffs,
                                      const dmri::PeakOptions& options) {
  return dmri::crossing_angle(dmri::detect_peaks(eval, coeffs, options));
}

/// Scalar read out of a coefficient vector; nullopt where undefined.
inline calibrate::CoefficientStatistic dti_statistic(Quantity q, std::optional<double> diffusion_time) {
  switch (q) {
    case Quantity::md:
      return [](const VectorXd& c) -> std::optional<double> { return (c[dmri::kDxx] + c[dmri::kDyy] + c[dmri::kDzz]) / 3.0; };
    case Quantity::fa:
      return [](const VectorXd& c) -> std::optional<double> {
        return dmri::fa_of_tensor(dmri::tensor_from_coefficients(c));
      };
    case Quantity::rtop:
      if (!diffusion_time) throw DataError("RTOP needs a diffusion time");
      return [td = *diffusion_time](const VectorXd& c) -> std::optional<double> {
        const auto d = dmri::tensor_from_coefficients(c);
        if (!d.positive_definite()) return std::nullopt;
        return dmri::rtop_of_tensor(d, td);
      };
    case Quantity::angle: break;
  }
  throw DataError("quantity " + to_string(q) + " is not defined for DTI");
}

/// Bayesian (and optionally bootstrap) posterior of one quantity for one trial.
struct TrialEvaluation {
  std::optional<calibrate::QuantityPosterior> bayesian;
  std::optional<calibrate::QuantityPosterior> bootstrap;
  /// Posterior draws where the quantity was undefined.
  Index failed_draws = 0;
  Index bootstrap_failures = 0;
  bool bootstrap_flagged = false;
};

struct EvaluationOptions {
  Index draws = 1000;
  bool bootstrap = false;
  Index bootstrap_draws = calibrate::kDefaultBootstrapDraws;
  std::uint64_t seed = 0;
};

inline void check_draws(Index draws) {
  if (draws < 2) throw DataError("insufficient draws for quantiles: need at least 2, got " + std::to_string(draws));
}

namespace detail {
inline std::optional<calibrate::QuantityPosterior> from_samples(std::vector<double> v) {
  if (v.size() < 2) return std::nullopt;
  return calibrate::QuantityPosterior::from_samples(std::move(v));
}

inline void add_bootstrap(TrialEvaluation& out, const LinearSystem* system, const PosteriorT& post,
                          const calibrate::CoefficientStatistic& stat, const EvaluationOptions& opt,
                          std::uint64_t trial) {
  if (!opt.bootstrap) return;
  if (system == nullptr) throw DataError("bootstrap requested without the fitted system");
  auto b = calibrate::residual_bootstrap(*system, post, stat, opt.bootstrap_draws,
                                         trial_seed(opt.seed, kBootstrapStream, trial));
  out.bootstrap_failures = b.failures;
  out.bootstrap_flagged = b.flagged;
  out.bootstrap = from_samples(std::move(b.samples));
}
}  // namespace detail

/// MD is closed form; FA and RTOP are sampled. `system` is only needed for
/// the bootstrap.
inline TrialEvaluation evaluate_dti(Quantity q, const PosteriorT& post, const LinearSystem* system,
                                    std::optional<double> diffusion_time, const EvaluationOptions& opt,
                                    std::uint64_t trial) {
  check_draws(opt.draws);
  TrialEvaluation out;
  const std::uint64_t seed = trial_seed(opt.seed, kSamplingStream, trial);
  switch (q) {
    case Quantity::md:
      out.bayesian = calibrate::QuantityPosterior(dmri::md_posterior(post));
      break;
    case Quantity::fa:
      out.bayesian = detail::from_samples(dmri::fa_posterior_samples(post, opt.draws, seed).values);
      break;
    case Quantity::rtop: {
      if (!diffusion_time) throw DataError("RTOP needs a diffusion time");
      auto rt = dmri::rtop_posterior_samples(post, *diffusion_time, opt.draws, seed);
      out.failed_draws = rt.rejected;
      out.bayesian = detail::from_samples(std::move(rt.values));
      break;
    }
    case Quantity::angle:
      throw DataError("the crossing angle needs a CSD fit");
  }
  detail::add_bootstrap(out, system, post, dti_statistic(q, diffusion_time), opt, trial);
  return out;
}

/// Crossing-angle posterior: peaks of every posterior draw; draws with fewer
/// than two peaks are counted and dropped.
inline TrialEvaluation evaluate_angle(const PosteriorT& post, const LinearSystem* system,
                                      const dmri::FodfEvaluator& eval, const dmri::PeakOptions& peaks,
                                      const EvaluationOptions& opt, std::uint64_t trial) {
  check_draws(opt.draws);
  TrialEvaluation out;
  const MatrixXd draws = sample_posterior(post, opt.draws, trial_seed(opt.seed, kSamplingStream, trial));
  std::vector<double> values;
  for (Index k = 0; k < draws.rows(); ++k) {
    if (const auto a = angle_of(eval, draws.row(k).transpose(), peaks)) {
      values.push_back(*a);
    } else {
      ++out.failed_draws;
    }
  }
  out.bayesian = detail::from_samples(std::move(values));
  const calibrate::CoefficientStatistic stat = [&](const VectorXd& c) { return angle_of(eval, c, peaks); };
  detail::add_bootstrap(out, system, post, stat, opt, trial);
  return out;
}

/// Curves over the trials whose posterior exists.
struct PPResult {
  calibrate::PPCurve bayesian;
  std::optional<calibrate::PPCurve> corrected;
  std::optional<calibrate::PPCurve> bootstrap;
  double bias = 0.0;
  std::size_t included = 0;
  std::size_t excluded = 0;
};

inline PPResult pp_from_evaluations(const std::vector<TrialEvaluation>& evals, double truth,
                                    const std::vector<double>& grid, bool bias_correct) {
  std::vector<calibrate::QuantityPosterior> bayes, boot;
  bool want_boot = false;
  for (const auto& e : evals) want_boot = want_boot || e.bootstrap.has_value();
  PPResult r;
  for (const auto& e : evals) {
    // A trial enters only if every requested curve has a posterior for it, so
    // Bayesian and bootstrap curves share their trials.
    if (!e.bayesian || (want_boot && !e.bootstrap)) {
      ++r.excluded;
      continue;
    }
    bayes.push_back(*e.bayesian);
    if (want_boot) boot.push_back(*e.bootstrap);
  }
  r.included = bayes.size();
  if (bayes.empty()) throw NumericalError("P-P: no trial produced a posterior");
  const std::vector<double> truths(bayes.size(), truth);
  r.bayesian = calibrate::pp_curve(bayes, truths, grid);
  r.bias = calibrate::empirical_bias(bayes, truths);
  if (bias_correct) r.corrected = calibrate::bias_corrected_pp(bayes, truths, grid);
  if (want_boot) r.bootstrap = calibrate::pp_curve(boot, truths, grid);
  return r;
}

}  // namespace bdmri::pipeline
