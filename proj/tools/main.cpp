// bdmri: simulate, fit and calibrate Bayesian dMRI posteriors.
//
//   bdmri scheme   --shells 1000 --dirs 64 --b0 1 --out s/
//   bdmri simulate --fa 0.8 --md 0.7e-3 --sigma-rel 0.05 --trials 1000 --out t/
//   bdmri fit dti  --trials t/ --reweight --out f/
//   bdmri pp md    --trials t/ --fits f/ --bootstrap --out p/
//   bdmri cohort   --outlier-factor 10 --out c/
//   bdmri group    --manifest c/manifest.json --weighted --out g/
//
// Exit codes: 0 success, 2 usage, 3 data error, 4 numerical failure.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bdmri/core/errors.hpp"
#include "bdmri/core/parallel.hpp"
#include "bdmri/core/serialization.hpp"
#include "bdmri/group/cohort_io.hpp"
#include "bdmri/group/group.hpp"
#include "bdmri/group/synthetic.hpp"
#include "bdmri/io/csv.hpp"
#include "bdmri/io/svg.hpp"
#include "bdmri/pipeline/experiment.hpp"
#include "bdmri/sim/phantom.hpp"
#include "bdmri/sim/trial_set.hpp"
#include "json.hpp"

#ifndef BDMRI_VERSION
#define BDMRI_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace bdmri;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string out;
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

void add_common(CLI::App* sub, Common& c, bool seeded) {
  sub->add_option("-o,--out", c.out, "Output directory")->required();
  sub->add_option("--threads", c.threads, "Worker threads (0 = all cores)")->capture_default_str();
  if (seeded) sub->add_option("--seed", c.seed, "Base random seed")->capture_default_str();
}

// Resolved configuration of a subcommand: every option with its parsed or
// default value. Output options that do not affect results are skipped.
json resolved_config(const CLI::App* sub) {
  json cfg = json::object();
  for (const CLI::Option* opt : sub->get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help" || name == "threads") continue;
    if (opt->get_expected_max() == 0) {
      cfg[name] = opt->count() > 0;
      continue;
    }
    std::vector<std::string> values = opt->count() > 0 ? opt->results() : std::vector<std::string>{};
    if (values.empty() && !opt->get_default_str().empty()) values.push_back(opt->get_default_str());
    if (values.empty()) {
      cfg[name] = nullptr;
    } else if (opt->get_items_expected_max() > 1) {
      cfg[name] = values;
    } else {
      cfg[name] = values.front();
    }
  }
  return cfg;
}

void write_meta(const fs::path& dir, const CLI::App* sub, json extra = json::object()) {
  json meta = {{"tool", "bdmri"}, {"version", BDMRI_VERSION}, {"command", sub->get_name()}};
  meta["config"] = resolved_config(sub);
  for (auto& [k, v] : extra.items()) meta[k] = v;
  sim::write_json((dir / "meta.json").string(), meta);
}

fs::path prepare_out(const std::string& out) {
  const fs::path dir(out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw DataError("cannot create output directory " + out);
  return dir;
}

// ---------------------------------------------------------------- scheme ---

struct SchemeArgs {
  std::vector<double> shells;
  std::vector<int> dirs;
  int b0 = 1;
  bool reference = false;
  double bmax = 10000.0;
  std::optional<double> td;
  std::optional<double> delta;
  std::optional<double> big_delta;
};

void add_scheme_options(CLI::App* sub, SchemeArgs& a, double default_bmax) {
  a.bmax = default_bmax;
  auto* shells = sub->add_option("--shells", a.shells, "Shell b-values (s/mm^2)")->delimiter(',');
  sub->add_option("--dirs", a.dirs, "Directions per shell")->delimiter(',')->needs(shells);
  sub->add_option("--b0", a.b0, "Number of b = 0 measurements")->capture_default_str();
  sub->add_flag("--reference", a.reference, "Reference protocol: shells 1000/3000/5000/10000, 40 b = 0")
      ->excludes(shells);
  sub->add_option("--bmax", a.bmax, "Keep reference shells with b <= bmax")->capture_default_str();
  sub->add_option("--td", a.td, "Diffusion time (s)");
  sub->add_option("--delta", a.delta, "Pulse duration (s)");
  sub->add_option("--Delta", a.big_delta, "Pulse separation (s)");
}

dmri::AcquisitionScheme build_scheme(const SchemeArgs& a) {
  if (a.shells.empty()) {
    if (a.td || a.delta || a.big_delta) throw UsageError("timing flags apply to --shells schemes only");
    return sim::reference_scheme(a.bmax);
  }
  if (a.dirs.size() != a.shells.size()) throw UsageError("--dirs needs one count per shell");
  std::optional<dmri::PulseTiming> timing;
  if (a.delta || a.big_delta) {
    if (!a.delta || !a.big_delta) throw UsageError("--delta and --Delta must be given together");
    timing = dmri::PulseTiming{*a.delta, *a.big_delta};
  }
  return sim::make_scheme(a.shells, a.dirs, a.b0, a.td, timing);
}

json scheme_json(const dmri::AcquisitionScheme& s) {
  json j = {{"measurements", s.size()}};
  if (const auto td = s.diffusion_time()) j["diffusion_time"] = *td;
  if (const auto tm = s.timing()) j["pulse_timing"] = {{"delta", tm->delta}, {"Delta", tm->Delta}};
  return j;
}

void run_scheme(const CLI::App* sub, const SchemeArgs& a, const Common& c) {
  const auto scheme = build_scheme(a);
  const auto dir = prepare_out(c.out);
  dmri::write_fsl(scheme, (dir / "bvals").string(), (dir / "bvecs").string());
  write_meta(dir, sub, {{"scheme", scheme_json(scheme)}});
  std::cout << "wrote " << scheme.size() << " measurements to " << dir.string() << "\n";
}

// -------------------------------------------------------------- simulate ---

struct SimulateArgs {
  SchemeArgs scheme;
  std::string scheme_dir;
  double fa = 0.8;
  double md = 0.7e-3;
  std::optional<double> angle;
  double s0 = 1.0;
  double sigma_rel = 0.05;
  std::string noise = "rician";
  Index trials = 1000;
};

dmri::AcquisitionScheme load_scheme_dir(const fs::path& dir) {
  std::optional<double> td;
  std::optional<dmri::PulseTiming> timing;
  if (fs::exists(dir / "meta.json")) {
    const auto meta = sim::read_json((dir / "meta.json").string());
    const auto s = meta.value("scheme", json::object());
    if (s.contains("diffusion_time")) td = s["diffusion_time"].get<double>();
    if (s.contains("pulse_timing"))
      timing = dmri::PulseTiming{s["pulse_timing"]["delta"].get<double>(), s["pulse_timing"]["Delta"].get<double>()};
  }
  return dmri::read_fsl((dir / "bvals").string(), (dir / "bvecs").string(), td, timing);
}

void run_simulate(const CLI::App* sub, const SimulateArgs& a, const Common& c) {
  if (a.trials < 1) throw UsageError("--trials must be positive");
  const auto scheme = a.scheme_dir.empty() ? build_scheme(a.scheme) : load_scheme_dir(a.scheme_dir);
  const auto phantom = a.angle ? sim::Phantom::crossing(a.fa, a.md, *a.angle, a.s0) : sim::Phantom::single(a.fa, a.md, a.s0);
  sim::TrialSet ts;
  ts.scheme = scheme;
  ts.latent = sim::latent_signal(phantom, scheme);
  ts.noise = {sim::noise_kind_from_string(a.noise), a.sigma_rel * a.s0};
  ts.seed = c.seed;
  ts.noisy = sim::add_noise(ts.latent, ts.noise, a.trials, c.seed);
  ts.truth = sim::phantom_truth(phantom, scheme.diffusion_time());
  ts.phantom = {{"fa", a.fa}, {"md", a.md}, {"s0", a.s0}, {"components", phantom.components().size()}};
  if (a.angle) ts.phantom["angle_deg"] = *a.angle;
  const auto dir = prepare_out(c.out);
  json meta = {{"tool", "bdmri"}, {"version", BDMRI_VERSION}, {"command", "simulate"}, {"config", resolved_config(sub)}};
  sim::write_trial_set(dir, ts, meta);
  std::cout << "simulated " << a.trials << " trials x " << scheme.size() << " measurements into " << dir.string()
            << "\n";
}

// ------------------------------------------------------------------- fit ---

struct FitArgs {
  std::string model;
  std::string trials;
  bool reweight = false;
  int order = 10;
  double lambda = 5.0;
  double tau = 0.1;
  std::string scaling = "reference";
  double shell = 3000.0;
  std::optional<double> response_fa;
  std::optional<double> response_md;
  double peak_threshold = 0.5;
  double peak_separation = 25.0;
  bool refine = false;
};

json model_options(const FitArgs& a, const sim::TrialSet& ts) {
  if (a.model == "dti") return {{"reweight", a.reweight}};
  const double rfa = a.response_fa ? *a.response_fa : ts.phantom.value("fa", 0.8);
  const double rmd = a.response_md ? *a.response_md : ts.phantom.value("md", 0.7e-3);
  return {{"order", a.order},          {"lambda", a.lambda},
          {"tau", a.tau},              {"scaling", a.scaling},
          {"shell", a.shell},          {"response_fa", rfa},
          {"response_md", rmd},        {"peak_threshold", a.peak_threshold},
          {"peak_separation", a.peak_separation}, {"refine", a.refine}};
}

pipeline::CsdSetup csd_setup_from(const json& o, const dmri::AcquisitionScheme& scheme) {
  dmri::CsdOptions csd;
  csd.order = o.at("order").get<int>();
  csd.lambda = o.at("lambda").get<double>();
  csd.tau = o.at("tau").get<double>();
  const auto scaling = o.at("scaling").get<std::string>();
  if (scaling != "reference" && scaling != "absolute") throw DataError("unknown lambda scaling '" + scaling + "'");
  csd.scaling = scaling == "reference" ? dmri::LambdaScaling::reference : dmri::LambdaScaling::absolute;
  dmri::PeakOptions peaks;
  peaks.relative_threshold = o.at("peak_threshold").get<double>();
  peaks.min_separation_deg = o.at("peak_separation").get<double>();
  peaks.refine = o.at("refine").get<bool>();
  return pipeline::make_csd_setup(scheme, o.at("shell").get<double>(), o.at("response_fa").get<double>(),
                                  o.at("response_md").get<double>(), csd, peaks);
}

json peaks_json(const dmri::FodfPeaks& p) {
  json arr = json::array();
  for (const auto& pk : p.peaks)
    arr.push_back({{"direction", {pk.direction.x(), pk.direction.y(), pk.direction.z()}}, {"amplitude", pk.amplitude}});
  return arr;
}

void run_fit(const CLI::App* sub, const FitArgs& a, const Common& c) {
  const auto ts = sim::read_trial_set(a.trials);
  const json opts = model_options(a, ts);
  const auto n = static_cast<std::size_t>(ts.trials());
  std::vector<json> records(n);

  json summary = {{"trials", n}, {"model", a.model}};
  if (a.model == "dti") {
    const dmri::DtiOptions dopt{a.reweight};
    parallel_for(n, c.threads, [&](std::size_t t) {
      const auto fit = dmri::dti_fit_wls(ts.scheme, ts.noisy.row(static_cast<Index>(t)).transpose(), dopt);
      const auto d = fit.mean_tensor();
      records[t] = {{"trial", t},
                    {"model", "dti"},
                    {"posterior", posterior_to_json(fit.posterior)},
                    {"md", dmri::mean_diffusivity(d)},
                    {"fa", dmri::fa_of_tensor(d)}};
    });
    double md = 0.0, fa = 0.0;
    for (const auto& r : records) {
      md += r["md"].get<double>();
      fa += r["fa"].get<double>();
    }
    summary["mean_md"] = md / static_cast<double>(n);
    summary["mean_fa"] = fa / static_cast<double>(n);
  } else {
    const auto setup = csd_setup_from(opts, ts.scheme);
    const dmri::FodfEvaluator eval(setup.csd.order);
    parallel_for(n, c.threads, [&](std::size_t t) {
      const auto fit = pipeline::fit_csd_trial(setup, ts.noisy.row(static_cast<Index>(t)).transpose());
      const auto peaks = dmri::detect_peaks(eval, fit.posterior.mean(), setup.peaks);
      const auto angle = dmri::crossing_angle(peaks);
      records[t] = {{"trial", t},
                    {"model", "csd"},
                    {"posterior", posterior_to_json(fit.posterior)},
                    {"iterations", fit.iterations},
                    {"converged", fit.converged},
                    {"constrained", fit.constrained_vertices.size()},
                    {"effective_lambda", fit.effective_lambda},
                    {"peaks", peaks_json(peaks)},
                    {"crossing_angle_deg", angle ? json(*angle) : json()}};
    });
    std::size_t detected = 0, converged = 0;
    double sum = 0.0;
    for (const auto& r : records) {
      converged += r["converged"].get<bool>() ? 1 : 0;
      if (!r["crossing_angle_deg"].is_null()) {
        ++detected;
        sum += r["crossing_angle_deg"].get<double>();
      }
    }
    summary["converged"] = converged;
    summary["two_peaks_detected"] = detected;
    summary["detection_rate"] = static_cast<double>(detected) / static_cast<double>(n);
    summary["mean_detected_angle_deg"] = detected > 0 ? json(sum / static_cast<double>(detected)) : json();
    if (ts.truth.crossing_angle_deg) summary["true_angle_deg"] = *ts.truth.crossing_angle_deg;
  }

  const auto dir = prepare_out(c.out);
  {
    std::ofstream out(dir / "posteriors.jsonl");
    if (!out) throw DataError("cannot write posteriors.jsonl");
    for (const auto& r : records) out << r.dump() << "\n";
  }
  sim::write_json((dir / "summary.json").string(), summary);
  write_meta(dir, sub, {{"model", a.model}, {"model_options", opts}, {"trial_set", fs::absolute(a.trials).string()}});
  std::cout << summary.dump(2) << "\n";
}

// -------------------------------------------------------------------- pp ---

struct PPArgs {
  std::string quantity;
  std::string trials;
  std::string fits;
  Index draws = 1000;
  bool bias_correct = false;
  bool bootstrap = false;
  Index bootstrap_draws = calibrate::kDefaultBootstrapDraws;
  double p_lo = 0.01;
  double p_hi = 0.99;
  double p_step = 0.01;
};

std::vector<PosteriorT> read_posteriors(const fs::path& path, std::size_t expected) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::vector<PosteriorT> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(posterior_from_json(json::parse(line).at("posterior")));
    } catch (const json::exception& e) {
      throw DataError(path.string() + ": malformed record: " + e.what());
    }
  }
  if (out.size() != expected)
    throw DataError(path.string() + ": " + std::to_string(out.size()) + " records for " + std::to_string(expected) +
                    " trials");
  return out;
}

void write_curve(const fs::path& path, const calibrate::PPCurve& c) {
  MatrixXd m(static_cast<Index>(c.p.size()), 4);
  for (std::size_t i = 0; i < c.p.size(); ++i)
    m.row(static_cast<Index>(i)) << c.p[i], c.coverage[i], c.band_lo[i], c.band_hi[i];
  io::write_csv(path.string(), {"p", "coverage", "band_lo", "band_hi"}, m);
}

// The refitted posterior must reproduce the stored one, otherwise fits and
// trial set do not belong together.
void check_same_fit(const PosteriorT& stored, const PosteriorT& refit, std::size_t trial) {
  const double scale = std::max(1.0, stored.mean().cwiseAbs().maxCoeff());
  if ((stored.mean() - refit.mean()).cwiseAbs().maxCoeff() > 1e-9 * scale)
    throw DataError("trial " + std::to_string(trial) + ": stored fit does not match a refit of the trial set");
}

void run_pp(const CLI::App* sub, const PPArgs& a, const Common& c) {
  if (a.draws < 2) throw UsageError("insufficient draws for quantiles: --draws must be at least 2");
  if (a.bootstrap && a.bootstrap_draws < 2)
    throw UsageError("insufficient draws for quantiles: --bootstrap-draws must be at least 2");
  const auto q = pipeline::quantity_from_string(a.quantity);
  const auto ts = sim::read_trial_set(a.trials);
  const auto fit_meta = sim::read_json((fs::path(a.fits) / "meta.json").string());
  const auto model = fit_meta.at("model").get<std::string>();
  const json opts = fit_meta.at("model_options");
  if ((q == pipeline::Quantity::angle) != (model == "csd"))
    throw DataError("quantity " + a.quantity + " does not match the " + model + " fits");
  const auto n = static_cast<std::size_t>(ts.trials());
  const auto posteriors = read_posteriors(fs::path(a.fits) / "posteriors.jsonl", n);

  std::optional<double> truth;
  switch (q) {
    case pipeline::Quantity::md: truth = ts.truth.md; break;
    case pipeline::Quantity::fa: truth = ts.truth.fa; break;
    case pipeline::Quantity::rtop: truth = ts.truth.rtop; break;
    case pipeline::Quantity::angle: truth = ts.truth.crossing_angle_deg; break;
  }
  if (!truth) throw DataError("the trial set has no ground truth for " + a.quantity);

  pipeline::EvaluationOptions eo{a.draws, a.bootstrap, a.bootstrap_draws, c.seed};
  std::vector<pipeline::TrialEvaluation> evals(n);
  if (model == "dti") {
    const dmri::DtiOptions dopt{opts.value("reweight", false)};
    parallel_for(n, c.threads, [&](std::size_t t) {
      std::optional<dmri::DtiFit> refit;
      if (a.bootstrap) {
        refit = dmri::dti_fit_wls(ts.scheme, ts.noisy.row(static_cast<Index>(t)).transpose(), dopt);
        check_same_fit(posteriors[t], refit->posterior, t);
      }
      evals[t] = pipeline::evaluate_dti(q, posteriors[t], refit ? &refit->system : nullptr,
                                        ts.scheme.diffusion_time(), eo, t);
    });
  } else {
    const auto setup = csd_setup_from(opts, ts.scheme);
    const dmri::FodfEvaluator eval(setup.csd.order);
    parallel_for(n, c.threads, [&](std::size_t t) {
      std::optional<dmri::ShFit> refit;
      if (a.bootstrap) {
        refit = pipeline::fit_csd_trial(setup, ts.noisy.row(static_cast<Index>(t)).transpose());
        check_same_fit(posteriors[t], refit->posterior, t);
      }
      evals[t] = pipeline::evaluate_angle(posteriors[t], refit ? &refit->system : nullptr, eval, setup.peaks, eo, t);
    });
  }

  const auto grid = calibrate::p_grid(a.p_lo, a.p_hi, a.p_step);
  const auto r = pipeline::pp_from_evaluations(evals, *truth, grid, a.bias_correct);

  const auto dir = prepare_out(c.out);
  std::vector<io::NamedCurve> curves{{"Bayesian", r.bayesian}};
  write_curve(dir / "pp_bayesian.csv", r.bayesian);
  json summary = {{"quantity", a.quantity},
                  {"truth", *truth},
                  {"included_trials", r.included},
                  {"excluded_trials", r.excluded},
                  {"empirical_bias", r.bias},
                  {"bayesian_sup_deviation", r.bayesian.sup_deviation()},
                  {"bayesian_fraction_in_band", r.bayesian.fraction_in_band()}};
  if (r.corrected) {
    write_curve(dir / "pp_bias_corrected.csv", *r.corrected);
    curves.push_back({"Bayesian, bias corrected", *r.corrected});
    summary["corrected_sup_deviation"] = r.corrected->sup_deviation();
  }
  if (r.bootstrap) {
    write_curve(dir / "pp_bootstrap.csv", *r.bootstrap);
    curves.push_back({"bootstrap", *r.bootstrap});
    summary["bootstrap_sup_deviation"] = r.bootstrap->sup_deviation();
    summary["bayesian_vs_bootstrap_sup_difference"] = calibrate::sup_difference(r.bayesian, *r.bootstrap);
  }
  Index failed_draws = 0, boot_failures = 0, flagged = 0;
  for (const auto& e : evals) {
    failed_draws += e.failed_draws;
    boot_failures += e.bootstrap_failures;
    flagged += e.bootstrap_flagged ? 1 : 0;
  }
  summary["undefined_posterior_draws"] = failed_draws;
  if (a.bootstrap) {
    summary["bootstrap_failures"] = boot_failures;
    summary["bootstrap_flagged_trials"] = flagged;
  }
  io::write_pp_svg((dir / "pp.svg").string(), curves, "P-P plot: " + a.quantity);
  sim::write_json((dir / "summary.json").string(), summary);
  write_meta(dir, sub,
             {{"trial_set", fs::absolute(a.trials).string()}, {"fits", fs::absolute(a.fits).string()}, {"model", model}});
  std::cout << summary.dump(2) << "\n";
}

// ---------------------------------------------------------------- cohort ---

void run_cohort(const CLI::App* sub, group::SyntheticCohortSpec spec, const Common& c) {
  spec.seed = c.seed;
  const auto cohort = group::synthetic_cohort(spec);
  const auto dir = prepare_out(c.out);
  group::write_cohort(dir, cohort, c.seed);
  write_meta(dir, sub);
  std::cout << "wrote " << cohort.controls.size() << " controls and " << cohort.patients.size() << " patients to "
            << dir.string() << "\n";
}

// ----------------------------------------------------------------- group ---

struct GroupArgs {
  std::string manifest;
  bool weighted = false;
  std::vector<Index> histogram_voxels;
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

void run_group(const CLI::App* sub, const GroupArgs& a, const Common& c) {
  const auto cohort = group::read_cohort(a.manifest);
  const auto unweighted = group::unweighted_group_diff(cohort.controls, cohort.patients);
  const auto result = a.weighted ? group::weighted_group_diff(cohort.controls, cohort.patients) : unweighted;
  const Index v = result.diff_draws.cols();

  // Per-voxel t-scores in parallel; columns are independent.
  VectorXd t(v);
  std::vector<bool> saturated(static_cast<std::size_t>(v));
  parallel_for(static_cast<std::size_t>(v), c.threads, [&](std::size_t j) {
    const auto bt = group::bayesian_t(MatrixXd(result.diff_draws.col(static_cast<Index>(j))));
    t[static_cast<Index>(j)] = bt.t[0];
    saturated[j] = bt.saturated[0];
  });

  const auto dir = prepare_out(c.out);
  const VectorXd mean = result.mean();
  const VectorXd sd = result.sd();
  MatrixXd table(v, 5);
  for (Index j = 0; j < v; ++j)
    table.row(j) << static_cast<double>(j), mean[j], sd[j], t[j], saturated[static_cast<std::size_t>(j)] ? 1.0 : 0.0;
  io::write_csv((dir / "group.csv").string(), {"voxel", "mean", "sd", "t", "saturated"}, table);

  json summary = {{"analysis", a.weighted ? "weighted" : "unweighted"},
                  {"controls", cohort.controls.size()},
                  {"patients", cohort.patients.size()},
                  {"voxels", v},
                  {"draws", result.diff_draws.rows()}};
  if (a.weighted) {
    const MatrixXd& w = *result.weights;
    std::vector<std::string> header{"subject"};
    for (const auto& h : group::voxel_header(v)) header.push_back(h);
    MatrixXd wt(w.rows(), v + 1);
    wt.col(0) = VectorXd::LinSpaced(w.rows(), 0.0, static_cast<double>(w.rows() - 1));
    wt.rightCols(v) = w;
    io::write_csv((dir / "weights.csv").string(), header, wt);

    // Divergence report: how far each subject's mean weight sits from the
    // cohort median, and how much the weighting moved each t-score.
    std::vector<double> mean_w(static_cast<std::size_t>(w.rows()));
    for (Index s = 0; s < w.rows(); ++s) mean_w[static_cast<std::size_t>(s)] = w.row(s).mean();
    const double med = median(mean_w);
    json subjects = json::array();
    std::size_t s = 0;
    for (const auto* g : {&cohort.controls, &cohort.patients})
      for (const auto& sp : *g) {
        subjects.push_back({{"id", sp.id}, {"mean_weight", mean_w[s]}, {"relative_to_median", mean_w[s] / med}});
        ++s;
      }
    const VectorXd tu = group::bayesian_t(unweighted).t;
    summary["median_mean_weight"] = med;
    summary["subjects"] = subjects;
    summary["max_abs_t_change_vs_unweighted"] = (t - tu).cwiseAbs().maxCoeff();
    summary["max_abs_mean_change_vs_unweighted"] = (mean - unweighted.mean()).cwiseAbs().maxCoeff();
  }
  for (Index j : a.histogram_voxels) {
    if (j < 0 || j >= v) throw DataError("histogram voxel " + std::to_string(j) + " out of range");
    const auto col = result.diff_draws.col(j);
    io::write_histogram_svg((dir / ("hist_v" + std::to_string(j) + ".svg")).string(),
                            std::vector<double>(col.data(), col.data() + col.size()), 40,
                            "group difference, voxel " + std::to_string(j));
  }
  sim::write_json((dir / "summary.json").string(), summary);
  write_meta(dir, sub, {{"manifest", fs::absolute(a.manifest).string()}});
  std::cout << "group analysis (" << summary["analysis"].get<std::string>() << ") written to " << dir.string()
            << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian uncertainty for weighted least-squares dMRI fits"};
  app.set_version_flag("--version", BDMRI_VERSION);
  app.set_config("--config", "", "TOML/INI file of option values (keys are long option names)");
  app.require_subcommand(1);

  Common common;

  SchemeArgs scheme_args;
  auto* scheme = app.add_subcommand("scheme", "Write bvals/bvecs of an acquisition scheme");
  add_scheme_options(scheme, scheme_args, 10000.0);
  add_common(scheme, common, false);

  SimulateArgs sim_args;
  auto* simulate = app.add_subcommand("simulate", "Simulate noisy trials of a single or crossing-tensor phantom");
  add_scheme_options(simulate, sim_args.scheme, 1000.0);
  simulate->add_option("--scheme-dir", sim_args.scheme_dir, "Read bvals/bvecs written by 'scheme'");
  simulate->add_option("--fa", sim_args.fa, "Fractional anisotropy")->capture_default_str();
  simulate->add_option("--md", sim_args.md, "Mean diffusivity (mm^2/s)")->capture_default_str();
  simulate->add_option("--angle", sim_args.angle, "Crossing angle (deg); two equal tensors when set");
  simulate->add_option("--s0", sim_args.s0, "Baseline signal")->capture_default_str();
  simulate->add_option("--sigma-rel", sim_args.sigma_rel, "Noise sigma relative to s0")->capture_default_str();
  simulate->add_option("--noise", sim_args.noise, "Noise model")
      ->check(CLI::IsMember({"rician", "gaussian"}))
      ->capture_default_str();
  simulate->add_option("--trials", sim_args.trials, "Number of trials")->capture_default_str();
  add_common(simulate, common, true);

  FitArgs fit_args;
  auto* fit = app.add_subcommand("fit", "Fit every trial and write one posterior record per trial");
  fit->add_option("model", fit_args.model, "dti or csd")->required()->check(CLI::IsMember({"dti", "csd"}));
  fit->add_option("--trials", fit_args.trials, "Trial set directory")->required();
  fit->add_flag("--reweight", fit_args.reweight, "DTI: refit once with weights from the fitted signal");
  fit->add_option("--order", fit_args.order, "CSD: spherical harmonic order")->capture_default_str();
  fit->add_option("--lambda", fit_args.lambda, "CSD: regularization strength")->capture_default_str();
  fit->add_option("--tau", fit_args.tau, "CSD: amplitude threshold fraction")->capture_default_str();
  fit->add_option("--lambda-scaling", fit_args.scaling, "CSD: reference or absolute")
      ->check(CLI::IsMember({"reference", "absolute"}))
      ->capture_default_str();
  fit->add_option("--shell", fit_args.shell, "CSD: b-value of the shell to deconvolve")->capture_default_str();
  fit->add_option("--response-fa", fit_args.response_fa, "CSD: response FA (default: phantom FA)");
  fit->add_option("--response-md", fit_args.response_md, "CSD: response MD (default: phantom MD)");
  fit->add_option("--peak-threshold", fit_args.peak_threshold, "CSD: relative peak threshold")->capture_default_str();
  fit->add_option("--peak-separation", fit_args.peak_separation, "CSD: minimum peak separation (deg)")
      ->capture_default_str();
  fit->add_flag("--refine", fit_args.refine, "CSD: refine peaks off the grid");
  add_common(fit, common, false);

  PPArgs pp_args;
  auto* pp = app.add_subcommand("pp", "P-P calibration curves of a derived quantity");
  pp->add_option("quantity", pp_args.quantity, "md, fa, rtop or angle")
      ->required()
      ->check(CLI::IsMember({"md", "fa", "rtop", "angle"}));
  pp->add_option("--trials", pp_args.trials, "Trial set directory")->required();
  pp->add_option("--fits", pp_args.fits, "Directory written by 'fit'")->required();
  pp->add_option("--draws", pp_args.draws, "Posterior draws per trial (sampled quantities)")->capture_default_str();
  pp->add_flag("--bias-correct", pp_args.bias_correct, "Also write the bias-corrected curve");
  pp->add_flag("--bootstrap", pp_args.bootstrap, "Also write the residual-bootstrap curve");
  pp->add_option("--bootstrap-draws", pp_args.bootstrap_draws, "Bootstrap draws per trial")->capture_default_str();
  pp->add_option("--p-lo", pp_args.p_lo, "First grid probability")->capture_default_str();
  pp->add_option("--p-hi", pp_args.p_hi, "Last grid probability")->capture_default_str();
  pp->add_option("--p-step", pp_args.p_step, "Grid step")->capture_default_str();
  add_common(pp, common, true);

  group::SyntheticCohortSpec cohort_spec;
  auto* cohort = app.add_subcommand("cohort", "Write a synthetic two-group cohort of posterior draws");
  cohort->add_option("--controls", cohort_spec.controls, "Control subjects")->capture_default_str();
  cohort->add_option("--patients", cohort_spec.patients, "Patient subjects")->capture_default_str();
  cohort->add_option("--voxels", cohort_spec.voxels, "Voxels per subject")->capture_default_str();
  cohort->add_option("--draws", cohort_spec.draws, "Posterior draws per subject")->capture_default_str();
  cohort->add_option("--control-mean", cohort_spec.control_mean, "Control group mean")->capture_default_str();
  cohort->add_option("--patient-mean", cohort_spec.patient_mean, "Patient group mean")->capture_default_str();
  cohort->add_option("--between-sd", cohort_spec.between_sd, "Between-subject SD")->capture_default_str();
  cohort->add_option("--posterior-sd", cohort_spec.posterior_sd, "Posterior SD per subject")->capture_default_str();
  cohort->add_option("--outlier-factor", cohort_spec.outlier_factor, "Posterior SD multiplier of patient 0 (0: none)")
      ->capture_default_str();
  cohort->add_option("--outlier-shift", cohort_spec.outlier_shift, "Mean shift of patient 0")->capture_default_str();
  add_common(cohort, common, true);

  GroupArgs group_args;
  auto* grp = app.add_subcommand("group", "Voxelwise group difference and Bayesian t-scores");
  grp->add_option("--manifest", group_args.manifest, "Cohort manifest.json")->required();
  grp->add_flag("--weighted", group_args.weighted, "Weight subjects by 1/SD of their posterior draws");
  grp->add_option("--histogram", group_args.histogram_voxels, "Voxels to plot as SVG histograms")->delimiter(',');
  add_common(grp, common, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*scheme) run_scheme(scheme, scheme_args, common);
    if (*simulate) run_simulate(simulate, sim_args, common);
    if (*fit) run_fit(fit, fit_args, common);
    if (*pp) run_pp(pp, pp_args, common);
    if (*cohort) run_cohort(cohort, cohort_spec, common);
    if (*grp) run_group(grp, group_args, common);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const json::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
