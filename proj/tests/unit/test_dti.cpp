#include <gtest/gtest.h>

#include <Eigen/Geometry>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "bdmri/dmri/dti.hpp"
#include "bdmri/sim/phantom.hpp"

using namespace bdmri;
using namespace bdmri::dmri;

namespace {

// Axial eigenvalues for a given FA and MD by bisection on the parallel
// eigenvalue, using FA = |a - p| / sqrt(a^2 + 2 p^2) with p = (3 MD - a)/2.
AxialEigenvalues bisect_axial(double fa, double md) {
  double lo = md, hi = 3.0 * md;
  auto f = [&](double a) {
    const double p = 0.5 * (3.0 * md - a);
    return std::abs(a - p) / std::sqrt(a * a + 2.0 * p * p) - fa;
  };
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) > 0.0 ? hi : lo) = mid;
  }
  const double a = 0.5 * (lo + hi);
  return {a, 0.5 * (3.0 * md - a)};
}

Eigen::Matrix3d random_rotation(std::mt19937_64& gen) {
  std::normal_distribution<double> nd;
  Eigen::Quaterniond q(nd(gen), nd(gen), nd(gen), nd(gen));
  return q.normalized().toRotationMatrix();
}

AcquisitionScheme b1000_scheme() { return sim::reference_scheme(1000.0); }

DtiFit point_mass_fit(const DiffusionTensor& d) {
  const auto scheme = b1000_scheme();
  const VectorXd s = sim::latent_signal(sim::Phantom({{d, 1.0}}), scheme);
  DtiFit fit = dti_fit_wls(scheme, s);
  fit.posterior = PosteriorT(coefficients_from_tensor(d), 50.0, 0.0, MatrixXd::Zero(kDtiDim, kDtiDim));
  return fit;
}

}  // namespace

TEST(Tensor, FaMatchesRootFindOracle) {
  const auto ev = bisect_axial(0.8, 0.7e-3);
  const auto d = DiffusionTensor::diagonal(ev.parallel, ev.perpendicular, ev.perpendicular);
  EXPECT_NEAR(fa_of_tensor(d), 0.8, 1e-10);
  EXPECT_NEAR(mean_diffusivity(d), 0.7e-3, 1e-16);
  const auto built = axial_from_fa_md(0.8, 0.7e-3);
  EXPECT_NEAR(built.parallel / ev.parallel, 1.0, 1e-10);
  EXPECT_NEAR(built.perpendicular / ev.perpendicular, 1.0, 1e-10);
}

TEST(Tensor, FaLimits) {
  EXPECT_EQ(fa_of_tensor(DiffusionTensor::diagonal(1e-3, 1e-3, 1e-3)), 0.0);
  EXPECT_NEAR(fa_of_tensor(DiffusionTensor::diagonal(1.0, 0.0, 0.0)), 1.0, 1e-15);
  EXPECT_EQ(fa_of_tensor(DiffusionTensor::diagonal(0.0, 0.0, 0.0)), 0.0);
  bool clamped = false;
  const double fa = fa_of_tensor(DiffusionTensor::diagonal(1.0, -0.9, 0.0), &clamped);
  EXPECT_EQ(fa, 1.0);
  EXPECT_TRUE(clamped);
}

TEST(Tensor, FaInvariantUnderRotationAndScale) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0.1e-3, 2e-3);
  for (int k = 0; k < 50; ++k) {
    const auto d = rotate(DiffusionTensor::diagonal(u(gen), u(gen), u(gen)), random_rotation(gen));
    const double fa = fa_of_tensor(d);
    EXPECT_NEAR(fa_of_tensor(rotate(d, random_rotation(gen))), fa, 1e-10);
    const Matrix3d scaled = 7.5 * d.matrix();
    EXPECT_NEAR(fa_of_tensor(DiffusionTensor::from_matrix(scaled)), fa, 1e-10);
  }
}

TEST(Tensor, RtopClosedForms) {
  const double td = 0.02;
  const double d = 1e-3;
  const double expected = std::pow(4.0 * std::numbers::pi * td * d, -1.5);
  EXPECT_NEAR(rtop_of_tensor(DiffusionTensor::diagonal(d, d, d), td) / expected, 1.0, 1e-12);

  const auto t = axial_tensor(axial_from_fa_md(0.8, 0.7e-3), Vector3d::UnitX());
  const double base = rtop_of_tensor(t, td);
  const Matrix3d scaled = 2.5 * t.matrix();
  EXPECT_NEAR(rtop_of_tensor(DiffusionTensor::from_matrix(scaled), td) / base, std::pow(2.5, -1.5), 1e-12);

  std::mt19937_64 gen(4);
  for (int k = 0; k < 20; ++k) EXPECT_NEAR(rtop_of_tensor(rotate(t, random_rotation(gen)), td) / base, 1.0, 1e-10);
}

TEST(Tensor, RtopOfReferencePhantom) {
  const auto t = axial_tensor(axial_from_fa_md(0.8, 0.7e-3), Vector3d::UnitX());
  const double rtop = rtop_of_tensor(t, sim::kReferenceTiming.diffusion_time());
  EXPECT_NEAR(rtop / 1e6, 0.90, 0.005);
}

TEST(Tensor, RtopRejectsIndefinite) {
  EXPECT_THROW(rtop_of_tensor(DiffusionTensor::diagonal(1e-3, 1e-3, -1e-4), 0.02), DataError);
  EXPECT_THROW(rtop_of_tensor(DiffusionTensor::diagonal(1e-3, 1e-3, 1e-3), 0.0), DataError);
}

TEST(Tensor, RotateAboutY) {
  const auto d = DiffusionTensor::diagonal(3.0, 2.0, 1.0);
  const auto same = rotate_about_y(d, 0.0);
  EXPECT_NEAR((same.matrix() - d.matrix()).norm(), 0.0, 1e-15);
  const auto swapped = rotate_about_y(d, 90.0);
  const Matrix3d expected = Vector3d(1.0, 2.0, 3.0).asDiagonal();
  EXPECT_NEAR((swapped.matrix() - expected).norm(), 0.0, 1e-14);
  for (double angle : {13.0, 45.0, 60.0, 170.0})
    EXPECT_NEAR((rotate_about_y(d, angle).eigenvalues() - d.eigenvalues()).norm(), 0.0, 1e-12);
}

TEST(DtiDesign, ExampleRows) {
  std::vector<double> b{0.0, 1000.0, 1000.0};
  std::vector<Vector3d> g{Vector3d::Zero(), Vector3d::UnitX(), Vector3d::UnitY()};
  const auto scheme = AcquisitionScheme::from_bvals_bvecs(b, g);
  const MatrixXd x = dti_design(scheme);
  VectorXd row0(7), row1(7);
  row0 << 1, 0, 0, 0, 0, 0, 0;
  row1 << 1, -1000, 0, 0, 0, 0, 0;
  EXPECT_EQ(x.row(0).transpose(), row0);
  EXPECT_EQ(x.row(1).transpose(), row1);
  const VectorXd c = coefficients_from_tensor(DiffusionTensor::diagonal(1.7e-3, 0.2e-3, 0.2e-3));
  EXPECT_NEAR(x.row(2).dot(c), -0.2, 1e-15);
}

TEST(DtiDesign, StejskalTannerRoundTrip) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(0.1e-3, 2e-3);
  const auto scheme = sim::reference_scheme();
  const MatrixXd x = dti_design(scheme);
  for (int k = 0; k < 10; ++k) {
    const auto d = rotate(DiffusionTensor::diagonal(u(gen), u(gen), u(gen)), random_rotation(gen));
    const VectorXd logs = x * coefficients_from_tensor(d, std::log(2.0));
    const VectorXd s = sim::latent_signal(sim::Phantom({{d, 1.0}}, 2.0), scheme);
    EXPECT_LE((logs - s.array().log().matrix()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(DtiFit, NoiselessRecovery) {
  const auto scheme = b1000_scheme();
  const auto truth = rotate_about_y(axial_tensor(axial_from_fa_md(0.8, 0.7e-3), Vector3d::UnitX()), 30.0);
  const VectorXd s = sim::latent_signal(sim::Phantom({{truth, 1.0}}), scheme);
  for (bool reweight : {false, true}) {
    const auto fit = dti_fit_wls(scheme, s, {reweight});
    const Matrix3d err = fit.mean_tensor().matrix() - truth.matrix();
    EXPECT_LE(err.norm() / truth.matrix().norm(), 1e-10);
    EXPECT_NEAR(fit.posterior.mean()[kLogS0], 0.0, 1e-10);
    EXPECT_EQ(fit.posterior.dim(), kDtiDim);
  }
}

TEST(DtiFit, ObservedSignalWeights) {
  const auto scheme = b1000_scheme();
  const VectorXd s = sim::latent_signal(sim::Phantom::single(0.5, 0.7e-3), scheme);
  const auto fit = dti_fit_wls(scheme, s);
  ASSERT_TRUE(fit.system.precision().is_diagonal());
  EXPECT_LE((fit.system.precision().weights() - s.cwiseAbs2()).norm(), 1e-15);
  EXPECT_LE((fit.system.observations() - s.array().log().matrix()).norm(), 1e-15);
}

TEST(DtiFit, Errors) {
  std::vector<double> b(10, 0.0);
  std::vector<Vector3d> g(10, Vector3d::Zero());
  const auto b0_only = AcquisitionScheme::from_bvals_bvecs(b, g);
  EXPECT_THROW(dti_fit_wls(b0_only, VectorXd::Ones(10)), DataError);

  const auto scheme = b1000_scheme();
  VectorXd s = sim::latent_signal(sim::Phantom::single(0.5, 0.7e-3), scheme);
  s[3] = 0.0;
  EXPECT_THROW(dti_fit_wls(scheme, s), DataError);
  EXPECT_THROW(dti_fit_wls(scheme, VectorXd::Ones(5)), DataError);
}

TEST(DtiFit, MdIsAffineInCoefficients) {
  const auto scheme = b1000_scheme();
  const VectorXd latent = sim::latent_signal(sim::Phantom::single(0.8, 0.7e-3), scheme);
  const MatrixXd noisy = sim::add_noise(latent, {}, 5, 11);
  for (Index t = 0; t < noisy.rows(); ++t) {
    const auto fit = dti_fit_wls(scheme, noisy.row(t).transpose());
    const auto md = md_posterior(fit);
    EXPECT_NEAR(md.location, fit.mean_tensor().trace() / 3.0, 1e-18);
    EXPECT_EQ(md.dof, fit.posterior.dof());
    const double var = (fit.posterior.scale()(kDxx, kDxx) + fit.posterior.scale()(kDyy, kDyy) +
                        fit.posterior.scale()(kDzz, kDzz) + 2 * fit.posterior.scale()(kDxx, kDyy) +
                        2 * fit.posterior.scale()(kDxx, kDzz) + 2 * fit.posterior.scale()(kDyy, kDzz)) /
                       9.0;
    EXPECT_NEAR(md.scale / std::sqrt(var), 1.0, 1e-10);
  }
}

TEST(DtiFit, MdOfPointMass) {
  const auto fit = point_mass_fit(DiffusionTensor::diagonal(1e-3, 0.5e-3, 0.3e-3));
  EXPECT_NEAR(md_posterior(fit).location, 0.6e-3, 1e-18);
  const auto iso = point_mass_fit(DiffusionTensor::diagonal(0.9e-3, 0.9e-3, 0.9e-3));
  EXPECT_NEAR(md_posterior(iso).location, 0.9e-3, 1e-18);
}

TEST(DtiFit, PointMassSamples) {
  const auto d = axial_tensor(axial_from_fa_md(0.5, 0.7e-3), Vector3d::UnitX());
  const auto fit = point_mass_fit(d);
  const auto fa = fa_posterior_samples(fit, 100, 1);
  ASSERT_EQ(fa.values.size(), 100u);
  for (double v : fa.values) EXPECT_EQ(v, fa_of_tensor(d));
  EXPECT_EQ(fa.clamped_fraction, 0.0);
  const auto rt = rtop_posterior_samples(fit, 0.02, 100, 1);
  ASSERT_EQ(rt.values.size(), 100u);
  for (double v : rt.values) EXPECT_NEAR(v / rtop_of_tensor(d, 0.02), 1.0, 1e-12);
  EXPECT_EQ(rt.rejected, 0);
  EXPECT_FALSE(rt.unreliable);
}

TEST(DtiFit, SamplesAreDeterministic) {
  const auto scheme = b1000_scheme();
  const VectorXd latent = sim::latent_signal(sim::Phantom::single(0.2, 0.7e-3), scheme);
  const auto fit = dti_fit_wls(scheme, sim::add_noise(latent, {}, 1, 2).row(0).transpose());
  EXPECT_EQ(fa_posterior_samples(fit, 200, 9).values, fa_posterior_samples(fit, 200, 9).values);
  EXPECT_NE(fa_posterior_samples(fit, 200, 9).values, fa_posterior_samples(fit, 200, 10).values);
  const double td = sim::kReferenceTiming.diffusion_time();
  EXPECT_EQ(rtop_posterior_samples(fit, td, 200, 9).values, rtop_posterior_samples(fit, td, 200, 9).values);
}

TEST(DtiFit, NoiselessRtopConcentratesAtTruth) {
  const auto scheme = sim::reference_scheme(3000.0);
  const double td = *scheme.diffusion_time();
  const auto ph = sim::Phantom::single(0.8, 0.7e-3);
  const auto fit = dti_fit_wls(scheme, sim::latent_signal(ph, scheme));
  const double truth = *sim::phantom_truth(ph, td).rtop;
  for (double v : rtop_posterior_samples(fit, td, 50, 3).values) EXPECT_NEAR(v / truth, 1.0, 1e-8);
}

TEST(DtiFit, RtopRejectsIndefiniteDraws) {
  auto fit = point_mass_fit(DiffusionTensor::diagonal(1e-3, 1e-3, 1e-3));
  MatrixXd scale = MatrixXd::Zero(kDtiDim, kDtiDim);
  scale(kDzz, kDzz) = 1e-10;  // sd 1e-5 around -1e-5: most draws indefinite
  fit.posterior = PosteriorT(coefficients_from_tensor(DiffusionTensor::diagonal(1e-3, 1e-3, -1e-5)), 50.0, 1.0, scale);
  const auto rt = rtop_posterior_samples(fit, 0.02, 1000, 4);
  EXPECT_GT(rt.rejected, 300);
  EXPECT_EQ(static_cast<Index>(rt.values.size()) + rt.rejected, 1000);
  EXPECT_TRUE(rt.unreliable);
}

TEST(Acquisition, FslRoundTrip) {
  const auto scheme = sim::reference_scheme(3000.0);
  const auto dir = std::filesystem::temp_directory_path() / "bdmri_test_fsl";
  std::filesystem::create_directories(dir);
  write_fsl(scheme, (dir / "bvals").string(), (dir / "bvecs").string());
  const auto back = read_fsl((dir / "bvals").string(), (dir / "bvecs").string(), scheme.diffusion_time());
  ASSERT_EQ(back.size(), scheme.size());
  for (std::size_t i = 0; i < scheme.size(); ++i) {
    EXPECT_EQ(back[i].bval, scheme[i].bval);
    EXPECT_EQ(back[i].shell_id, scheme[i].shell_id);
    if (scheme[i].bval > 0) EXPECT_LE((back[i].direction - scheme[i].direction).norm(), 1e-12);
  }
  std::filesystem::remove_all(dir);
}

TEST(Acquisition, ShellClusteringAndValidation) {
  const auto ids = AcquisitionScheme::cluster_shells({0, 5, 995, 1010, 2990, 1000});
  EXPECT_EQ(ids, (std::vector<int>{0, 0, 1, 1, 2, 1}));
  const auto no_b0 = AcquisitionScheme::cluster_shells({1000, 3000});
  EXPECT_EQ(no_b0, (std::vector<int>{1, 2}));
  EXPECT_THROW(AcquisitionScheme::from_bvals_bvecs({1000}, {Vector3d(1, 1, 0)}), DataError);
  EXPECT_THROW(AcquisitionScheme::from_bvals_bvecs({-1}, {Vector3d::UnitX()}), DataError);
  EXPECT_THROW(AcquisitionScheme({}, 0.02, PulseTiming{0.01, 0.05}), DataError);
  const AcquisitionScheme s({}, std::nullopt, PulseTiming{0.0129, 0.0218});
  EXPECT_NEAR(*s.diffusion_time(), 0.0218 - 0.0129 / 3.0, 1e-15);
}

TEST(Acquisition, QValue) {
  const AcquisitionScheme s({{1000.0, Vector3d::UnitX(), 1}}, 0.02);
  const double q = s.q_value(0);
  EXPECT_NEAR(4.0 * std::numbers::pi * std::numbers::pi * 0.02 * q * q, 1000.0, 1e-9);
}
