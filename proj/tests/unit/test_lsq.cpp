#include <braggedge/harness.hpp>
#include <braggedge/lsq.hpp>
#include <braggedge/synthetic.hpp>

#include <gtest/gtest.h>

using namespace braggedge;

namespace {

TransmissionSpectrum noiseless(const EdgeParams &p, Eigen::Index n = 512) {
  const Eigen::VectorXd l = uniform_grid(3.8, 4.3, n);
  return make_spectrum(l, evaluate(l.array(), p).matrix());
}

// Windows wide enough that a short tail does not reach the baselines.
const EdgeWindows separated{{3.8, 3.93}, {4.2, 4.3}, {3.95, 4.18}};

CurveModel kropff_curve(const Eigen::ArrayXd &lambda) {
  CurveModel m;
  m.params = {{"lambda_hkl"}, {"sigma_B"}, {"tau"}, {"h"}, {"b"}};
  m.predict = [lambda](const Eigen::VectorXd &p) -> Eigen::VectorXd {
    return (p(3) * evaluate(lambda, KropffShape{p(0), p(1), p(2)}) + p(4)).matrix();
  };
  return m;
}

} // namespace

TEST(LevenbergMarquardt, LinearModelExactData) {
  const Eigen::ArrayXd x = Eigen::ArrayXd::LinSpaced(20, 1.0, 3.0);
  CurveModel m;
  m.params = {{"theta"}};
  m.predict = [x](const Eigen::VectorXd &p) -> Eigen::VectorXd { return (p(0) * x).matrix(); };
  m.jacobian = [x](const Eigen::VectorXd &) -> Eigen::MatrixXd { return x.matrix(); };
  const FitResult r = levenberg_marquardt(m, Eigen::VectorXd::Constant(1, 0.1),
                                          (2.5 * x).matrix(), Eigen::VectorXd::Ones(20));
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.value("theta"), 2.5, 1e-12);
  EXPECT_LT(r.residual_norm, 1e-24);
  EXPECT_LE(r.iterations, 2);
}

TEST(LevenbergMarquardt, QuadraticBowl) {
  // Residuals (p0 - 1, 2 (p1 + 3)) and a third zero residual: minimum at (1, -3).
  CurveModel m;
  m.params = {{"p0"}, {"p1"}};
  m.predict = [](const Eigen::VectorXd &p) -> Eigen::VectorXd {
    return Eigen::Vector3d(p(0), 2.0 * p(1), 0.0);
  };
  const FitResult r = levenberg_marquardt(m, Eigen::Vector2d(10.0, 10.0),
                                          Eigen::Vector3d(1.0, -6.0, 0.0), Eigen::Vector3d::Ones());
  EXPECT_NEAR(r.params(0), 1.0, 1e-10);
  EXPECT_NEAR(r.params(1), -3.0, 1e-10);
}

TEST(LevenbergMarquardt, KropffRoundTripFromPerturbedStart) {
  const Eigen::ArrayXd lambda = Eigen::ArrayXd::LinSpaced(200, 3.95, 4.15);
  const CurveModel m = kropff_curve(lambda);
  Eigen::VectorXd truth(5);
  truth << 4.05, 0.009, 0.007, 0.25, 0.45;
  const Eigen::VectorXd data = m.predict(truth);
  Eigen::VectorXd init = truth;
  // 10% on the shape and height parameters; a 10% shift of lambda_hkl would
  // leave the window, so it moves by half an edge width instead.
  init(0) += 0.0045;
  init.tail(4) *= 1.1;
  const FitResult r = levenberg_marquardt(m, init, data, Eigen::VectorXd::Ones(200));
  EXPECT_TRUE(r.converged);
  for (Eigen::Index k = 0; k < 5; ++k) {
    EXPECT_NEAR(r.params(k), truth(k), 1e-6 * std::abs(truth(k))) << r.names[k];
  }
}

TEST(LevenbergMarquardt, AcceptedStepsNeverIncreaseSse) {
  TrialConfig c;
  for (int t = 0; t < 10; ++t) {
    const Trial trial = generate_trial(c, t, 0);
    const FitResult r = fit_tremsin(trial.spectrum, {3.95, 4.15}, c.lambda0).fit;
    for (std::size_t i = 1; i < r.sse_history.size(); ++i) {
      ASSERT_LE(r.sse_history[i], r.sse_history[i - 1] * (1.0 + 1e-14));
    }
  }
}

TEST(LevenbergMarquardt, SingularInformationMarksCovarianceUnavailable) {
  // Two parameters enter only through their sum.
  const Eigen::ArrayXd x = Eigen::ArrayXd::LinSpaced(10, 0.0, 1.0);
  CurveModel m;
  m.params = {{"p"}, {"q"}};
  m.predict = [x](const Eigen::VectorXd &p) -> Eigen::VectorXd {
    return ((p(0) + p(1)) * x).matrix();
  };
  const Eigen::VectorXd data = (2.0 * x + 0.01 * Eigen::ArrayXd::LinSpaced(10, -1, 1).sin()).matrix();
  const FitResult r =
      levenberg_marquardt(m, Eigen::Vector2d(0.5, 0.5), data, Eigen::VectorXd::Ones(10));
  EXPECT_FALSE(r.covariance_available);
}

TEST(LevenbergMarquardt, ValidatesInputs) {
  CurveModel m;
  m.params = {{"a"}};
  m.predict = [](const Eigen::VectorXd &p) -> Eigen::VectorXd { return Eigen::VectorXd::Constant(3, p(0)); };
  const Eigen::VectorXd data = Eigen::VectorXd::Ones(3);
  EXPECT_THROW(levenberg_marquardt(m, Eigen::Vector2d(1, 1), data, Eigen::VectorXd::Ones(3)), Error);
  EXPECT_THROW(levenberg_marquardt(m, Eigen::VectorXd::Constant(1, NAN), data, Eigen::VectorXd::Ones(3)),
               Error);
  EXPECT_THROW(levenberg_marquardt(m, Eigen::VectorXd::Ones(1), data, Eigen::VectorXd::Zero(3)), Error);
}

TEST(LevenbergMarquardt, FisherVarianceScalesInverselyWithDensity) {
  // Right-baseline fits at fixed per-point noise; mean variance over seeds.
  const Baselines c = default_baselines();
  const EdgeParams p{{4.05, 0.01, 0.0}, c};
  auto mean_variance = [&](Eigen::Index n) {
    double sum = 0.0;
    for (int seed = 0; seed < 40; ++seed) {
      Rng rng(static_cast<std::uint64_t>(seed));
      const Eigen::VectorXd grid = uniform_grid(4.15, 4.3, n);
      const auto s = simulate_spectrum(p, grid, NoiseModel{1e-4, 0.0}, 1.0, rng);
      const auto fit = fit_exponential_baseline(s, {4.15, 4.3});
      sum += fit.fit.covariance(1, 1);
    }
    return sum / 40.0;
  };
  const double v1 = mean_variance(100), v2 = mean_variance(200), v4 = mean_variance(400);
  EXPECT_NEAR(v1 / v2, 2.0, 0.2 * 2.0);
  EXPECT_NEAR(v1 / v4, 4.0, 0.2 * 4.0);
}

TEST(Santisteban, NoiselessRoundTrip) {
  const EdgeParams p{{4.061, 0.009, 0.003}, default_baselines()};
  const SantistebanFit fit = fit_santisteban(noiseless(p), separated, EdgeModel::kropff, 4.05);
  EXPECT_NEAR(fit.edge_fit.value("lambda_hkl"), 4.061, 1e-6);
  EXPECT_NEAR(fit.baselines.a0, p.baselines.a0, 1e-8);
  EXPECT_NEAR(fit.baselines.a_hkl, p.baselines.a_hkl, 1e-8);
  EXPECT_NEAR(fit.strain.strain_mean, 4.061 / 4.05 - 1.0, 1e-6 / 4.05);
  EXPECT_FALSE(fit.strain.suspicious);
}

TEST(Santisteban, VogelEdgeModel) {
  const VogelParams shape{4.04, 0.008, 250.0, 150.0};
  const Baselines c = default_baselines();
  const Eigen::VectorXd l = uniform_grid(3.8, 4.3, 512);
  const Eigen::VectorXd y =
      l.unaryExpr([&](double x) { return santisteban_transmission(x, shape, c); });
  const SantistebanFit fit = fit_santisteban(make_spectrum(l, y), separated, EdgeModel::vogel, 4.05);
  EXPECT_NEAR(fit.edge_fit.value("lambda_hkl"), 4.04, 1e-5);
  EXPECT_NEAR(fit.edge_fit.value("alpha"), 250.0, 1e-2);
}

TEST(Santisteban, SwappedWindowsRejected) {
  const EdgeParams p{{4.05, 0.009, 0.003}, default_baselines()};
  EdgeWindows swapped = separated;
  std::swap(swapped.left, swapped.right);
  try {
    fit_santisteban(noiseless(p), swapped, EdgeModel::kropff, 4.05);
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::invalid_argument);
  }
}

TEST(Santisteban, StageThreeReproducesPipeline) {
  const Trial t = generate_trial(TrialConfig{}, 4, 2);
  const EdgeWindows w = default_windows(t.spectrum);
  const SantistebanFit full = fit_santisteban(t.spectrum, w, EdgeModel::kropff, 4.05);
  const FitResult again = fit_santisteban_edge(t.spectrum, w.edge, full.baselines, EdgeModel::kropff);
  EXPECT_EQ(again.params, full.edge_fit.params);
  EXPECT_EQ(again.covariance, full.edge_fit.covariance);
}

TEST(Santisteban, StrainStdIsFisherStdOverReference) {
  const Trial t = generate_trial(TrialConfig{}, 1, 1);
  const SantistebanFit fit = fit_santisteban(t.spectrum, default_windows(t.spectrum),
                                             EdgeModel::kropff, 4.05);
  EXPECT_DOUBLE_EQ(fit.strain.strain_std, fit.edge_fit.stddev("lambda_hkl") / 4.05);
  EXPECT_GT(fit.strain.strain_std, 0.0);
}

TEST(Tremsin, NoiselessFiveParameterRoundTrip) {
  const TremsinParams p{4.058, 0.0085, 0.006, 0.3, 0.42};
  const Eigen::VectorXd l = uniform_grid(3.95, 4.15, 200);
  const auto s = make_spectrum(l, evaluate(l.array(), p).matrix());
  const TremsinFit fit = fit_tremsin(s, {3.95, 4.15}, 4.05);
  const double expected[] = {p.lambda_hkl, p.sigma_B, p.tau, p.h, p.b};
  for (Eigen::Index k = 0; k < 5; ++k) {
    EXPECT_NEAR(fit.fit.params(k), expected[k], 1e-5 * expected[k]) << fit.fit.names[k];
  }
}

TEST(Tremsin, WindowWithoutEdgeIsSuspicious) {
  const EdgeParams p{{4.05, 0.009, 0.003}, default_baselines()};
  const TremsinFit fit = fit_tremsin(noiseless(p), {4.15, 4.3}, 4.05);
  EXPECT_TRUE(fit.strain.suspicious);
}

TEST(Tremsin, TooFewPoints) {
  const EdgeParams p{{4.05, 0.009, 0.003}, default_baselines()};
  EXPECT_THROW(fit_tremsin(noiseless(p), {4.05, 4.055}, 4.05), Error);
}

TEST(Tremsin, CropFollowsNoiseLevel) {
  EXPECT_LT(tremsin_crop_for_noise(0.1).width_scale, tremsin_crop_for_noise(1.0).width_scale);
  EXPECT_LT(tremsin_crop_for_noise(1.0).width_scale, tremsin_crop_for_noise(10.0).width_scale);
  const EdgeParams p{{4.05, 0.009, 0.003}, default_baselines()};
  const auto s = noiseless(p);
  const WavelengthWindow w = tremsin_window(s, default_windows(s).edge);
  EXPECT_NEAR(w.low, 4.05 - 0.12, 0.01);
  EXPECT_NEAR(w.high, 4.05 + 0.08, 0.01);
}

TEST(Windows, DefaultQuarters) {
  const auto s = make_spectrum(uniform_grid(0.0, 1.0, 400), Eigen::VectorXd::Ones(400));
  const EdgeWindows w = default_windows(s);
  EXPECT_EQ(s.indices_in(w.left).size(), 100);
  EXPECT_EQ(s.indices_in(w.right).size(), 100);
  EXPECT_EQ(s.indices_in(w.edge).size(), 200);
}

TEST(ParametricMethods, BaseNoiseErrorSpreadIsHundreds) {
  TrialConfig c;
  c.n_groups = 100;
  c.trials_per_group = 1;
  StudyOptions options;
  options.methods = {Method::santisteban, Method::tremsin};
  const StudyResult r = run_trial_study(c, options);
  // Santisteban: hundreds of micro-strain. Tremsin: within 2x of 354.55.
  EXPECT_GT(r.metrics[0].error_std, 100.0);
  EXPECT_LT(r.metrics[0].error_std, 1000.0);
  EXPECT_GT(r.metrics[1].error_std, 354.55 / 2.0);
  EXPECT_LT(r.metrics[1].error_std, 354.55 * 2.0);
}
