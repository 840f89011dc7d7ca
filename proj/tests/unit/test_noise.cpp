#include <braggedge/noise.hpp>
#include <braggedge/synthetic.hpp>

#include <gtest/gtest.h>

#include <random>

using namespace braggedge;

namespace {

// Exact rational least squares of the four binned variances
// (tests/oracles/models.py): a = -18230037/8e11, b = 6666281/2e10.
constexpr double golden_a = -2.278754625e-05;
constexpr double golden_b = 3.3331405e-04;
constexpr double golden_std_at_half = 0.011994560381689693;

TransmissionSpectrum exponential(double a, double b, double low = 4.1, double high = 4.3) {
  const Eigen::VectorXd l = uniform_grid(low, high, 60);
  return make_spectrum(l, (-(a + b * l.array())).exp().matrix());
}

} // namespace

TEST(NoiseStd, Examples) {
  EXPECT_DOUBLE_EQ(noise_std_at({0.0, 1e-4}, 1.0), 1e-2);
  EXPECT_DOUBLE_EQ(noise_std_at({1e-4, 0.0}, 0.3), 1e-2);
  EXPECT_DOUBLE_EQ(noise_std_at({1e-4, 0.0}, 0.9), 1e-2);
  EXPECT_DOUBLE_EQ(noise_std_at({-1.0, 0.0}, 0.5), std::sqrt(variance_floor));
}

TEST(NoiseStd, DefaultModelIsTheBinnedRegression) {
  const NoiseModel m = default_noise_model();
  EXPECT_DOUBLE_EQ(m.a, golden_a);
  EXPECT_DOUBLE_EQ(m.b, golden_b);
  EXPECT_NEAR(noise_std_at(m, 0.5), golden_std_at_half, 1e-15);
  EXPECT_NEAR(noise_std_at(m, 0.5), 1.2e-2, 0.15 * 1.2e-2);
}

TEST(ExponentialBaseline, NoiselessRoundTrip) {
  const ExponentialBaseline fit = fit_exponential_baseline(exponential(0.2, 0.04), {4.1, 4.3});
  EXPECT_NEAR(fit.a, 0.2, 1e-8);
  EXPECT_NEAR(fit.b, 0.04, 1e-8);
  EXPECT_TRUE(fit.fit.converged);
  EXPECT_LT(fit.fit.residual_norm, 1e-20);
}

TEST(ExponentialBaseline, ConstantData) {
  const Eigen::VectorXd l = uniform_grid(4.1, 4.3, 40);
  const auto s = make_spectrum(l, Eigen::VectorXd::Constant(40, std::exp(-0.5)));
  const ExponentialBaseline fit = fit_exponential_baseline(s, {4.1, 4.3});
  EXPECT_NEAR(fit.a, 0.5, 1e-8);
  EXPECT_NEAR(fit.b, 0.0, 1e-8);
}

TEST(ExponentialBaseline, ComposedLeftSide) {
  const Eigen::VectorXd l = uniform_grid(3.8, 3.95, 50);
  const Eigen::VectorXd y = (-(0.12 + 0.04 * l.array() + 0.6 + 0.01 * l.array())).exp().matrix();
  const ExponentialBaseline right{0.12, 0.04, {}};
  const ExponentialBaseline fit = fit_exponential_baseline(make_spectrum(l, y), {3.8, 3.95}, right);
  EXPECT_NEAR(fit.a, 0.6, 1e-8);
  EXPECT_NEAR(fit.b, 0.01, 1e-8);
}

TEST(ExponentialBaseline, TooFewPoints) {
  try {
    fit_exponential_baseline(exponential(0.2, 0.04), {4.1, 4.105});
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::insufficient_data);
  }
}

TEST(ExponentialBaseline, NoisyCoefficientsWithinPredictedSpread) {
  // Right-side window of the default simulation at the base noise level.
  const TrialConfig config;
  const EdgeParams params{{4.05, 0.01, 0.01}, config.baselines};
  const Eigen::VectorXd grid = config.grid.wavelengths();
  const WavelengthWindow window{4.175, 4.3};
  int inside = 0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    Rng rng = make_stream(99, 0, static_cast<std::uint64_t>(t));
    const auto s = simulate_spectrum(params, grid, config.noise_model, 1.0, rng);
    const ExponentialBaseline fit = fit_exponential_baseline(s, window);
    const double za = (fit.a - params.baselines.a0) / fit.fit.stddev("a");
    const double zb = (fit.b - params.baselines.b0) / fit.fit.stddev("b");
    inside += (std::abs(za) <= 3.0 && std::abs(zb) <= 3.0) ? 1 : 0;
  }
  EXPECT_GE(inside, 990);
}

TEST(BinResiduals, SingleBinAndUpperEdgeConvention) {
  const std::vector<double> edges{0.3, 0.35};
  const std::vector<Residual> same(5, Residual{0.32, 1e-3});
  const auto one = bin_residuals(same, edges);
  ASSERT_EQ(one.bins.size(), 1u);
  EXPECT_EQ(one.bins[0].residuals.size(), 5u);

  const std::vector<double> three{0.0, 0.1, 0.2, 0.3};
  const std::vector<Residual> on_edges{{0.1, 1.0}, {0.2, 2.0}, {0.3, 3.0}, {0.0, 4.0}};
  const auto b = bin_residuals(on_edges, three);
  EXPECT_EQ(b.bins[0].residuals, std::vector<double>{4.0});
  EXPECT_EQ(b.bins[1].residuals, std::vector<double>{1.0});
  EXPECT_EQ(b.bins[2].residuals, (std::vector<double>{2.0, 3.0})); // last bin closed
  EXPECT_EQ(b.dropped, 0u);
}

TEST(BinResiduals, EmptyInputAndValidation) {
  const std::vector<double> edges{0.1, 0.2, 0.4};
  const auto b = bin_residuals({}, edges);
  EXPECT_EQ(b.bins.size(), 2u);
  EXPECT_EQ(b.dropped, 0u);
  const std::vector<double> bad{0.1, 0.1};
  EXPECT_THROW(bin_residuals({}, bad), Error);
}

TEST(BinResiduals, CountsMatchIndependentRecount) {
  // Fig. 2 style edges; recount by linear scan without upper_bound.
  const std::vector<double> edges{0.025, 0.225, 0.425, 0.625, 0.825};
  Rng rng(5);
  std::uniform_real_distribution<double> tr(0.0, 0.9);
  std::normal_distribution<double> e(0.0, 1e-2);
  std::vector<Residual> residuals(100000);
  for (Residual &r : residuals) {
    r = {tr(rng), e(rng)};
  }
  const auto binned = bin_residuals(residuals, edges);
  std::vector<std::size_t> recount(edges.size() - 1, 0);
  std::size_t dropped = 0;
  for (const Residual &r : residuals) {
    bool placed = false;
    for (std::size_t k = 0; k + 1 < edges.size(); ++k) {
      const bool last = k + 2 == edges.size();
      if (r.tr >= edges[k] && (r.tr < edges[k + 1] || (last && r.tr == edges[k + 1]))) {
        ++recount[k];
        placed = true;
        break;
      }
    }
    dropped += placed ? 0 : 1;
  }
  std::size_t total = binned.dropped;
  for (std::size_t k = 0; k < recount.size(); ++k) {
    EXPECT_EQ(binned.bins[k].residuals.size(), recount[k]);
    total += binned.bins[k].residuals.size();
  }
  EXPECT_EQ(binned.dropped, dropped);
  EXPECT_EQ(total, residuals.size());
}

TEST(GaussianBin, Examples) {
  ResidualBin bin;
  bin.residuals = {-1.0, 1.0};
  const GaussianFit g = fit_gaussian_bin(bin);
  EXPECT_DOUBLE_EQ(g.mean, 0.0);
  EXPECT_DOUBLE_EQ(g.std, std::sqrt(2.0));
  EXPECT_FALSE(g.degenerate);

  bin.residuals = {0.25, 0.25, 0.25};
  const GaussianFit d = fit_gaussian_bin(bin);
  EXPECT_DOUBLE_EQ(d.mean, 0.25);
  EXPECT_DOUBLE_EQ(d.std, 0.0);
  EXPECT_TRUE(d.degenerate);

  bin.residuals = {1.0};
  EXPECT_THROW(fit_gaussian_bin(bin), Error);
}

TEST(GaussianBin, RecoversMeasuredBinSpread) {
  Rng rng(17);
  std::normal_distribution<double> e(0.0, 4.79e-3);
  ResidualBin bin;
  for (int i = 0; i < 100000; ++i) {
    bin.residuals.push_back(e(rng));
  }
  EXPECT_NEAR(fit_gaussian_bin(bin).std, 4.79e-3, 0.01 * 4.79e-3);
}

TEST(VarianceModel, ExactLine) {
  std::vector<BinSummary> bins;
  for (double tr : {0.1, 0.3, 0.5, 0.7}) {
    bins.push_back({tr, std::sqrt(1e-5 + 3e-4 * tr)});
  }
  const NoiseModel m = fit_variance_model(bins);
  EXPECT_NEAR(m.a, 1e-5, 1e-12);
  EXPECT_NEAR(m.b, 3e-4, 1e-12);
}

TEST(VarianceModel, MeasuredBinsGiveGoldenCoefficients) {
  const std::vector<BinSummary> bins{
      {0.125, 4.79e-3}, {0.325, 9.14e-3}, {0.525, 1.20e-2}, {0.725, 1.50e-2}};
  const NoiseModel m = fit_variance_model(bins);
  EXPECT_NEAR(m.a, golden_a, 1e-17);
  EXPECT_NEAR(m.b, golden_b, 1e-16);
}

TEST(VarianceModel, DuplicateMidpointsAreRankDeficient) {
  const std::vector<BinSummary> bins{{0.3, 1e-2}, {0.3, 2e-2}, {0.3, 3e-2}};
  try {
    fit_variance_model(bins);
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::rank_deficient);
  }
}

TEST(NoiseAnalysis, BinStdConvergesToModelAtMidpoint) {
  const NoiseModel model = default_noise_model();
  Rng rng(23);
  std::uniform_real_distribution<double> tr(0.1, 0.8);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::vector<Residual> residuals(100000);
  for (Residual &r : residuals) {
    r.tr = tr(rng);
    r.e = noise_std_at(model, r.tr) * unit(rng);
  }
  std::vector<double> edges;
  for (double e = 0.1; e < 0.8 + 1e-9; e += 0.1) {
    edges.push_back(e);
  }
  const NoiseAnalysis analysis = analyse_noise(residuals, edges);
  for (std::size_t k = 0; k < analysis.binned.bins.size(); ++k) {
    const double expected = noise_std_at(model, analysis.binned.bins[k].mid());
    EXPECT_NEAR(analysis.fits[k].std, expected, 0.05 * expected) << "bin " << k;
  }
  EXPECT_NEAR(analysis.model.a, model.a, 0.1 * std::abs(model.a));
  EXPECT_NEAR(analysis.model.b, model.b, 0.05 * model.b);
}

TEST(NoiseAnalysis, BaselineResidualsCoverBothWindows) {
  TrialConfig config;
  Rng rng(3);
  const EdgeParams params{{4.05, 0.01, 0.005}, config.baselines};
  const auto s = simulate_spectrum(params, config.grid.wavelengths(), config.noise_model, 1.0, rng);
  const WavelengthWindow left{3.8, 3.925}, right{4.175, 4.3};
  const auto r = baseline_residuals(s, left, right);
  const auto expected = s.indices_in(left).size() + s.indices_in(right).size();
  EXPECT_EQ(r.size(), static_cast<std::size_t>(expected));
  for (const Residual &x : r) {
    EXPECT_GT(x.tr, 0.35);
    EXPECT_LT(x.tr, 0.8);
  }
}
