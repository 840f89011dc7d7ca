#include <braggedge/noise.hpp>
#include <braggedge/stats.hpp>

#include <algorithm>
#include <cmath>

namespace braggedge {

double noise_std_at(const NoiseModel &model, double tr) {
  return std::sqrt(std::max(model.a + model.b * tr, variance_floor));
}

NoiseModel default_noise_model() {
  // Closed-form regression of the four binned variances; see the unit tests
  // for the exact rational derivation.
  return {-2.278754625e-05, 3.3331405e-04};
}

ExponentialBaseline fit_exponential_baseline(const TransmissionSpectrum &spectrum,
                                             const WavelengthWindow &window,
                                             const std::optional<ExponentialBaseline> &held_right) {
  const IndexRange range = spectrum.indices_in(window);
  require(range.size() >= 3, ErrorKind::insufficient_data,
          "fit_exponential_baseline: window holds fewer than 3 points");
  const TransmissionSpectrum part = spectrum.slice(range);
  const Eigen::ArrayXd lambda = part.wavelengths.array();

  Eigen::ArrayXd held = Eigen::ArrayXd::Ones(lambda.size());
  if (held_right) {
    held = (-(held_right->a + held_right->b * lambda)).exp();
  }

  // Log-linear regression for the starting point.
  const Eigen::ArrayXd ratio = (part.values.array() / held).max(1e-6);
  Eigen::MatrixXd design(lambda.size(), 2);
  design.col(0).setOnes();
  design.col(1) = lambda.matrix();
  const Eigen::Vector2d init =
      design.colPivHouseholderQr().solve((-ratio.log()).matrix());

  CurveModel model;
  model.params = {{"a"}, {"b"}};
  model.predict = [lambda, held](const Eigen::VectorXd &p) -> Eigen::VectorXd {
    return (held * (-(p(0) + p(1) * lambda)).exp()).matrix();
  };
  model.jacobian = [lambda, held](const Eigen::VectorXd &p) -> Eigen::MatrixXd {
    const Eigen::ArrayXd f = held * (-(p(0) + p(1) * lambda)).exp();
    Eigen::MatrixXd j(lambda.size(), 2);
    j.col(0) = (-f).matrix();
    j.col(1) = (-lambda * f).matrix();
    return j;
  };

  FitResult fit = levenberg_marquardt(model, init, part.values, fit_weights(part));
  if (!fit.converged) {
    fail(ErrorKind::fit_failure,
         "fit_exponential_baseline: no convergence after " + std::to_string(fit.evaluations) +
             " evaluations (window [" + std::to_string(window.low) + ", " +
             std::to_string(window.high) + "], weighted SSE " +
             std::to_string(fit.residual_norm) + ")");
  }
  return {fit.params(0), fit.params(1), std::move(fit)};
}

BinnedResiduals bin_residuals(std::span<const Residual> residuals,
                              std::span<const double> bin_edges) {
  require(bin_edges.size() >= 2, ErrorKind::invalid_argument,
          "bin_residuals: need at least two bin edges");
  for (std::size_t i = 1; i < bin_edges.size(); ++i) {
    require(bin_edges[i] > bin_edges[i - 1], ErrorKind::invalid_argument,
            "bin_residuals: bin edges must be strictly increasing");
  }

  BinnedResiduals out;
  out.bins.resize(bin_edges.size() - 1);
  for (std::size_t i = 0; i + 1 < bin_edges.size(); ++i) {
    out.bins[i].low = bin_edges[i];
    out.bins[i].high = bin_edges[i + 1];
  }
  const double first = bin_edges.front();
  const double last = bin_edges.back();
  for (const Residual &r : residuals) {
    if (!(r.tr >= first && r.tr <= last)) {
      ++out.dropped;
      continue;
    }
    // upper_bound puts values on an interior edge into the upper bin.
    auto it = std::upper_bound(bin_edges.begin(), bin_edges.end(), r.tr);
    std::size_t index = static_cast<std::size_t>(it - bin_edges.begin());
    index = std::min(index, out.bins.size()) - 1;
    out.bins[index].residuals.push_back(r.e);
  }
  for (ResidualBin &bin : out.bins) {
    if (bin.residuals.size() >= 2) {
      const GaussianFit g = fit_gaussian_bin(bin);
      bin.fitted_mean = g.mean;
      bin.fitted_std = g.std;
    }
  }
  return out;
}

GaussianFit fit_gaussian_bin(const ResidualBin &bin) {
  require(bin.residuals.size() >= 2, ErrorKind::insufficient_data,
          "fit_gaussian_bin: need at least two residuals");
  const Eigen::Map<const Eigen::VectorXd> e(bin.residuals.data(),
                                            static_cast<Eigen::Index>(bin.residuals.size()));
  const auto [mean, std] = stats::mean_std_sample(e);
  return {mean, std, std == 0.0};
}

NoiseModel fit_variance_model(std::span<const BinSummary> bins) {
  require(bins.size() >= 2, ErrorKind::insufficient_data,
          "fit_variance_model: need at least two bins");
  const Eigen::Index n = static_cast<Eigen::Index>(bins.size());
  Eigen::MatrixXd design(n, 2);
  Eigen::VectorXd variance(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    design(i, 0) = 1.0;
    design(i, 1) = bins[static_cast<std::size_t>(i)].tr_mid;
    variance(i) = bins[static_cast<std::size_t>(i)].std * bins[static_cast<std::size_t>(i)].std;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  qr.setThreshold(1e-12);
  require(qr.rank() == 2, ErrorKind::rank_deficient,
          "fit_variance_model: bin midpoints do not determine a line");
  const Eigen::Vector2d coef = qr.solve(variance);
  return {coef(0), coef(1)};
}

std::vector<Residual> baseline_residuals(const TransmissionSpectrum &spectrum,
                                         const WavelengthWindow &left,
                                         const WavelengthWindow &right) {
  const ExponentialBaseline r = fit_exponential_baseline(spectrum, right);
  const ExponentialBaseline l = fit_exponential_baseline(spectrum, left, r);
  const Baselines c{r.a, r.b, l.a, l.b};

  std::vector<Residual> out;
  for (const auto &[window, is_left] : {std::pair{left, true}, std::pair{right, false}}) {
    const IndexRange range = spectrum.indices_in(window);
    for (Eigen::Index i = range.begin; i < range.end; ++i) {
      const double lambda = spectrum.wavelengths(i);
      const double tr = is_left ? left_baseline(lambda, c) : right_baseline(lambda, c);
      out.push_back({tr, spectrum.values(i) - tr});
    }
  }
  return out;
}

NoiseAnalysis analyse_noise(std::span<const Residual> residuals,
                            std::span<const double> bin_edges, std::size_t min_count) {
  NoiseAnalysis out;
  out.binned = bin_residuals(residuals, bin_edges);
  std::vector<BinSummary> summaries;
  for (const ResidualBin &bin : out.binned.bins) {
    if (bin.residuals.size() >= std::max<std::size_t>(min_count, 2)) {
      out.fits.push_back(fit_gaussian_bin(bin));
      summaries.push_back({bin.mid(), out.fits.back().std});
    } else {
      out.fits.push_back({});
    }
  }
  out.model = fit_variance_model(summaries);
  return out;
}

} // namespace braggedge
