#include <braggedge/xcorr.hpp>

#include <array>
#include <cmath>

namespace braggedge {

void SGConfig::validate() const {
  require(polynomial_order >= 1, ErrorKind::invalid_argument,
          "SG: polynomial order must be >= 1");
  require(window_length % 2 == 1, ErrorKind::invalid_argument, "SG: window length must be odd");
  require(window_length > polynomial_order + 1, ErrorKind::invalid_argument,
          "SG: window length must exceed polynomial order + 1");
}

SGConfig sg_defaults_for_noise(double noise_scale) {
  if (noise_scale <= 0.3) {
    return {15, 3};
  }
  if (noise_scale <= 3.0) {
    return {25, 3};
  }
  return {41, 2};
}

namespace {

/// Weights producing the first derivative (per unit sample spacing) of the
/// least-squares polynomial at `offset` from the window centre.
Eigen::RowVectorXd sg_weights(const Eigen::MatrixXd &pseudo_inverse, int order, double offset) {
  Eigen::RowVectorXd d = Eigen::RowVectorXd::Zero(order + 1);
  for (int j = 1; j <= order; ++j) {
    d(j) = j * std::pow(offset, j - 1);
  }
  return d * pseudo_inverse;
}

void require_same_grid(const Eigen::VectorXd &a, const Eigen::VectorXd &b) {
  require(a.size() == b.size() && a.size() >= 2, ErrorKind::invalid_argument,
          "series grids differ in length");
  const double pitch = (a(a.size() - 1) - a(0)) / static_cast<double>(a.size() - 1);
  require((a - b).cwiseAbs().maxCoeff() <= 1e-9 * std::abs(pitch), ErrorKind::invalid_argument,
          "series are not on the same grid");
}

} // namespace

SampledSeries savitzky_golay_derivative(const TransmissionSpectrum &spectrum,
                                        const SGConfig &config) {
  config.validate();
  const Eigen::Index n = spectrum.size();
  require(n >= config.window_length, ErrorKind::insufficient_data,
          "SG: spectrum shorter than the filter window");
  require(spectrum.is_uniform(1e-9), ErrorKind::invalid_argument,
          "SG: wavelength grid is not uniform");

  const int w = config.window_length;
  const int half = w / 2;
  const int order = config.polynomial_order;
  Eigen::MatrixXd vandermonde(w, order + 1);
  for (int i = 0; i < w; ++i) {
    for (int j = 0; j <= order; ++j) {
      vandermonde(i, j) = std::pow(static_cast<double>(i - half), j);
    }
  }
  const Eigen::MatrixXd pinv =
      vandermonde.colPivHouseholderQr().solve(Eigen::MatrixXd::Identity(w, w));

  const double h = spectrum.pitch();
  SampledSeries out{spectrum.wavelengths, Eigen::VectorXd(n)};
  const Eigen::RowVectorXd centre = sg_weights(pinv, order, 0.0);
  for (Eigen::Index i = half; i < n - half; ++i) {
    out.values(i) = centre.dot(spectrum.values.segment(i - half, w)) / h;
  }
  for (int i = 0; i < half; ++i) {
    const Eigen::RowVectorXd head = sg_weights(pinv, order, static_cast<double>(i - half));
    out.values(i) = head.dot(spectrum.values.head(w)) / h;
    const Eigen::RowVectorXd tail = sg_weights(pinv, order, static_cast<double>(half - i));
    out.values(n - 1 - i) = tail.dot(spectrum.values.tail(w)) / h;
  }
  return out;
}

CorrelationCurve cross_correlate(const SampledSeries &series, const SampledSeries &reference,
                                 int max_lag) {
  require_same_grid(series.grid, reference.grid);
  const Eigen::Index n = series.values.size();
  require(max_lag >= 0 && 2 * static_cast<Eigen::Index>(max_lag) < n,
          ErrorKind::invalid_argument, "cross_correlate: max_lag must be < n / 2");

  const double pitch = (series.grid(n - 1) - series.grid(0)) / static_cast<double>(n - 1);
  // Pearson correlation over each lag's overlap, so the shrinking overlap
  // does not add a lag-dependent background.
  CorrelationCurve out{Eigen::VectorXd(2 * max_lag + 1), Eigen::VectorXd(2 * max_lag + 1)};
  for (int k = -max_lag; k <= max_lag; ++k) {
    const Eigen::Index overlap = n - std::abs(k);
    const Eigen::ArrayXd x = series.values.segment(std::max(0, k), overlap).array();
    const Eigen::ArrayXd x0 = reference.values.segment(std::max(0, -k), overlap).array();
    const Eigen::ArrayXd cx = x - x.mean();
    const Eigen::ArrayXd c0 = x0 - x0.mean();
    const double norm = std::sqrt(cx.square().sum() * c0.square().sum());
    require(norm > 0.0, ErrorKind::invalid_argument, "cross_correlate: constant series");
    out.lags(k + max_lag) = k * pitch;
    out.values(k + max_lag) = (cx * c0).sum() / norm;
  }
  return out;
}

double half_maximum_width(const CorrelationCurve &curve, Eigen::Index peak, double baseline) {
  const double half = 0.5 * (curve.values(peak) + baseline);
  Eigen::Index lo = peak, hi = peak;
  while (lo > 0 && curve.values(lo) > half) --lo;
  while (hi < curve.values.size() - 1 && curve.values(hi) > half) ++hi;
  return std::max(curve.lags(hi) - curve.lags(lo), curve.lags(1) - curve.lags(0));
}

VoigtParams voigt_params(const FitResult &fit) {
  return {fit.params(0), fit.params(1), fit.params(2),
          fit.params(3), fit.params(4), fit.params(5)};
}

XcorrFit fit_xcorr_strain(const TransmissionSpectrum &spectrum,
                          const TransmissionSpectrum &reference, double lambda0,
                          const XcorrOptions &options) {
  require_same_grid(spectrum.wavelengths, reference.wavelengths);
  require(lambda0 > 0.0, ErrorKind::invalid_argument, "fit_xcorr_strain: lambda0 must be > 0");

  XcorrFit out;
  const SampledSeries d = savitzky_golay_derivative(spectrum, options.sg);
  const SampledSeries d0 = savitzky_golay_derivative(reference, options.sg);
  out.curve = cross_correlate(d, d0, options.max_lag);

  Eigen::Index peak = 0;
  out.curve.values.maxCoeff(&peak);
  const Eigen::Index last = out.curve.values.size() - 1;
  const bool at_bound = peak == 0 || peak == last;

  const Eigen::Index lo = std::max<Eigen::Index>(0, peak - options.fit_half_width);
  const Eigen::Index hi = std::min<Eigen::Index>(last, peak + options.fit_half_width);
  const Eigen::ArrayXd lags = out.curve.lags.segment(lo, hi - lo + 1).array();
  const Eigen::VectorXd values = out.curve.values.segment(lo, hi - lo + 1);
  require(lags.size() >= 7, ErrorKind::insufficient_data,
          "fit_xcorr_strain: too few correlation samples around the peak");

  // Peaks wider than the fitted lag span are not identifiable; bounding the
  // widths there keeps width, amplitude and offset from drifting together.
  const double pitch = spectrum.pitch();
  const double span = lags(lags.size() - 1) - lags(0);
  CurveModel voigt;
  voigt.params = {{"delta_hkl"},
                  {"A"},
                  {"mu", Transform::unit_interval},
                  {"w_l", Transform::bounded, 0.05 * pitch, span},
                  {"w_g", Transform::bounded, 0.05 * pitch, span},
                  {"y0"}};
  voigt.predict = [lags](const Eigen::VectorXd &p) -> Eigen::VectorXd {
    const VoigtParams v{p(0), p(1), std::clamp(p(2), 0.0, 1.0), std::max(std::abs(p(3)), 1e-12),
                        std::max(std::abs(p(4)), 1e-12), p(5)};
    return evaluate(lags, v).matrix();
  };

  const double baseline = values.minCoeff();
  const double mu = 0.5;
  const double peak_lag = out.curve.lags(peak);
  auto attempt = [&](double width) {
    const VoigtParams unit{0.0, 1.0, mu, width, width, 0.0};
    const double unit_peak = pseudo_voigt(0.0, unit);
    Eigen::VectorXd init(6);
    init << peak_lag, (out.curve.values(peak) - baseline) / unit_peak, mu, width, width, baseline;
    FitResult result = levenberg_marquardt(voigt, init, values, Eigen::VectorXd::Ones(values.size()),
                                           options.lm);
    const double mu_fit = result.params(2);
    const bool pure_shape = mu_fit < 1e-3 || mu_fit > 1.0 - 1e-3;
    if (pure_shape && (!result.converged || !result.covariance_available)) {
      // A pure Lorentzian or Gaussian leaves the other width with no effect,
      // and the optimizer creeps along it. Refit with that shape fixed.
      const bool lorentzian = mu_fit > 0.5;
      const Eigen::Index used = lorentzian ? 3 : 4;
      const VoigtParams held = voigt_params(result);
      CurveModel pure;
      pure.params = {voigt.params[0], voigt.params[1],
                     voigt.params[static_cast<std::size_t>(used)], voigt.params[5]};
      pure.predict = [lags, held, lorentzian](const Eigen::VectorXd &p) -> Eigen::VectorXd {
        const double w = std::max(std::abs(p(2)), 1e-12);
        const VoigtParams v{p(0), p(1), lorentzian ? 1.0 : 0.0, lorentzian ? w : held.w_l,
                            lorentzian ? held.w_g : w, p(3)};
        return evaluate(lags, v).matrix();
      };
      Eigen::VectorXd start(4);
      start << result.params(0), result.params(1), result.params(used), result.params(5);
      const FitResult fit = levenberg_marquardt(pure, start, values,
                                                Eigen::VectorXd::Ones(values.size()), options.lm);
      if (fit.converged) {
        const std::array<Eigen::Index, 4> slot{0, 1, used, 5};
        FitResult full = result;
        full.params(2) = lorentzian ? 1.0 : 0.0;
        full.covariance = Eigen::MatrixXd::Zero(6, 6);
        for (std::size_t i = 0; i < slot.size(); ++i) {
          full.params(slot[i]) = fit.params(static_cast<Eigen::Index>(i));
          for (std::size_t j = 0; j < slot.size(); ++j) {
            full.covariance(slot[i], slot[j]) =
                fit.covariance(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
          }
        }
        full.covariance_available = fit.covariance_available;
        full.residual_norm = fit.residual_norm;
        full.converged = true;
        full.iterations += fit.iterations;
        full.evaluations += fit.evaluations;
        full.sse_history.insert(full.sse_history.end(), fit.sse_history.begin(),
                                fit.sse_history.end());
        result = std::move(full);
      }
    }
    return result;
  };
  auto plausible = [&](const FitResult &f) {
    return f.converged && f.covariance_available && f.params(1) > 0.0 &&
           std::abs(f.params(0) - peak_lag) <= 0.5 * span;
  };

  // A start far from the peak width can settle on a spike or a negative
  // amplitude; retry once from the measured half-maximum width.
  out.voigt = attempt(4.0 * pitch);
  if (!plausible(out.voigt)) {
    FitResult retry = attempt(half_maximum_width(out.curve, peak, baseline));
    if (plausible(retry) || !out.voigt.converged) out.voigt = std::move(retry);
  }
  if (!out.voigt.converged) {
    fail(ErrorKind::method_failure, "xcorr: pseudo-Voigt fit did not converge");
  }
  const double delta = out.voigt.params(0);
  out.strain.strain_mean = delta / lambda0;
  out.strain.strain_std = std::sqrt(std::max(out.voigt.covariance(0, 0), 0.0)) / lambda0;
  out.strain.method = "xcorr";
  out.strain.suspicious = at_bound || !out.voigt.covariance_available;
  return out;
}

} // namespace braggedge
