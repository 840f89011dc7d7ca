#include <braggedge/lsq.hpp>
#include <braggedge/noise.hpp>

#include <unsupported/Eigen/LevenbergMarquardt>

#include <algorithm>
#include <cmath>
#include <limits>

namespace braggedge {

namespace {

double logistic(double t) { return 1.0 / (1.0 + std::exp(-t)); }

double to_natural(const ParamSpec &spec, double t) {
  switch (spec.transform) {
  case Transform::identity:
    return t;
  case Transform::absolute:
    return std::abs(t);
  case Transform::bounded:
    return spec.lower + (spec.upper - spec.lower) * logistic(t);
  case Transform::unit_interval: {
    const double s = std::sin(t);
    return s * s;
  }
  }
  return t;
}

double to_internal(const ParamSpec &spec, double x) {
  switch (spec.transform) {
  case Transform::identity:
  case Transform::absolute:
    return x;
  case Transform::bounded: {
    const double u = std::clamp((x - spec.lower) / (spec.upper - spec.lower), 1e-9, 1.0 - 1e-9);
    return std::log(u / (1.0 - u));
  }
  case Transform::unit_interval:
    return std::asin(std::sqrt(std::clamp(x, 0.0, 1.0)));
  }
  return x;
}

/// d natural / d internal.
double natural_slope(const ParamSpec &spec, double t) {
  switch (spec.transform) {
  case Transform::identity:
    return 1.0;
  case Transform::absolute:
    return t < 0.0 ? -1.0 : 1.0;
  case Transform::bounded: {
    const double s = logistic(t);
    return (spec.upper - spec.lower) * s * (1.0 - s);
  }
  case Transform::unit_interval:
    return std::sin(2.0 * t);
  }
  return 1.0;
}

class WeightedResidual : public Eigen::DenseFunctor<double> {
public:
  WeightedResidual(const CurveModel &model, const Eigen::VectorXd &data,
                   const Eigen::VectorXd &weights, double fd_step)
      : Eigen::DenseFunctor<double>(static_cast<int>(model.params.size()),
                                    static_cast<int>(data.size())),
        model_(model), data_(data), sqrt_w_(weights.array().sqrt()), fd_step_(fd_step) {}

  Eigen::VectorXd natural(const Eigen::VectorXd &t) const {
    Eigen::VectorXd x(t.size());
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      x(i) = to_natural(model_.params[static_cast<std::size_t>(i)], t(i));
    }
    return x;
  }

  int operator()(const Eigen::VectorXd &t, Eigen::VectorXd &fvec) const {
    ++evaluations;
    const Eigen::VectorXd f = model_.predict(natural(t));
    fvec = (sqrt_w_ * (f - data_).array()).matrix();
    if (!fvec.allFinite()) {
      // Steer the optimizer away from regions where the model breaks down.
      fvec.setConstant(1e150);
    }
    return 0;
  }

  /// Jacobian of the model (unweighted) with respect to internal coordinates.
  Eigen::MatrixXd model_jacobian(const Eigen::VectorXd &t) const {
    const Eigen::Index p = t.size();
    if (model_.jacobian) {
      Eigen::MatrixXd j = model_.jacobian(natural(t));
      for (Eigen::Index k = 0; k < p; ++k) {
        j.col(k) *= natural_slope(model_.params[static_cast<std::size_t>(k)], t(k));
      }
      return j;
    }
    Eigen::MatrixXd j(data_.size(), p);
    for (Eigen::Index k = 0; k < p; ++k) {
      const double h = fd_step_ * std::max(std::abs(t(k)), 1e-2);
      Eigen::VectorXd up = t;
      Eigen::VectorXd down = t;
      up(k) += h;
      down(k) -= h;
      j.col(k) = (model_.predict(natural(up)) - model_.predict(natural(down))) / (2.0 * h);
    }
    return j;
  }

  int df(const Eigen::VectorXd &t, Eigen::MatrixXd &fjac) const {
    fjac = sqrt_w_.matrix().asDiagonal() * model_jacobian(t);
    return 0;
  }

  const Eigen::ArrayXd &sqrt_weights() const { return sqrt_w_; }

  mutable int evaluations = 0;

private:
  const CurveModel &model_;
  const Eigen::VectorXd &data_;
  Eigen::ArrayXd sqrt_w_;
  double fd_step_;
};

} // namespace

Eigen::Index FitResult::index(const std::string &name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  require(it != names.end(), ErrorKind::invalid_argument, "unknown parameter '" + name + "'");
  return static_cast<Eigen::Index>(it - names.begin());
}

double FitResult::value(const std::string &name) const { return params(index(name)); }

double FitResult::stddev(const std::string &name) const {
  const Eigen::Index i = index(name);
  return std::sqrt(std::max(covariance(i, i), 0.0));
}

FitResult levenberg_marquardt(const CurveModel &model, const Eigen::VectorXd &init,
                              const Eigen::VectorXd &data, const Eigen::VectorXd &weights,
                              const LmOptions &options) {
  const Eigen::Index p = static_cast<Eigen::Index>(model.params.size());
  const Eigen::Index n = data.size();
  require(init.size() == p, ErrorKind::invalid_argument,
          "levenberg_marquardt: init size does not match parameter count");
  require(init.allFinite(), ErrorKind::invalid_argument,
          "levenberg_marquardt: non-finite initial parameters");
  require(weights.size() == n && (weights.array() > 0.0).all(), ErrorKind::invalid_argument,
          "levenberg_marquardt: weights must be positive and match the data");
  require(n >= p, ErrorKind::insufficient_data,
          "levenberg_marquardt: fewer data points than parameters");

  WeightedResidual functor(model, data, weights, options.fd_relative_step);
  Eigen::VectorXd t(p);
  for (Eigen::Index k = 0; k < p; ++k) {
    t(k) = to_internal(model.params[static_cast<std::size_t>(k)], init(k));
  }

  Eigen::LevenbergMarquardt<WeightedResidual> lm(functor);
  lm.setFtol(options.tolerance);
  lm.setXtol(options.tolerance);
  lm.setGtol(0.0);
  lm.setMaxfev(options.max_evaluations);

  FitResult result;
  for (const ParamSpec &spec : model.params) {
    result.names.push_back(spec.name);
  }

  using Eigen::LevenbergMarquardtSpace::Status;
  Status status = lm.minimizeInit(t);
  if (status == Status::ImproperInputParameters) {
    fail(ErrorKind::invalid_argument, "levenberg_marquardt: improper input parameters");
  }
  result.sse_history.push_back(lm.fnorm() * lm.fnorm());
  bool stalled = false;
  do {
    status = lm.minimizeOneStep(t);
    result.sse_history.push_back(lm.fnorm() * lm.fnorm());
    const auto steps = static_cast<int>(result.sse_history.size()) - 1;
    if (status == Status::Running && options.stall_steps > 0 && steps >= options.stall_steps) {
      const double before = result.sse_history[static_cast<std::size_t>(steps - options.stall_steps)];
      const double now = result.sse_history.back();
      stalled = before - now <= options.stall_tolerance * std::max(before, 1e-300);
    }
  } while (status == Status::Running && !stalled);

  result.converged = (stalled || (status != Status::TooManyFunctionEvaluation &&
                                  status != Status::ImproperInputParameters &&
                                  status != Status::UserAsked)) &&
                     std::isfinite(lm.fnorm());
  // Steps that lowered the SSE; the final step that only confirms
  // convergence does not count.
  result.iterations = 0;
  for (std::size_t i = 1; i < result.sse_history.size(); ++i) {
    result.iterations += result.sse_history[i] < result.sse_history[i - 1] ? 1 : 0;
  }
  result.evaluations = functor.evaluations;
  result.params = functor.natural(t);

  Eigen::VectorXd residual;
  functor(t, residual);
  result.residual_norm = residual.squaredNorm();

  // Fisher covariance in internal coordinates, mapped to natural ones.
  const Eigen::MatrixXd jw = functor.sqrt_weights().matrix().asDiagonal() *
                             functor.model_jacobian(t);
  const Eigen::MatrixXd info = jw.transpose() * jw;
  const Eigen::VectorXd scale =
      info.diagonal().cwiseSqrt().unaryExpr([](double d) { return d > 0.0 ? 1.0 / d : 1.0; });
  const Eigen::MatrixXd scaled = scale.asDiagonal() * info * scale.asDiagonal();
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(scaled);
  cod.setThreshold(1e-13);
  const double dof = static_cast<double>(n - p);
  result.covariance_available = cod.rank() == p && dof > 0.0 && info.allFinite();
  if (info.allFinite() && dof > 0.0) {
    Eigen::MatrixXd cov = scale.asDiagonal() * cod.pseudoInverse() * scale.asDiagonal();
    cov *= result.residual_norm / dof;
    Eigen::VectorXd slope(p);
    for (Eigen::Index k = 0; k < p; ++k) {
      slope(k) = natural_slope(model.params[static_cast<std::size_t>(k)], t(k));
    }
    result.covariance = slope.asDiagonal() * cov * slope.asDiagonal();
    result.covariance = 0.5 * (result.covariance + result.covariance.transpose()).eval();
  } else {
    result.covariance = Eigen::MatrixXd::Constant(p, p, std::numeric_limits<double>::quiet_NaN());
  }
  return result;
}

Eigen::VectorXd fit_weights(const TransmissionSpectrum &spectrum) {
  if (spectrum.noise_std) {
    return spectrum.noise_std->array().square().inverse().matrix();
  }
  return Eigen::VectorXd::Ones(spectrum.size());
}

StrainEstimate strain_from_fit(double edge, double edge_variance, double reference,
                               std::string method) {
  StrainEstimate out;
  out.strain_mean = strain_from_edge(edge, reference);
  out.strain_std = std::sqrt(std::max(edge_variance, 0.0)) / reference;
  out.method = std::move(method);
  return out;
}

// ---------------------------------------------------------------------------

EdgeWindows default_windows(const TransmissionSpectrum &spectrum) {
  const Eigen::Index n = spectrum.size();
  const Eigen::Index quarter = n / 4;
  require(quarter >= 3, ErrorKind::insufficient_data,
          "default_windows: spectrum too short for three windows");
  const auto &l = spectrum.wavelengths;
  return {{l(0), l(quarter - 1)},
          {l(n - quarter), l(n - 1)},
          {l(quarter), l(n - quarter - 1)}};
}

double steepest_rise(const TransmissionSpectrum &spectrum, const WavelengthWindow &window) {
  const IndexRange range = spectrum.indices_in(window);
  require(range.size() >= 3, ErrorKind::insufficient_data,
          "steepest_rise: window holds fewer than 3 points");
  const Eigen::Index half = 3;
  const Eigen::Index n = spectrum.size();
  auto smoothed = [&](Eigen::Index i) {
    const Eigen::Index lo = std::max<Eigen::Index>(0, i - half);
    const Eigen::Index hi = std::min<Eigen::Index>(n - 1, i + half);
    return spectrum.values.segment(lo, hi - lo + 1).mean();
  };
  double best = -std::numeric_limits<double>::infinity();
  double where = spectrum.wavelengths(range.begin);
  for (Eigen::Index i = std::max<Eigen::Index>(range.begin, 1);
       i < std::min(range.end, n - 1); ++i) {
    const double slope = (smoothed(i + 1) - smoothed(i - 1)) /
                         (spectrum.wavelengths(i + 1) - spectrum.wavelengths(i - 1));
    if (slope > best) {
      best = slope;
      where = spectrum.wavelengths(i);
    }
  }
  return where;
}

WavelengthWindow tremsin_window(const TransmissionSpectrum &spectrum,
                                const WavelengthWindow &edge, double below, double above) {
  require(below > 0.0 && above > 0.0, ErrorKind::invalid_argument,
          "tremsin_window: crop extents must be > 0");
  const double centre = steepest_rise(spectrum, edge);
  return {std::max(centre - below, spectrum.wavelengths(0)),
          std::min(centre + above, spectrum.wavelengths(spectrum.size() - 1))};
}

namespace {

void validate_windows(const TransmissionSpectrum &spectrum, const EdgeWindows &w) {
  require(w.left.high < w.edge.low && w.edge.high < w.right.low && w.left.low <= w.left.high &&
              w.edge.low <= w.edge.high && w.right.low <= w.right.high,
          ErrorKind::invalid_argument,
          "edge windows must be ordered left < edge < right without overlap");
  for (const WavelengthWindow *window : {&w.left, &w.right, &w.edge}) {
    require(spectrum.indices_in(*window).size() >= 3, ErrorKind::insufficient_data,
            "every edge window needs at least 3 points");
  }
}

/// Best converged fit over a set of starting points; ties keep the first.
std::optional<FitResult> best_of(const CurveModel &model, const std::vector<Eigen::VectorXd> &starts,
                                 const Eigen::VectorXd &data, const Eigen::VectorXd &weights,
                                 const LmOptions &options) {
  std::optional<FitResult> best;
  for (const Eigen::VectorXd &start : starts) {
    FitResult fit = levenberg_marquardt(model, start, data, weights, options);
    if (!fit.converged) {
      continue;
    }
    if (!best || fit.residual_norm < best->residual_norm) {
      best = std::move(fit);
    }
  }
  return best;
}

std::vector<double> jittered(double centre, const FitOptions &options,
                             const WavelengthWindow &window) {
  std::vector<double> out{centre};
  for (int k = 1; k < options.restarts; ++k) {
    const double sign = (k % 2 == 1) ? -1.0 : 1.0;
    const double offset = sign * options.restart_jitter * static_cast<double>((k + 1) / 2);
    out.push_back(std::clamp(centre + offset, window.low + 0.05 * window.width(),
                             window.high - 0.05 * window.width()));
  }
  return out;
}

bool near_bound(double lambda, const WavelengthWindow &window) {
  const double margin = 1e-3 * window.width();
  return lambda <= window.low + margin || lambda >= window.high - margin;
}

} // namespace

FitResult fit_santisteban_edge(const TransmissionSpectrum &spectrum,
                               const WavelengthWindow &edge_window, const Baselines &baselines,
                               EdgeModel model, const FitOptions &options) {
  const IndexRange range = spectrum.indices_in(edge_window);
  require(range.size() >= 4, ErrorKind::insufficient_data,
          "fit_santisteban_edge: edge window holds too few points");
  const TransmissionSpectrum part = spectrum.slice(range);
  const Eigen::ArrayXd lambda = part.wavelengths.array();
  const Eigen::ArrayXd right = lambda.unaryExpr([&](double l) { return right_baseline(l, baselines); });
  const Eigen::ArrayXd left = lambda.unaryExpr([&](double l) { return left_baseline(l, baselines); });

  CurveModel curve;
  const ParamSpec location{"lambda_hkl", Transform::bounded, edge_window.low, edge_window.high};
  if (model == EdgeModel::kropff) {
    curve.params = {location, {"sigma_B", Transform::absolute}, {"tau", Transform::absolute}};
    curve.predict = [lambda, left, right](const Eigen::VectorXd &p) -> Eigen::VectorXd {
      const KropffShape shape{p(0), std::max(std::abs(p(1)), 1e-9), std::abs(p(2))};
      const Eigen::ArrayXd edge = evaluate(lambda, shape);
      return (edge * right + (1.0 - edge) * left).matrix();
    };
  } else {
    curve.params = {location, {"sigma_B", Transform::absolute}, {"alpha", Transform::absolute},
                    {"beta", Transform::absolute}};
    curve.predict = [lambda, left, right](const Eigen::VectorXd &p) -> Eigen::VectorXd {
      const VogelParams shape{p(0), std::max(std::abs(p(1)), 1e-9),
                              std::max(std::abs(p(2)), 1e-9), std::max(std::abs(p(3)), 1e-9)};
      const Eigen::ArrayXd edge = evaluate(lambda, shape);
      return (edge * right + (1.0 - edge) * left).matrix();
    };
  }

  std::vector<Eigen::VectorXd> starts;
  for (double centre : jittered(steepest_rise(spectrum, edge_window), options, edge_window)) {
    Eigen::VectorXd s(curve.params.size());
    if (model == EdgeModel::kropff) {
      s << centre, options.initial_sigma, options.initial_tau;
    } else {
      s << centre, options.initial_sigma, 1.0 / options.initial_tau, 1.0 / options.initial_tau;
    }
    starts.push_back(s);
  }

  auto best = best_of(curve, starts, part.values, fit_weights(part), options.lm);
  if (!best) {
    fail(ErrorKind::method_failure, "santisteban stage 3: edge fit did not converge");
  }
  return *best;
}

SantistebanFit fit_santisteban(const TransmissionSpectrum &spectrum, const EdgeWindows &windows,
                               EdgeModel model, double lambda0, const FitOptions &options) {
  validate_windows(spectrum, windows);

  SantistebanFit out;
  out.model = model;
  ExponentialBaseline right;
  try {
    right = fit_exponential_baseline(spectrum, windows.right);
  } catch (const Error &e) {
    fail(ErrorKind::method_failure, std::string("santisteban stage 1: ") + e.what());
  }
  ExponentialBaseline left;
  try {
    left = fit_exponential_baseline(spectrum, windows.left, right);
  } catch (const Error &e) {
    fail(ErrorKind::method_failure, std::string("santisteban stage 2: ") + e.what());
  }
  out.baselines = {right.a, right.b, left.a, left.b};
  out.right_fit = std::move(right.fit);
  out.left_fit = std::move(left.fit);
  out.edge_fit = fit_santisteban_edge(spectrum, windows.edge, out.baselines, model, options);

  const double edge = out.edge_fit.value("lambda_hkl");
  const Eigen::Index k = out.edge_fit.index("lambda_hkl");
  out.strain = strain_from_fit(edge, out.edge_fit.covariance(k, k), lambda0, "santisteban");
  out.strain.suspicious = near_bound(edge, windows.edge) || !out.edge_fit.covariance_available;
  return out;
}

TremsinFit fit_tremsin(const TransmissionSpectrum &spectrum, const WavelengthWindow &window,
                       double lambda0, const FitOptions &options) {
  const IndexRange range = spectrum.indices_in(window);
  require(range.size() >= 8, ErrorKind::insufficient_data,
          "fit_tremsin: window holds fewer than 8 points");
  const TransmissionSpectrum part = spectrum.slice(range);
  const Eigen::ArrayXd lambda = part.wavelengths.array();

  CurveModel curve;
  curve.params = {{"lambda_hkl", Transform::bounded, window.low, window.high},
                  {"sigma_B", Transform::absolute},
                  {"tau", Transform::absolute},
                  {"h", Transform::absolute},
                  {"b"}};
  curve.predict = [lambda](const Eigen::VectorXd &p) -> Eigen::VectorXd {
    const KropffShape shape{p(0), std::max(std::abs(p(1)), 1e-9), std::abs(p(2))};
    return (std::abs(p(3)) * evaluate(lambda, shape) + p(4)).matrix();
  };

  const double low = part.values.head(std::min<Eigen::Index>(5, part.size())).mean();
  const double high = part.values.tail(std::min<Eigen::Index>(5, part.size())).mean();
  std::vector<Eigen::VectorXd> starts;
  for (double centre : jittered(steepest_rise(spectrum, window), options, window)) {
    Eigen::VectorXd s(5);
    s << centre, options.initial_sigma, options.initial_tau, std::max(high - low, 1e-3), low;
    starts.push_back(s);
  }

  TremsinFit out;
  const Eigen::VectorXd weights = fit_weights(part);
  std::optional<FitResult> best = best_of(curve, starts, part.values, weights, options.lm);
  if (!best) {
    // A window without an edge drives lambda_hkl onto a bound; report that
    // rather than failing when it is what happened.
    FitResult fallback = levenberg_marquardt(curve, starts.front(), part.values, weights, options.lm);
    if (!near_bound(fallback.params(0), window)) {
      fail(ErrorKind::method_failure, "tremsin: fit did not converge");
    }
    best = std::move(fallback);
  }
  out.fit = std::move(*best);
  const double edge = out.fit.value("lambda_hkl");
  out.strain = strain_from_fit(edge, out.fit.covariance(0, 0), lambda0, "tremsin");
  out.strain.suspicious = near_bound(edge, window) || !out.fit.covariance_available;
  return out;
}

TremsinCrop tremsin_crop_for_noise(double noise_scale) {
  TremsinCrop crop;
  if (noise_scale <= 0.3) {
    crop.width_scale = 1.5;
  } else if (noise_scale > 3.0) {
    crop.width_scale = 6.0;
  }
  return crop;
}

TremsinFit fit_tremsin_cropped(const TransmissionSpectrum &spectrum,
                               const WavelengthWindow &edge_window, double lambda0,
                               const TremsinCrop &crop, const FitOptions &options) {
  require(crop.width_scale > 0.0 && crop.pad >= 0.0, ErrorKind::invalid_argument,
          "fit_tremsin_cropped: width_scale must be > 0 and pad >= 0");
  const WavelengthWindow broad = tremsin_window(spectrum, edge_window, crop.below, crop.above);
  const TremsinFit first = fit_tremsin(spectrum, broad, lambda0, options);
  const double edge = first.fit.value("lambda_hkl");
  const double sigma = std::abs(first.fit.value("sigma_B"));
  const double tau = std::abs(first.fit.value("tau"));
  const WavelengthWindow tight{
      std::max(edge - crop.width_scale * sigma - crop.pad, broad.low),
      std::min(edge + crop.width_scale * (sigma + tau) + crop.pad, broad.high)};
  if (first.strain.suspicious || spectrum.indices_in(tight).size() < 8) {
    return first;
  }
  return fit_tremsin(spectrum, tight, lambda0, options);
}

} // namespace braggedge
