#include <braggedge/bayes_strain.hpp>

#include <algorithm>
#include <cmath>

namespace braggedge {

namespace {

[[noreturn]] void rethrow_with_step(const Error &e, const char *step) {
  fail(e.kind(), std::string(step) + ": " + e.what());
}

Eigen::Index first_argmax(const Eigen::Ref<const Eigen::VectorXd> &v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(best)) {
      best = i;
    }
  }
  return best;
}

} // namespace

IndexRange gradient_candidates(const GPEdgeMarginals &marginals, double k) {
  const Eigen::Index m = marginals.mean_g.size();
  require(m >= 1, ErrorKind::invalid_argument, "gradient_candidates: empty grid");
  const Eigen::VectorXd sd = marginals.var_g.cwiseMax(0.0).cwiseSqrt();
  const Eigen::Index best = first_argmax(marginals.mean_g);
  const double floor = marginals.mean_g(best) - k * sd(best);
  IndexRange out{best, best + 1};
  for (Eigen::Index j = 0; j < m; ++j) {
    if (marginals.mean_g(j) + k * sd(j) >= floor) {
      out.begin = std::min(out.begin, j);
      out.end = std::max(out.end, j + 1);
    }
  }
  return out;
}

EdgeFitGP fit_edge_gp(const TransmissionSpectrum &spectrum, const EdgeWindows &windows,
                      const GPFitOptions &options) {
  spectrum.validate();
  require(!options.kernels.empty(), ErrorKind::invalid_argument, "fit_edge_gp: no kernels");
  require(options.grid_density >= 1, ErrorKind::invalid_argument,
          "fit_edge_gp: grid_density must be >= 1");
  require(options.prediction_margin >= 0.0 && options.prediction_margin < 0.5,
          ErrorKind::invalid_argument, "fit_edge_gp: prediction_margin must be in [0, 0.5)");
  require(options.max_joint_points >= 2, ErrorKind::invalid_argument,
          "fit_edge_gp: max_joint_points must be >= 2");

  EdgeFitGP out;
  try {
    out.right_fit = fit_exponential_baseline(spectrum, windows.right);
  } catch (const Error &e) {
    rethrow_with_step(e, "gp step 1 (right baseline)");
  }
  try {
    out.left_fit = fit_exponential_baseline(spectrum, windows.left, out.right_fit);
  } catch (const Error &e) {
    rethrow_with_step(e, "gp step 2 (left baseline)");
  }
  out.baselines = {out.right_fit.a, out.right_fit.b, out.left_fit.a, out.left_fit.b};

  try {
    const IndexRange range = spectrum.indices_in(windows.edge);
    require(range.size() >= 4, ErrorKind::insufficient_data,
            "edge window holds fewer than 4 points");
    const Eigen::Index n = range.size();
    GPEdgeProblem &p = out.problem;
    p.lambdas = spectrum.wavelengths.segment(range.begin, n);
    p.y_bar.resize(n);
    p.A.resize(n);
    p.noise_std.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double lambda = p.lambdas(i);
      const double g1 = left_baseline(lambda, out.baselines);
      const double g2 = right_baseline(lambda, out.baselines);
      const double y = spectrum.values(range.begin + i);
      p.y_bar(i) = y - g1;
      p.A(i) = g2 - g1;
      p.noise_std(i) = spectrum.noise_std
                           ? (*spectrum.noise_std)(range.begin + i)
                           : options.fallback_noise_scale * noise_std_at(options.fallback_noise, y);
    }
    p.kernel = Kernel{options.kernels.front(), 1.0, 0.02};

    out.hyper = optimize_hyperparameters(p, options.kernels, options.hyper);
    p.kernel = out.hyper.kernel;
    p.noise_scale = out.hyper.noise_scale;

    const GPConditioner conditioner(p);
    const Eigen::Index trim = static_cast<Eigen::Index>(
        std::floor(options.prediction_margin * static_cast<double>(n - 1)));
    require(n - 1 - 2 * trim >= 1, ErrorKind::invalid_argument,
            "prediction margin leaves no grid");
    out.grid = Eigen::VectorXd::LinSpaced((n - 1 - 2 * trim) * options.grid_density + 1,
                                          p.lambdas(trim), p.lambdas(n - 1 - trim));
    out.profile = conditioner.marginals(out.grid);
    out.candidates = gradient_candidates(out.profile, options.candidate_sigmas);

    // Stride the candidate range around the mean peak when it is too long to
    // sample jointly.
    const Eigen::Index peak = first_argmax(out.profile.mean_g);
    const Eigen::Index stride =
        (out.candidates.size() + options.max_joint_points - 1) / options.max_joint_points;
    const Eigen::Index first = peak - ((peak - out.candidates.begin) / stride) * stride;
    std::vector<double> sub;
    for (Eigen::Index j = first; j < out.candidates.end; j += stride) {
      sub.push_back(out.grid(j));
    }
    out.posterior = conditioner.posterior(
        Eigen::Map<const Eigen::VectorXd>(sub.data(), static_cast<Eigen::Index>(sub.size())));
  } catch (const Error &e) {
    rethrow_with_step(e, "gp step 3 (edge shape)");
  }
  return out;
}

ZetaSamples sample_zeta(const GPEdgePosterior &posterior, int n_samples, Rng &rng) {
  require(n_samples >= 1, ErrorKind::invalid_argument, "sample_zeta: n_samples must be >= 1");
  const Eigen::Index m = posterior.grid.size();
  require(m >= 1 && posterior.mean_g.size() == m && posterior.cov_g.rows() == m &&
              posterior.cov_g.cols() == m,
          ErrorKind::invalid_argument, "sample_zeta: posterior shapes disagree");

  ZetaSamples out;
  out.grid_pitch = m > 1 ? (posterior.grid(m - 1) - posterior.grid(0)) / static_cast<double>(m - 1)
                         : 0.0;
  out.values.resize(n_samples);

  if (m == 1 || posterior.cov_g.diagonal().maxCoeff() <= 0.0) {
    out.values.setConstant(posterior.grid(first_argmax(posterior.mean_g)));
    return out;
  }

  const JitteredCholesky factor = factorize_with_jitter(posterior.cov_g, "sample_zeta");
  std::normal_distribution<double> normal(0.0, 1.0);
  constexpr int block = 256;
  Eigen::MatrixXd z(m, block);
  for (int start = 0; start < n_samples; start += block) {
    const int count = std::min(block, n_samples - start);
    for (int c = 0; c < count; ++c) {
      for (Eigen::Index i = 0; i < m; ++i) {
        z(i, c) = normal(rng);
      }
    }
    Eigen::MatrixXd draws = factor.llt.matrixL() * z.leftCols(count);
    draws.colwise() += posterior.mean_g;
    for (int c = 0; c < count; ++c) {
      out.values(start + c) = posterior.grid(first_argmax(draws.col(c)));
    }
  }
  return out;
}

bool is_bimodal(const ZetaSamples &zeta) {
  const Eigen::Index n = zeta.values.size();
  if (n < 2 || zeta.grid_pitch <= 0.0) {
    return false;
  }
  const double lo = zeta.values.minCoeff();
  const auto bins = static_cast<Eigen::Index>(
                        std::lround((zeta.values.maxCoeff() - lo) / zeta.grid_pitch)) + 1;
  if (bins <= 11) {
    return false;
  }
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(bins);
  for (double v : zeta.values) {
    counts(std::clamp<Eigen::Index>(std::lround((v - lo) / zeta.grid_pitch), 0, bins - 1)) += 1.0;
  }
  // Box smoothing over five pitches keeps single-bin noise from forming modes.
  Eigen::VectorXd smooth = Eigen::VectorXd::Zero(bins);
  for (Eigen::Index j = 0; j < bins; ++j) {
    const Eigen::Index a = std::max<Eigen::Index>(0, j - 2);
    const Eigen::Index b = std::min<Eigen::Index>(bins - 1, j + 2);
    smooth(j) = counts.segment(a, b - a + 1).sum() / static_cast<double>(b - a + 1);
  }

  Eigen::VectorXd cumulative(bins);
  double running = 0.0;
  for (Eigen::Index j = 0; j < bins; ++j) {
    running += counts(j);
    cumulative(j) = running;
  }
  const double min_mass = 0.2 * static_cast<double>(n);
  for (Eigen::Index split = 1; split < bins; ++split) {
    const double left = cumulative(split - 1);
    if (left <= min_mass || static_cast<double>(n) - left <= min_mass) {
      continue;
    }
    const Eigen::Index mode_l = first_argmax(smooth.head(split));
    const Eigen::Index mode_r = split + first_argmax(smooth.tail(bins - split));
    if (mode_r - mode_l <= 10) {
      continue;
    }
    const double valley = smooth.segment(mode_l, mode_r - mode_l + 1).minCoeff();
    if (valley <= 0.5 * std::min(smooth(mode_l), smooth(mode_r))) {
      return true;
    }
  }
  return false;
}

namespace {

StrainEstimate summarize(Eigen::VectorXd samples, bool bimodal) {
  StrainEstimate out;
  const auto [mean, std] = stats::mean_std_population(samples);
  out.strain_mean = mean;
  out.strain_std = std;
  out.samples = std::move(samples);
  out.method = "gp";
  out.bimodal = bimodal;
  return out;
}

} // namespace

StrainEstimate strain_distribution(const ZetaSamples &zeta, const ZetaSamples &zeta0) {
  require(zeta.values.size() >= 1, ErrorKind::invalid_argument,
          "strain_distribution: no zeta samples");
  require(zeta.values.size() == zeta0.values.size(), ErrorKind::invalid_argument,
          "strain_distribution: paired sample counts differ");
  require((zeta0.values.array() != 0.0).all(), ErrorKind::invalid_argument,
          "strain_distribution: zeta0 must be nonzero");
  Eigen::VectorXd samples =
      ((zeta.values.array() - zeta0.values.array()) / zeta0.values.array()).matrix();
  return summarize(std::move(samples), is_bimodal(zeta) || is_bimodal(zeta0));
}

StrainEstimate strain_distribution(const ZetaSamples &zeta, double zeta0) {
  require(zeta.values.size() >= 1, ErrorKind::invalid_argument,
          "strain_distribution: no zeta samples");
  require(zeta0 != 0.0 && std::isfinite(zeta0), ErrorKind::invalid_argument,
          "strain_distribution: zeta0 must be nonzero");
  Eigen::VectorXd samples = ((zeta.values.array() - zeta0) / zeta0).matrix();
  return summarize(std::move(samples), is_bimodal(zeta));
}

StrainHistogram strain_histogram(const StrainEstimate &estimate, int bins) {
  require(estimate.samples && estimate.samples->size() >= 1, ErrorKind::invalid_argument,
          "strain_histogram: estimate holds no samples");
  require(bins >= 1, ErrorKind::invalid_argument, "strain_histogram: bins must be >= 1");
  const Eigen::VectorXd &s = *estimate.samples;
  StrainHistogram out;
  out.histogram = stats::histogram(s, bins, estimate.strain_mean, estimate.strain_std);
  if (estimate.strain_std > 0.0) {
    out.ks_statistic = stats::ks_statistic_normal(std::vector<double>(s.begin(), s.end()),
                                                  estimate.strain_mean, estimate.strain_std);
  }
  out.ks_critical_1pct = stats::ks_critical_value(static_cast<std::size_t>(s.size()), 0.01);
  return out;
}

namespace {

bool touches_grid_edge(const EdgeFitGP &fit) {
  return fit.candidates.begin == 0 || fit.candidates.end == fit.grid.size();
}

} // namespace

GPStrainResult gp_strain(const TransmissionSpectrum &spectrum, const EdgeWindows &windows,
                         double zeta0, const GPStrainOptions &options, Rng &rng) {
  GPStrainResult out;
  out.fit = fit_edge_gp(spectrum, windows, options.fit);
  out.zeta = sample_zeta(out.fit.posterior, options.n_samples, rng);
  out.strain = strain_distribution(out.zeta, zeta0);
  out.strain.suspicious = touches_grid_edge(out.fit);
  return out;
}

double profile_zeta0(const EdgeFitGP &fit, const TransmissionSpectrum &profile,
                     const EdgeWindows &windows) {
  const ExponentialBaseline right = fit_exponential_baseline(profile, windows.right);
  const ExponentialBaseline left = fit_exponential_baseline(profile, windows.left, right);
  const Baselines b{right.a, right.b, left.a, left.b};

  GPEdgeProblem p = fit.problem;
  const IndexRange range = profile.indices_in(windows.edge);
  require(range.size() == p.size() &&
              (profile.wavelengths.segment(range.begin, range.size()) - p.lambdas)
                      .cwiseAbs()
                      .maxCoeff() <= 1e-9,
          ErrorKind::invalid_argument, "profile_zeta0: profile grid differs from the fit");
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double lambda = p.lambdas(i);
    const double g1 = left_baseline(lambda, b);
    p.y_bar(i) = profile.values(range.begin + i) - g1;
    p.A(i) = right_baseline(lambda, b) - g1;
  }
  const GPEdgeMarginals m = GPConditioner(p).marginals(fit.grid);
  return fit.grid(first_argmax(m.mean_g));
}

GPStrainResult gp_strain_profile(const TransmissionSpectrum &spectrum,
                                 const TransmissionSpectrum &profile, const EdgeWindows &windows,
                                 const GPStrainOptions &options, Rng &rng) {
  GPStrainResult out;
  out.fit = fit_edge_gp(spectrum, windows, options.fit);
  double zeta0 = 0.0;
  try {
    zeta0 = profile_zeta0(out.fit, profile, windows);
  } catch (const Error &e) {
    rethrow_with_step(e, "gp reference profile");
  }
  out.zeta = sample_zeta(out.fit.posterior, options.n_samples, rng);
  out.strain = strain_distribution(out.zeta, zeta0);
  out.strain.suspicious = touches_grid_edge(out.fit);
  return out;
}

GPStrainResult gp_strain(const TransmissionSpectrum &spectrum,
                         const TransmissionSpectrum &reference, const EdgeWindows &windows,
                         const GPStrainOptions &options, Rng &rng) {
  GPStrainResult out;
  out.fit = fit_edge_gp(spectrum, windows, options.fit);
  const EdgeFitGP reference_fit = fit_edge_gp(reference, windows, options.fit);
  out.zeta = sample_zeta(out.fit.posterior, options.n_samples, rng);
  out.zeta0 = sample_zeta(reference_fit.posterior, options.n_samples, rng);
  out.strain = strain_distribution(out.zeta, *out.zeta0);
  out.strain.suspicious = touches_grid_edge(out.fit) || touches_grid_edge(reference_fit);
  return out;
}

} // namespace braggedge
