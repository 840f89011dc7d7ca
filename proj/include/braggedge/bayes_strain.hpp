#ifndef BRAGGEDGE_BAYES_STRAIN_HPP
#define BRAGGEDGE_BAYES_STRAIN_HPP

// Non-parametric strain: baselines fitted either side of the edge, a GP edge
// shape in between, and Monte Carlo draws of the wavelength zeta at which the
// sampled edge gradient peaks.

#include <braggedge/gp.hpp>
#include <braggedge/lsq.hpp>
#include <braggedge/noise.hpp>
#include <braggedge/stats.hpp>
#include <braggedge/synthetic.hpp>

#include <optional>
#include <vector>

namespace braggedge {

struct GPFitOptions {
  std::vector<KernelKind> kernels = {KernelKind::matern_3_2, KernelKind::squared_exponential,
                                     KernelKind::matern_5_2};
  HyperparameterOptions hyper;
  int grid_density = 16; // prediction points per measurement interval
  // Fraction of the edge window left out of the prediction grid at each end,
  // where the gradient is constrained by data on one side only.
  double prediction_margin = 0.2;
  // Used when the spectrum carries no noise_std (noiseless simulations).
  NoiseModel fallback_noise = default_noise_model();
  double fallback_noise_scale = 1e-2;
  // Grid points whose gradient cannot plausibly be the maximum at this many
  // marginal standard deviations are excluded from joint sampling.
  double candidate_sigmas = 6.0;
  // Longer candidate ranges are strided around the mean-gradient peak.
  Eigen::Index max_joint_points = 400;
};

struct EdgeFitGP {
  Baselines baselines;
  ExponentialBaseline right_fit;
  ExponentialBaseline left_fit;
  GPEdgeProblem problem; // carries the selected kernel
  HyperparameterResult hyper;
  Eigen::VectorXd grid;     // dense prediction grid over the edge window
  GPEdgeMarginals profile;  // marginal posterior on the whole grid
  IndexRange candidates;    // grid range that can hold the gradient maximum
  GPEdgePosterior posterior; // joint posterior on grid[candidates]
};

/// Step 1: right baseline; step 2: left baseline; step 3: GP on the edge
/// window with hyperparameter selection and conditioning. Errors carry the
/// failing step.
EdgeFitGP fit_edge_gp(const TransmissionSpectrum &spectrum, const EdgeWindows &windows,
                      const GPFitOptions &options = {});

/// Contiguous grid range where mean_g + k sd_g reaches the lower k-sigma bound
/// of the best point.
IndexRange gradient_candidates(const GPEdgeMarginals &marginals, double k);

struct ZetaSamples {
  Eigen::VectorXd values; // Angstrom, each a grid point
  double grid_pitch = 0.0;
};

/// Joint draws of g over the posterior grid; zeta is the grid point of each
/// draw's maximum (ties to the lowest index).
ZetaSamples sample_zeta(const GPEdgePosterior &posterior, int n_samples, Rng &rng);

/// Two modes more than 10 grid pitches apart, each holding over 20% of the
/// draws.
bool is_bimodal(const ZetaSamples &zeta);

/// Per-draw (zeta - zeta0) / zeta0 with paired zeta0 draws; mean and 1/N
/// variance over the draws.
StrainEstimate strain_distribution(const ZetaSamples &zeta, const ZetaSamples &zeta0);
StrainEstimate strain_distribution(const ZetaSamples &zeta, double zeta0);

struct StrainHistogram {
  stats::Histogram histogram;
  double ks_statistic = 0.0;
  double ks_critical_1pct = 0.0;
};

/// Histogram of the retained strain draws with the N(mean, std) overlay.
StrainHistogram strain_histogram(const StrainEstimate &estimate, int bins = 40);

struct GPStrainOptions {
  GPFitOptions fit;
  int n_samples = 1000;
};

struct GPStrainResult {
  EdgeFitGP fit;
  ZetaSamples zeta;
  std::optional<ZetaSamples> zeta0;
  StrainEstimate strain;
};

/// Strain against a known stress-free gradient peak.
GPStrainResult gp_strain(const TransmissionSpectrum &spectrum, const EdgeWindows &windows,
                         double zeta0, const GPStrainOptions &options, Rng &rng);

/// Gradient peak of a noiseless stress-free profile seen through the same
/// smoother as `fit`: its kernel, noise and prediction grid, with baselines
/// fitted to the profile. Smoothing offsets then cancel in the strain ratio.
double profile_zeta0(const EdgeFitGP &fit, const TransmissionSpectrum &profile,
                     const EdgeWindows &windows);

/// Strain against a noiseless stress-free profile (see profile_zeta0).
GPStrainResult gp_strain_profile(const TransmissionSpectrum &spectrum,
                                 const TransmissionSpectrum &profile, const EdgeWindows &windows,
                                 const GPStrainOptions &options, Rng &rng);

/// Strain against a measured stress-free spectrum, with paired draws.
GPStrainResult gp_strain(const TransmissionSpectrum &spectrum,
                         const TransmissionSpectrum &reference, const EdgeWindows &windows,
                         const GPStrainOptions &options, Rng &rng);

} // namespace braggedge

#endif
