#ifndef BRAGGEDGE_SYNTHETIC_HPP
#define BRAGGEDGE_SYNTHETIC_HPP

#include <braggedge/noise.hpp>
#include <braggedge/spectrum.hpp>

#include <array>
#include <cstdint>
#include <optional>
#include <random>

namespace braggedge {

using Rng = std::mt19937_64;

/// Independent generator for (seed, group, trial, stream). Serial and
/// parallel runs see identical draws for the same key.
Rng make_stream(std::uint64_t seed, std::uint64_t group, std::uint64_t trial,
                std::uint64_t stream = 0);

struct GridSpec {
  double low = default_lambda_hkl - default_half_window;
  double high = default_lambda_hkl + default_half_window;
  Eigen::Index samples = default_samples;

  Eigen::VectorXd wavelengths() const { return uniform_grid(low, high, samples); }
};

struct TrialConfig {
  int n_groups = 100;
  int trials_per_group = 10;
  std::array<double, 2> sigma_B_range{4.7e-3, 1.4e-2};
  std::array<double, 2> tau_range{0.0, 1.3e-2};
  std::array<double, 2> strain_range{-3e-3, 3e-3};
  double noise_scale = 1.0;
  double lambda0 = default_lambda_hkl;
  GridSpec grid;
  Baselines baselines = default_baselines();
  NoiseModel noise_model = default_noise_model();
  std::uint64_t seed = 0;
  /// Give the GP method a noisy stress-free spectrum instead of the
  /// noiseless profile.
  bool noisy_reference = false;

  void validate() const;
  int total_trials() const { return n_groups * trials_per_group; }
};

struct SampledEdge {
  EdgeParams params; // strained edge
  double strain = 0.0;
};

/// sigma_B, tau and the applied strain uniformly from their ranges; the
/// strained lambda_hkl is lambda0 * (1 + strain).
SampledEdge sample_edge_params(Rng &rng, const TrialConfig &config);

/// y_i = Tr(lambda_i) + e_i with e_i ~ N(0, (noise_scale * sigma(Tr))^2).
/// noise_std is populated with the generating sigma when noise_scale > 0.
TransmissionSpectrum simulate_spectrum(const EdgeParams &params, const Eigen::VectorXd &grid,
                                       const NoiseModel &noise_model, double noise_scale,
                                       Rng &rng);

struct Trial {
  int group = 0;
  int trial = 0;
  SampledEdge truth;
  EdgeParams stress_free;
  TransmissionSpectrum spectrum;
  TransmissionSpectrum reference; // noiseless stress-free profile
  std::optional<TransmissionSpectrum> noisy_reference;
};

/// Edge shape drawn from the group stream, strain and noise from the trial
/// stream.
Trial generate_trial(const TrialConfig &config, int group, int trial);

} // namespace braggedge

#endif
