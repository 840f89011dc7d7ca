#include <braggedge/synthetic.hpp>

namespace braggedge {

Rng make_stream(std::uint64_t seed, std::uint64_t group, std::uint64_t trial,
                std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(group), static_cast<std::uint32_t>(trial),
                    static_cast<std::uint32_t>(stream), 0x42726167u};
  return Rng(seq);
}

void TrialConfig::validate() const {
  require(n_groups >= 1 && trials_per_group >= 1, ErrorKind::invalid_argument,
          "trial config: counts must be >= 1");
  for (const auto &range : {sigma_B_range, tau_range}) {
    require(range[0] <= range[1] && range[0] >= 0.0, ErrorKind::invalid_argument,
            "trial config: ranges need 0 <= lo <= hi");
  }
  require(sigma_B_range[0] > 0.0, ErrorKind::invalid_argument,
          "trial config: sigma_B must be positive");
  require(strain_range[0] <= strain_range[1], ErrorKind::invalid_argument,
          "trial config: strain range needs lo <= hi");
  require(noise_scale >= 0.0, ErrorKind::invalid_argument,
          "trial config: noise_scale must be >= 0");
  require(grid.samples >= 16 && grid.high > grid.low, ErrorKind::invalid_argument,
          "trial config: grid needs >= 16 samples over a positive span");
  require(lambda0 > 0.0, ErrorKind::invalid_argument, "trial config: lambda0 must be > 0");
}

namespace {

double uniform(Rng &rng, const std::array<double, 2> &range) {
  if (range[0] == range[1]) {
    return range[0];
  }
  return std::uniform_real_distribution<double>(range[0], range[1])(rng);
}

} // namespace

SampledEdge sample_edge_params(Rng &rng, const TrialConfig &config) {
  SampledEdge out;
  out.params.shape.sigma_B = uniform(rng, config.sigma_B_range);
  out.params.shape.tau = uniform(rng, config.tau_range);
  out.strain = uniform(rng, config.strain_range);
  out.params.shape.lambda_hkl = config.lambda0 * (1.0 + out.strain);
  out.params.baselines = config.baselines;
  return out;
}

TransmissionSpectrum simulate_spectrum(const EdgeParams &params, const Eigen::VectorXd &grid,
                                       const NoiseModel &noise_model, double noise_scale,
                                       Rng &rng) {
  require(noise_scale >= 0.0, ErrorKind::invalid_argument,
          "simulate_spectrum: noise_scale must be >= 0");
  const Eigen::VectorXd truth = evaluate(grid.array(), params).matrix();
  TransmissionSpectrum out;
  out.wavelengths = grid;
  out.values = truth;
  if (noise_scale > 0.0) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd sigma(grid.size());
    for (Eigen::Index i = 0; i < grid.size(); ++i) {
      sigma(i) = noise_scale * noise_std_at(noise_model, truth(i));
      out.values(i) += sigma(i) * normal(rng);
    }
    out.noise_std = std::move(sigma);
  }
  out.validate();
  return out;
}

Trial generate_trial(const TrialConfig &config, int group, int trial) {
  Rng group_rng = make_stream(config.seed, static_cast<std::uint64_t>(group), 0xffffffffu);
  const SampledEdge shape = sample_edge_params(group_rng, config);

  Rng trial_rng = make_stream(config.seed, static_cast<std::uint64_t>(group),
                              static_cast<std::uint64_t>(trial));
  SampledEdge drawn = sample_edge_params(trial_rng, config);

  Trial out;
  out.group = group;
  out.trial = trial;
  out.truth.strain = drawn.strain;
  out.truth.params = shape.params;
  out.truth.params.shape.lambda_hkl = config.lambda0 * (1.0 + drawn.strain);
  out.stress_free = shape.params;
  out.stress_free.shape.lambda_hkl = config.lambda0;

  const Eigen::VectorXd grid = config.grid.wavelengths();
  out.spectrum = simulate_spectrum(out.truth.params, grid, config.noise_model,
                                   config.noise_scale, trial_rng);
  Rng unused;
  out.reference = simulate_spectrum(out.stress_free, grid, config.noise_model, 0.0, unused);
  if (config.noisy_reference) {
    out.noisy_reference = simulate_spectrum(out.stress_free, grid, config.noise_model,
                                            config.noise_scale, trial_rng);
  }
  return out;
}

} // namespace braggedge
