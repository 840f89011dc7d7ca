#ifndef BRAGGEDGE_NOISE_HPP
#define BRAGGEDGE_NOISE_HPP

// Noise characterisation: exponential baselines away from the edge, residuals
// binned by transmission, per-bin Gaussian fits and a linear variance law
// sigma^2 = a + b * Tr.

#include <braggedge/lsq.hpp>
#include <braggedge/spectrum.hpp>

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace braggedge {

inline constexpr double variance_floor = 1e-12;

struct NoiseModel {
  double a = 0.0;
  double b = 0.0;
};

/// sqrt(max(a + b * tr, variance_floor)).
double noise_std_at(const NoiseModel &model, double tr);

/// Linear variance law regressed on the binned standard deviations measured
/// at 24x24 macro-pixel averaging: (0.125, 4.79e-3), (0.325, 9.14e-3),
/// (0.525, 1.20e-2), (0.725, 1.50e-2).
NoiseModel default_noise_model();

/// Fitted exp(-(a + b lambda)) term. When fitted with a held right-side term
/// (a, b) are the additional left-side coefficients a_hkl, b_hkl.
struct ExponentialBaseline {
  double a = 0.0;
  double b = 0.0;
  FitResult fit;
};

/// Least-squares fit of exp(-(a + b lambda)) over `window`, or of
/// exp(-(a0 + b0 lambda)) exp(-(a + b lambda)) when `held_right` is supplied.
ExponentialBaseline fit_exponential_baseline(const TransmissionSpectrum &spectrum,
                                             const WavelengthWindow &window,
                                             const std::optional<ExponentialBaseline> &held_right = {});

struct Residual {
  double tr = 0.0; // reference ("true") transmission
  double e = 0.0;
};

struct ResidualBin {
  double low = 0.0;
  double high = 0.0;
  std::vector<double> residuals;
  double fitted_mean = 0.0;
  double fitted_std = 0.0;

  double mid() const { return 0.5 * (low + high); }
};

struct BinnedResiduals {
  std::vector<ResidualBin> bins;
  std::size_t dropped = 0;
};

/// Half-open [low, high) bins, the last bin closed. Out-of-range residuals
/// are dropped and counted.
BinnedResiduals bin_residuals(std::span<const Residual> residuals,
                              std::span<const double> bin_edges);

struct GaussianFit {
  double mean = 0.0;
  double std = 0.0;
  bool degenerate = false; // zero spread
};

/// Sample mean and unbiased standard deviation of the bin's residuals.
GaussianFit fit_gaussian_bin(const ResidualBin &bin);

struct BinSummary {
  double tr_mid = 0.0;
  double std = 0.0;
};

/// Ordinary least squares of std^2 against tr_mid.
NoiseModel fit_variance_model(std::span<const BinSummary> bins);

/// Residuals of a spectrum against baselines fitted in its left and right
/// windows; the baseline value is used as the reference transmission.
std::vector<Residual> baseline_residuals(const TransmissionSpectrum &spectrum,
                                         const WavelengthWindow &left,
                                         const WavelengthWindow &right);

struct NoiseAnalysis {
  BinnedResiduals binned;
  std::vector<GaussianFit> fits; // one per bin; unfitted bins carry std 0
  NoiseModel model;
};

/// bin -> per-bin Gaussian -> variance law, using bins with >= min_count
/// residuals.
NoiseAnalysis analyse_noise(std::span<const Residual> residuals,
                            std::span<const double> bin_edges, std::size_t min_count = 2);

} // namespace braggedge

#endif
