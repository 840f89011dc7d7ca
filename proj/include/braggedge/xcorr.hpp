#ifndef BRAGGEDGE_XCORR_HPP
#define BRAGGEDGE_XCORR_HPP

// Cross-correlation strain estimate: smoothed derivatives of the strained and
// stress-free spectra, their normalised correlation, and a pseudo-Voigt fit
// to the correlation peak.

#include <braggedge/lsq.hpp>
#include <braggedge/spectrum.hpp>

namespace braggedge {

struct SGConfig {
  int window_length = 25;
  int polynomial_order = 3;
  static constexpr int derivative_order = 1;

  void validate() const;
};

/// Savitzky-Golay settings tuned per noise level (multiplier on the base
/// noise model).
SGConfig sg_defaults_for_noise(double noise_scale);

/// Values on a uniform wavelength grid.
struct SampledSeries {
  Eigen::VectorXd grid;
  Eigen::VectorXd values;
};

struct CorrelationCurve {
  Eigen::VectorXd lags; // Angstrom
  Eigen::VectorXd values;
};

/// First-derivative Savitzky-Golay filter. The first and last half-windows
/// use the derivative of the polynomial fitted to the terminal window.
SampledSeries savitzky_golay_derivative(const TransmissionSpectrum &spectrum,
                                        const SGConfig &config);

/// Pearson correlation of the overlapping samples at each lag
/// -max_lag..max_lag grid steps; a positive lag means `series` lies to the
/// right of `reference`.
CorrelationCurve cross_correlate(const SampledSeries &series, const SampledSeries &reference,
                                 int max_lag);

struct XcorrOptions {
  SGConfig sg;
  int max_lag = 80;
  // Grid steps either side of the discrete peak. Narrower windows see only
  // the cap of the peak and leave the Voigt widths unidentified.
  int fit_half_width = 35;
  LmOptions lm;
};

struct XcorrFit {
  CorrelationCurve curve;
  FitResult voigt;
  StrainEstimate strain;
};

/// Strain = delta_hkl / lambda0 from the fitted correlation peak; the
/// predicted std is the Fisher std of delta_hkl over lambda0.
XcorrFit fit_xcorr_strain(const TransmissionSpectrum &spectrum,
                          const TransmissionSpectrum &reference, double lambda0,
                          const XcorrOptions &options = {});

/// Pseudo-Voigt parameters from a fit produced by fit_xcorr_strain.
VoigtParams voigt_params(const FitResult &fit);

} // namespace braggedge

#endif
