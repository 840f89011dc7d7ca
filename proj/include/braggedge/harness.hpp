#ifndef BRAGGEDGE_HARNESS_HPP
#define BRAGGEDGE_HARNESS_HPP

// Simulation studies comparing the four strain methods, plus the data
// plumbing around them: CSV ingestion, macro-pixel averaging and noise
// characterisation of measured spectra.

#include <braggedge/bayes_strain.hpp>
#include <braggedge/lsq.hpp>
#include <braggedge/noise.hpp>
#include <braggedge/stats.hpp>
#include <braggedge/synthetic.hpp>
#include <braggedge/xcorr.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace braggedge {

enum class Method { santisteban, tremsin, xcorr, gp };

std::string to_string(Method method);
Method method_from_string(const std::string &name);
inline const std::vector<Method> &all_methods() {
  static const std::vector<Method> methods{Method::santisteban, Method::tremsin, Method::xcorr,
                                           Method::gp};
  return methods;
}

/// Per-method settings. Unset noise-dependent pieces follow the spectrum's
/// noise scale (sg_defaults_for_noise, tremsin_crop_for_noise).
struct MethodSettings {
  EdgeModel edge_model = EdgeModel::kropff;
  FitOptions lsq;
  XcorrOptions xcorr;
  std::optional<SGConfig> sg;
  std::optional<TremsinCrop> tremsin_crop;
  GPStrainOptions gp = study_gp_options();
  std::uint64_t gp_stream = 7; // RNG stream index for the Monte Carlo draws

  /// Squared-exponential kernel only: the Matern kernels select rougher
  /// gradients whose peak draws overstate the spread of zeta.
  static GPStrainOptions study_gp_options();
};

/// One method on one simulated trial. The GP compares against the noiseless
/// stress-free profile, or the noisy stress-free spectrum when the trial
/// carries one.
StrainEstimate run_method(Method method, const Trial &trial, const TrialConfig &config,
                          const MethodSettings &settings);

struct TrialRecord {
  int group = 0;
  int trial = 0;
  Method method = Method::santisteban;
  double true_strain = 0.0;
  bool ok = false;
  double error = 0.0;         // micro-strain, estimate - truth
  double predicted_std = 0.0; // micro-strain
  bool suspicious = false;
  bool bimodal = false;
  std::string failure;
};

struct TrialMetrics {
  Method method = Method::santisteban;
  double error_mean = 0.0;
  double mean_magnitude = 0.0;
  double maximum = 0.0; // largest |error|
  double error_std = 0.0;
  double mean_predicted_std = 0.0;
  double coverage_2sigma = 0.0; // fraction with |error| <= 2 predicted_std
  int n_trials = 0;             // successes the metrics are computed over
  int n_failures = 0;
  int n_suspicious = 0;
  // Some predicted std exceeds 100x the empirical error std. Values are
  // reported as computed.
  bool predicted_std_blowup = false;
};

/// Metrics over the successful records of `method`; population std.
TrialMetrics compute_metrics(Method method, const std::vector<TrialRecord> &records);

/// Error histogram with the Gaussian of the mean predicted std; the
/// +-2 sigma band of that Gaussian is the mean predicted interval.
struct MethodHistogram {
  Method method = Method::santisteban;
  stats::Histogram histogram;
  double interval_half_width = 0.0; // 2 * mean predicted std
};

struct StudyOptions {
  std::vector<Method> methods = all_methods();
  MethodSettings settings;
  int workers = 1;
  int histogram_bins = 40;
};

struct StudyResult {
  TrialConfig config;
  std::vector<TrialMetrics> metrics;   // in StudyOptions::methods order
  std::vector<TrialRecord> records;    // by (group, trial), then method
  std::vector<MethodHistogram> histograms;
};

/// Every (group, trial) of the config through every method. Results do not
/// depend on the worker count.
StudyResult run_trial_study(const TrialConfig &config, const StudyOptions &options);

// ---------------------------------------------------------------------------
// Detector data
// ---------------------------------------------------------------------------

/// Pixel spectra on a shared grid; row y * width + x of `values`.
struct PixelStack {
  int width = 0;
  int height = 0;
  Eigen::VectorXd wavelengths;
  Eigen::MatrixXd values;

  void validate() const;
  TransmissionSpectrum pixel(int x, int y) const;
};

/// Non-overlapping p x p block means; partial blocks at the right and bottom
/// average over the pixels they hold.
PixelStack macro_pixel_average(const PixelStack &stack, int p);

/// Wide CSV: header "x,y,<lambda_1>,...,<lambda_n>", then one row
/// "x,y,<Tr_1>,...,<Tr_n>" per pixel, in any order.
PixelStack read_pixel_stack(const std::filesystem::path &path);

enum class SpectrumFormat { csv_tr, csv_counts };

SpectrumFormat spectrum_format_from_string(const std::string &name);

struct IngestResult {
  TransmissionSpectrum spectrum;
  int dropped_rows = 0; // counts rows with I0 = 0
};

/// csv_tr: lambda, transmission[, noise_std]. csv_counts: lambda, I, I0 with
/// Tr = I / I0 and noise std from `noise` when given. A non-numeric first
/// line is a header; '#' starts a comment line.
IngestResult ingest_spectrum(const std::filesystem::path &path, SpectrumFormat format,
                             const std::optional<NoiseModel> &noise = {});

/// Baseline residuals of every spectrum, binned and reduced to a variance
/// law.
NoiseAnalysis analyse_spectra_noise(const std::vector<TransmissionSpectrum> &spectra,
                                    const WavelengthWindow &left, const WavelengthWindow &right,
                                    const std::vector<double> &bin_edges,
                                    std::size_t min_count = 2);

} // namespace braggedge

#endif
