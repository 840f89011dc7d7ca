#ifndef BRAGGEDGE_LSQ_HPP
#define BRAGGEDGE_LSQ_HPP

#include <braggedge/spectrum.hpp>

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace braggedge {

// ---------------------------------------------------------------------------
// Weighted nonlinear least squares
// ---------------------------------------------------------------------------

/// How a parameter is represented inside the optimizer. Natural values are
/// what the model sees and what FitResult reports.
enum class Transform {
  identity,
  absolute,      // natural = |internal|
  bounded,       // natural in (lower, upper) through a logistic map
  unit_interval, // natural = sin^2(internal), in [0, 1]
};

struct ParamSpec {
  std::string name;
  Transform transform = Transform::identity;
  double lower = 0.0;
  double upper = 0.0;
};

/// Model values as a function of natural parameters, with an optional
/// analytic Jacobian (n x p, natural parameters). Without one, central
/// differences in the optimizer's internal coordinates are used.
struct CurveModel {
  std::vector<ParamSpec> params;
  std::function<Eigen::VectorXd(const Eigen::VectorXd &)> predict;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd &)> jacobian;
};

struct LmOptions {
  int max_evaluations = 2000;
  double tolerance = 1e-12;
  double fd_relative_step = 1e-7;
  // A run whose SSE falls by less than stall_tolerance (relative) over
  // stall_steps consecutive steps is treated as converged.
  int stall_steps = 50;
  double stall_tolerance = 1e-8;
};

struct FitResult {
  std::vector<std::string> names;
  Eigen::VectorXd params;
  Eigen::MatrixXd covariance;
  bool covariance_available = false;
  double residual_norm = 0.0; // weighted SSE
  bool converged = false;
  int iterations = 0; // accepted steps that lowered the SSE
  int evaluations = 0;
  std::vector<double> sse_history; // weighted SSE after each accepted step

  double value(const std::string &name) const;
  double stddev(const std::string &name) const;
  Eigen::Index index(const std::string &name) const;
};

/// Minimizes sum_i w_i (data_i - f_i(params))^2 from `init` (natural values).
/// Covariance is the Gauss-Newton Fisher approximation (J^T W J)^-1 scaled by
/// SSE / (n - p). Running out of evaluations yields converged == false.
FitResult levenberg_marquardt(const CurveModel &model, const Eigen::VectorXd &init,
                              const Eigen::VectorXd &data, const Eigen::VectorXd &weights,
                              const LmOptions &options = {});

/// Inverse-variance weights from the spectrum's noise_std, uniform otherwise.
Eigen::VectorXd fit_weights(const TransmissionSpectrum &spectrum);

// ---------------------------------------------------------------------------
// Strain estimates
// ---------------------------------------------------------------------------

struct StrainEstimate {
  double strain_mean = 0.0;
  double strain_std = 0.0;
  std::optional<Eigen::VectorXd> samples;
  std::string method;
  bool suspicious = false;
  bool bimodal = false;
};

/// Strain and its standard deviation from a fitted edge location and its
/// variance, given the stress-free reference.
StrainEstimate strain_from_fit(double edge, double edge_variance, double reference,
                               std::string method);

// ---------------------------------------------------------------------------
// Parametric edge fits
// ---------------------------------------------------------------------------

struct EdgeWindows {
  WavelengthWindow left;
  WavelengthWindow right;
  WavelengthWindow edge;
};

/// Leftmost quarter, rightmost quarter and the samples between them.
EdgeWindows default_windows(const TransmissionSpectrum &spectrum);

/// Lambda of the steepest rise of a lightly smoothed spectrum within `window`.
double steepest_rise(const TransmissionSpectrum &spectrum, const WavelengthWindow &window);

struct FitOptions {
  int restarts = 3;
  double restart_jitter = 0.02; // Angstrom
  double initial_sigma = 5e-3;
  double initial_tau = 5e-3;
  LmOptions lm;
};

struct SantistebanFit {
  Baselines baselines;
  FitResult right_fit;
  FitResult left_fit;
  FitResult edge_fit;
  EdgeModel model = EdgeModel::kropff;
  StrainEstimate strain;
};

/// Three-stage fit: right baseline, left baseline, then the edge shape with
/// both baselines held. Throws method_failure naming the failing stage.
SantistebanFit fit_santisteban(const TransmissionSpectrum &spectrum, const EdgeWindows &windows,
                               EdgeModel model, double lambda0,
                               const FitOptions &options = {});

/// Stage three only, with the baselines supplied.
FitResult fit_santisteban_edge(const TransmissionSpectrum &spectrum,
                               const WavelengthWindow &edge_window, const Baselines &baselines,
                               EdgeModel model, const FitOptions &options = {});

struct TremsinFit {
  FitResult fit;
  StrainEstimate strain;
};

/// Crop [c - below, c + above] around the steepest rise c inside `edge`,
/// clipped to the spectrum. The flat-baseline model is only adequate close
/// to the edge; the longer side sits under the left baseline.
WavelengthWindow tremsin_window(const TransmissionSpectrum &spectrum,
                                const WavelengthWindow &edge, double below = 0.12,
                                double above = 0.08);

/// Five-parameter h * B + b fit over a window tightly cropped around the edge.
TremsinFit fit_tremsin(const TransmissionSpectrum &spectrum, const WavelengthWindow &window,
                       double lambda0, const FitOptions &options = {});

/// Two-pass crop: a fit over tremsin_window(below, above), then a refit over
/// [l - k s - pad, l + k (s + t) + pad] from its edge l, width s and tail t,
/// kept inside the first crop. Smaller k trades noise for less baseline bias.
struct TremsinCrop {
  double below = 0.12;
  double above = 0.08;
  double width_scale = 4.0;
  double pad = 0.01;
};

/// Crop scale per noise level (multiplier on the base noise model).
TremsinCrop tremsin_crop_for_noise(double noise_scale);

TremsinFit fit_tremsin_cropped(const TransmissionSpectrum &spectrum,
                               const WavelengthWindow &edge_window, double lambda0,
                               const TremsinCrop &crop, const FitOptions &options = {});

} // namespace braggedge

#endif
