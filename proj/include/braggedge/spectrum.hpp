#ifndef BRAGGEDGE_SPECTRUM_HPP
#define BRAGGEDGE_SPECTRUM_HPP

// Transmission data container and the closed-form edge / transmission models
// shared by every fitter. Scalar models are templated so they compose with
// Eigen array expressions.

#include <braggedge/error.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <optional>
#include <string>

namespace braggedge {

inline constexpr double micro_strain = 1e6;

// ---------------------------------------------------------------------------
// Data containers
// ---------------------------------------------------------------------------

/// Wavelength interval [low, high] in Angstrom.
struct WavelengthWindow {
  double low = 0.0;
  double high = 0.0;

  bool contains(double lambda) const { return lambda >= low && lambda <= high; }
  double width() const { return high - low; }
};

/// Half-open index range into a spectrum.
struct IndexRange {
  Eigen::Index begin = 0;
  Eigen::Index end = 0;

  Eigen::Index size() const { return end - begin; }
};

struct TransmissionSpectrum {
  Eigen::VectorXd wavelengths;
  Eigen::VectorXd values;
  std::optional<Eigen::VectorXd> noise_std;

  Eigen::Index size() const { return wavelengths.size(); }

  /// Throws invalid_argument when the container invariants do not hold.
  void validate() const;

  /// Mean sample spacing.
  double pitch() const;

  bool is_uniform(double relative_tolerance = 1e-9) const;

  /// Contiguous index range of the samples that fall inside `window`.
  IndexRange indices_in(const WavelengthWindow &window) const;

  TransmissionSpectrum slice(IndexRange range) const;

  WavelengthWindow extent() const {
    return {wavelengths(0), wavelengths(size() - 1)};
  }
};

TransmissionSpectrum make_spectrum(Eigen::VectorXd wavelengths,
                                   Eigen::VectorXd values,
                                   std::optional<Eigen::VectorXd> noise_std = {});

/// `n` equally spaced wavelengths covering [low, high].
Eigen::VectorXd uniform_grid(double low, double high, Eigen::Index n);

// ---------------------------------------------------------------------------
// Model parameters
// ---------------------------------------------------------------------------

template <typename Scalar> struct BasicKropffShape {
  Scalar lambda_hkl;
  Scalar sigma_B;
  Scalar tau;
};

template <typename Scalar> struct BasicVogelParams {
  Scalar lambda_hkl;
  Scalar sigma_B;
  Scalar alpha;
  Scalar beta;
};

template <typename Scalar> struct BasicTremsinParams {
  Scalar lambda_hkl;
  Scalar sigma_B;
  Scalar tau;
  Scalar h;
  Scalar b;
};

template <typename Scalar> struct BasicVoigtParams {
  Scalar delta_hkl;
  Scalar A;
  Scalar mu;
  Scalar w_l;
  Scalar w_g;
  Scalar y0;
};

/// Exponential attenuation either side of the edge.
template <typename Scalar> struct BasicBaselines {
  Scalar a0;
  Scalar b0;
  Scalar a_hkl;
  Scalar b_hkl;
};

using KropffShape = BasicKropffShape<double>;
using VogelParams = BasicVogelParams<double>;
using TremsinParams = BasicTremsinParams<double>;
using VoigtParams = BasicVoigtParams<double>;
using Baselines = BasicBaselines<double>;

/// Full parametric description of a single simulated edge.
struct EdgeParams {
  KropffShape shape;
  Baselines baselines;
};

enum class EdgeModel { kropff, vogel };

std::string to_string(EdgeModel model);
EdgeModel edge_model_from_string(const std::string &name);

// Simulation defaults.
inline constexpr double default_lambda_hkl = 4.05;
inline constexpr double default_half_window = 0.25;
inline constexpr Eigen::Index default_samples = 512;

// Transmission about 0.40 below the edge and 0.75 above it on the default
// window.
inline Baselines default_baselines() { return {0.12, 0.04, 0.6, 0.01}; }

// ---------------------------------------------------------------------------
// Special functions
// ---------------------------------------------------------------------------

/// Scaled complementary error function exp(y^2) erfc(y).
template <typename Scalar> Scalar erfcx(Scalar y) {
  using std::erfc;
  using std::exp;
  if (y < Scalar(25)) {
    return exp(y * y) * erfc(y);
  }
  // Asymptotic series; truncation error below 1e-13 for y >= 25.
  const Scalar inv2 = Scalar(1) / (y * y);
  const Scalar series =
      Scalar(1) - inv2 / 2 + Scalar(3) * inv2 * inv2 / 4 -
      Scalar(15) * inv2 * inv2 * inv2 / 8 +
      Scalar(105) * inv2 * inv2 * inv2 * inv2 / 16;
  return series / (y * std::sqrt(std::numbers::pi_v<Scalar>));
}

/// exp(u) * erfc(y) without overflowing exp(u) when erfc(y) underflows.
template <typename Scalar> Scalar exp_erfc(Scalar u, Scalar y) {
  using std::erfc;
  using std::exp;
  if (y < Scalar(0.5)) {
    return exp(u) * erfc(y);
  }
  return exp(u - y * y) * erfcx(y);
}

namespace detail {

template <typename Scalar> void require_finite(Scalar v, const char *what) {
  using std::isfinite;
  if (!isfinite(v)) {
    fail(ErrorKind::invalid_argument, std::string("non-finite ") + what);
  }
}

} // namespace detail

// ---------------------------------------------------------------------------
// Edge shapes
// ---------------------------------------------------------------------------

/// Integrated Kropff edge profile B(lambda). tau == 0 gives the pure
/// error-function edge.
template <typename Scalar>
Scalar kropff_edge(Scalar lambda, const BasicKropffShape<Scalar> &p) {
  using std::erfc;
  using std::sqrt;
  detail::require_finite(lambda, "wavelength");
  detail::require_finite(p.lambda_hkl, "lambda_hkl");
  require(p.sigma_B > Scalar(0) && std::isfinite(p.sigma_B),
          ErrorKind::invalid_argument, "kropff_edge: sigma_B must be > 0");
  require(p.tau >= Scalar(0) && std::isfinite(p.tau),
          ErrorKind::invalid_argument, "kropff_edge: tau must be >= 0");

  const Scalar x = lambda - p.lambda_hkl;
  const Scalar w = -x / (std::numbers::sqrt2_v<Scalar> * p.sigma_B);
  if (p.tau == Scalar(0)) {
    return erfc(w) / 2;
  }
  const Scalar ratio = p.sigma_B / p.tau;
  const Scalar u = -x / p.tau + ratio * ratio / 2;
  return (erfc(w) - exp_erfc(u, w + ratio)) / 2;
}

/// dB/dlambda of the Kropff edge.
template <typename Scalar>
Scalar kropff_edge_derivative(Scalar lambda, const BasicKropffShape<Scalar> &p) {
  using std::exp;
  using std::sqrt;
  detail::require_finite(lambda, "wavelength");
  require(p.sigma_B > Scalar(0), ErrorKind::invalid_argument,
          "kropff_edge_derivative: sigma_B must be > 0");
  require(p.tau >= Scalar(0), ErrorKind::invalid_argument,
          "kropff_edge_derivative: tau must be >= 0");

  const Scalar x = lambda - p.lambda_hkl;
  const Scalar gauss_norm =
      Scalar(1) / (sqrt(Scalar(2) * std::numbers::pi_v<Scalar>) * p.sigma_B);
  const Scalar gauss = gauss_norm * exp(-x * x / (2 * p.sigma_B * p.sigma_B));
  if (p.tau == Scalar(0)) {
    return gauss;
  }
  const Scalar ratio = p.sigma_B / p.tau;
  const Scalar u = -x / p.tau + ratio * ratio / 2;
  const Scalar y = -x / (std::numbers::sqrt2_v<Scalar> * p.sigma_B) + ratio;
  return gauss + exp_erfc(u, y) / (2 * p.tau) - gauss_norm * exp(u - y * y);
}

/// Gaussian convolved with back-to-back exponentials (rise alpha, decay beta).
template <typename Scalar>
Scalar vogel_edge(Scalar lambda, const BasicVogelParams<Scalar> &p) {
  using std::erfc;
  detail::require_finite(lambda, "wavelength");
  detail::require_finite(p.lambda_hkl, "lambda_hkl");
  require(p.sigma_B > Scalar(0) && p.alpha > Scalar(0) && p.beta > Scalar(0),
          ErrorKind::invalid_argument,
          "vogel_edge: sigma_B, alpha and beta must be > 0");

  const Scalar s2 = p.sigma_B * p.sigma_B;
  const Scalar root2s = std::numbers::sqrt2_v<Scalar> * p.sigma_B;
  const Scalar delta = p.lambda_hkl - lambda;
  const Scalar w = delta / root2s;
  const Scalar u = p.alpha / 2 * (p.alpha * s2 + 2 * delta);
  const Scalar v = p.beta / 2 * (p.beta * s2 - 2 * delta);
  const Scalar y = (p.alpha * s2 + delta) / root2s;
  const Scalar z = (p.beta * s2 - delta) / root2s;
  return erfc(w) / 2 -
         (p.beta * exp_erfc(u, y) - p.alpha * exp_erfc(v, z)) /
             (2 * (p.alpha + p.beta));
}

// ---------------------------------------------------------------------------
// Transmission models
// ---------------------------------------------------------------------------

/// exp(-(a0 + b0 lambda)): attenuation on the long-wavelength side.
template <typename Scalar>
Scalar right_baseline(Scalar lambda, const BasicBaselines<Scalar> &c) {
  using std::exp;
  return exp(-(c.a0 + c.b0 * lambda));
}

/// exp(-(a0 + b0 lambda)) exp(-(a_hkl + b_hkl lambda)): short-wavelength side.
template <typename Scalar>
Scalar left_baseline(Scalar lambda, const BasicBaselines<Scalar> &c) {
  using std::exp;
  return exp(-(c.a0 + c.b0 * lambda + c.a_hkl + c.b_hkl * lambda));
}

/// Transmission for a given edge fraction `edge` in [0, 1].
template <typename Scalar>
Scalar santisteban_transmission(Scalar lambda, Scalar edge,
                                const BasicBaselines<Scalar> &c) {
  detail::require_finite(c.a0 + c.b0 + c.a_hkl + c.b_hkl, "baseline coefficient");
  return edge * right_baseline(lambda, c) +
         (Scalar(1) - edge) * left_baseline(lambda, c);
}

inline double santisteban_transmission(double lambda, const EdgeParams &p) {
  return santisteban_transmission(lambda, kropff_edge(lambda, p.shape), p.baselines);
}

inline double santisteban_transmission(double lambda, const VogelParams &shape,
                                       const Baselines &baselines) {
  return santisteban_transmission(lambda, vogel_edge(lambda, shape), baselines);
}

/// h * B_kropff + b.
template <typename Scalar>
Scalar tremsin_transmission(Scalar lambda, const BasicTremsinParams<Scalar> &p) {
  require(p.h > Scalar(0), ErrorKind::invalid_argument,
          "tremsin_transmission: h must be > 0");
  return p.h * kropff_edge(lambda, BasicKropffShape<Scalar>{p.lambda_hkl, p.sigma_B, p.tau}) +
         p.b;
}

/// Lorentzian/Gaussian mixture centred on delta_hkl.
template <typename Scalar>
Scalar pseudo_voigt(Scalar delta, const BasicVoigtParams<Scalar> &p) {
  using std::exp;
  using std::log;
  using std::sqrt;
  detail::require_finite(delta, "displacement");
  require(p.w_l > Scalar(0) && p.w_g > Scalar(0), ErrorKind::invalid_argument,
          "pseudo_voigt: widths must be > 0");
  require(p.mu >= Scalar(0) && p.mu <= Scalar(1), ErrorKind::invalid_argument,
          "pseudo_voigt: mu must lie in [0, 1]");
  constexpr Scalar pi = std::numbers::pi_v<Scalar>;
  const Scalar four_ln2 = 4 * std::numbers::ln2_v<Scalar>;
  const Scalar d = delta - p.delta_hkl;
  const Scalar lorentz = 2 * pi * p.w_l / (4 * d * d + p.w_l * p.w_l);
  const Scalar gauss = sqrt(four_ln2) / (sqrt(pi) * p.w_g) *
                       exp(-four_ln2 * d * d / (p.w_g * p.w_g));
  return p.y0 + p.A * (p.mu * lorentz + (Scalar(1) - p.mu) * gauss);
}

/// Element-wise evaluation over an Eigen array expression.
template <typename Derived, typename Params>
auto evaluate(const Eigen::ArrayBase<Derived> &lambda, const Params &p) {
  using Scalar = typename Derived::Scalar;
  if constexpr (std::is_same_v<Params, BasicKropffShape<Scalar>>) {
    return lambda.derived().unaryExpr([p](Scalar l) { return kropff_edge(l, p); });
  } else if constexpr (std::is_same_v<Params, BasicVogelParams<Scalar>>) {
    return lambda.derived().unaryExpr([p](Scalar l) { return vogel_edge(l, p); });
  } else if constexpr (std::is_same_v<Params, BasicTremsinParams<Scalar>>) {
    return lambda.derived().unaryExpr(
        [p](Scalar l) { return tremsin_transmission(l, p); });
  } else if constexpr (std::is_same_v<Params, BasicVoigtParams<Scalar>>) {
    return lambda.derived().unaryExpr([p](Scalar l) { return pseudo_voigt(l, p); });
  } else {
    static_assert(std::is_same_v<Params, EdgeParams>, "unsupported model");
    return lambda.derived().unaryExpr(
        [p](double l) { return santisteban_transmission(l, p); });
  }
}

/// Relative change (edge - reference) / reference.
inline double strain_from_edge(double edge_value, double reference_value) {
  detail::require_finite(edge_value, "edge value");
  require(reference_value > 0.0 && std::isfinite(reference_value),
          ErrorKind::invalid_argument, "strain_from_edge: reference must be > 0");
  return (edge_value - reference_value) / reference_value;
}

/// Wavelength of the steepest rise of a Kropff edge, found by a dense scan
/// followed by golden-section refinement.
double kropff_gradient_peak(const KropffShape &shape);

} // namespace braggedge

#endif
