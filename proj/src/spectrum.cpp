#include <braggedge/spectrum.hpp>

#include <algorithm>

namespace braggedge {

void TransmissionSpectrum::validate() const {
  const Eigen::Index n = wavelengths.size();
  require(n >= 1, ErrorKind::invalid_argument, "spectrum is empty");
  require(values.size() == n, ErrorKind::invalid_argument,
          "spectrum: wavelengths and values differ in length");
  for (Eigen::Index i = 0; i < n; ++i) {
    require(std::isfinite(wavelengths(i)) && std::isfinite(values(i)),
            ErrorKind::invalid_argument, "spectrum: non-finite entry");
    if (i > 0) {
      require(wavelengths(i) > wavelengths(i - 1), ErrorKind::invalid_argument,
              "spectrum: wavelengths must be strictly increasing");
    }
  }
  if (noise_std) {
    require(noise_std->size() == n, ErrorKind::invalid_argument,
            "spectrum: noise_std differs in length");
    require((noise_std->array() > 0.0).all() && noise_std->allFinite(),
            ErrorKind::invalid_argument, "spectrum: noise_std must be > 0");
  }
}

double TransmissionSpectrum::pitch() const {
  require(size() >= 2, ErrorKind::insufficient_data, "pitch needs two samples");
  return (wavelengths(size() - 1) - wavelengths(0)) / static_cast<double>(size() - 1);
}

bool TransmissionSpectrum::is_uniform(double relative_tolerance) const {
  if (size() < 2) {
    return true;
  }
  const double h = pitch();
  for (Eigen::Index i = 1; i < size(); ++i) {
    if (std::abs(wavelengths(i) - wavelengths(i - 1) - h) > relative_tolerance * h) {
      return false;
    }
  }
  return true;
}

IndexRange TransmissionSpectrum::indices_in(const WavelengthWindow &window) const {
  const double *first = wavelengths.data();
  const double *last = first + size();
  const auto lo = std::lower_bound(first, last, window.low);
  const auto hi = std::upper_bound(first, last, window.high);
  return {static_cast<Eigen::Index>(lo - first), static_cast<Eigen::Index>(hi - first)};
}

TransmissionSpectrum TransmissionSpectrum::slice(IndexRange range) const {
  require(range.begin >= 0 && range.end <= size() && range.begin <= range.end,
          ErrorKind::invalid_argument, "spectrum slice out of range");
  TransmissionSpectrum out;
  out.wavelengths = wavelengths.segment(range.begin, range.size());
  out.values = values.segment(range.begin, range.size());
  if (noise_std) {
    out.noise_std = noise_std->segment(range.begin, range.size()).eval();
  }
  return out;
}

TransmissionSpectrum make_spectrum(Eigen::VectorXd wavelengths, Eigen::VectorXd values,
                                   std::optional<Eigen::VectorXd> noise_std) {
  TransmissionSpectrum s{std::move(wavelengths), std::move(values), std::move(noise_std)};
  s.validate();
  return s;
}

Eigen::VectorXd uniform_grid(double low, double high, Eigen::Index n) {
  require(n >= 2 && high > low, ErrorKind::invalid_argument,
          "uniform_grid: need n >= 2 and high > low");
  return Eigen::VectorXd::LinSpaced(n, low, high);
}

std::string to_string(EdgeModel model) {
  return model == EdgeModel::kropff ? "kropff" : "vogel";
}

EdgeModel edge_model_from_string(const std::string &name) {
  if (name == "kropff") {
    return EdgeModel::kropff;
  }
  if (name == "vogel") {
    return EdgeModel::vogel;
  }
  fail(ErrorKind::invalid_argument, "unknown edge model '" + name + "'");
}

double kropff_gradient_peak(const KropffShape &shape) {
  // The derivative is unimodal: a Gaussian smeared by a one-sided exponential.
  const double span = 6.0 * shape.sigma_B + 12.0 * shape.tau;
  const int n = 4001;
  double best_x = shape.lambda_hkl;
  double best = -1.0;
  const double step = 2.0 * span / (n - 1);
  for (int i = 0; i < n; ++i) {
    const double x = shape.lambda_hkl - span + step * i;
    const double g = kropff_edge_derivative(x, shape);
    if (g > best) {
      best = g;
      best_x = x;
    }
  }

  double a = best_x - step;
  double b = best_x + step;
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = kropff_edge_derivative(c, shape);
  double fd = kropff_edge_derivative(d, shape);
  for (int it = 0; it < 100 && (b - a) > 1e-14 * std::abs(best_x); ++it) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = kropff_edge_derivative(c, shape);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = kropff_edge_derivative(d, shape);
    }
  }
  return 0.5 * (a + b);
}

} // namespace braggedge
