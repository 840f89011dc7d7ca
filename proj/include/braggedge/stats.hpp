#ifndef BRAGGEDGE_STATS_HPP
#define BRAGGEDGE_STATS_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace braggedge::stats {

inline double normal_cdf(double x, double mean, double std) {
  return 0.5 * std::erfc(-(x - mean) / (std::numbers::sqrt2 * std));
}

inline double normal_pdf(double x, double mean, double std) {
  const double z = (x - mean) / std;
  return std::exp(-0.5 * z * z) / (std * std::sqrt(2.0 * std::numbers::pi));
}

/// Population mean and standard deviation (1/N normalization).
template <typename Derived>
std::pair<double, double> mean_std_population(const Eigen::DenseBase<Derived> &x) {
  const double n = static_cast<double>(x.size());
  const double mean = x.sum() / n;
  const double var = (x.derived().array() - mean).square().sum() / n;
  return {mean, std::sqrt(var)};
}

/// Sample mean and unbiased standard deviation (n - 1 normalization).
template <typename Derived>
std::pair<double, double> mean_std_sample(const Eigen::DenseBase<Derived> &x) {
  const double n = static_cast<double>(x.size());
  const double mean = x.sum() / n;
  const double var = (x.derived().array() - mean).square().sum() / (n - 1.0);
  return {mean, std::sqrt(var)};
}

/// Two-sided Kolmogorov-Smirnov statistic of `samples` against N(mean, std).
inline double ks_statistic_normal(std::vector<double> samples, double mean, double std) {
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = normal_cdf(samples[i], mean, std);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

/// Asymptotic KS critical value sqrt(-ln(alpha / 2) / 2) / sqrt(n).
inline double ks_critical_value(std::size_t n, double alpha) {
  return std::sqrt(-0.5 * std::log(alpha / 2.0)) / std::sqrt(static_cast<double>(n));
}

/// Equal-width histogram with a Gaussian overlay scaled to the sample count.
struct Histogram {
  Eigen::VectorXd centers;
  Eigen::VectorXd counts;
  Eigen::VectorXd overlay;
  double width = 0.0;
};

inline Histogram histogram(const Eigen::VectorXd &samples, int bins, double overlay_mean,
                           double overlay_std) {
  Histogram out;
  if (samples.size() == 0 || bins < 1) {
    return out;
  }
  double lo = samples.minCoeff();
  double hi = samples.maxCoeff();
  if (hi <= lo) {
    const double pad = std::max(std::abs(lo) * 1e-9, 1e-12);
    lo -= pad;
    hi += pad;
  }
  out.width = (hi - lo) / bins;
  out.centers = Eigen::VectorXd::LinSpaced(bins, lo + 0.5 * out.width, hi - 0.5 * out.width);
  out.counts = Eigen::VectorXd::Zero(bins);
  for (double v : samples) {
    const int b = std::clamp(static_cast<int>((v - lo) / out.width), 0, bins - 1);
    out.counts(b) += 1.0;
  }
  out.overlay = Eigen::VectorXd::Zero(bins);
  if (overlay_std > 0.0) {
    const double n = static_cast<double>(samples.size());
    for (int b = 0; b < bins; ++b) {
      out.overlay(b) = n * (normal_cdf(out.centers(b) + 0.5 * out.width, overlay_mean, overlay_std) -
                            normal_cdf(out.centers(b) - 0.5 * out.width, overlay_mean, overlay_std));
    }
  }
  return out;
}

} // namespace braggedge::stats

#endif
