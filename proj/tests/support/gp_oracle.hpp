#ifndef BRAGGEDGE_TESTS_GP_ORACLE_HPP
#define BRAGGEDGE_TESTS_GP_ORACLE_HPP

// Reference conditioning for the GP engine: the joint Gaussian over
// [y_bar; B(grid); g(grid)] is assembled from long-double kernel formulas
// written out here and conditioned with a full-pivot LU solve. No code is
// shared with the library's Cholesky path.

#include <braggedge/gp.hpp>
#include <braggedge/synthetic.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <random>

namespace oracle {

using Real = long double;
using MatrixR = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
using VectorR = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

// Covariances of (f(x), f(x')), (f'(x), f(x')) and (f'(x), f'(x')).
struct Blocks {
  Real k, dk, ddk;
};

inline Blocks kernel_blocks(braggedge::KernelKind kind, Real sf, Real l, Real x, Real xp) {
  const Real d = x - xp;
  const Real r = std::fabs(d);
  switch (kind) {
  case braggedge::KernelKind::squared_exponential: {
    const Real e = std::exp(-d * d / (2 * l * l));
    return {sf * e, -sf * d / (l * l) * e, sf * (1 / (l * l) - d * d / (l * l * l * l)) * e};
  }
  case braggedge::KernelKind::matern_3_2: {
    const Real a = std::sqrt(Real(3)) / l;
    const Real e = std::exp(-a * r);
    // k = sf (1 + a r) e^{-a r}; dk/dx = -sf a^2 d e^{-a r}.
    return {sf * (1 + a * r) * e, -sf * a * a * d * e, sf * a * a * (1 - a * r) * e};
  }
  case braggedge::KernelKind::matern_5_2: {
    const Real a = std::sqrt(Real(5)) / l;
    const Real e = std::exp(-a * r);
    // k = sf (1 + a r + a^2 r^2 / 3) e^{-a r}.
    return {sf * (1 + a * r + a * a * r * r / 3) * e, -sf * a * a * d * (1 + a * r) / 3 * e,
            sf * a * a * (1 + a * r - a * a * r * r) / 3 * e};
  }
  }
  return {0, 0, 0};
}

struct Conditioned {
  Eigen::VectorXd mean_B, mean_g;
  Eigen::MatrixXd cov_B, cov_g;
};

inline Conditioned condition(const braggedge::GPEdgeProblem &p, const Eigen::VectorXd &grid) {
  const Eigen::Index n = p.size(), m = grid.size();
  const Real sf = p.kernel.sigma_f, l = p.kernel.l;
  // Latent order: f at measurements, f at grid, f' at grid.
  const Eigen::Index latent = n + 2 * m;
  VectorR loc(n + m);
  for (Eigen::Index i = 0; i < n; ++i) loc(i) = p.lambdas(i);
  for (Eigen::Index j = 0; j < m; ++j) loc(n + j) = grid(j);
  MatrixR K(latent, latent);
  for (Eigen::Index a = 0; a < latent; ++a) {
    for (Eigen::Index b = 0; b < latent; ++b) {
      const bool da = a >= n + m, db = b >= n + m;
      const Real xa = loc(da ? a - m : a), xb = loc(db ? b - m : b);
      const Blocks k = kernel_blocks(p.kernel.kind, sf, l, xa, xb);
      if (!da && !db) K(a, b) = k.k;
      else if (da && !db) K(a, b) = k.dk;
      else if (!da && db) K(a, b) = kernel_blocks(p.kernel.kind, sf, l, xb, xa).dk;
      else K(a, b) = k.ddk;
    }
  }
  // Joint over [y; f(grid); f'(grid)] with y = A f(lambda) + noise.
  MatrixR T = MatrixR::Zero(n + 2 * m, latent);
  for (Eigen::Index i = 0; i < n; ++i) T(i, i) = p.A(i);
  for (Eigen::Index j = 0; j < 2 * m; ++j) T(n + j, n + j) = 1;
  MatrixR S = T * K * T.transpose();
  for (Eigen::Index i = 0; i < n; ++i) {
    const Real s = Real(p.noise_std(i)) * Real(p.noise_scale);
    S(i, i) += s * s;
  }
  // Standard Gaussian conditioning of the z = [f(grid); f'(grid)] block on y.
  const MatrixR syy = S.topLeftCorner(n, n);
  const MatrixR szy = S.bottomLeftCorner(2 * m, n);
  const MatrixR szz = S.bottomRightCorner(2 * m, 2 * m);
  const auto lu = syy.fullPivLu();
  const VectorR y = p.y_bar.cast<Real>();
  const VectorR mean = n > 0 ? VectorR(szy * lu.solve(y)) : VectorR(VectorR::Zero(2 * m));
  const MatrixR cov = n > 0 ? MatrixR(szz - szy * lu.solve(MatrixR(szy.transpose()))) : szz;
  Conditioned out;
  out.mean_B = mean.head(m).cast<double>();
  out.mean_g = mean.tail(m).cast<double>();
  out.cov_B = cov.topLeftCorner(m, m).cast<double>();
  out.cov_g = cov.bottomRightCorner(m, m).cast<double>();
  return out;
}

/// Well-scaled random instance: n measurements and m grid points in [0, 3].
inline braggedge::GPEdgeProblem random_problem(braggedge::Rng &rng, braggedge::KernelKind kind,
                                               Eigen::Index n, Eigen::Index m,
                                               Eigen::VectorXd &grid) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  braggedge::GPEdgeProblem p;
  p.kernel = {kind, 0.5 + 1.5 * u(rng), 0.4 + 1.2 * u(rng)};
  p.lambdas.resize(n);
  p.y_bar.resize(n);
  p.A.resize(n);
  p.noise_std.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    p.lambdas(i) = 3.0 * u(rng);
    p.y_bar(i) = 2.0 * u(rng) - 1.0;
    p.A(i) = 0.2 + 0.8 * u(rng);
    p.noise_std(i) = 0.05 + 0.25 * u(rng);
  }
  p.noise_scale = 0.5 + u(rng);
  grid.resize(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    grid(j) = 3.0 * (static_cast<double>(j) + u(rng)) / static_cast<double>(m);
  }
  return p;
}

/// Largest absolute difference between the library posterior and the oracle.
inline double max_abs_difference(const braggedge::GPEdgePosterior &got, const Conditioned &want) {
  double d = 0.0;
  d = std::max(d, (got.mean_B - want.mean_B).cwiseAbs().maxCoeff());
  d = std::max(d, (got.mean_g - want.mean_g).cwiseAbs().maxCoeff());
  d = std::max(d, (got.cov_B - want.cov_B).cwiseAbs().maxCoeff());
  d = std::max(d, (got.cov_g - want.cov_g).cwiseAbs().maxCoeff());
  return d;
}

} // namespace oracle

#endif
