#include <braggedge/gp.hpp>

#include <algorithm>
#include <limits>
#include <sstream>

namespace braggedge {

std::string to_string(KernelKind kind) {
  switch (kind) {
  case KernelKind::squared_exponential: return "squared_exponential";
  case KernelKind::matern_3_2: return "matern_3_2";
  case KernelKind::matern_5_2: return "matern_5_2";
  }
  return "unknown";
}

KernelKind kernel_kind_from_string(const std::string &name) {
  if (name == "squared_exponential" || name == "se") {
    return KernelKind::squared_exponential;
  }
  if (name == "matern_3_2" || name == "matern32") {
    return KernelKind::matern_3_2;
  }
  if (name == "matern_5_2" || name == "matern52") {
    return KernelKind::matern_5_2;
  }
  fail(ErrorKind::invalid_argument, "unknown kernel kind '" + name + "'");
}

void Kernel::validate() const {
  require(std::isfinite(sigma_f) && sigma_f > 0.0, ErrorKind::invalid_argument,
          "kernel: sigma_f must be > 0");
  require(std::isfinite(l) && l > 0.0, ErrorKind::invalid_argument, "kernel: l must be > 0");
}

double kernel_dlog_length(const Kernel &kernel, double x, double xp) {
  const double d = x - xp;
  switch (kernel.kind) {
  case KernelKind::squared_exponential: {
    const double q = d * d / (kernel.l * kernel.l);
    return kernel.sigma_f * q * std::exp(-0.5 * q);
  }
  case KernelKind::matern_3_2: {
    const double s = std::sqrt(3.0) * std::abs(d) / kernel.l;
    return kernel.sigma_f * s * s * std::exp(-s);
  }
  case KernelKind::matern_5_2: {
    const double s = std::sqrt(5.0) * std::abs(d) / kernel.l;
    return kernel.sigma_f * s * s / 3.0 * (1.0 + s) * std::exp(-s);
  }
  }
  fail(ErrorKind::invalid_argument, "kernel_dlog_length: unknown kernel kind");
}

Eigen::MatrixXd kernel_matrix(const Kernel &kernel, const Eigen::VectorXd &x,
                              const Eigen::VectorXd &xp, KernelDerivative derivative) {
  kernel.validate();
  Eigen::MatrixXd k(x.size(), xp.size());
  for (Eigen::Index j = 0; j < xp.size(); ++j) {
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      k(i, j) = kernel_eval(kernel, x(i), xp(j), derivative);
    }
  }
  return k;
}

JitteredCholesky factorize_with_jitter(const Eigen::MatrixXd &matrix, const std::string &what) {
  JitteredCholesky out;
  out.llt.compute(matrix);
  if (out.llt.info() == Eigen::Success) {
    return out;
  }
  const double scale = matrix.diagonal().cwiseAbs().mean();
  if (scale > 0.0 && std::isfinite(scale)) {
    for (double rung = 1e-12; rung <= 1e-6 * (1.0 + 1e-9); rung *= 10.0) {
      out.jitter = rung * scale;
      Eigen::MatrixXd shifted = matrix;
      shifted.diagonal().array() += out.jitter;
      out.llt.compute(shifted);
      if (out.llt.info() == Eigen::Success) {
        return out;
      }
    }
  }
  std::ostringstream msg;
  msg << what << ": Cholesky failed after maximum jitter";
  if (matrix.allFinite()) {
    const Eigen::VectorXd ev =
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(matrix, Eigen::EigenvaluesOnly)
            .eigenvalues();
    const double lo = ev.cwiseAbs().minCoeff();
    msg << " (condition estimate " << (lo > 0.0 ? ev.cwiseAbs().maxCoeff() / lo
                                                : std::numeric_limits<double>::infinity())
        << ", smallest eigenvalue " << ev.minCoeff() << ")";
  } else {
    msg << " (matrix has non-finite entries)";
  }
  fail(ErrorKind::conditioning_failure, msg.str());
}

void GPEdgeProblem::validate() const {
  kernel.validate();
  const Eigen::Index n = lambdas.size();
  require(y_bar.size() == n && A.size() == n && noise_std.size() == n,
          ErrorKind::invalid_argument, "GP problem: arrays differ in length");
  require(lambdas.allFinite() && y_bar.allFinite() && A.allFinite(),
          ErrorKind::invalid_argument, "GP problem: non-finite entries");
  require(n == 0 || (noise_std.array() > 0.0).all(), ErrorKind::invalid_argument,
          "GP problem: noise_std must be > 0");
  require(std::isfinite(noise_scale) && noise_scale > 0.0, ErrorKind::invalid_argument,
          "GP problem: noise_scale must be > 0");
}

namespace {

Eigen::VectorXd noise_variance(const GPEdgeProblem &p) {
  return (p.noise_scale * p.noise_std).array().square().matrix();
}

Eigen::MatrixXd measurement_gram(const GPEdgeProblem &p) {
  Eigen::MatrixXd k = kernel_matrix(p.kernel, p.lambdas, p.lambdas);
  k = p.A.asDiagonal() * k * p.A.asDiagonal();
  k.diagonal() += noise_variance(p);
  return k;
}

void symmetrize_and_clip(Eigen::MatrixXd &cov) {
  cov = 0.5 * (cov + cov.transpose()).eval();
  for (Eigen::Index i = 0; i < cov.rows(); ++i) {
    cov(i, i) = std::max(cov(i, i), 0.0);
  }
}

} // namespace

GPConditioner::GPConditioner(GPEdgeProblem problem) : problem_(std::move(problem)) {
  problem_.validate();
  if (problem_.size() > 0) {
    factor_ = factorize_with_jitter(measurement_gram(problem_), "gp_condition");
    alpha_ = factor_.llt.solve(problem_.y_bar);
  }
}

GPEdgePosterior GPConditioner::posterior(const Eigen::VectorXd &grid) const {
  const Kernel &k = problem_.kernel;
  GPEdgePosterior out;
  out.grid = grid;
  out.cov_B = kernel_matrix(k, grid, grid);
  out.cov_g = kernel_matrix(k, grid, grid, KernelDerivative::d2_dxdx);
  if (problem_.size() == 0) {
    out.mean_B = Eigen::VectorXd::Zero(grid.size());
    out.mean_g = Eigen::VectorXd::Zero(grid.size());
    return out;
  }
  const auto &L = factor_.llt.matrixL();
  // Cross covariances between the measurements (rows) and B, g on the grid.
  const Eigen::MatrixXd cross_B = problem_.A.asDiagonal() * kernel_matrix(k, problem_.lambdas, grid);
  const Eigen::MatrixXd cross_g =
      problem_.A.asDiagonal() *
      kernel_matrix(k, grid, problem_.lambdas, KernelDerivative::d_dx).transpose();

  out.mean_B = cross_B.transpose() * alpha_;
  out.mean_g = cross_g.transpose() * alpha_;
  const Eigen::MatrixXd v_B = L.solve(cross_B);
  const Eigen::MatrixXd v_g = L.solve(cross_g);
  out.cov_B.noalias() -= v_B.transpose() * v_B;
  out.cov_g.noalias() -= v_g.transpose() * v_g;
  symmetrize_and_clip(out.cov_B);
  symmetrize_and_clip(out.cov_g);
  return out;
}

GPEdgeMarginals GPConditioner::marginals(const Eigen::VectorXd &grid) const {
  const Kernel &k = problem_.kernel;
  GPEdgeMarginals out;
  out.grid = grid;
  out.var_B = Eigen::VectorXd::Constant(grid.size(), kernel_eval(k, 0.0, 0.0));
  out.var_g =
      Eigen::VectorXd::Constant(grid.size(), kernel_eval(k, 0.0, 0.0, KernelDerivative::d2_dxdx));
  if (problem_.size() == 0) {
    out.mean_B = Eigen::VectorXd::Zero(grid.size());
    out.mean_g = Eigen::VectorXd::Zero(grid.size());
    return out;
  }
  const auto &L = factor_.llt.matrixL();
  const Eigen::MatrixXd cross_B = problem_.A.asDiagonal() * kernel_matrix(k, problem_.lambdas, grid);
  const Eigen::MatrixXd cross_g =
      problem_.A.asDiagonal() *
      kernel_matrix(k, grid, problem_.lambdas, KernelDerivative::d_dx).transpose();
  out.mean_B = cross_B.transpose() * alpha_;
  out.mean_g = cross_g.transpose() * alpha_;
  out.var_B -= L.solve(cross_B).colwise().squaredNorm().transpose();
  out.var_g -= L.solve(cross_g).colwise().squaredNorm().transpose();
  out.var_B = out.var_B.cwiseMax(0.0);
  out.var_g = out.var_g.cwiseMax(0.0);
  return out;
}

GPEdgePosterior gp_condition(const GPEdgeProblem &problem, const Eigen::VectorXd &grid) {
  return GPConditioner(problem).posterior(grid);
}

LikelihoodValue log_marginal_likelihood(const GPEdgeProblem &problem, bool with_noise_gradient) {
  problem.validate();
  const Eigen::Index n = problem.size();
  require(n >= 1, ErrorKind::insufficient_data, "log_marginal_likelihood: no measurements");

  const Eigen::MatrixXd k = kernel_matrix(problem.kernel, problem.lambdas, problem.lambdas);
  Eigen::MatrixXd ky = problem.A.asDiagonal() * k * problem.A.asDiagonal();
  const Eigen::MatrixXd dk_sigma = ky;
  ky.diagonal() += noise_variance(problem);
  const JitteredCholesky factor = factorize_with_jitter(ky, "log_marginal_likelihood");

  const Eigen::VectorXd alpha = factor.llt.solve(problem.y_bar);
  const double logdet = 2.0 * factor.llt.matrixLLT().diagonal().array().log().sum();

  LikelihoodValue out;
  out.value = -0.5 * (logdet + problem.y_bar.dot(alpha));

  Eigen::MatrixXd dk_length(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      dk_length(i, j) = problem.A(i) * problem.A(j) *
                        kernel_dlog_length(problem.kernel, problem.lambdas(i), problem.lambdas(j));
    }
  }
  // W = alpha alpha^T - K_y^-1; each gradient entry is 0.5 tr(W dK).
  Eigen::MatrixXd w = factor.llt.solve(Eigen::MatrixXd::Identity(n, n));
  w = alpha * alpha.transpose() - w;

  out.gradient.resize(with_noise_gradient ? 3 : 2);
  out.gradient(0) = 0.5 * w.cwiseProduct(dk_sigma).sum();
  out.gradient(1) = 0.5 * w.cwiseProduct(dk_length).sum();
  if (with_noise_gradient) {
    out.gradient(2) = w.diagonal().dot(noise_variance(problem));
  }
  return out;
}

namespace {

double data_variance(const GPEdgeProblem &p) {
  Eigen::VectorXd b(p.size());
  Eigen::Index m = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (std::abs(p.A(i)) > 0.0) {
      b(m++) = p.y_bar(i) / p.A(i);
    }
  }
  if (m < 2) {
    return 1.0;
  }
  const Eigen::VectorXd v = b.head(m);
  const double var = (v.array() - v.mean()).square().sum() / static_cast<double>(m - 1);
  return std::max(var, 1e-12);
}

} // namespace

HyperparameterResult optimize_hyperparameters(const GPEdgeProblem &problem,
                                              const std::vector<KernelKind> &candidates,
                                              const HyperparameterOptions &options) {
  problem.validate();
  require(!candidates.empty(), ErrorKind::invalid_argument,
          "optimize_hyperparameters: no kernel candidates");
  require(problem.size() >= 2, ErrorKind::insufficient_data,
          "optimize_hyperparameters: need at least 2 measurements");
  require(options.starts >= 1, ErrorKind::invalid_argument,
          "optimize_hyperparameters: starts must be >= 1");

  const double width = problem.lambdas.maxCoeff() - problem.lambdas.minCoeff();
  const double pitch = width / static_cast<double>(problem.size() - 1);
  require(width > 0.0, ErrorKind::invalid_argument,
          "optimize_hyperparameters: measurements span no wavelength range");
  const double var = data_variance(problem);

  // Start ranges and the feasible box, all in log space.
  const double l_lo = std::log(std::min(options.min_length_pitches * pitch, width));
  const double l_hi = std::log(width);
  const double f_lo = std::log(1e-2 * var);
  const double f_hi = std::log(1e1 * var);
  const double box_l[2] = {std::log(0.5 * pitch), std::log(1e2 * width)};
  const double box_f[2] = {f_lo - 8.0 * std::log(10.0), f_hi + 8.0 * std::log(10.0)};
  const double box_s[2] = {std::log(1e-3), std::log(1e3)};

  const int dims = options.optimize_noise_scale ? 3 : 2;
  HyperparameterResult out;
  bool have_best = false;

  for (KernelKind kind : candidates) {
    std::vector<Eigen::VectorXd> starts;
    if (problem.kernel.kind == kind) {
      Eigen::VectorXd x0(dims);
      x0(0) = std::log(problem.kernel.sigma_f);
      x0(1) = std::log(problem.kernel.l);
      if (dims == 3) {
        x0(2) = std::log(problem.noise_scale);
      }
      starts.push_back(x0);
    }
    for (int s = 0; s < options.starts; ++s) {
      const double u_l = (s + 0.5) / options.starts;
      double u_f = (s + 0.5) * 0.6180339887498949;
      u_f -= std::floor(u_f);
      Eigen::VectorXd x0(dims);
      x0(0) = f_lo + u_f * (f_hi - f_lo);
      x0(1) = l_lo + u_l * (l_hi - l_lo);
      if (dims == 3) {
        x0(2) = 0.0;
      }
      starts.push_back(x0);
    }

    GPEdgeProblem trial = problem;
    trial.kernel.kind = kind;
    auto objective = [&](const Eigen::VectorXd &x, Eigen::VectorXd *gradient) {
      const bool inside = x(0) >= box_f[0] && x(0) <= box_f[1] && x(1) >= box_l[0] &&
                          x(1) <= box_l[1] && (dims < 3 || (x(2) >= box_s[0] && x(2) <= box_s[1]));
      if (!inside) {
        return std::numeric_limits<double>::quiet_NaN();
      }
      trial.kernel.sigma_f = std::exp(x(0));
      trial.kernel.l = std::exp(x(1));
      if (dims == 3) {
        trial.noise_scale = std::exp(x(2));
      }
      try {
        const LikelihoodValue lml = log_marginal_likelihood(trial, dims == 3);
        if (gradient) {
          *gradient = -lml.gradient;
        }
        return -lml.value;
      } catch (const Error &) {
        return std::numeric_limits<double>::quiet_NaN();
      }
    };

    for (std::size_t s = 0; s < starts.size(); ++s) {
      StartDiagnostic diag;
      diag.kind = kind;
      diag.start = static_cast<int>(s);
      diag.initial = Kernel{kind, std::exp(starts[s](0)), std::exp(starts[s](1))};
      try {
        const BfgsResult r = minimize_bfgs(objective, starts[s], options.bfgs);
        diag.final = Kernel{kind, std::exp(r.x(0)), std::exp(r.x(1))};
        diag.noise_scale = dims == 3 ? std::exp(r.x(2)) : problem.noise_scale;
        diag.objective = -r.value;
        diag.converged = r.converged;
        diag.iterations = r.iterations;
        diag.message = r.reason;
        diag.ok = std::isfinite(diag.objective);
      } catch (const Error &e) {
        diag.message = e.what();
      }
      if (diag.ok && (!have_best || diag.objective > out.objective)) {
        have_best = true;
        out.kernel = diag.final;
        out.noise_scale = diag.noise_scale;
        out.objective = diag.objective;
      }
      out.starts.push_back(std::move(diag));
    }
  }

  if (!have_best) {
    std::ostringstream msg;
    msg << "optimize_hyperparameters: all starts failed";
    for (const auto &d : out.starts) {
      msg << "; " << to_string(d.kind) << "#" << d.start << ": " << d.message;
    }
    fail(ErrorKind::optimization_failure, msg.str());
  }
  return out;
}

} // namespace braggedge
