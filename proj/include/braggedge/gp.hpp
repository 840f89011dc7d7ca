#ifndef BRAGGEDGE_GP_HPP
#define BRAGGEDGE_GP_HPP

// Gaussian-process regression of an edge shape B observed through a per-point
// linear map: y_bar_i = A_i B(lambda_i) + noise. Posteriors are available for
// B and for its gradient g = dB/dlambda.

#include <braggedge/error.hpp>
#include <braggedge/optim.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

namespace braggedge {

enum class KernelKind { squared_exponential, matern_3_2, matern_5_2 };

std::string to_string(KernelKind kind);
KernelKind kernel_kind_from_string(const std::string &name);

/// Covariance with k(x, x) = sigma_f.
struct Kernel {
  KernelKind kind = KernelKind::matern_3_2;
  double sigma_f = 1.0;
  double l = 0.05; // Angstrom

  void validate() const;
};

/// Which covariance block: cov(B, B), cov(g, B) (derivative in the first
/// argument) or cov(g, g).
enum class KernelDerivative { none, d_dx, d2_dxdx };

template <typename Scalar>
Scalar kernel_eval(const Kernel &kernel, Scalar x, Scalar xp,
                   KernelDerivative derivative = KernelDerivative::none) {
  using std::abs;
  using std::exp;
  using std::sqrt;
  const Scalar d = x - xp;
  const Scalar r = abs(d);
  const Scalar l = Scalar(kernel.l);
  const Scalar sf = Scalar(kernel.sigma_f);
  switch (kernel.kind) {
  case KernelKind::squared_exponential: {
    const Scalar e = exp(-d * d / (Scalar(2) * l * l));
    switch (derivative) {
    case KernelDerivative::none: return sf * e;
    case KernelDerivative::d_dx: return -sf * d / (l * l) * e;
    case KernelDerivative::d2_dxdx: return sf * (Scalar(1) / (l * l) - d * d / (l * l * l * l)) * e;
    }
    break;
  }
  case KernelKind::matern_3_2: {
    const Scalar s = sqrt(Scalar(3)) * r / l;
    const Scalar e = exp(-s);
    switch (derivative) {
    case KernelDerivative::none: return sf * (Scalar(1) + s) * e;
    case KernelDerivative::d_dx: return -sf * Scalar(3) * d / (l * l) * e;
    case KernelDerivative::d2_dxdx: return Scalar(3) * sf / (l * l) * (Scalar(1) - s) * e;
    }
    break;
  }
  case KernelKind::matern_5_2: {
    const Scalar s = sqrt(Scalar(5)) * r / l;
    const Scalar e = exp(-s);
    switch (derivative) {
    case KernelDerivative::none: return sf * (Scalar(1) + s + s * s / Scalar(3)) * e;
    case KernelDerivative::d_dx:
      return -sf * Scalar(5) * d / (Scalar(3) * l * l) * (Scalar(1) + s) * e;
    case KernelDerivative::d2_dxdx:
      return sf * Scalar(5) / (Scalar(3) * l * l) * (Scalar(1) + s - s * s) * e;
    }
    break;
  }
  }
  fail(ErrorKind::invalid_argument, "kernel_eval: unknown kernel kind");
}

/// d k(x, x') / d log l for the value block.
double kernel_dlog_length(const Kernel &kernel, double x, double xp);

/// Block [k(x_i, x'_j)] for the requested derivative.
Eigen::MatrixXd kernel_matrix(const Kernel &kernel, const Eigen::VectorXd &x,
                              const Eigen::VectorXd &xp,
                              KernelDerivative derivative = KernelDerivative::none);

/// Cholesky factor of a symmetric matrix. On failure a ladder of diagonal
/// jitters 1e-12 ... 1e-6, relative to the mean diagonal, is tried.
struct JitteredCholesky {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter = 0.0; // absolute value added to the diagonal
};

/// Throws conditioning_failure with a condition estimate when every rung fails.
JitteredCholesky factorize_with_jitter(const Eigen::MatrixXd &matrix, const std::string &what);

struct GPEdgeProblem {
  Eigen::VectorXd lambdas;
  Eigen::VectorXd y_bar;
  Eigen::VectorXd A;
  Eigen::VectorXd noise_std;
  Kernel kernel;
  double noise_scale = 1.0; // multiplies noise_std

  void validate() const;
  Eigen::Index size() const { return lambdas.size(); }
};

struct GPEdgePosterior {
  Eigen::VectorXd grid;
  Eigen::VectorXd mean_B;
  Eigen::MatrixXd cov_B;
  Eigen::VectorXd mean_g;
  Eigen::MatrixXd cov_g;
};

/// Means and pointwise variances only.
struct GPEdgeMarginals {
  Eigen::VectorXd grid;
  Eigen::VectorXd mean_B;
  Eigen::VectorXd var_B;
  Eigen::VectorXd mean_g;
  Eigen::VectorXd var_g;
};

/// Factorizes K_y = A K A + diag(noise^2) once; predictions reuse it.
class GPConditioner {
public:
  explicit GPConditioner(GPEdgeProblem problem);

  GPEdgePosterior posterior(const Eigen::VectorXd &grid) const;
  GPEdgeMarginals marginals(const Eigen::VectorXd &grid) const;

  const GPEdgeProblem &problem() const { return problem_; }
  double jitter() const { return factor_.jitter; }

private:
  GPEdgeProblem problem_;
  JitteredCholesky factor_;
  Eigen::VectorXd alpha_;
};

GPEdgePosterior gp_condition(const GPEdgeProblem &problem, const Eigen::VectorXd &grid);

struct LikelihoodValue {
  double value = 0.0;
  Eigen::VectorXd gradient; // d/d log sigma_f, d/d log l[, d/d log noise_scale]
};

/// -0.5 [log det K_y + y_bar^T K_y^-1 y_bar] and its gradient.
LikelihoodValue log_marginal_likelihood(const GPEdgeProblem &problem,
                                        bool with_noise_gradient = false);

struct HyperparameterOptions {
  int starts = 5;
  bool optimize_noise_scale = false;
  double min_length_pitches = 3.0; // lower end of the start range for l
  BfgsOptions bfgs;
};

struct StartDiagnostic {
  KernelKind kind = KernelKind::matern_3_2;
  int start = 0;
  Kernel initial;
  Kernel final;
  double noise_scale = 1.0;
  double objective = 0.0;
  bool ok = false;
  bool converged = false;
  int iterations = 0;
  std::string message;
};

struct HyperparameterResult {
  Kernel kernel;
  double noise_scale = 1.0;
  double objective = 0.0;
  std::vector<StartDiagnostic> starts;
};

/// BFGS over log hyperparameters per candidate kind with deterministic
/// multi-starts; the highest marginal likelihood wins, ties to the earlier
/// (kind, start).
HyperparameterResult optimize_hyperparameters(const GPEdgeProblem &problem,
                                              const std::vector<KernelKind> &candidates,
                                              const HyperparameterOptions &options = {});

} // namespace braggedge

#endif
