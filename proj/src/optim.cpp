#include <braggedge/error.hpp>
#include <braggedge/optim.hpp>

#include <cmath>

namespace braggedge {

BfgsResult minimize_bfgs(const GradientObjective &objective, const Eigen::VectorXd &x0,
                         const BfgsOptions &options) {
  const Eigen::Index n = x0.size();
  BfgsResult out;
  out.x = x0;
  out.gradient = Eigen::VectorXd::Zero(n);
  out.value = objective(out.x, &out.gradient);
  out.evaluations = 1;
  require(std::isfinite(out.value) && out.gradient.allFinite(),
          ErrorKind::optimization_failure, "bfgs: objective not finite at the start point");

  Eigen::MatrixXd inverse_hessian = Eigen::MatrixXd::Identity(n, n);
  bool scaled = false;
  Eigen::VectorXd trial_gradient(n);

  for (out.iterations = 0; out.iterations < options.max_iterations; ++out.iterations) {
    if (out.gradient.lpNorm<Eigen::Infinity>() < options.gradient_tolerance) {
      out.converged = true;
      out.reason = "gradient";
      return out;
    }

    Eigen::VectorXd direction = -inverse_hessian * out.gradient;
    double slope = direction.dot(out.gradient);
    if (slope >= 0.0) {
      inverse_hessian.setIdentity();
      direction = -out.gradient;
      slope = direction.dot(out.gradient);
    }
    // Keep the first step within a unit box in log-hyperparameter scale.
    const double longest = direction.lpNorm<Eigen::Infinity>();
    double step = longest > 1.0 ? 1.0 / longest : 1.0;

    double trial_value = 0.0;
    Eigen::VectorXd trial;
    bool accepted = false;
    for (int k = 0; k < 40; ++k) {
      trial = out.x + step * direction;
      trial_value = objective(trial, &trial_gradient);
      ++out.evaluations;
      if (std::isfinite(trial_value) && trial_gradient.allFinite() &&
          trial_value <= out.value + options.armijo * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      out.converged = out.gradient.lpNorm<Eigen::Infinity>() < 1e3 * options.gradient_tolerance;
      out.reason = "line search";
      return out;
    }

    const Eigen::VectorXd s = trial - out.x;
    const Eigen::VectorXd y = trial_gradient - out.gradient;
    const double previous = out.value;
    out.x = trial;
    out.value = trial_value;
    out.gradient = trial_gradient;

    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (!scaled) {
        inverse_hessian *= sy / y.squaredNorm();
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd left = Eigen::MatrixXd::Identity(n, n) - rho * s * y.transpose();
      inverse_hessian = left * inverse_hessian * left.transpose() + rho * s * s.transpose();
    }

    if (std::abs(previous - out.value) <=
        options.value_tolerance * std::max({1.0, std::abs(previous), std::abs(out.value)})) {
      out.converged = true;
      out.reason = "value";
      return out;
    }
    if (s.lpNorm<Eigen::Infinity>() < options.step_tolerance) {
      out.converged = true;
      out.reason = "step";
      return out;
    }
  }
  out.converged = out.gradient.lpNorm<Eigen::Infinity>() < options.gradient_tolerance;
  out.reason = "iterations";
  return out;
}

} // namespace braggedge
