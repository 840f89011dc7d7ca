#ifndef BRAGGEDGE_OPTIM_HPP
#define BRAGGEDGE_OPTIM_HPP

#include <Eigen/Dense>

#include <functional>
#include <string>

namespace braggedge {

/// Objective returning f(x) and, when `gradient` is non-null, writing df/dx.
/// A non-finite value marks x as infeasible.
using GradientObjective = std::function<double(const Eigen::VectorXd &x, Eigen::VectorXd *gradient)>;

struct BfgsOptions {
  int max_iterations = 100;
  double gradient_tolerance = 1e-6;
  double value_tolerance = 1e-12; // relative change between iterations
  double step_tolerance = 1e-10;
  double armijo = 1e-4;
};

struct BfgsResult {
  Eigen::VectorXd x;
  double value = 0.0;
  Eigen::VectorXd gradient;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::string reason;
};

/// Quasi-Newton minimization with an inverse-Hessian BFGS update and a
/// backtracking Armijo line search. Updates violating the curvature
/// condition are skipped.
BfgsResult minimize_bfgs(const GradientObjective &objective, const Eigen::VectorXd &x0,
                         const BfgsOptions &options = {});

} // namespace braggedge

#endif
