#pragma once

#include <Eigen/Dense>
#include <functional>

namespace irtmix {

struct OptimOptions {
  int max_iterations = 500;
  double rel_grad_tol = 1e-5;
  double step_tol = 1e-8;
  double max_step_norm = 10.0;
};

struct OptimResult {
  Eigen::VectorXd x;
  double f = 0.0;
  Eigen::VectorXd grad;
  int iterations = 0;
  int n_evals = 0;
  bool converged = false;
  double rel_grad = 0.0;
};

/// f(x), filling *grad when non-null. Non-finite values are treated as "reject
/// this trial point" by the line search.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

/// BFGS with backtracking line search on an unconstrained parameter vector.
/// Converged when the relative gradient max_i |g_i| max(|x_i|,1) / max(|f|,1)
/// drops below rel_grad_tol, or when an accepted step stalls below step_tol.
OptimResult bfgs_minimize(const Objective& fn, const Eigen::VectorXd& x0,
                          const OptimOptions& opts = {});

}  // namespace irtmix
