#include "irtmix/bfgs.hpp"

#include <cmath>

#include "irtmix/errors.hpp"

namespace irtmix {

namespace {

double relative_gradient(const Eigen::VectorXd& x, double f, const Eigen::VectorXd& g) {
  const double fscale = std::max(std::fabs(f), 1.0);
  double r = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i)
    r = std::max(r, std::fabs(g[i]) * std::max(std::fabs(x[i]), 1.0) / fscale);
  return r;
}

}  // namespace

OptimResult bfgs_minimize(const Objective& fn, const Eigen::VectorXd& x0,
                          const OptimOptions& opts) {
  const Eigen::Index n = x0.size();
  OptimResult res;
  res.x = x0;
  res.grad.resize(n);
  res.f = fn(res.x, &res.grad);
  res.n_evals = 1;
  if (!std::isfinite(res.f)) throw Error("objective is not finite at the starting point");

  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
  bool scaled = false;
  int stall_count = 0;
  constexpr double kArmijo = 1e-4;

  for (res.iterations = 0; res.iterations < opts.max_iterations; ++res.iterations) {
    res.rel_grad = relative_gradient(res.x, res.f, res.grad);
    if (res.rel_grad <= opts.rel_grad_tol) {
      res.converged = true;
      return res;
    }

    Eigen::VectorXd dir = -(H * res.grad);
    double slope = dir.dot(res.grad);
    if (!(slope < 0.0)) {  // not a descent direction: reset curvature estimate
      H.setIdentity();
      dir = -res.grad;
      slope = dir.dot(res.grad);
      if (!(slope < 0.0)) {
        res.converged = true;  // zero gradient
        return res;
      }
    }
    const double dir_norm = dir.norm();
    if (dir_norm > opts.max_step_norm) {
      dir *= opts.max_step_norm / dir_norm;
      slope = dir.dot(res.grad);
    }

    // backtracking with quadratic interpolation
    double t = 1.0;
    double f_trial = 0.0;
    Eigen::VectorXd x_trial;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      x_trial = res.x + t * dir;
      f_trial = fn(x_trial, nullptr);
      ++res.n_evals;
      if (std::isfinite(f_trial) && f_trial <= res.f + kArmijo * t * slope) {
        accepted = true;
        break;
      }
      double t_next = 0.5 * t;
      if (std::isfinite(f_trial)) {
        const double denom = 2.0 * (f_trial - res.f - t * slope);
        if (denom > 0.0) {
          const double t_quad = -slope * t * t / denom;
          if (t_quad > 0.05 * t && t_quad < 0.9 * t) t_next = t_quad;
        }
      }
      t = t_next;
    }
    if (!accepted) {
      // no representable progress along a descent direction: either we are at
      // the resolution limit of the objective, or the model is genuinely stuck
      res.rel_grad = relative_gradient(res.x, res.f, res.grad);
      res.converged = res.rel_grad <= 1e-3;
      return res;
    }

    Eigen::VectorXd grad_new(n);
    const double f_new = fn(x_trial, &grad_new);
    ++res.n_evals;

    const Eigen::VectorXd s = x_trial - res.x;
    const Eigen::VectorXd y = grad_new - res.grad;
    const double f_drop = res.f - f_new;

    res.x = x_trial;
    res.f = f_new;
    res.grad = grad_new;

    const double step_inf = s.lpNorm<Eigen::Infinity>();
    if (step_inf <= opts.step_tol * std::max(1.0, res.x.lpNorm<Eigen::Infinity>())) {
      res.converged = true;
      res.rel_grad = relative_gradient(res.x, res.f, res.grad);
      return res;
    }
    // flat-region stop: repeated negligible decrease with a modest gradient
    if (f_drop <= 1e-12 * std::max(1.0, std::fabs(res.f))) {
      if (++stall_count >= 3 && relative_gradient(res.x, res.f, res.grad) <= 1e-3) {
        res.converged = true;
        res.rel_grad = relative_gradient(res.x, res.f, res.grad);
        return res;
      }
    } else {
      stall_count = 0;
    }

    const double sy = s.dot(y);
    if (sy > 1e-10 * s.norm() * y.norm()) {
      if (!scaled) {
        H *= sy / y.dot(y);
        scaled = true;
      }
      const Eigen::VectorXd Hy = H * y;
      const double yHy = y.dot(Hy);
      // BFGS inverse update
      H += ((sy + yHy) / (sy * sy)) * (s * s.transpose());
      H -= (Hy * s.transpose() + s * Hy.transpose()) / sy;
    }
  }

  res.rel_grad = relative_gradient(res.x, res.f, res.grad);
  res.converged = res.rel_grad <= opts.rel_grad_tol;
  return res;
}

}  // namespace irtmix
