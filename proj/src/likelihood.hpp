#pragma once

// Internal marginal-likelihood evaluator: adaptive Gauss-Hermite integration of
// the per-subject conditional likelihood over the random effects, with analytic
// gradients on the packed parameter scale. Not part of the public headers.

#include <Eigen/Dense>
#include <vector>

#include "irtmix/model.hpp"
#include "irtmix/quadrature.hpp"

namespace irtmix::detail {

struct EvalCounters {
  long clamps = 0;
  long adaptive_failures = 0;
};

struct ObsFlat {
  int visit = 0;
  int item = 0;
  int y = 0;
};

struct SubjectCache {
  double t0 = 0.0;
  std::vector<double> s;  // t_v - t0 per visit
  Eigen::MatrixXd x;      // visits x n_beta fixed-effect design
  std::vector<ObsFlat> obs;
};

class MarginalEvaluator {
public:
  MarginalEvaluator(const ModelSpec& spec, const Dataset& data, const QuadratureRule& quad,
                    int n_threads);

  /// Total marginal log-likelihood; fills the packed-scale gradient when grad is
  /// non-null. Subject contributions are reduced in subject order regardless of
  /// thread count. Counters (clamped probabilities, adaptive fallbacks) are
  /// accumulated the same way.
  double eval(const ParameterVector& packed, Eigen::VectorXd* grad, EvalCounters* counters);

  int n_params() const { return layout_.total(); }
  int n_subjects() const { return static_cast<int>(subjects_.size()); }

  /// Clears per-subject posterior-mode warm starts (used between unrelated
  /// evaluations to keep results independent of history).
  void reset_modes();

private:
  struct Workspace {
    std::vector<double> xi0, xi1, w0, w1, prior;        // per node
    std::vector<double> theta;                          // visits*K
    std::vector<double> h, tot, expw;                   // per node
    std::vector<double> eta_a, eta_b, fa, fb, pi, lp;   // per node scratch
    std::vector<double> lmat, pimat;                    // (M+1)*K scratch (adjacent)
    std::vector<double> cache_fa, cache_fb;             // obs*K gradient caches
    std::vector<double> cache_pi;                       // obs*(M+1)*K (adjacent)
    std::vector<double> cache_dtheta, cache_ddelta;     // generic path caches
    std::vector<double> gtheta;                         // per visit accumulator
    Eigen::VectorXd gnat;                               // natural-scale gradient
  };

  struct EvalContext {
    UnpackedParams up;
    std::vector<std::vector<double>> eff;   // effective thresholds per item
    std::vector<std::vector<double>> dpre;  // adjacent-logistic prefix sums per item
    double l00 = 1.0, l10 = 0.0, l11 = 1.0; // floored cholesky of Sigma
    bool floored0 = false, floored1 = false; // gradient is zero past the floor
    double logdetL = 0.0;
    int d = 1;
  };

  double subject_loglik(int i, const EvalContext& ctx, Workspace& ws, bool want_grad,
                        EvalCounters& ctr);

  // conditional log-likelihood of one subject at a fixed random effect, with
  // first/second derivatives in the theta direction (mode finding)
  void cond_scalar(int i, const EvalContext& ctx, double xi0, double xi1, double& value,
                   double& d1_0, double& d1_1, double& h00, double& h01, double& h11) const;

  bool find_mode(int i, const EvalContext& ctx, double& m0, double& m1, double& a00, double& a10,
                 double& a11);

  void fold_gradient(const EvalContext& ctx, const Eigen::VectorXd& gnat,
                     Eigen::VectorXd& gpacked) const;

  const ModelSpec spec_;
  ParameterLayout layout_;
  QuadratureRule quad_;
  int n_threads_ = 1;
  int K_ = 0;  // total node count (n_nodes^d)
  std::vector<double> lw_;      // log tensor weight + |b|^2/2 + (d/2) log 2pi
  std::vector<double> node_a_;  // first-dimension node per tensor index
  std::vector<double> node_b_;  // second-dimension node per tensor index
  std::vector<SubjectCache> subjects_;
  std::vector<std::array<double, 2>> mode_cache_;
  std::vector<Workspace> workspaces_;
  int n_beta_ = 0;
  int max_visits_ = 0;
  int max_obs_ = 0;
  int max_m_ = 0;
};

}  // namespace irtmix::detail
