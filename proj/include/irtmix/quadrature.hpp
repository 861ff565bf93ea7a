#pragma once

#include <vector>

namespace irtmix {

/// Gauss-Hermite rule in probabilists' form: sum_k weights[k] * g(nodes[k])
/// approximates the integral of g against the standard normal density. Weights
/// are positive and sum to one.
struct QuadratureRule {
  int n_nodes = 7;
  bool adaptive = true;  // per-subject mode/curvature recentring
  std::vector<double> nodes;
  std::vector<double> weights;

  static QuadratureRule gauss_hermite(int n, bool adaptive = true);
};

}  // namespace irtmix
