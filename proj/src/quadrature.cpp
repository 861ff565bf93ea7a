#include "irtmix/quadrature.hpp"

#include <cmath>
#include <stdexcept>

#include "irtmix/errors.hpp"

namespace irtmix {

namespace {

// Physicists' Gauss-Hermite nodes/weights (weight function exp(-x^2)) by Newton
// iteration on the recurrence; initial guesses per Numerical Recipes.
void gauss_hermite_physicists(int n, std::vector<double>& x, std::vector<double>& w) {
  constexpr double kEps = 1e-14;
  constexpr double kPim4 = 0.7511255444649425;  // pi^(-1/4)
  constexpr int kMaxIter = 60;

  x.assign(n, 0.0);
  w.assign(n, 0.0);
  const int m = (n + 1) / 2;
  double z = 0.0, pp = 0.0;
  for (int i = 0; i < m; ++i) {
    if (i == 0) {
      z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -1.0 / 6.0);
    } else if (i == 1) {
      z -= 1.14 * std::pow(n, 0.426) / z;
    } else if (i == 2) {
      z = 1.86 * z - 0.86 * x[0];
    } else if (i == 3) {
      z = 1.91 * z - 0.91 * x[1];
    } else {
      z = 2.0 * z - x[i - 2];
    }
    int iter = 0;
    for (; iter < kMaxIter; ++iter) {
      double p1 = kPim4;
      double p2 = 0.0;
      for (int j = 1; j <= n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = z * std::sqrt(2.0 / j) * p2 - std::sqrt((j - 1.0) / j) * p3;
      }
      pp = std::sqrt(2.0 * n) * p2;
      const double dz = p1 / pp;
      z -= dz;
      if (std::fabs(dz) <= kEps) break;
    }
    if (iter == kMaxIter) throw Error("gauss-hermite iteration failed to converge");
    x[i] = z;
    x[n - 1 - i] = -z;
    w[i] = 2.0 / (pp * pp);
    w[n - 1 - i] = w[i];
  }
  if (n % 2 == 1) x[n / 2] = 0.0;
}

}  // namespace

QuadratureRule QuadratureRule::gauss_hermite(int n, bool adaptive) {
  if (n < 1) throw SpecificationError("quadrature needs at least one node");
  QuadratureRule rule;
  rule.n_nodes = n;
  rule.adaptive = adaptive;

  std::vector<double> x, w;
  gauss_hermite_physicists(n, x, w);

  const double sqrt2 = std::sqrt(2.0);
  const double inv_sqrt_pi = 1.0 / std::sqrt(M_PI);
  rule.nodes.resize(n);
  rule.weights.resize(n);
  // descending physicists' nodes -> ascending probabilists' nodes
  for (int i = 0; i < n; ++i) {
    rule.nodes[i] = sqrt2 * x[n - 1 - i];
    rule.weights[i] = w[n - 1 - i] * inv_sqrt_pi;
  }
  return rule;
}

}  // namespace irtmix
