#include "irtmix/family.hpp"

#include <algorithm>
#include <cmath>

#include "irtmix/errors.hpp"

namespace irtmix {

namespace {

constexpr double kOrderTol = 1e-10;

void check_eta(std::span<const double> eta) {
  if (eta.empty()) throw SpecificationError("at least one linear predictor is required");
  for (double e : eta)
    if (!std::isfinite(e)) throw DomainError("linear predictor must be finite");
}

// Cumulative monotonicity: F strictly increasing, so F(eta_m) decreasing in m
// is equivalent to eta_m decreasing. Validated on the eta scale.
void check_cumulative_order(std::span<const double> eta) {
  for (std::size_t m = 1; m < eta.size(); ++m) {
    if (!(eta[m] < eta[m - 1] - kOrderTol))
      throw OrderingError("cumulative model requires strictly decreasing predictors; "
                          "violated at threshold " + std::to_string(m + 1),
                          static_cast<int>(m + 1));
  }
}

CategoryDistribution cumulative_probs(CdfKind kind, std::span<const double> eta) {
  check_cumulative_order(eta);
  const std::size_t M = eta.size();
  CategoryDistribution probs(M + 1);
  double upper = 1.0;  // Pr(Y >= 0)
  for (std::size_t m = 0; m < M; ++m) {
    const double Fm = cdf_eval(kind, eta[m]);
    probs[m] = upper - Fm;
    upper = Fm;
  }
  probs[M] = upper;
  return probs;
}

// Log-space evaluation: eta magnitudes up to ~30 arise in optimizer line searches.
CategoryDistribution adjacent_probs(CdfKind kind, std::span<const double> eta) {
  const std::size_t M = eta.size();
  std::vector<double> logratio(M + 1);
  logratio[0] = 0.0;
  for (std::size_t m = 0; m < M; ++m)
    logratio[m + 1] = logratio[m] + log_cdf_eval(kind, eta[m]) - log_ccdf_eval(kind, eta[m]);

  const double top = *std::max_element(logratio.begin(), logratio.end());
  double sum = 0.0;
  for (double l : logratio) sum += std::exp(l - top);
  const double lse = top + std::log(sum);

  CategoryDistribution probs(M + 1);
  for (std::size_t m = 0; m <= M; ++m) probs[m] = std::exp(logratio[m] - lse);
  return probs;
}

CategoryDistribution sequential_probs(CdfKind kind, std::span<const double> eta) {
  const std::size_t M = eta.size();
  CategoryDistribution probs(M + 1);
  double logcont = 0.0;  // log prod_{k<=m} F(eta_k)
  for (std::size_t m = 0; m < M; ++m) {
    probs[m] = std::exp(logcont + log_ccdf_eval(kind, eta[m]));
    logcont += log_cdf_eval(kind, eta[m]);
  }
  probs[M] = std::exp(logcont);
  return probs;
}

}  // namespace

CategoryDistribution category_probs(RatioFamily family, CdfKind kind,
                                    std::span<const double> eta) {
  check_eta(eta);
  switch (family) {
    case RatioFamily::cumulative: return cumulative_probs(kind, eta);
    case RatioFamily::adjacent: return adjacent_probs(kind, eta);
    case RatioFamily::sequential: return sequential_probs(kind, eta);
  }
  throw SpecificationError("unknown ratio family");
}

std::vector<double> reverse_categories(RatioFamily family, CdfKind kind,
                                       std::span<const double> eta) {
  check_eta(eta);
  if (family == RatioFamily::sequential)
    throw UnsupportedTransformError("sequential models are not reversible");
  if (!is_symmetric(kind))
    throw UnsupportedTransformError("category reversal requires a symmetric CdF; " +
                                    cdf_name(kind) + " is asymmetric");
  const std::size_t M = eta.size();
  std::vector<double> reversed(M);
  for (std::size_t m = 0; m < M; ++m) reversed[m] = -eta[M - 1 - m];
  return reversed;
}

std::vector<double> merge_categories(RatioFamily family, std::span<const double> eta, int m) {
  check_eta(eta);
  if (family != RatioFamily::cumulative)
    throw UnsupportedTransformError("category merging is a cumulative-family transform");
  const int M = static_cast<int>(eta.size());
  if (m < 1 || m > M)
    throw CategoryError("merge index " + std::to_string(m) + " outside 1.." + std::to_string(M));
  std::vector<double> merged;
  merged.reserve(M - 1);
  for (int k = 0; k < M; ++k)
    if (k != m - 1) merged.push_back(eta[k]);
  return merged;
}

std::string family_name(RatioFamily family) {
  switch (family) {
    case RatioFamily::adjacent: return "adjacent";
    case RatioFamily::cumulative: return "cumulative";
    case RatioFamily::sequential: return "sequential";
  }
  return "?";
}

RatioFamily parse_family(const std::string& name) {
  if (name == "adjacent") return RatioFamily::adjacent;
  if (name == "cumulative") return RatioFamily::cumulative;
  if (name == "sequential") return RatioFamily::sequential;
  throw ParseError("unknown family name: " + name);
}

}  // namespace irtmix
