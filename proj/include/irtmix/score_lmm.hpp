#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "irtmix/bfgs.hpp"
#include "irtmix/model.hpp"

namespace irtmix {

/// Questionnaire scoring: mean of the observed item responses mapped to the
/// 0..100 scale. Missing items (coded -1) are excluded when at least half of
/// the items are present; otherwise the score is missing.
std::optional<double> eortc_score(std::span<const int> responses, int max_category);

struct ScoreSubject {
  std::string id;
  std::vector<double> times;   // visits with an available score
  std::vector<double> scores;  // aligned with times
  double group = 0.0;
};

struct ScoreSeries {
  std::vector<ScoreSubject> subjects;
  bool has_group = false;
  std::uint64_t fingerprint() const;
};

/// Per-(subject, visit) scores from a long-format dataset. When group_column is
/// non-empty, the subject's group value is read from that covariate.
ScoreSeries scores_from_dataset(const ModelSpec& spec, const Dataset& data,
                                const std::string& group_column = "");

enum class LmmModel { random_intercept, random_intercept_slope };

/// Gaussian linear mixed model on the scores, fitted by direct ML on the
/// marginal likelihood (same quasi-Newton machinery as the IRT estimator, so
/// BIC values are comparable across model classes).
struct LmmFit {
  LmmModel model = LmmModel::random_intercept;
  std::vector<std::string> beta_names;
  Eigen::VectorXd beta;
  double sigma0_sq = 0.0;
  double sigma1_sq = 0.0;
  double sigma_eps_sq = 0.0;
  double loglik = 0.0;
  double bic = 0.0;
  int n_free_params = 0;
  int n_subjects = 0;
  bool converged = false;
  int iterations = 0;
  std::uint64_t data_fingerprint = 0;
};

struct LmmOptions {
  OptimOptions optim;
  bool with_group = false;  // adds group and group:time fixed effects
  bool boundary_polish = true;
};

LmmFit fit_lmm(LmmModel model, const ScoreSeries& scores, const LmmOptions& options = {},
               const std::optional<Eigen::VectorXd>& init = std::nullopt);

/// Packed parameter order used by fit_lmm: beta..., log sd(intercept),
/// [log sd(slope),] log sd(residual). Exposed for warm starts.
int lmm_n_params(LmmModel model, bool with_group);

}  // namespace irtmix
