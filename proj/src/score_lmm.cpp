#include "irtmix/score_lmm.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "irtmix/errors.hpp"
#include "irtmix/estimate.hpp"

namespace irtmix {

namespace {
constexpr double kSdFloor = 1e-6;  // variances below ~1e-12 count as "at the bound"
constexpr double kLog2Pi = 1.8378770664093454836;
}  // namespace

std::optional<double> eortc_score(std::span<const int> responses, int max_category) {
  if (max_category < 1) throw SpecificationError("max category must be at least 1");
  const int J = static_cast<int>(responses.size());
  if (J == 0) throw SpecificationError("scoring requires at least one item");
  int present = 0;
  double sum = 0.0;
  for (int y : responses) {
    if (y < 0) continue;
    if (y > max_category)
      throw CategoryError("response " + std::to_string(y) + " above category bound " +
                          std::to_string(max_category));
    ++present;
    sum += y;
  }
  if (2 * present < J) return std::nullopt;  // half rule
  return (sum / present) * (100.0 / max_category);
}

std::uint64_t ScoreSeries::fingerprint() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::uint64_t v) {
    h ^= v;
    h *= 1099511628211ULL;
  };
  auto mix_double = [&](double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, sizeof(bits));
    mix(bits);
  };
  for (const ScoreSubject& s : subjects) {
    for (char c : s.id) mix(static_cast<std::uint64_t>(c));
    for (double t : s.times) mix_double(t);
    for (double v : s.scores) mix_double(v);
    mix_double(s.group);
  }
  return h;
}

ScoreSeries scores_from_dataset(const ModelSpec& spec, const Dataset& data,
                                const std::string& group_column) {
  validate_dataset(spec, data);
  int group_idx = -1;
  if (!group_column.empty()) {
    const auto it =
        std::find(data.covariate_columns.begin(), data.covariate_columns.end(), group_column);
    if (it == data.covariate_columns.end())
      throw SpecificationError("unknown group column: " + group_column);
    group_idx = static_cast<int>(it - data.covariate_columns.begin());
  }
  const int J = spec.n_items();
  const int M = spec.items.front().n_categories - 1;
  for (const ItemInfo& item : spec.items)
    if (item.n_categories - 1 != M)
      throw SpecificationError("scoring requires a common number of categories per item");

  ScoreSeries out;
  out.has_group = group_idx >= 0;
  for (const SubjectData& s : data.subjects) {
    ScoreSubject row;
    row.id = s.id;
    if (group_idx >= 0 && !s.visits.empty()) row.group = s.visits.front().covariates[group_idx];
    for (const VisitData& v : s.visits) {
      std::vector<int> responses(J, -1);
      for (auto [j, y] : v.obs) responses[j] = y;
      const std::optional<double> score = eortc_score(responses, M);
      if (score.has_value()) {
        row.times.push_back(v.time);
        row.scores.push_back(*score);
      }
    }
    if (!row.times.empty()) out.subjects.push_back(std::move(row));
  }
  return out;
}

int lmm_n_params(LmmModel model, bool /*with_group*/) {
  // optimizer parameters: variance block only (fixed effects are profiled)
  return model == LmmModel::random_intercept ? 2 : 3;
}

namespace {

struct LmmData {
  // subjects grouped by identical within-subject time layouts so the marginal
  // covariance factorization is shared
  struct Block {
    Eigen::VectorXd s;  // t_v - t0
    std::vector<int> members;
  };
  std::vector<Block> blocks;
  std::vector<Eigen::VectorXd> y;  // per subject
  std::vector<double> group;
  int n_beta = 0;
  bool with_group = false;
  long n_points = 0;
};

LmmData build_lmm_data(const ScoreSeries& scores, bool with_group) {
  if (scores.subjects.empty()) throw DataError("no scored subjects");
  if (with_group && !scores.has_group) throw SpecificationError("scores carry no group values");
  LmmData d;
  d.with_group = with_group;
  d.n_beta = with_group ? 4 : 2;
  const int n = static_cast<int>(scores.subjects.size());
  d.y.resize(n);
  d.group.resize(n);
  for (int i = 0; i < n; ++i) {
    const ScoreSubject& s = scores.subjects[i];
    const double t0 = s.times.front();
    Eigen::VectorXd sv(s.times.size());
    for (std::size_t v = 0; v < s.times.size(); ++v) sv[v] = s.times[v] - t0;
    d.y[i] = Eigen::Map<const Eigen::VectorXd>(s.scores.data(), s.scores.size());
    d.group[i] = s.group;
    d.n_points += static_cast<long>(s.scores.size());
    bool placed = false;
    for (LmmData::Block& b : d.blocks) {
      if (b.s.size() == sv.size() && (b.s - sv).lpNorm<Eigen::Infinity>() == 0.0) {
        b.members.push_back(i);
        placed = true;
        break;
      }
    }
    if (!placed) d.blocks.push_back({sv, {i}});
  }
  return d;
}

// X row layout: [1, s, g, g*s]
Eigen::MatrixXd design(const LmmData& d, const LmmData::Block& b, int subject) {
  const int m = static_cast<int>(b.s.size());
  Eigen::MatrixXd X(m, d.n_beta);
  for (int v = 0; v < m; ++v) {
    X(v, 0) = 1.0;
    X(v, 1) = b.s[v];
    if (d.with_group) {
      X(v, 2) = d.group[subject];
      X(v, 3) = d.group[subject] * b.s[v];
    }
  }
  return X;
}

struct ProfiledEval {
  double neg_loglik = std::numeric_limits<double>::infinity();
  Eigen::VectorXd beta;
};

// Profiled ML: for fixed variance parameters, the fixed effects have the exact
// GLS solution; the quasi-Newton optimizer only sees the variance block, and
// its gradient is exact by the envelope argument (the beta-gradient vanishes
// at the GLS solution).
ProfiledEval profiled_eval(const LmmData& d, bool slope, const Eigen::VectorXd& x,
                           Eigen::VectorXd* grad) {
  const int nb = d.n_beta;
  const double sd0 = std::max(std::exp(x[0]), kSdFloor);
  const double sd1 = slope ? std::max(std::exp(x[1]), kSdFloor) : 0.0;
  const double sde = std::max(std::exp(x[slope ? 2 : 1]), kSdFloor);
  const double v0 = sd0 * sd0, v1 = sd1 * sd1, ve = sde * sde;
  // below the floor the objective no longer depends on the parameter
  const double dv0 = std::exp(x[0]) > kSdFloor ? 2.0 * v0 : 0.0;
  const double dv1 = slope && std::exp(x[1]) > kSdFloor ? 2.0 * v1 : 0.0;
  const double dve = std::exp(x[slope ? 2 : 1]) > kSdFloor ? 2.0 * ve : 0.0;

  ProfiledEval out;
  std::vector<Eigen::LLT<Eigen::MatrixXd>> llts;
  std::vector<double> logdets;
  llts.reserve(d.blocks.size());

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(nb, nb);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nb);
  for (const LmmData::Block& b : d.blocks) {
    const int m = static_cast<int>(b.s.size());
    Eigen::MatrixXd V = Eigen::MatrixXd::Constant(m, m, v0);
    if (slope) V += v1 * (b.s * b.s.transpose());
    V.diagonal().array() += ve;
    llts.emplace_back(V);
    if (llts.back().info() != Eigen::Success) return out;
    double logdet = 0.0;
    for (int v = 0; v < m; ++v) logdet += 2.0 * std::log(llts.back().matrixL()(v, v));
    logdets.push_back(logdet);
    for (int i : b.members) {
      const Eigen::MatrixXd X = design(d, b, i);
      const Eigen::MatrixXd VX = llts.back().solve(X);
      A += X.transpose() * VX;
      rhs += VX.transpose() * d.y[i];
    }
  }
  const Eigen::LDLT<Eigen::MatrixXd> Aldlt(A);
  if (Aldlt.info() != Eigen::Success) return out;
  const Eigen::VectorXd beta = Aldlt.solve(rhs);

  double ll = 0.0;
  Eigen::VectorXd g = Eigen::VectorXd::Zero(slope ? 3 : 2);
  std::size_t bi = 0;
  for (const LmmData::Block& b : d.blocks) {
    const int m = static_cast<int>(b.s.size());
    const Eigen::LLT<Eigen::MatrixXd>& llt = llts[bi];
    double tr_j = 0.0, tr_ss = 0.0, tr_i = 0.0;
    if (grad != nullptr) {
      const Eigen::VectorXd vi1 = llt.solve(Eigen::VectorXd::Ones(m));
      tr_j = vi1.sum();
      const Eigen::VectorXd vis = llt.solve(b.s);
      tr_ss = b.s.dot(vis);
      tr_i = llt.solve(Eigen::MatrixXd::Identity(m, m)).trace();
    }
    for (int i : b.members) {
      const Eigen::MatrixXd X = design(d, b, i);
      const Eigen::VectorXd r = d.y[i] - X * beta;
      const Eigen::VectorXd q = llt.solve(r);
      ll += -0.5 * (m * kLog2Pi + logdets[bi] + r.dot(q));
      if (grad != nullptr) {
        const double q1 = q.sum();
        const double qs = b.s.dot(q);
        g[0] += 0.5 * (q1 * q1 - tr_j) * dv0;
        if (slope) g[1] += 0.5 * (qs * qs - tr_ss) * dv1;
        g[slope ? 2 : 1] += 0.5 * (q.dot(q) - tr_i) * dve;
      }
    }
    ++bi;
  }
  if (grad != nullptr) *grad = -g;
  out.neg_loglik = -ll;
  out.beta = beta;
  return out;
}

}  // namespace

LmmFit fit_lmm(LmmModel model, const ScoreSeries& scores, const LmmOptions& options,
               const std::optional<Eigen::VectorXd>& init) {
  const LmmData d = build_lmm_data(scores, options.with_group);
  const bool slope = model == LmmModel::random_intercept_slope;
  const int nb = d.n_beta;
  const int nv = slope ? 3 : 2;
  const int n = static_cast<int>(d.y.size());

  // singular-design guard (e.g. all visit times equal)
  Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(nb, nb);
  Eigen::VectorXd xty = Eigen::VectorXd::Zero(nb);
  for (const LmmData::Block& b : d.blocks)
    for (int i : b.members) {
      const Eigen::MatrixXd X = design(d, b, i);
      xtx += X.transpose() * X;
      xty += X.transpose() * d.y[i];
    }
  {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(xtx);
    if (es.eigenvalues().minCoeff() <= 1e-10 * std::max(1.0, es.eigenvalues().maxCoeff()))
      throw DataError("singular fixed-effect design (no usable time variation)");
  }

  Objective objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
    return profiled_eval(d, slope, x, grad).neg_loglik;
  };

  Eigen::VectorXd x0(nv);
  if (init.has_value()) {
    if (init->size() != nv) throw SpecificationError("lmm init has the wrong length");
    x0 = *init;
  } else {
    const Eigen::VectorXd beta0 = xtx.ldlt().solve(xty);
    double rss = 0.0;
    double s_sq = 0.0;
    for (const LmmData::Block& b : d.blocks)
      for (int i : b.members) {
        const Eigen::MatrixXd X = design(d, b, i);
        rss += (d.y[i] - X * beta0).squaredNorm();
        s_sq += b.s.squaredNorm();
      }
    const double resvar = std::max(rss / std::max<long>(1, d.n_points - nb), 1e-8);
    x0[0] = 0.5 * std::log(0.45 * resvar);
    if (slope) x0[1] = 0.5 * std::log(0.05 * resvar / std::max(1.0, s_sq / d.n_points));
    x0[slope ? 2 : 1] = 0.5 * std::log(0.5 * resvar);
  }

  OptimResult best = bfgs_minimize(objective, x0, options.optim);
  if (options.boundary_polish) {
    std::vector<int> var_idx = {0};
    if (slope) var_idx.push_back(1);
    for (int idx : var_idx) {
      if (best.x[idx] >= -3.0 || best.x[idx] <= -9.0) continue;
      Eigen::VectorXd probe = best.x;
      probe[idx] = -10.0;
      const OptimResult alt = bfgs_minimize(objective, probe, options.optim);
      if (alt.f <= best.f) best = alt;
    }
  }

  const ProfiledEval final_eval = profiled_eval(d, slope, best.x, nullptr);

  LmmFit out;
  out.model = model;
  out.beta_names = {"intercept", "time"};
  if (options.with_group) {
    out.beta_names.push_back("group");
    out.beta_names.push_back("group:time");
  }
  out.beta = final_eval.beta;
  const double sd0 = std::exp(best.x[0]);
  out.sigma0_sq = sd0 * sd0;
  if (slope) {
    const double sd1 = std::exp(best.x[1]);
    out.sigma1_sq = sd1 * sd1;
  }
  const double sde = std::exp(best.x[slope ? 2 : 1]);
  out.sigma_eps_sq = sde * sde;
  out.loglik = -best.f;
  out.n_free_params = nb + nv;
  out.n_subjects = n;
  out.bic = bic_value(out.loglik, out.n_free_params, n);
  out.converged = best.converged;
  out.iterations = best.iterations;
  out.data_fingerprint = scores.fingerprint();
  if (!best.converged) throw Error("lmm fit did not converge");
  return out;
}

}  // namespace irtmix
