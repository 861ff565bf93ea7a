#include "likelihood.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "irtmix/errors.hpp"
#include "irtmix/kernels.hpp"
#include "irtmix/link.hpp"
#include "parallel.hpp"

namespace irtmix::detail {

namespace {

constexpr double kProbFloor = 1e-15;
constexpr double kSdFloor = 1e-10;
constexpr double kLog2Pi = 1.8378770664093454836;
constexpr int kModeMaxIter = 25;
constexpr double kModeTol = 1e-8;

inline double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// f'/f for each CdF
inline double dlogpdf(CdfKind kind, double eta, double F) {
  switch (kind) {
    case CdfKind::logistic: return 1.0 - 2.0 * F;
    case CdfKind::gaussian: return -eta;
    case CdfKind::gumbel_max: return std::expm1(-eta);
    case CdfKind::gumbel_min: return -std::expm1(eta);
  }
  return 0.0;
}

// Conditional log-probability of category y for one item, with optional
// derivatives in the theta direction (d1, d2) and with respect to the item's
// effective thresholds (ddelta, length M). Underflow-clamped probabilities are
// counted through `clamps` when provided.
double lp_scalar(RatioFamily fam, CdfKind kind, const double* delta, int M, double theta, int y,
                 double* d1, double* d2, double* ddelta, long* clamps) {
  if (ddelta != nullptr) std::fill(ddelta, ddelta + M, 0.0);
  switch (fam) {
    case RatioFamily::cumulative: {
      double Fa = 1.0, fa = 0.0, fpa = 0.0;
      double Fb = 0.0, fb = 0.0, fpb = 0.0;
      if (y >= 1) {
        const double ea = theta - delta[y - 1];
        Fa = cdf_eval(kind, ea);
        fa = pdf_eval(kind, ea);
        if (d2 != nullptr) fpa = pdf_deriv_eval(kind, ea);
      }
      if (y <= M - 1) {
        const double eb = theta - delta[y];
        Fb = cdf_eval(kind, eb);
        fb = pdf_eval(kind, eb);
        if (d2 != nullptr) fpb = pdf_deriv_eval(kind, eb);
      }
      double pi = Fa - Fb;
      if (pi < kProbFloor) {
        pi = kProbFloor;
        if (clamps != nullptr) ++(*clamps);
      }
      const double s1 = (fa - fb) / pi;
      if (d1 != nullptr) *d1 = s1;
      if (d2 != nullptr) *d2 = (fpa - fpb) / pi - s1 * s1;
      if (ddelta != nullptr) {
        if (y >= 1) ddelta[y - 1] = -fa / pi;
        if (y <= M - 1) ddelta[y] = fb / pi;
      }
      return std::log(pi);
    }
    case RatioFamily::adjacent: {
      // work in the log-ratio space; for the logistic CdF the slopes g_m are 1
      std::array<double, 33> L, G, Gp, piv;
      L[0] = 0.0;
      G[0] = 0.0;
      Gp[0] = 0.0;
      for (int m = 1; m <= M; ++m) {
        const double eta = theta - delta[m - 1];
        double c, g, gp = 0.0;
        if (kind == CdfKind::logistic) {
          c = eta;
          g = 1.0;
        } else {
          const double F = cdf_eval(kind, eta);
          const double lf = std::log(pdf_eval(kind, eta));
          const double lF = log_cdf_eval(kind, eta);
          const double lcF = log_ccdf_eval(kind, eta);
          c = lF - lcF;
          g = std::exp(lf - lF - lcF);
          gp = g * (dlogpdf(kind, eta, F) - g * (1.0 - 2.0 * F));
        }
        L[m] = L[m - 1] + c;
        G[m] = G[m - 1] + g;
        Gp[m] = Gp[m - 1] + gp;
      }
      double mx = L[0];
      for (int m = 1; m <= M; ++m) mx = std::max(mx, L[m]);
      double S = 0.0;
      for (int m = 0; m <= M; ++m) {
        piv[m] = std::exp(L[m] - mx);
        S += piv[m];
      }
      const double lse = mx + std::log(S);
      double Ebar = 0.0, E2 = 0.0, Epbar = 0.0;
      for (int m = 0; m <= M; ++m) {
        piv[m] /= S;
        Ebar += piv[m] * G[m];
        if (d2 != nullptr) {
          E2 += piv[m] * G[m] * G[m];
          Epbar += piv[m] * Gp[m];
        }
      }
      if (d1 != nullptr) *d1 = G[y] - Ebar;
      if (d2 != nullptr) *d2 = Gp[y] - (E2 - Ebar * Ebar + Epbar);
      if (ddelta != nullptr) {
        double tail = 0.0;
        for (int m = M; m >= 1; --m) {
          tail += piv[m];  // Pr(Y >= m)
          const double eta = theta - delta[m - 1];
          double g = 1.0;
          if (kind != CdfKind::logistic) {
            const double lf = std::log(pdf_eval(kind, eta));
            g = std::exp(lf - log_cdf_eval(kind, eta) - log_ccdf_eval(kind, eta));
          }
          ddelta[m - 1] = g * (tail - (m <= y ? 1.0 : 0.0));
        }
      }
      return L[y] - lse;
    }
    case RatioFamily::sequential: {
      double lp = 0.0, s1 = 0.0, s2 = 0.0;
      for (int k = 1; k <= y; ++k) {
        const double eta = theta - delta[k - 1];
        const double lF = log_cdf_eval(kind, eta);
        lp += lF;
        const double r = std::exp(std::log(pdf_eval(kind, eta)) - lF);
        s1 += r;
        if (d2 != nullptr) {
          const double F = cdf_eval(kind, eta);
          s2 += r * (dlogpdf(kind, eta, F) - r);
        }
        if (ddelta != nullptr) ddelta[k - 1] = -r;
      }
      if (y < M) {
        const double eta = theta - delta[y];
        const double lcF = log_ccdf_eval(kind, eta);
        lp += lcF;
        const double q = std::exp(std::log(pdf_eval(kind, eta)) - lcF);
        s1 -= q;
        if (d2 != nullptr) {
          const double F = cdf_eval(kind, eta);
          s2 -= q * (dlogpdf(kind, eta, F) + q);
        }
        if (ddelta != nullptr) ddelta[y] = q;
      }
      if (d1 != nullptr) *d1 = s1;
      if (d2 != nullptr) *d2 = s2;
      return lp;
    }
  }
  throw SpecificationError("unknown ratio family");
}

}  // namespace

// ---------------------------------------------------------------------------
// construction
// ---------------------------------------------------------------------------

MarginalEvaluator::MarginalEvaluator(const ModelSpec& spec, const Dataset& data,
                                     const QuadratureRule& quad, int n_threads)
    : spec_(spec), quad_(quad), n_threads_(std::max(1, n_threads)) {
  spec_.validate();
  validate_dataset(spec_, data);
  layout_ = layout_of(spec_);
  n_beta_ = layout_.n_beta;

  // resolve fixed-effect covariate columns
  std::vector<int> col(spec_.fixed_effects.size(), -1);
  for (std::size_t p = 0; p < spec_.fixed_effects.size(); ++p) {
    const std::string& name = spec_.fixed_effects[p].column;
    if (name.empty()) continue;
    const auto it =
        std::find(data.covariate_columns.begin(), data.covariate_columns.end(), name);
    if (it == data.covariate_columns.end())
      throw SpecificationError("fixed effect references unknown covariate column: " + name);
    col[p] = static_cast<int>(it - data.covariate_columns.begin());
  }

  const int d = spec_.n_random();
  const int n = quad_.n_nodes;
  K_ = d == 1 ? n : n * n;
  lw_.resize(K_);
  node_a_.resize(K_);
  node_b_.assign(K_, 0.0);
  if (d == 1) {
    for (int k = 0; k < n; ++k) {
      node_a_[k] = quad_.nodes[k];
      lw_[k] = std::log(quad_.weights[k]) + 0.5 * node_a_[k] * node_a_[k] + 0.5 * kLog2Pi;
    }
  } else {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const int k = i * n + j;
        node_a_[k] = quad_.nodes[i];
        node_b_[k] = quad_.nodes[j];
        lw_[k] = std::log(quad_.weights[i]) + std::log(quad_.weights[j]) +
                 0.5 * (node_a_[k] * node_a_[k] + node_b_[k] * node_b_[k]) + kLog2Pi;
      }
  }

  subjects_.reserve(data.subjects.size());
  for (const SubjectData& s : data.subjects) {
    SubjectCache c;
    c.t0 = s.baseline_time();
    const int V = static_cast<int>(s.visits.size());
    c.s.resize(V);
    c.x.resize(V, n_beta_);
    for (int v = 0; v < V; ++v) {
      const VisitData& visit = s.visits[v];
      c.s[v] = visit.time - c.t0;
      for (int p = 0; p < n_beta_; ++p) {
        const FixedEffect& fe = spec_.fixed_effects[p];
        double x = col[p] < 0 ? 1.0 : visit.covariates[col[p]];
        if (fe.with_time) x *= c.s[v];
        c.x(v, p) = x;
      }
      for (auto [j, y] : visit.obs) c.obs.push_back({v, j, y});
    }
    max_visits_ = std::max(max_visits_, V);
    max_obs_ = std::max(max_obs_, static_cast<int>(c.obs.size()));
    subjects_.push_back(std::move(c));
  }
  max_m_ = spec_.max_threshold_count();
  mode_cache_.assign(subjects_.size(), {0.0, 0.0});

  const int n_nat = n_beta_ + [&] {
    int t = 0;
    for (const ItemInfo& item : spec_.items) t += item.n_categories - 1;
    return t;
  }() + layout_.n_cov;

  workspaces_.resize(std::max(1, n_threads_));
  for (Workspace& ws : workspaces_) {
    ws.xi0.resize(K_);
    ws.xi1.resize(K_);
    ws.w0.resize(K_);
    ws.w1.resize(K_);
    ws.prior.resize(K_);
    ws.theta.resize(static_cast<std::size_t>(std::max(1, max_visits_)) * K_);
    ws.h.resize(K_);
    ws.tot.resize(K_);
    ws.expw.resize(K_);
    ws.eta_a.resize(K_);
    ws.eta_b.resize(K_);
    ws.fa.resize(K_);
    ws.fb.resize(K_);
    ws.pi.resize(K_);
    ws.lp.resize(K_);
    ws.lmat.resize(static_cast<std::size_t>(max_m_ + 1) * K_);
    ws.pimat.resize(static_cast<std::size_t>(max_m_ + 1) * K_);
    ws.cache_fa.resize(static_cast<std::size_t>(std::max(1, max_obs_)) * K_);
    ws.cache_fb.resize(static_cast<std::size_t>(std::max(1, max_obs_)) * K_);
    ws.cache_pi.resize(static_cast<std::size_t>(std::max(1, max_obs_)) * (max_m_ + 1) * K_);
    ws.cache_dtheta.resize(static_cast<std::size_t>(std::max(1, max_obs_)) * K_);
    ws.cache_ddelta.resize(static_cast<std::size_t>(std::max(1, max_obs_)) * max_m_ * K_);
    ws.gtheta.resize(std::max(1, max_visits_));
    ws.gnat.resize(n_nat);
  }
}

void MarginalEvaluator::reset_modes() {
  std::fill(mode_cache_.begin(), mode_cache_.end(), std::array<double, 2>{0.0, 0.0});
}

// ---------------------------------------------------------------------------
// scalar conditional evaluation (mode finding)
// ---------------------------------------------------------------------------

void MarginalEvaluator::cond_scalar(int i, const EvalContext& ctx, double xi0, double xi1,
                                    double& value, double& d1_0, double& d1_1, double& h00,
                                    double& h01, double& h11) const {
  const SubjectCache& c = subjects_[i];
  value = 0.0;
  d1_0 = d1_1 = h00 = h01 = h11 = 0.0;
  double base = 0.0;
  int cur_visit = -1;
  double theta = 0.0, sv = 0.0;
  for (const ObsFlat& o : c.obs) {
    if (o.visit != cur_visit) {
      cur_visit = o.visit;
      base = 0.0;
      for (int p = 0; p < n_beta_; ++p) base += c.x(cur_visit, p) * ctx.up.beta[p];
      sv = c.s[cur_visit];
      theta = base + xi0 + (ctx.d == 2 ? sv * xi1 : 0.0);
    }
    const std::vector<double>& eff = ctx.eff[o.item];
    const int M = static_cast<int>(eff.size());
    double d1 = 0.0, d2 = 0.0;
    value += lp_scalar(spec_.family, spec_.kind, eff.data(), M, theta, o.y, &d1, &d2, nullptr,
                       nullptr);
    d1_0 += d1;
    h00 += d2;
    if (ctx.d == 2) {
      d1_1 += d1 * sv;
      h01 += d2 * sv;
      h11 += d2 * sv * sv;
    }
  }
}

bool MarginalEvaluator::find_mode(int i, const EvalContext& ctx, double& m0, double& m1,
                                  double& a00, double& a10, double& a11) {
  // prior precision
  const double i00 = 1.0 / (ctx.l00 * ctx.l00) +
                     (ctx.d == 2 ? (ctx.l10 * ctx.l10) / (ctx.l00 * ctx.l00 * ctx.l11 * ctx.l11)
                                 : 0.0);
  const double i01 = ctx.d == 2 ? -ctx.l10 / (ctx.l00 * ctx.l11 * ctx.l11) : 0.0;
  const double i11 = ctx.d == 2 ? 1.0 / (ctx.l11 * ctx.l11) : 0.0;

  double x0 = mode_cache_[i][0];
  double x1 = ctx.d == 2 ? mode_cache_[i][1] : 0.0;

  auto objective = [&](double z0, double z1, double& g0, double& g1, double& H00, double& H01,
                       double& H11) {
    double v, c0, c1, ch00, ch01, ch11;
    cond_scalar(i, ctx, z0, z1, v, c0, c1, ch00, ch01, ch11);
    g0 = c0 - (i00 * z0 + i01 * z1);
    g1 = ctx.d == 2 ? c1 - (i01 * z0 + i11 * z1) : 0.0;
    H00 = ch00 - i00;
    H01 = ch01 - i01;
    H11 = ctx.d == 2 ? ch11 - i11 : -1.0;
    return v - 0.5 * (i00 * z0 * z0 + 2.0 * i01 * z0 * z1 + i11 * z1 * z1);
  };

  double g0, g1, H00, H01, H11;
  double f = objective(x0, x1, g0, g1, H00, H01, H11);
  bool ok = false;
  for (int it = 0; it < kModeMaxIter; ++it) {
    if (std::max(std::fabs(g0), std::fabs(g1)) <= kModeTol) {
      ok = true;
      break;
    }
    // Newton step on the concave objective: solve (-H) step = g
    double s0, s1 = 0.0;
    if (ctx.d == 1) {
      if (!(H00 < 0.0)) return false;
      s0 = -g0 / H00;
    } else {
      const double det = H00 * H11 - H01 * H01;
      if (!(det > 0.0) || !(H00 < 0.0)) return false;
      s0 = -(H11 * g0 - H01 * g1) / det;
      s1 = -(H00 * g1 - H01 * g0) / det;
    }
    double t = 1.0;
    bool stepped = false;
    for (int half = 0; half < 12; ++half) {
      double ng0, ng1, nH00, nH01, nH11;
      const double nf = objective(x0 + t * s0, x1 + t * s1, ng0, ng1, nH00, nH01, nH11);
      if (std::isfinite(nf) && nf >= f - 1e-13 * std::fabs(f)) {
        x0 += t * s0;
        x1 += t * s1;
        f = nf;
        g0 = ng0;
        g1 = ng1;
        H00 = nH00;
        H01 = nH01;
        H11 = nH11;
        stepped = true;
        break;
      }
      t *= 0.5;
    }
    if (!stepped) break;
  }
  if (!ok && std::max(std::fabs(g0), std::fabs(g1)) > 1e-4) return false;

  m0 = x0;
  m1 = x1;
  mode_cache_[i][0] = x0;
  mode_cache_[i][1] = x1;

  // A = chol((-H)^{-1})
  if (ctx.d == 1) {
    if (!(H00 < 0.0)) return false;
    a00 = 1.0 / std::sqrt(-H00);
    a10 = 0.0;
    a11 = 0.0;
    return true;
  }
  const double p = -H00, q = -H01, r = -H11;
  const double det = p * r - q * q;
  if (!(p > 0.0) || !(det > 0.0)) return false;
  a00 = std::sqrt(r / det);
  a10 = -q / det / a00;
  const double t11 = p / det - a10 * a10;
  if (!(t11 > 0.0)) return false;
  a11 = std::sqrt(t11);
  return true;
}

// ---------------------------------------------------------------------------
// node pass
// ---------------------------------------------------------------------------

double MarginalEvaluator::subject_loglik(int i, const EvalContext& ctx, Workspace& ws,
                                         bool want_grad, EvalCounters& ctr) {
  const SubjectCache& c = subjects_[i];
  const kern::Ops& k = kern::ops();
  const int K = K_;
  const int d = ctx.d;

  double m0 = 0.0, m1 = 0.0, a00 = ctx.l00, a10 = ctx.l10, a11 = ctx.l11;
  if (quad_.adaptive) {
    if (!find_mode(i, ctx, m0, m1, a00, a10, a11)) {
      ++ctr.adaptive_failures;
      m0 = m1 = 0.0;
      a00 = ctx.l00;
      a10 = ctx.l10;
      a11 = ctx.l11;
    }
  }
  const double logdetA = d == 1 ? std::log(a00) : std::log(a00) + std::log(a11);

  // node positions and prior density
  for (int t = 0; t < K; ++t) ws.xi0[t] = m0 + a00 * node_a_[t];
  if (d == 2)
    for (int t = 0; t < K; ++t) ws.xi1[t] = m1 + a10 * node_a_[t] + a11 * node_b_[t];
  const double prior_const = -0.5 * d * kLog2Pi - ctx.logdetL;
  for (int t = 0; t < K; ++t) {
    const double w0 = ws.xi0[t] / ctx.l00;
    ws.w0[t] = w0;
    double ss = w0 * w0;
    if (d == 2) {
      const double w1 = (ws.xi1[t] - ctx.l10 * w0) / ctx.l11;
      ws.w1[t] = w1;
      ss += w1 * w1;
    }
    ws.h[t] = prior_const - 0.5 * ss;
  }

  // latent trait per visit
  const int V = static_cast<int>(c.s.size());
  for (int v = 0; v < V; ++v) {
    double base = 0.0;
    for (int p = 0; p < n_beta_; ++p) base += c.x(v, p) * ctx.up.beta[p];
    double* theta = ws.theta.data() + static_cast<std::size_t>(v) * K;
    if (d == 2)
      k.shift_scale_add_n(base, ws.xi0.data(), c.s[v], ws.xi1.data(), theta, K);
    else
      k.shift_n(base, ws.xi0.data(), theta, K);
  }

  const bool fast_cum =
      spec_.family == RatioFamily::cumulative && spec_.kind == CdfKind::logistic;
  const bool fast_adj =
      spec_.family == RatioFamily::adjacent && spec_.kind == CdfKind::logistic;

  for (std::size_t o = 0; o < c.obs.size(); ++o) {
    const ObsFlat& ob = c.obs[o];
    const double* theta = ws.theta.data() + static_cast<std::size_t>(ob.visit) * K;
    const std::vector<double>& eff = ctx.eff[ob.item];
    const int M = static_cast<int>(eff.size());
    const int y = ob.y;

    if (fast_cum) {
      double* Fa = ws.cache_fa.data() + o * K;
      double* Fb = ws.cache_fb.data() + o * K;
      if (y >= 1) {
        const double da = eff[y - 1];
        for (int t = 0; t < K; ++t) ws.eta_a[t] = theta[t] - da;
        k.logistic_n(ws.eta_a.data(), Fa, K);
      } else {
        std::fill(Fa, Fa + K, 1.0);
      }
      if (y <= M - 1) {
        const double db = eff[y];
        for (int t = 0; t < K; ++t) ws.eta_b[t] = theta[t] - db;
        k.logistic_n(ws.eta_b.data(), Fb, K);
      } else {
        std::fill(Fb, Fb + K, 0.0);
      }
      for (int t = 0; t < K; ++t) {
        double pi = Fa[t] - Fb[t];
        if (pi < kProbFloor) {
          pi = kProbFloor;
          ++ctr.clamps;
        }
        ws.pi[t] = pi;
      }
      k.log_n(ws.pi.data(), ws.lp.data(), K);
      for (int t = 0; t < K; ++t) ws.h[t] += ws.lp[t];
    } else if (fast_adj) {
      // L_m(theta) = m*theta - prefix(delta, m)
      const std::vector<double>& pre = ctx.dpre[ob.item];
      double* lmat = ws.lmat.data();
      for (int m = 0; m <= M; ++m) {
        double* row = lmat + static_cast<std::size_t>(m) * K;
        const double dm = pre[m];
        const double mm = static_cast<double>(m);
        for (int t = 0; t < K; ++t) row[t] = mm * theta[t] - dm;
      }
      // column-wise logsumexp
      double* pim = want_grad ? ws.cache_pi.data() + o * (max_m_ + 1) * K : ws.pimat.data();
      for (int t = 0; t < K; ++t) {
        double mx = lmat[t];
        for (int m = 1; m <= M; ++m) mx = std::max(mx, lmat[m * K + t]);
        ws.eta_a[t] = mx;
      }
      for (int m = 0; m <= M; ++m) {
        const double* row = lmat + static_cast<std::size_t>(m) * K;
        double* dst = ws.pimat.data() + static_cast<std::size_t>(m) * K;
        for (int t = 0; t < K; ++t) dst[t] = row[t] - ws.eta_a[t];
      }
      k.exp_n(ws.pimat.data(), ws.pimat.data(), static_cast<std::size_t>(M + 1) * K);
      for (int t = 0; t < K; ++t) {
        double S = 0.0;
        for (int m = 0; m <= M; ++m) S += ws.pimat[m * K + t];
        ws.pi[t] = S;
      }
      k.log_n(ws.pi.data(), ws.lp.data(), K);
      for (int t = 0; t < K; ++t)
        ws.h[t] += (y * theta[t] - pre[y]) - (ws.eta_a[t] + ws.lp[t]);
      if (want_grad) {
        for (int m = 0; m <= M; ++m) {
          const double* src = ws.pimat.data() + static_cast<std::size_t>(m) * K;
          double* dst = pim + static_cast<std::size_t>(m) * K;
          for (int t = 0; t < K; ++t) dst[t] = src[t] / ws.pi[t];
        }
      }
    } else {
      double* dth = ws.cache_dtheta.data() + o * K;
      double* dde = ws.cache_ddelta.data() + o * static_cast<std::size_t>(max_m_) * K;
      std::array<double, 32> dtmp;
      for (int t = 0; t < K; ++t) {
        double d1 = 0.0;
        const double lp =
            lp_scalar(spec_.family, spec_.kind, eff.data(), M, theta[t], y, &d1, nullptr,
                      want_grad ? dtmp.data() : nullptr, &ctr.clamps);
        ws.h[t] += lp;
        if (want_grad) {
          dth[t] = d1;
          for (int m = 0; m < M; ++m) dde[m * K + t] = dtmp[m];
        }
      }
    }
  }

  // log-sum-exp over nodes
  for (int t = 0; t < K; ++t) ws.tot[t] = lw_[t] + ws.h[t];
  double mx = ws.tot[0];
  for (int t = 1; t < K; ++t) mx = std::max(mx, ws.tot[t]);
  for (int t = 0; t < K; ++t) ws.tot[t] -= mx;
  k.exp_n(ws.tot.data(), ws.expw.data(), K);
  double S = 0.0;
  for (int t = 0; t < K; ++t) S += ws.expw[t];
  const double loglik = logdetA + mx + std::log(S);

  if (!want_grad) return loglik;

  // posterior node weights
  for (int t = 0; t < K; ++t) ws.expw[t] /= S;

  ws.gnat.setZero();
  std::fill(ws.gtheta.begin(), ws.gtheta.end(), 0.0);

  // item-block offsets in the natural gradient
  auto delta_offset = [&](int item) {
    int off = n_beta_;
    for (int j = 0; j < item; ++j) off += spec_.items[j].n_categories - 1;
    return off;
  };

  for (std::size_t o = 0; o < c.obs.size(); ++o) {
    const ObsFlat& ob = c.obs[o];
    const std::vector<double>& eff = ctx.eff[ob.item];
    const int M = static_cast<int>(eff.size());
    const int y = ob.y;
    const int doff = delta_offset(ob.item);

    if (fast_cum) {
      const double* Fa = ws.cache_fa.data() + o * K;
      const double* Fb = ws.cache_fb.data() + o * K;
      double gth = 0.0, ga = 0.0, gb = 0.0;
      for (int t = 0; t < K; ++t) {
        const double fa = Fa[t] * (1.0 - Fa[t]);
        const double fb = Fb[t] * (1.0 - Fb[t]);
        const double pi = std::max(Fa[t] - Fb[t], kProbFloor);
        const double w = ws.expw[t];
        gth += w * (fa - fb) / pi;
        if (y >= 1) ga += w * fa / pi;
        if (y <= M - 1) gb += w * fb / pi;
      }
      ws.gtheta[ob.visit] += gth;
      if (y >= 1) ws.gnat[doff + y - 1] -= ga;
      if (y <= M - 1) ws.gnat[doff + y] += gb;
    } else if (fast_adj) {
      const double* pim = ws.cache_pi.data() + o * (max_m_ + 1) * K;
      double gth = 0.0;
      for (int t = 0; t < K; ++t) {
        double em = 0.0;
        for (int m = 1; m <= M; ++m) em += m * pim[m * K + t];
        gth += ws.expw[t] * (y - em);
      }
      ws.gtheta[ob.visit] += gth;
      for (int m = M; m >= 1; --m) {
        double gd = 0.0;
        for (int t = 0; t < K; ++t) {
          double tail = 0.0;
          for (int mm = m; mm <= M; ++mm) tail += pim[mm * K + t];
          gd += ws.expw[t] * (tail - (m <= y ? 1.0 : 0.0));
        }
        ws.gnat[doff + m - 1] += gd;
      }
    } else {
      const double* dth = ws.cache_dtheta.data() + o * K;
      const double* dde = ws.cache_ddelta.data() + o * static_cast<std::size_t>(max_m_) * K;
      double gth = 0.0;
      for (int t = 0; t < K; ++t) gth += ws.expw[t] * dth[t];
      ws.gtheta[ob.visit] += gth;
      for (int m = 0; m < M; ++m) {
        double gd = 0.0;
        for (int t = 0; t < K; ++t) gd += ws.expw[t] * dde[m * K + t];
        ws.gnat[doff + m] += gd;
      }
    }
  }

  // fixed effects via the visit design
  for (int v = 0; v < V; ++v) {
    const double g = ws.gtheta[v];
    if (g == 0.0) continue;
    for (int p = 0; p < n_beta_; ++p) ws.gnat[p] += g * c.x(v, p);
  }

  // covariance block (prior term only), already on the packed scale
  const int coff = static_cast<int>(ws.gnat.size()) - layout_.n_cov;
  if (d == 1) {
    double g = 0.0;
    for (int t = 0; t < K; ++t) g += ws.expw[t] * (ws.w0[t] * ws.w0[t] - 1.0);
    if (!ctx.floored0) ws.gnat[coff] += g;
  } else if (spec_.random_cov == RandomCov::diagonal) {
    double g0 = 0.0, g1 = 0.0;
    for (int t = 0; t < K; ++t) {
      g0 += ws.expw[t] * (ws.w0[t] * ws.w0[t] - 1.0);
      g1 += ws.expw[t] * (ws.w1[t] * ws.w1[t] - 1.0);
    }
    if (!ctx.floored0) ws.gnat[coff] += g0;
    if (!ctx.floored1) ws.gnat[coff + 1] += g1;
  } else {
    double ga = 0.0, gb = 0.0, gc = 0.0;
    const double ratio = ctx.l10 / ctx.l11;
    for (int t = 0; t < K; ++t) {
      const double w = ws.expw[t];
      const double w0 = ws.w0[t], w1 = ws.w1[t];
      ga += w * (w0 * w0 - 1.0 - w0 * w1 * ratio);
      gb += w * (w0 * w1 / ctx.l11);
      gc += w * (w1 * w1 - 1.0);
    }
    if (!ctx.floored0) ws.gnat[coff] += ga;
    ws.gnat[coff + 1] += gb;
    if (!ctx.floored1) ws.gnat[coff + 2] += gc;
  }

  return loglik;
}

// ---------------------------------------------------------------------------
// natural -> packed gradient
// ---------------------------------------------------------------------------

void MarginalEvaluator::fold_gradient(const EvalContext& ctx, const Eigen::VectorXd& gnat,
                                      Eigen::VectorXd& gpacked) const {
  gpacked.setZero(layout_.total());
  for (int p = 0; p < n_beta_; ++p) gpacked[p] = gnat[p];

  const int J = spec_.n_items();
  int nat = n_beta_;
  if (spec_.item_design == ItemDesign::per_item_thresholds) {
    int pos = layout_.item_offset();
    for (int j = 0; j < J; ++j) {
      const int M = spec_.items[j].n_categories - 1;
      const std::vector<double>& delta = ctx.up.items.thresholds[j];
      double suffix = 0.0;
      for (int m = M - 1; m >= 1; --m) {
        suffix += gnat[nat + m];
        gpacked[pos + m] = (delta[m] - delta[m - 1]) * suffix;
      }
      gpacked[pos] = suffix + gnat[nat];
      nat += M;
      pos += M;
    }
  } else {
    const int M = spec_.items.front().n_categories - 1;
    const std::vector<double>& delta = ctx.up.items.thresholds[0];
    // shared thresholds: sum item-level gradients per category
    std::vector<double> gshared(M, 0.0);
    for (int j = 0; j < J; ++j)
      for (int m = 0; m < M; ++m) gshared[m] += gnat[nat + j * M + m];
    const int pos = layout_.item_offset();
    double suffix = 0.0;
    for (int m = M - 1; m >= 1; --m) {
      suffix += gshared[m];
      gpacked[pos + m] = (delta[m] - delta[m - 1]) * suffix;
    }
    gpacked[pos] = suffix + gshared[0];
    for (int j = 1; j < J; ++j) {
      double gt = 0.0;
      for (int m = 0; m < M; ++m) gt += gnat[nat + j * M + m];
      gpacked[pos + M + j - 1] = gt;
    }
    nat += J * M;
  }
  for (int p = 0; p < layout_.n_cov; ++p) gpacked[layout_.cov_offset() + p] = gnat[nat + p];
}

// ---------------------------------------------------------------------------
// public evaluation
// ---------------------------------------------------------------------------

double MarginalEvaluator::eval(const ParameterVector& packed, Eigen::VectorXd* grad,
                               EvalCounters* counters) {
  EvalContext ctx;
  ctx.up = unpack(spec_, packed);
  ctx.d = spec_.n_random();

  const int J = spec_.n_items();
  ctx.eff.resize(J);
  ctx.dpre.resize(J);
  for (int j = 0; j < J; ++j) {
    const int M = spec_.items[j].n_categories - 1;
    ctx.eff[j].resize(M);
    for (int m = 1; m <= M; ++m)
      ctx.eff[j][m - 1] = effective_threshold(spec_, ctx.up.items, j, m);
    ctx.dpre[j].assign(M + 1, 0.0);
    for (int m = 1; m <= M; ++m) ctx.dpre[j][m] = ctx.dpre[j][m - 1] + ctx.eff[j][m - 1];
  }
  ctx.l00 = std::max(ctx.up.cov.chol(0, 0), kSdFloor);
  ctx.floored0 = ctx.up.cov.chol(0, 0) <= kSdFloor;
  if (ctx.d == 2) {
    ctx.l10 = ctx.up.cov.chol(1, 0);
    ctx.l11 = std::max(ctx.up.cov.chol(1, 1), kSdFloor);
    ctx.floored1 = ctx.up.cov.chol(1, 1) <= kSdFloor;
    ctx.logdetL = std::log(ctx.l00) + std::log(ctx.l11);
  } else {
    ctx.logdetL = std::log(ctx.l00);
  }

  const std::size_t n = subjects_.size();
  const bool want_grad = grad != nullptr;
  const int n_nat = static_cast<int>(workspaces_[0].gnat.size());

  Eigen::VectorXd lls(n);
  Eigen::MatrixXd gnats;
  if (want_grad) gnats.resize(n_nat, n);
  std::vector<EvalCounters> ctrs(n);

  parallel_for(n, n_threads_, [&](std::size_t i, int w) {
    Workspace& ws = workspaces_[w];
    lls[static_cast<Eigen::Index>(i)] =
        subject_loglik(static_cast<int>(i), ctx, ws, want_grad, ctrs[i]);
    if (want_grad) gnats.col(static_cast<Eigen::Index>(i)) = ws.gnat;
  });

  // order-stable reductions
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += lls[static_cast<Eigen::Index>(i)];
  if (counters != nullptr) {
    counters->clamps = 0;
    counters->adaptive_failures = 0;
    for (const EvalCounters& c : ctrs) {
      counters->clamps += c.clamps;
      counters->adaptive_failures += c.adaptive_failures;
    }
  }
  if (want_grad) {
    Eigen::VectorXd gnat = Eigen::VectorXd::Zero(n_nat);
    for (std::size_t i = 0; i < n; ++i) gnat += gnats.col(static_cast<Eigen::Index>(i));
    fold_gradient(ctx, gnat, *grad);
  }
  return total;
}

}  // namespace irtmix::detail
