#include "visa/psa.hpp"

#include <cmath>
#include <limits>

#include "visa/error.hpp"

namespace visa::psa {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;

// Log of pi_k N(z_n; mu_k, sigma2_k) for all points and slots, plus the
// per-point log normalizer. Inactive slots contribute -inf.
void log_joint(const SlotState& s, const Mat& points, Mat& lj, Vec& lz) {
  const int n = static_cast<int>(points.rows());
  const int k = s.k();
  const int d = s.dim();
  lj.resize(n, k);
  for (int c = 0; c < k; ++c) {
    if (s.is_inactive(c) || s.pi[c] <= 0.0) {
      lj.col(c).setConstant(-std::numeric_limits<double>::infinity());
      continue;
    }
    double base = std::log(s.pi[c]);
    for (int j = 0; j < d; ++j) base -= 0.5 * (kLog2Pi + std::log(s.sigma2(c, j)));
    Vec col = Vec::Constant(n, base);
    for (int j = 0; j < d; ++j) {
      const double inv2v = 0.5 / s.sigma2(c, j);
      col.array() -= (points.col(j).array() - s.mu(c, j)).square() * inv2v;
    }
    lj.col(c) = col;
  }
  lz.resize(n);
  for (int i = 0; i < n; ++i) {
    const double m = lj.row(i).maxCoeff();
    if (!std::isfinite(m)) {
      lz[i] = m;
      continue;
    }
    double acc = 0.0;
    for (int c = 0; c < k; ++c) acc += std::exp(lj(i, c) - m);
    lz[i] = m + std::log(acc);
  }
}

Attention attention_from_log_joint(const Mat& lj, const Vec& lz) {
  const int n = static_cast<int>(lj.rows());
  const int k = static_cast<int>(lj.cols());
  Attention attn;
  attn.a.resize(n, k);
  for (int i = 0; i < n; ++i) {
    if (!std::isfinite(lz[i])) throw DegeneratePointError(i);
    for (int c = 0; c < k; ++c) attn.a(i, c) = std::exp(lj(i, c) - lz[i]);
    attn.a.row(i) /= attn.a.row(i).sum();
  }
  attn.a_hat.resize(n, k);
  for (int c = 0; c < k; ++c) {
    const double mass = attn.a.col(c).sum();
    if (mass > 0.0)
      attn.a_hat.col(c) = attn.a.col(c) / mass;
    else
      attn.a_hat.col(c).setZero();
  }
  return attn;
}

}  // namespace

int SlotState::active_count() const {
  int n = 0;
  for (int i = 0; i < k(); ++i)
    if (!is_inactive(i)) ++n;
  return n;
}

gmm::DiagGmm SlotState::to_gmm() const {
  gmm::DiagGmm g;
  g.weights = pi;
  g.inactive = inactive;
  g.components.reserve(k());
  for (int i = 0; i < k(); ++i)
    g.components.emplace_back(mu.row(i).transpose(), sigma2.row(i).transpose());
  return g;
}

SlotState SlotState::from_gmm(const gmm::DiagGmm& g) {
  SlotState s;
  const int kk = g.size();
  const int d = g.dim();
  s.mu.resize(kk, d);
  s.sigma2.resize(kk, d);
  s.pi = g.weights;
  s.inactive = g.inactive;
  for (int i = 0; i < kk; ++i) {
    s.mu.row(i) = g.components[i].mean.transpose();
    s.sigma2.row(i) = g.components[i].var.transpose();
  }
  return s;
}

SlotState init_slots(const PsaConfig& cfg, int dim, Rng& rng) {
  if (cfg.k_slots < 1 || cfg.iterations < 1) throw ConfigError("k_slots and iterations must be >= 1");
  SlotState s;
  s.pi = Vec::Constant(cfg.k_slots, 1.0 / cfg.k_slots);
  s.sigma2 = Mat::Ones(cfg.k_slots, dim);
  s.inactive.assign(cfg.k_slots, 0);
  if (cfg.init == SlotInit::provided_means) {
    if (cfg.provided_means.rows() != cfg.k_slots || cfg.provided_means.cols() != dim)
      throw DimensionError("provided_means must be K x d");
    s.mu = cfg.provided_means;
  } else {
    s.mu.resize(cfg.k_slots, dim);
    for (int i = 0; i < cfg.k_slots; ++i)
      for (int j = 0; j < dim; ++j) s.mu(i, j) = rng.normal();
  }
  return s;
}

Attention e_step(const SlotState& slots, const Mat& points) {
  if (points.cols() != slots.dim()) throw DimensionError("points dimension mismatch");
  Mat lj;
  Vec lz;
  log_joint(slots, points, lj, lz);
  return attention_from_log_joint(lj, lz);
}

SlotState m_step(const SlotState& slots, const Attention& attn, const Mat& points,
                 double var_floor) {
  const int n = static_cast<int>(points.rows());
  const int k = slots.k();
  const int d = slots.dim();
  if (attn.a.rows() != n || attn.a.cols() != k) throw DimensionError("attention shape mismatch");

  SlotState out = slots;
  if (out.inactive.empty()) out.inactive.assign(k, 0);
  for (int c = 0; c < k; ++c) {
    const double mass = attn.a.col(c).sum();
    out.pi[c] = mass / n;
    if (mass <= 0.0) {
      out.pi[c] = 0.0;
      out.inactive[c] = 1;
      continue;  // parameters frozen
    }
    Vec mu = points.transpose() * attn.a_hat.col(c);
    for (int j = 0; j < d; ++j) {
      const double v = (points.col(j).array() - mu[j]).square().matrix().dot(attn.a_hat.col(c));
      out.sigma2(c, j) = std::max(var_floor, v);
    }
    out.mu.row(c) = mu.transpose();
  }
  return out;
}

double log_likelihood(const SlotState& slots, const Mat& points) {
  Mat lj;
  Vec lz;
  log_joint(slots, points, lj, lz);
  return lz.sum();
}

RunResult run(const Mat& points, const PsaConfig& cfg, Rng& rng) {
  if (points.rows() < 1) throw DimensionError("need at least one point");
  SlotState state = init_slots(cfg, static_cast<int>(points.cols()), rng);
  RunResult res;
  res.loglik_trace.reserve(cfg.iterations);
  Mat lj;
  Vec lz;
  for (int t = 0; t < cfg.iterations; ++t) {
    log_joint(state, points, lj, lz);
    res.loglik_trace.push_back(lz.sum());
    res.attention = attention_from_log_joint(lj, lz);
    state = m_step(state, res.attention, points, cfg.var_floor);
  }
  res.slots = std::move(state);
  return res;
}

}  // namespace visa::psa
