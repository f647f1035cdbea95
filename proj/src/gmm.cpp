#include "visa/gmm.hpp"

#include <cmath>
#include <limits>

#include "visa/error.hpp"

namespace visa::gmm {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}  // namespace

void DiagGmm::validate(double var_floor) const {
  const int k = size();
  if (weights.size() != k) throw DimensionError("weight/component count mismatch");
  if (!inactive.empty() && static_cast<int>(inactive.size()) != k)
    throw DimensionError("inactive/component count mismatch");
  const int d = dim();
  double total = 0.0;
  for (int i = 0; i < k; ++i) {
    if (weights[i] < 0.0) throw DimensionError("negative mixture weight");
    total += weights[i];
    if (components[i].dim() != d) throw DimensionError("components disagree on dimension");
    if (components[i].var.size() != d) throw DimensionError("mean/var length mismatch");
    if ((components[i].var.array() < var_floor).any())
      throw DimensionError("variance below floor");
  }
  if (std::abs(total - 1.0) > 1e-9) throw DimensionError("weights do not sum to 1");
}

double log_sum_exp(const Vec& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;  // all -inf (or a stray +inf)
  double s = 0.0;
  for (int i = 0; i < v.size(); ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

double log_density(const DiagGaussian& g, const Vec& x) {
  if (x.size() != g.mean.size()) throw DimensionError("point dimension mismatch");
  double acc = 0.0;
  for (int j = 0; j < x.size(); ++j) {
    const double d = x[j] - g.mean[j];
    acc += kLog2Pi + std::log(g.var[j]) + d * d / g.var[j];
  }
  return -0.5 * acc;
}

namespace {

// Per-component log(w_k) + log N(x; k). Inactive or zero-weight entries are -inf.
Vec weighted_log_terms(const DiagGmm& g, const Vec& x) {
  if (x.size() != g.dim()) throw DimensionError("point dimension mismatch");
  Vec terms(g.size());
  for (int k = 0; k < g.size(); ++k) {
    if (g.is_inactive(k) || g.weights[k] <= 0.0)
      terms[k] = kNegInf;
    else
      terms[k] = std::log(g.weights[k]) + log_density(g.components[k], x);
  }
  return terms;
}

}  // namespace

double log_density(const DiagGmm& g, const Vec& x) {
  return log_sum_exp(weighted_log_terms(g, x));
}

double density(const DiagGmm& g, const Vec& x) { return std::exp(log_density(g, x)); }

Vec responsibilities(const DiagGmm& g, const Vec& x) {
  const Vec terms = weighted_log_terms(g, x);
  const double total = log_sum_exp(terms);
  if (!std::isfinite(total)) throw DegeneratePointError(0);
  Vec r(terms.size());
  for (int k = 0; k < terms.size(); ++k) r[k] = std::exp(terms[k] - total);
  r /= r.sum();
  return r;
}

Vec sample(const DiagGaussian& g, Rng& rng) {
  Vec x(g.dim());
  for (int j = 0; j < x.size(); ++j) x[j] = rng.normal(g.mean[j], std::sqrt(g.var[j]));
  return x;
}

Vec sample(const DiagGmm& g, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  int pick = -1;
  for (int k = 0; k < g.size(); ++k) {
    if (g.is_inactive(k) || g.weights[k] <= 0.0) continue;
    pick = k;
    acc += g.weights[k];
    if (u < acc) break;
  }
  if (pick < 0) throw DimensionError("cannot sample: no active component");
  return sample(g.components[pick], rng);
}

std::pair<DiagGaussian, double> gaussian_product(const DiagGaussian& a, const DiagGaussian& b) {
  if (a.dim() != b.dim()) throw DimensionError("gaussian_product dimension mismatch");
  const int d = a.dim();
  DiagGaussian out;
  out.mean.resize(d);
  out.var.resize(d);
  double log_norm = 0.0;
  for (int j = 0; j < d; ++j) {
    const double va = a.var[j], vb = b.var[j];
    if (va < kVarFloor || vb < kVarFloor) throw DimensionError("variance below floor");
    const double v = 1.0 / (1.0 / va + 1.0 / vb);
    out.var[j] = v;
    out.mean[j] = v * (a.mean[j] / va + b.mean[j] / vb);
    const double diff = a.mean[j] - b.mean[j];
    // N(x;a) N(x;b) = N(mu_a; mu_b, va+vb) N(x; out)
    log_norm += -0.5 * (kLog2Pi + std::log(va + vb) + diff * diff / (va + vb));
  }
  return {out, log_norm};
}

DiagGmm convex_combine(const std::vector<DiagGmm>& mixtures, const Vec& w, double var_floor) {
  if (mixtures.empty() || w.size() != static_cast<int>(mixtures.size()))
    throw DimensionError("convex_combine needs one weight per mixture");
  const int k = mixtures.front().size();
  const int d = mixtures.front().dim();
  for (const auto& m : mixtures)
    if (m.size() != k || m.dim() != d) throw DimensionError("mixtures disagree on K or d");

  DiagGmm out;
  out.weights = Vec::Zero(k);
  out.components.resize(k);
  out.inactive.assign(k, 0);
  for (int c = 0; c < k; ++c) {
    double pi = 0.0;
    for (int i = 0; i < w.size(); ++i) {
      const double mass = mixtures[i].is_inactive(c) ? 0.0 : mixtures[i].weights[c];
      pi += w[i] * mass;
    }
    out.weights[c] = pi;
    if (pi <= kWeightEps) {
      out.components[c] = mixtures.front().components[c];
      out.weights[c] = 0.0;
      out.inactive[c] = 1;
      continue;
    }
    Vec mu = Vec::Zero(d);
    Vec var = Vec::Zero(d);
    for (int i = 0; i < w.size(); ++i) {
      const double mass = mixtures[i].is_inactive(c) ? 0.0 : mixtures[i].weights[c];
      const double coef = w[i] * mass / pi;
      mu += coef * mixtures[i].components[c].mean;
      var += coef * coef * mixtures[i].components[c].var;
    }
    out.components[c] = DiagGaussian(std::move(mu), var.cwiseMax(var_floor));
  }
  return out;
}

DiagGmm project_mean(const DiagGmm& g) {
  const double d = static_cast<double>(g.dim());
  DiagGmm out;
  out.weights = g.weights;
  out.inactive = g.inactive;
  out.components.reserve(g.size());
  for (const auto& c : g.components) {
    Vec mu(1), var(1);
    mu[0] = c.mean.mean();
    var[0] = c.var.sum() / (d * d);
    out.components.emplace_back(std::move(mu), std::move(var));
  }
  return out;
}

}  // namespace visa::gmm
