#include "visa/aggregate.hpp"

#include "visa/error.hpp"

namespace visa::aggregate {

ContentState aggregate_content(const std::vector<psa::SlotState>& aligned,
                               double activity_eps_factor, double var_floor) {
  if (aligned.empty()) throw DimensionError("nothing to aggregate");
  const int k = aligned.front().k();
  const int d = aligned.front().dim();
  for (const auto& s : aligned)
    if (s.k() != k || s.dim() != d) throw DimensionError("aligned states disagree on K or d");
  const double n_views = static_cast<double>(aligned.size());
  const double eps = activity_eps_factor / k;

  ContentState out;
  out.mu.resize(k, d);
  out.sigma2.resize(k, d);
  out.pi.resize(k);
  out.inactive.assign(k, 0);
  for (int c = 0; c < k; ++c) {
    // Mixing weight keeps the raw view masses so total mass is conserved;
    // mean and variance combine only the views where the slot is present
    // (weight at or above the activity threshold).
    double pi = 0.0;
    double present_mass = 0.0;
    for (const auto& s : aligned) {
      const double mass = s.is_inactive(c) ? 0.0 : s.pi[c];
      pi += mass / n_views;
      if (!s.is_inactive(c) && s.pi[c] >= eps) present_mass += s.pi[c];
    }
    if (present_mass <= kWeightEps) {
      // absent in every view
      out.mu.row(c) = aligned.front().mu.row(c);
      out.sigma2.row(c) = aligned.front().sigma2.row(c);
      out.pi[c] = 0.0;
      out.inactive[c] = 1;
      continue;
    }
    out.pi[c] = pi;
    Vec mu = Vec::Zero(d);
    Vec var = Vec::Zero(d);
    for (const auto& s : aligned) {
      if (s.is_inactive(c) || s.pi[c] < eps) continue;
      const double coef = s.pi[c] / present_mass;
      mu += coef * s.mu.row(c).transpose();
      var += coef * coef * s.sigma2.row(c).transpose();
    }
    out.mu.row(c) = mu.transpose();
    out.sigma2.row(c) = var.cwiseMax(var_floor).transpose();
  }
  return out;
}

AggregatePrior build_aggregate_posterior(const std::vector<ContentState>& contents,
                                         const std::vector<long>& scene_ids) {
  if (contents.empty()) throw DimensionError("empty content list");
  if (scene_ids.size() != contents.size())
    throw DimensionError("one scene id per content state required");
  const int k = contents.front().k();
  const int d = contents.front().dim();
  const double m = static_cast<double>(contents.size());

  AggregatePrior prior;
  prior.mixture.weights.resize(static_cast<int>(contents.size()) * k);
  prior.mixture.components.reserve(contents.size() * k);
  prior.mixture.inactive.assign(contents.size() * k, 0);
  prior.provenance.reserve(contents.size() * k);
  int idx = 0;
  for (std::size_t i = 0; i < contents.size(); ++i) {
    const auto& c = contents[i];
    if (c.k() != k || c.dim() != d) throw DimensionError("contents disagree on K or d");
    for (int s = 0; s < k; ++s) {
      prior.mixture.weights[idx] = c.is_inactive(s) ? 0.0 : c.pi[s] / m;
      prior.mixture.components.emplace_back(c.mu.row(s).transpose(), c.sigma2.row(s).transpose());
      prior.mixture.inactive[idx] = c.is_inactive(s) ? 1 : 0;
      prior.provenance.emplace_back(scene_ids[i], s);
      ++idx;
    }
  }
  return prior;
}

gmm::DiagGmm projected_aggregate(const AggregatePrior& prior) {
  return gmm::project_mean(prior.mixture);
}

}  // namespace visa::aggregate
