#pragma once

#include <utility>
#include <vector>

#include "visa/rng.hpp"
#include "visa/types.hpp"

namespace visa::gmm {

// Single axis-aligned Gaussian.
struct DiagGaussian {
  Vec mean;
  Vec var;

  DiagGaussian() = default;
  DiagGaussian(Vec m, Vec v) : mean(std::move(m)), var(std::move(v)) {}
  int dim() const { return static_cast<int>(mean.size()); }
};

// Finite mixture of axis-aligned Gaussians. Components may carry an
// "inactive" mark: weight zero, parameters kept so the component count
// stays fixed for downstream slot matching.
struct DiagGmm {
  Vec weights;                          // length K, on the simplex
  std::vector<DiagGaussian> components; // K entries, shared dimension
  std::vector<char> inactive;           // K entries; empty means all active

  int size() const { return static_cast<int>(components.size()); }
  int dim() const { return components.empty() ? 0 : components.front().dim(); }
  bool is_inactive(int k) const {
    return !inactive.empty() && inactive[static_cast<std::size_t>(k)] != 0;
  }

  // Checks the structural invariants: simplex weights, consistent
  // dimensions, variances at or above the floor. Throws on violation.
  void validate(double var_floor = kVarFloor) const;
};

double log_density(const DiagGaussian& g, const Vec& x);
double log_density(const DiagGmm& g, const Vec& x);
double density(const DiagGmm& g, const Vec& x);

// Posterior component probabilities for one point. Computed in log space;
// throws DegeneratePointError if every component log-density is -inf.
Vec responsibilities(const DiagGmm& g, const Vec& x);

Vec sample(const DiagGaussian& g, Rng& rng);
Vec sample(const DiagGmm& g, Rng& rng);

// Pointwise product of two Gaussians: N(x;a) N(x;b) = exp(log_normalizer) N(x; out).
std::pair<DiagGaussian, double> gaussian_product(const DiagGaussian& a, const DiagGaussian& b);

// Convex combination of component-aligned mixtures with weights w:
//   pi_k   = sum_i w_i pi_{i,k}
//   mu_k   = sum_i (w_i pi_{i,k} / pi_k) mu_{i,k}
//   var_k  = sum_i (w_i pi_{i,k})^2 var_{i,k} / pi_k^2
// A component with no mass anywhere comes back inactive at weight zero
// with the first input's parameters.
DiagGmm convex_combine(const std::vector<DiagGmm>& mixtures, const Vec& w,
                       double var_floor = kVarFloor);

// Distribution of the dimension average (1/d) sum_j x_j of a mixture draw:
// per component, mean = mean of means, var = sum of vars / d^2.
DiagGmm project_mean(const DiagGmm& g);

// Stable log(sum(exp(v))) over the entries of v.
double log_sum_exp(const Vec& v);

}  // namespace visa::gmm
