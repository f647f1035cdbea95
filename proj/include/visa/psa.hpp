#pragma once

#include <cstdint>
#include <vector>

#include "visa/gmm.hpp"
#include "visa/rng.hpp"
#include "visa/types.hpp"

namespace visa::psa {

// Per-view mixture parameters produced by the EM loop.
struct SlotState {
  Mat mu;                      // K x d slot means
  Mat sigma2;                  // K x d diagonal slot variances
  Vec pi;                      // K mixing coefficients
  std::vector<char> inactive;  // K; empty means all active

  int k() const { return static_cast<int>(mu.rows()); }
  int dim() const { return static_cast<int>(mu.cols()); }
  bool is_inactive(int i) const {
    return !inactive.empty() && inactive[static_cast<std::size_t>(i)] != 0;
  }
  int active_count() const;

  gmm::DiagGmm to_gmm() const;
  static SlotState from_gmm(const gmm::DiagGmm& g);
};

// Responsibilities A (rows sum to 1) and their column-normalized form.
struct Attention {
  Mat a;      // N x K
  Mat a_hat;  // N x K; zero column where a has no mass
};

enum class SlotInit { standard_normal_means, provided_means };

struct PsaConfig {
  int k_slots = 3;
  int iterations = 20;
  double var_floor = kVarFloor;
  std::uint64_t seed = 0;
  SlotInit init = SlotInit::standard_normal_means;
  Mat provided_means;  // K x d, read when init == provided_means
};

// pi_k = 1/K, sigma2 = 1, means standard normal (or copied verbatim).
SlotState init_slots(const PsaConfig& cfg, int dim, Rng& rng);

// Responsibilities under the current state. Throws DegeneratePointError
// (with the point index) if a point is unreachable by every slot.
Attention e_step(const SlotState& slots, const Mat& points);

// Closed-form parameter updates; the variance uses the fresh mean.
// An empty column keeps its previous parameters at weight zero, inactive.
SlotState m_step(const SlotState& slots, const Attention& attn, const Mat& points,
                 double var_floor = kVarFloor);

struct RunResult {
  SlotState slots;
  Attention attention;              // final responsibilities
  std::vector<double> loglik_trace; // total log density before each m-step
};

// T alternating e/m steps from init_slots.
RunResult run(const Mat& points, const PsaConfig& cfg, Rng& rng);

// Total log density of the points under the state's mixture.
double log_likelihood(const SlotState& slots, const Mat& points);

}  // namespace visa::psa
