#pragma once

#include <utility>
#include <vector>

#include "visa/gmm.hpp"
#include "visa/psa.hpp"
#include "visa/types.hpp"

namespace visa::aggregate {

// Content shares the slot-state carrier; its parameters live in the
// common implicit frame rather than any single view.
using ContentState = psa::SlotState;

// A slot counts as absent in a view when its weight drops below
// activity_eps_factor / K.
inline constexpr double kActivityEpsFactor = 0.01;

// Convex combination of aligned per-view states with equal view weights:
//   pi_k  = sum_v pi^v_k / |A|
//   mu_k  = sum_v (pi^v_k / (|A| pi_k)) mu^v_k
//   var_k = sum_v (pi^v_k / (|A| pi_k))^2 var^v_k
// Slots inactive in every view come out inactive at weight zero.
ContentState aggregate_content(const std::vector<psa::SlotState>& aligned,
                               double activity_eps_factor = kActivityEpsFactor,
                               double var_floor = kVarFloor);

struct AggregatePrior {
  gmm::DiagGmm mixture;                          // M*K components
  std::vector<std::pair<long, int>> provenance;  // (scene_id, slot_index) per component
};

// Dataset-level mixture: component (i,k) carries weight pi_{ik} / M.
AggregatePrior build_aggregate_posterior(const std::vector<ContentState>& contents,
                                         const std::vector<long>& scene_ids);

// 1-D dimension-averaged form used for histogram exports.
gmm::DiagGmm projected_aggregate(const AggregatePrior& prior);

}  // namespace visa::aggregate
