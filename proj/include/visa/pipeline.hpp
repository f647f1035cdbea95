#pragma once

#include <cstdint>
#include <set>
#include <vector>

#include "visa/aggregate.hpp"
#include "visa/matching.hpp"
#include "visa/psa.hpp"
#include "visa/scenegen.hpp"
#include "visa/view.hpp"

namespace visa::pipeline {

enum class ViewMode { oracle, estimated };

struct PipelineConfig {
  psa::PsaConfig psa;
  ViewMode view_mode = ViewMode::oracle;
  int alignment_rounds = 3;          // estimated mode
  std::set<int> subset;              // A; empty means every view
  bool gaussian_product_refinement = false;
  matching::CostKind cost_kind = matching::CostKind::squared_euclidean;
  // Slots whose mean lands within this distance of a stronger slot are
  // duplicates of one cluster; their weight moves to the survivor and the
  // slot goes inactive. Zero disables.
  double dedup_radius = 1.0;
  // Slots with mean per-dimension variance above this cap straddle more
  // than one cluster and are dropped. Zero disables.
  double straddler_var_cap = 0.75;
  // Matched slot pairs further apart than this are different objects seen
  // by different views; the pair is split onto spare slot indices when
  // possible. Zero disables.
  double mismatch_threshold = 1.5;
  double activity_eps_factor = aggregate::kActivityEpsFactor;

  std::set<int> effective_subset(int n_views) const;
};

struct PerView {
  view::ViewDescriptor descriptor;
  psa::SlotState slots;  // aligned, in the common frame
  matching::Permutation permutation;
};

struct SceneResult {
  long scene_id = 0;
  std::vector<PerView> per_view;      // follows the sorted subset order
  aggregate::ContentState content;
  double loglik = 0.0;
  bool sufficiency = false;
  std::vector<int> alignment_fallback_views;  // estimated mode only
  int mismatch_repairs = 0;   // far matches moved onto spare slots
  int forced_merges = 0;      // far matches with no spare slot left
};

// Full single-scene inference: view transforms (read or estimated), PSA
// per view in the common frame, slot alignment to the base view, content
// aggregation.
SceneResult infer_scene(const scenegen::Scene& scene, const PipelineConfig& cfg, Rng& rng);

struct DatasetResult {
  std::vector<SceneResult> results;   // scene order preserved
  aggregate::AggregatePrior prior;
  view::ViewPrior view_prior;
  int failed_scenes = 0;
};

// Per-scene inference with seeds derived from (seed, scene_id); the result
// does not depend on the worker count.
DatasetResult infer_dataset(const std::vector<scenegen::Scene>& scenes,
                            const PipelineConfig& cfg, std::uint64_t seed, int workers = 1);

// Marks duplicate slots inactive, folding their weight and moments into
// the retained slot. Keeps K fixed; returns the cleaned state.
psa::SlotState dedup_slots(const psa::SlotState& s, double radius);

// Marks slots whose variance spans multiple clusters inactive and
// renormalizes the remaining weights.
psa::SlotState drop_straddlers(const psa::SlotState& s, double var_cap);

}  // namespace visa::pipeline
