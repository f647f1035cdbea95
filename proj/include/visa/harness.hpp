#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "visa/metrics.hpp"
#include "visa/pipeline.hpp"
#include "visa/scenegen.hpp"
#include "visa/serialize.hpp"

namespace visa::harness {

using serialize::json;

struct ExperimentConfig {
  std::string dataset_path;              // empty: generate inline from scene_spec
  scenegen::SceneSpec scene_spec = scenegen::default_scene_spec();
  int n_scenes = 2000;

  pipeline::PipelineConfig pipeline;
  int runs = 5;
  std::vector<std::set<int>> subsets;    // invariance
  int n_transforms = 25;                 // equivariance
  int histogram_bins = 50;

  std::string out_dir;                   // empty: no files written
  int workers = 1;
};

ExperimentConfig config_from_json(const json& j);
json config_to_json(const ExperimentConfig& cfg);

// Ground-truth snapshot kept per scene once the point clouds are dropped.
struct SceneTruth {
  long scene_id = 0;
  std::vector<scenegen::ObjectRecord> objects;
  std::vector<view::Affine2D> true_thetas;
  std::vector<std::set<int>> visible;  // per view
};

// One pipeline pass over the dataset; scenes stream through workers and
// only the results (plus truth snapshots on demand) are retained.
struct RunOutput {
  std::vector<pipeline::SceneResult> results;
  aggregate::AggregatePrior prior;
  view::ViewPrior view_prior;
  int failed_scenes = 0;
};

// Content-mean series keyed by ground-truth location component: scene by
// scene, active content slots are matched to the true object locations
// (expressed in the run's common frame) and each placed object contributes
// one row to its component's series.
metrics::SlotSeries content_series(const std::vector<pipeline::SceneResult>& results,
                                   const std::vector<SceneTruth>& truths,
                                   const pipeline::PipelineConfig& cfg, int n_components);

json cmd_generate(const ExperimentConfig& cfg, std::uint64_t seed);
json cmd_infer(const ExperimentConfig& cfg, std::uint64_t seed);
json cmd_eval_identifiability(const ExperimentConfig& cfg, std::uint64_t seed);
json cmd_eval_invariance(const ExperimentConfig& cfg, std::uint64_t seed);
json cmd_eval_equivariance(const ExperimentConfig& cfg, std::uint64_t seed);
json cmd_views_sweep(const ExperimentConfig& cfg, std::uint64_t seed);

// Threshold assertions for --assert: returns the failed checks (empty when
// everything holds).
std::vector<std::string> check_asserts(const json& report, const json& thresholds);

// Histogram of a 1-D mixture density on an even grid covering the active
// components; returns {z, density} columns.
json density_histogram(const gmm::DiagGmm& mixture_1d, int bins);

void write_report(const json& report, const std::string& out_dir, const std::string& name);

}  // namespace visa::harness
