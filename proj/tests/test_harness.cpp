#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "visa/error.hpp"
#include "visa/harness.hpp"
#include "visa/metrics.hpp"
#include "visa/version.hpp"

using namespace visa;
using harness::ExperimentConfig;
using harness::json;

namespace {

namespace fs = std::filesystem;

// small but non-trivial experiment shape shared by the command tests
ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.scene_spec = scenegen::default_scene_spec(4);
  cfg.scene_spec.points_per_object = 250;
  cfg.scene_spec.occlusion = scenegen::OcclusionPolicy::dropout(0.25);
  cfg.n_scenes = 40;
  cfg.runs = 2;
  cfg.pipeline.subset = {0, 1, 2};
  cfg.workers = 2;
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json strip_timing(json j) {
  j.erase("timing");
  return j;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("config: json round trip preserves the experiment shape") {
  json j;
  j["n_scenes"] = 123;
  j["runs"] = 4;
  j["n_transforms"] = 11;
  j["histogram_bins"] = 17;
  j["scene_spec"]["n_views"] = 3;
  j["scene_spec"]["n_objects"] = 2;
  j["scene_spec"]["points_per_object"] = 50;
  j["scene_spec"]["occlusion"]["kind"] = "random_dropout";
  j["scene_spec"]["occlusion"]["rate"] = 0.1;
  j["pipeline"]["k_slots"] = 4;
  j["pipeline"]["iterations"] = 7;
  j["pipeline"]["view_mode"] = "estimated";
  j["pipeline"]["subset"] = {0, 2};
  j["pipeline"]["cost"] = "symmetric_kl";
  j["subsets"] = {{0, 1}, {1, 2}};
  const ExperimentConfig cfg = harness::config_from_json(j);
  CHECK(cfg.n_scenes == 123);
  CHECK(cfg.runs == 4);
  CHECK(cfg.n_transforms == 11);
  CHECK(cfg.scene_spec.n_views() == 3);
  CHECK(cfg.scene_spec.n_objects == 2);
  CHECK(cfg.pipeline.psa.k_slots == 4);
  CHECK(cfg.pipeline.view_mode == pipeline::ViewMode::estimated);
  CHECK(cfg.pipeline.cost_kind == matching::CostKind::symmetric_kl);
  CHECK(cfg.subsets.size() == 2);

  const json echo = harness::config_to_json(cfg);
  const ExperimentConfig back = harness::config_from_json(echo);
  CHECK(back.n_scenes == cfg.n_scenes);
  CHECK(back.pipeline.psa.k_slots == cfg.pipeline.psa.k_slots);
  CHECK(back.scene_spec.occlusion.rate == cfg.scene_spec.occlusion.rate);
  CHECK(harness::config_to_json(back).dump() == echo.dump());
}

TEST_CASE("config: unknown enum values are rejected") {
  json bad_mode;
  bad_mode["pipeline"]["view_mode"] = "psychic";
  CHECK_THROWS_AS(harness::config_from_json(bad_mode), ConfigError);
  json bad_occ;
  bad_occ["scene_spec"]["occlusion"]["kind"] = "sometimes";
  CHECK_THROWS_AS(harness::config_from_json(bad_occ), ConfigError);
}

TEST_CASE("cmd_generate: deterministic dataset files with a summary") {
  TempDir dir("visa_gen_test");
  ExperimentConfig cfg = tiny_config();
  cfg.n_scenes = 6;
  cfg.scene_spec.points_per_object = 40;
  cfg.out_dir = (dir.path / "a").string();
  const json report = harness::cmd_generate(cfg, 31);
  CHECK(report.at("command") == "generate");
  CHECK(report.at("version") == kVersion);
  const auto summary = report.at("results").at("summary");
  CHECK(summary.at("n_scenes").get<int>() == 6);
  CHECK(summary.at("mean_objects_per_scene").get<double>() == doctest::Approx(3.0));

  const std::string first = slurp(dir.path / "a" / "dataset.jsonl");
  CHECK(std::count(first.begin(), first.end(), '\n') == 6);

  cfg.out_dir = (dir.path / "b").string();
  harness::cmd_generate(cfg, 31);
  CHECK(slurp(dir.path / "b" / "dataset.jsonl") == first);

  cfg.out_dir = (dir.path / "c").string();
  harness::cmd_generate(cfg, 32);
  CHECK(slurp(dir.path / "c" / "dataset.jsonl") != first);
}

TEST_CASE("cmd_infer: runs a dataset file end to end") {
  TempDir dir("visa_infer_test");
  ExperimentConfig gen = tiny_config();
  gen.n_scenes = 5;
  gen.scene_spec.points_per_object = 120;
  gen.out_dir = dir.path.string();
  harness::cmd_generate(gen, 77);

  ExperimentConfig cfg = tiny_config();
  cfg.dataset_path = (dir.path / "dataset.jsonl").string();
  cfg.out_dir = dir.path.string();
  const json report = harness::cmd_infer(cfg, 78);
  CHECK(report.at("results").at("n_scenes").get<int>() == 5);
  CHECK(report.at("results").at("failed_scenes").get<int>() == 0);
  CHECK(fs::exists(dir.path / "scene_results.jsonl"));
  CHECK(fs::exists(dir.path / "aggregate_prior.json"));
  CHECK(fs::exists(dir.path / "view_prior.json"));

  const json prior = json::parse(slurp(dir.path / "aggregate_prior.json"));
  double total = 0.0;
  for (const auto& w : prior.at("weights")) total += w.get<double>();
  CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(prior.at("provenance").size() == prior.at("weights").size());
}

TEST_CASE("content series: identical runs correlate exactly") {
  ExperimentConfig cfg = tiny_config();
  cfg.n_scenes = 25;
  const auto scenes =
      scenegen::sample_dataset(cfg.scene_spec, cfg.n_scenes, derive_seed(5, 0xDA7A5EEDULL));
  std::vector<harness::SceneTruth> truths;
  for (const auto& s : scenes) {
    harness::SceneTruth t;
    t.scene_id = s.scene_id;
    t.objects = s.objects;
    t.true_thetas = s.true_thetas;
    for (const auto& v : s.views) t.visible.push_back(v.visible_objects);
    truths.push_back(std::move(t));
  }
  const auto a = pipeline::infer_dataset(scenes, cfg.pipeline, 99);
  const auto b = pipeline::infer_dataset(scenes, cfg.pipeline, 99);
  const auto sa = harness::content_series(a.results, truths, cfg.pipeline, 5);
  const auto sb = harness::content_series(b.results, truths, cfg.pipeline, 5);
  const auto rep = metrics::smcc(sa, sb);
  CHECK(rep.score == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(rep.permutation.is_identity());
}

TEST_CASE("cmd_eval_identifiability: deterministic across worker counts") {
  ExperimentConfig cfg = tiny_config();
  cfg.n_scenes = 20;
  cfg.scene_spec.points_per_object = 150;
  cfg.workers = 1;
  const json a = harness::cmd_eval_identifiability(cfg, 555);
  cfg.workers = 4;
  const json b = harness::cmd_eval_identifiability(cfg, 555);
  CHECK(strip_timing(a).dump() == strip_timing(b).dump());
  CHECK(a.at("timing").contains("seconds"));

  // structural golden: the report schema
  CHECK(a.at("command") == "eval-identifiability");
  CHECK(a.contains("version"));
  CHECK(a.contains("seed"));
  CHECK(a.contains("config"));
  const auto& res = a.at("results");
  CHECK(res.at("runs").get<int>() == 2);
  CHECK(res.at("pairs").size() == 1);
  CHECK(res.at("pairs").at(0).contains("score"));
  CHECK(res.at("pairs").at(0).contains("n_excluded"));
  CHECK(res.contains("mean_smcc"));
  CHECK(res.contains("std_smcc"));
  CHECK(res.at("histograms").size() == 2);
  const auto& hist = res.at("histograms").at(0);
  CHECK(hist.at("z").size() == 50);
  CHECK(hist.at("density").size() == 50);
}

TEST_CASE("cmd_eval_identifiability: high agreement on the toy pipeline") {
  ExperimentConfig cfg = tiny_config();
  cfg.n_scenes = 60;
  cfg.runs = 3;
  const json rep = harness::cmd_eval_identifiability(cfg, 808);
  CHECK(rep.at("results").at("mean_smcc").get<double>() > 0.8);
}

TEST_CASE("histogram: density over the bins integrates to about one") {
  ExperimentConfig cfg = tiny_config();
  cfg.n_scenes = 15;
  const auto scenes =
      scenegen::sample_dataset(cfg.scene_spec, cfg.n_scenes, derive_seed(6, 0xDA7A5EEDULL));
  const auto out = pipeline::infer_dataset(scenes, cfg.pipeline, 44);
  const json h = harness::density_histogram(aggregate::projected_aggregate(out.prior), 400);
  REQUIRE(h.at("z").size() == 400);
  double mass = 0.0;
  for (const auto& d : h.at("density")) mass += d.get<double>();
  mass *= h.at("bin_width").get<double>();
  CHECK(mass == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("cmd_eval_invariance: duplicate subsets score one, warnings appear") {
  ExperimentConfig cfg = tiny_config();
  cfg.n_scenes = 25;
  cfg.scene_spec = scenegen::default_scene_spec(3);
  cfg.scene_spec.points_per_object = 250;
  cfg.scene_spec.occlusion = scenegen::OcclusionPolicy::dropout(0.3);
  cfg.pipeline.subset.clear();
  cfg.subsets = {{0, 1}, {0, 1}};
  const json rep = harness::cmd_eval_invariance(cfg, 99);
  const auto& pairs = rep.at("results").at("pairs");
  REQUIRE(pairs.size() == 1);
  CHECK(pairs.at(0).at("score").get<double>() == doctest::Approx(1.0).epsilon(1e-9));
  // 30% dropout over 2-view subsets cannot stay above 95% sufficiency
  CHECK(pairs.at(0).at("sufficiency_warning").get<bool>());
  for (const auto& s : rep.at("results").at("sufficiency")) {
    CHECK(s.at("fraction_sufficient").get<double>() < 0.95);
    CHECK(s.at("warning").get<bool>());
  }
}

TEST_CASE("cmd_eval_invariance: distinct sufficient subsets stay correlated") {
  ExperimentConfig cfg = tiny_config();
  cfg.scene_spec = scenegen::default_scene_spec(3);
  cfg.scene_spec.points_per_object = 250;
  cfg.scene_spec.occlusion = scenegen::OcclusionPolicy::dropout(0.2);
  cfg.n_scenes = 60;
  cfg.pipeline.subset.clear();
  cfg.subsets = {{0, 1}, {1, 2}, {0, 2}};
  const json rep = harness::cmd_eval_invariance(cfg, 2025);
  CHECK(rep.at("results").at("mean_inv_smcc").get<double>() > 0.7);
  CHECK(rep.at("results").at("pairs").size() == 3);
}

TEST_CASE("cmd_eval_equivariance: oracle composition is exact") {
  ExperimentConfig cfg = tiny_config();
  cfg.n_scenes = 12;
  cfg.scene_spec.points_per_object = 120;
  cfg.scene_spec.occlusion = scenegen::OcclusionPolicy::none();
  cfg.n_transforms = 10;
  const json rep = harness::cmd_eval_equivariance(cfg, 4242);
  CHECK(rep.at("results").at("mean_mcc").get<double>() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(rep.at("results").at("per_transform").size() == 10);
  ExperimentConfig bad = cfg;
  bad.n_transforms = 5;
  CHECK_THROWS_AS(harness::cmd_eval_equivariance(bad, 1), ConfigError);
}

TEST_CASE("cmd_views_sweep: four rows with a drop summary") {
  ExperimentConfig cfg = tiny_config();
  cfg.n_scenes = 25;
  cfg.scene_spec.points_per_object = 150;
  TempDir dir("visa_sweep_test");
  cfg.out_dir = dir.path.string();
  const json rep = harness::cmd_views_sweep(cfg, 31337);
  const auto& rows = rep.at("results").at("rows");
  REQUIRE(rows.size() == 4);
  for (int k = 0; k < 4; ++k) CHECK(rows.at(k).at("n_views").get<int>() == k + 1);
  CHECK(rep.at("results").contains("max_smcc_drop"));

  const std::string csv = slurp(dir.path / "views_sweep.csv");
  CHECK(csv.rfind("n_views,smcc_mean,smcc_std,runs\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
}

TEST_CASE("check_asserts flags violations and unknown keys") {
  json report;
  report["results"] = {{"mean_smcc", 0.9}, {"max_smcc_drop", 0.02}};
  CHECK(harness::check_asserts(report, {{"min_mean_smcc", 0.85}}).empty());
  CHECK(harness::check_asserts(report, {{"min_mean_smcc", 0.95}}).size() == 1);
  CHECK(harness::check_asserts(report, {{"max_smcc_drop", 0.01}}).size() == 1);
  CHECK(harness::check_asserts(report, {{"max_smcc_drop", 0.05}}).empty());
  CHECK(harness::check_asserts(report, {{"min_llama_count", 3}}).size() == 1);
}
