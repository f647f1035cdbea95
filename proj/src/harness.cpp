#include "visa/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numbers>
#include <thread>

#include "visa/error.hpp"
#include "visa/version.hpp"

namespace visa::harness {

namespace {

namespace fs = std::filesystem;

constexpr std::uint64_t kDataSalt = 0xDA7A5EEDULL;
constexpr std::uint64_t kRunSalt = 0x52554E00ULL;
constexpr std::uint64_t kTransformSalt = 0x7F0A11ULL;

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

// ---------------------------------------------------------------- sources

// A dataset the pipeline can stream scene by scene: either a file loaded
// up front or an on-demand generator, optionally with a composed input
// transform (equivariance runs).
struct SceneSource {
  std::shared_ptr<const std::vector<scenegen::Scene>> loaded;
  const scenegen::SceneSpec* spec = nullptr;
  std::uint64_t data_seed = 0;
  int n = 0;
  std::optional<view::Affine2D> transform;

  int count() const { return n; }
  scenegen::Scene get(int i) const {
    scenegen::Scene s = loaded ? (*loaded)[i] : scenegen::sample_scene_at(*spec, data_seed, i);
    if (transform) {
      for (auto& v : s.views) v.points = view::apply(*transform, v.points);
      for (auto& t : s.true_thetas) t = view::compose(*transform, t);
    }
    return s;
  }
};

SceneSource make_source(const ExperimentConfig& cfg, std::uint64_t seed) {
  SceneSource src;
  if (!cfg.dataset_path.empty()) {
    src.loaded = std::make_shared<const std::vector<scenegen::Scene>>(
        serialize::read_dataset_file(cfg.dataset_path));
    src.n = static_cast<int>(src.loaded->size());
  } else {
    src.spec = &cfg.scene_spec;
    src.data_seed = derive_seed(seed, kDataSalt);
    src.n = cfg.n_scenes;
  }
  if (src.n < 1) throw ConfigError("dataset has no scenes");
  return src;
}

// ---------------------------------------------------------------- runs

struct PassOutput {
  std::vector<pipeline::SceneResult> results;  // scene-indexed; failed scenes stay empty
  aggregate::AggregatePrior prior;
  view::ViewPrior view_prior;
  int failed_scenes = 0;
};

PassOutput run_pass(const SceneSource& src, const pipeline::PipelineConfig& cfg,
                    std::uint64_t run_seed, int workers, std::vector<SceneTruth>* truths_out) {
  const int n = src.count();
  PassOutput out;
  out.results.resize(n);
  std::vector<char> ok(n, 0);
  if (truths_out) truths_out->resize(n);

  auto work = [&](int i) {
    scenegen::Scene scene = src.get(i);
    if (truths_out) {
      SceneTruth t;
      t.scene_id = scene.scene_id;
      t.objects = scene.objects;
      t.true_thetas = scene.true_thetas;
      for (const auto& v : scene.views) t.visible.push_back(v.visible_objects);
      (*truths_out)[i] = std::move(t);
    }
    Rng rng(derive_seed(run_seed, static_cast<std::uint64_t>(scene.scene_id)));
    try {
      out.results[i] = pipeline::infer_scene(scene, cfg, rng);
      ok[i] = 1;
    } catch (const std::exception&) {
      ok[i] = 0;
    }
  };

  if (workers <= 1) {
    for (int i = 0; i < n; ++i) work(i);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < std::min(workers, n); ++t)
      pool.emplace_back([&]() {
        for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) work(i);
      });
    for (auto& th : pool) th.join();
  }

  std::vector<aggregate::ContentState> contents;
  std::vector<long> ids;
  std::vector<view::ViewDescriptor> descriptors;
  for (int i = 0; i < n; ++i) {
    if (!ok[i]) {
      ++out.failed_scenes;
      out.results[i] = pipeline::SceneResult{};
      continue;
    }
    contents.push_back(out.results[i].content);
    ids.push_back(out.results[i].scene_id);
    for (const auto& pv : out.results[i].per_view) descriptors.push_back(pv.descriptor);
  }
  if (contents.empty()) throw ConfigError("every scene failed");
  out.prior = aggregate::build_aggregate_posterior(contents, ids);
  std::set<int> ids_seen;
  for (const auto& d : descriptors) ids_seen.insert(d.view_id);
  out.view_prior = view::fit_view_prior(descriptors, static_cast<int>(ids_seen.size()));
  return out;
}

int location_component_count(const std::vector<SceneTruth>& truths) {
  int n = 0;
  for (const auto& t : truths)
    for (const auto& o : t.objects) n = std::max(n, o.location_component + 1);
  return n;
}

double fraction_sufficient(const std::vector<SceneTruth>& truths, const std::set<int>& subset) {
  if (truths.empty()) return 0.0;
  long good = 0;
  for (const auto& t : truths) {
    std::set<int> seen;
    for (int v : subset) seen.insert(t.visible[v].begin(), t.visible[v].end());
    std::set<int> placed;
    for (int o = 0; o < static_cast<int>(t.objects.size()); ++o) placed.insert(o);
    if (seen == placed) ++good;
  }
  return static_cast<double>(good) / static_cast<double>(truths.size());
}

// --------------------------------------------------------------- helpers

struct MeanStd {
  double mean = 0.0;
  double std_dev = 0.0;
};

MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd m;
  if (xs.empty()) return m;
  for (double x : xs) m.mean += x;
  m.mean /= static_cast<double>(xs.size());
  double acc = 0.0;
  for (double x : xs) acc += (x - m.mean) * (x - m.mean);
  m.std_dev = xs.size() > 1 ? std::sqrt(acc / (static_cast<double>(xs.size()) - 1.0)) : 0.0;
  return m;
}

view::Affine2D sample_plane_transform(Rng& rng) {
  constexpr double kPi = std::numbers::pi;
  while (true) {
    view::Affine2D t = view::Affine2D::rotation(rng.uniform(-kPi / 3.0, kPi / 3.0));
    Eigen::Matrix2d shear;
    shear << 1.0, rng.uniform(-0.2, 0.2), 0.0, 1.0;
    t.linear = t.linear * shear;
    const double angle = rng.uniform(0.0, 2.0 * kPi);
    const double norm = rng.uniform(0.0, 2.0);
    t.offset << norm * std::cos(angle), norm * std::sin(angle);
    if (std::abs(t.det()) >= 1e-3) return t;
  }
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << text;
}

void write_csv(const std::string& path, const std::string& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::string text = header + "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) text += ",";
      text += row[i];
    }
    text += "\n";
  }
  write_text_file(path, text);
}

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", x);
  return buf;
}

json report_skeleton(const char* command, const ExperimentConfig& cfg, std::uint64_t seed) {
  json report;
  report["command"] = command;
  report["version"] = kVersion;
  report["seed"] = seed;
  report["config"] = config_to_json(cfg);
  return report;
}

// Collect flattened view vectors (one row per usable scene and view);
// `rows` records the owning scene index so runs can be intersected.
// Scenes that fell back to the true transforms carry a different frame
// convention and are left out.
Mat view_vectors(const std::vector<pipeline::SceneResult>& results, std::vector<int>* rows) {
  int count = 0;
  for (const auto& r : results)
    if (r.alignment_fallback_views.empty()) count += static_cast<int>(r.per_view.size());
  Mat m(count, 6);
  if (rows) rows->clear();
  int row = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (!results[i].alignment_fallback_views.empty()) continue;
    for (const auto& pv : results[i].per_view) {
      m.row(row) = pv.descriptor.v.transpose();
      if (rows) rows->push_back(static_cast<int>(i));
      ++row;
    }
  }
  return m;
}

}  // namespace

// ------------------------------------------------------------- series

metrics::SlotSeries content_series(const std::vector<pipeline::SceneResult>& results,
                                   const std::vector<SceneTruth>& truths,
                                   const pipeline::PipelineConfig& cfg, int n_components) {
  if (results.size() != truths.size()) throw DimensionError("results/truth size mismatch");
  const int n = static_cast<int>(results.size());
  metrics::SlotSeries out;
  out.series.assign(n_components, Mat::Zero(n, 2));
  out.valid.assign(n_components, std::vector<char>(n, 0));
  out.active.assign(n_components, 0);

  for (int i = 0; i < n; ++i) {
    const auto& res = results[i];
    if (res.per_view.empty()) continue;  // failed scene
    view::Affine2D frame = view::Affine2D::identity();
    if (cfg.view_mode == pipeline::ViewMode::estimated)
      frame = truths[i].true_thetas[res.per_view.front().descriptor.view_id];

    const auto& content = res.content;
    const int k = content.k();
    const int n_obj = static_cast<int>(truths[i].objects.size());
    const int dim = std::max(k, n_obj);
    Mat cost = Mat::Constant(dim, dim, matching::kInactivePenalty);
    Mat locs(n_obj, 2);
    for (int o = 0; o < n_obj; ++o) {
      locs.row(o) =
          (frame.linear * truths[i].objects[o].location + frame.offset).transpose();
      for (int s = 0; s < k; ++s) {
        if (content.is_inactive(s)) continue;
        cost(o, s) = (content.mu.row(s).transpose() - locs.row(o).transpose()).squaredNorm();
      }
    }
    auto [assign, total] = matching::hungarian(cost);
    (void)total;
    for (int o = 0; o < n_obj; ++o) {
      const int s = assign.map[o];
      if (s >= k || cost(o, s) >= matching::kInactivePenalty) continue;
      const int comp = truths[i].objects[o].location_component;
      out.series[comp].row(i) = content.mu.row(s);
      out.valid[comp][i] = 1;
    }
  }
  for (int c = 0; c < n_components; ++c)
    for (int i = 0; i < n; ++i)
      if (out.valid[c][i]) {
        out.active[c] = 1;
        break;
      }
  return out;
}

// ------------------------------------------------------------- config

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig cfg;
  if (j.contains("dataset")) cfg.dataset_path = j.at("dataset").get<std::string>();

  if (j.contains("scene_spec")) {
    const auto& js = j.at("scene_spec");
    const int n_views = js.value("n_views", 4);
    const std::uint64_t camera_seed = js.value("camera_seed", 7ULL);
    scenegen::SceneSpec spec;
    if (js.contains("location_mixture")) {
      spec.location_mixture = serialize::gmm_from_json(js.at("location_mixture"));
    } else {
      const int n_loc = js.value("n_locations", 5);
      const double radius = js.value("location_radius", 3.0);
      const double variance = js.value("location_variance", 0.04);
      spec.location_mixture = scenegen::default_location_mixture(n_loc);
      for (int k = 0; k < n_loc; ++k) {
        spec.location_mixture.components[k].mean *= radius / 3.0;
        spec.location_mixture.components[k].var.setConstant(variance);
      }
    }
    spec.n_objects = js.value("n_objects", 3);
    spec.points_per_object = js.value("points_per_object", 1000);
    if (js.contains("cameras")) {
      spec.cameras.clear();
      for (const auto& jc : js.at("cameras"))
        spec.cameras.push_back(serialize::affine_from_json(jc));
    } else {
      spec.cameras = scenegen::sample_cameras(n_views, camera_seed);
    }
    if (js.contains("occlusion")) {
      const auto& jo = js.at("occlusion");
      const std::string kind = jo.value("kind", "none");
      if (kind == "none") {
        spec.occlusion = scenegen::OcclusionPolicy::none();
      } else if (kind == "random_dropout") {
        spec.occlusion = scenegen::OcclusionPolicy::dropout(jo.value("rate", 0.25));
      } else if (kind == "scripted") {
        std::vector<std::set<int>> hidden;
        for (const auto& jh : jo.at("hidden")) {
          std::set<int> h;
          for (const auto& o : jh) h.insert(o.get<int>());
          hidden.push_back(std::move(h));
        }
        spec.occlusion = scenegen::OcclusionPolicy::scripted(std::move(hidden));
      } else {
        throw ConfigError("unknown occlusion kind: " + kind);
      }
    }
    cfg.scene_spec = std::move(spec);
  }
  cfg.n_scenes = j.value("n_scenes", 2000);

  if (j.contains("pipeline")) {
    const auto& jp = j.at("pipeline");
    cfg.pipeline.psa.k_slots = jp.value("k_slots", 3);
    cfg.pipeline.psa.iterations = jp.value("iterations", 20);
    cfg.pipeline.psa.var_floor = jp.value("var_floor", kVarFloor);
    const std::string mode = jp.value("view_mode", "oracle");
    if (mode == "oracle")
      cfg.pipeline.view_mode = pipeline::ViewMode::oracle;
    else if (mode == "estimated")
      cfg.pipeline.view_mode = pipeline::ViewMode::estimated;
    else
      throw ConfigError("unknown view_mode: " + mode);
    cfg.pipeline.alignment_rounds = jp.value("alignment_rounds", 3);
    if (jp.contains("subset"))
      for (const auto& v : jp.at("subset")) cfg.pipeline.subset.insert(v.get<int>());
    cfg.pipeline.gaussian_product_refinement = jp.value("gaussian_product_refinement", false);
    cfg.pipeline.dedup_radius = jp.value("dedup_radius", 1.0);
    cfg.pipeline.activity_eps_factor =
        jp.value("activity_eps_factor", aggregate::kActivityEpsFactor);
    const std::string cost = jp.value("cost", "squared_euclidean");
    if (cost == "squared_euclidean")
      cfg.pipeline.cost_kind = matching::CostKind::squared_euclidean;
    else if (cost == "symmetric_kl")
      cfg.pipeline.cost_kind = matching::CostKind::symmetric_kl;
    else
      throw ConfigError("unknown cost: " + cost);
  }

  cfg.runs = j.value("runs", 5);
  if (j.contains("subsets")) {
    for (const auto& js : j.at("subsets")) {
      std::set<int> s;
      for (const auto& v : js) s.insert(v.get<int>());
      cfg.subsets.push_back(std::move(s));
    }
  }
  cfg.n_transforms = j.value("n_transforms", 25);
  cfg.histogram_bins = j.value("histogram_bins", 50);
  cfg.out_dir = j.value("out_dir", std::string());
  cfg.workers = j.value("workers", 1);
  return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
  json j;
  if (!cfg.dataset_path.empty()) j["dataset"] = cfg.dataset_path;
  json js;
  js["n_objects"] = cfg.scene_spec.n_objects;
  js["points_per_object"] = cfg.scene_spec.points_per_object;
  js["location_mixture"] = serialize::to_json(cfg.scene_spec.location_mixture);
  json cams = json::array();
  for (const auto& c : cfg.scene_spec.cameras) cams.push_back(serialize::to_json(c));
  js["cameras"] = std::move(cams);
  switch (cfg.scene_spec.occlusion.kind) {
    case scenegen::OcclusionPolicy::Kind::none:
      js["occlusion"] = {{"kind", "none"}};
      break;
    case scenegen::OcclusionPolicy::Kind::random_dropout:
      js["occlusion"] = {{"kind", "random_dropout"}, {"rate", cfg.scene_spec.occlusion.rate}};
      break;
    case scenegen::OcclusionPolicy::Kind::scripted: {
      json hidden = json::array();
      for (const auto& h : cfg.scene_spec.occlusion.hidden)
        hidden.push_back(std::vector<int>(h.begin(), h.end()));
      js["occlusion"] = {{"kind", "scripted"}, {"hidden", hidden}};
      break;
    }
  }
  j["scene_spec"] = std::move(js);
  j["n_scenes"] = cfg.n_scenes;

  json jp;
  jp["k_slots"] = cfg.pipeline.psa.k_slots;
  jp["iterations"] = cfg.pipeline.psa.iterations;
  jp["var_floor"] = cfg.pipeline.psa.var_floor;
  jp["view_mode"] = cfg.pipeline.view_mode == pipeline::ViewMode::oracle ? "oracle" : "estimated";
  jp["alignment_rounds"] = cfg.pipeline.alignment_rounds;
  jp["subset"] = std::vector<int>(cfg.pipeline.subset.begin(), cfg.pipeline.subset.end());
  jp["gaussian_product_refinement"] = cfg.pipeline.gaussian_product_refinement;
  jp["dedup_radius"] = cfg.pipeline.dedup_radius;
  jp["activity_eps_factor"] = cfg.pipeline.activity_eps_factor;
  jp["cost"] = cfg.pipeline.cost_kind == matching::CostKind::squared_euclidean
                   ? "squared_euclidean"
                   : "symmetric_kl";
  j["pipeline"] = std::move(jp);

  j["runs"] = cfg.runs;
  json subsets = json::array();
  for (const auto& s : cfg.subsets) subsets.push_back(std::vector<int>(s.begin(), s.end()));
  j["subsets"] = std::move(subsets);
  j["n_transforms"] = cfg.n_transforms;
  j["histogram_bins"] = cfg.histogram_bins;
  return j;
}

// ------------------------------------------------------------- commands

json density_histogram(const gmm::DiagGmm& mixture_1d, int bins) {
  json out;
  double lo = 0.0, hi = 0.0;
  bool seen = false;
  for (int k = 0; k < mixture_1d.size(); ++k) {
    if (mixture_1d.is_inactive(k) || mixture_1d.weights[k] <= 0.0) continue;
    const double m = mixture_1d.components[k].mean[0];
    const double s = std::sqrt(mixture_1d.components[k].var[0]);
    lo = seen ? std::min(lo, m - 4.0 * s) : m - 4.0 * s;
    hi = seen ? std::max(hi, m + 4.0 * s) : m + 4.0 * s;
    seen = true;
  }
  json zs = json::array(), ds = json::array();
  if (seen) {
    const double width = (hi - lo) / bins;
    Vec x(1);
    for (int b = 0; b < bins; ++b) {
      const double z = lo + (b + 0.5) * width;
      x[0] = z;
      zs.push_back(z);
      ds.push_back(gmm::density(mixture_1d, x));
    }
    out["bin_width"] = width;
  }
  out["z"] = std::move(zs);
  out["density"] = std::move(ds);
  return out;
}

void write_report(const json& report, const std::string& out_dir, const std::string& name) {
  if (out_dir.empty()) return;
  fs::create_directories(out_dir);
  write_text_file((fs::path(out_dir) / (name + ".json")).string(), report.dump(2) + "\n");
}

json cmd_generate(const ExperimentConfig& cfg, std::uint64_t seed) {
  if (cfg.out_dir.empty()) throw ConfigError("generate needs an output directory");
  if (!cfg.dataset_path.empty()) throw ConfigError("generate does not take an input dataset");
  const double t0 = now_seconds();
  fs::create_directories(cfg.out_dir);
  const std::string path = (fs::path(cfg.out_dir) / "dataset.jsonl").string();
  const std::uint64_t data_seed = derive_seed(seed, kDataSalt);

  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  std::vector<scenegen::Scene> window;
  json report = report_skeleton("generate", cfg, seed);
  double mean_objects = 0.0;
  const int n_views = cfg.scene_spec.n_views();
  std::vector<double> visible_per_view(n_views, 0.0);
  long sufficient = 0;
  std::set<int> all_views;
  for (int v = 0; v < n_views; ++v) all_views.insert(v);
  for (long i = 0; i < cfg.n_scenes; ++i) {
    scenegen::Scene s = scenegen::sample_scene_at(cfg.scene_spec, data_seed, i);
    out << serialize::to_json(s).dump() << '\n';
    mean_objects += s.n_objects();
    for (const auto& v : s.views) visible_per_view[v.view_id] += v.visible_objects.size();
    if (scenegen::viewpoint_sufficient(s, all_views)) ++sufficient;
  }
  out.close();

  json summary;
  summary["n_scenes"] = cfg.n_scenes;
  summary["n_views"] = n_views;
  summary["mean_objects_per_scene"] = mean_objects / cfg.n_scenes;
  json vis = json::array();
  for (double v : visible_per_view) vis.push_back(v / cfg.n_scenes);
  summary["mean_visible_per_view"] = std::move(vis);
  summary["fraction_sufficient_all_views"] = static_cast<double>(sufficient) / cfg.n_scenes;
  report["results"] = {{"dataset", path}, {"summary", summary}};
  report["timing"] = {{"seconds", now_seconds() - t0}, {"workers", cfg.workers}};
  write_report(report, cfg.out_dir, "generate_report");
  write_text_file((fs::path(cfg.out_dir) / "summary.json").string(), summary.dump(2) + "\n");
  return report;
}

json cmd_infer(const ExperimentConfig& cfg, std::uint64_t seed) {
  const double t0 = now_seconds();
  SceneSource src = make_source(cfg, seed);
  std::vector<SceneTruth> truths;
  PassOutput pass = run_pass(src, cfg.pipeline, derive_seed(seed, kRunSalt), cfg.workers, &truths);

  json report = report_skeleton("infer", cfg, seed);
  json results;
  results["n_scenes"] = src.count();
  results["failed_scenes"] = pass.failed_scenes;
  double loglik = 0.0;
  long sufficient = 0, scored = 0;
  for (const auto& r : pass.results) {
    if (r.per_view.empty()) continue;
    loglik += r.loglik;
    sufficient += r.sufficiency ? 1 : 0;
    ++scored;
  }
  results["mean_loglik"] = scored > 0 ? loglik / scored : 0.0;
  results["fraction_sufficient"] = scored > 0 ? static_cast<double>(sufficient) / scored : 0.0;
  report["results"] = std::move(results);
  report["timing"] = {{"seconds", now_seconds() - t0}, {"workers", cfg.workers}};

  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    std::ofstream out((fs::path(cfg.out_dir) / "scene_results.jsonl").string());
    for (const auto& r : pass.results)
      if (!r.per_view.empty()) out << serialize::to_json(r).dump() << '\n';
    write_text_file((fs::path(cfg.out_dir) / "aggregate_prior.json").string(),
                    serialize::to_json(pass.prior).dump(2) + "\n");
    write_text_file((fs::path(cfg.out_dir) / "view_prior.json").string(),
                    serialize::to_json(pass.view_prior.mixture).dump(2) + "\n");
    write_report(report, cfg.out_dir, "infer_report");
  }
  return report;
}

namespace {

struct IdentCore {
  std::vector<double> scores;         // pairwise smcc
  json pairs = json::array();
  json histograms = json::array();
  std::vector<int> failed_per_run;
};

IdentCore identifiability_core(const SceneSource& src, const ExperimentConfig& cfg,
                               const pipeline::PipelineConfig& pcfg, std::uint64_t seed,
                               bool want_histograms) {
  IdentCore core;
  std::vector<SceneTruth> truths;
  std::vector<metrics::SlotSeries> series;
  for (int r = 0; r < cfg.runs; ++r) {
    const std::uint64_t run_seed = derive_seed(seed, kRunSalt + 1 + static_cast<std::uint64_t>(r));
    PassOutput pass = run_pass(src, pcfg, run_seed, cfg.workers, r == 0 ? &truths : nullptr);
    core.failed_per_run.push_back(pass.failed_scenes);
    if (r == 0 && location_component_count(truths) == 0)
      throw ConfigError("dataset carries no location components");
    series.push_back(
        content_series(pass.results, truths, pcfg, location_component_count(truths)));
    if (want_histograms)
      core.histograms.push_back(
          density_histogram(aggregate::projected_aggregate(pass.prior), cfg.histogram_bins));
  }
  for (int a = 0; a < cfg.runs; ++a) {
    for (int b = a + 1; b < cfg.runs; ++b) {
      const auto rep = metrics::smcc(series[a], series[b]);
      core.scores.push_back(rep.score);
      json pair;
      pair["run_a"] = a;
      pair["run_b"] = b;
      pair["score"] = rep.score;
      pair["n_excluded"] = rep.excluded.size();
      pair["permutation"] = rep.permutation.map;
      core.pairs.push_back(std::move(pair));
    }
  }
  return core;
}

}  // namespace

json cmd_eval_identifiability(const ExperimentConfig& cfg, std::uint64_t seed) {
  if (cfg.runs < 2) throw ConfigError("identifiability needs at least 2 runs");
  const double t0 = now_seconds();
  SceneSource src = make_source(cfg, seed);
  IdentCore core = identifiability_core(src, cfg, cfg.pipeline, seed, true);

  json report = report_skeleton("eval-identifiability", cfg, seed);
  const MeanStd ms = mean_std(core.scores);
  json results;
  results["runs"] = cfg.runs;
  results["n_scenes"] = src.count();
  results["mean_smcc"] = ms.mean;
  results["std_smcc"] = ms.std_dev;
  results["pairs"] = core.pairs;
  results["failed_scenes_per_run"] = core.failed_per_run;
  results["histograms"] = core.histograms;
  report["results"] = std::move(results);
  report["timing"] = {{"seconds", now_seconds() - t0}, {"workers", cfg.workers}};

  if (!cfg.out_dir.empty()) {
    write_report(report, cfg.out_dir, "identifiability_report");
    std::vector<std::vector<std::string>> rows;
    for (const auto& p : core.pairs)
      rows.push_back({std::to_string(p.at("run_a").get<int>()) + "-" +
                          std::to_string(p.at("run_b").get<int>()),
                      fmt(p.at("score").get<double>()),
                      std::to_string(p.at("n_excluded").get<std::size_t>())});
    write_csv((fs::path(cfg.out_dir) / "identifiability_pairs.csv").string(),
              "pair,score,n_excluded", rows);
    for (int r = 0; r < static_cast<int>(core.histograms.size()); ++r) {
      std::vector<std::vector<std::string>> hrows;
      const auto& h = core.histograms[r];
      for (std::size_t b = 0; b < h.at("z").size(); ++b)
        hrows.push_back(
            {fmt(h.at("z").at(b).get<double>()), fmt(h.at("density").at(b).get<double>())});
      write_csv((fs::path(cfg.out_dir) / ("identifiability_run" + std::to_string(r) +
                                          "_hist.csv"))
                    .string(),
                "z,density", hrows);
    }
  }
  return report;
}

json cmd_eval_invariance(const ExperimentConfig& cfg, std::uint64_t seed) {
  std::vector<std::set<int>> subsets = cfg.subsets;
  if (subsets.empty()) subsets = {{0, 1}, {1, 2}, {0, 2}};
  if (subsets.size() < 2) throw ConfigError("invariance needs at least 2 subsets");
  const double t0 = now_seconds();
  SceneSource src = make_source(cfg, seed);

  std::vector<SceneTruth> truths;
  std::vector<metrics::SlotSeries> series;
  std::vector<double> suff;
  std::vector<int> failed;
  for (std::size_t s = 0; s < subsets.size(); ++s) {
    pipeline::PipelineConfig pcfg = cfg.pipeline;
    pcfg.subset = subsets[s];
    // keyed by the subset itself: identical subsets give identical models
    std::uint64_t subset_key = kRunSalt + 101;
    for (int v : subsets[s]) subset_key = mix64(subset_key ^ static_cast<std::uint64_t>(v + 1));
    const std::uint64_t run_seed = derive_seed(seed, subset_key);
    PassOutput pass = run_pass(src, pcfg, run_seed, cfg.workers, s == 0 ? &truths : nullptr);
    failed.push_back(pass.failed_scenes);
    series.push_back(
        content_series(pass.results, truths, pcfg, location_component_count(truths)));
    suff.push_back(fraction_sufficient(truths, subsets[s]));
  }

  json report = report_skeleton("eval-invariance", cfg, seed);
  json pairs = json::array();
  std::vector<double> scores;
  for (std::size_t a = 0; a < subsets.size(); ++a) {
    for (std::size_t b = a + 1; b < subsets.size(); ++b) {
      const bool both = suff[a] >= 0.95 && suff[b] >= 0.95;
      const auto rep = metrics::inv_smcc(series[a], series[b], both);
      scores.push_back(rep.score);
      json pair;
      pair["subset_a"] = std::vector<int>(subsets[a].begin(), subsets[a].end());
      pair["subset_b"] = std::vector<int>(subsets[b].begin(), subsets[b].end());
      pair["score"] = rep.score;
      pair["n_excluded"] = rep.excluded.size();
      pair["sufficiency_warning"] = rep.sufficiency_warning;
      pairs.push_back(std::move(pair));
    }
  }
  const MeanStd ms = mean_std(scores);
  json results;
  results["n_scenes"] = src.count();
  results["mean_inv_smcc"] = ms.mean;
  results["std_inv_smcc"] = ms.std_dev;
  results["pairs"] = std::move(pairs);
  json jsuff = json::array();
  for (std::size_t s = 0; s < subsets.size(); ++s) {
    json e;
    e["subset"] = std::vector<int>(subsets[s].begin(), subsets[s].end());
    e["fraction_sufficient"] = suff[s];
    e["warning"] = suff[s] < 0.95;
    e["failed_scenes"] = failed[s];
    jsuff.push_back(std::move(e));
  }
  results["sufficiency"] = std::move(jsuff);
  report["results"] = std::move(results);
  report["timing"] = {{"seconds", now_seconds() - t0}, {"workers", cfg.workers}};

  if (!cfg.out_dir.empty()) {
    write_report(report, cfg.out_dir, "invariance_report");
    std::vector<std::vector<std::string>> rows;
    for (const auto& p : report.at("results").at("pairs")) {
      std::string name = "A";
      rows.push_back({p.at("subset_a").dump() + "|" + p.at("subset_b").dump(),
                      fmt(p.at("score").get<double>()),
                      std::to_string(p.at("n_excluded").get<std::size_t>())});
      (void)name;
    }
    write_csv((fs::path(cfg.out_dir) / "invariance_pairs.csv").string(), "pair,score,n_excluded",
              rows);
  }
  return report;
}

json cmd_eval_equivariance(const ExperimentConfig& cfg, std::uint64_t seed) {
  if (cfg.n_transforms < 10) throw ConfigError("equivariance needs at least 10 transforms");
  const double t0 = now_seconds();
  SceneSource src = make_source(cfg, seed);
  const std::uint64_t run_seed = derive_seed(seed, kRunSalt + 997);

  std::vector<SceneTruth> truths;
  PassOutput base = run_pass(src, cfg.pipeline, run_seed, cfg.workers, &truths);
  std::vector<int> base_rows;
  const Mat vhat0 = view_vectors(base.results, &base_rows);

  const bool oracle = cfg.pipeline.view_mode == pipeline::ViewMode::oracle;
  std::vector<double> scores;
  json per_transform = json::array();
  for (int t = 0; t < cfg.n_transforms; ++t) {
    Rng trng(derive_seed(seed, kTransformSalt + static_cast<std::uint64_t>(t)));
    const view::Affine2D h = sample_plane_transform(trng);
    SceneSource src_t = src;
    src_t.transform = h;
    PassOutput pass = run_pass(src_t, cfg.pipeline, run_seed, cfg.workers, nullptr);
    std::vector<int> rows_t;
    const Mat vhat_t = view_vectors(pass.results, &rows_t);

    // composition oracle, aligned row by row with vhat_t
    Mat composed(vhat_t.rows(), 6);
    {
      int row = 0;
      for (std::size_t i = 0; i < pass.results.size(); ++i) {
        if (!pass.results[i].alignment_fallback_views.empty()) continue;
        for (const auto& pv : pass.results[i].per_view) {
          const auto& truth = truths[i].true_thetas[pv.descriptor.view_id];
          composed.row(row++) = view::compose(h, truth).flatten().transpose();
        }
      }
    }

    // intersect on scenes usable in both passes; the per-scene view order
    // is identical, so the kept sequences correspond row by row
    Mat recovered, reference, composed_kept;
    {
      std::set<int> ok_t(rows_t.begin(), rows_t.end());
      std::set<int> ok_0(base_rows.begin(), base_rows.end());
      std::vector<int> keep_t, keep_0;
      for (std::size_t i = 0; i < rows_t.size(); ++i)
        if (ok_0.count(rows_t[i])) keep_t.push_back(static_cast<int>(i));
      for (std::size_t i = 0; i < base_rows.size(); ++i)
        if (ok_t.count(base_rows[i])) keep_0.push_back(static_cast<int>(i));
      if (keep_t.size() != keep_0.size())
        throw ConfigError("equivariance runs disagree on usable scenes");
      recovered.resize(static_cast<int>(keep_t.size()), 6);
      composed_kept.resize(static_cast<int>(keep_t.size()), 6);
      reference.resize(static_cast<int>(keep_0.size()), 6);
      for (std::size_t i = 0; i < keep_t.size(); ++i) {
        recovered.row(i) = vhat_t.row(keep_t[i]);
        composed_kept.row(i) = composed.row(keep_t[i]);
      }
      for (std::size_t i = 0; i < keep_0.size(); ++i) reference.row(i) = vhat0.row(keep_0[i]);
    }

    Mat mapped;
    if (oracle) {
      mapped = composed_kept;
    } else {
      try {
        const metrics::AffineFit fit = metrics::fit_affine_ls(reference, recovered);
        mapped = fit.apply(reference);
      } catch (const RankError&) {
        // with fixed cameras the recovered maps repeat exactly across
        // scenes, so the witness is non-unique; take the minimum-norm fit
        Mat design(reference.rows(), reference.cols() + 1);
        design.leftCols(reference.cols()) = reference;
        design.col(reference.cols()).setOnes();
        Eigen::CompleteOrthogonalDecomposition<Mat> cod(design);
        const Mat sol = cod.solve(recovered);
        mapped = reference * sol.topRows(reference.cols());
        mapped.rowwise() += sol.row(reference.cols());
      }
    }
    const auto rep = metrics::mcc(recovered, mapped);
    scores.push_back(rep.score);
    json e;
    e["transform"] = serialize::to_json(h);
    e["mcc"] = rep.score;
    per_transform.push_back(std::move(e));
  }

  json report = report_skeleton("eval-equivariance", cfg, seed);
  const MeanStd ms = mean_std(scores);
  json results;
  results["n_scenes"] = src.count();
  results["n_transforms"] = cfg.n_transforms;
  results["mean_mcc"] = ms.mean;
  results["std_mcc"] = ms.std_dev;
  results["per_transform"] = std::move(per_transform);
  report["results"] = std::move(results);
  report["timing"] = {{"seconds", now_seconds() - t0}, {"workers", cfg.workers}};

  if (!cfg.out_dir.empty()) {
    write_report(report, cfg.out_dir, "equivariance_report");
    std::vector<std::vector<std::string>> rows;
    for (int t = 0; t < static_cast<int>(scores.size()); ++t)
      rows.push_back({std::to_string(t), fmt(scores[t])});
    write_csv((fs::path(cfg.out_dir) / "equivariance_mcc.csv").string(), "transform,mcc", rows);
  }
  return report;
}

json cmd_views_sweep(const ExperimentConfig& cfg, std::uint64_t seed) {
  SceneSource probe = make_source(cfg, seed);
  const scenegen::Scene first = probe.get(0);
  if (static_cast<int>(first.views.size()) < 4)
    throw ConfigError("views sweep needs a dataset with at least 4 views");
  const double t0 = now_seconds();

  json report = report_skeleton("views-sweep", cfg, seed);
  json rows = json::array();
  std::vector<double> means;
  for (int k = 1; k <= 4; ++k) {
    pipeline::PipelineConfig pcfg = cfg.pipeline;
    pcfg.subset.clear();
    for (int v = 0; v < k; ++v) pcfg.subset.insert(v);
    IdentCore core = identifiability_core(probe, cfg, pcfg,
                                          derive_seed(seed, 0x53EEB000ULL + k), false);
    const MeanStd ms = mean_std(core.scores);
    means.push_back(ms.mean);
    json row;
    row["n_views"] = k;
    row["smcc_mean"] = ms.mean;
    row["smcc_std"] = ms.std_dev;
    row["runs"] = cfg.runs;
    rows.push_back(std::move(row));
  }
  double max_drop = 0.0;
  for (std::size_t k = 0; k + 1 < means.size(); ++k)
    max_drop = std::max(max_drop, means[k] - means[k + 1]);
  json results;
  results["n_scenes"] = probe.count();
  results["rows"] = std::move(rows);
  results["max_smcc_drop"] = max_drop;
  report["results"] = std::move(results);
  report["timing"] = {{"seconds", now_seconds() - t0}, {"workers", cfg.workers}};

  if (!cfg.out_dir.empty()) {
    write_report(report, cfg.out_dir, "views_sweep_report");
    std::vector<std::vector<std::string>> csv;
    for (const auto& row : report.at("results").at("rows"))
      csv.push_back({std::to_string(row.at("n_views").get<int>()),
                     fmt(row.at("smcc_mean").get<double>()),
                     fmt(row.at("smcc_std").get<double>()),
                     std::to_string(row.at("runs").get<int>())});
    write_csv((fs::path(cfg.out_dir) / "views_sweep.csv").string(),
              "n_views,smcc_mean,smcc_std,runs", csv);
  }
  return report;
}

std::vector<std::string> check_asserts(const json& report, const json& thresholds) {
  std::vector<std::string> failures;
  const auto& results = report.at("results");
  for (const auto& [key, value] : thresholds.items()) {
    if (key == "min_mean_smcc") {
      if (results.value("mean_smcc", -1.0) < value.get<double>())
        failures.push_back("mean_smcc below " + value.dump());
    } else if (key == "min_mean_inv_smcc") {
      if (results.value("mean_inv_smcc", -1.0) < value.get<double>())
        failures.push_back("mean_inv_smcc below " + value.dump());
    } else if (key == "min_mean_mcc") {
      if (results.value("mean_mcc", -1.0) < value.get<double>())
        failures.push_back("mean_mcc below " + value.dump());
    } else if (key == "max_smcc_drop") {
      if (results.value("max_smcc_drop", 1.0) > value.get<double>())
        failures.push_back("max_smcc_drop above " + value.dump());
    } else {
      failures.push_back("unknown assert key: " + key);
    }
  }
  return failures;
}

}  // namespace visa::harness
