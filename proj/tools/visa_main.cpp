#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "visa/error.hpp"
#include "visa/harness.hpp"
#include "visa/version.hpp"

namespace {

using visa::harness::json;

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw visa::ConfigError("cannot read " + path);
  return json::parse(in);
}

struct CommonOpts {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir;
  int workers = 0;  // 0: take the config value (or 1)
  std::string assert_path;
  bool summary = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "JSON experiment config");
  cmd->add_option("--seed", opts.seed, "master seed")->required();
  cmd->add_option("--out", opts.out_dir, "output directory");
  cmd->add_option("--workers", opts.workers, "worker thread count");
  cmd->add_option("--assert", opts.assert_path, "JSON threshold file; exit 3 on violation");
}

visa::harness::ExperimentConfig resolve_config(const CommonOpts& opts) {
  visa::harness::ExperimentConfig cfg;
  if (!opts.config_path.empty())
    cfg = visa::harness::config_from_json(load_json_file(opts.config_path));
  if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
  if (opts.workers > 0) cfg.workers = opts.workers;
  if (const char* env = std::getenv("VISA_WORKERS")) {
    const int w = std::atoi(env);
    if (w > 0) cfg.workers = w;
  }
  if (cfg.workers < 1) cfg.workers = 1;
  return cfg;
}

int finish(const json& report, const CommonOpts& opts) {
  if (opts.summary && report.contains("results") &&
      report.at("results").contains("summary")) {
    std::cout << report.at("results").at("summary").dump(2) << std::endl;
  } else {
    json brief = report;
    brief.erase("config");
    std::cout << brief.dump(2) << std::endl;
  }
  if (!opts.assert_path.empty()) {
    const auto failures = visa::harness::check_asserts(report, load_json_file(opts.assert_path));
    if (!failures.empty()) {
      for (const auto& f : failures) std::cerr << "assert failed: " << f << std::endl;
      return 3;
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-view slot mixture pipeline"};
  app.set_version_flag("--version", visa::kVersion);
  app.require_subcommand(1);

  CommonOpts opts;
  std::string format;

  auto* gen = app.add_subcommand("generate", "sample a synthetic dataset");
  add_common(gen, opts);
  gen->add_option("--scenes", "override scene count");
  gen->add_option("--format", format, "set to 'summary' to print dataset statistics");

  auto* infer = app.add_subcommand("infer", "run inference over a dataset");
  add_common(infer, opts);

  auto* ident = app.add_subcommand("eval-identifiability", "cross-run content agreement");
  add_common(ident, opts);

  auto* invar = app.add_subcommand("eval-invariance", "cross-subset content agreement");
  add_common(invar, opts);

  auto* equiv = app.add_subcommand("eval-equivariance", "view recovery under input transforms");
  add_common(equiv, opts);

  auto* sweep = app.add_subcommand("views-sweep", "identifiability for |A| in 1..4");
  add_common(sweep, opts);

  CLI11_PARSE(app, argc, argv);

  try {
    auto cfg = resolve_config(opts);
    opts.summary = format == "summary";
    json report;
    if (gen->parsed()) {
      if (gen->count("--scenes")) cfg.n_scenes = std::stoi(gen->get_option("--scenes")->results()[0]);
      report = visa::harness::cmd_generate(cfg, opts.seed);
    } else if (infer->parsed()) {
      report = visa::harness::cmd_infer(cfg, opts.seed);
    } else if (ident->parsed()) {
      report = visa::harness::cmd_eval_identifiability(cfg, opts.seed);
    } else if (invar->parsed()) {
      report = visa::harness::cmd_eval_invariance(cfg, opts.seed);
    } else if (equiv->parsed()) {
      report = visa::harness::cmd_eval_equivariance(cfg, opts.seed);
    } else if (sweep->parsed()) {
      report = visa::harness::cmd_views_sweep(cfg, opts.seed);
    }
    return finish(report, opts);
  } catch (const visa::ConfigError& e) {
    std::cerr << "config error: " << e.what() << std::endl;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  }
}
