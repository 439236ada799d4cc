// scfusion: multi-camera BEV perception harness.
//
// Verbs: simulate, train, run, eval, ablate, dump, rerun. Exit codes are a
// stable contract: 0 success, 1 validation, 2 I/O, 3 numerical failure.

#include <CLI11.hpp>
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "scfusion/errors.hpp"
#include "scfusion/pipeline.hpp"

namespace {

struct Cli {
  std::string config;
  std::string out;
  uint64_t seed = 0;
  bool seed_set = false;
  int threads = 1;
  std::string log_level = "info";

  std::string scene_dir;
  std::string params;
  std::string gt_csv;
  std::string tracks_csv;
  std::string input;
  std::string scene_json;
  std::string manifest;
  int epochs = 200;
};

void add_common(CLI::App* cmd, Cli& a, bool wants_out) {
  cmd->add_option("--config", a.config, "Config file (JSON)");
  auto* seed = cmd->add_option("--seed", a.seed, "Override the config seed");
  seed->each([&a](const std::string&) { a.seed_set = true; });
  if (wants_out) cmd->add_option("--out", a.out, "Output directory")->required();
  cmd->add_option("--threads", a.threads, "Worker threads (currently single-threaded)");
  cmd->add_option("--log-level", a.log_level, "error, warn, info, or debug")
      ->check(CLI::IsMember({"error", "warn", "info", "debug"}));
}

scf::pipeline::CommonOpts common_opts(const Cli& a) {
  scf::pipeline::CommonOpts o;
  if (a.seed_set) o.seed = a.seed;
  o.threads = a.threads;
  o.log_level = a.log_level;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scfusion: sparse multi-camera BEV detection and tracking"};
  app.require_subcommand(1);
  Cli a;

  CLI::App* sim = app.add_subcommand("simulate", "Generate a synthetic multi-camera scene");
  add_common(sim, a, true);

  CLI::App* train = app.add_subcommand("train", "Train the detection head on a scene");
  add_common(train, a, true);
  train->add_option("--scene", a.scene_dir, "Scene directory")->required();
  train->add_option("--epochs", a.epochs, "Training epochs")->default_val(200);

  CLI::App* run = app.add_subcommand("run", "Detect and track with trained parameters");
  add_common(run, a, true);
  run->add_option("--scene", a.scene_dir, "Scene directory")->required();
  run->add_option("--params", a.params, "Trained parameter manifest (JSON)")->required();

  CLI::App* eval = app.add_subcommand("eval", "Score tracks against ground truth");
  add_common(eval, a, true);
  eval->add_option("--gt", a.gt_csv, "Ground-truth CSV")->required();
  eval->add_option("--tracks", a.tracks_csv, "Tracks CSV")->required();

  CLI::App* ablate = app.add_subcommand("ablate", "Train and score the four-row ablation table");
  add_common(ablate, a, true);
  ablate->add_option("--scene", a.scene_dir, "Scene directory")->required();
  ablate->add_option("--epochs", a.epochs, "Training epochs per row")->default_val(60);

  CLI::App* dump = app.add_subcommand("dump", "Render a tensor to PGM or trajectories to SVG");
  dump->add_option("--input", a.input, "A .bevf tensor or a tracks/gt .csv")->required();
  dump->add_option("--out", a.out, "Output image path")->required();
  dump->add_option("--scene", a.scene_json, "scene.json supplying the grid extent");

  CLI::App* rerun = app.add_subcommand("rerun", "Reproduce a run from its manifest");
  rerun->add_option("--manifest", a.manifest, "manifest.json of a previous run")->required();
  rerun->add_option("--out", a.out, "Redirect outputs (default: the manifest's out_dir)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const scf::pipeline::CommonOpts opts = common_opts(a);
    if (sim->parsed())
      scf::pipeline::cmd_simulate(a.config, a.out, opts);
    else if (train->parsed())
      scf::pipeline::cmd_train(a.scene_dir, a.config, a.out, a.epochs, opts);
    else if (run->parsed())
      scf::pipeline::cmd_run(a.scene_dir, a.params, a.config, a.out, opts);
    else if (eval->parsed())
      scf::pipeline::cmd_eval(a.gt_csv, a.tracks_csv, a.config, a.out, opts);
    else if (ablate->parsed())
      scf::pipeline::cmd_ablate(a.scene_dir, a.config, a.out, a.epochs, opts);
    else if (dump->parsed())
      scf::pipeline::cmd_dump(a.input, a.out, a.scene_json);
    else if (rerun->parsed())
      scf::pipeline::cmd_rerun(a.manifest, a.out);
  } catch (const scf::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const scf::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const scf::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
