// chartcli: channel-charting pipeline driver.
//
// Subcommands chain through one working directory:
//   synth -> dissim -> graph -> train -> eval -> render     (and: ablate)
//
// Exit codes: 0 ok, 2 bad config/arguments, 3 training divergence, 4 I/O.

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "chartlib/io_util.hpp"
#include "chartlib/pipeline.hpp"

using namespace chartlib;

int main(int argc, char** argv) {
  CLI::App app{"dissimilarity-metric channel charting pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "run";
  uint64_t seed = 0;
  bool seed_set = false;
  int threads = 0;
  app.add_option("--config", config_path, "pipeline config JSON");
  app.add_option("--out", out_dir, "working directory for all stage artifacts");
  app.add_option("--seed", seed, "override every stage seed")
      ->each([&](const std::string&) { seed_set = true; });
  app.add_option("--threads", threads, "cap worker threads (default: all cores)");

  auto* synth = app.add_subcommand("synth", "generate the synthetic scene dataset");
  uint32_t synth_points = 0;
  synth->add_option("--points", synth_points, "override scene num_points");

  auto* dissim = app.add_subcommand("dissim", "pairwise dissimilarity matrices + fusion");
  auto* graph = app.add_subcommand("graph", "geodesic graph bundles (deterministic + sampled)");

  auto* train = app.add_subcommand("train", "train the forward charting function");
  std::string loss_flag, mode_flag;
  bool acc_on = false, acc_off = false;
  uint32_t num_seeds = 1;
  uint32_t steps_flag = 0;
  train->add_option("--loss", loss_flag, "siam | geo | geo-unc");
  train->add_flag("--acc", acc_on, "enable the acceleration constraint");
  train->add_flag("--no-acc", acc_off, "disable the acceleration constraint");
  train->add_option("--mode", mode_flag, "parametric | free");
  train->add_option("--seeds", num_seeds, "ablation harness: N seeds, median metrics");
  train->add_option("--steps", steps_flag, "override training steps");
  std::string subsample_init;
  train->add_option("--subsample-init", subsample_init, "full | target");

  auto* eval = app.add_subcommand("eval", "align to ground truth and report metrics");
  auto* render = app.add_subcommand("render", "write the position-colorized chart SVG");

  auto* ablate = app.add_subcommand("ablate", "loss-variant grid over N seeds");
  uint32_t ablate_seeds = 5;
  ablate->add_option("--seeds", ablate_seeds, "seeds per variant");

  uint32_t array_flag = 0;
  app.add_option("--array", array_flag, "restrict to one antenna array (1-based; 0 = all)");

  CLI11_PARSE(app, argc, argv);

#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
#endif

  try {
    PipelineConfig cfg =
        config_path.empty() ? default_config() : load_config(config_path);
    if (seed_set) {
      cfg.seed = seed;
      cfg.scene.seed = seed;
      cfg.train.seed = seed;
    }
    if (array_flag > 0) cfg.restrict_array = array_flag;
    if (synth_points > 0) cfg.scene.num_points = synth_points;
    if (!loss_flag.empty()) cfg.train.loss = loss_from_name(loss_flag);
    if (acc_on) cfg.train.use_acc = true;
    if (acc_off) cfg.train.use_acc = false;
    if (!mode_flag.empty()) {
      if (mode_flag == "parametric") cfg.mode = ChartMode::parametric;
      else if (mode_flag == "free") cfg.mode = ChartMode::free_embedding;
      else throw std::invalid_argument("--mode must be parametric or free");
    }
    if (steps_flag > 0) cfg.train.steps = steps_flag;
    if (!subsample_init.empty())
      cfg.train.subsample.start_full = subsample_init == "full";

    if (synth->parsed()) cmd_synth(cfg, out_dir);
    if (dissim->parsed()) cmd_dissim(cfg, out_dir);
    if (graph->parsed()) cmd_graph(cfg, out_dir);
    if (train->parsed()) {
      if (num_seeds > 1) {
        cmd_train_seeds(cfg, out_dir, num_seeds);
      } else {
        TrainReport report = cmd_train(cfg, out_dir);
        if (report.diverged) return 3;
      }
    }
    if (eval->parsed()) cmd_eval(cfg, out_dir);
    if (render->parsed()) cmd_render(cfg, out_dir);
    if (ablate->parsed()) cmd_ablate(cfg, out_dir, ablate_seeds);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  }
  return 0;
}
