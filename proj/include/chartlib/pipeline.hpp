#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "chartlib/chart_model.hpp"
#include "chartlib/dataset.hpp"
#include "chartlib/dissimilarity.hpp"
#include "chartlib/evaluation.hpp"
#include "chartlib/geodesic.hpp"
#include "chartlib/render.hpp"
#include "chartlib/training.hpp"

namespace chartlib {

struct PipelineConfig {
  SceneConfig scene;
  DistanceModel model;
  uint32_t k = 20;
  uint32_t realizations = 4;  // sampled bundles r = 1..R (r = 0 is deterministic)
  TrainConfig train;
  ChartMode mode = ChartMode::free_embedding;
  std::vector<uint32_t> hidden_layers{128, 128, 128, 128};
  uint32_t eval_neighborhood = 0;  // 0 -> ceil(0.05 L)
  RenderOptions render;
  uint32_t restrict_array = 0;  // 0 = keep all arrays
  uint32_t l_cap = 5000;        // desk-scale guard
  bool allow_large = false;
  uint64_t seed = 1;
};

PipelineConfig default_config();
PipelineConfig load_config(const std::filesystem::path& file);
void save_config(const PipelineConfig& cfg, const std::filesystem::path& file);

// Stage outputs inside one working directory:
//   dataset/            meta.json, csi.bin, pos.bin, time.bin
//   dissim-{time,adp,fuse}.{bin,json}
//   geo-r<r>/           dist.bin, pred.bin, edges.bin, meta.json
//   model.json, model.bin, trace.csv
//   eval.json, errors.csv, chart.svg

void cmd_synth(const PipelineConfig& cfg, const std::filesystem::path& dir);
void cmd_dissim(const PipelineConfig& cfg, const std::filesystem::path& dir);
void cmd_graph(const PipelineConfig& cfg, const std::filesystem::path& dir);

// Trains one model; the divergence flag propagates through the report.
TrainReport cmd_train(const PipelineConfig& cfg, const std::filesystem::path& dir);

struct SeedRun {
  uint64_t seed = 0;
  double mae = 0.0, cep = 0.0;
  double final_loss = 0.0;
  bool diverged = false;
  bool kept = true;
};

struct SeedSummary {
  std::vector<SeedRun> runs;
  double median_mae = 0.0, median_cep = 0.0;
  uint32_t kept = 0;
};

// Ablation harness: num_seeds independent trainings; runs whose final loss
// exceeds twice the median (or that diverge) are flagged and excluded from
// the reported medians. Keeps the checkpoint of the median-MAE run.
SeedSummary cmd_train_seeds(const PipelineConfig& cfg,
                            const std::filesystem::path& dir, uint32_t num_seeds);

EvalReport cmd_eval(const PipelineConfig& cfg, const std::filesystem::path& dir);
void cmd_render(const PipelineConfig& cfg, const std::filesystem::path& dir);
void cmd_ablate(const PipelineConfig& cfg, const std::filesystem::path& dir,
                uint32_t num_seeds);

// Dataset for the current stage: loaded, optionally restricted to one array,
// guarded by the desk-scale cap.
Dataset load_working_dataset(const PipelineConfig& cfg,
                             const std::filesystem::path& dir);

}  // namespace chartlib
