#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "chartlib/chart_model.hpp"
#include "chartlib/geodesic.hpp"

namespace chartlib {

enum class LossKind : uint8_t { siam = 0, geo = 1, geo_unc = 2 };

const char* loss_name(LossKind k);
LossKind loss_from_name(const std::string& name);

struct SubsampleSchedule {
  bool start_full = true;              // warm up with s = M (Siamese-equivalent)
  double target_segment_length = 2.0;  // meters of dissimilarity per super-hop
  uint32_t decay_steps = 0;            // 0 -> total training steps
  double warmup_fraction = 0.1;        // of decay_steps
};

struct TrainConfig {
  LossKind loss = LossKind::geo_unc;
  bool use_acc = true;
  double beta = 0.2;           // meters, loss stabilizer
  double mu_acc = 0.0;         // m/s^2
  double sigma_acc = 1.0;      // m/s^2
  double acc_weight = 1.0;     // lambda
  uint32_t batch_pairs = 2000;
  uint32_t steps = 3000;
  double learning_rate = 1e-3;  // halved after each third of training
  SubsampleSchedule subsample;
  uint64_t seed = 1;
  double free_init_scale = 1.0;

  void validate() const;
};

struct TrainReport {
  std::vector<double> loss_trace;    // length = steps on successful runs
  std::vector<double> dissim_trace;
  std::vector<double> acc_trace;
  double final_loss = 0.0;
  bool diverged = false;
  double wall_seconds = 0.0;
};

// One batch element: a realization shortest path with its targets.
struct PathSample {
  std::vector<uint32_t> q;  // q.front() = i, q.back() = j
  double delta_geo = 0.0;
  double mu_geo = 0.0;
  double sigma_geo = 0.0;
  uint32_t s = 1;  // sub-sampling factor in effect for this step
};

// All losses return the batch sum and accumulate dL/dz into grad (size L)
// when grad != nullptr. Gradient scatter order is fixed by sample order, so
// results are bit-identical across thread counts.
double loss_siam(std::span<const Vec2> z, std::span<const PathSample> batch,
                 double beta, std::vector<Vec2>* grad);
double loss_geo(std::span<const Vec2> z, std::span<const PathSample> batch,
                double beta, std::vector<Vec2>* grad);
double loss_geo_unc(std::span<const Vec2> z, std::span<const PathSample> batch,
                    std::vector<Vec2>* grad);

// Chart-space length of the s-sub-sampled path; the overload accumulates
// d(rho)/dz into grad.
double rho_geo(std::span<const Vec2> z, std::span<const uint32_t> q, uint32_t s);
double rho_geo(std::span<const Vec2> z, std::span<const uint32_t> q, uint32_t s,
               std::vector<Vec2>& grad);

// Folded-normal negative log-likelihood of finite-difference accelerations,
// averaged over valid indices; terms never span a trajectory break.
double loss_acc(std::span<const Vec2> z, std::span<const double> timestamps,
                std::span<const uint32_t> trajectory_breaks, double mu_acc,
                double sigma_acc, std::vector<Vec2>* grad);

// Warm-up at s = M, then geometric decay towards the per-path target
// s* = floor(M * target_segment_length / delta_geo), floored at 1.
uint32_t schedule_subsample(uint32_t step, uint32_t hops, double delta_geo,
                            const SubsampleSchedule& schedule,
                            uint32_t total_steps);

// Uniform (i, j) pairs with i != j, paths reconstructed on the fly from the
// round-robin realization (step mod R). Moments are filled when
// with_moments is set. Deterministic given (seed, step).
std::vector<PathSample> sample_batch(
    std::span<const GeodesicRealization> realizations, uint32_t batch_pairs,
    uint32_t step, uint64_t seed, bool with_moments,
    const DissimilarityMatrix* time_matrix, const DissimilarityMatrix* adp_matrix,
    const DistanceModel* model);

struct TrainArtifacts {
  std::vector<const GeodesicRealization*> realizations;  // >= 1
  const DissimilarityMatrix* time_matrix = nullptr;  // required for geo_unc
  const DissimilarityMatrix* adp_matrix = nullptr;
  DistanceModel model;
};

// Batch-wise loss training: forward_all -> dissimilarity loss (+ lambda *
// acceleration loss) -> backward -> Adam step, with the learning rate halved
// after each third of training.
TrainReport train(const Dataset& ds, const TrainArtifacts& artifacts,
                  ChartModel& model, const TrainConfig& config);

void save_trace(const TrainReport& report, const std::filesystem::path& file);

}  // namespace chartlib
