#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "chartlib/dataset.hpp"

namespace chartlib {

enum class Metric : uint8_t { time = 0, adp = 1, fuse = 2 };

const char* metric_name(Metric m);
Metric metric_from_name(const std::string& name);

// Packed upper-triangular pairwise matrix: entry (i, j) with i < j stored
// row-major, L(L-1)/2 values total. 32-bit floats keep L ~ 2e4 feasible.
struct DissimilarityMatrix {
  uint32_t n = 0;
  Metric tag = Metric::time;
  std::vector<float> packed;

  static size_t pair_index(uint32_t i, uint32_t j, uint32_t n) {
    if (i > j) std::swap(i, j);
    return static_cast<size_t>(i) * (2 * static_cast<size_t>(n) - i - 1) / 2 +
           (j - i - 1);
  }
  float at(uint32_t i, uint32_t j) const {
    return i == j ? 0.0f : packed[pair_index(i, j, n)];
  }
  float& slot(uint32_t i, uint32_t j) { return packed[pair_index(i, j, n)]; }
  size_t pair_count() const {
    return static_cast<size_t>(n) * (n - 1) / 2;
  }
};

// Gaussian distance model d | Delta ~ N(mu(Delta), sigma(Delta)^2).
// time:  mu = mean_speed * Delta,      sigma = max(time_spread * mu, sigma_min)
// adp:   mu = adp_scale * Delta^gamma, sigma = max(adp_spread * mu, sigma_min)
struct DistanceModel {
  double mean_speed = 1.0;    // m/s
  double time_spread = 0.25;  // relative
  double adp_scale = 1.0;     // meters
  double adp_exponent = 1.0;
  double adp_spread = 0.25;   // relative
  double sigma_min = 0.05;    // meters

  void validate() const;
  uint64_t hash() const;
};

struct GaussianMoments {
  double mu = 0.0;
  double sigma = 0.0;
};

double delta_time(double t_i, double t_j);

// ADP mismatch: sum over (b, tap) of one minus the normalized cross-antenna
// correlation power. Range [0, B*T]. A zero-power antenna slice on either
// side scores p = 0 and bumps *zero_power_slices when provided.
double delta_adp(std::span<const cfloat> h_i, std::span<const cfloat> h_j,
                 const ArrayGeometry& geometry,
                 uint64_t* zero_power_slices = nullptr);

struct DissimStats {
  uint64_t zero_power_slices = 0;
};

// Parallel over rows; entries are independent, so results are bit-identical
// for any thread count.
DissimilarityMatrix compute_matrix(const Dataset& ds, Metric metric,
                                   DissimStats* stats = nullptr);

GaussianMoments model_distance(double delta, Metric metric,
                               const DistanceModel& model);

// Fits adp_scale / adp_exponent by log-log least squares against
// time-implied distances over the short-time pair subset.
DistanceModel calibrate_adp_model(const Dataset& ds,
                                  const DissimilarityMatrix& time_matrix,
                                  const DissimilarityMatrix& adp_matrix,
                                  DistanceModel model,
                                  double short_time_quantile = 0.10);

// Per-pair minimum of the two mean-mapped metrics, in meters.
DissimilarityMatrix fuse(const DissimilarityMatrix& time_matrix,
                         const DissimilarityMatrix& adp_matrix,
                         const DistanceModel& model);

// dissim-<tag>.bin: u64 LE count + packed f32 LE; dissim-<tag>.json carries
// the metric tag and the model parameters in effect.
void save_matrix(const DissimilarityMatrix& m, const DistanceModel& model,
                 const std::filesystem::path& dir);
DissimilarityMatrix load_matrix(const std::filesystem::path& dir, Metric metric,
                                DistanceModel* model_out = nullptr);

namespace serial {
// Reference implementation: plain scalar loops, no OpenMP. Kept for tests
// and the kernel benchmark.
DissimilarityMatrix compute_matrix(const Dataset& ds, Metric metric,
                                   DissimStats* stats = nullptr);
}  // namespace serial

}  // namespace chartlib
