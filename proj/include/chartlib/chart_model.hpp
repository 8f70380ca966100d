#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "chartlib/dataset.hpp"

namespace chartlib {

// Per-datapoint CSI features: interleaved (re, im) of the CIR in index order
// [b][r][c][tap], scaled so the mean square per real component is 1 (an
// all-zero tensor stays all-zero). Invariant to global complex scaling.
struct FeatureMatrix {
  uint32_t rows = 0;
  uint32_t dim = 0;
  std::vector<double> values;  // rows * dim

  std::span<const double> row(uint32_t l) const {
    return {values.data() + static_cast<size_t>(l) * dim, dim};
  }
};

std::vector<double> feature_map(std::span<const cfloat> cir);
FeatureMatrix feature_map_all(const Dataset& ds);

enum class ChartMode : uint8_t { parametric = 0, free_embedding = 1 };

// Forward charting function in two modes:
//  - parametric: affine layers with softplus hidden activations, identity
//    output, exact reverse-mode gradients;
//  - free embedding: one trainable 2D point per datapoint (the parameters
//    ARE the chart), used as the optimizer oracle.
class ChartModel {
 public:
  static ChartModel make_parametric(uint32_t input_dim,
                                    std::span<const uint32_t> hidden,
                                    uint64_t seed);
  static ChartModel make_free(uint32_t num_points, double init_scale,
                              uint64_t seed);

  ChartMode mode() const { return mode_; }
  uint32_t input_dim() const { return dims_.front(); }
  uint32_t num_points() const { return mode_ == ChartMode::free_embedding
                                           ? static_cast<uint32_t>(params_.size() / 2)
                                           : 0; }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  Vec2 forward(std::span<const double> features) const;  // parametric only
  Vec2 coord(uint32_t index) const;                      // free mode only

  // Row l is the forward pass of datapoint l. Free mode requires
  // features.rows == num_points (or rows == 0 to take the whole table).
  std::vector<Vec2> forward_all(const FeatureMatrix& features) const;

  struct Cache {
    std::vector<std::vector<double>> pre;  // pre-activations per hidden layer
    std::vector<std::vector<double>> act;  // activations per hidden layer
    uint32_t rows = 0;
  };
  std::vector<Vec2> forward_all(const FeatureMatrix& features, Cache& cache) const;

  // Exact reverse-mode gradient of a scalar loss with upstream dL/dz.
  // Accumulation order is fixed, so results are bit-identical for any
  // thread count.
  std::vector<double> backward(const FeatureMatrix& features, const Cache& cache,
                               std::span<const Vec2> upstream) const;

  void save(const std::filesystem::path& dir) const;
  static ChartModel load(const std::filesystem::path& dir);

  std::span<const uint32_t> layer_dims() const { return dims_; }

 private:
  ChartMode mode_ = ChartMode::free_embedding;
  std::vector<uint32_t> dims_;       // parametric: {in, hidden..., 2}
  std::vector<size_t> w_offset_, b_offset_;
  std::vector<double> params_;
  uint64_t seed_ = 0;

  void build_offsets();
};

// Loss evaluator for gradient checking: fills dL/dz when grad != nullptr
// and returns the scalar loss.
using LossEvaluator =
    std::function<double(std::span<const Vec2> z, std::vector<Vec2>* grad)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  uint32_t checked = 0;
  bool passed(double tolerance) const { return max_rel_error < tolerance; }
};

// Compares backward() against central finite differences (step 1e-5) on up
// to max_params randomly chosen parameters.
GradCheckReport grad_check(ChartModel& model, const FeatureMatrix& features,
                           const LossEvaluator& loss, uint32_t max_params = 200,
                           uint64_t seed = 17);

}  // namespace chartlib
