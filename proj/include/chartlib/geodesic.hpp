#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "chartlib/dissimilarity.hpp"

namespace chartlib {

// Undirected k-neighbors graph in CSR form; every edge is stored in both
// directions. Neighbor lists are sorted by index.
struct KnnGraph {
  uint32_t n = 0;
  std::vector<uint32_t> offsets;     // n + 1
  std::vector<uint32_t> neighbors;   // 2 * edge count
  std::vector<float> weights;
  std::vector<Metric> edge_metric;   // which metric supplied each weight

  uint32_t degree(uint32_t v) const { return offsets[v + 1] - offsets[v]; }
  std::span<const uint32_t> neighbors_of(uint32_t v) const {
    return {neighbors.data() + offsets[v], degree(v)};
  }
  // Index into neighbors/weights/edge_metric, or -1 when absent.
  int64_t find_edge(uint32_t u, uint32_t v) const;
  size_t edge_count() const { return neighbors.size() / 2; }
};

inline constexpr uint32_t kPredSource = 0xfffffffeu;
inline constexpr uint32_t kPredUnreachable = 0xffffffffu;

struct GeodesicRealization {
  KnnGraph graph;
  uint32_t n = 0;
  std::vector<float> dist;      // n*n row-major, symmetric
  std::vector<uint32_t> pred;   // n*n row-major; pred[i*n+j] on path i -> j

  float dist_at(uint32_t i, uint32_t j) const {
    return dist[static_cast<size_t>(i) * n + j];
  }
  uint32_t pred_at(uint32_t i, uint32_t j) const {
    return pred[static_cast<size_t>(i) * n + j];
  }
};

struct PathMoments {
  double mu_geo = 0.0;
  double sigma_geo = 0.0;
  uint32_t hops = 0;
};

// Each vertex contributes edges to its k smallest-weight partners (ties
// broken by lower index); the edge set is the union over both endpoints.
KnnGraph knn_graph(const DissimilarityMatrix& matrix, uint32_t k);

// Same selection rule on raw packed weights with per-pair metric tags.
KnnGraph knn_graph_packed(std::span<const float> packed,
                          std::span<const Metric> tags, uint32_t n, uint32_t k);

// Adds minimal cross-component edges until connected; returns the component
// count before bridging.
uint32_t ensure_connected(KnnGraph& graph, const DissimilarityMatrix& matrix);
uint32_t ensure_connected_packed(KnnGraph& graph, std::span<const float> packed,
                                 std::span<const Metric> tags);

// Per-source Dijkstra, parallel over sources. Distances are symmetrized to
// the lower-source value so float rounding cannot break symmetry.
GeodesicRealization all_pairs_shortest(KnnGraph graph);

// Vertex sequence from i to j (inclusive); throws on unreachable.
std::vector<uint32_t> reconstruct_path(const GeodesicRealization& r,
                                       uint32_t i, uint32_t j);

// (q_0, q_s, q_2s, ..., q_M); the final super-hop is clipped at q_M.
std::vector<uint32_t> subsample_path(std::span<const uint32_t> q, uint32_t s);

// Draws one Gaussian realization of d | Delta per metric and pair (negatives
// clamped to zero), keeps the per-pair minimum with its winning metric, then
// builds the connected k-NN graph and shortest paths. sigma == 0 degenerates
// to the deterministic fused pipeline. realization_index seeds the draws, so
// bundles are reproducible individually.
GeodesicRealization sample_realization(const DissimilarityMatrix& time_matrix,
                                       const DissimilarityMatrix& adp_matrix,
                                       const DistanceModel& model, uint32_t k,
                                       uint32_t realization_index, uint64_t seed,
                                       uint32_t* components_before = nullptr);

std::vector<GeodesicRealization> sample_realizations(
    const DissimilarityMatrix& time_matrix, const DissimilarityMatrix& adp_matrix,
    const DistanceModel& model, uint32_t k, uint32_t count, uint64_t seed);

// Deterministic pipeline: k-NN graph of per-pair minimum mean-mapped
// dissimilarities (identical to a sigma == 0 realization).
GeodesicRealization deterministic_realization(
    const DissimilarityMatrix& time_matrix, const DissimilarityMatrix& adp_matrix,
    const DistanceModel& model, uint32_t k, uint32_t* components_before = nullptr);

// Gaussian moments of the summed path length. Time-derived edges are treated
// as perfectly correlated (their sigmas add linearly), ADP-derived edges as
// independent (variances add); cross-metric covariance is zero.
PathMoments path_moments(std::span<const uint32_t> q, const KnnGraph& graph,
                         const DissimilarityMatrix& time_matrix,
                         const DissimilarityMatrix& adp_matrix,
                         const DistanceModel& model);

// Bundle directory: dist.bin, pred.bin (row-major full L x L), edges.bin
// (u32 i, u32 j, u32 metric triples), meta.json.
void save_realization(const GeodesicRealization& r, uint32_t k, uint64_t seed,
                      uint64_t model_hash, const std::filesystem::path& dir);
GeodesicRealization load_realization(const std::filesystem::path& dir);

namespace serial {
// Reference all-pairs Dijkstra without OpenMP (same per-source routine).
GeodesicRealization all_pairs_shortest(KnnGraph graph);
}  // namespace serial

}  // namespace chartlib
