// Compares the OpenMP kernels against their serial reference implementations
// and reports wall times plus speedups. Not part of the test suite.

#include <chrono>
#include <cstdio>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "chartlib/dataset.hpp"
#include "chartlib/dissimilarity.hpp"
#include "chartlib/geodesic.hpp"

using namespace chartlib;
using Clock = std::chrono::steady_clock;

namespace {

template <typename Fn>
double time_s(Fn&& fn) {
  const auto t0 = Clock::now();
  fn();
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void report(const char* name, double serial_s, double parallel_s) {
  std::printf("%-28s serial %8.3f s   openmp %8.3f s   speedup %.2fx\n", name,
              serial_s, parallel_s, serial_s / parallel_s);
}

}  // namespace

int main(int argc, char** argv) {
  uint32_t L = 900;
  if (argc > 1) L = static_cast<uint32_t>(std::atoi(argv[1]));
#ifdef _OPENMP
  std::printf("threads: %d, L = %u\n", omp_get_max_threads(), L);
#else
  std::printf("threads: 1 (OpenMP disabled), L = %u\n", L);
#endif

  SceneConfig scene = default_scene(L, 7);
  Dataset ds = synth_scene(scene);

  DissimilarityMatrix adp_par, adp_ser, time_m;
  const double t_adp_ser = time_s([&] { adp_ser = serial::compute_matrix(ds, Metric::adp); });
  const double t_adp_par = time_s([&] { adp_par = compute_matrix(ds, Metric::adp); });
  report("adp dissimilarity matrix", t_adp_ser, t_adp_par);
  bool same = adp_par.packed == adp_ser.packed;

  time_m = compute_matrix(ds, Metric::time);
  DistanceModel model;
  model.mean_speed = scene.mean_speed;
  model = calibrate_adp_model(ds, time_m, adp_par, model);
  DissimilarityMatrix fused = fuse(time_m, adp_par, model);
  KnnGraph graph = knn_graph(fused, 20);
  ensure_connected(graph, fused);

  GeodesicRealization apsp_par, apsp_ser;
  const double t_apsp_ser = time_s([&] { apsp_ser = serial::all_pairs_shortest(graph); });
  const double t_apsp_par = time_s([&] { apsp_par = all_pairs_shortest(graph); });
  report("all-pairs shortest paths", t_apsp_ser, t_apsp_par);
  same = same && apsp_par.dist == apsp_ser.dist;

  std::printf("serial/openmp outputs bit-identical: %s\n", same ? "yes" : "NO");
  return same ? 0 : 1;
}
