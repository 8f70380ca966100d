#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "chartlib/geodesic.hpp"
#include "support/oracles.hpp"

using namespace chartlib;

namespace {

// Packed matrix from a full weight table (upper triangle).
DissimilarityMatrix matrix_from_table(const std::vector<std::vector<double>>& w,
                                      Metric tag = Metric::time) {
  DissimilarityMatrix m;
  m.n = static_cast<uint32_t>(w.size());
  m.tag = tag;
  for (uint32_t i = 0; i < m.n; ++i)
    for (uint32_t j = i + 1; j < m.n; ++j)
      m.packed.push_back(static_cast<float>(w[i][j]));
  return m;
}

std::vector<std::vector<double>> random_weight_table(uint32_t n, Rng& rng) {
  // Dyadic weights so float path sums are exact.
  std::vector<std::vector<double>> w(n, std::vector<double>(n, 0.0));
  for (uint32_t i = 0; i < n; ++i)
    for (uint32_t j = i + 1; j < n; ++j)
      w[i][j] = w[j][i] = static_cast<double>(1 + rng.below(64)) / 8.0;
  return w;
}

std::set<std::pair<uint32_t, uint32_t>> edge_set(const KnnGraph& g) {
  std::set<std::pair<uint32_t, uint32_t>> out;
  for (uint32_t v = 0; v < g.n; ++v)
    for (uint32_t u : g.neighbors_of(v))
      out.insert({std::min(u, v), std::max(u, v)});
  return out;
}

}  // namespace

TEST_CASE("knn_graph selects the nearest partner per vertex") {
  const std::vector<std::vector<double>> w{{0, 1, 5, 6},
                                           {1, 0, 4, 7},
                                           {5, 4, 0, 2},
                                           {6, 7, 2, 0}};
  DissimilarityMatrix m = matrix_from_table(w);
  KnnGraph g = knn_graph(m, 1);
  auto edges = edge_set(g);
  // Brute-force selection, union-symmetrized.
  std::set<std::pair<uint32_t, uint32_t>> expect;
  for (uint32_t v = 0; v < 4; ++v)
    for (uint32_t u : oracle::brute_knn(v, 4, 1, w))
      expect.insert({std::min(u, v), std::max(u, v)});
  CHECK(edges == expect);
  CHECK(edges == std::set<std::pair<uint32_t, uint32_t>>{{0, 1}, {2, 3}});
}

TEST_CASE("knn_graph with k = L-1 is complete") {
  Rng rng(3);
  auto w = random_weight_table(6, rng);
  KnnGraph g = knn_graph(matrix_from_table(w), 5);
  CHECK(g.edge_count() == 15);
}

TEST_CASE("knn_graph breaks weight ties toward the lower index") {
  // All weights equal: each vertex must pick the k lowest-indexed partners.
  std::vector<std::vector<double>> w(5, std::vector<double>(5, 1.0));
  KnnGraph g = knn_graph(matrix_from_table(w), 2);
  auto edges = edge_set(g);
  std::set<std::pair<uint32_t, uint32_t>> expect{
      {0, 1}, {0, 2}, {1, 2}, {0, 3}, {1, 3}, {0, 4}, {1, 4}};
  CHECK(edges == expect);
}

TEST_CASE("ensure_connected leaves a connected graph unchanged") {
  Rng rng(4);
  auto w = random_weight_table(8, rng);
  DissimilarityMatrix m = matrix_from_table(w);
  KnnGraph g = knn_graph(m, 3);
  auto before = edge_set(g);
  const uint32_t comps = ensure_connected(g, m);
  CHECK(comps == 1);
  CHECK(edge_set(g) == before);
}

TEST_CASE("ensure_connected adds exactly the minimal bridge") {
  // Two tight clusters {0,1,2} and {3,4,5}, far apart.
  std::vector<std::vector<double>> w(6, std::vector<double>(6, 100.0));
  auto set_w = [&](uint32_t a, uint32_t b, double v) { w[a][b] = w[b][a] = v; };
  set_w(0, 1, 1.0); set_w(0, 2, 1.5); set_w(1, 2, 1.2);
  set_w(3, 4, 1.1); set_w(3, 5, 1.4); set_w(4, 5, 1.3);
  set_w(2, 3, 42.0);  // the cheapest cross edge
  set_w(1, 4, 60.0);
  DissimilarityMatrix m = matrix_from_table(w);
  KnnGraph g = knn_graph(m, 2);
  auto before = edge_set(g);
  REQUIRE(!before.contains({2u, 3u}));

  const uint32_t comps = ensure_connected(g, m);
  CHECK(comps == 2);
  auto after = edge_set(g);
  CHECK(after.size() == before.size() + 1);
  CHECK(after.contains({2u, 3u}));

  // Brute force over cross pairs confirms (2,3) is minimal.
  double best = 1e18;
  for (uint32_t a : {0u, 1u, 2u})
    for (uint32_t b : {3u, 4u, 5u}) best = std::min(best, w[a][b]);
  CHECK(best == 42.0);
}

TEST_CASE("all_pairs_shortest on the four-vertex example") {
  std::vector<std::vector<double>> w(4, std::vector<double>(4, 50.0));
  auto set_w = [&](uint32_t a, uint32_t b, double v) { w[a][b] = w[b][a] = v; };
  set_w(0, 1, 1.0); set_w(1, 2, 1.0); set_w(0, 2, 3.0); set_w(2, 3, 1.0);
  DissimilarityMatrix m = matrix_from_table(w);
  KnnGraph g = knn_graph(m, 3);  // complete on 4 vertices
  GeodesicRealization r = all_pairs_shortest(g);
  CHECK(r.dist_at(0, 3) == 3.0f);  // 0-1-2-3
  auto q = reconstruct_path(r, 0, 3);
  CHECK(q == std::vector<uint32_t>{0, 1, 2, 3});
}

TEST_CASE("single edge graph") {
  std::vector<std::vector<double>> w{{0, 2.5}, {2.5, 0}};
  KnnGraph g = knn_graph(matrix_from_table(w), 1);
  GeodesicRealization r = all_pairs_shortest(g);
  CHECK(r.dist_at(0, 1) == 2.5f);
  CHECK(r.dist_at(1, 0) == 2.5f);
  CHECK(r.dist_at(0, 0) == 0.0f);
}

TEST_CASE("all_pairs_shortest equals the cubic oracle on random small graphs") {
  Rng rng(7);
  for (int trial = 0; trial < 60; ++trial) {
    const uint32_t n = 4 + static_cast<uint32_t>(rng.below(7));  // 4..10
    auto w = random_weight_table(n, rng);
    const uint32_t k = 1 + static_cast<uint32_t>(rng.below(n - 1));
    DissimilarityMatrix m = matrix_from_table(w);
    KnnGraph g = knn_graph(m, k);
    ensure_connected(g, m);

    // Oracle sees only the kept edges.
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> kept(n, std::vector<double>(n, inf));
    for (uint32_t v = 0; v < n; ++v)
      for (uint32_t idx = g.offsets[v]; idx < g.offsets[v + 1]; ++idx)
        kept[v][g.neighbors[idx]] = g.weights[idx];
    auto expect = oracle::cubic_apsp(n, kept);

    GeodesicRealization r = all_pairs_shortest(g);
    for (uint32_t i = 0; i < n; ++i)
      for (uint32_t j = 0; j < n; ++j)
        CHECK(r.dist_at(i, j) == static_cast<float>(expect[i * n + j]));

    // The serial reference produces identical bytes.
    GeodesicRealization rs = serial::all_pairs_shortest(g);
    CHECK(rs.dist == r.dist);
    CHECK(rs.pred == r.pred);
  }
}

TEST_CASE("reconstruct_path handles the trivial and multi-hop cases") {
  // Chain 5-9-7-8 cheapest; everything else expensive.
  const uint32_t n = 10;
  std::vector<std::vector<double>> w(n, std::vector<double>(n, 90.0));
  auto set_w = [&](uint32_t a, uint32_t b, double v) { w[a][b] = w[b][a] = v; };
  set_w(5, 9, 1.0);
  set_w(9, 7, 1.0);
  set_w(7, 8, 1.0);
  DissimilarityMatrix m = matrix_from_table(w);
  KnnGraph g = knn_graph(m, 2);
  ensure_connected(g, m);
  GeodesicRealization r = all_pairs_shortest(g);

  CHECK(reconstruct_path(r, 4, 4) == std::vector<uint32_t>{4});
  auto q = reconstruct_path(r, 5, 8);
  CHECK(q == std::vector<uint32_t>{5, 9, 7, 8});
  CHECK(q.size() - 1 == 3);  // M = 3 hops

  SUBCASE("path weights sum to the stored distance") {
    Rng rng(9);
    for (int t = 0; t < 100; ++t) {
      const uint32_t i = static_cast<uint32_t>(rng.below(n));
      const uint32_t j = static_cast<uint32_t>(rng.below(n));
      auto path = reconstruct_path(r, i, j);
      double sum = 0.0;
      for (size_t mth = 1; mth < path.size(); ++mth) {
        const int64_t e = r.graph.find_edge(path[mth - 1], path[mth]);
        REQUIRE(e >= 0);
        sum += r.graph.weights[e];
      }
      CHECK(sum == doctest::Approx(r.dist_at(i, j)).epsilon(1e-5));
    }
  }
}

TEST_CASE("subsample_path strides and clips") {
  const std::vector<uint32_t> q{5, 9, 7, 8};
  CHECK(subsample_path(q, 2) == std::vector<uint32_t>{5, 7, 8});
  CHECK(subsample_path(q, 1) == q);
  CHECK(subsample_path(q, 3) == std::vector<uint32_t>{5, 8});
  CHECK(subsample_path(q, 10) == std::vector<uint32_t>{5, 8});
  const std::vector<uint32_t> single{3};
  CHECK(subsample_path(single, 2) == single);
  const std::vector<uint32_t> empty;
  CHECK_THROWS_AS(subsample_path(empty, 1), std::invalid_argument);
  CHECK_THROWS_AS(subsample_path(q, 0), std::invalid_argument);

  // ceil(M/s) + 1 vertices for random cases.
  Rng rng(17);
  for (int t = 0; t < 50; ++t) {
    const uint32_t M = 1 + static_cast<uint32_t>(rng.below(30));
    std::vector<uint32_t> path(M + 1);
    for (uint32_t v = 0; v <= M; ++v) path[v] = v;
    const uint32_t s = 1 + static_cast<uint32_t>(rng.below(8));
    CHECK(subsample_path(path, s).size() == (M + s - 1) / s + 1);
  }
}

namespace {

struct MomentFixture {
  DissimilarityMatrix time_m, adp_m;
  DistanceModel model;
};

// Chain 0-1-2-3 where pairs (0,1), (1,2) are time-won and (2,3) is adp-won.
MomentFixture moment_fixture() {
  MomentFixture f;
  std::vector<std::vector<double>> tw(4, std::vector<double>(4, 900.0));
  std::vector<std::vector<double>> aw(4, std::vector<double>(4, 900.0));
  auto set_t = [&](uint32_t a, uint32_t b, double v) { tw[a][b] = tw[b][a] = v; };
  auto set_a = [&](uint32_t a, uint32_t b, double v) { aw[a][b] = aw[b][a] = v; };
  set_t(0, 1, 1.0);  // mu 1.0, sigma 0.1
  set_t(1, 2, 2.0);  // mu 2.0, sigma 0.2
  set_a(2, 3, 3.0);  // mu 3.0, sigma 0.3
  f.time_m = matrix_from_table(tw, Metric::time);
  f.adp_m = matrix_from_table(aw, Metric::adp);
  f.model.mean_speed = 1.0;
  f.model.time_spread = 0.1;
  f.model.adp_scale = 1.0;
  f.model.adp_exponent = 1.0;
  f.model.adp_spread = 0.1;
  f.model.sigma_min = 1e-9;
  return f;
}

}  // namespace

TEST_CASE("path_moments applies the covariance rules") {
  MomentFixture f = moment_fixture();
  GeodesicRealization r = deterministic_realization(f.time_m, f.adp_m, f.model, 1);

  SUBCASE("two time edges: sigmas add linearly") {
    auto q = reconstruct_path(r, 0, 2);
    REQUIRE(q == std::vector<uint32_t>{0, 1, 2});
    PathMoments pm = path_moments(q, r.graph, f.time_m, f.adp_m, f.model);
    CHECK(pm.mu_geo == doctest::Approx(3.0));
    CHECK(pm.sigma_geo == doctest::Approx(0.3).epsilon(1e-6));
    CHECK(pm.hops == 2);
  }
  SUBCASE("mixed path: time sigmas add, adp variance adds") {
    auto q = reconstruct_path(r, 0, 3);
    REQUIRE(q == std::vector<uint32_t>{0, 1, 2, 3});
    PathMoments pm = path_moments(q, r.graph, f.time_m, f.adp_m, f.model);
    CHECK(pm.mu_geo == doctest::Approx(6.0));
    CHECK(pm.sigma_geo == doctest::Approx(std::sqrt(0.3 * 0.3 + 0.3 * 0.3)).epsilon(1e-6));
  }
}

TEST_CASE("path_moments with independent adp edges adds variances") {
  MomentFixture f = moment_fixture();
  // Make every cheap pair adp-won instead.
  std::swap(f.time_m.packed, f.adp_m.packed);
  GeodesicRealization r = deterministic_realization(f.time_m, f.adp_m, f.model, 1);
  auto q = reconstruct_path(r, 0, 2);
  REQUIRE(q.size() == 3);
  PathMoments pm = path_moments(q, r.graph, f.time_m, f.adp_m, f.model);
  // adp sigmas 0.1 and 0.2 in quadrature.
  CHECK(pm.sigma_geo == doctest::Approx(std::sqrt(0.01 + 0.04)).epsilon(1e-6));
}

TEST_CASE("moment bounds: quadrature <= sigma_geo <= linear sum") {
  MomentFixture f = moment_fixture();
  Rng rng(23);
  for (int t = 0; t < 40; ++t) {
    std::vector<double> sig;
    double mu = 0.0;
    double lin = 0.0, quad = 0.0;
    std::vector<double> mus;
    std::vector<bool> is_time;
    for (int e = 0; e < 5; ++e) {
      const double s = rng.uniform(0.05, 0.5);
      sig.push_back(s);
      lin += s;
      quad += s * s;
      mus.push_back(rng.uniform(0.5, 2.0));
      mu += mus.back();
      is_time.push_back(rng.below(2) == 0);
    }
    // Assemble sigma_geo per the covariance rule directly.
    double st = 0.0, va = 0.0;
    for (size_t e = 0; e < sig.size(); ++e)
      if (is_time[e]) st += sig[e];
      else va += sig[e] * sig[e];
    const double sigma_geo = std::sqrt(st * st + va);
    CHECK(sigma_geo >= std::sqrt(quad) - 1e-12);
    CHECK(sigma_geo <= lin + 1e-12);
  }
}

TEST_CASE("sigma-zero realizations reproduce the deterministic pipeline") {
  MomentFixture f = moment_fixture();
  DistanceModel degenerate = f.model;
  degenerate.time_spread = 0.0;
  degenerate.adp_spread = 0.0;
  degenerate.sigma_min = 0.0;  // degenerate distributions, test-only

  GeodesicRealization det = deterministic_realization(f.time_m, f.adp_m, degenerate, 1);
  for (uint32_t r = 1; r <= 3; ++r) {
    GeodesicRealization sampled =
        sample_realization(f.time_m, f.adp_m, degenerate, 1, r, 1234);
    CHECK(sampled.dist == det.dist);
    CHECK(sampled.graph.neighbors == det.graph.neighbors);
    CHECK(sampled.graph.weights == det.graph.weights);
  }
}

TEST_CASE("realizations are seed-deterministic and diverse") {
  Rng rng(31);
  auto tw = random_weight_table(30, rng);
  auto aw = random_weight_table(30, rng);
  DissimilarityMatrix tm = matrix_from_table(tw, Metric::time);
  DissimilarityMatrix am = matrix_from_table(aw, Metric::adp);
  DistanceModel model;
  model.time_spread = 0.3;
  model.adp_spread = 0.3;

  auto a = sample_realizations(tm, am, model, 4, 4, 77);
  auto b = sample_realizations(tm, am, model, 4, 4, 77);
  REQUIRE(a.size() == 4);
  for (size_t r = 0; r < 4; ++r) {
    CHECK(a[r].dist == b[r].dist);
    CHECK(a[r].pred == b[r].pred);
  }

  // With sigma > 0, at least two realizations differ in some edge.
  bool any_differ = false;
  for (size_t r = 1; r < 4 && !any_differ; ++r)
    any_differ = a[0].graph.neighbors != a[r].graph.neighbors ||
                 a[0].graph.weights != a[r].graph.weights;
  CHECK(any_differ);
}

TEST_CASE("geodesic distances satisfy the triangle inequality") {
  Rng rng(37);
  auto w = random_weight_table(25, rng);
  DissimilarityMatrix m = matrix_from_table(w);
  KnnGraph g = knn_graph(m, 4);
  ensure_connected(g, m);
  GeodesicRealization r = all_pairs_shortest(g);

  for (int t = 0; t < 500; ++t) {
    const uint32_t i = static_cast<uint32_t>(rng.below(25));
    const uint32_t j = static_cast<uint32_t>(rng.below(25));
    const uint32_t l = static_cast<uint32_t>(rng.below(25));
    CHECK(r.dist_at(i, j) <= r.dist_at(i, l) + r.dist_at(l, j) + 1e-5f);
  }

  // dist <= direct edge weight wherever an edge exists.
  for (uint32_t v = 0; v < 25; ++v)
    for (uint32_t idx = g.offsets[v]; idx < g.offsets[v + 1]; ++idx)
      CHECK(r.dist_at(v, g.neighbors[idx]) <= g.weights[idx] + 1e-6f);
}

TEST_CASE("realization bundle round trip") {
  MomentFixture f = moment_fixture();
  GeodesicRealization r = deterministic_realization(f.time_m, f.adp_m, f.model, 1);
  const auto dir = std::filesystem::temp_directory_path() / "chartlib-tests" / "bundle";
  std::filesystem::remove_all(dir);
  save_realization(r, 1, 42, f.model.hash(), dir);
  GeodesicRealization back = load_realization(dir);
  CHECK(back.dist == r.dist);
  CHECK(back.pred == r.pred);
  CHECK(back.graph.neighbors == r.graph.neighbors);
  CHECK(back.graph.weights == r.graph.weights);
  CHECK(back.graph.offsets == r.graph.offsets);
}

TEST_CASE("Monte-Carlo agreement for path moments (small)") {
  MomentFixture f = moment_fixture();
  GeodesicRealization r = deterministic_realization(f.time_m, f.adp_m, f.model, 1);
  auto q = reconstruct_path(r, 0, 3);
  PathMoments pm = path_moments(q, r.graph, f.time_m, f.adp_m, f.model);

  const std::vector<double> mu{1.0, 2.0, 3.0};
  const std::vector<double> sigma{0.1, 0.2, 0.3};
  const std::vector<bool> is_time{true, true, false};
  auto mc = oracle::mc_path_moments(mu, sigma, is_time, 100000, 5);
  CHECK(std::abs(mc.mean - pm.mu_geo) < 3.0 * mc.se_mean);
  CHECK(std::abs(mc.stddev - pm.sigma_geo) < 3.0 * mc.se_std);
}
