#include "chartlib/geodesic.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <queue>
#include <stdexcept>

#include <json.hpp>

#include "chartlib/io_util.hpp"
#include "chartlib/rng.hpp"

namespace chartlib {

int64_t KnnGraph::find_edge(uint32_t u, uint32_t v) const {
  auto nb = neighbors_of(u);
  auto it = std::lower_bound(nb.begin(), nb.end(), v);
  if (it == nb.end() || *it != v) return -1;
  return offsets[u] + (it - nb.begin());
}

namespace {

struct EdgeRec {
  uint32_t i, j;  // i < j
  float w;
  Metric tag;
};

KnnGraph build_csr(uint32_t n, std::vector<EdgeRec> edges) {
  std::sort(edges.begin(), edges.end(), [](const EdgeRec& a, const EdgeRec& b) {
    return a.i != b.i ? a.i < b.i : a.j < b.j;
  });
  edges.erase(std::unique(edges.begin(), edges.end(),
                          [](const EdgeRec& a, const EdgeRec& b) {
                            return a.i == b.i && a.j == b.j;
                          }),
              edges.end());

  KnnGraph g;
  g.n = n;
  g.offsets.assign(n + 1, 0);
  for (const EdgeRec& e : edges) {
    ++g.offsets[e.i + 1];
    ++g.offsets[e.j + 1];
  }
  for (uint32_t v = 0; v < n; ++v) g.offsets[v + 1] += g.offsets[v];
  const size_t total = g.offsets[n];
  g.neighbors.resize(total);
  g.weights.resize(total);
  g.edge_metric.resize(total);
  std::vector<uint32_t> cursor(g.offsets.begin(), g.offsets.end() - 1);
  auto put = [&](uint32_t src, uint32_t dst, float w, Metric tag) {
    uint32_t slot = cursor[src]++;
    g.neighbors[slot] = dst;
    g.weights[slot] = w;
    g.edge_metric[slot] = tag;
  };
  for (const EdgeRec& e : edges) put(e.i, e.j, e.w, e.tag);
  // Reverse direction: grouped by j ascending, and within each j the i are
  // ascending, so adjacency lists stay sorted.
  for (const EdgeRec& e : edges) put(e.j, e.i, e.w, e.tag);
  for (uint32_t v = 0; v < n; ++v) {
    auto begin = g.neighbors.begin() + g.offsets[v];
    auto end = g.neighbors.begin() + g.offsets[v + 1];
    if (!std::is_sorted(begin, end)) {
      // Sort the three parallel arrays by neighbor index.
      const uint32_t deg = g.offsets[v + 1] - g.offsets[v];
      std::vector<uint32_t> order(deg);
      for (uint32_t t = 0; t < deg; ++t) order[t] = t;
      std::sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) {
        return g.neighbors[g.offsets[v] + a] < g.neighbors[g.offsets[v] + b];
      });
      std::vector<uint32_t> nb(deg);
      std::vector<float> ww(deg);
      std::vector<Metric> tt(deg);
      for (uint32_t t = 0; t < deg; ++t) {
        nb[t] = g.neighbors[g.offsets[v] + order[t]];
        ww[t] = g.weights[g.offsets[v] + order[t]];
        tt[t] = g.edge_metric[g.offsets[v] + order[t]];
      }
      std::copy(nb.begin(), nb.end(), g.neighbors.begin() + g.offsets[v]);
      std::copy(ww.begin(), ww.end(), g.weights.begin() + g.offsets[v]);
      std::copy(tt.begin(), tt.end(), g.edge_metric.begin() + g.offsets[v]);
    }
  }
  return g;
}

template <typename WeightFn, typename TagFn>
KnnGraph knn_build(uint32_t n, uint32_t k, WeightFn weight, TagFn tag) {
  if (n < 2) throw std::invalid_argument("knn_graph: need at least 2 points");
  if (k < 1 || k >= n) throw std::invalid_argument("knn_graph: require 1 <= k < L");

  std::vector<std::vector<uint32_t>> picks(n);
#pragma omp parallel
  {
    std::vector<std::pair<float, uint32_t>> cand(n - 1);
#pragma omp for schedule(dynamic, 16)
    for (int64_t iv = 0; iv < static_cast<int64_t>(n); ++iv) {
      const uint32_t i = static_cast<uint32_t>(iv);
      size_t c = 0;
      for (uint32_t j = 0; j < n; ++j)
        if (j != i) cand[c++] = {weight(i, j), j};
      // Ties break toward the lower index.
      std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
      picks[i].resize(k);
      for (uint32_t t = 0; t < k; ++t) picks[i][t] = cand[t].second;
    }
  }

  std::vector<EdgeRec> edges;
  edges.reserve(static_cast<size_t>(n) * k);
  for (uint32_t i = 0; i < n; ++i)
    for (uint32_t j : picks[i]) {
      uint32_t a = std::min(i, j), b = std::max(i, j);
      edges.push_back({a, b, weight(a, b), tag(a, b)});
    }
  return build_csr(n, std::move(edges));
}

}  // namespace

KnnGraph knn_graph(const DissimilarityMatrix& matrix, uint32_t k) {
  const uint32_t n = matrix.n;
  return knn_build(
      n, k, [&](uint32_t i, uint32_t j) { return matrix.at(i, j); },
      [&](uint32_t, uint32_t) { return matrix.tag; });
}

KnnGraph knn_graph_packed(std::span<const float> packed,
                          std::span<const Metric> tags, uint32_t n, uint32_t k) {
  return knn_build(
      n, k,
      [&](uint32_t i, uint32_t j) {
        return packed[DissimilarityMatrix::pair_index(i, j, n)];
      },
      [&](uint32_t i, uint32_t j) {
        return tags[DissimilarityMatrix::pair_index(i, j, n)];
      });
}

namespace {

struct UnionFind {
  std::vector<uint32_t> parent;
  explicit UnionFind(uint32_t n) : parent(n) {
    for (uint32_t i = 0; i < n; ++i) parent[i] = i;
  }
  uint32_t find(uint32_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  bool unite(uint32_t a, uint32_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[std::max(a, b)] = std::min(a, b);
    return true;
  }
};

template <typename WeightFn, typename TagFn>
uint32_t ensure_connected_impl(KnnGraph& graph, WeightFn weight, TagFn tag) {
  const uint32_t n = graph.n;
  UnionFind uf(n);
  for (uint32_t v = 0; v < n; ++v)
    for (uint32_t u : graph.neighbors_of(v)) uf.unite(v, u);

  uint32_t components = 0;
  for (uint32_t v = 0; v < n; ++v)
    if (uf.find(v) == v) ++components;
  if (components == 1) return 1;

  std::vector<EdgeRec> extra;
  uint32_t remaining = components;
  while (remaining > 1) {
    // Globally smallest cross-component pair; ties break lexicographically.
    float best_w = std::numeric_limits<float>::infinity();
    uint32_t best_i = 0, best_j = 0;
    bool found = false;
    for (uint32_t i = 0; i + 1 < n; ++i)
      for (uint32_t j = i + 1; j < n; ++j) {
        if (uf.find(i) == uf.find(j)) continue;
        float w = weight(i, j);
        if (!found || w < best_w) {
          best_w = w;
          best_i = i;
          best_j = j;
          found = true;
        }
      }
    if (!found) break;
    extra.push_back({best_i, best_j, best_w, tag(best_i, best_j)});
    uf.unite(best_i, best_j);
    --remaining;
  }

  // Rebuild the CSR with the bridges included.
  std::vector<EdgeRec> edges;
  edges.reserve(graph.edge_count() + extra.size());
  for (uint32_t v = 0; v < n; ++v)
    for (uint32_t idx = graph.offsets[v]; idx < graph.offsets[v + 1]; ++idx) {
      uint32_t u = graph.neighbors[idx];
      if (v < u) edges.push_back({v, u, graph.weights[idx], graph.edge_metric[idx]});
    }
  edges.insert(edges.end(), extra.begin(), extra.end());
  graph = build_csr(n, std::move(edges));
  return components;
}

}  // namespace

uint32_t ensure_connected(KnnGraph& graph, const DissimilarityMatrix& matrix) {
  return ensure_connected_impl(
      graph, [&](uint32_t i, uint32_t j) { return matrix.at(i, j); },
      [&](uint32_t, uint32_t) { return matrix.tag; });
}

uint32_t ensure_connected_packed(KnnGraph& graph, std::span<const float> packed,
                                 std::span<const Metric> tags) {
  const uint32_t n = graph.n;
  return ensure_connected_impl(
      graph,
      [&, n](uint32_t i, uint32_t j) {
        return packed[DissimilarityMatrix::pair_index(i, j, n)];
      },
      [&, n](uint32_t i, uint32_t j) {
        return tags[DissimilarityMatrix::pair_index(i, j, n)];
      });
}

namespace {

// Single-source Dijkstra. Distances accumulate in double and are stored as
// float; on exact ties the lower predecessor index wins (before settling).
void dijkstra_row(const KnnGraph& g, uint32_t src, float* dist_row,
                  uint32_t* pred_row, std::vector<double>& d,
                  std::vector<uint8_t>& settled) {
  const uint32_t n = g.n;
  d.assign(n, std::numeric_limits<double>::infinity());
  settled.assign(n, 0);
  std::fill(pred_row, pred_row + n, kPredUnreachable);

  using Item = std::pair<double, uint32_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  d[src] = 0.0;
  pred_row[src] = kPredSource;
  heap.push({0.0, src});

  while (!heap.empty()) {
    auto [du, u] = heap.top();
    heap.pop();
    if (settled[u] || du > d[u]) continue;
    settled[u] = 1;
    for (uint32_t idx = g.offsets[u]; idx < g.offsets[u + 1]; ++idx) {
      const uint32_t v = g.neighbors[idx];
      const double nd = du + static_cast<double>(g.weights[idx]);
      if (nd < d[v]) {
        d[v] = nd;
        pred_row[v] = u;
        heap.push({nd, v});
      } else if (nd == d[v] && !settled[v] && u < pred_row[v]) {
        pred_row[v] = u;
      }
    }
  }

  for (uint32_t v = 0; v < n; ++v) {
    if (!settled[v])
      throw std::runtime_error("all_pairs_shortest: graph is disconnected (run ensure_connected first)");
    dist_row[v] = static_cast<float>(d[v]);
  }
}

void symmetrize(GeodesicRealization& r) {
  const uint32_t n = r.n;
  for (uint32_t i = 0; i < n; ++i)
    for (uint32_t j = i + 1; j < n; ++j)
      r.dist[static_cast<size_t>(j) * n + i] = r.dist[static_cast<size_t>(i) * n + j];
}

}  // namespace

GeodesicRealization all_pairs_shortest(KnnGraph graph) {
  GeodesicRealization r;
  r.n = graph.n;
  r.graph = std::move(graph);
  r.dist.resize(static_cast<size_t>(r.n) * r.n);
  r.pred.resize(static_cast<size_t>(r.n) * r.n);

#pragma omp parallel
  {
    std::vector<double> d;
    std::vector<uint8_t> settled;
#pragma omp for schedule(dynamic, 4)
    for (int64_t src = 0; src < static_cast<int64_t>(r.n); ++src)
      dijkstra_row(r.graph, static_cast<uint32_t>(src),
                   r.dist.data() + src * r.n, r.pred.data() + src * r.n, d,
                   settled);
  }
  symmetrize(r);
  return r;
}

namespace serial {

GeodesicRealization all_pairs_shortest(KnnGraph graph) {
  GeodesicRealization r;
  r.n = graph.n;
  r.graph = std::move(graph);
  r.dist.resize(static_cast<size_t>(r.n) * r.n);
  r.pred.resize(static_cast<size_t>(r.n) * r.n);
  std::vector<double> d;
  std::vector<uint8_t> settled;
  for (uint32_t src = 0; src < r.n; ++src)
    dijkstra_row(r.graph, src, r.dist.data() + static_cast<size_t>(src) * r.n,
                 r.pred.data() + static_cast<size_t>(src) * r.n, d, settled);
  symmetrize(r);
  return r;
}

}  // namespace serial

std::vector<uint32_t> reconstruct_path(const GeodesicRealization& r, uint32_t i,
                                       uint32_t j) {
  if (i >= r.n || j >= r.n)
    throw std::invalid_argument("reconstruct_path: index out of range");
  std::vector<uint32_t> q{j};
  uint32_t cur = j;
  while (cur != i) {
    const uint32_t p = r.pred_at(i, cur);
    if (p == kPredUnreachable || p == kPredSource || q.size() > r.n)
      throw std::runtime_error("reconstruct_path: inconsistent predecessor matrix");
    q.push_back(p);
    cur = p;
  }
  std::reverse(q.begin(), q.end());
  return q;
}

std::vector<uint32_t> subsample_path(std::span<const uint32_t> q, uint32_t s) {
  if (q.empty()) throw std::invalid_argument("subsample_path: empty path");
  if (s < 1) throw std::invalid_argument("subsample_path: s >= 1 required");
  const size_t hops = q.size() - 1;
  std::vector<uint32_t> out;
  out.reserve(hops / s + 2);
  for (size_t m = 0; m < hops; m += s) out.push_back(q[m]);
  out.push_back(q[hops]);
  return out;
}

namespace {

struct RealizedWeights {
  std::vector<float> w;
  std::vector<Metric> tag;
};

// One Gaussian draw per (pair, metric), keyed so results are independent of
// evaluation order. sigma <= 0 collapses to the mean.
RealizedWeights realize_weights(const DissimilarityMatrix& time_matrix,
                                const DissimilarityMatrix& adp_matrix,
                                const DistanceModel& model,
                                uint32_t realization_index, uint64_t seed,
                                bool deterministic) {
  if (time_matrix.n != adp_matrix.n)
    throw std::invalid_argument("realization: matrix dimensions disagree");
  const size_t pairs = time_matrix.packed.size();
  RealizedWeights out;
  out.w.resize(pairs);
  out.tag.resize(pairs);
  const uint64_t stream = hash_combine(0x7265616c697a65ull, realization_index);

#pragma omp parallel for schedule(static)
  for (int64_t p = 0; p < static_cast<int64_t>(pairs); ++p) {
    const auto mt = model_distance(time_matrix.packed[p], Metric::time, model);
    const auto ma = model_distance(adp_matrix.packed[p], Metric::adp, model);
    double dt = mt.mu, da = ma.mu;
    if (!deterministic) {
      if (mt.sigma > 0.0) {
        Rng r(seed, stream, 2 * static_cast<uint64_t>(p));
        dt = std::max(0.0, mt.mu + mt.sigma * r.normal());
      }
      if (ma.sigma > 0.0) {
        Rng r(seed, stream, 2 * static_cast<uint64_t>(p) + 1);
        da = std::max(0.0, ma.mu + ma.sigma * r.normal());
      }
    }
    // Per-pair minimum; the time metric wins ties.
    if (dt <= da) {
      out.w[p] = static_cast<float>(dt);
      out.tag[p] = Metric::time;
    } else {
      out.w[p] = static_cast<float>(da);
      out.tag[p] = Metric::adp;
    }
  }
  return out;
}

GeodesicRealization realization_from_weights(const RealizedWeights& rw,
                                             uint32_t n, uint32_t k,
                                             uint32_t* components_before) {
  KnnGraph g = knn_graph_packed(rw.w, rw.tag, n, k);
  uint32_t comps = ensure_connected_packed(g, rw.w, rw.tag);
  if (components_before) *components_before = comps;
  return all_pairs_shortest(std::move(g));
}

}  // namespace

GeodesicRealization sample_realization(const DissimilarityMatrix& time_matrix,
                                       const DissimilarityMatrix& adp_matrix,
                                       const DistanceModel& model, uint32_t k,
                                       uint32_t realization_index, uint64_t seed,
                                       uint32_t* components_before) {
  auto rw = realize_weights(time_matrix, adp_matrix, model, realization_index,
                            seed, false);
  return realization_from_weights(rw, time_matrix.n, k, components_before);
}

std::vector<GeodesicRealization> sample_realizations(
    const DissimilarityMatrix& time_matrix, const DissimilarityMatrix& adp_matrix,
    const DistanceModel& model, uint32_t k, uint32_t count, uint64_t seed) {
  if (count < 1) throw std::invalid_argument("sample_realizations: R >= 1 required");
  std::vector<GeodesicRealization> out;
  out.reserve(count);
  for (uint32_t r = 0; r < count; ++r)
    out.push_back(sample_realization(time_matrix, adp_matrix, model, k, r + 1, seed));
  return out;
}

GeodesicRealization deterministic_realization(
    const DissimilarityMatrix& time_matrix, const DissimilarityMatrix& adp_matrix,
    const DistanceModel& model, uint32_t k, uint32_t* components_before) {
  auto rw = realize_weights(time_matrix, adp_matrix, model, 0, 0, true);
  return realization_from_weights(rw, time_matrix.n, k, components_before);
}

PathMoments path_moments(std::span<const uint32_t> q, const KnnGraph& graph,
                         const DissimilarityMatrix& time_matrix,
                         const DissimilarityMatrix& adp_matrix,
                         const DistanceModel& model) {
  if (q.empty()) throw std::invalid_argument("path_moments: empty path");
  PathMoments out;
  out.hops = static_cast<uint32_t>(q.size() - 1);
  double sigma_time = 0.0;   // perfectly correlated: sigmas add
  double var_adp = 0.0;      // independent: variances add
  for (size_t m = 1; m < q.size(); ++m) {
    const uint32_t u = q[m - 1], v = q[m];
    const int64_t e = graph.find_edge(u, v);
    if (e < 0) throw std::runtime_error("path_moments: edge missing from graph");
    const Metric tag = graph.edge_metric[e];
    double delta;
    if (tag == Metric::time) delta = time_matrix.at(u, v);
    else if (tag == Metric::adp) delta = adp_matrix.at(u, v);
    else throw std::runtime_error("path_moments: edge carries no metric choice");
    const auto mom = model_distance(delta, tag, model);
    out.mu_geo += mom.mu;
    if (tag == Metric::time) sigma_time += mom.sigma;
    else var_adp += mom.sigma * mom.sigma;
  }
  out.sigma_geo = std::sqrt(sigma_time * sigma_time + var_adp);
  return out;
}

// ---------------------------------------------------------------------------
// Bundle I/O

void save_realization(const GeodesicRealization& r, uint32_t k, uint64_t seed,
                      uint64_t model_hash, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  ioutil::write_file<float>(dir / "dist.bin", r.dist);
  ioutil::write_file<uint32_t>(dir / "pred.bin", r.pred);

  std::vector<uint32_t> edges;
  edges.reserve(r.graph.edge_count() * 4);
  for (uint32_t v = 0; v < r.n; ++v)
    for (uint32_t idx = r.graph.offsets[v]; idx < r.graph.offsets[v + 1]; ++idx) {
      const uint32_t u = r.graph.neighbors[idx];
      if (v < u) {
        uint32_t wbits;
        std::memcpy(&wbits, &r.graph.weights[idx], 4);
        edges.insert(edges.end(),
                     {v, u, wbits, static_cast<uint32_t>(r.graph.edge_metric[idx])});
      }
    }
  ioutil::write_file<uint32_t>(dir / "edges.bin", edges);

  nlohmann::json meta;
  meta["L"] = r.n;
  meta["k"] = k;
  meta["seed"] = seed;
  meta["model_hash"] = model_hash;
  ioutil::write_text(dir / "meta.json", meta.dump(2) + "\n");
}

GeodesicRealization load_realization(const std::filesystem::path& dir) {
  auto meta = nlohmann::json::parse(ioutil::read_text(dir / "meta.json"));
  const uint32_t n = meta.at("L").get<uint32_t>();

  GeodesicRealization r;
  r.n = n;
  r.dist = ioutil::read_array<float>(dir / "dist.bin", static_cast<size_t>(n) * n);
  r.pred = ioutil::read_array<uint32_t>(dir / "pred.bin", static_cast<size_t>(n) * n);

  auto raw = ioutil::read_file(dir / "edges.bin");
  if (raw.size() % 16 != 0)
    throw std::runtime_error("payload size mismatch: " + (dir / "edges.bin").string());
  std::vector<EdgeRec> edges(raw.size() / 16);
  for (size_t e = 0; e < edges.size(); ++e) {
    uint32_t rec[4];
    std::memcpy(rec, raw.data() + e * 16, 16);
    float w;
    std::memcpy(&w, &rec[2], 4);
    edges[e] = {rec[0], rec[1], w, static_cast<Metric>(rec[3])};
  }
  r.graph = build_csr(n, std::move(edges));
  return r;
}

}  // namespace chartlib
