#include "chartlib/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace chartlib {

AffineTransform optimal_affine(std::span<const Vec2> z, std::span<const Vec2> x) {
  const size_t L = z.size();
  if (L != x.size()) throw std::invalid_argument("optimal_affine: size mismatch");
  if (L < 3) throw std::invalid_argument("optimal_affine: L >= 3 required");

  Vec2 zc{}, xc{};
  for (size_t l = 0; l < L; ++l) {
    zc += z[l];
    xc += x[l];
  }
  zc = zc / static_cast<double>(L);
  xc = xc / static_cast<double>(L);

  // Normal equations on centered data: A * Szz = Sxz.
  double szz00 = 0.0, szz01 = 0.0, szz11 = 0.0;
  double sxz00 = 0.0, sxz01 = 0.0, sxz10 = 0.0, sxz11 = 0.0;
  for (size_t l = 0; l < L; ++l) {
    const Vec2 zt = z[l] - zc;
    const Vec2 xt = x[l] - xc;
    szz00 += zt.x * zt.x;
    szz01 += zt.x * zt.y;
    szz11 += zt.y * zt.y;
    sxz00 += xt.x * zt.x;
    sxz01 += xt.x * zt.y;
    sxz10 += xt.y * zt.x;
    sxz11 += xt.y * zt.y;
  }
  const double det = szz00 * szz11 - szz01 * szz01;
  const double scale = szz00 + szz11;
  if (!(std::abs(det) > 1e-12 * scale * scale))
    throw std::runtime_error("optimal_affine: degenerate chart (z is collinear)");

  const double i00 = szz11 / det, i01 = -szz01 / det, i11 = szz00 / det;
  AffineTransform t;
  t.a00 = sxz00 * i00 + sxz01 * i01;
  t.a01 = sxz00 * i01 + sxz01 * i11;
  t.a10 = sxz10 * i00 + sxz11 * i01;
  t.a11 = sxz10 * i01 + sxz11 * i11;
  t.b = {xc.x - (t.a00 * zc.x + t.a01 * zc.y),
         xc.y - (t.a10 * zc.x + t.a11 * zc.y)};
  return t;
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("percentile: empty input");
  std::sort(values.begin(), values.end());
  const double h = p * static_cast<double>(values.size() - 1);
  const size_t lo = static_cast<size_t>(std::floor(h));
  if (lo + 1 >= values.size()) return values.back();
  const double frac = h - static_cast<double>(lo);
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

ErrorStats error_stats(std::span<const Vec2> z, std::span<const Vec2> x,
                       const AffineTransform& transform,
                       std::vector<double>* per_point) {
  const size_t L = z.size();
  if (L != x.size() || L == 0)
    throw std::invalid_argument("error_stats: bad input sizes");
  std::vector<double> e(L);
  double sum = 0.0, sum_sq = 0.0;
  for (size_t l = 0; l < L; ++l) {
    e[l] = distance(x[l], transform.apply(z[l]));
    sum += e[l];
    sum_sq += e[l] * e[l];
  }
  ErrorStats out;
  out.mae = sum / static_cast<double>(L);
  out.drms = std::sqrt(sum_sq / static_cast<double>(L));
  if (per_point) *per_point = e;
  out.cep = percentile(e, 0.50);
  out.r95 = percentile(std::move(e), 0.95);
  return out;
}

// ---------------------------------------------------------------------------
// Rank metrics

namespace {

// rank_of[j] = 1-based rank of j among the distances from l (self excluded);
// ties break by lower index.
void rank_row(const DistanceFn& dist, uint32_t n, uint32_t l,
              std::vector<uint32_t>& order, std::vector<uint32_t>& rank_of) {
  order.clear();
  for (uint32_t j = 0; j < n; ++j)
    if (j != l) order.push_back(j);
  std::sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) {
    const double da = dist(l, a), db = dist(l, b);
    return da != db ? da < db : a < b;
  });
  rank_of.assign(n, 0);
  for (uint32_t r = 0; r < order.size(); ++r) rank_of[order[r]] = r + 1;
}

}  // namespace

std::pair<double, double> continuity_trustworthiness(const DistanceFn& chart_dist,
                                                     const DistanceFn& ref_dist,
                                                     uint32_t n, uint32_t K) {
  if (n < 3) throw std::invalid_argument("continuity_trustworthiness: L >= 3 required");
  if (K < 1 || 2 * K >= n)
    throw std::invalid_argument("continuity_trustworthiness: require 1 <= K < L/2");

  uint64_t tw_penalty = 0, ct_penalty = 0;
#pragma omp parallel reduction(+ : tw_penalty, ct_penalty)
  {
    std::vector<uint32_t> order, rank_chart, rank_ref;
#pragma omp for schedule(dynamic, 16)
    for (int64_t l = 0; l < static_cast<int64_t>(n); ++l) {
      rank_row(chart_dist, n, static_cast<uint32_t>(l), order, rank_chart);
      rank_row(ref_dist, n, static_cast<uint32_t>(l), order, rank_ref);
      for (uint32_t j = 0; j < n; ++j) {
        if (j == static_cast<uint32_t>(l)) continue;
        // Chart neighbor that is not a reference neighbor: trustworthiness.
        if (rank_chart[j] <= K && rank_ref[j] > K) tw_penalty += rank_ref[j] - K;
        // Reference neighbor lost in the chart: continuity.
        if (rank_ref[j] <= K && rank_chart[j] > K) ct_penalty += rank_chart[j] - K;
      }
    }
  }

  const double norm = 2.0 / (static_cast<double>(n) * K *
                             (2.0 * static_cast<double>(n) - 3.0 * K - 1.0));
  return {1.0 - norm * static_cast<double>(ct_penalty),
          1.0 - norm * static_cast<double>(tw_penalty)};
}

std::pair<double, double> continuity_trustworthiness(std::span<const Vec2> z,
                                                     std::span<const Vec2> x,
                                                     uint32_t K) {
  if (z.size() != x.size())
    throw std::invalid_argument("continuity_trustworthiness: size mismatch");
  const uint32_t n = static_cast<uint32_t>(z.size());
  return continuity_trustworthiness(
      [&z](uint32_t i, uint32_t j) { return (z[i] - z[j]).norm_sq(); },
      [&x](uint32_t i, uint32_t j) { return (x[i] - x[j]).norm_sq(); }, n, K);
}

double kruskal_stress(const DistanceFn& chart_dist, const DistanceFn& ref_dist,
                      uint32_t n) {
  if (n < 2) throw std::invalid_argument("kruskal_stress: L >= 2 required");
  // Per-row partial sums reduced in fixed order.
  std::vector<double> sdd(n, 0.0), szz(n, 0.0), sdz(n, 0.0);
#pragma omp parallel for schedule(dynamic, 16)
  for (int64_t i = 0; i < static_cast<int64_t>(n); ++i) {
    double a = 0.0, b = 0.0, c = 0.0;
    for (uint32_t j = static_cast<uint32_t>(i) + 1; j < n; ++j) {
      const double d = ref_dist(static_cast<uint32_t>(i), j);
      const double dz = chart_dist(static_cast<uint32_t>(i), j);
      a += d * d;
      b += dz * dz;
      c += d * dz;
    }
    sdd[i] = a;
    szz[i] = b;
    sdz[i] = c;
  }
  double sum_dd = 0.0, sum_zz = 0.0, sum_dz = 0.0;
  for (uint32_t i = 0; i < n; ++i) {
    sum_dd += sdd[i];
    sum_zz += szz[i];
    sum_dz += sdz[i];
  }
  if (!(sum_dd > 0.0))
    throw std::runtime_error("kruskal_stress: all reference points identical");
  if (!(sum_zz > 0.0)) return 1.0;  // degenerate chart, beta forced to 0
  const double ks_sq = 1.0 - (sum_dz * sum_dz) / (sum_zz * sum_dd);
  return std::sqrt(std::clamp(ks_sq, 0.0, 1.0));
}

double kruskal_stress(std::span<const Vec2> z, std::span<const Vec2> x) {
  if (z.size() != x.size())
    throw std::invalid_argument("kruskal_stress: size mismatch");
  const uint32_t n = static_cast<uint32_t>(z.size());
  return kruskal_stress(
      [&z](uint32_t i, uint32_t j) { return (z[i] - z[j]).norm(); },
      [&x](uint32_t i, uint32_t j) { return (x[i] - x[j]).norm(); }, n);
}

EvalReport evaluate(std::span<const Vec2> z, std::span<const Vec2> x, uint32_t K) {
  const uint32_t L = static_cast<uint32_t>(z.size());
  if (K == 0) K = static_cast<uint32_t>(std::ceil(0.05 * L));
  K = std::max<uint32_t>(1, std::min(K, (L - 1) / 2));

  EvalReport r;
  const AffineTransform t = optimal_affine(z, x);
  const ErrorStats stats = error_stats(z, x, t);
  r.mae = stats.mae;
  r.drms = stats.drms;
  r.cep = stats.cep;
  r.r95 = stats.r95;
  auto [ct, tw] = continuity_trustworthiness(z, x, K);
  r.ct = ct;
  r.tw = tw;
  r.ks = kruskal_stress(z, x);
  r.neighborhood = K;
  return r;
}

}  // namespace chartlib
