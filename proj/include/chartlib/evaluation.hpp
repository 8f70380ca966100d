#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "chartlib/geometry.hpp"

namespace chartlib {

struct AffineTransform {
  // x_hat = A z + b
  double a00 = 1.0, a01 = 0.0, a10 = 0.0, a11 = 1.0;
  Vec2 b;

  Vec2 apply(Vec2 z) const {
    return {a00 * z.x + a01 * z.y + b.x, a10 * z.x + a11 * z.y + b.y};
  }
};

struct ErrorStats {
  double mae = 0.0, drms = 0.0, cep = 0.0, r95 = 0.0;
};

struct EvalReport {
  double mae = 0.0, drms = 0.0, cep = 0.0, r95 = 0.0;
  double ct = 0.0, tw = 0.0, ks = 0.0;
  uint32_t neighborhood = 0;  // K used for ct/tw
};

// Closed-form least-squares minimizer of sum ||A z + b - x||^2. Throws
// "degenerate chart" when z is (numerically) collinear.
AffineTransform optimal_affine(std::span<const Vec2> z, std::span<const Vec2> x);

// e_l = ||x_l - (A z_l + b)||; CEP / R95 are the 50th / 95th percentiles with
// linear interpolation between order statistics.
ErrorStats error_stats(std::span<const Vec2> z, std::span<const Vec2> x,
                       const AffineTransform& transform,
                       std::vector<double>* per_point = nullptr);

// Linear-interpolated percentile of unsorted values, p in [0, 1].
double percentile(std::vector<double> values, double p);

// Pairwise distance accessor for rank metrics (i != j).
using DistanceFn = std::function<double(uint32_t, uint32_t)>;

// Standard rank-based continuity / trustworthiness with neighborhood K.
// Trustworthiness penalizes chart neighbors that are not physical neighbors;
// continuity swaps the roles. Ties in distances break by index.
std::pair<double, double> continuity_trustworthiness(std::span<const Vec2> z,
                                                     std::span<const Vec2> x,
                                                     uint32_t K);
std::pair<double, double> continuity_trustworthiness(const DistanceFn& chart_dist,
                                                     const DistanceFn& ref_dist,
                                                     uint32_t n, uint32_t K);

// Scale-optimal Kruskal stress in [0, 1]; the global scale beta is absorbed
// in closed form.
double kruskal_stress(std::span<const Vec2> z, std::span<const Vec2> x);
double kruskal_stress(const DistanceFn& chart_dist, const DistanceFn& ref_dist,
                      uint32_t n);

// Full report: optimal affine alignment, error statistics, CT/TW, KS.
// K == 0 selects ceil(0.05 * L).
EvalReport evaluate(std::span<const Vec2> z, std::span<const Vec2> x, uint32_t K = 0);

}  // namespace chartlib
