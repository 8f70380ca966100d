#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "chartlib/evaluation.hpp"
#include "support/oracles.hpp"

using namespace chartlib;

namespace {

std::vector<Vec2> random_points(uint32_t n, uint64_t seed, double scale = 5.0) {
  std::vector<Vec2> p(n);
  Rng rng(seed, 0x706f696e7473ull);
  for (auto& v : p) v = {rng.uniform(-scale, scale), rng.uniform(-scale, scale)};
  return p;
}

double residual(std::span<const Vec2> z, std::span<const Vec2> x,
                const AffineTransform& t) {
  double sum = 0.0;
  for (size_t l = 0; l < z.size(); ++l) sum += (t.apply(z[l]) - x[l]).norm_sq();
  return sum;
}

}  // namespace

TEST_CASE("optimal_affine on identical point sets is the identity") {
  auto x = random_points(30, 1);
  AffineTransform t = optimal_affine(x, x);
  CHECK(t.a00 == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(t.a11 == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(std::abs(t.a01) < 1e-9);
  CHECK(std::abs(t.a10) < 1e-9);
  CHECK(std::abs(t.b.x) < 1e-9);
  CHECK(std::abs(t.b.y) < 1e-9);
}

TEST_CASE("optimal_affine undoes a known rigid transform") {
  auto x = random_points(40, 2);
  const double theta = 0.7;
  const Vec2 c{1.5, -2.5};
  std::vector<Vec2> z(x.size());
  for (size_t l = 0; l < x.size(); ++l)
    z[l] = {std::cos(theta) * x[l].x - std::sin(theta) * x[l].y + c.x,
            std::sin(theta) * x[l].x + std::cos(theta) * x[l].y + c.y};

  AffineTransform t = optimal_affine(z, x);
  CHECK(residual(z, x, t) < 1e-12);
  for (size_t l = 0; l < x.size(); ++l) {
    const Vec2 rec = t.apply(z[l]);
    CHECK(rec.x == doctest::Approx(x[l].x).epsilon(1e-9));
    CHECK(rec.y == doctest::Approx(x[l].y).epsilon(1e-9));
  }
}

TEST_CASE("optimal_affine rejects collinear charts") {
  std::vector<Vec2> z, x;
  for (int l = 0; l < 10; ++l) {
    z.push_back({0.5 * l, 1.0 * l});  // on a line
    x.push_back({0.1 * l, -0.2 * l});
  }
  CHECK_THROWS_WITH_AS(optimal_affine(z, x), doctest::Contains("degenerate"),
                       std::runtime_error);
}

TEST_CASE("optimal_affine residual is a global minimum") {
  auto x = random_points(25, 3);
  auto z = random_points(25, 4);
  AffineTransform t = optimal_affine(z, x);
  const double base = residual(z, x, t);
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    AffineTransform p = t;
    p.a00 += rng.uniform(-1e-3, 1e-3);
    p.a01 += rng.uniform(-1e-3, 1e-3);
    p.a10 += rng.uniform(-1e-3, 1e-3);
    p.a11 += rng.uniform(-1e-3, 1e-3);
    p.b.x += rng.uniform(-1e-3, 1e-3);
    p.b.y += rng.uniform(-1e-3, 1e-3);
    CHECK(residual(z, x, p) >= base - 1e-12);
  }
}

TEST_CASE("error_stats on exact and constant errors") {
  auto x = random_points(12, 6);
  AffineTransform identity;

  SUBCASE("perfect chart") {
    ErrorStats s = error_stats(x, x, identity);
    CHECK(s.mae == 0.0);
    CHECK(s.drms == 0.0);
    CHECK(s.cep == 0.0);
    CHECK(s.r95 == 0.0);
  }
  SUBCASE("unit errors everywhere") {
    std::vector<Vec2> z(4, Vec2{0, 0});
    std::vector<Vec2> xs{{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
    ErrorStats s = error_stats(z, xs, identity);
    CHECK(s.mae == doctest::Approx(1.0));
    CHECK(s.drms == doctest::Approx(1.0));
    CHECK(s.cep == doctest::Approx(1.0));
    CHECK(s.r95 == doctest::Approx(1.0));
  }
  SUBCASE("errors 0,0,0,4 exercise the percentile interpolation") {
    std::vector<Vec2> z(4, Vec2{0, 0});
    std::vector<Vec2> xs{{0, 0}, {0, 0}, {0, 0}, {4, 0}};
    ErrorStats s = error_stats(z, xs, identity);
    CHECK(s.mae == doctest::Approx(1.0));
    CHECK(s.drms == doctest::Approx(2.0));
    CHECK(s.cep == doctest::Approx(0.0));
    CHECK(s.r95 == doctest::Approx(3.4));
  }
}

TEST_CASE("mae <= drms and cep <= r95 on random error vectors") {
  Rng rng(7);
  for (int trial = 0; trial < 1000; ++trial) {
    const uint32_t n = 2 + static_cast<uint32_t>(rng.below(20));
    std::vector<Vec2> z(n, Vec2{});
    std::vector<Vec2> x(n);
    for (auto& v : x) v = {rng.normal(), rng.normal()};
    ErrorStats s = error_stats(z, x, AffineTransform{});
    CHECK(s.mae <= s.drms + 1e-12);
    CHECK(s.cep <= s.r95 + 1e-12);
  }
}

TEST_CASE("continuity and trustworthiness on preserved rankings") {
  auto x = random_points(30, 8);
  auto [ct, tw] = continuity_trustworthiness(x, x, 3);
  CHECK(ct == doctest::Approx(1.0));
  CHECK(tw == doctest::Approx(1.0));

  // Rigid transforms preserve ranks.
  std::vector<Vec2> z(x.size());
  for (size_t l = 0; l < x.size(); ++l)
    z[l] = {-x[l].y + 4.0, x[l].x - 2.0};
  auto [ct2, tw2] = continuity_trustworthiness(z, x, 3);
  CHECK(ct2 == doctest::Approx(1.0));
  CHECK(tw2 == doctest::Approx(1.0));
}

TEST_CASE("continuity and trustworthiness match brute-force enumeration") {
  // Fixed 6-point configuration with two swapped points.
  std::vector<Vec2> x{{0, 0}, {1, 0}, {2, 0}, {3, 0}, {4, 0}, {5, 0}};
  std::vector<Vec2> z{{0, 0}, {1, 0}, {3, 0}, {2, 0}, {4, 0}, {5, 0}};
  auto [ct, tw] = continuity_trustworthiness(z, x, 2);
  auto [bct, btw] = oracle::brute_ct_tw(z, x, 2);
  CHECK(ct == doctest::Approx(bct).epsilon(1e-12));
  CHECK(tw == doctest::Approx(btw).epsilon(1e-12));

  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    auto xr = random_points(9, 100 + trial);
    auto zr = random_points(9, 200 + trial);
    for (uint32_t K : {1u, 2u, 3u}) {
      auto [c1, t1] = continuity_trustworthiness(zr, xr, K);
      auto [c2, t2] = oracle::brute_ct_tw(zr, xr, K);
      CHECK(c1 == doctest::Approx(c2).epsilon(1e-12));
      CHECK(t1 == doctest::Approx(t2).epsilon(1e-12));
      CHECK(c1 >= 0.0);
      CHECK(c1 <= 1.0);
      CHECK(t1 >= 0.0);
      CHECK(t1 <= 1.0);
    }
  }
}

TEST_CASE("continuity_trustworthiness validates K") {
  auto x = random_points(10, 10);
  CHECK_THROWS_AS(continuity_trustworthiness(x, x, 0), std::invalid_argument);
  CHECK_THROWS_AS(continuity_trustworthiness(x, x, 5), std::invalid_argument);
}

TEST_CASE("kruskal_stress absorbs global scale") {
  auto x = random_points(20, 11);
  std::vector<Vec2> z(x.size());
  for (size_t l = 0; l < x.size(); ++l) z[l] = x[l] * 3.7;
  CHECK(kruskal_stress(z, x) == doctest::Approx(0.0).epsilon(1e-7));
}

TEST_CASE("kruskal_stress of a collapsed chart is 1") {
  auto x = random_points(15, 12);
  std::vector<Vec2> z(x.size(), Vec2{2.0, 2.0});
  CHECK(kruskal_stress(z, x) == doctest::Approx(1.0));
}

TEST_CASE("kruskal_stress rejects identical reference points") {
  std::vector<Vec2> x(5, Vec2{1.0, 1.0});
  auto z = random_points(5, 13);
  CHECK_THROWS_AS(kruskal_stress(z, x), std::runtime_error);
}

TEST_CASE("kruskal_stress matches the beta grid-search oracle") {
  for (int trial = 0; trial < 5; ++trial) {
    auto x = random_points(5, 300 + trial, 2.0);
    auto z = random_points(5, 400 + trial, 2.0);
    const double lib = kruskal_stress(z, x);
    const double ref = oracle::grid_kruskal(z, x);
    CHECK(lib == doctest::Approx(ref).epsilon(1e-4));
    CHECK(lib >= 0.0);
    CHECK(lib <= 1.0);
  }
}

TEST_CASE("all metrics are invariant under a common rigid transform") {
  auto x = random_points(25, 14);
  auto z = random_points(25, 15);
  EvalReport base = evaluate(z, x, 3);

  const double theta = -0.9;
  auto rot = [theta](Vec2 p) {
    return Vec2{std::cos(theta) * p.x - std::sin(theta) * p.y + 1.0,
                std::sin(theta) * p.x + std::cos(theta) * p.y - 2.0};
  };
  std::vector<Vec2> zr(z.size()), xr(x.size());
  for (size_t l = 0; l < z.size(); ++l) {
    zr[l] = rot(z[l]);
    xr[l] = rot(x[l]);
  }
  EvalReport moved = evaluate(zr, xr, 3);
  CHECK(moved.mae == doctest::Approx(base.mae).epsilon(1e-9));
  CHECK(moved.drms == doctest::Approx(base.drms).epsilon(1e-9));
  CHECK(moved.cep == doctest::Approx(base.cep).epsilon(1e-9));
  CHECK(moved.r95 == doctest::Approx(base.r95).epsilon(1e-9));
  CHECK(moved.ct == doctest::Approx(base.ct).epsilon(1e-12));
  CHECK(moved.tw == doctest::Approx(base.tw).epsilon(1e-12));
  CHECK(moved.ks == doctest::Approx(base.ks).epsilon(1e-9));
}

TEST_CASE("evaluate on a perfect chart") {
  auto x = random_points(40, 16);
  EvalReport r = evaluate(x, x);
  CHECK(r.mae == doctest::Approx(0.0));
  CHECK(r.drms == doctest::Approx(0.0));
  CHECK(r.cep == doctest::Approx(0.0));
  CHECK(r.r95 == doctest::Approx(0.0));
  CHECK(r.ct == doctest::Approx(1.0));
  CHECK(r.tw == doctest::Approx(1.0));
  CHECK(r.ks == doctest::Approx(0.0));
  CHECK(r.neighborhood == 2);  // ceil(0.05 * 40)
}
