#include <doctest.h>

#include "dathermo/pressure.hpp"
#include "dathermo/random.hpp"

#include <cmath>

using namespace dathermo;

namespace {

const DAMap& base() {
  static const DAMap f = DAMap::linear(ToralAutomorphism::from_matrix(demo_matrix()));
  return f;
}
const DAMap& demo() {
  static const DAMap g = demo_mane_map();
  return g;
}

// Plain O(N k) greedy with direct Bowen distances.
std::vector<Vecd> naive_greedy(const DAMap& g, const std::vector<Vecd>& cand, int n, double eps) {
  std::vector<Vecd> kept;
  for (const Vecd& c : cand) {
    bool ok = true;
    for (const Vecd& k : kept)
      if (bowen_distance(g, c, k, n) < eps) {
        ok = false;
        break;
      }
    if (ok) kept.push_back(c);
  }
  return kept;
}

// Maximum independent set on a path of L points where chosen points must be
// at least `gap` index steps apart.
int path_mis(int L, int gap) {
  if (L <= 0) return 0;
  std::vector<int> f(static_cast<std::size_t>(L) + 1, 0);
  for (int i = 1; i <= L; ++i)
    f[static_cast<std::size_t>(i)] =
        std::max(f[static_cast<std::size_t>(i - 1)], (i >= gap ? f[static_cast<std::size_t>(i - gap)] : 0) + 1);
  return f[static_cast<std::size_t>(L)];
}

// Same on the m-cycle: either point 0 is unused, or it blocks gap-1 neighbours on each side.
int cycle_mis(int m, int gap) { return std::max(path_mis(m - 1, gap), 1 + path_mis(m - 1 - 2 * (gap - 1), gap)); }

int cycle_mis_exhaustive(int m, int gap) {
  int best = 0;
  for (unsigned mask = 0; mask < (1u << m); ++mask) {
    bool ok = true;
    for (int i = 0; i < m && ok; ++i) {
      if (!(mask >> i & 1u)) continue;
      for (int k = 1; k < gap && ok; ++k)
        if (mask >> ((i + k) % m) & 1u) ok = false;
    }
    if (ok) best = std::max(best, __builtin_popcount(mask));
  }
  return best;
}

}  // namespace

TEST_SUITE("pressure_engine") {
  TEST_CASE("entropy H") {
    CHECK(entropy_H(0.5) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(entropy_H(0.0) == 0.0);
    CHECK(entropy_H(1.0) == 0.0);
    CHECK(entropy_H(0.02) == doctest::Approx(0.098039113279731980612).epsilon(1e-14));
    CHECK_THROWS_AS(entropy_H(-0.1), std::domain_error);
    CHECK_THROWS_AS(entropy_H(1.1), std::domain_error);
    const Precise50 h50 = entropy_H<Precise50>(Precise50("0.02"));
    CHECK(abs(h50 - Precise50("0.09803911327973198061225941")) < Precise50("1e-25"));
  }

  TEST_CASE("log-sum-exp") {
    LogSumExp l;
    CHECK(std::isinf(l.value()));
    std::vector<double> v = {0.1, -3.0, 2.5, 0.0, 1.7};
    double direct = 0;
    for (double x : v) {
      l.add(x);
      direct += std::exp(x);
    }
    CHECK(l.value() == doctest::Approx(std::log(direct)).epsilon(1e-15));
    LogSumExp big;
    for (int i = 0; i < 1000; ++i) big.add(800.0);
    CHECK(big.value() == doctest::Approx(800.0 + std::log(1000.0)).epsilon(1e-14));
  }

  TEST_CASE("bowen distance") {
    Rng rng(1);
    Vecd x = uniform_point(rng, 3), y = uniform_point(rng, 3);
    CHECK(bowen_distance(base(), x, x, 10) == 0.0);
    CHECK(bowen_distance(base(), x, y, 1) == flat_distance<double>(x, y));
    double prev = 0;
    for (int n = 1; n <= 8; ++n) {
      double d = bowen_distance(demo(), x, y, n);
      CHECK(d >= prev);
      prev = d;
    }
    const double delta = 1e-7;
    Vecd z = reduce_coords<double>(Vecd(x + delta * base().spectral().F_u.normalized()));
    for (int n = 1; n <= 6; ++n)
      CHECK(bowen_distance(base(), x, z, n) ==
            doctest::Approx(std::pow(base().spectral().lambda_u, n - 1) * delta).epsilon(1e-6));
  }

  TEST_CASE("separated sets: separation, maximality, naive agreement") {
    auto cand = grid_points(3, 12);
    SeparatedSet s = max_separated_set(base(), cand, 2, 0.2);
    auto naive = naive_greedy(base(), cand, 2, 0.2);
    REQUIRE(s.points.size() == naive.size());
    for (std::size_t i = 0; i < naive.size(); ++i) CHECK(flat_distance<double>(s.points[i], naive[i]) == 0.0);
    for (std::size_t i = 0; i < s.points.size(); ++i)
      for (std::size_t j = i + 1; j < s.points.size(); ++j) CHECK(bowen_distance(base(), s.points[i], s.points[j], 2) >= 0.2);
    for (const Vecd& c : cand) {
      double best = INFINITY;
      for (const Vecd& k : s.points) best = std::min(best, bowen_distance(base(), c, k, 2));
      CHECK(best < 0.2);
    }
  }

  TEST_CASE("separated sets: trivial and supply-monotone cases") {
    auto cand = grid_points(3, 6);
    CHECK(max_separated_set(base(), cand, 3, 1.0).points.size() == 1);
    CHECK(max_separated_set(base(), {}, 3, 0.1).points.empty());
    Rng rng(4);
    std::vector<Vecd> pts;
    for (int i = 0; i < 500; ++i) pts.push_back(uniform_point(rng, 3));
    std::size_t prev = 0;
    for (std::size_t m = 125; m <= 500; m *= 2) {
      std::vector<Vecd> prefix(pts.begin(), pts.begin() + static_cast<long>(std::min(m, pts.size())));
      std::size_t k = max_separated_set(demo(), prefix, 4, 0.1).points.size();
      CHECK(k >= prev);
      prev = k;
    }
  }

  TEST_CASE("1-D sub-grid against the interval-graph maximum independent set") {
    for (int m = 3; m <= 16; ++m) CHECK(cycle_mis(m, 2) == cycle_mis_exhaustive(m, 2));
    for (int m = 3; m <= 64; ++m) {
      std::vector<Vecd> line;
      for (int i = 0; i < m; ++i) {
        Vecd x(3);
        x << static_cast<double>(i) / m, 0.5, 0.5;
        line.push_back(x);
      }
      const double eps = 1.5 / m;
      auto s = max_separated_set(base(), line, 1, eps);
      CHECK(static_cast<int>(s.points.size()) == cycle_mis(m, 2));
    }
  }

  TEST_CASE("partition sums: counts, constants, 32^3 grid oracle") {
    PointListSource grid(grid_points(3, 32));
    PartitionSum p0 = partition_sum(base(), Potential::constant(0, 3), 1, 0.3, grid);
    auto naive = naive_greedy(base(), grid_points(3, 32), 1, 0.3);
    CHECK(p0.points == naive.size());
    CHECK(p0.log_raw == doctest::Approx(std::log(static_cast<double>(naive.size()))).epsilon(1e-14));
    PartitionSum pc = partition_sum(base(), Potential::constant(0.4, 3), 3, 0.3, grid);
    PartitionSum pz = partition_sum(base(), Potential::constant(0.0, 3), 3, 0.3, grid);
    CHECK(pc.points == pz.points);
    CHECK(pc.log_raw == doctest::Approx(pz.log_raw + 3 * 0.4).epsilon(1e-14));
  }

  TEST_CASE("smaller scale never lowers the count on the same candidates") {
    PointListSource grid(grid_points(3, 16));
    std::size_t prev = 0;
    for (double eps : {0.4, 0.3, 0.2, 0.1}) {
      PartitionSum p = partition_sum(base(), Potential::constant(0, 3), 2, eps, grid);
      CHECK(p.points >= prev);
      prev = p.points;
    }
  }

  TEST_CASE("line fit") {
    LinearFit f = fit_line({1, 2, 3, 4}, {3, 5, 7, 9});
    CHECK(f.slope == doctest::Approx(2.0));
    CHECK(f.intercept == doctest::Approx(1.0));
    CHECK(f.r2 == doctest::Approx(1.0));
    CHECK(f.slope_stderr == doctest::Approx(0.0));
  }

  TEST_CASE("estimate_from_sums: shift identity and rejection") {
    std::vector<PartitionSum> sums;
    for (int n = 3; n <= 6; ++n) {
      PartitionSum ps;
      ps.n = n;
      ps.points = 3;
      ps.sums = {0.2 * n, -0.1 * n, 0.05 * n};
      LogSumExp l;
      for (double s : ps.sums) l.add(s);
      ps.log_raw = l.value();
      sums.push_back(ps);
    }
    PressureEstimate a = estimate_from_sums(sums, 0.1);
    auto shifted = sums;
    for (auto& ps : shifted)
      for (double& s : ps.sums) s += 0.3 * ps.n;
    PressureEstimate b = estimate_from_sums(shifted, 0.1);
    CHECK(b.value == doctest::Approx(a.value + 0.3).epsilon(1e-12));
    std::vector<PartitionSum> two(sums.begin(), sums.begin() + 2);
    CHECK_THROWS_AS(estimate_from_sums(two, 0.1), NumericalRejection);
  }

  TEST_CASE("entropy of f_A at a reduced budget") {
    PressureOptions po;
    po.candidate_budget = 600000;
    PressureEstimate e = pressure(base(), Potential::constant(0, 3), 0.05, 5, 10, po);
    CHECK(e.value == doctest::Approx(1.6191738320894254).epsilon(0.1));
    CHECK(e.mode == "slope-fit");
    PressureEstimate c = pressure(base(), Potential::constant(-0.7, 3), 0.05, 5, 10, po);
    CHECK(c.value == doctest::Approx(e.value - 0.7).epsilon(1e-10));
    CHECK_THROWS_AS(pressure(base(), Potential::constant(0, 3), 0.05, 5, 5, po), std::invalid_argument);
  }

  TEST_CASE("pressure curve of f_A is (1 - t) h and starts at P(0)") {
    PressureOptions po;
    po.candidate_budget = 300000;
    Potential pu = geometric_potential(base());
    PressureCurve c = pressure_curve(base(), pu, {0.0, 0.5, 1.0, 1.5}, 0.05, 5, 10, po);
    PressureEstimate p0 = pressure(base(), Potential::constant(0, 3), 0.05, 5, 10, po);
    CHECK(c.estimates[0].value == doctest::Approx(p0.value).epsilon(1e-12));
    const double h = base().spectral().h;
    for (std::size_t i = 0; i < c.t.size(); ++i)
      CHECK(c.estimates[i].value == doctest::Approx(p0.value - c.t[i] * h).epsilon(1e-9));
    CHECK(c.evaluate(0.25).value == doctest::Approx(p0.value - 0.25 * h).epsilon(1e-9));
  }

  TEST_CASE("demo pressure curve is convex and nonincreasing within tolerance") {
    PressureOptions po;
    po.candidate_budget = 300000;
    Potential pu = geometric_potential(demo());
    std::vector<double> tg;
    for (int i = -2; i <= 6; ++i) tg.push_back(0.25 * i);
    PressureCurve c = pressure_curve(demo(), pu, tg, 0.05, 5, 10, po);
    for (std::size_t i = 1; i + 1 < tg.size(); ++i) {
      const double second = c.estimates[i + 1].value - 2 * c.estimates[i].value + c.estimates[i - 1].value;
      CHECK(second >= -c.estimates[i].tolerance);
      CHECK(c.estimates[i + 1].value <= c.estimates[i].value + c.estimates[i].tolerance);
    }
  }

  TEST_CASE("pressure drop under the perturbation is at most the variation") {
    PressureOptions po;
    po.candidate_budget = 300000;
    Potential phi = Potential::from_expression("sin(2*pi*x1)", 3, 1.0);
    PressureEstimate pf = pressure(base(), phi, 0.05, 5, 10, po);
    PressureEstimate pg = pressure(demo(), phi, 0.05, 5, 10, po);
    const double var = variation(phi, demo().eta()).value;
    CHECK(pg.value >= pf.value - var - pf.tolerance - pg.tolerance);
  }
}
