#include <doctest.h>

#include "dathermo/criteria.hpp"
#include "dathermo/precision.hpp"

#include <cmath>

using namespace dathermo;

namespace {
constexpr double kH = 1.61917383208942542511776276955;
}

TEST_SUITE("criteria") {
  TEST_CASE("psi") {
    CHECK(psi<double>(0.01, 0.0, 0.0, 1.6192, 2.0) == doctest::Approx(0.12116258508533143371).epsilon(1e-14));
    CHECK(psi<double>(0.01, 0.0, 0.0, 1.6192, 2.0) == collection_pressure_bound<double>(0.01, 1.6192, 2.0, 0.0, 0.0));
    CHECK(psi<double>(0.1, 0.0, 0.0, kH, 1.0) == doctest::Approx(0.1 * kH + entropy_H(0.2)));
    CHECK_THROWS_AS(psi<double>(0.6, 0, 0, kH, 1), std::domain_error);
    CHECK_THROWS_AS(psi<double>(0.1, 0, 0, kH, 0.9), std::domain_error);
    const Precise50 p50 = psi<Precise50>(Precise50("0.01"), Precise50(0), Precise50(0), Precise50("1.6192"), Precise50(2));
    CHECK(abs(p50 - Precise50("0.12116258508533143371")) < Precise50("1e-19"));
  }

  TEST_CASE("psi shift equivariance and monotonicity") {
    for (double c : {-3.0, -0.5, 0.0, 0.25, 7.0}) {
      const double base = psi<double>(0.1, 0.3, 0.8, kH, 2.0);
      CHECK(psi<double>(0.1, 0.3 + c, 0.8 + c, kH, 2.0) == doctest::Approx(base + c).epsilon(1e-14));
    }
    double prev = -INFINITY;
    for (double r = 0.01; r <= 0.25; r += 0.01) {
      const double v = psi<double>(r, 0.3, 0.8, kH, 2.0);
      CHECK(v >= prev);
      prev = v;
    }
  }

  TEST_CASE("D(r) and the bounded-range criterion") {
    CHECK(D_of_r<double>(0.01, 1.6192, 1.0) == doctest::Approx(1.5049688867202680194).epsilon(1e-14));
    PotentialStats s;
    s.sup = 0.6;
    s.inf = -0.1;
    CHECK(bounded_range_criterion(s, 0.3, 0.01, 1.6192, 1.0).verdict == Verdict::holds);
    PotentialStats zero;
    CHECK(bounded_range_criterion(zero, 0.0, 0.01, kH, 1.0).verdict == Verdict::holds);
    const double D = D_of_r<double>(0.01, 1.6192, 1.0);
    PotentialStats edge;
    edge.sup = D;
    CHECK(bounded_range_criterion(edge, 0.0, 0.01, 1.6192, 1.0).verdict != Verdict::holds);
    CriterionReport bad = bounded_range_criterion(zero, 0.0, 0.45, kH, 1e6);
    CHECK(bad.verdict == Verdict::fails);
  }

  TEST_CASE("delta gap") {
    CHECK(delta_gap<double>(0, 1, 0) == doctest::Approx(std::log(2.0) / 4).epsilon(1e-15));
    CHECK(delta_gap<double>(1, 2, 0.5) == doctest::Approx(0.0049584030454367608658).epsilon(1e-14));
    const Precise50 d50 = delta_gap<Precise50>(Precise50(1), 2, Precise50("0.5"));
    CHECK(abs(d50 - Precise50("0.0049584030454367608658")) < Precise50("1e-22"));
    CHECK(delta_gap<double>(2, 2, 0.5) < delta_gap<double>(1, 2, 0.5));
    CHECK(delta_gap<double>(1, 3, 0.5) < delta_gap<double>(1, 2, 0.5));
    CHECK(delta_gap<double>(1, 2, 0.6) < delta_gap<double>(1, 2, 0.5));
    CHECK(delta_gap<double>(20, 5, 3) > 0);
    CHECK_THROWS_AS(delta_gap<double>(-1, 2, 0.5), std::domain_error);
  }

  TEST_CASE("entropy gap bound") {
    CHECK(entropy_gap_bound<double>(0, 3, 0.25) == doctest::Approx(0.25 * std::log(2.0)));
    CHECK(entropy_gap_bound<double>(1, 3, 0.25) == doctest::Approx(0.01214683789343551469).epsilon(1e-14));
    double prev = INFINITY;
    for (double s = 0; s < 40; s += 2) {
      const double v = entropy_gap_bound<double>(s, 3, 0.25);
      CHECK(v < prev);
      prev = v;
    }
    CHECK(prev < 1e-40);
    CHECK_THROWS_AS(entropy_gap_bound<double>(1, 0, 0.25), std::domain_error);
  }

  TEST_CASE("T threshold: frozen values, residual, zero case") {
    ThresholdParams<Precise50> in;
    in.h = Precise50("1.61917383208942542511776276955");
    const Precise50 T1 = T_threshold<Precise50>(Precise50("1e-3"), Precise50("1e-4"), in);
    CHECK(abs(T1 - Precise50("3.05616025034067478356857849263")) < Precise50("1e-25"));
    const Precise50 T2 = T_threshold<Precise50>(Precise50("0.01"), Precise50("0.01"), in);
    CHECK(abs(T2 - Precise50("0.389654358822556169704991905572")) < Precise50("1e-25"));
    CHECK(abs(T_residual<Precise50>(T1, Precise50("1e-3"), Precise50("1e-4"), in)) < Precise50("1e-9"));
    ThresholdInputs dbl;
    dbl.h = kH;
    CHECK(T_threshold<double>(0.01, 0.3, dbl) == 0.0);
    CHECK(T_threshold<double>(1e-3, 1e-4, dbl) == doctest::Approx(3.05616025034067478).epsilon(1e-14));
    ThresholdInputs bad = dbl;
    bad.diam = 0;
    CHECK_THROWS_AS(T_threshold<double>(0.0, 0.0, bad), std::domain_error);
  }

  TEST_CASE("T threshold grows without bound as rho, r shrink") {
    ThresholdParams<Precise50> in;
    in.h = Precise50("1.61917383208942542511776276955");
    Precise50 prev(0);
    Precise50 rho("1e-3"), r("1e-3");
    for (int i = 0; i < 60; ++i) {
      const Precise50 T = T_threshold<Precise50>(rho, r, in);
      if (i > 0) CHECK(T > prev);
      CHECK(abs(T_residual<Precise50>(T, rho, r, in)) < Precise50("1e-9"));
      prev = T;
      rho /= 2;
      r /= 2;
    }
    const Precise50 deep = T_threshold<Precise50>(pow(Precise50(10), -440), pow(Precise50(10), -440), in);
    CHECK(abs(deep - Precise50("1003.067694635541204502249900670")) < Precise50("1e-20"));
  }

  TEST_CASE("srb condition") {
    CriterionReport lin = srb_condition(0.01, 1.6192, 1.0, -1.6192, -1.6192);
    CHECK(lin.verdict == Verdict::holds);
    CHECK(lin.lhs == doctest::Approx(0.01 * 1.6192 + entropy_H(0.02)));
    CHECK(lin.rhs == doctest::Approx(1.6192));
    CHECK(lin.extra["t_star"].get<double>() == doctest::Approx(lin.lhs / 1.6192));
    CHECK(srb_condition(1e-9, kH, 1.0, -1.0, -2.0).verdict == Verdict::holds);
    CHECK_THROWS_AS(srb_condition(0.01, kH, 1.0, 0.1, -1.0), std::invalid_argument);
    // Equality at the boundary must not count as holding.
    const double lhs = 0.1 * kH + entropy_H(0.2);
    CHECK(srb_condition(0.1, kH, 1.0, -lhs, -lhs).verdict != Verdict::holds);
  }

  TEST_CASE("decide and gap constants") {
    CHECK(decide(1, 0.1, 2, 0.1) == Verdict::holds);
    CHECK(decide(2, 0.1, 1, 0.1) == Verdict::fails);
    CHECK(decide(1, 0.6, 2, 0.6) == Verdict::inconclusive);
    CHECK(decide(1, 0, 1, 0) == Verdict::fails);
    GapConstants gc = gap_constants(3, 0.5, 1.0, 0.8660254037844386);
    CHECK(gc.delta_coef == doctest::Approx(1.0 / 8));
    CHECK(gc.Q == doctest::Approx(0.5 + 7 * 0.8660254037844386));
  }

  TEST_CASE("L estimate") {
    auto A = ToralAutomorphism::from_matrix(demo_matrix());
    LEstimate l1 = estimate_L(A, 0.05, 1, 20000);
    CHECK(l1.value >= 1.0);
    CHECK(l1.per_n.size() == 1);
    LEstimate l3 = estimate_L(A, 0.05, 3, 20000);
    CHECK(l3.value >= l1.value);
    CHECK(l3.lower_bound);
  }

  TEST_CASE("bounded range implies the psi gap") {
    PotentialStats s;
    s.sup = 0.4;
    s.inf = 0.1;
    s.sup_ball = 0.2;
    const double V = 0.05, r = 0.02, L = 3.0;
    CriterionReport rep = bounded_range_criterion(s, V, r, kH, L);
    REQUIRE(rep.verdict == Verdict::holds);
    const double P = psi(r, s, kH, L);
    const double D = D_of_r<double>(r, kH, L);
    CHECK(P <= s.sup + kH + V - D);
    CHECK(s.sup + kH + V - D < s.inf + kH);
  }

  TEST_CASE("large-range potential fails the bounded-range test") {
    Potential phi = Potential::from_expression("40*sin(2*pi*x1)", 3, 1.0);
    CHECK(bounded_range_criterion(phi.stats(), 0.0, 0.01, kH, 1.0).verdict == Verdict::fails);
  }

  TEST_CASE("theorem A verdict is invariant under a constant shift") {
    DAMap g = demo_mane_map();
    TheoremAConfig cfg;
    cfg.n_min = 4;
    cfg.n_max = 8;
    cfg.candidate_budget = 200000;
    cfg.L = 2.0;
    CriterionReport a = check_theorem_A(g, Potential::constant(0, 3), cfg);
    CriterionReport b = check_theorem_A(g, Potential::constant(1.5, 3), cfg);
    CHECK(a.verdict == b.verdict);
    CHECK(b.lhs == doctest::Approx(a.lhs + 1.5));
    CHECK(b.rhs == doctest::Approx(a.rhs + 1.5));
  }
}
