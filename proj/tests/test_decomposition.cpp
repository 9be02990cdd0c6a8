#include <doctest.h>

#include "dathermo/decomposition.hpp"
#include "dathermo/random.hpp"

#include <sstream>

using namespace dathermo;

namespace {

bool prefix_good(const std::vector<int>& seq, std::size_t from, std::size_t to, double r) {
  int s = 0;
  for (std::size_t i = from; i < to; ++i) {
    s += seq[i];
    if (s < static_cast<double>(i - from + 1) * r) return false;
  }
  return true;
}

// Largest p with S_p < p r, checked term by term.
int brute_p(const std::vector<int>& seq, double r) {
  int best = 0;
  for (std::size_t p = 1; p <= seq.size(); ++p) {
    int s = 0;
    for (std::size_t i = 0; i < p; ++i) s += seq[i];
    if (s < static_cast<double>(p) * r) best = static_cast<int>(p);
  }
  return best;
}

}  // namespace

TEST_SUITE("decomposition") {
  TEST_CASE("worked example") {
    DecompositionResult d = decompose({0, 1, 1, 1}, 0.5);
    CHECK(d.p == 1);
    CHECK(d.g == 3);
    CHECK(d.s == 0);
  }

  TEST_CASE("prefix sums and membership") {
    auto ps = prefix_sums({1, 0, 1, 1});
    CHECK(ps == std::vector<int>{0, 1, 1, 2, 3});
    CHECK(in_G({1, 0, 1, 1}, 0.5));
    CHECK_FALSE(in_G({0, 1, 1}, 0.1));
    CHECK(in_G(std::vector<int>{}, 0.3));
  }

  TEST_CASE("random sequences against brute force") {
    Rng rng(12345);
    for (int trial = 0; trial < 10000; ++trial) {
      const int n = 1 + static_cast<int>(uniform01(rng) * 20);
      const double r = 0.05 + 0.9 * uniform01(rng);
      std::vector<int> seq(static_cast<std::size_t>(n));
      for (auto& c : seq) c = uniform01(rng) < 0.6 ? 1 : 0;
      DecompositionResult d = decompose(seq, r);
      CHECK(d.p == brute_p(seq, r));
      CHECK(d.p + d.g + d.s == n);
      CHECK(prefix_good(seq, static_cast<std::size_t>(d.p), seq.size(), r));
      CHECK(in_G(seq, r) == (d.p == 0));
    }
  }

  TEST_CASE("chi along orbits") {
    DAMap g = demo_mane_map();
    Vecd q = g.q();
    CHECK(chi(q, 0.05, q) == 0);
    Vecd far = reduce_coords<double>(Vecd(q + Vecd::Constant(3, 0.3)));
    CHECK(chi(q, 0.05, far) == 1);
    Vecd edge = reduce_coords<double>(Vecd(q + 0.05 * Vecd::Unit(3, 0)));
    CHECK(chi(q, 0.05, edge) == 1);
    Rng rng(3);
    for (int k = 0; k < 50; ++k) {
      Vecd x = uniform_point(rng, 3);
      auto seq = chi_sequence(g, q, 0.05, x, 30);
      auto orb = orbit(g, x, 30);
      for (std::size_t i = 0; i < seq.size(); ++i) CHECK(seq[i] == (flat_distance<double>(orb[i], q) >= 0.05 ? 1 : 0));
      DecompositionResult a = decompose(g, q, 0.05, 0.1, {x, 30});
      DecompositionResult b = decompose(seq, 0.1);
      CHECK(a.p == b.p);
      CHECK(in_G(g, q, 0.05, 0.1, {x, 30}) == in_G(seq, 0.1));
    }
  }

  TEST_CASE("collection bound formula") {
    CHECK(collection_pressure_bound<double>(0.01, 1.6192, 1.0, 0.0, 0.0) ==
          doctest::Approx(0.1142311132797319806).epsilon(1e-14));
    CHECK_THROWS_AS(collection_pressure_bound<double>(0.5, 1.6, 1.0, 0, 0), std::domain_error);
    CHECK_THROWS_AS(collection_pressure_bound<double>(0.1, 1.6, 0.5, 0, 0), std::domain_error);
  }

  TEST_CASE("segment audit csv") {
    std::ostringstream os;
    write_segment_audit(os, {{10, 7, 2, 8}, {12, 12, 0, 12}});
    CHECK(os.str().rfind("n,chi_sum,p,g", 0) == 0);
    CHECK(os.str().find("10,7,2,8") != std::string::npos);
  }

  TEST_CASE("collection pressure respects the restriction and the bound") {
    DAMap g = demo_mane_map();
    std::vector<SegmentAudit> rows;
    CollectionOptions co;
    co.audit = &rows;
    PressureEstimate e = empirical_collection_pressure(g, Potential::constant(0, 3), g.q(), g.rho(), 0.1, 0.05, 5, 9, co);
    CHECK(e.mode == "slope-fit/collection");
    for (const auto& a : rows) {
      CHECK(a.chi_sum < 0.1 * a.n);
      CHECK(a.p + a.g == a.n);
    }
    CHECK(e.value <= collection_pressure_bound<double>(0.1, g.spectral().h, 1.0, 0, 0) + e.tolerance);
  }
}
