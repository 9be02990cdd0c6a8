#include <doctest.h>

#include <Eigen/Geometry>

#include "dathermo/automorphism.hpp"
#include "dathermo/random.hpp"
#include "dathermo/torus.hpp"

#include <cmath>
#include <functional>

using namespace dathermo;

namespace {

// Roots of a monic cubic by sign-change bisection on a fine scan.
std::vector<double> cubic_roots_bisect(double a2, double a1, double a0) {
  auto p = [&](double x) { return ((x + a2) * x + a1) * x + a0; };
  std::vector<double> roots;
  const double lo = -20, hi = 20, step = 1e-3;
  for (double x = lo; x < hi; x += step) {
    double a = x, b = x + step;
    if (p(a) == 0) {
      roots.push_back(a);
      continue;
    }
    if ((p(a) < 0) != (p(b) < 0)) {
      for (int i = 0; i < 200; ++i) {
        double m = 0.5 * (a + b);
        if ((p(a) < 0) != (p(m) < 0)) b = m;
        else a = m;
      }
      roots.push_back(0.5 * (a + b));
    }
  }
  return roots;
}

double brute_distance(const Vecd& x, const Vecd& y) {
  double best = INFINITY;
  const int d = static_cast<int>(x.size());
  std::vector<int> k(static_cast<std::size_t>(d), -1);
  std::function<void(int)> rec = [&](int i) {
    if (i == d) {
      Vecd t = x - y;
      for (int j = 0; j < d; ++j) t(j) += k[static_cast<std::size_t>(j)];
      best = std::min(best, t.norm());
      return;
    }
    for (int v = -1; v <= 1; ++v) {
      k[static_cast<std::size_t>(i)] = v;
      rec(i + 1);
    }
  };
  rec(0);
  return best;
}

Vecd v3(double a, double b, double c) {
  Vecd v(3);
  v << a, b, c;
  return v;
}

}  // namespace

TEST_SUITE("torus_core") {
  TEST_CASE("reduce lands in the unit cube") {
    TorusPoint p = reduce(v3(1.25, -0.25, 3.0));
    CHECK(p[0] == doctest::Approx(0.25));
    CHECK(p[1] == doctest::Approx(0.75));
    CHECK(p[2] == 0.0);
    Vecd tiny = v3(-1e-18, 0, 0);
    CHECK(reduce(tiny)[0] < 1.0);
    CHECK_THROWS_AS(reduce(v3(NAN, 0, 0)), std::invalid_argument);
  }

  TEST_CASE("distance against translate enumeration") {
    CHECK(torus_distance(reduce(v3(0.9, 0.9, 0)), reduce(v3(0.1, 0.1, 0))) ==
          doctest::Approx(std::sqrt(0.08)).epsilon(1e-14));
    Rng rng(11);
    for (int i = 0; i < 2000; ++i) {
      Vecd x = uniform_point(rng, 3), y = uniform_point(rng, 3), z = uniform_point(rng, 3);
      const double dxy = flat_distance<double>(x, y);
      CHECK(dxy == doctest::Approx(brute_distance(x, y)).epsilon(1e-13));
      CHECK(dxy == doctest::Approx(flat_distance<double>(y, x)).epsilon(1e-15));
      CHECK(dxy <= flat_distance<double>(x, z) + flat_distance<double>(z, y) + 1e-15);
      CHECK(dxy <= torus_diameter(3) + 1e-15);
    }
  }

  TEST_CASE("A0 spectrum matches the char-poly bisection oracle") {
    auto A = ToralAutomorphism::from_matrix(demo_matrix());
    CHECK(A.det() == 1);
    const auto& cp = A.char_poly();
    REQUIRE(cp.size() == 4);
    CHECK(cp[0] == 1);
    CHECK(cp[1] == -6);
    CHECK(cp[2] == 5);
    CHECK(cp[3] == -1);
    auto roots = cubic_roots_bisect(-6, 5, -1);
    REQUIRE(roots.size() == 3);
    const auto& s = A.spectral();
    for (int i = 0; i < 3; ++i) CHECK(s.eigenvalues[static_cast<std::size_t>(i)] == doctest::Approx(roots[static_cast<std::size_t>(i)]).epsilon(1e-12));
    CHECK(s.h == doctest::Approx(1.61917383208942542511776276955).epsilon(1e-13));
    CHECK(s.lambda_u == doctest::Approx(5.04891733952230531352221440702).epsilon(1e-13));
    CHECK(s.lambda_s == doctest::Approx(0.643104132107790556105600489979).epsilon(1e-13));
    CHECK(A.irrational_certified());
    CHECK(A.irreducible_certified());
  }

  TEST_CASE("eigenvectors and the dual basis") {
    auto A = ToralAutomorphism::from_matrix(demo_matrix());
    const auto& s = A.spectral();
    Matd M = A.matrix().cast<double>();
    for (int i = 0; i < 3; ++i) {
      Vecd v = s.eigenvectors.col(i);
      CHECK((M * v - s.eigenvalues[static_cast<std::size_t>(i)] * v).norm() < 1e-12);
    }
    CHECK((s.dual * s.eigenvectors - Matd::Identity(3, 3)).norm() < 1e-12);
    Matd P = s.projector_u();
    CHECK((P * P - P).norm() < 1e-12);
    CHECK((P * s.F_u - s.F_u).norm() < 1e-12);
    CHECK((P * s.F_c).norm() < 1e-12);
  }

  TEST_CASE("inverse matrix is integral") {
    auto A = ToralAutomorphism::from_matrix(demo_matrix());
    CHECK((A.matrix() * A.inverse_matrix() - IntMatrix::Identity(3, 3)).cwiseAbs().maxCoeff() == 0);
    Rng rng(3);
    for (int i = 0; i < 100; ++i) {
      Vecd x = uniform_point(rng, 3);
      CHECK(flat_distance<double>(A.apply_inverse<double>(A.apply<double>(x)), x) < 1e-14);
    }
  }

  TEST_CASE("invalid matrices are rejected") {
    IntMatrix m2(3, 3);
    m2 << 2, 0, 0, 0, 1, 0, 0, 0, 1;
    CHECK_THROWS_AS(ToralAutomorphism::from_matrix(m2), std::invalid_argument);
    IntMatrix perm(3, 3);
    perm << 0, 1, 0, 0, 0, 1, 1, 0, 0;
    CHECK_THROWS_AS(ToralAutomorphism::from_matrix(perm), std::invalid_argument);
    IntMatrix unit_eigen(3, 3);
    unit_eigen << 2, 1, 0, 1, 1, 0, 0, 0, 1;
    CHECK_THROWS_AS(ToralAutomorphism::from_matrix(unit_eigen), std::invalid_argument);
  }

  TEST_CASE("cone constant against principal angles") {
    auto A = ToralAutomorphism::from_matrix(demo_matrix());
    const auto& s = A.spectral();
    const double c = cone_constant(s.F_s, Matd(s.F_u));
    CHECK(c >= 1.0);
    CHECK(std::isfinite(c));
    // Oracle: 1 / sin of the angle between F^u and its projection on span F^s.
    Vecd u = s.F_u.normalized();
    Vecd w = s.F_s.col(0).normalized();
    const double cosang = std::abs(u.dot(w));
    CHECK(c == doctest::Approx(1.0 / std::sqrt(1 - cosang * cosang)).epsilon(1e-10));
    Matd e1 = Matd::Zero(3, 1), e2 = Matd::Zero(3, 1);
    e1(0, 0) = 1;
    e2(1, 0) = 1;
    CHECK(cone_constant(e1, e2) == doctest::Approx(1.0));
    Matd cs = s.F_cs();
    Eigen::Vector3d a = cs.col(0), b = cs.col(1);
    Vecd n = a.cross(b).normalized();
    CHECK(kappa(s) == doctest::Approx(2.0 / std::abs(n.dot(u))).epsilon(1e-10));
    CHECK(eta_heuristic(s) > 0);
  }

  TEST_CASE("matrix json round trip") {
    IntMatrix m = demo_matrix();
    CHECK(matrix_from_json(to_json(m)) == m);
  }
}
