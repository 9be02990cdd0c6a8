#pragma once

#include "dathermo/decomposition.hpp"
#include "dathermo/potential.hpp"
#include "dathermo/random.hpp"

#include <vector>

namespace dathermo {

struct PseudoOrbit {
  std::vector<Vecd> points;
  double error_bound = 0;
};

/// max_k d(A x_k, x_{k+1}), evaluated in HighPrecision.
double pseudo_orbit_error(const ToralAutomorphism& A, const std::vector<Vecd>& points);

/// x_{k+1} = A x_k + e_k with |e_k| <= error, e_k uniform in the ball.
PseudoOrbit make_pseudo_orbit(const ToralAutomorphism& A, const Vecd& x0, int length, double error, Rng& rng);

/// cone_constant(F^cs, F^u) * (lambda_u / (lambda_u - 1) + 1 / (1 - lambda_s,max)), at least 1.
double shadowing_constant(const ToralAutomorphism& A);

/// Eigenpairs of A refined to the precision of Scalar. W = V^-1.
template <class Scalar>
struct SpectralBasis {
  std::vector<Scalar> lambda;
  Mat<Scalar> V;
  Mat<Scalar> W;
};
template <class Scalar>
SpectralBasis<Scalar> spectral_basis(const ToralAutomorphism& A);

/// y whose A-orbit shadows the pseudo-orbit: unstable components of the
/// step errors summed backward, stable ones forward. eta = 0 uses the
/// heuristic expansivity scale. Throws std::invalid_argument when the
/// error bound exceeds eta / C.
template <class Scalar>
Vec<Scalar> shadow(const ToralAutomorphism& A, const PseudoOrbit& pseudo, double eta = 0);

/// d(A^k y, x_k) for every k, iterated in Scalar.
template <class Scalar>
std::vector<double> shadow_residuals(const ToralAutomorphism& A, const Vec<Scalar>& y, const PseudoOrbit& pseudo);

struct LpsResult {
  Vecd z;
  double leaf_distance_cs = 0;  // along W^cs(x), from x
  double leaf_distance_u = 0;   // along W^u(y), from y
  double residual_cs = 0;
  double residual_u = 0;
  double kappa = 0;
  bool within_kappa = false;    // both leaf distances <= kappa d(x, y)
  int iterations = 0;
};

/// W^cs(x) intersected with W^u(y). Requires d(x, y) < scale <= 6 eta.
LpsResult lps_intersect(const DAMap& g, const Vecd& x, const Vecd& y, double scale);

std::vector<VecHP> orbit_hp(const DAMap& g, const VecHP& x, int n);

struct GlueOptions {
  Vecd q;               // empty: map's q
  double rho = 0;       // 0: map's rho
  double r = 0.1;
  int tau_max = 24;
  int tau_pairs = 32;
  std::uint64_t seed = 17;
};

/// Smallest tau with (min unstable expansion)^tau > 2 such that, for sampled
/// pairs (p, x), g^tau(W^u_{delta/2}(p)) meets W^cs_{delta/2}(x).
int measure_transition_time(const DAMap& g, double delta, const GlueOptions& opts = {});

struct GluingPlan {
  std::vector<OrbitSegment> segments;
  double delta = 0;
  int tau = 0;
  std::vector<long> m;             // m_0 = -tau, m_j = sum_{i<=j} n_i + (j-1) tau
  VecHP y;
  std::vector<VecHP> partial;      // y_1, ..., y_k
  std::vector<double> window_distance;            // d_{n_j}(g^{m_{j-1}+tau} y, x_j)
  std::vector<std::vector<double>> ladder;        // ladder[j][i] = d_{n_i}(y_j, y_{j+1}) on window i
  bool verified = false;
  nlohmann::json to_json() const;
};

GluingPlan glue_specification(const DAMap& g, const std::vector<OrbitSegment>& segments, double delta,
                              const GlueOptions& opts = {});

struct BowenBallAudit {
  double max_ratio = 0;   // max_k d(g^k x, g^k y) / (kappa eps (theta_r^k + theta_u^{n-k}))
  int worst_k = 0;
  double bowen_distance = 0;
};
/// Builds y in B_n(x, eps) with a center-stable offset and an unstable offset
/// and compares its distance profile with the two-sided exponential bound.
BowenBallAudit audit_bowen_ball(const DAMap& g, const Vecd& x, int n, double eps, double r, Rng& rng);

struct BowenVariation {
  double measured = 0;
  double bound = 0;
  int pairs = 0;
};
BowenVariation audit_bowen_property(const DAMap& g, const Potential& phi, const std::vector<OrbitSegment>& segments,
                                    double eps, double r, int pairs_per_segment = 8, std::uint64_t seed = 23);

}  // namespace dathermo
