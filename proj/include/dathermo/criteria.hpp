#pragma once

#include "dathermo/decomposition.hpp"
#include "dathermo/pressure.hpp"

#include <boost/math/special_functions/log1p.hpp>

#include <string>
#include <vector>

namespace dathermo {

enum class Verdict { holds, fails, inconclusive };
const char* to_string(Verdict v);

struct CriterionReport {
  std::string name;
  double lhs = 0;
  double rhs = 0;
  double lhs_tol = 0;
  double rhs_tol = 0;
  Verdict verdict = Verdict::inconclusive;
  std::vector<std::string> notes;
  nlohmann::json inputs = nlohmann::json::object();
  nlohmann::json extra = nlohmann::json::object();
  nlohmann::json to_json() const;
};

/// holds if lhs + lhs_tol < rhs - rhs_tol, fails if lhs - lhs_tol >= rhs + rhs_tol.
Verdict decide(double lhs, double lhs_tol, double rhs, double rhs_tol);

/// (1-r) sup_ball + r (sup_global + h + log L) + H(2r).
template <class Scalar>
Scalar psi(const Scalar& r, const Scalar& sup_ball, const Scalar& sup_global, const Scalar& h, const Scalar& L) {
  return collection_pressure_bound<Scalar>(r, h, L, sup_ball, sup_global);
}

inline double psi(double r, const PotentialStats& s, double h, double L) {
  return psi<double>(r, s.sup_ball, s.sup, h, L);
}

/// h - r (log L + h) - H(2r).
template <class Scalar>
Scalar D_of_r(const Scalar& r, const Scalar& h, const Scalar& L) {
  using std::log;
  if (!(r > Scalar(0) && r < Scalar(0.5))) throw std::domain_error("D(r): r must lie in (0, 1/2)");
  if (L < Scalar(1)) throw std::domain_error("D(r): L must be >= 1");
  return h - r * (log(L) + h) - entropy_H<Scalar>(Scalar(2) * r);
}

/// log(1 + exp(-(V + (2 tau + 1) range))) / (2 (tau + 1)).
template <class Scalar>
Scalar delta_gap(const Scalar& V, int tau, const Scalar& range) {
  using std::exp;
  using std::log;
  if (V < Scalar(0) || tau < 0 || range < Scalar(0)) throw std::domain_error("delta_gap: negative input");
  return boost::math::log1p(Scalar(exp(-(V + Scalar(2 * tau + 1) * range)))) / Scalar(2 * (tau + 1));
}

/// delta log(1 + exp(-Q |phi|)).
template <class Scalar>
Scalar entropy_gap_bound(const Scalar& seminorm, const Scalar& Q, const Scalar& delta_coef) {
  using std::exp;
  using std::log;
  if (!(Q > Scalar(0)) || !(delta_coef > Scalar(0))) throw std::domain_error("entropy_gap_bound: Q, delta must be > 0");
  return delta_coef * boost::math::log1p(Scalar(exp(-Q * seminorm)));
}

/// Constants entering T_threshold; Scalar sets the precision they are held in.
template <class Scalar>
struct ThresholdParams {
  Scalar alpha = Scalar(1);
  Scalar K = Scalar(2);
  Scalar diam = sqrt_half3();
  Scalar h = Scalar(0);
  Scalar L = Scalar(1);
  Scalar Q = Scalar(1);
  Scalar delta_coef = Scalar(1) / Scalar(4);

  static Scalar sqrt_half3() {
    using std::sqrt;
    return Scalar(sqrt(Scalar(3))) / Scalar(2);
  }
  template <class Other>
  ThresholdParams<Other> as() const {
    return {Other(alpha), Other(K), Other(diam), Other(h), Other(L), Other(Q), Other(delta_coef)};
  }
};
using ThresholdInputs = ThresholdParams<double>;

namespace detail {
template <class Scalar>
void threshold_sums(const Scalar& rho, const Scalar& r, const ThresholdParams<Scalar>& in, Scalar& S1, Scalar& S2) {
  using std::log;
  using std::pow;
  S1 = pow(rho, in.alpha) * (Scalar(1) + pow(in.K, in.alpha)) + r * pow(in.diam, in.alpha);
  S2 = r * (in.h + log(in.L)) + entropy_H<Scalar>(Scalar(2) * r);
}
}  // namespace detail

/// Crossing of S1 T + S2 with delta log(1 + exp(-Q T)); 0 when S2 >= delta log 2.
template <class Scalar, class In>
Scalar T_threshold(const Scalar& rho, const Scalar& r, const ThresholdParams<In>& params) {
  using std::exp;
  using std::log;
  const ThresholdParams<Scalar> in = params.template as<Scalar>();
  Scalar S1, S2;
  detail::threshold_sums(rho, r, in, S1, S2);
  if (!(S1 > Scalar(0))) throw std::domain_error("T_threshold: S1 must be positive");
  if (S2 >= in.delta_coef * log(Scalar(2))) return Scalar(0);
  auto f = [&](const Scalar& T) { return S1 * T + S2 - in.delta_coef * boost::math::log1p(Scalar(exp(-in.Q * T))); };
  Scalar lo(0), hi(1);
  while (f(hi) < Scalar(0)) {
    lo = hi;
    hi *= 2;
  }
  for (int it = 0; it < 2000 && hi - lo > Scalar(1e-30) * (Scalar(1) + lo); ++it) {
    Scalar mid = (lo + hi) / 2;
    if (mid <= lo || mid >= hi) break;
    if (f(mid) < Scalar(0))
      lo = mid;
    else
      hi = mid;
  }
  return (lo + hi) / 2;
}

/// Residual S1 T + S2 - delta log(1 + exp(-Q T)).
template <class Scalar, class In>
Scalar T_residual(const Scalar& T, const Scalar& rho, const Scalar& r, const ThresholdParams<In>& params) {
  using std::exp;
  const ThresholdParams<Scalar> in = params.template as<Scalar>();
  Scalar S1, S2;
  detail::threshold_sums(rho, r, in, S1, S2);
  return S1 * T + S2 - in.delta_coef * boost::math::log1p(Scalar(exp(-in.Q * T)));
}

struct LEstimate {
  double value = 1;
  int argmax_n = 1;
  std::vector<std::pair<int, double>> per_n;  // Lambda_n e^{-n h}
  bool lower_bound = true;
};
/// max over n <= n_max of Lambda_n(0, eta) e^{-n h}, clamped below by 1.
LEstimate estimate_L(const ToralAutomorphism& A, double eta, int n_max, std::size_t points_per_job = 100000,
                     int workers = 1);

CriterionReport bounded_range_criterion(const PotentialStats& stats, double V, double r, double h, double L);

CriterionReport srb_condition(double r, double h, double L, double sup_phi_u, double inf_phi_u);

/// delta = 1 / (2 (tau + 1)), Q = Q1 + (2 tau + 1) diam^alpha.
struct GapConstants {
  double delta_coef = 0;
  double Q = 0;
};
GapConstants gap_constants(int tau, double Q1, double alpha, double diam);

struct TheoremAConfig {
  double r = 0.1;
  double epsilon = 0.05;
  int n_min = 6;
  int n_max = 14;
  std::size_t candidate_budget = 2000000;
  double L = 0;              // 0: estimate from the linear part
  double L_safety = 2.0;
  int L_n_max = 10;
  int workers = 1;
};
CriterionReport check_theorem_A(const DAMap& g, const Potential& phi, const TheoremAConfig& cfg = {});

}  // namespace dathermo
