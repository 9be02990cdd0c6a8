#include "dathermo/criteria.hpp"

#include <cmath>

namespace dathermo {

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::holds: return "holds";
    case Verdict::fails: return "fails";
    default: return "inconclusive";
  }
}

nlohmann::json CriterionReport::to_json() const {
  return {{"name", name},   {"lhs", lhs},         {"rhs", rhs},       {"lhs_tol", lhs_tol}, {"rhs_tol", rhs_tol},
          {"verdict", to_string(verdict)}, {"notes", notes}, {"inputs", inputs}, {"extra", extra}};
}

Verdict decide(double lhs, double lhs_tol, double rhs, double rhs_tol) {
  if (lhs + lhs_tol < rhs - rhs_tol) return Verdict::holds;
  if (lhs - lhs_tol >= rhs + rhs_tol) return Verdict::fails;
  return Verdict::inconclusive;
}

LEstimate estimate_L(const ToralAutomorphism& A, double eta, int n_max, std::size_t points_per_job, int workers) {
  if (n_max < 1) throw std::invalid_argument("estimate_L: n_max must be >= 1");
  DAMap f = DAMap::linear(A);
  const double h = f.spectral().h;
  LeafArcSource::Options lo;
  lo.points_per_job = points_per_job;
  LeafArcSource src(lo);
  Potential zero = Potential::constant(0.0, f.dim());
  LEstimate out;
  double best = -INFINITY;
  for (int n = 1; n <= n_max; ++n) {
    PartitionSum ps = partition_sum(f, zero, n, eta, src, nullptr, workers);
    double v = ps.log_value() - n * h;
    out.per_n.emplace_back(n, std::exp(v));
    if (v > best) {
      best = v;
      out.argmax_n = n;
    }
  }
  out.value = std::max(1.0, std::exp(best));
  return out;
}

CriterionReport bounded_range_criterion(const PotentialStats& stats, double V, double r, double h, double L) {
  CriterionReport rep;
  rep.name = "bounded-range";
  rep.inputs = {{"sup", stats.sup}, {"inf", stats.inf}, {"V", V}, {"r", r}, {"h", h}, {"L", L}};
  const double D = D_of_r<double>(r, h, L);
  rep.extra["D"] = D;
  rep.lhs = stats.sup - stats.inf + V;
  rep.lhs_tol = stats.sup_slack + stats.inf_slack;
  rep.rhs = D;
  if (!(D > 0)) {
    rep.verdict = Verdict::fails;
    rep.notes.push_back("precondition r(log L + h) + H(2r) < h violated");
    return rep;
  }
  rep.verdict = decide(rep.lhs, rep.lhs_tol, rep.rhs, rep.rhs_tol);
  rep.notes.push_back("L is a lower bound");
  return rep;
}

CriterionReport srb_condition(double r, double h, double L, double sup_phi_u, double inf_phi_u) {
  if (!(sup_phi_u < 0) || !(inf_phi_u < 0))
    throw std::invalid_argument("srb_condition: phi^u must be negative (E^u not uniformly expanding)");
  CriterionReport rep;
  rep.name = "srb";
  rep.inputs = {{"r", r}, {"h", h}, {"L", L}, {"sup_phi_u", sup_phi_u}, {"inf_phi_u", inf_phi_u}};
  rep.lhs = r * (h + std::log(L)) + entropy_H<double>(2 * r);
  rep.rhs = std::min(sup_phi_u / inf_phi_u * h, -sup_phi_u);
  rep.verdict = decide(rep.lhs, 0, rep.rhs, 0);
  const double t_star = -rep.lhs / sup_phi_u;
  rep.extra["t_star"] = t_star;
  rep.extra["t_star_below_one"] = t_star < 1;
  if (!(t_star < 1)) rep.notes.push_back("t* >= 1");
  return rep;
}

GapConstants gap_constants(int tau, double Q1, double alpha, double diam) {
  if (tau < 0) throw std::invalid_argument("gap_constants: tau must be >= 0");
  return {1.0 / (2.0 * (tau + 1)), Q1 + (2.0 * tau + 1) * std::pow(diam, alpha)};
}

CriterionReport check_theorem_A(const DAMap& g, const Potential& phi, const TheoremAConfig& cfg) {
  CriterionReport rep;
  rep.name = "theorem-A";
  const double h = g.spectral().h;
  double L = cfg.L;
  if (L <= 0) {
    LEstimate le = estimate_L(g.base(), cfg.epsilon, cfg.L_n_max, 100000, cfg.workers);
    L = le.value * cfg.L_safety;
    rep.extra["L_estimate"] = le.value;
    rep.notes.push_back("L estimated from the linear part (lower bound) times safety factor");
  }
  Extremum ball = ball_extremum([&phi](const Vecd& x) { return phi(x); }, g.q(), g.rho(), true, phi.alpha(),
                                phi.seminorm(), 1L << 14, 8);
  if (phi.is_constant()) ball.slack = 0;
  rep.lhs = psi<double>(cfg.r, ball.value, phi.sup(), h, L);
  rep.lhs_tol = (1 - cfg.r) * ball.slack + cfg.r * phi.stats().sup_slack;

  PressureOptions po;
  po.candidate_budget = cfg.candidate_budget;
  po.workers = cfg.workers;
  PressureEstimate P = pressure(g, phi, cfg.epsilon, cfg.n_min, cfg.n_max, po);
  rep.rhs = P.value;
  rep.rhs_tol = P.tolerance;
  rep.verdict = decide(rep.lhs, rep.lhs_tol, rep.rhs, rep.rhs_tol);
  rep.inputs = {{"r", cfg.r},         {"rho", g.rho()},     {"epsilon", cfg.epsilon}, {"n_min", cfg.n_min},
                {"n_max", cfg.n_max}, {"L", L},             {"h", h},                 {"potential", phi.label()}};
  rep.extra["pressure"] = P.to_json();
  rep.extra["sup_ball"] = ball.value;
  rep.extra["d_C0"] = g.c0_distance();
  rep.notes.push_back("numerical evidence only");
  return rep;
}

}  // namespace dathermo
