// End-to-end acceptance run. One PASS/FAIL line per criterion; exit status is
// nonzero when any criterion fails.

#include "dathermo/criteria.hpp"
#include "dathermo/precision.hpp"
#include "dathermo/shadowing.hpp"
#include "dathermo/srb_multifractal.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>

using namespace dathermo;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Largest root of x^3 - 6x^2 + 5x - 1 by plain bisection on [1, 6].
double entropy_oracle() {
  auto p = [](double x) { return ((x - 6) * x + 5) * x - 1; };
  double lo = 1, hi = 6;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (p(mid) < 0 ? lo : hi) = mid;
  }
  return std::log(0.5 * (lo + hi));
}

const ToralAutomorphism& A0() {
  static const ToralAutomorphism A = ToralAutomorphism::from_matrix(demo_matrix());
  return A;
}
const DAMap& f_A() {
  static const DAMap f = DAMap::linear(A0());
  return f;
}
const DAMap& demo() {
  static const DAMap g = demo_mane_map();
  return g;
}

std::vector<double> t_grid() {
  std::vector<double> t;
  for (int i = -4; i <= 14; ++i) t.push_back(i * 0.1);
  return t;
}

const PressureCurve& curve_fA() {
  static const PressureCurve c = pressure_curve(f_A(), geometric_potential(f_A()), t_grid(), 0.05, 6, 14);
  return c;
}
const PressureCurve& curve_demo() {
  static const PressureCurve c = pressure_curve(demo(), geometric_potential(demo()), t_grid(), 0.05, 6, 14);
  return c;
}

const SrbEstimate& srb_demo() {
  static const SrbEstimate s = [] {
    SrbOptions o;
    o.batches = 2;
    return srb_estimate(demo(), 100, 10000, 2000, o);
  }();
  return s;
}

Outcome c1_entropy() {
  const auto t0 = std::chrono::steady_clock::now();
  PressureOptions po;
  po.candidate_budget = 2000000;
  PressureEstimate e = pressure(f_A(), Potential::constant(0, 3), 0.05, 6, 14, po);
  const double secs = seconds_since(t0);
  const double h = entropy_oracle();
  const double rel = std::abs(e.value - h) / h;
  return {rel <= 0.10 && secs < 300 && e.candidates <= 2000000,
          fmt("P(0) = %.5f, h = %.5f, rel err %.3f, %zu points, %.1f s", e.value, h, rel, e.candidates, secs)};
}

Outcome c2_lyapunov() {
  Vecd s(3);
  s << 0.1234, 0.5678, 0.9012;
  LyapunovSpectrum L = lyapunov_spectrum(f_A(), s, 10000);
  Eigen::EigenSolver<Eigen::Matrix3d> es(A0().matrix().cast<double>());
  std::vector<double> truth;
  for (int i = 0; i < 3; ++i) truth.push_back(std::log(std::abs(es.eigenvalues()(i).real())));
  std::sort(truth.begin(), truth.end());
  double worst = 0, sum = 0;
  for (int i = 0; i < 3; ++i) {
    worst = std::max(worst, std::abs(L.exponents[static_cast<std::size_t>(i)] - truth[static_cast<std::size_t>(i)]));
    sum += L.exponents[static_cast<std::size_t>(i)];
  }
  return {worst < 1e-6 && std::abs(sum) < 1e-8, fmt("max exponent error %.2e, sum %.2e", worst, sum)};
}

Outcome c3_root() {
  const double ra = pressure_root(curve_fA()).root;
  const double rg = pressure_root(curve_demo()).root;
  return {std::abs(ra - 1) <= 0.02 && std::abs(rg - 1) <= 0.05, fmt("root A0 %.5f, root demo %.5f", ra, rg)};
}

Outcome c4_formulas() {
  std::vector<std::string> bad;
  const Precise50 eps("1e-45");
  const Precise50 log2 = log(Precise50(2));
  if (!(abs(entropy_H<Precise50>(Precise50("0.5")) - log2) < eps)) bad.push_back("H(1/2)");
  if (!(abs(delta_gap<Precise50>(Precise50(0), 1, Precise50(0)) - log2 / 4) < eps)) bad.push_back("delta_gap");
  const HighPrecision lc("1.05"), ls("0.5");
  const HighPrecision gam = gamma_formula<HighPrecision>(lc, ls);
  if (!(abs(theta_formula<HighPrecision>(lc, ls, gam) - HighPrecision(1)) < HighPrecision("1e-60"))) bad.push_back("theta");
  const Precise50 h("1.61917383208942542511776276955");
  for (const char* c : {"-3.5", "0.25", "7"}) {
    const Precise50 r("0.05"), L(2), sb("0.3"), sg("0.8"), cc(c);
    const Precise50 d = psi<Precise50>(r, sb + cc, sg + cc, h, L) - psi<Precise50>(r, sb, sg, h, L) - cc;
    if (!(abs(d) < Precise50("1e-40"))) bad.push_back(std::string("psi shift ") + c);
  }
  ThresholdParams<Precise50> in;
  in.h = h;
  double worst_res = 0;
  bool increasing = true;
  Precise50 prev(0), rho("1e-3");
  for (int i = 0; i < 40; ++i, rho /= 2) {
    const Precise50 T = T_threshold<Precise50>(rho, rho, in);
    worst_res = std::max(worst_res, static_cast<double>(abs(T_residual<Precise50>(T, rho, rho, in))));
    if (i > 0 && !(T > prev)) increasing = false;
    prev = T;
  }
  Precise50 prev_k(0);
  int first_k = -1;
  for (int k = 10; k <= 600; k += 10) {
    const Precise50 s = pow(Precise50(10), -k);
    const Precise50 T = T_threshold<Precise50>(s, s, in);
    worst_res = std::max(worst_res, static_cast<double>(abs(T_residual<Precise50>(T, s, s, in))));
    if (!(T > prev_k)) increasing = false;
    prev_k = T;
    if (first_k < 0 && T > Precise50(1000)) first_k = k;
  }
  if (!(worst_res < 1e-9)) bad.push_back("T residual");
  if (!increasing) bad.push_back("T monotone");
  if (first_k < 0) bad.push_back("T > 1e3");
  std::string d = fmt("T residual %.1e, T > 1e3 first at rho = r = 1e-%d", worst_res, first_k);
  for (const auto& b : bad) d += "; failed " + b;
  return {bad.empty(), d};
}

Outcome c5_decomposition() {
  Rng rng(2026);
  int mismatches = 0, sum_bad = 0, suffix_bad = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const int n = 1 + static_cast<int>(uniform01(rng) * 20);
    const double r = 0.05 + 0.9 * uniform01(rng);
    std::vector<int> seq(static_cast<std::size_t>(n));
    for (auto& c : seq) c = uniform01(rng) < 0.5 ? 1 : 0;
    int best = 0;
    for (int p = 1; p <= n; ++p) {
      int s = 0;
      for (int i = 0; i < p; ++i) s += seq[static_cast<std::size_t>(i)];
      if (s < p * r) best = p;
    }
    DecompositionResult d = decompose(seq, r);
    if (d.p != best) ++mismatches;
    if (d.p + d.g + d.s != n) ++sum_bad;
    int s = 0;
    for (int i = d.p; i < n; ++i) {
      s += seq[static_cast<std::size_t>(i)];
      if (s < (i - d.p + 1) * r) {
        ++suffix_bad;
        break;
      }
    }
  }
  return {mismatches == 0 && sum_bad == 0 && suffix_bad == 0,
          fmt("10000 sequences: %d p mismatches, %d length errors, %d suffix failures", mismatches, sum_bad, suffix_bad)};
}

Outcome c6_collection() {
  const DAMap& g = demo();
  std::vector<SegmentAudit> rows;
  CollectionOptions co;
  co.audit = &rows;
  PressureEstimate e = empirical_collection_pressure(g, Potential::constant(0, 3), g.q(), g.rho(), 0.1, 0.05, 6, 14, co);
  const double bound = collection_pressure_bound<double>(0.1, g.spectral().h, 1.0, 0, 0);
  int restriction_bad = 0;
  for (const auto& a : rows)
    if (!(a.chi_sum < 0.1 * a.n)) ++restriction_bad;
  return {e.value - bound <= e.tolerance && restriction_bad == 0,
          fmt("P_collection %.4f, bound (L=1) %.4f, band %.4f, %zu audited segments", e.value, bound, e.tolerance,
              rows.size())};
}

Outcome c7_center_stable() {
  const DAMap& g = demo();
  const double r = 0.1, th = theta_r(g, r);
  Rng rng(7);
  const Vecd q = g.q();
  const auto& sp = g.spectral();
  double worst = 0;
  int segs = 0, tries = 0;
  while (segs < 1000 && tries < 200000) {
    ++tries;
    Vecd x;
    if (tries % 2) {
      x = uniform_point(rng, 3);
    } else {
      // Backward iterates of points near the center core, so segments pass through the support.
      Vecd y = q + sp.F_c * ((2 * uniform01(rng) - 1) * 2e-4) + sp.F_s.col(0) * 0.04 + sp.F_u * (1e-12 * uniform01(rng));
      x = reduce_coords<double>(y);
      const int k = 1 + static_cast<int>(uniform01(rng) * 3);
      for (int j = 0; j < k; ++j) x = g.inverse(x);
    }
    const int n = 10 + static_cast<int>(uniform01(rng) * 80);
    DecompositionResult dr = decompose(g, q, g.rho(), r, {x, n});
    if (dr.g < 1) continue;
    auto prof = center_stable_growth_profile(g, g.iterate(x, dr.p), dr.g);
    for (int i = 1; i <= dr.g; ++i) worst = std::max(worst, prof[static_cast<std::size_t>(i - 1)] / std::pow(th, i));
    ++segs;
  }
  return {segs == 1000 && worst <= 1.05, fmt("%d segments, worst growth / theta_r^i = %.4f", segs, worst)};
}

Outcome c8_shadowing() {
  const auto& A = A0();
  const double C = shadowing_constant(A);
  Rng rng(5);
  double worst = 0;
  for (int i = 0; i < 100; ++i) {
    PseudoOrbit p = make_pseudo_orbit(A, uniform_point(rng, 3), 100, 1e-4, rng);
    VecHP y = shadow<HighPrecision>(A, p);
    auto res = shadow_residuals<HighPrecision>(A, y, p);
    worst = std::max(worst, *std::max_element(res.begin(), res.end()) / p.error_bound);
  }
  Vecd x0 = uniform_point(rng, 3);
  PseudoOrbit ex;
  VecHP z = x0.cast<HighPrecision>();
  for (int k = 0; k < 100; ++k) {
    Vecd d(3);
    for (int i = 0; i < 3; ++i) d(i) = static_cast<double>(z(i));
    ex.points.push_back(d);
    z = A.apply<HighPrecision>(z);
  }
  const double back = static_cast<double>(flat_distance<HighPrecision>(shadow<HighPrecision>(A, ex), x0.cast<HighPrecision>()));
  return {worst <= C && back < 1e-12, fmt("worst residual / error %.3f <= C = %.3f, exact orbit offset %.1e", worst, C, back)};
}

Outcome c9_gluing() {
  const DAMap& g = demo();
  const double delta = 0.01;
  Rng rng(9);
  std::vector<OrbitSegment> segs;
  while (segs.size() < 3) {
    OrbitSegment s{uniform_point(rng, 3), 8};
    if (in_G(g, g.q(), g.rho(), 0.1, s)) segs.push_back(s);
  }
  GluingPlan plan = glue_specification(g, segs, delta);
  bool windows = plan.window_distance.size() == 3;
  for (double d : plan.window_distance) windows = windows && d < 3 * delta;
  bool ladder = plan.ladder.size() == 2;
  double worst = 0;
  for (std::size_t j = 0; j < plan.ladder.size(); ++j)
    for (std::size_t i = 0; i < plan.ladder[j].size(); ++i) {
      const double allowed = delta / std::pow(2.0, static_cast<double>(j - i));
      worst = std::max(worst, plan.ladder[j][i] / allowed);
    }
  ladder = ladder && worst <= 1;
  double wmax = 0;
  for (double d : plan.window_distance) wmax = std::max(wmax, d);
  return {plan.verified && windows && ladder,
          fmt("tau %d, max window distance %.2e < 3 delta, ladder / (delta 2^-i) max %.3f", plan.tau, wmax, worst)};
}

Outcome c10_srb() {
  const SrbEstimate& s = srb_demo();
  const double tv = tv_distance(s.batch_histograms[0], s.batch_histograms[1]);
  const double q95 = tv_bootstrap_quantile(s.batch_histograms[0], s.batch_histograms[1], 0.95);
  SrbOptions o;
  SrbEstimate fa = srb_estimate(f_A(), 100, 10000, 1000, o);
  ChiSquare cs = chi_square_uniform(fa.histogram);
  return {tv < q95 && cs.p_value >= 0.01, fmt("demo TV %.5f vs q95 %.5f; A0 chi-square p = %.3f", tv, q95, cs.p_value)};
}

Outcome c11_srb_identity() {
  const SrbEstimate& s = srb_demo();
  const double defect = std::abs(s.integral_phi_u + s.lambda_plus);
  return {defect < 5e-3, fmt("|int phi^u + lambda_d| = %.2e", defect)};
}

Outcome c12_multifractal() {
  const double h = f_A().spectral().h;
  const double step = 0.01 * h;
  std::vector<double> chis;
  for (int k = -5; k <= 5; ++k) chis.push_back(h + k * step);
  MultifractalSpectrum ma = legendre_spectrum(curve_fA(), chis);
  bool linear_ok = true;
  for (std::size_t i = 0; i < chis.size(); ++i) {
    const bool at_h = i == 5;
    if (ma.degenerate[i] == at_h) linear_ok = false;
  }
  const double at_h = ma.entropy_values[5];
  const double near = std::max(std::abs(ma.entropy_values[4] - h), std::abs(ma.entropy_values[6] - h));
  linear_ok = linear_ok && std::abs(at_h - h) <= 0.1 * h && near <= 0.1 * h;

  MultifractalSpectrum md0 = legendre_spectrum(curve_demo(), {h});
  const double lo = std::min(md0.chi_1, md0.chi_0), hi = std::max(md0.chi_1, md0.chi_0);
  std::vector<double> grid;
  for (int k = 0; k <= 20; ++k) grid.push_back(lo + (hi - lo) * k / 20.0);
  MultifractalSpectrum md = legendre_spectrum(curve_demo(), grid);
  bool concave = true, t_in = true;
  for (std::size_t i = 1; i + 1 < grid.size(); ++i)
    if (2 * md.entropy_values[i] < md.entropy_values[i - 1] + md.entropy_values[i + 1] - 1e-9) concave = false;
  for (double t : md.achieving_t)
    if (t < -1e-12 || t > 1 + 1e-12) t_in = false;
  return {linear_ok && concave && t_in,
          fmt("A0: entropy at h %.4f, at h +- step %.4f deviation, off-h flagged %s; demo chi in [%.6f, %.6f], concave %s, t in [0,1] %s",
              at_h, near, linear_ok ? "yes" : "no", lo, hi, concave ? "yes" : "no", t_in ? "yes" : "no")};
}

Outcome c13_ldp() {
  LdpResult r = ldp_rate(f_A(), 100000, Potential::from_expression("sin(2*pi*x1)", 3, 1.0), 0.1, {50, 100, 200, 400});
  bool negative = true;
  std::vector<double> ns, logs;
  std::string list;
  for (const auto& p : r.points) {
    negative = negative && p.rate < 0;
    ns.push_back(p.n);
    logs.push_back(p.log_fraction);
    list += fmt(" %d:%.4f%s", p.n, p.rate, p.zero_count ? "*" : "");
  }
  const LinearFit trend = fit_line(ns, logs);
  LdpResult c = ldp_rate(f_A(), 100000, Potential::constant(0.4, 3), 0.1, {50, 100, 200, 400});
  std::size_t const_dev = 0;
  for (const auto& p : c.points) const_dev += p.deviating;
  return {negative && trend.slope <= 0 && const_dev == 0,
          fmt("rates%s, log-fraction slope %.2e, constant psi deviating %zu", list.c_str(), trend.slope, const_dev)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"C1  entropy of the base map", c1_entropy},
      {"C2  Lyapunov exponents", c2_lyapunov},
      {"C3  pressure-curve root", c3_root},
      {"C4  formula suite", c4_formulas},
      {"C5  decomposition oracle", c5_decomposition},
      {"C6  collection bound", c6_collection},
      {"C7  center-stable contraction", c7_center_stable},
      {"C8  shadowing", c8_shadowing},
      {"C9  specification gluing", c9_gluing},
      {"C10 SRB uniqueness evidence", c10_srb},
      {"C11 SRB identity", c11_srb_identity},
      {"C12 multifractal degeneracy", c12_multifractal},
      {"C13 large deviations", c13_ldp},
  };
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("%s %-32s %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
