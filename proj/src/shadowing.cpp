#include "dathermo/shadowing.hpp"

#include <Eigen/LU>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace dathermo {

namespace {

VecHP to_hp(const Vecd& x) { return x.cast<HighPrecision>(); }

Vecd to_double(const VecHP& x) {
  Vecd out(x.size());
  for (int i = 0; i < x.size(); ++i) out(i) = static_cast<double>(x(i));
  return out;
}

Vecd unit_u(const SpectralData& sp) { return sp.F_u.normalized(); }

}  // namespace

double pseudo_orbit_error(const ToralAutomorphism& A, const std::vector<Vecd>& points) {
  const Mat<HighPrecision> M = A.matrix().cast<HighPrecision>();
  HighPrecision worst = 0;
  for (std::size_t k = 0; k + 1 < points.size(); ++k) {
    VecHP e = wrap<HighPrecision>(to_hp(points[k + 1]) - M * to_hp(points[k]));
    worst = std::max(worst, HighPrecision(e.norm()));
  }
  return static_cast<double>(worst);
}

PseudoOrbit make_pseudo_orbit(const ToralAutomorphism& A, const Vecd& x0, int length, double error, Rng& rng) {
  if (length < 1) throw std::invalid_argument("make_pseudo_orbit: length must be >= 1");
  const int d = A.dim();
  const Matd M = A.matrix().cast<double>();
  PseudoOrbit p;
  p.points.push_back(reduce_coords<double>(x0));
  for (int k = 1; k < length; ++k) {
    Vecd dir(d);
    for (int i = 0; i < d; ++i) dir(i) = standard_normal(rng);
    dir.normalize();
    double radius = error * std::pow(uniform01(rng), 1.0 / d);
    p.points.push_back(reduce_coords<double>(M * p.points.back() + radius * dir));
  }
  p.error_bound = pseudo_orbit_error(A, p.points);
  return p;
}

double shadowing_constant(const ToralAutomorphism& A) {
  const auto& sp = A.spectral();
  Matd Fu = sp.F_u;
  double kb = cone_constant(sp.F_cs(), Fu);
  double ls_max = 0;
  for (double l : sp.eigenvalues)
    if (std::abs(l) < 1) ls_max = std::max(ls_max, std::abs(l));
  double C = kb * (sp.lambda_u / (sp.lambda_u - 1) + 1 / (1 - ls_max));
  return std::max(1.0, C);
}

template <class Scalar>
SpectralBasis<Scalar> spectral_basis(const ToralAutomorphism& A) {
  using std::abs;
  const auto& sp = A.spectral();
  const int d = A.dim();
  const auto& cp = A.char_poly();
  const Mat<Scalar> M = A.matrix().template cast<Scalar>();
  SpectralBasis<Scalar> b;
  b.V.resize(d, d);
  const Scalar tiny = std::numeric_limits<Scalar>::epsilon();
  for (int i = 0; i < d; ++i) {
    Scalar lam(sp.eigenvalues[static_cast<std::size_t>(i)]);
    for (int it = 0; it < 40; ++it) {
      Scalar p(0), dp(0);
      for (long long c : cp) {
        dp = dp * lam + p;
        p = p * lam + Scalar(c);
      }
      Scalar step = p / dp;
      lam -= step;
      if (abs(step) <= abs(lam) * tiny) break;
    }
    Vecd vd = sp.eigenvectors.col(i);
    int j = 0;
    vd.cwiseAbs().maxCoeff(&j);
    Mat<Scalar> B = M - lam * Mat<Scalar>::Identity(d, d);
    Mat<Scalar> Bo(d, d - 1);
    for (int c = 0, k = 0; c < d; ++c)
      if (c != j) Bo.col(k++) = B.col(c);
    Vec<Scalar> rhs = -B.col(j);
    Mat<Scalar> N = Bo.transpose() * Bo;
    Vec<Scalar> sol = N.partialPivLu().solve(Bo.transpose() * rhs);
    Vec<Scalar> v(d);
    for (int c = 0, k = 0; c < d; ++c) v(c) = c == j ? Scalar(1) : sol(k++);
    v /= v.norm();
    if (v(j) * Scalar(vd(j)) < 0) v = -v;
    b.V.col(i) = v;
    b.lambda.push_back(lam);
  }
  b.W = b.V.partialPivLu().inverse();
  return b;
}

template <class Scalar>
Vec<Scalar> shadow(const ToralAutomorphism& A, const PseudoOrbit& pseudo, double eta) {
  using std::abs;
  if (pseudo.points.empty()) throw std::invalid_argument("shadow: empty pseudo-orbit");
  const int d = A.dim();
  const std::size_t N = pseudo.points.size();
  const Mat<Scalar> M = A.matrix().template cast<Scalar>();
  std::vector<Vec<Scalar>> xs;
  xs.reserve(N);
  for (const auto& p : pseudo.points) xs.push_back(p.template cast<Scalar>());
  std::vector<Vec<Scalar>> e;
  double worst = 0;
  for (std::size_t k = 0; k + 1 < N; ++k) {
    e.push_back(wrap<Scalar>(xs[k + 1] - M * xs[k]));
    worst = std::max(worst, static_cast<double>(e.back().norm()));
  }
  const double C = shadowing_constant(A);
  const double eta_v = eta > 0 ? eta : eta_heuristic(A.spectral());
  if (worst > eta_v / C)
    throw std::invalid_argument("shadow: pseudo-orbit error " + std::to_string(worst) + " exceeds eta/C = " +
                                std::to_string(eta_v / C));
  const SpectralBasis<Scalar> b = spectral_basis<Scalar>(A);
  Vec<Scalar> z = Vec<Scalar>::Zero(d);
  for (int i = 0; i < d; ++i) {
    if (!(abs(b.lambda[static_cast<std::size_t>(i)]) > Scalar(1))) continue;
    const Scalar inv = Scalar(1) / b.lambda[static_cast<std::size_t>(i)];
    Scalar pw = inv, acc(0);
    for (const auto& ek : e) {
      acc += pw * b.W.row(i).dot(ek);
      pw *= inv;
    }
    z += acc * b.V.col(i);
  }
  return reduce_coords<Scalar>(xs[0] + z);
}

template <class Scalar>
std::vector<double> shadow_residuals(const ToralAutomorphism& A, const Vec<Scalar>& y, const PseudoOrbit& pseudo) {
  std::vector<double> out;
  Vec<Scalar> p = y;
  for (std::size_t k = 0; k < pseudo.points.size(); ++k) {
    out.push_back(static_cast<double>(flat_distance<Scalar>(p, pseudo.points[k].template cast<Scalar>())));
    p = A.apply<Scalar>(p);
  }
  return out;
}

template SpectralBasis<double> spectral_basis<double>(const ToralAutomorphism&);
template SpectralBasis<HighPrecision> spectral_basis<HighPrecision>(const ToralAutomorphism&);
template Vec<double> shadow<double>(const ToralAutomorphism&, const PseudoOrbit&, double);
template Vec<HighPrecision> shadow<HighPrecision>(const ToralAutomorphism&, const PseudoOrbit&, double);
template std::vector<double> shadow_residuals<double>(const ToralAutomorphism&, const Vec<double>&, const PseudoOrbit&);
template std::vector<double> shadow_residuals<HighPrecision>(const ToralAutomorphism&, const Vec<HighPrecision>&,
                                                             const PseudoOrbit&);

namespace {

Vecd plane_normal(const DAMap& g, const Vecd& x) {
  if (g.exact_cs_planes()) return g.spectral().dual_u().normalized();
  Matd B = estimate_center_stable_plane(g, x);
  const int d = g.dim();
  Eigen::HouseholderQR<Matd> qr(B);
  Matd Q = qr.householderQ() * Matd::Identity(d, d);
  return Q.col(d - 1);
}

/// RK4 along the unit unstable direction field from y for arc length s.
Vecd unstable_curve(const DAMap& g, const Vecd& y, double s, int steps, const Vecd& ref) {
  if (s == 0) return y;
  const double h = s / steps;
  Vecd p = y, prev = ref;
  auto field = [&](const Vecd& at) {
    Vecd e = estimate_unstable_direction(g, at, 30);
    if (e.dot(prev) < 0) e = -e;
    return e;
  };
  for (int k = 0; k < steps; ++k) {
    Vecd k1 = field(p);
    Vecd k2 = field(p + 0.5 * h * k1);
    Vecd k3 = field(p + 0.5 * h * k2);
    Vecd k4 = field(p + h * k3);
    p = p + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4);
    prev = k4;
  }
  return p;
}

}  // namespace

LpsResult lps_intersect(const DAMap& g, const Vecd& x, const Vecd& y, double scale) {
  const double dxy = flat_distance<double>(x, y);
  if (!(scale > 0) || scale > 6 * g.eta() * (1 + 1e-12)) throw std::invalid_argument("lps_intersect: scale must lie in (0, 6 eta]");
  if (!(dxy < scale)) throw std::invalid_argument("lps_intersect: d(x, y) must be below scale");
  const auto& sp = g.spectral();
  LpsResult out;
  out.kappa = kappa(sp);
  const Vecd normal = plane_normal(g, x);
  auto F = [&](const Vecd& p) { return normal.dot(wrap<double>(p - x)); };
  if (g.is_linear()) {
    const Vecd e = unit_u(sp);
    const Vecd D = wrap<double>(y - x);
    const double s = -normal.dot(D) / normal.dot(e);
    out.z = reduce_coords<double>(x + D + s * e);
    out.leaf_distance_u = std::abs(s);
  } else {
    const Vecd e0 = estimate_unstable_direction(g, y, 30);
    const double step = scale / 32;
    auto curve = [&](double s, int mult) {
      int n = std::max(4, static_cast<int>(std::ceil(std::abs(s) / step))) * mult;
      return unstable_curve(g, y, s, n, e0);
    };
    double s0 = 0, F0 = F(y);
    double s1 = -F0 / normal.dot(e0);
    double F1 = F(curve(s1, 1));
    std::ostringstream trace;
    trace << "s=" << s0 << " F=" << F0 << "; s=" << s1 << " F=" << F1;
    int it = 0;
    while (std::abs(F1) > 1e-13 && it < 60) {
      if (F1 == F0) break;
      double s2 = s1 - F1 * (s1 - s0) / (F1 - F0);
      s0 = s1;
      F0 = F1;
      s1 = s2;
      if (!std::isfinite(s1) || std::abs(s1) > 4 * out.kappa * scale)
        throw NumericalRejection("lps_intersect: secant diverged: " + trace.str());
      F1 = F(curve(s1, 1));
      trace << "; s=" << s1 << " F=" << F1;
      ++it;
    }
    if (std::abs(F1) > 1e-10) throw NumericalRejection("lps_intersect: no convergence: " + trace.str());
    out.iterations = it;
    Vecd z1 = curve(s1, 1);
    Vecd z2 = curve(s1, 2);
    out.residual_u = (z1 - z2).norm();
    out.z = reduce_coords<double>(z1);
    out.leaf_distance_u = std::abs(s1);
  }
  out.residual_cs = std::abs(F(out.z));
  out.leaf_distance_cs = flat_distance<double>(out.z, x);
  const double cap = out.kappa * dxy * (1 + 1e-12) + 1e-15;
  out.within_kappa = out.leaf_distance_cs <= cap && out.leaf_distance_u <= cap;
  return out;
}

std::vector<VecHP> orbit_hp(const DAMap& g, const VecHP& x, int n) {
  if (!g.has_high_precision()) throw std::invalid_argument("orbit_hp: map has no high-precision evaluator");
  std::vector<VecHP> out;
  out.reserve(static_cast<std::size_t>(std::max(n, 0)));
  VecHP p = reduce_coords<HighPrecision>(x);
  for (int k = 0; k < n; ++k) {
    out.push_back(p);
    if (k + 1 < n) p = g(p);
  }
  return out;
}

namespace {

struct Crossing {
  bool found = false;
  double s = 0;     // displacement along the unit unstable direction at p
  double cs = 0;
  double score = INFINITY;
};

/// Linear prediction: the image of the unstable arc through p is the line
/// ptau + t e, t = G s. Scans t with step 1/4 and tests the nearest lattice
/// translate of the target's center-stable plane.
Crossing find_crossing(const SpectralData& sp, const Vecd& ptau, double G, const Vecd& x, double delta, double frac) {
  const Vecd e = unit_u(sp);
  const Vecd w = sp.dual_u() / sp.dual_u().dot(e);
  const Vecd D0 = wrap<double>(ptau - x);
  const double T = frac * delta * std::abs(G);
  Crossing best;
  const long steps = static_cast<long>(std::ceil(2 * T / 0.25));
  Vecd last_n = Vecd::Constant(x.size(), NAN);
  for (long k = 0; k <= steps; ++k) {
    const double t = -T + 2 * T * static_cast<double>(k) / static_cast<double>(std::max<long>(steps, 1));
    Vecd n = (D0 + t * e).array().round().matrix();
    if (n == last_n) continue;
    last_n = n;
    const Vecd Dn = D0 - n;
    const double tn = -w.dot(Dn);
    const double cs = (Dn + tn * e).norm();
    const double s = tn / G;
    if (std::abs(s) < frac * delta && cs < frac * delta) {
      double score = std::max(std::abs(s), cs) / delta;
      if (score < best.score) best = {true, s, cs, score};
    }
  }
  return best;
}

/// Image of p under g^tau and the signed growth of the unit unstable vector.
std::pair<Vecd, double> push(const DAMap& g, const Vecd& p, const Vecd& v0, int tau) {
  Vecd x = p, v = v0;
  double log_growth = 0;
  for (int k = 0; k < tau; ++k) {
    Vecd w = g.jacobian(x) * v;
    double nw = w.norm();
    log_growth += std::log(nw);
    v = w / nw;
    x = g(x);
  }
  const double sign = v.dot(unit_u(g.spectral())) < 0 ? -1.0 : 1.0;
  return {x, sign * std::exp(log_growth)};
}

Vecd aligned_unstable(const DAMap& g, const Vecd& p) {
  Vecd e = estimate_unstable_direction(g, p, 30);
  if (e.dot(unit_u(g.spectral())) < 0) e = -e;
  return e;
}

}  // namespace

int measure_transition_time(const DAMap& g, double delta, const GlueOptions& opts) {
  if (!(delta > 0)) throw std::invalid_argument("measure_transition_time: delta must be positive");
  const int d = g.dim();
  Rng rng = stream(opts.seed, 0);
  std::vector<std::pair<Vecd, Vecd>> pairs;
  for (int i = 0; i < opts.tau_pairs; ++i) {
    Vecd p = uniform_point(rng, d);
    Vecd x = uniform_point(rng, d);
    pairs.emplace_back(p, x);
  }
  const double mu = g.unstable_min();
  for (int tau = 1; tau <= opts.tau_max; ++tau) {
    if (!(std::pow(mu, tau) > 2)) continue;
    bool all = true;
    for (const auto& [p, x] : pairs) {
      auto [ptau, G] = push(g, p, aligned_unstable(g, p), tau);
      if (!find_crossing(g.spectral(), ptau, G, x, delta, 0.5).found) {
        all = false;
        break;
      }
    }
    if (all) return tau;
  }
  throw NumericalRejection("measure_transition_time: unstable leaves not delta-dense within tau_max iterates");
}

nlohmann::json GluingPlan::to_json() const {
  nlohmann::json segs = nlohmann::json::array();
  for (const auto& s : segments) segs.push_back({{"x", dathermo::to_json(s.x)}, {"n", s.n}});
  std::vector<std::string> ys;
  for (int i = 0; i < y.size(); ++i) ys.push_back(y(i).str(40));
  return {{"segments", segs},        {"delta", delta},   {"tau", tau},
          {"m", m},                  {"y", ys},          {"window_distance", window_distance},
          {"bound", 3 * delta},      {"ladder", ladder}, {"verified", verified}};
}

GluingPlan glue_specification(const DAMap& g, const std::vector<OrbitSegment>& segments, double delta,
                              const GlueOptions& opts) {
  if (segments.empty()) throw std::invalid_argument("glue_specification: no segments");
  if (!g.has_high_precision()) throw std::invalid_argument("glue_specification: map has no high-precision evaluator");
  const Vecd q = opts.q.size() == g.dim() ? opts.q : g.q();
  const double rho = opts.rho > 0 ? opts.rho : g.rho();
  if (!(delta > 0 && delta < rho / 2)) throw std::invalid_argument("glue_specification: delta must lie in (0, rho/2)");
  for (std::size_t j = 0; j < segments.size(); ++j) {
    if (segments[j].n < 1) throw std::invalid_argument("glue_specification: empty segment");
    if (!in_G(g, q, rho, opts.r, segments[j]))
      throw std::invalid_argument("glue_specification: segment " + std::to_string(j + 1) + " is not good");
  }
  const std::size_t k = segments.size();
  const auto& sp = g.spectral();
  const Vecd normal_exact = sp.dual_u().normalized();
  auto normal_at = [&](const Vecd& x) { return g.exact_cs_planes() ? normal_exact : plane_normal(g, x); };

  int tau = k > 1 ? measure_transition_time(g, delta, opts) : 0;
  for (; tau <= std::max(opts.tau_max, 0); ++tau) {
    GluingPlan plan;
    plan.segments = segments;
    plan.delta = delta;
    plan.tau = tau;
    plan.m.push_back(-tau);
    long acc = 0;
    for (std::size_t j = 0; j < k; ++j) {
      acc += segments[j].n;
      plan.m.push_back(acc + static_cast<long>(j) * tau);
    }
    plan.partial.push_back(reduce_coords<HighPrecision>(to_hp(segments[0].x)));
    bool restart = false;
    for (std::size_t j = 1; j < k && !restart; ++j) {
      const VecHP& yj = plan.partial.back();
      const int mj = static_cast<int>(plan.m[j]);
      auto orb = orbit_hp(g, yj, mj + 1);
      const Vecd p = to_double(orb.back());
      const Vecd vp = aligned_unstable(g, p);
      auto [ptau, G] = push(g, p, vp, tau);
      Crossing c = find_crossing(sp, ptau, G, segments[j].x, delta, 0.5);
      if (!c.found) {
        restart = true;
        break;
      }
      // Growth of a direction at y_j up to time m_j.
      const Vecd v0 = aligned_unstable(g, to_double(yj));
      double logG = 0;
      Vecd v = v0;
      for (int t = 0; t < mj; ++t) {
        Vecd w = g.jacobian(to_double(orb[static_cast<std::size_t>(t)])) * v;
        double nw = w.norm();
        logG += std::log(nw);
        v = w / nw;
      }
      const double signG = v.dot(vp) < 0 ? -1.0 : 1.0;
      const VecHP vhp = to_hp(v0);
      const Vecd target = segments[j].x;
      const VecHP target_hp = to_hp(target);
      const VecHP nrm = to_hp(normal_at(target));
      auto F = [&](const HighPrecision& sigma) {
        VecHP z = reduce_coords<HighPrecision>(yj + sigma * vhp);
        for (int t = 0; t < mj + tau; ++t) z = g(z);
        return HighPrecision(nrm.dot(wrap<HighPrecision>(z - target_hp)));
      };
      HighPrecision s0 = HighPrecision(c.s) / (HighPrecision(signG) * exp(HighPrecision(logG)));
      HighPrecision s1 = s0 * HighPrecision(1 + 1e-6);
      HighPrecision F0 = F(s0), F1 = F(s1);
      for (int it = 0; it < 80 && abs(F1) > HighPrecision(1e-60); ++it) {
        if (F1 == F0) break;
        HighPrecision s2 = s1 - F1 * (s1 - s0) / (F1 - F0);
        s0 = s1;
        F0 = F1;
        s1 = s2;
        F1 = F(s1);
      }
      if (abs(F1) > HighPrecision(1e-30)) throw NumericalRejection("glue_specification: join refinement failed");
      VecHP next = reduce_coords<HighPrecision>(yj + s1 * vhp);
      // Join checks: on W^u_delta at time m_j, on W^cs_delta(x_{j+1}) at m_j + tau.
      auto orb2 = orbit_hp(g, next, mj + tau + 1);
      const double du = static_cast<double>(flat_distance<HighPrecision>(orb2[static_cast<std::size_t>(mj)], orb.back()));
      const double dcs = static_cast<double>(flat_distance<HighPrecision>(orb2.back(), target_hp));
      if (!(du < delta) || !(dcs < delta)) {
        restart = true;
        break;
      }
      plan.partial.push_back(next);
    }
    if (restart) continue;
    plan.y = plan.partial.back();

    // Audit in high precision.
    const long total = plan.m[k];
    auto full = orbit_hp(g, plan.y, static_cast<int>(total));
    bool ok = true;
    for (std::size_t j = 0; j < k; ++j) {
      const long start = plan.m[j] + tau;
      auto xo = orbit_hp(g, to_hp(segments[j].x), segments[j].n);
      HighPrecision worst = 0;
      for (int i = 0; i < segments[j].n; ++i)
        worst = std::max(worst, flat_distance<HighPrecision>(full[static_cast<std::size_t>(start + i)], xo[static_cast<std::size_t>(i)]));
      plan.window_distance.push_back(static_cast<double>(worst));
      ok = ok && worst < HighPrecision(3 * delta);
    }
    for (std::size_t j = 0; j + 1 < k; ++j) {
      auto a = orbit_hp(g, plan.partial[j], static_cast<int>(plan.m[j + 1]));
      auto b = orbit_hp(g, plan.partial[j + 1], static_cast<int>(plan.m[j + 1]));
      std::vector<double> row;
      for (std::size_t i = 0; i <= j; ++i) {
        const long start = plan.m[i] + tau;
        HighPrecision worst = 0;
        for (int t = 0; t < segments[i].n; ++t)
          worst = std::max(worst, flat_distance<HighPrecision>(a[static_cast<std::size_t>(start + t)], b[static_cast<std::size_t>(start + t)]));
        row.push_back(static_cast<double>(worst));
      }
      plan.ladder.push_back(row);
    }
    plan.verified = ok;
    return plan;
  }
  throw NumericalRejection("glue_specification: no transition within tau_max");
}

BowenBallAudit audit_bowen_ball(const DAMap& g, const Vecd& x, int n, double eps, double r, Rng& rng) {
  if (n < 1) throw std::invalid_argument("audit_bowen_ball: n must be >= 1");
  const auto& sp = g.spectral();
  const int d = g.dim();
  const double kap = kappa(sp);
  const double th_r = theta_r(g, r);
  const double th_u = 1.0 / g.unstable_min();
  // Center-stable offset of size up to 0.45 eps.
  Matd B = g.exact_cs_planes() ? Matd(sp.F_cs()) : estimate_center_stable_plane(g, x);
  Vecd c(d - 1);
  for (int i = 0; i < d - 1; ++i) c(i) = standard_normal(rng);
  Vecd w = B * c;
  w *= 0.45 * eps * uniform01(rng) / w.norm();
  const Vecd z = reduce_coords<double>(x + w);
  // Unstable offset sized by the growth up to time n-1.
  const Vecd v0 = aligned_unstable(g, z);
  auto xs = orbit(g, z, n);
  double logG = 0;
  Vecd v = v0;
  for (int t = 0; t + 1 < n; ++t) {
    Vecd nv = g.jacobian(xs[static_cast<std::size_t>(t)]) * v;
    logG += std::log(nv.norm());
    v = nv / nv.norm();
  }
  const double a = 0.45 * eps * (2 * uniform01(rng) - 1);
  const VecHP y = reduce_coords<HighPrecision>(to_hp(z) + HighPrecision(a) * exp(HighPrecision(-logG)) * to_hp(v0));
  auto ox = orbit_hp(g, to_hp(x), n);
  auto oy = orbit_hp(g, y, n);
  BowenBallAudit out;
  for (int k = 0; k < n; ++k) {
    double dk = static_cast<double>(flat_distance<HighPrecision>(ox[static_cast<std::size_t>(k)], oy[static_cast<std::size_t>(k)]));
    out.bowen_distance = std::max(out.bowen_distance, dk);
    double bound = kap * eps * (std::pow(th_r, k) + std::pow(th_u, n - k));
    double ratio = dk / bound;
    if (ratio > out.max_ratio) {
      out.max_ratio = ratio;
      out.worst_k = k;
    }
  }
  return out;
}

BowenVariation audit_bowen_property(const DAMap& g, const Potential& phi, const std::vector<OrbitSegment>& segments,
                                    double eps, double r, int pairs_per_segment, std::uint64_t seed) {
  const auto& sp = g.spectral();
  const double kap = kappa(sp);
  const double th_r = theta_r(g, r);
  const double th_u = 1.0 / g.unstable_min();
  const double alpha = phi.alpha();
  BowenVariation out;
  double worst_bound = 0;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const auto& seg = segments[s];
    double series = 0;
    for (int j = 0; j <= seg.n; ++j) series += std::pow(th_u, j * alpha) + std::pow(th_r, j * alpha);
    worst_bound = std::max(worst_bound, phi.seminorm() * std::pow(2 * kap * eps, alpha) * series);
    auto ox = orbit(g, seg.x, seg.n);
    double sx = 0;
    for (const auto& p : ox) sx += phi(p);
    for (int i = 0; i < pairs_per_segment; ++i) {
      Rng local = stream(seed + 1, s * 1000003ULL + static_cast<std::uint64_t>(i));
      // Companion built as in audit_bowen_ball.
      Matd B = g.exact_cs_planes() ? Matd(sp.F_cs()) : estimate_center_stable_plane(g, seg.x);
      Vecd c(g.dim() - 1);
      for (int t = 0; t < g.dim() - 1; ++t) c(t) = standard_normal(local);
      Vecd w = B * c;
      w *= 0.45 * eps * uniform01(local) / w.norm();
      const Vecd z = reduce_coords<double>(seg.x + w);
      const Vecd v0 = aligned_unstable(g, z);
      auto zs = orbit(g, z, seg.n);
      double logG = 0;
      Vecd v = v0;
      for (int t = 0; t + 1 < seg.n; ++t) {
        Vecd nv = g.jacobian(zs[static_cast<std::size_t>(t)]) * v;
        logG += std::log(nv.norm());
        v = nv / nv.norm();
      }
      const double a = 0.45 * eps * (2 * uniform01(local) - 1);
      const VecHP y = reduce_coords<HighPrecision>(to_hp(z) + HighPrecision(a) * exp(HighPrecision(-logG)) * to_hp(v0));
      auto oy = orbit_hp(g, y, seg.n);
      double sy = 0;
      for (const auto& p : oy) sy += phi(to_double(p));
      out.measured = std::max(out.measured, std::abs(sx - sy));
      ++out.pairs;
    }
  }
  out.bound = worst_bound;
  return out;
}

}  // namespace dathermo
