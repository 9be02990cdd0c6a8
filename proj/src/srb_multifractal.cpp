#include "dathermo/srb_multifractal.hpp"

#include "dathermo/parallel.hpp"
#include "dathermo/random.hpp"

#include <Eigen/LU>
#include <Eigen/QR>
#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dathermo {

nlohmann::json LyapunovSpectrum::to_json() const {
  return {{"exponents", exponents},
          {"n_used", n_used},
          {"lambda_plus", lambda_plus},
          {"seed", dathermo::to_json(seed)},
          {"volume_defect", volume_defect}};
}

LyapunovSpectrum lyapunov_spectrum(const DAMap& g, const Vecd& seed, int n, int n_transient) {
  if (n < 1000) throw std::invalid_argument("lyapunov_spectrum: n must be >= 1000");
  if (n_transient < 0) throw std::invalid_argument("lyapunov_spectrum: negative transient");
  const int d = g.dim();
  Matd Q = Matd::Identity(d, d);
  Vecd x = reduce_coords<double>(seed);
  std::vector<double> acc(static_cast<std::size_t>(d), 0.0);
  double logdet = 0;
  for (int k = 0; k < n_transient + n; ++k) {
    Matd J = g.jacobian(x);
    Eigen::HouseholderQR<Matd> qr(J * Q);
    const auto& R = qr.matrixQR();
    Q = qr.householderQ() * Matd::Identity(d, d);
    if (k >= n_transient) {
      for (int i = 0; i < d; ++i) {
        double r = std::abs(R(i, i));
        if (!(r > 0) || !std::isfinite(r)) throw NumericalRejection("lyapunov_spectrum: degenerate frame");
        acc[static_cast<std::size_t>(i)] += std::log(r);
      }
      logdet += std::log(std::abs(J.determinant()));
    }
    x = g(x);
  }
  LyapunovSpectrum out;
  out.n_used = n;
  out.seed = seed;
  double total = 0;
  for (double a : acc) {
    out.exponents.push_back(a / n);
    total += a / n;
  }
  std::sort(out.exponents.begin(), out.exponents.end());
  for (double e : out.exponents)
    if (e > 0) out.lambda_plus += e;
  out.volume_defect = std::abs(total - logdet / n);
  return out;
}

PressureRoot pressure_root(const PressureCurve& curve) {
  const auto& t = curve.t;
  if (t.size() < 2) throw std::invalid_argument("pressure_root: need at least two t values");
  std::vector<std::size_t> order(t.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return t[a] < t[b]; });
  PressureRoot out;
  for (std::size_t k = 0; k + 1 < order.size(); ++k) {
    double a = curve.estimates[order[k]].value, b = curve.estimates[order[k + 1]].value;
    if ((a > 0) == (b > 0)) continue;
    double lo = t[order[k]], hi = t[order[k + 1]];
    double flo = a;
    while (hi - lo > 1e-7) {
      double mid = 0.5 * (lo + hi);
      double fm = curve.evaluate(mid).value;
      ++out.evaluations;
      if ((fm > 0) == (flo > 0)) {
        lo = mid;
        flo = fm;
      } else {
        hi = mid;
      }
    }
    out.root = 0.5 * (lo + hi);
    out.bracket_lo = t[order[k]];
    out.bracket_hi = t[order[k + 1]];
    return out;
  }
  nlohmann::json pts = nlohmann::json::array();
  for (std::size_t i = 0; i < t.size(); ++i) pts.push_back({t[i], curve.estimates[i].value});
  throw NumericalRejection("pressure_root: no sign change on the t grid: " + pts.dump());
}

nlohmann::json SrbEstimate::to_json() const {
  return {{"dim", dim},
          {"bins", bins},
          {"samples", samples},
          {"lambda_plus", lambda_plus},
          {"integral_phi_u", integral_phi_u},
          {"cocycle_integral_phi_u", cocycle_integral_phi_u},
          {"entropy_defect", entropy_defect},
          {"converged", converged},
          {"batches", batch_histograms.size()}};
}

namespace {

std::size_t cell_index(const Vecd& x, int bins) {
  std::size_t idx = 0;
  for (int i = x.size() - 1; i >= 0; --i) {
    int c = std::min(bins - 1, std::max(0, static_cast<int>(x(i) * bins)));
    idx = idx * static_cast<std::size_t>(bins) + static_cast<std::size_t>(c);
  }
  return idx;
}

}  // namespace

SrbEstimate srb_estimate(const DAMap& g, int n_transient, int n_sample, int n_seeds, const SrbOptions& opts) {
  if (n_transient < 0 || n_sample < 1 || n_seeds < 1) throw std::invalid_argument("srb_estimate: budgets must be positive");
  if (opts.bins < 1 || opts.stride < 1 || opts.batches < 1) throw std::invalid_argument("srb_estimate: bad options");
  const int d = g.dim();
  SrbEstimate out;
  out.dim = d;
  out.bins = opts.bins;
  std::size_t cells = 1;
  for (int i = 0; i < d; ++i) cells *= static_cast<std::size_t>(opts.bins);
  out.histogram.assign(cells, 0.0);
  out.batch_histograms.assign(static_cast<std::size_t>(opts.batches), std::vector<double>(cells, 0.0));
  out.seed_lambda.assign(static_cast<std::size_t>(n_seeds), 0.0);

  const int per_seed_phi = opts.phi_u_points > 0 ? (opts.phi_u_points + n_seeds - 1) / n_seeds : 0;
  std::vector<Vecd> phi_points;
  const Vecd e_u = g.spectral().eigenvectors.col(g.spectral().index_u());
  const std::size_t chunk = 64;
  std::vector<std::vector<std::uint32_t>> cell_lists(chunk);
  std::vector<std::vector<Vecd>> phi_lists(chunk);
  double cocycle_total = 0;
  for (std::size_t start = 0; start < static_cast<std::size_t>(n_seeds); start += chunk) {
    const std::size_t count = std::min(chunk, static_cast<std::size_t>(n_seeds) - start);
    parallel_for(count, opts.workers, [&](std::size_t j) {
      const std::size_t s = start + j;
      Rng rng = stream(opts.seed, s);
      Vecd x = uniform_point(rng, d);
      Vecd v = e_u;
      auto& cl = cell_lists[j];
      auto& pl = phi_lists[j];
      cl.clear();
      pl.clear();
      double logs = 0;
      const long total = static_cast<long>(n_transient) + static_cast<long>(n_sample) * opts.stride;
      for (long k = 0; k < total; ++k) {
        if (k >= n_transient && (k - n_transient) % opts.stride == 0) {
          cl.push_back(static_cast<std::uint32_t>(cell_index(x, opts.bins)));
          if (static_cast<int>(pl.size()) < per_seed_phi && (k - n_transient) % (opts.stride * 97) == 0) pl.push_back(x);
        }
        Vecd w = g.jacobian(x) * v;
        double nw = w.norm();
        if (k >= n_transient) logs += std::log(nw);
        v = w / nw;
        x = g(x);
      }
      out.seed_lambda[s] = logs / static_cast<double>(total - n_transient);
    }, 1);
    for (std::size_t j = 0; j < count; ++j) {
      const std::size_t s = start + j;
      auto& batch = out.batch_histograms[s % static_cast<std::size_t>(opts.batches)];
      for (std::uint32_t c : cell_lists[j]) {
        batch[c] += 1;
        out.histogram[c] += 1;
      }
      out.samples += cell_lists[j].size();
      phi_points.insert(phi_points.end(), phi_lists[j].begin(), phi_lists[j].end());
      cocycle_total += out.seed_lambda[s];
    }
  }
  out.lambda_plus = cocycle_total / n_seeds;
  out.cocycle_integral_phi_u = -out.lambda_plus;
  for (double l : out.seed_lambda)
    if (!std::isfinite(l) || !(l > 0)) out.converged = false;

  if (!phi_points.empty()) {
    std::vector<double> vals(phi_points.size());
    parallel_for(phi_points.size(), opts.workers, [&](std::size_t i) {
      Vecd u = estimate_unstable_direction(g, phi_points[i], 30);
      vals[i] = -std::log((g.jacobian(phi_points[i]) * u).norm());
    }, 16);
    out.integral_phi_u = std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(vals.size());
  } else {
    out.integral_phi_u = out.cocycle_integral_phi_u;
  }
  out.entropy_defect = std::abs(-out.integral_phi_u - out.lambda_plus);
  return out;
}

double tv_distance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("tv_distance: size mismatch");
  const double na = std::accumulate(a.begin(), a.end(), 0.0);
  const double nb = std::accumulate(b.begin(), b.end(), 0.0);
  if (!(na > 0) || !(nb > 0)) throw std::invalid_argument("tv_distance: empty histogram");
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] / na - b[i] / nb);
  return 0.5 * s;
}

namespace {

std::vector<double> multinomial(Rng& rng, long long n, const std::vector<double>& p) {
  std::vector<double> out(p.size(), 0.0);
  double mass = 1.0;
  long long left = n;
  for (std::size_t i = 0; i < p.size() && left > 0; ++i) {
    if (i + 1 == p.size() || p[i] >= mass) {
      out[i] = static_cast<double>(left);
      left = 0;
      break;
    }
    double q = std::clamp(p[i] / mass, 0.0, 1.0);
    std::binomial_distribution<long long> bin(left, q);
    long long k = bin(rng);
    out[i] = static_cast<double>(k);
    left -= k;
    mass -= p[i];
  }
  return out;
}

}  // namespace

double tv_bootstrap_quantile(const std::vector<double>& a, const std::vector<double>& b, double quantile,
                             int replicates, std::uint64_t seed) {
  if (a.size() != b.size()) throw std::invalid_argument("tv_bootstrap_quantile: size mismatch");
  if (replicates < 1 || !(quantile > 0 && quantile < 1)) throw std::invalid_argument("tv_bootstrap_quantile: bad options");
  const double na = std::accumulate(a.begin(), a.end(), 0.0);
  const double nb = std::accumulate(b.begin(), b.end(), 0.0);
  std::vector<double> p(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) p[i] = (a[i] + b[i]) / (na + nb);
  std::vector<double> tv(static_cast<std::size_t>(replicates));
  for (int r = 0; r < replicates; ++r) {
    Rng rng = stream(seed, static_cast<std::uint64_t>(r));
    auto x = multinomial(rng, static_cast<long long>(na), p);
    auto y = multinomial(rng, static_cast<long long>(nb), p);
    tv[static_cast<std::size_t>(r)] = tv_distance(x, y);
  }
  std::sort(tv.begin(), tv.end());
  auto k = static_cast<std::size_t>(std::ceil(quantile * replicates)) - 1;
  return tv[std::min(k, tv.size() - 1)];
}

ChiSquare chi_square_uniform(const std::vector<double>& counts) {
  if (counts.size() < 2) throw std::invalid_argument("chi_square_uniform: need at least two cells");
  const double n = std::accumulate(counts.begin(), counts.end(), 0.0);
  const double e = n / static_cast<double>(counts.size());
  ChiSquare out;
  for (double c : counts) out.statistic += (c - e) * (c - e) / e;
  out.dof = static_cast<int>(counts.size()) - 1;
  boost::math::chi_squared dist(out.dof);
  out.p_value = boost::math::cdf(boost::math::complement(dist, out.statistic));
  return out;
}

nlohmann::json MultifractalSpectrum::to_json() const {
  return {{"chi", chi_grid},
          {"entropy", entropy_values},
          {"achieving_t", achieving_t},
          {"degenerate", degenerate},
          {"chi_0", chi_0},
          {"chi_1", chi_1}};
}

MultifractalSpectrum legendre_spectrum(const PressureCurve& curve, const std::vector<double>& chi_grid) {
  if (chi_grid.empty()) throw std::invalid_argument("legendre_spectrum: empty chi grid");
  std::vector<std::pair<double, double>> pts;
  for (std::size_t i = 0; i < curve.t.size(); ++i) pts.emplace_back(curve.t[i], curve.estimates[i].value);
  std::sort(pts.begin(), pts.end());
  auto has = [&](double v) {
    return std::any_of(pts.begin(), pts.end(), [v](const auto& p) { return std::abs(p.first - v) < 1e-12; });
  };
  if (!has(0.0) || !has(1.0)) throw std::invalid_argument("legendre_spectrum: t grid must contain 0 and 1");

  // Lower convex hull.
  std::vector<std::pair<double, double>> hull;
  for (const auto& p : pts) {
    while (hull.size() >= 2) {
      const auto& a = hull[hull.size() - 2];
      const auto& b = hull.back();
      double cross = (b.first - a.first) * (p.second - a.second) - (b.second - a.second) * (p.first - a.first);
      if (cross <= 0)
        hull.pop_back();
      else
        break;
    }
    hull.push_back(p);
  }
  auto slope_at = [&](double t, bool right) {
    for (std::size_t k = 0; k + 1 < hull.size(); ++k) {
      double a = hull[k].first, b = hull[k + 1].first;
      bool inside = right ? (a <= t + 1e-12 && t + 1e-12 < b) : (a < t - 1e-12 && t - 1e-12 <= b);
      if (inside) return (hull[k + 1].second - hull[k].second) / (b - a);
    }
    throw std::invalid_argument("legendre_spectrum: t grid must extend on both sides of [0,1]");
  };
  MultifractalSpectrum out;
  out.chi_0 = -slope_at(0.0, true);
  out.chi_1 = -slope_at(1.0, false);
  const double tol = 1e-9 * std::max(1.0, std::abs(out.chi_0));
  for (double chi : chi_grid) {
    bool degenerate = chi > out.chi_0 + tol || chi < out.chi_1 - tol;
    double c = std::clamp(chi, std::min(out.chi_1, out.chi_0), std::max(out.chi_1, out.chi_0));
    double best = INFINITY, best_t = 0;
    bool best_inside = false;
    for (const auto& [t, P] : pts) {
      double v = P + t * c;
      bool inside = t >= -1e-12 && t <= 1 + 1e-12;
      double gap = v - best;
      if (gap < -1e-12 * std::max(1.0, std::abs(best)) || (std::abs(gap) <= 1e-12 * std::max(1.0, std::abs(best)) && inside && !best_inside)) {
        best = v;
        best_t = t;
        best_inside = inside;
      }
    }
    out.chi_grid.push_back(chi);
    out.entropy_values.push_back(best);
    out.achieving_t.push_back(best_t);
    out.degenerate.push_back(degenerate);
  }
  return out;
}

nlohmann::json LdpResult::to_json() const {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : points)
    pts.push_back({{"n", p.n},
                   {"deviating", p.deviating},
                   {"log_fraction", p.log_fraction},
                   {"rate", p.rate},
                   {"zero_count", p.zero_count}});
  return {{"mean", mean}, {"points", pts}, {"rate_evidence", rate_evidence}};
}

LdpResult ldp_rate(const DAMap& g, std::size_t measure_samples, const Potential& psi, double epsilon,
                   std::vector<int> n_grid, const LdpOptions& opts) {
  if (!(epsilon > 0)) throw std::invalid_argument("ldp_rate: epsilon must be positive");
  if (measure_samples == 0 || n_grid.empty()) throw std::invalid_argument("ldp_rate: empty budget");
  std::sort(n_grid.begin(), n_grid.end());
  n_grid.erase(std::unique(n_grid.begin(), n_grid.end()), n_grid.end());
  if (n_grid.front() < 1) throw std::invalid_argument("ldp_rate: n must be >= 1");
  const int n_max = n_grid.back();
  const std::size_t G = n_grid.size();
  const int d = g.dim();
  std::vector<double> avgs(measure_samples * G);
  std::vector<double> totals(measure_samples);
  parallel_for(measure_samples, opts.workers, [&](std::size_t i) {
    Rng rng = stream(opts.seed, i);
    Vecd x = uniform_point(rng, d);
    for (int k = 0; k < opts.n_transient; ++k) x = g(x);
    double s = 0;
    std::size_t gi = 0;
    for (int k = 1; k <= n_max; ++k) {
      s += psi(x);
      x = g(x);
      if (k == n_grid[gi]) avgs[i * G + gi++] = s / k;
    }
    totals[i] = s;
  }, 256);
  LdpResult out;
  out.mean = opts.has_mean ? opts.mean
                           : std::accumulate(totals.begin(), totals.end(), 0.0) /
                                 (static_cast<double>(measure_samples) * n_max);
  std::vector<double> xs, ys;
  for (std::size_t gi = 0; gi < G; ++gi) {
    LdpPoint p;
    p.n = n_grid[gi];
    for (std::size_t i = 0; i < measure_samples; ++i)
      if (std::abs(avgs[i * G + gi] - out.mean) > epsilon) ++p.deviating;
    if (p.deviating == 0) {
      p.zero_count = true;
      p.log_fraction = -std::log(static_cast<double>(measure_samples));
    } else {
      p.log_fraction = std::log(static_cast<double>(p.deviating) / static_cast<double>(measure_samples));
      xs.push_back(p.n);
      ys.push_back(p.log_fraction);
    }
    p.rate = p.log_fraction / p.n;
    out.points.push_back(p);
  }
  if (xs.size() >= 2) out.rate_evidence = -fit_line(xs, ys).slope;
  return out;
}

}  // namespace dathermo
