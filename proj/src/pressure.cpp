#include "dathermo/pressure.hpp"

#include "dathermo/parallel.hpp"
#include "dathermo/random.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

namespace dathermo {

void LogSumExp::add(double v) {
  ++count_;
  if (v == -INFINITY) return;
  if (v > max_) {
    if (max_ != -INFINITY) {
      double f = std::exp(max_ - v);
      sum_ *= f;
      comp_ *= f;
    }
    max_ = v;
  }
  double term = std::exp(v - max_) - comp_;
  double t = sum_ + term;
  comp_ = (t - sum_) - term;
  sum_ = t;
}

double LogSumExp::value() const {
  if (max_ == -INFINITY) return -INFINITY;
  return max_ + std::log(sum_);
}

double bowen_distance(const DAMap& g, const Vecd& x, const Vecd& y, int n) {
  if (n < 1) throw std::invalid_argument("bowen_distance: n must be >= 1");
  double best = 0;
  Vecd a = x, b = y;
  for (int k = 0; k < n; ++k) {
    best = std::max(best, flat_distance<double>(a, b));
    if (k + 1 < n) {
      a = g(a);
      b = g(b);
    }
  }
  return best;
}

namespace {

inline double wrapped_sq(const double* a, const double* b, int d) {
  double s = 0;
  for (int i = 0; i < d; ++i) {
    double t = a[i] - b[i];
    t -= std::floor(t + 0.5);
    s += t * t;
  }
  return s;
}

/// Spatial hash of last iterates with cell size >= eps.
class CellIndex {
 public:
  CellIndex(int d, double eps) : d_(d) {
    m_ = static_cast<int>(std::floor(1.0 / eps));
    if (m_ < 3) m_ = 1;
    double total = std::pow(static_cast<double>(m_), d);
    dense_ = total <= static_cast<double>(1 << 22);
    if (dense_) cells_.resize(static_cast<std::size_t>(total));
    std::vector<int> off(static_cast<std::size_t>(d), -1);
    if (m_ == 1) {
      offsets_.push_back(std::vector<int>(static_cast<std::size_t>(d), 0));
      return;
    }
    for (;;) {
      offsets_.push_back(off);
      int i = 0;
      while (i < d && off[static_cast<std::size_t>(i)] == 1) off[static_cast<std::size_t>(i++)] = -1;
      if (i == d) break;
      ++off[static_cast<std::size_t>(i)];
    }
  }

  std::vector<int> cell_of(const double* x) const {
    std::vector<int> c(static_cast<std::size_t>(d_));
    for (int i = 0; i < d_; ++i) c[static_cast<std::size_t>(i)] = std::min(m_ - 1, static_cast<int>(x[i] * m_));
    return c;
  }
  std::uint64_t key(const std::vector<int>& c) const {
    std::uint64_t k = 0;
    for (int i = d_ - 1; i >= 0; --i) k = k * static_cast<std::uint64_t>(m_) + static_cast<std::uint64_t>(c[static_cast<std::size_t>(i)]);
    return k;
  }
  void insert(const double* x, std::uint32_t id) { bucket(key(cell_of(x))).push_back(id); }

  template <class Fn>
  bool any_neighbor(const double* x, Fn&& fn) const {
    auto c = cell_of(x);
    std::vector<int> nb(static_cast<std::size_t>(d_));
    for (const auto& off : offsets_) {
      for (int i = 0; i < d_; ++i) {
        int v = c[static_cast<std::size_t>(i)] + off[static_cast<std::size_t>(i)];
        nb[static_cast<std::size_t>(i)] = (v % m_ + m_) % m_;
      }
      const std::vector<std::uint32_t>* b = find(key(nb));
      if (!b) continue;
      for (std::uint32_t id : *b)
        if (fn(id)) return true;
    }
    return false;
  }

 private:
  std::vector<std::uint32_t>& bucket(std::uint64_t k) {
    if (dense_) return cells_[static_cast<std::size_t>(k)];
    return sparse_[k];
  }
  const std::vector<std::uint32_t>* find(std::uint64_t k) const {
    if (dense_) return &cells_[static_cast<std::size_t>(k)];
    auto it = sparse_.find(k);
    return it == sparse_.end() ? nullptr : &it->second;
  }

  int d_;
  int m_;
  bool dense_;
  std::vector<std::vector<std::uint32_t>> cells_;
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> sparse_;
  std::vector<std::vector<int>> offsets_;
};

std::vector<Vecd> unpack_orbit(const double* buf, int n, int d) {
  std::vector<Vecd> orb(static_cast<std::size_t>(n), Vecd(d));
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < d; ++i) orb[static_cast<std::size_t>(k)](i) = buf[k * d + i];
  return orb;
}

}  // namespace

SeparatedSet max_separated_set(const DAMap& g, const std::vector<Vecd>& candidates, int n, double epsilon,
                               const SegmentPredicate* restriction, int workers) {
  if (n < 1) throw std::invalid_argument("max_separated_set: n must be >= 1");
  if (!(epsilon > 0)) throw std::invalid_argument("max_separated_set: epsilon must be positive");
  const int d = g.dim();
  SeparatedSet out;
  out.n = n;
  out.epsilon = epsilon;
  out.domain = restriction ? Domain::collection_restricted : Domain::whole_space;
  out.candidates = candidates.size();
  if (candidates.empty()) return out;

  const double eps2 = epsilon * epsilon;
  const std::size_t stride = static_cast<std::size_t>(n) * static_cast<std::size_t>(d);
  CellIndex index(d, epsilon);
  const std::size_t batch = 1 << 14;
  std::vector<double> buf;
  std::vector<char> keep;
  for (std::size_t start = 0; start < candidates.size(); start += batch) {
    const std::size_t count = std::min(batch, candidates.size() - start);
    buf.assign(count * stride, 0.0);
    keep.assign(count, 1);
    parallel_for(count, workers, [&](std::size_t i) {
      double* o = buf.data() + i * stride;
      Vecd y = reduce_coords<double>(candidates[start + i]);
      for (int k = 0; k < n; ++k) {
        for (int c = 0; c < d; ++c) o[k * d + c] = y(c);
        if (k + 1 < n) y = g(y);
      }
      if (restriction) keep[i] = (*restriction)(unpack_orbit(o, n, d)) ? 1 : 0;
    });
    for (std::size_t i = 0; i < count; ++i) {
      if (!keep[i]) {
        ++out.filtered_out;
        continue;
      }
      const double* o = buf.data() + i * stride;
      const double* last = o + (n - 1) * d;
      bool conflict = index.any_neighbor(last, [&](std::uint32_t id) {
        const double* a = out.orbits.data() + static_cast<std::size_t>(id) * stride;
        if (wrapped_sq(a + (n - 1) * d, last, d) >= eps2) return false;
        for (int k = 0; k < n - 1; ++k)
          if (wrapped_sq(a + k * d, o + k * d, d) >= eps2) return false;
        return true;
      });
      if (conflict) continue;
      const auto id = static_cast<std::uint32_t>(out.points.size());
      out.points.push_back(Vecd(Eigen::Map<const Eigen::VectorXd>(o, d)));
      out.orbits.insert(out.orbits.end(), o, o + stride);
      index.insert(last, id);
    }
  }
  return out;
}

std::vector<Vecd> grid_points(int d, int m) {
  std::vector<Vecd> pts;
  std::size_t total = 1;
  for (int i = 0; i < d; ++i) total *= static_cast<std::size_t>(m);
  pts.reserve(total);
  for (std::size_t idx = 0; idx < total; ++idx) {
    Vecd x(d);
    std::size_t r = idx;
    for (int i = 0; i < d; ++i) {
      x(i) = (static_cast<double>(r % static_cast<std::size_t>(m)) + 0.5) / m;
      r /= static_cast<std::size_t>(m);
    }
    pts.push_back(x);
  }
  return pts;
}

nlohmann::json PointListSource::describe() const { return {{"kind", "point-list"}, {"points", pts_.size()}}; }

LeafArcSource::Layout LeafArcSource::layout(const DAMap& g, int n, double epsilon) const {
  Layout L;
  L.seeds = 1;
  for (int i = 0; i < g.dim(); ++i) L.seeds *= static_cast<std::size_t>(o_.seeds_per_axis);
  const double mu = std::max(g.unstable_max(), 1.0 + 1e-9);
  L.spacing = epsilon / (2.0 * std::pow(mu, n - 1));
  const double max_len = 0.5 / o_.seeds_per_axis;
  std::size_t per_arc = std::max<std::size_t>(2, o_.points_per_job / L.seeds);
  const double fit = std::floor(max_len / L.spacing) + 1;
  L.per_arc = fit < static_cast<double>(per_arc) ? static_cast<std::size_t>(fit) : per_arc;
  L.per_arc = std::max<std::size_t>(L.per_arc, 1);
  return L;
}

std::vector<Vecd> LeafArcSource::generate(const DAMap& g, int n, double epsilon) const {
  const Layout L = layout(g, n, epsilon);
  const auto seeds = grid_points(g.dim(), o_.seeds_per_axis);
  std::vector<Vecd> out;
  out.reserve(L.seeds * L.per_arc);
  const double mid = 0.5 * static_cast<double>(L.per_arc - 1);
  for (const Vecd& s : seeds) {
    Vecd e = estimate_unstable_direction(g, s, o_.n_back);
    for (std::size_t k = 0; k < L.per_arc; ++k)
      out.push_back(reduce_coords<double>(s + ((static_cast<double>(k) - mid) * L.spacing) * e));
  }
  return out;
}

double LeafArcSource::log_weight(const DAMap& g, int n, double epsilon) const {
  const Layout L = layout(g, n, epsilon);
  const double covered = static_cast<double>(L.per_arc) * L.spacing;
  return -(g.dim() - 1) * std::log(epsilon) - std::log(static_cast<double>(L.seeds)) - std::log(covered);
}

nlohmann::json LeafArcSource::describe() const {
  return {{"kind", "unstable-leaf-arcs"},
          {"seeds_per_axis", o_.seeds_per_axis},
          {"points_per_job", o_.points_per_job},
          {"n_back", o_.n_back}};
}

std::vector<Vecd> CollectionSource::generate(const DAMap& g, int n, double epsilon) const {
  const int d = g.dim();
  const auto& s = g.spectral();
  const Vecd q = o_.q.size() == d ? o_.q : g.q();
  // Orthonormal basis of F^cs for the seed disk.
  Eigen::MatrixXd cs = s.F_cs();
  Eigen::MatrixXd Q = Eigen::HouseholderQR<Eigen::MatrixXd>(cs).householderQ() *
                      Eigen::MatrixXd::Identity(d, d - 1);
  std::vector<Vecd> seeds;
  const int k = static_cast<int>(std::floor(o_.rho / epsilon + 1e-12));
  std::vector<int> idx(static_cast<std::size_t>(d - 1), -k);
  for (;;) {
    Vecd off = Vecd::Zero(d);
    for (int i = 0; i < d - 1; ++i) off += (idx[static_cast<std::size_t>(i)] * epsilon) * Vecd(Q.col(i));
    if (off.norm() <= o_.rho) seeds.push_back(reduce_coords<double>(q + off));
    int i = 0;
    while (i < d - 1 && idx[static_cast<std::size_t>(i)] == k) idx[static_cast<std::size_t>(i++)] = -k;
    if (i == d - 1) break;
    ++idx[static_cast<std::size_t>(i)];
  }
  const double mu = std::max(g.unstable_max(), 1.0 + 1e-9);
  const double spacing = epsilon / (2.0 * std::pow(mu, n - 1));
  const double half = std::min(o_.rho, o_.rho * std::pow(mu, 2.0 - (1.0 - o_.r) * n));
  std::size_t per_arc = static_cast<std::size_t>(std::floor(2 * half / spacing)) + 1;
  per_arc = std::min(per_arc, std::max<std::size_t>(2, o_.max_points_per_job / std::max<std::size_t>(1, seeds.size())));
  std::vector<Vecd> out;
  const double mid = 0.5 * static_cast<double>(per_arc - 1);
  const double step = per_arc > 1 ? 2 * half / static_cast<double>(per_arc - 1) : 0.0;
  for (const Vecd& sd : seeds) {
    Vecd e = estimate_unstable_direction(g, sd, 30);
    for (std::size_t j = 0; j < per_arc; ++j)
      out.push_back(reduce_coords<double>(sd + ((static_cast<double>(j) - mid) * step) * e));
  }
  Rng rng(o_.seed);
  for (int i = 0; i < o_.uniform_starters; ++i) out.push_back(uniform_point(rng, d));
  return out;
}

nlohmann::json CollectionSource::describe() const {
  return {{"kind", "collection-arcs"},
          {"rho", o_.rho},
          {"r", o_.r},
          {"uniform_starters", o_.uniform_starters},
          {"max_points_per_job", o_.max_points_per_job}};
}

PartitionSum partition_sum(const DAMap& g, const Potential& phi, int n, double epsilon, const CandidateSource& source,
                           const SegmentPredicate* restriction, int workers) {
  PartitionSum ps;
  ps.n = n;
  ps.epsilon = epsilon;
  auto cands = source.generate(g, n, epsilon);
  SeparatedSet E = max_separated_set(g, cands, n, epsilon, restriction, workers);
  ps.points = E.points.size();
  ps.candidates = E.candidates;
  ps.filtered_out = E.filtered_out;
  ps.log_weight = source.log_weight(g, n, epsilon);
  ps.sums.assign(ps.points, 0.0);
  const int d = g.dim();
  const std::size_t stride = static_cast<std::size_t>(n) * static_cast<std::size_t>(d);
  if (phi.is_constant()) {
    std::fill(ps.sums.begin(), ps.sums.end(), phi.sum_along({}, static_cast<std::size_t>(n)));
  } else {
    parallel_for(ps.points, workers, [&](std::size_t i) {
      ps.sums[i] = phi.sum_along(unpack_orbit(E.orbits.data() + i * stride, n, d), static_cast<std::size_t>(n));
    }, 256);
  }
  LogSumExp lse;
  for (double v : ps.sums) lse.add(v);
  ps.log_raw = lse.value();
  ps.accepted = std::move(E.points);
  return ps;
}

LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t m = x.size();
  if (m < 2 || y.size() != m) throw std::invalid_argument("fit_line: need at least two points");
  double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(m);
  double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(m);
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < m; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ssr = 0;
  for (std::size_t i = 0; i < m; ++i) {
    double r = y[i] - (f.intercept + f.slope * x[i]);
    ssr += r * r;
  }
  f.r2 = syy > 0 ? 1.0 - ssr / syy : 1.0;
  f.slope_stderr = m > 2 ? std::sqrt(ssr / static_cast<double>(m - 2) / sxx) : 0.0;
  return f;
}

nlohmann::json PressureEstimate::to_json() const {
  nlohmann::json ls = nlohmann::json::array();
  for (const auto& [n, v] : log_sums) ls.push_back({{"n", n}, {"log_lambda", v}});
  return {{"value", value},
          {"lower_bound", lower_bound},
          {"epsilon", epsilon},
          {"n_range", {n_min, n_max}},
          {"log_sums", ls},
          {"dropped_n", dropped_n},
          {"slope_r2", slope_r2},
          {"slope_stderr", slope_stderr},
          {"tolerance", tolerance},
          {"mode", mode},
          {"normalization", normalization},
          {"candidates", candidates},
          {"greedy_lower_bound", true}};
}

PressureEstimate estimate_from_sums(const std::vector<PartitionSum>& sums, double epsilon, double t) {
  PressureEstimate est;
  est.epsilon = epsilon;
  std::vector<double> xs, ys;
  est.lower_bound = -INFINITY;
  for (const auto& ps : sums) {
    est.candidates += ps.candidates;
    if (ps.points == 0) {
      est.dropped_n.push_back(ps.n);
      continue;
    }
    LogSumExp lse;
    if (t == 1.0) {
      for (double v : ps.sums) lse.add(v);
    } else {
      for (double v : ps.sums) lse.add(t * v);
    }
    double lv = lse.value() + ps.log_weight;
    est.log_sums.emplace_back(ps.n, lv);
    xs.push_back(ps.n);
    ys.push_back(lv);
    // The accepted points form a genuine separated set, so the raw sum is a lower bound.
    est.lower_bound = std::max(est.lower_bound, lse.value() / ps.n);
  }
  if (!sums.empty()) {
    est.n_min = sums.front().n;
    est.n_max = sums.back().n;
  }
  if (xs.size() < 3) throw NumericalRejection("pressure: fewer than 3 usable n values");
  LinearFit f = fit_line(xs, ys);
  est.value = f.slope;
  est.slope_r2 = f.r2;
  est.slope_stderr = f.slope_stderr;
  est.tolerance = 3.0 * f.slope_stderr + 0.02;
  return est;
}

PressureEstimate pressure(const DAMap& g, const Potential& phi, double epsilon, int n_min, int n_max,
                          const PressureOptions& opts) {
  if (!(n_min < n_max)) throw std::invalid_argument("pressure: need n_min < n_max");
  if (n_min < 1) throw std::invalid_argument("pressure: n_min must be >= 1");
  std::shared_ptr<const CandidateSource> src = opts.source;
  if (!src) {
    LeafArcSource::Options lo;
    lo.points_per_job = opts.candidate_budget / static_cast<std::size_t>(n_max - n_min + 1);
    src = std::make_shared<LeafArcSource>(lo);
  }
  std::vector<PartitionSum> sums;
  for (int n = n_min; n <= n_max; ++n)
    sums.push_back(partition_sum(g, phi, n, epsilon, *src, opts.restriction, opts.workers));
  PressureEstimate est = estimate_from_sums(sums, epsilon);
  est.normalization = src->describe().value("kind", "");
  return est;
}

PressureCurve make_curve(std::vector<PartitionSum> sums, double epsilon, const std::vector<double>& t_grid) {
  if (t_grid.empty()) throw std::invalid_argument("pressure_curve: empty t grid");
  PressureCurve c;
  c.sums_ = std::move(sums);
  c.epsilon_ = epsilon;
  for (double t : t_grid) {
    c.t.push_back(t);
    c.estimates.push_back(c.evaluate(t));
  }
  return c;
}

PressureEstimate PressureCurve::evaluate(double t_value) const { return estimate_from_sums(sums_, epsilon_, t_value); }

PressureCurve pressure_curve(const DAMap& g, const Potential& phi_u, const std::vector<double>& t_grid, double epsilon,
                             int n_min, int n_max, const PressureOptions& opts) {
  if (t_grid.empty()) throw std::invalid_argument("pressure_curve: empty t grid");
  if (!(n_min < n_max)) throw std::invalid_argument("pressure_curve: need n_min < n_max");
  std::shared_ptr<const CandidateSource> src = opts.source;
  if (!src) {
    LeafArcSource::Options lo;
    lo.points_per_job = opts.candidate_budget / static_cast<std::size_t>(n_max - n_min + 1);
    src = std::make_shared<LeafArcSource>(lo);
  }
  std::vector<PartitionSum> sums;
  for (int n = n_min; n <= n_max; ++n)
    sums.push_back(partition_sum(g, phi_u, n, epsilon, *src, opts.restriction, opts.workers));
  PressureCurve c = make_curve(std::move(sums), epsilon, t_grid);
  for (auto& e : c.estimates) e.normalization = src->describe().value("kind", "");
  return c;
}

}  // namespace dathermo
