#include "dathermo/mane_map.hpp"

#include "dathermo/random.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dathermo {

namespace {

Matd orthonormal_basis(const Matd& B) {
  Eigen::MatrixXd b = B;
  Eigen::MatrixXd Q = Eigen::HouseholderQR<Eigen::MatrixXd>(b).householderQ() *
                      Eigen::MatrixXd::Identity(b.rows(), b.cols());
  return Q;
}

double largest_singular_value(const Matd& M) {
  Eigen::MatrixXd m = M;
  return Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0);
}

std::string format_point(const Vecd& x) {
  std::ostringstream os;
  os.precision(17);
  os << "(";
  for (Eigen::Index i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x(i);
  os << ")";
  return os.str();
}

class LinearModel final : public MapModel {
 public:
  explicit LinearModel(const ToralAutomorphism& A)
      : d_(A.dim()), A_(A.matrix().cast<double>()), A_hp_(A.matrix().cast<HighPrecision>()), json_(to_json(A.matrix())) {}
  int dim() const override { return d_; }
  Vecd apply(const Vecd& x) const override { return reduce_coords<double>(A_ * x); }
  Matd jacobian(const Vecd&) const override { return A_; }
  bool has_high_precision() const override { return true; }
  VecHP apply(const VecHP& x) const override { return reduce_coords<HighPrecision>(A_hp_ * x); }
  bool linear_at(const Vecd&) const override { return true; }
  nlohmann::json describe() const override { return {{"kind", "linear"}, {"matrix", json_}}; }

 private:
  int d_;
  Matd A_;
  Mat<HighPrecision> A_hp_;
  nlohmann::json json_;
};

/// C2 bump: 1 on [0,1/2], quintic smoothstep to 0 on [1/2,1].
template <class S>
S bump(const S& tau) {
  if (tau <= S(0.5)) return S(1);
  if (tau >= S(1)) return S(0);
  S u = S(2) * tau - S(1);
  return S(1) - u * u * u * (S(10) - S(15) * u + S(6) * u * u);
}

double bump_derivative(double tau) {
  if (tau <= 0.5 || tau >= 1.0) return 0.0;
  double u = 2.0 * tau - 1.0;
  return -60.0 * u * u * (1.0 - u) * (1.0 - u);
}

template <class S>
struct ManeCoefficients {
  Mat<S> A;
  Vec<S> q, vc, wc;
  S rho_c, rho_t, a;
};

template <class S>
S mane_displacement(const ManeCoefficients<S>& k, const Vec<S>& x) {
  using std::abs;
  using std::sqrt;
  Vec<S> dx = wrap<S>(x - k.q);
  S c = k.wc.dot(dx);
  if (abs(c) >= k.rho_c) return S(0);
  Vec<S> tr = dx - c * k.vc;
  S t2 = tr.squaredNorm();
  if (t2 >= k.rho_t * k.rho_t) return S(0);
  S psi = bump<S>(sqrt(t2) / k.rho_t);
  S u = c / k.rho_c;
  S m = S(1) - u * u;
  return psi * k.a * c * m * m * m;
}

class ManeModel final : public MapModel {
 public:
  ManeModel(const ToralAutomorphism& A, const Vecd& q, double rho_c, double rho_t, double a)
      : d_(A.dim()), matrix_json_(to_json(A.matrix())) {
    const auto& s = A.spectral();
    kd_.A = A.matrix().cast<double>();
    kd_.q = q;
    kd_.vc = s.F_c;
    kd_.wc = s.dual_c();
    kd_.rho_c = rho_c;
    kd_.rho_t = rho_t;
    kd_.a = a;
    kh_.A = A.matrix().cast<HighPrecision>();
    kh_.q = q.cast<HighPrecision>();
    kh_.vc = kd_.vc.cast<HighPrecision>();
    kh_.wc = kd_.wc.cast<HighPrecision>();
    kh_.rho_c = rho_c;
    kh_.rho_t = rho_t;
    kh_.a = a;
    Pt_ = Matd::Identity(d_, d_) - kd_.vc * kd_.wc.transpose();
  }
  int dim() const override { return d_; }
  Vecd apply(const Vecd& x) const override {
    double p = mane_displacement<double>(kd_, x);
    if (p == 0.0) return reduce_coords<double>(kd_.A * x);
    return reduce_coords<double>(kd_.A * x + p * kd_.vc);
  }
  bool has_high_precision() const override { return true; }
  VecHP apply(const VecHP& x) const override {
    HighPrecision p = mane_displacement<HighPrecision>(kh_, x);
    if (p == 0) return reduce_coords<HighPrecision>(kh_.A * x);
    return reduce_coords<HighPrecision>(kh_.A * x + p * kh_.vc);
  }
  Matd jacobian(const Vecd& x) const override {
    Vecd dx = wrap<double>(x - kd_.q);
    double c = kd_.wc.dot(dx);
    if (std::abs(c) >= kd_.rho_c) return kd_.A;
    Vecd tr = dx - c * kd_.vc;
    double t = tr.norm();
    if (t >= kd_.rho_t) return kd_.A;
    double tau = t / kd_.rho_t;
    double psi = bump<double>(tau);
    double u = c / kd_.rho_c;
    double m = 1.0 - u * u;
    double s = kd_.a * c * m * m * m;
    double ds = kd_.a * m * m * (1.0 - 7.0 * u * u);
    Vecd grad = psi * ds * kd_.wc;
    double dpsi = bump_derivative(tau);
    if (dpsi != 0.0 && t > 0.0) grad += (s * dpsi / kd_.rho_t) * (Pt_.transpose() * (tr / t));
    return kd_.A + kd_.vc * grad.transpose();
  }
  bool linear_at(const Vecd& x) const override {
    Vecd dx = wrap<double>(x - kd_.q);
    double c = kd_.wc.dot(dx);
    if (std::abs(c) >= kd_.rho_c) return true;
    return (dx - c * kd_.vc).squaredNorm() >= kd_.rho_t * kd_.rho_t;
  }
  nlohmann::json describe() const override {
    return {{"kind", "mane"},
            {"matrix", matrix_json_},
            {"q", to_json(kd_.q)},
            {"profile",
             {{"center_profile", "a*c*(1-(c/rho_c)^2)^3"},
              {"transverse_bump", "quintic smoothstep, 1 on [0,1/2], 0 beyond 1"},
              {"a", kd_.a},
              {"rho_c", kd_.rho_c},
              {"rho_t", kd_.rho_t}}}};
  }
  double core_radius() const { return kd_.rho_c; }
  double transverse_radius() const { return kd_.rho_t; }
  double slope() const { return kd_.a; }

 private:
  int d_;
  nlohmann::json matrix_json_;
  ManeCoefficients<double> kd_;
  ManeCoefficients<HighPrecision> kh_;
  Matd Pt_;
};

class FunctionModel final : public MapModel {
 public:
  FunctionModel(int d, std::function<Vecd(const Vecd&)> f, std::function<Matd(const Vecd&)> j)
      : d_(d), f_(std::move(f)), j_(std::move(j)) {}
  int dim() const override { return d_; }
  Vecd apply(const Vecd& x) const override { return reduce_coords<double>(f_(x)); }
  Matd jacobian(const Vecd& x) const override { return j_(x); }
  nlohmann::json describe() const override { return {{"kind", "user"}}; }

 private:
  int d_;
  std::function<Vecd(const Vecd&)> f_;
  std::function<Matd(const Vecd&)> j_;
};

/// Uniform point in the euclidean ball of radius r around q.
Vecd ball_point(Rng& rng, const Vecd& q, double r) {
  const int d = static_cast<int>(q.size());
  Vecd v(d);
  for (int i = 0; i < d; ++i) v(i) = standard_normal(rng);
  double n = v.norm();
  if (n == 0) return q;
  double rad = r * std::pow(uniform01(rng), 1.0 / d);
  return reduce_coords<double>(q + (rad / n) * v);
}

/// Unit directions spanning the subspace with orthonormal basis Q:
/// a circle of `k` angles when Q is 2-dimensional, basis +- vectors plus random
/// combinations otherwise.
std::vector<Vecd> sphere_directions(const Matd& Q, int k, Rng& rng) {
  std::vector<Vecd> out;
  const auto m = Q.cols();
  if (m == 1) {
    out.push_back(Q.col(0));
    out.push_back(-Q.col(0));
    return out;
  }
  if (m == 2) {
    for (int i = 0; i < k; ++i) {
      double t = 6.283185307179586 * i / k;
      out.push_back(std::cos(t) * Q.col(0) + std::sin(t) * Q.col(1));
    }
    return out;
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    out.push_back(Q.col(i));
    out.push_back(-Q.col(i));
  }
  for (int i = 0; i < k; ++i) {
    Vecd c(m);
    for (Eigen::Index t = 0; t < m; ++t) c(t) = standard_normal(rng);
    out.push_back((Q * c).normalized());
  }
  return out;
}

const ManeModel* as_mane(const MapModel& m) { return dynamic_cast<const ManeModel*>(&m); }

}  // namespace

VecHP MapModel::apply(const VecHP&) const {
  throw std::logic_error("this map has no high-precision evaluator");
}

Vecd DAMap::q() const { return params_ ? params_->q.coords() : Vecd::Zero(dim()); }
double DAMap::rho() const { return params_ ? params_->rho : 0.05; }

Vecd DAMap::inverse(const Vecd& x) const {
  Vecd y = base_.apply_inverse<double>(x);
  for (int it = 0; it < 60; ++it) {
    Vecd r = wrap<double>((*this)(y) - x);
    if (r.norm() <= 1e-15) return y;
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim> J = jacobian(y);
    Vecd step = J.partialPivLu().solve(r);
    y = reduce_coords<double>(y - step);
    if (it > 3 && step.norm() <= 4e-16) return y;
  }
  Vecd r = wrap<double>((*this)(y) - x);
  if (r.norm() <= 1e-12) return y;
  throw NumericalRejection("inverse: Newton iteration did not converge at " + format_point(x));
}

Vecd DAMap::iterate(Vecd x, int n) const {
  for (int k = 0; k < n; ++k) x = (*this)(x);
  return x;
}

std::vector<Vecd> orbit(const DAMap& g, const Vecd& x, int n) {
  std::vector<Vecd> out;
  out.reserve(static_cast<std::size_t>(std::max(0, n)));
  Vecd y = x;
  for (int k = 0; k < n; ++k) {
    out.push_back(y);
    if (k + 1 < n) y = g(y);
  }
  return out;
}

nlohmann::json DAMap::describe() const {
  nlohmann::json j = model_->describe();
  if (params_) {
    j["rho"] = params_->rho;
    j["lambda_c_target"] = params_->lambda_c_target;
  }
  GammaValue gm = gamma_of(*this);
  j["lambda_c"] = lambda_c_;
  j["lambda_s_eff"] = lambda_s_eff_;
  j["gamma"] = gm.value;
  j["gamma_degenerate"] = gm.degenerate;
  j["c0_distance"] = c0_distance_;
  j["beta"] = beta_;
  j["eta"] = eta_;
  j["unstable_expansion_min"] = unstable_min_;
  j["unstable_expansion_max"] = unstable_max_;
  j["cone_check"] = {{"passed", cone_.passed},
                     {"samples", cone_.samples},
                     {"worst_unstable_ratio", cone_.worst_unstable_ratio},
                     {"worst_stable_ratio", cone_.worst_stable_ratio}};
  return j;
}

ConeCheck check_cones(const DAMap& g, double beta, const std::vector<Vecd>& points) {
  const auto& s = g.spectral();
  const int d = g.dim();
  const Matd Pu = s.projector_u();
  const Matd Pcs = s.projector_cs();
  Matd Ps = Matd::Zero(d, d);
  for (int k = 0; k < d - 2; ++k) Ps += s.eigenvectors.col(k) * s.dual.row(k);
  const Matd Pcu = Matd::Identity(d, d) - Ps;
  Rng rng(99);
  const Matd Qcs = orthonormal_basis(s.F_cs());
  Matd Fcu(d, 2);
  Fcu.col(0) = s.F_c;
  Fcu.col(1) = s.F_u;
  const Matd Qcu = orthonormal_basis(Fcu);
  const Matd Qs = orthonormal_basis(s.F_s);
  const auto cs_dirs = sphere_directions(Qcs, 16, rng);
  const auto cu_dirs = sphere_directions(Qcu, 16, rng);
  const auto s_dirs = sphere_directions(Qs, 4, rng);

  ConeCheck out;
  out.beta = beta;
  out.min_unstable_expansion = std::numeric_limits<double>::infinity();
  const double limit = 1.0 + 1e-9;
  for (const Vecd& x : points) {
    ++out.samples;
    const Matd J = g.jacobian(x);
    Eigen::PartialPivLU<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>> lu(J);
    auto test_u = [&](const Vecd& v) {
      Vecd w = J * v;
      double pu = (Pu * w).norm();
      double ratio = (Pcs * w).norm() / (beta * pu);
      out.worst_unstable_ratio = std::max(out.worst_unstable_ratio, ratio);
      out.min_unstable_expansion = std::min(out.min_unstable_expansion, pu / (Pu * v).norm());
      return ratio <= limit;
    };
    auto test_s = [&](const Vecd& v) {
      Vecd w = lu.solve(v);
      double ratio = (Pcu * w).norm() / (beta * (Ps * w).norm());
      out.worst_stable_ratio = std::max(out.worst_stable_ratio, ratio);
      return ratio <= limit;
    };
    bool ok = test_u(s.F_u);
    for (const Vecd& w : cs_dirs) ok = test_u(s.F_u + beta * w) && ok;
    for (const Vecd& e : s_dirs) {
      ok = test_s(e) && ok;
      for (const Vecd& w : cu_dirs) ok = test_s(e + beta * w) && ok;
    }
    if (!ok && out.passed) {
      out.passed = false;
      out.violating_point = x;
      std::ostringstream os;
      os << "cone invariance fails at " << format_point(x) << " (unstable ratio " << out.worst_unstable_ratio
         << ", stable ratio " << out.worst_stable_ratio << ")";
      out.detail = os.str();
    }
  }
  return out;
}

void DAMap::measure(const MapBuildOptions& opts) {
  const auto& s = spectral();
  const int d = dim();
  const Vecd qv = q();
  const double r = rho();
  eta_ = opts.eta > 0 ? opts.eta : eta_heuristic(s);
  beta_ = std::min(0.05, r / 4.0);
  Rng rng(opts.seed);

  // E^c: F^c is invariant for the built-in family; user maps are measured on F^c too.
  lambda_c_ = (jacobian(qv) * s.F_c).norm();
  for (int i = 0; i < opts.measure_samples; ++i) {
    Vecd x = ball_point(rng, qv, r / 2);
    lambda_c_ = std::max(lambda_c_, (jacobian(x) * s.F_c).norm());
  }
  if (const ManeModel* mm = as_mane(*model_)) {
    // Sample the core segment densely; the maximum sits at q.
    for (int i = -64; i <= 64; ++i) {
      Vecd x = reduce_coords<double>(qv + (mm->core_radius() * i / 64.0) * s.F_c);
      lambda_c_ = std::max(lambda_c_, (jacobian(x) * s.F_c).norm());
    }
  }

  const Matd Qcs = orthonormal_basis(s.F_cs());
  lambda_s_eff_ = 0;
  for (int i = 0; i < opts.measure_samples; ++i) {
    Vecd x = uniform_point(rng, d);
    if (flat_distance<double>(x, qv) < r / 2) continue;
    Matd B = (exact_cs_planes_ || linear_at(x)) ? Qcs : estimate_center_stable_plane(*this, x, opts.n_back);
    lambda_s_eff_ = std::max(lambda_s_eff_, largest_singular_value(jacobian(x) * B));
  }

  c0_distance_ = 0;
  unstable_min_ = std::numeric_limits<double>::infinity();
  unstable_max_ = 0;
  std::vector<Vecd> pts;
  for (int i = 0; i < opts.measure_samples; ++i) pts.push_back(uniform_point(rng, d));
  for (int i = 0; i < opts.measure_samples; ++i) pts.push_back(ball_point(rng, qv, r / 2));
  if (const ManeModel* mm = as_mane(*model_)) {
    for (int i = -8; i <= 8; ++i)
      pts.push_back(reduce_coords<double>(qv + (mm->core_radius() * std::sqrt(1.0 / 7.0) * i / 8.0) * s.F_c));
  }
  for (const Vecd& x : pts) {
    c0_distance_ = std::max(c0_distance_, flat_distance<double>((*this)(x), base_.apply<double>(x)));
    Vecd e = is_linear_ ? s.F_u : estimate_unstable_direction(*this, x, opts.n_back);
    double ex = (jacobian(x) * e).norm();
    unstable_min_ = std::min(unstable_min_, ex);
    unstable_max_ = std::max(unstable_max_, ex);
  }
  if (is_linear_) unstable_min_ = unstable_max_ = s.lambda_u;
}

DAMap DAMap::linear(const ToralAutomorphism& A) {
  DAMap g(A, std::make_shared<LinearModel>(A));
  g.is_linear_ = true;
  g.exact_cs_planes_ = true;
  MapBuildOptions opts;
  opts.measure_samples = 256;
  g.measure(opts);
  g.lambda_c_ = A.spectral().lambda_s;
  g.cone_.passed = true;
  g.cone_.beta = g.beta_;
  return g;
}

DAMap DAMap::from_model(const ToralAutomorphism& A, std::shared_ptr<const MapModel> model,
                        std::optional<ManeParams> params, const MapBuildOptions& opts) {
  if (model->dim() != A.dim()) throw std::invalid_argument("from_model: dimension mismatch");
  DAMap g(A, std::move(model));
  g.params_ = std::move(params);
  g.exact_cs_planes_ = as_mane(g.model()) != nullptr;
  g.measure(opts);
  return g;
}

DAMap make_perturbation(const ToralAutomorphism& A, std::function<Vecd(const Vecd&)> evaluator,
                        std::function<Matd(const Vecd&)> jacobian, std::optional<ManeParams> params,
                        const MapBuildOptions& opts) {
  auto model = std::make_shared<FunctionModel>(A.dim(), std::move(evaluator), std::move(jacobian));
  return DAMap::from_model(A, model, std::move(params), opts);
}

DAMap build_mane(const ToralAutomorphism& A, const ManeParams& p, const MapBuildOptions& opts) {
  const auto& s = A.spectral();
  const int d = A.dim();
  if (p.q.dim() != d) throw std::invalid_argument("build_mane: q has wrong dimension");
  if (!(p.rho > 0)) throw std::invalid_argument("build_mane: rho must be positive");
  const double eta = opts.eta > 0 ? opts.eta : eta_heuristic(s);
  if (!(p.rho < 3 * eta)) throw std::invalid_argument("build_mane: rho must be below 3*eta");
  if (!(p.lambda_c_target > 1)) throw std::invalid_argument("build_mane: lambda_c_target must exceed 1");
  if (!(p.profile.transverse_ratio > 0 && p.profile.transverse_ratio < 0.5))
    throw std::invalid_argument("build_mane: transverse_ratio must lie in (0, 1/2)");
  const Vecd q = p.q.coords();
  if (wrap<double>(A.apply<double>(q) - q).norm() > 1e-12)
    throw std::invalid_argument("build_mane: q is not a fixed point of A");

  const double lambda_s = s.lambda_s;
  const double lambda_u = s.lambda_u;
  const double lambda_ss = s.eigenvalues[static_cast<std::size_t>(d - 3)];
  const double a = p.lambda_c_target - lambda_s;
  const double rho_t = p.profile.transverse_ratio * p.rho;
  const double beta = std::min(0.05, p.rho / 4.0);

  auto support_points = [&](double rc, int n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Vecd> pts;
    const int half = std::max(1, n / 2);
    pts.push_back(q);
    for (int i = 0; i < half; ++i) {
      double c = rc * (2 * uniform01(rng) - 1);
      Vecd t(d);
      for (int k = 0; k < d; ++k) t(k) = standard_normal(rng);
      t -= s.F_c * s.dual_c().dot(t);
      if (t.norm() > 0) t *= rho_t * std::pow(uniform01(rng), 1.0 / (d - 1)) / t.norm();
      pts.push_back(reduce_coords<double>(q + c * s.F_c + t));
    }
    for (int i = 0; i < n - half; ++i) pts.push_back(uniform_point(rng, d));
    return pts;
  };
  auto cones_hold = [&](double rc) {
    DAMap trial(A, std::make_shared<ManeModel>(A, q, rc, rho_t, a));
    return check_cones(trial, beta, support_points(rc, 2000, opts.seed + 17)).passed;
  };

  double rho_c = p.profile.core_ratio * p.rho;
  if (p.profile.core_ratio <= 0) {
    // Center derivative ranges over [lambda_s - (32/49) a, lambda_c]; the
    // transverse bump adds a shear bounded by 0.23802 a rho_c * 3.75 / rho_t.
    const double d_min = lambda_s - (32.0 / 49.0) * a;
    const Vecd violating = reduce_coords<double>(q + std::sqrt(3.0 / 7.0) * 0.01 * p.rho * s.F_c);
    if (d_min <= lambda_ss)
      throw NumericalRejection("build_mane: lambda_c too large; the stable cone cannot stay invariant near " +
                               format_point(violating));
    const double bracket = 1.0 - lambda_ss / lambda_u - lambda_ss / d_min;
    if (bracket <= 0)
      throw NumericalRejection("build_mane: lambda_c too large; stable cone contraction lost near " +
                               format_point(violating));
    if (p.lambda_c_target >= lambda_u)
      throw NumericalRejection("build_mane: lambda_c must stay below lambda_u");
    const double shear_stable = beta * d_min * bracket / (1.0 + lambda_ss * beta / lambda_u);
    const double shear_unstable = beta * (lambda_u - p.lambda_c_target) / (1.0 + beta);
    Eigen::MatrixXd Pt = Matd(Matd::Identity(d, d) - s.F_c * s.dual_c().transpose());
    const double pt_norm = Eigen::JacobiSVD<Eigen::MatrixXd>(Pt).singularValues()(0);
    const double shear = std::min(shear_stable, shear_unstable);
    const double cap = 0.04 * p.rho;
    // The analytic radius is conservative; grow it while sampled cones hold,
    // then bisect the first failure.
    double lo = std::min(cap, shear * rho_t / (0.23802 * a * 3.75 * pt_norm));
    if (cones_hold(lo)) {
      double hi = lo;
      while (hi < cap && cones_hold(std::min(cap, 2 * hi))) hi = std::min(cap, 2 * hi);
      lo = hi;
      if (hi < cap) {
        hi = std::min(cap, 2 * hi);
        for (int it = 0; it < 8; ++it) {
          double mid = 0.5 * (lo + hi);
          if (cones_hold(mid)) lo = mid; else hi = mid;
        }
      }
    }
    rho_c = p.profile.safety * lo;
  }
  if (!(rho_c > 0) || rho_c + rho_t >= p.rho / 2)
    throw std::invalid_argument("build_mane: profile radii do not fit inside B(q, rho/2)");

  auto model = std::make_shared<ManeModel>(A, q, rho_c, rho_t, a);
  MapBuildOptions o = opts;
  o.eta = eta;
  DAMap g = DAMap::from_model(A, model, p, o);
  g.cone_ = check_cones(g, g.beta_, support_points(rho_c, opts.cone_samples, opts.seed ^ 0x5bd1e995ULL));
  if (!g.cone_.passed)
    throw NumericalRejection("build_mane: " + g.cone_.detail);

  auto fixed = center_fixed_points(g);
  if (fixed.size() != 3) {
    std::ostringstream os;
    os << "build_mane: expected 3 center fixed points, found " << fixed.size();
    throw NumericalRejection(os.str());
  }
  return g;
}

DAMap demo_mane_map(const MapBuildOptions& opts) {
  auto A = ToralAutomorphism::from_matrix(demo_matrix());
  ManeParams p;
  p.q = reduce(Vecd::Zero(3));
  p.rho = 0.05;
  p.lambda_c_target = 1.05;
  return build_mane(A, p, opts);
}

MembershipReport check_membership(const DAMap& g, double r, int samples, std::uint64_t seed) {
  MembershipReport rep;
  Rng rng(seed);
  const Vecd qv = g.q();
  const double rho = g.rho();
  std::vector<Vecd> pts;
  for (int i = 0; i < samples; ++i) {
    Vecd x = uniform_point(rng, g.dim());
    pts.push_back(x);
    if (flat_distance<double>(x, qv) >= rho)
      rep.max_deviation_outside =
          std::max(rep.max_deviation_outside, flat_distance<double>(g(x), g.base().apply<double>(x)));
  }
  for (int i = 0; i < samples; ++i) pts.push_back(ball_point(rng, qv, rho));
  rep.support_ok = rep.max_deviation_outside == 0.0;
  rep.cones = check_cones(g, g.beta(), pts);
  GammaValue gm = gamma_of(g);
  rep.gamma = gm.value;
  rep.gamma_ok = !gm.degenerate ? gm.value < r : g.lambda_s_eff() < 1.0;
  return rep;
}

std::vector<double> center_fixed_points(const DAMap& g, int grid) {
  const auto& s = g.spectral();
  const Vecd qv = g.q();
  double R = g.rho() / 2;
  if (const ManeModel* mm = as_mane(g.model())) R = mm->core_radius() * (1.0 + 1e-9);
  const Vecd wc = s.dual_c();
  auto F = [&](double c) {
    Vecd x = reduce_coords<double>(qv + c * s.F_c);
    return wc.dot(wrap<double>(g(x) - x));
  };
  if (grid % 2 == 0) ++grid;
  const int half = grid / 2;
  std::vector<double> roots;
  double c_prev = -R;
  double f_prev = F(c_prev);
  if (f_prev == 0) roots.push_back(c_prev);
  for (int i = -half + 1; i <= half; ++i) {
    double c = R * i / half;
    double f = F(c);
    if (f == 0) {
      roots.push_back(c);
    } else if (f_prev != 0 && (f > 0) != (f_prev > 0)) {
      double lo = c_prev, hi = c, flo = f_prev;
      for (int it = 0; it < 200 && hi - lo > 1e-18; ++it) {
        double mid = 0.5 * (lo + hi);
        double fm = F(mid);
        if (fm == 0) {
          lo = hi = mid;
          break;
        }
        if ((fm > 0) == (flo > 0)) {
          lo = mid;
          flo = fm;
        } else {
          hi = mid;
        }
      }
      roots.push_back(0.5 * (lo + hi));
    }
    c_prev = c;
    f_prev = f;
  }
  return roots;
}

GammaValue gamma_of(const DAMap& g) {
  if (g.lambda_c() <= 1.0 || g.lambda_s_eff() >= 1.0) return {0.0, true};
  return {gamma_formula<double>(g.lambda_c(), g.lambda_s_eff()), false};
}

double theta_r(const DAMap& g, double r) {
  if (!(r > 0 && r < 1)) throw std::invalid_argument("theta_r: r must lie in (0,1)");
  return theta_formula<double>(g.lambda_c(), g.lambda_s_eff(), r);
}

Vecd estimate_unstable_direction(const DAMap& g, const Vecd& x, int n_back) {
  if (n_back < 0) throw std::invalid_argument("estimate_unstable_direction: n_back must be nonnegative");
  const Vecd& u0 = g.spectral().F_u;
  if (n_back == 0 || g.is_linear()) return u0;
  std::vector<Vecd> back(static_cast<std::size_t>(n_back));
  Vecd y = x;
  for (int k = n_back - 1; k >= 0; --k) {
    y = g.inverse(y);
    back[static_cast<std::size_t>(k)] = y;
  }
  Vecd v = u0;
  for (const Vecd& z : back) {
    if (g.linear_at(z)) {
      v = g.base().matrix().cast<double>() * v;
    } else {
      v = g.jacobian(z) * v;
    }
    v.normalize();
  }
  return v;
}

Matd estimate_center_stable_plane(const DAMap& g, const Vecd& x, int n_fwd) {
  const auto& s = g.spectral();
  Matd B = orthonormal_basis(s.F_cs());
  if (g.exact_cs_planes() || n_fwd <= 0) return B;
  std::vector<Vecd> fwd = orbit(g, x, n_fwd);
  for (int k = n_fwd - 1; k >= 0; --k) {
    Matd J = g.jacobian(fwd[static_cast<std::size_t>(k)]);
    Matd C = J.partialPivLu().solve(B);
    Matd Bn = orthonormal_basis(C);
    // Stop once the plane no longer moves.
    Eigen::MatrixXd overlap = Matd(Bn.transpose() * B);
    double smin = Eigen::JacobiSVD<Eigen::MatrixXd>(overlap).singularValues().minCoeff();
    B = Bn;
    if (1.0 - smin < 1e-18) break;
  }
  return B;
}

std::vector<double> center_stable_growth_profile(const DAMap& g, const Vecd& x, int n, int n_fwd) {
  if (n < 1) throw std::invalid_argument("center_stable_growth: i must be >= 1");
  Matd B = estimate_center_stable_plane(g, x, n_fwd);
  Vecd eu = estimate_unstable_direction(g, x, g.is_linear() ? 0 : 30);
  double kbar = cone_constant(B, Matd(eu));
  if (!(kbar < 1e6)) throw NumericalRejection("center_stable_growth: degenerate E^cs/E^u splitting");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n));
  const int d = g.dim();
  const bool exact = g.exact_cs_planes();
  const Matd P_exact = g.spectral().projector_cs();
  // Projection onto E^cs(y) along E^u(y); rounding leaks into E^u would grow like lambda_u^i.
  auto projector = [&](const Vecd& y) -> Matd {
    if (exact || g.linear_at(y)) return P_exact;
    Matd By = estimate_center_stable_plane(g, y, n_fwd);
    Vecd u = estimate_unstable_direction(g, y, 30);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(Eigen::MatrixXd(By.transpose()), Eigen::ComputeFullV);
    Vecd w = svd.matrixV().col(d - 1);
    return Matd::Identity(d, d) - u * w.transpose() / w.dot(u);
  };
  Matd M = B;
  Vecd y = x;
  for (int i = 0; i < n; ++i) {
    M = g.jacobian(y) * M;
    y = g(y);
    M = projector(y) * M;
    out.push_back(largest_singular_value(M));
  }
  return out;
}

double center_stable_growth(const DAMap& g, const Vecd& x, int i, int n_fwd) {
  return center_stable_growth_profile(g, x, i, n_fwd).back();
}

}  // namespace dathermo
