#pragma once

#include "dathermo/automorphism.hpp"
#include "dathermo/precision.hpp"
#include "dathermo/torus.hpp"

#include <json.hpp>

#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace dathermo {

using VecHP = Vec<HighPrecision>;

/// Evaluator/Jacobian pair of a torus map. Implementations are immutable.
class MapModel {
 public:
  virtual ~MapModel() = default;
  virtual int dim() const = 0;
  virtual Vecd apply(const Vecd& x) const = 0;
  virtual Matd jacobian(const Vecd& x) const = 0;
  virtual bool has_high_precision() const { return false; }
  virtual VecHP apply(const VecHP& x) const;
  /// True when x lies where the map is known to coincide with f_A.
  virtual bool linear_at(const Vecd&) const { return false; }
  virtual nlohmann::json describe() const = 0;
};

/// Shape of the center-direction deformation. Radii are fractions of rho:
/// the deformation lives on |c| < core_ratio*rho, |transverse| < transverse_ratio*rho.
/// core_ratio = 0 selects the largest core that keeps both cones invariant,
/// scaled by `safety`.
struct ManeProfile {
  double transverse_ratio = 0.45;
  double core_ratio = 0.0;
  double safety = 0.5;
};

struct ManeParams {
  TorusPoint q;
  double rho = 0.05;
  double lambda_c_target = 1.05;
  ManeProfile profile;
};

struct MapBuildOptions {
  double eta = 0.0;       // 0 selects eta_heuristic of the base
  int cone_samples = 10000;
  int measure_samples = 2048;
  int n_back = 30;
  std::uint64_t seed = 1;
};

/// Outcome of the sampled cone-invariance check.
struct ConeCheck {
  bool passed = true;
  double beta = 0;
  double worst_unstable_ratio = 0;  // max beta' / beta over samples for Dg on C^u
  double worst_stable_ratio = 0;    // max beta' / beta over samples for Dg^-1 on C^s
  double min_unstable_expansion = 0;
  int samples = 0;
  std::optional<Vecd> violating_point;
  std::string detail;
};

class DAMap {
 public:
  /// f_A itself.
  static DAMap linear(const ToralAutomorphism& A);

  /// Wraps an arbitrary model; measures lambda_c, lambda_s_eff, gamma and the
  /// C0 distance to f_A by sampling. `params` supplies q and rho for the
  /// measurements (defaults: q = 0, rho = 0.05).
  static DAMap from_model(const ToralAutomorphism& A, std::shared_ptr<const MapModel> model,
                          std::optional<ManeParams> params, const MapBuildOptions& opts = {});

  int dim() const { return base_.dim(); }
  Vecd operator()(const Vecd& x) const { return model_->apply(x); }
  VecHP operator()(const VecHP& x) const { return model_->apply(x); }
  Matd jacobian(const Vecd& x) const { return model_->jacobian(x); }
  /// g^-1 by Newton iteration on the lift, started at A^-1 x.
  Vecd inverse(const Vecd& x) const;
  Vecd iterate(Vecd x, int n) const;
  bool has_high_precision() const { return model_->has_high_precision(); }
  bool linear_at(const Vecd& x) const { return model_->linear_at(x); }

  const ToralAutomorphism& base() const { return base_; }
  const SpectralData& spectral() const { return base_.spectral(); }
  const std::optional<ManeParams>& params() const { return params_; }
  const MapModel& model() const { return *model_; }
  bool is_linear() const { return is_linear_; }
  /// W^cs leaves are the affine planes x + F^cs (true for f_A and the built-in family).
  bool exact_cs_planes() const { return exact_cs_planes_; }

  double lambda_c() const { return lambda_c_; }
  double lambda_s_eff() const { return lambda_s_eff_; }
  double c0_distance() const { return c0_distance_; }
  double beta() const { return beta_; }
  double eta() const { return eta_; }
  /// inf / sup of ||Dg|E^u|| over samples.
  double unstable_min() const { return unstable_min_; }
  double unstable_max() const { return unstable_max_; }
  const ConeCheck& cone_check() const { return cone_; }
  Vecd q() const;
  double rho() const;

  nlohmann::json describe() const;

 private:
  friend DAMap build_mane(const ToralAutomorphism&, const ManeParams&, const MapBuildOptions&);
  friend DAMap make_perturbation(const ToralAutomorphism&, std::function<Vecd(const Vecd&)>,
                                 std::function<Matd(const Vecd&)>, std::optional<ManeParams>,
                                 const MapBuildOptions&);
  DAMap(const ToralAutomorphism& A, std::shared_ptr<const MapModel> m) : base_(A), model_(std::move(m)) {}
  void measure(const MapBuildOptions& opts);

  ToralAutomorphism base_;
  std::shared_ptr<const MapModel> model_;
  std::optional<ManeParams> params_;
  bool is_linear_ = false;
  bool exact_cs_planes_ = false;
  double lambda_c_ = 0;
  double lambda_s_eff_ = 0;
  double c0_distance_ = 0;
  double beta_ = 0;
  double eta_ = 0;
  double unstable_min_ = 0;
  double unstable_max_ = 0;
  ConeCheck cone_;
};

/// Pitchfork deformation of f_A at the fixed point q along F^c.
/// Throws NumericalRejection (with the violating point) when the requested
/// center expansion is incompatible with cone invariance.
DAMap build_mane(const ToralAutomorphism& A, const ManeParams& params, const MapBuildOptions& opts = {});

/// User-supplied C1 perturbation of f_A.
DAMap make_perturbation(const ToralAutomorphism& A, std::function<Vecd(const Vecd&)> evaluator,
                        std::function<Matd(const Vecd&)> jacobian, std::optional<ManeParams> params,
                        const MapBuildOptions& opts = {});

/// Demonstration map: A0 with rho = 0.05, lambda_c = 1.05, q = 0.
DAMap demo_mane_map(const MapBuildOptions& opts = {});

ConeCheck check_cones(const DAMap& g, double beta, const std::vector<Vecd>& points);

/// Membership report for the class U_{rho,r}.
struct MembershipReport {
  bool support_ok = false;
  double max_deviation_outside = 0;
  ConeCheck cones;
  double gamma = 0;
  bool gamma_ok = false;
  bool member() const { return support_ok && cones.passed && gamma_ok; }
};
MembershipReport check_membership(const DAMap& g, double r, int samples = 4096, std::uint64_t seed = 3);

/// Center fixed points q + c v_c, located by bisection on the center displacement.
std::vector<double> center_fixed_points(const DAMap& g, int grid = 2001);

template <class Scalar>
Scalar gamma_formula(const Scalar& lambda_c, const Scalar& lambda_s) {
  using std::log;
  return log(lambda_c) / (log(lambda_c) - log(lambda_s));
}

template <class Scalar>
Scalar theta_formula(const Scalar& lambda_c, const Scalar& lambda_s, const Scalar& r) {
  using std::pow;
  return pow(lambda_c, Scalar(1) - r) * pow(lambda_s, r);
}

struct GammaValue {
  double value = 0;
  bool degenerate = false;
};

GammaValue gamma_of(const DAMap& g);
/// lambda_c^(1-r) lambda_s^r; r must lie in (0,1).
double theta_r(const DAMap& g, double r);

/// Normalized Dg^{n_back} F^u pushed along the backward orbit of x.
Vecd estimate_unstable_direction(const DAMap& g, const Vecd& x, int n_back = 30);

/// Orthonormal basis (d x (d-1)) of E^cs(x): F^cs pulled back from g^{n_fwd} x.
Matd estimate_center_stable_plane(const DAMap& g, const Vecd& x, int n_fwd = 30);

/// ||Dg^i restricted to E^cs(x)||.
double center_stable_growth(const DAMap& g, const Vecd& x, int i, int n_fwd = 30);

/// Values of center_stable_growth(x, i) for i = 1..n from one cocycle pass.
std::vector<double> center_stable_growth_profile(const DAMap& g, const Vecd& x, int n, int n_fwd = 30);

/// Orbit x, g x, ..., g^{n-1} x.
std::vector<Vecd> orbit(const DAMap& g, const Vecd& x, int n);

}  // namespace dathermo
