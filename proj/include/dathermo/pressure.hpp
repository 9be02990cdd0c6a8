#pragma once

#include "dathermo/mane_map.hpp"
#include "dathermo/potential.hpp"

#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dathermo {

/// Binary entropy -t log t - (1-t) log(1-t), H(0) = H(1) = 0.
template <class Scalar>
Scalar entropy_H(const Scalar& t) {
  using std::log;
  if (t < Scalar(0) || t > Scalar(1)) throw std::domain_error("entropy_H: t must lie in [0,1]");
  Scalar out(0);
  if (t > Scalar(0)) out -= t * log(t);
  if (t < Scalar(1)) out -= (Scalar(1) - t) * log(Scalar(1) - t);
  return out;
}

/// Running log(sum exp(v_i)) with compensated summation of the scaled terms.
class LogSumExp {
 public:
  void add(double v);
  double value() const;  // -inf when empty
  std::size_t count() const { return count_; }

 private:
  double max_ = -INFINITY;
  double sum_ = 0.0;
  double comp_ = 0.0;
  std::size_t count_ = 0;
};

double bowen_distance(const DAMap& g, const Vecd& x, const Vecd& y, int n);

/// Predicate on an orbit segment x, g x, ..., g^{n-1} x.
using SegmentPredicate = std::function<bool(const std::vector<Vecd>& orbit)>;

enum class Domain { whole_space, collection_restricted };

struct SeparatedSet {
  int n = 0;
  double epsilon = 0;
  std::vector<Vecd> points;
  Domain domain = Domain::whole_space;
  std::size_t candidates = 0;
  std::size_t filtered_out = 0;
  /// Orbits of the accepted points, n * d doubles per point.
  std::vector<double> orbits;
};

/// Greedy maximal (n, eps)-separated subset of `candidates`, processed in
/// order. Orbits are computed concurrently; selection is sequential.
SeparatedSet max_separated_set(const DAMap& g, const std::vector<Vecd>& candidates, int n, double epsilon,
                               const SegmentPredicate* restriction = nullptr, int workers = 1);

/// Supplies ordered candidate points for an (n, eps) job.
class CandidateSource {
 public:
  virtual ~CandidateSource() = default;
  virtual std::vector<Vecd> generate(const DAMap& g, int n, double epsilon) const = 0;
  /// log of the factor turning the raw sum into the whole-space estimate.
  virtual double log_weight(const DAMap&, int, double) const { return 0.0; }
  virtual nlohmann::json describe() const = 0;
};

/// The same explicit list for every n.
class PointListSource final : public CandidateSource {
 public:
  explicit PointListSource(std::vector<Vecd> pts) : pts_(std::move(pts)) {}
  std::vector<Vecd> generate(const DAMap&, int, double) const override { return pts_; }
  nlohmann::json describe() const override;

 private:
  std::vector<Vecd> pts_;
};

/// Cell centers of an m^d grid.
std::vector<Vecd> grid_points(int d, int m);

/// Dense 1-D grids along approximate unstable leaves through a coarse seed
/// grid. Arc spacing is eps / (2 mu^{n-1}), mu the measured maximal unstable
/// expansion, so consecutive samples stay unresolved at time n-1. The raw sum
/// is normalized to unit leaf length and eps^{-(d-1)} transverse tubes.
class LeafArcSource final : public CandidateSource {
 public:
  struct Options {
    int seeds_per_axis = 4;
    std::size_t points_per_job = 222222;
    int n_back = 30;
  };
  LeafArcSource() = default;
  explicit LeafArcSource(Options o) : o_(o) {}
  std::vector<Vecd> generate(const DAMap& g, int n, double epsilon) const override;
  double log_weight(const DAMap& g, int n, double epsilon) const override;
  nlohmann::json describe() const override;
  const Options& options() const { return o_; }

 private:
  struct Layout {
    std::size_t seeds;
    std::size_t per_arc;
    double spacing;
  };
  Layout layout(const DAMap& g, int n, double epsilon) const;
  Options o_;
};

/// Short unstable arcs through seeds on the center-stable disk of radius rho
/// at q, sized to cover the points whose orbits stay near q for a fraction
/// 1 - r of the time, plus uniform starters. Raw (unnormalized) sums.
class CollectionSource final : public CandidateSource {
 public:
  struct Options {
    double rho = 0.05;
    double r = 0.1;
    Vecd q;
    int uniform_starters = 4096;
    std::size_t max_points_per_job = 400000;
    std::uint64_t seed = 5;
  };
  explicit CollectionSource(Options o) : o_(std::move(o)) {}
  std::vector<Vecd> generate(const DAMap& g, int n, double epsilon) const override;
  nlohmann::json describe() const override;

 private:
  Options o_;
};

struct PartitionSum {
  int n = 0;
  double epsilon = 0;
  double log_raw = -INFINITY;   // log sum exp(S_n phi) over the separated set
  double log_weight = 0;        // normalization added to log_raw
  std::size_t points = 0;
  std::size_t candidates = 0;
  std::size_t filtered_out = 0;
  std::vector<double> sums;     // S_n phi for each accepted point
  std::vector<Vecd> accepted;   // the separated set itself
  double log_value() const { return log_raw + log_weight; }
};

PartitionSum partition_sum(const DAMap& g, const Potential& phi, int n, double epsilon, const CandidateSource& source,
                           const SegmentPredicate* restriction = nullptr, int workers = 1);

struct LinearFit {
  double slope = 0;
  double intercept = 0;
  double r2 = 1;
  double slope_stderr = 0;
};
LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

struct PressureEstimate {
  double value = 0;             // least-squares slope of log Lambda_n against n
  double lower_bound = 0;       // max over n of (1/n) log of the raw greedy sum
  double epsilon = 0;
  int n_min = 0;
  int n_max = 0;
  std::vector<std::pair<int, double>> log_sums;
  std::vector<int> dropped_n;
  double slope_r2 = 1;
  double slope_stderr = 0;
  double tolerance = 0;         // 3 stderr + 0.02 nats
  std::string mode = "slope-fit";
  std::string normalization;
  std::size_t candidates = 0;
  nlohmann::json to_json() const;
};

struct PressureOptions {
  std::shared_ptr<const CandidateSource> source;  // default LeafArcSource
  std::size_t candidate_budget = 2000000;         // total over all n when source is default
  const SegmentPredicate* restriction = nullptr;
  int workers = 1;
};

PressureEstimate pressure(const DAMap& g, const Potential& phi, double epsilon, int n_min, int n_max,
                          const PressureOptions& opts = {});

/// Fits a pressure estimate from per-n partition sums (n ascending).
PressureEstimate estimate_from_sums(const std::vector<PartitionSum>& sums, double epsilon, double t = 1.0);

/// P(t phi) for every t from a single set of separated sets.
class PressureCurve {
 public:
  std::vector<double> t;
  std::vector<PressureEstimate> estimates;

  /// Re-evaluates the fitted pressure at any t from the stored Birkhoff sums.
  PressureEstimate evaluate(double t_value) const;
  const std::vector<PartitionSum>& sums() const { return sums_; }
  double epsilon() const { return epsilon_; }

 private:
  friend PressureCurve pressure_curve(const DAMap&, const Potential&, const std::vector<double>&, double, int, int,
                                      const PressureOptions&);
  friend PressureCurve make_curve(std::vector<PartitionSum> sums, double epsilon, const std::vector<double>& t_grid);
  std::vector<PartitionSum> sums_;
  double epsilon_ = 0;
};

PressureCurve pressure_curve(const DAMap& g, const Potential& phi_u, const std::vector<double>& t_grid,
                             double epsilon, int n_min, int n_max, const PressureOptions& opts = {});

/// Curve from precomputed partition sums (used by tests and shifted curves).
PressureCurve make_curve(std::vector<PartitionSum> sums, double epsilon, const std::vector<double>& t_grid);

}  // namespace dathermo
