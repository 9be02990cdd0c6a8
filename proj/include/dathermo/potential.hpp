#pragma once

#include "dathermo/mane_map.hpp"
#include "dathermo/types.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace dathermo {

/// Scalar expression over x1..xd. Grammar: numbers, pi, + - * / ^, unary
/// minus, parentheses, sin cos exp log abs sqrt, tri(u) = |u - round(u)|,
/// dist(a1,...,ad) = torus distance from x to the constant point a.
class Expression {
 public:
  /// Throws std::invalid_argument with the offending position.
  static Expression parse(const std::string& text, int dim);

  double operator()(const Vecd& x) const;
  const std::string& text() const { return text_; }
  int dim() const { return dim_; }
  bool is_constant() const;

  struct Instr {
    int op;
    double value;
    int index;
  };

 private:
  std::string text_;
  int dim_ = 0;
  std::vector<Instr> code_;
  std::vector<Vecd> points_;
  int max_stack_ = 0;
};

/// Cached extrema and regularity estimates of a potential.
struct PotentialStats {
  double alpha = 1.0;
  double seminorm = 0.0;
  double sup = 0.0;
  double inf = 0.0;
  double sup_ball = 0.0;
  /// Certified slack: true sup <= sup + sup_slack (Hölder bound on the grid gap).
  double sup_slack = 0.0;
  double inf_slack = 0.0;
  double sup_ball_slack = 0.0;
  double range() const { return sup - inf; }
};

struct StatsOptions {
  Vecd q;               // ball center for sup_ball (empty = origin)
  double rho = 0.05;    // ball radius for sup_ball
  long grid_budget = 1L << 18;
  int refine_starts = 8;
  int seminorm_pairs = 20000;
  std::uint64_t seed = 7;
};

/// Forward unstable cocycle used for fast Birkhoff sums of phi^u.
struct UnstableCocycle {
  DAMap map;
  int n_back = 30;
  /// Sum over the orbit of -log||Dg(x_k) v_k||, v_0 = E^u(x_0), v_{k+1} = Dg v_k / ||Dg v_k||.
  double sum(const std::vector<Vecd>& orbit, std::size_t n) const;
};

class Potential {
 public:
  using Eval = std::function<double(const Vecd&)>;

  static Potential from_expression(const std::string& expr, int dim, double alpha, const StatsOptions& opts = {});
  static Potential from_function(Eval f, int dim, double alpha, const StatsOptions& opts, std::string label);
  static Potential constant(double c, int dim);

  double operator()(const Vecd& x) const { return scale_ * eval_(x) + shift_; }
  int dim() const { return dim_; }
  const std::string& label() const { return label_; }
  const PotentialStats& stats() const { return stats_; }
  double alpha() const { return stats_.alpha; }
  double seminorm() const { return stats_.seminorm; }
  double sup() const { return stats_.sup; }
  double inf() const { return stats_.inf; }
  double sup_ball() const { return stats_.sup_ball; }
  bool is_constant() const { return constant_; }
  bool has_cocycle() const { return cocycle_ != nullptr; }

  /// phi + c with exactly shifted stats.
  Potential shifted(double c) const;
  /// t * phi with exactly rescaled stats.
  Potential scaled(double t) const;

  /// S_n phi along a precomputed orbit (first n points). Uses the unstable
  /// cocycle when present.
  double sum_along(const std::vector<Vecd>& orbit, std::size_t n) const;

 private:
  friend Potential geometric_potential(const DAMap& g, int n_back, const StatsOptions& opts);
  Eval eval_;
  int dim_ = 0;
  std::string label_;
  PotentialStats stats_;
  bool constant_ = false;
  double scale_ = 1.0;
  double shift_ = 0.0;
  std::shared_ptr<const UnstableCocycle> cocycle_;
};

/// Sum of phi over the forward orbit x, ..., g^{n-1} x.
double birkhoff_sum(const DAMap& g, const Potential& phi, const Vecd& x, int n);

/// Max over sampled pairs of |dphi| / d^alpha, short-range stratified pairs
/// included. The i-th pair does not depend on n_pairs, so the estimate is
/// nondecreasing in n_pairs.
double holder_seminorm(const Potential::Eval& phi, int dim, double alpha, int n_pairs, std::uint64_t seed = 7);

struct VariationEstimate {
  double value = 0;
  double bound = 0;  // seminorm * eta^alpha
};
/// Sampled sup of |phi(x) - phi(y)| over d(x,y) < eta.
VariationEstimate variation(const Potential& phi, double eta, int n_pairs = 20000, std::uint64_t seed = 11);

/// phi^u(x) = -log ||Dg(x) E^u(x)||.
Potential geometric_potential(const DAMap& g, int n_back = 30, const StatsOptions& opts = {});

/// Sup/inf search: grid of at most `budget` cells plus local refinement.
struct Extremum {
  double value = 0;
  Vecd where;
  double slack = 0;  // Hölder certification of the grid gap
};
Extremum global_extremum(const Potential::Eval& f, int dim, bool maximize, double alpha, double seminorm, long budget,
                         int refine_starts);
Extremum ball_extremum(const Potential::Eval& f, const Vecd& q, double rho, bool maximize, double alpha,
                       double seminorm, long budget, int refine_starts);

}  // namespace dathermo
