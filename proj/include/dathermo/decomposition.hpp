#pragma once

#include "dathermo/pressure.hpp"

#include <iosfwd>
#include <vector>

namespace dathermo {

struct OrbitSegment {
  Vecd x;
  int n = 0;
};

struct DecompositionResult {
  int p = 0;
  int g = 0;
  int s = 0;
  std::vector<int> chi_prefix;  // S_i chi for i = 0..n
};

/// 1 iff d(x, q) >= rho.
int chi(const Vecd& q, double rho, const Vecd& x);

/// chi along x, g x, ..., g^{n-1} x.
std::vector<int> chi_sequence(const DAMap& g, const Vecd& q, double rho, const Vecd& x, int n);

/// Prefix sums S_0 = 0, S_i = chi_0 + ... + chi_{i-1}.
std::vector<int> prefix_sums(const std::vector<int>& chi_values);

/// S_i >= i r for every prefix.
bool in_G(const std::vector<int>& chi_values, double r);
bool in_G(const DAMap& g, const Vecd& q, double rho, double r, const OrbitSegment& seg);

/// p is the largest i in 1..n with S_i < i r (0 if none); the rest is good.
/// Throws std::logic_error if the suffix fails the good-segment test.
DecompositionResult decompose(const std::vector<int>& chi_values, double r);
DecompositionResult decompose(const DAMap& g, const Vecd& q, double rho, double r, const OrbitSegment& seg);

/// (1-r) sup_ball + r (sup_global + h + log L) + H(2r).
template <class Scalar>
Scalar collection_pressure_bound(const Scalar& r, const Scalar& h, const Scalar& L, const Scalar& sup_ball,
                                 const Scalar& sup_global) {
  using std::log;
  if (!(r > Scalar(0) && r < Scalar(0.5))) throw std::domain_error("collection bound: r must lie in (0, 1/2)");
  if (L < Scalar(1)) throw std::domain_error("collection bound: L must be >= 1");
  return (Scalar(1) - r) * sup_ball + r * (sup_global + h + log(L)) + entropy_H<Scalar>(Scalar(2) * r);
}

struct SegmentAudit {
  int n = 0;
  int chi_sum = 0;
  int p = 0;
  int g = 0;
};

struct CollectionOptions {
  std::shared_ptr<const CandidateSource> source;  // default CollectionSource
  int workers = 1;
  std::vector<SegmentAudit>* audit = nullptr;      // filled with accepted segments
};

/// Pressure restricted to orbit segments with S_n chi < r n. r > 1 is
/// accepted and makes the restriction vacuous.
PressureEstimate empirical_collection_pressure(const DAMap& g, const Potential& phi, const Vecd& q, double rho,
                                               double r, double epsilon, int n_min, int n_max,
                                               const CollectionOptions& opts = {});

void write_segment_audit(std::ostream& out, const std::vector<SegmentAudit>& rows);

}  // namespace dathermo
