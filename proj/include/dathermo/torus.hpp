#pragma once

#include "dathermo/types.hpp"

#include <cmath>
#include <stdexcept>

namespace dathermo {

/// Componentwise fractional part, landing in [0,1).
template <class Scalar>
Vec<Scalar> reduce_coords(const Vec<Scalar>& v) {
  using std::floor;
  Vec<Scalar> out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    Scalar f = v(i) - floor(v(i));
    // floor of a tiny negative number can round the difference up to 1.
    if (f >= Scalar(1)) f -= Scalar(1);
    out(i) = f;
  }
  return out;
}

/// Nearest-lift displacement: components in [-1/2, 1/2].
template <class Scalar>
Vec<Scalar> wrap(const Vec<Scalar>& d) {
  using std::floor;
  Vec<Scalar> out(d.size());
  for (Eigen::Index i = 0; i < d.size(); ++i) out(i) = d(i) - floor(d(i) + Scalar(0.5));
  return out;
}

template <class Scalar>
Scalar flat_distance(const Vec<Scalar>& x, const Vec<Scalar>& y) {
  using std::sqrt;
  Vec<Scalar> w = wrap<Scalar>(x - y);
  return sqrt(w.squaredNorm());
}

/// A point of T^d = R^d / Z^d with coordinates in [0,1).
class TorusPoint {
 public:
  TorusPoint() = default;

  int dim() const { return static_cast<int>(coords_.size()); }
  const Vecd& coords() const { return coords_; }
  operator const Vecd&() const { return coords_; }
  double operator[](int i) const { return coords_(i); }

  friend TorusPoint reduce(const Vecd& v);

 private:
  explicit TorusPoint(Vecd c) : coords_(std::move(c)) {}
  Vecd coords_;
};

/// Fractional part of a finite vector. Throws on NaN/inf entries.
inline TorusPoint reduce(const Vecd& v) {
  if (v.size() == 0 || v.size() > kMaxDim) throw std::invalid_argument("reduce: bad dimension");
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (!std::isfinite(v(i))) throw std::invalid_argument("reduce: non-finite coordinate");
  return TorusPoint(reduce_coords<double>(v));
}

/// Flat quotient metric: min over integer translates of the euclidean norm.
inline double torus_distance(const TorusPoint& x, const TorusPoint& y) {
  if (x.dim() != y.dim()) throw std::invalid_argument("torus_distance: dimension mismatch");
  return flat_distance<double>(x.coords(), y.coords());
}

inline double torus_diameter(int d) { return std::sqrt(static_cast<double>(d)) / 2.0; }

}  // namespace dathermo
