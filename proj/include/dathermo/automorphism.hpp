#pragma once

#include "dathermo/torus.hpp"
#include "dathermo/types.hpp"

#include <json.hpp>

#include <vector>

namespace dathermo {

/// Eigen-decomposition of a hyperbolic automorphism with one expanding
/// direction. Columns of `eigenvectors` follow `eigenvalues` (ascending);
/// rows of `dual` are the matching left eigenvectors, dual * eigenvectors = I.
struct SpectralData {
  double lambda_u = 0;
  double lambda_s = 0;
  std::vector<double> eigenvalues;
  Matd eigenvectors;
  Matd dual;
  Vecd F_u;
  Vecd F_c;
  Matd F_s;  // d x (d-2)
  double h = 0;

  int dim() const { return static_cast<int>(eigenvalues.size()); }
  int index_u() const { return dim() - 1; }
  int index_c() const { return dim() - 2; }

  Vecd dual_u() const { return dual.row(index_u()).transpose(); }
  Vecd dual_c() const { return dual.row(index_c()).transpose(); }
  /// Basis of F^c + F^s, d x (d-1).
  Matd F_cs() const { return eigenvectors.leftCols(dim() - 1); }
  /// Projection onto F^u along F^cs.
  Matd projector_u() const { return F_u * dual_u().transpose(); }
  Matd projector_cs() const { return Matd::Identity(dim(), dim()) - projector_u(); }
};

class ToralAutomorphism {
 public:
  /// Validates |det| = 1, real positive simple spectrum, exactly one eigenvalue
  /// outside the unit circle. Throws std::invalid_argument otherwise.
  static ToralAutomorphism from_matrix(const IntMatrix& A);

  int dim() const { return static_cast<int>(matrix_.rows()); }
  const IntMatrix& matrix() const { return matrix_; }
  const IntMatrix& inverse_matrix() const { return inverse_; }
  long long det() const { return det_; }
  const SpectralData& spectral() const { return spectral_; }
  /// Monic characteristic polynomial, coefficients of lambda^d, ..., lambda^0.
  const std::vector<long long>& char_poly() const { return char_poly_; }
  /// No rational root: every eigenvalue is irrational.
  bool irrational_certified() const { return irrational_; }
  /// Irreducible over Q (decided only for d <= 3).
  bool irreducible_certified() const { return irreducible_; }

  template <class Scalar>
  Vec<Scalar> apply(const Vec<Scalar>& x) const {
    return reduce_coords<Scalar>(matrix_.cast<Scalar>() * x);
  }
  template <class Scalar>
  Vec<Scalar> apply_inverse(const Vec<Scalar>& x) const {
    return reduce_coords<Scalar>(inverse_.cast<Scalar>() * x);
  }

 private:
  IntMatrix matrix_;
  IntMatrix inverse_;
  long long det_ = 0;
  SpectralData spectral_;
  std::vector<long long> char_poly_;
  bool irrational_ = false;
  bool irreducible_ = false;
};

/// [[3,2,1],[2,2,1],[1,1,1]].
IntMatrix demo_matrix();

/// Exact characteristic polynomial via Faddeev-LeVerrier in integers.
std::vector<long long> characteristic_polynomial(const IntMatrix& A);

SpectralData spectral_split(const IntMatrix& A);

/// (sin of the minimal principal angle)^-1 between two subspaces given by
/// column bases. Throws if the subspaces are not transverse.
double cone_constant(const Matd& F1, const Matd& F2);

/// kappa = 2 * cone_constant(F^cs, F^u).
double kappa(const SpectralData& s);

/// Heuristic upper bound for eta: injectivity radius (1/2) over 10 kappa.
double eta_heuristic(const SpectralData& s);

IntMatrix matrix_from_json(const nlohmann::json& j);
nlohmann::json to_json(const IntMatrix& A);
nlohmann::json to_json(const SpectralData& s);
nlohmann::json to_json(const Vecd& v);

}  // namespace dathermo
