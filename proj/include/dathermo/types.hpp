#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace dathermo {

/// Largest supported torus dimension. Vectors and matrices use fixed-capacity
/// storage so hot loops never touch the heap.
inline constexpr int kMaxDim = 8;

template <class Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1, 0, kMaxDim, 1>;

template <class Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;

using Vecd = Vec<double>;
using Matd = Mat<double>;
using IntMatrix = Mat<long long>;

/// Raised when a numerical procedure cannot produce a trustworthy result
/// (cone check failure, non-convergence, degenerate frame, ...).
class NumericalRejection : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dathermo
