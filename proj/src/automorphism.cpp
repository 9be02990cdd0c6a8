#include "dathermo/automorphism.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace dathermo {

namespace {

constexpr double kEigenTol = 1e-10;

long long trace_of(const IntMatrix& M) {
  long long t = 0;
  for (Eigen::Index i = 0; i < M.rows(); ++i) t += M(i, i);
  return t;
}

struct FaddeevLeVerrier {
  std::vector<long long> coeffs;  // c_0 = 1, ..., c_d
  IntMatrix last;                 // M_d
};

FaddeevLeVerrier faddeev_leverrier(const IntMatrix& A) {
  const Eigen::Index d = A.rows();
  IntMatrix I = IntMatrix::Identity(d, d);
  IntMatrix M = IntMatrix::Zero(d, d);
  std::vector<long long> c(static_cast<std::size_t>(d) + 1, 0);
  c[0] = 1;
  for (Eigen::Index k = 1; k <= d; ++k) {
    M = (A * M).eval() + c[static_cast<std::size_t>(k - 1)] * I;
    long long t = trace_of(A * M);
    c[static_cast<std::size_t>(k)] = -t / k;
  }
  return {c, M};
}

long long eval_poly(const std::vector<long long>& c, long long x) {
  long long acc = 0;
  for (long long ci : c) acc = acc * x + ci;
  return acc;
}

}  // namespace

IntMatrix demo_matrix() {
  IntMatrix A(3, 3);
  A << 3, 2, 1, 2, 2, 1, 1, 1, 1;
  return A;
}

std::vector<long long> characteristic_polynomial(const IntMatrix& A) {
  if (A.rows() != A.cols()) throw std::invalid_argument("characteristic_polynomial: matrix not square");
  return faddeev_leverrier(A).coeffs;
}

SpectralData spectral_split(const IntMatrix& A) {
  const Eigen::Index d = A.rows();
  if (d != A.cols()) throw std::invalid_argument("spectral_split: matrix not square");
  if (d < 3 || d > kMaxDim) throw std::invalid_argument("spectral_split: dimension must be in [3, 8]");

  Eigen::MatrixXd Ad = A.cast<double>();
  Eigen::EigenSolver<Eigen::MatrixXd> es(Ad);
  if (es.info() != Eigen::Success) throw std::invalid_argument("spectral_split: eigen-decomposition failed");
  const double scale = std::max(1.0, Ad.norm());

  std::vector<int> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), 0);
  auto ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < d; ++i) {
    if (std::abs(ev(i).imag()) > kEigenTol * scale) {
      std::ostringstream os;
      os << "spectral_split: complex eigenvalue " << ev(i).real() << (ev(i).imag() < 0 ? "" : "+") << ev(i).imag()
         << "i";
      throw std::invalid_argument(os.str());
    }
    if (ev(i).real() <= 0) throw std::invalid_argument("spectral_split: non-positive eigenvalue");
  }
  std::sort(order.begin(), order.end(), [&](int a, int b) { return ev(a).real() < ev(b).real(); });
  for (Eigen::Index i = 1; i < d; ++i) {
    double gap = ev(order[i]).real() - ev(order[i - 1]).real();
    if (gap <= kEigenTol * scale) throw std::invalid_argument("spectral_split: repeated eigenvalue");
  }
  int n_expanding = 0;
  for (Eigen::Index i = 0; i < d; ++i) {
    double m = ev(i).real();
    if (std::abs(m - 1.0) <= kEigenTol) throw std::invalid_argument("spectral_split: eigenvalue on the unit circle");
    if (m > 1.0) ++n_expanding;
  }
  if (n_expanding != 1) throw std::invalid_argument("spectral_split: need exactly one eigenvalue of modulus > 1");

  SpectralData s;
  s.eigenvectors.resize(d, d);
  for (Eigen::Index k = 0; k < d; ++k) {
    const int i = order[static_cast<std::size_t>(k)];
    double lam = ev(i).real();
    Eigen::VectorXd v = es.eigenvectors().col(i).real();
    // Two steps of inverse iteration polish the vector to working precision.
    Eigen::MatrixXd shifted = Ad - (lam + 1e-13 * scale) * Eigen::MatrixXd::Identity(d, d);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(shifted);
    for (int it = 0; it < 2; ++it) {
      Eigen::VectorXd w = lu.solve(v);
      if (!w.allFinite() || w.norm() == 0) break;
      v = w.normalized();
    }
    v.normalize();
    Eigen::Index imax = 0;
    v.cwiseAbs().maxCoeff(&imax);
    if (v(imax) < 0) v = -v;
    double residual = (Ad * v - lam * v).norm();
    if (residual > kEigenTol * scale) {
      std::ostringstream os;
      os << "spectral_split: eigenpair residual " << residual << " exceeds tolerance";
      throw std::invalid_argument(os.str());
    }
    s.eigenvalues.push_back(lam);
    s.eigenvectors.col(k) = v;
  }
  s.dual = s.eigenvectors.inverse();
  s.lambda_u = s.eigenvalues.back();
  s.lambda_s = s.eigenvalues[static_cast<std::size_t>(d - 2)];
  s.F_u = s.eigenvectors.col(d - 1);
  s.F_c = s.eigenvectors.col(d - 2);
  s.F_s = s.eigenvectors.leftCols(d - 2);
  s.h = std::log(s.lambda_u);
  return s;
}

ToralAutomorphism ToralAutomorphism::from_matrix(const IntMatrix& A) {
  if (A.rows() != A.cols()) throw std::invalid_argument("ToralAutomorphism: matrix not square");
  if (A.rows() < 3 || A.rows() > kMaxDim) throw std::invalid_argument("ToralAutomorphism: dimension must be in [3, 8]");
  ToralAutomorphism T;
  T.matrix_ = A;
  auto fl = faddeev_leverrier(A);
  const long long d = A.rows();
  const long long cd = fl.coeffs.back();
  T.det_ = (d % 2 == 0) ? cd : -cd;
  if (T.det_ != 1 && T.det_ != -1) throw std::invalid_argument("ToralAutomorphism: |det| must be 1");
  T.inverse_ = (-cd) * fl.last;  // A^{-1} = -M_d / c_d with c_d = +-1
  T.char_poly_ = fl.coeffs;
  T.spectral_ = spectral_split(A);
  // Monic integer polynomial with constant term +-1: rational roots can only be +-1.
  T.irrational_ = eval_poly(fl.coeffs, 1) != 0 && eval_poly(fl.coeffs, -1) != 0;
  T.irreducible_ = T.irrational_ && d <= 3;
  return T;
}

double cone_constant(const Matd& F1, const Matd& F2) {
  if (F1.rows() != F2.rows()) throw std::invalid_argument("cone_constant: dimension mismatch");
  if (F1.cols() == 0 || F2.cols() == 0) throw std::invalid_argument("cone_constant: empty subspace");
  if (F1.cols() + F2.cols() > F1.rows()) throw std::invalid_argument("cone_constant: subspaces cannot be transverse");
  Eigen::MatrixXd a = F1, b = F2;
  Eigen::MatrixXd Q1 = Eigen::HouseholderQR<Eigen::MatrixXd>(a).householderQ() *
                       Eigen::MatrixXd::Identity(a.rows(), a.cols());
  Eigen::MatrixXd Q2 = Eigen::HouseholderQR<Eigen::MatrixXd>(b).householderQ() *
                       Eigen::MatrixXd::Identity(b.rows(), b.cols());
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(Q1.transpose() * Q2);
  double c = std::min(1.0, svd.singularValues()(0));
  double sn = std::sqrt(std::max(0.0, (1.0 - c) * (1.0 + c)));
  if (sn < 1e-12) throw std::invalid_argument("cone_constant: subspaces are not transverse");
  return 1.0 / sn;
}

double kappa(const SpectralData& s) {
  return 2.0 * cone_constant(s.F_cs(), Matd(s.F_u));
}

double eta_heuristic(const SpectralData& s) { return 0.5 / (10.0 * kappa(s)); }

IntMatrix matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) throw std::invalid_argument("matrix must be a non-empty array of arrays");
  const auto d = static_cast<Eigen::Index>(j.size());
  if (d > kMaxDim) throw std::invalid_argument("matrix dimension exceeds 8");
  IntMatrix A(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != d)
      throw std::invalid_argument("matrix must be square");
    for (Eigen::Index k = 0; k < d; ++k) {
      const auto& e = row[static_cast<std::size_t>(k)];
      if (!e.is_number_integer()) throw std::invalid_argument("matrix entries must be integers");
      A(i, k) = e.get<long long>();
    }
  }
  return A;
}

nlohmann::json to_json(const IntMatrix& A) {
  nlohmann::json j = nlohmann::json::array();
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index k = 0; k < A.cols(); ++k) row.push_back(A(i, k));
    j.push_back(row);
  }
  return j;
}

nlohmann::json to_json(const Vecd& v) {
  nlohmann::json j = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v(i));
  return j;
}

nlohmann::json to_json(const SpectralData& s) {
  nlohmann::json j;
  j["lambda_u"] = s.lambda_u;
  j["lambda_s"] = s.lambda_s;
  j["eigenvalues"] = s.eigenvalues;
  j["h"] = s.h;
  j["F_u"] = to_json(s.F_u);
  j["F_c"] = to_json(s.F_c);
  nlohmann::json fs = nlohmann::json::array();
  for (Eigen::Index k = 0; k < s.F_s.cols(); ++k) fs.push_back(to_json(Vecd(s.F_s.col(k))));
  j["F_s"] = fs;
  return j;
}

}  // namespace dathermo
