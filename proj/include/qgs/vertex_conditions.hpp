#pragma once

#include "qgs/common.hpp"

#include <Eigen/Eigenvalues>

#include <optional>

namespace qgs {

inline constexpr double eigen_cluster_tol = 1e-9;

inline CMat kirchhoff_unitary(int d) {
  if (d < 1) throw ValidationError("kirchhoff_unitary: degree must be >= 1");
  return CMat::Constant(d, d, cplx(2.0 / d, 0.0)) - CMat::Identity(d, d);
}

/// U = c*ones - Id with c = 2/(d - i*alpha); encodes continuity and sum f' = alpha f.
inline CMat delta_unitary(int d, double alpha) {
  if (d < 1) throw ValidationError("delta_unitary: degree must be >= 1");
  cplx c = 2.0 / cplx(d, -alpha);
  return CMat::Constant(d, d, c) - CMat::Identity(d, d);
}

inline CMat dirichlet_unitary(int d) { return -CMat::Identity(d, d); }
inline CMat neumann_unitary(int d) { return CMat::Identity(d, d); }

inline double unitarity_defect(const CMat& U) {
  if (U.rows() != U.cols()) return std::numeric_limits<double>::infinity();
  return op_norm(U * U.adjoint() - CMat::Identity(U.rows(), U.cols()));
}

struct BoundaryMatrices {
  CMat A1, A2;
  CMat P_D, P_N, P_R;
  CMat robin_basis;  ///< d x r, orthonormal columns spanning ran P_R
  CMat Lambda;       ///< r x r, Cayley transform in robin_basis coordinates
  double lambda_norm = 0.0;

  /// Lambda extended by zero to the full d-dimensional space.
  CMat lambda_full() const {
    if (robin_basis.cols() == 0) return CMat::Zero(A1.rows(), A1.cols());
    return robin_basis * Lambda * robin_basis.adjoint();
  }
};

namespace detail {

// Common orthonormal eigenbasis of a unitary matrix, via a generic Hermitian
// combination of its commuting real and imaginary parts.
inline CMat unitary_eigenbasis(const CMat& U) {
  const CMat H = 0.5 * (U + U.adjoint());
  const CMat K = cplx(0.0, -0.5) * (U - U.adjoint());
  const double c = 0.6180339887498949;
  Eigen::SelfAdjointEigenSolver<CMat> es(H + c * K);
  if (es.info() != Eigen::Success) throw NumericalError("boundary_matrices: eigensolver failed");
  return es.eigenvectors();
}

}  // namespace detail

inline BoundaryMatrices boundary_matrices(const CMat& U) {
  const Eigen::Index d = U.rows();
  BoundaryMatrices bm;
  const CMat Id = CMat::Identity(d, d);
  bm.A1 = I_unit * (U - Id);
  bm.A2 = U + Id;
  bm.P_D = CMat::Zero(d, d);
  bm.P_N = CMat::Zero(d, d);
  bm.P_R = CMat::Zero(d, d);
  if (d == 0) return bm;

  const CMat V = detail::unitary_eigenbasis(U);
  std::vector<Eigen::Index> robin;
  for (Eigen::Index j = 0; j < d; ++j) {
    const CVec v = V.col(j);
    const cplx mu = v.dot(U * v);
    const CMat proj = v * v.adjoint();
    if (std::abs(mu + 1.0) < eigen_cluster_tol) {
      bm.P_D += proj;
    } else if (std::abs(mu - 1.0) < eigen_cluster_tol) {
      bm.P_N += proj;
    } else {
      bm.P_R += proj;
      robin.push_back(j);
    }
  }
  const Eigen::Index r = static_cast<Eigen::Index>(robin.size());
  bm.robin_basis = CMat(d, r);
  for (Eigen::Index j = 0; j < r; ++j) bm.robin_basis.col(j) = V.col(robin[j]);
  if (r > 0) {
    const CMat& R = bm.robin_basis;
    const CMat plus = R.adjoint() * (U + Id) * R;
    const CMat minus = R.adjoint() * (U - Id) * R;
    CMat lam = -I_unit * plus.partialPivLu().solve(minus);
    bm.Lambda = 0.5 * (lam + lam.adjoint());
    Eigen::SelfAdjointEigenSolver<CMat> es(bm.Lambda);
    bm.lambda_norm = es.eigenvalues().cwiseAbs().maxCoeff();
  } else {
    bm.Lambda = CMat(0, 0);
  }
  return bm;
}

/// True when U commutes with every coordinate permutation (U = a Id + b ones).
inline bool is_permutation_invariant(const CMat& U, double tol = 1e-12) {
  const Eigen::Index d = U.rows();
  if (d <= 1) return true;
  const cplx diag = U(0, 0), off = U(0, 1);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j)
      if (std::abs(U(i, j) - (i == j ? diag : off)) > tol) return false;
  return true;
}

/// Classification of U as a delta-type condition U = c*ones - Id.
/// Dirichlet (c = 0) is reported with dirichlet = true.
struct DeltaForm {
  bool dirichlet = false;
  double alpha = 0.0;
};

inline std::optional<DeltaForm> delta_form(const CMat& U, double tol = 1e-10) {
  const Eigen::Index d = U.rows();
  if (d == 0) return std::nullopt;
  const cplx c = U(0, 0) + 1.0;
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) {
      const cplx expect = (i == j) ? c - 1.0 : c;
      if (std::abs(U(i, j) - expect) > tol) return std::nullopt;
    }
  if (std::abs(c) < tol) return DeltaForm{true, 0.0};
  const cplx a = -I_unit * (static_cast<double>(d) - 2.0 / c);
  if (std::abs(a.imag()) > 1e-8 * (1.0 + std::abs(a.real()))) return std::nullopt;
  return DeltaForm{false, a.real()};
}

}  // namespace qgs
