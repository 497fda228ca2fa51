#pragma once

#include "qgs/common.hpp"
#include "qgs/graph_core.hpp"
#include "qgs/spectral.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

namespace qgs {

/// P1 finite elements for the quadratic form of H_Q: stiffness plus potential
/// plus the vertex Robin part, on the subspace P_D F = 0.
class FemDiscretization {
 public:
  using SpMat = Eigen::SparseMatrix<cplx>;

  FemDiscretization(const QuantumGraph& q, int n_per_edge) : n_(n_per_edge) {
    if (n_per_edge < 4) throw ValidationError("fem: n_per_edge must be >= 4");
    const int nv = q.vertex_count();
    std::vector<CMat> basis(nv);
    std::vector<int> offset(nv + 1, 0);
    for (int v = 0; v < nv; ++v) {
      const auto& bm = q.boundary(v);
      const int d = q.degree(v);
      Eigen::SelfAdjointEigenSolver<CMat> es(CMat::Identity(d, d) - bm.P_D);
      std::vector<int> keep;
      for (int j = 0; j < d; ++j)
        if (es.eigenvalues()(j) > 0.5) keep.push_back(j);
      basis[v] = CMat(d, keep.size());
      for (std::size_t j = 0; j < keep.size(); ++j) basis[v].col(j) = es.eigenvectors().col(keep[j]);
      offset[v + 1] = offset[v] + static_cast<int>(keep.size());
    }
    const int interior0 = offset[nv];
    dofs_ = interior0 + q.edge_count() * (n_ - 1);

    using Handle = std::vector<std::pair<int, cplx>>;
    auto end_handle = [&](int b) {
      const int v = q.origin(b), j = q.beta_position(b);
      Handle h;
      for (Eigen::Index k = 0; k < basis[v].cols(); ++k) h.emplace_back(offset[v] + k, basis[v](j, k));
      return h;
    };
    std::vector<Eigen::Triplet<cplx>> ta, tb;
    auto add = [](std::vector<Eigen::Triplet<cplx>>& t, const Handle& a, const Handle& b, double w) {
      for (auto& [g, cg] : a)
        for (auto& [h, ch] : b) t.emplace_back(g, h, std::conj(cg) * w * ch);
    };
    for (int e = 0; e < q.edge_count(); ++e) {
      const EdgeData& ed = q.edge(e);
      const double L = ed.length(), h = L / n_;
      const Handle first = end_handle(bond_of(e, 0)), last = end_handle(bond_of(e, 1));
      auto node = [&](int i) -> Handle {
        if (i == 0) return first;
        if (i == n_) return last;
        return {{interior0 + e * (n_ - 1) + (i - 1), cplx(1.0)}};
      };
      for (int i = 0; i < n_; ++i) {
        const Handle a = node(i), b = node(i + 1);
        const double w0 = ed.potential(0, i * h), wm = ed.potential(0, (i + 0.5) * h), w1 = ed.potential(0, (i + 1) * h);
        // Simpson is exact for the cubic integrand when W is linear per element
        add(ta, a, a, 1.0 / h + h / 6.0 * (w0 + wm));
        add(ta, b, b, 1.0 / h + h / 6.0 * (wm + w1));
        add(ta, a, b, -1.0 / h + h / 6.0 * wm);
        add(ta, b, a, -1.0 / h + h / 6.0 * wm);
        add(tb, a, a, h / 3.0);
        add(tb, b, b, h / 3.0);
        add(tb, a, b, h / 6.0);
        add(tb, b, a, h / 6.0);
      }
    }
    for (int v = 0; v < nv; ++v) {
      const CMat R = basis[v].adjoint() * q.boundary(v).lambda_full() * basis[v];
      for (Eigen::Index i = 0; i < R.rows(); ++i)
        for (Eigen::Index j = 0; j < R.cols(); ++j)
          if (R(i, j) != cplx(0.0)) ta.emplace_back(offset[v] + i, offset[v] + j, R(i, j));
    }
    A_.resize(dofs_, dofs_);
    B_.resize(dofs_, dofs_);
    A_.setFromTriplets(ta.begin(), ta.end());
    B_.setFromTriplets(tb.begin(), tb.end());
    // union pattern so A - sigma B keeps one symbolic analysis
    A_ += 0.0 * B_;
    B_ += 0.0 * A_;
    A_.makeCompressed();
    B_.makeCompressed();
  }

  int dofs() const { return dofs_; }
  const SpMat& stiffness() const { return A_; }
  const SpMat& mass() const { return B_; }

  /// Number of discrete eigenvalues strictly below sigma.
  int count_below(double sigma) const {
    Eigen::SimplicialLDLT<SpMat> ldlt;
    for (int attempt = 0; attempt < 8; ++attempt) {
      SpMat M = A_ - sigma * B_;
      ldlt.compute(M);
      if (ldlt.info() == Eigen::Success) {
        const auto d = ldlt.vectorD();
        bool ok = true;
        int neg = 0;
        for (Eigen::Index i = 0; i < d.size(); ++i) {
          if (std::abs(d(i)) == 0.0) ok = false;
          if (d(i).real() < 0) ++neg;
        }
        if (ok) return neg;
      }
      sigma += 1e-13 * (1 + std::abs(sigma)) * (attempt + 1);
    }
    throw NumericalError("fem: factorization failed near " + std::to_string(sigma));
  }

  /// Discrete eigenvalues in [lo, hi] repeated by multiplicity.
  std::vector<double> eigenvalues(double lo, double hi, double tol_rel = 1e-10) const {
    while (count_below(lo) > 0) lo = 2 * lo - 1.0;
    std::vector<double> out;
    struct Job {
      double a, b;
      int na, nb;
    };
    std::vector<Job> stack{{lo, hi, 0, count_below(hi)}};
    while (!stack.empty()) {
      Job j = stack.back();
      stack.pop_back();
      const int n = j.nb - j.na;
      if (n <= 0) continue;
      if (j.b - j.a < tol_rel * (1 + std::abs(j.a))) {
        for (int i = 0; i < n; ++i) out.push_back(0.5 * (j.a + j.b));
        continue;
      }
      const double mid = 0.5 * (j.a + j.b);
      const int nm = count_below(mid);
      stack.push_back({mid, j.b, nm, j.nb});
      stack.push_back({j.a, mid, j.na, nm});
    }
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  int n_;
  int dofs_ = 0;
  SpMat A_, B_;
};

/// Eigenvalues of the P1 discretization below lambda_max.
inline std::vector<double> fem_oracle(const QuantumGraph& q, int n_per_edge, double lambda_max) {
  FemDiscretization fem(q, n_per_edge);
  return fem.eigenvalues(spectral_lower_bound(q), lambda_max);
}

/// Richardson extrapolation (4 lambda_2n - lambda_n) / 3 of the two meshes.
inline std::vector<double> fem_richardson(const QuantumGraph& q, int n_per_edge, double lambda_max) {
  const std::vector<double> a = fem_oracle(q, n_per_edge, lambda_max);
  const std::vector<double> b = fem_oracle(q, 2 * n_per_edge, lambda_max);
  const std::size_t m = std::min(a.size(), b.size());
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) out[i] = (4 * b[i] - a[i]) / 3.0;
  return out;
}

}  // namespace qgs
