#pragma once

#include "qgs/common.hpp"
#include "qgs/edge_solver.hpp"
#include "qgs/graph_core.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SVD>
#include <lapacke.h>

#include <map>

namespace qgs {

/// Test function with compact support [lo, hi].
struct TestFunction {
  std::function<double(double)> f;
  double lo = 0.0, hi = 0.0;
  double operator()(double x) const { return (x < lo || x > hi) ? 0.0 : f(x); }

  /// C-infinity bump on (a, b) with peak value 1.
  static TestFunction bump(double a, double b) {
    return {[a, b](double x) {
              const double t = (2 * x - a - b) / (b - a);
              if (std::abs(t) >= 1.0) return 0.0;
              return std::exp(1.0 - 1.0 / (1.0 - t * t));
            },
            a, b};
  }
  static TestFunction indicator(double a, double b) {
    return {[](double) { return 1.0; }, a, b};
  }
  /// Piecewise-linear hat with peak 1 at the midpoint.
  static TestFunction hat(double a, double b) {
    return {[a, b](double x) { return std::max(0.0, 1.0 - std::abs(2 * x - a - b) / (b - a)); }, a, b};
  }
  static TestFunction zero() {
    return {[](double) { return 0.0; }, 0.0, 0.0};
  }
};

/// One distinct eigenvalue with an orthonormal basis of its eigenspace.
/// coeffs has rows (2e, 2e+1) = (f(0), f'(0)) on the canonical bond of edge e.
struct EigenLevel {
  double lambda = 0.0;
  int multiplicity = 1;
  CMat coeffs;
  bool unresolved_cluster = false;  ///< narrower than the refinement width
};

struct SpectralData {
  std::vector<EigenLevel> levels;
  double lambda_min = 0.0, lambda_max = 0.0;
  double total_length = 0.0;
  bool has_eigenfunctions = false;

  int count() const {
    int n = 0;
    for (const auto& l : levels) n += l.multiplicity;
    return n;
  }
  /// Eigenvalues repeated according to multiplicity.
  std::vector<double> flat() const {
    std::vector<double> out;
    for (const auto& l : levels)
      for (int i = 0; i < l.multiplicity; ++i) out.push_back(l.lambda);
    return out;
  }
  int count_below(double lambda) const {
    int n = 0;
    for (const auto& l : levels)
      if (l.lambda < lambda) n += l.multiplicity;
    return n;
  }
};

enum class SpectralMethod { automatic, secular_scan, vertex_count };

struct SpectralOptions {
  SpectralMethod method = SpectralMethod::automatic;
  double resolution = 1.0;  ///< scan step divisor
  bool eigenfunctions = false;
  double refine_rel = 1e-10;
  double multiplicity_tol = 1e-6;
};

namespace detail {

inline double k_scale(double lambda) { return std::max(1.0, std::sqrt(std::abs(lambda))); }

// Unit-norm rows of [A1 | A2] per vertex, reused for every lambda.
inline std::vector<CMat> normalized_vertex_rows(const QuantumGraph& q) {
  std::vector<CMat> rows(q.vertex_count());
  for (int v = 0; v < q.vertex_count(); ++v) {
    const auto& bm = q.boundary(v);
    const int d = q.degree(v);
    CMat r(d, 2 * d);
    r << bm.A1, bm.A2;
    for (int i = 0; i < d; ++i) r.row(i) /= r.row(i).norm();
    rows[v] = r;
  }
  return rows;
}

}  // namespace detail

/// Secular matrix at real lambda. Unknowns per edge are (f(0), f'(0)/kappa) on
/// the canonical bond with kappa = max(1, sqrt|lambda|).
inline CMat secular_matrix(const QuantumGraph& q, double lambda, const std::vector<CMat>& rows,
                           const std::vector<RealTransfer>& tr) {
  const int n = 2 * q.edge_count();
  const double kap = detail::k_scale(lambda);
  CMat M = CMat::Zero(n, n);
  int row = 0;
  for (int v = 0; v < q.vertex_count(); ++v) {
    const int d = q.degree(v);
    const auto& beta = q.beta(v);
    for (int i = 0; i < d; ++i, ++row) {
      for (int j = 0; j < d; ++j) {
        const int b = beta[j], e = edge_of(b);
        const cplx a1 = rows[v](i, j), a2 = rows[v](i, d + j);
        if (dir_of(b) == 0) {
          M(row, 2 * e) += a1;
          M(row, 2 * e + 1) += a2 * kap;
        } else {
          const auto& t = tr[e];
          M(row, 2 * e) += a1 * t.c - a2 * t.cp;
          M(row, 2 * e + 1) += (a1 * t.s - a2 * t.sp) * kap;
        }
      }
    }
  }
  return M;
}

inline std::vector<RealTransfer> edge_transfers(const QuantumGraph& q, double lambda) {
  std::vector<RealTransfer> tr(q.edge_count());
  for (int e = 0; e < q.edge_count(); ++e) tr[e] = propagate_real(q.edge(e), lambda, 0.0, q.edge_length(e));
  return tr;
}

inline CMat secular_matrix(const QuantumGraph& q, double lambda) {
  return secular_matrix(q, lambda, detail::normalized_vertex_rows(q), edge_transfers(q, lambda));
}

inline double smallest_singular_value(const CMat& M) {
  Eigen::JacobiSVD<CMat> svd(M);
  return svd.singularValues()(svd.singularValues().size() - 1);
}

/// True when every vertex carries a delta-type (or Dirichlet) condition.
inline bool all_delta_type(const QuantumGraph& q) {
  for (int v = 0; v < q.vertex_count(); ++v)
    if (!delta_form(q.U(v))) return false;
  return true;
}

/// Number of negative eigenvalues of a real symmetric matrix.
inline int negative_inertia(const RMat& K) {
  const int n = static_cast<int>(K.rows());
  if (n == 0) return 0;
  if (n > 1500) {
    // unpivoted, so only trusted when no pivot is small
    Eigen::SparseMatrix<double> sp = K.sparseView(0.0);
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(sp);
    if (ldlt.info() == Eigen::Success) {
      const RVec d = ldlt.vectorD();
      const double big = d.cwiseAbs().maxCoeff();
      if ((d.array().abs() > 1e-8 * big).all()) return static_cast<int>((d.array() < 0).count());
    }
  }
  RMat A = K;
  std::vector<lapack_int> ipiv(n);
  lapack_int info = LAPACKE_dsytrf(LAPACK_COL_MAJOR, 'L', n, A.data(), n, ipiv.data());
  if (info < 0) throw NumericalError("negative_inertia: dsytrf rejected its arguments");
  int neg = 0;
  for (int k = 0; k < n; ++k) {
    if (ipiv[k] > 0) {
      if (A(k, k) < 0) ++neg;
    } else {
      const double a = A(k, k), b = A(k + 1, k), c = A(k + 1, k + 1);
      const double det = a * c - b * b;
      if (det < 0) ++neg;
      else if (a < 0) neg += 2;
      ++k;
    }
  }
  return neg;
}

struct VertexCount {
  int count = 0;
  /// min over edges of kappa*|S(L)|; small values mean lambda sits near a
  /// Dirichlet eigenvalue of an edge and the vertex matrix is ill-conditioned.
  double conditioning = 0.0;
};

/// Number of eigenvalues strictly below lambda for a graph whose vertex
/// conditions are all delta-type: Dirichlet counts per edge plus the negative
/// inertia of the vertex matrix.
inline VertexCount vertex_count(const QuantumGraph& q, double lambda) {
  const int nv = q.vertex_count();
  std::vector<int> idx(nv, -1);
  std::vector<double> alpha(nv, 0.0);
  int m = 0;
  for (int v = 0; v < nv; ++v) {
    auto df = delta_form(q.U(v));
    if (!df) throw ValidationError("eigenvalue_count_below: vertex " + std::to_string(v) + " is not delta-type");
    if (!df->dirichlet) {
      idx[v] = m++;
      alpha[v] = df->alpha;
    }
  }
  RMat K = RMat::Zero(m, m);
  int zeros = 0;
  double cond = std::numeric_limits<double>::infinity();
  const double kap = std::max(1.0, std::sqrt(std::abs(lambda)));
  for (int e = 0; e < q.edge_count(); ++e) {
    const RealTransfer t = propagate_real(q.edge(e), lambda, 0.0, q.edge_length(e));
    zeros += t.zeros;
    cond = std::min(cond, kap * std::abs(t.s));
    if (t.s == 0.0) throw NumericalError("eigenvalue_count_below: lambda is a Dirichlet eigenvalue of an edge");
    const int u = idx[q.graph().edge(e).first], v = idx[q.graph().edge(e).second];
    if (u >= 0) K(u, u) += t.c / t.s;
    if (v >= 0) K(v, v) += t.sp / t.s;
    if (u >= 0 && v >= 0) {
      K(u, v) -= 1.0 / t.s;
      K(v, u) -= 1.0 / t.s;
    }
  }
  for (int v = 0; v < nv; ++v)
    if (idx[v] >= 0) K(idx[v], idx[v]) += alpha[v];
  return {zeros + negative_inertia(K), cond};
}

inline int eigenvalue_count_below(const QuantumGraph& q, double lambda) { return vertex_count(q, lambda).count; }

inline double spectral_lower_bound(const QuantumGraph& q) {
  const double lam = q.max_lambda_norm();
  return -(q.max_potential() + 2 * lam / q.min_length() + 2 * lam * lam + 1.0);
}

inline void check_weyl(const QuantumGraph& q, double lambda, int count) {
  const double weyl = q.total_length() * std::sqrt(std::max(lambda, 0.0)) / pi;
  if (std::abs(count - weyl) > q.vertex_count() + q.edge_count()) {
    throw NumericalError("eigenvalue count " + std::to_string(count) + " at " + std::to_string(lambda) +
                         " is outside the Weyl bracket; increase resolution");
  }
}

namespace detail {

inline std::vector<double> scan_grid(const QuantumGraph& q, double lo, double hi, double resolution) {
  const double Lt = q.total_length();
  const double dl = (pi / Lt) * (pi / Lt) / 8.0 / resolution;
  const double knee = (pi / (2 * Lt)) * (pi / (2 * Lt));
  const double dk = pi / (8 * Lt) / resolution;
  std::vector<double> g;
  double x = lo;
  for (; x < std::min(knee, hi); x += dl) g.push_back(x);
  double k = std::sqrt(std::max(x, 0.0));
  for (;; k += dk) {
    const double l = k * k;
    if (l > hi + 1e-12) break;
    if (g.empty() || l > g.back()) g.push_back(l);
  }
  // one step past the end so a dip at hi is bracketed
  const double last = (k + dk) * (k + dk);
  g.push_back(std::max(last, hi + dl));
  return g;
}

template <class F>
double golden_min(F f, double a, double b, double tol) {
  const double r = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - r * (b - a), d = a + r * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

struct FoundLevel {
  double lambda = 0.0;
  int multiplicity = 0;
  bool cluster = false;
};

inline std::vector<FoundLevel> scan_levels(const QuantumGraph& q, double lo, double hi, const SpectralOptions& opt,
                                           double resolution) {
  const auto rows = normalized_vertex_rows(q);
  auto sigma = [&](double l) { return smallest_singular_value(secular_matrix(q, l, rows, edge_transfers(q, l))); };
  const std::vector<double> g = scan_grid(q, lo, hi, resolution);
  std::vector<double> s(g.size());
  parallel_for(g.size(), [&](std::size_t i) { s[i] = sigma(g[i]); });
  std::vector<std::size_t> dips;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const bool left = (i == 0) || s[i] <= s[i - 1];
    const bool right = (i + 1 == g.size()) || s[i] <= s[i + 1];
    if (left && right) dips.push_back(i);
  }
  std::vector<FoundLevel> found(dips.size());
  parallel_for(dips.size(), [&](std::size_t j) {
    const std::size_t i = dips[j];
    const double a = g[i == 0 ? 0 : i - 1], b = g[std::min(i + 1, g.size() - 1)];
    const double lam = golden_min(sigma, a, b, opt.refine_rel * (1 + std::abs(g[i])));
    Eigen::JacobiSVD<CMat> svd(secular_matrix(q, lam, rows, edge_transfers(q, lam)));
    const auto sv = svd.singularValues();
    int mult = 0;
    for (Eigen::Index k = 0; k < sv.size(); ++k)
      if (sv(k) < opt.multiplicity_tol) ++mult;
    // a split pair shows up as small singular values of very different size
    const bool cluster = mult > 1 && sv(sv.size() - mult) > 100.0 * std::max(sv(sv.size() - 1), 1e-14);
    found[j] = {lam, mult, cluster};
  });
  std::vector<FoundLevel> out;
  for (auto& f : found) {
    if (f.multiplicity == 0 || f.lambda < lo || f.lambda > hi) continue;
    if (!out.empty() && std::abs(f.lambda - out.back().lambda) < 1e-8 * (1 + std::abs(f.lambda))) continue;
    out.push_back(f);
  }
  return out;
}

inline constexpr double count_conditioning_floor = 1e-5;

/// Same operator with every edge split at frac * L by a Kirchhoff vertex of
/// degree 2; moves the edge-Dirichlet poles of the vertex count.
inline QuantumGraph subdivided(const QuantumGraph& q, double frac) {
  const int n = q.vertex_count(), E = q.edge_count();
  std::vector<std::pair<int, int>> pairs;
  std::vector<EdgeData> data;
  for (int e = 0; e < E; ++e) {
    pairs.emplace_back(q.graph().edge(e).first, n + e);
    data.push_back(q.edge(e).restricted(0.0, frac * q.edge_length(e)));
  }
  for (int e = 0; e < E; ++e) {
    pairs.emplace_back(n + e, q.graph().edge(e).second);
    data.push_back(q.edge(e).restricted(frac * q.edge_length(e), q.edge_length(e)));
  }
  std::vector<VertexCondition> cond;
  std::vector<std::vector<int>> beta;
  for (int v = 0; v < n; ++v) {
    cond.push_back(q.condition(v));
    std::vector<int> order = q.beta(v);
    for (int& b : order)
      if (dir_of(b) == 1) b = bond_of(E + edge_of(b), 1);
    beta.push_back(order);
  }
  for (int e = 0; e < E; ++e) {
    cond.push_back(VertexCondition{});
    beta.push_back({bond_of(e, 1), bond_of(E + e, 0)});
  }
  return QuantumGraph::assemble(CombinatorialGraph(n + E, std::move(pairs)), std::move(data), std::move(cond),
                                std::move(beta), std::nullopt);
}

inline std::vector<FoundLevel> count_levels(const QuantumGraph& q, double lo, double hi, const SpectralOptions& opt) {
  std::optional<QuantumGraph> fine;
  auto N = [&](int level, double l) {
    if (level == 0) return vertex_count(q, l);
    if (!fine) fine = subdivided(q, 0.3819660112501051);
    return vertex_count(*fine, l);
  };
  // moves an end point off the edge-Dirichlet poles
  auto safe_count = [&](double& l, double dir) {
    for (int i = 0;; ++i) {
      VertexCount c = N(0, l);
      if (c.conditioning >= count_conditioning_floor || i > 60) return c.count;
      l += dir * 1e-6 * (1 + std::abs(l)) * (1 << std::min(i, 20));
    }
  };
  while (safe_count(lo, -1.0) > 0) lo = 2 * lo - 1.0;
  struct Job {
    double a, b;
    int na, nb;
    int level;
  };
  std::vector<FoundLevel> out;
  // the count is of eigenvalues strictly below, so nudge hi to include hi itself
  double top = hi * (1 + 1e-12) + 1e-12;
  const int ntop = safe_count(top, 1.0);
  std::vector<Job> stack{{lo, top, 0, ntop, 0}};
  auto sigma = [&](double l) { return smallest_singular_value(secular_matrix(q, l)); };
  while (!stack.empty()) {
    Job j = stack.back();
    stack.pop_back();
    const int n = j.nb - j.na;
    if (n <= 0) continue;
    const double w = j.b - j.a;
    const double tol = opt.refine_rel * (1 + std::abs(j.a));
    if (w < tol) {
      out.push_back({0.5 * (j.a + j.b), n, false});
      continue;
    }
    bool split = false;
    for (double off : {0.0, 0.125, -0.125, 0.25, -0.25, 0.375, -0.375}) {
      const double m = j.a + w * (0.5 + off);
      const VertexCount c = N(j.level, m);
      if (c.conditioning < count_conditioning_floor) continue;
      stack.push_back({m, j.b, c.count, j.nb, j.level});
      stack.push_back({j.a, m, j.na, c.count, j.level});
      split = true;
      break;
    }
    if (split) continue;
    if (j.level == 0) {
      stack.push_back({j.a, j.b, j.na, j.nb, 1});
    } else {
      // poles of both graphs in one bracket: finish on the secular matrix
      out.push_back({golden_min(sigma, j.a, j.b, tol), n, false});
    }
  }
  std::sort(out.begin(), out.end(), [](const FoundLevel& a, const FoundLevel& b) { return a.lambda < b.lambda; });
  return out;
}

}  // namespace detail

/// Orthonormal eigenbasis (in L2 of the graph) for a level at lambda with the
/// given multiplicity; columns are coefficient vectors (f(0), f'(0)) per edge.
inline CMat eigenbasis(const QuantumGraph& q, double lambda, int mult) {
  const CMat M = secular_matrix(q, lambda);
  Eigen::JacobiSVD<CMat> svd(M, Eigen::ComputeFullV);
  CMat X = svd.matrixV().rightCols(mult);
  const double kap = detail::k_scale(lambda);
  for (int e = 0; e < q.edge_count(); ++e) X.row(2 * e + 1) *= kap;
  CMat G = CMat::Zero(mult, mult);
  for (int e = 0; e < q.edge_count(); ++e) {
    const TransferIntegrals ti = propagate_integrals(q.edge(e), cplx(lambda, 0.0), 0.0, q.edge_length(e));
    for (int i = 0; i < mult; ++i)
      for (int j = 0; j < mult; ++j) {
        const cplx pi_ = X(2 * e, i), qi = X(2 * e + 1, i), pj = X(2 * e, j), qj = X(2 * e + 1, j);
        G(i, j) += std::conj(pi_) * pj * ti.sigma2 + std::conj(qi) * qj * ti.sigma1 +
                   std::conj(pi_) * qj * std::conj(ti.sigma3) + std::conj(qi) * pj * ti.sigma3;
      }
  }
  G = 0.5 * (G + G.adjoint()).eval();
  Eigen::LLT<CMat> llt(G);
  if (llt.info() != Eigen::Success) throw NumericalError("eigenbasis: Gram matrix not positive definite");
  // X L^{-H} has identity Gram matrix
  CMat Linv = llt.matrixL().solve(CMat::Identity(mult, mult));
  return X * Linv.adjoint();
}

inline SpectralData eigenvalues_up_to(const QuantumGraph& q, double lambda_max, SpectralOptions opt = {}) {
  if (!(lambda_max > 0.0)) throw ValidationError("eigenvalues_up_to: lambda_max must be positive");
  SpectralData sd;
  sd.total_length = q.total_length();
  sd.lambda_max = lambda_max;
  double lo = spectral_lower_bound(q);
  const bool counting = opt.method == SpectralMethod::vertex_count ||
                        (opt.method == SpectralMethod::automatic && all_delta_type(q));
  std::vector<detail::FoundLevel> lv;
  if (counting) {
    lv = detail::count_levels(q, lo, lambda_max, opt);
    int total = 0;
    for (auto& l : lv) total += l.multiplicity;
    check_weyl(q, lambda_max, total);
    lo = std::min(lo, lv.empty() ? lo : lv.front().lambda);
  } else {
    double res = opt.resolution;
    for (int attempt = 0;; ++attempt) {
      lv = detail::scan_levels(q, lo, lambda_max, opt, res);
      int total = 0;
      for (auto& l : lv) total += l.multiplicity;
      try {
        check_weyl(q, lambda_max, total);
        break;
      } catch (const NumericalError&) {
        if (attempt >= 1) throw;
        res *= 4.0;
      }
    }
  }
  sd.lambda_min = lo;
  for (std::size_t i = 0; i < lv.size(); ++i) {
    EigenLevel L;
    L.lambda = lv[i].lambda;
    L.multiplicity = lv[i].multiplicity;
    L.unresolved_cluster = lv[i].cluster;
    sd.levels.push_back(L);
  }
  if (opt.eigenfunctions) {
    parallel_for(sd.levels.size(), [&](std::size_t i) {
      sd.levels[i].coeffs = eigenbasis(q, sd.levels[i].lambda, sd.levels[i].multiplicity);
    });
    sd.has_eigenfunctions = true;
  }
  return sd;
}

/// Value of the eigenfunction with coefficient column col at a point.
inline cplx eigenfunction_value(const QuantumGraph& q, const EigenLevel& lv, int col, Point p) {
  auto [e, s] = canonical(q, p);
  const Transfer t = propagate(q.edge(e), cplx(lv.lambda, 0.0), 0.0, s);
  return lv.coeffs(2 * e, col) * t.c + lv.coeffs(2 * e + 1, col) * t.s;
}

/// Vertex-condition residual max_v |A1 F + A2 F'| for an eigenfunction.
inline double eigenfunction_vertex_residual(const QuantumGraph& q, const EigenLevel& lv, int col) {
  const auto tr = edge_transfers(q, lv.lambda);
  double worst = 0.0;
  for (int v = 0; v < q.vertex_count(); ++v) {
    const int d = q.degree(v);
    CVec F(d), Fp(d);
    for (int j = 0; j < d; ++j) {
      const int b = q.beta(v)[j], e = edge_of(b);
      const cplx p = lv.coeffs(2 * e, col), qq = lv.coeffs(2 * e + 1, col);
      if (dir_of(b) == 0) {
        F(j) = p;
        Fp(j) = qq;
      } else {
        F(j) = tr[e].c * p + tr[e].s * qq;
        Fp(j) = -(tr[e].cp * p + tr[e].sp * qq);
      }
    }
    const auto& bm = q.boundary(v);
    const double scale = std::max(1.0, F.norm() + Fp.norm());
    worst = std::max(worst, (bm.A1 * F + bm.A2 * Fp).norm() / scale);
  }
  return worst;
}

/// Normalized counting measure of the spectrum.
class EmpiricalMeasure {
 public:
  EmpiricalMeasure(const SpectralData& sd, double total_length) : sd_(&sd), L_(total_length) {}

  double evaluate(const TestFunction& chi) const {
    if (chi.hi > sd_->lambda_max * (1 + 1e-12)) throw ValidationError("test function support exceeds computed range");
    double s = 0.0;
    for (const auto& l : sd_->levels) s += l.multiplicity * chi(l.lambda);
    return s / L_;
  }
  /// Mass of [0, lambda].
  double mass_up_to(double lambda) const {
    double s = 0.0;
    for (const auto& l : sd_->levels)
      if (l.lambda >= 0.0 && l.lambda <= lambda) s += l.multiplicity;
    return s / L_;
  }
  /// Histogram masses over consecutive bins [edges[i], edges[i+1]).
  std::vector<double> histogram(const std::vector<double>& edges) const {
    std::vector<double> m(edges.size() > 0 ? edges.size() - 1 : 0, 0.0);
    for (const auto& l : sd_->levels)
      for (std::size_t i = 0; i + 1 < edges.size(); ++i)
        if (l.lambda >= edges[i] && l.lambda < edges[i + 1]) m[i] += l.multiplicity / L_;
    return m;
  }
  double total_length() const { return L_; }

 private:
  const SpectralData* sd_;
  double L_;
};

inline EmpiricalMeasure empirical_measure(const SpectralData& sd, double total_length) {
  return EmpiricalMeasure(sd, total_length);
}

/// chi(H)(x, y) by the eigen-expansion over levels inside supp chi.
inline cplx functional_calculus_kernel(const QuantumGraph& q, const SpectralData& sd, const TestFunction& chi, Point x,
                                       Point y) {
  if (!sd.has_eigenfunctions) throw ValidationError("functional_calculus_kernel: eigenfunctions not computed");
  if (chi.hi > sd.lambda_max * (1 + 1e-12)) throw ValidationError("test function support exceeds computed range");
  for (Point p : {x, y})
    if (!(p.x > 0.0 && p.x < q.length(p.bond))) throw ValidationError("kernel point must lie inside an edge");
  cplx s{0.0};
  for (const auto& lv : sd.levels) {
    const double w = chi(lv.lambda);
    if (w == 0.0) continue;
    for (int c = 0; c < lv.multiplicity; ++c)
      s += w * eigenfunction_value(q, lv, c, x) * std::conj(eigenfunction_value(q, lv, c, y));
  }
  return s;
}

inline double functional_calculus_kernel(const QuantumGraph& q, const SpectralData& sd, const TestFunction& chi,
                                         Point x) {
  return functional_calculus_kernel(q, sd, chi, x, x).real();
}

}  // namespace qgs
