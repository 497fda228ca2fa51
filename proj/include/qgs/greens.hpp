#pragma once

#include "qgs/common.hpp"
#include "qgs/edge_solver.hpp"
#include "qgs/graph_core.hpp"
#include "qgs/spectral.hpp"

#include <Eigen/LU>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <memory>

namespace qgs {

inline constexpr double vertex_condition_guard = 1e12;

/// Bond-indexed evolution data at a spectral parameter with Im z > 0.
struct EvolutionSystem {
  cplx z, k;
  CMat S;
  CVec D;  ///< diagonal of D(z): E_b(L_b)
  std::vector<CMat> sigma;     ///< per vertex, in beta order
  std::vector<CMat> delta;     ///< per vertex, diagonal Delta^v
  std::vector<CMat> inv_left;  ///< per vertex, (A1 - i k A2)^{-1}
  std::vector<double> condition;
  EdgeSolutionTable table;

  CMat SD() const { return S * D.asDiagonal(); }
};

namespace detail {

inline void place_sigma(const QuantumGraph& q, EvolutionSystem& ev) {
  const int nb = q.bond_count();
  ev.S = CMat::Zero(nb, nb);
  for (int v = 0; v < q.vertex_count(); ++v) {
    const auto& beta = q.beta(v);
    for (std::size_t i = 0; i < beta.size(); ++i)
      for (std::size_t j = 0; j < beta.size(); ++j) ev.S(beta[i], reverse_bond(beta[j])) = ev.sigma[v](i, j);
  }
}

inline CMat guarded_inverse(const CMat& m, double& cond) {
  Eigen::JacobiSVD<CMat> svd(m);
  const auto sv = svd.singularValues();
  cond = sv(0) / sv(sv.size() - 1);
  if (!(cond < vertex_condition_guard)) throw NumericalError("evolution_operator: vertex matrix condition number exceeds guard");
  return m.fullPivLu().inverse();
}

}  // namespace detail

/// Theta(k) = (A1 - i k A2)^{-1} (A1 + i k A2).
inline CMat theta_matrix(const BoundaryMatrices& bm, cplx k) {
  return (bm.A1 - I_unit * k * bm.A2).fullPivLu().solve(bm.A1 + I_unit * k * bm.A2);
}

inline EvolutionSystem evolution_operator(const QuantumGraph& q, cplx z) {
  if (!(z.imag() > 0.0)) throw ValidationError("evolution_operator: need Im z > 0");
  EvolutionSystem ev;
  ev.z = z;
  ev.k = sqrt_upper(z);
  ev.table = solve_all(q, z);
  ev.D = CVec(q.bond_count());
  for (int b = 0; b < q.bond_count(); ++b) ev.D(b) = ev.table.bonds[b].E;
  const int nv = q.vertex_count();
  ev.sigma.resize(nv);
  ev.delta.resize(nv);
  ev.inv_left.resize(nv);
  ev.condition.resize(nv);
  for (int v = 0; v < nv; ++v) {
    const auto& bm = q.boundary(v);
    const auto& beta = q.beta(v);
    const int d = q.degree(v);
    CMat Dl = CMat::Zero(d, d);
    for (int i = 0; i < d; ++i) {
      const auto& in = ev.table.bonds[reverse_bond(beta[i])];
      Dl(i, i) = -in.Ep / in.E;
    }
    ev.inv_left[v] = detail::guarded_inverse(bm.A1 - I_unit * ev.k * bm.A2, ev.condition[v]);
    ev.sigma[v] = -ev.inv_left[v] * (bm.A1 + bm.A2 * Dl);
    ev.delta[v] = Dl;
  }
  detail::place_sigma(q, ev);
  return ev;
}

inline bool kirchhoff_free(const QuantumGraph& q) {
  for (int v = 0; v < q.vertex_count(); ++v)
    if ((q.U(v) - kirchhoff_unitary(q.degree(v))).norm() > 1e-14) return false;
  for (int e = 0; e < q.edge_count(); ++e)
    if (!q.edge(e).is_constant() || q.edge(e).potential(0, 0.0) != 0.0) return false;
  return true;
}

/// Kirchhoff vertices and W = 0: sigma^v = U_v for every z and D = exp(-i k L).
inline EvolutionSystem kirchhoff_evolution_operator(const QuantumGraph& q, cplx z) {
  if (!(z.imag() > 0.0)) throw ValidationError("evolution_operator: need Im z > 0");
  if (!kirchhoff_free(q)) throw ValidationError("kirchhoff fast path needs Kirchhoff vertices and zero potential");
  EvolutionSystem ev;
  ev.z = z;
  ev.k = sqrt_upper(z);
  ev.D = CVec(q.bond_count());
  for (int b = 0; b < q.bond_count(); ++b) ev.D(b) = std::exp(-I_unit * ev.k * q.length(b));
  const int nv = q.vertex_count();
  ev.sigma.resize(nv);
  ev.delta.resize(nv);
  ev.inv_left.resize(nv);
  ev.condition.assign(nv, 1.0);
  for (int v = 0; v < nv; ++v) {
    const int d = q.degree(v);
    ev.sigma[v] = q.U(v);
    ev.delta[v] = I_unit * ev.k * CMat::Identity(d, d);
    // (A1 - i k A2)^{-1} = P_1 / (-2ik) + (Id - P_1) / (-2i), P_1 the projection on constants
    const CMat P1 = CMat::Constant(d, d, cplx(1.0 / d));
    ev.inv_left[v] = P1 / (-2.0 * I_unit * ev.k) + (CMat::Identity(d, d) - P1) / (-2.0 * I_unit);
  }
  detail::place_sigma(q, ev);
  return ev;
}

/// Source vector for a vertex inhomogeneity A1 F + A2 F' = r at vertex v.
inline CVec vertex_source(const QuantumGraph& q, const EvolutionSystem& ev, int v, const CVec& r) {
  CVec xi = CVec::Zero(q.bond_count());
  const CVec local = ev.inv_left[v] * r;
  const auto& beta = q.beta(v);
  for (std::size_t i = 0; i < beta.size(); ++i) xi(beta[i]) = local(i);
  return xi;
}

/// Operator norm of (S D)^{-1}.
inline double inverse_evolution_norm(const EvolutionSystem& ev) {
  const CMat T = ev.SD();
  Eigen::FullPivLU<CMat> lu(T);
  if (!lu.isInvertible()) return std::numeric_limits<double>::infinity();
  return op_norm(lu.inverse());
}

enum class GreenMethod { direct, neumann_series };

/// Solves (Id - S D) a = xi.
inline CVec solve_coefficients(const EvolutionSystem& ev, const CVec& xi, GreenMethod method = GreenMethod::direct) {
  const CMat T = ev.SD();
  const int n = static_cast<int>(T.rows());
  if (method == GreenMethod::direct) {
    Eigen::FullPivLU<CMat> lu(CMat::Identity(n, n) - T);
    if (!lu.isInvertible()) throw NumericalError("green: Id - S D is singular");
    return lu.solve(xi);
  }
  Eigen::FullPivLU<CMat> lu(T);
  if (!lu.isInvertible()) throw NumericalError("green: S D is singular");
  const CMat Tinv = lu.inverse();
  if (!(op_norm(Tinv) < 0.5)) throw ValidationError("neumann series requested outside the contraction regime");
  CVec term = xi, sum = CVec::Zero(n);
  for (int it = 0; it < 10000; ++it) {
    term = Tinv * term;
    sum -= term;
    if (term.norm() < 1e-14) return sum;
  }
  throw NumericalError("green: neumann series did not converge");
}

/// Green's function with the source variable y restricted to one edge, via the
/// midpoint construction on that edge.
class GreenEvaluation {
 public:
  GreenEvaluation(const QuantumGraph& q, int edge, cplx z, GreenMethod method = GreenMethod::direct,
                  bool kirchhoff_fast = false)
      : q_(&q), edge_(edge), z_(z) {
    if (!(z.imag() > 0.0)) throw ValidationError("GreenEvaluation: need Im z > 0");
    L_ = q.edge_length(edge);
    rx_ = add_root_vertex(q, bond_of(edge, 0), 0.5 * L_);
    ev_ = kirchhoff_fast ? kirchhoff_evolution_operator(rx_.graph, z) : evolution_operator(rx_.graph, z);
    const int v1 = rx_.root_vertex;
    delta_xi_ = vertex_source(rx_.graph, ev_, v1, CVec::Constant(2, cplx(-1.0)));
    CVec r(2);
    r << I_unit, -I_unit;
    dipole_xi_ = vertex_source(rx_.graph, ev_, v1, r);
    if (method == GreenMethod::direct) {
      const CMat T = ev_.SD();
      Eigen::FullPivLU<CMat> lu(CMat::Identity(T.rows(), T.cols()) - T);
      if (!lu.isInvertible()) throw NumericalError("green: Id - S D is singular");
      a_delta_ = lu.solve(delta_xi_);
      a_dipole_ = lu.solve(dipole_xi_);
    } else {
      a_delta_ = solve_coefficients(ev_, delta_xi_, method);
      a_dipole_ = solve_coefficients(ev_, dipole_xi_, method);
    }
    k_ = ev_.k;
  }

  int edge() const { return edge_; }
  cplx z() const { return z_; }
  const RootExpansion& expansion() const { return rx_; }
  const EvolutionSystem& system() const { return ev_; }
  const CVec& delta_coefficients() const { return a_delta_; }
  const CVec& dipole_coefficients() const { return a_dipole_; }
  const CVec& delta_source() const { return delta_xi_; }

  /// Value of x -> G(x, midpoint) and its derivative along the bond of x.
  std::pair<cplx, cplx> midpoint_column(Point x) const { return column(a_delta_, x); }

  /// G_z(x, y) with y on this edge; dx / dy select derivatives along the
  /// orientation of the respective point's bond.
  cplx value(Point x, Point y, bool dx = false, bool dy = false) const {
    if (edge_of(y.bond) != edge_) throw std::invalid_argument("GreenEvaluation: y must lie on the rooted edge");
    if (dx && dy) throw std::invalid_argument("GreenEvaluation: mixed derivatives are not supported");
    check_interior(x);
    check_interior(y);
    const double sy = canonical(*q_, y).second;
    const double half = 0.5 * L_;
    const double sg = sy >= half ? 1.0 : -1.0;
    const double t = std::abs(sy - half);
    const EdgeData view = travel_view(sg);
    const Transfer T = propagate(view, z_, 0.0, t);
    auto [w, wx] = column(a_delta_, x);
    auto [u, ux] = column(a_dipole_, x);
    cplx g, gx, gy;
    g = T.c * w + sg * T.s * u;
    gx = T.c * wx + sg * T.s * ux;
    gy = sg * (T.cp * w + sg * T.sp * u);
    if (edge_of(x.bond) == edge_) {
      const double sx = canonical(*q_, x).second;
      const double tx = std::abs(sx - half);
      const bool same_side = (sx >= half) == (sy >= half) && sx != half;
      if (same_side && tx < t) {
        const Transfer Tc = propagate(view, z_, tx, t);
        g -= Tc.s;
        gy -= sg * Tc.sp;
        // d/dx of the solution started at x is minus the cosine solution
        gx += (dir_of(x.bond) ? -1.0 : 1.0) * sg * Tc.c;
      }
    }
    if (dy) return dir_of(y.bond) ? -gy : gy;
    if (dx) return gx;
    return g;
  }

 private:
  void check_interior(Point p) const {
    if (!(p.x > 0.0 && p.x < q_->length(p.bond))) throw ValidationError("green: evaluation point must be inside an edge");
  }

  // view of the rooted edge starting at the midpoint and heading to t (sg > 0) or o
  EdgeData travel_view(double sg) const {
    const EdgeData& ed = q_->edge(edge_);
    return sg > 0 ? ed.restricted(0.5 * L_, L_) : ed.restricted(0.0, 0.5 * L_).reversed();
  }

  // coefficient expansion on Q^{x1}; derivative is along the bond of x
  std::pair<cplx, cplx> column(const CVec& a, Point x) const {
    auto [e, s] = canonical(*q_, x);
    int e2 = e;
    if (e == edge_ && s >= 0.5 * L_) {
      e2 = rx_.second_edge;
      s -= 0.5 * L_;
    }
    const QuantumGraph& g = rx_.graph;
    const EdgeData& ed = g.edge(e2);
    const double L = ed.length();
    const int b = bond_of(e2, 0), rb = bond_of(e2, 1);
    const Transfer f = propagate(ed, z_, 0.0, s);
    const Transfer r = propagate(ed.reversed(), z_, 0.0, L - s);
    const cplx Ef = f.c - I_unit * k_ * f.s, Efp = f.cp - I_unit * k_ * f.sp;
    const cplx Er = r.c - I_unit * k_ * r.s, Erp = r.cp - I_unit * k_ * r.sp;
    const cplx val = a(b) * Ef + a(rb) * Er;
    const cplx der = a(b) * Efp - a(rb) * Erp;
    return {val, dir_of(x.bond) ? -der : der};
  }

  const QuantumGraph* q_;
  int edge_;
  cplx z_, k_;
  double L_ = 0.0;
  RootExpansion rx_;
  EvolutionSystem ev_;
  CVec delta_xi_, dipole_xi_, a_delta_, a_dipole_;
};

/// G_z on the whole graph, any z off the real axis. The lower half-plane is
/// obtained from G_z(x, y) = conj(G_{conj z}(y, x)).
class GreenFunction {
 public:
  GreenFunction(const QuantumGraph& q, cplx z, GreenMethod method = GreenMethod::direct, bool kirchhoff_fast = false)
      : q_(&q), z_(z) {
    if (z.imag() == 0.0) throw ValidationError("green: z must be off the real axis");
    conj_ = z.imag() < 0.0;
    const cplx zu = conj_ ? std::conj(z) : z;
    per_edge_.resize(q.edge_count());
    parallel_for(q.edge_count(), [&](std::size_t e) {
      per_edge_[e] = std::make_shared<GreenEvaluation>(q, static_cast<int>(e), zu, method, kirchhoff_fast);
    });
  }

  cplx z() const { return z_; }
  const GreenEvaluation& on_edge(int e) const { return *per_edge_[e]; }

  cplx operator()(Point x, Point y, bool dx = false, bool dy = false) const {
    if (!conj_) return per_edge_[edge_of(y.bond)]->value(x, y, dx, dy);
    return std::conj(per_edge_[edge_of(x.bond)]->value(y, x, dy, dx));
  }

 private:
  const QuantumGraph* q_;
  cplx z_;
  bool conj_ = false;
  std::vector<std::shared_ptr<GreenEvaluation>> per_edge_;
};

/// Coefficients of the midpoint problem on the root edge.
inline CVec green_coefficients(const RootedQuantumGraph& rq, cplx z, GreenMethod method = GreenMethod::direct) {
  GreenEvaluation ge(rq.base, edge_of(rq.root_bond), z, method);
  return ge.delta_coefficients();
}

inline cplx green_pointwise(const GreenFunction& g, Point x, Point y, bool dx = false, bool dy = false) {
  return g(x, y, dx, dy);
}

/// Integral of G_z(x, x) over the graph.
inline cplx resolvent_trace(const QuantumGraph& q, cplx z, double tol = 1e-10) {
  GreenFunction g(q, z);
  using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
  std::vector<cplx> parts(q.edge_count());
  parallel_for(q.edge_count(), [&](std::size_t e) {
    const int b = bond_of(static_cast<int>(e), 0);
    const double L = q.edge_length(static_cast<int>(e));
    std::vector<double> xs{0.0};
    for (double x : q.edge(static_cast<int>(e)).breakpoints(0)) xs.push_back(x);
    xs.push_back(L);
    if (std::find(xs.begin(), xs.end(), 0.5 * L) == xs.end()) xs.push_back(0.5 * L);
    std::sort(xs.begin(), xs.end());
    cplx s{0.0};
    for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
      auto f = [&](double x) {
        const Point p{b, x};
        return g(p, p);
      };
      s += GK::integrate(f, xs[i], xs[i + 1], 10, tol);
    }
    parts[e] = s;
  });
  cplx total{0.0};
  for (auto& p : parts) total += p;
  return total;
}

/// (1 / (pi L)) Im Tr (H - lambda - i eps)^{-1} on a grid of lambda.
inline std::vector<double> smoothed_spectral_density(const QuantumGraph& q, const std::vector<double>& lambdas,
                                                     double eps) {
  if (!(eps > 0.0)) throw ValidationError("smoothed_spectral_density: eps must be positive");
  std::vector<double> out(lambdas.size());
  const double L = q.total_length();
  for (std::size_t i = 0; i < lambdas.size(); ++i)
    out[i] = resolvent_trace(q, cplx(lambdas[i], eps)).imag() / (pi * L);
  return out;
}

/// (1/pi) * integral of chi(lambda) Im G_{lambda + i eps}(x, x) over supp chi.
inline double smoothed_kernel(const QuantumGraph& q, const TestFunction& chi, Point x, double eps) {
  using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
  auto f = [&](double lam) {
    const int e = edge_of(x.bond);
    GreenEvaluation ge(q, e, cplx(lam, eps));
    return chi(lam) * ge.value(x, x).imag();
  };
  // split so the adaptive rule sees Lorentzian peaks of width eps
  const int pieces = std::max(1, static_cast<int>(std::ceil((chi.hi - chi.lo) / (20 * eps))));
  std::vector<double> parts(pieces);
  parallel_for(pieces, [&](std::size_t i) {
    const double a = chi.lo + (chi.hi - chi.lo) * i / pieces, b = chi.lo + (chi.hi - chi.lo) * (i + 1) / pieces;
    parts[i] = GK::integrate(f, a, b, 8, 1e-9);
  });
  double s = 0.0;
  for (double p : parts) s += p;
  return s / pi;
}

}  // namespace qgs
