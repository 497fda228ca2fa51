#pragma once

#include "qgs/common.hpp"
#include "qgs/graph_core.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <functional>
#include <limits>
#include <memory>
#include <random>

namespace qgs {

/// Combinatorial k-ball around the root vertex of Q^{x0}.
struct RootedBall {
  int radius = 0;
  std::shared_ptr<const QuantumGraph> graph;  ///< Q^{x0}
  int root = 0;
  Ball ball;  ///< local vertex 0 is the root, BFS order
};

inline RootedBall rooted_ball(const RootedQuantumGraph& rq, int k) {
  RootedBall rb;
  rb.radius = k;
  RootExpansion rx = add_root_vertex(rq);
  rb.root = rx.root_vertex;
  rb.graph = std::make_shared<const QuantumGraph>(std::move(rx.graph));
  rb.ball = combinatorial_ball(rb.graph->graph(), rb.root, k);
  return rb;
}

/// Local vertex of the first ball -> local vertex of the second.
using BallMap = std::vector<int>;

struct IsoOptions {
  bool strict_beta = false;  ///< check the bond labelling at every vertex
};

/// sup over t in [0,1] of |W_a(t L_a) - W_b(t L_b)|; exact for piecewise-linear data.
inline double potential_distance(const EdgeData& a, const EdgeData& b) {
  std::vector<double> ts{0.0, 1.0};
  for (double x : a.breakpoints(0)) ts.push_back(x / a.length());
  for (double x : b.breakpoints(0)) ts.push_back(x / b.length());
  double m = 0.0;
  for (double t : ts) m = std::max(m, std::abs(a.potential(0, t * a.length()) - b.potential(0, t * b.length())));
  return m;
}

namespace detail {

inline constexpr double infeasible = -1.0;

class BallMatcher {
 public:
  using Visit = std::function<bool(const BallMap&, double)>;

  BallMatcher(const RootedBall& a, const RootedBall& b, IsoOptions opt) : A_(a), B_(b), opt_(opt) {
    const auto& ga = A_.ball.graph;
    n_ = ga.vertex_count();
    parent_.assign(n_, -1);
    for (int v = 1; v < n_; ++v)
      for (int bd : ga.out_bonds(v))
        if (A_.ball.depth[ga.terminus(bd)] + 1 == A_.ball.depth[v]) {
          parent_[v] = ga.terminus(bd);
          break;
        }
    check_.resize(n_);
    for (int v = 0; v < n_; ++v)
      check_[v] = opt_.strict_beta || !is_permutation_invariant(QA().U(A_.ball.vertex_map[v]));
  }

  bool shapes_match() const {
    return A_.ball.graph.vertex_count() == B_.ball.graph.vertex_count() &&
           A_.ball.graph.edge_count() == B_.ball.graph.edge_count();
  }

  /// Visits complete maps with data distance <= bound; the callback may
  /// lower bound. Returning false stops the search.
  void search(double& bound, const Visit& visit) {
    if (!shapes_match()) return;
    const double c0 = vertex_cost(0, 0);
    if (c0 == infeasible || c0 > bound) return;
    BallMap phi(n_, -1);
    std::vector<char> used(n_, 0);
    phi[0] = 0;
    used[0] = 1;
    bool stop = false;
    recurse(1, phi, used, c0, bound, visit, stop);
  }

  /// Data distance of a complete map, +inf if it is not admissible.
  double distance(const BallMap& phi) const {
    const double inf = std::numeric_limits<double>::infinity();
    if (!shapes_match() || static_cast<int>(phi.size()) != n_) return inf;
    const auto& ga = A_.ball.graph;
    const auto& gb = B_.ball.graph;
    double d = 0.0;
    for (int v = 0; v < n_; ++v) {
      const double c = vertex_cost(v, phi[v]);
      if (c == infeasible) return inf;
      d = std::max(d, c);
    }
    for (int e = 0; e < ga.edge_count(); ++e) {
      auto [u, w] = ga.edge(e);
      const double c = edge_cost(bond_of(e, 0), phi[u], phi[w]);
      if (c == infeasible) return inf;
      d = std::max(d, c);
    }
    for (int u = 0; u < n_; ++u)
      for (int w = u + 1; w < n_; ++w)
        if (!ga.bond_between(u, w) && gb.bond_between(phi[u], phi[w])) return inf;
    return d;
  }

 private:
  const QuantumGraph& QA() const { return *A_.graph; }
  const QuantumGraph& QB() const { return *B_.graph; }

  double vertex_cost(int va, int vb) const {
    const int pa = A_.ball.vertex_map[va], pb = B_.ball.vertex_map[vb];
    if (A_.ball.depth[va] != B_.ball.depth[vb]) return infeasible;
    if (A_.ball.graph.degree(va) != B_.ball.graph.degree(vb)) return infeasible;
    if (QA().degree(pa) != QB().degree(pb)) return infeasible;
    return op_norm(QA().U(pa) - QB().U(pb));
  }

  // local bond ba of A (u -> w) against the B bond ub -> wb
  double edge_cost(int ba, int ub, int wb) const {
    const auto bb = B_.ball.graph.bond_between(ub, wb);
    if (!bb) return infeasible;
    const int ea = A_.ball.edge_map[edge_of(ba)], eb = B_.ball.edge_map[edge_of(*bb)];
    const int pa = bond_of(ea, dir_of(ba)), pb = bond_of(eb, dir_of(*bb));
    const int u = A_.ball.graph.origin(ba), w = A_.ball.graph.terminus(ba);
    if (check_[u] && QA().beta_position(pa) != QB().beta_position(pb)) return infeasible;
    if (check_[w] && QA().beta_position(reverse_bond(pa)) != QB().beta_position(reverse_bond(pb))) return infeasible;
    const EdgeData da = QA().edge(ea).bond_view(dir_of(ba));
    const EdgeData db = QB().edge(eb).bond_view(dir_of(*bb));
    return std::max(std::abs(da.length() - db.length()), potential_distance(da, db));
  }

  void recurse(int v, BallMap& phi, std::vector<char>& used, double cur, double& bound, const Visit& visit,
               bool& stop) {
    if (v == n_) {
      if (!visit(phi, cur)) stop = true;
      return;
    }
    const auto& ga = A_.ball.graph;
    const auto& gb = B_.ball.graph;
    for (int bd : gb.out_bonds(phi[parent_[v]])) {
      const int cand = gb.terminus(bd);
      if (used[cand]) continue;
      const double c = vertex_cost(v, cand);
      if (c == infeasible) continue;
      double nc = std::max(cur, c);
      bool ok = nc <= bound;
      for (int u = 0; u < v && ok; ++u) {
        const auto ab = ga.bond_between(v, u);
        const bool b_adj = gb.bond_between(cand, phi[u]).has_value();
        if (!ab) {
          ok = !b_adj;
          continue;
        }
        const double ec = edge_cost(*ab, cand, phi[u]);
        if (ec == infeasible) ok = false;
        else nc = std::max(nc, ec);
        ok = ok && nc <= bound;
      }
      if (!ok) continue;
      phi[v] = cand;
      used[cand] = 1;
      recurse(v + 1, phi, used, nc, bound, visit, stop);
      phi[v] = -1;
      used[cand] = 0;
      if (stop) return;
    }
  }

  const RootedBall& A_;
  const RootedBall& B_;
  IsoOptions opt_;
  int n_ = 0;
  std::vector<int> parent_;
  std::vector<char> check_;
};

}  // namespace detail

/// Root-preserving isomorphisms of the two balls that respect the data layout.
inline std::vector<BallMap> ball_isomorphisms(const RootedBall& a, const RootedBall& b, const IsoOptions& opt = {}) {
  if (a.radius != b.radius) throw ValidationError("ball_isomorphisms: radii differ");
  std::vector<BallMap> out;
  detail::BallMatcher m(a, b, opt);
  double bound = std::numeric_limits<double>::infinity();
  m.search(bound, [&](const BallMap& phi, double) {
    out.push_back(phi);
    return true;
  });
  return out;
}

inline double data_distance(const BallMap& phi, const RootedBall& a, const RootedBall& b,
                            const IsoOptions& opt = {}) {
  return detail::BallMatcher(a, b, opt).distance(phi);
}

struct MatchResult {
  bool isomorphic = false;
  double delta = std::numeric_limits<double>::infinity();
  BallMap witness;
};

/// Minimum data distance over admissible isomorphisms, by branch and bound.
inline MatchResult best_match(const RootedBall& a, const RootedBall& b, const IsoOptions& opt = {}) {
  MatchResult r;
  detail::BallMatcher m(a, b, opt);
  double bound = std::numeric_limits<double>::infinity();
  m.search(bound, [&](const BallMap& phi, double d) {
    if (!r.isomorphic || d < r.delta) {
      r.isomorphic = true;
      r.delta = d;
      r.witness = phi;
      bound = std::nextafter(d, -1.0);
    }
    return d > 0.0;
  });
  return r;
}

struct RadiusReport {
  int k = 0;
  bool isomorphic = false;
  double delta = std::numeric_limits<double>::infinity();
  double value = 0.0;  ///< contribution to alpha, 0 when infeasible
  BallMap witness;
};

/// d = 1 / (1 + alpha). If every radius up to K_max saturates, only the
/// interval [d_lower, d_upper] is known.
struct DistanceReport {
  std::vector<RadiusReport> radii;
  double alpha_lower = 0.0;
  double alpha_upper = 0.0;
  bool truncated = false;
  double d_lower = 1.0;
  double d_upper = 1.0;
  bool exact() const { return !truncated; }
};

inline DistanceReport bs_distance(const RootedQuantumGraph& a, const RootedQuantumGraph& b, int k_max,
                                  const IsoOptions& opt = {}) {
  if (k_max < 1) throw ValidationError("bs_distance: K_max must be >= 1");
  DistanceReport rep;
  double alpha = 0.0;
  bool saturated = false;
  for (int k = 0; k <= k_max; ++k) {
    const RootedBall ba = rooted_ball(a, k), bb = rooted_ball(b, k);
    const MatchResult mr = best_match(ba, bb, opt);
    RadiusReport rr{k, mr.isomorphic, mr.delta, 0.0, mr.witness};
    const double inv = mr.delta > 0.0 ? 1.0 / mr.delta : std::numeric_limits<double>::infinity();
    const bool feasible = mr.isomorphic && (k == 0 || mr.delta < 1.0 / k);
    if (feasible) rr.value = k == 0 ? std::min(1.0, inv) : std::min<double>(k + 1, inv);
    rep.radii.push_back(rr);
    saturated = feasible && rr.value == k + 1;
    if (!feasible) break;
    alpha = std::max(alpha, rr.value);
    if (!saturated) break;
  }
  rep.alpha_lower = alpha;
  rep.truncated = saturated && static_cast<int>(rep.radii.size()) == k_max + 1;
  rep.alpha_upper = rep.truncated ? std::numeric_limits<double>::infinity() : alpha;
  rep.d_upper = 1.0 / (1.0 + alpha);
  rep.d_lower = rep.truncated ? 0.0 : rep.d_upper;
  return rep;
}

/// Root drawn from the normalized length measure.
inline RootedQuantumGraph sample_root(const QuantumGraph& q, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, q.total_length());
  for (;;) {
    double s = u(rng);
    int e = 0;
    while (e + 1 < q.edge_count() && s >= q.edge_length(e)) s -= q.edge_length(e++);
    if (s > 0.0 && s < q.edge_length(e)) return RootedQuantumGraph(q, bond_of(e, 0), s);
  }
}

/// Real functional of a rooted graph, evaluated at a root point.
using RootFunctional = std::function<double(const QuantumGraph&, Point)>;

/// Both sides of the re-rooting identity for the uniform root: the bond
/// average of F, and the average after resampling the root uniformly in the
/// star of bonds that share its origin.
inline std::pair<double, double> reroot_average_check(const QuantumGraph& q, const RootFunctional& F,
                                                      int panels = 4) {
  if (panels < 1) throw ValidationError("reroot_average_check: panels must be >= 1");
  using Rule = boost::math::quadrature::gauss<double, 20>;
  std::vector<double> nodes, weights;
  const auto& xs = Rule::abscissa();
  const auto& ws = Rule::weights();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    nodes.push_back(xs[i]);
    weights.push_back(ws[i]);
    if (xs[i] != 0.0) {
      nodes.push_back(-xs[i]);
      weights.push_back(ws[i]);
    }
  }
  const int nb = q.bond_count();
  std::vector<double> integral(nb, 0.0);
  parallel_for(nb, [&](std::size_t bi) {
    const int b = static_cast<int>(bi);
    const double L = q.length(b);
    double s = 0.0;
    for (int p = 0; p < panels; ++p) {
      const double lo = L * p / panels, hi = L * (p + 1) / panels;
      for (std::size_t i = 0; i < nodes.size(); ++i)
        s += 0.5 * (hi - lo) * weights[i] * F(q, Point{b, 0.5 * (lo + hi) + 0.5 * (hi - lo) * nodes[i]});
    }
    integral[b] = s;
  });
  const double two_l = 2.0 * q.total_length();
  double lhs = 0.0, rhs = 0.0;
  for (int b = 0; b < nb; ++b) lhs += integral[b];
  for (int b0 = 0; b0 < nb; ++b0) {
    double star_len = 0.0, star_int = 0.0;
    for (int b : q.graph().out_bonds(q.origin(b0))) {
      star_len += q.length(b);
      star_int += integral[b];
    }
    rhs += q.length(b0) * star_int / star_len;
  }
  return {lhs / two_l, rhs / two_l};
}

}  // namespace qgs
