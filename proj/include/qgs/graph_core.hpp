#pragma once

#include "qgs/common.hpp"
#include "qgs/vertex_conditions.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <queue>
#include <set>
#include <sstream>
#include <utility>

namespace qgs {

/// Bonds are indexed 2*e + dir; dir 0 follows the stored orientation of edge e.
inline int bond_of(int edge, int dir) { return 2 * edge + dir; }
inline int edge_of(int bond) { return bond >> 1; }
inline int dir_of(int bond) { return bond & 1; }
inline int reverse_bond(int bond) { return bond ^ 1; }

class CombinatorialGraph {
 public:
  CombinatorialGraph() = default;

  CombinatorialGraph(int n, std::vector<std::pair<int, int>> edges) : n_(n), edges_(std::move(edges)) {
    if (n_ < 1) throw ValidationError("graph: vertex count must be >= 1");
    std::set<std::pair<int, int>> seen;
    for (std::size_t e = 0; e < edges_.size(); ++e) {
      auto [u, v] = edges_[e];
      if (u < 0 || v < 0 || u >= n_ || v >= n_) {
        throw ValidationError("edge " + std::to_string(e) + ": vertex id out of range");
      }
      if (u == v) throw ValidationError("edge " + std::to_string(e) + ": self-loop at vertex " + std::to_string(u));
      if (!seen.insert({std::min(u, v), std::max(u, v)}).second) {
        throw ValidationError("edge " + std::to_string(e) + ": multi-edge between " + std::to_string(u) + " and " +
                              std::to_string(v));
      }
    }
    out_.assign(n_, {});
    for (int e = 0; e < edge_count(); ++e) {
      out_[edges_[e].first].push_back(bond_of(e, 0));
      out_[edges_[e].second].push_back(bond_of(e, 1));
    }
  }

  int vertex_count() const { return n_; }
  int edge_count() const { return static_cast<int>(edges_.size()); }
  int bond_count() const { return 2 * edge_count(); }
  std::pair<int, int> edge(int e) const { return edges_[e]; }
  const std::vector<std::pair<int, int>>& edges() const { return edges_; }

  int origin(int b) const { return dir_of(b) ? edges_[edge_of(b)].second : edges_[edge_of(b)].first; }
  int terminus(int b) const { return origin(reverse_bond(b)); }
  int degree(int v) const { return static_cast<int>(out_[v].size()); }
  /// Outgoing bonds of v, ordered by edge id.
  const std::vector<int>& out_bonds(int v) const { return out_[v]; }

  std::optional<int> bond_between(int u, int v) const {
    for (int b : out_[u])
      if (terminus(b) == v) return b;
    return std::nullopt;
  }

  /// BFS distances; unreachable vertices get -1.
  std::vector<int> distances_from(int v) const {
    std::vector<int> dist(n_, -1);
    std::queue<int> q;
    dist[v] = 0;
    q.push(v);
    while (!q.empty()) {
      int u = q.front();
      q.pop();
      for (int b : out_[u]) {
        int w = terminus(b);
        if (dist[w] < 0) {
          dist[w] = dist[u] + 1;
          q.push(w);
        }
      }
    }
    return dist;
  }

  bool connected() const {
    auto d = distances_from(0);
    return std::none_of(d.begin(), d.end(), [](int x) { return x < 0; });
  }

 private:
  int n_ = 0;
  std::vector<std::pair<int, int>> edges_;
  std::vector<std::vector<int>> out_;
};

/// Induced subgraph on a combinatorial ball. Local vertex 0 is the centre;
/// vertices are listed in BFS order.
struct Ball {
  CombinatorialGraph graph;
  std::vector<int> vertex_map;  ///< local vertex -> parent vertex
  std::vector<int> edge_map;    ///< local edge -> parent edge (same orientation)
  std::vector<int> depth;       ///< distance from the centre
};

inline Ball combinatorial_ball(const CombinatorialGraph& g, int v, int r) {
  if (r < 0) throw ValidationError("combinatorial_ball: radius must be >= 0");
  std::vector<int> dist(g.vertex_count(), -1);
  std::vector<int> order{v};
  dist[v] = 0;
  for (std::size_t h = 0; h < order.size(); ++h) {
    int u = order[h];
    if (dist[u] == r) continue;
    for (int b : g.out_bonds(u)) {
      int w = g.terminus(b);
      if (dist[w] < 0) {
        dist[w] = dist[u] + 1;
        order.push_back(w);
      }
    }
  }
  std::vector<int> local(g.vertex_count(), -1);
  for (std::size_t i = 0; i < order.size(); ++i) local[order[i]] = static_cast<int>(i);
  Ball ball;
  std::vector<std::pair<int, int>> edges;
  for (int e = 0; e < g.edge_count(); ++e) {
    auto [a, b] = g.edge(e);
    if (local[a] >= 0 && local[b] >= 0) {
      edges.emplace_back(local[a], local[b]);
      ball.edge_map.push_back(e);
    }
  }
  ball.graph = CombinatorialGraph(static_cast<int>(order.size()), std::move(edges));
  ball.vertex_map = order;
  for (int u : order) ball.depth.push_back(dist[u]);
  return ball;
}

/// Edge length plus a piecewise-linear potential on a uniform grid.
///
/// The sample array is shared; an edge covers the window [t0, t1] of the
/// array's unit parameter, so restrictions and reversals are views.
class EdgeData {
 public:
  EdgeData() = default;

  explicit EdgeData(double length, std::vector<double> samples = {}) : length_(length) {
    if (samples.empty()) samples = {0.0, 0.0};
    if (samples.size() == 1) samples.push_back(samples.front());
    w_ = std::make_shared<const std::vector<double>>(std::move(samples));
  }

  double length() const { return length_; }
  int sample_count() const { return static_cast<int>(w_->size()); }
  bool full_window() const { return t0_ == 0.0 && t1_ == 1.0; }

  /// W_b(x) for the bond in direction dir, 0 <= x <= L.
  double potential(int dir, double x) const {
    double u = x / length_;
    if (dir) u = 1.0 - u;
    return eval_param(t0_ + (t1_ - t0_) * u);
  }

  /// Value at grid node i of the bond in direction dir. Reversal is an index
  /// reflection, so potential_node(1, i) == potential_node(0, n-1-i) exactly.
  double potential_node(int dir, int i) const {
    if (!full_window()) throw std::logic_error("potential_node: only defined on unrestricted edges");
    const int n = sample_count();
    return (*w_)[dir ? n - 1 - i : i];
  }

  /// Interior kink positions along the bond in direction dir, increasing.
  std::vector<double> breakpoints(int dir) const {
    std::vector<double> xs;
    const int n = sample_count();
    const double lo = std::min(t0_, t1_), hi = std::max(t0_, t1_);
    for (int j = 1; j < n - 1; ++j) {
      double s = static_cast<double>(j) / (n - 1);
      if (s <= lo || s >= hi) continue;
      double u = (s - t0_) / (t1_ - t0_);
      double x = (dir ? 1.0 - u : u) * length_;
      if (x > 1e-14 * length_ && x < length_ * (1 - 1e-14)) xs.push_back(x);
    }
    std::sort(xs.begin(), xs.end());
    return xs;
  }

  bool is_constant() const {
    auto [i0, i1] = index_range();
    for (int i = i0; i <= i1; ++i)
      if ((*w_)[i] != (*w_)[i0]) return false;
    return true;
  }

  double sup_abs() const {
    auto [i0, i1] = index_range();
    double m = std::max(std::abs(potential(0, 0.0)), std::abs(potential(0, length_)));
    for (int i = i0; i <= i1; ++i) m = std::max(m, std::abs((*w_)[i]));
    return m;
  }

  /// Lipschitz constant of the piecewise-linear interpolant.
  double lipschitz() const {
    std::vector<double> xs = breakpoints(0);
    xs.insert(xs.begin(), 0.0);
    xs.push_back(length_);
    double lip = 0.0;
    for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
      double h = xs[i + 1] - xs[i];
      if (h > 0) lip = std::max(lip, std::abs(potential(0, xs[i + 1]) - potential(0, xs[i])) / h);
    }
    return lip;
  }

  /// Edge covering [a, b] of this edge's stored orientation.
  EdgeData restricted(double a, double b) const {
    EdgeData out = *this;
    out.length_ = b - a;
    out.t0_ = t0_ + (t1_ - t0_) * (a / length_);
    out.t1_ = t0_ + (t1_ - t0_) * (b / length_);
    return out;
  }

  /// Same data with the stored orientation flipped.
  EdgeData reversed() const {
    EdgeData out = *this;
    std::swap(out.t0_, out.t1_);
    return out;
  }

  /// Data seen along the bond in direction dir, as an edge of its own.
  EdgeData bond_view(int dir) const { return dir ? reversed() : *this; }

  void set_length(double L) { length_ = L; }

 private:
  double eval_param(double s) const {
    const int n = sample_count();
    double p = s * (n - 1);
    if (p <= 0.0) return (*w_)[0];
    if (p >= n - 1) return (*w_)[n - 1];
    int i = static_cast<int>(p);
    if (i >= n - 1) i = n - 2;
    double f = p - i;
    return (*w_)[i] + f * ((*w_)[i + 1] - (*w_)[i]);
  }

  std::pair<int, int> index_range() const {
    const int n = sample_count();
    const double lo = std::min(t0_, t1_), hi = std::max(t0_, t1_);
    int i0 = std::clamp(static_cast<int>(std::floor(lo * (n - 1) + 1e-12)), 0, n - 1);
    int i1 = std::clamp(static_cast<int>(std::ceil(hi * (n - 1) - 1e-12)), 0, n - 1);
    return {i0, i1};
  }

  double length_ = 1.0;
  std::shared_ptr<const std::vector<double>> w_ = std::make_shared<const std::vector<double>>(2, 0.0);
  double t0_ = 0.0, t1_ = 1.0;
};

enum class ConditionKind { kirchhoff, dirichlet, neumann, delta, matrix };

inline const char* to_string(ConditionKind k) {
  switch (k) {
    case ConditionKind::kirchhoff: return "kirchhoff";
    case ConditionKind::dirichlet: return "dirichlet";
    case ConditionKind::neumann: return "neumann";
    case ConditionKind::delta: return "delta";
    case ConditionKind::matrix: return "matrix";
  }
  return "?";
}

struct VertexCondition {
  ConditionKind kind = ConditionKind::kirchhoff;
  double alpha = 0.0;
  CMat matrix;  ///< only for ConditionKind::matrix
};

inline CMat condition_unitary(const VertexCondition& c, int d) {
  switch (c.kind) {
    case ConditionKind::kirchhoff: return kirchhoff_unitary(d);
    case ConditionKind::dirichlet: return dirichlet_unitary(d);
    case ConditionKind::neumann: return neumann_unitary(d);
    case ConditionKind::delta: return delta_unitary(d, c.alpha);
    case ConditionKind::matrix: return c.matrix;
  }
  return {};
}

struct ValidationBounds {
  int D = std::numeric_limits<int>::max();
  double m = 0.0;
  double M = std::numeric_limits<double>::infinity();
  double M_W = std::numeric_limits<double>::infinity();
  double M_Lambda = std::numeric_limits<double>::infinity();
};

/// Parsed, not yet validated description of a quantum graph.
struct GraphSpec {
  struct Edge {
    int u = 0, v = 0;
    double length = 1.0;
    std::vector<double> potential;
  };
  int vertices = 0;
  std::vector<Edge> edges;
  std::vector<VertexCondition> conditions;     ///< per vertex; missing entries are Kirchhoff
  std::vector<std::vector<int>> beta;          ///< optional: per vertex, neighbour ids in order
};

class QuantumGraph {
 public:
  QuantumGraph() = default;

  const CombinatorialGraph& graph() const { return g_; }
  int vertex_count() const { return g_.vertex_count(); }
  int edge_count() const { return g_.edge_count(); }
  int bond_count() const { return g_.bond_count(); }
  int origin(int b) const { return g_.origin(b); }
  int terminus(int b) const { return g_.terminus(b); }
  int degree(int v) const { return g_.degree(v); }

  const EdgeData& edge(int e) const { return edges_[e]; }
  double length(int bond_or_edge_is_bond) const { return edges_[edge_of(bond_or_edge_is_bond)].length(); }
  double edge_length(int e) const { return edges_[e].length(); }
  const VertexCondition& condition(int v) const { return cond_[v]; }
  const CMat& U(int v) const { return U_[v]; }
  const BoundaryMatrices& boundary(int v) const { return bm_[v]; }
  /// beta^v: outgoing bonds of v in the order used by U_v.
  const std::vector<int>& beta(int v) const { return beta_[v]; }
  /// Position j with beta(origin(b))[j] == b.
  int beta_position(int b) const { return pos_[b]; }

  double total_length() const {
    double s = 0.0;
    for (const auto& e : edges_) s += e.length();
    return s;
  }

  double max_potential() const {
    double m = 0.0;
    for (const auto& e : edges_) m = std::max(m, e.sup_abs());
    return m;
  }

  double max_lambda_norm() const {
    double m = 0.0;
    for (const auto& b : bm_) m = std::max(m, b.lambda_norm);
    return m;
  }

  double min_length() const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& e : edges_) m = std::min(m, e.length());
    return m;
  }

  bool all_potentials_constant() const {
    return std::all_of(edges_.begin(), edges_.end(), [](const EdgeData& e) { return e.is_constant(); });
  }

  /// Assembles and validates. beta entries are bond ids per vertex.
  static QuantumGraph assemble(CombinatorialGraph g, std::vector<EdgeData> edges, std::vector<VertexCondition> cond,
                               std::vector<std::vector<int>> beta, const std::optional<ValidationBounds>& bounds) {
    QuantumGraph q;
    q.g_ = std::move(g);
    q.edges_ = std::move(edges);
    q.cond_ = std::move(cond);
    q.beta_ = std::move(beta);
    const int n = q.g_.vertex_count();
    if (!q.g_.connected()) throw ValidationError("graph is disconnected");
    if (static_cast<int>(q.edges_.size()) != q.g_.edge_count()) throw ValidationError("edge data count mismatch");
    if (static_cast<int>(q.cond_.size()) != n) throw ValidationError("condition count mismatch");
    for (int e = 0; e < q.edge_count(); ++e) {
      double L = q.edges_[e].length();
      if (!(L > 0.0) || !std::isfinite(L)) {
        throw ValidationError("edge " + std::to_string(e) + ": length must be positive, got " + std::to_string(L));
      }
    }
    if (q.beta_.empty()) {
      for (int v = 0; v < n; ++v) q.beta_.push_back(q.g_.out_bonds(v));
    }
    if (static_cast<int>(q.beta_.size()) != n) throw ValidationError("beta must list every vertex");
    q.pos_.assign(q.bond_count(), -1);
    for (int v = 0; v < n; ++v) {
      std::vector<int> a = q.beta_[v], b = q.g_.out_bonds(v);
      std::sort(a.begin(), a.end());
      if (a != b) throw ValidationError("vertex " + std::to_string(v) + ": beta is not a bijection onto outgoing bonds");
      for (std::size_t j = 0; j < q.beta_[v].size(); ++j) q.pos_[q.beta_[v][j]] = static_cast<int>(j);
    }
    q.U_.resize(n);
    q.bm_.resize(n);
    for (int v = 0; v < n; ++v) {
      const int d = q.g_.degree(v);
      CMat U = condition_unitary(q.cond_[v], d);
      if (U.rows() != d || U.cols() != d) {
        throw ValidationError("vertex " + std::to_string(v) + ": condition matrix must be " + std::to_string(d) + "x" +
                              std::to_string(d));
      }
      if (unitarity_defect(U) > 1e-12) throw ValidationError("vertex " + std::to_string(v) + ": non-unitary U_v");
      q.U_[v] = U;
      q.bm_[v] = boundary_matrices(U);
    }
    if (bounds) q.check_bounds(*bounds);
    return q;
  }

  void check_bounds(const ValidationBounds& b) const {
    if (b.D < 1 || !(b.m > 0.0) || b.m > b.M) throw ValidationError("bounds: need D >= 1 and 0 < m <= M");
    for (int v = 0; v < vertex_count(); ++v) {
      if (degree(v) > b.D) throw ValidationError("vertex " + std::to_string(v) + ": degree exceeds D");
      if (bm_[v].lambda_norm > b.M_Lambda) throw ValidationError("vertex " + std::to_string(v) + ": Robin part exceeds bound");
    }
    for (int e = 0; e < edge_count(); ++e) {
      const auto& ed = edges_[e];
      const std::string id = "edge " + std::to_string(e);
      if (ed.length() < b.m || ed.length() > b.M) throw ValidationError(id + ": length outside [m, M]");
      if (ed.sup_abs() > b.M_W) throw ValidationError(id + ": potential sup exceeds bound");
      if (ed.lipschitz() > b.M_W) throw ValidationError(id + ": potential Lipschitz constant exceeds bound");
    }
  }

 private:
  CombinatorialGraph g_;
  std::vector<EdgeData> edges_;
  std::vector<VertexCondition> cond_;
  std::vector<CMat> U_;
  std::vector<BoundaryMatrices> bm_;
  std::vector<std::vector<int>> beta_;
  std::vector<int> pos_;
};

inline QuantumGraph build_quantum_graph(const GraphSpec& spec,
                                        const std::optional<ValidationBounds>& bounds = std::nullopt) {
  std::vector<std::pair<int, int>> pairs;
  std::vector<EdgeData> data;
  for (std::size_t e = 0; e < spec.edges.size(); ++e) {
    const auto& ed = spec.edges[e];
    if (!(ed.length > 0.0) || !std::isfinite(ed.length)) {
      throw ValidationError("edge " + std::to_string(e) + ": length must be positive, got " + std::to_string(ed.length));
    }
    for (double w : ed.potential)
      if (!std::isfinite(w)) throw ValidationError("edge " + std::to_string(e) + ": non-finite potential sample");
    pairs.emplace_back(ed.u, ed.v);
    data.emplace_back(ed.length, ed.potential);
  }
  CombinatorialGraph g(spec.vertices, std::move(pairs));
  std::vector<VertexCondition> cond = spec.conditions;
  if (cond.size() > static_cast<std::size_t>(spec.vertices)) throw ValidationError("more conditions than vertices");
  cond.resize(spec.vertices);
  std::vector<std::vector<int>> beta;
  if (!spec.beta.empty()) {
    if (static_cast<int>(spec.beta.size()) != spec.vertices) throw ValidationError("beta must list every vertex");
    for (int v = 0; v < spec.vertices; ++v) {
      std::vector<int> order;
      for (int w : spec.beta[v]) {
        auto b = g.bond_between(v, w);
        if (!b) throw ValidationError("vertex " + std::to_string(v) + ": beta names non-neighbour " + std::to_string(w));
        order.push_back(*b);
      }
      beta.push_back(order);
    }
  }
  return QuantumGraph::assemble(std::move(g), std::move(data), std::move(cond), std::move(beta), bounds);
}

/// A point of the metric graph: distance x from the origin of bond b.
struct Point {
  int bond = 0;
  double x = 0.0;
};

/// Edge id and coordinate along the stored orientation.
inline std::pair<int, double> canonical(const QuantumGraph& q, Point p) {
  const int e = edge_of(p.bond);
  return {e, dir_of(p.bond) ? q.edge_length(e) - p.x : p.x};
}

struct RootedQuantumGraph {
  QuantumGraph base;
  int root_bond = 0;
  double root_offset = 0.0;

  RootedQuantumGraph() = default;
  RootedQuantumGraph(QuantumGraph q, int b, double x) : base(std::move(q)), root_bond(b), root_offset(x) {
    if (b < 0 || b >= base.bond_count()) throw ValidationError("root bond out of range");
    const double L = base.length(b);
    if (!(x > 0.0 && x < L)) throw ValidationError("root offset must be strictly inside the edge");
  }
  Point root() const { return {root_bond, root_offset}; }
};

/// Q^{x0}: the root becomes a degree-2 vertex with U = [[0,1],[1,0]].
struct RootExpansion {
  QuantumGraph graph;
  int root_vertex = 0;
  int bond_to_origin = 0;    ///< (v_x0, o(b0))
  int bond_to_terminus = 0;  ///< (v_x0, t(b0))
  int first_edge = 0;        ///< edge (o(b0), v_x0), reuses the id of e(b0)
  int second_edge = 0;       ///< edge (v_x0, t(b0)), appended
};

inline RootExpansion add_root_vertex(const QuantumGraph& q, int b0, double x0,
                                     const std::optional<ValidationBounds>& bounds = std::nullopt) {
  if (b0 < 0 || b0 >= q.bond_count()) throw ValidationError("add_root_vertex: bond out of range");
  const double L = q.length(b0);
  if (!(x0 > 0.0 && x0 < L)) throw ValidationError("add_root_vertex: root must be strictly interior");
  const int e0 = edge_of(b0);
  const int o = q.origin(b0), t = q.terminus(b0);
  const int n = q.vertex_count();
  const int E = q.edge_count();

  std::vector<std::pair<int, int>> pairs = q.graph().edges();
  std::vector<EdgeData> data;
  for (int e = 0; e < E; ++e) data.push_back(q.edge(e));
  const EdgeData along = q.edge(e0).bond_view(dir_of(b0));
  pairs[e0] = {o, n};
  data[e0] = along.restricted(0.0, x0);
  pairs.emplace_back(n, t);
  data.push_back(along.restricted(x0, L));

  RootExpansion out;
  out.root_vertex = n;
  out.first_edge = e0;
  out.second_edge = E;
  out.bond_to_origin = bond_of(e0, 1);
  out.bond_to_terminus = bond_of(E, 0);

  std::vector<std::vector<int>> beta;
  for (int v = 0; v < n; ++v) {
    std::vector<int> order = q.beta(v);
    for (int& b : order) {
      if (b == b0) b = bond_of(e0, 0);
      else if (b == reverse_bond(b0)) b = bond_of(E, 1);
    }
    beta.push_back(order);
  }
  beta.push_back({out.bond_to_origin, out.bond_to_terminus});

  std::vector<VertexCondition> cond;
  for (int v = 0; v < n; ++v) cond.push_back(q.condition(v));
  VertexCondition root;
  root.kind = ConditionKind::kirchhoff;
  cond.push_back(root);

  std::optional<ValidationBounds> adj = bounds;
  if (adj) adj->m = std::min({adj->m, x0, L - x0});
  out.graph = QuantumGraph::assemble(CombinatorialGraph(n + 1, std::move(pairs)), std::move(data), std::move(cond),
                                     std::move(beta), adj);
  return out;
}

inline RootExpansion add_root_vertex(const RootedQuantumGraph& rq,
                                     const std::optional<ValidationBounds>& bounds = std::nullopt) {
  return add_root_vertex(rq.base, rq.root_bond, rq.root_offset, bounds);
}

inline double total_length(const QuantumGraph& q) { return q.total_length(); }

}  // namespace qgs
