#pragma once

#include "qgs/common.hpp"
#include "qgs/graph_core.hpp"
#include "qgs/spectral.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <memory>
#include <numeric>
#include <optional>
#include <random>

namespace qgs {

enum class Family { cycle, interval, star, complete, n_lift, equilateral_from_discrete };

inline const char* to_string(Family f) {
  switch (f) {
    case Family::cycle: return "cycle";
    case Family::interval: return "interval";
    case Family::star: return "star";
    case Family::complete: return "complete";
    case Family::n_lift: return "n_lift";
    case Family::equilateral_from_discrete: return "equilateral_from_discrete";
  }
  return "?";
}

inline Family family_from_string(const std::string& s) {
  for (Family f : {Family::cycle, Family::interval, Family::star, Family::complete, Family::n_lift,
                   Family::equilateral_from_discrete})
    if (s == to_string(f)) return f;
  throw ValidationError("unknown family '" + s + "'");
}

/// Uniform law on a closed interval.
struct UniformLaw {
  double lo = 0.0, hi = 0.0;
  double mean() const { return 0.5 * (lo + hi); }
  double stddev() const { return (hi - lo) / std::sqrt(12.0); }
};

struct EnsembleSpec {
  Family family = Family::cycle;
  double length = 1.0;
  std::vector<double> potential;            ///< samples on every edge; empty means W = 0
  VertexCondition condition;                ///< every vertex
  std::optional<VertexCondition> leaf;      ///< overrides condition at degree-1 vertices
  std::shared_ptr<const QuantumGraph> base; ///< n_lift
  std::optional<CombinatorialGraph> discrete;  ///< equilateral_from_discrete
  std::optional<UniformLaw> iid_lengths;    ///< nu_1, supported in [L0, L1]
  std::optional<double> iid_alpha;          ///< nu_2 uniform on [-A, A], delta conditions
  std::uint64_t seed = 0;
  std::optional<ValidationBounds> bounds;
};

/// N-fold cover of base: vertex (v, i) has id v*N + i, edge (e, i) joins
/// (u, i) to (w, pi_e(i)) with the data of e. Permutations are resampled
/// until the cover is connected.
inline QuantumGraph n_lift(const QuantumGraph& base, int N, std::uint64_t seed,
                           const std::optional<ValidationBounds>& bounds = std::nullopt) {
  if (N < 1) throw ValidationError("n_lift: N must be >= 1");
  const int nv = base.vertex_count(), ne = base.edge_count();
  for (int attempt = 0; attempt < 100; ++attempt) {
    std::mt19937_64 rng(split_seed(seed, attempt));
    std::vector<std::vector<int>> perm(ne, std::vector<int>(N)), inv(ne, std::vector<int>(N));
    std::vector<std::pair<int, int>> pairs;
    std::vector<EdgeData> data;
    for (int e = 0; e < ne; ++e) {
      std::iota(perm[e].begin(), perm[e].end(), 0);
      std::shuffle(perm[e].begin(), perm[e].end(), rng);
      auto [u, w] = base.graph().edge(e);
      for (int i = 0; i < N; ++i) {
        inv[e][perm[e][i]] = i;
        pairs.emplace_back(u * N + i, w * N + perm[e][i]);
        data.push_back(base.edge(e));
      }
    }
    CombinatorialGraph g(nv * N, pairs);
    if (!g.connected()) continue;
    std::vector<VertexCondition> cond(nv * N);
    std::vector<std::vector<int>> beta(nv * N);
    for (int v = 0; v < nv; ++v)
      for (int i = 0; i < N; ++i) {
        cond[v * N + i] = base.condition(v);
        for (int b : base.beta(v)) {
          const int e = edge_of(b);
          const int copy = dir_of(b) == 0 ? i : inv[e][i];
          beta[v * N + i].push_back(bond_of(e * N + copy, dir_of(b)));
        }
      }
    return QuantumGraph::assemble(std::move(g), std::move(data), std::move(cond), std::move(beta), bounds);
  }
  throw NumericalError("n_lift: no connected lift in 100 attempts");
}

inline QuantumGraph generate(const EnsembleSpec& spec, int N) {
  GraphSpec gs;
  auto add = [&](int u, int v) { gs.edges.push_back({u, v, spec.length, spec.potential}); };
  switch (spec.family) {
    case Family::cycle:
      if (N < 3) throw ValidationError("cycle: N must be >= 3");
      gs.vertices = N;
      for (int i = 0; i < N; ++i) add(i, (i + 1) % N);
      break;
    case Family::interval:
      if (N < 1) throw ValidationError("interval: N must be >= 1");
      gs.vertices = N + 1;
      for (int i = 0; i < N; ++i) add(i, i + 1);
      break;
    case Family::star:
      if (N < 1) throw ValidationError("star: N must be >= 1");
      gs.vertices = N + 1;
      for (int i = 1; i <= N; ++i) add(0, i);
      break;
    case Family::complete:
      if (N < 2) throw ValidationError("complete: N must be >= 2");
      gs.vertices = N;
      for (int i = 0; i < N; ++i)
        for (int j = i + 1; j < N; ++j) add(i, j);
      break;
    case Family::equilateral_from_discrete:
      if (!spec.discrete) throw ValidationError("equilateral_from_discrete: no discrete graph given");
      gs.vertices = spec.discrete->vertex_count();
      for (auto [u, v] : spec.discrete->edges()) add(u, v);
      break;
    case Family::n_lift:
      break;
  }
  std::mt19937_64 rng(split_seed(spec.seed, 1000003));
  if (spec.family == Family::n_lift) {
    if (!spec.base) throw ValidationError("n_lift: no base graph given");
    QuantumGraph lifted = n_lift(*spec.base, N, spec.seed);
    if (!spec.iid_lengths && !spec.iid_alpha) {
      if (spec.bounds) lifted.check_bounds(*spec.bounds);
      return lifted;
    }
    std::vector<EdgeData> data;
    std::vector<VertexCondition> cond;
    std::vector<std::vector<int>> beta;
    for (int e = 0; e < lifted.edge_count(); ++e) data.push_back(lifted.edge(e));
    for (int v = 0; v < lifted.vertex_count(); ++v) {
      cond.push_back(lifted.condition(v));
      beta.push_back(lifted.beta(v));
    }
    if (spec.iid_lengths) {
      std::uniform_real_distribution<double> U(spec.iid_lengths->lo, spec.iid_lengths->hi);
      for (auto& ed : data) ed.set_length(U(rng));
    }
    if (spec.iid_alpha) {
      std::uniform_real_distribution<double> U(-*spec.iid_alpha, *spec.iid_alpha);
      for (auto& c : cond) c = {ConditionKind::delta, U(rng), {}};
    }
    return QuantumGraph::assemble(lifted.graph(), std::move(data), std::move(cond), std::move(beta), spec.bounds);
  }
  CombinatorialGraph shape(gs.vertices, [&] {
    std::vector<std::pair<int, int>> p;
    for (auto& e : gs.edges) p.emplace_back(e.u, e.v);
    return p;
  }());
  gs.conditions.assign(gs.vertices, spec.condition);
  if (spec.leaf)
    for (int v = 0; v < gs.vertices; ++v)
      if (shape.degree(v) == 1) gs.conditions[v] = *spec.leaf;
  if (spec.iid_lengths) {
    const auto& law = *spec.iid_lengths;
    if (!(law.lo > 0.0 && law.lo <= law.hi)) throw ValidationError("iid_lengths: need 0 < L0 <= L1");
    std::uniform_real_distribution<double> U(law.lo, law.hi);
    for (auto& e : gs.edges) e.length = U(rng);
  }
  if (spec.iid_alpha) {
    if (!(*spec.iid_alpha >= 0.0)) throw ValidationError("iid_alpha: need A >= 0");
    std::uniform_real_distribution<double> U(-*spec.iid_alpha, *spec.iid_alpha);
    for (auto& c : gs.conditions) c = {ConditionKind::delta, U(rng), {}};
  }
  return build_quantum_graph(gs, spec.bounds);
}

/// Options for random_small_graph.
struct RandomGraphOptions {
  int min_vertices = 2, max_vertices = 5;
  double min_length = 0.5, max_length = 1.5;
  double lipschitz = 1.0;   ///< and |W| <= lipschitz
  int potential_samples = 9;
  double extra_edge_probability = 0.35;
  double delta_probability = 0.5;
  double max_alpha = 1.0;
};

/// Connected simple graph with random lengths, Lipschitz potentials and a
/// mix of Kirchhoff and delta vertices.
inline QuantumGraph random_small_graph(std::uint64_t seed, const RandomGraphOptions& o = {}) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int n = std::uniform_int_distribution<int>(o.min_vertices, o.max_vertices)(rng);
  GraphSpec gs;
  gs.vertices = n;
  std::set<std::pair<int, int>> have;
  auto add = [&](int u, int v) {
    if (u > v) std::swap(u, v);
    if (u == v || !have.insert({u, v}).second) return;
    const double L = o.min_length + (o.max_length - o.min_length) * unit(rng);
    std::vector<double> w(o.potential_samples);
    const double h = L / (o.potential_samples - 1);
    w[0] = o.lipschitz * (2 * unit(rng) - 1);
    for (int i = 1; i < o.potential_samples; ++i)
      w[i] = std::clamp(w[i - 1] + o.lipschitz * h * (2 * unit(rng) - 1), -o.lipschitz, o.lipschitz);
    gs.edges.push_back({u, v, L, w});
  };
  for (int v = 1; v < n; ++v) add(std::uniform_int_distribution<int>(0, v - 1)(rng), v);
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v)
      if (unit(rng) < o.extra_edge_probability) add(u, v);
  for (int v = 0; v < n; ++v) {
    VertexCondition c;
    if (unit(rng) < o.delta_probability) c = {ConditionKind::delta, o.max_alpha * (2 * unit(rng) - 1), {}};
    gs.conditions.push_back(c);
  }
  return build_quantum_graph(gs);
}

/// Largest r such that the induced ball B(v, r) is a tree, capped at r_cap.
inline int injectivity_radius(const CombinatorialGraph& g, int v, int r_cap) {
  for (int r = 1; r <= r_cap; ++r) {
    const Ball b = combinatorial_ball(g, v, r);
    if (b.graph.edge_count() != b.graph.vertex_count() - 1) return r - 1;
    if (b.graph.vertex_count() == g.vertex_count()) return r_cap;
  }
  return r_cap;
}

/// out[r] = fraction of vertices with injectivity radius < r, r = 0..r_max.
inline std::vector<double> injectivity_profile(const CombinatorialGraph& g, int r_max) {
  if (r_max < 0) throw ValidationError("injectivity_profile: r_max must be >= 0");
  const int n = g.vertex_count();
  std::vector<int> rho(n);
  for (int v = 0; v < n; ++v) rho[v] = injectivity_radius(g, v, r_max);
  std::vector<double> out(r_max + 1, 0.0);
  for (int r = 0; r <= r_max; ++r) {
    int c = 0;
    for (int v = 0; v < n; ++v) c += rho[v] < r;
    out[r] = static_cast<double>(c) / n;
  }
  return out;
}

enum class LimitMode { analytic, truncation };

struct ConvergenceRow {
  int N = 0;
  double esm = 0.0;
  double limit = 0.0;
  double gap = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> injectivity;  ///< profile up to ConvergenceOptions::profile_radius
};

struct ConvergenceOptions {
  LimitMode mode = LimitMode::analytic;
  int truncation_size = 0;  ///< 0: four times the largest N
  int quadrature_panels = 2;
  int profile_radius = 3;
};

/// Free-line density 1/(2 pi sqrt(lambda)) integrated against chi.
inline double free_line_limit(const TestFunction& chi) {
  if (chi.hi <= std::max(chi.lo, 0.0)) return 0.0;
  // lambda = s^2 removes the endpoint singularity
  const double a = std::sqrt(std::max(chi.lo, 0.0)), b = std::sqrt(chi.hi);
  using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
  return GK::integrate([&](double s) { return chi(s * s); }, a, b, 15, 1e-13) / pi;
}

/// Closed-form limit for families that have one registered.
inline double analytic_limit(const EnsembleSpec& spec, const TestFunction& chi) {
  const bool free_edges = spec.potential.empty() || std::all_of(spec.potential.begin(), spec.potential.end(),
                                                                [](double w) { return w == 0.0; });
  const bool kirchhoff = spec.condition.kind == ConditionKind::kirchhoff ||
                         (spec.condition.kind == ConditionKind::delta && spec.condition.alpha == 0.0);
  if (spec.family == Family::cycle && free_edges && kirchhoff && !spec.iid_alpha)
    return free_line_limit(chi);
  throw ValidationError(std::string("analytic limit unavailable for family ") + to_string(spec.family));
}

/// chi(H)(x, x) averaged over the uniform root of q.
inline double root_averaged_kernel(const QuantumGraph& q, const TestFunction& chi, int panels) {
  if (chi.hi <= chi.lo) return 0.0;
  SpectralOptions so;
  so.eigenfunctions = true;
  const SpectralData sd = eigenvalues_up_to(q, chi.hi, so);
  using Rule = boost::math::quadrature::gauss<double, 20>;
  const auto& xs = Rule::abscissa();
  const auto& ws = Rule::weights();
  std::vector<double> per_edge(q.edge_count(), 0.0);
  parallel_for(q.edge_count(), [&](std::size_t ei) {
    const int e = static_cast<int>(ei);
    const double L = q.edge_length(e);
    double s = 0.0;
    for (int p = 0; p < panels; ++p) {
      const double lo = L * p / panels, hi = L * (p + 1) / panels, c = 0.5 * (lo + hi), r = 0.5 * (hi - lo);
      for (std::size_t i = 0; i < xs.size(); ++i) {
        s += r * ws[i] * functional_calculus_kernel(q, sd, chi, Point{bond_of(e, 0), c + r * xs[i]});
        if (xs[i] != 0.0) s += r * ws[i] * functional_calculus_kernel(q, sd, chi, Point{bond_of(e, 0), c - r * xs[i]});
      }
    }
    per_edge[e] = s;
  });
  return std::accumulate(per_edge.begin(), per_edge.end(), 0.0) / q.total_length();
}

/// mu_{Q_N}(chi) per run against the chosen limit.
inline std::vector<ConvergenceRow> convergence_experiment(const std::vector<std::pair<EnsembleSpec, int>>& runs,
                                                          const TestFunction& chi,
                                                          const ConvergenceOptions& opt = {}) {
  if (runs.empty()) return {};
  for (std::size_t i = 1; i < runs.size(); ++i)
    if (runs[i].second <= runs[i - 1].second) throw ValidationError("convergence_experiment: N must increase");
  const bool trivial = chi.hi <= chi.lo;
  double limit = 0.0;
  if (!trivial) {
    if (opt.mode == LimitMode::analytic) {
      limit = analytic_limit(runs.back().first, chi);
    } else {
      const int nt = opt.truncation_size > 0 ? opt.truncation_size : 4 * runs.back().second;
      limit = root_averaged_kernel(generate(runs.back().first, nt), chi, opt.quadrature_panels);
    }
  }
  std::vector<ConvergenceRow> rows;
  for (const auto& [spec, N] : runs) {
    const QuantumGraph q = generate(spec, N);
    ConvergenceRow row;
    row.N = N;
    row.seed = spec.seed;
    row.limit = limit;
    if (!trivial) {
      const SpectralData sd = eigenvalues_up_to(q, chi.hi);
      row.esm = empirical_measure(sd, q.total_length()).evaluate(chi);
    }
    row.gap = std::abs(row.esm - row.limit);
    row.injectivity = injectivity_profile(q.graph(), opt.profile_radius);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace qgs
