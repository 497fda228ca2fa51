#include "qgs/ensembles.hpp"
#include "qgs/greens.hpp"
#include "qgs/spectral.hpp"

#include <gtest/gtest.h>

#include <Eigen/QR>

#include <random>

using namespace qgs;

namespace {

QuantumGraph dirichlet_interval(double L) {
  GraphSpec s;
  s.vertices = 2;
  s.edges = {{0, 1, L, {}}};
  s.conditions = {{ConditionKind::dirichlet, 0.0, {}}, {ConditionKind::dirichlet, 0.0, {}}};
  return build_quantum_graph(s);
}

QuantumGraph cycle(int n) {
  GraphSpec s;
  s.vertices = n;
  for (int i = 0; i < n; ++i) s.edges.push_back({i, (i + 1) % n, 1.0, {}});
  return build_quantum_graph(s);
}

GraphSpec star_spec(std::vector<double> lengths) {
  GraphSpec s;
  s.vertices = static_cast<int>(lengths.size()) + 1;
  for (std::size_t i = 0; i < lengths.size(); ++i) s.edges.push_back({0, static_cast<int>(i) + 1, lengths[i], {}});
  return s;
}

Point random_point(const QuantumGraph& q, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> b(0, q.bond_count() - 1);
  std::uniform_real_distribution<double> t(0.05, 0.95);
  const int bond = b(rng);
  return {bond, t(rng) * q.length(bond)};
}

CMat random_unitary(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  CMat m(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = cplx(n(rng), n(rng));
  return Eigen::HouseholderQR<CMat>(m).householderQ() * CMat::Identity(d, d);
}

}  // namespace

TEST(Greens, KirchhoffDegreeTwoScattering) {
  const QuantumGraph q = cycle(3);
  CMat swap(2, 2);
  swap << 0.0, 1.0, 1.0, 0.0;
  for (cplx z : {cplx(1.0, 1.0), cplx(-4.0, 0.5), cplx(30.0, 3.0)}) {
    const EvolutionSystem ev = evolution_operator(q, z);
    for (int v = 0; v < 3; ++v) EXPECT_LT((ev.sigma[v] - swap).norm(), 1e-10);
    const EvolutionSystem fast = kirchhoff_evolution_operator(q, z);
    for (int v = 0; v < 3; ++v) EXPECT_LT((fast.sigma[v] - swap).norm(), 1e-14);
  }
}

TEST(Greens, FreeEdgeDiagonal) {
  const QuantumGraph q = build_quantum_graph(star_spec({0.7, 1.1, 1.9}));
  const cplx z(2.0, 3.0);
  const EvolutionSystem ev = evolution_operator(q, z);
  for (int b = 0; b < q.bond_count(); ++b)
    EXPECT_NEAR(std::abs(ev.D(b) - std::exp(-I_unit * ev.k * q.length(b))), 0.0, 1e-9 * std::abs(ev.D(b)));
}

TEST(Greens, ScatteringIsBlockDiagonalAfterReversal) {
  const QuantumGraph q = random_small_graph(3);
  const EvolutionSystem ev = evolution_operator(q, cplx(1.5, 2.0));
  for (int b = 0; b < q.bond_count(); ++b)
    for (int c = 0; c < q.bond_count(); ++c) {
      const cplx sj = ev.S(b, reverse_bond(c));
      if (q.origin(b) != q.origin(c)) EXPECT_EQ(sj, cplx(0.0));
    }
}

TEST(Greens, ThetaBound) {
  std::mt19937_64 rng(7);
  std::vector<CMat> us = {kirchhoff_unitary(3), delta_unitary(3, 1.5), delta_unitary(2, -2.0), dirichlet_unitary(3),
                          neumann_unitary(2), random_unitary(3, rng), random_unitary(4, rng)};
  for (const CMat& U : us) {
    const BoundaryMatrices bm = boundary_matrices(U);
    for (double re : {-5.0, 0.5, 2.0, 40.0})
      for (double im : {0.1, 1.0, 10.0, 200.0}) {
        const cplx k = sqrt_upper(cplx(re, im));
        const double lam = std::abs(k.imag() / k.real());
        const double n = op_norm(theta_matrix(bm, k));
        // the Moebius image of the unit circle reaches modulus sqrt(1 + lam^2) + lam
        EXPECT_LE(n, std::sqrt(1 + lam * lam) + lam + 1e-9) << re << " " << im;
      }
  }
}

TEST(Greens, SourceHasTwoEntriesOnRootBonds) {
  const QuantumGraph q = random_small_graph(5);
  const cplx z(1.0, 4.0);
  const GreenEvaluation ge(q, 0, z);
  const CVec& xi = ge.delta_source();
  const auto& rx = ge.expansion();
  const cplx expect = 1.0 / (2.0 * I_unit * sqrt_upper(z));
  int nonzero = 0;
  for (int b = 0; b < xi.size(); ++b) {
    if (xi(b) == cplx(0.0)) continue;
    ++nonzero;
    EXPECT_EQ(rx.graph.origin(b), rx.root_vertex);
    EXPECT_NEAR(std::abs(xi(b) - expect), 0.0, 1e-14);
  }
  EXPECT_EQ(nonzero, 2);
}

TEST(Greens, DirichletClosedForm) {
  const double L = 1.7;
  const QuantumGraph q = dirichlet_interval(L);
  for (cplx z : {cplx(1.0, 1.0), cplx(20.0, 0.2), cplx(-3.0, 5.0)}) {
    const GreenFunction g(q, z);
    const cplx k = sqrt_upper(z);
    for (double x : {0.1, 0.6, 1.2})
      for (double y : {0.3, 0.85, 1.6}) {
        const double a = std::min(x, y), b = std::max(x, y);
        const cplx exact = std::sin(k * a) * std::sin(k * (L - b)) / (k * std::sin(k * L));
        EXPECT_NEAR(std::abs(g(Point{0, x}, Point{0, y}) - exact), 0.0, 1e-8);
        // the reversed bond sees the same kernel
        EXPECT_NEAR(std::abs(g(Point{1, L - x}, Point{1, L - y}) - exact), 0.0, 1e-8);
      }
  }
}

TEST(Greens, DirichletAgreesWithEigenExpansion) {
  const double L = pi;
  const QuantumGraph q = dirichlet_interval(L);
  const cplx z(2.0, 1.0);
  const double x = 0.9, y = 2.2;
  cplx s{0.0};
  const int K = 200000;
  for (int n = 1; n <= K; ++n) s += 2.0 / pi * std::sin(n * x) * std::sin(n * y) / (double(n) * n - z);
  // remaining terms are bounded by (2/pi) sum_{n>K} 1/(n^2 - |z|)
  const double tail = 2.0 / pi / (K - 1.0);
  EXPECT_NEAR(std::abs(GreenFunction(q, z)(Point{0, x}, Point{0, y}) - s), 0.0, tail + 1e-9);
}

TEST(Greens, DerivativesMatchFiniteDifferences) {
  const QuantumGraph q = random_small_graph(8);
  const cplx z(3.0, 2.0);
  const GreenFunction g(q, z);
  std::mt19937_64 rng(2);
  for (int i = 0; i < 10; ++i) {
    Point x = random_point(q, rng), y = random_point(q, rng);
    const double h = 1e-5;
    const cplx fdx = (g(Point{x.bond, x.x + h}, y) - g(Point{x.bond, x.x - h}, y)) / (2 * h);
    const cplx fdy = (g(x, Point{y.bond, y.x + h}) - g(x, Point{y.bond, y.x - h})) / (2 * h);
    // skip pairs straddling the diagonal where G has a kink
    if (edge_of(x.bond) == edge_of(y.bond)) continue;
    EXPECT_NEAR(std::abs(g(x, y, true, false) - fdx), 0.0, 1e-5);
    EXPECT_NEAR(std::abs(g(x, y, false, true) - fdy), 0.0, 1e-5);
  }
}

TEST(Greens, HerglotzOnTheDiagonal) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> re(-5.0, 50.0), lim(-2.0, 1.5);
  int checked = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const QuantumGraph q = random_small_graph(seed);
    for (int i = 0; i < 10; ++i) {
      const cplx z(re(rng), std::pow(10.0, lim(rng)));
      const Point x = random_point(q, rng);
      const GreenFunction g(q, z);
      EXPECT_GT(g(x, x).imag(), 0.0) << seed << " z=" << z;
      ++checked;
    }
  }
  EXPECT_EQ(checked, 100);
}

TEST(Greens, SymmetryAndConjugation) {
  std::mt19937_64 rng(23);
  for (std::uint64_t seed : {2u, 4u, 6u}) {
    const QuantumGraph q = random_small_graph(seed);
    const cplx z(4.0, 0.7);
    const GreenFunction g(q, z), gc(q, std::conj(z));
    for (int i = 0; i < 8; ++i) {
      const Point x = random_point(q, rng), y = random_point(q, rng);
      const cplx gxy = g(x, y);
      EXPECT_NEAR(std::abs(gxy - g(y, x)), 0.0, 1e-8);
      EXPECT_NEAR(std::abs(gc(x, y) - std::conj(gxy)), 0.0, 1e-8);
      EXPECT_NEAR(std::abs(gc(y, x) - std::conj(gxy)), 0.0, 1e-8);
    }
  }
}

TEST(Greens, EnvelopeScalesLikeInverseImaginaryPart) {
  // near the real axis the envelope may at most double when Im z halves
  const QuantumGraph q = random_small_graph(12);
  std::mt19937_64 rng(5);
  std::vector<std::pair<Point, Point>> pts;
  for (int i = 0; i < 12; ++i) pts.push_back({random_point(q, rng), random_point(q, rng)});
  const double lambda = eigenvalues_up_to(q, 100.0).levels.at(2).lambda;
  std::vector<double> env;
  const std::vector<double> etas = {0.8, 0.4, 0.2, 0.1, 0.05, 0.025};
  for (double eta : etas) {
    const GreenFunction g(q, cplx(lambda, eta));
    double m = 0.0;
    for (auto& [x, y] : pts) m = std::max(m, std::abs(g(x, y)));
    env.push_back(m);
  }
  for (std::size_t i = 0; i + 1 < env.size(); ++i) {
    EXPECT_LE(env[i + 1], 2.0 * env[i] * (1 + 1e-9)) << etas[i + 1];
    EXPECT_LE(env[i + 1] * etas[i + 1], env[0] * etas[0] * 1.05 + 1.0);
  }
  // at an eigenvalue the pole dominates and the envelope nearly doubles
  EXPECT_GT(env.back() / env[env.size() - 2], 1.8);
}

TEST(Greens, RootDerivativesSumToMinusOne) {
  const QuantumGraph q = random_small_graph(6);
  const cplx z(2.0, 1.0);
  const GreenFunction g(q, z);
  for (int e = 0; e < q.edge_count(); ++e) {
    const double L = q.edge_length(e);
    const Point y{bond_of(e, 0), 0.5 * L};
    // x -> G(x, y) leaving y on either side; derivatives along each bond point away from y
    const double h = 1e-7;
    const Point xr{bond_of(e, 0), 0.5 * L + h}, xl{bond_of(e, 1), 0.5 * L + h};
    const cplx right = g(xr, y, true, false), left = g(xl, y, true, false);
    EXPECT_NEAR(std::abs(right + left + 1.0), 0.0, 1e-5);
    EXPECT_NEAR(std::abs(g(xr, y) - g(xl, y)), 0.0, 1e-5);
  }
}

TEST(Greens, TraceOfDirichletInterval) {
  const QuantumGraph q = dirichlet_interval(pi);
  const cplx z(0.0, 1.0);
  // sum 1/(k^2 - i) = pi^2/6 + sum i / (k^2 (k^2 - i)), remainder below 1/(3K^3)
  cplx s(pi * pi / 6.0, 0.0);
  const int K = 20000;
  for (int k = K; k >= 1; --k) {
    const double k2 = double(k) * k;
    s += I_unit / (k2 * (k2 - z));
  }
  const cplx tr = resolvent_trace(q, z);
  EXPECT_NEAR(std::abs(tr - s), 0.0, 1e-6);
  EXPECT_NEAR(std::abs(resolvent_trace(q, std::conj(z)) - std::conj(tr)), 0.0, 1e-10);
}

TEST(Greens, TraceOfStarMatchesEigenvalueSum) {
  const QuantumGraph q = build_quantum_graph(star_spec({1.0, 1.3, 0.8}));
  const cplx z(4.0, 1.0), z0(4.0, 2.0);
  // the difference of two traces converges absolutely: sum (z - z0) / ((l - z)(l - z0))
  const SpectralData sd = eigenvalues_up_to(q, 40000.0);
  cplx s{0.0};
  for (double l : sd.flat()) s += (z - z0) / ((l - z) * (l - z0));
  const double Lt = q.total_length(), lam = sd.lambda_max;
  const double tail = Lt / (3 * pi * std::pow(lam, 1.5)) * 2 + 10.0 / (lam * lam);
  EXPECT_NEAR(std::abs(resolvent_trace(q, z) - resolvent_trace(q, z0) - s), 0.0, tail + 1e-8);
}

TEST(Greens, SmoothedDensityIsLorentzianSum) {
  const QuantumGraph q = random_small_graph(10);
  const SpectralData sd = eigenvalues_up_to(q, 4000.0);
  const double eps = 0.2, Lt = q.total_length();
  const std::vector<double> grid = {1.0, 7.5, 20.0, 33.3};
  const auto dens = smoothed_spectral_density(q, grid, eps);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double s = 0.0;
    for (double l : sd.flat()) s += eps / ((grid[i] - l) * (grid[i] - l) + eps * eps);
    EXPECT_NEAR(dens[i], s / (pi * Lt), 1e-6) << grid[i];
  }
}

TEST(Greens, SmoothedDensityVanishesInGaps) {
  const QuantumGraph q = random_small_graph(10);
  const SpectralData sd = eigenvalues_up_to(q, 40.0);
  const auto ev = sd.flat();
  ASSERT_GE(ev.size(), 3u);
  const double gap = 0.5 * (ev[1] + ev[2]);
  const auto d = [&](double eps) { return smoothed_spectral_density(q, {gap}, eps)[0]; };
  const double a = d(0.1), b = d(0.05), c = d(0.025);
  EXPECT_GT(a, b);
  EXPECT_GT(b, c);
  EXPECT_GT(c, 0.0);
}

TEST(Greens, KirchhoffFastPathMatchesGeneralPath) {
  const QuantumGraph q = build_quantum_graph(star_spec({1.0, 0.6, 1.4, 0.9}));
  EXPECT_TRUE(kirchhoff_free(q));
  const cplx z(3.0, 0.8);
  const GreenFunction a(q, z), b(q, z, GreenMethod::direct, true);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 10; ++i) {
    const Point x = random_point(q, rng), y = random_point(q, rng);
    EXPECT_NEAR(std::abs(a(x, y) - b(x, y)), 0.0, 1e-12 * std::max(1.0, std::abs(a(x, y))));
  }
  EXPECT_THROW(kirchhoff_evolution_operator(random_small_graph(2), z), ValidationError);
}

TEST(Greens, NeumannSeriesInContractionRegime) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    RandomGraphOptions o;
    o.max_alpha = 2.0;
    const QuantumGraph q = random_small_graph(seed, o);
    for (double re : {1.0, 2.5, 4.0}) {
      const cplx z(re, 200.0);
      const GreenEvaluation direct(q, 0, z);
      EXPECT_LT(inverse_evolution_norm(direct.system()), 0.5);
      const GreenEvaluation series(q, 0, z, GreenMethod::neumann_series);
      const CVec& a = direct.delta_coefficients();
      const CVec& b = series.delta_coefficients();
      EXPECT_LT((a - b).norm(), 1e-10 * std::max(1.0, a.norm()));
    }
  }
}

TEST(Greens, NeumannSeriesRefusedNearRealAxis) {
  const QuantumGraph q = cycle(4);
  EXPECT_THROW(GreenEvaluation(q, 0, cplx(2.0, 0.01), GreenMethod::neumann_series), ValidationError);
}

TEST(Greens, ContinuousInEdgeLength) {
  GraphSpec s = star_spec({1.0, 1.2, 0.7});
  const cplx z(1.0, 5.0);
  const Point x{0, 0.4};
  auto G = [&](double h) {
    GraphSpec t = s;
    t.edges[1].length += h;
    const QuantumGraph q = build_quantum_graph(t);
    return GreenFunction(q, z)(x, x);
  };
  const cplx g0 = G(0.0);
  const cplx s1 = (G(1e-2) - g0) / 1e-2, s2 = (G(5e-3) - g0) / 5e-3, s3 = (G(2.5e-3) - g0) / 2.5e-3;
  EXPECT_LT(std::abs(s3 - s2), 0.6 * std::abs(s2 - s1) + 1e-7);
  EXPECT_LT(std::abs(s3), 10.0);
}

TEST(Greens, RejectsRealSpectralParameter) {
  const QuantumGraph q = cycle(3);
  EXPECT_THROW(GreenFunction(q, cplx(2.0, 0.0)), ValidationError);
  EXPECT_THROW(evolution_operator(q, cplx(2.0, -1.0)), ValidationError);
  const GreenFunction g(q, cplx(1.0, 1.0));
  EXPECT_THROW(g(Point{0, 0.0}, Point{0, 0.5}), ValidationError);
}
