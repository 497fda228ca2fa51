#include "qgs/edge_solver.hpp"

#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <random>

using namespace qgs;

namespace {

// Picard iteration for the Volterra form of -f'' + W f = z f on a uniform grid.
// Cumulative integrals use four-point rules that stay inside pieces of `piece`
// cells, so kinks of W on piece boundaries do not spoil the order.
struct PicardSolution {
  std::vector<double> x;
  std::vector<cplx> f, fp;
};

std::vector<cplx> cumulative(const std::vector<cplx>& g, double h, std::size_t cells) {
  const std::size_t n = g.size();
  std::vector<cplx> out(n, 0.0);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    cplx piece;
    const std::size_t j = i % cells;
    if (j == 0)
      piece = h / 24.0 * (9.0 * g[i] + 19.0 * g[i + 1] - 5.0 * g[i + 2] + g[i + 3]);
    else if (j + 1 == cells)
      piece = h / 24.0 * (9.0 * g[i + 1] + 19.0 * g[i] - 5.0 * g[i - 1] + g[i - 2]);
    else
      piece = h / 24.0 * (-g[i - 1] + 13.0 * g[i] + 13.0 * g[i + 1] - g[i + 2]);
    out[i + 1] = out[i] + piece;
  }
  return out;
}

PicardSolution picard(const std::function<double(double)>& W, cplx z, double L, cplx f0, cplx fp0, int pieces = 1,
                      int n = 4000) {
  const cplx k = std::sqrt(z);
  const double h = L / n;
  PicardSolution s;
  std::vector<cplx> c(n + 1), sn(n + 1), w(n + 1);
  for (int i = 0; i <= n; ++i) {
    s.x.push_back(i * h);
    c[i] = std::cos(k * s.x[i]);
    sn[i] = std::sin(k * s.x[i]);
    w[i] = W(s.x[i]);
  }
  std::vector<cplx> free(n + 1), freep(n + 1);
  for (int i = 0; i <= n; ++i) {
    free[i] = f0 * c[i] + fp0 * sn[i] / k;
    freep[i] = -f0 * k * sn[i] + fp0 * c[i];
  }
  s.f = free;
  s.fp = freep;
  for (int it = 0; it < 200; ++it) {
    std::vector<cplx> ga(n + 1), gb(n + 1);
    for (int i = 0; i <= n; ++i) {
      ga[i] = c[i] * w[i] * s.f[i];
      gb[i] = sn[i] * w[i] * s.f[i];
    }
    const auto A = cumulative(ga, h, n / pieces), B = cumulative(gb, h, n / pieces);
    double change = 0.0;
    for (int i = 0; i <= n; ++i) {
      const cplx nf = free[i] + (sn[i] * A[i] - c[i] * B[i]) / k;
      const cplx nfp = freep[i] + c[i] * A[i] + sn[i] * B[i];
      change = std::max(change, std::abs(nf - s.f[i]));
      s.f[i] = nf;
      s.fp[i] = nfp;
    }
    if (change < 1e-15) break;
  }
  return s;
}

EdgeData linear_edge(double L, double w0, double w1) { return EdgeData(L, {w0, w1}); }

EdgeData random_edge(std::uint64_t seed, double L) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> w(9);
  for (double& x : w) x = u(rng);
  return EdgeData(L, w);
}

}  // namespace

TEST(EdgeSolver, FreeSolutionAtQuarterPeriod) {
  const Transfer t = propagate(EdgeData(pi / 2), cplx(4.0), 0.0, pi / 2);
  EXPECT_NEAR(std::abs(t.c + 1.0), 0.0, 1e-9);
  EXPECT_NEAR(std::abs(t.s), 0.0, 1e-9);
  EXPECT_NEAR(std::abs(t.sp + 1.0), 0.0, 1e-9);
}

TEST(EdgeSolver, ConstantPotentialClosedForm) {
  const double L = 1.3, c0 = 2.5;
  for (cplx z : {cplx(7.0, 0.3), cplx(-3.0, 2.0), cplx(0.5, -1.0)}) {
    const Transfer t = propagate(EdgeData(L, {c0, c0}), z, 0.0, L);
    const cplx m = std::sqrt(z - c0);
    EXPECT_NEAR(std::abs(t.c - std::cos(m * L)), 0.0, 1e-9);
    EXPECT_NEAR(std::abs(t.s - std::sin(m * L) / m), 0.0, 1e-9);
    EXPECT_NEAR(std::abs(t.cp + m * std::sin(m * L)), 0.0, 1e-9);
    EXPECT_NEAR(std::abs(t.sp - std::cos(m * L)), 0.0, 1e-9);
  }
}

TEST(EdgeSolver, MatchesPicardOracleForLinearPotential) {
  const cplx z(1.0, 1.0);
  const EdgeData ed = linear_edge(1.0, 0.0, 1.0);
  const auto W = [](double x) { return x; };
  const PicardSolution pc = picard(W, z, 1.0, 1.0, 0.0);
  const PicardSolution ps = picard(W, z, 1.0, 0.0, 1.0);
  const Transfer t = propagate(ed, z, 0.0, 1.0);
  EXPECT_NEAR(std::abs(t.c - pc.f.back()), 0.0, 1e-9);
  EXPECT_NEAR(std::abs(t.cp - pc.fp.back()), 0.0, 1e-9);
  EXPECT_NEAR(std::abs(t.s - ps.f.back()), 0.0, 1e-9);
  EXPECT_NEAR(std::abs(t.sp - ps.fp.back()), 0.0, 1e-9);

  const EdgeSolution sol = solve_fundamental(ed, 0, z, 41);
  for (std::size_t i = 0; i < sol.grid_x.size(); ++i) {
    const std::size_t j = i * 100;
    EXPECT_NEAR(std::abs(sol.grid_C[i] - pc.f[j]), 0.0, 1e-9);
    EXPECT_NEAR(std::abs(sol.grid_Sp[i] - ps.fp[j]), 0.0, 1e-9);
  }
}

TEST(EdgeSolver, MatchesPicardOracleForKinkedPotential) {
  const EdgeData ed = random_edge(11, 1.0);
  const cplx z(-2.0, 0.5);
  const auto W = [&](double x) { return ed.potential(0, x); };
  const PicardSolution pc = picard(W, z, 1.0, 1.0, 0.0, 8);
  const Transfer t = propagate(ed, z, 0.0, 1.0);
  EXPECT_NEAR(std::abs(t.c - pc.f.back()), 0.0, 1e-9);
  EXPECT_NEAR(std::abs(t.cp - pc.fp.back()), 0.0, 1e-9);
}

TEST(EdgeSolver, WronskianIsOne) {
  const EdgeData ed = random_edge(5, 1.7);
  for (cplx z : {cplx(1.0, 1.0), cplx(40.0, 0.1), cplx(-5.0, -3.0)}) {
    const EdgeSolution s = solve_fundamental(ed, 0, z, 257);
    for (std::size_t i = 0; i < s.grid_x.size(); ++i) {
      const cplx w = s.grid_C[i] * s.grid_Sp[i] - s.grid_Cp[i] * s.grid_S[i];
      EXPECT_NEAR(std::abs(w - 1.0), 0.0, 1e-9) << "x = " << s.grid_x[i];
    }
  }
}

TEST(EdgeSolver, FreeDecayingSolutionIsExponential) {
  const cplx z(3.0, 2.0);
  const cplx k = sqrt_upper(z);
  EXPECT_GT(k.imag(), 0.0);
  const EdgeSolution s = solve_fundamental(EdgeData(2.0), 0, z, 21);
  for (std::size_t i = 0; i < s.grid_x.size(); ++i) {
    const cplx e = s.grid_C[i] - I_unit * k * s.grid_S[i];
    EXPECT_NEAR(std::abs(e - std::exp(-I_unit * k * s.grid_x[i])), 0.0, 1e-9);
  }
  EXPECT_NEAR(std::abs(s.E - std::exp(-I_unit * k * 2.0)), 0.0, 1e-9);
  EXPECT_NEAR(std::abs(s.Ep + I_unit * k * std::exp(-I_unit * k * 2.0)), 0.0, 1e-9);
}

TEST(EdgeSolver, ConjugationSymmetry) {
  const EdgeData ed = random_edge(8, 1.2);
  const cplx z(2.0, 0.7);
  const Transfer a = propagate(ed, z, 0.0, 1.2);
  const Transfer b = propagate(ed, std::conj(z), 0.0, 1.2);
  EXPECT_NEAR(std::abs(a.c - std::conj(b.c)), 0.0, 1e-10);
  EXPECT_NEAR(std::abs(a.cp - std::conj(b.cp)), 0.0, 1e-10);
  EXPECT_NEAR(std::abs(a.s - std::conj(b.s)), 0.0, 1e-10);
  EXPECT_NEAR(std::abs(a.sp - std::conj(b.sp)), 0.0, 1e-10);
}

TEST(EdgeSolver, ReversedBondSolvesSameEquation) {
  const EdgeData ed = random_edge(21, 1.4);
  const cplx z(3.0, 1.5);
  const EdgeSolution fwd = solve_fundamental(ed, 0, z, 29);
  const EdgeSolution rev = solve_fundamental(ed, 1, z, 29);
  // f(x) = E_rev(L - x) expressed in the forward fundamental pair
  const std::size_t n = fwd.grid_x.size();
  const cplx k = sqrt_upper(z);
  auto erev = [&](std::size_t i) { return rev.grid_C[i] - I_unit * k * rev.grid_S[i]; };
  auto erevp = [&](std::size_t i) { return rev.grid_Cp[i] - I_unit * k * rev.grid_Sp[i]; };
  const cplx a = rev.E, b = -rev.Ep;
  for (std::size_t i = 0; i < n; ++i) {
    const cplx f = erev(n - 1 - i);
    EXPECT_NEAR(std::abs(f - (a * fwd.grid_C[i] + b * fwd.grid_S[i])), 0.0, 1e-9 * std::abs(a));
    EXPECT_NEAR(std::abs(-erevp(n - 1 - i) - (a * fwd.grid_Cp[i] + b * fwd.grid_Sp[i])), 0.0, 1e-9 * std::abs(a) * std::abs(k));
  }
}

TEST(EdgeSolver, ReverseTableFromWronskian) {
  GraphSpec s;
  s.vertices = 2;
  s.edges = {{0, 1, 0.9, {0.3, -0.8, 0.1, 0.9}}};
  QuantumGraph q = build_quantum_graph(s);
  const cplx z(1.0, 2.0);
  const EdgeSolutionTable tab = solve_all(q, z);
  const EdgeSolution rev = solve_fundamental(q.edge(0), 1, z);
  EXPECT_NEAR(std::abs(tab.bonds[1].C - rev.C), 0.0, 1e-9);
  EXPECT_NEAR(std::abs(tab.bonds[1].S - rev.S), 0.0, 1e-9);
  EXPECT_NEAR(std::abs(tab.bonds[1].Sp - rev.Sp), 0.0, 1e-9);
  EXPECT_NEAR(std::abs(tab.bonds[1].Cp - rev.Cp), 0.0, 1e-9);
}

TEST(EdgeSolver, ToleranceRefinementIsConsistent) {
  const EdgeData ed = random_edge(31, 1.0);
  const cplx z(25.0, 0.5);
  const Transfer a = propagate(ed, z, 0.0, 1.0, 1e-10, 1e-12);
  const Transfer b = propagate(ed, z, 0.0, 1.0, 1e-11, 1e-13);
  const double scale = std::abs(b.c) + std::abs(b.cp) / 5.0 + 1.0;
  EXPECT_LT(std::abs(a.c - b.c), 1e-9 * scale);
  EXPECT_LT(std::abs(a.cp - b.cp), 5e-9 * scale);
}

TEST(EdgeSolver, DecayingSolutionGrowsAlongTheBond) {
  // |E(L)| grows with Im z and E'/E approaches -i sqrt(z)
  const EdgeData ed = random_edge(17, 0.8);
  double last_size = 0.0, last_ratio = 1e300;
  for (double y : {50.0, 100.0, 200.0, 400.0}) {
    const cplx z(1.0, y);
    const EdgeSolution s = solve_fundamental(ed, 0, z);
    const cplx k = sqrt_upper(z);
    const double size = std::abs(s.E);
    const double ratio = std::abs(s.Ep / s.E + I_unit * k);
    EXPECT_GT(size, last_size);
    EXPECT_LT(ratio, last_ratio);
    EXPECT_GE(size, 1.0);
    last_size = size;
    last_ratio = ratio;
  }
}

TEST(EdgeSolver, TransferIntegralsMatchQuadrature) {
  using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
  const double L = 1.1;
  const cplx z(2.0, 0.4);
  const cplx m = std::sqrt(z);
  const TransferIntegrals ti = propagate_integrals(EdgeData(L), z, 0.0, L);
  auto C = [&](double x) { return std::cos(m * x); };
  auto S = [&](double x) { return std::sin(m * x) / m; };
  const double s1 = GK::integrate([&](double x) { return std::norm(S(x)); }, 0.0, L, 10, 1e-14);
  const double s2 = GK::integrate([&](double x) { return std::norm(C(x)); }, 0.0, L, 10, 1e-14);
  const double s3r = GK::integrate([&](double x) { return (C(x) * std::conj(S(x))).real(); }, 0.0, L, 10, 1e-14);
  const double s3i = GK::integrate([&](double x) { return (C(x) * std::conj(S(x))).imag(); }, 0.0, L, 10, 1e-14);
  EXPECT_NEAR(std::abs(ti.sigma1 - s1), 0.0, 1e-9);
  EXPECT_NEAR(std::abs(ti.sigma2 - s2), 0.0, 1e-9);
  EXPECT_NEAR(std::abs(ti.sigma3 - cplx(s3r, s3i)), 0.0, 1e-9);
}

TEST(EdgeSolver, DualFunctionalsReproduceInitialData) {
  const EdgeData ed = random_edge(2, 1.5);
  for (cplx z : {cplx(1.0, 1.0), cplx(10.0, -0.5)}) {
    for (double zeta : {0.4, 1.5}) {
      const DualFunctionals d = dual_functionals(ed, 0, z, zeta);
      EXPECT_GT(d.sigma1.real(), 0.0);
      EXPECT_GT(d.sigma2.real(), 0.0);
      EXPECT_NEAR(d.sigma1.imag(), 0.0, 1e-12);
      EXPECT_GT(d.denominator, 0.0);
      auto C = [&](double x) { return propagate(ed, z, 0.0, x).c; };
      auto S = [&](double x) { return propagate(ed, z, 0.0, x).s; };
      auto [yc, zc] = dual_pairing(d, C);
      auto [ys, zs] = dual_pairing(d, S);
      EXPECT_NEAR(std::abs(yc - 1.0), 0.0, 1e-8);
      EXPECT_NEAR(std::abs(zc), 0.0, 1e-8);
      EXPECT_NEAR(std::abs(ys), 0.0, 1e-8);
      EXPECT_NEAR(std::abs(zs - 1.0), 0.0, 1e-8);
      // a general solution pairs to its initial data
      const cplx a(0.3, -1.0), b(2.0, 0.5);
      auto [yf, zf] = dual_pairing(d, [&](double x) { return a * C(x) + b * S(x); });
      EXPECT_NEAR(std::abs(yf - a), 0.0, 1e-8);
      EXPECT_NEAR(std::abs(zf - b), 0.0, 1e-8);
    }
  }
}

TEST(EdgeSolver, DualFunctionalsRejectBadWindow) {
  EXPECT_THROW(dual_functionals(EdgeData(1.0), 0, cplx(1.0, 1.0), 1.5), ValidationError);
  EXPECT_THROW(dual_functionals(EdgeData(1.0), 0, cplx(1.0, 1.0), 0.0), ValidationError);
}
