#pragma once

#include "qgs/common.hpp"
#include "qgs/graph_core.hpp"

#include <array>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/numeric/odeint.hpp>
#include <cmath>

namespace qgs {

inline constexpr double ode_rtol = 1e-10;
inline constexpr double ode_atol = 1e-12;

/// Values at the end of a stretch of a solution pair started at its left end
/// with C = 1, C' = 0, S = 0, S' = 1.
struct Transfer {
  cplx c{1.0}, cp{0.0}, s{0.0}, sp{1.0};
};

/// Same for real spectral parameter, with the number of zeros of S strictly
/// inside the stretch.
struct RealTransfer {
  double c = 1.0, cp = 0.0, s = 0.0, sp = 1.0;
  int zeros = 0;
};

/// Transfer plus the integrals of |S|^2, |C|^2 and C*conj(S) along the stretch.
struct TransferIntegrals {
  Transfer t;
  cplx sigma1{0.0}, sigma2{0.0}, sigma3{0.0};
};

namespace detail {

/// Piece of a bond view on which W is linear: W(x) = w0 + slope*(x - a).
struct Segment {
  double a, b, w0, slope;
};

inline std::vector<Segment> segments(const EdgeData& ed, double a, double b) {
  std::vector<double> xs{a};
  for (double x : ed.breakpoints(0))
    if (x > a && x < b) xs.push_back(x);
  xs.push_back(b);
  std::vector<Segment> out;
  for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
    double x0 = xs[i], x1 = xs[i + 1];
    if (x1 <= x0) continue;
    const double w0 = ed.potential(0, x0), w1 = ed.potential(0, x1);
    out.push_back({x0, x1, w0, w1 == w0 ? 0.0 : (w1 - w0) / (x1 - x0)});
  }
  return out;
}

// 2x2 transfer matrix [[c, s], [cp, sp]] for constant W over length h.
inline std::array<cplx, 4> const_step(cplx k2, double h) {
  const cplx k = std::sqrt(k2);
  if (std::abs(k) * h < 1e-8) return {cplx(1.0), cplx(h), -k2 * h, cplx(1.0)};
  const cplx ch = std::cos(k * h), sh = std::sin(k * h);
  return {ch, sh / k, -k * sh, ch};
}

inline std::array<double, 4> const_step_real(double k2, double h) {
  if (std::abs(k2) * h * h < 1e-16) return {1.0, h, -k2 * h, 1.0};
  if (k2 > 0) {
    const double k = std::sqrt(k2);
    return {std::cos(k * h), std::sin(k * h) / k, -k * std::sin(k * h), std::cos(k * h)};
  }
  const double k = std::sqrt(-k2);
  return {std::cosh(k * h), std::sinh(k * h) / k, k * std::sinh(k * h), std::cosh(k * h)};
}

template <class State, class Rhs>
void integrate(Rhs rhs, State& x, double a, double b, double rtol, double atol) {
  namespace ode = boost::numeric::odeint;
  auto stepper = ode::make_controlled<ode::runge_kutta_fehlberg78<State>>(atol, rtol);
  const double h0 = std::min(b - a, 0.05);
  try {
    ode::integrate_adaptive(stepper, rhs, x, a, b, h0);
  } catch (const std::exception& e) {
    throw NumericalError(std::string("edge ODE integration failed: ") + e.what());
  }
  for (double v : x)
    if (!std::isfinite(v)) throw NumericalError("edge ODE integration produced a non-finite value");
}

inline double wrap_pi(double d) { return std::remainder(d, 2 * pi); }

}  // namespace detail

/// Propagates the fundamental pair of -f'' + W f = z f along the view ed from
/// position a to position b (a <= b).
inline Transfer propagate(const EdgeData& ed, cplx z, double a, double b, double rtol = ode_rtol,
                          double atol = ode_atol) {
  if (b < a) throw std::invalid_argument("propagate: need a <= b");
  // m = [[C, S], [C', S']] relative to the start point
  std::array<cplx, 4> m{cplx(1.0), cplx(0.0), cplx(0.0), cplx(1.0)};
  for (const auto& seg : detail::segments(ed, a, b)) {
    const double h = seg.b - seg.a;
    if (seg.slope == 0.0) {
      auto t = detail::const_step(z - seg.w0, h);
      m = {t[0] * m[0] + t[1] * m[2], t[0] * m[1] + t[1] * m[3], t[2] * m[0] + t[3] * m[2],
           t[2] * m[1] + t[3] * m[3]};
      continue;
    }
    using St = std::array<double, 8>;
    St x{m[0].real(), m[0].imag(), m[2].real(), m[2].imag(), m[1].real(), m[1].imag(), m[3].real(), m[3].imag()};
    const double zr = z.real(), zi = z.imag();
    auto rhs = [&](const St& y, St& dy, double t) {
      const double q = seg.w0 + seg.slope * (t - seg.a) - zr;
      for (int j = 0; j < 8; j += 4) {
        dy[j] = y[j + 2];
        dy[j + 1] = y[j + 3];
        dy[j + 2] = q * y[j] + zi * y[j + 1];
        dy[j + 3] = q * y[j + 1] - zi * y[j];
      }
    };
    detail::integrate(rhs, x, seg.a, seg.b, rtol, atol);
    m = {cplx(x[0], x[1]), cplx(x[4], x[5]), cplx(x[2], x[3]), cplx(x[6], x[7])};
  }
  return {m[0], m[2], m[1], m[3]};
}

/// Real-parameter version that also counts zeros of S in (a, b).
inline RealTransfer propagate_real(const EdgeData& ed, double lambda, double a, double b, double rtol = ode_rtol,
                                   double atol = ode_atol) {
  if (b < a) throw std::invalid_argument("propagate_real: need a <= b");
  std::array<double, 4> m{1.0, 0.0, 0.0, 1.0};
  double theta = 0.0;
  for (const auto& seg : detail::segments(ed, a, b)) {
    const double h = seg.b - seg.a;
    if (seg.slope == 0.0) {
      const double k2 = lambda - seg.w0;
      const int pieces = std::max(1, static_cast<int>(std::ceil(std::sqrt(std::abs(k2)) * h)));
      const auto t = detail::const_step_real(k2, h / pieces);
      for (int p = 0; p < pieces; ++p) {
        m = {t[0] * m[0] + t[1] * m[2], t[0] * m[1] + t[1] * m[3], t[2] * m[0] + t[3] * m[2],
             t[2] * m[1] + t[3] * m[3]};
        theta += detail::wrap_pi(std::atan2(m[1], m[3]) - theta);
      }
      continue;
    }
    using St = std::array<double, 5>;
    St x{m[0], m[2], m[1], m[3], theta};
    auto rhs = [&](const St& y, St& dy, double t) {
      const double q = seg.w0 + seg.slope * (t - seg.a) - lambda;
      dy[0] = y[1];
      dy[1] = q * y[0];
      dy[2] = y[3];
      dy[3] = q * y[2];
      const double sn = std::sin(y[4]), cs = std::cos(y[4]);
      dy[4] = cs * cs - q * sn * sn;
    };
    detail::integrate(rhs, x, seg.a, seg.b, rtol, atol);
    m = {x[0], x[2], x[1], x[3]};
    // resynchronise the integrated angle with the solution itself
    theta = x[4] + detail::wrap_pi(std::atan2(m[1], m[3]) - x[4]);
  }
  RealTransfer out{m[0], m[2], m[1], m[3], 0};
  out.zeros = std::max(0, static_cast<int>(std::ceil(theta / pi - 1e-12)) - 1);
  return out;
}

/// Transfer together with the integrals of the fundamental pair over [a, b].
inline TransferIntegrals propagate_integrals(const EdgeData& ed, cplx z, double a, double b,
                                             double rtol = ode_rtol, double atol = ode_atol) {
  using St = std::array<double, 14>;
  // (C, C', S, S') as re/im pairs, then sigma1, sigma2, sigma3 as re/im pairs
  St x{};
  x[0] = 1.0;
  x[6] = 1.0;
  const double zr = z.real(), zi = z.imag();
  for (const auto& seg : detail::segments(ed, a, b)) {
    auto rhs = [&](const St& y, St& dy, double t) {
      const double q = seg.w0 + seg.slope * (t - seg.a) - zr;
      for (int j = 0; j < 8; j += 4) {
        dy[j] = y[j + 2];
        dy[j + 1] = y[j + 3];
        dy[j + 2] = q * y[j] + zi * y[j + 1];
        dy[j + 3] = q * y[j + 1] - zi * y[j];
      }
      const cplx C(y[0], y[1]), S(y[4], y[5]);
      dy[8] = std::norm(S);
      dy[9] = 0.0;
      dy[10] = std::norm(C);
      dy[11] = 0.0;
      const cplx cs = C * std::conj(S);
      dy[12] = cs.real();
      dy[13] = cs.imag();
    };
    detail::integrate(rhs, x, seg.a, seg.b, rtol, atol);
  }
  TransferIntegrals out;
  out.t = {cplx(x[0], x[1]), cplx(x[2], x[3]), cplx(x[4], x[5]), cplx(x[6], x[7])};
  out.sigma1 = cplx(x[8], x[9]);
  out.sigma2 = cplx(x[10], x[11]);
  out.sigma3 = cplx(x[12], x[13]);
  return out;
}

/// Fundamental solutions on one bond at spectral parameter z.
struct EdgeSolution {
  int bond = 0;
  double length = 0.0;
  cplx z;
  cplx C, Cp, S, Sp, E, Ep;  ///< values at x = L
  std::vector<double> grid_x;
  std::vector<cplx> grid_C, grid_Cp, grid_S, grid_Sp;
};

struct EdgeSolutionTable {
  cplx z;
  std::vector<EdgeSolution> bonds;  ///< indexed by bond id
};

inline std::pair<cplx, cplx> e_solution(const EdgeSolution& s, cplx z) {
  const cplx k = sqrt_upper(z);
  return {s.C - I_unit * k * s.S, s.Cp - I_unit * k * s.Sp};
}

inline EdgeSolution solve_fundamental(const EdgeData& edge, int dir, cplx z, int n_grid = 0) {
  const EdgeData view = edge.bond_view(dir);
  const double L = view.length();
  EdgeSolution out;
  out.bond = dir;
  out.length = L;
  out.z = z;
  if (n_grid >= 2) {
    Transfer acc;
    double x = 0.0;
    for (int i = 0; i < n_grid; ++i) {
      const double xi = L * i / (n_grid - 1);
      if (i > 0) {
        const Transfer t = propagate(view, z, x, xi);
        acc = {t.c * acc.c + t.s * acc.cp, t.cp * acc.c + t.sp * acc.cp, t.c * acc.s + t.s * acc.sp,
               t.cp * acc.s + t.sp * acc.sp};
        x = xi;
      }
      out.grid_x.push_back(xi);
      out.grid_C.push_back(acc.c);
      out.grid_Cp.push_back(acc.cp);
      out.grid_S.push_back(acc.s);
      out.grid_Sp.push_back(acc.sp);
    }
    out.C = acc.c;
    out.Cp = acc.cp;
    out.S = acc.s;
    out.Sp = acc.sp;
  } else {
    const Transfer t = propagate(view, z, 0.0, L);
    out.C = t.c;
    out.Cp = t.cp;
    out.S = t.s;
    out.Sp = t.sp;
  }
  std::tie(out.E, out.Ep) = e_solution(out, z);
  return out;
}

/// Endpoint data for every bond. Only the canonical direction is integrated;
/// the reverse bond follows from the constant Wronskian.
inline EdgeSolutionTable solve_all(const QuantumGraph& q, cplx z) {
  EdgeSolutionTable tab;
  tab.z = z;
  tab.bonds.resize(q.bond_count());
  for (int e = 0; e < q.edge_count(); ++e) {
    EdgeSolution fwd = solve_fundamental(q.edge(e), 0, z);
    fwd.bond = bond_of(e, 0);
    EdgeSolution rev = fwd;
    rev.bond = bond_of(e, 1);
    rev.C = fwd.Sp;
    rev.Cp = fwd.Cp;
    rev.S = fwd.S;
    rev.Sp = fwd.C;
    std::tie(rev.E, rev.Ep) = e_solution(rev, z);
    tab.bonds[fwd.bond] = fwd;
    tab.bonds[rev.bond] = rev;
  }
  return tab;
}

/// Dual functionals on [0, zeta] of a bond: Y pairs to f(0), Z pairs to f'(0)
/// for every solution f at the same z.
struct DualFunctionals {
  cplx z;
  double zeta = 0.0;
  cplx sigma1, sigma2, sigma3;
  double denominator = 0.0;
  std::vector<double> grid_x;
  std::vector<cplx> grid_Y, grid_Z;
  EdgeData view;

  /// (Y(x), Z(x)) at 0 <= x <= zeta.
  std::pair<cplx, cplx> at(double x) const {
    const Transfer t = propagate(view, z, 0.0, x);
    return {(sigma1 * t.c - sigma3 * t.s) / denominator, (sigma2 * t.s - std::conj(sigma3) * t.c) / denominator};
  }
};

inline DualFunctionals dual_functionals(const EdgeData& edge, int dir, cplx z, double zeta, int n_grid = 257) {
  const EdgeData view = edge.bond_view(dir);
  if (!(zeta > 0.0 && zeta <= view.length() * (1 + 1e-15))) throw ValidationError("dual_functionals: need 0 < zeta <= L");
  DualFunctionals d;
  d.z = z;
  d.zeta = zeta;
  d.view = view;
  const TransferIntegrals ti = propagate_integrals(view, z, 0.0, zeta);
  d.sigma1 = ti.sigma1;
  d.sigma2 = ti.sigma2;
  d.sigma3 = ti.sigma3;
  d.denominator = (ti.sigma1 * ti.sigma2).real() - std::norm(ti.sigma3);
  if (d.denominator < 1e-14) throw NumericalError("dual_functionals: degenerate denominator");
  for (int i = 0; i < n_grid; ++i) {
    const double x = zeta * i / (n_grid - 1);
    auto [y, zz] = d.at(x);
    d.grid_x.push_back(x);
    d.grid_Y.push_back(y);
    d.grid_Z.push_back(zz);
  }
  return d;
}

/// <Y, f> and <Z, f> with the pairing integral conj(.) * f over [0, zeta].
inline std::pair<cplx, cplx> dual_pairing(const DualFunctionals& d, const std::function<cplx(double)>& f) {
  using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
  // splitting at potential kinks keeps the integrand smooth per piece
  std::vector<double> xs{0.0};
  for (double x : d.view.breakpoints(0))
    if (x < d.zeta) xs.push_back(x);
  xs.push_back(d.zeta);
  cplx y{0.0}, z{0.0};
  for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
    auto gy = [&](double x) { return std::conj(d.at(x).first) * f(x); };
    auto gz = [&](double x) { return std::conj(d.at(x).second) * f(x); };
    y += GK::integrate(gy, xs[i], xs[i + 1], 8, 1e-12);
    z += GK::integrate(gz, xs[i], xs[i + 1], 8, 1e-12);
  }
  return {y, z};
}

}  // namespace qgs
