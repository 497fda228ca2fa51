// qgs: command line front end for the quantum graph toolkit.

#include "qgs/qgs.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

using namespace qgs;
using io::json;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_validation = 2;
constexpr int exit_numerical = 3;
constexpr int exit_usage = 64;

/// Writes to --out when given, stdout otherwise.
void emit(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") {
    std::cout << text;
    return;
  }
  std::ofstream f(out);
  if (!f) throw ValidationError(out + ": cannot write");
  f << text;
}

struct Common {
  std::string out;
  std::uint64_t seed = 0;
  io::RunConfig cfg;
};

SpectralMethod method_from_string(const std::string& s) {
  if (s == "auto") return SpectralMethod::automatic;
  if (s == "scan") return SpectralMethod::secular_scan;
  if (s == "count") return SpectralMethod::vertex_count;
  throw ValidationError("method \"" + s + "\": expected auto, scan or count");
}

int run_spectrum(const std::string& path, double lmax, const std::string& method, const Common& c) {
  const QuantumGraph q = io::parse_graph_file(path);
  SpectralOptions opt;
  opt.method = method_from_string(method);
  const SpectralData sd = eigenvalues_up_to(q, lmax, opt);
  std::ostringstream os;
  io::CsvWriter w(os, c.cfg, c.seed, {"index", "lambda", "multiplicity", "cluster"});
  long long i = 0;
  for (const auto& lv : sd.levels)
    for (int m = 0; m < lv.multiplicity; ++m)
      w.row({++i, lv.lambda, static_cast<long long>(lv.multiplicity), static_cast<long long>(lv.unresolved_cluster)});
  emit(c.out, os.str());
  return exit_ok;
}

int run_green(const std::string& path, const std::string& root, const std::string& y, const std::string& z,
              const std::string& method, const Common& c) {
  const QuantumGraph q = io::parse_graph_file(path);
  const Point x0 = io::parse_root(root);
  const Point y0 = y.empty() ? x0 : io::parse_root(y);
  for (const Point& p : {x0, y0}) RootedQuantumGraph(q, p.bond, p.x);  // range checks
  const cplx zz = io::parse_z(z);
  GreenMethod gm = GreenMethod::direct;
  if (method == "neumann") gm = GreenMethod::neumann_series;
  else if (method != "direct") throw ValidationError("method \"" + method + "\": expected direct or neumann");
  const GreenFunction g(q, zz, gm);
  const cplx v = g(x0, y0);
  json payload{{"re", v.real()}, {"im", v.imag()}, {"x", root}, {"y", y.empty() ? root : y},
               {"z", {zz.real(), zz.imag()}}};
  if (zz.imag() > 0.0) payload["inverse_evolution_norm"] = io::finite_or_null(inverse_evolution_norm(evolution_operator(q, zz)));
  emit(c.out, io::json_document(c.cfg, c.seed, payload));
  return exit_ok;
}

int run_esm(const std::string& path, double lmax, const std::string& chi, const std::string& bins, const Common& c) {
  const QuantumGraph q = io::parse_graph_file(path);
  double top = lmax;
  std::optional<TestFunction> f;
  std::vector<double> edges;
  if (!chi.empty()) {
    f = io::parse_chi(chi);
    top = std::max(top, f->hi);
  }
  if (!bins.empty()) {
    edges = io::parse_number_list(bins);
    if (!std::is_sorted(edges.begin(), edges.end()) || edges.size() < 2)
      throw ValidationError("bins: need at least two increasing edges");
    top = std::max(top, edges.back());
  }
  if (!(top > 0.0)) throw ValidationError("esm: give --lmax, --chi or --bins");
  const SpectralData sd = eigenvalues_up_to(q, top);
  const EmpiricalMeasure mu(sd, q.total_length());
  json payload{{"total_length", q.total_length()}, {"lambda_max", top}, {"count", sd.count()},
               {"mass", mu.mass_up_to(top)}};
  if (f) payload["chi"] = {{"descriptor", chi}, {"value", mu.evaluate(*f)}};
  if (!edges.empty()) payload["histogram"] = {{"edges", edges}, {"mass", mu.histogram(edges)}};
  emit(c.out, io::json_document(c.cfg, c.seed, payload));
  return exit_ok;
}

int run_bs_dist(const std::string& a, const std::string& b, const std::string& ra, const std::string& rb, int kmax,
                bool strict, const Common& c) {
  const QuantumGraph qa = io::parse_graph_file(a), qb = io::parse_graph_file(b);
  const Point pa = io::parse_root(ra), pb = io::parse_root(rb);
  const RootedQuantumGraph A(qa, pa.bond, pa.x), B(qb, pb.bond, pb.x);
  IsoOptions opt;
  opt.strict_beta = strict;
  const DistanceReport rep = bs_distance(A, B, kmax, opt);
  json radii = json::array();
  for (const auto& r : rep.radii)
    radii.push_back({{"k", r.k}, {"isomorphic", r.isomorphic}, {"delta", io::finite_or_null(r.delta)}, {"value", r.value}});
  json payload{{"d_lower", rep.d_lower},
               {"d_upper", rep.d_upper},
               {"alpha_lower", rep.alpha_lower},
               {"alpha_upper", io::finite_or_null(rep.alpha_upper)},
               {"truncated", rep.truncated},
               {"radii", radii}};
  emit(c.out, io::json_document(c.cfg, c.seed, payload));
  return exit_ok;
}

int run_lift(const std::string& path, int n, int radius, const Common& c) {
  const QuantumGraph base = io::parse_graph_file(path);
  const QuantumGraph q = n_lift(base, n, c.seed);
  json payload{{"graph", io::graph_spec_to_json(io::graph_spec_of(q))},
               {"total_length", q.total_length()},
               {"injectivity_profile", injectivity_profile(q.graph(), radius)},
               {"base_injectivity_profile", injectivity_profile(base.graph(), radius)}};
  emit(c.out, io::json_document(c.cfg, c.seed, payload));
  return exit_ok;
}

struct ConvergeArgs {
  std::string family = "cycle", base, sizes = "16,32,64,128,256", chi = "bump:1:16", mode = "analytic";
  std::string iid_lengths;
  double length = 1.0;
  double iid_alpha = -1.0;
  int truncation = 0, radius = 3;
};

int run_converge(const ConvergeArgs& a, const Common& c) {
  EnsembleSpec spec;
  spec.family = family_from_string(a.family);
  spec.length = a.length;
  spec.seed = c.seed;
  if (!a.base.empty()) spec.base = std::make_shared<const QuantumGraph>(io::parse_graph_file(a.base));
  if (!a.iid_lengths.empty()) {
    const auto lh = io::parse_number_list(a.iid_lengths, ':');
    if (lh.size() != 2) throw ValidationError("iid-lengths: expected lo:hi");
    spec.iid_lengths = UniformLaw{lh[0], lh[1]};
  }
  if (a.iid_alpha >= 0.0) spec.iid_alpha = a.iid_alpha;
  std::vector<std::pair<EnsembleSpec, int>> runs;
  for (double n : io::parse_number_list(a.sizes)) {
    if (n != std::floor(n) || n < 1) throw ValidationError("sizes: expected positive integers");
    runs.push_back({spec, static_cast<int>(n)});
  }
  ConvergenceOptions opt;
  if (a.mode == "truncation") opt.mode = LimitMode::truncation;
  else if (a.mode != "analytic") throw ValidationError("mode \"" + a.mode + "\": expected analytic or truncation");
  opt.truncation_size = a.truncation;
  opt.profile_radius = a.radius;
  const auto rows = convergence_experiment(runs, io::parse_chi(a.chi), opt);
  std::vector<std::string> cols = {"N", "esm", "limit", "gap", "seed"};
  for (int r = 0; r <= a.radius; ++r) cols.push_back("inj_lt_" + std::to_string(r));
  std::ostringstream os;
  io::CsvWriter w(os, c.cfg, c.seed, cols);
  for (const auto& r : rows) {
    std::vector<io::CsvWriter::Cell> cells = {static_cast<long long>(r.N), r.esm, r.limit, r.gap,
                                               static_cast<long long>(r.seed)};
    for (double f : r.injectivity) cells.push_back(f);
    w.row(cells);
  }
  emit(c.out, os.str());
  return exit_ok;
}

/// Quick property checks touching every module.
int run_selftest() {
  struct Check {
    const char* name;
    std::function<bool()> run;
  };
  auto interval = [](double L, ConditionKind k) {
    GraphSpec gs;
    gs.vertices = 2;
    gs.edges.push_back({0, 1, L, {}});
    gs.conditions = {VertexCondition{k, 0.0, {}}, VertexCondition{k, 0.0, {}}};
    return build_quantum_graph(gs);
  };
  auto cycle = [](int n) {
    EnsembleSpec s;
    s.family = Family::cycle;
    return generate(s, n);
  };
  const std::vector<Check> checks = {
      {"vertex_conditions: kirchhoff unitary",
       [] { return unitarity_defect(kirchhoff_unitary(4)) < 1e-13 && unitarity_defect(delta_unitary(3, 0.7)) < 1e-13; }},
      {"edge_solver: wronskian",
       [] {
         const EdgeData ed(1.3, {0.0, 1.0, -0.5});
         const Transfer t = propagate(ed, cplx(2.0, 1.0), 0.0, 1.3);
         return std::abs(t.c * t.sp - t.s * t.cp - 1.0) < 1e-9;
       }},
      {"spectral: dirichlet interval",
       [&] {
         const SpectralData sd = eigenvalues_up_to(interval(pi, ConditionKind::dirichlet), 101.0);
         const auto f = sd.flat();
         if (f.size() != 10) return false;
         for (std::size_t n = 0; n < f.size(); ++n)
           if (std::abs(f[n] - double((n + 1) * (n + 1))) > 1e-8 * (n + 1) * (n + 1)) return false;
         return true;
       }},
      {"greens: herglotz and symmetry",
       [&] {
         const QuantumGraph q = cycle(3);
         const GreenFunction g(q, cplx(2.0, 0.5));
         const Point x{0, 0.3}, y{3, 0.6};
         return g(x, x).imag() > 0.0 && std::abs(g(x, y) - g(y, x)) < 1e-8;
       }},
      {"bs_metric: cycle distance",
       [&] {
         const RootedQuantumGraph a(cycle(4), 0, 0.5), b(cycle(6), 0, 0.5);
         return std::abs(bs_distance(a, b, 4).d_upper - 1.0 / 3.0) < 1e-15;
       }},
      {"ensembles: lift structure",
       [] {
         EnsembleSpec s;
         s.family = Family::complete;
         const QuantumGraph k4 = generate(s, 4);
         const QuantumGraph l = n_lift(k4, 8, 1);
         return l.vertex_count() == 32 && l.edge_count() == 48 && l.total_length() == 8 * k4.total_length();
       }},
      {"harness_io: graph round trip",
       [&] {
         const QuantumGraph q = cycle(5);
         const GraphSpec back = io::graph_spec_from_json(json::parse(io::graph_spec_to_json(io::graph_spec_of(q)).dump()));
         const QuantumGraph r = build_quantum_graph(back);
         return r.edge_count() == 5 && r.total_length() == q.total_length();
       }},
  };
  int failed = 0;
  for (const auto& c : checks) {
    bool ok = false;
    try {
      ok = c.run();
    } catch (const std::exception& e) {
      std::cout << c.name << ": " << e.what() << "\n";
    }
    std::cout << (ok ? "PASS " : "FAIL ") << c.name << "\n";
    failed += !ok;
  }
  return failed ? 1 : exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral and Green's function computations on quantum graphs"};
  app.require_subcommand(1);
  Common common;
  std::map<std::string, std::string> params;
  auto opt = [&](CLI::App* sub, const std::string& name, auto& var, const std::string& desc) {
    return sub->add_option(name, var, desc)->each([&params, name](const std::string& v) {
      std::string key = name;
      key.erase(0, key.find_first_not_of('-'));
      params[key] = v;
    });
  };
  auto add_common = [&](CLI::App* sub) {
    opt(sub, "--out", common.out, "output path, stdout if omitted");
    opt(sub, "--seed", common.seed, "random seed");
  };

  std::string graph, graph_b, root = "e0:0.5", root_b = "e0:0.5", y, z = "1:1", method = "auto", chi, bins;
  double lmax = 0.0;
  int kmax = 4, n = 2, radius = 3;
  bool strict = false;
  ConvergeArgs conv;

  auto* spectrum = app.add_subcommand("spectrum", "eigenvalues up to --lmax as CSV");
  opt(spectrum, "graph", graph, "graph JSON file")->required();
  opt(spectrum, "--lmax", lmax, "spectral cutoff")->required();
  opt(spectrum, "--method", method, "auto, scan or count");
  add_common(spectrum);

  auto* green = app.add_subcommand("green", "Green's function value as JSON");
  std::string gmethod = "direct";
  opt(green, "graph", graph, "graph JSON file")->required();
  opt(green, "--root", root, "first point, eK:x or bK:x");
  opt(green, "--y", y, "second point, defaults to --root");
  opt(green, "--z", z, "spectral parameter re:im")->required();
  opt(green, "--method", gmethod, "direct or neumann");
  add_common(green);

  auto* esm = app.add_subcommand("esm", "empirical spectral measure as JSON");
  opt(esm, "graph", graph, "graph JSON file")->required();
  opt(esm, "--lmax", lmax, "spectral cutoff");
  opt(esm, "--chi", chi, "test function bump:a:b, indicator:a:b or hat:a:b");
  opt(esm, "--bins", bins, "comma separated histogram edges");
  add_common(esm);

  auto* bs = app.add_subcommand("bs-dist", "rooted distance between two graphs as JSON");
  opt(bs, "graph", graph, "first graph")->required();
  opt(bs, "other", graph_b, "second graph")->required();
  opt(bs, "--root", root, "root of the first graph");
  opt(bs, "--root-b", root_b, "root of the second graph");
  opt(bs, "--kmax", kmax, "largest ball radius");
  bs->add_flag("--strict", strict, "compare bond orders at every vertex")->each([&](const std::string&) {
    params["strict"] = "true";
  });
  add_common(bs);

  auto* lift = app.add_subcommand("lift", "random N-lift of a graph as JSON");
  opt(lift, "graph", graph, "base graph")->required();
  opt(lift, "--n", n, "number of sheets")->required();
  opt(lift, "--radius", radius, "injectivity profile radius");
  add_common(lift);

  auto* converge = app.add_subcommand("converge", "spectral measure convergence table as CSV");
  opt(converge, "--family", conv.family, "cycle, interval, star, complete or n_lift");
  opt(converge, "--base", conv.base, "base graph for n_lift");
  opt(converge, "--sizes", conv.sizes, "comma separated N values, increasing");
  opt(converge, "--chi", conv.chi, "test function");
  opt(converge, "--mode", conv.mode, "analytic or truncation");
  opt(converge, "--truncation", conv.truncation, "size of the truncation graph");
  opt(converge, "--length", conv.length, "edge length");
  opt(converge, "--iid-lengths", conv.iid_lengths, "uniform edge lengths lo:hi");
  opt(converge, "--iid-alpha", conv.iid_alpha, "uniform delta strengths on [-A, A]");
  opt(converge, "--radius", conv.radius, "injectivity profile radius");
  add_common(converge);

  auto* selftest = app.add_subcommand("selftest", "quick property checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_usage;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    common.cfg.command = sub->get_name();
    common.cfg.params = params;
    if (sub == spectrum) return run_spectrum(graph, lmax, method, common);
    if (sub == green) return run_green(graph, root, y, z, gmethod, common);
    if (sub == esm) return run_esm(graph, lmax, chi, bins, common);
    if (sub == bs) return run_bs_dist(graph, graph_b, root, root_b, kmax, strict, common);
    if (sub == lift) return run_lift(graph, n, radius, common);
    if (sub == converge) return run_converge(conv, common);
    if (sub == selftest) return run_selftest();
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_validation;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return exit_numerical;
  }
  return exit_usage;
}
