#include "qgs/io.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <functional>
#include <random>

using namespace qgs;
using namespace qgs::io;

namespace {

const std::string samples = QGS_SAMPLES_DIR;

std::string write_temp(const std::string& name, const std::string& text) {
  const auto p = std::filesystem::temp_directory_path() / ("qgs_io_" + name);
  std::ofstream(p) << text;
  return p.string();
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(HarnessIo, TriangleFixture) {
  const QuantumGraph q = parse_graph_file(samples + "/triangle.json");
  EXPECT_EQ(q.vertex_count(), 3);
  EXPECT_EQ(q.edge_count(), 3);
  for (int v = 0; v < 3; ++v) EXPECT_EQ(q.condition(v).kind, ConditionKind::kirchhoff);
  for (int e = 0; e < 3; ++e)
    for (double x : {0.0, 0.3, 1.0}) EXPECT_EQ(q.edge(e).potential(0, x), 0.0);
}

TEST(HarnessIo, NegativeLengthNamesTheEdge) {
  const std::string path = write_temp("neg.json", R"({"vertices": 3, "edges": [
    {"u": 0, "v": 1, "length": 1.0}, {"u": 1, "v": 2, "length": -1}]})");
  const std::string msg = error_of([&] { parse_graph_file(path); });
  EXPECT_NE(msg.find("edges[1]"), std::string::npos) << msg;
  EXPECT_NE(msg.find("edge 1"), std::string::npos) << msg;
  EXPECT_NE(msg.find(path), std::string::npos) << msg;
}

TEST(HarnessIo, SchemaViolationsAreReported) {
  const std::vector<std::pair<std::string, std::string>> cases = {
      {R"({"vertices": 2, "edges": [{"u": 0, "v": 1, "length": 1}], "colour": 1})", "unknown key \"colour\""},
      {R"({"vertices": 2, "edges": [{"u": 0, "v": 1, "len": 1}]})", "unknown key \"len\""},
      {R"({"vertices": 2, "edges": [{"u": 0, "v": 1}]})", "missing \"length\""},
      {R"({"edges": []})", "missing \"vertices\""},
      {R"({"vertices": 2, "edges": [{"u": 0, "v": 1, "length": "one"}]})", "edges[0].length"},
      {R"({"vertices": 2, "edges": [{"u": 0, "v": 1, "length": 1}],
           "conditions": [{"vertex": 0, "kind": "delta"}]})", "needs \"alpha\""},
      {R"({"vertices": 2, "edges": [{"u": 0, "v": 1, "length": 1}],
           "conditions": [{"vertex": 0, "kind": "robin"}]})", "unknown kind"},
      {R"({"vertices": 2, "edges": [{"u": 0, "v": 1, "length": 1}],
           "conditions": [{"vertex": 0, "kind": "dirichlet"}, {"vertex": 0, "kind": "neumann"}]})", "duplicate"},
      {R"({"vertices": 2, "edges": [{"u": 0, "v": 1, "length": 1}],
           "conditions": [{"vertex": 5, "kind": "dirichlet"}]})", "out of range"},
      {R"({"vertices": 2, "edges": [{"u": 0, "v": 0, "length": 1}]})", "self-loop"},
      {R"({"vertices": 2, "edges": [)", "parse"},
  };
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const std::string path = write_temp("bad" + std::to_string(i) + ".json", cases[i].first);
    const std::string msg = error_of([&] { parse_graph_file(path); });
    EXPECT_NE(msg.find(cases[i].second), std::string::npos) << i << ": " << msg;
  }
  EXPECT_NE(error_of([] { parse_graph_file("/nonexistent/graph.json"); }).find("cannot open"), std::string::npos);
}

TEST(HarnessIo, GraphSpecRoundTrip) {
  const GraphSpec gs = parse_graph_spec_file(samples + "/triangle_potential.json");
  const GraphSpec back = graph_spec_from_json(json::parse(graph_spec_to_json(gs).dump()));
  ASSERT_EQ(back.vertices, gs.vertices);
  ASSERT_EQ(back.edges.size(), gs.edges.size());
  for (std::size_t e = 0; e < gs.edges.size(); ++e) {
    EXPECT_EQ(back.edges[e].u, gs.edges[e].u);
    EXPECT_EQ(back.edges[e].length, gs.edges[e].length);
    EXPECT_EQ(back.edges[e].potential, gs.edges[e].potential);
  }
  for (int v = 0; v < gs.vertices; ++v) {
    EXPECT_EQ(back.conditions[v].kind, gs.conditions[v].kind);
    EXPECT_EQ(back.conditions[v].alpha, gs.conditions[v].alpha);
  }
  EXPECT_EQ(gs.conditions[1].kind, ConditionKind::delta);
  EXPECT_EQ(gs.conditions[1].alpha, -0.4);
}

TEST(HarnessIo, MatrixConditionRoundTrip) {
  const std::string text = R"({"vertices": 2, "edges": [{"u": 0, "v": 1, "length": 1}],
    "conditions": [{"vertex": 0, "matrix": [[[0, 1]]]}]})";
  const GraphSpec gs = graph_spec_from_json(json::parse(text));
  ASSERT_EQ(gs.conditions[0].kind, ConditionKind::matrix);
  EXPECT_EQ(gs.conditions[0].matrix(0, 0), cplx(0, 1));
  const GraphSpec back = graph_spec_from_json(graph_spec_to_json(gs));
  EXPECT_EQ(back.conditions[0].matrix(0, 0), cplx(0, 1));
}

TEST(HarnessIo, RunConfigRoundTripAndUnknownKeys) {
  RunConfig c;
  c.command = "green";
  c.params = {{"graph", "triangle.json"}, {"root", "e0:0.5"}, {"z", "1:5"}};
  const std::set<std::string> allowed = {"graph", "root", "z", "out"};
  const RunConfig back = RunConfig::from_json(json::parse(c.to_json().dump()), allowed);
  EXPECT_EQ(back, c);
  EXPECT_EQ(back.hash(), c.hash());
  RunConfig other = c;
  other.params["z"] = "1:6";
  EXPECT_NE(other.hash(), c.hash());
  json bad = c.to_json();
  bad["params"]["colour"] = "red";
  EXPECT_THROW(RunConfig::from_json(bad, allowed), ValidationError);
  bad = c.to_json();
  bad["extra"] = 1;
  EXPECT_THROW(RunConfig::from_json(bad, allowed), ValidationError);
}

TEST(HarnessIo, HashIsFnv1a) {
  // reference values of 64-bit FNV-1a
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a("foobar"), 0x85944171f73967e8ULL);
}

TEST(HarnessIo, CsvIsDeterministicWithProvenance) {
  RunConfig c{"spectrum", {{"lmax", "100"}}};
  auto render = [&] {
    std::ostringstream os;
    CsvWriter w(os, c, 42, {"index", "lambda", "note"});
    w.row({1LL, 1.0 / 3.0, std::string("a")});
    w.row({2LL, 0.1, std::string("b")});
    return os.str();
  };
  const std::string a = render(), b = render();
  EXPECT_EQ(a, b);
  EXPECT_EQ(a,
            "# schema=v1 command=spectrum config_hash=" + c.hash() +
                " seed=42\nindex,lambda,note\n1,0.33333333333333331,a\n2,0.10000000000000001,b\n");
  std::ostringstream os;
  CsvWriter w(os, c, 0, {"x"});
  EXPECT_THROW(w.row({1.0, 2.0}), std::logic_error);
}

TEST(HarnessIo, SeventeenDigitsRoundTrip) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double x = U(rng) * std::pow(10.0, (i % 40) - 20);
    EXPECT_EQ(std::stod(format_double(x)), x);
  }
  EXPECT_EQ(format_double(0.1), "0.10000000000000001");
}

TEST(HarnessIo, JsonDocumentCarriesProvenance) {
  RunConfig c{"green", {{"z", "1:5"}}};
  json payload{{"re", 0.1}, {"im", 1.0 / 3.0}, {"bad", std::numeric_limits<double>::quiet_NaN()}};
  const std::string doc = json_document(c, 7, payload);
  EXPECT_EQ(doc, json_document(c, 7, payload));
  EXPECT_NE(doc.find("\"im\": 0.33333333333333331"), std::string::npos) << doc;
  EXPECT_NE(doc.find("\"bad\": null"), std::string::npos) << doc;
  const json back = json::parse(doc);
  EXPECT_EQ(back["schema"], "v1");
  EXPECT_EQ(back["config_hash"], c.hash());
  EXPECT_EQ(back["seed"], 7);
  EXPECT_EQ(back["re"].get<double>(), 0.1);
  EXPECT_EQ(RunConfig::from_json(back["config"], {"z"}), c);
  EXPECT_TRUE(finite_or_null(std::numeric_limits<double>::infinity()).is_null());
}

TEST(HarnessIo, ArgumentParsers) {
  const Point r = parse_root("e3:0.25");
  EXPECT_EQ(r.bond, bond_of(3, 0));
  EXPECT_EQ(r.x, 0.25);
  EXPECT_EQ(parse_root("b5:1e-3").bond, 5);
  for (const char* s : {"e3", "x3:0.1", "e:0.1", "e-1:0.5", "e3:abc", "e3:0.1x"})
    EXPECT_THROW(parse_root(s), ValidationError) << s;
  EXPECT_EQ(parse_z("1:5"), cplx(1, 5));
  EXPECT_EQ(parse_z("-2.5:1e3"), cplx(-2.5, 1000));
  EXPECT_THROW(parse_z("1"), ValidationError);
  EXPECT_THROW(parse_z("1:2:3"), ValidationError);
  EXPECT_EQ(parse_number_list("0.1,0.025"), (std::vector<double>{0.1, 0.025}));
  EXPECT_THROW(parse_number_list("0.1,,2"), ValidationError);
  const TestFunction b = parse_chi("bump:1:16");
  EXPECT_EQ(b.lo, 1.0);
  EXPECT_EQ(b.hi, 16.0);
  EXPECT_GT(b(8.0), 0.0);
  EXPECT_EQ(b(20.0), 0.0);
  EXPECT_EQ(parse_chi("indicator:0:1")(0.5), 1.0);
  EXPECT_EQ(parse_chi("zero")(3.0), 0.0);
  for (const char* s : {"bump", "bump:2:1", "gauss:0:1", "bump:a:b"}) EXPECT_THROW(parse_chi(s), ValidationError) << s;
}
