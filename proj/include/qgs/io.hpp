#pragma once

#include "qgs/common.hpp"
#include "qgs/graph_core.hpp"
#include "qgs/spectral.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <variant>

namespace qgs::io {

using json = nlohmann::json;

inline constexpr const char* schema_version = "v1";

/// 17 significant digits, the fixed output format.
inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace detail {

inline void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ValidationError(where + ": expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key())) throw ValidationError(where + ": unknown key \"" + it.key() + "\"");
}

inline const json& require(const json& obj, const std::string& key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ValidationError(where + ": missing \"" + key + "\"");
  return *it;
}

inline double number(const json& j, const std::string& where) {
  if (!j.is_number()) throw ValidationError(where + ": expected a number");
  return j.get<double>();
}

inline int integer(const json& j, const std::string& where) {
  if (!j.is_number_integer()) throw ValidationError(where + ": expected an integer");
  return j.get<int>();
}

inline cplx complex_entry(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2) throw ValidationError(where + ": expected [re, im]");
  return {number(j[0], where + "[0]"), number(j[1], where + "[1]")};
}

inline CMat matrix(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw ValidationError(where + ": expected a non-empty array");
  // rows of [re, im] pairs, or a flat row-major list of d*d pairs
  if (j[0].is_array() && !j[0].empty() && j[0][0].is_array()) {
    const int d = static_cast<int>(j.size());
    CMat m(d, d);
    for (int r = 0; r < d; ++r) {
      const std::string w = where + "[" + std::to_string(r) + "]";
      if (!j[r].is_array() || static_cast<int>(j[r].size()) != d) throw ValidationError(w + ": row length must be " + std::to_string(d));
      for (int c = 0; c < d; ++c) m(r, c) = complex_entry(j[r][c], w + "[" + std::to_string(c) + "]");
    }
    return m;
  }
  const int n = static_cast<int>(j.size());
  const int d = static_cast<int>(std::lround(std::sqrt(n)));
  if (d * d != n) throw ValidationError(where + ": flat matrix needs a square number of entries");
  CMat m(d, d);
  for (int i = 0; i < n; ++i) m(i / d, i % d) = complex_entry(j[i], where + "[" + std::to_string(i) + "]");
  return m;
}

}  // namespace detail

/// GraphSpec from the JSON graph format. Unknown keys are rejected.
inline GraphSpec graph_spec_from_json(const json& j) {
  using namespace detail;
  reject_unknown(j, {"vertices", "edges", "conditions", "beta"}, "graph");
  GraphSpec gs;
  gs.vertices = integer(require(j, "vertices", "graph"), "vertices");
  if (gs.vertices < 1) throw ValidationError("vertices: must be >= 1");
  const json& edges = require(j, "edges", "graph");
  if (!edges.is_array()) throw ValidationError("edges: expected an array");
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const std::string w = "edges[" + std::to_string(i) + "]";
    const json& e = edges[i];
    reject_unknown(e, {"u", "v", "length", "potential"}, w);
    GraphSpec::Edge ed;
    ed.u = integer(require(e, "u", w), w + ".u");
    ed.v = integer(require(e, "v", w), w + ".v");
    ed.length = number(require(e, "length", w), w + ".length");
    if (!(ed.length > 0.0) || !std::isfinite(ed.length))
      throw ValidationError(w + ".length: edge " + std::to_string(i) + " must have positive finite length");
    if (auto it = e.find("potential"); it != e.end()) {
      if (!it->is_array()) throw ValidationError(w + ".potential: expected an array");
      for (std::size_t k = 0; k < it->size(); ++k)
        ed.potential.push_back(number((*it)[k], w + ".potential[" + std::to_string(k) + "]"));
    }
    gs.edges.push_back(std::move(ed));
  }
  gs.conditions.assign(gs.vertices, VertexCondition{});
  std::vector<bool> seen(gs.vertices, false);
  if (auto it = j.find("conditions"); it != j.end()) {
    if (!it->is_array()) throw ValidationError("conditions: expected an array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const std::string w = "conditions[" + std::to_string(i) + "]";
      const json& c = (*it)[i];
      reject_unknown(c, {"vertex", "kind", "alpha", "matrix"}, w);
      const int v = integer(require(c, "vertex", w), w + ".vertex");
      if (v < 0 || v >= gs.vertices) throw ValidationError(w + ".vertex: out of range");
      if (seen[v]) throw ValidationError(w + ".vertex: duplicate condition for vertex " + std::to_string(v));
      seen[v] = true;
      VertexCondition vc;
      if (c.contains("matrix")) {
        if (c.contains("kind") && c["kind"] != "matrix") throw ValidationError(w + ": \"matrix\" conflicts with \"kind\"");
        vc.kind = ConditionKind::matrix;
        vc.matrix = matrix(c["matrix"], w + ".matrix");
      } else {
        const json& k = require(c, "kind", w);
        if (!k.is_string()) throw ValidationError(w + ".kind: expected a string");
        const std::string ks = k.get<std::string>();
        if (ks == "kirchhoff") vc.kind = ConditionKind::kirchhoff;
        else if (ks == "dirichlet") vc.kind = ConditionKind::dirichlet;
        else if (ks == "neumann") vc.kind = ConditionKind::neumann;
        else if (ks == "delta") vc.kind = ConditionKind::delta;
        else throw ValidationError(w + ".kind: unknown kind \"" + ks + "\"");
        if (c.contains("alpha")) {
          if (vc.kind != ConditionKind::delta) throw ValidationError(w + ".alpha: only valid for kind delta");
          vc.alpha = number(c["alpha"], w + ".alpha");
        } else if (vc.kind == ConditionKind::delta) {
          throw ValidationError(w + ": delta needs \"alpha\"");
        }
      }
      gs.conditions[v] = vc;
    }
  }
  if (auto it = j.find("beta"); it != j.end()) {
    if (!it->is_array() || static_cast<int>(it->size()) != gs.vertices)
      throw ValidationError("beta: expected one neighbour list per vertex");
    for (int v = 0; v < gs.vertices; ++v) {
      const std::string w = "beta[" + std::to_string(v) + "]";
      if (!(*it)[v].is_array()) throw ValidationError(w + ": expected an array");
      std::vector<int> order;
      for (std::size_t k = 0; k < (*it)[v].size(); ++k)
        order.push_back(integer((*it)[v][k], w + "[" + std::to_string(k) + "]"));
      gs.beta.push_back(std::move(order));
    }
  }
  return gs;
}

inline json graph_spec_to_json(const GraphSpec& gs) {
  json j;
  j["vertices"] = gs.vertices;
  j["edges"] = json::array();
  for (const auto& e : gs.edges) {
    json je{{"u", e.u}, {"v", e.v}, {"length", e.length}};
    if (!e.potential.empty()) je["potential"] = e.potential;
    j["edges"].push_back(je);
  }
  j["conditions"] = json::array();
  for (int v = 0; v < static_cast<int>(gs.conditions.size()); ++v) {
    const auto& c = gs.conditions[v];
    json jc{{"vertex", v}};
    if (c.kind == ConditionKind::matrix) {
      json rows = json::array();
      for (Eigen::Index r = 0; r < c.matrix.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index s = 0; s < c.matrix.cols(); ++s) row.push_back({c.matrix(r, s).real(), c.matrix(r, s).imag()});
        rows.push_back(row);
      }
      jc["matrix"] = rows;
    } else {
      jc["kind"] = to_string(c.kind);
      if (c.kind == ConditionKind::delta) jc["alpha"] = c.alpha;
    }
    j["conditions"].push_back(jc);
  }
  if (!gs.beta.empty()) j["beta"] = gs.beta;
  return j;
}

/// GraphSpec describing q; bond orders are written as neighbour lists.
inline GraphSpec graph_spec_of(const QuantumGraph& q) {
  GraphSpec gs;
  gs.vertices = q.vertex_count();
  for (int e = 0; e < q.edge_count(); ++e) {
    auto [u, v] = q.graph().edge(e);
    const EdgeData& ed = q.edge(e);
    GraphSpec::Edge out{u, v, ed.length(), {}};
    if (!ed.is_constant() || ed.potential(0, 0.0) != 0.0)
      for (int i = 0; i < ed.sample_count(); ++i) out.potential.push_back(ed.potential_node(0, i));
    gs.edges.push_back(std::move(out));
  }
  for (int v = 0; v < q.vertex_count(); ++v) {
    gs.conditions.push_back(q.condition(v));
    std::vector<int> order;
    for (int b : q.beta(v)) order.push_back(q.terminus(b));
    gs.beta.push_back(std::move(order));
  }
  return gs;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(path + ": cannot open");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

inline GraphSpec parse_graph_spec_file(const std::string& path) {
  try {
    return graph_spec_from_json(read_json_file(path));
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    if (msg.rfind(path, 0) == 0) throw;
    throw ValidationError(path + ": " + msg);
  }
}

inline QuantumGraph parse_graph_file(const std::string& path,
                                     const std::optional<ValidationBounds>& bounds = std::nullopt) {
  const GraphSpec gs = parse_graph_spec_file(path);
  try {
    return build_quantum_graph(gs, bounds);
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

/// "bK:x" (bond K) or "eK:x" (edge K, stored orientation).
inline Point parse_root(const std::string& s) {
  const auto colon = s.find(':');
  if (s.size() < 4 || (s[0] != 'b' && s[0] != 'e') || colon == std::string::npos)
    throw ValidationError("root \"" + s + "\": expected bK:x or eK:x");
  try {
    std::size_t used = 0;
    const int id = std::stoi(s.substr(1, colon - 1), &used);
    if (used != colon - 1 || id < 0) throw std::invalid_argument("id");
    const std::string xs = s.substr(colon + 1);
    const double x = std::stod(xs, &used);
    if (used != xs.size()) throw std::invalid_argument("x");
    return {s[0] == 'b' ? id : bond_of(id, 0), x};
  } catch (const std::logic_error&) {
    throw ValidationError("root \"" + s + "\": expected bK:x or eK:x");
  }
}

inline std::vector<double> parse_number_list(const std::string& s, char sep = ',') {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, sep)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::logic_error&) {
      throw ValidationError("\"" + s + "\": bad number \"" + tok + "\"");
    }
  }
  if (out.empty()) throw ValidationError("\"" + s + "\": empty list");
  return out;
}

/// "re:im".
inline cplx parse_z(const std::string& s) {
  const auto v = parse_number_list(s, ':');
  if (v.size() != 2) throw ValidationError("z \"" + s + "\": expected re:im");
  return {v[0], v[1]};
}

/// "bump:a:b", "indicator:a:b", "hat:a:b" or "zero".
inline TestFunction parse_chi(const std::string& s) {
  if (s == "zero") return TestFunction::zero();
  const auto colon = s.find(':');
  const std::string kind = s.substr(0, colon);
  if (colon == std::string::npos) throw ValidationError("chi \"" + s + "\": expected kind:a:b");
  const auto ab = parse_number_list(s.substr(colon + 1), ':');
  if (ab.size() != 2 || !(ab[0] < ab[1])) throw ValidationError("chi \"" + s + "\": need a < b");
  if (kind == "bump") return TestFunction::bump(ab[0], ab[1]);
  if (kind == "indicator") return TestFunction::indicator(ab[0], ab[1]);
  if (kind == "hat") return TestFunction::hat(ab[0], ab[1]);
  throw ValidationError("chi \"" + s + "\": unknown kind \"" + kind + "\"");
}

/// Command parameters as strings, keyed by option name.
struct RunConfig {
  std::string command;
  std::map<std::string, std::string> params;

  /// Canonical text used for hashing.
  std::string canonical() const {
    std::string s = "command=" + command + "\n";
    for (const auto& [k, v] : params) s += k + "=" + v + "\n";
    return s;
  }
  std::string hash() const { return hex64(fnv1a(canonical())); }

  json to_json() const { return json{{"command", command}, {"params", params}}; }

  static RunConfig from_json(const json& j, const std::set<std::string>& allowed) {
    detail::reject_unknown(j, {"command", "params"}, "config");
    RunConfig c;
    const json& cmd = detail::require(j, "command", "config");
    if (!cmd.is_string()) throw ValidationError("config.command: expected a string");
    c.command = cmd.get<std::string>();
    if (auto it = j.find("params"); it != j.end()) {
      if (!it->is_object()) throw ValidationError("config.params: expected an object");
      for (auto p = it->begin(); p != it->end(); ++p) {
        if (!allowed.count(p.key())) throw ValidationError("config.params: unknown key \"" + p.key() + "\"");
        if (!p->is_string()) throw ValidationError("config.params." + p.key() + ": expected a string");
        c.params[p.key()] = p->get<std::string>();
      }
    }
    return c;
  }

  bool operator==(const RunConfig&) const = default;
};

/// Tabular output with a two-line provenance preamble.
class CsvWriter {
 public:
  CsvWriter(std::ostream& out, const RunConfig& cfg, std::uint64_t seed, const std::vector<std::string>& columns)
      : out_(out), width_(columns.size()) {
    out_ << "# schema=" << schema_version << " command=" << cfg.command << " config_hash=" << cfg.hash()
         << " seed=" << seed << "\n";
    for (std::size_t i = 0; i < columns.size(); ++i) out_ << (i ? "," : "") << columns[i];
    out_ << "\n";
  }

  /// Cells are numbers or preformatted strings.
  using Cell = std::variant<double, long long, std::string>;

  void row(const std::vector<Cell>& cells) {
    if (cells.size() != width_) throw std::logic_error("csv row width mismatch");
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ",";
      std::visit(
          [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, double>) out_ << format_double(v);
            else out_ << v;
          },
          cells[i]);
    }
    out_ << "\n";
  }

 private:
  std::ostream& out_;
  std::size_t width_;
};

namespace detail {

inline void dump(std::ostream& os, const json& j, int indent, int depth) {
  const std::string pad(indent * (depth + 1), ' '), close(indent * depth, ' ');
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) {
        os << "{}";
        return;
      }
      os << "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) os << ",\n";
        first = false;
        os << pad << json(it.key()).dump() << ": ";
        dump(os, it.value(), indent, depth + 1);
      }
      os << "\n" << close << "}";
      return;
    }
    case json::value_t::array: {
      if (j.empty()) {
        os << "[]";
        return;
      }
      os << "[";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) os << ", ";
        dump(os, j[i], indent, depth + 1);
      }
      os << "]";
      return;
    }
    case json::value_t::number_float: {
      const double x = j.get<double>();
      os << (std::isfinite(x) ? format_double(x) : json(nullptr).dump());
      return;
    }
    default:
      os << j.dump();
  }
}

}  // namespace detail

/// Serializes payload with the schema, config hash and seed; floats at 17 digits.
inline std::string json_document(const RunConfig& cfg, std::uint64_t seed, json payload) {
  payload["schema"] = schema_version;
  payload["config_hash"] = cfg.hash();
  payload["seed"] = seed;
  payload["config"] = cfg.to_json();
  std::ostringstream os;
  detail::dump(os, payload, 2, 0);
  os << "\n";
  return os.str();
}

/// Infinite values are written as JSON null, so callers encode them explicitly.
inline json finite_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

}  // namespace qgs::io
