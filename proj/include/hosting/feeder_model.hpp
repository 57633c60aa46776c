#pragma once

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hosting {

// Thermal rating used when a file leaves rated_amps blank (per-unit current).
inline constexpr double kRatingSentinel = 10.0;

class FeederError : public std::runtime_error {
 public:
  FeederError(const std::string& msg, int line = 0)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + msg : msg),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

struct Node {
  std::string id;
  double load_p = 0.0;  // base load, per-unit; scaled by FeederModel::load_mult
  double load_q = 0.0;
  double pv_upper = 0.0;
  double pv_lower = 0.0;
};

struct Edge {
  std::size_t from = 0;  // parent node index
  std::size_t to = 0;    // child node index
  double r = 0.0;
  double x = 0.0;
  double i_rated = kRatingSentinel;
};

struct FeederModel {
  std::vector<Node> nodes;
  std::vector<Edge> edges;
  std::size_t substation = 0;
  double base_kv = 1.0;
  double base_kva = 1000.0;
  double v_sub = 1.0;
  double v_min_sq = 0.95 * 0.95;
  double v_max_sq = 1.05 * 1.05;
  double load_mult = 1.0;

  // Derived topology, filled by finalize().
  std::vector<long> parent_edge;                  // per node, -1 at the root
  std::vector<std::vector<std::size_t>> children;  // per node, outgoing edges
  std::vector<std::size_t> order;                  // edges, parents before children

  std::size_t n_nodes() const { return nodes.size(); }
  std::size_t n_edges() const { return edges.size(); }
  double load_p(std::size_t i) const { return nodes[i].load_p * load_mult; }
  double load_q(std::size_t i) const { return nodes[i].load_q * load_mult; }
  double z_base() const { return base_kv * base_kv * 1000.0 / base_kva; }
  double i_base() const { return base_kva / base_kv; }

  std::size_t index_of(std::string_view id) const {
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (nodes[i].id == id) return i;
    throw FeederError("unknown node id '" + std::string(id) + "'");
  }

  double total_load_p() const {
    double s = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) s += load_p(i);
    return s;
  }

  void finalize();
  void validate() const;
};

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

inline std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

inline double parse_number(const std::string& s, int line, const char* field) {
  if (s.empty()) throw FeederError(std::string("missing value for ") + field, line);
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(v))
    throw FeederError(std::string("bad number '") + s + "' for " + field, line);
  return v;
}

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Union-find used to reject cycles at the offending edge line.
struct Dsu {
  std::vector<std::size_t> p;
  explicit Dsu(std::size_t n) : p(n) { std::iota(p.begin(), p.end(), 0); }
  std::size_t find(std::size_t a) {
    while (p[a] != a) a = p[a] = p[p[a]];
    return a;
  }
  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    p[a] = b;
    return true;
  }
};

}  // namespace detail

// Orients edges away from the substation and builds the traversal caches.
inline void FeederModel::finalize() {
  const std::size_t n = nodes.size();
  if (n == 0) throw FeederError("feeder has no nodes");
  if (substation >= n) throw FeederError("missing substation");
  if (edges.size() + 1 != n) throw FeederError("non-radial topology: edge count must be node count - 1");

  std::vector<std::vector<std::size_t>> adj(n);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    adj[edges[e].from].push_back(e);
    adj[edges[e].to].push_back(e);
  }
  parent_edge.assign(n, -1);
  children.assign(n, {});
  order.clear();
  std::vector<char> seen(n, 0);
  std::vector<std::size_t> queue{substation};
  seen[substation] = 1;
  for (std::size_t head = 0; head < queue.size(); ++head) {
    std::size_t u = queue[head];
    for (std::size_t e : adj[u]) {
      Edge& ed = edges[e];
      std::size_t w = ed.from == u ? ed.to : ed.from;
      if (seen[w]) continue;
      if (ed.from != u) std::swap(ed.from, ed.to);
      seen[w] = 1;
      parent_edge[w] = static_cast<long>(e);
      children[u].push_back(e);
      order.push_back(e);
      queue.push_back(w);
    }
  }
  if (queue.size() != n) throw FeederError("non-radial topology: feeder is not connected");
}

inline void FeederModel::validate() const {
  if (!(base_kv > 0) || !(base_kva > 0)) throw FeederError("base kv and kva must be positive");
  if (!(v_sub > 0)) throw FeederError("substation voltage must be positive");
  if (!(v_min_sq > 0) || !(v_min_sq <= v_max_sq)) throw FeederError("voltage window is empty");
  if (!(load_mult > 0)) throw FeederError("load multiplier must be positive");
  std::map<std::string, int> ids;
  for (const Node& nd : nodes) {
    if (nd.id.empty()) throw FeederError("empty node id");
    if (ids[nd.id]++) throw FeederError("duplicate node id '" + nd.id + "'");
    if (nd.load_p < 0 || nd.load_q < 0) throw FeederError("negative load at node '" + nd.id + "'");
    if (nd.pv_lower > nd.pv_upper) throw FeederError("pv lower bound exceeds upper at node '" + nd.id + "'");
  }
  for (const Edge& e : edges) {
    if (e.from >= nodes.size() || e.to >= nodes.size()) throw FeederError("edge endpoint out of range");
    if (e.r < 0 || e.x < 0) throw FeederError("negative impedance");
    if (e.r == 0 && e.x == 0) throw FeederError("zero impedance edge");
    if (!(e.i_rated > 0)) throw FeederError("current rating must be positive");
  }
}

// Parses the sectioned feeder text format and converts to per-unit.
inline FeederModel parse_feeder(const std::string& text) {
  enum class Sec { none, base, nodes, edges } sec = Sec::none;
  std::map<std::string, std::pair<std::string, int>> base;
  struct RawNode {
    std::vector<std::string> f;
    int line;
  };
  std::vector<RawNode> raw_nodes, raw_edges;

  std::istringstream in(text);
  std::string ln;
  int lineno = 0;
  while (std::getline(in, ln)) {
    ++lineno;
    if (auto h = ln.find('#'); h != std::string::npos) ln.erase(h);
    std::string t = detail::trim(ln);
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t == "[base]") sec = Sec::base;
      else if (t == "[nodes]") sec = Sec::nodes;
      else if (t == "[edges]") sec = Sec::edges;
      else throw FeederError("unknown section " + t, lineno);
      continue;
    }
    switch (sec) {
      case Sec::none:
        throw FeederError("data outside of a section", lineno);
      case Sec::base: {
        auto eq = t.find('=');
        if (eq == std::string::npos) throw FeederError("expected key=value", lineno);
        base[detail::trim(t.substr(0, eq))] = {detail::trim(t.substr(eq + 1)), lineno};
        break;
      }
      case Sec::nodes:
        raw_nodes.push_back({detail::split_csv(t), lineno});
        break;
      case Sec::edges:
        raw_edges.push_back({detail::split_csv(t), lineno});
        break;
    }
  }

  FeederModel m;
  auto num = [&](const char* key, double dflt, bool required) {
    auto it = base.find(key);
    if (it == base.end()) {
      if (required) throw FeederError(std::string("missing [base] ") + key);
      return dflt;
    }
    return detail::parse_number(it->second.first, it->second.second, key);
  };
  for (const auto& [k, v] : base) {
    static const char* known[] = {"kv", "kva", "vsub_pu", "vmin_pu", "vmax_pu", "substation", "load_mult"};
    bool ok = false;
    for (const char* kk : known) ok = ok || k == kk;
    if (!ok) throw FeederError("unknown [base] key '" + k + "'", v.second);
  }
  m.base_kv = num("kv", 0, true);
  m.base_kva = num("kva", 0, true);
  if (!(m.base_kv > 0) || !(m.base_kva > 0)) throw FeederError("base kv and kva must be positive");
  const double vs = num("vsub_pu", 1.0, false);
  const double vmin = num("vmin_pu", 0.95, false);
  const double vmax = num("vmax_pu", 1.05, false);
  m.v_sub = vs * vs;
  m.v_min_sq = vmin * vmin;
  m.v_max_sq = vmax * vmax;
  m.load_mult = num("load_mult", 1.0, false);

  if (raw_nodes.empty()) throw FeederError("no [nodes] rows");
  const double kva = m.base_kva, zb = m.z_base(), ib = m.i_base();
  std::map<std::string, std::size_t> idx;
  for (const auto& rn : raw_nodes) {
    const auto& f = rn.f;
    if (f.size() != 4 && f.size() != 5)
      throw FeederError("node row needs id,load_kw,load_kvar,pv_max_kw[,pv_min_kw]", rn.line);
    Node nd;
    nd.id = f[0];
    if (nd.id.empty()) throw FeederError("empty node id", rn.line);
    if (idx.count(nd.id)) throw FeederError("duplicate node id '" + nd.id + "'", rn.line);
    nd.load_p = detail::parse_number(f[1], rn.line, "load_kw") / kva;
    nd.load_q = detail::parse_number(f[2], rn.line, "load_kvar") / kva;
    nd.pv_upper = detail::parse_number(f[3], rn.line, "pv_max_kw") / kva;
    nd.pv_lower = f.size() == 5 && !f[4].empty() ? detail::parse_number(f[4], rn.line, "pv_min_kw") / kva : 0.0;
    if (nd.load_p < 0 || nd.load_q < 0) throw FeederError("negative load", rn.line);
    if (nd.pv_lower > nd.pv_upper) throw FeederError("pv_min_kw exceeds pv_max_kw", rn.line);
    idx[nd.id] = m.nodes.size();
    m.nodes.push_back(nd);
  }

  detail::Dsu dsu(m.nodes.size());
  std::vector<char> has_parent(m.nodes.size(), 0);
  for (const auto& re : raw_edges) {
    const auto& f = re.f;
    if (f.size() != 4 && f.size() != 5) throw FeederError("edge row needs from,to,r_ohm,x_ohm,rated_amps", re.line);
    auto a = idx.find(f[0]), b = idx.find(f[1]);
    if (a == idx.end()) throw FeederError("edge references unknown node '" + f[0] + "'", re.line);
    if (b == idx.end()) throw FeederError("edge references unknown node '" + f[1] + "'", re.line);
    if (a->second == b->second) throw FeederError("non-radial topology: self loop", re.line);
    Edge e;
    e.from = a->second;
    e.to = b->second;
    double r = detail::parse_number(f[2], re.line, "r_ohm");
    double x = detail::parse_number(f[3], re.line, "x_ohm");
    if (r < 0 || x < 0) throw FeederError("negative impedance", re.line);
    if (r == 0 && x == 0) throw FeederError("zero impedance edge", re.line);
    e.r = r / zb;
    e.x = x / zb;
    if (f.size() == 5 && !f[4].empty()) {
      double amps = detail::parse_number(f[4], re.line, "rated_amps");
      if (!(amps > 0)) throw FeederError("rated_amps must be positive", re.line);
      e.i_rated = amps / ib;
    }
    if (!dsu.unite(e.from, e.to)) throw FeederError("non-radial topology: edge closes a cycle", re.line);
    has_parent[e.to] = 1;
    m.edges.push_back(e);
  }

  if (auto it = base.find("substation"); it != base.end()) {
    auto s = idx.find(it->second.first);
    if (s == idx.end()) throw FeederError("missing substation '" + it->second.first + "'", it->second.second);
    m.substation = s->second;
  } else {
    std::size_t roots = 0;
    for (std::size_t i = 0; i < m.nodes.size(); ++i)
      if (!has_parent[i]) {
        m.substation = i;
        ++roots;
      }
    if (roots != 1) throw FeederError("missing substation: add substation=ID to [base]");
  }
  m.finalize();
  m.validate();
  return m;
}

inline FeederModel load_feeder_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw FeederError("cannot read feeder file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_feeder(ss.str());
}

// Writes the model back in file units; parse_feeder inverts it up to rounding.
inline std::string serialize_feeder(const FeederModel& m) {
  using detail::fmt17;
  const double kva = m.base_kva, zb = m.z_base(), ib = m.i_base();
  std::ostringstream o;
  o << "[base]\n";
  o << "kv=" << fmt17(m.base_kv) << "\n";
  o << "kva=" << fmt17(m.base_kva) << "\n";
  o << "vsub_pu=" << fmt17(std::sqrt(m.v_sub)) << "\n";
  o << "vmin_pu=" << fmt17(std::sqrt(m.v_min_sq)) << "\n";
  o << "vmax_pu=" << fmt17(std::sqrt(m.v_max_sq)) << "\n";
  o << "substation=" << m.nodes[m.substation].id << "\n";
  if (m.load_mult != 1.0) o << "load_mult=" << fmt17(m.load_mult) << "\n";
  o << "\n[nodes]\n";
  for (const Node& nd : m.nodes) {
    o << nd.id << "," << fmt17(nd.load_p * kva) << "," << fmt17(nd.load_q * kva) << ","
      << fmt17(nd.pv_upper * kva);
    if (nd.pv_lower != 0.0) o << "," << fmt17(nd.pv_lower * kva);
    o << "\n";
  }
  o << "\n[edges]\n";
  for (const Edge& e : m.edges) {
    o << m.nodes[e.from].id << "," << m.nodes[e.to].id << "," << fmt17(e.r * zb) << "," << fmt17(e.x * zb) << ",";
    if (e.i_rated != kRatingSentinel) o << fmt17(e.i_rated * ib);
    o << "\n";
  }
  return o.str();
}

// Returns a copy with the load multiplier composed; base loads are untouched.
inline FeederModel scale_loads(const FeederModel& m, double multiplier) {
  if (!(multiplier > 0) || !std::isfinite(multiplier))
    throw FeederError("load multiplier must be positive");
  FeederModel out = m;
  out.load_mult = m.load_mult * multiplier;
  return out;
}

}  // namespace hosting
