#pragma once

#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hosting/convex_iteration.hpp"
#include "hosting/relaxation.hpp"

namespace hosting {

#ifndef HOSTING_VERSION
#define HOSTING_VERSION "0.0.0"
#endif

using Json = nlohmann::ordered_json;

struct RunManifest {
  std::string command;
  std::string feeder;       // as given on the command line
  std::string feeder_path;  // resolved file
  double load_mult = 1.0;
  double gamma = 0.9;
  double alpha = 0.7;
  double epsilon = 1e-3;
  int max_outer = 50;
  double penalty = 1.0;
  std::string out_dir;
  std::string version = HOSTING_VERSION;
  std::string timestamp = "1970-01-01T00:00:00Z";
};

inline std::string fmt_num(double v, int digits = 12) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

inline std::string iso_utc(long long epoch) {
  std::time_t t = static_cast<std::time_t>(epoch);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::vector<std::pair<std::string, std::string>> manifest_fields(const RunManifest& m) {
  return {{"command", m.command},
          {"feeder", m.feeder},
          {"feeder_path", m.feeder_path},
          {"load_mult", fmt_num(m.load_mult, 17)},
          {"gamma", fmt_num(m.gamma, 17)},
          {"alpha", fmt_num(m.alpha, 17)},
          {"epsilon", fmt_num(m.epsilon, 17)},
          {"max_outer", std::to_string(m.max_outer)},
          {"penalty", fmt_num(m.penalty, 17)},
          {"out_dir", m.out_dir},
          {"version", m.version},
          {"timestamp", m.timestamp}};
}

inline Json manifest_json(const RunManifest& m) {
  Json j = Json::object();
  for (const auto& [k, v] : manifest_fields(m)) j[k] = v;
  return j;
}

inline RunManifest manifest_from_json(const Json& j) {
  RunManifest m;
  auto str = [&](const char* k, std::string& dst) {
    if (j.contains(k)) dst = j.at(k).get<std::string>();
  };
  auto num = [&](const char* k, double& dst) {
    if (j.contains(k)) dst = std::stod(j.at(k).get<std::string>());
  };
  str("command", m.command);
  str("feeder", m.feeder);
  str("feeder_path", m.feeder_path);
  num("load_mult", m.load_mult);
  num("gamma", m.gamma);
  num("alpha", m.alpha);
  num("epsilon", m.epsilon);
  if (j.contains("max_outer")) m.max_outer = std::stoi(j.at("max_outer").get<std::string>());
  num("penalty", m.penalty);
  str("out_dir", m.out_dir);
  str("version", m.version);
  str("timestamp", m.timestamp);
  return m;
}

// "# key=value" lines for CSV outputs.
inline std::string manifest_csv_header(const RunManifest& m) {
  std::string s;
  for (const auto& [k, v] : manifest_fields(m)) s += "# " + k + "=" + v + "\n";
  return s;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::filesystem::create_directories(p.parent_path().empty() ? "." : p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << text;
}

inline Json state_json(const FeederModel& m, const BranchFlowState& s) {
  Json edges = Json::array();
  const GapVector g = feasibility_gap(m, s);
  for (std::size_t k = 0; k < m.n_edges(); ++k)
    edges.push_back({{"from", m.nodes[m.edges[k].from].id},
                     {"to", m.nodes[m.edges[k].to].id},
                     {"P_pu", s.P[k]},
                     {"Q_pu", s.Q[k]},
                     {"l_pu", s.l[k]},
                     {"gap_pu2", g.e[k]}});
  Json nodes = Json::array();
  for (std::size_t i = 0; i < m.n_nodes(); ++i)
    nodes.push_back({{"id", m.nodes[i].id},
                     {"v_pu2", s.v[i]},
                     {"pv_pu", s.p_pv[i]},
                     {"pv_kw", s.p_pv[i] * m.base_kva}});
  return {{"p_sub_pu", s.p_sub}, {"nodes", nodes}, {"edges", edges}};
}

// Reads the state written by state_json back onto model m.
inline BranchFlowState state_from_json(const FeederModel& m, const Json& j) {
  BranchFlowState s(m.n_edges(), m.n_nodes());
  const Json& nodes = j.at("nodes");
  const Json& edges = j.at("edges");
  if (nodes.size() != m.n_nodes() || edges.size() != m.n_edges())
    throw std::runtime_error("result state does not match the feeder");
  for (std::size_t i = 0; i < m.n_nodes(); ++i) {
    const std::size_t at = m.index_of(nodes[i].at("id").get<std::string>());
    s.v[at] = nodes[i].at("v_pu2").get<double>();
    s.p_pv[at] = nodes[i].at("pv_pu").get<double>();
  }
  for (const Json& e : edges) {
    const std::size_t to = m.index_of(e.at("to").get<std::string>());
    const long k = m.parent_edge[to];
    if (k < 0 || m.nodes[m.edges[static_cast<std::size_t>(k)].from].id != e.at("from").get<std::string>())
      throw std::runtime_error("result edge not in feeder");
    s.P[static_cast<std::size_t>(k)] = e.at("P_pu").get<double>();
    s.Q[static_cast<std::size_t>(k)] = e.at("Q_pu").get<double>();
    s.l[static_cast<std::size_t>(k)] = e.at("l_pu").get<double>();
  }
  s.p_sub = substation_export(m, s);
  return s;
}

inline std::string relax_gaps_csv(const RunManifest& man, const FeederModel& m, const GapVector& g) {
  std::string s = manifest_csv_header(man) + "edge,from,to,gap_pu2\n";
  for (std::size_t k = 0; k < m.n_edges(); ++k)
    s += std::to_string(k) + "," + m.nodes[m.edges[k].from].id + "," + m.nodes[m.edges[k].to].id + "," +
         fmt_num(g.e[k]) + "\n";
  return s;
}

inline std::string trace_csv(const RunManifest& man, const FeederModel& m, const IterationTrace& t) {
  std::string s = manifest_csv_header(man) + "iter,max_abs_gap,objective_kw,status,ms\n";
  for (const IterationRecord& r : t.records) {
    char ms[32];
    std::snprintf(ms, sizeof ms, "%.3f", r.ms);
    s += std::to_string(r.k) + "," + fmt_num(r.max_abs_gap) + "," + fmt_num(r.objective * m.base_kva) + "," +
         r.status + "," + ms + "\n";
  }
  return s;
}

// One row per iteration, one column per edge.
inline std::string trace_gaps_csv(const RunManifest& man, const FeederModel& m, const IterationTrace& t) {
  std::string s = manifest_csv_header(man) + "iter";
  for (std::size_t k = 0; k < m.n_edges(); ++k) s += "," + detail::edge_label(m, k);
  s += "\n";
  for (const IterationRecord& r : t.records) {
    s += std::to_string(r.k);
    for (std::size_t k = 0; k < m.n_edges(); ++k) s += "," + (k < r.gaps.size() ? fmt_num(r.gaps[k]) : "");
    s += "\n";
  }
  return s;
}

inline Json audit_json(const HandoffAudit& a) {
  return {{"passed", a.passed},
          {"max_flow_residual", a.max_residual},
          {"bound_violation", a.bound_violation},
          {"sweep_v_min_pu", a.sweep_v_min},
          {"sweep_v_max_pu", a.sweep_v_max},
          {"sweep_p_sub_pu", a.sweep_p_sub},
          {"sweep_current_excess_pu", a.sweep_i_excess},
          {"worst", a.worst}};
}

inline Json hosting_result_json(const RunManifest& man, const FeederModel& m, const HostingResult& r) {
  Json trace = Json::array();
  for (const IterationRecord& x : r.trace.records)
    trace.push_back({{"iter", x.k},
                     {"max_abs_gap", x.max_abs_gap},
                     {"objective_kw", x.objective * m.base_kva},
                     {"flow_residual", x.residual},
                     {"cut_slack", x.slack},
                     {"gamma", x.gamma},
                     {"status", x.status}});
  Json j;
  j["manifest"] = manifest_json(man);
  j["status"] = to_string(r.status);
  j["message"] = r.message;
  j["base_kva"] = m.base_kva;
  j["total_pv_pu"] = r.total_pv;
  j["total_pv_kw"] = r.total_pv_kw;
  j["iterations"] = r.trace.records.size();
  j["max_abs_gap"] = r.trace.records.empty() ? 0.0 : r.trace.records.back().max_abs_gap;
  j["binding"] = r.binding;
  j["audit"] = audit_json(r.audit);
  j["trace"] = trace;
  j["state"] = state_json(m, r.final_state);
  return j;
}

}  // namespace hosting
