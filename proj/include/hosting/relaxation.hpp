#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hosting/branch_flow.hpp"
#include "hosting/cone_program.hpp"
#include "hosting/cone_solver.hpp"
#include "hosting/feeder_model.hpp"

namespace hosting {

struct HostingProgramIndex {
  std::vector<std::size_t> P, Q, l;  // per edge; l empty for the lossless program
  std::vector<std::size_t> v, p_pv;  // per node
  std::size_t p_sub = 0;
  std::vector<std::size_t> sigma;    // per edge cut slack, delta program only
  std::vector<std::size_t> cut_row;  // per edge inequality row, delta program only
};

enum class HostingObjective { max_pv, min_loss };

struct BuildOptions {
  HostingObjective objective = HostingObjective::max_pv;
  bool reverse_flow_limit = true;
  bool lossless = false;  // drop every l term and the cones
  bool cones = true;
};

class SolverFailure : public std::runtime_error {
 public:
  SolverFailure(const std::string& what, SolveStatus st) : std::runtime_error(what), status(st) {}
  SolveStatus status;
};

namespace detail {

inline std::string edge_label(const FeederModel& m, std::size_t k) {
  return m.nodes[m.edges[k].from].id + "-" + m.nodes[m.edges[k].to].id;
}

// Emits the hosting program in variables x = x0 + d; with prev == nullptr, x0 = 0.
inline std::pair<ConeProgram, HostingProgramIndex> build_hosting(const FeederModel& m, const BuildOptions& o,
                                                                  const BranchFlowState* prev,
                                                                  const std::string& prefix) {
  const std::size_t E = m.n_edges(), N = m.n_nodes();
  ConeProgram p;
  HostingProgramIndex ix;
  std::vector<double> x0;
  auto var = [&](const std::string& name, double lo, double hi, double base) {
    x0.push_back(base);
    return p.add_var(prefix + name, lo - base, hi - base);
  };

  for (std::size_t k = 0; k < E; ++k) {
    const std::string lab = "[" + edge_label(m, k) + "]";
    ix.P.push_back(var("P" + lab, -kInf, kInf, prev ? prev->P[k] : 0.0));
    ix.Q.push_back(var("Q" + lab, -kInf, kInf, prev ? prev->Q[k] : 0.0));
    if (!o.lossless) {
      const double ir = m.edges[k].i_rated;
      ix.l.push_back(var("l" + lab, 0.0, ir * ir, prev ? prev->l[k] : 0.0));
    }
  }
  for (std::size_t i = 0; i < N; ++i) {
    const std::string lab = "[" + m.nodes[i].id + "]";
    const bool sub = i == m.substation;
    ix.v.push_back(var("v" + lab, sub ? m.v_sub : m.v_min_sq, sub ? m.v_sub : m.v_max_sq, prev ? prev->v[i] : 0.0));
    ix.p_pv.push_back(
        var("pv" + lab, m.nodes[i].pv_lower, m.nodes[i].pv_upper, prev ? prev->p_pv[i] : 0.0));
  }
  ix.p_sub = var("P_sub", o.reverse_flow_limit ? 0.0 : -kInf, kInf, prev ? prev->p_sub : 0.0);

  // Rows written on absolute variables; the shift moves into the rhs.
  auto row = [&](LinearRows& rows, const Terms& t, double rhs, std::string name) {
    double shift = 0.0;
    for (const auto& [j, a] : t) shift += a * x0[j];
    rows.add(t, rhs - shift, prefix + std::move(name));
  };
  for (std::size_t k = 0; k < E; ++k) {
    const Edge& e = m.edges[k];
    const std::size_t j = e.to;
    const std::string lab = "[" + edge_label(m, k) + "]";
    Terms tp{{ix.P[k], 1.0}, {ix.p_pv[j], 1.0}}, tq{{ix.Q[k], 1.0}};
    for (std::size_t c : m.children[j]) {
      tp.push_back({ix.P[c], -1.0});
      tq.push_back({ix.Q[c], -1.0});
    }
    Terms tv{{ix.v[j], 1.0}, {ix.v[e.from], -1.0}, {ix.P[k], 2.0 * e.r}, {ix.Q[k], 2.0 * e.x}};
    if (!o.lossless) {
      tp.push_back({ix.l[k], -e.r});
      tq.push_back({ix.l[k], -e.x});
      tv.push_back({ix.l[k], -(e.r * e.r + e.x * e.x)});
    }
    row(p.eq, tp, m.load_p(j), "pbal" + lab);
    row(p.eq, tq, m.load_q(j), "qbal" + lab);
    row(p.eq, tv, 0.0, "vdrop" + lab);
  }
  {
    Terms t{{ix.p_sub, 1.0}, {ix.p_pv[m.substation], 1.0}};
    for (std::size_t c : m.children[m.substation]) t.push_back({ix.P[c], -1.0});
    row(p.eq, t, m.load_p(m.substation), "psub");
  }

  if (!o.lossless && o.cones) {
    for (std::size_t k = 0; k < E; ++k) {
      Rsoc c;
      c.u = ix.v[m.edges[k].from];
      c.w = ix.l[k];
      c.z = {ix.P[k], ix.Q[k]};
      c.u_off = x0[c.u];
      c.w_off = x0[c.w];
      c.z_off = {x0[c.z[0]], x0[c.z[1]]};
      c.name = prefix + "cone[" + edge_label(m, k) + "]";
      p.rsoc.push_back(std::move(c));
    }
  }

  if (o.objective == HostingObjective::max_pv) {
    bool fixed = true;
    for (std::size_t i = 0; i < N; ++i) {
      p.objective[ix.p_pv[i]] = -1.0;
      fixed = fixed && m.nodes[i].pv_lower == m.nodes[i].pv_upper;
    }
    // With every PV pinned the objective is constant and any l on the face is optimal;
    // price losses instead so the physical point is returned.
    if (fixed && !o.lossless)
      for (std::size_t k = 0; k < E; ++k) p.objective[ix.l[k]] = m.edges[k].r;
  } else {
    if (o.lossless) throw std::invalid_argument("loss objective needs current variables");
    for (std::size_t k = 0; k < E; ++k) p.objective[ix.l[k]] = m.edges[k].r;
  }
  return {std::move(p), std::move(ix)};
}

}  // namespace detail

inline std::pair<ConeProgram, HostingProgramIndex> build_relaxed_hosting(const FeederModel& m,
                                                                          const BuildOptions& o = {}) {
  m.validate();
  return detail::build_hosting(m, o, nullptr, "");
}

inline BranchFlowState extract_state(const ConeSolution& sol, const HostingProgramIndex& ix, const FeederModel& m) {
  if (sol.status != SolveStatus::optimal)
    throw SolverFailure(std::string("cannot extract state from a ") + to_string(sol.status) + " solution",
                        sol.status);
  BranchFlowState s(m.n_edges(), m.n_nodes());
  for (std::size_t k = 0; k < m.n_edges(); ++k) {
    s.P[k] = sol.x[ix.P[k]];
    s.Q[k] = sol.x[ix.Q[k]];
    s.l[k] = ix.l.empty() ? 0.0 : sol.x[ix.l[k]];
  }
  for (std::size_t i = 0; i < m.n_nodes(); ++i) {
    s.v[i] = sol.x[ix.v[i]];
    s.p_pv[i] = sol.x[ix.p_pv[i]];
  }
  s.p_sub = substation_export(m, s);
  if (std::abs(s.p_sub - sol.x[ix.p_sub]) > 1e-8)
    throw SolverFailure("substation export does not match root-edge flows", sol.status);
  return s;
}

// Constraints active at s, e.g. "voltage-upper:675", "reverse-flow", "pv-cap:652".
inline std::vector<std::string> binding_constraints(const FeederModel& m, const BranchFlowState& s,
                                                    double tol = 1e-6) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < m.n_nodes(); ++i) {
    if (i == m.substation) continue;
    if (s.v[i] >= m.v_max_sq - tol) out.push_back("voltage-upper:" + m.nodes[i].id);
    if (s.v[i] <= m.v_min_sq + tol) out.push_back("voltage-lower:" + m.nodes[i].id);
  }
  for (std::size_t k = 0; k < m.n_edges(); ++k) {
    const double ir = m.edges[k].i_rated;
    if (s.l[k] >= ir * ir - tol) out.push_back("thermal:" + detail::edge_label(m, k));
  }
  if (s.p_sub <= tol) out.push_back("reverse-flow");
  for (std::size_t i = 0; i < m.n_nodes(); ++i)
    if (m.nodes[i].pv_upper > m.nodes[i].pv_lower && s.p_pv[i] >= m.nodes[i].pv_upper - tol)
      out.push_back("pv-cap:" + m.nodes[i].id);
  return out;
}

struct RelaxedResult {
  ConeSolution solution;
  BranchFlowState state;
  GapVector gaps;
};

inline RelaxedResult solve_relaxed(const FeederModel& m, const BuildOptions& o = {}, const SolveOptions& so = {}) {
  auto [prog, ix] = build_relaxed_hosting(m, o);
  RelaxedResult r;
  r.solution = solve(prog, so);
  if (r.solution.status != SolveStatus::optimal)
    throw SolverFailure(std::string("relaxed program: ") + to_string(r.solution.status) + " " + r.solution.message,
                        r.solution.status);
  r.state = extract_state(r.solution, ix, m);
  r.gaps = feasibility_gap(m, r.state);
  return r;
}

// Lossless hosting LP; l is back-filled from the cone equality.
inline BranchFlowState lindistflow_init(const FeederModel& m, const SolveOptions& so = {}) {
  BuildOptions o;
  o.lossless = true;
  auto [prog, ix] = build_relaxed_hosting(m, o);
  ConeSolution sol = solve(prog, so);
  if (sol.status != SolveStatus::optimal)
    throw SolverFailure(std::string("linearized hosting LP: ") + to_string(sol.status), sol.status);
  BranchFlowState s = extract_state(sol, ix, m);
  for (std::size_t k = 0; k < m.n_edges(); ++k)
    s.l[k] = (s.P[k] * s.P[k] + s.Q[k] * s.Q[k]) / s.v[m.edges[k].from];
  return s;
}

}  // namespace hosting
