#pragma once

#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "hosting/branch_flow.hpp"
#include "hosting/relaxation.hpp"

namespace hosting {

struct IterationConfig {
  double gamma = 0.9;
  double alpha = 0.7;
  double epsilon = 1e-3;
  int max_outer = 50;
  double penalty = 1.0;        // weight on cut slack; <= 0 makes the cut hard
  double residual_tol = 1e-6;  // flow residual required at termination
  bool start_relaxed = false;  // start from the relaxed optimum instead of the lossless LP
  bool timing = true;
  SolveOptions solver;

  void validate() const {
    if (!(gamma > 0 && gamma < 1)) throw std::invalid_argument("gamma must lie in (0, 1)");
    if (!(alpha > 0 && alpha < 1)) throw std::invalid_argument("alpha must lie in (0, 1)");
    if (!(epsilon > 0)) throw std::invalid_argument("epsilon must be positive");
    if (max_outer < 1) throw std::invalid_argument("max_outer must be at least 1");
    if (!std::isfinite(penalty)) throw std::invalid_argument("penalty must be finite");
    if (!(residual_tol > 0)) throw std::invalid_argument("residual tolerance must be positive");
  }
};

struct IterationRecord {
  int k = 0;
  double max_abs_gap = 0.0;
  std::vector<double> gaps;
  double objective = 0.0;  // total PV, per-unit
  double residual = 0.0;
  double slack = 0.0;
  double gamma = 0.0;
  std::string status;
  double ms = 0.0;
};

struct IterationTrace {
  std::vector<IterationRecord> records;
};

enum class RunStatus { converged, not_converged, solver_failure, audit_failure };

inline const char* to_string(RunStatus s) {
  switch (s) {
    case RunStatus::converged: return "converged";
    case RunStatus::not_converged: return "not-converged";
    case RunStatus::solver_failure: return "solver-failure";
    case RunStatus::audit_failure: return "audit-failure";
  }
  return "?";
}

struct HandoffAudit {
  bool passed = false;
  double max_residual = 0.0;
  double bound_violation = 0.0;
  double sweep_v_min = 0.0;  // realized voltage magnitudes, pu
  double sweep_v_max = 0.0;
  double sweep_p_sub = 0.0;
  double sweep_i_excess = 0.0;
  std::string worst;
};

struct HostingResult {
  RunStatus status = RunStatus::not_converged;
  std::string message;
  double total_pv = 0.0;  // per-unit
  double total_pv_kw = 0.0;
  std::vector<double> per_node_pv;
  BranchFlowState initial_state;
  BranchFlowState final_state;
  IterationTrace trace;
  std::vector<std::string> binding;
  HandoffAudit audit;
};

// The shifted program in deltas around prev, with the linearized gap cut.
inline std::pair<ConeProgram, HostingProgramIndex> build_delta_program(const FeederModel& m,
                                                                        const BranchFlowState& prev, double gamma,
                                                                        double penalty = 0.0,
                                                                        bool require_consistent = true) {
  m.validate();
  check_dims(m, prev);
  if (require_consistent && max_abs(flow_residuals(m, prev)) > 1e-6)
    throw FlowError("previous state violates the flow equations");
  auto [p, ix] = detail::build_hosting(m, BuildOptions{}, &prev, "d");
  const GapVector g = feasibility_gap(m, prev);
  for (std::size_t k = 0; k < m.n_edges(); ++k) {
    const std::size_t i = m.edges[k].from;
    const std::string lab = "[" + detail::edge_label(m, k) + "]";
    Terms t{{ix.P[k], -2.0 * prev.P[k]}, {ix.Q[k], -2.0 * prev.Q[k]}, {ix.v[i], prev.l[k]}, {ix.l[k], prev.v[i]}};
    if (penalty > 0) {
      std::size_t s = p.add_var("sigma" + lab, 0.0, kInf, penalty);
      ix.sigma.push_back(s);
      t.push_back({s, -1.0});
    }
    ix.cut_row.push_back(p.ineq.add(t, (1.0 - gamma) * g.e[k], "cut" + lab));
  }
  return {std::move(p), std::move(ix)};
}

inline BranchFlowState extract_delta(const ConeSolution& sol, const HostingProgramIndex& ix, const FeederModel& m) {
  BranchFlowState d(m.n_edges(), m.n_nodes());
  for (std::size_t k = 0; k < m.n_edges(); ++k) {
    d.P[k] = sol.x[ix.P[k]];
    d.Q[k] = sol.x[ix.Q[k]];
    d.l[k] = sol.x[ix.l[k]];
  }
  for (std::size_t i = 0; i < m.n_nodes(); ++i) {
    d.v[i] = sol.x[ix.v[i]];
    d.p_pv[i] = sol.x[ix.p_pv[i]];
  }
  d.p_sub = sol.x[ix.p_sub];
  return d;
}

inline BranchFlowState update_state(const FeederModel& m, const BranchFlowState& prev, const BranchFlowState& delta,
                                    double alpha) {
  check_dims(m, prev);
  check_dims(m, delta);
  BranchFlowState s = prev;
  auto upd = [&](std::vector<double>& a, const std::vector<double>& d) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += alpha * d[i];
  };
  upd(s.P, delta.P);
  upd(s.Q, delta.Q);
  upd(s.l, delta.l);
  upd(s.v, delta.v);
  upd(s.p_pv, delta.p_pv);
  s.p_sub = substation_export(m, s);
  return s;
}

inline double total(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

struct HandoffTolerances {
  double residual = 1e-6;
  double bounds = 1e-6;
  double sweep = 1e-4;
};

// Checks s against the model and pushes its injections through the exact sweep.
inline HandoffAudit audit_handoff(const FeederModel& m, const BranchFlowState& s, HandoffTolerances tol = {}) {
  HandoffAudit a;
  a.max_residual = max_abs(flow_residuals(m, s));
  double worst = 0.0;
  auto note = [&](double viol, const std::string& what) {
    if (viol > worst) {
      worst = viol;
      a.worst = what;
    }
  };
  for (std::size_t i = 0; i < m.n_nodes(); ++i) {
    const Node& nd = m.nodes[i];
    note(nd.pv_lower - s.p_pv[i], "pv-lower:" + nd.id);
    note(s.p_pv[i] - nd.pv_upper, "pv-upper:" + nd.id);
    if (i == m.substation) continue;
    note(m.v_min_sq - s.v[i], "voltage-lower:" + nd.id);
    note(s.v[i] - m.v_max_sq, "voltage-upper:" + nd.id);
  }
  for (std::size_t k = 0; k < m.n_edges(); ++k)
    note(s.l[k] - m.edges[k].i_rated * m.edges[k].i_rated, "thermal:" + detail::edge_label(m, k));
  note(-s.p_sub, "reverse-flow");
  a.bound_violation = worst;

  bool sweep_ok = true;
  try {
    BranchFlowState x = power_flow_sweep(m, s.p_pv);
    a.sweep_v_min = kInf;
    a.sweep_v_max = 0.0;
    for (std::size_t i = 0; i < m.n_nodes(); ++i) {
      a.sweep_v_min = std::min(a.sweep_v_min, std::sqrt(x.v[i]));
      a.sweep_v_max = std::max(a.sweep_v_max, std::sqrt(x.v[i]));
    }
    a.sweep_p_sub = x.p_sub;
    for (std::size_t k = 0; k < m.n_edges(); ++k)
      a.sweep_i_excess = std::max(a.sweep_i_excess, std::sqrt(x.l[k]) - m.edges[k].i_rated);
    const double vlo = std::sqrt(m.v_min_sq), vhi = std::sqrt(m.v_max_sq);
    sweep_ok = a.sweep_v_min >= vlo - tol.sweep && a.sweep_v_max <= vhi + tol.sweep &&
               a.sweep_p_sub >= -tol.sweep && a.sweep_i_excess <= tol.sweep;
    if (!sweep_ok && a.worst.empty()) a.worst = "sweep";
  } catch (const FlowError& e) {
    sweep_ok = false;
    a.worst = e.what();
  }
  a.passed = a.max_residual <= tol.residual && a.bound_violation <= tol.bounds && sweep_ok;
  if (!a.passed && a.worst.empty()) a.worst = "flow-residual";
  return a;
}

// Near-optimal points are good enough for a step: the outer loop re-measures everything.
struct StepAcceptance {
  double feas = 1e-6;
  double gap = 1e-4;
};

inline bool acceptable_step(const ConeProgram& p, const ConeSolution& sol, StepAcceptance acc = {}) {
  if (sol.status == SolveStatus::optimal) return true;
  if (sol.status != SolveStatus::iteration_limit || sol.x.size() != p.n_vars) return false;
  return audit(p, sol.x).max() <= acc.feas && sol.duality_gap_estimate <= acc.gap * (1.0 + std::abs(sol.obj));
}

inline HostingResult run(const FeederModel& m, const IterationConfig& cfg) {
  cfg.validate();
  m.validate();
  HostingResult res;
  using clock = std::chrono::steady_clock;

  BranchFlowState s;
  try {
    s = cfg.start_relaxed ? solve_relaxed(m, {}, cfg.solver).state : lindistflow_init(m, cfg.solver);
  } catch (const SolverFailure& e) {
    res.status = RunStatus::solver_failure;
    res.message = std::string("initialization failed: ") + e.what();
    return res;
  }
  res.initial_state = s;

  for (int k = 1; k <= cfg.max_outer; ++k) {
    const auto t0 = clock::now();
    IterationRecord rec;
    rec.k = k;
    rec.gamma = cfg.gamma;
    auto [prog, ix] = build_delta_program(m, s, cfg.gamma, cfg.penalty, false);
    ConeSolution sol = solve(prog, cfg.solver);
    if (!acceptable_step(prog, sol)) {
      // One retry with a looser contraction.
      rec.gamma = 0.5 * (1.0 + cfg.gamma);
      std::tie(prog, ix) = build_delta_program(m, s, rec.gamma, cfg.penalty, false);
      sol = solve(prog, cfg.solver);
    }
    const bool ok = acceptable_step(prog, sol);
    rec.status = sol.status == SolveStatus::optimal ? "optimal" : ok ? "inaccurate" : to_string(sol.status);
    if (!ok) {
      rec.max_abs_gap = feasibility_gap(m, s).max_abs;
      rec.objective = total(s.p_pv);
      rec.ms = cfg.timing ? std::chrono::duration<double, std::milli>(clock::now() - t0).count() : 0.0;
      res.trace.records.push_back(rec);
      res.status = RunStatus::solver_failure;
      res.message = "delta program " + rec.status + " at iteration " + std::to_string(k) +
                    (sol.message.empty() ? "" : " (" + sol.message + ")");
      break;
    }
    for (std::size_t j : ix.sigma) rec.slack += sol.x[j];
    s = update_state(m, s, extract_delta(sol, ix, m), cfg.alpha);
    const GapVector g = feasibility_gap(m, s);
    rec.max_abs_gap = g.max_abs;
    rec.gaps = g.e;
    rec.objective = total(s.p_pv);
    rec.residual = max_abs(flow_residuals(m, s));
    rec.ms = cfg.timing ? std::chrono::duration<double, std::milli>(clock::now() - t0).count() : 0.0;
    res.trace.records.push_back(rec);
    if (rec.max_abs_gap <= cfg.epsilon && rec.residual <= cfg.residual_tol) {
      res.status = RunStatus::converged;
      break;
    }
  }
  if (res.status == RunStatus::not_converged)
    res.message = "no convergence within " + std::to_string(cfg.max_outer) + " iterations";

  res.final_state = s;
  res.per_node_pv = s.p_pv;
  res.total_pv = total(s.p_pv);
  res.total_pv_kw = res.total_pv * m.base_kva;
  res.binding = binding_constraints(m, s);
  res.audit = audit_handoff(m, s);
  if (res.status == RunStatus::converged && !res.audit.passed) {
    res.status = RunStatus::audit_failure;
    res.message = "post-audit failed: " + res.audit.worst;
  }
  return res;
}

}  // namespace hosting
