#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>

#include "hosting/report.hpp"

namespace hosting {

#ifndef HOSTING_DATA_DIR
#define HOSTING_DATA_DIR "data"
#endif

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitSolver = 3, kExitNoConvergence = 4, kExitAudit = 5 };

// A path, or the name of a bundled feeder ("ieee13", "two_bus", ...).
inline std::string resolve_feeder(const std::string& name) {
  namespace fs = std::filesystem;
  if (fs::is_regular_file(name)) return name;
  const char* env = std::getenv("HOSTING_DATA_DIR");
  const fs::path dir = env && *env ? fs::path(env) : fs::path(HOSTING_DATA_DIR);
  for (const fs::path& p : {dir / name, dir / (name + ".feeder")})
    if (fs::is_regular_file(p)) return p.string();
  throw FeederError("cannot find feeder '" + name + "'");
}

inline FeederModel load_scenario(RunManifest& man) {
  man.feeder_path = resolve_feeder(man.feeder);
  return scale_loads(load_feeder_file(man.feeder_path), man.load_mult);
}

struct RelaxOptions {
  HostingObjective objective = HostingObjective::max_pv;
  SolveOptions solver;
};

inline int cmd_relax(RunManifest man, std::ostream& out, const RelaxOptions& opt = {}) {
  man.command = "relax";
  FeederModel m;
  try {
    m = load_scenario(man);
  } catch (const FeederError& e) {
    out << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  BuildOptions bo;
  bo.objective = opt.objective;
  bo.reverse_flow_limit = opt.objective == HostingObjective::max_pv;
  RelaxedResult r;
  try {
    r = solve_relaxed(m, bo, opt.solver);
  } catch (const SolverFailure& e) {
    out << "solver failure: " << e.what() << "\n";
    return kExitSolver;
  }
  const double total = hosting::total(r.state.p_pv);
  const std::vector<std::string> binding = binding_constraints(m, r.state);

  Json j;
  j["manifest"] = manifest_json(man);
  j["status"] = "optimal";
  j["objective"] = opt.objective == HostingObjective::max_pv ? "max-pv" : "min-loss";
  j["base_kva"] = m.base_kva;
  j["total_pv_pu"] = total;
  j["total_pv_kw"] = total * m.base_kva;
  j["min_gap"] = r.gaps.min;
  j["max_abs_gap"] = r.gaps.max_abs;
  j["max_abs_gap_edge"] = detail::edge_label(m, r.gaps.argmax);
  j["binding"] = binding;
  j["solver"] = {{"iterations", r.solution.iterations},
                 {"max_primal_residual", r.solution.max_primal_residual},
                 {"duality_gap", r.solution.duality_gap_estimate}};
  j["state"] = state_json(m, r.state);
  const std::filesystem::path dir = man.out_dir.empty() ? "." : man.out_dir;
  write_text(dir / "result.json", j.dump(2) + "\n");
  write_text(dir / "gaps.csv", relax_gaps_csv(man, m, r.gaps));

  out << "relaxed " << man.feeder << " x" << fmt_num(man.load_mult) << ": total PV " << fmt_num(total * m.base_kva, 8)
      << " kW, min gap " << fmt_num(r.gaps.min, 6) << " pu^2 at " << detail::edge_label(m, r.gaps.argmax) << "\n";
  out << "binding:";
  for (const std::string& b : binding) out << " " << b;
  out << "\n";
  return kExitOk;
}

inline int cmd_iterate(RunManifest man, std::ostream& out, const IterationConfig& base = {}) {
  man.command = "iterate";
  IterationConfig cfg = base;
  cfg.gamma = man.gamma;
  cfg.alpha = man.alpha;
  cfg.epsilon = man.epsilon;
  cfg.max_outer = man.max_outer;
  cfg.penalty = man.penalty;
  FeederModel m;
  try {
    cfg.validate();
    m = load_scenario(man);
  } catch (const std::exception& e) {
    out << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  const HostingResult r = run(m, cfg);
  const std::filesystem::path dir = man.out_dir.empty() ? "." : man.out_dir;
  write_text(dir / "result.json", hosting_result_json(man, m, r).dump(2) + "\n");
  write_text(dir / "trace.csv", trace_csv(man, m, r.trace));
  write_text(dir / "gaps.csv", trace_gaps_csv(man, m, r.trace));

  out << "iterate " << man.feeder << " x" << fmt_num(man.load_mult) << ": " << to_string(r.status) << " after "
      << r.trace.records.size() << " iterations, total PV " << fmt_num(r.total_pv_kw, 8) << " kW";
  if (!r.trace.records.empty()) out << ", max gap " << fmt_num(r.trace.records.back().max_abs_gap, 4);
  out << "\n";
  if (!r.message.empty()) out << r.message << "\n";
  switch (r.status) {
    case RunStatus::converged: return kExitOk;
    case RunStatus::not_converged: return kExitNoConvergence;
    case RunStatus::solver_failure: return kExitSolver;
    case RunStatus::audit_failure: return kExitAudit;
  }
  return kExitSolver;
}

struct ValidateTolerances {
  double voltage = 1e-4;  // pu magnitude
  double current = 1e-4;  // pu
  double p_sub = 1e-4;    // pu
};

struct ValidateReport {
  bool passed = false;
  double v_min = 0.0, v_max = 0.0;  // realized magnitudes
  double p_sub = 0.0;
  double current_excess = 0.0;
  double state_residual = 0.0;  // flow residual of the stored state
  std::string worst;
};

// Pushes the stored injections through the exact power flow and checks the limits.
inline ValidateReport validate_injections(const FeederModel& m, const BranchFlowState& stored, std::ostream& out,
                                          ValidateTolerances tol = {}) {
  ValidateReport rep;
  rep.state_residual = max_abs(flow_residuals(m, stored));
  const BranchFlowState x = power_flow_sweep(m, stored.p_pv);
  const double vlo = std::sqrt(m.v_min_sq), vhi = std::sqrt(m.v_max_sq);
  double worst = 0.0;
  auto note = [&](double viol, const std::string& what) {
    if (viol > worst) {
      worst = viol;
      rep.worst = what;
    }
  };
  char line[160];
  out << "node       v_pu        pv_kw\n";
  rep.v_min = kInf;
  for (std::size_t i = 0; i < m.n_nodes(); ++i) {
    const double v = std::sqrt(x.v[i]);
    rep.v_min = std::min(rep.v_min, v);
    rep.v_max = std::max(rep.v_max, v);
    std::snprintf(line, sizeof line, "%-8s %10.6f %12.4f\n", m.nodes[i].id.c_str(), v, x.p_pv[i] * m.base_kva);
    out << line;
    note(vlo - tol.voltage - v, "voltage-lower:" + m.nodes[i].id);
    note(v - vhi - tol.voltage, "voltage-upper:" + m.nodes[i].id);
  }
  for (std::size_t k = 0; k < m.n_edges(); ++k) {
    const double ex = std::sqrt(x.l[k]) - m.edges[k].i_rated;
    rep.current_excess = std::max(rep.current_excess, ex);
    note(ex - tol.current, "thermal:" + detail::edge_label(m, k));
  }
  rep.p_sub = x.p_sub;
  note(-x.p_sub - tol.p_sub, "reverse-flow");
  std::snprintf(line, sizeof line,
                "v range [%.6f, %.6f] pu (limits [%.4f, %.4f]), P_sub %.3e pu, current excess %.3e pu, "
                "stored-state flow residual %.3e\n",
                rep.v_min, rep.v_max, vlo, vhi, rep.p_sub, rep.current_excess, rep.state_residual);
  out << line;
  rep.passed = worst <= 0.0;
  return rep;
}

inline int cmd_validate(const std::string& result_path, std::ostream& out, ValidateTolerances tol = {}) {
  Json j;
  FeederModel m;
  BranchFlowState s;
  try {
    std::ifstream f(result_path);
    if (!f) throw std::runtime_error("cannot read " + result_path);
    j = Json::parse(f);
    RunManifest man = manifest_from_json(j.at("manifest"));
    m = scale_loads(load_feeder_file(man.feeder_path), man.load_mult);
    s = state_from_json(m, j.at("state"));
  } catch (const std::exception& e) {
    out << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  ValidateReport rep;
  try {
    rep = validate_injections(m, s, out, tol);
  } catch (const FlowError& e) {
    out << "FAIL: " << e.what() << "\n";
    return kExitAudit;
  }
  if (!rep.passed) {
    out << "FAIL: worst violation " << rep.worst << "\n";
    return kExitAudit;
  }
  out << "PASS\n";
  return kExitOk;
}

}  // namespace hosting
