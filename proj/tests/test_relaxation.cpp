#include <gtest/gtest.h>

#include "hosting/relaxation.hpp"
#include "oracles.hpp"

using namespace hosting;

namespace {

FeederModel bundled(const char* name, double mult = 1.0) {
  return scale_loads(load_feeder_file(oracle::data_file(name)), mult);
}

void expect_zero_state(const FeederModel& m, const BranchFlowState& s, double tol) {
  for (std::size_t k = 0; k < m.n_edges(); ++k) {
    EXPECT_NEAR(s.P[k], 0.0, tol);
    EXPECT_NEAR(s.Q[k], 0.0, tol);
    EXPECT_NEAR(s.l[k], 0.0, tol);
  }
  for (std::size_t i = 0; i < m.n_nodes(); ++i) {
    EXPECT_NEAR(s.p_pv[i], 0.0, tol);
    EXPECT_NEAR(s.v[i], m.v_sub, tol);
  }
}

}  // namespace

TEST(BuildRelaxed, TwoNodeCounts) {
  FeederModel m = parse_feeder(oracle::kTwoNode);
  auto [p, ix] = build_relaxed_hosting(m);
  // P, Q, l on the edge; v and pv on both nodes; the substation export.
  EXPECT_EQ(p.n_vars, 3u + 2u * 2u + 1u);
  EXPECT_EQ(p.rsoc.size(), 1u);
  EXPECT_EQ(p.eq.size(), 3u + 1u);
  EXPECT_EQ(p.ub[ix.p_pv[m.substation]], 0.0);
  EXPECT_DOUBLE_EQ(p.ub[ix.p_pv[1]], 0.1);
  EXPECT_EQ(p.lb[ix.p_sub], 0.0);
  EXPECT_EQ(p.objective[ix.p_pv[1]], -1.0);
  EXPECT_EQ(p.rsoc[0].u, ix.v[m.substation]);
  EXPECT_EQ(p.rsoc[0].w, ix.l[0]);
}

TEST(BuildRelaxed, Ieee13) {
  FeederModel m = bundled("ieee13.feeder");
  auto [p, ix] = build_relaxed_hosting(m);
  EXPECT_EQ(p.rsoc.size(), 12u);
  EXPECT_EQ(ix.p_pv.size(), 13u);
  for (std::size_t i = 0; i < m.n_nodes(); ++i) {
    if (i == m.substation) continue;
    EXPECT_DOUBLE_EQ(p.ub[ix.p_pv[i]] * m.base_kva, 400.0);
    EXPECT_DOUBLE_EQ(p.lb[ix.v[i]], 0.95 * 0.95);
    EXPECT_DOUBLE_EQ(p.ub[ix.v[i]], 1.05 * 1.05);
  }
  EXPECT_FALSE(dump_program(p).empty());
}

TEST(BuildRelaxed, Ieee123) {
  FeederModel m = bundled("ieee123.feeder");
  auto [p, ix] = build_relaxed_hosting(m);
  EXPECT_EQ(p.rsoc.size(), m.n_edges());
  for (std::size_t i = 0; i < m.n_nodes(); ++i)
    if (i != m.substation) EXPECT_DOUBLE_EQ(p.ub[ix.p_pv[i]] * m.base_kva, 50.0);
}

TEST(SolveRelaxed, ZeroLoadZeroPv) {
  FeederModel m = load_feeder_file(oracle::data_file("two_bus_zero_load.feeder"));
  RelaxedResult r = solve_relaxed(m);
  expect_zero_state(m, r.state, 1e-6);
  EXPECT_LE(r.gaps.max_abs, 1e-6);
}

TEST(SolveRelaxed, Ieee13Inexact) {
  for (double mult : {0.3, 1.0}) {
    FeederModel m = bundled("ieee13.feeder", mult);
    RelaxedResult r = solve_relaxed(m);
    EXPECT_LE(max_abs(flow_residuals(m, r.state)), 10 * SolveOptions{}.feas_tol);
    EXPECT_LT(r.gaps.min, -1e-4) << "mult " << mult;
    for (double e : r.gaps.e) EXPECT_LE(e, 1e-7);  // inside the cone
    const auto b = binding_constraints(m, r.state);
    EXPECT_TRUE(std::find(b.begin(), b.end(), "reverse-flow") != b.end());
  }
}

TEST(SolveRelaxed, LossMinimizationExact) {
  FeederModel m = bundled("ieee13.feeder", 1.0);
  BuildOptions o;
  o.objective = HostingObjective::min_loss;
  o.reverse_flow_limit = false;
  for (double mult : {0.3, 1.0}) {
    RelaxedResult r = solve_relaxed(scale_loads(m, mult), o);
    EXPECT_LE(r.gaps.max_abs, 1e-6) << "mult " << mult;
  }
}

TEST(SolveRelaxed, GapSignOnRandomFeeders) {
  std::mt19937_64 rng(17);
  for (int t = 0; t < 10; ++t) {
    FeederModel m = oracle::random_feeder(rng, 3 + 2 * t);
    RelaxedResult r = solve_relaxed(m);
    for (double e : r.gaps.e) EXPECT_LE(e, 1e-7);
    EXPECT_LE(max_abs(flow_residuals(m, r.state)), 10 * SolveOptions{}.feas_tol);
  }
}

TEST(ExtractState, RejectsNonOptimal) {
  FeederModel m = parse_feeder(oracle::kTwoNode);
  auto [p, ix] = build_relaxed_hosting(m);
  ConeSolution sol;
  sol.status = SolveStatus::iteration_limit;
  sol.x.assign(p.n_vars, 0.0);
  EXPECT_THROW(extract_state(sol, ix, m), SolverFailure);
}

TEST(LinDistFlow, ZeroLoad) {
  FeederModel m = load_feeder_file(oracle::data_file("two_bus_zero_load.feeder"));
  expect_zero_state(m, lindistflow_init(m), 1e-7);
}

TEST(LinDistFlow, TwoNodeLosslessBalance) {
  FeederModel m = parse_feeder("[base]\nkv=1\nkva=1000\nsubstation=sub\n[nodes]\nsub,0,0,0\nn2,50,0,100\n"
                               "[edges]\nsub,n2,0.01,0.01,\n");
  BranchFlowState s = lindistflow_init(m);
  EXPECT_NEAR(s.p_pv[1], 0.05, 1e-7);
  EXPECT_NEAR(s.p_sub, 0.0, 1e-7);
}

TEST(LinDistFlow, Ieee13Start) {
  FeederModel m = bundled("ieee13.feeder", 1.0);
  BranchFlowState s = lindistflow_init(m);
  EXPECT_LE(feasibility_gap(m, s).max_abs, 1e-2);
  // Only the dropped loss terms remain in the balance equations.
  double loss = 0.0;
  for (std::size_t k = 0; k < m.n_edges(); ++k) loss = std::max(loss, m.edges[k].r * s.l[k]);
  EXPECT_GT(max_abs(flow_residuals(m, s)), 0.0);
  EXPECT_LE(max_abs(flow_residuals(m, s)), 10 * loss + 1e-7);
}

TEST(BindingConstraints, Labels) {
  FeederModel m = load_feeder_file(oracle::data_file("two_bus.feeder"));
  BranchFlowState s = power_flow_sweep(m, {0.0, m.nodes[1].pv_upper});
  s.v[1] = m.v_max_sq;
  s.p_sub = 0.0;
  const auto b = binding_constraints(m, s);
  EXPECT_EQ(b, (std::vector<std::string>{"voltage-upper:n2", "reverse-flow", "pv-cap:n2"}));
}
