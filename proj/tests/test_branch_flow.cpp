#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "hosting/branch_flow.hpp"
#include "hosting/relaxation.hpp"
#include "oracles.hpp"

using namespace hosting;

namespace {

FeederModel two_node() { return parse_feeder(oracle::kTwoNode); }

BranchFlowState flat(const FeederModel& m) {
  BranchFlowState s(m.n_edges(), m.n_nodes());
  std::fill(s.v.begin(), s.v.end(), m.v_sub);
  return s;
}

FeederModel zero_load() {
  return parse_feeder("[base]\nkv=1\nkva=1000\nsubstation=a\n[nodes]\na,0,0,0\nb,0,0,0\nc,0,0,0\n"
                      "[edges]\na,b,0.01,0.02\nb,c,0.03,0.01\n");
}

}  // namespace

TEST(FlowResiduals, ZeroState) {
  FeederModel m = zero_load();
  EXPECT_EQ(max_abs(flow_residuals(m, flat(m))), 0.0);
  for (double e : feasibility_gap(m, flat(m)).e) EXPECT_EQ(e, 0.0);
}

TEST(FlowResiduals, DimensionMismatch) {
  FeederModel m = two_node();
  BranchFlowState s(2, 2);
  EXPECT_THROW(flow_residuals(m, s), FlowError);
  EXPECT_THROW(power_flow_sweep(m, {0.0}), FlowError);
}

TEST(FlowResiduals, LeafPerturbation) {
  FeederModel m = two_node();
  BranchFlowState s = power_flow_sweep(m, {0.0, 0.0});
  const std::vector<double> r0 = flow_residuals(m, s);
  const double d = 1e-3;
  s.P[0] += d;
  const std::vector<double> r1 = flow_residuals(m, s);
  EXPECT_NEAR(r1[0] - r0[0], d, 1e-15);
  EXPECT_NEAR(r1[1] - r0[1], 0.0, 0.0);
  EXPECT_NEAR(r1[2] - r0[2], 2.0 * m.edges[0].r * d, 1e-15);
}

TEST(FlowResiduals, LeafPerturbationUnderParent) {
  FeederModel m = parse_feeder("[base]\nkv=1\nkva=1000\nsubstation=a\n[nodes]\na,0,0,0\nb,10,5,0\nc,20,5,0\n"
                               "[edges]\na,b,0.01,0.02\nb,c,0.03,0.01\n");
  BranchFlowState s = power_flow_sweep(m, {0.0, 0.0, 0.0});
  const std::size_t leaf = m.parent_edge[m.index_of("c")], up = m.parent_edge[m.index_of("b")];
  const std::vector<double> r0 = flow_residuals(m, s);
  const double d = 1e-3;
  s.P[leaf] += d;
  const std::vector<double> r1 = flow_residuals(m, s);
  for (std::size_t i = 0; i < r0.size(); ++i) {
    double want = 0.0;
    if (i == 3 * leaf) want = d;
    if (i == 3 * leaf + 2) want = 2.0 * m.edges[leaf].r * d;
    if (i == 3 * up) want = -d;  // the parent's balance sums its children
    EXPECT_NEAR(r1[i] - r0[i], want, 1e-15) << "residual " << i;
  }
}

TEST(FeasibilityGap, ValuesAndArgmax) {
  FeederModel m = parse_feeder("[base]\nkv=1\nkva=1000\nsubstation=a\n[nodes]\na,0,0,0\nb,0,0,0\nc,0,0,0\n"
                               "[edges]\na,b,0.01,0.02\nb,c,0.03,0.01\n");
  BranchFlowState s = flat(m);
  s.P = {1.0, 0.5};
  s.Q = {0.0, 0.5};
  s.l = {2.0, 0.1};
  s.v = {1.0, 1.0, 1.0};
  GapVector g = feasibility_gap(m, s);
  EXPECT_DOUBLE_EQ(g.e[0], -1.0);
  EXPECT_DOUBLE_EQ(g.e[1], 0.4);
  EXPECT_DOUBLE_EQ(g.max_abs, 1.0);
  EXPECT_EQ(g.argmax, 0u);
  EXPECT_DOUBLE_EQ(g.min, -1.0);
}

TEST(PowerFlowSweep, ZeroLoad) {
  FeederModel m = zero_load();
  BranchFlowState s = power_flow_sweep(m, {0.0, 0.0, 0.0});
  for (std::size_t k = 0; k < m.n_edges(); ++k) {
    EXPECT_EQ(s.P[k], 0.0);
    EXPECT_EQ(s.Q[k], 0.0);
    EXPECT_EQ(s.l[k], 0.0);
  }
  for (double v : s.v) EXPECT_EQ(v, m.v_sub);
}

TEST(PowerFlowSweep, TwoNodeGolden) {
  FeederModel m = two_node();
  BranchFlowState s = power_flow_sweep(m, {0.0, 0.0});
  EXPECT_LT(max_abs(flow_residuals(m, s)), 1e-10);
  EXPECT_LT(feasibility_gap(m, s).max_abs, 1e-10);
  EXPECT_LT(s.v[1], m.v_sub);
  EXPECT_GT(s.l[0], 0.0);

  std::ifstream f(oracle::fixture_file("two_node_golden.csv"));
  ASSERT_TRUE(f) << "golden file missing";
  std::string line;
  int rows = 0;
  auto close = [](double got, const std::string& want) {
    const double w = std::stod(want);
    return std::abs(got - w) <= 1e-11 * std::max(1.0, std::abs(w));
  };
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("kind", 0) == 0) continue;
    std::vector<std::string> c;
    std::stringstream ss(line);
    for (std::string t; std::getline(ss, t, ',');) c.push_back(t);
    c.resize(6);
    if (c[0] == "edge") {
      EXPECT_TRUE(close(s.P[0], c[2])) << s.P[0];
      EXPECT_TRUE(close(s.Q[0], c[3])) << s.Q[0];
      EXPECT_TRUE(close(s.l[0], c[4])) << s.l[0];
    } else {
      EXPECT_TRUE(close(s.v[m.index_of(c[1])], c[5])) << c[1];
    }
    ++rows;
  }
  EXPECT_EQ(rows, 3);
}

TEST(PowerFlowSweep, MatchesPhasorSolve) {
  FeederModel m = two_node();
  BranchFlowState s = power_flow_sweep(m, {0.0, 0.0});
  const std::complex<double> z(m.edges[0].r, m.edges[0].x), S(m.load_p(1), m.load_q(1));
  const std::complex<double> V2 = oracle::two_bus_phasor(1.0, z, S);
  const std::complex<double> I = std::conj(S / V2);
  EXPECT_NEAR(s.v[1], std::norm(V2), 1e-12);
  EXPECT_NEAR(s.l[0], std::norm(I), 1e-12);
  EXPECT_NEAR(s.P[0], (S + z * std::norm(I)).real(), 1e-12);
  EXPECT_NEAR(s.Q[0], (S + z * std::norm(I)).imag(), 1e-12);
}

TEST(PowerFlowSweep, NearCancellation) {
  FeederModel m = parse_feeder("[base]\nkv=1\nkva=1000\nsubstation=sub\n[nodes]\nsub,0,0,0\nn2,100,0,100\n"
                               "[edges]\nsub,n2,0.01,0.01,\n");
  BranchFlowState s = power_flow_sweep(m, {0.0, 0.1});
  EXPECT_NEAR(s.P[0], m.edges[0].r * s.l[0], 1e-12);
  EXPECT_NEAR(s.P[0], 0.0, 1e-6);
  EXPECT_NEAR(s.v[1], m.v_sub, 1e-6);
}

TEST(PowerFlowSweep, CollapseReported) {
  FeederModel m = parse_feeder("[base]\nkv=1\nkva=1000\nsubstation=sub\n[nodes]\nsub,0,0,0\nn2,5000,5000,0\n"
                               "[edges]\nsub,n2,0.2,0.2,\n");
  EXPECT_THROW(power_flow_sweep(m, {0.0, 0.0}), FlowError);
}

TEST(PowerFlowSweep, MonotoneVoltageDrop) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 50; ++t) {
    FeederModel m = oracle::random_feeder(rng, 2 + t % 29);
    BranchFlowState s = power_flow_sweep(m, std::vector<double>(m.n_nodes(), 0.0));
    for (const Edge& e : m.edges) EXPECT_LE(s.v[e.to], s.v[e.from] + 1e-15);
  }
}

TEST(PowerFlowSweep, RandomFeedersExact) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> size(2, 30);
  for (int t = 0; t < 100; ++t) {
    FeederModel m = oracle::random_feeder(rng, size(rng));
    BranchFlowState s = power_flow_sweep(m, oracle::random_injections(rng, m));
    EXPECT_LE(max_abs(flow_residuals(m, s)), 1e-10);
    EXPECT_LE(feasibility_gap(m, s).max_abs, 1e-10);
    EXPECT_DOUBLE_EQ(s.p_sub, substation_export(m, s));
  }
}

TEST(RecoverAngles, ZeroFlow) {
  FeederModel m = zero_load();
  for (double a : recover_angles(m, flat(m))) EXPECT_EQ(a, 0.0);
}

TEST(RecoverAngles, TwoNodeMatchesPhasor) {
  FeederModel m = two_node();
  BranchFlowState s = power_flow_sweep(m, {0.0, 0.0});
  const std::vector<double> th = recover_angles(m, s);
  const std::complex<double> z(m.edges[0].r, m.edges[0].x), S(m.load_p(1), m.load_q(1));
  EXPECT_EQ(th[m.substation], 0.0);
  EXPECT_NEAR(th[1], std::arg(oracle::two_bus_phasor(1.0, z, S)), 1e-12);
  EXPECT_LT(th[1], 0.0);
}

TEST(RecoverAngles, RandomPhasorConsistency) {
  std::mt19937_64 rng(99);
  for (int t = 0; t < 30; ++t) {
    FeederModel m = oracle::random_feeder(rng, 2 + t);
    BranchFlowState s = power_flow_sweep(m, oracle::random_injections(rng, m));
    const std::vector<double> th = recover_angles(m, s);
    std::vector<std::complex<double>> V(m.n_nodes());
    V[m.substation] = std::sqrt(s.v[m.substation]);
    for (std::size_t k : m.order) {
      const Edge& e = m.edges[k];
      const std::complex<double> I = std::conj(std::complex<double>(s.P[k], s.Q[k]) / V[e.from]);
      V[e.to] = V[e.from] - std::complex<double>(e.r, e.x) * I;
    }
    for (std::size_t i = 0; i < m.n_nodes(); ++i) {
      EXPECT_NEAR(std::norm(V[i]), s.v[i], 1e-6);
      EXPECT_NEAR(std::arg(V[i]), th[i], 1e-9);
    }
  }
}

TEST(RecoverAngles, RejectsRelaxedState) {
  FeederModel m = scale_loads(load_feeder_file(oracle::data_file("ieee13.feeder")), 0.3);
  RelaxedResult r = solve_relaxed(m);
  ASSERT_LT(r.gaps.min, -1e-4);
  try {
    recover_angles(m, r.state);
    FAIL() << "interior point accepted";
  } catch (const FlowError& e) {
    EXPECT_STREQ(e.what(), "state not on cone surface");
  }
}
