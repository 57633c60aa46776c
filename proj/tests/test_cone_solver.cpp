#include <gtest/gtest.h>

#include "hosting/cone_solver.hpp"

using namespace hosting;

TEST(ConeSolver, LpCorner) {
  ConeProgram p;
  p.add_var("x", 3.0, kInf, 1.0);
  ConeSolution s = solve(p);
  ASSERT_EQ(s.status, SolveStatus::optimal) << s.message;
  EXPECT_NEAR(s.x[0], 3.0, 1e-7);
}

TEST(ConeSolver, UnitRotatedCone) {
  ConeProgram p;
  auto u = p.add_var("u", 1.0, 1.0);
  auto w = p.add_var("w", 1.0, 1.0);
  auto z = p.add_var("z", -kInf, kInf, -1.0);
  p.rsoc.push_back({u, w, {z}});
  ConeSolution s = solve(p);
  ASSERT_EQ(s.status, SolveStatus::optimal) << s.message;
  EXPECT_NEAR(s.x[z], 1.0, 1e-7);
}

TEST(ConeSolver, SymmetricCone) {
  ConeProgram p;
  auto u = p.add_var("u", -kInf, kInf, 1.0);
  auto w = p.add_var("w", -kInf, kInf, 1.0);
  auto z = p.add_var("z", 2.0, 2.0);
  p.rsoc.push_back({u, w, {z}});
  p.eq.add({{u, 1.0}, {w, -1.0}}, 0.0);
  ConeSolution s = solve(p);
  ASSERT_EQ(s.status, SolveStatus::optimal) << s.message;
  EXPECT_NEAR(s.x[u], 2.0, 1e-7);
  EXPECT_NEAR(s.x[w], 2.0, 1e-7);
}

namespace {

// min c.x over a small program mixing bounds, rows and two cones; unique optimum.
ConeProgram mixed_program(double scale) {
  ConeProgram p;
  auto a = p.add_var("a", 0.0, 4.0, -1.0 * scale);
  auto b = p.add_var("b", 0.0, 4.0, -2.0 * scale);
  auto t = p.add_var("t", 0.0, kInf, 0.5 * scale);
  auto u = p.add_var("u", 1.0, 1.0);
  auto s = p.add_var("s", -kInf, kInf, 1.0 * scale);
  p.rsoc.push_back({t, u, {a, b}});  // t >= a^2 + b^2
  p.rsoc.push_back({s, u, {a}, 0.0, 0.0, {-1.0}});  // s >= (a - 1)^2
  p.ineq.add({{a, 1.0}, {b, 1.0}}, 3.0);
  p.eq.add({{a, 1.0}, {b, -0.5}, {s, 1.0}}, 0.25);
  return p;
}

}  // namespace

TEST(ConeSolver, OptimalPassesAudit) {
  ConeProgram p = mixed_program(1.0);
  ConeSolution s = solve(p);
  ASSERT_EQ(s.status, SolveStatus::optimal) << s.message;
  EXPECT_LE(audit(p, s.x).max(), SolveOptions{}.feas_tol);
  EXPECT_LE(s.max_primal_residual, SolveOptions{}.feas_tol);
  EXPECT_LE(s.duality_gap_estimate, SolveOptions{}.rel_gap_tol * (1.0 + std::abs(s.obj)));
  EXPECT_NEAR(s.obj, objective_value(p, s.x), 1e-9);
}

TEST(ConeSolver, ObjectiveScalingKeepsArgmin) {
  ConeSolution base = solve(mixed_program(1.0));
  ASSERT_EQ(base.status, SolveStatus::optimal);
  for (double c : {1e-3, 0.5, 7.0, 1e3}) {
    ConeSolution s = solve(mixed_program(c));
    ASSERT_EQ(s.status, SolveStatus::optimal) << "scale " << c;
    for (std::size_t j = 0; j < s.x.size(); ++j) EXPECT_NEAR(s.x[j], base.x[j], 10 * 1e-8) << "scale " << c;
  }
}

TEST(ConeSolver, Infeasible) {
  ConeProgram p;
  auto u = p.add_var("u", 0.0, 1.0);
  auto w = p.add_var("w", 0.0, 1.0);
  auto z = p.add_var("z", 2.0, kInf, 1.0);
  p.rsoc.push_back({u, w, {z}});
  EXPECT_EQ(solve(p).status, SolveStatus::infeasible);
}

TEST(ConeSolver, Unbounded) {
  ConeProgram p;
  auto x = p.add_var("x", -kInf, kInf, 1.0);
  auto y = p.add_var("y", 0.0, kInf);
  p.ineq.add({{x, 1.0}, {y, -1.0}}, 0.0);
  EXPECT_EQ(solve(p).status, SolveStatus::unbounded);
}

TEST(ConeSolver, MalformedProgram) {
  ConeProgram p;
  p.add_var("x", 0.0, 1.0, 1.0);
  p.eq.add({{3, 1.0}}, 0.0);
  EXPECT_THROW(solve(p), ProgramError);
  ConeProgram q;
  auto u = q.add_var("u", 0.0, 1.0);
  q.rsoc.push_back({u, u, {}});
  EXPECT_THROW(solve(q), ProgramError);
  ConeProgram r;
  r.add_var("x", 2.0, 1.0);
  EXPECT_THROW(solve(r), ProgramError);
  SolveOptions bad;
  bad.feas_tol = 0.0;
  EXPECT_THROW(solve(ConeProgram{}, bad), ProgramError);
}

TEST(ConeSolver, AuditIsIndependent) {
  ConeProgram p = mixed_program(1.0);
  std::vector<double> x(p.n_vars, 0.0);
  x[3] = 1.0;  // u
  const AuditReport a = audit(p, x);
  EXPECT_DOUBLE_EQ(a.eq, 0.25);
  EXPECT_GT(a.cone, 0.0);  // s = 0 < (0 - 1)^2
  EXPECT_EQ(audit(p, {}).eq, kInf);
}
