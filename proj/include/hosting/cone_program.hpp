#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hosting {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

class ProgramError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Triplet {
  std::size_t row;
  std::size_t col;
  double val;
};

using Terms = std::vector<std::pair<std::size_t, double>>;

struct LinearRows {
  std::vector<Triplet> coef;
  std::vector<double> rhs;
  std::vector<std::string> names;

  std::size_t size() const { return rhs.size(); }
  std::size_t add(const Terms& terms, double b, std::string name = {}) {
    std::size_t r = rhs.size();
    for (const auto& [j, a] : terms)
      if (a != 0.0) coef.push_back({r, j, a});
    rhs.push_back(b);
    names.push_back(std::move(name));
    return r;
  }
};

// (x[u] + u_off) * (x[w] + w_off) >= sum_k (x[z_k] + z_off_k)^2, both factors nonnegative.
struct Rsoc {
  std::size_t u = 0;
  std::size_t w = 0;
  std::vector<std::size_t> z;
  double u_off = 0.0;
  double w_off = 0.0;
  std::vector<double> z_off;
  std::string name;
};

struct ConeProgram {
  std::size_t n_vars = 0;
  std::vector<double> objective;  // minimized
  LinearRows eq;                  // rows: a.x == rhs
  LinearRows ineq;                // rows: a.x <= rhs
  std::vector<double> lb, ub;
  std::vector<Rsoc> rsoc;
  std::vector<std::string> var_names;

  std::size_t add_var(std::string name, double lo = -kInf, double hi = kInf, double cost = 0.0) {
    objective.push_back(cost);
    lb.push_back(lo);
    ub.push_back(hi);
    var_names.push_back(std::move(name));
    return n_vars++;
  }

  void check() const {
    auto bad = [&](std::size_t j) { return j >= n_vars; };
    if (objective.size() != n_vars || lb.size() != n_vars || ub.size() != n_vars)
      throw ProgramError("program vectors do not match n_vars");
    for (const LinearRows* rows : {&eq, &ineq})
      for (const Triplet& t : rows->coef)
        if (bad(t.col) || t.row >= rows->size()) throw ProgramError("linear row index out of range");
    for (std::size_t j = 0; j < n_vars; ++j) {
      if (std::isnan(lb[j]) || std::isnan(ub[j]) || lb[j] > ub[j])
        throw ProgramError("bad bounds on variable " + var_names[j]);
      if (!std::isfinite(objective[j])) throw ProgramError("non-finite cost on variable " + var_names[j]);
    }
    for (const Rsoc& c : rsoc) {
      if (bad(c.u) || bad(c.w)) throw ProgramError("cone index out of range");
      if (c.u == c.w) throw ProgramError("rotated cone needs distinct u and w");
      for (std::size_t j : c.z)
        if (bad(j)) throw ProgramError("cone index out of range");
      if (!c.z_off.empty() && c.z_off.size() != c.z.size()) throw ProgramError("cone offset size mismatch");
    }
  }
};

struct SolveOptions {
  double feas_tol = 1e-8;
  double rel_gap_tol = 1e-8;
  int max_iter = 200;
  bool verbose = false;  // per-iteration log on stderr
};

enum class SolveStatus { optimal, infeasible, unbounded, iteration_limit };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::unbounded: return "unbounded";
    case SolveStatus::iteration_limit: return "iteration-limit";
  }
  return "?";
}

struct ConeSolution {
  SolveStatus status = SolveStatus::iteration_limit;
  std::vector<double> x;
  double obj = 0.0;
  double max_primal_residual = kInf;
  double duality_gap_estimate = kInf;
  int iterations = 0;
  std::string message;
};

struct AuditReport {
  double eq = 0.0;
  double ineq = 0.0;
  double bound = 0.0;
  double cone = 0.0;
  double max() const { return std::max({eq, ineq, bound, cone}); }
};

// Recomputes primal feasibility of x against the raw program.
inline AuditReport audit(const ConeProgram& p, const std::vector<double>& x) {
  AuditReport a;
  if (x.size() != p.n_vars) {
    a.eq = kInf;
    return a;
  }
  auto rows = [&](const LinearRows& r) {
    std::vector<double> ax(r.size(), 0.0);
    for (const Triplet& t : r.coef) ax[t.row] += t.val * x[t.col];
    for (std::size_t i = 0; i < r.size(); ++i) ax[i] -= r.rhs[i];
    return ax;
  };
  for (double v : rows(p.eq)) a.eq = std::max(a.eq, std::abs(v));
  for (double v : rows(p.ineq)) a.ineq = std::max(a.ineq, v);
  for (std::size_t j = 0; j < p.n_vars; ++j) a.bound = std::max({a.bound, p.lb[j] - x[j], x[j] - p.ub[j]});
  for (const Rsoc& c : p.rsoc) {
    double u = x[c.u] + c.u_off, w = x[c.w] + c.w_off, zz = (u - w) * (u - w);
    for (std::size_t k = 0; k < c.z.size(); ++k) {
      double zk = x[c.z[k]] + (c.z_off.empty() ? 0.0 : c.z_off[k]);
      zz += 4.0 * zk * zk;
    }
    a.cone = std::max(a.cone, std::sqrt(zz) - (u + w));
  }
  for (double* f : {&a.eq, &a.ineq, &a.bound, &a.cone})
    if (std::isnan(*f)) *f = kInf;
  return a;
}

inline double objective_value(const ConeProgram& p, const std::vector<double>& x) {
  double s = 0.0;
  for (std::size_t j = 0; j < p.n_vars; ++j) s += p.objective[j] * x[j];
  return s;
}

// One constraint per line, for cross-checking with external solvers.
inline std::string dump_program(const ConeProgram& p) {
  std::ostringstream o;
  o.precision(17);
  auto term_list = [&](const LinearRows& r, std::size_t row) {
    std::ostringstream t;
    t.precision(17);
    bool first = true;
    for (const Triplet& c : r.coef)
      if (c.row == row) {
        t << (first ? "" : " ") << (c.val < 0 ? "- " : (first ? "" : "+ ")) << std::abs(c.val) << " "
          << p.var_names[c.col];
        first = false;
      }
    return first ? std::string("0") : t.str();
  };
  o << "vars " << p.n_vars << "\n";
  for (std::size_t j = 0; j < p.n_vars; ++j)
    o << "var " << j << " " << p.var_names[j] << " [" << p.lb[j] << ", " << p.ub[j] << "] cost " << p.objective[j]
      << "\n";
  for (std::size_t i = 0; i < p.eq.size(); ++i)
    o << "eq " << p.eq.names[i] << ": " << term_list(p.eq, i) << " == " << p.eq.rhs[i] << "\n";
  for (std::size_t i = 0; i < p.ineq.size(); ++i)
    o << "le " << p.ineq.names[i] << ": " << term_list(p.ineq, i) << " <= " << p.ineq.rhs[i] << "\n";
  for (const Rsoc& c : p.rsoc) {
    o << "rsoc " << c.name << ": (" << p.var_names[c.u] << " + " << c.u_off << ")(" << p.var_names[c.w] << " + "
      << c.w_off << ") >=";
    for (std::size_t k = 0; k < c.z.size(); ++k)
      o << (k ? " +" : "") << " (" << p.var_names[c.z[k]] << " + " << (c.z_off.empty() ? 0.0 : c.z_off[k]) << ")^2";
    o << "\n";
  }
  return o.str();
}

}  // namespace hosting
