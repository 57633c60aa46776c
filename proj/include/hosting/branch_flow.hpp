#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include "hosting/feeder_model.hpp"

namespace hosting {

struct BranchFlowState {
  std::vector<double> P, Q, l;  // per edge
  std::vector<double> v, p_pv;  // per node
  double p_sub = 0.0;

  BranchFlowState() = default;
  BranchFlowState(std::size_t n_edges, std::size_t n_nodes)
      : P(n_edges, 0.0), Q(n_edges, 0.0), l(n_edges, 0.0), v(n_nodes, 0.0), p_pv(n_nodes, 0.0) {}
};

class FlowError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Real power exported by the substation: root-edge flows plus substation load net of substation PV.
inline double substation_export(const FeederModel& m, const BranchFlowState& s) {
  double p = m.load_p(m.substation) - s.p_pv[m.substation];
  for (std::size_t e : m.children[m.substation]) p += s.P[e];
  return p;
}

inline void check_dims(const FeederModel& m, const BranchFlowState& s) {
  const std::size_t E = m.n_edges(), N = m.n_nodes();
  if (s.P.size() != E || s.Q.size() != E || s.l.size() != E || s.v.size() != N || s.p_pv.size() != N)
    throw FlowError("state dimensions do not match feeder");
}

// Residuals in edge-major order: for edge k, entries 3k (real balance), 3k+1 (reactive), 3k+2 (voltage drop).
inline std::vector<double> flow_residuals(const FeederModel& m, const BranchFlowState& s) {
  check_dims(m, s);
  std::vector<double> res(3 * m.n_edges());
  for (std::size_t k = 0; k < m.n_edges(); ++k) {
    const Edge& e = m.edges[k];
    const std::size_t j = e.to;
    double sp = 0.0, sq = 0.0;
    for (std::size_t c : m.children[j]) {
      sp += s.P[c];
      sq += s.Q[c];
    }
    res[3 * k] = s.P[k] - sp - e.r * s.l[k] - (m.load_p(j) - s.p_pv[j]);
    res[3 * k + 1] = s.Q[k] - sq - e.x * s.l[k] - m.load_q(j);
    res[3 * k + 2] = s.v[j] - s.v[e.from] + 2.0 * (e.r * s.P[k] + e.x * s.Q[k]) - (e.r * e.r + e.x * e.x) * s.l[k];
  }
  return res;
}

inline double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

struct GapVector {
  std::vector<double> e;
  double max_abs = 0.0;
  std::size_t argmax = 0;
  double min = 0.0;
};

inline GapVector feasibility_gap(const FeederModel& m, const BranchFlowState& s) {
  check_dims(m, s);
  GapVector g;
  g.e.resize(m.n_edges());
  for (std::size_t k = 0; k < m.n_edges(); ++k) {
    double e = s.P[k] * s.P[k] + s.Q[k] * s.Q[k] - s.v[m.edges[k].from] * s.l[k];
    g.e[k] = e;
    if (std::abs(e) > g.max_abs) {
      g.max_abs = std::abs(e);
      g.argmax = k;
    }
    if (k == 0 || e < g.min) g.min = e;
  }
  return g;
}

struct SweepOptions {
  double tol = 1e-12;
  int max_sweeps = 200;
};

// Backward/forward fixed-point sweep; the returned state satisfies all four branch-flow relations.
inline BranchFlowState power_flow_sweep(const FeederModel& m, const std::vector<double>& p_pv,
                                        SweepOptions opt = {}) {
  const std::size_t E = m.n_edges(), N = m.n_nodes();
  if (p_pv.size() != N) throw FlowError("injection vector size does not match feeder");
  BranchFlowState s(E, N);
  s.p_pv = p_pv;
  std::fill(s.v.begin(), s.v.end(), m.v_sub);

  std::vector<double> vnew(N), lnew(E);
  double change = 0.0;
  for (int it = 0; it < opt.max_sweeps; ++it) {
    for (auto k = m.order.rbegin(); k != m.order.rend(); ++k) {
      const Edge& e = m.edges[*k];
      double sp = 0.0, sq = 0.0;
      for (std::size_t c : m.children[e.to]) {
        sp += s.P[c];
        sq += s.Q[c];
      }
      s.P[*k] = sp + e.r * s.l[*k] + m.load_p(e.to) - p_pv[e.to];
      s.Q[*k] = sq + e.x * s.l[*k] + m.load_q(e.to);
    }
    vnew[m.substation] = m.v_sub;
    for (std::size_t k : m.order) {
      const Edge& e = m.edges[k];
      vnew[e.to] = vnew[e.from] - 2.0 * (e.r * s.P[k] + e.x * s.Q[k]) + (e.r * e.r + e.x * e.x) * s.l[k];
    }
    change = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      if (!(vnew[i] > 0) || !std::isfinite(vnew[i]))
        throw FlowError("power flow sweep diverged (voltage collapse) at sweep " + std::to_string(it + 1));
      change = std::max(change, std::abs(vnew[i] - s.v[i]));
    }
    for (std::size_t k = 0; k < E; ++k) {
      lnew[k] = (s.P[k] * s.P[k] + s.Q[k] * s.Q[k]) / vnew[m.edges[k].from];
      change = std::max(change, std::abs(lnew[k] - s.l[k]));
    }
    s.v = vnew;
    s.l = lnew;
    if (change < opt.tol) {
      // One more backward/forward pass so P, Q, v use the final l.
      for (auto k = m.order.rbegin(); k != m.order.rend(); ++k) {
        const Edge& e = m.edges[*k];
        double sp = 0.0, sq = 0.0;
        for (std::size_t c : m.children[e.to]) {
          sp += s.P[c];
          sq += s.Q[c];
        }
        s.P[*k] = sp + e.r * s.l[*k] + m.load_p(e.to) - p_pv[e.to];
        s.Q[*k] = sq + e.x * s.l[*k] + m.load_q(e.to);
      }
      for (std::size_t k : m.order) {
        const Edge& e = m.edges[k];
        s.v[e.to] = s.v[e.from] - 2.0 * (e.r * s.P[k] + e.x * s.Q[k]) + (e.r * e.r + e.x * e.x) * s.l[k];
      }
      s.p_sub = substation_export(m, s);
      return s;
    }
  }
  throw FlowError("power flow sweep did not converge in " + std::to_string(opt.max_sweeps) +
                  " sweeps (last change " + std::to_string(change) + ")");
}

// Bus angles from a state on the cone surface; root angle is zero.
inline std::vector<double> recover_angles(const FeederModel& m, const BranchFlowState& s, double tol = 1e-8) {
  check_dims(m, s);
  if (max_abs(flow_residuals(m, s)) > tol || feasibility_gap(m, s).max_abs > tol)
    throw FlowError("state not on cone surface");
  std::vector<double> th(m.n_nodes(), 0.0);
  for (std::size_t k : m.order) {
    const Edge& e = m.edges[k];
    std::complex<double> zc(e.r, -e.x), S(s.P[k], s.Q[k]);
    th[e.to] = th[e.from] - std::arg(s.v[e.from] - zc * S);
  }
  return th;
}

}  // namespace hosting
