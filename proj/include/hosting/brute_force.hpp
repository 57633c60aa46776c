#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "hosting/branch_flow.hpp"

namespace hosting {

struct BruteForceResult {
  bool found = false;
  double capacity = 0.0;  // per-unit
  std::vector<double> injections;
  long evaluated = 0;
};

// Exact operating-point limits: voltage window, thermal rating, no reverse flow.
inline bool operating_point_ok(const FeederModel& m, const BranchFlowState& s) {
  for (std::size_t i = 0; i < m.n_nodes(); ++i) {
    if (i == m.substation) continue;
    if (s.v[i] < m.v_min_sq || s.v[i] > m.v_max_sq) return false;
  }
  for (std::size_t k = 0; k < m.n_edges(); ++k)
    if (s.l[k] > m.edges[k].i_rated * m.edges[k].i_rated) return false;
  return s.p_sub >= 0.0;
}

// Grid points lo, lo+h, ... and hi itself.
inline std::vector<double> grid_points(double lo, double hi, double h) {
  std::vector<double> g;
  const long n = static_cast<long>(std::floor((hi - lo) / h + 1e-9));
  for (long k = 0; k <= n; ++k) g.push_back(lo + static_cast<double>(k) * h);
  if (g.empty() || hi - g.back() > 1e-12) g.push_back(hi);
  return g;
}

inline BruteForceResult brute_force_hosting(const FeederModel& m, double grid_step) {
  m.validate();
  if (m.n_nodes() > 4) throw std::invalid_argument("brute force is limited to feeders with at most 4 nodes");
  if (!(grid_step > 0)) throw std::invalid_argument("grid step must be positive");
  const std::size_t N = m.n_nodes();
  std::vector<std::vector<double>> axes(N);
  for (std::size_t i = 0; i < N; ++i) axes[i] = grid_points(m.nodes[i].pv_lower, m.nodes[i].pv_upper, grid_step);

  BruteForceResult best;
  std::vector<std::size_t> idx(N, 0);
  std::vector<double> p(N);
  for (;;) {
    double tot = 0.0;
    for (std::size_t i = 0; i < N; ++i) tot += p[i] = axes[i][idx[i]];
    if (!best.found || tot > best.capacity) {
      ++best.evaluated;
      try {
        if (operating_point_ok(m, power_flow_sweep(m, p))) {
          best.found = true;
          best.capacity = tot;
          best.injections = p;
        }
      } catch (const FlowError&) {
      }
    }
    std::size_t d = 0;
    while (d < N && ++idx[d] == axes[d].size()) idx[d++] = 0;
    if (d == N) break;
  }
  return best;
}

}  // namespace hosting
