#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "hosting/cone_program.hpp"

namespace hosting {
namespace ipm {

using Vec = Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<double>;

// Nonnegative orthant of size l followed by second-order cones of the listed sizes.
struct ConeDims {
  std::size_t l = 0;
  std::vector<std::size_t> q;

  std::size_t m() const {
    std::size_t s = l;
    for (std::size_t k : q) s += k;
    return s;
  }
  std::size_t degree() const { return l + q.size(); }
};

// min c'x  s.t.  Ax = b,  Gx + s = h,  s in K.
struct StandardForm {
  std::size_t n = 0;
  std::vector<Triplet> A, G;
  Vec b, h, c;
  ConeDims dims;
};

// Lowers a ConeProgram: fixed variables and equalities go to A, bounds and
// inequalities to the orthant, each rotated cone to ||(u-w, 2z)|| <= u + w.
inline StandardForm to_standard_form(const ConeProgram& p) {
  StandardForm sf;
  sf.n = p.n_vars;
  sf.c = Vec::Map(p.objective.data(), static_cast<Eigen::Index>(p.n_vars));

  std::vector<double> b(p.eq.rhs), h;
  sf.A = p.eq.coef;
  for (std::size_t j = 0; j < p.n_vars; ++j)
    if (p.lb[j] == p.ub[j]) {
      sf.A.push_back({b.size(), j, 1.0});
      b.push_back(p.lb[j]);
    }

  for (const Triplet& t : p.ineq.coef) sf.G.push_back(t);
  h = p.ineq.rhs;
  for (std::size_t j = 0; j < p.n_vars; ++j) {
    if (p.lb[j] == p.ub[j]) continue;
    if (std::isfinite(p.ub[j])) {
      sf.G.push_back({h.size(), j, 1.0});
      h.push_back(p.ub[j]);
    }
    if (std::isfinite(p.lb[j])) {
      sf.G.push_back({h.size(), j, -1.0});
      h.push_back(-p.lb[j]);
    }
  }
  sf.dims.l = h.size();
  for (const Rsoc& c : p.rsoc) {
    std::size_t r0 = h.size();
    sf.G.push_back({r0, c.u, -1.0});
    sf.G.push_back({r0, c.w, -1.0});
    h.push_back(c.u_off + c.w_off);
    sf.G.push_back({r0 + 1, c.u, -1.0});
    sf.G.push_back({r0 + 1, c.w, 1.0});
    h.push_back(c.u_off - c.w_off);
    for (std::size_t k = 0; k < c.z.size(); ++k) {
      sf.G.push_back({r0 + 2 + k, c.z[k], -2.0});
      h.push_back(2.0 * (c.z_off.empty() ? 0.0 : c.z_off[k]));
    }
    sf.dims.q.push_back(2 + c.z.size());
  }
  sf.b = Vec::Map(b.data(), static_cast<Eigen::Index>(b.size()));
  sf.h = Vec::Map(h.data(), static_cast<Eigen::Index>(h.size()));
  return sf;
}

inline SpMat to_sparse(const std::vector<Triplet>& t, std::size_t rows, std::size_t cols) {
  std::vector<Eigen::Triplet<double>> tr;
  tr.reserve(t.size());
  for (const Triplet& x : t) tr.emplace_back(static_cast<int>(x.row), static_cast<int>(x.col), x.val);
  SpMat M(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  M.setFromTriplets(tr.begin(), tr.end());
  M.makeCompressed();
  return M;
}

// ---------------------------------------------------------------- cone algebra

inline double soc_residual(const double* u, std::size_t k) {
  double t = 0.0;
  for (std::size_t i = 1; i < k; ++i) t += u[i] * u[i];
  t = std::sqrt(t);
  return (u[0] - t) * (u[0] + t);
}

// Nesterov-Todd scaling point for every cone.
struct NtScaling {
  ConeDims dims;
  Vec w;                      // orthant: sqrt(s/z)
  std::vector<double> eta;    // per SOC
  std::vector<Vec> wbar;      // per SOC, unit hyperbolic point
  Vec lambda;

  // False when s or z has left the cone interior.
  bool update(const Vec& s, const Vec& z) {
    const std::size_t m = dims.m();
    w.resize(static_cast<Eigen::Index>(dims.l));
    lambda.resize(static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < dims.l; ++i) {
      if (!(s[i] > 0) || !(z[i] > 0)) return false;
      w[i] = std::sqrt(s[i] / z[i]);
      lambda[i] = std::sqrt(s[i] * z[i]);
    }
    eta.resize(dims.q.size());
    wbar.resize(dims.q.size());
    std::size_t off = dims.l;
    for (std::size_t c = 0; c < dims.q.size(); ++c) {
      const std::size_t k = dims.q[c];
      const double sres = soc_residual(s.data() + off, k);
      const double zres = soc_residual(z.data() + off, k);
      if (!(sres > 0) || !(zres > 0) || !(s[off] > 0) || !(z[off] > 0)) return false;
      const double sn = std::sqrt(sres), zn = std::sqrt(zres);
      double dot = 0.0;
      Vec sb(static_cast<Eigen::Index>(k)), zb(static_cast<Eigen::Index>(k));
      for (std::size_t i = 0; i < k; ++i) {
        sb[i] = s[off + i] / sn;
        zb[i] = z[off + i] / zn;
        dot += sb[i] * zb[i];
      }
      const double gam = std::sqrt((1.0 + dot) / 2.0);
      Vec& wb = wbar[c];
      wb.resize(static_cast<Eigen::Index>(k));
      wb[0] = (sb[0] + zb[0]) / (2.0 * gam);
      for (std::size_t i = 1; i < k; ++i) wb[i] = (sb[i] - zb[i]) / (2.0 * gam);
      eta[c] = std::sqrt(sn / zn);
      off += k;
    }
    Vec zz = z;
    apply_w(zz, lambda);
    return lambda.allFinite();
  }

  void apply_w(const Vec& v, Vec& out) const {
    out.resize(v.size());
    for (std::size_t i = 0; i < dims.l; ++i) out[i] = w[i] * v[i];
    std::size_t off = dims.l;
    for (std::size_t c = 0; c < dims.q.size(); ++c) {
      const std::size_t k = dims.q[c];
      const Vec& wb = wbar[c];
      double zeta = 0.0;
      for (std::size_t i = 1; i < k; ++i) zeta += wb[i] * v[off + i];
      const double v0 = v[off];
      out[off] = eta[c] * (wb[0] * v0 + zeta);
      const double f = v0 + zeta / (1.0 + wb[0]);
      for (std::size_t i = 1; i < k; ++i) out[off + i] = eta[c] * (v[off + i] + f * wb[i]);
      off += k;
    }
  }

  void apply_winv(const Vec& v, Vec& out) const {
    out.resize(v.size());
    for (std::size_t i = 0; i < dims.l; ++i) out[i] = v[i] / w[i];
    std::size_t off = dims.l;
    for (std::size_t c = 0; c < dims.q.size(); ++c) {
      const std::size_t k = dims.q[c];
      const Vec& wb = wbar[c];
      double zeta = 0.0;
      for (std::size_t i = 1; i < k; ++i) zeta += wb[i] * v[off + i];
      const double v0 = v[off];
      out[off] = (wb[0] * v0 - zeta) / eta[c];
      const double f = -v0 + zeta / (1.0 + wb[0]);
      for (std::size_t i = 1; i < k; ++i) out[off + i] = (v[off + i] + f * wb[i]) / eta[c];
      off += k;
    }
  }

  // Dense W^2 block of SOC c (row-major, k x k).
  std::vector<double> soc_w2(std::size_t c) const {
    const std::size_t k = dims.q[c];
    const Vec& wb = wbar[c];
    std::vector<double> M(k * k, 0.0), out(k * k, 0.0);
    M[0] = wb[0];
    for (std::size_t i = 1; i < k; ++i) {
      M[i] = wb[i];
      M[i * k] = wb[i];
      for (std::size_t j = 1; j < k; ++j) M[i * k + j] = (i == j ? 1.0 : 0.0) + wb[i] * wb[j] / (1.0 + wb[0]);
    }
    const double e2 = eta[c] * eta[c];
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) {
        double t = 0.0;
        for (std::size_t r = 0; r < k; ++r) t += M[i * k + r] * M[r * k + j];
        out[i * k + j] = e2 * t;
      }
    return out;
  }
};

// u o v
inline Vec cone_product(const ConeDims& dims, const Vec& u, const Vec& v) {
  Vec out(u.size());
  for (std::size_t i = 0; i < dims.l; ++i) out[i] = u[i] * v[i];
  std::size_t off = dims.l;
  for (std::size_t k : dims.q) {
    double d = 0.0;
    for (std::size_t i = 0; i < k; ++i) d += u[off + i] * v[off + i];
    out[off] = d;
    for (std::size_t i = 1; i < k; ++i) out[off + i] = u[off] * v[off + i] + v[off] * u[off + i];
    off += k;
  }
  return out;
}

// Solves lambda o u = v for u.
inline Vec cone_divide(const ConeDims& dims, const Vec& lam, const Vec& v) {
  Vec out(v.size());
  for (std::size_t i = 0; i < dims.l; ++i) out[i] = v[i] / lam[i];
  std::size_t off = dims.l;
  for (std::size_t k : dims.q) {
    const double* L = lam.data() + off;
    const double rho = soc_residual(L, k);
    double d = 0.0;
    for (std::size_t i = 1; i < k; ++i) d += L[i] * v[off + i];
    const double u0 = (L[0] * v[off] - d) / rho;
    out[off] = u0;
    for (std::size_t i = 1; i < k; ++i) out[off + i] = (v[off + i] - u0 * L[i]) / L[0];
    off += k;
  }
  return out;
}

inline void add_identity(const ConeDims& dims, Vec& u, double a) {
  for (std::size_t i = 0; i < dims.l; ++i) u[i] += a;
  std::size_t off = dims.l;
  for (std::size_t k : dims.q) {
    u[off] += a;
    off += k;
  }
}

// Shifts u into the interior: u + (1 + t) e when u is not strictly inside.
inline void shift_into_cone(const ConeDims& dims, Vec& u) {
  double t = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < dims.l; ++i) t = std::max(t, -u[i]);
  std::size_t off = dims.l;
  for (std::size_t k : dims.q) {
    double nrm = 0.0;
    for (std::size_t i = 1; i < k; ++i) nrm += u[off + i] * u[off + i];
    t = std::max(t, std::sqrt(nrm) - u[off]);
    off += k;
  }
  if (t >= -1e-8) add_identity(dims, u, 1.0 + std::max(t, 0.0));
}

// Largest step a with lam + a*d in the cone, for a well-centred lam.
inline double max_step_scaled(const ConeDims& dims, const Vec& lam, const Vec& d) {
  double rho_max = 0.0;
  for (std::size_t i = 0; i < dims.l; ++i) rho_max = std::max(rho_max, -d[i] / lam[i]);
  std::size_t off = dims.l;
  for (std::size_t k : dims.q) {
    const double* l = lam.data() + off;
    const double* y = d.data() + off;
    const double ln = std::sqrt(soc_residual(l, k));
    double r0 = l[0] * y[0];
    for (std::size_t i = 1; i < k; ++i) r0 -= l[i] * y[i];
    r0 /= ln * ln;
    const double f = (r0 + y[0] / ln) / (l[0] / ln + 1.0);
    double r1 = 0.0;
    for (std::size_t i = 1; i < k; ++i) {
      const double t = y[i] / ln - f * l[i] / ln;
      r1 += t * t;
    }
    rho_max = std::max(rho_max, std::sqrt(r1) - r0);
    off += k;
  }
  return rho_max > 0 ? 1.0 / rho_max : std::numeric_limits<double>::infinity();
}

// ---------------------------------------------------------------- KKT system

// Regularized [d*I, A', G'; A, -d*I, 0; G, 0, -W^2 - d*I]. The lower triangle holds the
// values; LU with partial pivoting copes with the near-singular systems late in a solve.
class Kkt {
 public:
  Kkt(const SpMat& A, const SpMat& G, const ConeDims& dims, double delta)
      : A_(A), G_(G), dims_(dims), delta_(delta) {
    n_ = static_cast<std::size_t>(A.cols());
    p_ = static_cast<std::size_t>(A.rows());
    m_ = static_cast<std::size_t>(G.rows());
    const std::size_t N = n_ + p_ + m_;
    std::vector<Eigen::Triplet<double>> tr;
    for (std::size_t j = 0; j < n_; ++j) tr.emplace_back(j, j, delta_);
    for (int j = 0; j < A.outerSize(); ++j)
      for (SpMat::InnerIterator it(A, j); it; ++it) tr.emplace_back(n_ + it.row(), j, it.value());
    for (int j = 0; j < G.outerSize(); ++j)
      for (SpMat::InnerIterator it(G, j); it; ++it) tr.emplace_back(n_ + p_ + it.row(), j, it.value());
    for (std::size_t i = 0; i < p_; ++i) tr.emplace_back(n_ + i, n_ + i, -delta_);
    const std::size_t z0 = n_ + p_;
    for (std::size_t i = 0; i < dims.l; ++i) tr.emplace_back(z0 + i, z0 + i, -1.0);
    std::size_t off = dims.l;
    for (std::size_t k : dims.q) {
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j <= i; ++j) tr.emplace_back(z0 + off + i, z0 + off + j, i == j ? -1.0 : 0.0);
      off += k;
    }
    K_.resize(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(N));
    K_.setFromTriplets(tr.begin(), tr.end());
    K_.makeCompressed();
    for (std::size_t i = 0; i < dims.l; ++i) slots_.push_back(&K_.coeffRef(z0 + i, z0 + i));
    off = dims.l;
    for (std::size_t k : dims.q) {
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j <= i; ++j) slots_.push_back(&K_.coeffRef(z0 + off + i, z0 + off + j));
      off += k;
    }
    full_ = K_.selfadjointView<Eigen::Lower>();
    lu_.analyzePattern(full_);
  }

  // Loads W^2; nullptr means W = I.
  bool factor(const NtScaling* W) {
    W_ = W;
    std::size_t s = 0;
    for (std::size_t i = 0; i < dims_.l; ++i) {
      double w2 = W ? W->w[i] * W->w[i] : 1.0;
      *slots_[s++] = -w2 - delta_;
    }
    for (std::size_t c = 0; c < dims_.q.size(); ++c) {
      const std::size_t k = dims_.q[c];
      std::vector<double> B = W ? W->soc_w2(c) : std::vector<double>();
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j <= i; ++j) {
          double v = W ? B[i * k + j] : (i == j ? 1.0 : 0.0);
          *slots_[s++] = -v - (i == j ? delta_ : 0.0);
        }
    }
    full_ = K_.selfadjointView<Eigen::Lower>();
    lu_.factorize(full_);
    return lu_.info() == Eigen::Success;
  }

  // Solves the unregularized system with iterative refinement.
  Vec solve(const Vec& rhs) const {
    Vec x = lsolve(rhs);
    const double scale = 1.0 + rhs.lpNorm<Eigen::Infinity>();
    double prev = std::numeric_limits<double>::infinity();
    for (int it = 0; it < 12; ++it) {
      Vec r = rhs - apply(x);
      double rn = r.lpNorm<Eigen::Infinity>();
      if (!(rn > 1e-14 * scale) || rn > 0.9 * prev) break;
      prev = rn;
      x += lsolve(r);
    }
    return x;
  }

 private:
  Vec apply(const Vec& v) const {
    const auto n = static_cast<Eigen::Index>(n_), p = static_cast<Eigen::Index>(p_),
               m = static_cast<Eigen::Index>(m_);
    Vec out(v.size());
    Vec vx = v.head(n), vy = v.segment(n, p), vz = v.tail(m);
    out.head(n) = A_.transpose() * vy + G_.transpose() * vz;
    out.segment(n, p) = A_ * vx;
    Vec w2;
    if (W_) {
      Vec t;
      W_->apply_w(vz, t);
      W_->apply_w(t, w2);
    } else {
      w2 = vz;
    }
    out.tail(m) = G_ * vx - w2;
    return out;
  }

  const SpMat& A_;
  const SpMat& G_;
  ConeDims dims_;
  double delta_;
  std::size_t n_ = 0, p_ = 0, m_ = 0;
  SpMat K_;
  std::vector<double*> slots_;
  SpMat full_;
  mutable Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu_;  // solve() is non-const in Eigen
  Vec lsolve(const Vec& r) const { return lu_.solve(r); }
  const NtScaling* W_ = nullptr;
};

// ---------------------------------------------------------------- equilibration

struct Equilibration {
  Vec D, EA, EG;  // column, equality-row and cone-row scales
  double cost = 1.0;
};

// Ruiz scaling of [A; G]; rows of one second-order cone share a factor.
inline Equilibration equilibrate(StandardForm& sf, int passes = 15) {
  const std::size_t n = sf.n, p = static_cast<std::size_t>(sf.b.size()), m = sf.dims.m();
  Equilibration eq{Vec::Ones(n), Vec::Ones(p), Vec::Ones(m)};
  std::vector<std::size_t> block(m);
  for (std::size_t i = 0; i < sf.dims.l; ++i) block[i] = i;
  std::size_t off = sf.dims.l;
  for (std::size_t k : sf.dims.q) {
    for (std::size_t i = 0; i < k; ++i) block[off + i] = off;
    off += k;
  }
  auto fac = [](double mx) { return mx > 0 ? std::clamp(1.0 / std::sqrt(mx), 1e-4, 1e4) : 1.0; };
  for (int pass = 0; pass < passes; ++pass) {
    std::vector<double> col(n, 0.0), ra(p, 0.0), rg(m, 0.0);
    for (const Triplet& t : sf.A) {
      col[t.col] = std::max(col[t.col], std::abs(t.val));
      ra[t.row] = std::max(ra[t.row], std::abs(t.val));
    }
    for (const Triplet& t : sf.G) {
      col[t.col] = std::max(col[t.col], std::abs(t.val));
      rg[block[t.row]] = std::max(rg[block[t.row]], std::abs(t.val));
    }
    double worst = 0.0;
    Vec dc(n), da(p), dg(m);
    for (std::size_t j = 0; j < n; ++j) {
      dc[j] = fac(col[j]);
      worst = std::max(worst, std::abs(1.0 - col[j]));
    }
    for (std::size_t i = 0; i < p; ++i) da[i] = fac(ra[i]);
    for (std::size_t i = 0; i < m; ++i) dg[i] = fac(rg[block[i]]);
    for (Triplet& t : sf.A) t.val *= dc[t.col] * da[t.row];
    for (Triplet& t : sf.G) t.val *= dc[t.col] * dg[t.row];
    eq.D = eq.D.cwiseProduct(dc);
    eq.EA = eq.EA.cwiseProduct(da);
    eq.EG = eq.EG.cwiseProduct(dg);
    if (worst < 1e-3) break;
  }
  sf.c = sf.c.cwiseProduct(eq.D);
  const double cmax = sf.c.size() ? sf.c.lpNorm<Eigen::Infinity>() : 0.0;
  if (cmax > 0) eq.cost = std::clamp(1.0 / cmax, 1e-4, 1e4);
  sf.c *= eq.cost;
  sf.b = sf.b.cwiseProduct(eq.EA);
  sf.h = sf.h.cwiseProduct(eq.EG);
  return eq;
}

// ---------------------------------------------------------------- driver

struct IpmResult {
  SolveStatus status = SolveStatus::iteration_limit;
  Vec x;  // unscaled primal
  double pcost = 0.0;
  double gap = std::numeric_limits<double>::infinity();
  double pres = std::numeric_limits<double>::infinity();
  double dres = std::numeric_limits<double>::infinity();
  int iterations = 0;
  std::string message;
};

// Homogeneous self-dual embedding with NT scaling and Mehrotra correction.
inline IpmResult solve_standard(const StandardForm& raw, const SolveOptions& opt) {
  StandardForm sf = raw;
  const Equilibration E = equilibrate(sf);
  const std::size_t n = sf.n, p = static_cast<std::size_t>(sf.b.size());
  const ConeDims& dims = sf.dims;
  const std::size_t m = dims.m();
  const auto N = static_cast<Eigen::Index>(n), P = static_cast<Eigen::Index>(p), M = static_cast<Eigen::Index>(m);

  const SpMat A = to_sparse(sf.A, p, n), G = to_sparse(sf.G, m, n);
  const SpMat A0 = to_sparse(raw.A, p, n), G0 = to_sparse(raw.G, m, n);
  const Vec &b = sf.b, &h = sf.h, &c = sf.c;
  const double cnorm = raw.c.size() ? raw.c.lpNorm<Eigen::Infinity>() : 0.0;
  // Floor of the relative tests; follows the cost scale below 1 so the stop does not depend on it.
  const double cfloor = cnorm > 0 ? std::min(1.0, cnorm) : 1.0;

  IpmResult res;
  Kkt kkt(A, G, dims, 1e-8);
  auto stack = [&](const Vec& a, const Vec& bb, const Vec& cc) {
    Vec v(N + P + M);
    v << a, bb, cc;
    return v;
  };
  auto split = [&](const Vec& v, Vec& x, Vec& y, Vec& z) {
    x = v.head(N);
    y = v.segment(N, P);
    z = v.tail(M);
  };

  Vec x(N), y(P), z(M), s(M);
  if (!kkt.factor(nullptr)) {
    res.message = "initial KKT factorization failed";
    return res;
  }
  {
    Vec xx, yy, zz;
    split(kkt.solve(stack(Vec::Zero(N), b, h)), xx, yy, zz);
    x = xx;
    s = -zz;
    shift_into_cone(dims, s);
    split(kkt.solve(stack(-c, Vec::Zero(P), Vec::Zero(M))), xx, yy, zz);
    y = yy;
    z = zz;
    shift_into_cone(dims, z);
  }
  double tau = 1.0, kappa = 1.0;
  IpmResult best;
  double best_score = std::numeric_limits<double>::infinity();
  const double D1 = static_cast<double>(dims.degree() + 1);

  NtScaling W;
  W.dims = dims;
  for (int it = 0; it <= opt.max_iter; ++it) {
    res.iterations = it;
    const Vec rx = A.transpose() * y + G.transpose() * z + c * tau;
    const Vec ry = A * x - b * tau;
    const Vec rz = s + G * x - h * tau;
    const double rt = kappa + c.dot(x) + b.dot(y) + h.dot(z);

    // Convergence is judged on the unscaled problem.
    const Vec xu = E.D.cwiseProduct(x) / tau;
    const Vec yu = E.EA.cwiseProduct(y) / (tau * E.cost);
    const Vec zu = E.EG.cwiseProduct(z) / (tau * E.cost);
    double pres = p ? (A0 * xu - raw.b).lpNorm<Eigen::Infinity>() : 0.0;
    {
      Vec slack = raw.h - G0 * xu;
      double viol = 0.0;
      for (std::size_t i = 0; i < dims.l; ++i) viol = std::max(viol, -slack[i]);
      std::size_t off = dims.l;
      for (std::size_t k : dims.q) {
        double t = 0.0;
        for (std::size_t i = 1; i < k; ++i) t += slack[off + i] * slack[off + i];
        viol = std::max(viol, std::sqrt(t) - slack[off]);
        off += k;
      }
      pres = std::max(pres, viol);
    }
    Vec dvec = G0.transpose() * zu + raw.c;
    if (p) dvec += A0.transpose() * yu;
    const double dres = dvec.lpNorm<Eigen::Infinity>() / (cfloor + cnorm);
    const double gap = s.dot(z) / (tau * tau * E.cost);
    const double pcost = raw.c.dot(xu);
    res.x = xu;
    res.pcost = pcost;
    res.gap = gap;
    res.pres = pres;
    res.dres = dres;
    if (opt.verbose)
      std::fprintf(stderr, "ipm %3d pcost %+.8e pres %.2e dres %.2e gap %.2e tau %.2e kappa %.2e\n", it, pcost, pres,
                   dres, gap, tau, kappa);
    if (!std::isfinite(pres) || !std::isfinite(dres) || !std::isfinite(gap)) {
      res.message = "numerical breakdown";
      break;
    }
    const double score =
        std::max({pres / opt.feas_tol, dres / opt.feas_tol, gap / (opt.rel_gap_tol * (cfloor + std::abs(pcost)))});
    if (score < best_score) {
      best_score = score;
      best = res;
    }
    if (score <= 1.0) {
      res.status = SolveStatus::optimal;
      return res;
    }
    // Infeasibility certificates.
    {
      const double by_hz = raw.b.dot(E.EA.cwiseProduct(y)) + raw.h.dot(E.EG.cwiseProduct(z));
      if (by_hz < 0) {
        Vec r = G0.transpose() * E.EG.cwiseProduct(z);
        if (p) r += A0.transpose() * E.EA.cwiseProduct(y);
        if (r.lpNorm<Eigen::Infinity>() / -by_hz < opt.feas_tol && kappa > tau) {
          res.status = SolveStatus::infeasible;
          res.message = "primal infeasibility certificate";
          return res;
        }
      }
      const Vec xs = E.D.cwiseProduct(x);
      const double cx = raw.c.dot(xs);
      if (cx < 0) {
        double r = (G0 * xs + s.cwiseQuotient(E.EG)).lpNorm<Eigen::Infinity>();
        if (p) r = std::max(r, (A0 * xs).lpNorm<Eigen::Infinity>());
        if (r / -cx < opt.feas_tol && kappa > tau) {
          res.status = SolveStatus::unbounded;
          res.message = "dual infeasibility certificate";
          return res;
        }
      }
    }
    if (it == opt.max_iter) break;

    if (!W.update(s, z)) {
      res.message = "iterate left the cone interior";
      break;
    }
    const Vec& lam = W.lambda;
    if (!kkt.factor(&W)) {
      res.message = "KKT factorization failed";
      break;
    }
    Vec x1, y1, z1;
    split(kkt.solve(stack(-c, b, h)), x1, y1, z1);
    const double den = c.dot(x1) + b.dot(y1) + h.dot(z1) - kappa / tau;

    auto direction = [&](double keep, const Vec& ds_rhs, double dk_rhs, Vec& dx, Vec& dy, Vec& dz, Vec& ds,
                         double& dt, double& dk) {
      Vec ld = cone_divide(dims, lam, ds_rhs), wld;
      W.apply_w(ld, wld);
      Vec x2, y2, z2;
      split(kkt.solve(stack(-keep * rx, -keep * ry, -keep * rz - wld)), x2, y2, z2);
      dt = (-keep * rt - dk_rhs / tau - c.dot(x2) - b.dot(y2) - h.dot(z2)) / den;
      dx = x2 + dt * x1;
      dy = y2 + dt * y1;
      dz = z2 + dt * z1;
      Vec wdz;
      W.apply_w(dz, wdz);
      Vec t = ld - wdz;
      W.apply_w(t, ds);
      dk = (dk_rhs - kappa * dt) / tau;
    };
    auto step_len = [&](const Vec& ds, const Vec& dz, double dt, double dk) {
      Vec wi_ds, w_dz;
      W.apply_winv(ds, wi_ds);
      W.apply_w(dz, w_dz);
      double a = std::min(max_step_scaled(dims, lam, wi_ds), max_step_scaled(dims, lam, w_dz));
      if (dt < 0) a = std::min(a, -tau / dt);
      if (dk < 0) a = std::min(a, -kappa / dk);
      return a;
    };

    const double mu = (s.dot(z) + tau * kappa) / D1;
    Vec dxa, dya, dza, dsa;
    double dta, dka;
    const Vec lam2 = cone_product(dims, lam, lam);
    direction(1.0, -lam2, -kappa * tau, dxa, dya, dza, dsa, dta, dka);
    const double aa = std::min(1.0, step_len(dsa, dza, dta, dka));
    const double sigma = std::clamp(std::pow(1.0 - aa, 3), 0.0, 1.0);

    Vec wi_dsa, w_dza;
    W.apply_winv(dsa, wi_dsa);
    W.apply_w(dza, w_dza);
    Vec ds_rhs = -lam2 - cone_product(dims, wi_dsa, w_dza);
    add_identity(dims, ds_rhs, sigma * mu);
    const double dk_rhs = -kappa * tau - dka * dta + sigma * mu;
    Vec dx, dy, dz, ds;
    double dt, dk;
    direction(1.0 - sigma, ds_rhs, dk_rhs, dx, dy, dz, ds, dt, dk);
    const double a = std::min(1.0, 0.99 * step_len(ds, dz, dt, dk));
    if (opt.verbose) std::fprintf(stderr, "    sigma %.3f step %.3e\n", sigma, a);
    if (!(a > 1e-12)) {
      res.message = "step length collapsed";
      break;
    }
    x += a * dx;
    y += a * dy;
    z += a * dz;
    s += a * ds;
    tau += a * dt;
    kappa += a * dk;
  }
  // Hand back the best iterate seen, still flagged as not optimal.
  best.iterations = res.iterations;
  best.message = res.message.empty() ? "iteration limit reached" : res.message;
  return best;
}

}  // namespace ipm

// Solves p; "optimal" is only reported when the independent audit of x passes.
inline ConeSolution solve(const ConeProgram& p, const SolveOptions& opts = {}) {
  p.check();
  if (!(opts.feas_tol > 0) || !(opts.rel_gap_tol > 0) || opts.max_iter < 1)
    throw ProgramError("solver options must be positive");
  ConeSolution sol;
  const ipm::StandardForm sf = ipm::to_standard_form(p);
  if (sf.dims.m() == 0 && sf.b.size() == 0) {
    // Nothing constrains x: bounded only if c == 0.
    sol.x.assign(p.n_vars, 0.0);
    for (double cj : p.objective)
      if (cj != 0.0) {
        sol.status = SolveStatus::unbounded;
        return sol;
      }
    sol.status = SolveStatus::optimal;
    sol.max_primal_residual = 0.0;
    sol.duality_gap_estimate = 0.0;
    return sol;
  }
  const ipm::IpmResult r = ipm::solve_standard(sf, opts);
  sol.status = r.status;
  sol.iterations = r.iterations;
  sol.message = r.message;
  sol.x.assign(r.x.data(), r.x.data() + r.x.size());
  if (sol.x.size() != p.n_vars) sol.x.assign(p.n_vars, 0.0);
  sol.obj = objective_value(p, sol.x);
  sol.max_primal_residual = audit(p, sol.x).max();
  sol.duality_gap_estimate = r.gap;
  if (sol.status == SolveStatus::optimal &&
      (!(sol.max_primal_residual <= opts.feas_tol) ||
       !(sol.duality_gap_estimate <= opts.rel_gap_tol * (1.0 + std::abs(sol.obj))))) {
    sol.status = SolveStatus::iteration_limit;
    sol.message = "audit rejected solver point";
  }
  return sol;
}

}  // namespace hosting
