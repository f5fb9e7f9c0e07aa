#include "locoplan/qp.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace locoplan {

namespace {

using Eigen::VectorXd;
using Trip = Eigen::Triplet<double>;

double inf_norm(const VectorXd& v) {
  return v.size() > 0 ? v.cwiseAbs().maxCoeff() : 0.0;
}

void scale_rows_cols(SpMat& M, const VectorXd& r, const VectorXd& c) {
  for (int j = 0; j < M.outerSize(); ++j)
    for (SpMat::InnerIterator it(M, j); it; ++it)
      it.valueRef() *= r[it.row()] * c[it.col()];
}

struct Scaling {
  VectorXd dx, de, di;  // variable, equality row, inequality row factors
  double cost = 1.0;
};

// Ruiz equilibration: repeatedly normalize rows and columns of the stacked
// problem data by the square root of their largest entry, then pull the cost
// toward unit magnitude. Works in place on a copy of the problem.
Scaling equilibrate(QP& qp, int sweeps) {
  const int n = qp.vars(), p = qp.eqs(), m = qp.ineqs();
  Scaling sc;
  sc.dx = VectorXd::Ones(n);
  sc.de = VectorXd::Ones(p);
  sc.di = VectorXd::Ones(m);
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    VectorXd cx = VectorXd::Zero(n);
    VectorXd ce = VectorXd::Zero(p);
    VectorXd ci = VectorXd::Zero(m);
    for (int j = 0; j < qp.P.outerSize(); ++j)
      for (SpMat::InnerIterator it(qp.P, j); it; ++it)
        cx[it.col()] = std::max(cx[it.col()], std::abs(it.value()));
    for (int j = 0; j < qp.A.outerSize(); ++j)
      for (SpMat::InnerIterator it(qp.A, j); it; ++it) {
        cx[it.col()] = std::max(cx[it.col()], std::abs(it.value()));
        ce[it.row()] = std::max(ce[it.row()], std::abs(it.value()));
      }
    for (int j = 0; j < qp.G.outerSize(); ++j)
      for (SpMat::InnerIterator it(qp.G, j); it; ++it) {
        cx[it.col()] = std::max(cx[it.col()], std::abs(it.value()));
        ci[it.row()] = std::max(ci[it.row()], std::abs(it.value()));
      }
    auto inv_sqrt = [](VectorXd& v) {
      for (Eigen::Index i = 0; i < v.size(); ++i)
        v[i] = v[i] > 1e-12 ? 1.0 / std::sqrt(v[i]) : 1.0;
    };
    inv_sqrt(cx);
    inv_sqrt(ce);
    inv_sqrt(ci);
    scale_rows_cols(qp.P, cx, cx);
    qp.q = qp.q.cwiseProduct(cx);
    if (p > 0) {
      scale_rows_cols(qp.A, ce, cx);
      qp.b = qp.b.cwiseProduct(ce);
    }
    if (m > 0) {
      scale_rows_cols(qp.G, ci, cx);
      qp.h = qp.h.cwiseProduct(ci);
    }
    sc.dx = sc.dx.cwiseProduct(cx);
    sc.de = sc.de.cwiseProduct(ce);
    sc.di = sc.di.cwiseProduct(ci);
  }
  double pmax = 0.0;
  for (int j = 0; j < qp.P.outerSize(); ++j)
    for (SpMat::InnerIterator it(qp.P, j); it; ++it)
      pmax = std::max(pmax, std::abs(it.value()));
  sc.cost = 1.0 / std::max(1.0, std::max(pmax, inf_norm(qp.q)));
  qp.P *= sc.cost;
  qp.q *= sc.cost;
  return sc;
}

// Regularized symmetric quasi-definite Newton system
//   [ P + dI    A'        G'     ]
//   [ A        -dI        0      ]
//   [ G         0   -W^2 - dI    ]
// factored with a simplicial LDLT whose pattern is analyzed once. The true
// (unregularized) matrix equals K - diag(shift), which drives the iterative
// refinement of each solve.
struct KKTSystem {
  int n = 0, p = 0, m = 0;
  double delta = 0.0;
  std::vector<Trip> fixed;
  SpMat K;
  VectorXd shift;
  Eigen::SimplicialLDLT<SpMat, Eigen::Lower> ldlt;
  bool analyzed = false;

  void init(const QP& qp, double delta_) {
    n = qp.vars();
    p = qp.eqs();
    m = qp.ineqs();
    delta = delta_;
    const int N = n + p + m;
    K.resize(N, N);
    shift = VectorXd::Zero(N);
    shift.head(n).setConstant(delta);
    shift.tail(p + m).setConstant(-delta);
    fixed.clear();
    for (int j = 0; j < qp.P.outerSize(); ++j)
      for (SpMat::InnerIterator it(qp.P, j); it; ++it)
        fixed.emplace_back(static_cast<int>(it.row()),
                           static_cast<int>(it.col()), it.value());
    for (int i = 0; i < n; ++i) fixed.emplace_back(i, i, delta);
    for (int j = 0; j < qp.A.outerSize(); ++j)
      for (SpMat::InnerIterator it(qp.A, j); it; ++it) {
        const int r = n + static_cast<int>(it.row());
        const int c = static_cast<int>(it.col());
        fixed.emplace_back(r, c, it.value());
        fixed.emplace_back(c, r, it.value());
      }
    for (int i = 0; i < p; ++i) fixed.emplace_back(n + i, n + i, -delta);
    for (int j = 0; j < qp.G.outerSize(); ++j)
      for (SpMat::InnerIterator it(qp.G, j); it; ++it) {
        const int r = n + p + static_cast<int>(it.row());
        const int c = static_cast<int>(it.col());
        fixed.emplace_back(r, c, it.value());
        fixed.emplace_back(c, r, it.value());
      }
    for (int i = 0; i < m; ++i)
      fixed.emplace_back(n + p + i, n + p + i, -delta);
  }

  bool factorize(const VectorXd& w2) {
    std::vector<Trip> trips = fixed;
    for (int i = 0; i < m; ++i)
      trips.emplace_back(n + p + i, n + p + i, -w2[i]);
    K.setFromTriplets(trips.begin(), trips.end());
    if (!analyzed) {
      ldlt.analyzePattern(K);
      analyzed = true;
    }
    ldlt.factorize(K);
    return ldlt.info() == Eigen::Success;
  }

  VectorXd solve(const VectorXd& rhs, int refinement) const {
    VectorXd x = ldlt.solve(rhs);
    for (int r = 0; r < refinement; ++r) {
      VectorXd res = rhs - (K * x - shift.cwiseProduct(x));
      x += ldlt.solve(res);
    }
    return x;
  }
};

struct Iterate {
  VectorXd x, y, z, s;
};

struct Residuals {
  double rx = 0.0, ry = 0.0, rz = 0.0, comp = 0.0, obj = 0.0;
  bool ok(double tol, double sx, double sy, double sz) const {
    return rx <= tol * sx && ry <= tol * sy && rz <= tol * sz &&
           comp <= tol * (1.0 + std::abs(obj));
  }
  double absolute() const { return std::max({rx, ry, rz, comp}); }
  double relative(double sx, double sy, double sz) const {
    return std::max({rx / sx, ry / sy, rz / sz,
                     comp / (1.0 + std::abs(obj))});
  }
};

Residuals eval_residuals(const QP& qp, const Iterate& it) {
  Residuals r;
  VectorXd rx = qp.P * it.x + qp.q;
  if (qp.eqs() > 0) rx += qp.A.transpose() * it.y;
  if (qp.ineqs() > 0) rx += qp.G.transpose() * it.z;
  r.rx = inf_norm(rx);
  if (qp.eqs() > 0) r.ry = inf_norm(qp.A * it.x - qp.b);
  if (qp.ineqs() > 0) {
    r.rz = inf_norm(qp.G * it.x + it.s - qp.h);
    r.comp = it.s.cwiseProduct(it.z).cwiseAbs().maxCoeff();
  }
  r.obj = qp.objective(it.x);
  return r;
}

VectorXd shift_positive(const VectorXd& u) {
  if (u.size() == 0) return u;
  const double theta = -u.minCoeff();
  if (theta < 0.0) return u;
  return u.array() + (1.0 + theta);
}

// largest alpha in (0, 1] keeping s + alpha*ds and z + alpha*dz nonnegative
double step_length(const VectorXd& s, const VectorXd& ds, const VectorXd& z,
                   const VectorXd& dz) {
  double a = 1.0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (ds[i] < 0.0) a = std::min(a, -s[i] / ds[i]);
    if (dz[i] < 0.0) a = std::min(a, -z[i] / dz[i]);
  }
  return a;
}

void fill_solution(QPSolution& out, const QP& qp, const Iterate& it,
                   const Residuals& res) {
  out.x = it.x;
  out.y = it.y;
  out.z = it.z;
  out.s = it.s;
  out.objective = qp.objective(it.x);
  out.kkt_residual = res.absolute();
}

bool verify_ray(const QP& qp, const VectorXd& y, const VectorXd& z) {
  if (y.size() != qp.eqs() || z.size() != qp.ineqs()) return false;
  const double den = std::max(inf_norm(y), inf_norm(z));
  if (den <= 0.0) return false;
  if (qp.ineqs() > 0 && z.minCoeff() < -1e-9 * den) return false;
  VectorXd lhs = VectorXd::Zero(qp.vars());
  if (qp.eqs() > 0) lhs += qp.A.transpose() * y;
  if (qp.ineqs() > 0) lhs += qp.G.transpose() * z;
  double gap = 0.0;
  if (qp.eqs() > 0) gap += qp.b.dot(y);
  if (qp.ineqs() > 0) gap += qp.h.dot(z);
  return inf_norm(lhs) <= 1e-6 * den && gap < -1e-9 * den;
}

QPSolution solve_core(const QP& original, const QPSettings& st,
                      bool allow_elastic);

// Feasibility phase: minimize the total violation e >= 0 of the inequalities
// with equalities kept hard. A strictly positive optimum certifies the
// original constraints contradictory and its multipliers form the dual ray.
QPSolution certify_by_elastic(const QP& qp, const QPSettings& st,
                              QPSolution fallback) {
  const int n = qp.vars(), p = qp.eqs(), m = qp.ineqs();
  QP el;
  el.P.resize(n + m, n + m);
  el.q = VectorXd::Zero(n + m);
  el.q.tail(m).setOnes();
  el.A.resize(p, n + m);
  {
    std::vector<Trip> trips;
    for (int j = 0; j < qp.A.outerSize(); ++j)
      for (SpMat::InnerIterator it(qp.A, j); it; ++it)
        trips.emplace_back(static_cast<int>(it.row()),
                           static_cast<int>(it.col()), it.value());
    el.A.setFromTriplets(trips.begin(), trips.end());
  }
  el.b = qp.b;
  el.G.resize(2 * m, n + m);
  {
    std::vector<Trip> trips;
    for (int j = 0; j < qp.G.outerSize(); ++j)
      for (SpMat::InnerIterator it(qp.G, j); it; ++it)
        trips.emplace_back(static_cast<int>(it.row()),
                           static_cast<int>(it.col()), it.value());
    for (int i = 0; i < m; ++i) {
      trips.emplace_back(i, n + i, -1.0);      // Gx - e <= h
      trips.emplace_back(m + i, n + i, -1.0);  // -e <= 0
    }
    el.G.setFromTriplets(trips.begin(), trips.end());
  }
  el.h = VectorXd::Zero(2 * m);
  el.h.head(m) = qp.h;

  QPSettings est = st;
  est.max_iterations = std::max(st.max_iterations, 100);
  QPSolution esol = solve_core(el, est, false);
  if (esol.status != QPStatus::Optimal) return fallback;
  if (esol.objective <= st.infeasibility_tolerance) return fallback;
  VectorXd ray_y = esol.y;
  VectorXd ray_z = esol.z.head(m);
  if (!verify_ray(qp, ray_y, ray_z)) return fallback;
  QPSolution out = fallback;
  out.status = QPStatus::Infeasible;
  out.farkas_y = ray_y;
  out.farkas_z = ray_z;
  out.objective = std::numeric_limits<double>::infinity();
  return out;
}

QPSolution solve_core(const QP& original, const QPSettings& st,
                      bool allow_elastic) {
  const int n = original.vars(), p = original.eqs(), m = original.ineqs();
  QPSolution out;
  if (n == 0) {
    out.status = QPStatus::Optimal;
    out.x = VectorXd();
    out.y = VectorXd::Zero(p);
    out.z = VectorXd::Zero(m);
    out.s = original.h;
    return out;
  }

  QP scaled = original;
  const Scaling sc = equilibrate(scaled, st.equilibration_sweeps);

  const double sx = 1.0 + inf_norm(original.q);
  const double sy = 1.0 + inf_norm(original.b);
  const double sz = 1.0 + inf_norm(original.h);

  KKTSystem kkt;
  kkt.init(scaled, st.regularization);
  auto factor = [&](const VectorXd& w2) {
    for (int attempt = 0; attempt < 4; ++attempt) {
      if (kkt.factorize(w2)) return true;
      kkt.init(scaled, kkt.delta * 10.0);
    }
    return false;
  };

  auto unscale = [&](const VectorXd& xt, const VectorXd& yt,
                     const VectorXd& zt, const VectorXd& stl) {
    Iterate it;
    it.x = sc.dx.cwiseProduct(xt);
    it.y = sc.de.cwiseProduct(yt) / sc.cost;
    it.z = sc.di.cwiseProduct(zt) / sc.cost;
    it.s = (m > 0) ? VectorXd(stl.cwiseQuotient(sc.di)) : VectorXd();
    return it;
  };

  if (m == 0) {
    if (!factor(VectorXd())) {
      out.status = QPStatus::MaxIterations;
      return out;
    }
    VectorXd rhs(n + p);
    rhs.head(n) = -scaled.q;
    if (p > 0) rhs.tail(p) = scaled.b;
    const VectorXd sol = kkt.solve(rhs, st.refinement_steps);
    Iterate it = unscale(sol.head(n), sol.tail(p), VectorXd(), VectorXd());
    const Residuals res = eval_residuals(original, it);
    fill_solution(out, original, it, res);
    out.iterations = 1;
    if (res.ok(st.tolerance * 10.0, sx, sy, sz)) {
      out.status = QPStatus::Optimal;
      return out;
    }
    if (p > 0 && res.ry > st.tolerance * sy * 100.0 &&
        static_cast<long long>(p) * n <= 4000000LL) {
      // inconsistent equalities: the least-squares residual direction is a
      // certificate since A'(Ax* - b) = 0
      Eigen::MatrixXd Ad(original.A);
      const VectorXd xls = Ad.colPivHouseholderQr().solve(original.b);
      VectorXd ray = -(original.b - Ad * xls);
      const double nrm = inf_norm(ray);
      if (nrm > 0.0) {
        ray /= nrm;
        if (verify_ray(original, ray, VectorXd::Zero(0))) {
          out.status = QPStatus::Infeasible;
          out.farkas_y = ray;
          out.farkas_z = VectorXd();
          out.objective = std::numeric_limits<double>::infinity();
          return out;
        }
      }
    }
    out.status = QPStatus::MaxIterations;
    return out;
  }

  double matnorm = 1.0;
  for (int j = 0; j < original.A.outerSize(); ++j)
    for (SpMat::InnerIterator it(original.A, j); it; ++it)
      matnorm = std::max(matnorm, std::abs(it.value()));
  for (int j = 0; j < original.G.outerSize(); ++j)
    for (SpMat::InnerIterator it(original.G, j); it; ++it)
      matnorm = std::max(matnorm, std::abs(it.value()));

  // starting point from one Newton solve with unit barrier weights
  if (!factor(VectorXd::Ones(m))) {
    out.status = QPStatus::MaxIterations;
    return out;
  }
  VectorXd rhs(n + p + m);
  rhs.head(n) = -scaled.q;
  if (p > 0) rhs.segment(n, p) = scaled.b;
  rhs.tail(m) = scaled.h;
  const VectorXd sol0 = kkt.solve(rhs, st.refinement_steps);
  VectorXd xt = sol0.head(n);
  VectorXd yt = sol0.segment(n, p);
  VectorXd zt = shift_positive(sol0.tail(m));
  VectorXd stl = shift_positive(-sol0.tail(m));

  Iterate best;
  Residuals best_res;
  double best_metric = std::numeric_limits<double>::infinity();
  int stall = 0;
  int iters = 0;

  for (int iter = 0; iter < st.max_iterations; ++iter) {
    iters = iter + 1;
    const Iterate cur = unscale(xt, yt, zt, stl);
    const Residuals res = eval_residuals(original, cur);
    const double metric = res.relative(sx, sy, sz);
    if (metric < best_metric * (1.0 - 1e-6)) {
      best = cur;
      best_res = res;
      best_metric = metric;
      stall = 0;
    } else {
      ++stall;
    }
    if (res.ok(st.tolerance, sx, sy, sz)) {
      fill_solution(out, original, cur, res);
      out.status = QPStatus::Optimal;
      out.iterations = iters;
      return out;
    }
    // diverging multipliers may already expose a separating ray
    const double den = std::max(inf_norm(cur.y), inf_norm(cur.z));
    if (den > 1e4) {
      VectorXd ry_ray = cur.y / den;
      VectorXd rz_ray = cur.z / den;
      VectorXd lhs = original.G.transpose() * rz_ray;
      if (p > 0) lhs += original.A.transpose() * ry_ray;
      double gap = original.h.dot(rz_ray);
      if (p > 0) gap += original.b.dot(ry_ray);
      if (inf_norm(lhs) <= 1e-9 * matnorm &&
          gap <= -1e-7 * (1.0 + inf_norm(original.b) + inf_norm(original.h))) {
        fill_solution(out, original, cur, res);
        out.status = QPStatus::Infeasible;
        out.farkas_y = ry_ray;
        out.farkas_z = rz_ray;
        out.objective = std::numeric_limits<double>::infinity();
        out.iterations = iters;
        return out;
      }
    }
    if (stall >= 8) break;

    // scaled residuals drive the Newton step
    VectorXd rx = scaled.P * xt + scaled.q + scaled.G.transpose() * zt;
    if (p > 0) rx += scaled.A.transpose() * yt;
    VectorXd ry = (p > 0) ? VectorXd(scaled.A * xt - scaled.b) : VectorXd();
    VectorXd rz = scaled.G * xt + stl - scaled.h;
    const double mu = stl.dot(zt) / m;

    VectorXd w2 = stl.cwiseQuotient(zt);
    for (Eigen::Index i = 0; i < w2.size(); ++i)
      w2[i] = std::clamp(w2[i], 1e-14, 1e14);
    if (!factor(w2)) break;

    VectorXd rhs_aff(n + p + m);
    rhs_aff.head(n) = -rx;
    if (p > 0) rhs_aff.segment(n, p) = -ry;
    rhs_aff.tail(m) = -rz + stl;
    const VectorXd da = kkt.solve(rhs_aff, st.refinement_steps);
    const VectorXd dza = da.tail(m);
    const VectorXd dsa = -stl - w2.cwiseProduct(dza);

    const double a_aff = step_length(stl, dsa, zt, dza);
    const double mu_aff =
        (stl + a_aff * dsa).dot(zt + a_aff * dza) / m;
    double sigma = 0.0;
    if (mu > 0.0) sigma = std::clamp(std::pow(mu_aff / mu, 3.0), 0.0, 1.0);

    VectorXd rc = stl.cwiseProduct(zt) + dsa.cwiseProduct(dza);
    rc.array() -= sigma * mu;
    VectorXd rhs_cc(n + p + m);
    rhs_cc.head(n) = -rx;
    if (p > 0) rhs_cc.segment(n, p) = -ry;
    rhs_cc.tail(m) = -rz + rc.cwiseQuotient(zt);
    const VectorXd d = kkt.solve(rhs_cc, st.refinement_steps);
    const VectorXd dz = d.tail(m);
    const VectorXd ds = -rc.cwiseQuotient(zt) - w2.cwiseProduct(dz);

    const double alpha = std::min(1.0, 0.99 * step_length(stl, ds, zt, dz));
    xt += alpha * d.head(n);
    if (p > 0) yt += alpha * d.segment(n, p);
    zt += alpha * dz;
    stl += alpha * ds;
  }

  out.iterations = iters;
  out.status = QPStatus::MaxIterations;
  if (best_metric < std::numeric_limits<double>::infinity()) {
    fill_solution(out, original, best, best_res);
    if (best_res.ok(st.tolerance * 2.0, sx, sy, sz)) {
      out.status = QPStatus::Optimal;
      return out;
    }
  }
  if (allow_elastic) return certify_by_elastic(original, st, out);
  return out;
}

void validate(const QP& qp) {
  const int n = qp.vars(), p = qp.eqs(), m = qp.ineqs();
  if (qp.P.rows() != n || qp.P.cols() != n)
    throw std::invalid_argument("qp: P must be vars x vars");
  if (p > 0 && (qp.A.rows() != p || qp.A.cols() != n))
    throw std::invalid_argument("qp: A shape does not match b");
  if (p == 0 && qp.A.rows() != 0)
    throw std::invalid_argument("qp: A has rows but b is empty");
  if (m > 0 && (qp.G.rows() != m || qp.G.cols() != n))
    throw std::invalid_argument("qp: G shape does not match h");
  if (m == 0 && qp.G.rows() != 0)
    throw std::invalid_argument("qp: G has rows but h is empty");
}

}  // namespace

double QP::objective(const Eigen::VectorXd& x) const {
  double quad = 0.0;
  if (P.rows() == x.size() && P.cols() == x.size()) quad = 0.5 * x.dot(P * x);
  return quad + q.dot(x);
}

QPSolution solve_qp(const QP& qp, const QPSettings& settings) {
  validate(qp);
  return solve_core(qp, settings, true);
}

}  // namespace locoplan
