#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <vector>

#include "locoplan/qp.hpp"
#include "support/testutil.hpp"

using namespace locoplan;
using testutil::Rng;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

SpMat sparse_of(const MatrixXd& M) {
  SpMat S(M.rows(), M.cols());
  std::vector<Eigen::Triplet<double>> t;
  for (int i = 0; i < M.rows(); ++i)
    for (int j = 0; j < M.cols(); ++j)
      if (M(i, j) != 0.0) t.emplace_back(i, j, M(i, j));
  S.setFromTriplets(t.begin(), t.end());
  return S;
}

QP dense_qp(const MatrixXd& P, const VectorXd& q, const MatrixXd& A,
            const VectorXd& b, const MatrixXd& G, const VectorXd& h) {
  QP qp;
  qp.P = sparse_of(P);
  qp.q = q;
  qp.A = sparse_of(A);
  qp.b = b;
  qp.G = sparse_of(G);
  qp.h = h;
  return qp;
}

double max_diff(const VectorXd& a, const VectorXd& b) {
  REQUIRE(a.size() == b.size());
  return a.size() ? (a - b).cwiseAbs().maxCoeff() : 0.0;
}

MatrixXd random_matrix(Rng& rng, int rows, int cols, double lo = -1.0,
                       double hi = 1.0) {
  MatrixXd M(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) M(i, j) = rng.uniform(lo, hi);
  return M;
}

VectorXd random_vector(Rng& rng, int n, double lo = -1.0, double hi = 1.0) {
  VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.uniform(lo, hi);
  return v;
}

// oracle for equality-constrained problems: one dense saddle point solve
VectorXd saddle_point_oracle(const MatrixXd& P, const VectorXd& q,
                             const MatrixXd& A, const VectorXd& b) {
  const int n = static_cast<int>(q.size());
  const int p = static_cast<int>(b.size());
  MatrixXd K = MatrixXd::Zero(n + p, n + p);
  K.topLeftCorner(n, n) = P;
  if (p > 0) {
    K.topRightCorner(n, p) = A.transpose();
    K.bottomLeftCorner(p, n) = A;
  }
  VectorXd rhs(n + p);
  rhs.head(n) = -q;
  if (p > 0) rhs.tail(p) = b;
  return K.fullPivLu().solve(rhs).head(n);
}

struct EnumeratedOpt {
  bool feasible = false;
  VectorXd x;
  double obj = std::numeric_limits<double>::infinity();
};

// oracle for strictly convex inequality problems: try every active set, keep
// KKT points that are primal feasible with nonnegative multipliers, take the
// best objective
EnumeratedOpt active_set_oracle(const MatrixXd& P, const VectorXd& q,
                                const MatrixXd& G, const VectorXd& h) {
  const int n = static_cast<int>(q.size());
  const int m = static_cast<int>(h.size());
  EnumeratedOpt best;
  for (int mask = 0; mask < (1 << m); ++mask) {
    std::vector<int> act;
    for (int i = 0; i < m; ++i)
      if (mask & (1 << i)) act.push_back(i);
    const int k = static_cast<int>(act.size());
    if (k > n) continue;
    MatrixXd K = MatrixXd::Zero(n + k, n + k);
    K.topLeftCorner(n, n) = P;
    VectorXd rhs(n + k);
    rhs.head(n) = -q;
    for (int r = 0; r < k; ++r) {
      K.block(0, n + r, n, 1) = G.row(act[r]).transpose();
      K.block(n + r, 0, 1, n) = G.row(act[r]);
      rhs(n + r) = h(act[r]);
    }
    Eigen::FullPivLU<MatrixXd> lu(K);
    if (!lu.isInvertible()) continue;
    const VectorXd sol = lu.solve(rhs);
    const VectorXd x = sol.head(n);
    const VectorXd lam = sol.tail(k);
    if (m > 0 && ((G * x - h).array() > 1e-9).any()) continue;
    if (k > 0 && (lam.array() < -1e-9).any()) continue;
    const double obj = 0.5 * x.dot(P * x) + q.dot(x);
    if (obj < best.obj) {
      best.feasible = true;
      best.x = x;
      best.obj = obj;
    }
  }
  return best;
}

void check_certificate(const QP& qp, const QPSolution& sol) {
  REQUIRE(sol.status == QPStatus::Infeasible);
  const double ny =
      sol.farkas_y.size() ? sol.farkas_y.cwiseAbs().maxCoeff() : 0.0;
  const double nz =
      sol.farkas_z.size() ? sol.farkas_z.cwiseAbs().maxCoeff() : 0.0;
  const double den = std::max(ny, nz);
  REQUIRE(den > 0.0);
  if (sol.farkas_z.size()) CHECK(sol.farkas_z.minCoeff() >= -1e-9 * den);
  VectorXd lhs = VectorXd::Zero(qp.vars());
  if (qp.eqs() > 0) lhs += qp.A.transpose() * sol.farkas_y;
  if (qp.ineqs() > 0) lhs += qp.G.transpose() * sol.farkas_z;
  CHECK(lhs.cwiseAbs().maxCoeff() <= 1e-6 * den);
  double gap = 0.0;
  if (qp.eqs() > 0) gap += qp.b.dot(sol.farkas_y);
  if (qp.ineqs() > 0) gap += qp.h.dot(sol.farkas_z);
  CHECK(gap < 0.0);
}

}  // namespace

TEST_CASE("unconstrained quadratic settles at the origin") {
  const int n = 5;
  const QP qp = dense_qp(2.0 * MatrixXd::Identity(n, n), VectorXd::Zero(n),
                         MatrixXd(0, n), VectorXd(), MatrixXd(0, n),
                         VectorXd());
  const QPSolution sol = solve_qp(qp);
  REQUIRE(sol.status == QPStatus::Optimal);
  CHECK(sol.x.cwiseAbs().maxCoeff() <= 1e-9);
  CHECK(std::abs(sol.objective) <= 1e-12);
  CHECK(sol.kkt_residual <= 1e-8);
}

TEST_CASE("single bound pins the minimizer at the boundary") {
  // (x-1)^2 subject to x <= 0 has its constrained minimum at x = 0 where the
  // squared distance is 1
  MatrixXd P(1, 1), G(1, 1);
  P << 2.0;
  G << 1.0;
  VectorXd q(1), h(1);
  q << -2.0;
  h << 0.0;
  const QP qp = dense_qp(P, q, MatrixXd(0, 1), VectorXd(), G, h);
  const QPSolution sol = solve_qp(qp);
  REQUIRE(sol.status == QPStatus::Optimal);
  CHECK(std::abs(sol.x[0]) <= 1e-8);
  CHECK(sol.objective + 1.0 == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(sol.z[0] == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(sol.kkt_residual <= 1e-8);
}

TEST_CASE("equality constrained problems match a dense saddle point solve") {
  for (uint64_t seed = 1; seed <= 25; ++seed) {
    Rng rng(seed * 77);
    const int n = 20, p = 10;
    const MatrixXd M = random_matrix(rng, n, n);
    const MatrixXd P = M.transpose() * M + MatrixXd::Identity(n, n);
    const VectorXd q = random_vector(rng, n, -2.0, 2.0);
    const MatrixXd A = random_matrix(rng, p, n);
    const VectorXd b = random_vector(rng, p);
    const VectorXd x_ref = saddle_point_oracle(P, q, A, b);

    const QP qp = dense_qp(P, q, A, b, MatrixXd(0, n), VectorXd());
    const QPSolution sol = solve_qp(qp);
    REQUIRE(sol.status == QPStatus::Optimal);
    CHECK(max_diff(sol.x, x_ref) <= 1e-6);
    CHECK(sol.kkt_residual <= 1e-8);
  }
}

TEST_CASE("inequality constrained problems match active set enumeration") {
  int optima = 0, empty = 0;
  for (uint64_t seed = 1; seed <= 50; ++seed) {
    Rng rng(seed * 131 + 7);
    const int n = rng.uniform_int(2, 6);
    const int m = rng.uniform_int(1, 8);
    const MatrixXd M = random_matrix(rng, n, n);
    const MatrixXd P = M.transpose() * M + MatrixXd::Identity(n, n);
    const VectorXd q = random_vector(rng, n, -2.0, 2.0);
    const MatrixXd G = random_matrix(rng, m, n);
    const VectorXd x0 = random_vector(rng, n);
    VectorXd h = G * x0;
    for (int i = 0; i < m; ++i) h[i] += rng.uniform(-0.5, 1.0);

    const EnumeratedOpt ref = active_set_oracle(P, q, G, h);
    const QP qp = dense_qp(P, q, MatrixXd(0, n), VectorXd(), G, h);
    const QPSolution sol = solve_qp(qp);
    if (ref.feasible) {
      ++optima;
      REQUIRE(sol.status == QPStatus::Optimal);
      CHECK(max_diff(sol.x, ref.x) <= 1e-6 * (1.0 + ref.x.cwiseAbs().maxCoeff()));
      CHECK(sol.objective ==
            doctest::Approx(ref.obj).epsilon(1e-7).scale(1.0));
      CHECK(sol.kkt_residual <= 1e-8);
      CHECK(sol.s.minCoeff() >= -1e-12);
      CHECK(sol.z.minCoeff() >= -1e-12);
      CHECK(sol.s.cwiseProduct(sol.z).maxCoeff() <= 1e-8);
    } else {
      ++empty;
      check_certificate(qp, sol);
    }
  }
  // the generator must exercise both verdicts
  CHECK(optima > 0);
  CHECK(empty > 0);
}

TEST_CASE("mixed constraints reach tight optimality residuals") {
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed * 271 + 3);
    const int n = 12, p = 4, m = 10;
    const MatrixXd M = random_matrix(rng, n, n);
    const MatrixXd P = M.transpose() * M + MatrixXd::Identity(n, n);
    const VectorXd q = random_vector(rng, n, -2.0, 2.0);
    const MatrixXd A = random_matrix(rng, p, n);
    const MatrixXd G = random_matrix(rng, m, n);
    const VectorXd x0 = random_vector(rng, n);
    const VectorXd b = A * x0;
    VectorXd h = G * x0;
    for (int i = 0; i < m; ++i) h[i] += rng.uniform(0.01, 1.0);

    const QP qp = dense_qp(P, q, A, b, G, h);
    const QPSolution sol = solve_qp(qp);
    REQUIRE(sol.status == QPStatus::Optimal);
    CHECK(sol.kkt_residual <= 1e-8);

    VectorXd stat = qp.P * sol.x + qp.q + qp.A.transpose() * sol.y +
                    qp.G.transpose() * sol.z;
    CHECK(stat.cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((qp.A * sol.x - qp.b).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK(((qp.G * sol.x - qp.h).array() <= 1e-8).all());
    CHECK(sol.z.minCoeff() >= -1e-12);
    CHECK(sol.s.cwiseProduct(sol.z).maxCoeff() <= 1e-8);
  }
}

TEST_CASE("badly scaled data still converges after equilibration") {
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed * 991);
    const int n = 8, m = 6;
    const MatrixXd M = random_matrix(rng, n, n);
    MatrixXd P = M.transpose() * M + MatrixXd::Identity(n, n);
    P *= 1000.0;  // cost weights three orders above constraint data
    const VectorXd q = 1000.0 * random_vector(rng, n);
    MatrixXd G = random_matrix(rng, m, n);
    G.row(0) *= 1e3;
    const VectorXd x0 = random_vector(rng, n);
    VectorXd h = G * x0;
    for (int i = 0; i < m; ++i) h[i] += rng.uniform(0.1, 1.0);

    const QP qp = dense_qp(P, q, MatrixXd(0, n), VectorXd(), G, h);
    const QPSolution sol = solve_qp(qp);
    REQUIRE(sol.status == QPStatus::Optimal);
    const double scale =
        1.0 + qp.q.cwiseAbs().maxCoeff() + qp.h.cwiseAbs().maxCoeff();
    CHECK(sol.kkt_residual <= 1e-8 * scale);
    CHECK(((qp.G * sol.x - qp.h).array() <= 1e-8 * scale).all());
  }
}

TEST_CASE("pure linear objectives over a box work without curvature") {
  MatrixXd G(4, 2);
  G << 1, 0, 0, 1, -1, 0, 0, -1;
  VectorXd h(4);
  h << 1, 1, 0, 0;
  VectorXd q(2);
  q << 1.0, 1.0;
  const QP qp =
      dense_qp(MatrixXd::Zero(2, 2), q, MatrixXd(0, 2), VectorXd(), G, h);
  const QPSolution sol = solve_qp(qp);
  REQUIRE(sol.status == QPStatus::Optimal);
  CHECK(sol.x.cwiseAbs().maxCoeff() <= 1e-7);
  CHECK(std::abs(sol.objective) <= 1e-7);

  QP qp_max = qp;
  qp_max.q = -q;
  const QPSolution sol2 = solve_qp(qp_max);
  REQUIRE(sol2.status == QPStatus::Optimal);
  CHECK(max_diff(sol2.x, VectorXd::Ones(2)) <= 1e-7);
  CHECK(sol2.objective == doctest::Approx(-2.0).epsilon(1e-7));
}

TEST_CASE("contradictory bounds yield a separating dual ray") {
  // x <= 0 and x >= 1 cannot hold together
  MatrixXd P(1, 1), G(2, 1);
  P << 2.0;
  G << 1.0, -1.0;
  VectorXd q(1), h(2);
  q << 0.0;
  h << 0.0, -1.0;
  const QP qp = dense_qp(P, q, MatrixXd(0, 1), VectorXd(), G, h);
  const QPSolution sol = solve_qp(qp);
  check_certificate(qp, sol);
  CHECK(std::isinf(sol.objective));
}

TEST_CASE("inconsistent equalities yield a dual ray") {
  // x = 0 and x = 1 simultaneously
  MatrixXd P(1, 1), A(2, 1);
  P << 2.0;
  A << 1.0, 1.0;
  VectorXd q(1), b(2);
  q << 0.0;
  b << 0.0, 1.0;
  const QP qp = dense_qp(P, q, A, b, MatrixXd(0, 1), VectorXd());
  const QPSolution sol = solve_qp(qp);
  check_certificate(qp, sol);
}

TEST_CASE("iteration cap reports an unknown verdict") {
  Rng rng(42);
  const int n = 6, m = 5;
  const MatrixXd M = random_matrix(rng, n, n);
  const MatrixXd P = M.transpose() * M + MatrixXd::Identity(n, n);
  const VectorXd q = random_vector(rng, n);
  const MatrixXd G = random_matrix(rng, m, n);
  const VectorXd x0 = random_vector(rng, n);
  VectorXd h = G * x0;
  for (int i = 0; i < m; ++i) h[i] += rng.uniform(0.1, 1.0);
  const QP qp = dense_qp(P, q, MatrixXd(0, n), VectorXd(), G, h);

  QPSettings st;
  st.max_iterations = 1;
  const QPSolution sol = solve_qp(qp, st);
  CHECK(sol.status == QPStatus::MaxIterations);
}

TEST_CASE("repeat solves are bitwise identical") {
  Rng rng(7);
  const int n = 9, m = 7;
  const MatrixXd M = random_matrix(rng, n, n);
  const MatrixXd P = M.transpose() * M + MatrixXd::Identity(n, n);
  const VectorXd q = random_vector(rng, n);
  const MatrixXd G = random_matrix(rng, m, n);
  const VectorXd x0 = random_vector(rng, n);
  VectorXd h = G * x0;
  for (int i = 0; i < m; ++i) h[i] += rng.uniform(0.05, 0.8);
  const QP qp = dense_qp(P, q, MatrixXd(0, n), VectorXd(), G, h);

  const QPSolution a = solve_qp(qp);
  const QPSolution b = solve_qp(qp);
  REQUIRE(a.status == QPStatus::Optimal);
  REQUIRE(b.status == QPStatus::Optimal);
  CHECK(max_diff(a.x, b.x) == 0.0);
  CHECK(max_diff(a.z, b.z) == 0.0);
  CHECK(a.objective == b.objective);
}

TEST_CASE("malformed shapes are rejected") {
  QP qp;
  qp.P = SpMat(2, 2);
  qp.q = VectorXd::Zero(3);
  CHECK_THROWS_AS(solve_qp(qp), std::invalid_argument);
}
