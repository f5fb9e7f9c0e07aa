#pragma once

#include <Eigen/Sparse>

namespace locoplan {

using SpMat = Eigen::SparseMatrix<double>;

// Convex quadratic program
//   minimize    0.5 x'Px + q'x
//   subject to  Ax = b,  Gx <= h
// P must be positive semidefinite and stored with both triangles; A and G
// may be empty.
struct QP {
  SpMat P;
  Eigen::VectorXd q;
  SpMat A;
  Eigen::VectorXd b;
  SpMat G;
  Eigen::VectorXd h;

  int vars() const { return static_cast<int>(q.size()); }
  int eqs() const { return static_cast<int>(b.size()); }
  int ineqs() const { return static_cast<int>(h.size()); }
  double objective(const Eigen::VectorXd& x) const;
};

enum class QPStatus { Optimal, Infeasible, MaxIterations };

struct QPSolution {
  QPStatus status = QPStatus::MaxIterations;
  Eigen::VectorXd x;  // primal
  Eigen::VectorXd y;  // equality multipliers
  Eigen::VectorXd z;  // inequality multipliers, >= 0
  Eigen::VectorXd s;  // inequality slacks, >= 0
  double objective = 0.0;
  int iterations = 0;
  // max of stationarity, equality and inequality residuals at the returned
  // point (unscaled data)
  double kkt_residual = 0.0;
  // separating dual ray when infeasible: A'y + G'z ~ 0, z >= 0 and
  // b'y + h'z < 0 witness that no feasible point exists
  Eigen::VectorXd farkas_y, farkas_z;
};

struct QPSettings {
  int max_iterations = 60;
  double tolerance = 1e-9;       // residual and complementarity target
  double regularization = 1e-8;  // static KKT regularization
  int refinement_steps = 2;      // iterative refinement per KKT solve
  int equilibration_sweeps = 6;  // Ruiz scaling passes, 0 disables
  double infeasibility_tolerance = 1e-7;  // elastic objective cutoff
};

// Sparse primal-dual interior point method with a Mehrotra
// predictor-corrector step, a quasi-definite regularized KKT system
// factored once per iteration, and Ruiz equilibration. Declares
// infeasibility only with a certificate: either a diverging dual ray or the
// multipliers of an elastic relaxation whose violation cannot be driven to
// zero.
QPSolution solve_qp(const QP& qp, const QPSettings& settings = {});

}  // namespace locoplan
