#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "locoplan/abstraction.hpp"
#include "locoplan/geometry.hpp"
#include "locoplan/qp.hpp"
#include "locoplan/robot.hpp"

namespace locoplan {

struct RetargetInfeasible : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tracking cost weights: Q blocks penalize deviation from the reference,
// R blocks penalize accelerations and contact forces.
struct CostWeights {
  double q_base = 1000.0;
  double q_att = 1000.0;
  double q_feet = 1000.0;
  double r_base_acc = 10.0;
  double r_att_acc = 10.0;
  double r_feet_acc = 0.5;
  double r_force = 0.1;
};

struct BinaryVar {
  int column = -1;  // column in the stacked vector
  std::string group;
  int region = -1;
  int step = -1;  // time step, touchdown index or interval, by group
  int foot = -1;
  std::string label() const;
};

// sum over cols equals one (exactly_one) or is at most one
struct SumRow {
  std::vector<int> cols;
  bool exactly_one = true;
};

// One conditional inequality over continuous columns.
//   when_zero == false: single binary b, and b = 1 forces terms.x <= rhs
//   when_zero == true: sum(binaries) == 0 forces terms.x <= rhs
// Realized with big-M slack taken from the variable box.
struct Implication {
  std::vector<int> binaries;
  bool when_zero = false;
  std::vector<std::pair<int, double>> terms;
  double rhs = 0.0;
  double big_m = 0.0;
};

struct ColumnMeta {
  std::string group;  // base / attitude / feet / force / binary
  std::string label;
  int step = -1;
};

enum class ProblemKind { GaitFixed, GaitFree, Retarget };

// Mixed-integer convex program over a fixed per-step variable layout:
// base position, velocity, acceleration; Euler angles and derivatives; per
// foot position, velocity, acceleration; per foot contact force. Binaries
// follow the continuous block. Builders fill the assembly buffers and
// finalize() materializes box rows, sum rows and implications into the
// convex relaxation.
struct MICPProblem {
  static constexpr int kStride = 66;

  ProblemKind kind = ProblemKind::GaitFixed;
  int steps = 0;
  double dt = 0.05;
  int num_continuous = 0;
  RobotParams robot;
  std::vector<double> yaw_ref;  // per step, drives linearized rotations
  std::array<std::vector<std::pair<int, int>>, kNumFeet>
      stance_windows;  // half-open [begin, end) step ranges

  std::vector<BinaryVar> binaries;
  std::vector<SumRow> sum_rows;
  std::vector<Implication> implications;
  std::vector<ColumnMeta> columns;
  Eigen::VectorXd lower, upper;  // continuous variable box (big-M source)

  // candidate full assignments solved once at the root before branching;
  // builders seed these with structurally plausible contact patterns so the
  // search starts with an incumbent
  std::vector<std::vector<int>> hints;

  QP relaxation;  // valid after finalize()

  // assembly buffers consumed by finalize()
  std::vector<Eigen::Triplet<double>> p_trips, a_trips, g_trips;
  std::vector<double> eq_rhs, in_rhs;
  std::vector<std::pair<int, double>> q_terms;

  int total_cols() const {
    return num_continuous + static_cast<int>(binaries.size());
  }
  int var_r(int k, int c) const { return kStride * k + c; }
  int var_rd(int k, int c) const { return kStride * k + 3 + c; }
  int var_rdd(int k, int c) const { return kStride * k + 6 + c; }
  int var_th(int k, int c) const { return kStride * k + 9 + c; }
  int var_thd(int k, int c) const { return kStride * k + 12 + c; }
  int var_thdd(int k, int c) const { return kStride * k + 15 + c; }
  int var_p(int k, int j, int c) const { return kStride * k + 18 + 9 * j + c; }
  int var_pd(int k, int j, int c) const { return kStride * k + 21 + 9 * j + c; }
  int var_pdd(int k, int j, int c) const {
    return kStride * k + 24 + 9 * j + c;
  }
  int var_f(int k, int j, int c) const { return kStride * k + 54 + 3 * j + c; }

  int add_binary(std::string group, int region, int step, int foot);
  void finalize();
};

struct BnBConfig {
  double gap = 1e-4;        // relative optimality gap
  double time_limit = 60.0;  // seconds
  int threads = 1;           // accepted for config compatibility; serial
  double int_tol = 1e-6;
  long max_nodes = 10000000;
  bool stop_on_incumbent = false;  // return the first integral solution found
  QPSettings qp;
};

enum class MICPStatus { Optimal, Infeasible, Timeout };

struct MICPSolution {
  MICPStatus status = MICPStatus::Timeout;
  Eigen::VectorXd x;  // stacked continuous + binary values
  std::vector<int> binary_values;
  double objective = 0.0;
  double best_bound = 0.0;
  long nodes = 0;
  long qp_solves = 0;
  double incumbent_seconds = -1.0;
  double total_seconds = 0.0;
};

// Best-first branch-and-bound on the relaxed binaries. Deterministic for a
// fixed config when no time limit is hit: most fractional branching,
// best-bound node selection, ties by index. Declares infeasibility only
// when every leaf is certified; unknown leaf relaxations degrade the result
// to timeout instead of a wrong verdict.
MICPSolution solve_micp(const MICPProblem& p, const BnBConfig& cfg = {});

// Relaxation with every binary substituted at the given 0/1 values, so the
// returned QP ranges over the continuous columns only. Constant cost from
// the pinned columns is dropped; no builder places cost on a binary column.
// The exhaustive-enumeration oracle in the tests consumes this.
QP fixed_binary_qp(const MICPProblem& p, const std::vector<int>& values);

// Trajectory problem for a fixed contact schedule: backward-Euler double
// integrators, single-rigid-body force balance, per-touchdown safe-region
// binaries, friction pyramids, stance pinning, torque and kinematic boxes,
// interpolated references with the mid-keyframe pitch rule.
MICPProblem build_gait_fixed(const PhysicalState& start,
                             const PhysicalState& goal, const Gait& gait,
                             const std::vector<TerrainPolygon>& polys,
                             const RobotParams& params,
                             const CostWeights& w = {});

// Contact schedule left to the solver: per-interval region binaries with
// at-most-one rows (zero meaning swing), stance implications, force-free
// flight; first and last intervals are pinned to stance so the boundary
// poses are standing.
MICPProblem build_gait_free(const PhysicalState& start,
                            const PhysicalState& goal,
                            const std::vector<TerrainPolygon>& polys,
                            const RobotParams& params, const CostWeights& w,
                            int intervals, double dt_m);

// Static kinematic feasibility with region binaries; the support constraint
// keeps the base xy inside the desired-footprint hull shrunk by 0.02 m with
// edge normals frozen at the desired footprint.
MICPProblem build_retarget(const PhysicalState& desired,
                           const std::vector<TerrainPolygon>& polys,
                           const RobotParams& params, const Vec3& threshold);

// Solves build_retarget and returns the adjusted pose.
// Throws RetargetInfeasible when no pose within the threshold exists (or
// the solve cannot certify one in time).
PhysicalState retarget_pose(const PhysicalState& desired,
                            const std::vector<TerrainPolygon>& polys,
                            const RobotParams& params, const Vec3& threshold,
                            const BnBConfig& cfg = {});

// Free-space membership binaries per (region, check step, foot) on a
// gait-fixed problem. Region floors are lifted by h_swing at each foot's
// mid-swing steps, which realizes the clearance bound. Free regions are
// HalfspaceRegion volumes: a zero A_eq row means no plane equality.
void add_collision_constraints(MICPProblem& p,
                               const std::vector<HalfspaceRegion>& free_regions,
                               double h_swing, int W, double dt_w);

struct AuditReport {
  bool ok = true;
  double max_dynamics_residual = 0.0;
  double max_implication_violation = 0.0;
  std::vector<std::string> violations;
};

// Physics audit of a candidate solution: integrator and force-balance
// residuals, sum-row integrality, implication soundness, flight force-free,
// kinematic boxes. Used on every optimal solve through the global audit.
AuditReport verify_solution(const MICPProblem& p, const Eigen::VectorXd& x);

// Recomputes the max attainable left side of every implication from the
// variable box and checks the stored big-M dominates it.
bool validate_big_m(const MICPProblem& p);

struct AuditStats {
  long optimal = 0;
  long violating = 0;
  std::string first_violation;
};

// Every optimal solve_micp result is audited; these expose the tally.
AuditStats micp_audit_stats();
void micp_audit_reset();

// CSV files per variable group plus a binary table; returns written paths.
std::vector<std::string> export_solution_csv(const MICPProblem& p,
                                             const MICPSolution& sol,
                                             const std::string& dir,
                                             const std::string& prefix);

// Plain-text LP-style dump for external cross-checking.
std::string dump_problem_lp(const MICPProblem& p);

}  // namespace locoplan
