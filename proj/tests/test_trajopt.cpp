#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "locoplan/micp.hpp"
#include "support/testutil.hpp"

using namespace locoplan;
using testutil::rect_poly;
using Eigen::Vector3d;

namespace {

PhysicalState standing(const RobotParams& rp, double x, double y,
                       double yaw = 0.0, double ground_z = 0.0) {
  PhysicalState s;
  s.base_pos = Vec3(x, y, ground_z + rp.nominal_height());
  s.base_rpy = Vec3(0.0, 0.0, yaw);
  const Eigen::Matrix3d R = rotation_z(yaw);
  for (int j = 0; j < kNumFeet; ++j)
    s.feet[static_cast<size_t>(j)] = s.base_pos + R * rp.foot_offset(j);
  return s;
}

Gait stand_gait(double duration) {
  Gait g;
  g.id = "stand";
  g.dt = 0.05;
  for (int j = 0; j < kNumFeet; ++j)
    g.phases[static_cast<size_t>(j)] = {{true, duration}};
  return g;
}

Vector3d foot_at(const MICPProblem& p, const Eigen::VectorXd& x, int k,
                 int j) {
  return {x[p.var_p(k, j, 0)], x[p.var_p(k, j, 1)], x[p.var_p(k, j, 2)]};
}

Vector3d force_at(const MICPProblem& p, const Eigen::VectorXd& x, int k,
                  int j) {
  return {x[p.var_f(k, j, 0)], x[p.var_f(k, j, 1)], x[p.var_f(k, j, 2)]};
}

// interval step ranges used by the free-gait builder
std::pair<int, int> interval_range(int m, int M, int N) {
  return {m * N / M, (m + 1) * N / M};
}

int binary_sum(const MICPProblem& p, const MICPSolution& sol,
               const std::string& group, int step, int foot) {
  int s = 0;
  for (size_t i = 0; i < p.binaries.size(); ++i) {
    const BinaryVar& b = p.binaries[i];
    if (b.group == group && b.step == step && b.foot == foot)
      s += sol.binary_values[i];
  }
  return s;
}

}  // namespace

TEST_CASE("standing in place is static equilibrium at every step") {
  const RobotParams rp = RobotParams::go2();
  const PhysicalState pose = standing(rp, 0.0, 0.0);
  const std::vector<TerrainPolygon> polys = {
      rect_poly("floor", -1.0, -1.0, 1.0, 1.0, 0.0)};
  MICPProblem p = build_gait_fixed(pose, pose, stand_gait(1.0), polys, rp);
  CHECK(p.steps == 20);
  CHECK(p.binaries.empty());  // no touchdown ever happens

  const MICPSolution sol = solve_micp(p);
  REQUIRE(sol.status == MICPStatus::Optimal);
  CHECK(sol.qp_solves == 1);

  const double mg = rp.mass * 9.81;
  for (int k = 0; k < p.steps; ++k) {
    Vector3d total = Vector3d::Zero();
    for (int j = 0; j < kNumFeet; ++j) total += force_at(p, sol.x, k, j);
    CHECK(std::abs(total.x()) <= 1e-6);
    CHECK(std::abs(total.y()) <= 1e-6);
    CHECK(std::abs(total.z() - mg) <= 1e-6);
    // symmetric stance: the strictly convex force cost splits the load
    for (int j = 0; j < kNumFeet; ++j)
      CHECK(std::abs(force_at(p, sol.x, k, j).z() - mg / 4.0) <= 1e-4);
  }
  const AuditReport rep = verify_solution(p, sol.x);
  CAPTURE(rep.violations.empty() ? "" : rep.violations.front());
  CHECK(rep.ok);
}

TEST_CASE("trot over a single region needs no branching") {
  const RobotParams rp = RobotParams::go2();
  const PhysicalState pose = standing(rp, 0.0, 0.0);
  const std::vector<TerrainPolygon> polys = {
      rect_poly("floor", -1.0, -1.0, 1.0, 1.0, 0.0)};
  const Gait trot = make_trot("trot", 1.0);
  MICPProblem p = build_gait_fixed(pose, pose, trot, polys, rp);
  CHECK(p.steps == 20);
  // one touchdown per foot, one candidate region each
  CHECK(p.binaries.size() == 4);

  const MICPSolution sol = solve_micp(p);
  REQUIRE(sol.status == MICPStatus::Optimal);
  CHECK(sol.nodes == 1);
  CHECK(sol.qp_solves == 1);
  for (int v : sol.binary_values) CHECK(v == 1);
}

TEST_CASE("phase durations off the time grid are rejected") {
  const RobotParams rp = RobotParams::go2();
  const PhysicalState pose = standing(rp, 0.0, 0.0);
  const std::vector<TerrainPolygon> polys = {
      rect_poly("floor", -1.0, -1.0, 1.0, 1.0, 0.0)};
  Gait bad = stand_gait(1.0);
  bad.phases[0] = {{true, 0.52}, {false, 0.48}};  // not multiples of 0.05
  CHECK_THROWS_AS(build_gait_fixed(pose, pose, bad, polys, rp),
                  GaitGridMismatch);
}

TEST_CASE("trot footholds land inside exactly one candidate region") {
  const RobotParams rp = RobotParams::go2();
  const PhysicalState start = standing(rp, 0.0, 0.0);
  const PhysicalState goal = standing(rp, 0.3, 0.0);
  const std::vector<TerrainPolygon> polys = {
      rect_poly("left", -1.5, -1.0, 0.325, 1.0, 0.0),
      rect_poly("right", 0.375, -1.0, 1.5, 1.0, 0.0)};
  const Gait trot = make_trot("trot", 1.0);
  MICPProblem p = build_gait_fixed(start, goal, trot, polys, rp);
  CHECK(p.binaries.size() == 8);  // 4 touchdowns x 2 regions

  BnBConfig cfg;
  cfg.gap = 1e-6;
  const MICPSolution sol = solve_micp(p, cfg);
  REQUIRE(sol.status == MICPStatus::Optimal);

  std::vector<HalfspaceRegion> regions;
  for (const TerrainPolygon& poly : polys)
    regions.push_back(polygon_to_halfspaces(poly));

  for (size_t i = 0; i < p.binaries.size(); ++i) {
    const BinaryVar& b = p.binaries[i];
    const Vector3d foot = foot_at(p, sol.x, b.step, b.foot);
    int inside = 0;
    for (const HalfspaceRegion& hs : regions)
      if (hs.contains(foot, 1e-6)) ++inside;
    CHECK(inside == 1);
    // the engaged binary names the region that actually contains the foot
    if (sol.binary_values[i] == 1)
      CHECK(regions[static_cast<size_t>(b.region)].contains(foot, 1e-6));
  }

  // same instance, same path: the search is deterministic
  const MICPSolution again = solve_micp(p, cfg);
  CHECK(again.nodes == sol.nodes);
  CHECK(again.qp_solves == sol.qp_solves);
  CHECK(again.objective == sol.objective);
  CHECK((again.x - sol.x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("climbing references pitch the base nose-up at mid horizon") {
  const RobotParams rp = RobotParams::go2();
  const PhysicalState start = standing(rp, 0.0, 0.0);
  const PhysicalState goal = standing(rp, 0.45, 0.0, 0.0, 0.2);
  const std::vector<TerrainPolygon> polys = {
      rect_poly("low", -1.0, -1.0, 0.25, 1.0, 0.0),
      rect_poly("high", 0.2, -1.0, 1.2, 1.0, 0.2)};
  const Gait trot = make_trot("trot", 2.0);
  MICPProblem p = build_gait_fixed(start, goal, trot, polys, rp);

  BnBConfig cfg;
  cfg.gap = 1e-4;
  const MICPSolution sol = solve_micp(p, cfg);
  REQUIRE(sol.status == MICPStatus::Optimal);

  const int kmid = (p.steps - 1) / 2;
  CHECK(sol.x[p.var_th(kmid, 1)] < -0.2);
  // boundary attitudes stay pinned flat
  CHECK(std::abs(sol.x[p.var_th(0, 1)]) <= 1e-7);
  CHECK(std::abs(sol.x[p.var_th(p.steps - 1, 1)]) <= 1e-7);
}

TEST_CASE("free gait: binary layout and all-stance optimum on flat ground") {
  const RobotParams rp = RobotParams::go2();
  const PhysicalState pose = standing(rp, 0.0, 0.0);

  const std::vector<TerrainPolygon> two = {
      rect_poly("a", -2.0, -1.0, 0.0, 1.0, 0.0),
      rect_poly("b", 0.0, -1.0, 2.0, 1.0, 0.0)};
  MICPProblem layout =
      build_gait_free(pose, standing(rp, 0.5, 0.0), two, rp, {}, 8, 0.1875);
  CHECK(layout.steps == 30);
  CHECK(layout.binaries.size() == 64);  // 4 feet x 8 intervals x 2 regions

  CHECK_THROWS_AS(
      build_gait_free(pose, pose, two, rp, {}, 8, 0.17),  // 27.2 steps
      GaitGridMismatch);
  CHECK_THROWS_AS(build_gait_free(pose, pose, two, rp, {}, 1, 0.25),
                  std::invalid_argument);

  const std::vector<TerrainPolygon> one = {
      rect_poly("floor", -1.0, -1.0, 1.0, 1.0, 0.0)};
  MICPProblem p = build_gait_free(pose, pose, one, rp, {}, 8, 0.125);
  CHECK(p.steps == 20);

  const MICPSolution sol = solve_micp(p);
  REQUIRE(sol.status == MICPStatus::Optimal);
  CHECK(sol.nodes <= 3);
  // standing still never pays for lifting a leg: every interval keeps
  // every foot engaged with some region
  for (int m = 0; m < 8; ++m)
    for (int j = 0; j < kNumFeet; ++j)
      CHECK(binary_sum(p, sol, "stance", m, j) == 1);
  const double mg = rp.mass * 9.81;
  for (int k = 0; k < p.steps; ++k) {
    Vector3d total = Vector3d::Zero();
    for (int j = 0; j < kNumFeet; ++j) total += force_at(p, sol.x, k, j);
    CHECK(std::abs(total.z() - mg) <= 1e-6);
  }
}

TEST_CASE("gap crossing: trot is certified impossible, free gait leaps") {
  const RobotParams rp = RobotParams::go2();
  // the gap is wider than any mixed-support lunge can bridge: no foot can
  // touch either stone while the base crosses (0.61, 0.89), and that span
  // exceeds the largest per-step base advance, so some interval must be a
  // whole-body flight in every feasible plan
  const std::vector<TerrainPolygon> polys = {
      rect_poly("near", -0.6, -0.5, 0.3, 0.5, 0.0, 0.9),
      rect_poly("far", 1.2, -0.5, 2.8, 0.5, 0.0, 0.9)};
  const PhysicalState start = standing(rp, 0.0, 0.0);
  const PhysicalState goal = standing(rp, 1.45, 0.0);

  SUBCASE("fixed trot has no trajectory") {
    MICPProblem p = build_gait_fixed(start, goal, make_trot("t2", 2.0), polys, rp);
    BnBConfig cfg;
    cfg.gap = 1e-2;
    cfg.time_limit = 60.0;
    const MICPSolution sol = solve_micp(p, cfg);
    CHECK(sol.status == MICPStatus::Infeasible);
  }

  SUBCASE("free gait inserts a whole-body flight phase") {
    const int M = 5;
    MICPProblem p = build_gait_free(start, goal, polys, rp, {}, M, 0.3);
    BnBConfig cfg;
    cfg.gap = 0.05;
    cfg.time_limit = 15.0;
    const MICPSolution sol = solve_micp(p, cfg);
    CAPTURE(sol.nodes);
    CAPTURE(sol.total_seconds);
    REQUIRE(sol.status != MICPStatus::Infeasible);
    REQUIRE(sol.x.size() > 0);  // an incumbent was found in budget

    int flight_intervals = 0;
    for (int m = 0; m < M; ++m) {
      int engaged = 0;
      for (int j = 0; j < kNumFeet; ++j)
        engaged += binary_sum(p, sol, "stance", m, j);
      if (engaged > 0) continue;
      ++flight_intervals;
      const auto [s, e] = interval_range(m, M, p.steps);
      for (int k = s; k < e; ++k)
        for (int j = 0; j < kNumFeet; ++j)
          CHECK(force_at(p, sol.x, k, j).cwiseAbs().maxCoeff() <= 1e-8);
    }
    CHECK(flight_intervals >= 1);

    const AuditReport rep = verify_solution(p, sol.x);
    CAPTURE(rep.violations.empty() ? "" : rep.violations.front());
    CHECK(rep.ok);
  }
}

TEST_CASE("retargeting returns a feasible desired pose unchanged") {
  const RobotParams rp = RobotParams::go2();
  const std::vector<TerrainPolygon> polys = {
      rect_poly("floor", -1.0, -1.0, 1.0, 1.0, 0.0)};
  const PhysicalState desired = standing(rp, 0.05, -0.03);
  const PhysicalState out =
      retarget_pose(desired, polys, rp, Vec3(0.1, 0.1, 0.05));
  CHECK((out.base_pos - desired.base_pos).norm() <= 1e-6);
  for (int j = 0; j < kNumFeet; ++j)
    CHECK((out.feet[static_cast<size_t>(j)] - desired.feet[static_cast<size_t>(j)])
              .norm() <= 1e-6);
}

TEST_CASE("retargeting shifts footholds off a crack like grid search") {
  const RobotParams rp = RobotParams::go2();
  const std::vector<TerrainPolygon> stones = {
      rect_poly("s1", -0.6, -0.5, 0.02, 0.5, 0.0),
      rect_poly("s2", 0.28, -0.5, 0.9, 0.5, 0.0)};
  const PhysicalState desired = standing(rp, 0.0, 0.0);
  const Vec3 threshold(0.1, 0.1, 0.05);
  const double off = rp.p_ref_fl.x();   // front feet x offset, rears mirror
  const double dev = rp.p_dev_max.x();

  // independent oracle: 1 cm grid over the base shift; the foot window
  // follows the shifted base but the cost targets the fixed desired feet,
  // with support margin rows anchored like the builder (front edge at the
  // front-left foot, rear edge at the rear-right)
  struct Stone {
    double lo, hi;
  };
  const std::vector<Stone> iv = {{-0.6 + 0.02, 0.02 - 0.02},
                                 {0.28 + 0.02, 0.9 - 0.02}};
  double best_cost = 1e18, best_bx = 0.0;
  for (int g = -10; g <= 10; ++g) {
    const double bx = 0.01 * g;
    double cost = bx * bx;
    bool ok = true;
    for (int j = 0; j < kNumFeet && ok; ++j) {
      const double target = rp.foot_offset(j).x();
      double foot_best = 1e18;
      for (const Stone& s : iv) {
        double lo = std::max(s.lo, bx + target - dev);
        double hi = std::min(s.hi, bx + target + dev);
        if (j == 0) lo = std::max(lo, bx + 0.02);   // front-left support row
        if (j == 3) hi = std::min(hi, bx - 0.02);   // rear-right support row
        if (lo > hi) continue;
        const double foot = std::clamp(target, lo, hi);
        foot_best = std::min(foot_best, (foot - target) * (foot - target));
      }
      if (foot_best > 1e17)
        ok = false;
      else
        cost += foot_best;
    }
    if (ok && cost < best_cost) {
      best_cost = cost;
      best_bx = bx;
    }
  }
  REQUIRE(best_cost < 1e17);

  const PhysicalState out = retarget_pose(desired, stones, rp, threshold);
  CHECK(std::abs(out.base_pos.x() - best_bx) <= 0.015);
  CHECK(std::abs(out.base_pos.y()) <= 1e-5);
  // front feet step onto the far stone, rear feet keep their nominal spot
  for (int j : {0, 1}) {
    CHECK(out.feet[static_cast<size_t>(j)].x() >= 0.28 + 0.02 - 1e-6);
    CHECK(out.feet[static_cast<size_t>(j)].x() <= 0.35);
  }
  for (int j : {2, 3}) {
    CHECK(out.feet[static_cast<size_t>(j)].x() <= 0.02 - 0.02 + 1e-6);
    CHECK(std::abs(out.feet[static_cast<size_t>(j)].x() -
                   (out.base_pos.x() - off)) <= 1e-4);
  }
}

TEST_CASE("retargeting reports unreachable terrain") {
  const RobotParams rp = RobotParams::go2();
  const std::vector<TerrainPolygon> stones = {
      rect_poly("island", 1.0, -0.5, 1.5, 0.5, 0.0)};
  CHECK_THROWS_AS(
      retarget_pose(standing(rp, 0.0, 0.0), stones, rp, Vec3(0.1, 0.1, 0.05)),
      RetargetInfeasible);
}

TEST_CASE("swing clearance constraints lift mid-swing feet") {
  const RobotParams rp = RobotParams::go2();
  const PhysicalState start = standing(rp, 0.0, 0.0);
  const PhysicalState goal = standing(rp, 0.3, 0.0);
  const std::vector<TerrainPolygon> polys = {
      rect_poly("floor", -2.0, -2.0, 2.0, 2.0, 0.0)};
  const Gait trot = make_trot("trot", 1.0);

  auto make_region = [](double xlo, double xhi) {
    HalfspaceRegion hs;
    hs.A_ineq.resize(5, 3);
    hs.b_ineq.resize(5);
    hs.A_ineq << 1, 0, 0, -1, 0, 0, 0, 1, 0, 0, -1, 0, 0, 0, -1;
    hs.b_ineq << xhi, -xlo, 10.0, 10.0, 0.0;  // floor row: z >= 0
    hs.A_eq.setZero();
    return hs;
  };
  const std::vector<HalfspaceRegion> regions = {make_region(-10.0, 0.15),
                                                make_region(0.15, 10.0)};

  MICPProblem base = build_gait_fixed(start, goal, trot, polys, rp);
  const int mids[kNumFeet] = {7, 12, 12, 7};  // swing midpoints per foot

  MICPProblem lifted = build_gait_fixed(start, goal, trot, polys, rp);
  add_collision_constraints(lifted, regions, 0.05, 10, 0.1);
  CHECK(lifted.binaries.size() == 4 + 80);  // 10 checks x 4 feet x 2 regions

  BnBConfig cfg;
  cfg.gap = 1e-4;
  cfg.time_limit = 120.0;
  const MICPSolution flat = solve_micp(base, cfg);
  REQUIRE(flat.status == MICPStatus::Optimal);
  const MICPSolution sol = solve_micp(lifted, cfg);
  REQUIRE(sol.status == MICPStatus::Optimal);

  for (int j = 0; j < kNumFeet; ++j) {
    const double z_flat = flat.x[base.var_p(mids[j], j, 2)];
    const double z_lift = sol.x[lifted.var_p(mids[j], j, 2)];
    CHECK(z_flat < 0.049);  // nothing asks the flat plan to clear anything
    CHECK(z_lift >= 0.05 - 1e-6);
  }
  const AuditReport rep = verify_solution(lifted, sol.x);
  CAPTURE(rep.violations.empty() ? "" : rep.violations.front());
  CHECK(rep.ok);
}

TEST_CASE("uniformly scaled costs keep the same minimizer") {
  const RobotParams rp = RobotParams::go2();
  const PhysicalState start = standing(rp, 0.0, 0.0);
  const PhysicalState goal = standing(rp, 0.3, 0.0);
  const std::vector<TerrainPolygon> polys = {
      rect_poly("left", -1.5, -1.0, 0.325, 1.0, 0.0),
      rect_poly("right", 0.375, -1.0, 1.5, 1.0, 0.0)};
  const Gait trot = make_trot("trot", 1.0);

  CostWeights w2;
  const double s = 7.3;
  w2.q_base *= s;
  w2.q_att *= s;
  w2.q_feet *= s;
  w2.r_base_acc *= s;
  w2.r_att_acc *= s;
  w2.r_feet_acc *= s;
  w2.r_force *= s;

  MICPProblem p1 = build_gait_fixed(start, goal, trot, polys, rp);
  MICPProblem p2 = build_gait_fixed(start, goal, trot, polys, rp, w2);
  BnBConfig cfg;
  cfg.gap = 1e-6;
  const MICPSolution a = solve_micp(p1, cfg);
  const MICPSolution b = solve_micp(p2, cfg);
  REQUIRE(a.status == MICPStatus::Optimal);
  REQUIRE(b.status == MICPStatus::Optimal);
  CHECK(a.binary_values == b.binary_values);
  CHECK((a.x - b.x).cwiseAbs().maxCoeff() <= 1e-5);
}

TEST_CASE("solution export writes one table per variable group") {
  const RobotParams rp = RobotParams::go2();
  const PhysicalState pose = standing(rp, 0.0, 0.0);
  const std::vector<TerrainPolygon> polys = {
      rect_poly("floor", -1.0, -1.0, 1.0, 1.0, 0.0)};
  MICPProblem p =
      build_gait_fixed(pose, pose, make_trot("trot", 1.0), polys, rp);
  const MICPSolution sol = solve_micp(p);
  REQUIRE(sol.status == MICPStatus::Optimal);

  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "locoplan_export_test";
  fs::remove_all(dir);
  const std::vector<std::string> paths =
      export_solution_csv(p, sol, dir.string(), "plan");
  CHECK(paths.size() == 5);
  bool saw_binaries = false;
  for (const std::string& path : paths) {
    CAPTURE(path);
    REQUIRE(fs::exists(path));
    std::ifstream f(path);
    std::string header;
    std::getline(f, header);
    CHECK(!header.empty());
    std::string second;
    CHECK(static_cast<bool>(std::getline(f, second)));
    if (path.find("binaries") != std::string::npos) saw_binaries = true;
  }
  CHECK(saw_binaries);
  fs::remove_all(dir);

  const std::string lp = dump_problem_lp(p);
  CHECK(lp.find("minimize") != std::string::npos);
  CHECK(lp.find("subject to") != std::string::npos);
  CHECK(lp.find("binaries") != std::string::npos);
}

TEST_CASE("audit tally: every optimal trajectory solve passed verification") {
  const AuditStats st = micp_audit_stats();
  CHECK(st.optimal > 0);
  CAPTURE(st.first_violation);
  CHECK(st.violating == 0);
}
