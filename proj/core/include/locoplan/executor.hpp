#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "locoplan/micp.hpp"
#include "locoplan/repair.hpp"

namespace locoplan {

// Seeded distortion applied to the true polygons before execution, modeling
// online perception error. Magnitudes are expected to stay under half a
// grid cell; scenario loading enforces that bound.
struct PerturbationConfig {
  Vec2 translate = Vec2::Zero();  // applied to every polygon exactly
  double scale_jitter = 0.0;      // per-polygon factor in [1-s, 1+s]
  double vertex_jitter = 0.0;     // per-vertex xy offset bound, m
  bool any() const {
    return translate.squaredNorm() > 0.0 || scale_jitter != 0.0 ||
           vertex_jitter != 0.0;
  }
};

// Deterministic for a fixed seed. Zero perturbation returns the input
// unchanged. A jitter draw that would break convexity or coplanarity falls
// back to the translated/scaled polygon; the draw is consumed either way,
// so downstream polygons do not shift.
std::vector<TerrainPolygon> perceive(const std::vector<TerrainPolygon>& polys,
                                     const PerturbationConfig& cfg,
                                     std::uint64_t seed);

enum class PTModel { Fixed, Measured, Sampled };

struct CoordinationConfig {
  PTModel model = PTModel::Fixed;
  double fixed_pt = 0.4;     // planning time, Fixed model, s
  double sampled_lo = 0.1;   // Sampled model draws uniformly from [lo, hi]
  double sampled_hi = 0.8;
  std::uint64_t seed = 0;
  bool stance_wait = true;  // materialize holds when the plan arrives late
};

// One tracked reference piece: either a solved motion (per-step base pose,
// foot positions and contact flags) or an all-stance hold at a frozen pose.
struct TimelineSegment {
  double start = 0.0;
  double dt = 0.05;
  std::string skill_id;  // empty for holds
  bool stance_hold = false;
  std::vector<Vec3> base;
  std::vector<Vec3> rpy;
  std::array<std::vector<Vec3>, kNumFeet> feet;
  std::array<std::vector<bool>, kNumFeet> contact;

  int steps() const { return static_cast<int>(base.size()); }
  double duration() const { return steps() * dt; }
  double end() const { return start + duration(); }
};

struct TrackerTimeline {
  std::vector<TimelineSegment> segments;

  double end_time() const {
    return segments.empty() ? 0.0 : segments.back().end();
  }
  // strictly increasing starts, no overlap
  void validate() const;
  // every consecutive pair abuts (no uncovered interval), tolerance 1e-9
  bool gapless() const;
};

struct ScheduleDecision {
  bool appended = false;  // seamless append (plan ready before playback ran out)
  double gap = 0.0;       // stance-hold length inserted before the segment
  double start = 0.0;     // when the appended segment begins playing
};

// Schedules a finished segment against the playback horizon. `now` is when
// planning started, so the plan is ready at now + pt. Ready at or before
// the timeline runs out: seamless append. Ready later: an all-stance hold
// at the last pose covers [end, now + pt) and the gap pt - remaining is
// reported. With stance_wait disabled the hold is not materialized and the
// timeline keeps the uncovered interval.
ScheduleDecision coordinate_append(TrackerTimeline& timeline,
                                   TimelineSegment segment, double pt,
                                   double now, bool stance_wait = true);

// Per-step trajectory lifted out of a solved problem; contacts come from
// the gait that built it.
TimelineSegment segment_from_solution(const MICPProblem& p,
                                      const Eigen::VectorXd& x,
                                      const Gait& gait,
                                      const std::string& skill_id);

PhysicalState segment_final_state(const TimelineSegment& seg);

struct ExecutionRecord {
  int index = 0;
  double t = 0.0;  // planner clock when the event was decided
  int automaton_state = -1;
  std::string event;  // transition / failure / repair / hold / done / unrepairable
  std::string skill_id;
  std::string micp_status;  // optimal / infeasible / timeout / retarget_infeasible
  double solve_seconds = 0.0;  // planning time used for coordination
  bool appended = false;
  double wait_gap = 0.0;
  CellIndex cell;  // robot cell after the event
  int gait_free_calls = 0;  // repair events: fresh validations consumed
  std::string note;
};

struct ExecutionLog {
  std::vector<ExecutionRecord> records;
  bool reached_goal = false;
  int repairs = 0;
  CellIndex final_cell;

  // append-only, timestamps monotone (throws std::logic_error otherwise)
  void append(ExecutionRecord r);
  void write_jsonl(std::ostream& os) const;
  std::string to_jsonl() const;
};

struct ExecutorSetup {
  GridConfig grid;
  ClassificationRules rules;
  RobotParams robot;
  std::vector<Skill> skills;
  std::map<std::string, Gait> gaits;  // gait id -> schedule
  InputState state;                   // initial cell, request, terrain reading
  CoordinationConfig coordination;
  Vec3 retarget_threshold = Vec3(0.2, 0.2, 0.1);
  BnBConfig solver;       // per-transition budget; optimality required
  CostWeights weights;
  int max_transitions = 64;
  int max_regions = 8;  // polygon cap per transition solve
};

// Walks the strategy against the deterministic frozen-terrain environment.
// Per emitted skill: ground the destination on the perceived polygons,
// retarget the goal pose, solve the gait-fixed trajectory, and advance only
// on an optimal solution, scheduling the segment through coordinate_append.
// A failed or untargetable transition is banned after one attempt and
// resynthesis runs through the repair engine; Unrepairable ends the run and
// is recorded in the log. The next solve starts from the final condition of
// the previous segment.
ExecutionLog rollout(const ExecutorSetup& setup,
                     const StrategyAutomaton& strategy,
                     const std::vector<TerrainPolygon>& online_polys,
                     RepairEngine& repair,
                     TrackerTimeline* timeline_out = nullptr);

// Strawman footstep planner: straight-line base motion at the given speed,
// cyclic trot footholds snapped to the nearest polygon point, no
// feasibility reasoning. Violations are what the benchmark measures.
struct BaselineStep {
  int foot = -1;
  double touchdown = 0.0;
  Vec3 nominal = Vec3::Zero();  // where the cyclic gait wants the foot
  Vec3 placed = Vec3::Zero();   // nearest point on any polygon
  double xy_deviation() const { return (placed - nominal).head<2>().norm(); }
};

struct BaselinePlan {
  Gait gait{"baseline_empty", 0.05, {}};
  double dt = 0.05;
  std::vector<Vec3> base;  // per step, linear interpolation
  double yaw = 0.0;
  std::vector<BaselineStep> steps;

  Vec3 base_at(double t) const;
  // footholds outside the per-axis deviation box around the nominal offset
  int kinematic_violations(const RobotParams& params, double tol = 1e-9) const;
};

BaselinePlan heuristic_baseline_plan(const PhysicalState& start,
                                     const Vec2& goal_xy,
                                     const std::vector<TerrainPolygon>& polys,
                                     const RobotParams& params, double speed);

// True when the point sits on some polygon: plane equality and edge rows
// within tol. Used to audit realized stance footholds against the
// perceived polygons.
bool on_some_polygon(const Vec3& p, const std::vector<TerrainPolygon>& polys,
                     double tol = 1e-6);

}  // namespace locoplan
