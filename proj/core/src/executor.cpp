#include "locoplan/executor.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace locoplan {

namespace {

double plane_height_at(const TerrainPolygon& poly, const Vec2& q) {
  const double nz = poly.normal.z();
  if (nz <= 1e-9) return poly.top_height();
  return (poly.plane_offset() - poly.normal.head<2>().dot(q)) / nz;
}

std::string esc(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

std::string micp_status_name(MICPStatus st) {
  switch (st) {
    case MICPStatus::Optimal: return "optimal";
    case MICPStatus::Infeasible: return "infeasible";
    default: return "timeout";
  }
}

}  // namespace

std::vector<TerrainPolygon> perceive(const std::vector<TerrainPolygon>& polys,
                                     const PerturbationConfig& cfg,
                                     std::uint64_t seed) {
  if (!cfg.any()) return polys;  // exact passthrough
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const Vec3 shift(cfg.translate.x(), cfg.translate.y(), 0.0);

  std::vector<TerrainPolygon> out;
  out.reserve(polys.size());
  for (const TerrainPolygon& poly : polys) {
    // all draws happen up front so a fallback cannot shift later polygons
    const double scale = 1.0 + cfg.scale_jitter * unit(rng);
    std::vector<Vec2> jitter(poly.vertices.size(), Vec2::Zero());
    for (Vec2& j : jitter)
      j = Vec2(cfg.vertex_jitter * unit(rng), cfg.vertex_jitter * unit(rng));

    const Vec3 c = poly.centroid3d();
    std::vector<Vec3> base(poly.vertices.size());
    for (size_t i = 0; i < base.size(); ++i) {
      Vec3 v = poly.vertices[i];
      if (cfg.scale_jitter != 0.0) v = c + scale * (v - c);
      base[i] = v + shift;
    }
    if (cfg.vertex_jitter != 0.0) {
      std::vector<Vec3> jittered = base;
      for (size_t i = 0; i < jittered.size(); ++i) {
        jittered[i].x() += jitter[i].x();
        jittered[i].y() += jitter[i].y();
      }
      try {
        out.push_back(TerrainPolygon::make(poly.id, jittered, poly.mu));
        continue;
      } catch (const DegeneratePolygon&) {
        // jitter broke convexity or coplanarity: keep the undistorted shape
      }
    }
    out.push_back(TerrainPolygon::make(poly.id, base, poly.mu));
  }
  return out;
}

void TrackerTimeline::validate() const {
  for (size_t i = 1; i < segments.size(); ++i) {
    if (!(segments[i].start > segments[i - 1].start))
      throw std::logic_error("segment start times must strictly increase");
    if (segments[i].start < segments[i - 1].end() - 1e-9)
      throw std::logic_error("segments must not overlap");
  }
}

bool TrackerTimeline::gapless() const {
  if (segments.empty()) return true;
  if (std::abs(segments.front().start) > 1e-9) return false;
  for (size_t i = 1; i < segments.size(); ++i)
    if (std::abs(segments[i].start - segments[i - 1].end()) > 1e-9)
      return false;
  return true;
}

ScheduleDecision coordinate_append(TrackerTimeline& timeline,
                                   TimelineSegment segment, double pt,
                                   double now, bool stance_wait) {
  if (segment.steps() <= 0)
    throw std::invalid_argument("segment must carry at least one sample");
  ScheduleDecision dec;
  const double end = timeline.end_time();
  const double ready = now + pt;
  if (ready <= end + 1e-12) {
    dec.appended = true;
    dec.gap = 0.0;
    dec.start = end;
  } else {
    dec.appended = false;
    dec.gap = ready - end;  // pt minus the trajectory time that remained
    dec.start = ready;
    if (stance_wait && dec.gap > 1e-12) {
      TimelineSegment hold;
      hold.stance_hold = true;
      hold.start = end;
      // freeze the pose the tracker holds through the wait
      Vec3 b, r;
      std::array<Vec3, kNumFeet> f;
      if (!timeline.segments.empty()) {
        const TimelineSegment& prev = timeline.segments.back();
        const size_t last = prev.base.size() - 1;
        b = prev.base[last];
        r = prev.rpy[last];
        for (int j = 0; j < kNumFeet; ++j) f[size_t(j)] = prev.feet[size_t(j)][last];
      } else {
        b = segment.base.front();
        r = segment.rpy.front();
        for (int j = 0; j < kNumFeet; ++j)
          f[size_t(j)] = segment.feet[size_t(j)].front();
      }
      const int steps =
          std::max(1, static_cast<int>(std::llround(dec.gap / segment.dt)));
      hold.dt = dec.gap / steps;
      hold.base.assign(size_t(steps), b);
      hold.rpy.assign(size_t(steps), r);
      for (int j = 0; j < kNumFeet; ++j) {
        hold.feet[size_t(j)].assign(size_t(steps), f[size_t(j)]);
        hold.contact[size_t(j)].assign(size_t(steps), true);
      }
      timeline.segments.push_back(std::move(hold));
    }
  }
  segment.start = dec.start;
  timeline.segments.push_back(std::move(segment));
  return dec;
}

TimelineSegment segment_from_solution(const MICPProblem& p,
                                      const Eigen::VectorXd& x,
                                      const Gait& gait,
                                      const std::string& skill_id) {
  TimelineSegment seg;
  seg.dt = p.dt;
  seg.skill_id = skill_id;
  seg.base.resize(size_t(p.steps));
  seg.rpy.resize(size_t(p.steps));
  for (int j = 0; j < kNumFeet; ++j) {
    seg.feet[size_t(j)].resize(size_t(p.steps));
    seg.contact[size_t(j)].resize(size_t(p.steps));
  }
  for (int k = 0; k < p.steps; ++k) {
    for (int c = 0; c < 3; ++c) {
      seg.base[size_t(k)][c] = x[p.var_r(k, c)];
      seg.rpy[size_t(k)][c] = x[p.var_th(k, c)];
    }
    for (int j = 0; j < kNumFeet; ++j) {
      for (int c = 0; c < 3; ++c)
        seg.feet[size_t(j)][size_t(k)][c] = x[p.var_p(k, j, c)];
      seg.contact[size_t(j)][size_t(k)] = gait.in_contact(j, k);
    }
  }
  return seg;
}

PhysicalState segment_final_state(const TimelineSegment& seg) {
  if (seg.steps() == 0)
    throw std::invalid_argument("empty segment has no final state");
  const size_t last = seg.base.size() - 1;
  PhysicalState s;
  s.base_pos = seg.base[last];
  s.base_rpy = seg.rpy[last];
  for (int j = 0; j < kNumFeet; ++j) s.feet[size_t(j)] = seg.feet[size_t(j)][last];
  s.goal = s.base_pos.head<2>();
  return s;
}

void ExecutionLog::append(ExecutionRecord r) {
  if (!records.empty() && r.t < records.back().t - 1e-12)
    throw std::logic_error("execution log timestamps must be monotone");
  r.index = static_cast<int>(records.size());
  records.push_back(std::move(r));
}

void ExecutionLog::write_jsonl(std::ostream& os) const {
  os << std::setprecision(17);
  for (const ExecutionRecord& r : records) {
    os << "{\"i\":" << r.index << ",\"t\":" << r.t << ",\"state\":"
       << r.automaton_state << ",\"event\":\"" << esc(r.event)
       << "\",\"skill\":\"" << esc(r.skill_id) << "\",\"micp\":\""
       << esc(r.micp_status) << "\",\"solve_s\":" << r.solve_seconds
       << ",\"appended\":" << (r.appended ? "true" : "false")
       << ",\"gap\":" << r.wait_gap << ",\"cell\":[" << r.cell.ix << ','
       << r.cell.iy << "],\"repair_calls\":" << r.gait_free_calls
       << ",\"note\":\"" << esc(r.note) << "\"}\n";
  }
  os << "{\"reached_goal\":" << (reached_goal ? "true" : "false")
     << ",\"repairs\":" << repairs << ",\"final_cell\":[" << final_cell.ix
     << ',' << final_cell.iy << "]}\n";
}

std::string ExecutionLog::to_jsonl() const {
  std::ostringstream os;
  write_jsonl(os);
  return os.str();
}

ExecutionLog rollout(const ExecutorSetup& setup,
                     const StrategyAutomaton& strategy,
                     const std::vector<TerrainPolygon>& online_polys,
                     RepairEngine& repair, TrackerTimeline* timeline_out) {
  if (setup.coordination.sampled_lo < 0.0 ||
      setup.coordination.sampled_hi < setup.coordination.sampled_lo)
    throw std::invalid_argument("sampled planning time range must be ordered and non-negative");

  ExecutionLog log;
  TrackerTimeline timeline;
  std::vector<Skill> skills = setup.skills;
  std::map<std::string, Gait> gaits = setup.gaits;
  InputState state = setup.state;
  DisallowedTransitions banned;

  std::mt19937_64 pt_rng(setup.coordination.seed);
  std::uniform_real_distribution<double> pt_draw(setup.coordination.sampled_lo,
                                                 setup.coordination.sampled_hi);
  auto planning_time = [&](double wall) {
    switch (setup.coordination.model) {
      case PTModel::Fixed: return setup.coordination.fixed_pt;
      case PTModel::Measured: return wall;
      default: return pt_draw(pt_rng);
    }
  };

  auto evaluate = [&]() {
    GR1Spec spec = encode_specification(skills, setup.grid, setup.rules);
    apply_disallowed(spec, banned);
    set_initial_state(spec, state, setup.grid, setup.rules);
    const auto [st, sf] = terrain_request_substitution(
        spec, state.terrain, state.request, setup.grid, setup.rules);
    return partial_evaluate(spec, st, sf);
  };
  GR1Spec evaluated = evaluate();
  RealizabilityResult rr = check_realizability(evaluated);
  if (!rr.realizable)
    throw NotRealizable("rollout needs a realizable request from the start state");
  StrategyAutomaton automaton =
      strategy.states.empty() ? extract_strategy(evaluated, rr) : strategy;
  int q = automaton.initial;

  auto gait_of = [&](const std::string& gid) -> const Gait& {
    const auto it = gaits.find(gid);
    if (it != gaits.end()) return it->second;
    const Gait* g = repair.find_gait(gid);
    if (!g) throw std::out_of_range("no gait named " + gid);
    return *g;
  };
  auto near_polys = [&](CellIndex a, CellIndex b) {
    const double inflate = 0.5 * setup.grid.cell_size + 0.3;
    return corridor_filter(online_polys, setup.grid.cell_rect(a),
                           setup.grid.cell_rect(b), inflate, setup.max_regions);
  };

  // stand up on the perceived terrain
  PhysicalState phys = ground(state, setup.grid, online_polys, setup.robot);
  phys = retarget_pose(phys, near_polys(state.robot, state.robot), setup.robot,
                       setup.retarget_threshold, setup.solver);
  if (setup.grid.locate(phys.base_pos.head<2>()) != state.robot)
    throw std::invalid_argument("initial pose does not ground to the start cell");

  double clock = 0.0;  // when the current planning round started
  for (int step = 0; step < setup.max_transitions; ++step) {
    if (state.robot == state.request) {
      ExecutionRecord r;
      r.t = clock;
      r.automaton_state = q;
      r.event = "done";
      r.cell = state.robot;
      log.append(std::move(r));
      log.reached_goal = true;
      break;
    }

    // one deterministic environment step of the automaton
    const auto& st = automaton.states[size_t(q)];
    const int arena_state = rr.arena.find_state(st.val, st.output);
    if (arena_state < 0)
      throw std::logic_error("strategy state missing from the arena");
    const auto& branches = rr.arena.succ[size_t(arena_state)];
    if (branches.empty())
      throw std::logic_error("environment has no admissible move");
    const int v2 = branches.front().val;
    const auto it = automaton.next.find({q, v2});
    if (it == automaton.next.end())
      throw std::logic_error("strategy has no transition for the observed input");
    q = it->second;
    const int emit = automaton.states[size_t(q)].output;
    if (emit < 0) continue;

    const std::string skill_id = automaton.output_names[size_t(emit)];
    const Skill* skill = nullptr;
    for (const Skill& sk : skills)
      if (sk.id == skill_id) skill = &sk;
    if (!skill) throw std::logic_error("strategy emitted an unknown skill");
    if (skill->src != state.robot)
      throw std::logic_error("emitted skill does not start at the robot cell");

    InputState at_dst = state;
    at_dst.robot = skill->dst;
    if (skill->dst_yaw >= 0) at_dst.yaw_idx = skill->dst_yaw;

    bool failed = false;
    std::string status = "optimal";
    TimelineSegment segment;
    const auto wall0 = std::chrono::steady_clock::now();
    try {
      const auto corridor = near_polys(skill->src, skill->dst);
      const PhysicalState desired =
          ground(at_dst, setup.grid, online_polys, setup.robot);
      const PhysicalState goal =
          retarget_pose(desired, near_polys(skill->dst, skill->dst),
                        setup.robot, setup.retarget_threshold, setup.solver);
      const Gait& gait = gait_of(skill->gait_id);
      const MICPProblem prob = build_gait_fixed(phys, goal, gait, corridor,
                                                setup.robot, setup.weights);
      const MICPSolution sol = solve_micp(prob, setup.solver);
      status = micp_status_name(sol.status);
      if (sol.status != MICPStatus::Optimal)
        failed = true;  // the automaton only advances past optimal solutions
      else
        segment = segment_from_solution(prob, sol.x, gait, skill_id);
    } catch (const RetargetInfeasible&) {
      failed = true;
      status = "retarget_infeasible";
    }
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0)
            .count();
    const double pt = planning_time(wall);

    if (failed) {
      banned.ban(state.robot, state.yaw_idx, skill_id);
      clock += pt;
      ExecutionRecord fail;
      fail.t = clock;
      fail.automaton_state = q;
      fail.event = "failure";
      fail.skill_id = skill_id;
      fail.micp_status = status;
      fail.solve_seconds = pt;
      fail.cell = state.robot;
      log.append(std::move(fail));

      const int calls0 = repair.gait_free_calls();
      ExecutionRecord rep;
      rep.t = clock;
      rep.cell = state.robot;
      try {
        RepairEngine::RuntimeResult fixed =
            repair.runtime_repair(skills, setup.grid, setup.rules, state,
                                  banned, online_polys);
        evaluated = std::move(fixed.evaluated);
        rr = check_realizability(evaluated);
        automaton = std::move(fixed.automaton);
        q = automaton.initial;
        rep.event = "repair";
        rep.gait_free_calls = repair.gait_free_calls() - calls0;
        std::string ids;
        for (const std::string& id : fixed.added_skills)
          ids += (ids.empty() ? "" : ",") + id;
        rep.note = ids;
        rep.automaton_state = q;
        log.append(std::move(rep));
        ++log.repairs;
        continue;
      } catch (const Unrepairable& e) {
        rep.event = "unrepairable";
        rep.note = e.what();
        rep.gait_free_calls = repair.gait_free_calls() - calls0;
        log.append(std::move(rep));
        log.reached_goal = false;
        log.final_cell = state.robot;
        if (timeline_out) *timeline_out = std::move(timeline);
        return log;
      }
    }

    const ScheduleDecision dec = coordinate_append(
        timeline, std::move(segment), pt, clock, setup.coordination.stance_wait);
    phys = segment_final_state(timeline.segments.back());
    state.robot = skill->dst;
    if (skill->dst_yaw >= 0) state.yaw_idx = skill->dst_yaw;

    ExecutionRecord r;
    r.t = clock + pt;
    r.automaton_state = q;
    r.event = "transition";
    r.skill_id = skill_id;
    r.micp_status = status;
    r.solve_seconds = pt;
    r.appended = dec.appended;
    r.wait_gap = dec.gap;
    r.cell = state.robot;
    log.append(std::move(r));
    clock = dec.start;  // planning the next segment starts when this one plays
  }

  log.final_cell = state.robot;
  if (timeline_out) *timeline_out = std::move(timeline);
  return log;
}

Vec3 BaselinePlan::base_at(double t) const {
  if (base.empty()) return Vec3::Zero();
  const int last = static_cast<int>(base.size()) - 1;
  const int k = std::clamp(static_cast<int>(std::llround(t / dt)), 0, last);
  return base[size_t(k)];
}

int BaselinePlan::kinematic_violations(const RobotParams& params,
                                       double tol) const {
  const Eigen::Matrix3d Rt = rotation_z(yaw).transpose();
  int count = 0;
  for (const BaselineStep& s : steps) {
    const Vec3 rel = Rt * (s.placed - base_at(s.touchdown));
    const Vec3 err = rel - params.foot_offset(s.foot);
    if ((err.array().abs() > params.p_dev_max.array() + tol).any()) ++count;
  }
  return count;
}

BaselinePlan heuristic_baseline_plan(const PhysicalState& start,
                                     const Vec2& goal_xy,
                                     const std::vector<TerrainPolygon>& polys,
                                     const RobotParams& params, double speed) {
  if (speed <= 0.0) throw std::invalid_argument("speed must be positive");
  if (polys.empty()) throw std::invalid_argument("no polygons to step on");

  BaselinePlan plan;
  plan.yaw = start.base_rpy.z();
  const Vec2 p0 = start.base_pos.head<2>();
  const double dist = (goal_xy - p0).norm();
  const double seconds = std::max(1.0, std::ceil(dist / speed));
  plan.gait = make_trot("baseline_trot", seconds);
  plan.dt = plan.gait.dt;
  const int n = plan.gait.time_steps();
  plan.base.reserve(size_t(n));
  for (int k = 0; k < n; ++k) {
    const double t = k * plan.dt;
    const double a = dist <= 1e-12 ? 1.0 : std::min(1.0, t * speed / dist);
    const Vec2 b = p0 + a * (goal_xy - p0);
    plan.base.emplace_back(b.x(), b.y(), start.base_pos.z());
  }

  const Eigen::Matrix3d R = rotation_z(plan.yaw);
  auto nominal_at = [&](int foot, double t) -> Vec3 {
    return plan.base_at(t) + R * params.foot_offset(foot);
  };
  auto project = [&](const Vec3& nominal) -> Vec3 {
    Vec3 best = nominal;
    double best_d = std::numeric_limits<double>::infinity();
    for (const TerrainPolygon& poly : polys) {
      const Vec2 q =
          closest_point_in_polygon_2d(project_xy(poly), nominal.head<2>());
      const double d = (q - Vec2(nominal.head<2>())).norm();
      if (d < best_d) {
        best_d = d;
        best = Vec3(q.x(), q.y(), plane_height_at(poly, q));
      }
    }
    return best;
  };

  for (int j = 0; j < kNumFeet; ++j) {
    BaselineStep s0;
    s0.foot = j;
    s0.touchdown = 0.0;
    s0.nominal = nominal_at(j, 0.0);
    s0.placed = project(s0.nominal);
    plan.steps.push_back(s0);
    for (const auto& [b, e] : plan.gait.swing_windows(j)) {
      (void)b;
      if (e >= n) continue;
      BaselineStep s;
      s.foot = j;
      s.touchdown = e * plan.dt;
      s.nominal = nominal_at(j, s.touchdown);
      s.placed = project(s.nominal);
      plan.steps.push_back(s);
    }
  }
  std::stable_sort(plan.steps.begin(), plan.steps.end(),
                   [](const BaselineStep& a, const BaselineStep& b) {
                     return std::tuple(a.touchdown, a.foot) <
                            std::tuple(b.touchdown, b.foot);
                   });
  return plan;
}

bool on_some_polygon(const Vec3& p, const std::vector<TerrainPolygon>& polys,
                     double tol) {
  for (const TerrainPolygon& poly : polys)
    if (polygon_to_halfspaces(poly).contains(p, tol)) return true;
  return false;
}

}  // namespace locoplan
