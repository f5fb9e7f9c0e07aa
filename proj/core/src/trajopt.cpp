#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "locoplan/micp.hpp"

namespace locoplan {
namespace {

using Eigen::VectorXd;

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPi = 3.14159265358979323846;
constexpr double kFootholdInset = 0.02;
constexpr double kSupportMargin = 0.02;
const Vec3 kGravity(0.0, 0.0, -9.81);

void add_eq(MICPProblem& p, const std::vector<std::pair<int, double>>& terms,
            double rhs) {
  const int row = static_cast<int>(p.eq_rhs.size());
  for (const auto& [c, v] : terms) p.a_trips.emplace_back(row, c, v);
  p.eq_rhs.push_back(rhs);
}

void add_in(MICPProblem& p, const std::vector<std::pair<int, double>>& terms,
            double rhs) {
  const int row = static_cast<int>(p.in_rhs.size());
  for (const auto& [c, v] : terms) p.g_trips.emplace_back(row, c, v);
  p.in_rhs.push_back(rhs);
}

void set_box(MICPProblem& p, int col, double lo, double hi) {
  add_in(p, {{col, 1.0}}, hi);
  add_in(p, {{col, -1.0}}, -lo);
  p.lower[col] = lo;
  p.upper[col] = hi;
}

void set_pin(MICPProblem& p, int col, double v) {
  add_eq(p, {{col, 1.0}}, v);
  p.lower[col] = v;
  p.upper[col] = v;
}

void add_track(MICPProblem& p, int col, double w, double ref) {
  if (w <= 0.0) return;
  p.p_trips.emplace_back(col, col, 2.0 * w);
  if (ref != 0.0) p.q_terms.emplace_back(col, -2.0 * w * ref);
}

MICPProblem make_base(ProblemKind kind, int steps, double dt,
                      const RobotParams& params) {
  MICPProblem p;
  p.kind = kind;
  p.steps = steps;
  p.dt = dt;
  p.robot = params;
  p.num_continuous = MICPProblem::kStride * steps;
  p.lower = VectorXd::Constant(p.num_continuous, -kInf);
  p.upper = VectorXd::Constant(p.num_continuous, kInf);
  const char ax[4] = "xyz";
  auto push3 = [&](const char* group, const std::string& name, int k) {
    for (int c = 0; c < 3; ++c)
      p.columns.push_back({group, name + "_" + std::string(1, ax[c]), k});
  };
  for (int k = 0; k < steps; ++k) {
    push3("base", "r", k);
    push3("base", "rd", k);
    push3("base", "rdd", k);
    push3("attitude", "th", k);
    push3("attitude", "thd", k);
    push3("attitude", "thdd", k);
    for (int j = 0; j < kNumFeet; ++j) {
      const std::string fj = std::to_string(j);
      push3("feet", "p" + fj, k);
      push3("feet", "pd" + fj, k);
      push3("feet", "pdd" + fj, k);
    }
    for (int j = 0; j < kNumFeet; ++j)
      push3("force", "f" + std::to_string(j), k);
  }
  return p;
}

double lerp(double a, double b, double t) { return a + (b - a) * t; }

struct References {
  std::vector<Vec3> r, th;
  std::array<std::vector<Vec3>, kNumFeet> feet;
};

// Linear interpolation between the boundary poses; yaw takes the short way
// around and a mid-horizon pitch keyframe leans the base into elevation
// changes larger than 5 cm.
References make_references(const PhysicalState& s, const PhysicalState& g,
                           int steps) {
  References out;
  out.r.resize(steps);
  out.th.resize(steps);
  for (int j = 0; j < kNumFeet; ++j) out.feet[j].resize(steps);

  const double dyaw = std::remainder(g.base_rpy.z() - s.base_rpy.z(), 2 * kPi);
  const double dz = g.base_pos.z() - s.base_pos.z();
  const double dxy = (g.base_pos.head<2>() - s.base_pos.head<2>()).norm();
  const bool keyed = std::abs(dz) > 0.05 && steps >= 3;
  const double pitch_mid = -std::atan2(dz, dxy);
  const int kmid = (steps - 1) / 2;

  for (int k = 0; k < steps; ++k) {
    const double t = steps > 1 ? static_cast<double>(k) / (steps - 1) : 0.0;
    out.r[k] = s.base_pos + t * (g.base_pos - s.base_pos);
    double pitch;
    if (keyed) {
      pitch = k <= kmid
                  ? lerp(s.base_rpy.y(), pitch_mid,
                         static_cast<double>(k) / kmid)
                  : lerp(pitch_mid, g.base_rpy.y(),
                         static_cast<double>(k - kmid) / (steps - 1 - kmid));
    } else {
      pitch = lerp(s.base_rpy.y(), g.base_rpy.y(), t);
    }
    out.th[k] = Vec3(lerp(s.base_rpy.x(), g.base_rpy.x(), t), pitch,
                     s.base_rpy.z() + t * dyaw);
    for (int j = 0; j < kNumFeet; ++j)
      out.feet[j][k] = s.feet[j] + t * (g.feet[j] - s.feet[j]);
  }
  return out;
}

struct Box3 {
  Vec3 lo = Vec3::Constant(kInf);
  Vec3 hi = Vec3::Constant(-kInf);
  void absorb(const Vec3& v) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
};

Box3 position_bounds(const std::vector<TerrainPolygon>& polys,
                     const std::vector<const PhysicalState*>& poses) {
  Box3 b;
  for (const auto& poly : polys)
    for (const auto& v : poly.vertices) b.absorb(v);
  for (const PhysicalState* ps : poses) {
    b.absorb(ps->base_pos);
    for (int j = 0; j < kNumFeet; ++j) b.absorb(ps->feet[j]);
  }
  b.lo -= Vec3(1.0, 1.0, 1.0);
  b.hi += Vec3(1.0, 1.0, 2.0);
  return b;
}

// integrators, dynamics, actuation, kinematic boxes and tracking cost
void add_motion_core(MICPProblem& p, const References& ref,
                     const CostWeights& w, const Vec3& plo, const Vec3& phi,
                     bool dynamics) {
  const RobotParams& rb = p.robot;
  const double dt = p.dt;
  for (int k = 0; k < p.steps; ++k) {
    for (int c = 0; c < 3; ++c) {
      set_box(p, p.var_r(k, c), plo[c], phi[c]);
      set_box(p, p.var_rd(k, c), -rb.v_max, rb.v_max);
      for (int j = 0; j < kNumFeet; ++j) {
        set_box(p, p.var_p(k, j, c), plo[c], phi[c]);
        set_box(p, p.var_pd(k, j, c), -rb.v_max, rb.v_max);
        set_box(p, p.var_f(k, j, c), -rb.f_max, rb.f_max);
      }
    }
    if (k >= 1) {
      for (int c = 0; c < 3; ++c) {
        add_eq(p,
               {{p.var_r(k, c), 1.0}, {p.var_r(k - 1, c), -1.0},
                {p.var_rd(k, c), -dt}},
               0.0);
        add_eq(p,
               {{p.var_rd(k, c), 1.0}, {p.var_rd(k - 1, c), -1.0},
                {p.var_rdd(k, c), -dt}},
               0.0);
        add_eq(p,
               {{p.var_th(k, c), 1.0}, {p.var_th(k - 1, c), -1.0},
                {p.var_thd(k, c), -dt}},
               0.0);
        add_eq(p,
               {{p.var_thd(k, c), 1.0}, {p.var_thd(k - 1, c), -1.0},
                {p.var_thdd(k, c), -dt}},
               0.0);
        for (int j = 0; j < kNumFeet; ++j) {
          add_eq(p,
                 {{p.var_p(k, j, c), 1.0}, {p.var_p(k - 1, j, c), -1.0},
                  {p.var_pd(k, j, c), -dt}},
                 0.0);
          add_eq(p,
                 {{p.var_pd(k, j, c), 1.0}, {p.var_pd(k - 1, j, c), -1.0},
                  {p.var_pdd(k, j, c), -dt}},
                 0.0);
        }
      }
    }
    if (dynamics) {
      for (int c = 0; c < 3; ++c) {
        std::vector<std::pair<int, double>> terms{{p.var_rdd(k, c), rb.mass}};
        for (int j = 0; j < kNumFeet; ++j)
          terms.emplace_back(p.var_f(k, j, c), -1.0);
        add_eq(p, terms, rb.mass * kGravity[c]);
      }
    }
    for (int c = 0; c < 3; ++c) {
      add_in(p, {{p.var_thdd(k, c), rb.inertia[c]}}, rb.tau_base_max[c]);
      add_in(p, {{p.var_thdd(k, c), -rb.inertia[c]}}, rb.tau_base_max[c]);
    }
    const Eigen::Matrix3d Rz = rotation_z(p.yaw_ref[k]);
    for (int j = 0; j < kNumFeet; ++j) {
      const Vec3 centre = Rz * rb.foot_offset(j);
      for (int c = 0; c < 3; ++c) {
        add_in(p, {{p.var_p(k, j, c), 1.0}, {p.var_r(k, c), -1.0}},
               rb.p_dev_max[c] + centre[c]);
        add_in(p, {{p.var_p(k, j, c), -1.0}, {p.var_r(k, c), 1.0}},
               rb.p_dev_max[c] - centre[c]);
      }
    }
    for (int c = 0; c < 3; ++c) {
      add_track(p, p.var_r(k, c), w.q_base, ref.r[k][c]);
      add_track(p, p.var_th(k, c), w.q_att, ref.th[k][c]);
      add_track(p, p.var_rdd(k, c), w.r_base_acc, 0.0);
      add_track(p, p.var_thdd(k, c), w.r_att_acc, 0.0);
      for (int j = 0; j < kNumFeet; ++j) {
        add_track(p, p.var_p(k, j, c), w.q_feet, ref.feet[j][k][c]);
        add_track(p, p.var_pdd(k, j, c), w.r_feet_acc, 0.0);
        add_track(p, p.var_f(k, j, c), w.r_force, 0.0);
      }
    }
  }
}

// full kinematic rest state at a boundary step; forces stay free and follow
// from the force balance
void pin_boundary(MICPProblem& p, int k, const PhysicalState& s, double yaw) {
  for (int c = 0; c < 3; ++c) {
    set_pin(p, p.var_r(k, c), s.base_pos[c]);
    set_pin(p, p.var_rd(k, c), 0.0);
    set_pin(p, p.var_rdd(k, c), 0.0);
    set_pin(p, p.var_th(k, c), c == 2 ? yaw : s.base_rpy[c]);
    set_pin(p, p.var_thd(k, c), 0.0);
    set_pin(p, p.var_thdd(k, c), 0.0);
    for (int j = 0; j < kNumFeet; ++j) {
      set_pin(p, p.var_p(k, j, c), s.feet[j][c]);
      set_pin(p, p.var_pd(k, j, c), 0.0);
      set_pin(p, p.var_pdd(k, j, c), 0.0);
    }
  }
}

void add_leg_torque(MICPProblem& p, int k, int j) {
  const Eigen::Matrix3d M = p.robot.leg_jacobian(j).transpose() *
                            rotation_z(p.yaw_ref[k]).transpose();
  for (int c = 0; c < 3; ++c) {
    std::vector<std::pair<int, double>> pos, neg;
    for (int d = 0; d < 3; ++d) {
      pos.emplace_back(p.var_f(k, j, d), M(c, d));
      neg.emplace_back(p.var_f(k, j, d), -M(c, d));
    }
    add_in(p, pos, p.robot.tau_leg_max[c]);
    add_in(p, neg, p.robot.tau_leg_max[c]);
  }
}

void add_membership(MICPProblem& p, int bcol, int k, int j,
                    const HalfspaceRegion& hs, double inset) {
  for (Eigen::Index e = 0; e < hs.A_ineq.rows(); ++e) {
    Implication imp;
    imp.binaries = {bcol};
    for (int c = 0; c < 3; ++c)
      imp.terms.emplace_back(p.var_p(k, j, c), hs.A_ineq(e, c));
    imp.rhs = hs.b_ineq[e] - inset;
    p.implications.push_back(std::move(imp));
  }
  if (hs.A_eq.norm() > 1e-12) {
    for (double sign : {1.0, -1.0}) {
      Implication imp;
      imp.binaries = {bcol};
      for (int c = 0; c < 3; ++c)
        imp.terms.emplace_back(p.var_p(k, j, c), sign * hs.A_eq[c]);
      imp.rhs = sign * hs.b_eq;
      p.implications.push_back(std::move(imp));
    }
  }
}

void add_friction(MICPProblem& p, int bcol, int k, int j,
                  const FrictionPyramid& pyr) {
  for (const Vec3& facet : pyr.facets) {
    Implication imp;
    imp.binaries = {bcol};
    for (int c = 0; c < 3; ++c)
      imp.terms.emplace_back(p.var_f(k, j, c), facet[c]);
    imp.rhs = 0.0;
    p.implications.push_back(std::move(imp));
  }
}

int polygon_under(const std::vector<TerrainPolygon>& polys, const Vec3& pt) {
  int best = 0;
  double best_violation = kInf;
  for (size_t i = 0; i < polys.size(); ++i) {
    const HalfspaceRegion hs = polygon_to_halfspaces(polys[i]);
    double v = std::abs(hs.A_eq.dot(pt) - hs.b_eq);
    for (Eigen::Index e = 0; e < hs.A_ineq.rows(); ++e)
      v = std::max(v, hs.A_ineq.row(e).dot(pt) - hs.b_ineq[e]);
    if (v < best_violation) {
      best_violation = v;
      best = static_cast<int>(i);
    }
  }
  return best;
}

}  // namespace

MICPProblem build_gait_fixed(const PhysicalState& start,
                             const PhysicalState& goal, const Gait& gait,
                             const std::vector<TerrainPolygon>& polys,
                             const RobotParams& params, const CostWeights& w) {
  gait.validate();
  if (polys.empty())
    throw std::invalid_argument("gait-fixed: terrain polygon set is empty");
  const int N = gait.time_steps();
  if (N < 2)
    throw GaitGridMismatch("gait too short for boundary conditions");

  MICPProblem p = make_base(ProblemKind::GaitFixed, N, gait.dt, params);
  const References ref = make_references(start, goal, N);
  p.yaw_ref.resize(N);
  for (int k = 0; k < N; ++k) p.yaw_ref[k] = ref.th[k].z();

  const Box3 bb = position_bounds(polys, {&start, &goal});
  add_motion_core(p, ref, w, bb.lo, bb.hi, true);

  for (int j = 0; j < kNumFeet; ++j) {
    const std::vector<int> table = gait.contact_table(j);
    int run = -1;
    for (int k = 0; k <= N; ++k) {
      const bool c = k < N && table[k] != 0;
      if (c && run < 0) run = k;
      if (!c && run >= 0) {
        p.stance_windows[j].push_back({run, k});
        run = -1;
      }
    }
    for (int k = 0; k < N; ++k) {
      if (table[k] != 0) {
        add_leg_torque(p, k, j);
        if (k != 0 && k != N - 1)
          for (int c = 0; c < 3; ++c) set_pin(p, p.var_pd(k, j, c), 0.0);
      } else {
        for (int c = 0; c < 3; ++c) set_pin(p, p.var_f(k, j, c), 0.0);
      }
    }

    const std::vector<int> init = gait.initial_stance(j);
    if (!init.empty()) {
      const int under = polygon_under(polys, start.feet[j]);
      const FrictionPyramid pyr =
          FrictionPyramid::make(polys[under].normal, polys[under].mu, 4);
      for (int k : init)
        for (const Vec3& facet : pyr.facets) {
          std::vector<std::pair<int, double>> terms;
          for (int c = 0; c < 3; ++c)
            terms.emplace_back(p.var_f(k, j, c), facet[c]);
          add_in(p, terms, 0.0);
        }
    }

    for (const std::vector<int>& window : gait.stance_after_touchdown(j)) {
      if (window.empty()) continue;
      const int k0 = window.front();
      std::vector<int> cols;
      for (size_t r = 0; r < polys.size(); ++r)
        cols.push_back(p.add_binary("foothold", static_cast<int>(r), k0, j));
      p.sum_rows.push_back({cols, true});
      for (size_t r = 0; r < polys.size(); ++r) {
        add_membership(p, cols[r], k0, j, polygon_to_halfspaces(polys[r]),
                       kFootholdInset);
        const FrictionPyramid pyr =
            FrictionPyramid::make(polys[r].normal, polys[r].mu, 4);
        for (int k : window) add_friction(p, cols[r], k, j, pyr);
      }
    }
  }

  pin_boundary(p, 0, start, start.base_rpy.z());
  pin_boundary(p, N - 1, goal, ref.th[N - 1].z());
  p.finalize();
  return p;
}

MICPProblem build_gait_free(const PhysicalState& start,
                            const PhysicalState& goal,
                            const std::vector<TerrainPolygon>& polys,
                            const RobotParams& params, const CostWeights& w,
                            int intervals, double dt_m) {
  if (polys.empty())
    throw std::invalid_argument("gait-free: terrain polygon set is empty");
  if (intervals < 2)
    throw std::invalid_argument("gait-free: need at least two intervals");
  const double dt = 0.05;
  const double steps_exact = intervals * dt_m / dt;
  const int N = static_cast<int>(std::lround(steps_exact));
  if (std::abs(steps_exact - N) > 1e-9 || N < 2)
    throw GaitGridMismatch("interval grid does not tile the trajectory grid");

  MICPProblem p = make_base(ProblemKind::GaitFree, N, dt, params);
  const References ref = make_references(start, goal, N);
  p.yaw_ref.resize(N);
  for (int k = 0; k < N; ++k) p.yaw_ref[k] = ref.th[k].z();

  const Box3 bb = position_bounds(polys, {&start, &goal});
  add_motion_core(p, ref, w, bb.lo, bb.hi, true);
  for (int k = 0; k < N; ++k)
    for (int j = 0; j < kNumFeet; ++j) add_leg_torque(p, k, j);

  auto interval_begin = [&](int m) { return (m * N) / intervals; };
  for (int j = 0; j < kNumFeet; ++j) {
    for (int m = 0; m < intervals; ++m) {
      const int s = interval_begin(m);
      const int e = interval_begin(m + 1);
      std::vector<int> cols;
      for (size_t r = 0; r < polys.size(); ++r)
        cols.push_back(p.add_binary("stance", static_cast<int>(r), m, j));
      p.sum_rows.push_back({cols, m == 0 || m == intervals - 1});
      for (size_t r = 0; r < polys.size(); ++r) {
        add_membership(p, cols[r], s, j, polygon_to_halfspaces(polys[r]),
                       kFootholdInset);
        const FrictionPyramid pyr =
            FrictionPyramid::make(polys[r].normal, polys[r].mu, 4);
        for (int k = s; k < e; ++k) add_friction(p, cols[r], k, j, pyr);
        // the foot stays planted through the interval and into the first
        // step of the next one, so consecutive stances share a foothold
        const int glue_end = std::min(e, N - 2);
        for (int k = std::max(s, 1); k <= glue_end; ++k)
          for (int c = 0; c < 3; ++c)
            for (double sign : {1.0, -1.0}) {
              Implication imp;
              imp.binaries = {cols[r]};
              imp.terms.emplace_back(p.var_pd(k, j, c), sign);
              imp.rhs = 0.0;
              p.implications.push_back(std::move(imp));
            }
      }
      for (int k = s; k < e; ++k)
        for (int c = 0; c < 3; ++c)
          for (double sign : {1.0, -1.0}) {
            Implication imp;
            imp.binaries = cols;
            imp.when_zero = true;
            imp.terms.emplace_back(p.var_f(k, j, c), sign);
            imp.rhs = 0.0;
            p.implications.push_back(std::move(imp));
          }
    }
  }

  // root incumbents for the search: all-stance, plus every short whole-body
  // flight window over the interior intervals, feet on the regions nearest
  // their boundary placements. Relaxations carry almost no contact signal,
  // so terrain that forces a flight phase would otherwise leave the search
  // without an incumbent for a long time.
  {
    std::vector<HalfspaceRegion> regions;
    regions.reserve(polys.size());
    for (const TerrainPolygon& poly : polys)
      regions.push_back(polygon_to_halfspaces(poly));
    auto nearest_region = [&](const Vec3& q) {
      int best = 0;
      double best_v = std::numeric_limits<double>::infinity();
      for (size_t r = 0; r < regions.size(); ++r) {
        const HalfspaceRegion& hs = regions[r];
        double v = 0.0;
        for (Eigen::Index e = 0; e < hs.A_ineq.rows(); ++e)
          v = std::max(v, hs.A_ineq.row(e).dot(q) -
                              (hs.b_ineq[e] - kFootholdInset));
        if (hs.A_eq.norm() > 1e-12)
          v = std::max(v, std::abs(hs.A_eq.dot(q) - hs.b_eq));
        if (v < best_v) {
          best_v = v;
          best = static_cast<int>(r);
        }
      }
      return best;
    };
    const int R = static_cast<int>(polys.size());
    std::array<int, kNumFeet> from{}, to{};
    for (int j = 0; j < kNumFeet; ++j) {
      from[static_cast<size_t>(j)] = nearest_region(start.feet[j]);
      to[static_cast<size_t>(j)] = nearest_region(goal.feet[j]);
    }
    auto stance_hint = [&](int fly_begin, int fly_end) {
      std::vector<int> h(p.binaries.size(), 0);
      for (int j = 0; j < kNumFeet; ++j)
        for (int m = 0; m < intervals; ++m) {
          if (m >= fly_begin && m < fly_end) continue;
          const int r = m < fly_begin ? from[static_cast<size_t>(j)]
                                      : to[static_cast<size_t>(j)];
          h[static_cast<size_t>(j * intervals * R + m * R + r)] = 1;
        }
      return h;
    };
    p.hints.push_back(stance_hint(intervals, intervals));
    const int max_len = std::min(3, intervals - 2);
    for (int len = 1; len <= max_len; ++len)
      for (int a = 1; a + len <= intervals - 1; ++a)
        p.hints.push_back(stance_hint(a, a + len));
  }

  pin_boundary(p, 0, start, start.base_rpy.z());
  pin_boundary(p, N - 1, goal, ref.th[N - 1].z());
  p.finalize();
  return p;
}

MICPProblem build_retarget(const PhysicalState& desired,
                           const std::vector<TerrainPolygon>& polys,
                           const RobotParams& params, const Vec3& threshold) {
  if (polys.empty())
    throw std::invalid_argument("retarget: terrain polygon set is empty");
  MICPProblem p = make_base(ProblemKind::Retarget, 1, 0.05, params);
  p.yaw_ref = {desired.base_rpy.z()};
  const References ref = make_references(desired, desired, 1);

  CostWeights w;
  w.q_base = 1.0;
  w.q_att = 0.0;
  w.q_feet = 1.0;
  w.r_base_acc = w.r_att_acc = w.r_feet_acc = w.r_force = 0.0;

  const Box3 bb = position_bounds(polys, {&desired});
  add_motion_core(p, ref, w, bb.lo, bb.hi, false);

  for (int c = 0; c < 3; ++c) {
    set_box(p, p.var_r(0, c), desired.base_pos[c] - threshold[c],
            desired.base_pos[c] + threshold[c]);
    set_pin(p, p.var_rd(0, c), 0.0);
    set_pin(p, p.var_rdd(0, c), 0.0);
    set_pin(p, p.var_th(0, c), desired.base_rpy[c]);
    set_pin(p, p.var_thd(0, c), 0.0);
    set_pin(p, p.var_thdd(0, c), 0.0);
    for (int j = 0; j < kNumFeet; ++j) {
      set_pin(p, p.var_pd(0, j, c), 0.0);
      set_pin(p, p.var_pdd(0, j, c), 0.0);
      set_pin(p, p.var_f(0, j, c), 0.0);
    }
  }

  // support polygon: base xy stays a margin inside the stance hull, with
  // edge normals frozen at the desired footprint
  const int ring[4] = {0, 1, 3, 2};
  Vec2 centroid = Vec2::Zero();
  for (int j = 0; j < kNumFeet; ++j)
    centroid += desired.feet[j].head<2>() / kNumFeet;
  for (int i = 0; i < 4; ++i) {
    const int a = ring[i];
    const int b = ring[(i + 1) % 4];
    const Vec2 edge = (desired.feet[b] - desired.feet[a]).head<2>();
    if (edge.norm() < 1e-9) continue;
    Vec2 n(-edge.y(), edge.x());
    if (n.dot(centroid - desired.feet[a].head<2>()) < 0.0) n = -n;
    n.normalize();
    add_in(p,
           {{p.var_r(0, 0), -n.x()},
            {p.var_r(0, 1), -n.y()},
            {p.var_p(0, a, 0), n.x()},
            {p.var_p(0, a, 1), n.y()}},
           -kSupportMargin);
  }

  for (int j = 0; j < kNumFeet; ++j) {
    p.stance_windows[j] = {{0, 1}};
    std::vector<int> cols;
    for (size_t r = 0; r < polys.size(); ++r)
      cols.push_back(p.add_binary("foothold", static_cast<int>(r), 0, j));
    p.sum_rows.push_back({cols, true});
    for (size_t r = 0; r < polys.size(); ++r)
      add_membership(p, cols[r], 0, j, polygon_to_halfspaces(polys[r]),
                     kFootholdInset);
  }
  p.finalize();
  return p;
}

PhysicalState retarget_pose(const PhysicalState& desired,
                            const std::vector<TerrainPolygon>& polys,
                            const RobotParams& params, const Vec3& threshold,
                            const BnBConfig& cfg) {
  const MICPProblem p = build_retarget(desired, polys, params, threshold);
  const MICPSolution sol = solve_micp(p, cfg);
  if (sol.status != MICPStatus::Optimal)
    throw RetargetInfeasible(
        sol.status == MICPStatus::Infeasible
            ? "no statically feasible pose within the threshold"
            : "pose feasibility undecided within the solve budget");
  PhysicalState out = desired;
  for (int c = 0; c < 3; ++c) {
    out.base_pos[c] = sol.x[p.var_r(0, c)];
    for (int j = 0; j < kNumFeet; ++j) out.feet[j][c] = sol.x[p.var_p(0, j, c)];
  }
  return out;
}

void add_collision_constraints(MICPProblem& p,
                               const std::vector<HalfspaceRegion>& free_regions,
                               double h_swing, int W, double dt_w) {
  if (free_regions.empty())
    throw std::invalid_argument("collision: free region set is empty");
  if (W < 1) throw std::invalid_argument("collision: need at least one check");

  // tallest floor across the free volumes; rows with a downward-only normal
  // encode z >= b / a_z
  double terrain_top = 0.0;
  for (const HalfspaceRegion& hs : free_regions)
    for (Eigen::Index e = 0; e < hs.A_ineq.rows(); ++e) {
      const Vec3 a = hs.A_ineq.row(e).transpose();
      if (std::abs(a.x()) < 1e-9 && std::abs(a.y()) < 1e-9 && a.z() < -1e-9)
        terrain_top = std::max(terrain_top, hs.b_ineq[e] / a.z());
    }

  std::array<std::vector<int>, kNumFeet> mids;
  for (int j = 0; j < kNumFeet; ++j) {
    const auto& sw = p.stance_windows[j];
    for (size_t i = 0; i + 1 < sw.size(); ++i) {
      const int gap_begin = sw[i].second;
      const int gap_end = sw[i + 1].first;
      if (gap_end > gap_begin) mids[j].push_back((gap_begin + gap_end) / 2);
    }
    for (int mid : mids[j])
      add_in(p, {{p.var_p(mid, j, 2), -1.0}}, -(terrain_top + h_swing));
  }

  for (int w = 0; w < W; ++w) {
    int t = static_cast<int>(std::lround(w * dt_w / p.dt));
    t = std::min(std::max(t, 0), p.steps - 1);
    for (int j = 0; j < kNumFeet; ++j) {
      const bool at_apex =
          std::find(mids[j].begin(), mids[j].end(), t) != mids[j].end();
      std::vector<int> cols;
      for (size_t s = 0; s < free_regions.size(); ++s)
        cols.push_back(p.add_binary("clearance", static_cast<int>(s), t, j));
      p.sum_rows.push_back({cols, true});
      for (size_t s = 0; s < free_regions.size(); ++s) {
        const HalfspaceRegion& hs = free_regions[s];
        for (Eigen::Index e = 0; e < hs.A_ineq.rows(); ++e) {
          const Vec3 a = hs.A_ineq.row(e).transpose();
          double rhs = hs.b_ineq[e];
          const bool floor_row = std::abs(a.x()) < 1e-9 &&
                                 std::abs(a.y()) < 1e-9 && a.z() < -1e-9;
          if (floor_row && at_apex) rhs += h_swing * a.z();
          Implication imp;
          imp.binaries = {cols[s]};
          for (int c = 0; c < 3; ++c)
            imp.terms.emplace_back(p.var_p(t, j, c), a[c]);
          imp.rhs = rhs;
          p.implications.push_back(std::move(imp));
        }
        if (hs.A_eq.norm() > 1e-12) {
          for (double sign : {1.0, -1.0}) {
            Implication imp;
            imp.binaries = {cols[s]};
            for (int c = 0; c < 3; ++c)
              imp.terms.emplace_back(p.var_p(t, j, c), sign * hs.A_eq[c]);
            imp.rhs = sign * hs.b_eq;
            p.implications.push_back(std::move(imp));
          }
        }
      }
    }
  }
  p.finalize();
}

}  // namespace locoplan
