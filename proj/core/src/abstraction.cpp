#include "locoplan/abstraction.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace locoplan {

CellRect GridConfig::cell_rect(CellIndex c) const {
  CellRect r;
  r.xmin = origin.x() + c.ix * cell_size;
  r.ymin = origin.y() + c.iy * cell_size;
  r.xmax = r.xmin + cell_size;
  r.ymax = r.ymin + cell_size;
  return r;
}

CellIndex GridConfig::locate(const Vec2& p) const {
  const double fx = (p.x() - origin.x()) / cell_size;
  const double fy = (p.y() - origin.y()) / cell_size;
  CellIndex c{static_cast<int>(std::floor(fx)), static_cast<int>(std::floor(fy))};
  if (!in_bounds(c)) {
    std::ostringstream os;
    os << "point (" << p.x() << ", " << p.y() << ") outside grid";
    throw OutOfGrid(os.str());
  }
  return c;
}

double Gait::duration() const {
  double d = 0.0;
  for (const auto& ph : phases[0]) d += ph.duration;
  return d;
}

int Gait::time_steps() const {
  return static_cast<int>(std::llround(duration() / dt));
}

void Gait::validate() const {
  if (dt <= 0.0) throw GaitGridMismatch("gait " + id + ": dt must be positive");
  double total = -1.0;
  for (int foot = 0; foot < kNumFeet; ++foot) {
    if (phases[foot].empty())
      throw GaitGridMismatch("gait " + id + ": foot has no phases");
    double sum = 0.0;
    for (const auto& ph : phases[foot]) {
      if (ph.duration <= 0.0)
        throw GaitGridMismatch("gait " + id + ": nonpositive phase duration");
      const double steps = ph.duration / dt;
      if (std::abs(ph.duration - std::llround(steps) * dt) > 1e-9)
        throw GaitGridMismatch("gait " + id +
                               ": phase duration is not a multiple of dt");
      sum += ph.duration;
    }
    if (total < 0.0)
      total = sum;
    else if (std::abs(sum - total) > 1e-9)
      throw GaitGridMismatch("gait " + id + ": feet disagree on total duration");
  }
}

std::vector<int> Gait::contact_table(int foot) const {
  std::vector<int> table;
  table.reserve(static_cast<size_t>(time_steps()));
  for (const auto& ph : phases[foot]) {
    const int n = static_cast<int>(std::llround(ph.duration / dt));
    table.insert(table.end(), n, ph.contact ? 1 : 0);
  }
  return table;
}

bool Gait::in_contact(int foot, int step) const {
  int acc = 0;
  for (const auto& ph : phases[foot]) {
    acc += static_cast<int>(std::llround(ph.duration / dt));
    if (step < acc) return ph.contact;
  }
  return phases[foot].back().contact;
}

int Gait::footstep_count() const {
  int count = 0;
  for (int foot = 0; foot < kNumFeet; ++foot) {
    const auto table = contact_table(foot);
    for (size_t t = 1; t < table.size(); ++t)
      if (table[t] && !table[t - 1]) ++count;
  }
  return count;
}

std::vector<std::vector<int>> Gait::stance_after_touchdown(int foot) const {
  const auto table = contact_table(foot);
  std::vector<std::vector<int>> runs;
  for (size_t t = 1; t < table.size(); ++t) {
    if (table[t] && !table[t - 1]) {
      std::vector<int> run;
      for (size_t u = t; u < table.size() && table[u]; ++u)
        run.push_back(static_cast<int>(u));
      runs.push_back(std::move(run));
    }
  }
  return runs;
}

std::vector<int> Gait::initial_stance(int foot) const {
  const auto table = contact_table(foot);
  std::vector<int> run;
  for (size_t t = 0; t < table.size() && table[t]; ++t)
    run.push_back(static_cast<int>(t));
  return run;
}

std::vector<std::pair<int, int>> Gait::swing_windows(int foot) const {
  const auto table = contact_table(foot);
  std::vector<std::pair<int, int>> windows;
  size_t t = 0;
  while (t < table.size()) {
    if (!table[t]) {
      size_t begin = t;
      while (t < table.size() && !table[t]) ++t;
      windows.emplace_back(static_cast<int>(begin), static_cast<int>(t));
    } else {
      ++t;
    }
  }
  return windows;
}

Gait make_trot(std::string id, double duration, double dt) {
  const long long cycles = std::llround(duration);
  if (cycles < 1 || std::abs(duration - static_cast<double>(cycles)) > 1e-9)
    throw GaitGridMismatch("trot duration must be a whole number of 1 s cycles");
  Gait g;
  g.id = std::move(id);
  g.dt = dt;
  // Diagonal pairs alternate quarter-cycle swings: FL/RR lift during
  // [0.25, 0.5), FR/RL during [0.5, 0.75).
  for (long long c = 0; c < cycles; ++c) {
    for (int foot : {0, 3}) {
      g.phases[foot].push_back({true, 0.25});
      g.phases[foot].push_back({false, 0.25});
      g.phases[foot].push_back({true, 0.5});
    }
    for (int foot : {1, 2}) {
      g.phases[foot].push_back({true, 0.5});
      g.phases[foot].push_back({false, 0.25});
      g.phases[foot].push_back({true, 0.25});
    }
  }
  g.validate();
  return g;
}

Gait gait_from_contact_table(std::string id, double dt,
                             const std::array<std::vector<bool>, kNumFeet>& table) {
  Gait g;
  g.id = std::move(id);
  g.dt = dt;
  const size_t n = table[0].size();
  for (int foot = 0; foot < kNumFeet; ++foot) {
    if (table[foot].size() != n || n == 0)
      throw GaitGridMismatch("contact table feet disagree on step count");
    size_t t = 0;
    while (t < n) {
      const bool c = table[foot][t];
      size_t run = 0;
      while (t < n && table[foot][t] == c) {
        ++run;
        ++t;
      }
      g.phases[foot].push_back({c, static_cast<double>(run) * dt});
    }
  }
  g.validate();
  return g;
}

bool Skill::matches_terrain(const std::vector<int>& terrain) const {
  for (const auto& [cell, type] : fragment) {
    if (cell < 0 || cell >= static_cast<int>(terrain.size())) return false;
    if (terrain[static_cast<size_t>(cell)] != type) return false;
  }
  return true;
}

Eigen::Matrix3d rotation_z(double yaw) {
  return Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()).toRotationMatrix();
}

Eigen::Matrix3d rotation_rpy(const Vec3& rpy) {
  return (Eigen::AngleAxisd(rpy.z(), Eigen::Vector3d::UnitZ()) *
          Eigen::AngleAxisd(rpy.y(), Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(rpy.x(), Eigen::Vector3d::UnitX()))
      .toRotationMatrix();
}

namespace {

// Highest supporting plane sampled over the parts of the polygons that lie
// under the cell; falls back to z = 0 over bare ground.
double support_height(const CellRect& rect,
                      const std::vector<TerrainPolygon>& polys) {
  double best = 0.0;
  bool found = false;
  for (const auto& poly : polys) {
    const auto clipped = clip_polygon_to_rect(project_xy(poly), rect);
    if (clipped.size() < 3 || polygon_area_2d(clipped) < 1e-12) continue;
    const double offset = poly.plane_offset();
    for (const auto& v : clipped) {
      const double z =
          (offset - poly.normal.x() * v.x() - poly.normal.y() * v.y()) /
          poly.normal.z();
      if (!found || z > best) best = z;
      found = true;
    }
  }
  return best;
}

}  // namespace

PhysicalState ground(const InputState& s, const GridConfig& grid,
                     const std::vector<TerrainPolygon>& polys,
                     const RobotParams& robot) {
  if (!grid.in_bounds(s.robot) || !grid.in_bounds(s.request))
    throw OutOfGrid("input state references a cell outside the grid");
  PhysicalState phys;
  const double h = support_height(grid.cell_rect(s.robot), polys);
  double yaw = 0.0;
  if (s.yaw_idx >= 0) {
    if (s.yaw_idx >= static_cast<int>(grid.yaw_set_deg.size()))
      throw OutOfGrid("heading index outside the yaw set");
    yaw = grid.yaw_set_deg[static_cast<size_t>(s.yaw_idx)] * M_PI / 180.0;
  }
  const Vec2 c = grid.cell_center(s.robot);
  phys.base_pos = Vec3(c.x(), c.y(), h + robot.nominal_height());
  phys.base_rpy = Vec3(0.0, 0.0, yaw);
  const Eigen::Matrix3d R = rotation_z(yaw);
  for (int foot = 0; foot < kNumFeet; ++foot)
    phys.feet[static_cast<size_t>(foot)] = phys.base_pos + R * robot.foot_offset(foot);
  phys.goal = grid.cell_center(s.request);
  return phys;
}

InputState inverse_ground(const PhysicalState& phys,
                          const std::vector<TerrainPolygon>& polys,
                          const GridConfig& grid,
                          const ClassificationRules& rules) {
  InputState s;
  s.robot = grid.locate(Vec2(phys.base_pos.x(), phys.base_pos.y()));
  s.request = grid.locate(phys.goal);
  if (!grid.yaw_set_deg.empty()) {
    const double yaw_deg = phys.base_rpy.z() * 180.0 / M_PI;
    double best = 1e300;
    for (size_t i = 0; i < grid.yaw_set_deg.size(); ++i) {
      const double d = std::abs(std::remainder(yaw_deg - grid.yaw_set_deg[i], 360.0));
      if (d < best - 1e-12) {
        best = d;
        s.yaw_idx = static_cast<int>(i);
      }
    }
  }
  s.terrain.resize(static_cast<size_t>(grid.cells()));
  for (int idx = 0; idx < grid.cells(); ++idx)
    s.terrain[static_cast<size_t>(idx)] =
        classify_cell(polys, grid.cell_rect(grid.from_linear(idx)), rules);
  return s;
}

MoveSet MoveSet::cardinal() {
  return MoveSet{{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};
}

MoveSet MoveSet::with_diagonals() {
  return MoveSet{
      {{1, 0}, {-1, 0}, {0, 1}, {0, -1}, {1, 1}, {1, -1}, {-1, 1}, {-1, -1}}};
}

std::vector<int> fragment_cells(const GridConfig& grid, CellIndex src,
                                CellIndex dst, FragmentMode mode) {
  std::set<int> cells{grid.linear(src), grid.linear(dst)};
  if (mode == FragmentMode::SourceColumn)
    for (int y = 0; y < grid.ny; ++y) cells.insert(grid.linear({src.ix, y}));
  return {cells.begin(), cells.end()};
}

bool type_is_steppable(int type, const ClassificationRules& rules) {
  if (type == rules.obstacle_type()) return false;
  if (rules.family == TerrainFamily::Unstructured)
    return type != kGap && type != kHighGap && type != kLowGap;
  return true;
}

namespace {

std::string cell_tag(CellIndex c) {
  return "x" + std::to_string(c.ix) + "y" + std::to_string(c.iy);
}

std::string fragment_key(const Skill& sk) {
  std::ostringstream os;
  os << (sk.kind == SkillKind::Translation ? 'T' : 'R') << '|' << sk.src.ix << ','
     << sk.src.iy << '|' << sk.dst.ix << ',' << sk.dst.iy << '|' << sk.src_yaw
     << ',' << sk.dst_yaw << '|' << sk.gait_id << '|';
  for (const auto& [cell, type] : sk.fragment) os << cell << ':' << type << ';';
  return os.str();
}

}  // namespace

std::vector<Skill> enumerate_candidate_skills(
    const GridConfig& grid, const std::vector<std::vector<int>>& terrain_states,
    const std::vector<Gait>& gaits, const ClassificationRules& rules,
    const MoveSet& moves, FragmentMode fragment_mode) {
  std::vector<Skill> skills;
  std::set<std::string> seen;
  std::map<std::string, int> variant_counts;
  auto push_unique = [&](Skill sk, const std::string& base) {
    const std::string key = fragment_key(sk);
    if (!seen.insert(key).second) return;
    int& n = variant_counts[base];
    sk.id = n == 0 ? base : base + "_v" + std::to_string(n);
    ++n;
    skills.push_back(std::move(sk));
  };
  std::vector<int> yaw_indices;
  if (grid.yaw_set_deg.empty())
    yaw_indices.push_back(-1);
  else
    for (size_t i = 0; i < grid.yaw_set_deg.size(); ++i)
      yaw_indices.push_back(static_cast<int>(i));

  for (const auto& terrain : terrain_states) {
    if (static_cast<int>(terrain.size()) != grid.cells())
      throw GaitGridMismatch("terrain state size disagrees with the grid");
    for (const auto& gait : gaits) {
      for (int idx = 0; idx < grid.cells(); ++idx) {
        const CellIndex src = grid.from_linear(idx);
        if (!type_is_steppable(terrain[static_cast<size_t>(idx)], rules))
          continue;
        for (const auto& [dx, dy] : moves.offsets) {
          const CellIndex dst{src.ix + dx, src.iy + dy};
          if (!grid.in_bounds(dst)) continue;
          if (!type_is_steppable(terrain[static_cast<size_t>(grid.linear(dst))],
                                 rules))
            continue;
          Skill sk;
          sk.kind = SkillKind::Translation;
          sk.src = src;
          sk.dst = dst;
          sk.gait_id = gait.id;
          for (int cell : fragment_cells(grid, src, dst, fragment_mode))
            sk.fragment[cell] = terrain[static_cast<size_t>(cell)];
          for (int y : yaw_indices) {
            Skill v = sk;
            v.src_yaw = y;
            v.dst_yaw = y;
            std::string base = "mv_" + cell_tag(src) + "_" + cell_tag(dst);
            if (y >= 0) base += "_h" + std::to_string(y);
            base += "_" + gait.id;
            push_unique(std::move(v), base);
          }
        }
        if (!grid.yaw_set_deg.empty()) {
          for (int a : yaw_indices) {
            for (int b : yaw_indices) {
              if (a == b) continue;
              Skill sk;
              sk.kind = SkillKind::Rotation;
              sk.src = src;
              sk.dst = src;
              sk.src_yaw = a;
              sk.dst_yaw = b;
              sk.gait_id = gait.id;
              sk.fragment[idx] = terrain[static_cast<size_t>(idx)];
              const std::string base = "rot_" + cell_tag(src) + "_h" +
                                       std::to_string(a) + "_h" +
                                       std::to_string(b) + "_" + gait.id;
              push_unique(std::move(sk), base);
            }
          }
        }
      }
    }
  }
  return skills;
}

namespace {

TerrainPolygon rect_polygon(std::string id, double x0, double y0, double x1,
                            double y1, double z, double mu) {
  return TerrainPolygon::make(
      std::move(id),
      {Vec3(x0, y0, z), Vec3(x1, y0, z), Vec3(x1, y1, z), Vec3(x0, y1, z)}, mu);
}

void add_strips_along(std::vector<TerrainPolygon>& out, const std::string& prefix,
                      const CellRect& cell, bool vary_x, RebarSparsity cls,
                      double z, double mu) {
  const double w = 0.05;
  const double lo = vary_x ? cell.xmin : cell.ymin;
  const double hi = vary_x ? cell.xmax : cell.ymax;
  const double span = hi - lo;
  std::vector<double> starts;
  switch (cls) {
    case RebarSparsity::Dense: {
      // five strips, evenly spaced: gaps stay under the dense band
      const int n = 5;
      const double gap = (span - n * w) / (n + 1);
      for (int i = 0; i < n; ++i) starts.push_back(lo + gap + i * (w + gap));
      break;
    }
    case RebarSparsity::Sparse: {
      const int n = 2;
      const double gap = (span - n * w) / (n + 1);
      for (int i = 0; i < n; ++i) starts.push_back(lo + gap + i * (w + gap));
      break;
    }
    case RebarSparsity::ExtremeSparse:
      starts = {lo, hi - w};
      break;
    case RebarSparsity::Limited:
      starts = {lo + 0.5 * span - 0.5 * w};
      break;
  }
  for (double s : starts) {
    const std::string id = prefix + "_" + std::to_string(out.size());
    if (vary_x)
      out.push_back(rect_polygon(id, s, cell.ymin, s + w, cell.ymax, z, mu));
    else
      out.push_back(rect_polygon(id, cell.xmin, s, cell.xmax, s + w, z, mu));
  }
}

}  // namespace

std::vector<TerrainPolygon> template_polygons(int type, const CellRect& cell,
                                              const ClassificationRules& rules,
                                              const std::string& id_prefix,
                                              double mu) {
  std::vector<TerrainPolygon> out;
  auto tag = [&] { return id_prefix + "_" + std::to_string(out.size()); };
  const double z0 = rules.reference_height;
  if (rules.family == TerrainFamily::Unstructured) {
    switch (type) {
      case kFlat:
        out.push_back(rect_polygon(tag(), cell.xmin, cell.ymin, cell.xmax,
                                   cell.ymax, z0, mu));
        break;
      case kHigh:
        out.push_back(rect_polygon(tag(), cell.xmin, cell.ymin, cell.xmax,
                                   cell.ymax, z0 + 0.12, mu));
        break;
      case kLow:
        out.push_back(rect_polygon(tag(), cell.xmin, cell.ymin, cell.xmax,
                                   cell.ymax, z0 - 0.12, mu));
        break;
      case kDenseStone: {
        // one merged steppable slab inset from the borders: coverage stays
        // below the full-cell band while every per-axis gap stays dense
        const double inset = 0.05;
        out.push_back(rect_polygon(tag(), cell.xmin + inset, cell.ymin + inset,
                                   cell.xmax - inset, cell.ymax - inset, z0, mu));
        break;
      }
      case kSparseStone: {
        // 2x2 stones, side 0.25, separated by a 0.15 central gap
        const double side = 0.25, margin = 0.075;
        for (int i = 0; i < 2; ++i) {
          for (int j = 0; j < 2; ++j) {
            const double x0 = cell.xmin + margin + i * (side + 0.15);
            const double y0 = cell.ymin + margin + j * (side + 0.15);
            out.push_back(
                rect_polygon(tag(), x0, y0, x0 + side, y0 + side, z0, mu));
          }
        }
        break;
      }
      default:
        break;  // gap family and obstacle: nothing to stand on
    }
    return out;
  }
  if (type == rules.obstacle_type()) return out;
  const auto cx = static_cast<RebarSparsity>(type / 4);
  const auto cy = static_cast<RebarSparsity>(type % 4);
  add_strips_along(out, id_prefix, cell, true, cx, z0, mu);
  add_strips_along(out, id_prefix, cell, false, cy, z0, mu);
  return out;
}

std::vector<TerrainPolygon> fragment_template_polygons(
    const std::map<int, int>& fragment, const GridConfig& grid,
    const ClassificationRules& rules, double mu) {
  std::vector<TerrainPolygon> out;
  for (const auto& [cell, type] : fragment) {
    auto polys = template_polygons(type, grid.cell_rect(grid.from_linear(cell)),
                                   rules, "c" + std::to_string(cell), mu);
    for (auto& p : polys) out.push_back(std::move(p));
  }
  return out;
}

}  // namespace locoplan
