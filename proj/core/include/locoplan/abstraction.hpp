#pragma once

#include <array>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "locoplan/geometry.hpp"
#include "locoplan/robot.hpp"

namespace locoplan {

struct OutOfGrid : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct GaitGridMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CellIndex {
  int ix = 0, iy = 0;
  bool operator==(const CellIndex&) const = default;
  auto operator<=>(const CellIndex&) const = default;
};

// Uniform local grid. Cells are half-open along both axes, so a point on a
// shared boundary belongs to the cell with the larger index.
struct GridConfig {
  Vec2 origin = Vec2::Zero();
  double cell_size = 0.8;
  int nx = 3, ny = 3;
  std::vector<double> yaw_set_deg;  // empty: headings are not modeled

  int cells() const { return nx * ny; }
  bool in_bounds(CellIndex c) const {
    return c.ix >= 0 && c.ix < nx && c.iy >= 0 && c.iy < ny;
  }
  int linear(CellIndex c) const { return c.iy * nx + c.ix; }
  CellIndex from_linear(int idx) const { return {idx % nx, idx / nx}; }
  CellRect cell_rect(CellIndex c) const;
  Vec2 cell_center(CellIndex c) const { return cell_rect(c).center(); }
  CellIndex locate(const Vec2& p) const;  // throws OutOfGrid
};

// Symbolic environment state: robot cell (plus optional heading index),
// request cell, and one terrain type per cell (linear indexing).
struct InputState {
  CellIndex robot;
  int yaw_idx = -1;
  CellIndex request;
  std::vector<int> terrain;
  bool operator==(const InputState&) const = default;
};

struct GaitPhase {
  bool contact = true;
  double duration = 0.0;
};

// Per-foot contact schedule on a fixed time grid. Every phase duration must
// be a positive multiple of dt (1e-9 tolerance); all feet span the same
// total duration.
struct Gait {
  std::string id;
  double dt = 0.05;
  std::array<std::vector<GaitPhase>, kNumFeet> phases;

  double duration() const;
  int time_steps() const;  // trajectory sample count N = duration/dt
  // Footsteps: false->true contact transitions summed over feet.
  int footstep_count() const;
  bool in_contact(int foot, int step) const;
  std::vector<int> contact_table(int foot) const;  // one flag per step
  // Stance step indices following the k-th touchdown of this foot.
  std::vector<std::vector<int>> stance_after_touchdown(int foot) const;
  std::vector<int> initial_stance(int foot) const;
  // Half-open [begin, end) step ranges of swing phases.
  std::vector<std::pair<int, int>> swing_windows(int foot) const;
  void validate() const;  // throws GaitGridMismatch
};

// Trot with 1 s cycles: the FL/RR diagonal swings during [0.25, 0.5), the
// FR/RL diagonal during [0.5, 0.75). duration must be a whole cycle count.
Gait make_trot(std::string id, double duration, double dt = 0.05);

// Rebuild a gait from a per-foot, per-step contact table (used to turn
// gait-free solutions into reusable gaits).
Gait gait_from_contact_table(std::string id, double dt,
                             const std::array<std::vector<bool>, kNumFeet>& table);

enum class SkillKind { Translation, Rotation };

// Symbolic skill: move between cell states guarded by a terrain fragment
// (required type per involved cell), executed with a named gait.
struct Skill {
  std::string id;
  SkillKind kind = SkillKind::Translation;
  CellIndex src, dst;
  int src_yaw = -1, dst_yaw = -1;
  std::map<int, int> fragment;  // linear cell index -> terrain type
  std::string gait_id;

  bool matches_terrain(const std::vector<int>& terrain) const;
};

// Grounded boundary pose for the trajectory layer.
struct PhysicalState {
  Vec3 base_pos = Vec3::Zero();
  Vec3 base_rpy = Vec3::Zero();  // roll, pitch, yaw; |roll|,|pitch| < pi/2
  std::array<Vec3, kNumFeet> feet{};
  Vec2 goal = Vec2::Zero();
};

Eigen::Matrix3d rotation_rpy(const Vec3& rpy);
Eigen::Matrix3d rotation_z(double yaw);

// Symbolic -> physical: base over the cell center at nominal stance height
// above the tallest supporting plane under the cell, feet at yaw-rotated
// nominal offsets resting on that plane.
PhysicalState ground(const InputState& s, const GridConfig& grid,
                     const std::vector<TerrainPolygon>& polys,
                     const RobotParams& robot);

// Physical -> symbolic: cells by half-open containment, heading snapped to
// the nearest yaw-set entry, terrain classified per cell.
InputState inverse_ground(const PhysicalState& phys,
                          const std::vector<TerrainPolygon>& polys,
                          const GridConfig& grid,
                          const ClassificationRules& rules);

struct MoveSet {
  std::vector<std::pair<int, int>> offsets;
  static MoveSet cardinal();
  static MoveSet with_diagonals();
};

enum class FragmentMode {
  SourceColumn,   // fragment covers src cell, dst cell and the src column
  SourceAndDest,  // fragment covers src and dst cells only
};

// All candidate skills for the given terrain states: one per (source cell,
// admissible move, distinct terrain fragment, gait); with a yaw set, 20
// rotational candidates per cell per gait (ordered heading pairs for 5 yaws).
// Moves standing on or stepping onto unsteppable terrain are dropped.
std::vector<Skill> enumerate_candidate_skills(
    const GridConfig& grid, const std::vector<std::vector<int>>& terrain_states,
    const std::vector<Gait>& gaits, const ClassificationRules& rules,
    const MoveSet& moves = MoveSet::cardinal(),
    FragmentMode fragment_mode = FragmentMode::SourceColumn);

// Linear cell indices forming the fragment of a move.
std::vector<int> fragment_cells(const GridConfig& grid, CellIndex src,
                                CellIndex dst, FragmentMode mode);

bool type_is_steppable(int type, const ClassificationRules& rules);

// Homogeneous per-cell stand-in polygons for a terrain type, used when a
// skill is checked in isolation. Gap-family and obstacle cells produce none.
std::vector<TerrainPolygon> template_polygons(int type, const CellRect& cell,
                                              const ClassificationRules& rules,
                                              const std::string& id_prefix,
                                              double mu = 0.7);

// Templates for every cell of a terrain fragment.
std::vector<TerrainPolygon> fragment_template_polygons(
    const std::map<int, int>& fragment, const GridConfig& grid,
    const ClassificationRules& rules, double mu = 0.7);

}  // namespace locoplan
