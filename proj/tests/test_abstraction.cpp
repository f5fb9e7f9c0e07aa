#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "locoplan/abstraction.hpp"
#include "support/testutil.hpp"

using namespace locoplan;
using testutil::Rng;

namespace {

GridConfig grid3x3() {
  GridConfig g;
  g.origin = Vec2(0, 0);
  g.cell_size = 0.8;
  g.nx = 3;
  g.ny = 3;
  return g;
}

}  // namespace

TEST_CASE("cells are half-open, boundary points go to the larger index") {
  const auto g = grid3x3();
  CHECK(g.locate({0.0, 0.0}) == CellIndex{0, 0});
  CHECK(g.locate({0.4, 0.4}) == CellIndex{0, 0});
  CHECK(g.locate({0.8, 0.0}) == CellIndex{1, 0});
  CHECK(g.locate({0.8, 0.8}) == CellIndex{1, 1});
  CHECK(g.locate({2.4 - 1e-9, 2.4 - 1e-9}) == CellIndex{2, 2});
  CHECK_THROWS_AS(g.locate({2.5, 1.0}), OutOfGrid);
  CHECK_THROWS_AS(g.locate({-1e-9, 0.0}), OutOfGrid);

  // with a binary-exact cell size even the outer boundary is sharp
  GridConfig h;
  h.cell_size = 0.5;
  h.nx = 3;
  h.ny = 3;
  CHECK(h.locate({1.0, 1.0}) == CellIndex{2, 2});
  CHECK_THROWS_AS(h.locate({1.5, 1.0}), OutOfGrid);
}

TEST_CASE("cell rects, centers and linear indexing round trip") {
  const auto g = grid3x3();
  const auto r = g.cell_rect({1, 2});
  CHECK(r.xmin == doctest::Approx(0.8));
  CHECK(r.ymin == doctest::Approx(1.6));
  CHECK(r.xmax == doctest::Approx(1.6));
  CHECK(r.ymax == doctest::Approx(2.4));
  CHECK(g.cell_center({0, 0}).x() == doctest::Approx(0.4));
  CHECK(g.cell_center({0, 0}).y() == doctest::Approx(0.4));
  for (int idx = 0; idx < g.cells(); ++idx)
    CHECK(g.linear(g.from_linear(idx)) == idx);
  CHECK(g.linear({1, 2}) == 7);
}

TEST_CASE("trot schedule tiles the time grid") {
  const auto trot = make_trot("trot2", 2.0, 0.05);
  CHECK(trot.duration() == doctest::Approx(2.0));
  CHECK(trot.time_steps() == 40);
  CHECK_NOTHROW(trot.validate());

  // FL swings during [0.25,0.5) of each cycle, FR during [0.5,0.75)
  const auto w0 = trot.swing_windows(0);
  REQUIRE(w0.size() == 2);
  CHECK(w0[0] == std::pair<int, int>{5, 10});
  CHECK(w0[1] == std::pair<int, int>{25, 30});
  const auto w1 = trot.swing_windows(1);
  REQUIRE(w1.size() == 2);
  CHECK(w1[0] == std::pair<int, int>{10, 15});
  CHECK(w1[1] == std::pair<int, int>{30, 35});
  CHECK(trot.swing_windows(3) == w0);  // diagonal pairs move together
  CHECK(trot.swing_windows(2) == w1);

  CHECK(trot.in_contact(0, 0));
  CHECK_FALSE(trot.in_contact(0, 7));
  CHECK(trot.in_contact(0, 12));
  for (int foot = 0; foot < kNumFeet; ++foot) {
    const auto table = trot.contact_table(foot);
    REQUIRE(table.size() == 40);
    for (int t = 0; t < 40; ++t)
      CHECK(trot.in_contact(foot, t) == (table[size_t(t)] == 1));
  }

  // adjacent stance phases merge into one support window
  const auto runs = trot.stance_after_touchdown(0);
  REQUIRE(runs.size() == 2);
  CHECK(runs[0].front() == 10);
  CHECK(runs[0].back() == 24);
  CHECK(runs[1].front() == 30);
  CHECK(runs[1].back() == 39);
  const auto init = trot.initial_stance(0);
  CHECK(init.size() == 5);
  CHECK(init.front() == 0);
  CHECK(init.back() == 4);
}

TEST_CASE("footsteps count touchdowns summed over feet") {
  CHECK(make_trot("t1", 1.0).footstep_count() == 4);
  CHECK(make_trot("t2", 2.0).footstep_count() == 8);
  CHECK(make_trot("t3", 3.0).footstep_count() == 12);
}

TEST_CASE("gait validation rejects off-grid phases") {
  CHECK_THROWS_AS(make_trot("bad", 1.5), GaitGridMismatch);

  Gait g;
  g.id = "offgrid";
  g.dt = 0.25;
  for (int foot = 0; foot < kNumFeet; ++foot)
    g.phases[foot] = {{true, 0.3}, {false, 0.7}};
  CHECK_THROWS_AS(g.validate(), GaitGridMismatch);

  Gait h;
  h.id = "uneven";
  h.dt = 0.05;
  for (int foot = 0; foot < kNumFeet; ++foot) h.phases[foot] = {{true, 1.0}};
  h.phases[2] = {{true, 0.5}};
  CHECK_THROWS_AS(h.validate(), GaitGridMismatch);
}

TEST_CASE("contact tables rebuild into the same gait") {
  const auto trot = make_trot("trot2", 2.0, 0.05);
  std::array<std::vector<bool>, kNumFeet> table;
  for (int foot = 0; foot < kNumFeet; ++foot)
    for (int v : trot.contact_table(foot)) table[size_t(foot)].push_back(v == 1);
  const auto rebuilt = gait_from_contact_table("rebuilt", 0.05, table);
  CHECK(rebuilt.time_steps() == trot.time_steps());
  CHECK(rebuilt.footstep_count() == trot.footstep_count());
  for (int foot = 0; foot < kNumFeet; ++foot)
    CHECK(rebuilt.contact_table(foot) == trot.contact_table(foot));
  // phase runs are maximal, so rebuilt phases merge the back-to-back stances
  // (six authored phases collapse to five maximal runs)
  CHECK(rebuilt.phases[0].size() == 5);
  CHECK(trot.phases[0].size() == 6);
}

TEST_CASE("grounding puts the base at stance height over the cell center") {
  const auto g = grid3x3();
  const auto rp = RobotParams::go2();
  std::vector<TerrainPolygon> flat{
      testutil::rect_poly("ground", 0, 0, 2.4, 2.4, 0.0)};

  InputState s;
  s.robot = {1, 1};
  s.request = {0, 2};
  s.terrain.assign(9, kFlat);
  const auto phys = ground(s, g, flat, rp);
  CHECK(phys.base_pos.x() == doctest::Approx(1.2));
  CHECK(phys.base_pos.y() == doctest::Approx(1.2));
  CHECK(phys.base_pos.z() == doctest::Approx(0.29));
  CHECK(phys.base_rpy.norm() == doctest::Approx(0.0));
  CHECK(phys.goal.x() == doctest::Approx(0.4));
  CHECK(phys.goal.y() == doctest::Approx(2.0));
  for (int foot = 0; foot < kNumFeet; ++foot)
    CHECK(phys.feet[size_t(foot)].z() == doctest::Approx(0.0));
  CHECK(phys.feet[0].x() == doctest::Approx(1.2 + 0.1805));
  CHECK(phys.feet[0].y() == doctest::Approx(1.2 + 0.1308));
}

TEST_CASE("grounding tracks raised support") {
  // stones at +0.12 under the robot cell lift the whole stance
  auto g = grid3x3();
  const auto rp = RobotParams::go2();
  std::vector<TerrainPolygon> stones{
      testutil::rect_poly("s0", 0.1, 0.1, 0.35, 0.35, 0.12),
      testutil::rect_poly("s1", 0.45, 0.45, 0.7, 0.7, 0.12)};
  InputState s;
  s.robot = {0, 0};
  s.request = {2, 2};
  s.terrain.assign(9, kFlat);
  const auto phys = ground(s, g, stones, rp);
  CHECK(phys.base_pos.z() == doctest::Approx(0.41));
  for (int foot = 0; foot < kNumFeet; ++foot)
    CHECK(phys.feet[size_t(foot)].z() == doctest::Approx(0.12));
}

TEST_CASE("grounding rotates the stance by the heading") {
  auto g = grid3x3();
  g.yaw_set_deg = {0, 90, 180, 270};
  const auto rp = RobotParams::go2();
  std::vector<TerrainPolygon> flat{
      testutil::rect_poly("ground", 0, 0, 2.4, 2.4, 0.0)};
  InputState s;
  s.robot = {0, 0};
  s.yaw_idx = 1;
  s.request = {0, 0};
  s.terrain.assign(9, kFlat);
  const auto phys = ground(s, g, flat, rp);
  CHECK(phys.base_rpy.z() == doctest::Approx(M_PI / 2));
  CHECK(phys.feet[0].x() == doctest::Approx(0.4 - 0.1308));
  CHECK(phys.feet[0].y() == doctest::Approx(0.4 + 0.1805));

  InputState bad = s;
  bad.yaw_idx = 7;
  CHECK_THROWS_AS(ground(bad, g, flat, rp), OutOfGrid);
}

TEST_CASE("inverse grounding recovers cells, heading and terrain") {
  GridConfig g;
  g.cell_size = 0.8;
  g.nx = 5;
  g.ny = 5;
  const ClassificationRules rules;

  std::vector<TerrainPolygon> flat{
      testutil::rect_poly("ground", 0, 0, 4.0, 4.0, 0.0)};
  PhysicalState phys;
  phys.base_pos = Vec3(0.8, 0.0, 0.29);  // on the shared boundary
  phys.goal = Vec2(3.99, 3.99);
  auto s = inverse_ground(phys, flat, g, rules);
  CHECK(s.robot == CellIndex{1, 0});
  CHECK(s.request == CellIndex{4, 4});
  CHECK(s.yaw_idx == -1);
  REQUIRE(s.terrain.size() == 25);
  for (int t : s.terrain) CHECK(t == kFlat);

  g.yaw_set_deg = {0, 45, 90, 135, 180};
  phys.base_rpy = Vec3(0, 0, 350.0 * M_PI / 180.0);  // wraps to -10, snaps to 0
  s = inverse_ground(phys, flat, g, rules);
  CHECK(s.yaw_idx == 0);
  phys.base_rpy.z() = 100.0 * M_PI / 180.0;
  CHECK(inverse_ground(phys, flat, g, rules).yaw_idx == 2);
}

TEST_CASE("inverse grounding classifies a stone column cell by cell") {
  const auto g = grid3x3();
  const ClassificationRules rules;
  std::map<int, int> fragment;
  for (int idx = 0; idx < 9; ++idx) {
    const auto c = g.from_linear(idx);
    fragment[idx] = c.ix == 1 ? kDenseStone : kFlat;
  }
  const auto polys = fragment_template_polygons(fragment, g, rules);

  PhysicalState phys;
  phys.base_pos = Vec3(1.2, 1.2, 0.29);
  phys.goal = Vec2(2.0, 2.0);
  const auto s = inverse_ground(phys, polys, g, rules);
  CHECK(s.robot == CellIndex{1, 1});
  for (int idx = 0; idx < 9; ++idx)
    CHECK(s.terrain[size_t(idx)] == fragment[idx]);
}

TEST_CASE("ground and inverse ground agree on random symbolic states") {
  GridConfig g;
  g.origin = Vec2(-1.6, -1.6);
  g.cell_size = 0.8;
  g.nx = 4;
  g.ny = 4;
  g.yaw_set_deg = {0, 45, 90, 135, 180};
  const auto rp = RobotParams::go2();
  const ClassificationRules rules;
  std::vector<TerrainPolygon> flat{
      testutil::rect_poly("ground", -1.6, -1.6, 1.6, 1.6, 0.0)};

  Rng rng(20240816u);
  for (int trial = 0; trial < 100; ++trial) {
    InputState s;
    s.robot = {rng.uniform_int(0, 3), rng.uniform_int(0, 3)};
    s.request = {rng.uniform_int(0, 3), rng.uniform_int(0, 3)};
    s.yaw_idx = rng.uniform_int(0, 4);
    s.terrain.assign(16, kFlat);
    const auto phys = ground(s, g, flat, rp);
    const auto back = inverse_ground(phys, flat, g, rules);
    CHECK(back == s);
  }
}

TEST_CASE("candidate skills cover every admissible cardinal move once") {
  const auto g = grid3x3();
  const ClassificationRules rules;
  const std::vector<std::vector<int>> flat_state{std::vector<int>(9, kFlat)};
  const std::vector<Gait> gaits{make_trot("trot2", 2.0)};

  auto skills = enumerate_candidate_skills(g, flat_state, gaits, rules);
  CHECK(skills.size() == 24);
  std::set<std::string> ids;
  std::set<std::pair<int, int>> edges;
  for (const auto& sk : skills) {
    CHECK(sk.kind == SkillKind::Translation);
    CHECK(sk.gait_id == "trot2");
    CHECK(std::abs(sk.src.ix - sk.dst.ix) + std::abs(sk.src.iy - sk.dst.iy) == 1);
    ids.insert(sk.id);
    edges.insert({g.linear(sk.src), g.linear(sk.dst)});
    CHECK(sk.matches_terrain(flat_state[0]));
  }
  CHECK(ids.size() == 24);
  CHECK(edges.size() == 24);

  // feeding the same terrain twice must not duplicate candidates
  const std::vector<std::vector<int>> twice{flat_state[0], flat_state[0]};
  CHECK(enumerate_candidate_skills(g, twice, gaits, rules).size() == 24);

  GridConfig unit;
  unit.nx = 1;
  unit.ny = 1;
  const std::vector<std::vector<int>> one{std::vector<int>(1, kFlat)};
  CHECK(enumerate_candidate_skills(unit, one, gaits, rules).empty());
}

TEST_CASE("fragments pin the source column and the target cell") {
  const auto g = grid3x3();
  CHECK(fragment_cells(g, {1, 1}, {2, 1}, FragmentMode::SourceColumn) ==
        std::vector<int>{1, 4, 5, 7});
  CHECK(fragment_cells(g, {1, 1}, {2, 1}, FragmentMode::SourceAndDest) ==
        std::vector<int>{4, 5});

  const ClassificationRules rules;
  std::vector<int> terrain(9, kFlat);
  terrain[1] = kDenseStone;
  const std::vector<Gait> gaits{make_trot("trot2", 2.0)};
  const auto skills =
      enumerate_candidate_skills(g, {terrain}, gaits, rules);
  const auto it = std::find_if(skills.begin(), skills.end(), [&](const Skill& sk) {
    return sk.src == CellIndex{1, 1} && sk.dst == CellIndex{2, 1};
  });
  REQUIRE(it != skills.end());
  CHECK(it->fragment.at(1) == kDenseStone);
  CHECK(it->fragment.at(4) == kFlat);
  CHECK(it->fragment.at(5) == kFlat);
  CHECK(it->fragment.count(0) == 0);
  CHECK(it->matches_terrain(terrain));
  std::vector<int> other = terrain;
  other[1] = kFlat;
  CHECK_FALSE(it->matches_terrain(other));
}

TEST_CASE("unsteppable cells drop the moves that touch them") {
  const auto g = grid3x3();
  const ClassificationRules rules;
  std::vector<int> terrain(9, kFlat);
  for (int y = 0; y < 3; ++y) terrain[size_t(g.linear({1, y}))] = kObstacle;
  const std::vector<Gait> gaits{make_trot("trot2", 2.0)};
  const auto skills = enumerate_candidate_skills(g, {terrain}, gaits, rules);
  // only the vertical edges of the outer columns survive
  CHECK(skills.size() == 8);
  for (const auto& sk : skills) {
    CHECK(sk.src.ix != 1);
    CHECK(sk.dst.ix != 1);
    CHECK(sk.src.ix == sk.dst.ix);
  }
}

TEST_CASE("heading sets add ordered rotation pairs per cell") {
  auto g = grid3x3();
  g.yaw_set_deg = {0, 45, 90, 135, 180};
  const ClassificationRules rules;
  const std::vector<std::vector<int>> flat_state{std::vector<int>(9, kFlat)};
  const std::vector<Gait> gaits{make_trot("trot2", 2.0)};
  const auto skills = enumerate_candidate_skills(g, flat_state, gaits, rules);

  int rotations = 0, translations = 0;
  for (const auto& sk : skills) {
    if (sk.kind == SkillKind::Rotation) {
      ++rotations;
      CHECK(sk.src == sk.dst);
      CHECK(sk.src_yaw != sk.dst_yaw);
      CHECK(sk.fragment.size() == 1);
    } else {
      ++translations;
      CHECK(sk.src_yaw == sk.dst_yaw);
    }
  }
  CHECK(rotations == 9 * 20);
  CHECK(translations == 24 * 5);
}

TEST_CASE("templates classify back to their own type") {
  CellRect cell{0, 0, 0.8, 0.8};

  ClassificationRules rules;  // unstructured
  for (int type : {kFlat, kHigh, kLow, kDenseStone, kSparseStone}) {
    const auto polys = template_polygons(type, cell, rules, "t");
    CHECK(classify_cell(polys, cell, rules) == type);
  }
  CHECK(template_polygons(kGap, cell, rules, "t").empty());
  CHECK(template_polygons(kObstacle, cell, rules, "t").empty());
  CHECK(classify_cell({}, cell, rules) == kGap);

  ClassificationRules rebar;
  rebar.family = TerrainFamily::Rebar;
  for (int type = 0; type < rebar.num_types(); ++type) {
    const auto polys = template_polygons(type, cell, rebar, "r");
    CHECK(classify_cell(polys, cell, rebar) == type);
  }
  CHECK(template_polygons(rebar.obstacle_type(), cell, rebar, "r").empty());
}

TEST_CASE("steppability by family") {
  ClassificationRules rules;
  for (int t : {kFlat, kHigh, kLow, kDenseStone, kSparseStone})
    CHECK(type_is_steppable(t, rules));
  for (int t : {kGap, kHighGap, kLowGap, kObstacle})
    CHECK_FALSE(type_is_steppable(t, rules));

  ClassificationRules rebar;
  rebar.family = TerrainFamily::Rebar;
  for (int t = 0; t < 15; ++t) CHECK(type_is_steppable(t, rebar));
  CHECK_FALSE(type_is_steppable(15, rebar));
}

TEST_CASE("fragment templates land inside their cells") {
  const auto g = grid3x3();
  const ClassificationRules rules;
  std::map<int, int> fragment{{0, kSparseStone}, {4, kFlat}, {8, kDenseStone}};
  const auto polys = fragment_template_polygons(fragment, g, rules);
  CHECK(polys.size() == 6);  // 4 stones + 1 slab + 1 slab
  std::set<std::string> ids;
  for (const auto& p : polys) ids.insert(p.id);
  CHECK(ids.size() == polys.size());
  for (const auto& p : polys) {
    bool inside_some = false;
    for (const auto& [cell, type] : fragment) {
      const auto rect = g.cell_rect(g.from_linear(cell));
      bool all = true;
      for (const auto& v : p.vertices)
        all = all && v.x() >= rect.xmin - 1e-9 && v.x() <= rect.xmax + 1e-9 &&
              v.y() >= rect.ymin - 1e-9 && v.y() <= rect.ymax + 1e-9;
      inside_some = inside_some || all;
    }
    CHECK(inside_some);
  }
}
