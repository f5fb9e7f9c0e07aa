#include "locoplan/gr1.hpp"

#include <algorithm>
#include <optional>
#include <ostream>

namespace locoplan {

const Proposition* GR1Spec::find(int id) const {
  for (const auto& p : inputs)
    if (p.id == id) return &p;
  for (const auto& p : outputs)
    if (p.id == id) return &p;
  return nullptr;
}

const Proposition* GR1Spec::find_input(const std::string& name) const {
  for (const auto& p : inputs)
    if (p.name == name) return &p;
  return nullptr;
}

const Proposition* GR1Spec::find_output(const std::string& name) const {
  for (const auto& p : outputs)
    if (p.name == name) return &p;
  return nullptr;
}

bool GR1Spec::is_output(int id) const {
  for (const auto& p : outputs)
    if (p.id == id) return true;
  return false;
}

int terrain_bits_per_cell(int n_t) {
  int bits = 0;
  while ((1 << bits) < n_t) ++bits;
  return bits;
}

std::vector<std::vector<bool>> int_terrain_to_bits(const std::vector<int>& values,
                                                   int n_t) {
  const int bits = terrain_bits_per_cell(n_t);
  std::vector<std::vector<bool>> out;
  out.reserve(values.size());
  for (int v : values) {
    if (v < 0 || v >= n_t)
      throw ValueOutOfRange("terrain value " + std::to_string(v) +
                            " outside [0, " + std::to_string(n_t) + ")");
    std::vector<bool> b(static_cast<size_t>(bits));
    for (int k = 0; k < bits; ++k) b[static_cast<size_t>(k)] = (v >> k) & 1;
    out.push_back(std::move(b));
  }
  return out;
}

namespace {

Literal lit(int prop, bool value = true, bool primed = false) {
  return Literal{prop, !value, primed};
}

struct PropTable {
  // robot/request coordinate props by (axis, value); terrain by (cell, bit)
  std::map<std::pair<int, int>, int> robot, request;
  std::map<std::pair<int, int>, int> terrain;
};

PropTable index_props(const GR1Spec& spec) {
  PropTable t;
  for (const auto& p : spec.inputs) {
    if (p.kind == PropKind::RobotIn) t.robot[{p.axis, p.value}] = p.id;
    if (p.kind == PropKind::RequestIn) t.request[{p.axis, p.value}] = p.id;
    if (p.kind == PropKind::TerrainIn) t.terrain[{p.cell, p.bit}] = p.id;
  }
  return t;
}

// Precondition literals of a skill at one time index (primed or not):
// source cell, source heading when modeled, and the terrain fragment bits.
Cube skill_pre_cube(const Skill& sk, const PropTable& props, int bits,
                    bool primed) {
  Cube cube;
  cube.lits.push_back(lit(props.robot.at({0, sk.src.ix}), true, primed));
  cube.lits.push_back(lit(props.robot.at({1, sk.src.iy}), true, primed));
  if (sk.src_yaw >= 0 && props.robot.count({2, sk.src_yaw}))
    cube.lits.push_back(lit(props.robot.at({2, sk.src_yaw}), true, primed));
  for (const auto& [cell, type] : sk.fragment)
    for (int k = 0; k < bits; ++k)
      cube.lits.push_back(
          lit(props.terrain.at({cell, k}), (type >> k) & 1, primed));
  return cube;
}

Cube skill_post_cube(const Skill& sk, const PropTable& props) {
  Cube cube;
  cube.lits.push_back(lit(props.robot.at({0, sk.dst.ix}), true, true));
  cube.lits.push_back(lit(props.robot.at({1, sk.dst.iy}), true, true));
  if (sk.dst_yaw >= 0 && props.robot.count({2, sk.dst_yaw}))
    cube.lits.push_back(lit(props.robot.at({2, sk.dst_yaw}), true, true));
  return cube;
}

}  // namespace

GR1Spec encode_specification(const std::vector<Skill>& skills,
                             const GridConfig& grid,
                             const ClassificationRules& rules) {
  {
    std::set<std::string> ids;
    for (const auto& sk : skills)
      if (!ids.insert(sk.id).second)
        throw DuplicateSkillId("duplicate skill id: " + sk.id);
  }

  GR1Spec spec;
  auto add_input = [&](std::string name, PropKind kind, int axis, int value,
                       int cell, int bit) {
    Proposition p;
    p.id = spec.next_prop_id++;
    p.name = std::move(name);
    p.kind = kind;
    p.axis = axis;
    p.value = value;
    p.cell = cell;
    p.bit = bit;
    spec.inputs.push_back(std::move(p));
  };

  for (int i = 0; i < grid.nx; ++i)
    add_input("rx" + std::to_string(i), PropKind::RobotIn, 0, i, -1, -1);
  for (int j = 0; j < grid.ny; ++j)
    add_input("ry" + std::to_string(j), PropKind::RobotIn, 1, j, -1, -1);
  for (size_t k = 0; k < grid.yaw_set_deg.size(); ++k)
    add_input("rh" + std::to_string(k), PropKind::RobotIn, 2,
              static_cast<int>(k), -1, -1);
  for (int i = 0; i < grid.nx; ++i)
    add_input("qx" + std::to_string(i), PropKind::RequestIn, 0, i, -1, -1);
  for (int j = 0; j < grid.ny; ++j)
    add_input("qy" + std::to_string(j), PropKind::RequestIn, 1, j, -1, -1);

  const int bits = terrain_bits_per_cell(rules.num_types());
  for (int cell = 0; cell < grid.cells(); ++cell)
    for (int k = 0; k < bits; ++k)
      add_input("t" + std::to_string(cell) + "b" + std::to_string(k),
                PropKind::TerrainIn, -1, -1, cell, k);

  for (const auto& sk : skills) {
    Proposition p;
    p.id = spec.next_prop_id++;
    p.name = sk.id;
    p.kind = PropKind::SkillOut;
    spec.outputs.push_back(std::move(p));
    spec.phi_s_init[spec.outputs.back().id] = false;
  }

  const PropTable props = index_props(spec);

  for (size_t i = 0; i < skills.size(); ++i) {
    const Skill& sk = skills[i];
    const int out = spec.outputs[i].id;
    for (const auto& [cell, type] : sk.fragment)
      if (type >= rules.num_types())
        throw ValueOutOfRange("skill " + sk.id + " fragment type out of range");

    // assumption: executing the skill from its precondition lands the robot
    // on the skill's target cell (and heading); untouched coordinates are
    // pinned too, so translational and rotational frames both hold
    Clause assume;
    assume.antecedent = skill_pre_cube(sk, props, bits, false);
    assume.antecedent.lits.insert(assume.antecedent.lits.begin(), lit(out));
    assume.consequent = {skill_post_cube(sk, props)};
    spec.phi_e_skill.push_back(std::move(assume));

    // guarantee: the skill may only be selected where its precondition holds
    Clause guard;
    guard.antecedent.lits.push_back(lit(out, true, true));
    guard.consequent = {skill_pre_cube(sk, props, bits, true)};
    spec.phi_s_skill.push_back(std::move(guard));
  }

  // one skill at a time
  for (size_t i = 0; i < spec.outputs.size(); ++i)
    for (size_t j = i + 1; j < spec.outputs.size(); ++j) {
      Clause mutex;
      mutex.antecedent.lits.push_back(lit(spec.outputs[i].id, true, true));
      mutex.antecedent.lits.push_back(lit(spec.outputs[j].id, true, true));
      spec.phi_s_hard.push_back(std::move(mutex));
    }

  // terrain and request never change during execution
  auto freeze = [&](int prop) {
    for (bool v : {true, false}) {
      Clause c;
      c.antecedent.lits.push_back(lit(prop, v));
      c.consequent = {Cube{{lit(prop, v, true)}}};
      spec.phi_e_hard.push_back(std::move(c));
    }
  };
  for (const auto& p : spec.inputs)
    if (p.kind == PropKind::RequestIn || p.kind == PropKind::TerrainIn)
      freeze(p.id);

  // robot inputs stay put when no skill is active
  for (const auto& p : spec.inputs) {
    if (p.kind != PropKind::RobotIn) continue;
    for (bool v : {true, false}) {
      Clause c;
      for (const auto& o : spec.outputs) c.antecedent.lits.push_back(lit(o.id, false));
      c.antecedent.lits.push_back(lit(p.id, v));
      c.consequent = {Cube{{lit(p.id, v, true)}}};
      spec.phi_e_hard.push_back(std::move(c));
    }
  }

  // justice: trivial for the environment, "robot cell equals request cell"
  // for the system
  spec.phi_e_live.push_back(GoalFormula{Cube{}});
  GoalFormula goal;
  for (int i = 0; i < grid.nx; ++i)
    for (int j = 0; j < grid.ny; ++j) {
      Cube c;
      c.lits.push_back(lit(props.robot.at({0, i})));
      c.lits.push_back(lit(props.robot.at({1, j})));
      c.lits.push_back(lit(props.request.at({0, i})));
      c.lits.push_back(lit(props.request.at({1, j})));
      goal.push_back(std::move(c));
    }
  spec.phi_s_live.push_back(std::move(goal));
  return spec;
}

void set_initial_state(GR1Spec& spec, const InputState& state,
                       const GridConfig& grid, const ClassificationRules& rules) {
  if (!grid.in_bounds(state.robot) || !grid.in_bounds(state.request))
    throw OutOfGrid("initial state references a cell outside the grid");
  const auto bits = int_terrain_to_bits(state.terrain, rules.num_types());
  if (static_cast<int>(state.terrain.size()) != grid.cells())
    throw ValueOutOfRange("terrain size disagrees with the grid");
  spec.phi_e_init.clear();
  for (const auto& p : spec.inputs) {
    switch (p.kind) {
      case PropKind::RobotIn:
        if (p.axis == 0) spec.phi_e_init[p.id] = p.value == state.robot.ix;
        if (p.axis == 1) spec.phi_e_init[p.id] = p.value == state.robot.iy;
        if (p.axis == 2) spec.phi_e_init[p.id] = p.value == state.yaw_idx;
        break;
      case PropKind::RequestIn:
        if (p.axis == 0) spec.phi_e_init[p.id] = p.value == state.request.ix;
        if (p.axis == 1) spec.phi_e_init[p.id] = p.value == state.request.iy;
        break;
      case PropKind::TerrainIn:
        spec.phi_e_init[p.id] =
            bits[static_cast<size_t>(p.cell)][static_cast<size_t>(p.bit)];
        break;
      case PropKind::SkillOut:
        break;
    }
  }
}

std::pair<std::set<int>, std::set<int>> terrain_request_substitution(
    const GR1Spec& spec, const std::vector<int>& terrain, CellIndex request,
    const GridConfig& grid, const ClassificationRules& rules) {
  if (!grid.in_bounds(request))
    throw OutOfGrid("request cell outside the grid");
  const auto bits = int_terrain_to_bits(terrain, rules.num_types());
  std::set<int> s_true, s_false;
  for (const auto& p : spec.inputs) {
    if (p.kind == PropKind::TerrainIn) {
      if (p.cell >= static_cast<int>(bits.size()))
        throw ValueOutOfRange("terrain vector shorter than the grid");
      (bits[size_t(p.cell)][size_t(p.bit)] ? s_true : s_false).insert(p.id);
    } else if (p.kind == PropKind::RequestIn) {
      const bool v = p.axis == 0 ? p.value == request.ix : p.value == request.iy;
      (v ? s_true : s_false).insert(p.id);
    }
  }
  return {std::move(s_true), std::move(s_false)};
}

namespace {

enum class CubeFold { False, Simplified };

// Removes literals decided by sigma; reports False if any literal fails.
CubeFold fold_cube(Cube& cube, const std::map<int, bool>& sigma) {
  std::vector<Literal> kept;
  for (const Literal& l : cube.lits) {
    const auto it = sigma.find(l.prop);
    if (it == sigma.end()) {
      kept.push_back(l);
      continue;
    }
    if (it->second == l.negated) return CubeFold::False;  // literal is false
  }
  cube.lits = std::move(kept);
  return CubeFold::Simplified;
}

// nullopt = clause became trivially true and can be dropped
std::optional<Clause> fold_clause(const Clause& in,
                                  const std::map<int, bool>& sigma) {
  Clause out;
  out.antecedent = in.antecedent;
  if (fold_cube(out.antecedent, sigma) == CubeFold::False) return std::nullopt;
  for (const Cube& c : in.consequent) {
    Cube folded = c;
    if (fold_cube(folded, sigma) == CubeFold::False) continue;
    if (folded.lits.empty()) return std::nullopt;  // consequent true
    out.consequent.push_back(std::move(folded));
  }
  return out;
}

void fold_clause_list(std::vector<Clause>& list,
                      const std::map<int, bool>& sigma) {
  std::vector<Clause> kept;
  for (const Clause& c : list)
    if (auto folded = fold_clause(c, sigma)) kept.push_back(std::move(*folded));
  list = std::move(kept);
}

void fold_goals(std::vector<GoalFormula>& goals,
                const std::map<int, bool>& sigma) {
  for (GoalFormula& goal : goals) {
    GoalFormula kept;
    bool truth = false;
    for (const Cube& c : goal) {
      Cube folded = c;
      if (fold_cube(folded, sigma) == CubeFold::False) continue;
      if (folded.lits.empty()) truth = true;
      kept.push_back(std::move(folded));
    }
    goal = truth ? GoalFormula{Cube{}} : std::move(kept);
  }
}

void apply_substitution(GR1Spec& spec, const std::map<int, bool>& sigma) {
  fold_clause_list(spec.phi_e_skill, sigma);
  fold_clause_list(spec.phi_s_skill, sigma);
  fold_clause_list(spec.phi_e_hard, sigma);
  fold_clause_list(spec.phi_s_hard, sigma);
  fold_goals(spec.phi_e_live, sigma);
  fold_goals(spec.phi_s_live, sigma);
  for (const auto& [id, v] : sigma) {
    spec.phi_e_init.erase(id);
    spec.phi_s_init.erase(id);
  }
  auto gone = [&](const Proposition& p) { return sigma.count(p.id) > 0; };
  spec.inputs.erase(std::remove_if(spec.inputs.begin(), spec.inputs.end(), gone),
                    spec.inputs.end());
  spec.outputs.erase(
      std::remove_if(spec.outputs.begin(), spec.outputs.end(), gone),
      spec.outputs.end());
}

}  // namespace

GR1Spec partial_evaluate(const GR1Spec& spec, const std::set<int>& s_true,
                         const std::set<int>& s_false) {
  std::map<int, bool> sigma;
  for (int id : s_true) sigma[id] = true;
  for (int id : s_false) {
    if (sigma.count(id))
      throw OverlappingSets("proposition " + std::to_string(id) +
                            " fixed both true and false");
    sigma[id] = false;
  }
  for (const auto& [id, v] : sigma) {
    const Proposition* p = spec.find(id);
    if (!p) continue;  // substituted away earlier; idempotent no-op
    if (p->kind != PropKind::TerrainIn && p->kind != PropKind::RequestIn)
      throw InvalidSubstitution("proposition " + p->name +
                                " is not a terrain or request input");
  }

  GR1Spec out = spec;
  apply_substitution(out, sigma);

  // a skill whose precondition folded to false can never be selected
  std::map<int, bool> dead;
  for (const Clause& c : out.phi_s_skill) {
    if (c.antecedent.lits.size() != 1 || !c.consequent.empty()) continue;
    const Literal& l = c.antecedent.lits.front();
    if (!l.negated && l.primed && out.is_output(l.prop)) dead[l.prop] = false;
  }
  if (!dead.empty()) apply_substitution(out, dead);
  return out;
}

bool eval_cube(const Cube& cube, const Valuation& now, const Valuation* next) {
  for (const Literal& l : cube.lits) {
    const Valuation& v = l.primed ? *next : now;
    const auto it = v.find(l.prop);
    if (it == v.end())
      throw std::out_of_range("valuation missing proposition " +
                              std::to_string(l.prop));
    if (it->second == l.negated) return false;
  }
  return true;
}

bool eval_clause(const Clause& clause, const Valuation& now,
                 const Valuation* next) {
  if (!eval_cube(clause.antecedent, now, next)) return true;
  for (const Cube& c : clause.consequent)
    if (eval_cube(c, now, next)) return true;
  return false;
}

namespace {

bool clause_primed(const Clause& c) {
  for (const Literal& l : c.antecedent.lits)
    if (l.primed) return true;
  for (const Cube& cube : c.consequent)
    for (const Literal& l : cube.lits)
      if (l.primed) return true;
  return false;
}

bool check_init(const std::map<int, bool>& init, const Valuation& v) {
  for (const auto& [id, val] : init) {
    const auto it = v.find(id);
    if (it == v.end() || it->second != val) return false;
  }
  return true;
}

bool check_list(const std::vector<Clause>& clauses,
                const std::vector<Valuation>& trace) {
  for (size_t t = 0; t < trace.size(); ++t) {
    const Valuation* next = t + 1 < trace.size() ? &trace[t + 1] : nullptr;
    for (const Clause& c : clauses) {
      if (!next && clause_primed(c)) continue;
      if (!eval_clause(c, trace[t], next)) return false;
    }
  }
  return true;
}

}  // namespace

TraceVerdict check_trace_safety(const GR1Spec& spec,
                                const std::vector<Valuation>& trace) {
  TraceVerdict v;
  if (trace.empty()) return v;
  v.env_init = check_init(spec.phi_e_init, trace.front());
  v.sys_init = check_init(spec.phi_s_init, trace.front());
  v.env_safe = check_list(spec.phi_e_skill, trace) &&
               check_list(spec.phi_e_hard, trace);
  v.sys_safe = check_list(spec.phi_s_skill, trace) &&
               check_list(spec.phi_s_hard, trace);
  return v;
}

namespace {

void write_literal(std::ostream& os, const GR1Spec& spec, const Literal& l) {
  const Proposition* p = spec.find(l.prop);
  const std::string name = p ? p->name : "#" + std::to_string(l.prop);
  if (l.negated) os << "(not ";
  if (l.primed) os << "(next " << name << ")";
  else os << name;
  if (l.negated) os << ")";
}

void write_cube(std::ostream& os, const GR1Spec& spec, const Cube& cube) {
  if (cube.lits.empty()) {
    os << "true";
    return;
  }
  if (cube.lits.size() == 1) {
    write_literal(os, spec, cube.lits.front());
    return;
  }
  os << "(and";
  for (const Literal& l : cube.lits) {
    os << ' ';
    write_literal(os, spec, l);
  }
  os << ')';
}

void write_dnf(std::ostream& os, const GR1Spec& spec,
               const std::vector<Cube>& cubes) {
  if (cubes.empty()) {
    os << "false";
    return;
  }
  if (cubes.size() == 1) {
    write_cube(os, spec, cubes.front());
    return;
  }
  os << "(or";
  for (const Cube& c : cubes) {
    os << ' ';
    write_cube(os, spec, c);
  }
  os << ')';
}

void write_clauses(std::ostream& os, const GR1Spec& spec,
                   const std::vector<Clause>& clauses, const char* tag) {
  for (const Clause& c : clauses) {
    os << tag << " (imp ";
    write_cube(os, spec, c.antecedent);
    os << ' ';
    write_dnf(os, spec, c.consequent);
    os << ")\n";
  }
}

void write_init(std::ostream& os, const GR1Spec& spec,
                const std::map<int, bool>& init, const char* tag) {
  if (init.empty()) {
    os << tag << " true\n";
    return;
  }
  os << tag << " (and";
  for (const auto& [id, val] : init) {
    os << ' ';
    write_literal(os, spec, Literal{id, !val, false});
  }
  os << ")\n";
}

}  // namespace

void dump_spec(const GR1Spec& spec, std::ostream& os) {
  for (const auto& p : spec.inputs) os << "# input " << p.name << "\n";
  for (const auto& p : spec.outputs) os << "# output " << p.name << "\n";
  write_init(os, spec, spec.phi_e_init, "init-env");
  write_init(os, spec, spec.phi_s_init, "init-sys");
  write_clauses(os, spec, spec.phi_e_skill, "env-skill");
  write_clauses(os, spec, spec.phi_e_hard, "env-hard");
  write_clauses(os, spec, spec.phi_s_skill, "sys-skill");
  write_clauses(os, spec, spec.phi_s_hard, "sys-hard");
  for (const auto& g : spec.phi_e_live) {
    os << "live-env ";
    write_dnf(os, spec, g);
    os << "\n";
  }
  for (const auto& g : spec.phi_s_live) {
    os << "live-sys ";
    write_dnf(os, spec, g);
    os << "\n";
  }
}

}  // namespace locoplan
