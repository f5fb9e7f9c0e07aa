#pragma once

#include <iosfwd>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "locoplan/abstraction.hpp"

namespace locoplan {

struct DuplicateSkillId : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct OverlappingSets : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ValueOutOfRange : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InvalidSubstitution : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class PropKind { RobotIn, RequestIn, TerrainIn, SkillOut };

// Boolean state variable. Robot and request cells use one proposition per
// coordinate value and axis (axis 0 = x, 1 = y, 2 = heading); terrain cells
// use ceil(log2 n_t) little-endian bits each; every skill is one output.
struct Proposition {
  int id = -1;
  std::string name;
  PropKind kind = PropKind::RobotIn;
  int axis = -1, value = -1;  // robot/request coordinates
  int cell = -1, bit = -1;    // terrain bit address
};

// Literal over a proposition, optionally negated, optionally under the
// next-step operator.
struct Literal {
  int prop = -1;
  bool negated = false;
  bool primed = false;
  bool operator==(const Literal&) const = default;
  auto operator<=>(const Literal&) const = default;
};

// Conjunction of literals; empty means true.
struct Cube {
  std::vector<Literal> lits;
  bool operator==(const Cube&) const = default;
};

// Guarded implication: antecedent cube -> disjunction of cubes. An empty
// consequent list means false (the antecedent is forbidden).
struct Clause {
  Cube antecedent;
  std::vector<Cube> consequent;
  bool operator==(const Clause&) const = default;
};

using GoalFormula = std::vector<Cube>;  // disjunction; empty means false

// Reactive specification split into environment assumptions and system
// guarantees. Skill-derived safety clauses are mutable by repair; hard
// clauses (mutual exclusion, frozen terrain/request, no-skill frame) are
// not. Initial conditions are partial assignments by proposition id.
struct GR1Spec {
  std::vector<Proposition> inputs;
  std::vector<Proposition> outputs;
  std::map<int, bool> phi_e_init, phi_s_init;
  std::vector<Clause> phi_e_skill, phi_s_skill;
  std::vector<Clause> phi_e_hard, phi_s_hard;
  std::vector<GoalFormula> phi_e_live, phi_s_live;
  int next_prop_id = 0;

  const Proposition* find(int id) const;
  const Proposition* find_input(const std::string& name) const;
  const Proposition* find_output(const std::string& name) const;
  bool is_output(int id) const;
};

// Builds the full specification: per-skill postcondition assumptions,
// per-skill precondition guarantees, pairwise mutual exclusion, frozen
// terrain/request inputs, the no-skill robot frame, and the single system
// justice goal "robot cell equals request cell". The system starts with no
// skill active; the environment initial assignment is set separately.
GR1Spec encode_specification(const std::vector<Skill>& skills,
                             const GridConfig& grid,
                             const ClassificationRules& rules);

// Fills phi_e_init from a symbolic state (robot, heading, request, terrain).
void set_initial_state(GR1Spec& spec, const InputState& state,
                       const GridConfig& grid, const ClassificationRules& rules);

// Little-endian bit encoding of one terrain value per cell over
// ceil(log2 n_t) bits. Values at or above n_t are rejected.
std::vector<std::vector<bool>> int_terrain_to_bits(const std::vector<int>& values,
                                                   int n_t);
int terrain_bits_per_cell(int n_t);

// Proposition-id sets fixing the whole terrain reading and the request cell,
// ready to feed partial_evaluate.
std::pair<std::set<int>, std::set<int>> terrain_request_substitution(
    const GR1Spec& spec, const std::vector<int>& terrain, CellIndex request,
    const GridConfig& grid, const ClassificationRules& rules);

// Substitutes fixed truth values for terrain/request inputs (current and
// next occurrences alike, sound because those inputs are frozen), folds
// constants, drops satisfied clauses, and removes skills whose precondition
// became unsatisfiable. Ids already substituted away are ignored, which
// makes the operation idempotent.
GR1Spec partial_evaluate(const GR1Spec& spec, const std::set<int>& s_true,
                         const std::set<int>& s_false);

// One clause per line, prefix notation, section-tagged.
void dump_spec(const GR1Spec& spec, std::ostream& os);

// Full assignment of every proposition at one time step.
using Valuation = std::map<int, bool>;

struct TraceVerdict {
  bool env_init = true, env_safe = true;
  bool sys_init = true, sys_safe = true;
  bool env_ok() const { return env_init && env_safe; }
  bool sys_ok() const { return sys_init && sys_safe; }
  // phi_e -> phi_s over the finite trace (safety fragment)
  bool implication_holds() const { return !env_ok() || sys_ok(); }
};

// Checks the initial assignments and every safety clause along the trace.
// Clauses with next-step literals are evaluated on consecutive pairs.
TraceVerdict check_trace_safety(const GR1Spec& spec,
                                const std::vector<Valuation>& trace);

bool eval_cube(const Cube& cube, const Valuation& now, const Valuation* next);
bool eval_clause(const Clause& clause, const Valuation& now,
                 const Valuation* next);

}  // namespace locoplan
