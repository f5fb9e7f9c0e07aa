#pragma once

#include <functional>
#include <iosfwd>
#include <optional>

#include "locoplan/gr1.hpp"

namespace locoplan {

struct SpecTooLarge : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NotRealizable : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Explicit two-player game over the reachable joint states. A game state is
// an input valuation plus the output selected on entry (-1 = no skill).
// Each round the environment picks the next input valuation subject to the
// assumption clauses, then the system picks the next output subject to the
// guarantee clauses.
struct GameArena {
  std::vector<Valuation> valuations;  // interned input valuations
  struct State {
    int val = -1;
    int output = -1;  // index into output_names, -1 = none
  };
  std::vector<State> states;
  std::vector<int> initial;
  struct EnvBranch {
    int val = -1;                            // environment's next valuation
    std::vector<std::pair<int, int>> moves;  // (output, next state index)
  };
  std::vector<std::vector<EnvBranch>> succ;  // per state
  std::vector<std::string> output_names;
  std::vector<int> output_props;
  std::vector<std::string> val_labels;  // human-readable valuation names

  int find_state(int val, int output) const;
};

GameArena build_arena(const GR1Spec& spec, int state_budget = 1000000);

struct RealizabilityResult {
  bool realizable = false;
  GameArena arena;
  std::vector<char> winning;            // per arena state, for goal index 0
  std::vector<std::vector<int>> ranks;  // per goal: attractor layer, -1 = out
  std::vector<std::vector<char>> win_by_goal;
};

// Nested fixpoint for the recurrence objective (trivial environment
// justice): winning states can visit every system goal infinitely often.
// Realizable iff every initial state is winning.
RealizabilityResult check_realizability(const GR1Spec& spec,
                                        int state_budget = 1000000);

// Finite-memory strategy: memory tracks the liveness goal currently chased;
// the output choice per (memory, input valuation) is the legal winning move
// with minimal attractor rank, ties broken by skill id with "no skill"
// first. Deterministic by construction.
struct StrategyAutomaton {
  struct State {
    int val = -1;
    int memory = 0;
    int output = -1;  // emitted when this state was entered
  };
  std::vector<State> states;
  int initial = -1;
  std::map<std::pair<int, int>, int> next;  // (state, input valuation) -> state
  std::vector<Valuation> valuations;
  std::vector<std::string> val_labels;
  std::vector<std::string> output_names;

  int skill_emissions() const;  // transitions that emit a skill
};

StrategyAutomaton extract_strategy(const GR1Spec& spec,
                                   const RealizabilityResult& result);

// One transition per line: state, input valuation, emitted skill, next state.
void dump_automaton(const StrategyAutomaton& automaton, std::ostream& os);

// Runs the automaton against an environment that satisfies the assumptions,
// resolving any branching by the supplied picker (given the branch count,
// returns the branch to take). Returns the number of transitions until the
// goal valuation was first reached, or nullopt if max_steps elapsed.
std::optional<int> simulate_to_goal(
    const GR1Spec& spec, const RealizabilityResult& result,
    const StrategyAutomaton& automaton, int max_steps,
    const std::function<int(int)>& pick_branch = {});

// --- manager sweep over (terrain, request) pairs ---

struct RepairRequest {
  const GR1Spec& evaluated;          // unrealizable spec after substitution
  const std::vector<Skill>& skills;  // current shared skill set
  const GridConfig& grid;
  const ClassificationRules& rules;
  std::vector<int> terrain;
  CellIndex request;
  InputState initial;
};

// Returns validated new skills to add to the shared set; empty = give up.
using RepairFn = std::function<std::vector<Skill>(const RepairRequest&)>;

struct PairOutcome {
  enum class Status { Strategy, Repaired, Unrealizable, Unrepairable };
  Status status = Status::Unrealizable;
  std::optional<StrategyAutomaton> automaton;
  std::vector<std::string> added_skills;
  int arena_states = 0;
};

struct ManagerResult {
  std::vector<std::vector<PairOutcome>> outcomes;  // [terrain][request]
  std::vector<Skill> skills;                       // final shared skill set
  int repair_calls = 0;
};

struct ManagerSetup {
  std::vector<Skill> skills;
  GridConfig grid;
  ClassificationRules rules;
  CellIndex start;
  int start_yaw = -1;
  int state_budget = 1000000;
  int max_repair_rounds = 4;
};

// For every (terrain, request) pair: substitute, synthesize, and on
// unrealizability hand the evaluated spec to the repair hook; skills the
// hook validates are shared with all subsequent pairs.
ManagerResult manager_synthesize(const ManagerSetup& setup,
                                 const std::vector<std::vector<int>>& terrain_poss,
                                 const std::vector<CellIndex>& request_poss,
                                 const RepairFn& repair = {});

}  // namespace locoplan
