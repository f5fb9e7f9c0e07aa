#include "locoplan/synthesis.hpp"

#include <algorithm>
#include <deque>
#include <ostream>
#include <sstream>

namespace locoplan {

namespace {

std::vector<GoalFormula> normalized_goals(const GR1Spec& spec) {
  if (spec.phi_s_live.empty()) return {GoalFormula{Cube{}}};
  return spec.phi_s_live;
}

bool goal_holds(const GoalFormula& goal, const Valuation& v) {
  for (const Cube& c : goal)
    if (eval_cube(c, v, nullptr)) return true;
  return false;
}

// The arena machinery supports antecedents over current literals and
// consequents over next-step input literals on the environment side, and
// purely next-step clauses on the system side; that covers everything the
// encoder and the repair edits produce.
void validate_clause_shapes(const GR1Spec& spec) {
  auto is_input = [&](int id) { return !spec.is_output(id); };
  for (const auto* clauses : {&spec.phi_e_skill, &spec.phi_e_hard}) {
    for (const Clause& c : *clauses) {
      for (const Literal& l : c.antecedent.lits)
        if (l.primed)
          throw std::logic_error("assumption antecedent uses a next literal");
      for (const Cube& cube : c.consequent)
        for (const Literal& l : cube.lits)
          if (!l.primed || !is_input(l.prop))
            throw std::logic_error(
                "assumption consequent must use next-step input literals");
    }
  }
  for (const auto* clauses : {&spec.phi_s_skill, &spec.phi_s_hard}) {
    for (const Clause& c : *clauses) {
      for (const Literal& l : c.antecedent.lits)
        if (!l.primed)
          throw std::logic_error("guarantee clauses must be next-step only");
      for (const Cube& cube : c.consequent)
        for (const Literal& l : cube.lits)
          if (!l.primed)
            throw std::logic_error("guarantee clauses must be next-step only");
    }
  }
}

struct InputGroups {
  std::vector<std::vector<int>> onehot;  // exactly one true per group
  std::vector<int> bits;                 // free boolean props
};

InputGroups input_groups(const GR1Spec& spec) {
  std::map<std::pair<int, int>, std::vector<std::pair<int, int>>> groups;
  InputGroups out;
  for (const auto& p : spec.inputs) {
    if (p.kind == PropKind::TerrainIn) {
      out.bits.push_back(p.id);
    } else {
      const int kind_tag = p.kind == PropKind::RobotIn ? 0 : 1;
      groups[{kind_tag, p.axis}].push_back({p.value, p.id});
    }
  }
  for (auto& [key, props] : groups) {
    std::sort(props.begin(), props.end());
    std::vector<int> ids;
    for (auto& [value, id] : props) ids.push_back(id);
    out.onehot.push_back(std::move(ids));
  }
  return out;
}

// All complete input valuations consistent with the one-hot structure and a
// partial assignment. Throws SpecTooLarge past the budget.
std::vector<Valuation> complete_valuations(const InputGroups& groups,
                                           const std::map<int, bool>& fixed,
                                           size_t budget) {
  std::vector<Valuation> result{Valuation{}};
  auto guard = [&](size_t n) {
    if (n > budget)
      throw SpecTooLarge("input valuation count exceeds the state budget");
  };
  for (const auto& group : groups.onehot) {
    int forced_true = -1;
    for (int id : group) {
      const auto it = fixed.find(id);
      if (it != fixed.end() && it->second) {
        if (forced_true >= 0) return {};  // two trues: inconsistent
        forced_true = id;
      }
    }
    std::vector<int> choices;
    if (forced_true >= 0) {
      choices.push_back(forced_true);
    } else {
      for (int id : group) {
        const auto it = fixed.find(id);
        if (it == fixed.end() || it->second) choices.push_back(id);
      }
    }
    if (choices.empty()) return {};
    guard(result.size() * choices.size());
    std::vector<Valuation> next;
    for (const Valuation& v : result)
      for (int pick : choices) {
        Valuation w = v;
        for (int id : group) w[id] = id == pick;
        next.push_back(std::move(w));
      }
    result = std::move(next);
  }
  for (int id : groups.bits) {
    const auto it = fixed.find(id);
    if (it != fixed.end()) {
      for (Valuation& v : result) v[id] = it->second;
      continue;
    }
    guard(result.size() * 2);
    std::vector<Valuation> next;
    for (const Valuation& v : result)
      for (bool b : {false, true}) {
        Valuation w = v;
        w[id] = b;
        next.push_back(std::move(w));
      }
    result = std::move(next);
  }
  return result;
}

}  // namespace

int GameArena::find_state(int val, int output) const {
  for (size_t i = 0; i < states.size(); ++i)
    if (states[i].val == val && states[i].output == output)
      return static_cast<int>(i);
  return -1;
}

namespace {

struct ArenaBuilder {
  const GR1Spec& spec;
  size_t budget;
  GameArena arena;
  std::map<Valuation, int> val_ids;
  std::map<std::pair<int, int>, int> state_ids;
  InputGroups groups;

  explicit ArenaBuilder(const GR1Spec& s, size_t b)
      : spec(s), budget(b), groups(input_groups(s)) {
    for (const auto& p : spec.outputs) {
      arena.output_names.push_back(p.name);
      arena.output_props.push_back(p.id);
    }
  }

  int intern_val(const Valuation& v) {
    const auto it = val_ids.find(v);
    if (it != val_ids.end()) return it->second;
    const int id = static_cast<int>(arena.valuations.size());
    arena.valuations.push_back(v);
    std::string label;
    for (const auto& p : spec.inputs) {
      const auto pv = v.find(p.id);
      if (pv != v.end() && pv->second) {
        if (!label.empty()) label += ',';
        label += p.name;
      }
    }
    arena.val_labels.push_back(label.empty() ? "-" : label);
    val_ids[v] = id;
    return id;
  }

  int intern_state(int val, int output) {
    const auto key = std::make_pair(val, output);
    const auto it = state_ids.find(key);
    if (it != state_ids.end()) return it->second;
    if (arena.states.size() >= budget)
      throw SpecTooLarge("arena exceeds the configured state budget");
    const int id = static_cast<int>(arena.states.size());
    arena.states.push_back({val, output});
    arena.succ.emplace_back();
    state_ids[key] = id;
    return id;
  }

  Valuation now_of(int state) const {
    Valuation v = arena.valuations[static_cast<size_t>(arena.states[size_t(state)].val)];
    for (size_t i = 0; i < arena.output_props.size(); ++i)
      v[arena.output_props[i]] =
          static_cast<int>(i) == arena.states[size_t(state)].output;
    return v;
  }

  // environment moves: forced literals from triggered assumptions, then
  // consistent completion, then a full re-check of every assumption
  std::vector<int> env_successors(int state) {
    const Valuation now = now_of(state);
    std::map<int, bool> forced;
    for (const auto* clauses : {&spec.phi_e_skill, &spec.phi_e_hard}) {
      for (const Clause& c : *clauses) {
        if (!eval_cube(c.antecedent, now, nullptr)) continue;
        if (c.consequent.empty()) return {};  // assumption forbids everything
        if (c.consequent.size() != 1) continue;  // handled by the re-check
        for (const Literal& l : c.consequent.front().lits) {
          const bool v = !l.negated;
          const auto it = forced.find(l.prop);
          if (it != forced.end() && it->second != v) return {};  // stuck
          forced[l.prop] = v;
        }
      }
    }
    std::vector<int> out;
    for (const Valuation& cand : complete_valuations(groups, forced, budget)) {
      bool ok = true;
      for (const auto* clauses : {&spec.phi_e_skill, &spec.phi_e_hard}) {
        for (const Clause& c : *clauses)
          if (!eval_clause(c, now, &cand)) {
            ok = false;
            break;
          }
        if (!ok) break;
      }
      if (ok) out.push_back(intern_val(cand));
    }
    return out;
  }

  std::vector<int> sys_moves(int state, int next_val) {
    const Valuation now = now_of(state);
    std::vector<int> legal;
    for (int o = -1; o < static_cast<int>(arena.output_props.size()); ++o) {
      Valuation next = arena.valuations[static_cast<size_t>(next_val)];
      for (size_t i = 0; i < arena.output_props.size(); ++i)
        next[arena.output_props[i]] = static_cast<int>(i) == o;
      bool ok = true;
      for (const auto* clauses : {&spec.phi_s_skill, &spec.phi_s_hard}) {
        for (const Clause& c : *clauses)
          if (!eval_clause(c, now, &next)) {
            ok = false;
            break;
          }
        if (!ok) break;
      }
      if (ok) legal.push_back(o);
    }
    return legal;
  }

  void build() {
    std::map<int, bool> init_fixed = spec.phi_e_init;
    std::deque<int> queue;
    for (const Valuation& v : complete_valuations(groups, init_fixed, budget)) {
      const int val = intern_val(v);
      const int s = intern_state(val, -1);
      if (std::find(arena.initial.begin(), arena.initial.end(), s) ==
          arena.initial.end()) {
        arena.initial.push_back(s);
        queue.push_back(s);
      }
    }
    std::set<int> expanded;
    while (!queue.empty()) {
      const int s = queue.front();
      queue.pop_front();
      if (!expanded.insert(s).second) continue;
      for (int val : env_successors(s)) {
        GameArena::EnvBranch branch;
        branch.val = val;
        for (int o : sys_moves(s, val)) {
          const size_t before = arena.states.size();
          const int ns = intern_state(val, o);
          branch.moves.push_back({o, ns});
          if (arena.states.size() > before) queue.push_back(ns);
        }
        arena.succ[static_cast<size_t>(s)].push_back(std::move(branch));
      }
    }
  }
};

bool cpre(const GameArena& arena, int state, const std::vector<char>& w) {
  const auto& branches = arena.succ[static_cast<size_t>(state)];
  for (const auto& branch : branches) {
    bool some = false;
    for (const auto& [o, ns] : branch.moves)
      if (w[static_cast<size_t>(ns)]) {
        some = true;
        break;
      }
    if (!some) return false;
  }
  return true;  // includes the env-stuck case: no branches, vacuous win
}

// least fixpoint reaching "goal and can stay in z_next", recording layers
std::pair<std::vector<char>, std::vector<int>> attractor(
    const GameArena& arena, const std::vector<char>& goal_states,
    const std::vector<char>& z_next) {
  const size_t n = arena.states.size();
  std::vector<char> y(n, 0);
  std::vector<int> rank(n, -1);
  bool grew = true;
  int layer = 0;
  while (grew) {
    grew = false;
    std::vector<size_t> added;
    for (size_t s = 0; s < n; ++s) {
      if (y[s]) continue;
      const bool in_target = goal_states[s] && cpre(arena, static_cast<int>(s), z_next);
      if (in_target || cpre(arena, static_cast<int>(s), y)) {
        added.push_back(s);
      }
    }
    for (size_t s : added) {
      y[s] = 1;
      rank[s] = layer;
      grew = true;
    }
    ++layer;
  }
  return {std::move(y), std::move(rank)};
}

}  // namespace

GameArena build_arena(const GR1Spec& spec, int state_budget) {
  validate_clause_shapes(spec);
  ArenaBuilder b(spec, static_cast<size_t>(state_budget));
  b.build();
  return std::move(b.arena);
}

RealizabilityResult check_realizability(const GR1Spec& spec, int state_budget) {
  RealizabilityResult res;
  res.arena = build_arena(spec, state_budget);
  const auto goals = normalized_goals(spec);
  const size_t n = res.arena.states.size();
  const size_t m = goals.size();

  // goal membership per arena state
  std::vector<std::vector<char>> goal_states(m, std::vector<char>(n, 0));
  for (size_t s = 0; s < n; ++s) {
    Valuation now = res.arena.valuations[static_cast<size_t>(
        res.arena.states[s].val)];
    for (size_t i = 0; i < res.arena.output_props.size(); ++i)
      now[res.arena.output_props[i]] =
          static_cast<int>(i) == res.arena.states[s].output;
    for (size_t j = 0; j < m; ++j)
      goal_states[j][s] = goal_holds(goals[j], now) ? 1 : 0;
  }

  std::vector<std::vector<char>> z(m, std::vector<char>(n, 1));
  bool changed = true;
  while (changed) {
    changed = false;
    for (size_t j = 0; j < m; ++j) {
      const auto& z_next = z[(j + 1) % m];
      auto [y, rank] = attractor(res.arena, goal_states[j], z_next);
      if (y != z[j]) {
        z[j] = std::move(y);
        changed = true;
      }
    }
  }
  res.ranks.resize(m);
  res.win_by_goal.resize(m);
  for (size_t j = 0; j < m; ++j) {
    auto [y, rank] = attractor(res.arena, goal_states[j], z[(j + 1) % m]);
    res.win_by_goal[j] = std::move(y);
    res.ranks[j] = std::move(rank);
  }
  res.winning = res.win_by_goal[0];
  res.realizable = true;
  for (int s : res.arena.initial)
    if (!res.winning[static_cast<size_t>(s)]) res.realizable = false;
  return res;
}

namespace {

// move legality is predecessor-independent because guarantee clauses are
// next-step only; cache per valuation
struct MoveOracle {
  const GR1Spec& spec;
  const GameArena& arena;
  std::map<int, std::vector<int>> cache;

  const std::vector<int>& legal(int val) {
    const auto it = cache.find(val);
    if (it != cache.end()) return it->second;
    std::vector<int> out;
    const Valuation dummy;
    for (int o = -1; o < static_cast<int>(arena.output_props.size()); ++o) {
      Valuation next = arena.valuations[static_cast<size_t>(val)];
      for (size_t i = 0; i < arena.output_props.size(); ++i)
        next[arena.output_props[i]] = static_cast<int>(i) == o;
      bool ok = true;
      for (const auto* clauses : {&spec.phi_s_skill, &spec.phi_s_hard}) {
        for (const Clause& c : *clauses)
          if (!eval_clause(c, dummy, &next)) {
            ok = false;
            break;
          }
        if (!ok) break;
      }
      if (ok) out.push_back(o);
    }
    return cache.emplace(val, std::move(out)).first->second;
  }
};

std::string output_name(const GameArena& arena, int o) {
  return o < 0 ? std::string() : arena.output_names[static_cast<size_t>(o)];
}

}  // namespace

StrategyAutomaton extract_strategy(const GR1Spec& spec,
                                   const RealizabilityResult& result) {
  if (!result.realizable)
    throw NotRealizable("cannot extract a strategy from a losing game");
  const auto goals = normalized_goals(spec);
  const size_t m = goals.size();
  const GameArena& arena = result.arena;

  StrategyAutomaton a;
  a.valuations = arena.valuations;
  a.val_labels = arena.val_labels;
  a.output_names = arena.output_names;

  MoveOracle oracle{spec, arena, {}};
  auto choose = [&](size_t memory, int val) -> int {
    int best = -2;
    int best_rank = 0;
    std::string best_name;
    for (int o : oracle.legal(val)) {
      const int s = arena.find_state(val, o);
      if (s < 0 || !result.win_by_goal[memory][static_cast<size_t>(s)]) continue;
      const int rank = result.ranks[memory][static_cast<size_t>(s)];
      const std::string name = output_name(arena, o);
      if (best == -2 || rank < best_rank ||
          (rank == best_rank && name < best_name)) {
        best = o;
        best_rank = rank;
        best_name = name;
      }
    }
    if (best == -2)
      throw NotRealizable("no winning move at a reachable valuation");
    return best;
  };
  if (arena.initial.size() != 1)
    throw std::logic_error("strategy extraction needs one initial state");
  const int init_val = arena.states[static_cast<size_t>(arena.initial[0])].val;

  std::map<std::tuple<int, int, int>, int> ids;
  auto intern = [&](int val, int memory, int output) {
    const auto key = std::make_tuple(val, memory, output);
    const auto it = ids.find(key);
    if (it != ids.end()) return std::make_pair(it->second, false);
    const int id = static_cast<int>(a.states.size());
    a.states.push_back({val, memory, output});
    ids[key] = id;
    return std::make_pair(id, true);
  };

  a.initial = intern(init_val, 0, -1).first;
  std::deque<int> queue{a.initial};
  std::set<int> done;
  while (!queue.empty()) {
    const int q = queue.front();
    queue.pop_front();
    if (!done.insert(q).second) continue;
    const auto st = a.states[static_cast<size_t>(q)];
    const int s = arena.find_state(st.val, st.output);
    if (s < 0) throw std::logic_error("automaton left the arena");
    // rank 0 within the chased goal's attractor certifies a move into the
    // next goal's winning set on every branch, so the memory advances there
    const bool advance =
        result.ranks[static_cast<size_t>(st.memory)][static_cast<size_t>(s)] == 0;
    for (const auto& branch : arena.succ[static_cast<size_t>(s)]) {
      const int v2 = branch.val;
      const size_t m2 = advance ? (static_cast<size_t>(st.memory) + 1) % m
                                : static_cast<size_t>(st.memory);
      const int o2 = choose(m2, v2);
      const auto [q2, fresh] = intern(v2, static_cast<int>(m2), o2);
      a.next[{q, v2}] = q2;
      if (fresh) queue.push_back(q2);
    }
  }
  return a;
}

int StrategyAutomaton::skill_emissions() const {
  int n = 0;
  for (const auto& [key, to] : next)
    if (states[static_cast<size_t>(to)].output >= 0) ++n;
  return n;
}

void dump_automaton(const StrategyAutomaton& automaton, std::ostream& os) {
  for (size_t i = 0; i < automaton.states.size(); ++i) {
    const auto& st = automaton.states[i];
    os << "# state " << i << " at "
       << automaton.val_labels[static_cast<size_t>(st.val)] << " memory "
       << st.memory << " emits "
       << (st.output < 0 ? "-"
                         : automaton.output_names[static_cast<size_t>(st.output)]);
    if (static_cast<int>(i) == automaton.initial) os << " initial";
    os << "\n";
  }
  for (const auto& [key, to] : automaton.next) {
    const auto& [from, val] = key;
    const int out = automaton.states[static_cast<size_t>(to)].output;
    os << from << ' ' << automaton.val_labels[static_cast<size_t>(val)] << ' '
       << (out < 0 ? "-" : automaton.output_names[static_cast<size_t>(out)])
       << ' ' << to << "\n";
  }
}

std::optional<int> simulate_to_goal(const GR1Spec& spec,
                                    const RealizabilityResult& result,
                                    const StrategyAutomaton& automaton,
                                    int max_steps,
                                    const std::function<int(int)>& pick_branch) {
  const auto goals = normalized_goals(spec);
  const GameArena& arena = result.arena;
  auto at_goal = [&](int val) {
    return goal_holds(goals[0], arena.valuations[static_cast<size_t>(val)]);
  };
  int q = automaton.initial;
  if (at_goal(automaton.states[static_cast<size_t>(q)].val)) return 0;
  for (int step = 1; step <= max_steps; ++step) {
    const auto st = automaton.states[static_cast<size_t>(q)];
    const int s = arena.find_state(st.val, st.output);
    if (s < 0) return std::nullopt;
    const auto& branches = arena.succ[static_cast<size_t>(s)];
    if (branches.empty()) return std::nullopt;  // assumptions broke down
    const int pick =
        pick_branch ? pick_branch(static_cast<int>(branches.size())) : 0;
    const int v2 = branches[static_cast<size_t>(
                                pick % static_cast<int>(branches.size()))]
                       .val;
    const auto it = automaton.next.find({q, v2});
    if (it == automaton.next.end()) return std::nullopt;
    q = it->second;
    if (at_goal(v2)) return step;
  }
  return std::nullopt;
}

ManagerResult manager_synthesize(const ManagerSetup& setup,
                                 const std::vector<std::vector<int>>& terrain_poss,
                                 const std::vector<CellIndex>& request_poss,
                                 const RepairFn& repair) {
  ManagerResult result;
  result.skills = setup.skills;
  result.outcomes.resize(terrain_poss.size());

  for (size_t ti = 0; ti < terrain_poss.size(); ++ti) {
    for (size_t ri = 0; ri < request_poss.size(); ++ri) {
      PairOutcome outcome;
      int rounds = 0;
      while (true) {
        GR1Spec spec =
            encode_specification(result.skills, setup.grid, setup.rules);
        InputState init;
        init.robot = setup.start;
        init.yaw_idx = setup.start_yaw;
        init.request = request_poss[ri];
        init.terrain = terrain_poss[ti];
        set_initial_state(spec, init, setup.grid, setup.rules);
        const auto [s_true, s_false] = terrain_request_substitution(
            spec, terrain_poss[ti], request_poss[ri], setup.grid, setup.rules);
        const GR1Spec evaluated = partial_evaluate(spec, s_true, s_false);
        RealizabilityResult rr =
            check_realizability(evaluated, setup.state_budget);
        outcome.arena_states = static_cast<int>(rr.arena.states.size());
        if (rr.realizable) {
          outcome.status = rounds > 0 ? PairOutcome::Status::Repaired
                                      : PairOutcome::Status::Strategy;
          outcome.automaton = extract_strategy(evaluated, rr);
          break;
        }
        if (!repair) {
          outcome.status = PairOutcome::Status::Unrealizable;
          break;
        }
        if (rounds >= setup.max_repair_rounds) {
          outcome.status = PairOutcome::Status::Unrepairable;
          break;
        }
        ++result.repair_calls;
        RepairRequest req{evaluated,        result.skills, setup.grid,
                          setup.rules,      terrain_poss[ti], request_poss[ri],
                          init};
        const std::vector<Skill> fresh = repair(req);
        if (fresh.empty()) {
          outcome.status = PairOutcome::Status::Unrepairable;
          break;
        }
        for (const Skill& sk : fresh) {
          bool exists = false;
          for (const Skill& have : result.skills) exists |= have.id == sk.id;
          if (!exists) {
            result.skills.push_back(sk);
            outcome.added_skills.push_back(sk.id);
          }
        }
        ++rounds;
      }
      result.outcomes[ti].push_back(std::move(outcome));
    }
  }
  return result;
}

}  // namespace locoplan
