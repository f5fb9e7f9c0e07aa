#include "locoplan/repair.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <ostream>
#include <sstream>
#include <tuple>

namespace locoplan {

namespace {

// Cell connectivity under the current terrain reading. Rotations do not
// move between cells, so only translations contribute edges. Heading is
// collapsed onto cells: good enough for the fixtures, which do not model
// yaw during repair.
std::vector<std::pair<int, int>> cell_edges(const std::vector<Skill>& skills,
                                            const GridConfig& grid,
                                            const std::vector<int>& terrain) {
  std::vector<std::pair<int, int>> edges;
  for (const Skill& sk : skills) {
    if (sk.kind != SkillKind::Translation) continue;
    if (!sk.matches_terrain(terrain)) continue;
    edges.emplace_back(grid.linear(sk.src), grid.linear(sk.dst));
  }
  return edges;
}

std::set<int> closure(const std::vector<std::pair<int, int>>& edges,
                      std::set<int> seed, bool forward) {
  std::deque<int> queue(seed.begin(), seed.end());
  while (!queue.empty()) {
    const int at = queue.front();
    queue.pop_front();
    for (const auto& [from, to] : edges) {
      const int tail = forward ? from : to;
      const int head = forward ? to : from;
      if (tail != at) continue;
      if (seed.insert(head).second) queue.push_back(head);
    }
  }
  return seed;
}

std::set<int> backward_cells(const std::vector<Skill>& skills,
                             const GridConfig& grid,
                             const std::vector<int>& terrain, int request) {
  return closure(cell_edges(skills, grid, terrain), {request}, false);
}

std::string fragment_signature(const std::map<int, int>& fragment) {
  std::ostringstream os;
  for (const auto& [cell, type] : fragment) os << cell << ':' << type << ';';
  return os.str();
}

}  // namespace

void apply_disallowed(GR1Spec& spec, const DisallowedTransitions& banned) {
  for (const auto& bn : banned.bans) {
    const Proposition* out = spec.find_output(bn.skill_id);
    if (!out) continue;  // skill not in this library: nothing to forbid
    Clause c;
    c.antecedent.lits.push_back(Literal{out->id, false, true});
    bool grounded = true;
    auto add_axis = [&](int axis, int value) {
      for (const Proposition& p : spec.inputs)
        if (p.kind == PropKind::RobotIn && p.axis == axis && p.value == value) {
          c.antecedent.lits.push_back(Literal{p.id, false, true});
          return true;
        }
      return false;
    };
    grounded &= add_axis(0, bn.robot.ix);
    grounded &= add_axis(1, bn.robot.iy);
    if (bn.yaw >= 0) grounded &= add_axis(2, bn.yaw);
    if (!grounded) continue;
    c.consequent = {};  // empty disjunction: the antecedent is forbidden
    spec.phi_s_hard.push_back(std::move(c));
  }
}

std::vector<SkillSuggestion> suggest_skills(const GR1Spec& evaluated,
                                            const RealizabilityResult& rr,
                                            const std::vector<Skill>& skills,
                                            const GridConfig& grid,
                                            const ClassificationRules& rules,
                                            const std::vector<int>& terrain,
                                            const InputState& initial) {
  (void)evaluated;
  if (rr.realizable) return {};

  const auto edges = cell_edges(skills, grid, terrain);
  const std::set<int> reach =
      closure(edges, {grid.linear(initial.robot)}, true);
  const std::set<int> win = closure(edges, {grid.linear(initial.request)}, false);
  std::set<int> losing;
  for (int c : reach)
    if (!win.count(c)) losing.insert(c);
  if (losing.empty()) return {};

  auto steppable = [&](int cell) {
    return type_is_steppable(terrain[static_cast<size_t>(cell)], rules);
  };
  auto actual_fragment = [&](CellIndex src, CellIndex dst) {
    std::map<int, int> f;
    for (int cell : fragment_cells(grid, src, dst, FragmentMode::SourceAndDest))
      f[cell] = terrain[static_cast<size_t>(cell)];
    return f;
  };
  auto frag_delta = [](const std::map<int, int>& a, const std::map<int, int>& b) {
    int d = 0;
    for (const auto& [c, t] : a) {
      const auto it = b.find(c);
      if (it == b.end() || it->second != t) ++d;
    }
    for (const auto& [c, t] : b)
      if (!a.count(c)) ++d;
    return d;
  };
  auto have_skill = [&](CellIndex src, CellIndex dst, int sy, int dy) {
    for (const Skill& sk : skills)
      if (sk.src == src && sk.dst == dst && sk.src_yaw == sy &&
          sk.dst_yaw == dy && sk.matches_terrain(terrain))
        return true;
    return false;
  };
  auto adjacent = [](CellIndex a, CellIndex b) {
    return std::abs(a.ix - b.ix) <= 1 && std::abs(a.iy - b.iy) <= 1;
  };

  std::vector<SkillSuggestion> cands;
  for (const Skill& base : skills) {
    if (base.kind != SkillKind::Translation) continue;
    const int bsrc = grid.linear(base.src);
    const int bdst = grid.linear(base.dst);

    // postcondition retargets: redirect a losing-source skill onto the
    // winning set, one cell per axis at most (diagonals allowed)
    if (losing.count(bsrc) && steppable(bsrc)) {
      for (int w : win) {
        const CellIndex wc = grid.from_linear(w);
        if (wc == base.dst || wc == base.src) continue;
        if (!adjacent(base.src, wc) || !steppable(w)) continue;
        if (have_skill(base.src, wc, base.src_yaw, base.dst_yaw)) continue;
        SkillSuggestion s;
        s.base_id = base.id;
        s.kind = base.kind;
        s.src = base.src;
        s.dst = wc;
        s.src_yaw = base.src_yaw;
        s.dst_yaw = base.dst_yaw;
        s.fragment = actual_fragment(base.src, wc);
        s.post_retarget = true;
        s.modified_literals = (wc.ix != base.dst.ix) + (wc.iy != base.dst.iy) +
                              frag_delta(base.fragment, s.fragment);
        s.manhattan =
            std::abs(wc.ix - base.dst.ix) + std::abs(wc.iy - base.dst.iy);
        cands.push_back(std::move(s));
      }
    }

    // precondition relaxations against a winning destination: rewrite the
    // terrain fragment in place, or move the source onto the losing region
    if (win.count(bdst) && steppable(bdst)) {
      if (losing.count(bsrc) && steppable(bsrc) &&
          !base.matches_terrain(terrain)) {
        auto f = actual_fragment(base.src, base.dst);
        if (f != base.fragment) {
          SkillSuggestion s;
          s.base_id = base.id;
          s.kind = base.kind;
          s.src = base.src;
          s.dst = base.dst;
          s.src_yaw = base.src_yaw;
          s.dst_yaw = base.dst_yaw;
          s.fragment = std::move(f);
          s.modified_literals = frag_delta(base.fragment, s.fragment);
          cands.push_back(std::move(s));
        }
      }
      for (int l : losing) {
        const CellIndex lc = grid.from_linear(l);
        if (lc == base.src || lc == base.dst) continue;
        if (!adjacent(lc, base.dst) || !steppable(l)) continue;
        if (have_skill(lc, base.dst, base.src_yaw, base.dst_yaw)) continue;
        SkillSuggestion s;
        s.base_id = base.id;
        s.kind = base.kind;
        s.src = lc;
        s.dst = base.dst;
        s.src_yaw = base.src_yaw;
        s.dst_yaw = base.dst_yaw;
        s.fragment = actual_fragment(lc, base.dst);
        s.modified_literals = (lc.ix != base.src.ix) + (lc.iy != base.src.iy) +
                              frag_delta(base.fragment, s.fragment);
        cands.push_back(std::move(s));
      }
    }
  }

  if (cands.empty())
    throw NoCandidates(
        "no admissible skill edit connects the losing region to the winning "
        "set");

  std::stable_sort(cands.begin(), cands.end(),
                   [](const SkillSuggestion& a, const SkillSuggestion& b) {
                     return std::tuple(!a.post_retarget, a.modified_literals,
                                       a.manhattan, a.dst.ix, a.dst.iy,
                                       a.src.ix, a.src.iy, a.base_id) <
                            std::tuple(!b.post_retarget, b.modified_literals,
                                       b.manhattan, b.dst.ix, b.dst.iy,
                                       b.src.ix, b.src.iy, b.base_id);
                   });

  std::vector<SkillSuggestion> out;
  std::set<std::string> seen;
  for (SkillSuggestion& s : cands) {
    std::ostringstream key;
    key << grid.linear(s.src) << '>' << grid.linear(s.dst) << '/' << s.src_yaw
        << '>' << s.dst_yaw << '|' << fragment_signature(s.fragment);
    if (seen.insert(key.str()).second) out.push_back(std::move(s));
  }
  return out;
}

std::vector<TerrainPolygon> corridor_filter(
    const std::vector<TerrainPolygon>& polys, const CellRect& a,
    const CellRect& b, double inflate, int max_regions) {
  const CellRect box{std::min(a.xmin, b.xmin) - inflate,
                     std::min(a.ymin, b.ymin) - inflate,
                     std::max(a.xmax, b.xmax) + inflate,
                     std::max(a.ymax, b.ymax) + inflate};
  std::vector<int> keep;
  for (size_t i = 0; i < polys.size(); ++i) {
    double lox = std::numeric_limits<double>::infinity(), hix = -lox;
    double loy = lox, hiy = -lox;
    for (const Vec3& v : polys[i].vertices) {
      lox = std::min(lox, v.x());
      hix = std::max(hix, v.x());
      loy = std::min(loy, v.y());
      hiy = std::max(hiy, v.y());
    }
    if (hix < box.xmin || lox > box.xmax || hiy < box.ymin || loy > box.ymax)
      continue;
    keep.push_back(static_cast<int>(i));
  }
  if (static_cast<int>(keep.size()) > max_regions) {
    const Vec2 mid = 0.5 * (a.center() + b.center());
    std::stable_sort(keep.begin(), keep.end(), [&](int i, int j) {
      const double di =
          (polys[static_cast<size_t>(i)].centroid3d().head<2>() - mid).norm();
      const double dj =
          (polys[static_cast<size_t>(j)].centroid3d().head<2>() - mid).norm();
      return std::tuple(di, polys[static_cast<size_t>(i)].id) <
             std::tuple(dj, polys[static_cast<size_t>(j)].id);
    });
    keep.resize(static_cast<size_t>(max_regions));
    std::sort(keep.begin(), keep.end());
  }
  std::vector<TerrainPolygon> out;
  out.reserve(keep.size());
  for (int i : keep) out.push_back(polys[static_cast<size_t>(i)]);
  return out;
}

Gait gait_from_solution(const MICPProblem& p, const MICPSolution& sol,
                        std::string id) {
  int intervals = 0;
  for (const BinaryVar& b : p.binaries)
    if (b.group == "stance") intervals = std::max(intervals, b.step + 1);
  if (intervals == 0 || p.steps % intervals != 0)
    throw GaitGridMismatch("solution carries no per-interval contact pattern");
  const int per = p.steps / intervals;
  std::array<std::vector<bool>, kNumFeet> table;
  for (auto& t : table) t.assign(static_cast<size_t>(p.steps), false);
  for (size_t i = 0; i < p.binaries.size(); ++i) {
    const BinaryVar& b = p.binaries[i];
    if (b.group != "stance" || sol.binary_values[i] == 0) continue;
    for (int k = b.step * per; k < (b.step + 1) * per; ++k)
      table[static_cast<size_t>(b.foot)][static_cast<size_t>(k)] = true;
  }
  return gait_from_contact_table(std::move(id), p.dt, table);
}

ValidationOutcome validate_suggestion(const SkillSuggestion& s,
                                      const std::vector<TerrainPolygon>& polys,
                                      const GridConfig& grid,
                                      const RobotParams& params,
                                      const RepairConfig& cfg,
                                      const std::string& new_skill_id) {
  ValidationOutcome out;
  const std::vector<TerrainPolygon> near =
      corridor_filter(polys, grid.cell_rect(s.src), grid.cell_rect(s.dst),
                      0.5 * grid.cell_size, cfg.max_regions);
  InputState at_src{s.src, s.src_yaw, s.dst, {}};
  InputState at_dst{s.dst, s.dst_yaw, s.dst, {}};
  const PhysicalState start = ground(at_src, grid, near, params);
  const PhysicalState goal = ground(at_dst, grid, near, params);

  const MICPProblem prob =
      build_gait_free(start, goal, near, params, {}, cfg.intervals, cfg.dt_m);
  BnBConfig bc;
  bc.gap = cfg.gap;
  bc.time_limit = cfg.time_limit;
  bc.stop_on_incumbent = cfg.stop_on_incumbent;
  const MICPSolution sol = solve_micp(prob, bc);
  out.micp = sol.status;
  out.seconds = sol.total_seconds;
  out.nodes = sol.nodes;

  if (sol.status == MICPStatus::Infeasible || sol.x.size() == 0) {
    out.status = SuggestionStatus::Rejected;
    out.timed_out = sol.status == MICPStatus::Timeout;
    return out;
  }
  if (!verify_solution(prob, sol.x).ok) {  // defensive: never trust a bad witness
    out.status = SuggestionStatus::Rejected;
    return out;
  }
  out.status = SuggestionStatus::Validated;
  out.gait = gait_from_solution(prob, sol, new_skill_id + "_gait");
  Skill sk;
  sk.id = new_skill_id;
  sk.kind = s.kind;
  sk.src = s.src;
  sk.dst = s.dst;
  sk.src_yaw = s.src_yaw;
  sk.dst_yaw = s.dst_yaw;
  sk.fragment = s.fragment;
  sk.gait_id = out.gait->id;
  out.skill = sk;
  return out;
}

RepairEngine::RepairEngine(RobotParams params, RepairConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {}

std::string RepairEngine::cache_key(const SkillSuggestion& s,
                                    const GridConfig& grid) const {
  std::vector<std::tuple<int, int, int>> rel;
  for (const auto& [cell, type] : s.fragment) {
    const CellIndex c = grid.from_linear(cell);
    rel.emplace_back(c.iy - s.src.iy, c.ix - s.src.ix, type);
  }
  std::sort(rel.begin(), rel.end());
  std::ostringstream os;
  os << params_.name << '|' << static_cast<int>(s.kind) << '|'
     << (s.dst.ix - s.src.ix) << ',' << (s.dst.iy - s.src.iy) << '|'
     << s.src_yaw << '>' << s.dst_yaw << '|' << cfg_.intervals << 'x'
     << cfg_.dt_m << '|' << grid.cell_size << '|';
  for (const auto& [dy, dx, type] : rel)
    os << dx << ',' << dy << ':' << type << ';';
  return os.str();
}

std::vector<Skill> RepairEngine::repair_rounds(
    const std::vector<Skill>& skills0, const GridConfig& grid,
    const ClassificationRules& rules, const std::vector<int>& terrain,
    const InputState& initial, bool runtime,
    const DisallowedTransitions* banned,
    const std::vector<TerrainPolygon>* online) {
  ++episodes_;
  std::vector<Skill> skills = skills0;
  std::vector<Skill> added;
  std::set<std::string> tried;  // keys not retried within this episode
  int validations = 0;

  auto evaluate = [&]() {
    GR1Spec spec = encode_specification(skills, grid, rules);
    if (banned) apply_disallowed(spec, *banned);
    set_initial_state(spec, initial, grid, rules);
    const auto [st, sf] = terrain_request_substitution(
        spec, terrain, initial.request, grid, rules);
    return partial_evaluate(spec, st, sf);
  };

  for (int round = 0; round < cfg_.max_rounds; ++round) {
    const GR1Spec evaluated = evaluate();
    const RealizabilityResult rr = check_realizability(evaluated);
    if (rr.realizable) return added;

    std::vector<SkillSuggestion> suggestions;
    try {
      suggestions = suggest_skills(evaluated, rr, skills, grid, rules, terrain,
                                   initial);
    } catch (const NoCandidates&) {
      log_.push_back({episodes_, runtime, "", "", initial.robot,
                      initial.request, "no_candidates", 0.0});
      break;
    }
    if (suggestions.empty()) break;
    candidate_checks_ += static_cast<int>(suggestions.size());

    bool accepted = false;
    for (const SkillSuggestion& s : suggestions) {
      if (validations >= cfg_.max_validations) break;
      const std::string key = cache_key(s, grid);
      if (!tried.insert(key).second) continue;

      RepairLogEntry e;
      e.episode = episodes_;
      e.runtime = runtime;
      e.base_id = s.base_id;
      e.src = s.src;
      e.dst = s.dst;

      std::optional<Gait> gait;
      const auto hit = online ? cache_.end() : cache_.find(key);
      if (!online && hit != cache_.end()) {
        if (!hit->second.feasible) {
          e.status = "cached_reject";
          log_.push_back(std::move(e));
          continue;
        }
        gait = hit->second.gait;
        e.status = "cached";
      } else {
        ++validations;
        ++gait_free_calls_;
        const std::string probe = s.base_id + "_probe";
        const std::vector<TerrainPolygon> polys =
            online ? corridor_filter(*online, grid.cell_rect(s.src),
                                     grid.cell_rect(s.dst),
                                     0.5 * grid.cell_size, cfg_.max_regions)
                   : fragment_template_polygons(s.fragment, grid, rules,
                                                cfg_.template_mu);
        const ValidationOutcome vo =
            validate_suggestion(s, polys, grid, params_, cfg_, probe);
        e.solve_seconds = vo.seconds;
        if (vo.status != SuggestionStatus::Validated) {
          e.status = vo.timed_out ? "timeout" : "rejected";
          if (!online && !vo.timed_out) cache_[key] = {false, std::nullopt};
          log_.push_back(std::move(e));
          continue;
        }
        gait = vo.gait;
        if (!online) cache_[key] = {true, gait};
        e.status = "validated";
      }

      const std::string sid = s.base_id + "_rp" + std::to_string(++serial_);
      Gait g = *gait;
      g.id = sid + "_gait";
      Skill sk;
      sk.id = sid;
      sk.kind = s.kind;
      sk.src = s.src;
      sk.dst = s.dst;
      sk.src_yaw = s.src_yaw;
      sk.dst_yaw = s.dst_yaw;
      sk.fragment = s.fragment;
      sk.gait_id = g.id;

      // each accepted edit must strictly grow the winning set
      const size_t before =
          backward_cells(skills, grid, terrain, grid.linear(initial.request))
              .size();
      skills.push_back(sk);
      const size_t after =
          backward_cells(skills, grid, terrain, grid.linear(initial.request))
              .size();
      if (after <= before) {
        skills.pop_back();
        e.status = "no_progress";
        log_.push_back(std::move(e));
        continue;
      }
      gaits_[g.id] = std::move(g);
      e.skill_id = sid;
      log_.push_back(std::move(e));
      added.push_back(std::move(sk));
      accepted = true;
      break;  // regenerate suggestions against the grown winning set
    }
    if (!accepted) break;
  }

  const GR1Spec evaluated = evaluate();
  if (check_realizability(evaluated).realizable) return added;
  return {};  // give up; validation outcomes stay cached for later episodes
}

std::vector<Skill> RepairEngine::repair(const RepairRequest& req) {
  return repair_rounds(req.skills, req.grid, req.rules, req.terrain,
                       req.initial, false, nullptr, nullptr);
}

RepairFn RepairEngine::as_repair_fn() {
  return [this](const RepairRequest& req) { return repair(req); };
}

RepairEngine::RuntimeResult RepairEngine::runtime_repair(
    std::vector<Skill>& skills, const GridConfig& grid,
    const ClassificationRules& rules, const InputState& state,
    const DisallowedTransitions& banned,
    const std::vector<TerrainPolygon>& online_polys) {
  const int calls0 = gait_free_calls_;
  auto evaluate = [&]() {
    GR1Spec spec = encode_specification(skills, grid, rules);
    apply_disallowed(spec, banned);
    set_initial_state(spec, state, grid, rules);
    const auto [st, sf] = terrain_request_substitution(spec, state.terrain,
                                                       state.request, grid,
                                                       rules);
    return partial_evaluate(spec, st, sf);
  };

  GR1Spec evaluated = evaluate();
  RealizabilityResult rr = check_realizability(evaluated);
  std::vector<std::string> added_ids;
  if (!rr.realizable) {
    const std::vector<Skill> fresh = repair_rounds(
        skills, grid, rules, state.terrain, state, true, &banned, &online_polys);
    if (fresh.empty())
      throw Unrepairable("no strategy under the current transition bans");
    for (const Skill& sk : fresh) {
      added_ids.push_back(sk.id);
      skills.push_back(sk);
    }
    evaluated = evaluate();
    rr = check_realizability(evaluated);
    if (!rr.realizable)
      throw Unrepairable("validated skills left the request unreachable");
  }

  RuntimeResult out;
  out.automaton = extract_strategy(evaluated, rr);
  out.evaluated = std::move(evaluated);
  out.added_skills = std::move(added_ids);
  out.gait_free_calls = gait_free_calls_ - calls0;
  out.arena_states = static_cast<int>(rr.arena.states.size());
  return out;
}

const Gait* RepairEngine::find_gait(const std::string& id) const {
  const auto it = gaits_.find(id);
  return it == gaits_.end() ? nullptr : &it->second;
}

void RepairEngine::write_log(std::ostream& os) const {
  for (const RepairLogEntry& e : log_) {
    os << "episode=" << e.episode << (e.runtime ? " runtime" : " offline")
       << " base=" << (e.base_id.empty() ? "-" : e.base_id) << " move=("
       << e.src.ix << ',' << e.src.iy << ")->(" << e.dst.ix << ',' << e.dst.iy
       << ") status=" << e.status;
    if (!e.skill_id.empty()) os << " skill=" << e.skill_id;
    os << " solve_s=" << e.solve_seconds << '\n';
  }
}

}  // namespace locoplan
