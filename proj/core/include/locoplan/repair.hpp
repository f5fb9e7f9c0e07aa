#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "locoplan/micp.hpp"
#include "locoplan/synthesis.hpp"

namespace locoplan {

struct NoCandidates : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct Unrepairable : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class SuggestionStatus { Proposed, Validated, Rejected };

// Candidate edit of an existing skill: a postcondition retarget moves the
// destination, a precondition relaxation moves the source or rewrites the
// terrain fragment. Validated suggestions carry the gait found for them.
struct SkillSuggestion {
  std::string base_id;
  SkillKind kind = SkillKind::Translation;
  CellIndex src, dst;
  int src_yaw = -1, dst_yaw = -1;
  std::map<int, int> fragment;  // linear cell -> required terrain type
  bool post_retarget = false;   // destination differs from the base skill
  int modified_literals = 0;
  int manhattan = 0;  // |new dst - base dst|, L1 over cell indices
  SuggestionStatus status = SuggestionStatus::Proposed;
  std::optional<Gait> gait;
};

// Transitions banned at runtime: selecting the skill while the robot sits
// on the given cell (and heading, when modeled) is forbidden.
struct DisallowedTransitions {
  struct Ban {
    CellIndex robot;
    int yaw = -1;
    std::string skill_id;
    bool operator==(const Ban&) const = default;
    auto operator<=>(const Ban&) const = default;
  };
  std::set<Ban> bans;

  void ban(CellIndex robot, int yaw, std::string skill_id) {
    bans.insert({robot, yaw, std::move(skill_id)});
  }
  bool contains(CellIndex robot, int yaw, const std::string& skill_id) const {
    return bans.count({robot, yaw, skill_id}) > 0;
  }
  bool empty() const { return bans.empty(); }
};

// Conjoins one forbidden clause per ban to the system hard constraints:
// the banned skill may not be selected on arrival at the banned cell. Bans
// naming skills absent from the spec are skipped.
void apply_disallowed(GR1Spec& spec, const DisallowedTransitions& banned);

// Ordered candidates whose addition would connect the losing region around
// the initial state to the set of cells that already reach the request.
// Postcondition retargets come first, then precondition relaxations; within
// each phase fewest modified literals, then Manhattan distance of the new
// destination, then destination, source and base id order. Returns an empty
// list when the initial state is already winning; throws NoCandidates when
// a losing region exists but no admissible edit can bridge it.
std::vector<SkillSuggestion> suggest_skills(const GR1Spec& evaluated,
                                            const RealizabilityResult& rr,
                                            const std::vector<Skill>& skills,
                                            const GridConfig& grid,
                                            const ClassificationRules& rules,
                                            const std::vector<int>& terrain,
                                            const InputState& initial);

struct RepairConfig {
  int intervals = 5;   // gait-free horizon = intervals * dt_m seconds
  double dt_m = 0.3;
  double time_limit = 6.0;  // per validation solve, seconds
  double gap = 0.05;
  int max_regions = 8;       // polygon cap handed to the gait-free builder
  int max_validations = 8;   // per repair episode
  int max_rounds = 3;        // suggestion regeneration rounds per episode
  bool stop_on_incumbent = true;
  double template_mu = 0.7;
};

struct ValidationOutcome {
  SuggestionStatus status = SuggestionStatus::Rejected;
  MICPStatus micp = MICPStatus::Timeout;
  bool timed_out = false;  // no incumbent before the limit: status unknown
  double seconds = 0.0;
  long nodes = 0;
  std::optional<Skill> skill;
  std::optional<Gait> gait;
};

// Grounds the suggestion on the given polygons and runs the gait-free MICP.
// Any integral incumbent validates; a proven-infeasible solve rejects; a
// timeout without incumbent rejects and is flagged separately.
ValidationOutcome validate_suggestion(const SkillSuggestion& s,
                                      const std::vector<TerrainPolygon>& polys,
                                      const GridConfig& grid,
                                      const RobotParams& params,
                                      const RepairConfig& cfg,
                                      const std::string& new_skill_id);

// Contact schedule read off the per-interval region binaries of a gait-free
// solution: a foot is in contact over an interval iff one of its region
// binaries is set, so phase durations are interval multiples.
Gait gait_from_solution(const MICPProblem& p, const MICPSolution& sol,
                        std::string id);

// Polygons near the straight corridor between two cells, capped to the
// closest max_regions by centroid distance to the corridor midpoint.
std::vector<TerrainPolygon> corridor_filter(
    const std::vector<TerrainPolygon>& polys, const CellRect& a,
    const CellRect& b, double inflate, int max_regions);

struct RepairLogEntry {
  int episode = 0;
  bool runtime = false;
  std::string base_id;
  std::string skill_id;  // set when a skill was created
  CellIndex src, dst;
  std::string status;  // validated / rejected / timeout / cached / cached_reject
  double solve_seconds = 0.0;
};

// Stateful repair driver: orders suggestions, validates them against
// template polygons (offline) or perceived polygons (runtime), caches
// validation outcomes under a translation-invariant key, and keeps the
// gaits of every skill it created. Counters feed the economy properties.
class RepairEngine {
 public:
  explicit RepairEngine(RobotParams params, RepairConfig cfg = {});

  // Offline hook for the synthesis sweep: validates suggestions until the
  // evaluated spec becomes realizable. Returns the new skills, or empty to
  // give up. Accepts suggestions only while the winning set grows.
  std::vector<Skill> repair(const RepairRequest& req);

  RepairFn as_repair_fn();

  struct RuntimeResult {
    GR1Spec evaluated;
    StrategyAutomaton automaton;
    std::vector<std::string> added_skills;
    int gait_free_calls = 0;
    int arena_states = 0;
  };

  // Resynthesis with the banned transitions conjoined to the hard system
  // constraints. Cached skills are tried first (zero MICP calls when they
  // suffice); fresh suggestions are validated on the perceived polygons.
  // Throws Unrepairable when no strategy exists even after fresh repair.
  RuntimeResult runtime_repair(std::vector<Skill>& skills,
                               const GridConfig& grid,
                               const ClassificationRules& rules,
                               const InputState& state,
                               const DisallowedTransitions& banned,
                               const std::vector<TerrainPolygon>& online_polys);

  const std::vector<RepairLogEntry>& log() const { return log_; }
  void write_log(std::ostream& os) const;
  int gait_free_calls() const { return gait_free_calls_; }
  int candidate_checks() const { return candidate_checks_; }
  const Gait* find_gait(const std::string& id) const;
  const std::map<std::string, Gait>& gait_library() const { return gaits_; }

 private:
  struct CacheEntry {
    bool feasible = false;
    std::optional<Gait> gait;
  };

  std::vector<Skill> repair_rounds(const std::vector<Skill>& skills,
                                   const GridConfig& grid,
                                   const ClassificationRules& rules,
                                   const std::vector<int>& terrain,
                                   const InputState& initial, bool runtime,
                                   const DisallowedTransitions* banned,
                                   const std::vector<TerrainPolygon>* online);

  std::string cache_key(const SkillSuggestion& s, const GridConfig& grid) const;

  RobotParams params_;
  RepairConfig cfg_;
  std::map<std::string, CacheEntry> cache_;
  std::map<std::string, Gait> gaits_;
  std::vector<RepairLogEntry> log_;
  int episodes_ = 0;
  int gait_free_calls_ = 0;
  int candidate_checks_ = 0;
  int serial_ = 0;
};

}  // namespace locoplan
