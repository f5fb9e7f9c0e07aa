#include "locoplan/micp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <queue>
#include <set>
#include <sstream>
#include <stdexcept>

namespace locoplan {

namespace {

using Eigen::VectorXd;
using Trip = Eigen::Triplet<double>;

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Audit {
  std::mutex mu;
  long optimal = 0;
  long violating = 0;
  std::string first;
};

Audit& audit() {
  static Audit a;
  return a;
}

void record_audit(const AuditReport& rep) {
  auto& a = audit();
  std::lock_guard<std::mutex> lock(a.mu);
  ++a.optimal;
  if (!rep.ok) {
    ++a.violating;
    if (a.first.empty() && !rep.violations.empty()) a.first = rep.violations.front();
  }
}

struct Node {
  double bound = -kInf;
  long id = 0;
  std::vector<int8_t> dom;  // -1 free, 0/1 fixed
};

struct NodeOrder {
  bool operator()(const Node& a, const Node& b) const {
    if (a.bound != b.bound) return a.bound > b.bound;
    return a.id > b.id;
  }
};

// unit propagation over the sum rows; false on contradiction
bool propagate(const MICPProblem& p, std::vector<int8_t>& dom) {
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& row : p.sum_rows) {
      int ones = 0, free_cnt = 0, last_free = -1;
      for (int c : row.cols) {
        const int bi = c - p.num_continuous;
        if (dom[bi] == 1)
          ++ones;
        else if (dom[bi] < 0) {
          ++free_cnt;
          last_free = bi;
        }
      }
      if (ones > 1) return false;
      if (ones == 1) {
        for (int c : row.cols) {
          const int bi = c - p.num_continuous;
          if (dom[bi] < 0) {
            dom[bi] = 0;
            changed = true;
          }
        }
      } else if (row.exactly_one) {
        if (free_cnt == 0) return false;
        if (free_cnt == 1) {
          dom[last_free] = 1;
          changed = true;
        }
      }
    }
  }
  return true;
}

// Node relaxation by condensation: fixed binary columns are substituted
// into the rows rather than pinned with extra equality rows. Appended pins
// would leave the 0/1 box rows (and saturated sum rows) forced to zero
// slack, and a problem without a strict interior stalls the interior-point
// solver.
struct NodeSolver {
  const MICPProblem& p;
  std::vector<Trip> pt, at, gt;

  explicit NodeSolver(const MICPProblem& pp) : p(pp) {
    auto collect = [](const SpMat& M, std::vector<Trip>& out) {
      for (int j = 0; j < M.outerSize(); ++j)
        for (SpMat::InnerIterator it(M, j); it; ++it)
          out.emplace_back(static_cast<int>(it.row()),
                           static_cast<int>(it.col()), it.value());
    };
    collect(p.relaxation.P, pt);
    collect(p.relaxation.A, at);
    collect(p.relaxation.G, gt);
  }

  struct Built {
    QP qp;
    std::vector<int> colmap;    // full column -> reduced column, -1 pinned
    std::vector<double> fixed;  // pinned value per full column
    double offset = 0.0;        // cost carried by the pinned columns

    double value_of(const VectorXd& x, int col) const {
      const int rc = colmap[static_cast<size_t>(col)];
      return rc >= 0 ? x[rc] : fixed[static_cast<size_t>(col)];
    }
    VectorXd expand(const VectorXd& x) const {
      VectorXd full(static_cast<Eigen::Index>(colmap.size()));
      for (size_t c = 0; c < colmap.size(); ++c)
        full[static_cast<Eigen::Index>(c)] =
            colmap[c] >= 0 ? x[colmap[c]] : fixed[c];
      return full;
    }
  };

  Built build(const std::vector<int8_t>& dom) const {
    const QP& r = p.relaxation;
    const int total = r.vars();
    Built out;
    out.colmap.assign(static_cast<size_t>(total), -1);
    out.fixed.assign(static_cast<size_t>(total), 0.0);
    int nred = 0;
    for (int c = 0; c < p.num_continuous; ++c)
      out.colmap[static_cast<size_t>(c)] = nred++;
    for (size_t i = 0; i < dom.size(); ++i) {
      const int col = p.binaries[i].column;
      if (dom[i] < 0)
        out.colmap[static_cast<size_t>(col)] = nred++;
      else
        out.fixed[static_cast<size_t>(col)] = static_cast<double>(dom[i]);
    }
    auto cmap = [&](int c) { return out.colmap[static_cast<size_t>(c)]; };
    auto cval = [&](int c) { return out.fixed[static_cast<size_t>(c)]; };

    VectorXd q2 = VectorXd::Zero(nred);
    std::vector<Trip> p2;
    for (const Trip& t : pt) {
      const int fi = cmap(t.row()), fj = cmap(t.col());
      if (fi >= 0 && fj >= 0)
        p2.emplace_back(fi, fj, t.value());
      else if (fi >= 0)
        q2[fi] += 0.5 * t.value() * cval(t.col());
      else if (fj >= 0)
        q2[fj] += 0.5 * t.value() * cval(t.row());
      else
        out.offset += 0.5 * t.value() * cval(t.row()) * cval(t.col());
    }
    for (int c = 0; c < total; ++c) {
      if (cmap(c) >= 0)
        q2[cmap(c)] += r.q[c];
      else
        out.offset += r.q[c] * cval(c);
    }

    bool contradicted = false;

    VectorXd badj = r.b;
    std::vector<char> afree(static_cast<size_t>(r.A.rows()), 0);
    std::vector<Trip> atmp;
    for (const Trip& t : at) {
      const int fc = cmap(t.col());
      if (fc >= 0) {
        atmp.emplace_back(t.row(), fc, t.value());
        afree[static_cast<size_t>(t.row())] = 1;
      } else {
        badj[t.row()] -= t.value() * cval(t.col());
      }
    }
    std::vector<int> arow(static_cast<size_t>(r.A.rows()), -1);
    int na = 0;
    for (Eigen::Index i = 0; i < r.A.rows(); ++i) {
      if (afree[static_cast<size_t>(i)])
        arow[static_cast<size_t>(i)] = na++;
      else if (std::abs(badj[i]) > 1e-9)
        contradicted = true;  // constant equality row misses its target
    }
    VectorXd b2(na);
    std::vector<Trip> a2;
    for (const Trip& t : atmp)
      a2.emplace_back(arow[static_cast<size_t>(t.row())], t.col(), t.value());
    for (Eigen::Index i = 0; i < r.A.rows(); ++i)
      if (arow[static_cast<size_t>(i)] >= 0)
        b2[arow[static_cast<size_t>(i)]] = badj[i];

    VectorXd hadj = r.h;
    std::vector<char> gfree(static_cast<size_t>(r.G.rows()), 0);
    std::vector<Trip> gtmp;
    for (const Trip& t : gt) {
      const int fc = cmap(t.col());
      if (fc >= 0) {
        gtmp.emplace_back(t.row(), fc, t.value());
        gfree[static_cast<size_t>(t.row())] = 1;
      } else {
        hadj[t.row()] -= t.value() * cval(t.col());
      }
    }
    std::vector<int> grow(static_cast<size_t>(r.G.rows()), -1);
    int ng = 0;
    for (Eigen::Index i = 0; i < r.G.rows(); ++i) {
      if (gfree[static_cast<size_t>(i)])
        grow[static_cast<size_t>(i)] = ng++;
      else if (hadj[i] < -1e-9)
        contradicted = true;  // constant inequality row already violated
    }
    // a contradiction among the substituted rows gets one canonical marker
    // row 0 <= -1 so the solver certifies infeasibility instead of relying
    // on dropped constants
    const int marker = contradicted ? 1 : 0;
    VectorXd h2(ng + marker);
    std::vector<Trip> g2;
    for (const Trip& t : gtmp)
      g2.emplace_back(grow[static_cast<size_t>(t.row())], t.col(), t.value());
    for (Eigen::Index i = 0; i < r.G.rows(); ++i)
      if (grow[static_cast<size_t>(i)] >= 0)
        h2[grow[static_cast<size_t>(i)]] = hadj[i];
    if (contradicted) h2[ng] = -1.0;

    out.qp.P.resize(nred, nred);
    out.qp.P.setFromTriplets(p2.begin(), p2.end());
    out.qp.q = q2;
    out.qp.A.resize(na, nred);
    out.qp.A.setFromTriplets(a2.begin(), a2.end());
    out.qp.b = b2;
    out.qp.G.resize(ng + marker, nred);
    out.qp.G.setFromTriplets(g2.begin(), g2.end());
    out.qp.h = h2;
    return out;
  }
};

int first_free(const std::vector<int8_t>& dom) {
  for (size_t i = 0; i < dom.size(); ++i)
    if (dom[i] < 0) return static_cast<int>(i);
  return -1;
}

}  // namespace

std::string BinaryVar::label() const {
  std::ostringstream os;
  os << "H[" << group;
  if (region >= 0) os << " r" << region;
  if (step >= 0) os << " k" << step;
  if (foot >= 0) os << " j" << foot;
  os << "]";
  return os.str();
}

int MICPProblem::add_binary(std::string group, int region, int step,
                            int foot) {
  BinaryVar b;
  b.column = num_continuous + static_cast<int>(binaries.size());
  b.group = std::move(group);
  b.region = region;
  b.step = step;
  b.foot = foot;
  binaries.push_back(b);
  columns.push_back({"binary", binaries.back().label(), step});
  return binaries.back().column;
}

void MICPProblem::finalize() {
  const int nb = static_cast<int>(binaries.size());
  const int total = num_continuous + nb;
  std::vector<Trip> at = a_trips, gt = g_trips;
  std::vector<double> eq = eq_rhs, in = in_rhs;

  for (const auto& b : binaries) {
    gt.emplace_back(static_cast<int>(in.size()), b.column, 1.0);
    in.push_back(1.0);
    gt.emplace_back(static_cast<int>(in.size()), b.column, -1.0);
    in.push_back(0.0);
  }
  for (const auto& s : sum_rows) {
    if (s.exactly_one) {
      const int row = static_cast<int>(eq.size());
      for (int c : s.cols) at.emplace_back(row, c, 1.0);
      eq.push_back(1.0);
    } else {
      const int row = static_cast<int>(in.size());
      for (int c : s.cols) gt.emplace_back(row, c, 1.0);
      in.push_back(1.0);
    }
  }
  for (auto& imp : implications) {
    double hi = 0.0;
    for (const auto& [c, v] : imp.terms) {
      if (!(lower[c] > -kInf && upper[c] < kInf))
        throw std::logic_error("micp: implication over unboxed column");
      hi += std::max(v * lower[c], v * upper[c]);
    }
    imp.big_m = std::max(0.0, hi - imp.rhs) + 1.0;
    const int row = static_cast<int>(in.size());
    for (const auto& [c, v] : imp.terms) gt.emplace_back(row, c, v);
    if (imp.when_zero) {
      for (int bc : imp.binaries) gt.emplace_back(row, bc, -imp.big_m);
      in.push_back(imp.rhs);
    } else {
      gt.emplace_back(row, imp.binaries.at(0), imp.big_m);
      in.push_back(imp.rhs + imp.big_m);
    }
  }

  relaxation.P.resize(total, total);
  relaxation.P.setFromTriplets(p_trips.begin(), p_trips.end());
  relaxation.q = VectorXd::Zero(total);
  for (const auto& [c, v] : q_terms) relaxation.q[c] += v;
  relaxation.A.resize(static_cast<int>(eq.size()), total);
  relaxation.A.setFromTriplets(at.begin(), at.end());
  relaxation.b =
      Eigen::Map<const VectorXd>(eq.data(), static_cast<Eigen::Index>(eq.size()));
  relaxation.G.resize(static_cast<int>(in.size()), total);
  relaxation.G.setFromTriplets(gt.begin(), gt.end());
  relaxation.h =
      Eigen::Map<const VectorXd>(in.data(), static_cast<Eigen::Index>(in.size()));
}

QP fixed_binary_qp(const MICPProblem& p, const std::vector<int>& values) {
  if (values.size() != p.binaries.size())
    throw std::invalid_argument("micp: fixing vector size mismatch");
  std::vector<int8_t> dom(values.size());
  for (size_t i = 0; i < values.size(); ++i)
    dom[i] = static_cast<int8_t>(values[i] ? 1 : 0);
  return NodeSolver(p).build(dom).qp;
}

MICPSolution solve_micp(const MICPProblem& p, const BnBConfig& cfg) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(clock::now() - t0).count();
  };

  MICPSolution out;
  out.objective = kInf;
  out.best_bound = -kInf;
  const int nb = static_cast<int>(p.binaries.size());
  NodeSolver ns(p);

  // single-binary activation rows, grouped by binary, for the rounding
  // heuristic below
  std::vector<std::vector<const Implication*>> act(static_cast<size_t>(nb));
  for (const Implication& imp : p.implications) {
    if (imp.when_zero || imp.binaries.size() != 1) continue;
    const int bi = imp.binaries[0] - p.num_continuous;
    if (bi >= 0 && bi < nb) act[static_cast<size_t>(bi)].push_back(&imp);
  }
  auto violation_at = [&](int bi, const Eigen::VectorXd& x) {
    double worst = 0.0;
    for (const Implication* imp : act[static_cast<size_t>(bi)]) {
      double lhs = 0.0;
      for (const auto& [col, v] : imp->terms) lhs += v * x[col];
      worst = std::max(worst, lhs - imp->rhs);
    }
    return worst;
  };
  // Cost rarely depends on the binaries directly, so relaxation values carry
  // little signal. Round each sum row to the member whose activation rows are
  // least violated by the relaxed trajectory instead.
  auto heuristic_fix = [&](const std::vector<int8_t>& dom,
                           const Eigen::VectorXd& x) {
    std::vector<int8_t> full = dom;
    for (const SumRow& row : p.sum_rows) {
      bool has_one = false;
      for (int c : row.cols)
        if (full[static_cast<size_t>(c - p.num_continuous)] == 1)
          has_one = true;
      if (has_one) continue;  // propagation already zeroed the siblings
      int chosen = -1;
      double best = kInf;
      for (int c : row.cols) {
        const int bi = c - p.num_continuous;
        if (full[static_cast<size_t>(bi)] == 0) continue;
        const double v = violation_at(bi, x);
        if (v < best - 1e-12) {
          best = v;
          chosen = bi;
        }
      }
      if (chosen < 0) continue;
      const bool engage = row.exactly_one || best <= 1e-6;
      for (int c : row.cols) {
        const int bi = c - p.num_continuous;
        if (full[static_cast<size_t>(bi)] < 0)
          full[static_cast<size_t>(bi)] =
              (engage && bi == chosen) ? int8_t{1} : int8_t{0};
      }
    }
    for (int i = 0; i < nb; ++i)
      if (full[static_cast<size_t>(i)] < 0)
        full[static_cast<size_t>(i)] =
            x[p.binaries[static_cast<size_t>(i)].column] > 0.5 ? 1 : 0;
    return full;
  };
  // second rounding candidate: when any at-most-one block at some step ends
  // up all zero, zero every at-most-one block sharing that step. Turns
  // per-foot swing guesses into whole-body flight, which is the shape a
  // feasible crossing usually has.
  auto sync_disengage = [&](const std::vector<int8_t>& dom,
                            std::vector<int8_t> guess) {
    std::set<int> off_steps;
    for (const SumRow& row : p.sum_rows) {
      if (row.exactly_one) continue;
      bool any = false;
      for (int c : row.cols)
        if (guess[static_cast<size_t>(c - p.num_continuous)] == 1) any = true;
      if (!any)
        off_steps.insert(
            p.binaries[static_cast<size_t>(row.cols[0] - p.num_continuous)]
                .step);
    }
    if (!off_steps.empty())
      for (const SumRow& row : p.sum_rows) {
        if (row.exactly_one) continue;
        const int step =
            p.binaries[static_cast<size_t>(row.cols[0] - p.num_continuous)]
                .step;
        if (!off_steps.count(step)) continue;
        for (int c : row.cols) {
          const int bi = c - p.num_continuous;
          if (dom[static_cast<size_t>(bi)] < 0)
            guess[static_cast<size_t>(bi)] = 0;
        }
      }
    return guess;
  };
  std::set<std::vector<int8_t>> tried;

  std::vector<int8_t> root(static_cast<size_t>(nb), int8_t{-1});
  if (!propagate(p, root)) {
    out.status = MICPStatus::Infeasible;
    out.total_seconds = elapsed();
    return out;
  }

  std::priority_queue<Node, std::vector<Node>, NodeOrder> open;
  long next_id = 0;
  open.push({-kInf, next_id++, std::move(root)});
  double dropped_min = kInf;  // bounds of leaves whose verdict stayed unknown
  bool any_unknown = false;

  auto push_child = [&](const std::vector<int8_t>& dom, int bi, int val,
                        double bound) {
    std::vector<int8_t> child = dom;
    child[static_cast<size_t>(bi)] = static_cast<int8_t>(val);
    if (propagate(p, child)) open.push({bound, next_id++, std::move(child)});
  };

  auto accept = [&](const QPSolution& sol, const NodeSolver::Built& bd) {
    const double obj = sol.objective + bd.offset;
    if (obj >= out.objective - 1e-12) return;
    out.objective = obj;
    out.x = bd.expand(sol.x);
    out.binary_values.assign(static_cast<size_t>(nb), 0);
    for (int i = 0; i < nb; ++i)
      out.binary_values[static_cast<size_t>(i)] =
          out.x[p.binaries[static_cast<size_t>(i)].column] > 0.5 ? 1 : 0;
    out.incumbent_seconds = elapsed();
  };

  auto finish = [&](MICPStatus st, double bound) {
    out.status = st;
    out.best_bound = bound;
    out.total_seconds = elapsed();
    if (st == MICPStatus::Optimal) record_audit(verify_solution(p, out.x));
    return out;
  };

  // builder-provided assignments, solved once each before branching
  for (const std::vector<int>& hint : p.hints) {
    if (hint.size() != static_cast<size_t>(nb)) continue;
    if (elapsed() > cfg.time_limit) break;
    std::vector<int8_t> dom(hint.size());
    for (size_t i = 0; i < hint.size(); ++i)
      dom[i] = static_cast<int8_t>(hint[i] ? 1 : 0);
    if (!propagate(p, dom)) continue;
    if (!tried.insert(dom).second) continue;
    const NodeSolver::Built hb = ns.build(dom);
    const QPSolution hsol = solve_qp(hb.qp, cfg.qp);
    ++out.qp_solves;
    if (hsol.status == QPStatus::Optimal) accept(hsol, hb);
  }

  while (!open.empty()) {
    if (cfg.stop_on_incumbent && out.x.size() > 0) {
      const double gb = std::min(open.top().bound, dropped_min);
      return finish(MICPStatus::Timeout, gb);
    }
    if (elapsed() > cfg.time_limit || out.nodes >= cfg.max_nodes) {
      const double gb = std::min(open.top().bound, dropped_min);
      return finish(MICPStatus::Timeout, gb);
    }
    Node nd = open.top();
    open.pop();

    const double gb = std::min(nd.bound, dropped_min);
    if (out.objective < kInf &&
        out.objective - gb <= cfg.gap * std::max(1.0, std::abs(out.objective)))
      return finish(MICPStatus::Optimal, gb);
    if (nd.bound >= out.objective - 1e-12) continue;

    ++out.nodes;
    const NodeSolver::Built bd = ns.build(nd.dom);
    const QPSolution rel = solve_qp(bd.qp, cfg.qp);
    ++out.qp_solves;
    const bool all_fixed = first_free(nd.dom) < 0;

    if (rel.status == QPStatus::Infeasible) continue;
    if (rel.status == QPStatus::MaxIterations) {
      if (all_fixed) {
        any_unknown = true;
        dropped_min = std::min(dropped_min, nd.bound);
        continue;
      }
      const int bi = first_free(nd.dom);
      push_child(nd.dom, bi, 0, nd.bound);
      push_child(nd.dom, bi, 1, nd.bound);
      continue;
    }

    const double bound = rel.objective + bd.offset;
    if (bound >= out.objective - 1e-12) continue;
    const VectorXd xfull = bd.expand(rel.x);

    // most fractional free binary
    int branch_bi = -1;
    double best_frac = cfg.int_tol;
    for (int i = 0; i < nb; ++i) {
      if (nd.dom[static_cast<size_t>(i)] >= 0) continue;
      const double v = xfull[p.binaries[static_cast<size_t>(i)].column];
      const double frac = std::min(v, 1.0 - v);
      if (frac > best_frac) {
        best_frac = frac;
        branch_bi = i;
      }
    }

    if (branch_bi < 0) {
      if (all_fixed) {
        accept(rel, bd);
        continue;
      }
      // integral relaxation at a partially fixed node: re-solve with every
      // binary pinned so big-M rows hold exactly
      std::vector<int8_t> dom = nd.dom;
      for (int i = 0; i < nb; ++i)
        if (dom[static_cast<size_t>(i)] < 0)
          dom[static_cast<size_t>(i)] =
              xfull[p.binaries[static_cast<size_t>(i)].column] > 0.5 ? 1 : 0;
      const NodeSolver::Built pb = ns.build(dom);
      const QPSolution pol = solve_qp(pb.qp, cfg.qp);
      ++out.qp_solves;
      if (pol.status == QPStatus::Optimal) {
        accept(pol, pb);
        continue;
      }
      // rounding not exactly feasible: split on the first free binary
      const int bi = first_free(nd.dom);
      push_child(nd.dom, bi, 0, bound);
      push_child(nd.dom, bi, 1, bound);
      continue;
    }

    // one rounding attempt per distinct assignment; keeps cost-degenerate
    // binary blocks from turning best-first search into plain enumeration
    const std::vector<int8_t> guess = heuristic_fix(nd.dom, xfull);
    for (const std::vector<int8_t>& cand :
         {guess, sync_disengage(nd.dom, guess)}) {
      if (!tried.insert(cand).second) continue;
      const NodeSolver::Built hb = ns.build(cand);
      const QPSolution hsol = solve_qp(hb.qp, cfg.qp);
      ++out.qp_solves;
      if (hsol.status == QPStatus::Optimal) accept(hsol, hb);
    }

    push_child(nd.dom, branch_bi, 0, bound);
    push_child(nd.dom, branch_bi, 1, bound);
  }

  if (out.objective < kInf) {
    const double gb = std::min(dropped_min, out.objective);
    if (out.objective - gb <=
        cfg.gap * std::max(1.0, std::abs(out.objective)))
      return finish(MICPStatus::Optimal, gb);
    return finish(MICPStatus::Timeout, gb);
  }
  if (any_unknown) return finish(MICPStatus::Timeout, dropped_min);
  return finish(MICPStatus::Infeasible, kInf);
}

AuditReport verify_solution(const MICPProblem& p, const VectorXd& x) {
  AuditReport rep;
  const double tol = 1e-6;
  auto flag = [&](double violation, const std::string& what) {
    if (violation > tol) {
      rep.ok = false;
      rep.violations.push_back(what);
    }
  };

  for (const auto& b : p.binaries) {
    const double v = x[b.column];
    flag(std::min(std::abs(v), std::abs(1.0 - v)),
         "fractional binary " + b.label());
  }
  for (const auto& s : p.sum_rows) {
    double sum = 0.0;
    for (int c : s.cols) sum += x[c];
    flag(s.exactly_one ? std::abs(sum - 1.0) : sum - 1.0, "sum row violated");
  }
  for (const auto& imp : p.implications) {
    double hsum = 0.0;
    for (int bc : imp.binaries) hsum += x[bc];
    const bool active = imp.when_zero ? hsum <= tol : hsum >= 1.0 - tol;
    if (!active) continue;
    double lhs = 0.0;
    for (const auto& [c, v] : imp.terms) lhs += v * x[c];
    const double viol = lhs - imp.rhs;
    rep.max_implication_violation =
        std::max(rep.max_implication_violation, viol);
    flag(viol, "implication violated");
  }

  if (p.relaxation.vars() == static_cast<int>(x.size())) {
    const QP& r = p.relaxation;
    if (r.A.rows() > 0)
      flag((r.A * x - r.b).cwiseAbs().maxCoeff(), "equality row residual");
    if (r.G.rows() > 0)
      flag((r.G * x - r.h).maxCoeff(), "inequality row violated");
  }

  const bool trajectory = p.steps >= 1 &&
                          p.num_continuous == MICPProblem::kStride * p.steps;
  if (!trajectory) return rep;

  if (p.kind != ProblemKind::Retarget) {
    const Vec3 g(0.0, 0.0, -9.81);
    for (int k = 0; k < p.steps; ++k) {
      for (int c = 0; c < 3; ++c) {
        if (k >= 1) {
          flag(std::abs(x[p.var_r(k, c)] - x[p.var_r(k - 1, c)] -
                        p.dt * x[p.var_rd(k, c)]),
               "position integrator residual");
          flag(std::abs(x[p.var_rd(k, c)] - x[p.var_rd(k - 1, c)] -
                        p.dt * x[p.var_rdd(k, c)]),
               "velocity integrator residual");
          flag(std::abs(x[p.var_th(k, c)] - x[p.var_th(k - 1, c)] -
                        p.dt * x[p.var_thd(k, c)]),
               "attitude integrator residual");
          for (int j = 0; j < kNumFeet; ++j)
            flag(std::abs(x[p.var_p(k, j, c)] - x[p.var_p(k - 1, j, c)] -
                          p.dt * x[p.var_pd(k, j, c)]),
                 "foot integrator residual");
        }
        double fsum = 0.0;
        for (int j = 0; j < kNumFeet; ++j) fsum += x[p.var_f(k, j, c)];
        const double dyn = std::abs(p.robot.mass * x[p.var_rdd(k, c)] - fsum -
                                    p.robot.mass * g[c]);
        rep.max_dynamics_residual = std::max(rep.max_dynamics_residual, dyn);
        flag(dyn, "force balance residual");
      }
    }
  }

  if (static_cast<int>(p.yaw_ref.size()) == p.steps) {
    for (int k = 0; k < p.steps; ++k) {
      const Eigen::Matrix3d R = rotation_z(p.yaw_ref[static_cast<size_t>(k)]);
      for (int j = 0; j < kNumFeet; ++j) {
        const Vec3 centre = R * p.robot.foot_offset(j);
        for (int c = 0; c < 3; ++c) {
          const double d =
              x[p.var_p(k, j, c)] - x[p.var_r(k, c)] - centre[c];
          flag(std::abs(d) - p.robot.p_dev_max[c], "kinematic box violated");
        }
      }
    }
  }
  return rep;
}

bool validate_big_m(const MICPProblem& p) {
  for (const auto& imp : p.implications) {
    double hi = 0.0;
    for (const auto& [c, v] : imp.terms) {
      if (!(p.lower[c] > -kInf && p.upper[c] < kInf)) return false;
      hi += std::max(v * p.lower[c], v * p.upper[c]);
    }
    if (imp.big_m < hi - imp.rhs) return false;
  }
  return true;
}

AuditStats micp_audit_stats() {
  auto& a = audit();
  std::lock_guard<std::mutex> lock(a.mu);
  return {a.optimal, a.violating, a.first};
}

void micp_audit_reset() {
  auto& a = audit();
  std::lock_guard<std::mutex> lock(a.mu);
  a.optimal = 0;
  a.violating = 0;
  a.first.clear();
}

std::vector<std::string> export_solution_csv(const MICPProblem& p,
                                             const MICPSolution& sol,
                                             const std::string& dir,
                                             const std::string& prefix) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::vector<std::string> paths;
  const bool trajectory = p.steps >= 1 &&
                          p.num_continuous == MICPProblem::kStride * p.steps;

  auto open_file = [&](const std::string& name) {
    const std::string path = (fs::path(dir) / (prefix + "_" + name)).string();
    paths.push_back(path);
    return std::ofstream(path);
  };

  if (trajectory && sol.x.size() >= p.num_continuous) {
    {
      auto f = open_file("base.csv");
      f << "t,r_x,r_y,r_z,rd_x,rd_y,rd_z,rdd_x,rdd_y,rdd_z\n";
      for (int k = 0; k < p.steps; ++k) {
        f << k * p.dt;
        for (int c = 0; c < 3; ++c) f << "," << sol.x[p.var_r(k, c)];
        for (int c = 0; c < 3; ++c) f << "," << sol.x[p.var_rd(k, c)];
        for (int c = 0; c < 3; ++c) f << "," << sol.x[p.var_rdd(k, c)];
        f << "\n";
      }
    }
    {
      auto f = open_file("attitude.csv");
      f << "t,th_x,th_y,th_z,thd_x,thd_y,thd_z,thdd_x,thdd_y,thdd_z\n";
      for (int k = 0; k < p.steps; ++k) {
        f << k * p.dt;
        for (int c = 0; c < 3; ++c) f << "," << sol.x[p.var_th(k, c)];
        for (int c = 0; c < 3; ++c) f << "," << sol.x[p.var_thd(k, c)];
        for (int c = 0; c < 3; ++c) f << "," << sol.x[p.var_thdd(k, c)];
        f << "\n";
      }
    }
    {
      auto f = open_file("feet.csv");
      f << "t";
      for (int j = 0; j < kNumFeet; ++j)
        f << ",p" << j << "_x,p" << j << "_y,p" << j << "_z";
      for (int j = 0; j < kNumFeet; ++j)
        f << ",pd" << j << "_x,pd" << j << "_y,pd" << j << "_z";
      f << "\n";
      for (int k = 0; k < p.steps; ++k) {
        f << k * p.dt;
        for (int j = 0; j < kNumFeet; ++j)
          for (int c = 0; c < 3; ++c) f << "," << sol.x[p.var_p(k, j, c)];
        for (int j = 0; j < kNumFeet; ++j)
          for (int c = 0; c < 3; ++c) f << "," << sol.x[p.var_pd(k, j, c)];
        f << "\n";
      }
    }
    {
      auto f = open_file("force.csv");
      f << "t";
      for (int j = 0; j < kNumFeet; ++j)
        f << ",f" << j << "_x,f" << j << "_y,f" << j << "_z";
      f << "\n";
      for (int k = 0; k < p.steps; ++k) {
        f << k * p.dt;
        for (int j = 0; j < kNumFeet; ++j)
          for (int c = 0; c < 3; ++c) f << "," << sol.x[p.var_f(k, j, c)];
        f << "\n";
      }
    }
  }
  {
    auto f = open_file("binaries.csv");
    f << "label,group,region,step,foot,value\n";
    for (size_t i = 0; i < p.binaries.size(); ++i) {
      const auto& b = p.binaries[i];
      const int v = i < sol.binary_values.size() ? sol.binary_values[i] : -1;
      f << b.label() << "," << b.group << "," << b.region << "," << b.step
        << "," << b.foot << "," << v << "\n";
    }
  }
  return paths;
}

std::string dump_problem_lp(const MICPProblem& p) {
  std::ostringstream os;
  const auto& r = p.relaxation;
  os << "\\ mixed-integer convex program: " << r.vars() << " columns ("
     << p.num_continuous << " continuous, " << p.binaries.size()
     << " binary), " << r.eqs() << " equalities, " << r.ineqs()
     << " inequalities\n";
  os << "minimize\n ";
  bool first = true;
  for (int j = 0; j < r.P.outerSize(); ++j)
    for (SpMat::InnerIterator it(r.P, j); it; ++it)
      if (it.row() == it.col() && it.value() != 0.0) {
        os << (first ? "" : " + ") << 0.5 * it.value() << " x" << it.row()
           << "^2";
        first = false;
      }
  for (Eigen::Index i = 0; i < r.q.size(); ++i)
    if (r.q[i] != 0.0) {
      os << (first ? "" : " + ") << r.q[i] << " x" << i;
      first = false;
    }
  if (first) os << "0";
  os << "\nsubject to\n";

  auto rows_of = [](const SpMat& M) {
    std::vector<std::vector<std::pair<int, double>>> rows(
        static_cast<size_t>(M.rows()));
    for (int j = 0; j < M.outerSize(); ++j)
      for (SpMat::InnerIterator it(M, j); it; ++it)
        rows[static_cast<size_t>(it.row())].emplace_back(
            static_cast<int>(it.col()), it.value());
    return rows;
  };
  const auto arows = rows_of(r.A);
  for (size_t i = 0; i < arows.size(); ++i) {
    os << " e" << i << ":";
    for (const auto& [c, v] : arows[i]) os << " + " << v << " x" << c;
    os << " = " << r.b[static_cast<Eigen::Index>(i)] << "\n";
  }
  const auto grows = rows_of(r.G);
  for (size_t i = 0; i < grows.size(); ++i) {
    os << " i" << i << ":";
    for (const auto& [c, v] : grows[i]) os << " + " << v << " x" << c;
    os << " <= " << r.h[static_cast<Eigen::Index>(i)] << "\n";
  }
  os << "binaries\n";
  for (const auto& b : p.binaries)
    os << " x" << b.column << " \\ " << b.label() << "\n";
  os << "end\n";
  return os.str();
}

}  // namespace locoplan
