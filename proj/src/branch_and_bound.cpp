#include <algorithm>
#include <chrono>
#include <cmath>
#include <queue>
#include <functional>

#include "ctstl/errors.hpp"
#include "ctstl/miqp.hpp"

namespace ctstl {

namespace {

struct Node {
  long id;
  long parent;
  double bound;
  long seq;
  std::vector<signed char> fix;  // per binary: -1 free, 0, 1
};

struct NodeOrder {
  bool operator()(const Node& a, const Node& b) const {
    if (a.bound != b.bound) return a.bound > b.bound;
    return a.seq > b.seq;
  }
};

}  // namespace

Solution branch_and_bound(const MiqpModel& model, const BnbOptions& options) {
  model.validate();
  const auto start = std::chrono::steady_clock::now();
  const auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };
  const std::vector<int> bins = model.binaries();
  const int nv = model.num_variables();
  const auto& signs = model.sign_indicators();
  std::vector<bool> implied(bins.size(), false);
  for (size_t b = 0; b < bins.size(); ++b) implied[b] = signs.count(bins[b]) > 0;
  const auto sign_value = [&](int col, const std::vector<double>& x) {
    const auto& ind = signs.at(col);
    double e = ind.constant;
    for (const auto& [c, v] : ind.expr) e += v * x[c];
    return e < 0.0 ? 1 : 0;
  };
  std::vector<double> base_lo(nv), base_hi(nv);
  for (int i = 0; i < nv; ++i) {
    base_lo[i] = model.variables()[i].lower;
    base_hi[i] = model.variables()[i].upper;
  }

  Solution best;
  best.status = SolveStatus::Infeasible;
  best.objective = kInfinity;
  SolveStats stats;
  bool trouble = false;
  bool truncated = false;
  std::vector<NodeRecord> trace;

  std::priority_queue<Node, std::vector<Node>, NodeOrder> open;
  long next_id = 0;
  long next_seq = 0;
  open.push({next_id++, -1, -kInfinity, next_seq++, std::vector<signed char>(bins.size(), -1)});

  const auto bounds_for = [&](const Node& node, std::vector<double>& lo,
                              std::vector<double>& hi) {
    lo = base_lo;
    hi = base_hi;
    for (size_t b = 0; b < bins.size(); ++b) {
      if (node.fix[b] >= 0) lo[bins[b]] = hi[bins[b]] = node.fix[b];
    }
  };

  const auto offer = [&](const Solution& inc) {
    if (inc.status == SolveStatus::Optimal && inc.objective < best.objective) {
      best.status = SolveStatus::Optimal;
      best.values = inc.values;
      best.objective = inc.objective;
      ++stats.incumbents;
    }
  };
  const auto solve_fixed = [&](const std::vector<signed char>& fix) {
    std::vector<double> lo = base_lo, hi = base_hi;
    for (size_t b = 0; b < bins.size(); ++b) {
      if (fix[b] >= 0) lo[bins[b]] = hi[bins[b]] = fix[b];
    }
    Solution r = solve_qp_bounds(model, lo, hi, options.qp);
    ++stats.qp_solves;
    stats.iterations += r.stats.iterations;
    return r;
  };
  const auto fraction = [](double v) { return std::min(v - std::floor(v), std::ceil(v) - v); };

  // Depth-first search that rounds the most fractional binary (sign
  // indicators last) and backtracks until an incumbent appears or the solve
  // budget runs out.
  long budget = 0;
  std::function<bool(std::vector<signed char>&, const Solution&)> dive =
      [&](std::vector<signed char>& fix, const Solution& s) -> bool {
    if (budget <= 0 || s.objective >= best.objective - options.gap) return false;
    int pick = -1;
    for (bool pass_implied : {false, true}) {
      double best_frac = options.integrality_tol;
      for (size_t b = 0; b < bins.size(); ++b) {
        if (fix[b] >= 0 || implied[b] != pass_implied) continue;
        const double f = fraction(s.values[bins[b]]);
        if (f > best_frac) {
          best_frac = f;
          pick = static_cast<int>(b);
        }
      }
      if (pick >= 0) break;
      if (pass_implied) continue;
      std::vector<signed char> pinned = fix;
      for (size_t b = 0; b < bins.size(); ++b) {
        if (pinned[b] >= 0) continue;
        pinned[b] = static_cast<signed char>(implied[b] ? sign_value(bins[b], s.values)
                                                        : std::lround(s.values[bins[b]]));
      }
      --budget;
      const Solution inc = solve_fixed(pinned);
      offer(inc);
      if (inc.status == SolveStatus::Optimal) return true;
    }
    if (pick < 0) {
      std::vector<signed char> pinned = fix;
      for (size_t b = 0; b < bins.size(); ++b) {
        if (pinned[b] < 0) pinned[b] = static_cast<signed char>(std::lround(s.values[bins[b]]));
      }
      --budget;
      const Solution inc = solve_fixed(pinned);
      offer(inc);
      return inc.status == SolveStatus::Optimal;
    }
    const signed char first = s.values[bins[pick]] >= 0.5 ? 1 : 0;
    for (signed char side : {first, static_cast<signed char>(1 - first)}) {
      if (budget <= 0) break;
      fix[pick] = side;
      --budget;
      const Solution next = solve_fixed(fix);
      const bool found = next.status == SolveStatus::Optimal && dive(fix, next);
      fix[pick] = -1;
      if (found) return true;
    }
    return false;
  };

  const int batch = std::max(1, options.batch);
  while (!open.empty()) {
    if (stats.nodes >= options.max_nodes || elapsed() > options.time_limit) {
      truncated = true;
      break;
    }
    std::vector<Node> round;
    while (!open.empty() && static_cast<int>(round.size()) < batch) {
      Node n = open.top();
      open.pop();
      if (n.bound >= best.objective - options.gap) continue;
      round.push_back(std::move(n));
    }
    if (round.empty()) break;

    std::vector<Solution> relax(round.size());
#pragma omp parallel for schedule(dynamic, 1) if (options.parallel)
    for (int r = 0; r < static_cast<int>(round.size()); ++r) {
      std::vector<double> lo, hi;
      bounds_for(round[r], lo, hi);
      relax[r] = solve_qp_bounds(model, lo, hi, options.qp);
    }

    for (size_t r = 0; r < round.size(); ++r) {
      const Node& node = round[r];
      const Solution& s = relax[r];
      ++stats.nodes;
      ++stats.qp_solves;
      stats.iterations += s.stats.iterations;
      if (options.record_trace) {
        trace.push_back({node.id, node.parent,
                         s.status == SolveStatus::Optimal ? s.objective : kInfinity});
      }
      if (s.status == SolveStatus::Infeasible) continue;

      double bound = node.bound;
      int branch = -1;
      bool closed = false;
      if (s.status == SolveStatus::Optimal) {
        bound = std::max(bound, s.objective);
        if (bound >= best.objective - options.gap) continue;
        if (options.dive_every > 0 && best.status != SolveStatus::Optimal &&
            (stats.nodes - 1) % options.dive_every == 0) {
          budget = options.dive_budget;
          std::vector<signed char> fix = node.fix;
          dive(fix, s);
          if (bound >= best.objective - options.gap) continue;
        }
        // Ordinary binaries first; sign indicators only when completing them
        // from the relaxation does not close the node.
        for (bool pass_implied : {false, true}) {
          double best_frac = options.integrality_tol;
          for (size_t b = 0; b < bins.size(); ++b) {
            if (node.fix[b] >= 0 || implied[b] != pass_implied) continue;
            const double v = s.values[bins[b]];
            const double frac = std::min(v - std::floor(v), std::ceil(v) - v);
            if (frac > best_frac) {
              best_frac = frac;
              branch = static_cast<int>(b);
            }
          }
          if (branch >= 0 || pass_implied) break;
          // Ordinary binaries are integral: try the sign completion.
          bool fractional = false;
          Node pinned = node;
          for (size_t b = 0; b < bins.size(); ++b) {
            if (pinned.fix[b] >= 0) continue;
            const double v = s.values[bins[b]];
            if (implied[b]) {
              fractional = fractional || std::min(v - std::floor(v), std::ceil(v) - v) >
                                             options.integrality_tol;
              pinned.fix[b] = static_cast<signed char>(sign_value(bins[b], s.values));
            } else {
              pinned.fix[b] = static_cast<signed char>(std::lround(v));
            }
          }
          if (!fractional) break;
          std::vector<double> lo, hi;
          bounds_for(pinned, lo, hi);
          const Solution inc = solve_qp_bounds(model, lo, hi, options.qp);
          ++stats.qp_solves;
          stats.iterations += inc.stats.iterations;
          if (inc.status == SolveStatus::Optimal && inc.objective < best.objective) {
            best.status = SolveStatus::Optimal;
            best.values = inc.values;
            best.objective = inc.objective;
            ++stats.incumbents;
          }
          if (inc.status == SolveStatus::Optimal && inc.objective <= bound + options.gap) {
            closed = true;
            break;
          }
        }
        if (closed) continue;
      } else {
        // Relaxation failed numerically: keep the parent bound and split the
        // first free binary so the subtree is still explored.
        trouble = true;
        for (size_t b = 0; b < bins.size(); ++b) {
          if (node.fix[b] < 0) {
            branch = static_cast<int>(b);
            break;
          }
        }
        if (branch < 0) continue;
      }

      if (branch < 0) {
        // Integral relaxation: re-solve with every binary pinned.
        Node pinned = node;
        for (size_t b = 0; b < bins.size(); ++b) {
          if (pinned.fix[b] < 0) {
            pinned.fix[b] = static_cast<signed char>(std::lround(s.values[bins[b]]));
          }
        }
        std::vector<double> lo, hi;
        bounds_for(pinned, lo, hi);
        Solution inc = bins.empty() ? s : solve_qp_bounds(model, lo, hi, options.qp);
        if (!bins.empty()) {
          ++stats.qp_solves;
          stats.iterations += inc.stats.iterations;
        }
        if (inc.status == SolveStatus::Optimal && inc.objective < best.objective) {
          best.status = SolveStatus::Optimal;
          best.values = inc.values;
          best.objective = inc.objective;
          ++stats.incumbents;
        } else if (inc.status == SolveStatus::IterLimit) {
          trouble = true;
        }
        continue;
      }

      const double v = s.status == SolveStatus::Optimal ? s.values[bins[branch]] : 0.0;
      const signed char first = v >= 0.5 ? 1 : 0;
      for (signed char side : {first, static_cast<signed char>(1 - first)}) {
        Node child{next_id++, node.id, bound, next_seq++, node.fix};
        child.fix[branch] = side;
        open.push(std::move(child));
      }
    }
  }

  if (best.status == SolveStatus::Optimal && (truncated || trouble) && !open.empty()) {
    best.status = SolveStatus::IterLimit;
  } else if (best.status == SolveStatus::Infeasible && (truncated || trouble)) {
    best.status = SolveStatus::IterLimit;
  }
  if (!best.values.empty()) {
    for (int b : bins) best.binary_assignment.push_back(static_cast<int>(std::lround(best.values[b])));
  }
  if (best.status == SolveStatus::Infeasible) {
    best.certificate = "every branch-and-bound leaf is infeasible";
  }
  stats.seconds = elapsed();
  best.stats = stats;
  best.trace = std::move(trace);
  return best;
}

}  // namespace ctstl
