// Copyright (c) 2026 BranchForge contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "branchforge/errors.hpp"
#include "branchforge/milp.hpp"
#include "branchforge/rng.hpp"
#include "branchforge/simplex.hpp"

namespace branchforge {

inline constexpr double kIntegralityTol = 1e-6;
inline constexpr double kPruneTol = 1e-9;

struct BnbNode {
  BoundOverrides bound_overrides;
  LpSolution lp;
  int depth = 0;
  std::int64_t node_id = 0;
};

/// Per-step record of one branch-and-bound run. z has exactly one entry per
/// step 1..T and is non-decreasing; after the tree closes the closing bound is
/// repeated for the remaining budget.
struct BnbTrace {
  std::vector<double> z;
  double z0 = 0.0;
  std::optional<double> incumbent;
  std::vector<std::optional<double>> incumbent_step;  // incumbent after each step
  std::optional<int> steps_to_close;
  std::string policy_name;
  std::uint64_t seed = 0;
};

struct BranchDecision {
  int var_index = -1;
  std::vector<double> scores;      // aligned with candidate_set
  bool expert_used = false;        // set by the mixture policy
  std::vector<int> candidate_set;  // fractional integer vars, ascending
};

/// Fractional integer variables of an LP-optimal node, ascending index order.
/// Returns an empty list for integral solutions.
inline std::vector<int> fractional_candidates(const LpSolution& lp, const MilpInstance& inst) {
  std::vector<int> out;
  for (int j = 0; j < inst.n_vars; ++j) {
    if (!inst.is_integer[j]) continue;
    if (std::abs(lp.x[j] - std::round(lp.x[j])) > kIntegralityTol) out.push_back(j);
  }
  return out;
}

/// Throwing variant: policies require a non-empty candidate set.
inline std::vector<int> candidates(const LpSolution& lp, const MilpInstance& inst) {
  if (lp.status != LpStatus::Optimal) throw NonOptimalLp("candidates: LP not optimal");
  auto out = fractional_candidates(lp, inst);
  if (out.empty()) throw NoFractionalCandidates("node LP solution is integral");
  return out;
}

inline bool is_integral(const LpSolution& lp, const MilpInstance& inst) {
  return fractional_candidates(lp, inst).empty();
}

enum class BranchDirection { Down, Up };

/// Child bound set obtained by splitting `var` at its fractional LP value.
inline BoundOverrides child_bounds(const BoundOverrides& parent, const MilpInstance& inst,
                                   int var, double x_value, BranchDirection dir) {
  BoundOverrides out = parent;
  auto it = out.find(var);
  double lo = it != out.end() ? it->second.lb : inst.var_lb[var];
  double hi = it != out.end() ? it->second.ub : inst.var_ub[var];
  if (dir == BranchDirection::Down)
    hi = std::floor(x_value);
  else
    lo = std::ceil(x_value);
  out[var] = {lo, hi};
  return out;
}

/// Branching rule interface. decide() must return a variable from the node's
/// candidate set; observe_branching() reports the realized child gains after
/// the engine expands the node (pseudo-cost bookkeeping).
class BranchingPolicy {
 public:
  virtual ~BranchingPolicy() = default;
  virtual BranchDecision decide(const MilpInstance& inst, const BnbNode& node, Rng& rng) = 0;
  virtual void observe_branching(int /*var*/, std::optional<double> /*down_gain*/,
                                 std::optional<double> /*up_gain*/, double /*fractionality*/) {}
  virtual std::string name() const = 0;
};

/// Minimum LP bound over the open nodes; with none left the tree is closed
/// and the bound equals the incumbent. nullopt only for an infeasible MILP
/// (no open nodes, no incumbent).
inline std::optional<double> global_dual_bound(std::span<const double> open_bounds,
                                               std::optional<double> incumbent) {
  if (!open_bounds.empty()) return *std::min_element(open_bounds.begin(), open_bounds.end());
  return incumbent;
}

/// Cumulative reward: the discretized dual integral sum_t (z[t] - z0), one
/// unit of time per node expansion. Larger is better.
inline double dual_integral(const BnbTrace& trace) {
  double r = 0.0;
  for (double z : trace.z) r += z - trace.z0;
  return r;
}

struct BnbOptions {
  int budget = 100;
  std::uint64_t seed = 0;
  bool solve_up_child_first = false;  // exercised by tests; the trace must not depend on it
};

namespace detail {

struct OpenNodeOrder {
  bool operator()(const std::shared_ptr<BnbNode>& a, const std::shared_ptr<BnbNode>& b) const {
    if (a->lp.objective != b->lp.objective) return a->lp.objective < b->lp.objective;
    return a->node_id < b->node_id;
  }
};

}  // namespace detail

/// Branch-and-bound driver: best-bound node selection (ties to the lowest
/// node id), one policy decision and two child LP solves per step, pruning by
/// bound and infeasibility. The time axis is node expansions, so traces are
/// hardware-independent.
inline BnbTrace run_bnb(const MilpInstance& inst, BranchingPolicy& policy,
                        const BnbOptions& options) {
  if (options.budget < 1) throw Error("run_bnb: budget must be >= 1");
  BnbTrace trace;
  trace.policy_name = policy.name();
  trace.seed = options.seed;
  Rng rng(derive_seed({options.seed, 0xb4bced0aULL}));

  std::set<std::shared_ptr<BnbNode>, detail::OpenNodeOrder> open;
  std::optional<double> incumbent;
  std::int64_t next_id = 0;
  double last_bound = 0.0;

  auto root = std::make_shared<BnbNode>();
  root->lp = solve_lp(inst);
  root->node_id = next_id++;
  if (root->lp.status == LpStatus::IterationLimit)
    throw Error("run_bnb: root LP hit the iteration limit");
  if (root->lp.status == LpStatus::Infeasible) {
    trace.z0 = 0.0;  // infeasible MILP: empty tree, flat trace
    trace.steps_to_close = 0;
  } else {
    trace.z0 = root->lp.objective;
    last_bound = trace.z0;
    if (is_integral(root->lp, inst)) {
      incumbent = root->lp.objective;
      trace.steps_to_close = 0;
    } else {
      open.insert(root);
    }
  }

  const auto record_step = [&] {
    std::vector<double> bounds;
    bounds.reserve(open.size());
    for (const auto& n : open) bounds.push_back(n->lp.objective);
    const auto gb = global_dual_bound(bounds, incumbent);
    // Child bounds can dip below the parent by the LP tolerance; clamp so the
    // recorded sequence is monotone as the trace contract requires.
    last_bound = std::max(last_bound, gb.value_or(last_bound));
    trace.z.push_back(last_bound);
    trace.incumbent_step.push_back(incumbent);
  };

  const auto try_insert_child = [&](std::shared_ptr<BnbNode> child) {
    if (child->lp.status == LpStatus::Infeasible) return;
    if (child->lp.status == LpStatus::IterationLimit)
      throw Error("run_bnb: child LP hit the iteration limit at node " +
                  std::to_string(child->node_id));
    if (incumbent && child->lp.objective >= *incumbent - kPruneTol) return;
    if (is_integral(child->lp, inst)) {
      if (!incumbent || child->lp.objective < *incumbent) incumbent = child->lp.objective;
      return;
    }
    open.insert(std::move(child));
  };

  // Nodes dominated by a newer incumbent sit at the high end of the order.
  const auto purge_prunable = [&] {
    if (!incumbent) return;
    while (!open.empty()) {
      auto last = std::prev(open.end());
      if ((*last)->lp.objective >= *incumbent - kPruneTol)
        open.erase(last);
      else
        break;
    }
  };

  for (int step = 1; step <= options.budget; ++step) {
    if (open.empty()) {  // closed tree: hold the closing bound
      record_step();
      continue;
    }
    auto it = open.begin();
    std::shared_ptr<BnbNode> node = *it;
    open.erase(it);

    BranchDecision decision;
    try {
      decision = policy.decide(inst, *node, rng);
    } catch (const Error& e) {
      throw PolicyError("policy '" + policy.name() + "' failed at node " +
                        std::to_string(node->node_id) + " (depth " +
                        std::to_string(node->depth) + "): " + e.what());
    }
    const int var = decision.var_index;
    const double xj = node->lp.x[var];
    const double frac = xj - std::floor(xj);

    auto down = std::make_shared<BnbNode>();
    down->bound_overrides = child_bounds(node->bound_overrides, inst, var, xj, BranchDirection::Down);
    down->depth = node->depth + 1;
    down->node_id = next_id++;
    auto up = std::make_shared<BnbNode>();
    up->bound_overrides = child_bounds(node->bound_overrides, inst, var, xj, BranchDirection::Up);
    up->depth = node->depth + 1;
    up->node_id = next_id++;
    if (options.solve_up_child_first) {
      up->lp = solve_lp(inst, up->bound_overrides);
      down->lp = solve_lp(inst, down->bound_overrides);
    } else {
      down->lp = solve_lp(inst, down->bound_overrides);
      up->lp = solve_lp(inst, up->bound_overrides);
    }

    std::optional<double> down_gain, up_gain;
    if (down->lp.status == LpStatus::Optimal) down_gain = down->lp.objective - node->lp.objective;
    if (up->lp.status == LpStatus::Optimal) up_gain = up->lp.objective - node->lp.objective;
    policy.observe_branching(var, down_gain, up_gain, frac);

    try_insert_child(std::move(down));
    try_insert_child(std::move(up));
    purge_prunable();
    if (open.empty() && !trace.steps_to_close) trace.steps_to_close = step;
    record_step();
  }

  trace.incumbent = incumbent;
  return trace;
}

inline BnbTrace run_bnb(const MilpInstance& inst, BranchingPolicy& policy, int budget,
                        std::uint64_t seed) {
  BnbOptions opt;
  opt.budget = budget;
  opt.seed = seed;
  return run_bnb(inst, policy, opt);
}

namespace detail {

/// Shortest decimal text that round-trips the double; locale-independent.
inline std::string fmt_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

/// Writes the step CSV and the JSON sidecar for a finished run.
inline void write_trace(const BnbTrace& trace, const std::string& csv_path,
                        const std::string& json_path) {
  std::ofstream csv(csv_path, std::ios::binary);
  if (!csv) throw IoError("cannot open '" + csv_path + "' for writing");
  csv << "step,global_dual_bound,incumbent_or_empty\n";
  for (std::size_t t = 0; t < trace.z.size(); ++t) {
    csv << (t + 1) << ',' << detail::fmt_double(trace.z[t]) << ',';
    if (t < trace.incumbent_step.size() && trace.incumbent_step[t])
      csv << detail::fmt_double(*trace.incumbent_step[t]);
    csv << '\n';
  }

  nlohmann::ordered_json j;
  j["z0"] = trace.z0;
  j["policy_name"] = trace.policy_name;
  j["seed"] = trace.seed;
  j["reward"] = dual_integral(trace);
  j["steps_to_close"] =
      trace.steps_to_close ? nlohmann::json(*trace.steps_to_close) : nlohmann::json(nullptr);
  j["incumbent"] = trace.incumbent ? nlohmann::json(*trace.incumbent) : nlohmann::json(nullptr);
  std::ofstream js(json_path, std::ios::binary);
  if (!js) throw IoError("cannot open '" + json_path + "' for writing");
  js << j.dump(2) << '\n';
}

}  // namespace branchforge
