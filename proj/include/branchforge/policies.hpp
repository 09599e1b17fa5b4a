// Copyright (c) 2026 BranchForge contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "branchforge/bnb.hpp"
#include "branchforge/errors.hpp"
#include "branchforge/milp.hpp"
#include "branchforge/rng.hpp"
#include "branchforge/simplex.hpp"
#include "branchforge/state.hpp"

namespace branchforge {

/// Bound improvement assigned to an infeasible child: large but finite so
/// product scores stay comparable.
inline constexpr double kInfeasibleChildGain = 1e10;
/// Floor inside the product score, mirroring the rule whose collapse the
/// degeneracy probe measures.
inline constexpr double kScoreEpsilon = 1e-6;

inline double product_score(double down_gain, double up_gain, double epsilon = kScoreEpsilon) {
  return std::max(down_gain, epsilon) * std::max(up_gain, epsilon);
}

namespace detail {

inline int argmax_lowest_index(const std::vector<int>& candidates,
                               const std::vector<double>& scores) {
  int best = candidates.front();
  double best_score = scores.front();
  for (std::size_t k = 1; k < candidates.size(); ++k)
    if (scores[k] > best_score) {
      best_score = scores[k];
      best = candidates[k];
    }
  return best;
}

}  // namespace detail

/// Full strong branching: provisionally solves both child LPs of every
/// candidate and scores the pair of bound improvements with the product rule.
class StrongBranchingPolicy : public BranchingPolicy {
 public:
  explicit StrongBranchingPolicy(double epsilon = kScoreEpsilon) : epsilon_(epsilon) {}

  /// Called with every decision made; the degeneracy probe hooks in here.
  std::function<void(const BranchDecision&)> observer;

  BranchDecision decide(const MilpInstance& inst, const BnbNode& node, Rng& /*rng*/) override {
    BranchDecision d;
    d.candidate_set = candidates(node.lp, inst);
    d.scores.reserve(d.candidate_set.size());
    for (int j : d.candidate_set) {
      const double gain_down = child_gain(inst, node, j, BranchDirection::Down);
      const double gain_up = child_gain(inst, node, j, BranchDirection::Up);
      d.scores.push_back(product_score(gain_down, gain_up, epsilon_));
    }
    d.var_index = detail::argmax_lowest_index(d.candidate_set, d.scores);
    if (observer) observer(d);
    return d;
  }

  std::string name() const override { return "sb"; }

  double epsilon() const { return epsilon_; }

 private:
  double child_gain(const MilpInstance& inst, const BnbNode& node, int var,
                    BranchDirection dir) const {
    const auto bounds = child_bounds(node.bound_overrides, inst, var, node.lp.x[var], dir);
    const LpSolution child = solve_lp(inst, bounds);
    if (child.status == LpStatus::Infeasible) return kInfeasibleChildGain;
    if (child.status == LpStatus::IterationLimit)
      throw PolicyError("strong branching: child LP for variable " + std::to_string(var) +
                        " hit the iteration limit");
    return child.objective - node.lp.objective;
  }

  double epsilon_;
};

/// Accumulated per-unit-fractionality gains, one pair of accumulators per
/// variable. Episode-local; never shared across runs.
struct PseudocostState {
  std::vector<double> up_sum, down_sum;
  std::vector<int> up_count, down_count;

  explicit PseudocostState(int n_vars = 0)
      : up_sum(n_vars, 0.0), down_sum(n_vars, 0.0), up_count(n_vars, 0), down_count(n_vars, 0) {}
};

/// Records an observed child gain: the unit cost accumulator receives
/// gain / fractionality_used (f for the down child, 1-f for the up child).
inline void pseudocost_update(PseudocostState& state, int var, BranchDirection dir, double gain,
                              double fractionality) {
  if (dir == BranchDirection::Down) {
    state.down_sum[var] += gain / fractionality;
    state.down_count[var] += 1;
  } else {
    state.up_sum[var] += gain / (1.0 - fractionality);
    state.up_count[var] += 1;
  }
}

namespace detail {

// psi for one direction: averaged unit gain, falling back to the mean over
// initialized variables, then to 1 when nothing has been observed yet.
inline double pseudocost_estimate(const std::vector<double>& sums, const std::vector<int>& counts,
                                  int var) {
  if (counts[var] > 0) return sums[var] / counts[var];
  double total = 0.0;
  int initialized = 0;
  for (std::size_t j = 0; j < sums.size(); ++j)
    if (counts[j] > 0) {
      total += sums[j] / counts[j];
      ++initialized;
    }
  return initialized > 0 ? total / initialized : 1.0;
}

}  // namespace detail

class PseudocostPolicy : public BranchingPolicy {
 public:
  explicit PseudocostPolicy(int n_vars) : state_(n_vars) {}

  BranchDecision decide(const MilpInstance& inst, const BnbNode& node, Rng& /*rng*/) override {
    BranchDecision d;
    d.candidate_set = candidates(node.lp, inst);
    for (int j : d.candidate_set) {
      const double f = node.lp.x[j] - std::floor(node.lp.x[j]);
      const double down_est = detail::pseudocost_estimate(state_.down_sum, state_.down_count, j) * f;
      const double up_est = detail::pseudocost_estimate(state_.up_sum, state_.up_count, j) * (1.0 - f);
      d.scores.push_back(product_score(down_est, up_est));
    }
    d.var_index = detail::argmax_lowest_index(d.candidate_set, d.scores);
    return d;
  }

  void observe_branching(int var, std::optional<double> down_gain, std::optional<double> up_gain,
                         double fractionality) override {
    if (down_gain) pseudocost_update(state_, var, BranchDirection::Down, *down_gain, fractionality);
    if (up_gain) pseudocost_update(state_, var, BranchDirection::Up, *up_gain, fractionality);
  }

  std::string name() const override { return "pseudocost"; }

  const PseudocostState& state() const { return state_; }
  PseudocostState& state() { return state_; }

 private:
  PseudocostState state_;
};

enum class BaselineKind { Random, MostFractional };

class BaselinePolicy : public BranchingPolicy {
 public:
  explicit BaselinePolicy(BaselineKind kind) : kind_(kind) {}

  BranchDecision decide(const MilpInstance& inst, const BnbNode& node, Rng& rng) override {
    BranchDecision d;
    d.candidate_set = candidates(node.lp, inst);
    if (kind_ == BaselineKind::Random) {
      d.scores.assign(d.candidate_set.size(), 0.0);
      const auto pick =
          static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(d.candidate_set.size()) - 1));
      d.scores[pick] = 1.0;
      d.var_index = d.candidate_set[pick];
    } else {
      for (int j : d.candidate_set) {
        const double f = node.lp.x[j] - std::floor(node.lp.x[j]);
        d.scores.push_back(std::min(f, 1.0 - f));
      }
      d.var_index = detail::argmax_lowest_index(d.candidate_set, d.scores);
    }
    return d;
  }

  std::string name() const override {
    return kind_ == BaselineKind::Random ? "random" : "mostfrac";
  }

 private:
  BaselineKind kind_;
};

enum class MixtureGranularity { PerDecision, PerEpisode };

/// DAgger interaction policy: acts with the learned model most of the time
/// and with the expert at rate p_expert. Every expert-labeled visit is passed
/// to the sample sink; with label_all_states set, the expert labels every
/// visited state even when the model acts.
class MixturePolicy : public BranchingPolicy {
 public:
  using SampleSink = std::function<void(BipartiteState)>;

  MixturePolicy(BranchingPolicy& model, BranchingPolicy& expert, double p_expert,
                SampleSink sink = {}, bool label_all_states = false,
                MixtureGranularity granularity = MixtureGranularity::PerDecision)
      : model_(model),
        expert_(expert),
        p_expert_(p_expert),
        sink_(std::move(sink)),
        label_all_(label_all_states),
        granularity_(granularity) {
    if (p_expert < 0.0 || p_expert > 1.0)
      throw Error("mixture policy: p_expert must be within [0, 1]");
  }

  BranchDecision decide(const MilpInstance& inst, const BnbNode& node, Rng& rng) override {
    bool use_expert;
    if (granularity_ == MixtureGranularity::PerDecision) {
      use_expert = rng.bernoulli(p_expert_);
    } else {
      if (!episode_expert_) episode_expert_ = rng.bernoulli(p_expert_);
      use_expert = *episode_expert_;
    }
    ++decisions_;
    if (use_expert) ++expert_decisions_;

    std::optional<BranchDecision> expert_decision;
    if (use_expert || label_all_) {
      expert_decision = expert_.decide(inst, node, rng);
      if (sink_) {
        BipartiteState state = extract_state(inst, node, node.lp);
        state.expert_action = expert_decision->var_index;
        sink_(std::move(state));
      }
    }

    BranchDecision d = use_expert ? *expert_decision : model_.decide(inst, node, rng);
    d.expert_used = use_expert;
    return d;
  }

  void observe_branching(int var, std::optional<double> down_gain, std::optional<double> up_gain,
                         double fractionality) override {
    model_.observe_branching(var, down_gain, up_gain, fractionality);
    if (&expert_ != &model_) expert_.observe_branching(var, down_gain, up_gain, fractionality);
  }

  std::string name() const override {
    return "mixture(" + model_.name() + "," + expert_.name() + ")";
  }

  long decisions() const { return decisions_; }
  long expert_decisions() const { return expert_decisions_; }

 private:
  BranchingPolicy& model_;
  BranchingPolicy& expert_;
  double p_expert_;
  SampleSink sink_;
  bool label_all_;
  MixtureGranularity granularity_;
  std::optional<bool> episode_expert_;
  long decisions_ = 0;
  long expert_decisions_ = 0;
};

}  // namespace branchforge
