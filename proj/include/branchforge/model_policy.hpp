// Copyright (c) 2026 BranchForge contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "branchforge/bnb.hpp"
#include "branchforge/nn.hpp"
#include "branchforge/policies.hpp"
#include "branchforge/state.hpp"

namespace branchforge {

/// Runs the policy network at every node and branches on the most probable
/// candidate (ties to the lowest index). Inference only; never samples.
class ModelPolicy : public BranchingPolicy {
 public:
  explicit ModelPolicy(ModelParams model, std::string name = "model")
      : model_(std::move(model)), name_(std::move(name)) {}

  BranchDecision decide(const MilpInstance& inst, const BnbNode& node, Rng& /*rng*/) override {
    BranchDecision d;
    d.candidate_set = candidates(node.lp, inst);
    const BipartiteState state = extract_state(inst, node, node.lp);
    const std::vector<double> probs = forward(model_, state);
    d.scores.reserve(d.candidate_set.size());
    for (int j : d.candidate_set) d.scores.push_back(probs[j]);
    d.var_index = detail::argmax_lowest_index(d.candidate_set, d.scores);
    return d;
  }

  std::string name() const override { return name_; }

  const ModelParams& model() const { return model_; }

 private:
  ModelParams model_;
  std::string name_;
};

/// Acts with one policy while recording per-step argmax agreement against a
/// reference policy (which only probes and never acts).
class AgreementProbePolicy : public BranchingPolicy {
 public:
  AgreementProbePolicy(BranchingPolicy& actor, BranchingPolicy& reference)
      : actor_(actor), reference_(reference) {}

  BranchDecision decide(const MilpInstance& inst, const BnbNode& node, Rng& rng) override {
    BranchDecision acted = actor_.decide(inst, node, rng);
    const BranchDecision ref = reference_.decide(inst, node, rng);
    agreement_.push_back(acted.var_index == ref.var_index ? 1 : 0);
    candidate_counts_.push_back(static_cast<int>(acted.candidate_set.size()));
    return acted;
  }

  void observe_branching(int var, std::optional<double> down_gain, std::optional<double> up_gain,
                         double fractionality) override {
    actor_.observe_branching(var, down_gain, up_gain, fractionality);
  }

  std::string name() const override { return actor_.name() + "+probe"; }

  const std::vector<std::uint8_t>& agreement() const { return agreement_; }
  const std::vector<int>& candidate_counts() const { return candidate_counts_; }

 private:
  BranchingPolicy& actor_;
  BranchingPolicy& reference_;
  std::vector<std::uint8_t> agreement_;
  std::vector<int> candidate_counts_;
};

}  // namespace branchforge
