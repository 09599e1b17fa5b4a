// Copyright (c) 2026 BranchForge contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "branchforge/bnb.hpp"
#include "branchforge/ensemble.hpp"
#include "branchforge/model_policy.hpp"
#include "branchforge/nn.hpp"
#include "branchforge/policies.hpp"
#include "branchforge/state.hpp"

namespace branchforge {

struct MetricsRecord {
  double top1 = 0.0;
  double top3 = 0.0;
  double top5 = 0.0;
  double mean_loss = 0.0;
  std::optional<double> cum_reward;
  std::size_t n_samples = 0;
  std::string policy_name;
  std::uint64_t seed = 0;
};

namespace detail {

/// True when the label lands within the k highest-probability candidates;
/// probability ties rank the lower index first.
inline bool top_k_hit(const std::vector<double>& probs,
                      const std::vector<std::uint8_t>& mask, int label, int k) {
  int better = 0;
  for (std::size_t j = 0; j < probs.size(); ++j) {
    if (!mask[j] || static_cast<int>(j) == label) continue;
    if (probs[j] > probs[label] ||
        (probs[j] == probs[label] && static_cast<int>(j) < label))
      ++better;
  }
  return better < k;
}

}  // namespace detail

/// Offline imitation metrics of a model against expert-labeled samples:
/// top-1/3/5 accuracy and mean cross-entropy. cum_reward stays unset.
inline MetricsRecord offline_metrics(const ModelParams& model,
                                     std::span<const BipartiteState> dataset,
                                     std::string policy_name = "model") {
  if (dataset.empty()) throw EmptyDataset("offline_metrics: empty dataset");
  MetricsRecord rec;
  rec.policy_name = std::move(policy_name);
  rec.n_samples = dataset.size();
  long hit1 = 0, hit3 = 0, hit5 = 0;
  double loss_sum = 0.0;
  for (const BipartiteState& s : dataset) {
    if (!s.expert_action) throw MissingLabel("offline_metrics: sample without expert action");
    const int a = *s.expert_action;
    if (a < 0 || a >= s.n_vars || !s.candidate_mask[a])
      throw MissingLabel("offline_metrics: expert action is not a masked candidate");
    const std::vector<double> probs = forward(model, s);
    loss_sum += -std::log(std::max(probs[a], 1e-300));
    if (detail::top_k_hit(probs, s.candidate_mask, a, 1)) ++hit1;
    if (detail::top_k_hit(probs, s.candidate_mask, a, 3)) ++hit3;
    if (detail::top_k_hit(probs, s.candidate_mask, a, 5)) ++hit5;
  }
  const double n = static_cast<double>(dataset.size());
  rec.top1 = hit1 / n;
  rec.top3 = hit3 / n;
  rec.top5 = hit5 / n;
  rec.mean_loss = loss_sum / n;
  return rec;
}

/// Expected top-1 accuracy of a uniform policy on the same samples: the mean
/// of 1 / candidate-count.
inline double uniform_top1_baseline(std::span<const BipartiteState> dataset) {
  if (dataset.empty()) throw EmptyDataset("uniform_top1_baseline: empty dataset");
  double sum = 0.0;
  for (const BipartiteState& s : dataset) {
    long c = 0;
    for (std::uint8_t b : s.candidate_mask) c += b;
    sum += c > 0 ? 1.0 / static_cast<double>(c) : 0.0;
  }
  return sum / static_cast<double>(dataset.size());
}

struct OnlineAccuracy {
  std::vector<std::uint8_t> agreement;  // one entry per branching step
  std::vector<int> candidate_counts;
  double mean = 0.0;
  BnbTrace trace;
};

/// Deployment-phase agreement: the model acts, and at every branching step
/// its argmax is compared against a freshly computed strong-branching argmax.
inline OnlineAccuracy online_accuracy(const ModelParams& model, const MilpInstance& inst,
                                      int step_budget, std::uint64_t seed) {
  ModelPolicy actor(model);
  StrongBranchingPolicy reference;
  AgreementProbePolicy probe(actor, reference);
  OnlineAccuracy out;
  out.trace = run_bnb(inst, probe, step_budget, seed);
  out.agreement = probe.agreement();
  out.candidate_counts = probe.candidate_counts();
  if (!out.agreement.empty())
    out.mean = std::accumulate(out.agreement.begin(), out.agreement.end(), 0.0) /
               static_cast<double>(out.agreement.size());
  return out;
}

/// A named way to construct a fresh policy per run (stateful rules like
/// pseudo-cost must not leak state across runs).
struct PolicySpec {
  std::string name;
  std::function<std::unique_ptr<BranchingPolicy>(const MilpInstance&)> make;
};

inline PolicySpec make_policy_spec(const std::string& name) {
  if (name == "sb")
    return {name, [](const MilpInstance&) { return std::make_unique<StrongBranchingPolicy>(); }};
  if (name == "pseudocost")
    return {name,
            [](const MilpInstance& m) { return std::make_unique<PseudocostPolicy>(m.n_vars); }};
  if (name == "random")
    return {name,
            [](const MilpInstance&) { return std::make_unique<BaselinePolicy>(BaselineKind::Random); }};
  if (name == "mostfrac")
    return {name, [](const MilpInstance&) {
              return std::make_unique<BaselinePolicy>(BaselineKind::MostFractional);
            }};
  throw Error("unknown policy name '" + name + "'");
}

inline PolicySpec make_model_policy_spec(std::string name, ModelParams model) {
  return {name, [name, model = std::move(model)](const MilpInstance&) {
            return std::make_unique<ModelPolicy>(model, name);
          }};
}

struct RewardCell {
  std::string policy;
  std::string instance;
  std::uint64_t seed = 0;
  std::optional<double> reward;  // empty when the run failed
};

struct RewardSummaryRow {
  std::string policy;
  double mean = 0.0;
  double stddev = 0.0;  // population std over completed runs
  int n = 0;
};

struct RewardComparison {
  std::vector<RewardCell> cells;
  std::vector<RewardSummaryRow> summary;
};

inline RewardComparison reward_comparison(const std::vector<PolicySpec>& policies,
                                          const std::vector<MilpInstance>& instances,
                                          int step_budget,
                                          const std::vector<std::uint64_t>& seeds) {
  if (policies.empty() || instances.empty() || seeds.empty())
    throw Error("reward_comparison: needs at least one policy, instance and seed");
  RewardComparison out;
  for (const PolicySpec& spec : policies) {
    double sum = 0.0, sumsq = 0.0;
    int n = 0;
    for (const MilpInstance& inst : instances) {
      for (std::uint64_t seed : seeds) {
        RewardCell cell{spec.name, inst.name, seed, std::nullopt};
        try {
          auto policy = spec.make(inst);
          cell.reward = dual_integral(run_bnb(inst, *policy, step_budget, seed));
          sum += *cell.reward;
          sumsq += *cell.reward * *cell.reward;
          ++n;
        } catch (const Error&) {
          // missing cell
        }
        out.cells.push_back(std::move(cell));
      }
    }
    RewardSummaryRow row{spec.name, 0.0, 0.0, n};
    if (n > 0) {
      row.mean = sum / n;
      row.stddev = std::sqrt(std::max(0.0, sumsq / n - row.mean * row.mean));
    }
    out.summary.push_back(row);
  }
  return out;
}

struct DegeneracyReport {
  double fraction_degenerate = 0.0;
  long n_sb_calls = 0;
  bool no_sb_calls = false;  // flagged when the instance solves at the root
  double threshold = 0.0;
  double epsilon = kScoreEpsilon;
  double z0 = 0.0;
  std::vector<std::pair<std::string, std::vector<double>>> trajectories;
};

/// Measures how often strong branching's best product score collapses to
/// (near) zero, and exports dual-bound trajectories of sb, random and
/// mostfrac (plus an optional model) under a shared seed.
inline DegeneracyReport degeneracy_probe(const MilpInstance& inst, int step_budget,
                                         std::uint64_t seed, const ModelParams* model = nullptr,
                                         double threshold = 1e-10) {
  DegeneracyReport report;
  report.threshold = threshold;

  StrongBranchingPolicy sb;
  long degenerate = 0, calls = 0;
  sb.observer = [&](const BranchDecision& d) {
    ++calls;
    if (*std::max_element(d.scores.begin(), d.scores.end()) <= threshold) ++degenerate;
  };
  const BnbTrace sb_trace = run_bnb(inst, sb, step_budget, seed);
  report.n_sb_calls = calls;
  report.no_sb_calls = calls == 0;
  report.fraction_degenerate = calls > 0 ? static_cast<double>(degenerate) / calls : 0.0;
  report.z0 = sb_trace.z0;
  report.trajectories.emplace_back("sb", sb_trace.z);

  for (const char* name : {"random", "mostfrac"}) {
    PolicySpec spec = make_policy_spec(name);
    auto policy = spec.make(inst);
    report.trajectories.emplace_back(name, run_bnb(inst, *policy, step_budget, seed).z);
  }
  if (model) {
    ModelPolicy mp(*model);
    report.trajectories.emplace_back("model", run_bnb(inst, mp, step_budget, seed).z);
  }
  return report;
}

/// Spearman rank correlation with average ranks for ties. NaN when fewer than
/// two points or a zero-variance side.
inline double spearman(std::span<const double> xs, std::span<const double> ys) {
  const std::size_t n = xs.size();
  if (n != ys.size() || n < 2) return std::numeric_limits<double>::quiet_NaN();
  const auto ranks = [](std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size(), 0.0);
    std::size_t i = 0;
    while (i < idx.size()) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
      for (std::size_t t = i; t <= j; ++t) r[idx[t]] = avg;
      i = j + 1;
    }
    return r;
  };
  const std::vector<double> rx = ranks(xs);
  const std::vector<double> ry = ranks(ys);
  const double mean = (static_cast<double>(n) + 1.0) / 2.0;
  double num = 0.0, vx = 0.0, vy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    num += (rx[i] - mean) * (ry[i] - mean);
    vx += (rx[i] - mean) * (rx[i] - mean);
    vy += (ry[i] - mean) * (ry[i] - mean);
  }
  if (vx == 0.0 || vy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return num / std::sqrt(vx * vy);
}

struct PoolTableRow {
  int iteration_tag = 0;
  double top1 = 0.0, top3 = 0.0, top5 = 0.0;
  double mean_loss = 0.0;
  double mean_reward = 0.0;
};

struct PoolJointTable {
  std::vector<PoolTableRow> rows;
  double spearman_top1_reward = 0.0;
};

/// Offline accuracy and deployment reward side by side for every model of a
/// pool, with the rank correlation between the two columns.
inline PoolJointTable pool_joint_table(const ModelPool& pool,
                                       std::span<const BipartiteState> dataset,
                                       const std::vector<MilpInstance>& instances,
                                       int step_budget,
                                       const std::vector<std::uint64_t>& seeds) {
  if (pool.entries.empty()) throw EmptyPool("pool_joint_table: empty pool");
  PoolJointTable table;
  std::vector<double> top1s, rewards;
  for (const PoolEntry& entry : pool.entries) {
    const MetricsRecord rec = offline_metrics(entry.model, dataset);
    double sum = 0.0;
    int n = 0;
    for (const MilpInstance& inst : instances)
      for (std::uint64_t seed : seeds) {
        ModelPolicy policy(entry.model);
        sum += dual_integral(run_bnb(inst, policy, step_budget, seed));
        ++n;
      }
    PoolTableRow row;
    row.iteration_tag = entry.iteration_tag;
    row.top1 = rec.top1;
    row.top3 = rec.top3;
    row.top5 = rec.top5;
    row.mean_loss = rec.mean_loss;
    row.mean_reward = n > 0 ? sum / n : 0.0;
    top1s.push_back(row.top1);
    rewards.push_back(row.mean_reward);
    table.rows.push_back(row);
  }
  table.spearman_top1_reward = spearman(top1s, rewards);
  return table;
}

// ---------------------------------------------------------------------------
// CSV export

inline void write_metrics_csv(const std::vector<MetricsRecord>& records, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "policy_name,seed,n_samples,top1,top3,top5,mean_loss,cum_reward\n";
  for (const MetricsRecord& r : records) {
    out << r.policy_name << ',' << r.seed << ',' << r.n_samples << ','
        << detail::fmt_double(r.top1) << ',' << detail::fmt_double(r.top3) << ','
        << detail::fmt_double(r.top5) << ',' << detail::fmt_double(r.mean_loss) << ',';
    if (r.cum_reward) out << detail::fmt_double(*r.cum_reward);
    out << '\n';
  }
}

inline void write_online_accuracy_csv(const OnlineAccuracy& acc, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "step,agreement\n";
  for (std::size_t t = 0; t < acc.agreement.size(); ++t)
    out << (t + 1) << ',' << static_cast<int>(acc.agreement[t]) << '\n';
}

inline void write_rewards_csv(const RewardComparison& cmp, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "policy,instance,seed,reward\n";
  for (const RewardCell& c : cmp.cells) {
    out << c.policy << ',' << c.instance << ',' << c.seed << ',';
    if (c.reward) out << detail::fmt_double(*c.reward);
    out << '\n';
  }
}

inline void write_reward_summary_csv(const RewardComparison& cmp, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "policy,mean,stddev,n\n";
  for (const RewardSummaryRow& r : cmp.summary)
    out << r.policy << ',' << detail::fmt_double(r.mean) << ',' << detail::fmt_double(r.stddev)
        << ',' << r.n << '\n';
}

inline void write_trajectories_csv(const DegeneracyReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "policy,step,dual_bound\n";
  for (const auto& [policy, z] : report.trajectories)
    for (std::size_t t = 0; t < z.size(); ++t)
      out << policy << ',' << (t + 1) << ',' << detail::fmt_double(z[t]) << '\n';
}

inline void write_pool_table_csv(const PoolJointTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "iteration_tag,top1,top3,top5,mean_loss,mean_reward\n";
  for (const PoolTableRow& r : table.rows)
    out << r.iteration_tag << ',' << detail::fmt_double(r.top1) << ','
        << detail::fmt_double(r.top3) << ',' << detail::fmt_double(r.top5) << ','
        << detail::fmt_double(r.mean_loss) << ',' << detail::fmt_double(r.mean_reward) << '\n';
}

}  // namespace branchforge
