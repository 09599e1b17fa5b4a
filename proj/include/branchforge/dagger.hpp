// Copyright (c) 2026 BranchForge contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "branchforge/bnb.hpp"
#include "branchforge/ensemble.hpp"
#include "branchforge/generators.hpp"
#include "branchforge/model_policy.hpp"
#include "branchforge/nn.hpp"
#include "branchforge/policies.hpp"
#include "branchforge/rng.hpp"
#include "branchforge/state.hpp"

namespace branchforge {

enum class InstanceFamily { SetCover, Assignment };

inline const char* to_string(InstanceFamily f) {
  return f == InstanceFamily::SetCover ? "setcover" : "assignment";
}

/// Configuration of the data-aggregation loop. The schedule trains with
/// epochs_major every major_every-th round and epochs_minor otherwise;
/// per-round training epochs therefore ignore train.epochs.
struct DaggerConfig {
  int n_iterations = 10;  // 50 in the original setup; 10 is the desk default
  double p_expert = 0.05;
  int epochs_major = 100;
  int epochs_minor = 10;
  int major_every = 10;
  int instances_per_iteration = 8;
  int step_budget = 50;
  bool warm_start = true;
  std::uint64_t master_seed = 0;
  bool label_all_states = false;
  MixtureGranularity granularity = MixtureGranularity::PerDecision;
  InstanceFamily family = InstanceFamily::SetCover;
  int n_items = 10;
  int n_sets = 20;
  double density = 0.2;
  int n_bins = 3;
  int n_validation_instances = 5;
  ArchConfig arch;
  TrainConfig train;
  int jobs = 1;
};

/// Samples accumulated across rounds; slices are never mutated or dropped.
struct AggregatedDataset {
  std::vector<BipartiteState> samples;
  std::vector<std::size_t> slice_sizes;

  std::size_t size() const { return samples.size(); }
};

struct IterationLog {
  int iteration = 0;
  std::size_t new_samples = 0;
  std::size_t total_samples = 0;
  int epochs = 0;
  double final_loss = std::numeric_limits<double>::quiet_NaN();
  double validation_reward = 0.0;
  long decisions = 0;
  long expert_decisions = 0;
  int failed_episodes = 0;
};

struct DaggerArtifacts {
  std::vector<ModelParams> models;  // pi_1 .. pi_N
  std::vector<std::string> model_paths;
  std::vector<double> validation_rewards;
  AggregatedDataset dataset;
  std::vector<IterationLog> log;
  long total_decisions = 0;
  long total_expert_decisions = 0;
};

inline MilpInstance make_instance(const DaggerConfig& cfg, std::uint64_t seed) {
  return cfg.family == InstanceFamily::SetCover
             ? gen_set_cover(seed, cfg.n_items, cfg.n_sets, cfg.density)
             : gen_assignment(seed, cfg.n_items, cfg.n_bins);
}

struct CollectResult {
  std::vector<BipartiteState> samples;
  long decisions = 0;
  long expert_decisions = 0;
  int failed_episodes = 0;
};

namespace detail {

struct EpisodeOutcome {
  std::vector<BipartiteState> samples;
  long decisions = 0;
  long expert_decisions = 0;
  bool failed = false;
};

inline EpisodeOutcome run_collect_episode(const ModelParams& prev, const MilpInstance& inst,
                                          const DaggerConfig& cfg, int iteration, int episode) {
  EpisodeOutcome out;
  try {
    ModelPolicy model(prev);
    StrongBranchingPolicy expert;
    long expert_labels = 0;
    MixturePolicy mix(
        model, expert, cfg.p_expert,
        [&out, &expert_labels](BipartiteState s) {
          out.samples.push_back(std::move(s));
          ++expert_labels;
        },
        cfg.label_all_states, cfg.granularity);
    const auto seed = derive_seed({cfg.master_seed, static_cast<std::uint64_t>(iteration),
                                   static_cast<std::uint64_t>(episode)});
    const BnbTrace trace = run_bnb(inst, mix, cfg.step_budget, seed);
    out.decisions = mix.decisions();
    out.expert_decisions = mix.expert_decisions();
    (void)trace;
  } catch (const Error&) {
    out = EpisodeOutcome{};
    out.failed = true;  // a failed episode contributes nothing but is counted
  }
  return out;
}

}  // namespace detail

/// One round of mixture rollouts. Episodes may run on cfg.jobs threads; the
/// sample order is fixed by (episode_index, step) regardless of scheduling.
inline CollectResult collect_iteration(const ModelParams& prev,
                                       const std::vector<MilpInstance>& instances,
                                       const DaggerConfig& cfg, int iteration) {
  std::vector<detail::EpisodeOutcome> outcomes(instances.size());
  const int jobs = std::max(1, cfg.jobs);
  if (jobs == 1 || instances.size() <= 1) {
    for (std::size_t e = 0; e < instances.size(); ++e)
      outcomes[e] = detail::run_collect_episode(prev, instances[e], cfg, iteration,
                                                static_cast<int>(e));
  } else {
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      while (true) {
        const std::size_t e = next.fetch_add(1);
        if (e >= instances.size()) break;
        outcomes[e] = detail::run_collect_episode(prev, instances[e], cfg, iteration,
                                                  static_cast<int>(e));
      }
    };
    std::vector<std::thread> threads;
    for (int t = 1; t < jobs; ++t) threads.emplace_back(worker);
    worker();
    for (auto& t : threads) t.join();
  }

  CollectResult result;
  for (auto& o : outcomes) {
    if (o.failed) {
      ++result.failed_episodes;
      continue;
    }
    result.decisions += o.decisions;
    result.expert_decisions += o.expert_decisions;
    for (auto& s : o.samples) result.samples.push_back(std::move(s));
  }
  return result;
}

/// Mean dual-integral reward of a model over the held-out validation
/// instances (fixed per master seed, shared by every round).
inline double validation_reward(const ModelParams& model,
                                const std::vector<MilpInstance>& validation,
                                const DaggerConfig& cfg) {
  if (validation.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t k = 0; k < validation.size(); ++k) {
    ModelPolicy policy(model);
    const auto seed = derive_seed({cfg.master_seed, 0x7a11da7eULL, static_cast<std::uint64_t>(k)});
    total += dual_integral(run_bnb(validation[k], policy, cfg.step_budget, seed));
  }
  return total / static_cast<double>(validation.size());
}

namespace detail {

inline nlohmann::ordered_json dagger_config_json(const DaggerConfig& cfg) {
  nlohmann::ordered_json j;
  j["n_iterations"] = cfg.n_iterations;
  j["p_expert"] = cfg.p_expert;
  j["epochs_major"] = cfg.epochs_major;
  j["epochs_minor"] = cfg.epochs_minor;
  j["major_every"] = cfg.major_every;
  j["instances_per_iteration"] = cfg.instances_per_iteration;
  j["step_budget"] = cfg.step_budget;
  j["warm_start"] = cfg.warm_start;
  j["master_seed"] = cfg.master_seed;
  j["label_all_states"] = cfg.label_all_states;
  j["expert_granularity"] =
      cfg.granularity == MixtureGranularity::PerDecision ? "per_decision" : "per_episode";
  j["family"] = to_string(cfg.family);
  j["n_items"] = cfg.n_items;
  j["n_sets"] = cfg.n_sets;
  j["density"] = cfg.density;
  j["n_bins"] = cfg.n_bins;
  j["n_validation_instances"] = cfg.n_validation_instances;
  j["embed_dim"] = cfg.arch.embed_dim;
  j["dropout_rate"] = cfg.arch.dropout_rate;
  j["learning_rate"] = cfg.train.learning_rate;
  j["batch_size"] = cfg.train.batch_size;
  j["jobs"] = cfg.jobs;
  return j;
}

inline void write_dagger_log(const std::vector<IterationLog>& log, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "iteration,new_samples,total_samples,epochs,final_loss,validation_reward,"
         "decisions,expert_decisions,failed_episodes\n";
  for (const IterationLog& row : log) {
    out << row.iteration << ',' << row.new_samples << ',' << row.total_samples << ','
        << row.epochs << ',';
    if (!std::isnan(row.final_loss)) out << fmt_double(row.final_loss);
    out << ',' << fmt_double(row.validation_reward) << ',' << row.decisions << ','
        << row.expert_decisions << ',' << row.failed_episodes << '\n';
  }
}

}  // namespace detail

/// Runs the full aggregation loop and persists every artifact under run_dir:
/// config.json, models/pi_<i>.model, dataset/d_<i>.samples, log.csv, pool.json
/// and a per-round checkpoint.json. Deterministic in (config, master_seed).
inline DaggerArtifacts run_dagger(const DaggerConfig& cfg, const std::string& run_dir) {
  if (cfg.n_iterations < 1 || cfg.instances_per_iteration < 1 || cfg.step_budget < 1 ||
      cfg.major_every < 1)
    throw Error("run_dagger: counts must be >= 1");
  if (cfg.p_expert < 0.0 || cfg.p_expert > 1.0)
    throw Error("run_dagger: p_expert must be within [0, 1]");

  namespace fs = std::filesystem;
  fs::create_directories(fs::path(run_dir) / "models");
  fs::create_directories(fs::path(run_dir) / "dataset");
  {
    std::ofstream out(fs::path(run_dir) / "config.json", std::ios::binary);
    out << detail::dagger_config_json(cfg).dump(2) << '\n';
  }

  std::vector<MilpInstance> validation;
  for (int k = 0; k < cfg.n_validation_instances; ++k)
    validation.push_back(
        make_instance(cfg, derive_seed({cfg.master_seed, 0x7a11ULL, static_cast<std::uint64_t>(k)})));

  DaggerArtifacts artifacts;
  ModelParams current = init_model(cfg.arch, derive_seed({cfg.master_seed, 0x1217ULL, 0}));

  for (int i = 1; i <= cfg.n_iterations; ++i) {
    std::vector<MilpInstance> instances;
    for (int k = 0; k < cfg.instances_per_iteration; ++k)
      instances.push_back(make_instance(
          cfg, derive_seed({cfg.master_seed, 0x125ecULL, static_cast<std::uint64_t>(i),
                            static_cast<std::uint64_t>(k)})));

    const CollectResult collected = collect_iteration(current, instances, cfg, i);
    write_samples(collected.samples,
                  (fs::path(run_dir) / "dataset" / ("d_" + std::to_string(i) + ".samples")).string());
    artifacts.dataset.slice_sizes.push_back(collected.samples.size());
    for (const auto& s : collected.samples) artifacts.dataset.samples.push_back(s);
    artifacts.total_decisions += collected.decisions;
    artifacts.total_expert_decisions += collected.expert_decisions;

    const int epochs = (i % cfg.major_every == 0) ? cfg.epochs_major : cfg.epochs_minor;
    IterationLog row;
    row.iteration = i;
    row.new_samples = collected.samples.size();
    row.total_samples = artifacts.dataset.size();
    row.epochs = epochs;
    row.decisions = collected.decisions;
    row.expert_decisions = collected.expert_decisions;
    row.failed_episodes = collected.failed_episodes;

    if (!artifacts.dataset.samples.empty()) {
      TrainConfig tc = cfg.train;
      tc.epochs = epochs;
      tc.seed = derive_seed({cfg.master_seed, 0x7ea12ULL, static_cast<std::uint64_t>(i)});
      const ModelParams start =
          cfg.warm_start
              ? current
              : init_model(cfg.arch, derive_seed({cfg.master_seed, 0x1217ULL,
                                                  static_cast<std::uint64_t>(i)}));
      TrainResult tr = train(start, artifacts.dataset.samples, tc);
      current = std::move(tr.model);
      if (!tr.epoch_losses.empty()) row.final_loss = tr.epoch_losses.back();
    }
    // With no data yet the round trains nothing and pi_i stays pi_{i-1}.

    row.validation_reward = validation_reward(current, validation, cfg);
    const std::string model_path =
        (fs::path(run_dir) / "models" / ("pi_" + std::to_string(i) + ".model")).string();
    save_model(current, model_path);

    artifacts.models.push_back(current);
    artifacts.model_paths.push_back(model_path);
    artifacts.validation_rewards.push_back(row.validation_reward);
    artifacts.log.push_back(row);

    detail::write_dagger_log(artifacts.log, (fs::path(run_dir) / "log.csv").string());
    {
      nlohmann::ordered_json ck;
      ck["completed_iteration"] = i;
      ck["total_samples"] = artifacts.dataset.size();
      std::ofstream out(fs::path(run_dir) / "checkpoint.json", std::ios::binary);
      out << ck.dump(2) << '\n';
    }
  }

  std::vector<std::string> rel_paths;
  std::vector<int> tags;
  for (int i = 1; i <= cfg.n_iterations; ++i) {
    rel_paths.push_back("models/pi_" + std::to_string(i) + ".model");
    tags.push_back(i);
  }
  write_pool_manifest(rel_paths, artifacts.validation_rewards, tags,
                      (fs::path(run_dir) / "pool.json").string());
  return artifacts;
}

}  // namespace branchforge
