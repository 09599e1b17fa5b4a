// Copyright (c) 2026 BranchForge contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "branchforge/bnb.hpp"
#include "branchforge/dagger.hpp"
#include "branchforge/ensemble.hpp"
#include "branchforge/eval.hpp"
#include "branchforge/generators.hpp"
#include "branchforge/instance_io.hpp"
#include "branchforge/model_policy.hpp"
#include "branchforge/nn.hpp"
#include "branchforge/policies.hpp"

namespace branchforge {

namespace cli_detail {

namespace fs = std::filesystem;

inline std::string joined(const std::string& out_dir, const std::string& name) {
  return (fs::path(out_dir) / name).string();
}

inline void write_config_json(const std::string& out_dir, const nlohmann::ordered_json& j) {
  fs::create_directories(out_dir);
  std::ofstream out(joined(out_dir, "config.json"), std::ios::binary);
  if (!out) throw IoError("cannot write config.json under '" + out_dir + "'");
  out << j.dump(2) << '\n';
}

// A policy assembled from a CLI spec; inner objects keep the wrapper alive.
struct BuiltPolicy {
  std::unique_ptr<BranchingPolicy> model_inner;
  std::unique_ptr<BranchingPolicy> expert_inner;
  std::unique_ptr<BranchingPolicy> policy;

  BranchingPolicy& get() { return *policy; }
};

/// Accepted forms: sb, pseudocost, random, mostfrac, model:<path>,
/// mixture:<path>:<p_expert>.
inline BuiltPolicy build_policy(const std::string& spec, const MilpInstance& inst) {
  BuiltPolicy built;
  if (spec == "sb") {
    built.policy = std::make_unique<StrongBranchingPolicy>();
  } else if (spec == "pseudocost") {
    built.policy = std::make_unique<PseudocostPolicy>(inst.n_vars);
  } else if (spec == "random") {
    built.policy = std::make_unique<BaselinePolicy>(BaselineKind::Random);
  } else if (spec == "mostfrac") {
    built.policy = std::make_unique<BaselinePolicy>(BaselineKind::MostFractional);
  } else if (spec.rfind("model:", 0) == 0) {
    built.policy = std::make_unique<ModelPolicy>(load_model(spec.substr(6)), "model");
  } else if (spec.rfind("mixture:", 0) == 0) {
    const std::string rest = spec.substr(8);
    const auto colon = rest.rfind(':');
    if (colon == std::string::npos)
      throw Error("mixture policy spec must be mixture:<model_path>:<p_expert>");
    const std::string path = rest.substr(0, colon);
    const double p = std::stod(rest.substr(colon + 1));
    built.model_inner = std::make_unique<ModelPolicy>(load_model(path), "model");
    built.expert_inner = std::make_unique<StrongBranchingPolicy>();
    built.policy =
        std::make_unique<MixturePolicy>(*built.model_inner, *built.expert_inner, p);
  } else {
    throw Error("unknown policy spec '" + spec +
                "' (expected sb, pseudocost, random, mostfrac, model:<path> or "
                "mixture:<path>:<p>)");
  }
  return built;
}

inline std::vector<std::uint64_t> parse_seed_list(const std::vector<std::uint64_t>& seeds,
                                                  std::uint64_t fallback) {
  return seeds.empty() ? std::vector<std::uint64_t>{fallback} : seeds;
}

}  // namespace cli_detail

/// Entry point behind the binary: parses argv, runs one subcommand, returns
/// the process exit code (0 ok, 1 usage, 2 runtime failure).
inline int run_cli(int argc, const char* const* argv) {
  using nlohmann::ordered_json;
  namespace fs = std::filesystem;

  CLI::App app{"branchforge - a desk-scale learning-to-branch laboratory"};
  app.require_subcommand(1);
  app.fallthrough();  // global options may follow the subcommand name

  std::uint64_t seed = 0;
  std::string out_dir = "out";
  int jobs = 1;
  app.add_option("--seed", seed, "master random seed")->envname("BRANCHFORGE_SEED");
  app.add_option("--out-dir", out_dir, "directory all outputs are written to");
  app.add_option("--jobs", jobs, "episode-level parallelism")->check(CLI::PositiveNumber);

  // generate ----------------------------------------------------------------
  auto* gen = app.add_subcommand("generate", "write synthetic instances");
  std::string gen_family = "setcover";
  int gen_count = 1, gen_items = 10, gen_sets = 20, gen_bins = 3, gen_blocks = 3;
  double gen_density = 0.2;
  gen->add_option("--family", gen_family, "setcover | assignment | degenerate")
      ->check(CLI::IsMember({"setcover", "assignment", "degenerate"}));
  gen->add_option("--count", gen_count)->check(CLI::PositiveNumber);
  gen->add_option("--items", gen_items);
  gen->add_option("--sets", gen_sets);
  gen->add_option("--density", gen_density);
  gen->add_option("--bins", gen_bins);
  gen->add_option("--blocks", gen_blocks);

  // solve -------------------------------------------------------------------
  auto* solve = app.add_subcommand("solve", "one branch-and-bound run with a trace");
  std::string solve_instance, solve_policy = "sb";
  int solve_budget = 100;
  solve->add_option("--instance", solve_instance)->required();
  solve->add_option("--policy", solve_policy);
  solve->add_option("--budget", solve_budget)->check(CLI::PositiveNumber);

  // dagger --------------------------------------------------------------
  auto* dag = app.add_subcommand("dagger", "run the data-aggregation loop");
  DaggerConfig dcfg;
  std::string dag_family = "setcover", dag_granularity = "per_decision";
  bool dag_fresh_init = false, dag_label_all = false;
  dag->add_option("--iterations", dcfg.n_iterations)->check(CLI::PositiveNumber);
  dag->add_option("--p-expert", dcfg.p_expert);
  dag->add_option("--epochs-major", dcfg.epochs_major);
  dag->add_option("--epochs-minor", dcfg.epochs_minor);
  dag->add_option("--major-every", dcfg.major_every)->check(CLI::PositiveNumber);
  dag->add_option("--instances-per-iter", dcfg.instances_per_iteration)->check(CLI::PositiveNumber);
  dag->add_option("--budget", dcfg.step_budget)->check(CLI::PositiveNumber);
  dag->add_flag("--fresh-init", dag_fresh_init, "retrain from a fresh random model each round");
  dag->add_flag("--label-all", dag_label_all, "expert-label every visited state");
  dag->add_option("--granularity", dag_granularity)
      ->check(CLI::IsMember({"per_decision", "per_episode"}));
  dag->add_option("--family", dag_family)->check(CLI::IsMember({"setcover", "assignment"}));
  dag->add_option("--items", dcfg.n_items);
  dag->add_option("--sets", dcfg.n_sets);
  dag->add_option("--density", dcfg.density);
  dag->add_option("--bins", dcfg.n_bins);
  dag->add_option("--val-instances", dcfg.n_validation_instances);
  dag->add_option("--embed-dim", dcfg.arch.embed_dim)->check(CLI::PositiveNumber);
  dag->add_option("--dropout", dcfg.arch.dropout_rate);
  dag->add_option("--lr", dcfg.train.learning_rate);
  dag->add_option("--batch-size", dcfg.train.batch_size)->check(CLI::PositiveNumber);

  // train ---------------------------------------------------------------
  auto* trn = app.add_subcommand("train", "offline imitation training on a sample file");
  std::string trn_dataset, trn_out = "model.model";
  TrainConfig tcfg;
  tcfg.epochs = 20;
  ArchConfig trn_arch;
  trn->add_option("--dataset", trn_dataset)->required();
  trn->add_option("--epochs", tcfg.epochs);
  trn->add_option("--batch-size", tcfg.batch_size)->check(CLI::PositiveNumber);
  trn->add_option("--lr", tcfg.learning_rate);
  trn->add_option("--embed-dim", trn_arch.embed_dim)->check(CLI::PositiveNumber);
  trn->add_option("--dropout", trn_arch.dropout_rate);
  trn->add_option("--checkpoint-every", tcfg.checkpoint_every);
  trn->add_option("--out", trn_out, "model file name inside --out-dir");

  // kida ----------------------------------------------------------------
  auto* kida = app.add_subcommand("kida", "average the top-k models of a pool");
  std::string kida_pool, kida_out = "kida.model";
  int kida_k = kDefaultTopK;
  bool kida_all = false;
  kida->add_option("--pool", kida_pool)->required();
  kida->add_option("--k", kida_k)->check(CLI::PositiveNumber);
  kida->add_flag("--all", kida_all, "average the whole pool instead of the top k");
  kida->add_option("--out", kida_out);

  // ewa -----------------------------------------------------------------
  auto* ewa = app.add_subcommand("ewa", "average training checkpoints");
  std::vector<std::string> ewa_models;
  std::string ewa_out = "ewa.model";
  ewa->add_option("--models", ewa_models)->required()->expected(-1);
  ewa->add_option("--out", ewa_out);

  // eval ----------------------------------------------------------------
  auto* eval = app.add_subcommand("eval", "metrics and probes");
  eval->require_subcommand(1);

  auto* ev_off = eval->add_subcommand("offline", "top-k accuracy and loss on labeled samples");
  std::string off_model, off_dataset;
  ev_off->add_option("--model", off_model)->required();
  ev_off->add_option("--dataset", off_dataset)->required();

  auto* ev_on = eval->add_subcommand("online", "per-step agreement with strong branching");
  std::string on_model, on_instance;
  int on_budget = 100;
  ev_on->add_option("--model", on_model)->required();
  ev_on->add_option("--instance", on_instance)->required();
  ev_on->add_option("--budget", on_budget)->check(CLI::PositiveNumber);

  auto* ev_rw = eval->add_subcommand("reward", "cumulative-reward comparison table");
  std::vector<std::string> rw_instances, rw_policies;
  std::vector<std::uint64_t> rw_seeds;
  int rw_budget = 100;
  ev_rw->add_option("--instances", rw_instances)->required()->expected(-1);
  ev_rw->add_option("--policies", rw_policies)->required()->expected(-1);
  ev_rw->add_option("--seeds", rw_seeds)->expected(-1);
  ev_rw->add_option("--budget", rw_budget)->check(CLI::PositiveNumber);

  auto* ev_dg = eval->add_subcommand("degeneracy", "strong-branching degeneracy probe");
  std::string dg_instance, dg_model;
  int dg_budget = 100;
  double dg_threshold = 1e-10;
  ev_dg->add_option("--instance", dg_instance)->required();
  ev_dg->add_option("--model", dg_model);
  ev_dg->add_option("--budget", dg_budget)->check(CLI::PositiveNumber);
  ev_dg->add_option("--threshold", dg_threshold);

  auto* ev_pool = eval->add_subcommand("pool", "joint accuracy/reward table over a model pool");
  std::string pl_pool, pl_dataset;
  std::vector<std::string> pl_instances;
  std::vector<std::uint64_t> pl_seeds;
  int pl_budget = 100;
  ev_pool->add_option("--pool", pl_pool)->required();
  ev_pool->add_option("--dataset", pl_dataset)->required();
  ev_pool->add_option("--instances", pl_instances)->required()->expected(-1);
  ev_pool->add_option("--seeds", pl_seeds)->expected(-1);
  ev_pool->add_option("--budget", pl_budget)->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (gen->parsed()) {
      ordered_json cfg{{"subcommand", "generate"}, {"family", gen_family},
                       {"count", gen_count},       {"seed", seed},
                       {"items", gen_items},       {"sets", gen_sets},
                       {"density", gen_density},   {"bins", gen_bins},
                       {"blocks", gen_blocks}};
      cli_detail::write_config_json(out_dir, cfg);
      for (int k = 0; k < gen_count; ++k) {
        MilpInstance m;
        if (gen_family == "setcover")
          m = gen_set_cover(seed + k, gen_items, gen_sets, gen_density);
        else if (gen_family == "assignment")
          m = gen_assignment(seed + k, gen_items, gen_bins);
        else
          m = gen_degenerate_blocks(gen_blocks);
        const std::string path = cli_detail::joined(out_dir, m.name + ".json");
        write_instance(m, path);
        std::cout << path << '\n';
        if (gen_family == "degenerate") break;  // deterministic fixture, one copy
      }
    } else if (solve->parsed()) {
      const MilpInstance inst = read_instance(solve_instance);
      cli_detail::write_config_json(
          out_dir, ordered_json{{"subcommand", "solve"},
                                {"instance", solve_instance},
                                {"policy", solve_policy},
                                {"budget", solve_budget},
                                {"seed", seed}});
      cli_detail::BuiltPolicy built = cli_detail::build_policy(solve_policy, inst);
      const BnbTrace trace = run_bnb(inst, built.get(), solve_budget, seed);
      write_trace(trace, cli_detail::joined(out_dir, "trace.csv"),
                  cli_detail::joined(out_dir, "trace.json"));
      std::cout << "policy=" << trace.policy_name << " reward=" << dual_integral(trace);
      if (trace.incumbent)
        std::cout << " objective=" << original_orientation(inst, *trace.incumbent);
      if (trace.steps_to_close) std::cout << " steps_to_close=" << *trace.steps_to_close;
      std::cout << '\n';
    } else if (dag->parsed()) {
      dcfg.master_seed = seed;
      dcfg.jobs = jobs;
      dcfg.warm_start = !dag_fresh_init;
      dcfg.label_all_states = dag_label_all;
      dcfg.granularity = dag_granularity == "per_episode" ? MixtureGranularity::PerEpisode
                                                          : MixtureGranularity::PerDecision;
      dcfg.family =
          dag_family == "assignment" ? InstanceFamily::Assignment : InstanceFamily::SetCover;
      const DaggerArtifacts artifacts = run_dagger(dcfg, out_dir);
      std::cout << "iterations=" << artifacts.log.size()
                << " samples=" << artifacts.dataset.size()
                << " decisions=" << artifacts.total_decisions
                << " expert_decisions=" << artifacts.total_expert_decisions << '\n';
    } else if (trn->parsed()) {
      const std::vector<BipartiteState> dataset = read_samples(trn_dataset);
      tcfg.seed = seed;
      cli_detail::write_config_json(
          out_dir, ordered_json{{"subcommand", "train"},
                                {"dataset", trn_dataset},
                                {"epochs", tcfg.epochs},
                                {"batch_size", tcfg.batch_size},
                                {"learning_rate", tcfg.learning_rate},
                                {"embed_dim", trn_arch.embed_dim},
                                {"dropout_rate", trn_arch.dropout_rate},
                                {"checkpoint_every", tcfg.checkpoint_every},
                                {"seed", seed},
                                {"out", trn_out}});
      const ModelParams start = init_model(trn_arch, seed);
      const TrainResult result = train(start, dataset, tcfg);
      save_model(result.model, cli_detail::joined(out_dir, trn_out));
      {
        std::ofstream out(cli_detail::joined(out_dir, "loss_curve.csv"), std::ios::binary);
        out << "epoch,mean_loss\n";
        for (std::size_t e = 0; e < result.epoch_losses.size(); ++e)
          out << (e + 1) << ',' << detail::fmt_double(result.epoch_losses[e]) << '\n';
      }
      for (std::size_t c = 0; c < result.checkpoints.size(); ++c)
        save_model(result.checkpoints[c],
                   cli_detail::joined(out_dir, "ckpt_" + std::to_string(c + 1) + ".model"));
      std::cout << "trained on " << dataset.size() << " samples; final loss "
                << (result.epoch_losses.empty() ? 0.0 : result.epoch_losses.back()) << '\n';
    } else if (kida->parsed()) {
      cli_detail::write_config_json(out_dir,
                                    ordered_json{{"subcommand", "kida"},
                                                 {"pool", kida_pool},
                                                 {"k", kida_k},
                                                 {"all", kida_all},
                                                 {"out", kida_out}});
      const ModelPool pool = load_pool_manifest(kida_pool);
      std::vector<ModelParams> chosen;
      if (kida_all)
        for (const PoolEntry& e : pool.entries) chosen.push_back(e.model);
      else
        chosen = select_top_k(pool, kida_k);
      const ModelParams averaged = kida_average(chosen);
      save_model(averaged, cli_detail::joined(out_dir, kida_out));
      std::cout << "averaged " << chosen.size() << " of " << pool.entries.size() << " models\n";
    } else if (ewa->parsed()) {
      cli_detail::write_config_json(
          out_dir,
          ordered_json{{"subcommand", "ewa"}, {"models", ewa_models}, {"out", ewa_out}});
      std::vector<ModelParams> checkpoints;
      for (const std::string& p : ewa_models) checkpoints.push_back(load_model(p));
      for (const ModelParams& m : checkpoints)
        if (!(m.arch == checkpoints.front().arch))
          throw ArchMismatch("ewa: checkpoints disagree on architecture");
      save_model(epoch_weight_average(checkpoints), cli_detail::joined(out_dir, ewa_out));
      std::cout << "averaged " << checkpoints.size() << " checkpoints\n";
    } else if (ev_off->parsed()) {
      cli_detail::write_config_json(out_dir, ordered_json{{"subcommand", "eval offline"},
                                                          {"model", off_model},
                                                          {"dataset", off_dataset}});
      const MetricsRecord rec =
          offline_metrics(load_model(off_model), read_samples(off_dataset));
      write_metrics_csv({rec}, cli_detail::joined(out_dir, "metrics.csv"));
      std::cout << "top1=" << rec.top1 << " top3=" << rec.top3 << " top5=" << rec.top5
                << " loss=" << rec.mean_loss << " n=" << rec.n_samples << '\n';
    } else if (ev_on->parsed()) {
      cli_detail::write_config_json(out_dir, ordered_json{{"subcommand", "eval online"},
                                                          {"model", on_model},
                                                          {"instance", on_instance},
                                                          {"budget", on_budget},
                                                          {"seed", seed}});
      const OnlineAccuracy acc =
          online_accuracy(load_model(on_model), read_instance(on_instance), on_budget, seed);
      write_online_accuracy_csv(acc, cli_detail::joined(out_dir, "online_acc.csv"));
      std::cout << "steps=" << acc.agreement.size() << " mean_agreement=" << acc.mean << '\n';
    } else if (ev_rw->parsed()) {
      const auto seeds = cli_detail::parse_seed_list(rw_seeds, seed);
      cli_detail::write_config_json(out_dir, ordered_json{{"subcommand", "eval reward"},
                                                          {"instances", rw_instances},
                                                          {"policies", rw_policies},
                                                          {"seeds", seeds},
                                                          {"budget", rw_budget}});
      std::vector<MilpInstance> instances;
      for (const std::string& p : rw_instances) instances.push_back(read_instance(p));
      std::vector<PolicySpec> specs;
      for (const std::string& p : rw_policies) {
        if (p.rfind("model:", 0) == 0)
          specs.push_back(make_model_policy_spec(p, load_model(p.substr(6))));
        else
          specs.push_back(make_policy_spec(p));
      }
      const RewardComparison cmp = reward_comparison(specs, instances, rw_budget, seeds);
      write_rewards_csv(cmp, cli_detail::joined(out_dir, "rewards.csv"));
      write_reward_summary_csv(cmp, cli_detail::joined(out_dir, "reward_summary.csv"));
      for (const RewardSummaryRow& r : cmp.summary)
        std::cout << r.policy << " mean=" << r.mean << " stddev=" << r.stddev << " n=" << r.n
                  << '\n';
    } else if (ev_dg->parsed()) {
      cli_detail::write_config_json(out_dir, ordered_json{{"subcommand", "eval degeneracy"},
                                                          {"instance", dg_instance},
                                                          {"model", dg_model},
                                                          {"budget", dg_budget},
                                                          {"threshold", dg_threshold},
                                                          {"seed", seed}});
      std::optional<ModelParams> model;
      if (!dg_model.empty()) model = load_model(dg_model);
      const DegeneracyReport report =
          degeneracy_probe(read_instance(dg_instance), dg_budget, seed,
                           model ? &*model : nullptr, dg_threshold);
      write_trajectories_csv(report, cli_detail::joined(out_dir, "trajectories.csv"));
      {
        ordered_json j{{"fraction_degenerate", report.fraction_degenerate},
                       {"n_sb_calls", report.n_sb_calls},
                       {"no_sb_calls", report.no_sb_calls},
                       {"threshold", report.threshold},
                       {"epsilon", report.epsilon},
                       {"z0", report.z0}};
        std::ofstream out(cli_detail::joined(out_dir, "degeneracy.json"), std::ios::binary);
        out << j.dump(2) << '\n';
      }
      std::cout << "fraction_degenerate=" << report.fraction_degenerate
                << " sb_calls=" << report.n_sb_calls << '\n';
    } else if (ev_pool->parsed()) {
      const auto seeds = cli_detail::parse_seed_list(pl_seeds, seed);
      cli_detail::write_config_json(out_dir, ordered_json{{"subcommand", "eval pool"},
                                                          {"pool", pl_pool},
                                                          {"dataset", pl_dataset},
                                                          {"instances", pl_instances},
                                                          {"seeds", seeds},
                                                          {"budget", pl_budget}});
      std::vector<MilpInstance> instances;
      for (const std::string& p : pl_instances) instances.push_back(read_instance(p));
      const ModelPool pool = load_pool_manifest(pl_pool);
      const std::vector<BipartiteState> dataset = read_samples(pl_dataset);
      const PoolJointTable table =
          pool_joint_table(pool, dataset, instances, pl_budget, seeds);
      write_pool_table_csv(table, cli_detail::joined(out_dir, "pool_metrics.csv"));
      {
        ordered_json j{{"spearman_top1_reward", table.spearman_top1_reward},
                       {"n_models", table.rows.size()}};
        std::ofstream out(cli_detail::joined(out_dir, "pool_summary.json"), std::ios::binary);
        out << j.dump(2) << '\n';
      }
      std::cout << "models=" << table.rows.size()
                << " spearman_top1_reward=" << table.spearman_top1_reward << '\n';
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace branchforge
