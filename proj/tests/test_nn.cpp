// Copyright (c) 2026 BranchForge contributors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "branchforge/generators.hpp"
#include "branchforge/nn.hpp"
#include "branchforge/policies.hpp"
#include "branchforge/simplex.hpp"
#include "branchforge/state.hpp"

using namespace branchforge;

namespace {

// A labeled state harvested from a real node; fractional roots are common in
// the assignment family.
BipartiteState labeled_state(std::uint64_t seed, int items = 3, int bins = 2) {
  for (std::uint64_t s = seed; s < seed + 200; ++s) {
    const MilpInstance m = gen_assignment(s, items, bins);
    BnbNode node;
    node.lp = solve_lp(m);
    if (node.lp.status != LpStatus::Optimal) continue;
    const auto cands = fractional_candidates(node.lp, m);
    if (cands.empty()) continue;
    BipartiteState state = extract_state(m, node, node.lp);
    state.expert_action = cands.front();
    return state;
  }
  FAIL("no fractional state found");
  return {};
}

double loss_via_forward(const ModelParams& model, const std::vector<BipartiteState>& batch) {
  double sum = 0.0;
  for (const BipartiteState& s : batch) sum += -std::log(forward(model, s)[*s.expert_action]);
  return sum / static_cast<double>(batch.size());
}

}  // namespace

TEST_CASE("init_model is deterministic with zero biases and bounded weights") {
  ArchConfig arch;
  arch.embed_dim = 16;
  const ModelParams a = init_model(arch, 99);
  const ModelParams b = init_model(arch, 99);
  CHECK(a == b);
  const ModelParams c = init_model(arch, 100);
  CHECK_FALSE(a == c);
  for (int id : {kBv, kBc, kBcc, kBvv, kBo})
    for (double x : a.t[id].v) CHECK(x == 0.0);
  for (int id = 0; id < kNumTensors; ++id) {
    const Tensor& t = a.t[id];
    const double bound = std::sqrt(6.0 / (t.rows + t.cols));
    for (double x : t.v) CHECK(std::abs(x) <= bound);
  }
}

TEST_CASE("the masked softmax sums to one and is exactly zero off-mask") {
  ArchConfig arch;
  arch.embed_dim = 8;
  const ModelParams model = init_model(arch, 3);
  const BipartiteState s = labeled_state(500);
  const std::vector<double> p = forward(model, s);
  double sum = 0.0;
  for (int j = 0; j < s.n_vars; ++j) {
    if (s.candidate_mask[j]) {
      sum += p[j];
    } else {
      CHECK(p[j] == 0.0);
    }
  }
  CHECK(std::abs(sum - 1.0) <= 1e-12);
}

TEST_CASE("a single candidate gets probability one") {
  ArchConfig arch;
  arch.embed_dim = 8;
  const ModelParams model = init_model(arch, 4);
  BipartiteState s = labeled_state(700);
  int keep = *s.expert_action;
  for (int j = 0; j < s.n_vars; ++j)
    if (j != keep) s.candidate_mask[j] = 0;
  const std::vector<double> p = forward(model, s);
  CHECK(p[keep] == 1.0);
}

TEST_CASE("forward is permutation-equivariant") {
  ArchConfig arch;
  arch.embed_dim = 8;
  const ModelParams model = init_model(arch, 5);
  const BipartiteState s = labeled_state(900);
  // Permute the state arrays directly (rotate variable indices by one).
  const int n = s.n_vars;
  std::vector<int> perm(n);
  for (int j = 0; j < n; ++j) perm[j] = (j + 1) % n;
  BipartiteState t = s;
  for (int j = 0; j < n; ++j)
    for (int f = 0; f < BipartiteState::kVarFeatures; ++f)
      t.var_features[static_cast<std::size_t>(perm[j]) * BipartiteState::kVarFeatures + f] =
          s.var_feature(j, f);
  for (int j = 0; j < n; ++j) t.candidate_mask[perm[j]] = s.candidate_mask[j];
  for (std::size_t k = 0; k < s.edges.size(); ++k) t.edges[k].var = perm[s.edges[k].var];
  t.expert_action = perm[*s.expert_action];

  const std::vector<double> pa = forward(model, s);
  const std::vector<double> pb = forward(model, t);
  for (int j = 0; j < n; ++j) CHECK(pa[j] == doctest::Approx(pb[perm[j]]).epsilon(1e-12));
}

TEST_CASE("a zero-weight model is uniform over candidates with loss ln(c)") {
  ArchConfig arch;
  arch.embed_dim = 8;
  ModelParams model = init_model(arch, 6);
  for (Tensor& t : model.t)
    for (double& x : t.v) x = 0.0;
  BipartiteState s = labeled_state(1100, 4, 2);
  // Force exactly four candidates if possible, otherwise use what is there.
  long c = 0;
  for (std::uint8_t b : s.candidate_mask) c += b;
  REQUIRE(c >= 1);
  Rng rng(0);
  const std::vector<BipartiteState> batch{s};
  const auto [loss, grads] = loss_and_grad(model, batch, rng);
  CHECK(loss == doctest::Approx(std::log(static_cast<double>(c))).epsilon(1e-12));
}

TEST_CASE("probability one at the label means zero loss and zero gradients") {
  ArchConfig arch;
  arch.embed_dim = 8;
  const ModelParams model = init_model(arch, 7);
  BipartiteState s = labeled_state(1300);
  const int keep = *s.expert_action;
  for (int j = 0; j < s.n_vars; ++j)
    if (j != keep) s.candidate_mask[j] = 0;
  Rng rng(0);
  const auto [loss, grads] = loss_and_grad(model, std::vector<BipartiteState>{s}, rng);
  CHECK(loss == doctest::Approx(0.0));
  for (const Tensor& g : grads)
    for (double x : g.v) CHECK(x == 0.0);
}

TEST_CASE("analytic gradients match central finite differences on a 3-var/2-row fixture") {
  ArchConfig arch;  // full-size embedding, dropout off
  ModelParams model = init_model(arch, 11);
  const BipartiteState s = labeled_state(1500, 3, 2);
  REQUIRE(s.n_cons >= 2);
  const std::vector<BipartiteState> batch{s};
  Rng rng(0);
  const auto [loss, grads] = loss_and_grad(model, batch, rng);
  CHECK(loss > 0.0);

  const double h = 1e-6;
  double max_rel = 0.0;
  for (int id = 0; id < kNumTensors; ++id) {
    for (std::size_t i = 0; i < model.t[id].size(); ++i) {
      const double keep = model.t[id].v[i];
      model.t[id].v[i] = keep + h;
      const double lp = loss_via_forward(model, batch);
      model.t[id].v[i] = keep - h;
      const double lm = loss_via_forward(model, batch);
      model.t[id].v[i] = keep;
      const double fd = (lp - lm) / (2.0 * h);
      const double g = grads[id].v[i];
      const double rel = std::abs(g - fd) / std::max({1.0, std::abs(g), std::abs(fd)});
      max_rel = std::max(max_rel, rel);
    }
  }
  CHECK(max_rel <= 1e-4);
}

TEST_CASE("adam leaves parameters alone on a zero gradient") {
  ArchConfig arch;
  arch.embed_dim = 8;
  ModelParams model = init_model(arch, 13);
  const ModelParams before = model;
  AdamState opt = make_adam_state(arch);
  TrainConfig cfg;
  adam_step(model, make_tensor_set(arch), opt, cfg);
  CHECK(model == before);
}

TEST_CASE("the first adam step is bounded by the learning rate") {
  ArchConfig arch;
  arch.embed_dim = 8;
  ModelParams model = init_model(arch, 14);
  const ModelParams before = model;
  AdamState opt = make_adam_state(arch);
  TrainConfig cfg;
  TensorSet grads = make_tensor_set(arch);
  Rng rng(21);
  for (Tensor& g : grads)
    for (double& x : g.v) x = 2.0 * rng.uniform01() - 1.0;
  adam_step(model, grads, opt, cfg);
  for (int id = 0; id < kNumTensors; ++id)
    for (std::size_t i = 0; i < grads[id].size(); ++i) {
      const double delta = std::abs(model.t[id].v[i] - before.t[id].v[i]);
      CHECK(delta <= cfg.learning_rate * 1.0001);
      if (grads[id].v[i] != 0.0) CHECK(delta > 0.0);
    }
}

TEST_CASE("adam is deterministic") {
  ArchConfig arch;
  arch.embed_dim = 8;
  ModelParams a = init_model(arch, 15), b = a;
  AdamState oa = make_adam_state(arch), ob = make_adam_state(arch);
  TrainConfig cfg;
  TensorSet grads = make_tensor_set(arch);
  for (Tensor& g : grads)
    for (double& x : g.v) x = 0.25;
  adam_step(a, grads, oa, cfg);
  adam_step(b, grads, ob, cfg);
  CHECK(a == b);
}

TEST_CASE("training reduces the loss on a small dataset") {
  ArchConfig arch;
  arch.embed_dim = 16;
  std::vector<BipartiteState> dataset;
  for (std::uint64_t s = 2000; dataset.size() < 60; ++s) {
    const MilpInstance m = gen_assignment(s, 4, 2);
    BnbNode node;
    node.lp = solve_lp(m);
    if (node.lp.status != LpStatus::Optimal) continue;
    const auto cands = fractional_candidates(node.lp, m);
    if (cands.empty()) continue;
    BipartiteState state = extract_state(m, node, node.lp);
    state.expert_action = cands.front();
    dataset.push_back(std::move(state));
  }
  TrainConfig cfg;
  cfg.epochs = 40;
  cfg.seed = 5;
  const TrainResult result = train(init_model(arch, 17), dataset, cfg);
  REQUIRE(result.epoch_losses.size() == 40);
  const double first = result.epoch_losses.front();
  double last_window = 0.0;
  for (int e = 35; e < 40; ++e) last_window += result.epoch_losses[e];
  last_window /= 5.0;
  CHECK(last_window < first);
}

TEST_CASE("zero epochs returns the model unchanged") {
  ArchConfig arch;
  arch.embed_dim = 8;
  const ModelParams start = init_model(arch, 18);
  TrainConfig cfg;
  cfg.epochs = 0;
  const TrainResult result = train(start, std::vector<BipartiteState>{labeled_state(2500)}, cfg);
  CHECK(result.model == start);
  CHECK(result.epoch_losses.empty());
}

TEST_CASE("training twice with the same seed is bit-identical") {
  ArchConfig arch;
  arch.embed_dim = 8;
  arch.dropout_rate = 0.1;  // exercises the dropout rng path too
  std::vector<BipartiteState> dataset;
  for (std::uint64_t s = 3000; dataset.size() < 20; ++s) dataset.push_back(labeled_state(s));
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 9;
  const TrainResult a = train(init_model(arch, 19), dataset, cfg);
  const TrainResult b = train(init_model(arch, 19), dataset, cfg);
  CHECK(a.model == b.model);
  CHECK(a.epoch_losses == b.epoch_losses);
}

TEST_CASE("inference is deterministic and dropout-free") {
  ArchConfig arch;
  arch.embed_dim = 8;
  arch.dropout_rate = 0.25;
  const ModelParams model = init_model(arch, 23);
  const BipartiteState s = labeled_state(3500);
  const auto p1 = forward(model, s);
  const auto p2 = forward(model, s);
  CHECK(p1 == p2);

  ModelParams no_dropout = model;
  no_dropout.arch.dropout_rate = 0.0;
  CHECK(forward(no_dropout, s) == p1);

  Rng rng(3);
  const auto trained = forward(model, s, /*train_mode=*/true, rng);
  CHECK(trained != p1);  // dropout noise in train mode
}

TEST_CASE("model files round-trip bit-exactly") {
  ArchConfig arch;
  arch.embed_dim = 12;
  const ModelParams model = init_model(arch, 27);
  const auto path = (std::filesystem::temp_directory_path() / "bf_model.model").string();
  save_model(model, path);
  const ModelParams loaded = load_model(path);
  CHECK(loaded == model);
  std::filesystem::remove(path);
}

TEST_CASE("a truncated model file fails the checksum") {
  ArchConfig arch;
  arch.embed_dim = 8;
  const ModelParams model = init_model(arch, 28);
  const auto path = (std::filesystem::temp_directory_path() / "bf_trunc.model").string();
  save_model(model, path);
  const auto full = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, full - 9);
  CHECK_THROWS_AS(load_model(path), ChecksumMismatch);
  std::filesystem::remove(path);
}

TEST_CASE("extra payload bytes fail the checksum") {
  ArchConfig arch;
  arch.embed_dim = 8;
  const ModelParams model = init_model(arch, 29);
  const auto path = (std::filesystem::temp_directory_path() / "bf_extra.model").string();
  save_model(model, path);
  {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    out << "x";
  }
  CHECK_THROWS_AS(load_model(path), ChecksumMismatch);
  std::filesystem::remove(path);
}

TEST_CASE("loading into a typed context enforces the architecture") {
  ArchConfig arch;
  arch.embed_dim = 8;
  const ModelParams model = init_model(arch, 30);
  const auto path = (std::filesystem::temp_directory_path() / "bf_arch.model").string();
  save_model(model, path);
  ArchConfig other = arch;
  other.embed_dim = 16;
  CHECK_THROWS_AS(load_model(path, other), ArchMismatch);
  CHECK(load_model(path, arch) == model);
  std::filesystem::remove(path);
}

TEST_CASE("gradients stay correct across random parameter draws") {
  // Spot finite-difference checks across several (model, state) draws with a
  // small embedding; the full-entry sweep above covers the default size.
  ArchConfig arch;
  arch.embed_dim = 6;
  double max_rel = 0.0;
  for (std::uint64_t draw = 0; draw < 6; ++draw) {
    ModelParams model = init_model(arch, 40 + draw);
    const BipartiteState s = labeled_state(4000 + 37 * draw);
    const std::vector<BipartiteState> batch{s};
    Rng rng(0);
    const auto [loss, grads] = loss_and_grad(model, batch, rng);
    (void)loss;
    const double h = 1e-6;
    for (int id = 0; id < kNumTensors; ++id) {
      for (std::size_t i = 0; i < model.t[id].size(); i += 3) {
        const double keep = model.t[id].v[i];
        model.t[id].v[i] = keep + h;
        const double lp = loss_via_forward(model, batch);
        model.t[id].v[i] = keep - h;
        const double lm = loss_via_forward(model, batch);
        model.t[id].v[i] = keep;
        const double fd = (lp - lm) / (2.0 * h);
        const double g = grads[id].v[i];
        max_rel = std::max(max_rel,
                           std::abs(g - fd) / std::max({1.0, std::abs(g), std::abs(fd)}));
      }
    }
  }
  CHECK(max_rel <= 1e-4);
}

TEST_CASE("shape and label contract violations raise the named errors") {
  ArchConfig arch;
  arch.embed_dim = 8;
  const ModelParams model = init_model(arch, 51);
  BipartiteState s = labeled_state(5000);
  Rng rng(0);

  BipartiteState bad_edge = s;
  bad_edge.edges.push_back({s.n_cons + 3, 0, 1.0});
  CHECK_THROWS_AS(forward(model, bad_edge), ShapeMismatch);

  BipartiteState unlabeled = s;
  unlabeled.expert_action.reset();
  CHECK_THROWS_AS(loss_and_grad(model, std::vector<BipartiteState>{unlabeled}, rng),
                  MissingLabel);

  BipartiteState off_mask = s;
  off_mask.candidate_mask[*off_mask.expert_action] = 0;
  off_mask.candidate_mask[(*off_mask.expert_action + 1) % off_mask.n_vars] = 1;
  CHECK_THROWS_AS(loss_and_grad(model, std::vector<BipartiteState>{off_mask}, rng),
                  MissingLabel);

  CHECK_THROWS_AS(loss_and_grad(model, std::vector<BipartiteState>{}, rng), EmptyDataset);
  TrainConfig cfg;
  cfg.epochs = 1;
  CHECK_THROWS_AS(train(model, std::vector<BipartiteState>{}, cfg), EmptyDataset);
}

TEST_CASE("a header/payload length disagreement fails the checksum") {
  ArchConfig arch;
  arch.embed_dim = 8;
  const ModelParams model = init_model(arch, 31);
  const auto path = (std::filesystem::temp_directory_path() / "bf_len.model").string();
  save_model(model, path);
  // Rewrite the header with an inflated payload_bytes field.
  std::string header, payload;
  {
    std::ifstream in(path, std::ios::binary);
    std::getline(in, header);
    payload.assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  }
  const std::string key = "\"payload_bytes\":";
  const auto pos = header.find(key);
  REQUIRE(pos != std::string::npos);
  auto end = header.find(',', pos);
  const std::size_t declared = std::stoul(header.substr(pos + key.size(), end - pos - key.size()));
  header.replace(pos + key.size(), end - pos - key.size(), std::to_string(declared + 8));
  {
    std::ofstream out(path, std::ios::binary);
    out << header << '\n' << payload;
  }
  CHECK_THROWS_AS(load_model(path), ChecksumMismatch);
  std::filesystem::remove(path);
}

TEST_CASE("training on many states of one instance drives the loss down") {
  // Random rollouts over different seeds visit distinct nodes of one tree;
  // every visited state gets an expert label.
  const MilpInstance inst = gen_assignment(6100, 8, 3);
  std::vector<BipartiteState> dataset;
  StrongBranchingPolicy expert;
  for (std::uint64_t seed = 0; dataset.size() < 200 && seed < 200; ++seed) {
    BaselinePolicy actor(BaselineKind::Random);
    MixturePolicy mix(actor, expert, 0.0,
                      [&](BipartiteState s) { dataset.push_back(std::move(s)); },
                      /*label_all_states=*/true);
    run_bnb(inst, mix, 30, seed);
  }
  REQUIRE(dataset.size() >= 200);
  dataset.resize(200);
  ArchConfig arch;
  arch.embed_dim = 8;
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.seed = 11;
  const TrainResult result = train(init_model(arch, 12), dataset, cfg);
  double first_window = 0.0, last_window = 0.0;
  for (int e = 0; e < 5; ++e) first_window += result.epoch_losses[e];
  for (int e = 25; e < 30; ++e) last_window += result.epoch_losses[e];
  CHECK(last_window < first_window);
}
