// Copyright (c) 2026 BranchForge contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "branchforge/errors.hpp"
#include "branchforge/nn.hpp"

namespace branchforge {

namespace detail {

// Sorted pairwise summation: permutation-invariant at the bit level and
// accurate for the pool sizes we average.
inline double stable_sum(std::vector<double>& values) {
  std::sort(values.begin(), values.end());
  std::size_t count = values.size();
  while (count > 1) {
    std::size_t half = 0;
    for (std::size_t i = 0; i + 1 < count; i += 2) values[half++] = values[i] + values[i + 1];
    if (count % 2 == 1) values[half++] = values[count - 1];
    count = half;
  }
  return count == 1 ? values[0] : 0.0;
}

}  // namespace detail

/// Elementwise arithmetic mean of the named parameter tensors. The inputs
/// must share one architecture; optimizer state is never part of the average.
inline ModelParams kida_average(std::span<const ModelParams> models) {
  if (models.empty()) throw EmptyPool("kida_average: no models to average");
  const ArchConfig& arch = models.front().arch;
  for (const ModelParams& m : models)
    if (!(m.arch == arch)) throw ArchMismatch("kida_average: models disagree on architecture");

  ModelParams out;
  out.arch = arch;
  out.init_seed = 0;  // sentinel: an averaged model has no single init stream
  out.t = make_tensor_set(arch);
  const double inv = 1.0 / static_cast<double>(models.size());
  std::vector<double> column(models.size());
  for (int id = 0; id < kNumTensors; ++id) {
    Tensor& dst = out.t[id];
    for (std::size_t i = 0; i < dst.size(); ++i) {
      for (std::size_t m = 0; m < models.size(); ++m) column[m] = models[m].t[id].v[i];
      dst.v[i] = detail::stable_sum(column) * inv;
    }
  }
  return out;
}

inline ModelParams kida_average(const std::vector<ModelParams>& models) {
  return kida_average(std::span<const ModelParams>(models));
}

/// Same arithmetic as kida_average; the inputs are checkpoints captured from
/// a single training run rather than models from separate collection rounds.
inline ModelParams epoch_weight_average(std::span<const ModelParams> checkpoints) {
  if (checkpoints.empty()) throw EmptyPool("epoch_weight_average: no checkpoints");
  return kida_average(checkpoints);
}

inline ModelParams epoch_weight_average(const std::vector<ModelParams>& checkpoints) {
  return epoch_weight_average(std::span<const ModelParams>(checkpoints));
}

struct PoolEntry {
  ModelParams model;
  double validation_reward = 0.0;
  int iteration_tag = 0;
};

struct ModelPool {
  std::vector<PoolEntry> entries;
};

inline constexpr int kDefaultTopK = 3;

/// The k pool entries with the highest validation reward; reward ties go to
/// the lower iteration tag.
inline std::vector<ModelParams> select_top_k(const ModelPool& pool, int k = kDefaultTopK) {
  if (k < 1) throw PoolTooSmall("select_top_k: k must be >= 1");
  if (static_cast<int>(pool.entries.size()) < k)
    throw PoolTooSmall("select_top_k: pool holds " + std::to_string(pool.entries.size()) +
                       " models, need " + std::to_string(k));
  if (!pool.entries.empty()) {
    const ArchConfig& arch = pool.entries.front().model.arch;
    for (const PoolEntry& e : pool.entries)
      if (!(e.model.arch == arch)) throw ArchMismatch("select_top_k: mixed architectures in pool");
  }
  std::vector<const PoolEntry*> order;
  order.reserve(pool.entries.size());
  for (const PoolEntry& e : pool.entries) order.push_back(&e);
  std::stable_sort(order.begin(), order.end(), [](const PoolEntry* a, const PoolEntry* b) {
    if (a->validation_reward != b->validation_reward)
      return a->validation_reward > b->validation_reward;
    return a->iteration_tag < b->iteration_tag;
  });
  std::vector<ModelParams> out;
  out.reserve(k);
  for (int i = 0; i < k; ++i) out.push_back(order[i]->model);
  return out;
}

/// Manifest format: a JSON list of {model_path, validation_reward,
/// iteration_tag}. Relative model paths resolve against the manifest's
/// directory.
inline void write_pool_manifest(const std::vector<std::string>& model_paths,
                                const std::vector<double>& rewards,
                                const std::vector<int>& tags, const std::string& path) {
  if (model_paths.size() != rewards.size() || rewards.size() != tags.size())
    throw Error("write_pool_manifest: mismatched column lengths");
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < model_paths.size(); ++i)
    j.push_back({{"model_path", model_paths[i]},
                 {"validation_reward", rewards[i]},
                 {"iteration_tag", tags[i]}});
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << j.dump(2) << '\n';
}

inline ModelPool load_pool_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("pool manifest '") + path + "': " + e.what());
  }
  if (!j.is_array()) throw ParseError("pool manifest '" + path + "': expected a JSON list");
  const auto base = std::filesystem::path(path).parent_path();
  ModelPool pool;
  for (const auto& entry : j) {
    PoolEntry e;
    std::filesystem::path mp = entry.at("model_path").get<std::string>();
    if (mp.is_relative()) mp = base / mp;
    e.model = load_model(mp.string());
    e.validation_reward = entry.at("validation_reward").get<double>();
    e.iteration_tag = entry.at("iteration_tag").get<int>();
    pool.entries.push_back(std::move(e));
  }
  return pool;
}

}  // namespace branchforge
