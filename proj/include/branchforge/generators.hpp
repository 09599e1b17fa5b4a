// Copyright (c) 2026 BranchForge contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "branchforge/errors.hpp"
#include "branchforge/milp.hpp"
#include "branchforge/rng.hpp"

namespace branchforge {

namespace detail {

inline void require(bool ok, const char* what) {
  if (!ok) throw DegenerateParameters(what);
}

}  // namespace detail

/// Random minimum-cost set cover. One binary variable per set, one GE row per
/// item; every item is covered by at least two sets (extra sets are added when
/// the density draw leaves an item under-covered). Costs are integers in
/// [1, 100] so exhaustive oracles compare exactly. Pure function of its
/// arguments.
inline MilpInstance gen_set_cover(std::uint64_t seed, int n_items, int n_sets,
                                  double density) {
  detail::require(n_items >= 2, "gen_set_cover: n_items must be >= 2");
  detail::require(n_sets >= n_items, "gen_set_cover: n_sets must be >= n_items");
  detail::require(density > 0.0 && density < 1.0, "gen_set_cover: density must be in (0, 1)");

  Rng rng(derive_seed({seed, 0x5e7c04e2ULL}));
  std::vector<std::vector<std::uint8_t>> covers(
      static_cast<std::size_t>(n_items), std::vector<std::uint8_t>(static_cast<std::size_t>(n_sets), 0));
  for (int i = 0; i < n_items; ++i)
    for (int j = 0; j < n_sets; ++j)
      if (rng.bernoulli(density)) covers[i][j] = 1;

  // Top up under-covered items with distinct random sets.
  for (int i = 0; i < n_items; ++i) {
    int count = std::accumulate(covers[i].begin(), covers[i].end(), 0);
    int attempts = 0;
    while (count < 2) {
      if (++attempts > 64 * n_sets)
        throw DegenerateParameters("gen_set_cover: could not reach coverage >= 2");
      const int j = static_cast<int>(rng.uniform_int(0, n_sets - 1));
      if (!covers[i][j]) {
        covers[i][j] = 1;
        ++count;
      }
    }
  }

  MilpInstance m;
  m.n_vars = n_sets;
  m.n_cons = n_items;
  m.name = "setcover_s" + std::to_string(seed) + "_" + std::to_string(n_items) + "x" +
           std::to_string(n_sets);
  m.obj.resize(n_sets);
  for (int j = 0; j < n_sets; ++j) m.obj[j] = static_cast<double>(rng.uniform_int(1, 100));
  m.var_lb.assign(n_sets, 0.0);
  m.var_ub.assign(n_sets, 1.0);
  m.is_integer.assign(n_sets, 1);
  m.rows.resize(n_items);
  m.sense.assign(n_items, RowSense::GE);
  m.rhs.assign(n_items, 1.0);
  for (int i = 0; i < n_items; ++i)
    for (int j = 0; j < n_sets; ++j)
      if (covers[i][j]) m.rows[i].push_back({j, 1.0});

  // Feasibility certificate: selecting every set covers every item.
  for (int i = 0; i < n_items; ++i)
    detail::require(m.rows[i].size() >= 2, "gen_set_cover: coverage certificate failed");
  return m;
}

/// Random assignment with tight bin capacities. Binary x[i*n_bins + b] places
/// item i in bin b; one EQ row per item, one LE capacity row per bin.
/// Capacities equal the loads of a balanced greedy placement plus a little
/// slack, so the greedy placement itself certifies feasibility while the LP
/// relaxation keeps a real integrality gap.
inline MilpInstance gen_assignment(std::uint64_t seed, int n_items, int n_bins) {
  detail::require(n_items >= 2, "gen_assignment: n_items must be >= 2");
  detail::require(n_bins >= 2, "gen_assignment: n_bins must be >= 2");

  Rng rng(derive_seed({seed, 0xa551637eULL}));
  std::vector<double> sizes(static_cast<std::size_t>(n_items));
  for (double& s : sizes) s = static_cast<double>(rng.uniform_int(1, 10));

  // Balance items over bins largest-first, then grant each bin its greedy
  // load plus slack. The recorded placement is the feasibility certificate.
  std::vector<int> order(static_cast<std::size_t>(n_items));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return sizes[a] > sizes[b]; });
  std::vector<double> load(static_cast<std::size_t>(n_bins), 0.0);
  for (int i : order) *std::min_element(load.begin(), load.end()) += sizes[i];
  std::vector<double> caps(static_cast<std::size_t>(n_bins));
  for (int b = 0; b < n_bins; ++b)
    caps[b] = load[b] + static_cast<double>(rng.uniform_int(0, 1));
  for (int b = 0; b < n_bins; ++b)
    detail::require(load[b] <= caps[b], "gen_assignment: certificate failed");

  MilpInstance m;
  m.n_vars = n_items * n_bins;
  m.n_cons = n_items + n_bins;
  m.name = "assign_s" + std::to_string(seed) + "_" + std::to_string(n_items) + "x" +
           std::to_string(n_bins);
  m.obj.resize(m.n_vars);
  for (double& c : m.obj) c = static_cast<double>(rng.uniform_int(1, 100));
  m.var_lb.assign(m.n_vars, 0.0);
  m.var_ub.assign(m.n_vars, 1.0);
  m.is_integer.assign(m.n_vars, 1);
  m.rows.resize(m.n_cons);
  m.sense.resize(m.n_cons);
  m.rhs.resize(m.n_cons);
  for (int i = 0; i < n_items; ++i) {
    for (int b = 0; b < n_bins; ++b) m.rows[i].push_back({i * n_bins + b, 1.0});
    m.sense[i] = RowSense::EQ;
    m.rhs[i] = 1.0;
  }
  for (int b = 0; b < n_bins; ++b) {
    const int r = n_items + b;
    for (int i = 0; i < n_items; ++i) m.rows[r].push_back({i * n_bins + b, sizes[i]});
    m.sense[r] = RowSense::LE;
    m.rhs[r] = caps[b];
  }
  return m;
}

/// Hand-crafted probe instance with blocks of all-duplicate columns. Each
/// block has three interchangeable binaries under  d1 + d2 + d3 <= 1.5  with
/// objective -1 each, so the LP relaxation pins the block sum at 1.5 while any
/// single variable can be fixed to 0 or 1 without moving the bound: both
/// strong-branching child gains vanish on every candidate.
inline MilpInstance gen_degenerate_blocks(int n_blocks) {
  detail::require(n_blocks >= 1, "gen_degenerate_blocks: n_blocks must be >= 1");
  MilpInstance m;
  m.n_vars = 3 * n_blocks;
  m.n_cons = n_blocks;
  m.name = "degenerate_" + std::to_string(n_blocks);
  m.obj.assign(m.n_vars, -1.0);
  m.var_lb.assign(m.n_vars, 0.0);
  m.var_ub.assign(m.n_vars, 1.0);
  m.is_integer.assign(m.n_vars, 1);
  m.rows.resize(n_blocks);
  m.sense.assign(n_blocks, RowSense::LE);
  m.rhs.assign(n_blocks, 1.5);
  for (int k = 0; k < n_blocks; ++k)
    for (int t = 0; t < 3; ++t) m.rows[k].push_back({3 * k + t, 1.0});
  return m;
}

}  // namespace branchforge
