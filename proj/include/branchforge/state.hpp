// Copyright (c) 2026 BranchForge contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "branchforge/bnb.hpp"
#include "branchforge/errors.hpp"
#include "branchforge/milp.hpp"
#include "branchforge/simplex.hpp"

namespace branchforge {

/// Bipartite view of a branch-and-bound node: variable rows V, constraint
/// rows C, one scalar feature per nonzero coefficient, and the branching
/// candidate mask. Feature layouts are part of the artifact contract and are
/// frozen by fixture tests.
struct BipartiteState {
  static constexpr int kVarFeatures = 10;
  static constexpr int kConFeatures = 5;
  static constexpr int kEdgeFeatures = 1;
  static constexpr double kClip = 10.0;

  struct Edge {
    int con = 0;
    int var = 0;
    double feat = 0.0;
  };

  int n_vars = 0;
  int n_cons = 0;
  std::vector<double> var_features;  // n_vars x kVarFeatures, row-major
  std::vector<double> con_features;  // n_cons x kConFeatures, row-major
  std::vector<Edge> edges;
  std::vector<std::uint8_t> candidate_mask;  // per variable
  std::optional<int> expert_action;

  double var_feature(int j, int f) const { return var_features[static_cast<std::size_t>(j) * kVarFeatures + f]; }
  double con_feature(int i, int f) const { return con_features[static_cast<std::size_t>(i) * kConFeatures + f]; }
};

namespace detail {

inline double clip_feature(double v) {
  return std::clamp(v, -BipartiteState::kClip, BipartiteState::kClip);
}

inline double row_inf_norm(const std::vector<RowEntry>& row) {
  double n = 0.0;
  for (const RowEntry& e : row) n = std::max(n, std::abs(e.coef));
  return n > 0.0 ? n : 1.0;
}

}  // namespace detail

/// Converts an LP-optimal node into the bipartite state. Variable features:
/// [obj/|obj|inf, lb, ub, is_integer, x, fractionality, is_basic,
///  reduced_cost/|obj|inf, at_lower, at_upper]; constraint features:
/// [rhs/|row|inf, sense (-1 LE, +1 GE, 0 EQ), dual*|row|inf/|obj|inf,
///  slack/|row|inf, tight]; edge feature: coefficient/|row|inf. The dual slot
/// carries the row norm so every constraint feature is invariant under row
/// scaling. Everything clipped to +-10.
inline BipartiteState extract_state(const MilpInstance& inst, const BnbNode& node,
                                    const LpSolution& lp) {
  if (lp.status != LpStatus::Optimal) throw NonOptimalLp("extract_state: LP not optimal");
  BipartiteState s;
  s.n_vars = inst.n_vars;
  s.n_cons = inst.n_cons;
  s.var_features.assign(static_cast<std::size_t>(inst.n_vars) * BipartiteState::kVarFeatures, 0.0);
  s.con_features.assign(static_cast<std::size_t>(inst.n_cons) * BipartiteState::kConFeatures, 0.0);
  s.candidate_mask.assign(inst.n_vars, 0);

  double obj_norm = 0.0;
  for (double c : inst.obj) obj_norm = std::max(obj_norm, std::abs(c));
  if (obj_norm == 0.0) obj_norm = 1.0;

  for (int j = 0; j < inst.n_vars; ++j) {
    double lo = inst.var_lb[j], hi = inst.var_ub[j];
    if (auto it = node.bound_overrides.find(j); it != node.bound_overrides.end()) {
      lo = it->second.lb;
      hi = it->second.ub;
    }
    const double x = lp.x[j];
    double* f = &s.var_features[static_cast<std::size_t>(j) * BipartiteState::kVarFeatures];
    f[0] = detail::clip_feature(inst.obj[j] / obj_norm);
    f[1] = detail::clip_feature(lo);
    f[2] = detail::clip_feature(hi);
    f[3] = inst.is_integer[j] ? 1.0 : 0.0;
    f[4] = detail::clip_feature(x);
    f[5] = detail::clip_feature(x - std::floor(x));
    f[6] = lp.basis[j] == BasisStatus::Basic ? 1.0 : 0.0;
    f[7] = detail::clip_feature(lp.reduced_costs[j] / obj_norm);
    f[8] = lp.basis[j] == BasisStatus::AtLower ? 1.0 : 0.0;
    f[9] = lp.basis[j] == BasisStatus::AtUpper ? 1.0 : 0.0;
    if (inst.is_integer[j] && std::abs(x - std::round(x)) > kIntegralityTol)
      s.candidate_mask[j] = 1;
  }

  for (int i = 0; i < inst.n_cons; ++i) {
    const double row_norm = detail::row_inf_norm(inst.rows[i]);
    double activity = 0.0;
    for (const RowEntry& e : inst.rows[i]) activity += e.coef * lp.x[e.var];
    const double slack = inst.rhs[i] - activity;
    double* f = &s.con_features[static_cast<std::size_t>(i) * BipartiteState::kConFeatures];
    f[0] = detail::clip_feature(inst.rhs[i] / row_norm);
    f[1] = inst.sense[i] == RowSense::LE ? -1.0 : inst.sense[i] == RowSense::GE ? 1.0 : 0.0;
    f[2] = detail::clip_feature(lp.duals[i] * row_norm / obj_norm);
    f[3] = detail::clip_feature(slack / row_norm);
    f[4] = std::abs(slack) <= 1e-7 ? 1.0 : 0.0;
    for (const RowEntry& e : inst.rows[i])
      s.edges.push_back({i, e.var, detail::clip_feature(e.coef / row_norm)});
  }
  return s;
}

/// One dataset record per line: a JSON header with the dimensions plus flat
/// numeric arrays for V, C, E (con, var, feat triples) and the mask.
inline void append_sample(std::ostream& out, const BipartiteState& s) {
  nlohmann::ordered_json j;
  j["n"] = s.n_vars;
  j["m"] = s.n_cons;
  j["nnz"] = s.edges.size();
  j["expert_action"] =
      s.expert_action ? nlohmann::json(*s.expert_action) : nlohmann::json(nullptr);
  j["V"] = s.var_features;
  j["C"] = s.con_features;
  nlohmann::ordered_json e = nlohmann::ordered_json::array();
  for (const auto& edge : s.edges) {
    e.push_back(edge.con);
    e.push_back(edge.var);
    e.push_back(edge.feat);
  }
  j["E"] = std::move(e);
  nlohmann::ordered_json mask = nlohmann::ordered_json::array();
  for (std::uint8_t b : s.candidate_mask) mask.push_back(static_cast<int>(b));
  j["mask"] = std::move(mask);
  out << j.dump() << '\n';
}

inline void write_samples(const std::vector<BipartiteState>& samples, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  for (const BipartiteState& s : samples) append_sample(out, s);
}

inline BipartiteState parse_sample(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("sample record: ") + e.what());
  }
  BipartiteState s;
  s.n_vars = j.at("n").get<int>();
  s.n_cons = j.at("m").get<int>();
  const auto nnz = j.at("nnz").get<std::size_t>();
  if (!j.at("expert_action").is_null()) s.expert_action = j.at("expert_action").get<int>();
  s.var_features = j.at("V").get<std::vector<double>>();
  s.con_features = j.at("C").get<std::vector<double>>();
  const auto& e = j.at("E");
  if (e.size() != nnz * 3) throw ParseError("sample record: field 'E' length != 3*nnz");
  for (std::size_t k = 0; k < nnz; ++k)
    s.edges.push_back({e.at(3 * k).get<int>(), e.at(3 * k + 1).get<int>(),
                       e.at(3 * k + 2).get<double>()});
  for (const auto& b : j.at("mask")) s.candidate_mask.push_back(b.get<int>() != 0 ? 1 : 0);
  if (s.var_features.size() != static_cast<std::size_t>(s.n_vars) * BipartiteState::kVarFeatures ||
      s.con_features.size() != static_cast<std::size_t>(s.n_cons) * BipartiteState::kConFeatures ||
      s.candidate_mask.size() != static_cast<std::size_t>(s.n_vars))
    throw ParseError("sample record: array lengths do not match header dimensions");
  if (s.expert_action &&
      (*s.expert_action < 0 || *s.expert_action >= s.n_vars || !s.candidate_mask[*s.expert_action]))
    throw ParseError("sample record: expert_action is not a masked candidate");
  return s;
}

inline std::vector<BipartiteState> read_samples(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::vector<BipartiteState> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(parse_sample(line));
  }
  return out;
}

}  // namespace branchforge
