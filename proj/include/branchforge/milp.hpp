// Copyright (c) 2026 BranchForge contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

#include "branchforge/errors.hpp"

namespace branchforge {

enum class RowSense { LE, GE, EQ };

inline const char* to_string(RowSense s) {
  switch (s) {
    case RowSense::LE: return "LE";
    case RowSense::GE: return "GE";
    case RowSense::EQ: return "EQ";
  }
  return "?";
}

struct RowEntry {
  int var = 0;
  double coef = 0.0;
};

/// A mixed-integer linear program in canonical minimization form. Immutable
/// after construction; row i reads  sum_j coef * x[var]  sense[i]  rhs[i].
struct MilpInstance {
  int n_vars = 0;
  int n_cons = 0;
  std::vector<double> obj;                  // minimize obj . x
  std::vector<double> var_lb;
  std::vector<double> var_ub;
  std::vector<std::uint8_t> is_integer;
  std::vector<std::vector<RowEntry>> rows;  // sparse, one list per constraint
  std::vector<RowSense> sense;
  std::vector<double> rhs;
  std::string name;
  bool sign_flip = false;  // true when a maximization objective was negated at load
};

/// A not-yet-canonical instance: same payload plus an objective direction.
struct RawInstance {
  MilpInstance data;
  bool maximize = false;
};

/// Structural validation shared by canonicalize and the instance reader.
inline void validate_instance(const MilpInstance& m) {
  const auto n = static_cast<std::size_t>(m.n_vars);
  if (m.obj.size() != n || m.var_lb.size() != n || m.var_ub.size() != n ||
      m.is_integer.size() != n)
    throw ParseError("instance field lengths do not match n_vars");
  if (m.rows.size() != static_cast<std::size_t>(m.n_cons) ||
      m.sense.size() != m.rows.size() || m.rhs.size() != m.rows.size())
    throw ParseError("instance row/sense/rhs lengths do not match n_cons");
  for (int j = 0; j < m.n_vars; ++j) {
    const bool lb_fin = std::isfinite(m.var_lb[j]);
    const bool ub_fin = std::isfinite(m.var_ub[j]);
    if (!lb_fin || !ub_fin) {
      if (m.is_integer[j])
        throw InfiniteBoundOnIntegerVar("integer variable " + std::to_string(j) +
                                        " has a non-finite bound");
      throw InvalidBounds("variable " + std::to_string(j) + " has a non-finite bound");
    }
    if (m.var_lb[j] > m.var_ub[j])
      throw InvalidBounds("variable " + std::to_string(j) + " has lb > ub");
    if (m.is_integer[j] &&
        (m.var_lb[j] != std::floor(m.var_lb[j]) || m.var_ub[j] != std::floor(m.var_ub[j])))
      throw InvalidBounds("integer variable " + std::to_string(j) +
                          " has non-integral bounds");
  }
  std::unordered_set<int> seen;
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    seen.clear();
    for (const RowEntry& e : m.rows[i]) {
      if (e.var < 0 || e.var >= m.n_vars)
        throw IndexOutOfRange("row " + std::to_string(i) + " references variable " +
                              std::to_string(e.var) + " outside [0, " +
                              std::to_string(m.n_vars) + ")");
      if (!seen.insert(e.var).second)
        throw IndexOutOfRange("row " + std::to_string(i) + " has duplicate entries for variable " +
                              std::to_string(e.var));
      if (!std::isfinite(e.coef))
        throw ParseError("row " + std::to_string(i) + " has a non-finite coefficient");
    }
  }
}

/// Normalizes a raw instance to minimization form. A maximization objective is
/// negated and sign_flip recorded so callers can report objectives in the
/// original orientation. Idempotent for already-canonical input.
inline MilpInstance canonicalize(const RawInstance& raw) {
  validate_instance(raw.data);
  MilpInstance out = raw.data;
  if (raw.maximize) {
    for (double& c : out.obj) c = -c;
    out.sign_flip = true;
  }
  return out;
}

/// Objective value in the orientation the instance was originally stated in.
inline double original_orientation(const MilpInstance& m, double canonical_objective) {
  return m.sign_flip ? -canonical_objective : canonical_objective;
}

}  // namespace branchforge
