// Copyright (c) 2026 BranchForge contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <vector>

#include "branchforge/errors.hpp"
#include "branchforge/milp.hpp"

namespace branchforge {

enum class LpStatus { Optimal, Infeasible, IterationLimit };
enum class BasisStatus : std::uint8_t { Basic, AtLower, AtUpper };

struct Bounds {
  double lb = 0.0;
  double ub = 0.0;
};

/// Sparse per-variable bound tightenings layered on top of an instance.
/// std::map keeps iteration order deterministic.
using BoundOverrides = std::map<int, Bounds>;

struct LpSolution {
  LpStatus status = LpStatus::Infeasible;
  std::vector<double> x;              // per structural variable
  double objective = 0.0;             // canonical minimize orientation
  std::vector<double> duals;          // per row
  std::vector<double> reduced_costs;  // per structural variable
  std::vector<BasisStatus> basis;     // per structural variable
  int iterations = 0;
};

namespace detail {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Bounded-variable primal simplex on a dense tableau. Columns are laid out
// as [structurals | one slack per row | one artificial per row]; phase 1
// minimizes the artificial sum from an all-slack start, phase 2 the real
// objective with artificials fixed to zero. Dantzig pricing with a permanent
// switch to Bland's rule once degenerate pivots pile up.
class TableauSimplex {
 public:
  TableauSimplex(const MilpInstance& inst, const BoundOverrides& overrides)
      : n_(inst.n_vars), m_(inst.n_cons), cols_(n_ + 2 * m_) {
    lb_.assign(cols_, 0.0);
    ub_.assign(cols_, 0.0);
    for (int j = 0; j < n_; ++j) {
      lb_[j] = inst.var_lb[j];
      ub_[j] = inst.var_ub[j];
    }
    for (const auto& [j, b] : overrides) {
      if (j < 0 || j >= n_) throw IndexOutOfRange("bound override for variable " + std::to_string(j));
      if (b.lb > b.ub) throw InvalidBounds("bound override with lb > ub on variable " + std::to_string(j));
      lb_[j] = b.lb;
      ub_[j] = b.ub;
    }
    for (int i = 0; i < m_; ++i) {
      const int s = slack(i);
      switch (inst.sense[i]) {
        case RowSense::LE: lb_[s] = 0.0;   ub_[s] = kInf; break;
        case RowSense::GE: lb_[s] = -kInf; ub_[s] = 0.0;  break;
        case RowSense::EQ: lb_[s] = 0.0;   ub_[s] = 0.0;  break;
      }
      lb_[art(i)] = 0.0;
      ub_[art(i)] = kInf;
    }

    // Start everything nonbasic at a finite bound; artificials carry the rows.
    stat_.assign(cols_, BasisStatus::AtLower);
    for (int i = 0; i < m_; ++i)
      if (inst.sense[i] == RowSense::GE) stat_[slack(i)] = BasisStatus::AtUpper;

    std::vector<double> resid(m_);
    for (int i = 0; i < m_; ++i) {
      double act = 0.0;
      for (const RowEntry& e : inst.rows[i]) act += e.coef * bound_value(e.var);
      resid[i] = inst.rhs[i] - act;
    }
    sign_.resize(m_);
    for (int i = 0; i < m_; ++i) sign_[i] = resid[i] >= 0.0 ? 1.0 : -1.0;

    tab_.assign(static_cast<std::size_t>(m_) * cols_, 0.0);
    rhs_.assign(m_, 0.0);
    basis_.resize(m_);
    for (int i = 0; i < m_; ++i) {
      for (const RowEntry& e : inst.rows[i]) at(i, e.var) = sign_[i] * e.coef;
      at(i, slack(i)) = sign_[i];
      at(i, art(i)) = 1.0;
      rhs_[i] = sign_[i] * inst.rhs[i];
      basis_[i] = art(i);
      stat_[art(i)] = BasisStatus::Basic;
    }

    cost_.assign(cols_, 0.0);
    for (int i = 0; i < m_; ++i) cost_[art(i)] = 1.0;
    obj_ = inst.obj;
    iter_limit_ = 50 * (n_ + m_);
    degen_limit_ = 2 * n_;
  }

  LpSolution solve() {
    LpSolution out;
    const bool feasible = run_phase();
    if (!feasible) {
      out.status = LpStatus::Infeasible;
      out.objective = kInf;
      out.iterations = iterations_;
      return out;
    }
    if (out_of_iterations_) return iteration_limited();

    // Phase 2: real costs, artificials pinned at zero. Basic artificials are
    // pivoted out where a usable pivot exists; rows without one are redundant
    // and keep their (zero-valued) artificial.
    std::fill(cost_.begin(), cost_.end(), 0.0);
    for (int j = 0; j < n_; ++j) cost_[j] = obj_[j];
    for (int i = 0; i < m_; ++i) ub_[art(i)] = 0.0;
    drive_out_artificials();

    const bool done = run_phase();
    if (!done || out_of_iterations_) return iteration_limited();
    return extract();
  }

 private:
  int slack(int i) const { return n_ + i; }
  int art(int i) const { return n_ + m_ + i; }
  double& at(int r, int c) { return tab_[static_cast<std::size_t>(r) * cols_ + c]; }
  double at(int r, int c) const { return tab_[static_cast<std::size_t>(r) * cols_ + c]; }

  double bound_value(int j) const {
    return stat_[j] == BasisStatus::AtUpper ? ub_[j] : lb_[j];
  }

  // x_B = B^-1 b - sum over nonbasic columns of (B^-1 A_j) * bound(j).
  // Recomputed from the tableau every iteration; cheap at these sizes.
  void compute_basic_values() {
    xb_.assign(m_, 0.0);
    for (int r = 0; r < m_; ++r) xb_[r] = rhs_[r];
    for (int j = 0; j < cols_; ++j) {
      if (stat_[j] == BasisStatus::Basic) continue;
      const double v = bound_value(j);
      if (v == 0.0) continue;
      for (int r = 0; r < m_; ++r) xb_[r] -= at(r, j) * v;
    }
  }

  void compute_reduced_costs() {
    d_.assign(cols_, 0.0);
    for (int j = 0; j < cols_; ++j) d_[j] = cost_[j];
    for (int r = 0; r < m_; ++r) {
      const double cb = cost_[basis_[r]];
      if (cb == 0.0) continue;
      for (int j = 0; j < cols_; ++j) d_[j] -= cb * at(r, j);
    }
  }

  // Runs the current phase to optimality. Returns false when phase 1 ends
  // with a nonzero artificial sum (infeasible problem).
  bool run_phase() {
    const bool phase_one = m_ > 0 && cost_[art(0)] == 1.0;
    while (true) {
      if (iterations_ >= iter_limit_) {
        out_of_iterations_ = true;
        return true;
      }
      compute_basic_values();
      compute_reduced_costs();

      int enter = -1;
      double best_violation = kPriceTol;
      for (int j = 0; j < cols_; ++j) {
        if (stat_[j] == BasisStatus::Basic) continue;
        if (ub_[j] - lb_[j] <= 0.0) continue;  // fixed, can never move
        const double viol = stat_[j] == BasisStatus::AtLower ? -d_[j] : d_[j];
        if (viol <= kPriceTol) continue;
        if (bland_) {
          enter = j;
          break;
        }
        if (viol > best_violation) {
          best_violation = viol;
          enter = j;
        }
      }
      if (enter < 0) {
        if (phase_one && artificial_sum() > kFeasTol) return false;
        return true;
      }

      const double dir = stat_[enter] == BasisStatus::AtLower ? 1.0 : -1.0;
      double step = ub_[enter] - lb_[enter];  // bound-flip distance, may be inf
      int leave_row = -1;
      for (int r = 0; r < m_; ++r) {
        const double coef = dir * at(r, enter);
        double limit;
        if (coef > kPivotTol) {
          if (lb_[basis_[r]] == -kInf) continue;
          limit = (xb_[r] - lb_[basis_[r]]) / coef;
        } else if (coef < -kPivotTol) {
          if (ub_[basis_[r]] == kInf) continue;
          limit = (ub_[basis_[r]] - xb_[r]) / (-coef);
        } else {
          continue;
        }
        limit = std::max(limit, 0.0);
        if (limit < step - kRatioTol) {
          step = limit;
          leave_row = r;
        } else if (leave_row >= 0 && limit < step + kRatioTol) {
          // Tie: Bland wants the lowest leaving index, Dantzig the most
          // stable pivot element.
          if (bland_ ? basis_[r] < basis_[leave_row]
                     : std::abs(at(r, enter)) > std::abs(at(leave_row, enter))) {
            step = std::min(step, limit);
            leave_row = r;
          }
        }
      }

      if (leave_row < 0) {
        if (step == kInf)
          throw Error("simplex: unbounded direction on a box-bounded problem");
        stat_[enter] = stat_[enter] == BasisStatus::AtLower ? BasisStatus::AtUpper
                                                            : BasisStatus::AtLower;
      } else {
        const double coef = dir * at(leave_row, enter);
        stat_[basis_[leave_row]] =
            coef > 0.0 ? BasisStatus::AtLower : BasisStatus::AtUpper;
        pivot(leave_row, enter);
      }
      ++iterations_;
      if (step <= kDegenTol && ++degen_count_ > degen_limit_) bland_ = true;
    }
  }

  double artificial_sum() {
    compute_basic_values();
    double s = 0.0;
    for (int r = 0; r < m_; ++r)
      if (basis_[r] >= n_ + m_) s += std::abs(xb_[r]);
    for (int i = 0; i < m_; ++i)
      if (stat_[art(i)] != BasisStatus::Basic) s += bound_value(art(i));
    return s;
  }

  void drive_out_artificials() {
    for (int r = 0; r < m_; ++r) {
      if (basis_[r] < n_ + m_) continue;
      int enter = -1;
      double best = kDriveOutTol;
      for (int j = 0; j < n_ + m_; ++j) {
        if (stat_[j] == BasisStatus::Basic) continue;
        if (std::abs(at(r, j)) > best) {
          best = std::abs(at(r, j));
          enter = j;
        }
      }
      if (enter < 0) continue;  // redundant row
      stat_[basis_[r]] = BasisStatus::AtLower;
      pivot(r, enter);
    }
  }

  void pivot(int r, int c) {
    const double piv = at(r, c);
    const double inv = 1.0 / piv;
    for (int j = 0; j < cols_; ++j) at(r, j) *= inv;
    rhs_[r] *= inv;
    at(r, c) = 1.0;  // kill residual round-off on the pivot element
    for (int i = 0; i < m_; ++i) {
      if (i == r) continue;
      const double f = at(i, c);
      if (f == 0.0) continue;
      for (int j = 0; j < cols_; ++j) at(i, j) -= f * at(r, j);
      rhs_[i] -= f * rhs_[r];
      at(i, c) = 0.0;
    }
    basis_[r] = c;
    stat_[c] = BasisStatus::Basic;
  }

  LpSolution iteration_limited() {
    LpSolution out;
    out.status = LpStatus::IterationLimit;
    out.iterations = iterations_;
    out.objective = kInf;
    return out;
  }

  LpSolution extract() {
    compute_basic_values();
    compute_reduced_costs();
    LpSolution out;
    out.status = LpStatus::Optimal;
    out.iterations = iterations_;
    out.x.assign(n_, 0.0);
    out.basis.assign(n_, BasisStatus::AtLower);
    for (int j = 0; j < n_; ++j) {
      out.basis[j] = stat_[j];
      if (stat_[j] != BasisStatus::Basic) out.x[j] = bound_value(j);
    }
    for (int r = 0; r < m_; ++r)
      if (basis_[r] < n_) out.x[basis_[r]] = xb_[r];
    out.objective = 0.0;
    for (int j = 0; j < n_; ++j) out.objective += obj_[j] * out.x[j];
    // Duals via the artificial columns: column art(i) holds B^-1 e_i in the
    // sign-scaled row space, so the original-row dual is -sign_i * d_art(i)
    // (artificial cost is 0 in phase 2).
    out.duals.assign(m_, 0.0);
    for (int i = 0; i < m_; ++i) out.duals[i] = -sign_[i] * d_[art(i)];
    out.reduced_costs.assign(n_, 0.0);
    for (int j = 0; j < n_; ++j) out.reduced_costs[j] = d_[j];
    return out;
  }

  static constexpr double kPriceTol = 1e-9;
  static constexpr double kFeasTol = 1e-7;
  static constexpr double kPivotTol = 1e-10;
  static constexpr double kRatioTol = 1e-9;
  static constexpr double kDegenTol = 1e-11;
  static constexpr double kDriveOutTol = 1e-9;

  int n_, m_, cols_;
  std::vector<double> lb_, ub_, cost_, obj_;
  std::vector<double> tab_, rhs_, xb_, d_;
  std::vector<double> sign_;
  std::vector<int> basis_;
  std::vector<BasisStatus> stat_;
  int iterations_ = 0;
  int iter_limit_ = 0;
  int degen_count_ = 0;
  int degen_limit_ = 0;
  bool bland_ = false;
  bool out_of_iterations_ = false;
};

}  // namespace detail

/// Solves the LP relaxation of `inst` with optional bound tightenings.
/// Integrality is ignored. Stateless and safe to call concurrently.
inline LpSolution solve_lp(const MilpInstance& inst, const BoundOverrides& overrides = {}) {
  detail::TableauSimplex solver(inst, overrides);
  return solver.solve();
}

namespace detail {

// Gaussian elimination with partial pivoting; returns false when singular.
inline bool solve_dense(std::vector<double>& a, std::vector<double>& b, int k) {
  for (int col = 0; col < k; ++col) {
    int piv = col;
    for (int r = col + 1; r < k; ++r)
      if (std::abs(a[r * k + col]) > std::abs(a[piv * k + col])) piv = r;
    if (std::abs(a[piv * k + col]) < 1e-11) return false;
    if (piv != col) {
      for (int j = 0; j < k; ++j) std::swap(a[col * k + j], a[piv * k + j]);
      std::swap(b[col], b[piv]);
    }
    const double inv = 1.0 / a[col * k + col];
    for (int r = col + 1; r < k; ++r) {
      const double f = a[r * k + col] * inv;
      if (f == 0.0) continue;
      for (int j = col; j < k; ++j) a[r * k + j] -= f * a[col * k + j];
      b[r] -= f * b[col];
    }
  }
  for (int col = k - 1; col >= 0; --col) {
    double s = b[col];
    for (int j = col + 1; j < k; ++j) s -= a[col * k + j] * b[j];
    b[col] = s / a[col * k + col];
  }
  return true;
}

inline void combinations(int n, int k, const std::function<void(const std::vector<int>&)>& fn) {
  std::vector<int> idx(k);
  for (int i = 0; i < k; ++i) idx[i] = i;
  if (k == 0) {
    fn(idx);
    return;
  }
  while (true) {
    fn(idx);
    int i = k - 1;
    while (i >= 0 && idx[i] == n - k + i) --i;
    if (i < 0) break;
    ++idx[i];
    for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
}

}  // namespace detail

/// Exact LP optimum by enumerating every candidate vertex (all choices of
/// tight rows plus variables resting at bounds). Independent of the simplex
/// code path; intended as a test oracle for small problems. Returns nullopt
/// when no feasible vertex exists.
inline std::optional<double> vertex_oracle(const MilpInstance& inst,
                                           const BoundOverrides& overrides = {}) {
  if (inst.n_vars > 8 || inst.n_cons > 8)
    throw TooLarge("vertex_oracle supports at most 8 variables and 8 rows");
  const int n = inst.n_vars;
  const int m = inst.n_cons;
  std::vector<double> lb = inst.var_lb, ub = inst.var_ub;
  for (const auto& [j, b] : overrides) {
    if (j < 0 || j >= n) throw IndexOutOfRange("bound override for variable " + std::to_string(j));
    lb[j] = b.lb;
    ub[j] = b.ub;
  }

  std::vector<std::vector<double>> dense(m, std::vector<double>(n, 0.0));
  for (int i = 0; i < m; ++i)
    for (const RowEntry& e : inst.rows[i]) dense[i][e.var] = e.coef;

  constexpr double feas_tol = 1e-7;
  const auto feasible = [&](const std::vector<double>& x) {
    for (int j = 0; j < n; ++j)
      if (x[j] < lb[j] - feas_tol || x[j] > ub[j] + feas_tol) return false;
    for (int i = 0; i < m; ++i) {
      double act = 0.0;
      for (int j = 0; j < n; ++j) act += dense[i][j] * x[j];
      switch (inst.sense[i]) {
        case RowSense::LE: if (act > inst.rhs[i] + feas_tol) return false; break;
        case RowSense::GE: if (act < inst.rhs[i] - feas_tol) return false; break;
        case RowSense::EQ: if (std::abs(act - inst.rhs[i]) > feas_tol) return false; break;
      }
    }
    return true;
  };

  std::optional<double> best;
  std::vector<double> x(n);
  for (int k = 0; k <= std::min(n, m); ++k) {
    detail::combinations(m, k, [&](const std::vector<int>& rows_sel) {
      detail::combinations(n, k, [&](const std::vector<int>& free_sel) {
        std::vector<std::uint8_t> is_free(n, 0);
        for (int j : free_sel) is_free[j] = 1;
        std::vector<int> fixed;
        for (int j = 0; j < n; ++j)
          if (!is_free[j]) fixed.push_back(j);
        const int nf = static_cast<int>(fixed.size());
        for (std::uint32_t pattern = 0; pattern < (1u << nf); ++pattern) {
          for (int t = 0; t < nf; ++t)
            x[fixed[t]] = (pattern >> t) & 1u ? ub[fixed[t]] : lb[fixed[t]];
          if (k > 0) {
            std::vector<double> a(static_cast<std::size_t>(k) * k);
            std::vector<double> b(k);
            for (int r = 0; r < k; ++r) {
              const int row = rows_sel[r];
              double rhs = inst.rhs[row];
              for (int t = 0; t < nf; ++t) rhs -= dense[row][fixed[t]] * x[fixed[t]];
              b[r] = rhs;
              for (int c = 0; c < k; ++c) a[static_cast<std::size_t>(r) * k + c] = dense[row][free_sel[c]];
            }
            if (!detail::solve_dense(a, b, k)) continue;
            for (int c = 0; c < k; ++c) x[free_sel[c]] = b[c];
          }
          if (!feasible(x)) continue;
          double obj = 0.0;
          for (int j = 0; j < n; ++j) obj += inst.obj[j] * x[j];
          if (!best || obj < *best) best = obj;
        }
      });
    });
  }
  return best;
}

/// Residuals of the KKT conditions for an Optimal solution; used by tests.
struct LpCheck {
  double max_row_violation = 0.0;
  double max_bound_violation = 0.0;
  double max_complementarity = 0.0;
  double max_sign_violation = 0.0;
  double duality_gap = 0.0;
};

inline LpCheck check_lp_solution(const MilpInstance& inst, const BoundOverrides& overrides,
                                 const LpSolution& sol) {
  LpCheck c;
  std::vector<double> lb = inst.var_lb, ub = inst.var_ub;
  for (const auto& [j, b] : overrides) {
    lb[j] = b.lb;
    ub[j] = b.ub;
  }
  for (int j = 0; j < inst.n_vars; ++j) {
    c.max_bound_violation = std::max(c.max_bound_violation, lb[j] - sol.x[j]);
    c.max_bound_violation = std::max(c.max_bound_violation, sol.x[j] - ub[j]);
  }
  for (int i = 0; i < inst.n_cons; ++i) {
    double act = 0.0;
    for (const RowEntry& e : inst.rows[i]) act += e.coef * sol.x[e.var];
    double viol = 0.0, slack = 0.0;
    switch (inst.sense[i]) {
      case RowSense::LE:
        viol = act - inst.rhs[i];
        slack = inst.rhs[i] - act;
        c.max_sign_violation = std::max(c.max_sign_violation, sol.duals[i]);
        break;
      case RowSense::GE:
        viol = inst.rhs[i] - act;
        slack = act - inst.rhs[i];
        c.max_sign_violation = std::max(c.max_sign_violation, -sol.duals[i]);
        break;
      case RowSense::EQ:
        viol = std::abs(act - inst.rhs[i]);
        slack = 0.0;
        break;
    }
    c.max_row_violation = std::max(c.max_row_violation, viol);
    c.max_complementarity = std::max(c.max_complementarity, std::abs(sol.duals[i] * slack));
  }
  double dual_obj = 0.0;
  for (int i = 0; i < inst.n_cons; ++i) dual_obj += sol.duals[i] * inst.rhs[i];
  for (int j = 0; j < inst.n_vars; ++j) {
    const double d = sol.reduced_costs[j];
    if (ub[j] - lb[j] <= 0.0) {
      dual_obj += d * lb[j];
      continue;  // fixed variables are at both bounds; any sign is consistent
    }
    switch (sol.basis[j]) {
      case BasisStatus::Basic:
        c.max_sign_violation = std::max(c.max_sign_violation, std::abs(d));
        break;
      case BasisStatus::AtLower:
        c.max_sign_violation = std::max(c.max_sign_violation, -d);
        dual_obj += d * lb[j];
        break;
      case BasisStatus::AtUpper:
        c.max_sign_violation = std::max(c.max_sign_violation, d);
        dual_obj += d * ub[j];
        break;
    }
  }
  c.duality_gap = std::abs(sol.objective - dual_obj);
  return c;
}

}  // namespace branchforge
