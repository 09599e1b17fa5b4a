// Copyright (c) 2026 BranchForge contributors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "branchforge/generators.hpp"
#include "branchforge/milp.hpp"
#include "branchforge/simplex.hpp"
#include "oracles.hpp"

using namespace branchforge;

namespace {

MilpInstance box_lp() {
  MilpInstance m;
  m.n_vars = 2;
  m.obj = {-1.0, -1.0};
  m.var_lb = {0.0, 0.0};
  m.var_ub = {1.0, 1.0};
  m.is_integer = {0, 0};
  m.name = "box";
  return m;
}

}  // namespace

TEST_CASE("unconstrained box LP lands on the best bound corner") {
  const LpSolution sol = solve_lp(box_lp());
  REQUIRE(sol.status == LpStatus::Optimal);
  CHECK(sol.objective == doctest::Approx(-2.0).epsilon(1e-9));
  CHECK(sol.x[0] == doctest::Approx(1.0));
  CHECK(sol.x[1] == doctest::Approx(1.0));
}

TEST_CASE("bound overrides are honored") {
  BoundOverrides ov;
  ov[0] = {0.0, 0.0};
  const LpSolution sol = solve_lp(box_lp(), ov);
  REQUIRE(sol.status == LpStatus::Optimal);
  CHECK(sol.objective == doctest::Approx(-1.0).epsilon(1e-9));
  CHECK(sol.x[0] == doctest::Approx(0.0));
}

TEST_CASE("contradictory rows are reported infeasible") {
  MilpInstance m;
  m.n_vars = 1;
  m.obj = {1.0};
  m.var_lb = {0.0};
  m.var_ub = {3.0};
  m.is_integer = {0};
  m.n_cons = 2;
  m.rows = {{{0, 1.0}}, {{0, 1.0}}};
  m.sense = {RowSense::GE, RowSense::LE};
  m.rhs = {2.0, 1.0};
  CHECK(solve_lp(m).status == LpStatus::Infeasible);
  CHECK_FALSE(vertex_oracle(m).has_value());
}

TEST_CASE("vertex oracle rejects oversized problems") {
  MilpInstance m;
  m.n_vars = 9;
  m.obj.assign(9, 1.0);
  m.var_lb.assign(9, 0.0);
  m.var_ub.assign(9, 1.0);
  m.is_integer.assign(9, 0);
  CHECK_THROWS_AS(vertex_oracle(m), TooLarge);
}

TEST_CASE("simplex matches the vertex enumeration oracle on random LPs") {
  int feasible = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const MilpInstance m = branchforge::testing::random_lp(seed);
    const LpSolution sol = solve_lp(m);
    const auto oracle = vertex_oracle(m);
    INFO("seed ", seed, " n=", m.n_vars, " m=", m.n_cons);
    if (oracle) {
      REQUIRE(sol.status == LpStatus::Optimal);
      CHECK(std::abs(sol.objective - *oracle) <= 1e-6);
      ++feasible;
    } else {
      CHECK(sol.status == LpStatus::Infeasible);
    }
  }
  CHECK(feasible > 30);  // the family should not be degenerate-mostly-infeasible
}

TEST_CASE("optimal solutions satisfy the KKT residual contract") {
  for (std::uint64_t seed = 200; seed < 260; ++seed) {
    const MilpInstance m = branchforge::testing::random_lp(seed);
    const LpSolution sol = solve_lp(m);
    if (sol.status != LpStatus::Optimal) continue;
    const LpCheck c = check_lp_solution(m, {}, sol);
    INFO("seed ", seed);
    CHECK(c.max_row_violation <= 1e-7);
    CHECK(c.max_bound_violation <= 1e-7);
    CHECK(c.max_complementarity <= 1e-7);
    CHECK(c.max_sign_violation <= 1e-7);
    CHECK(c.duality_gap <= 1e-6);  // weak duality computed from duals + reduced costs
  }
}

TEST_CASE("tightening one bound never improves the minimize objective") {
  for (std::uint64_t seed = 300; seed < 330; ++seed) {
    const MilpInstance m = branchforge::testing::random_lp(seed);
    const LpSolution parent = solve_lp(m);
    if (parent.status != LpStatus::Optimal) continue;
    Rng rng(seed);
    const int j = static_cast<int>(rng.uniform_int(0, m.n_vars - 1));
    const double mid = 0.5 * (m.var_lb[j] + m.var_ub[j]);
    for (const bool tighten_upper : {false, true}) {
      BoundOverrides ov;
      ov[j] = tighten_upper ? Bounds{m.var_lb[j], mid} : Bounds{mid, m.var_ub[j]};
      const LpSolution child = solve_lp(m, ov);
      if (child.status == LpStatus::Optimal)
        CHECK(child.objective >= parent.objective - 1e-7);
    }
  }
}

TEST_CASE("iteration counts stay within the pivot budget") {
  for (std::uint64_t seed = 400; seed < 420; ++seed) {
    const MilpInstance m = branchforge::testing::random_lp(seed);
    const LpSolution sol = solve_lp(m);
    CHECK(sol.iterations <= 50 * (m.n_vars + m.n_cons));
  }
}

TEST_CASE("generated MILP relaxations solve cleanly") {
  const MilpInstance sc = gen_set_cover(5, 10, 20, 0.2);
  const LpSolution a = solve_lp(sc);
  REQUIRE(a.status == LpStatus::Optimal);
  const LpCheck ca = check_lp_solution(sc, {}, a);
  CHECK(ca.max_row_violation <= 1e-7);
  CHECK(ca.duality_gap <= 1e-6);

  const MilpInstance as = gen_assignment(5, 6, 3);
  const LpSolution b = solve_lp(as);
  REQUIRE(b.status == LpStatus::Optimal);
  const LpCheck cb = check_lp_solution(as, {}, b);
  CHECK(cb.max_row_violation <= 1e-7);
  CHECK(cb.duality_gap <= 1e-6);
}
