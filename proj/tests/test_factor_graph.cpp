#include "fglqr/factor_graph.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

using namespace fglqr;

namespace {

// A = B = Q = R = 1, x0 = 1. Analytic optimum of the hard problem:
// min (1 + u)^2 + u^2  =>  u* = -1/2, x1* = 1/2.
LqrProblem<double> scalar_problem(int e = 10) {
  LqrProblem<double> p;
  p.A = Eigen::MatrixXd::Ones(1, 1);
  p.B = Eigen::MatrixXd::Ones(1, 1);
  p.q_diag = Eigen::VectorXd::Ones(1);
  p.r_diag = Eigen::VectorXd::Ones(1);
  p.weight_exponent = e;
  p.horizon = 1;
  p.x0 = Eigen::VectorXd::Ones(1);
  return p;
}

LqrProblem<double> chain_problem(Index n, Index m, Index horizon, int e, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  LqrProblem<double> p;
  p.A.resize(n, n);
  p.B.resize(n, m);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) p.A(i, j) = dist(rng);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < m; ++j) p.B(i, j) = dist(rng);
  // keep the open-loop dynamics from exploding over long horizons
  const double radius = p.A.eigenvalues().cwiseAbs().maxCoeff();
  if (radius > 0.95) p.A *= 0.95 / radius;
  p.q_diag = Eigen::VectorXd::Ones(n);
  p.r_diag = Eigen::VectorXd::Ones(m);
  p.weight_exponent = e;
  p.horizon = horizon;
  p.x0.resize(n);
  for (Index i = 0; i < n; ++i) p.x0[i] = dist(rng);
  return p;
}

std::vector<int> front_to_back_order(Index horizon) {
  std::vector<int> order(static_cast<std::size_t>(2 * horizon + 1));
  std::iota(order.begin(), order.end(), 0);
  return order;
}

std::vector<int> back_to_front_order(Index horizon) {
  auto order = front_to_back_order(horizon);
  std::reverse(order.begin(), order.end());
  return order;
}

}  // namespace

TEST_CASE("build_graph produces the N = 2 chain layout") {
  auto p = chain_problem(2, 1, 2, 10, 5);
  auto g = build_graph(p);
  CHECK(g.num_variables() == 5);
  CHECK(g.num_alive_factors() == 8);  // 2 ternary + 5 unary costs + 1 prior

  int ternary = 0, unary = 0;
  for (int id = 0; id < g.next_factor_id(); ++id) {
    const auto& f = g.factor(id);
    if (f.scope.size() == 3) ++ternary;
    if (f.scope.size() == 1) ++unary;
  }
  CHECK(ternary == 2);
  CHECK(unary == 6);  // 5 cost factors plus the x0 prior
}

TEST_CASE("build_graph dynamics factor carries the half-exponent weight") {
  auto p = scalar_problem(10);
  auto g = build_graph(p);
  // Whitened dynamics blocks are (-2^5 A, -2^5 B, 2^5 I); the factor stores
  // the raw blocks plus the half exponent applied at stacking time.
  const auto em = construct_elimination_matrix(g, 1);  // eliminate u0
  REQUIRE(em.scope == std::vector<int>{1, 0, 2});
  // rows: R cost on u0, then the dynamics row
  REQUIRE(em.m.rows() == 2);
  CHECK(em.m(0, 0) == 1.0);
  CHECK(em.m(1, 0) == -32.0);
  CHECK(em.m(1, 1) == -32.0);
  CHECK(em.m(1, 2) == 32.0);
}

TEST_CASE("build_graph rejects N = 0 and odd weight exponents") {
  auto p = scalar_problem();
  p.horizon = 0;
  CHECK_THROWS_AS(build_graph(p), std::invalid_argument);
  p = scalar_problem();
  p.weight_exponent = 9;
  CHECK_THROWS_AS(build_graph(p), std::invalid_argument);
}

TEST_CASE("construct_elimination_matrix for x_N on the N = 2 chain") {
  auto p = chain_problem(1, 1, 2, 10, 9);
  auto g = build_graph(p);
  const auto em = construct_elimination_matrix(g, 4);  // x2
  CHECK(em.scope == std::vector<int>{4, 2, 3});        // [x2, x1, u1]
  CHECK(em.m.rows() == 2);                             // Q cost + dynamics
  CHECK(em.rhs.size() == 2);
}

TEST_CASE("construct_elimination_matrix for u_0 reads the adjacency") {
  auto p = chain_problem(1, 1, 2, 10, 9);
  auto g = build_graph(p);
  const auto em = construct_elimination_matrix(g, 1);  // u0
  CHECK(em.scope == std::vector<int>{1, 0, 2});        // [u0, x0, x1]
  CHECK(em.m.rows() == 2);                             // R cost + dynamics
}

TEST_CASE("construct_elimination_matrix sees fill-ins from earlier eliminations") {
  auto p = chain_problem(1, 1, 2, 10, 9);
  auto g = build_graph(p);
  TriangularSystem<double> sys(g.variables());
  eliminate_variable(g, 4, sys);  // x2 -> fill over {x1, u1}
  eliminate_variable(g, 3, sys);  // u1 -> fill over {x1}
  const auto em = construct_elimination_matrix(g, 2);  // x1
  CHECK(em.scope == std::vector<int>{2, 0, 1});
  // Q cost (1 row) + dynamics 0 (1 row) + fill-in from u1 (1 row)
  CHECK(em.m.rows() == 3);
}

TEST_CASE("eliminating x1 first on the scalar problem creates the hand-derived fill-in") {
  auto p = scalar_problem(10);
  auto g = build_graph(p);
  TriangularSystem<double> sys(g.variables());
  eliminate_variable(g, 2, sys);  // x1

  // Hand elimination of the 2-row stack [[1,0,0],[32,-32,-32]] over [x1,x0,u0]:
  // pivot = -sqrt(1025), remainder row = [0, -32/sqrt(1025), -32/sqrt(1025)].
  const double expected = -32.0 / std::sqrt(1025.0);
  int fill_id = -1;
  for (int id : g.adjacent_factors(0))
    if (g.factor(id).scope.size() == 2) fill_id = id;
  REQUIRE(fill_id >= 0);
  const auto& fill = g.factor(fill_id);
  CHECK(fill.scope == std::vector<int>{0, 1});
  CHECK(fill.weight_exponent == 0);  // already whitened
  REQUIRE(fill.rows() == 1);
  CHECK(fill.blocks[0](0, 0) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(fill.blocks[1](0, 0) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(fill.rhs[0] == doctest::Approx(0.0));
  CHECK(sys.conditionals().front().r_block(0, 0) ==
        doctest::Approx(-std::sqrt(1025.0)).epsilon(1e-12));
}

TEST_CASE("eliminating the last remaining variable produces no fill-in") {
  auto p = scalar_problem();
  auto g = build_graph(p);
  auto order = back_to_front_order(1);
  TriangularSystem<double> sys(g.variables());
  for (int v : order) eliminate_variable(g, v, sys);
  CHECK(g.num_alive_factors() == 0);
  CHECK(sys.conditionals().back().separators.empty());
}

TEST_CASE("eliminating x2 on the N = 2 chain rejoins a fill-in over {x1, u1}") {
  auto p = chain_problem(2, 1, 2, 10, 31);
  auto g = build_graph(p);
  TriangularSystem<double> sys(g.variables());
  eliminate_variable(g, 4, sys);
  int fill_id = -1;
  for (int id : g.adjacent_factors(2))
    if (g.factor(id).scope == std::vector<int>{2, 3}) fill_id = id;
  REQUIRE(fill_id >= 0);
  CHECK(g.factor(fill_id).weight_exponent == 0);
}

TEST_CASE("eliminate_sequential solves the scalar problem to the analytic optimum") {
  auto p = scalar_problem(10);
  auto g = build_graph(p);
  auto sys = eliminate_sequential(g, back_to_front_order(1));
  const auto t = solve_triangular_system(sys);
  CHECK(t.controls[0][0] == doctest::Approx(-0.5).epsilon(2e-3));
  CHECK(t.states[1][0] == doctest::Approx(0.5).epsilon(2e-3));
}

TEST_CASE("different elimination orders agree on the minimizer") {
  auto p = chain_problem(3, 2, 12, 10, 77);
  auto g1 = build_graph(p);
  auto g2 = build_graph(p);
  const auto t1 = solve_triangular_system(eliminate_sequential(g1, back_to_front_order(12)));
  const auto t2 = solve_triangular_system(eliminate_sequential(g2, front_to_back_order(12)));
  CHECK(max_relative_difference(t1, t2) <= 1e-6);

  // A shuffled order solves the same least-squares problem as well.
  auto order = front_to_back_order(12);
  std::mt19937 rng(3);
  std::shuffle(order.begin(), order.end(), rng);
  auto g3 = build_graph(p);
  const auto t3 = solve_triangular_system(eliminate_sequential(g3, order));
  CHECK(max_relative_difference(t1, t3) <= 1e-6);
}

TEST_CASE("eliminate_sequential rejects bad orders") {
  auto p = scalar_problem();
  auto g = build_graph(p);
  CHECK_THROWS_AS(eliminate_sequential(g, {0, 1}), std::invalid_argument);
  CHECK_THROWS_AS(eliminate_sequential(g, {0, 1, 1}), std::invalid_argument);
  CHECK_THROWS_AS(eliminate_sequential(g, {0, 1, 3}), std::invalid_argument);
}

TEST_CASE("graph conservation holds at every elimination step") {
  auto p = chain_problem(2, 1, 6, 10, 13);
  auto g = build_graph(p);
  const Index total_vars = g.num_variables();
  const long original = g.factors_created();
  TriangularSystem<double> sys(g.variables());
  for (int v : back_to_front_order(6)) {
    eliminate_variable(g, v, sys);
    CHECK(g.num_eliminated() + (total_vars - g.num_eliminated()) == total_vars);
    CHECK(g.factors_consumed() + g.num_alive_factors() == g.factors_created());
  }
  // every original factor and every fill-in is consumed exactly once
  std::multiset<int> consumed;
  for (const auto& c : sys.conditionals())
    consumed.insert(c.consumed_factors.begin(), c.consumed_factors.end());
  CHECK(static_cast<long>(consumed.size()) == g.factors_created());
  for (int id = 0; id < g.next_factor_id(); ++id) CHECK(consumed.count(id) == 1);
  CHECK(g.factors_created() > original);  // fill-ins were created
}

TEST_CASE("two-front elimination matches sequential on an N = 50 chain") {
  auto p = chain_problem(3, 2, 50, 10, 1234);
  auto g1 = build_graph(p);
  auto g2 = build_graph(p);
  const auto t_seq = solve_triangular_system(eliminate_sequential(g1, back_to_front_order(50)));
  const auto t_par = solve_triangular_system(eliminate_parallel_two_front(g2));
  CHECK(max_relative_difference(t_seq, t_par) <= 1e-6);
}

TEST_CASE("two-front elimination handles the degenerate N = 1 chain") {
  auto p = scalar_problem(10);
  auto g = build_graph(p);
  auto sys = eliminate_parallel_two_front(g);
  CHECK(sys.order() == std::vector<int>{0, 2, 1});  // x0, x1, then middle u0
  const auto t = solve_triangular_system(sys);
  CHECK(t.controls[0][0] == doctest::Approx(-0.5).epsilon(2e-3));
}

TEST_CASE("two-front elimination works on odd and even horizons") {
  for (Index horizon : {2, 3, 4, 5, 9, 10}) {
    auto p = chain_problem(2, 1, horizon, 10, 100 + static_cast<unsigned>(horizon));
    auto g1 = build_graph(p);
    auto g2 = build_graph(p);
    const auto t_seq =
        solve_triangular_system(eliminate_sequential(g1, back_to_front_order(horizon)));
    const auto t_par = solve_triangular_system(eliminate_parallel_two_front(g2));
    CHECK(max_relative_difference(t_seq, t_par) <= 1e-6);
  }
}

TEST_CASE("two-front fronts touch disjoint factor sets") {
  const Index horizon = 10;
  auto p = chain_problem(2, 2, horizon, 10, 55);
  auto g = build_graph(p);
  auto sys = eliminate_parallel_two_front(g);

  std::set<int> left_touched, right_touched;
  const int mid = static_cast<int>(horizon);
  for (const auto& c : sys.conditionals()) {
    if (c.variable == mid) continue;
    auto& dst = c.variable < mid ? left_touched : right_touched;
    dst.insert(c.consumed_factors.begin(), c.consumed_factors.end());
  }
  for (int id : left_touched) CHECK(right_touched.count(id) == 0);

  // order interleaves the fronts by chain position, middle last
  const auto& order = sys.order();
  REQUIRE(order.size() == static_cast<std::size_t>(2 * horizon + 1));
  CHECK(order.front() == 0);
  CHECK(order[1] == 2 * horizon);
  CHECK(order.back() == mid);
}

TEST_CASE("two-front elimination requires a fresh graph") {
  auto p = chain_problem(1, 1, 4, 10, 8);
  auto g = build_graph(p);
  TriangularSystem<double> sys(g.variables());
  eliminate_variable(g, 8, sys);
  CHECK_THROWS_AS(eliminate_parallel_two_front(g), std::invalid_argument);
}

TEST_CASE("solve_triangular_system returns exact zeros for the zero-x0 identity problem") {
  LqrProblem<double> p;
  p.A = Eigen::MatrixXd::Identity(2, 2);
  p.B = Eigen::MatrixXd::Identity(2, 2);
  p.q_diag = Eigen::VectorXd::Ones(2);
  p.r_diag = Eigen::VectorXd::Ones(2);
  p.weight_exponent = 10;
  p.horizon = 4;
  p.x0 = Eigen::VectorXd::Zero(2);
  auto g = build_graph(p);
  const auto t = solve_triangular_system(eliminate_sequential(g, back_to_front_order(4)));
  for (const auto& x : t.states) CHECK(x.lpNorm<Eigen::Infinity>() == 0.0);
  for (const auto& u : t.controls) CHECK(u.lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("soft-constraint leakage stays within the weight-scaled bound") {
  auto p = chain_problem(3, 2, 50, 10, 2024);
  auto g = build_graph(p);
  const auto t = solve_triangular_system(eliminate_parallel_two_front(g));
  const double traj_scale = flatten(t).lpNorm<Eigen::Infinity>();
  const double bound =
      static_cast<double>(p.state_dim()) * std::ldexp(1.0, -p.weight_exponent) *
      std::max(1.0, traj_scale);
  const double residual = dynamics_residual(p, t);
  CHECK(residual > 0.0);
  CHECK(residual <= bound);
}

TEST_CASE("dynamics residual shrinks roughly fourfold per weight-exponent step of two") {
  double previous = -1.0;
  for (int e : {6, 8, 10, 12}) {
    auto p = chain_problem(3, 2, 20, e, 321);
    auto g = build_graph(p);
    const auto t = solve_triangular_system(eliminate_sequential(g, back_to_front_order(20)));
    const double residual = dynamics_residual(p, t);
    if (previous > 0.0) {
      const double ratio = previous / residual;
      CHECK(ratio >= 3.0);
      CHECK(ratio <= 5.0);
    }
    previous = residual;
  }
}

TEST_CASE("TriangularSystem rejects appends that break back-substitutability") {
  auto p = scalar_problem();
  auto g = build_graph(p);
  TriangularSystem<double> sys(g.variables());
  Conditional<double> c0;
  c0.variable = 2;
  c0.r_block = Eigen::MatrixXd::Ones(1, 1);
  c0.d = Eigen::VectorXd::Zero(1);
  c0.s_blocks = Eigen::MatrixXd(1, 0);
  sys.append(c0);

  Conditional<double> c1;
  c1.variable = 0;
  c1.r_block = Eigen::MatrixXd::Ones(1, 1);
  c1.separators = {2};  // x1 is already in the system
  c1.s_blocks = Eigen::MatrixXd::Ones(1, 1);
  c1.d = Eigen::VectorXd::Zero(1);
  CHECK_THROWS_AS(sys.append(c1), std::invalid_argument);
  CHECK_THROWS_AS(sys.append(c0), std::invalid_argument);  // duplicate variable
}

TEST_CASE("solve_triangular_system reports singular pivots") {
  auto p = scalar_problem();
  auto g = build_graph(p);
  TriangularSystem<double> sys(g.variables());
  for (int v : {2, 1, 0}) {
    Conditional<double> c;
    c.variable = v;
    c.r_block = Eigen::MatrixXd::Zero(1, 1);  // structurally deficient
    c.s_blocks = Eigen::MatrixXd(1, 0);
    c.d = Eigen::VectorXd::Zero(1);
    sys.append(c);
  }
  CHECK_THROWS_AS(solve_triangular_system(sys), std::runtime_error);
}

TEST_CASE("solve_triangular_system requires a complete system") {
  auto p = scalar_problem();
  auto g = build_graph(p);
  TriangularSystem<double> sys(g.variables());
  eliminate_variable(g, 2, sys);
  CHECK_THROWS_AS(solve_triangular_system(sys), std::invalid_argument);
}

TEST_CASE("construct_elimination_matrix rejects eliminated variables") {
  auto p = scalar_problem();
  auto g = build_graph(p);
  TriangularSystem<double> sys(g.variables());
  eliminate_variable(g, 2, sys);
  CHECK_THROWS_AS(construct_elimination_matrix(g, 2), std::invalid_argument);
}

TEST_CASE("factor graph elimination works in single precision") {
  LqrProblem<float> p;
  p.A = Eigen::MatrixXf::Ones(1, 1);
  p.B = Eigen::MatrixXf::Ones(1, 1);
  p.q_diag = Eigen::VectorXf::Ones(1);
  p.r_diag = Eigen::VectorXf::Ones(1);
  p.weight_exponent = 10;
  p.horizon = 1;
  p.x0 = Eigen::VectorXf::Ones(1);
  auto g = build_graph(p);
  auto sys = eliminate_sequential(g, {2, 1, 0});
  const auto t = solve_triangular_system(sys);
  CHECK(t.controls[0][0] == doctest::Approx(-0.5f).epsilon(1e-2));
}
