#pragma once

#include <chrono>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "fglqr/factor_graph.hpp"
#include "fglqr/lqr_problem.hpp"

namespace fglqr {

template <typename Scalar>
struct RiccatiSolution {
  std::vector<DenseMatrix<Scalar>> gains;           // K_0..K_{N-1}
  std::vector<DenseMatrix<Scalar>> value_matrices;  // P_0..P_N, symmetric PSD
  Trajectory<Scalar> trajectory;
};

namespace detail {

template <typename Scalar>
constexpr Scalar psd_tolerance() {
  return std::is_same_v<Scalar, float> ? Scalar(1e-4) : Scalar(1e-9);
}

template <typename Scalar>
void check_psd(const DenseMatrix<Scalar>& p, Index k) {
  Eigen::SelfAdjointEigenSolver<DenseMatrix<Scalar>> eigs(p, Eigen::EigenvaluesOnly);
  const Scalar floor = -psd_tolerance<Scalar>() * std::max(Scalar(1), p.norm());
  if (eigs.eigenvalues().minCoeff() < floor)
    throw std::runtime_error("solve_riccati: value matrix P_" + std::to_string(k) +
                             " lost positive semidefiniteness");
}

}  // namespace detail

/// Backward Riccati recursion with a symmetrized update, followed by the
/// exact forward rollout u_k = -K_k x_k.
template <typename Scalar>
RiccatiSolution<Scalar> solve_riccati(const LqrProblem<Scalar>& p) {
  validate(p);
  const Index n = p.state_dim();
  const Index m = p.control_dim();
  const Index N = p.horizon;
  const DenseMatrix<Scalar> Q = p.q_diag.asDiagonal();
  const DenseMatrix<Scalar> R = p.r_diag.asDiagonal();

  RiccatiSolution<Scalar> sol;
  sol.value_matrices.assign(static_cast<std::size_t>(N + 1), DenseMatrix<Scalar>());
  sol.gains.assign(static_cast<std::size_t>(N), DenseMatrix<Scalar>());
  sol.value_matrices[static_cast<std::size_t>(N)] = Q;

  for (Index k = N - 1; k >= 0; --k) {
    const auto& Pn = sol.value_matrices[static_cast<std::size_t>(k + 1)];
    const DenseMatrix<Scalar> G = R + p.B.transpose() * Pn * p.B;
    Eigen::LDLT<DenseMatrix<Scalar>> ldlt(G);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
      throw std::runtime_error("solve_riccati: singular control Hessian at step " +
                               std::to_string(k));
    const DenseMatrix<Scalar> K = ldlt.solve(p.B.transpose() * Pn * p.A);
    const DenseMatrix<Scalar> Acl = p.A - p.B * K;
    DenseMatrix<Scalar> Pk = Q + K.transpose() * R * K + Acl.transpose() * Pn * Acl;
    Pk = ((Pk + Pk.transpose()) / Scalar(2)).eval();
    detail::check_psd(Pk, k);
    sol.gains[static_cast<std::size_t>(k)] = K;
    sol.value_matrices[static_cast<std::size_t>(k)] = std::move(Pk);
  }

  auto& t = sol.trajectory;
  t.states.resize(static_cast<std::size_t>(N + 1));
  t.controls.resize(static_cast<std::size_t>(N));
  t.states[0] = p.x0;
  for (Index k = 0; k < N; ++k) {
    t.controls[static_cast<std::size_t>(k)] =
        -sol.gains[static_cast<std::size_t>(k)] * t.states[static_cast<std::size_t>(k)];
    t.states[static_cast<std::size_t>(k + 1)] =
        p.A * t.states[static_cast<std::size_t>(k)] +
        p.B * t.controls[static_cast<std::size_t>(k)];
  }
  (void)n;
  (void)m;
  return sol;
}

/// Solves the equality-constrained program (cost subject to exact dynamics
/// and x_0 fixed) through the dense KKT system. Used as an exact-dynamics
/// oracle; sized for desk-scale horizons.
template <typename Scalar>
Trajectory<Scalar> solve_kkt_equality(const LqrProblem<Scalar>& p) {
  validate(p);
  if (p.horizon > 200)
    throw std::invalid_argument("solve_kkt_equality: horizon capped at 200 (dense KKT solve)");
  const Index n = p.state_dim();
  const Index m = p.control_dim();
  const Index N = p.horizon;
  const Index nx = (N + 1) * n;       // stacked states
  const Index nu = N * m;             // stacked controls
  const Index nz = nx + nu;           // primal dimension
  const Index nc = n + N * n;         // x_0 anchor + dynamics rows
  const Index dim = nz + nc;

  DenseMatrix<Scalar> kkt = DenseMatrix<Scalar>::Zero(dim, dim);
  DenseVector<Scalar> rhs = DenseVector<Scalar>::Zero(dim);

  for (Index k = 0; k <= N; ++k)
    kkt.block(k * n, k * n, n, n) = DenseMatrix<Scalar>(p.q_diag.asDiagonal());
  for (Index k = 0; k < N; ++k)
    kkt.block(nx + k * m, nx + k * m, m, m) = DenseMatrix<Scalar>(p.r_diag.asDiagonal());

  DenseMatrix<Scalar> C = DenseMatrix<Scalar>::Zero(nc, nz);
  C.block(0, 0, n, n) = DenseMatrix<Scalar>::Identity(n, n);
  rhs.segment(nz, n) = p.x0;
  for (Index k = 0; k < N; ++k) {
    const Index row = n + k * n;
    C.block(row, (k + 1) * n, n, n) = DenseMatrix<Scalar>::Identity(n, n);
    C.block(row, k * n, n, n) = -p.A;
    C.block(row, nx + k * m, n, m) = -p.B;
  }
  kkt.block(nz, 0, nc, nz) = C;
  kkt.block(0, nz, nz, nc) = C.transpose();

  Eigen::PartialPivLU<DenseMatrix<Scalar>> lu(kkt);
  const DenseVector<Scalar> sol = lu.solve(rhs);
  const Scalar residual = (kkt * sol - rhs).template lpNorm<Eigen::Infinity>();
  const Scalar scale = std::max(Scalar(1), rhs.template lpNorm<Eigen::Infinity>());
  const Scalar tol = std::is_same_v<Scalar, float> ? Scalar(1e-3) : Scalar(1e-8);
  if (!sol.allFinite() || residual > tol * scale)
    throw std::runtime_error("solve_kkt_equality: singular KKT matrix");

  Trajectory<Scalar> t;
  t.states.resize(static_cast<std::size_t>(N + 1));
  t.controls.resize(static_cast<std::size_t>(N));
  for (Index k = 0; k <= N; ++k) t.states[static_cast<std::size_t>(k)] = sol.segment(k * n, n);
  for (Index k = 0; k < N; ++k)
    t.controls[static_cast<std::size_t>(k)] = sol.segment(nx + k * m, m);
  return t;
}

/// Solver variants: Trad = Riccati recursion, EquCons = exact-dynamics KKT,
/// Sequ = factor-graph elimination back-to-front, Parallel = two-front
/// factor-graph elimination.
enum class Variant { Trad, EquCons, Sequ, Parallel };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::Trad: return "trad";
    case Variant::EquCons: return "equcons";
    case Variant::Sequ: return "sequ";
    case Variant::Parallel: return "parallel";
  }
  return "unknown";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "trad") return Variant::Trad;
  if (s == "equcons") return Variant::EquCons;
  if (s == "sequ") return Variant::Sequ;
  if (s == "parallel") return Variant::Parallel;
  throw std::invalid_argument("unknown variant '" + s + "' (expected trad|equcons|sequ|parallel)");
}

template <typename Scalar>
struct SolveDiagnostics {
  Scalar cost{0};
  Scalar residual{0};
  double solve_seconds{0};
};

template <typename Scalar>
std::vector<int> back_to_front_order(Index horizon) {
  std::vector<int> order;
  for (int v = static_cast<int>(2 * horizon); v >= 0; --v) order.push_back(v);
  return order;
}

template <typename Scalar>
std::pair<Trajectory<Scalar>, SolveDiagnostics<Scalar>> solve_variant(const LqrProblem<Scalar>& p,
                                                                      Variant v) {
  validate(p);
  const auto t0 = std::chrono::steady_clock::now();
  Trajectory<Scalar> traj;
  switch (v) {
    case Variant::Trad:
      traj = solve_riccati(p).trajectory;
      break;
    case Variant::EquCons:
      traj = solve_kkt_equality(p);
      break;
    case Variant::Sequ: {
      auto g = build_graph(p);
      auto sys = eliminate_sequential(g, back_to_front_order<Scalar>(p.horizon));
      traj = solve_triangular_system(sys);
      break;
    }
    case Variant::Parallel: {
      auto g = build_graph(p);
      auto sys = eliminate_parallel_two_front(g);
      traj = solve_triangular_system(sys);
      break;
    }
  }
  const auto t1 = std::chrono::steady_clock::now();
  SolveDiagnostics<Scalar> diag;
  diag.solve_seconds = std::chrono::duration<double>(t1 - t0).count();
  diag.cost = trajectory_cost(p, traj);
  diag.residual = dynamics_residual(p, traj);
  return {std::move(traj), diag};
}

}  // namespace fglqr
