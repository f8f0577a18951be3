#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "fglqr/dense_linalg.hpp"

namespace fglqr {

/// Finite-horizon discrete LQR problem
///   min  x_N' Q x_N + sum_{k<N} x_k' Q x_k + u_k' R u_k
///   s.t. x_{k+1} = A x_k + B u_k,  x_0 given,
/// with the dynamics optionally softened into least-squares terms of weight
/// P = 2^weight_exponent * I.
template <typename Scalar>
struct LqrProblem {
  DenseMatrix<Scalar> A;       // n x n
  DenseMatrix<Scalar> B;       // n x m
  DenseVector<Scalar> q_diag;  // diagonal of Q, entries >= 0
  DenseVector<Scalar> r_diag;  // diagonal of R, entries > 0
  int weight_exponent{10};     // even; P = 2^e * I
  Index horizon{1};            // N >= 1
  DenseVector<Scalar> x0;

  Index state_dim() const { return A.rows(); }
  Index control_dim() const { return B.cols(); }
};

template <typename Scalar>
void validate(const LqrProblem<Scalar>& p) {
  const Index n = p.A.rows();
  const Index m = p.B.cols();
  if (n < 1) throw std::invalid_argument("LqrProblem: state dimension must be >= 1");
  if (p.A.cols() != n) throw std::invalid_argument("LqrProblem: A must be square");
  if (p.B.rows() != n) throw std::invalid_argument("LqrProblem: B must have n rows");
  if (m < 1) throw std::invalid_argument("LqrProblem: control dimension must be >= 1");
  if (p.q_diag.size() != n) throw std::invalid_argument("LqrProblem: Q diagonal must have n entries");
  if (p.r_diag.size() != m) throw std::invalid_argument("LqrProblem: R diagonal must have m entries");
  if (p.x0.size() != n) throw std::invalid_argument("LqrProblem: x0 must have n entries");
  if (p.horizon < 1) throw std::invalid_argument("LqrProblem: horizon must be >= 1");
  if (p.weight_exponent % 2 != 0)
    throw std::invalid_argument("LqrProblem: weight exponent must be even so P^(1/2) stays a power of two");
  if (!p.A.allFinite() || !p.B.allFinite() || !p.x0.allFinite())
    throw std::invalid_argument("LqrProblem: matrices and x0 must be finite");
  for (Index i = 0; i < n; ++i)
    if (!(p.q_diag[i] >= Scalar(0)))
      throw std::invalid_argument("LqrProblem: Q diagonal must be nonnegative");
  for (Index i = 0; i < m; ++i)
    if (!(p.r_diag[i] > Scalar(0)))
      throw std::invalid_argument("LqrProblem: R diagonal must be strictly positive");
}

/// States x_0..x_N and controls u_0..u_{N-1}.
template <typename Scalar>
struct Trajectory {
  std::vector<DenseVector<Scalar>> states;
  std::vector<DenseVector<Scalar>> controls;

  Index horizon() const { return static_cast<Index>(controls.size()); }
};

template <typename Scalar>
void check_dimensions(const LqrProblem<Scalar>& p, const Trajectory<Scalar>& t) {
  if (static_cast<Index>(t.states.size()) != p.horizon + 1 ||
      static_cast<Index>(t.controls.size()) != p.horizon)
    throw std::invalid_argument("trajectory does not match problem horizon");
  for (const auto& x : t.states)
    if (x.size() != p.state_dim()) throw std::invalid_argument("trajectory state dimension mismatch");
  for (const auto& u : t.controls)
    if (u.size() != p.control_dim()) throw std::invalid_argument("trajectory control dimension mismatch");
}

/// Exact cost of the LQR objective, including the constant x_0 term.
template <typename Scalar>
Scalar trajectory_cost(const LqrProblem<Scalar>& p, const Trajectory<Scalar>& t) {
  check_dimensions(p, t);
  Scalar cost{0};
  for (Index k = 0; k < p.horizon; ++k) {
    cost += t.states[k].dot(p.q_diag.cwiseProduct(t.states[k]));
    cost += t.controls[k].dot(p.r_diag.cwiseProduct(t.controls[k]));
  }
  cost += t.states[p.horizon].dot(p.q_diag.cwiseProduct(t.states[p.horizon]));
  return cost;
}

/// max_k || x_{k+1} - (A x_k + B u_k) ||_inf
template <typename Scalar>
Scalar dynamics_residual(const LqrProblem<Scalar>& p, const Trajectory<Scalar>& t) {
  check_dimensions(p, t);
  Scalar worst{0};
  for (Index k = 0; k < p.horizon; ++k) {
    const DenseVector<Scalar> d = t.states[k + 1] - (p.A * t.states[k] + p.B * t.controls[k]);
    worst = std::max(worst, d.template lpNorm<Eigen::Infinity>());
  }
  return worst;
}

template <typename Scalar>
DenseVector<Scalar> flatten(const Trajectory<Scalar>& t) {
  Index total = 0;
  for (const auto& x : t.states) total += x.size();
  for (const auto& u : t.controls) total += u.size();
  DenseVector<Scalar> out(total);
  Index at = 0;
  for (const auto& x : t.states) {
    out.segment(at, x.size()) = x;
    at += x.size();
  }
  for (const auto& u : t.controls) {
    out.segment(at, u.size()) = u;
    at += u.size();
  }
  return out;
}

/// ||a - b||_inf / max(||a||_inf, ||b||_inf), or the absolute difference when
/// both are near zero.
template <typename Scalar>
Scalar max_relative_difference(const Trajectory<Scalar>& a, const Trajectory<Scalar>& b) {
  const DenseVector<Scalar> fa = flatten(a);
  const DenseVector<Scalar> fb = flatten(b);
  if (fa.size() != fb.size())
    throw std::invalid_argument("max_relative_difference: trajectory size mismatch");
  const Scalar scale = std::max(fa.template lpNorm<Eigen::Infinity>(),
                                fb.template lpNorm<Eigen::Infinity>());
  const Scalar diff = (fa - fb).template lpNorm<Eigen::Infinity>();
  return scale > Scalar(1e-12) ? diff / scale : diff;
}

}  // namespace fglqr
