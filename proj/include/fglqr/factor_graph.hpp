#pragma once

#include <algorithm>
#include <future>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fglqr/dense_linalg.hpp"
#include "fglqr/lqr_problem.hpp"

namespace fglqr {

enum class VariableKind { State, Control };

/// One unknown of the LQR chain. Ids are chain positions:
/// x_k -> 2k, u_k -> 2k+1, so ordering by id is the chain order
/// x_0 < u_0 < x_1 < ... < u_{N-1} < x_N.
struct VariableNode {
  int id{0};
  VariableKind kind{VariableKind::State};
  int time_index{0};
  Index dim{0};
};

/// Weighted linear least-squares term over a subset of variables. Every row
/// carries weight 2^weight_exponent, applied by whitening when the factor is
/// stacked for elimination (fill-in factors are already whitened and use 0).
template <typename Scalar>
struct Factor {
  std::vector<int> scope;                   // variable ids, ascending, no duplicates
  std::vector<DenseMatrix<Scalar>> blocks;  // one block per scope entry, rows x dim
  DenseVector<Scalar> rhs;                  // rows
  int weight_exponent{0};

  Index rows() const { return rhs.size(); }
};

/// Block row of the triangular system produced by eliminating one variable:
/// r_block * x_v + s_blocks * x_separators = d.
template <typename Scalar>
struct Conditional {
  int variable{-1};
  DenseMatrix<Scalar> r_block;   // dim x dim, upper triangular
  std::vector<int> separators;   // chain order; all eliminated after `variable`
  DenseMatrix<Scalar> s_blocks;  // dim x (total separator width)
  DenseVector<Scalar> d;         // dim
  std::vector<int> consumed_factors;
  Index stack_rows{0};  // dimensions of the stacked elimination matrix (incl. rhs column)
  Index stack_cols{0};
};

/// Accumulates conditionals in elimination order; assembles into a plain
/// upper-triangular system whose columns follow the elimination order.
template <typename Scalar>
class TriangularSystem {
 public:
  TriangularSystem() = default;
  explicit TriangularSystem(std::vector<VariableNode> variables)
      : vars_(std::move(variables)), present_(vars_.size(), false) {}

  void append(Conditional<Scalar> c) {
    const std::size_t v = static_cast<std::size_t>(c.variable);
    if (v >= vars_.size()) throw std::invalid_argument("TriangularSystem: unknown variable id");
    if (present_[v]) throw std::invalid_argument("TriangularSystem: variable appended twice");
    for (int s : c.separators)
      if (present_[static_cast<std::size_t>(s)])
        throw std::invalid_argument(
            "TriangularSystem: conditional references an already-eliminated variable");
    present_[v] = true;
    order_.push_back(c.variable);
    conditionals_.push_back(std::move(c));
  }

  const std::vector<int>& order() const { return order_; }
  const std::vector<Conditional<Scalar>>& conditionals() const { return conditionals_; }
  const std::vector<VariableNode>& variables() const { return vars_; }
  bool complete() const { return order_.size() == vars_.size(); }

  Index total_dimension() const {
    Index total = 0;
    for (const auto& v : vars_) total += v.dim;
    return total;
  }

  /// Upper-triangular R with one block row/column per eliminated variable,
  /// ordered by elimination. Column labels carry the variable ids.
  TriangularMatrix<Scalar> assemble_r() const {
    const Index dim = total_dimension();
    DenseMatrix<Scalar> r = DenseMatrix<Scalar>::Zero(dim, dim);
    std::vector<Index> offset(vars_.size(), 0);
    std::vector<int> labels(static_cast<std::size_t>(dim), 0);
    Index at = 0;
    for (int v : order_) {
      offset[static_cast<std::size_t>(v)] = at;
      for (Index i = 0; i < vars_[static_cast<std::size_t>(v)].dim; ++i)
        labels[static_cast<std::size_t>(at + i)] = v;
      at += vars_[static_cast<std::size_t>(v)].dim;
    }
    for (const auto& c : conditionals_) {
      const Index row0 = offset[static_cast<std::size_t>(c.variable)];
      const Index dv = vars_[static_cast<std::size_t>(c.variable)].dim;
      r.block(row0, row0, dv, dv) = c.r_block;
      Index scol = 0;
      for (int s : c.separators) {
        const Index ds = vars_[static_cast<std::size_t>(s)].dim;
        r.block(row0, offset[static_cast<std::size_t>(s)], dv, ds) =
            c.s_blocks.middleCols(scol, ds);
        scol += ds;
      }
    }
    return TriangularMatrix<Scalar>(std::move(r), std::move(labels));
  }

  DenseVector<Scalar> assemble_rhs() const {
    DenseVector<Scalar> rhs = DenseVector<Scalar>::Zero(total_dimension());
    Index at = 0;
    for (std::size_t i = 0; i < conditionals_.size(); ++i) {
      rhs.segment(at, conditionals_[i].d.size()) = conditionals_[i].d;
      at += conditionals_[i].d.size();
    }
    return rhs;
  }

 private:
  std::vector<VariableNode> vars_;
  std::vector<bool> present_;
  std::vector<int> order_;
  std::vector<Conditional<Scalar>> conditionals_;
};

/// Bipartite factor graph over the LQR chain.
template <typename Scalar>
class LqrFactorGraph {
 public:
  LqrFactorGraph(std::vector<VariableNode> variables, Index state_dim, Index control_dim,
                 Index horizon)
      : vars_(std::move(variables)),
        adjacency_(vars_.size()),
        eliminated_(vars_.size(), false),
        n_(state_dim),
        m_(control_dim),
        horizon_(horizon) {}

  const std::vector<VariableNode>& variables() const { return vars_; }
  const VariableNode& variable(int id) const { return vars_.at(static_cast<std::size_t>(id)); }
  Index state_dim() const { return n_; }
  Index control_dim() const { return m_; }
  Index horizon() const { return horizon_; }

  int insert_factor(Factor<Scalar> f) {
    const int id = static_cast<int>(factors_.size());
    for (int v : f.scope) adjacency_.at(static_cast<std::size_t>(v)).push_back(id);
    factors_.push_back(std::move(f));
    ++created_;
    return id;
  }

  const Factor<Scalar>& factor(int id) const {
    const auto& slot = factors_.at(static_cast<std::size_t>(id));
    if (!slot) throw std::invalid_argument("factor " + std::to_string(id) + " was consumed");
    return *slot;
  }

  /// Alive factors adjacent to v, in insertion order.
  std::vector<int> adjacent_factors(int v) const {
    return adjacency_.at(static_cast<std::size_t>(v));
  }

  void consume_factor(int id) {
    auto& slot = factors_.at(static_cast<std::size_t>(id));
    if (!slot) throw std::invalid_argument("factor consumed twice");
    for (int v : slot->scope) {
      auto& adj = adjacency_[static_cast<std::size_t>(v)];
      adj.erase(std::remove(adj.begin(), adj.end(), id), adj.end());
    }
    slot.reset();
    ++consumed_;
  }

  bool is_eliminated(int v) const { return eliminated_.at(static_cast<std::size_t>(v)); }
  void mark_eliminated(int v) { eliminated_.at(static_cast<std::size_t>(v)) = true; }

  Index num_eliminated() const {
    return static_cast<Index>(std::count(eliminated_.begin(), eliminated_.end(), true));
  }
  Index num_variables() const { return static_cast<Index>(vars_.size()); }

  Index num_alive_factors() const {
    Index alive = 0;
    for (const auto& slot : factors_)
      if (slot) ++alive;
    return alive;
  }
  long factors_created() const { return created_; }
  long factors_consumed() const { return consumed_; }
  int next_factor_id() const { return static_cast<int>(factors_.size()); }

  /// Removes and returns every alive factor (used by the two-front scheduler
  /// to hand ownership to the workers).
  std::map<int, Factor<Scalar>> drain_factors() {
    std::map<int, Factor<Scalar>> out;
    for (std::size_t id = 0; id < factors_.size(); ++id)
      if (factors_[id]) out.emplace(static_cast<int>(id), std::move(*factors_[id]));
    for (auto& slot : factors_) slot.reset();
    for (auto& adj : adjacency_) adj.clear();
    return out;
  }

  void note_external_factors(long consumed, long created) {
    consumed_ += consumed;
    created_ += created;
  }

 private:
  std::vector<VariableNode> vars_;
  std::vector<std::optional<Factor<Scalar>>> factors_;
  std::vector<std::vector<int>> adjacency_;
  std::vector<bool> eliminated_;
  long created_{0};
  long consumed_{0};
  Index n_{0}, m_{0}, horizon_{0};
};

/// Builds the soft-constrained LQR factor graph: one ternary dynamics factor
/// per step (weight 2^(e/2) rows of [ -A  -B  I ]), unary cost factors
/// Q^(1/2) x_k = 0 and R^(1/2) u_k = 0, and a prior anchoring x_0 to its
/// measured value with the dynamics weight.
template <typename Scalar>
LqrFactorGraph<Scalar> build_graph(const LqrProblem<Scalar>& p) {
  validate(p);
  const Index n = p.state_dim();
  const Index m = p.control_dim();
  const Index N = p.horizon;
  const int half_exponent = p.weight_exponent / 2;

  std::vector<VariableNode> vars;
  vars.reserve(static_cast<std::size_t>(2 * N + 1));
  for (Index k = 0; k <= N; ++k) {
    vars.push_back({static_cast<int>(2 * k), VariableKind::State, static_cast<int>(k), n});
    if (k < N)
      vars.push_back({static_cast<int>(2 * k + 1), VariableKind::Control, static_cast<int>(k), m});
  }
  std::sort(vars.begin(), vars.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  LqrFactorGraph<Scalar> g(std::move(vars), n, m, N);

  {
    Factor<Scalar> prior;
    prior.scope = {0};
    prior.blocks = {DenseMatrix<Scalar>::Identity(n, n)};
    prior.rhs = p.x0;
    prior.weight_exponent = half_exponent;
    g.insert_factor(std::move(prior));
  }
  const DenseVector<Scalar> q_sqrt = p.q_diag.cwiseSqrt();
  const DenseVector<Scalar> r_sqrt = p.r_diag.cwiseSqrt();
  for (Index k = 0; k <= N; ++k) {
    Factor<Scalar> cost;
    cost.scope = {static_cast<int>(2 * k)};
    cost.blocks = {DenseMatrix<Scalar>(q_sqrt.asDiagonal())};
    cost.rhs = DenseVector<Scalar>::Zero(n);
    g.insert_factor(std::move(cost));
  }
  for (Index k = 0; k < N; ++k) {
    Factor<Scalar> cost;
    cost.scope = {static_cast<int>(2 * k + 1)};
    cost.blocks = {DenseMatrix<Scalar>(r_sqrt.asDiagonal())};
    cost.rhs = DenseVector<Scalar>::Zero(m);
    g.insert_factor(std::move(cost));
  }
  for (Index k = 0; k < N; ++k) {
    Factor<Scalar> dyn;
    dyn.scope = {static_cast<int>(2 * k), static_cast<int>(2 * k + 1),
                 static_cast<int>(2 * k + 2)};
    dyn.blocks = {-p.A, -p.B, DenseMatrix<Scalar>::Identity(n, n)};
    dyn.rhs = DenseVector<Scalar>::Zero(n);
    dyn.weight_exponent = half_exponent;
    g.insert_factor(std::move(dyn));
  }
  return g;
}

template <typename Scalar>
struct EliminationMatrix {
  DenseMatrix<Scalar> m;   // stacked whitened blocks, columns follow `scope`
  std::vector<int> scope;  // eliminated variable first, then chain order
  DenseVector<Scalar> rhs;
};

namespace detail {

template <typename Scalar>
EliminationMatrix<Scalar> stack_factors(const std::vector<const Factor<Scalar>*>& factors, int v,
                                        const std::vector<VariableNode>& vars) {
  std::set<int> others;
  Index rows = 0;
  for (const auto* f : factors) {
    rows += f->rows();
    for (int s : f->scope)
      if (s != v) others.insert(s);
  }
  EliminationMatrix<Scalar> out;
  out.scope.push_back(v);
  out.scope.insert(out.scope.end(), others.begin(), others.end());  // ids ascend = chain order

  std::map<int, Index> col_offset;
  Index width = 0;
  for (int s : out.scope) {
    col_offset[s] = width;
    width += vars[static_cast<std::size_t>(s)].dim;
  }
  out.m = DenseMatrix<Scalar>::Zero(rows, width);
  out.rhs = DenseVector<Scalar>::Zero(rows);

  Index row0 = 0;
  for (const auto* f : factors) {
    const Index fr = f->rows();
    for (std::size_t i = 0; i < f->scope.size(); ++i)
      out.m.block(row0, col_offset[f->scope[i]], fr, f->blocks[i].cols()) = f->blocks[i];
    out.rhs.segment(row0, fr) = f->rhs;
    if (f->weight_exponent != 0) {
      out.m.middleRows(row0, fr) = scale_rows_pow2(out.m.middleRows(row0, fr), f->weight_exponent);
      out.rhs.segment(row0, fr) = scale_rows_pow2(out.rhs.segment(row0, fr), f->weight_exponent);
    }
    row0 += fr;
  }
  return out;
}

template <typename Scalar>
struct EliminationStep {
  Conditional<Scalar> conditional;
  std::optional<Factor<Scalar>> fill;
};

/// One elimination: stack [m | rhs], triangularize the full block width so
/// the fill-in keeps only meaningful rows, then split into the eliminated
/// variable's conditional and the fill-in factor over the remaining scope.
/// Rows beyond the block width carry only a constant residual and are
/// dropped.
template <typename Scalar>
EliminationStep<Scalar> eliminate_stacked(const EliminationMatrix<Scalar>& em, int v,
                                          const std::vector<VariableNode>& vars) {
  const Index rows = em.m.rows();
  const Index width = em.m.cols();
  DenseMatrix<Scalar> stacked(rows, width + 1);
  stacked.leftCols(width) = em.m;
  stacked.col(width) = em.rhs;

  const auto qr = partial_qr<Scalar>(stacked, width);
  const Index dv = vars[static_cast<std::size_t>(v)].dim;
  const Index kept = qr.top.rows();
  const Index cond_rows = std::min(dv, kept);

  EliminationStep<Scalar> step;
  auto& c = step.conditional;
  c.variable = v;
  c.r_block = DenseMatrix<Scalar>::Zero(dv, dv);
  c.r_block.topRows(cond_rows) = qr.top.block(0, 0, cond_rows, dv);
  c.separators.assign(em.scope.begin() + 1, em.scope.end());
  c.s_blocks = DenseMatrix<Scalar>::Zero(dv, width - dv);
  c.s_blocks.topRows(cond_rows) = qr.top.block(0, dv, cond_rows, width - dv);
  c.d = DenseVector<Scalar>::Zero(dv);
  c.d.head(cond_rows) = qr.top.block(0, width, cond_rows, 1);
  c.stack_rows = rows;
  c.stack_cols = width + 1;

  const Index fill_rows = kept - dv;
  if (fill_rows > 0 && !c.separators.empty()) {
    Factor<Scalar> fill;
    fill.scope = c.separators;
    Index col = dv;
    for (int s : fill.scope) {
      const Index ds = vars[static_cast<std::size_t>(s)].dim;
      fill.blocks.push_back(qr.top.block(dv, col, fill_rows, ds));
      col += ds;
    }
    fill.rhs = qr.top.block(dv, width, fill_rows, 1);
    step.fill = std::move(fill);
  }
  return step;
}

}  // namespace detail

/// Stacks the whitened rows of every factor adjacent to v. Columns are
/// ordered v-first, then the remaining scope in chain order.
template <typename Scalar>
EliminationMatrix<Scalar> construct_elimination_matrix(const LqrFactorGraph<Scalar>& g, int v) {
  if (g.is_eliminated(v))
    throw std::invalid_argument("construct_elimination_matrix: variable " + std::to_string(v) +
                                " already eliminated");
  const auto ids = g.adjacent_factors(v);
  if (ids.empty())
    throw std::runtime_error("construct_elimination_matrix: variable " + std::to_string(v) +
                             " has no adjacent factors (corrupt graph)");
  std::vector<const Factor<Scalar>*> factors;
  factors.reserve(ids.size());
  for (int id : ids) factors.push_back(&g.factor(id));
  return detail::stack_factors(factors, v, g.variables());
}

/// Eliminates v: appends its conditional to sys, removes the adjacent
/// factors, and rejoins the remainder rows as a single fill-in factor over
/// the remaining scope.
template <typename Scalar>
void eliminate_variable(LqrFactorGraph<Scalar>& g, int v, TriangularSystem<Scalar>& sys) {
  if (g.is_eliminated(v))
    throw std::invalid_argument("eliminate_variable: variable " + std::to_string(v) +
                                " already eliminated");
  const auto ids = g.adjacent_factors(v);
  auto em = construct_elimination_matrix(g, v);
  auto step = detail::eliminate_stacked(em, v, g.variables());
  step.conditional.consumed_factors = ids;
  for (int id : ids) g.consume_factor(id);
  if (step.fill) g.insert_factor(std::move(*step.fill));
  g.mark_eliminated(v);
  sys.append(std::move(step.conditional));
}

template <typename Scalar>
TriangularSystem<Scalar> eliminate_sequential(LqrFactorGraph<Scalar>& g,
                                              const std::vector<int>& order) {
  std::set<int> seen(order.begin(), order.end());
  if (static_cast<Index>(seen.size()) != static_cast<Index>(order.size()) ||
      static_cast<Index>(order.size()) != g.num_variables() - g.num_eliminated())
    throw std::invalid_argument(
        "eliminate_sequential: order must be a permutation of the uneliminated variables");
  for (int v : order)
    if (v < 0 || v >= g.num_variables() || g.is_eliminated(v))
      throw std::invalid_argument("eliminate_sequential: invalid variable " + std::to_string(v) +
                                  " in order");
  TriangularSystem<Scalar> sys(g.variables());
  for (int v : order) eliminate_variable(g, v, sys);
  return sys;
}

/// Elimination schedules over the chain. TwoFront eliminates positions
/// 0..N-1 ascending and 2N..N+1 descending concurrently, the middle
/// (position N) last.
struct EliminationSchedule {
  enum class Mode { Sequential, TwoFront };
  Mode mode{Mode::Sequential};
  std::vector<int> order;        // Sequential
  std::vector<int> left, right;  // TwoFront
  int middle{-1};
};

inline EliminationSchedule make_two_front_schedule(Index horizon) {
  if (horizon < 1) throw std::invalid_argument("two-front schedule requires horizon >= 1");
  EliminationSchedule s;
  s.mode = EliminationSchedule::Mode::TwoFront;
  const int last = static_cast<int>(2 * horizon);
  const int mid = static_cast<int>(horizon);
  for (int p = 0; p < mid; ++p) s.left.push_back(p);
  for (int p = last; p > mid; --p) s.right.push_back(p);
  s.middle = mid;
  return s;
}

namespace detail {

template <typename Scalar>
struct FrontResult {
  std::vector<Conditional<Scalar>> conditionals;
  std::map<int, Factor<Scalar>> leftovers;  // fills not consumed by this front
  std::vector<int> touched;                 // consumed factor ids
  long fills_created{0};
};

/// Runs one elimination front over its privately owned factors. Fill ids are
/// drawn from a per-front arithmetic sequence so both fronts allocate
/// deterministically without coordination.
template <typename Scalar>
FrontResult<Scalar> run_front(std::map<int, Factor<Scalar>> owned,
                              const std::vector<int>& positions,
                              const std::vector<VariableNode>& vars, int fill_id_base,
                              int fill_id_stride) {
  FrontResult<Scalar> out;
  int next_fill = fill_id_base;
  for (int v : positions) {
    std::vector<int> ids;
    std::vector<const Factor<Scalar>*> factors;
    for (const auto& [id, f] : owned)
      if (std::find(f.scope.begin(), f.scope.end(), v) != f.scope.end()) {
        ids.push_back(id);
        factors.push_back(&f);
      }
    if (factors.empty())
      throw std::runtime_error("two-front elimination: variable " + std::to_string(v) +
                               " has no adjacent factors in its front");
    auto em = stack_factors(factors, v, vars);
    auto step = eliminate_stacked(em, v, vars);
    step.conditional.consumed_factors = ids;
    out.touched.insert(out.touched.end(), ids.begin(), ids.end());
    for (int id : ids) owned.erase(id);
    if (step.fill) {
      owned.emplace(next_fill, std::move(*step.fill));
      next_fill += fill_id_stride;
      ++out.fills_created;
    }
    out.conditionals.push_back(std::move(step.conditional));
  }
  out.leftovers = std::move(owned);
  return out;
}

}  // namespace detail

/// Two-front parallel elimination: the left worker owns chain positions
/// 0..N-1 and the factors it reaches first, the right worker owns 2N..N+1
/// symmetrically, and the middle variable is eliminated after both complete.
/// For odd N one dynamics factor straddles the middle; the left front
/// consumes it and its fill-in is handed to the right front's final step
/// after the barrier, which degenerates that one step to sequential order
/// (the N = 1 chain is fully degenerate). The merged order interleaves the
/// fronts by chain position, so results are deterministic and identical to a
/// sequential elimination of the same order.
template <typename Scalar>
TriangularSystem<Scalar> eliminate_parallel_two_front(LqrFactorGraph<Scalar>& g) {
  const Index N = g.horizon();
  const Index expected_factors = 3 * N + 2;
  if (g.num_eliminated() != 0 || g.num_alive_factors() != expected_factors ||
      g.factors_created() != expected_factors)
    throw std::invalid_argument("eliminate_parallel_two_front requires a freshly built LQR graph");

  const auto sched = make_two_front_schedule(N);
  const int mid = sched.middle;
  auto all = g.drain_factors();

  // Ownership: a front owns every factor it reaches first along its sweep.
  std::map<int, Factor<Scalar>> left_owned, right_owned, middle_owned;
  for (auto& [id, f] : all) {
    const int lo = f.scope.front();
    const int hi = f.scope.back();
    if (lo <= mid - 1)
      left_owned.emplace(id, std::move(f));
    else if (hi >= mid + 1)
      right_owned.emplace(id, std::move(f));
    else
      middle_owned.emplace(id, std::move(f));
  }
  all.clear();

  const int fill_base = g.next_factor_id();
  const bool odd = (N % 2) != 0;
  std::vector<int> right_phase1 = sched.right;
  int right_handoff = -1;
  if (odd && !right_phase1.empty()) {
    right_handoff = right_phase1.back();  // position N+1 depends on the left front's last fill
    right_phase1.pop_back();
  }

  const auto& vars = g.variables();
  auto left_future = std::async(std::launch::async, [&] {
    return detail::run_front(std::move(left_owned), sched.left, vars, fill_base, 2);
  });
  auto right = detail::run_front(std::move(right_owned), right_phase1, vars, fill_base + 1, 2);
  auto left = left_future.get();  // barrier: both fronts complete before the middle

  if (right_handoff >= 0) {
    for (auto it = left.leftovers.begin(); it != left.leftovers.end();) {
      if (std::find(it->second.scope.begin(), it->second.scope.end(), right_handoff) !=
          it->second.scope.end()) {
        right.leftovers.emplace(it->first, std::move(it->second));
        it = left.leftovers.erase(it);
      } else {
        ++it;
      }
    }
    auto tail = detail::run_front(std::move(right.leftovers), {right_handoff}, vars,
                                  fill_base + 1 + 2 * static_cast<int>(N), 2);
    right.conditionals.insert(right.conditionals.end(),
                              std::make_move_iterator(tail.conditionals.begin()),
                              std::make_move_iterator(tail.conditionals.end()));
    right.touched.insert(right.touched.end(), tail.touched.begin(), tail.touched.end());
    right.fills_created += tail.fills_created;
    right.leftovers = std::move(tail.leftovers);
  }

  {
    std::set<int> l(left.touched.begin(), left.touched.end());
    for (int id : right.touched)
      if (l.count(id))
        throw std::logic_error("two-front elimination touched a shared factor (id " +
                               std::to_string(id) + ")");
  }

  // Middle elimination over the cost factor at position N plus both final fills.
  std::map<int, Factor<Scalar>> middle_store = std::move(middle_owned);
  for (auto& [id, f] : left.leftovers) middle_store.emplace(id, std::move(f));
  for (auto& [id, f] : right.leftovers) middle_store.emplace(id, std::move(f));
  auto middle = detail::run_front(std::move(middle_store), {mid}, vars,
                                  fill_base + 2 * static_cast<int>(N) + 2, 1);

  // Deterministic merge by chain position: step t contributes position t from
  // the left and position 2N - t from the right.
  TriangularSystem<Scalar> sys(vars);
  for (std::size_t t = 0; t < static_cast<std::size_t>(N); ++t) {
    sys.append(std::move(left.conditionals[t]));
    sys.append(std::move(right.conditionals[t]));
  }
  sys.append(std::move(middle.conditionals.front()));

  long consumed = static_cast<long>(left.touched.size() + right.touched.size() +
                                    middle.touched.size());
  g.note_external_factors(consumed, left.fills_created + right.fills_created +
                                        middle.fills_created);
  for (const auto& v : vars) g.mark_eliminated(v.id);
  return sys;
}

/// Back-substitutes the triangular system in reverse elimination order and
/// scatters the solution into a Trajectory.
template <typename Scalar>
Trajectory<Scalar> solve_triangular_system(const TriangularSystem<Scalar>& sys) {
  if (!sys.complete())
    throw std::invalid_argument("solve_triangular_system: system is incomplete");
  const auto r = sys.assemble_r();
  const auto rhs = sys.assemble_rhs();
  const DenseVector<Scalar> x = back_substitute(r, rhs);

  const auto& vars = sys.variables();
  const Index N = (static_cast<Index>(vars.size()) - 1) / 2;
  Trajectory<Scalar> t;
  t.states.resize(static_cast<std::size_t>(N + 1));
  t.controls.resize(static_cast<std::size_t>(N));

  std::vector<Index> offset(vars.size(), 0);
  Index at = 0;
  for (int v : sys.order()) {
    offset[static_cast<std::size_t>(v)] = at;
    at += vars[static_cast<std::size_t>(v)].dim;
  }
  for (const auto& v : vars) {
    const auto seg = x.segment(offset[static_cast<std::size_t>(v.id)], v.dim);
    if (v.kind == VariableKind::State)
      t.states[static_cast<std::size_t>(v.time_index)] = seg;
    else
      t.controls[static_cast<std::size_t>(v.time_index)] = seg;
  }
  return t;
}

}  // namespace fglqr
