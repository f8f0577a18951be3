#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fglqr {

using Index = Eigen::Index;

template <typename Scalar>
using DenseMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using DenseVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
struct ScalarTraits;

template <>
struct ScalarTraits<double> {
  static constexpr double singular_pivot = 1e-300;
  using Bits = std::uint64_t;
  static constexpr int mantissa_bits = 52;
  static constexpr Bits exponent_mask = 0x7ff;
  static constexpr Bits max_normal_biased = 0x7fe;
};

template <>
struct ScalarTraits<float> {
  static constexpr float singular_pivot = 1e-30f;
  using Bits = std::uint32_t;
  static constexpr int mantissa_bits = 23;
  static constexpr Bits exponent_mask = 0xff;
  static constexpr Bits max_normal_biased = 0xfe;
};

/// Householder reflector H = I - beta * v * v^T with unit-norm v.
/// beta == 0 encodes the identity (used for all-zero columns).
template <typename Scalar>
struct HouseholderReflector {
  DenseVector<Scalar> v;
  Scalar beta{0};
  Scalar pivot_value{0};

  Index dimension() const { return v.size(); }
  bool is_identity() const { return beta == Scalar(0); }

  /// Dense form of H, mainly for cross-checking small cases.
  DenseMatrix<Scalar> dense() const {
    DenseMatrix<Scalar> h = DenseMatrix<Scalar>::Identity(v.size(), v.size());
    h.noalias() -= beta * v * v.transpose();
    return h;
  }
};

/// Builds the reflector that maps `column` onto pivot_value * e_0 with
/// pivot_value = -sign(column[0]) * ||column||_2 (sign(0) taken as +1).
template <typename Scalar>
HouseholderReflector<Scalar> householder_evaluate(
    const Eigen::Ref<const DenseVector<Scalar>>& column) {
  if (column.size() == 0)
    throw std::invalid_argument("householder_evaluate: column must have at least one entry");
  HouseholderReflector<Scalar> h;
  h.v = DenseVector<Scalar>::Zero(column.size());
  const Scalar norm = column.norm();
  if (norm == Scalar(0)) {
    return h;  // identity reflector, pivot 0
  }
  const Scalar sign = column[0] < Scalar(0) ? Scalar(-1) : Scalar(1);
  h.pivot_value = -sign * norm;
  h.v = column;
  h.v[0] -= h.pivot_value;  // = column[0] + sign*norm, no cancellation
  h.v /= h.v.norm();
  h.beta = Scalar(2);
  return h;
}

namespace detail {

template <typename Scalar, typename Block>
void apply_householder_inplace(const HouseholderReflector<Scalar>& h, Block block) {
  if (h.is_identity()) return;
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> w = h.v.transpose() * block;
  block.noalias() -= (h.beta * h.v) * w;
}

}  // namespace detail

/// Returns H * block.
template <typename Scalar>
DenseMatrix<Scalar> householder_update(const HouseholderReflector<Scalar>& h,
                                       const Eigen::Ref<const DenseMatrix<Scalar>>& block) {
  if (block.rows() != h.dimension())
    throw std::invalid_argument("householder_update: block rows (" +
                                std::to_string(block.rows()) +
                                ") do not match reflector dimension (" +
                                std::to_string(h.dimension()) + ")");
  DenseMatrix<Scalar> out = block;
  detail::apply_householder_inplace(h, out.block(0, 0, out.rows(), out.cols()));
  return out;
}

template <typename Scalar>
struct PartialQr {
  DenseMatrix<Scalar> top;        // first min(k, rows) rows; leading k columns upper triangular
  DenseMatrix<Scalar> remainder;  // remaining rows; leading k columns exactly zero
};

/// Triangularizes the leading k columns of m by Householder reflections and
/// splits the result into the retained top rows and the remainder rows.
/// Entries below the diagonal of the first k columns are hard-zeroed.
template <typename Scalar>
PartialQr<Scalar> partial_qr(const Eigen::Ref<const DenseMatrix<Scalar>>& m, Index k) {
  if (m.rows() < 1) throw std::invalid_argument("partial_qr: matrix must have at least one row");
  if (k < 1 || k > m.cols())
    throw std::invalid_argument("partial_qr: k = " + std::to_string(k) +
                                " out of range [1, " + std::to_string(m.cols()) + "]");
  DenseMatrix<Scalar> work = m;
  const Index rows = work.rows();
  const Index cols = work.cols();
  const Index steps = std::min(k, rows - 1);
  for (Index j = 0; j < steps; ++j) {
    if (work.col(j).tail(rows - j - 1).isZero(Scalar(0))) continue;  // already triangular here
    const auto reflector = householder_evaluate<Scalar>(work.col(j).tail(rows - j));
    if (reflector.is_identity()) continue;
    work(j, j) = reflector.pivot_value;
    if (j + 1 < cols)
      detail::apply_householder_inplace(reflector,
                                        work.block(j, j + 1, rows - j, cols - j - 1));
  }
  for (Index j = 0; j < k; ++j)
    for (Index i = j + 1; i < rows; ++i) work(i, j) = Scalar(0);

  const Index split = std::min(k, rows);
  PartialQr<Scalar> out;
  out.top = work.topRows(split);
  out.remainder = work.bottomRows(rows - split);
  return out;
}

/// Square upper-triangular matrix with per-column labels (used downstream to
/// tag columns with variable identities). Strictly-lower entries must be
/// exactly zero.
template <typename Scalar>
class TriangularMatrix {
 public:
  TriangularMatrix() = default;

  explicit TriangularMatrix(DenseMatrix<Scalar> entries, std::vector<int> column_labels = {})
      : entries_(std::move(entries)), labels_(std::move(column_labels)) {
    if (entries_.rows() != entries_.cols())
      throw std::invalid_argument("TriangularMatrix: matrix must be square");
    for (Index j = 0; j < entries_.cols(); ++j)
      for (Index i = j + 1; i < entries_.rows(); ++i)
        if (entries_(i, j) != Scalar(0))
          throw std::invalid_argument("TriangularMatrix: nonzero entry below the diagonal at (" +
                                      std::to_string(i) + ", " + std::to_string(j) + ")");
    if (labels_.empty()) {
      labels_.resize(static_cast<std::size_t>(entries_.cols()));
      for (std::size_t j = 0; j < labels_.size(); ++j) labels_[j] = static_cast<int>(j);
    }
    if (labels_.size() != static_cast<std::size_t>(entries_.cols()))
      throw std::invalid_argument("TriangularMatrix: one label per column required");
  }

  Index dimension() const { return entries_.rows(); }
  const DenseMatrix<Scalar>& entries() const { return entries_; }
  const std::vector<int>& column_labels() const { return labels_; }

 private:
  DenseMatrix<Scalar> entries_;
  std::vector<int> labels_;
};

/// Solves r * x = b for upper-triangular r.
template <typename Scalar>
DenseVector<Scalar> back_substitute(const TriangularMatrix<Scalar>& r,
                                    const DenseVector<Scalar>& b) {
  const Index n = r.dimension();
  if (n != b.size())
    throw std::invalid_argument("back_substitute: dimension mismatch between r and b");
  const auto& m = r.entries();
  DenseVector<Scalar> x(n);
  for (Index i = n - 1; i >= 0; --i) {
    const Scalar pivot = m(i, i);
    if (std::abs(pivot) <= ScalarTraits<Scalar>::singular_pivot)
      throw std::runtime_error("back_substitute: singular pivot at row " + std::to_string(i));
    Scalar acc = b[i];
    if (i + 1 < n) acc -= m.row(i).tail(n - i - 1).dot(x.tail(n - i - 1));
    x[i] = acc / pivot;
  }
  return x;
}

/// Multiplies a scalar by 2^e via exponent-field addition. Zeros pass
/// through; subnormal and non-finite inputs, and results leaving the normal
/// range, are rejected.
template <typename Scalar>
Scalar pow2_scale(Scalar value, int e) {
  using Traits = ScalarTraits<Scalar>;
  using Bits = typename Traits::Bits;
  if (value == Scalar(0)) return value;
  const Bits bits = std::bit_cast<Bits>(value);
  const Bits exponent = (bits >> Traits::mantissa_bits) & Traits::exponent_mask;
  if (exponent == 0) throw std::range_error("pow2_scale: subnormal input");
  if (exponent == Traits::exponent_mask) throw std::range_error("pow2_scale: non-finite input");
  const std::int64_t shifted = static_cast<std::int64_t>(exponent) + e;
  if (shifted < 1 || shifted > static_cast<std::int64_t>(Traits::max_normal_biased))
    throw std::range_error("pow2_scale: result exponent out of the normal range (e = " +
                           std::to_string(e) + ")");
  const Bits cleared = bits & ~(Traits::exponent_mask << Traits::mantissa_bits);
  return std::bit_cast<Scalar>(cleared | (static_cast<Bits>(shifted) << Traits::mantissa_bits));
}

/// Elementwise 2^e scaling of a dense expression via pow2_scale.
template <typename Derived>
typename Derived::PlainObject scale_rows_pow2(const Eigen::MatrixBase<Derived>& m, int e) {
  using Scalar = typename Derived::Scalar;
  typename Derived::PlainObject out = m.derived();
  for (Index j = 0; j < out.cols(); ++j)
    for (Index i = 0; i < out.rows(); ++i) out(i, j) = pow2_scale<Scalar>(out(i, j), e);
  return out;
}

}  // namespace fglqr
