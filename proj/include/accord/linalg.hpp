#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "accord/error.hpp"

namespace accord {

using Index = std::ptrdiff_t;
using DenseSquare = Eigen::MatrixXd;

/// Default largest p for which a dense p x p object (S, full gradient) is built.
inline constexpr Index kDefaultDenseCap = 4096;

/// Sample matrix, one row per observation. Columns are variables.
struct DenseData {
  Eigen::MatrixXd values;  // n x p, column-major
  bool centered = false;
  std::optional<double> spectral_bound;

  Index n() const { return values.rows(); }
  Index p() const { return values.cols(); }
};

struct Triplet {
  Index row;
  Index col;
  double value;
};

/// Square matrix in compressed-row form. Column indices are strictly
/// increasing within a row. Used for Omega iterates, Theta and masks; the
/// matrix may be asymmetric.
class SparseSquare {
 public:
  SparseSquare() : row_ptr_(1, 0) {}
  explicit SparseSquare(Index dim) : dim_(dim), row_ptr_(static_cast<std::size_t>(dim) + 1, 0) {}

  static SparseSquare identity(Index dim, double diag = 1.0) {
    SparseSquare m;
    m.dim_ = dim;
    m.row_ptr_.resize(static_cast<std::size_t>(dim) + 1);
    m.cols_.resize(static_cast<std::size_t>(dim));
    m.vals_.assign(static_cast<std::size_t>(dim), diag);
    for (Index i = 0; i <= dim; ++i) m.row_ptr_[static_cast<std::size_t>(i)] = i;
    for (Index i = 0; i < dim; ++i) m.cols_[static_cast<std::size_t>(i)] = i;
    return m;
  }

  static SparseSquare diagonal(std::span<const double> diag) {
    auto m = identity(static_cast<Index>(diag.size()));
    std::copy(diag.begin(), diag.end(), m.vals_.begin());
    return m;
  }

  /// Duplicate (row, col) pairs are summed. Explicit zeros are kept.
  static SparseSquare from_triplets(Index dim, std::vector<Triplet> triplets) {
    for (const auto& t : triplets) {
      if (t.row < 0 || t.row >= dim || t.col < 0 || t.col >= dim) {
        std::ostringstream os;
        os << "triplet (" << t.row << ", " << t.col << ") outside " << dim << " x " << dim;
        throw UsageError(os.str());
      }
    }
    std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
      return std::tie(a.row, a.col) < std::tie(b.row, b.col);
    });
    SparseSquare m(dim);
    for (std::size_t k = 0; k < triplets.size(); ++k) {
      const auto& t = triplets[k];
      if (!m.cols_.empty() && k > 0 && triplets[k - 1].row == t.row && triplets[k - 1].col == t.col) {
        m.vals_.back() += t.value;
        continue;
      }
      m.cols_.push_back(t.col);
      m.vals_.push_back(t.value);
      ++m.row_ptr_[static_cast<std::size_t>(t.row) + 1];
    }
    for (Index i = 0; i < dim; ++i) m.row_ptr_[static_cast<std::size_t>(i) + 1] += m.row_ptr_[static_cast<std::size_t>(i)];
    return m;
  }

  /// Keeps entries with |a_ij| > drop_below plus the whole diagonal.
  static SparseSquare from_dense(const Eigen::Ref<const Eigen::MatrixXd>& a, double drop_below = 0.0) {
    if (a.rows() != a.cols()) throw UsageError("from_dense: matrix is not square");
    const Index p = a.rows();
    SparseSquare m(p);
    for (Index i = 0; i < p; ++i) {
      for (Index j = 0; j < p; ++j) {
        const double v = a(i, j);
        if (i == j || std::abs(v) > drop_below) m.push(j, v);
      }
      m.finish_row(i);
    }
    return m;
  }

  // Row-wise construction: push() entries of row i in increasing column
  // order, then finish_row(i). Rows must be finished in order.
  void push(Index col, double value) {
    cols_.push_back(col);
    vals_.push_back(value);
  }
  void finish_row(Index i) { row_ptr_[static_cast<std::size_t>(i) + 1] = static_cast<Index>(cols_.size()); }

  Index dim() const { return dim_; }
  Index nnz() const { return static_cast<Index>(cols_.size()); }

  Index row_begin(Index i) const { return row_ptr_[static_cast<std::size_t>(i)]; }
  Index row_end(Index i) const { return row_ptr_[static_cast<std::size_t>(i) + 1]; }
  Index row_nnz(Index i) const { return row_end(i) - row_begin(i); }

  std::span<const Index> row_cols(Index i) const {
    return {cols_.data() + row_begin(i), static_cast<std::size_t>(row_nnz(i))};
  }
  std::span<const double> row_values(Index i) const {
    return {vals_.data() + row_begin(i), static_cast<std::size_t>(row_nnz(i))};
  }
  std::span<double> row_values(Index i) {
    return {vals_.data() + row_begin(i), static_cast<std::size_t>(row_nnz(i))};
  }

  const std::vector<Index>& row_ptr() const { return row_ptr_; }
  const std::vector<Index>& cols() const { return cols_; }
  const std::vector<double>& values() const { return vals_; }
  std::vector<double>& values() { return vals_; }

  /// Entry lookup by binary search; 0 for absent positions.
  double coeff(Index i, Index j) const {
    const auto c = row_cols(i);
    const auto it = std::lower_bound(c.begin(), c.end(), j);
    if (it == c.end() || *it != j) return 0.0;
    return vals_[static_cast<std::size_t>(row_begin(i) + (it - c.begin()))];
  }

  bool contains(Index i, Index j) const {
    const auto c = row_cols(i);
    return std::binary_search(c.begin(), c.end(), j);
  }

  double diag(Index i) const { return coeff(i, i); }

  std::vector<double> diagonal_values() const {
    std::vector<double> d(static_cast<std::size_t>(dim_));
    for (Index i = 0; i < dim_; ++i) d[static_cast<std::size_t>(i)] = diag(i);
    return d;
  }

  bool has_positive_diagonal() const {
    for (Index i = 0; i < dim_; ++i) {
      if (!(diag(i) > 0.0)) return false;
    }
    return true;
  }

  /// Number of stored off-diagonal entries with nonzero value.
  Index offdiag_nnz() const {
    Index count = 0;
    for (Index i = 0; i < dim_; ++i) {
      const auto c = row_cols(i);
      const auto v = row_values(i);
      for (std::size_t k = 0; k < c.size(); ++k) {
        if (c[k] != i && v[k] != 0.0) ++count;
      }
    }
    return count;
  }

  Eigen::MatrixXd to_dense() const {
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(dim_, dim_);
    for (Index i = 0; i < dim_; ++i) {
      const auto c = row_cols(i);
      const auto v = row_values(i);
      for (std::size_t k = 0; k < c.size(); ++k) d(i, c[k]) = v[k];
    }
    return d;
  }

  SparseSquare transpose() const {
    std::vector<Triplet> t;
    t.reserve(cols_.size());
    for (Index i = 0; i < dim_; ++i) {
      const auto c = row_cols(i);
      const auto v = row_values(i);
      for (std::size_t k = 0; k < c.size(); ++k) t.push_back({c[k], i, v[k]});
    }
    return from_triplets(dim_, std::move(t));
  }

  /// Same stored positions, values ignored.
  bool same_pattern(const SparseSquare& other) const {
    return dim_ == other.dim_ && row_ptr_ == other.row_ptr_ && cols_ == other.cols_;
  }

  /// Rows [begin, end) as a standalone block (columns keep global indices).
  SparseSquare row_block(Index begin, Index end) const {
    SparseSquare b;
    b.dim_ = dim_;
    b.row_ptr_.assign(static_cast<std::size_t>(end - begin) + 1, 0);
    const Index off = row_begin(begin);
    b.cols_.assign(cols_.begin() + off, cols_.begin() + row_begin(end));
    b.vals_.assign(vals_.begin() + off, vals_.begin() + row_begin(end));
    for (Index i = begin; i <= end; ++i) b.row_ptr_[static_cast<std::size_t>(i - begin)] = row_begin(i) - off;
    b.block_rows_ = end - begin;
    return b;
  }

  /// Rows held by this object; equals dim() except for row blocks.
  Index stored_rows() const { return block_rows_ >= 0 ? block_rows_ : dim_; }

  std::size_t bytes() const {
    return row_ptr_.size() * sizeof(Index) + cols_.size() * sizeof(Index) + vals_.size() * sizeof(double);
  }

 private:
  Index dim_ = 0;
  Index block_rows_ = -1;
  std::vector<Index> row_ptr_;
  std::vector<Index> cols_;
  std::vector<double> vals_;
};

/// Subtracts column means. Rejects non-finite input, naming the first
/// offending (row, column).
inline DenseData center_columns(const Eigen::Ref<const Eigen::MatrixXd>& raw) {
  if (raw.rows() < 1 || raw.cols() < 1) throw UsageError("center_columns: empty matrix");
  for (Index j = 0; j < raw.cols(); ++j) {
    for (Index i = 0; i < raw.rows(); ++i) {
      if (!std::isfinite(raw(i, j))) {
        std::ostringstream os;
        os << "non-finite entry at row " << i << ", column " << j;
        throw NumericError(os.str());
      }
    }
  }
  DenseData d;
  d.values = raw;
  d.values.rowwise() -= raw.colwise().mean();
  d.centered = true;
  return d;
}

/// S = (1/n) X^T X, computed on the lower triangle and mirrored so the
/// result is bitwise symmetric.
inline DenseSquare gram(const DenseData& data, Index dense_cap = kDefaultDenseCap) {
  const Index p = data.p();
  if (p > dense_cap) {
    std::ostringstream os;
    os << "gram: p = " << p << " exceeds dense cap " << dense_cap << "; use the matrix-free path";
    throw DenseCapExceeded(os.str());
  }
  DenseSquare s = DenseSquare::Zero(p, p);
  s.selfadjointView<Eigen::Lower>().rankUpdate(data.values.transpose(), 1.0 / static_cast<double>(data.n()));
  s.triangularView<Eigen::StrictlyUpper>() = s.transpose();
  return s;
}

struct SpectralBoundOptions {
  double tol = 1e-6;
  int max_iter = 1000;
};

struct SpectralBoundResult {
  double value = 0.0;  // inflated estimate (1 + tol) * rayleigh
  double rayleigh = 0.0;
  int iterations = 0;
  bool degenerate = false;  // X == 0
};

/// Largest eigenvalue of (1/n) X^T X by power iteration on v -> (1/n) X^T (X v).
/// Starts from the normalised all-ones vector; the returned value is inflated
/// by (1 + tol) so that 1/L stays a safe step.
inline SpectralBoundResult spectral_bound_detail(const DenseData& data, SpectralBoundOptions opt = {}) {
  const Index p = data.p();
  const double inv_n = 1.0 / static_cast<double>(data.n());
  SpectralBoundResult out;
  if (data.values.cwiseAbs().maxCoeff() == 0.0) {
    out.degenerate = true;
    return out;
  }
  auto apply = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
    Eigen::VectorXd xv = data.values * v;
    return inv_n * (data.values.transpose() * xv);
  };
  Eigen::VectorXd v = Eigen::VectorXd::Ones(p) / std::sqrt(static_cast<double>(p));
  Eigen::VectorXd w = apply(v);
  if (w.norm() == 0.0) {
    // all-ones lies in the null space; restart from a fixed non-symmetric vector
    for (Index j = 0; j < p; ++j) v(j) = 1.0 + 0.5 * std::sin(static_cast<double>(j) + 1.0);
    v.normalize();
    w = apply(v);
  }
  double lambda = v.dot(w);
  int it = 1;
  for (; it < opt.max_iter; ++it) {
    const double norm = w.norm();
    if (norm == 0.0) break;
    v = w / norm;
    w = apply(v);
    const double next = v.dot(w);
    const bool done = std::abs(next - lambda) <= opt.tol * std::abs(next);
    lambda = std::max(lambda, next);
    if (done) break;
  }
  out.rayleigh = lambda;
  out.value = lambda * (1.0 + opt.tol);
  out.iterations = it;
  return out;
}

inline double spectral_bound(const DenseData& data, double tol = 1e-6) {
  return spectral_bound_detail(data, {tol, 1000}).value;
}

/// Caches the spectral bound on the data object and returns it.
inline double ensure_spectral_bound(DenseData& data, double tol = 1e-6) {
  if (!data.spectral_bound) data.spectral_bound = spectral_bound(data, tol);
  return *data.spectral_bound;
}

/// out(:, c) = sum over stored (k, w) of row i: w * m(k, c), for rows of
/// omega (or of a row block of omega). Columns of m are processed
/// independently, so the result does not depend on any partitioning.
inline void spdm_into(const SparseSquare& omega, const Eigen::Ref<const Eigen::MatrixXd>& m,
                      Eigen::Ref<Eigen::MatrixXd> out) {
  const Index rows = omega.stored_rows();
  if (m.rows() != omega.dim() || out.rows() != rows || out.cols() != m.cols()) {
    std::ostringstream os;
    os << "spdm: dimension mismatch (omega " << rows << " x " << omega.dim() << ", operand " << m.rows() << " x "
       << m.cols() << ")";
    throw UsageError(os.str());
  }
  const auto& ptr = omega.row_ptr();
  const auto& cols = omega.cols();
  const auto& vals = omega.values();
  for (Index c = 0; c < m.cols(); ++c) {
    const double* col = m.col(c).data();
    double* dst = out.col(c).data();
    for (Index i = 0; i < rows; ++i) {
      double acc = 0.0;
      for (Index k = ptr[static_cast<std::size_t>(i)]; k < ptr[static_cast<std::size_t>(i) + 1]; ++k) {
        acc += vals[static_cast<std::size_t>(k)] * col[cols[static_cast<std::size_t>(k)]];
      }
      dst[i] = acc;
    }
  }
}

/// Sparse-dense product omega * m; cost O(nnz(omega) * cols(m)).
inline Eigen::MatrixXd spdm(const SparseSquare& omega, const Eigen::Ref<const Eigen::MatrixXd>& m) {
  if (m.rows() != omega.dim()) {
    std::ostringstream os;
    os << "spdm: omega is " << omega.dim() << " x " << omega.dim() << " but operand has " << m.rows() << " rows";
    throw UsageError(os.str());
  }
  Eigen::MatrixXd out(omega.stored_rows(), m.cols());
  spdm_into(omega, m, out);
  return out;
}

/// A * omega^T for a column-major A with p columns: column i of the result
/// is sum over stored (k, w) of row i of omega of w * A(:, k). With A = S this
/// is (Omega S)^T; with A = X it is (Omega X^T)^T. Both layouts put gradient
/// row i in a contiguous column.
inline Eigen::MatrixXd times_transpose(const Eigen::Ref<const Eigen::MatrixXd>& a, const SparseSquare& omega) {
  if (a.cols() != omega.dim()) {
    std::ostringstream os;
    os << "times_transpose: operand has " << a.cols() << " columns, omega is " << omega.dim() << " x " << omega.dim();
    throw UsageError(os.str());
  }
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(a.rows(), omega.stored_rows());
  for (Index i = 0; i < omega.stored_rows(); ++i) {
    const auto c = omega.row_cols(i);
    const auto v = omega.row_values(i);
    auto dst = out.col(i);
    for (std::size_t k = 0; k < c.size(); ++k) dst.noalias() += v[k] * a.col(c[k]);
  }
  return out;
}

/// Row i of omega times symmetric S times row i transposed, summed over rows:
/// tr(Omega^T Omega S) without forming Omega S.
inline double quadratic_trace(const SparseSquare& omega, const Eigen::Ref<const Eigen::MatrixXd>& s) {
  double total = 0.0;
  for (Index i = 0; i < omega.dim(); ++i) {
    const auto c = omega.row_cols(i);
    const auto v = omega.row_values(i);
    for (std::size_t a = 0; a < c.size(); ++a) {
      double acc = 0.0;
      for (std::size_t b = 0; b < c.size(); ++b) acc += s(c[a], c[b]) * v[b];
      total += v[a] * acc;
    }
  }
  return total;
}

}  // namespace accord
