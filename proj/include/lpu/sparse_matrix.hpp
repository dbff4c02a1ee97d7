#ifndef LPU_SPARSE_MATRIX_HPP
#define LPU_SPARSE_MATRIX_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace lpu {

using Vector = std::vector<double>;

/// One (row, col, value) coordinate entry, 0-based.
struct Triplet {
  std::size_t row;
  std::size_t col;
  double value;
};

/**
 * Real sparse matrix in compressed sparse row form.
 *
 * Invariants, checked on construction:
 *  - row_starts has nrows+1 entries, starts at 0, is nondecreasing and ends at nnz;
 *  - column indices within a row are strictly increasing and lie in [0, ncols).
 *
 * Instances are immutable once built and may be shared freely between threads.
 */
class SparseMatrix {
public:
  SparseMatrix() : row_starts_(1, 0) {}

  SparseMatrix(std::size_t nrows, std::size_t ncols, std::vector<std::size_t> row_starts,
               std::vector<std::size_t> col_indices, std::vector<double> values)
      : nrows_(nrows), ncols_(ncols), row_starts_(std::move(row_starts)),
        col_indices_(std::move(col_indices)), values_(std::move(values)) {
    validate();
  }

  std::size_t rows() const noexcept { return nrows_; }
  std::size_t cols() const noexcept { return ncols_; }
  std::size_t nnz() const noexcept { return values_.size(); }
  bool is_square() const noexcept { return nrows_ == ncols_; }

  std::span<const std::size_t> row_starts() const noexcept { return row_starts_; }
  std::span<const std::size_t> col_indices() const noexcept { return col_indices_; }
  std::span<const double> values() const noexcept { return values_; }

  std::span<const std::size_t> row_cols(std::size_t i) const noexcept {
    return {col_indices_.data() + row_starts_[i], row_starts_[i + 1] - row_starts_[i]};
  }
  std::span<const double> row_values(std::size_t i) const noexcept {
    return {values_.data() + row_starts_[i], row_starts_[i + 1] - row_starts_[i]};
  }

  /// Stored value at (i, j), zero when the entry is structurally absent.
  double at(std::size_t i, std::size_t j) const {
    if (i >= nrows_ || j >= ncols_) throw dimension_error("SparseMatrix::at: index out of range");
    auto cols = row_cols(i);
    auto it = std::lower_bound(cols.begin(), cols.end(), j);
    if (it == cols.end() || *it != j) return 0.0;
    return values_[row_starts_[i] + static_cast<std::size_t>(it - cols.begin())];
  }

  friend bool operator==(const SparseMatrix&, const SparseMatrix&) = default;

private:
  void validate() const {
    if (row_starts_.size() != nrows_ + 1)
      throw argument_error("CSR: row_starts must have nrows+1 entries");
    if (row_starts_.front() != 0) throw argument_error("CSR: row_starts[0] must be 0");
    if (row_starts_.back() != col_indices_.size() || col_indices_.size() != values_.size())
      throw argument_error("CSR: row_starts[nrows] must equal nnz");
    for (std::size_t i = 0; i < nrows_; ++i) {
      if (row_starts_[i] > row_starts_[i + 1])
        throw argument_error("CSR: row_starts must be nondecreasing");
      for (std::size_t k = row_starts_[i]; k < row_starts_[i + 1]; ++k) {
        if (col_indices_[k] >= ncols_) throw argument_error("CSR: column index out of range");
        if (k > row_starts_[i] && col_indices_[k] <= col_indices_[k - 1])
          throw argument_error("CSR: column indices must be strictly increasing within a row");
      }
    }
  }

  std::size_t nrows_ = 0;
  std::size_t ncols_ = 0;
  std::vector<std::size_t> row_starts_;
  std::vector<std::size_t> col_indices_;
  std::vector<double> values_;
};

/// What from_triplets does when the same (row, col) appears twice.
enum class DuplicatePolicy { reject, sum };

/**
 * Builds a CSR matrix from unordered coordinates. Entries are bucketed by row
 * and sorted by column; explicit zeros are kept.
 */
inline SparseMatrix from_triplets(std::size_t nrows, std::size_t ncols, std::vector<Triplet> entries,
                                  DuplicatePolicy duplicates = DuplicatePolicy::reject) {
  std::vector<std::size_t> starts(nrows + 1, 0);
  for (const auto& t : entries) {
    if (t.row >= nrows || t.col >= ncols)
      throw dimension_error("from_triplets: entry (" + std::to_string(t.row) + ", " +
                            std::to_string(t.col) + ") outside " + std::to_string(nrows) + "x" +
                            std::to_string(ncols));
    ++starts[t.row + 1];
  }
  std::partial_sum(starts.begin(), starts.end(), starts.begin());

  std::vector<std::size_t> cols(entries.size());
  std::vector<double> vals(entries.size());
  {
    std::vector<std::size_t> fill(starts.begin(), starts.end() - 1);
    for (const auto& t : entries) {
      const std::size_t k = fill[t.row]++;
      cols[k] = t.col;
      vals[k] = t.value;
    }
  }
  entries.clear();
  entries.shrink_to_fit();

  std::vector<std::size_t> out_starts(nrows + 1, 0);
  std::vector<std::size_t> out_cols;
  std::vector<double> out_vals;
  out_cols.reserve(cols.size());
  out_vals.reserve(vals.size());
  std::vector<std::pair<std::size_t, double>> row;
  for (std::size_t i = 0; i < nrows; ++i) {
    row.clear();
    for (std::size_t k = starts[i]; k < starts[i + 1]; ++k) row.emplace_back(cols[k], vals[k]);
    std::stable_sort(row.begin(), row.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (k > 0 && row[k].first == row[k - 1].first) {
        if (duplicates == DuplicatePolicy::reject)
          throw argument_error("duplicate entry at (" + std::to_string(i + 1) + ", " +
                               std::to_string(row[k].first + 1) + ")");
        out_vals.back() += row[k].second;
        continue;
      }
      out_cols.push_back(row[k].first);
      out_vals.push_back(row[k].second);
    }
    out_starts[i + 1] = out_cols.size();
  }
  return SparseMatrix(nrows, ncols, std::move(out_starts), std::move(out_cols), std::move(out_vals));
}

inline SparseMatrix identity(std::size_t n) {
  std::vector<std::size_t> starts(n + 1);
  std::iota(starts.begin(), starts.end(), std::size_t{0});
  std::vector<std::size_t> cols(n);
  std::iota(cols.begin(), cols.end(), std::size_t{0});
  return SparseMatrix(n, n, std::move(starts), std::move(cols), Vector(n, 1.0));
}

/// y = A x, rows summed sequentially in stored (ascending column) order.
inline void spmv(const SparseMatrix& A, std::span<const double> x, std::span<double> y) {
  if (x.size() != A.cols() || y.size() != A.rows())
    throw dimension_error("spmv: matrix is " + std::to_string(A.rows()) + "x" +
                          std::to_string(A.cols()) + ", x has " + std::to_string(x.size()) +
                          ", y has " + std::to_string(y.size()));
  const auto starts = A.row_starts();
  const auto cols = A.col_indices();
  const auto vals = A.values();
  for (std::size_t i = 0; i < A.rows(); ++i) {
    double sum = 0.0;
    for (std::size_t k = starts[i]; k < starts[i + 1]; ++k) sum += vals[k] * x[cols[k]];
    y[i] = sum;
  }
}

inline Vector spmv(const SparseMatrix& A, std::span<const double> x) {
  Vector y(A.rows());
  spmv(A, x, y);
  return y;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw dimension_error("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double norm_inf(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

/// y += alpha x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  if (x.size() != y.size()) throw dimension_error("axpy: length mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

/// ||A x - b||_2 / ||b||_2
inline double relative_residual(const SparseMatrix& A, std::span<const double> x,
                                std::span<const double> b) {
  if (b.size() != A.rows()) throw dimension_error("relative_residual: b length mismatch");
  const double bnorm = norm2(b);
  if (bnorm == 0.0) throw argument_error("relative_residual: ||b|| = 0, ratio undefined");
  Vector r = spmv(A, x);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] -= b[i];
  return norm2(r) / bnorm;
}

inline SparseMatrix transpose(const SparseMatrix& A) {
  std::vector<std::size_t> starts(A.cols() + 1, 0);
  for (std::size_t c : A.col_indices()) ++starts[c + 1];
  std::partial_sum(starts.begin(), starts.end(), starts.begin());
  std::vector<std::size_t> cols(A.nnz());
  Vector vals(A.nnz());
  std::vector<std::size_t> fill(starts.begin(), starts.end() - 1);
  // Visiting rows in order keeps each output row sorted.
  for (std::size_t i = 0; i < A.rows(); ++i) {
    auto rc = A.row_cols(i);
    auto rv = A.row_values(i);
    for (std::size_t k = 0; k < rc.size(); ++k) {
      const std::size_t dst = fill[rc[k]]++;
      cols[dst] = i;
      vals[dst] = rv[k];
    }
  }
  return SparseMatrix(A.cols(), A.rows(), std::move(starts), std::move(cols), std::move(vals));
}

/// Sparse product A B (row-by-row accumulation into a dense workspace).
inline SparseMatrix multiply(const SparseMatrix& A, const SparseMatrix& B) {
  if (A.cols() != B.rows()) throw dimension_error("multiply: inner dimensions differ");
  std::vector<std::size_t> starts(A.rows() + 1, 0);
  std::vector<std::size_t> cols;
  Vector vals;
  Vector acc(B.cols(), 0.0);
  std::vector<char> used(B.cols(), 0);
  std::vector<std::size_t> pattern;
  for (std::size_t i = 0; i < A.rows(); ++i) {
    pattern.clear();
    auto ac = A.row_cols(i);
    auto av = A.row_values(i);
    for (std::size_t ka = 0; ka < ac.size(); ++ka) {
      auto bc = B.row_cols(ac[ka]);
      auto bv = B.row_values(ac[ka]);
      for (std::size_t kb = 0; kb < bc.size(); ++kb) {
        if (!used[bc[kb]]) {
          used[bc[kb]] = 1;
          pattern.push_back(bc[kb]);
        }
        acc[bc[kb]] += av[ka] * bv[kb];
      }
    }
    std::sort(pattern.begin(), pattern.end());
    for (std::size_t c : pattern) {
      cols.push_back(c);
      vals.push_back(acc[c]);
      acc[c] = 0.0;
      used[c] = 0;
    }
    starts[i + 1] = cols.size();
  }
  return SparseMatrix(A.rows(), B.cols(), std::move(starts), std::move(cols), std::move(vals));
}

/// Largest row 1-norm, i.e. the induced infinity norm.
inline double max_row_abs_sum(const SparseMatrix& A) {
  double m = 0.0;
  for (std::size_t i = 0; i < A.rows(); ++i) {
    double s = 0.0;
    for (double v : A.row_values(i)) s += std::abs(v);
    m = std::max(m, s);
  }
  return m;
}

/// Same pattern, every value multiplied by `factor`.
inline SparseMatrix scaled(const SparseMatrix& A, double factor) {
  std::vector<std::size_t> starts(A.row_starts().begin(), A.row_starts().end());
  std::vector<std::size_t> cols(A.col_indices().begin(), A.col_indices().end());
  Vector vals(A.values().begin(), A.values().end());
  for (double& v : vals) v *= factor;
  return SparseMatrix(A.rows(), A.cols(), std::move(starts), std::move(cols), std::move(vals));
}

} // namespace lpu

#endif // LPU_SPARSE_MATRIX_HPP
