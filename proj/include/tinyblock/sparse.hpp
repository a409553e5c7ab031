#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "tinyblock/error.hpp"
#include "tinyblock/parallel.hpp"

namespace tinyblock {

using Index = std::uint32_t;

/// Dense row-major matrix; rows are node coordinates.
using DenseMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

template <typename T>
struct Triplet {
    Index row;
    Index col;
    T value;
};

/// How duplicate (row, col) entries are folded when building from triplets.
enum class Duplicates { sum, keep_one };

/// Compressed sparse row matrix with sorted, unique column indices per row.
/// Immutable after construction.
template <typename T>
class CsrMatrix {
public:
    using value_type = T;

    CsrMatrix() : row_ptr_(1, 0) {}

    CsrMatrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), row_ptr_(rows + 1, 0) {}

    /// Takes ownership of raw CSR arrays. Column indices must be sorted and
    /// unique within each row.
    CsrMatrix(std::size_t rows, std::size_t cols, std::vector<std::size_t> row_ptr,
              std::vector<Index> col_idx, std::vector<T> values)
        : rows_(rows), cols_(cols), row_ptr_(std::move(row_ptr)),
          col_idx_(std::move(col_idx)), values_(std::move(values)) {
        detail::require(row_ptr_.size() == rows_ + 1, "CsrMatrix: row_ptr size must be rows+1");
        detail::require(col_idx_.size() == values_.size(), "CsrMatrix: index/value size mismatch");
        detail::require(row_ptr_.back() == col_idx_.size(), "CsrMatrix: row_ptr does not cover nnz");
    }

    /// Builds from unordered triplets. Zero values are dropped.
    static CsrMatrix from_triplets(std::size_t rows, std::size_t cols,
                                   std::vector<Triplet<T>> entries,
                                   Duplicates policy = Duplicates::sum) {
        std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
            return std::tie(a.row, a.col) < std::tie(b.row, b.col);
        });
        std::vector<std::size_t> row_ptr(rows + 1, 0);
        std::vector<Index> col_idx;
        std::vector<T> values;
        col_idx.reserve(entries.size());
        values.reserve(entries.size());
        std::size_t k = 0;
        while (k < entries.size()) {
            const auto& e = entries[k];
            detail::require(e.row < rows && e.col < cols, "CsrMatrix: triplet out of range");
            T v = e.value;
            std::size_t j = k + 1;
            for (; j < entries.size() && entries[j].row == e.row && entries[j].col == e.col; ++j)
                if (policy == Duplicates::sum) v += entries[j].value;
            if (v != T{}) {
                col_idx.push_back(e.col);
                values.push_back(v);
                ++row_ptr[e.row + 1];
            }
            k = j;
        }
        std::partial_sum(row_ptr.begin(), row_ptr.end(), row_ptr.begin());
        return CsrMatrix(rows, cols, std::move(row_ptr), std::move(col_idx), std::move(values));
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t nnz() const noexcept { return col_idx_.size(); }

    std::span<const Index> row_indices(std::size_t r) const noexcept {
        return {col_idx_.data() + row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]};
    }
    std::span<const T> row_values(std::size_t r) const noexcept {
        return {values_.data() + row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]};
    }
    std::size_t row_nnz(std::size_t r) const noexcept { return row_ptr_[r + 1] - row_ptr_[r]; }

    const std::vector<std::size_t>& row_ptr() const noexcept { return row_ptr_; }
    const std::vector<Index>& col_idx() const noexcept { return col_idx_; }
    const std::vector<T>& values() const noexcept { return values_; }

    /// Binary search within a row.
    T at(std::size_t r, std::size_t c) const noexcept {
        const auto idx = row_indices(r);
        const auto it = std::lower_bound(idx.begin(), idx.end(), static_cast<Index>(c));
        if (it == idx.end() || *it != c) return T{};
        return values_[row_ptr_[r] + static_cast<std::size_t>(it - idx.begin())];
    }

    CsrMatrix transpose() const {
        std::vector<std::size_t> ptr(cols_ + 1, 0);
        for (Index c : col_idx_) ++ptr[c + 1];
        std::partial_sum(ptr.begin(), ptr.end(), ptr.begin());
        std::vector<Index> idx(nnz());
        std::vector<T> val(nnz());
        std::vector<std::size_t> cursor(ptr.begin(), ptr.end() - 1);
        for (std::size_t r = 0; r < rows_; ++r) {
            for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
                const std::size_t dst = cursor[col_idx_[k]]++;
                idx[dst] = static_cast<Index>(r);
                val[dst] = values_[k];
            }
        }
        return CsrMatrix(cols_, rows_, std::move(ptr), std::move(idx), std::move(val));
    }

    /// Elementwise conversion of the stored values.
    template <typename U, typename F>
    CsrMatrix<U> map(F&& f) const {
        std::vector<U> out(values_.size());
        std::transform(values_.begin(), values_.end(), out.begin(), f);
        return CsrMatrix<U>(rows_, cols_, row_ptr_, col_idx_, std::move(out));
    }

    DenseMatrix to_dense() const {
        DenseMatrix d = DenseMatrix::Zero(static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(cols_));
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
                d(static_cast<Eigen::Index>(r), col_idx_[k]) = static_cast<double>(values_[k]);
        return d;
    }

    friend bool operator==(const CsrMatrix&, const CsrMatrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<std::size_t> row_ptr_;
    std::vector<Index> col_idx_;
    std::vector<T> values_;
};

/// y = M x
template <typename T>
void multiply(const CsrMatrix<T>& m, const Vector& x, Vector& y) {
    detail::require(static_cast<std::size_t>(x.size()) == m.cols(), "multiply: vector length mismatch");
    y.resize(static_cast<Eigen::Index>(m.rows()));
    const auto& ptr = m.row_ptr();
    const auto& idx = m.col_idx();
    const auto& val = m.values();
    parallel_rows(m.rows(), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t r = lo; r < hi; ++r) {
            double acc = 0.0;
            for (std::size_t k = ptr[r]; k < ptr[r + 1]; ++k)
                acc += static_cast<double>(val[k]) * x[idx[k]];
            y[static_cast<Eigen::Index>(r)] = acc;
        }
    });
}

/// Y = M H for dense row-major H.
template <typename T>
DenseMatrix multiply(const CsrMatrix<T>& m, const DenseMatrix& h) {
    detail::require(static_cast<std::size_t>(h.rows()) == m.cols(), "multiply: dense operand row count mismatch");
    DenseMatrix out = DenseMatrix::Zero(static_cast<Eigen::Index>(m.rows()), h.cols());
    const auto& ptr = m.row_ptr();
    const auto& idx = m.col_idx();
    const auto& val = m.values();
    parallel_rows(m.rows(), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t r = lo; r < hi; ++r) {
            auto row = out.row(static_cast<Eigen::Index>(r));
            for (std::size_t k = ptr[r]; k < ptr[r + 1]; ++k)
                row += static_cast<double>(val[k]) * h.row(idx[k]);
        }
    });
    return out;
}

}  // namespace tinyblock
