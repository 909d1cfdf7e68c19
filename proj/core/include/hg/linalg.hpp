#pragma once

// Dense and compressed-sparse-row containers plus the small set of products
// and normalizations the rest of the library is composed from.
//
// Storage is row-major for Dense and CSR for Sparse. Both are templated on the
// scalar type; float is the default working precision and double mirrors it
// for finite-difference checks. Explicit instantiations live in linalg.cpp.

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace hg {

template <typename T>
class Dense {
public:
    using value_type = T;

    Dense() = default;
    Dense(std::size_t rows, std::size_t cols, T fill = T(0));
    /// Takes ownership of row-major data; throws ShapeError on size mismatch and
    /// DomainError on non-finite entries.
    Dense(std::size_t rows, std::size_t cols, std::vector<T> data);

    static Dense from_rows(std::initializer_list<std::initializer_list<T>> rows);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }

    T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const T> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }

    bool all_finite() const noexcept;

    template <typename U>
    Dense<U> cast() const {
        Dense<U> out(rows_, cols_);
        for (std::size_t i = 0; i < data_.size(); ++i) out.data()[i] = static_cast<U>(data_[i]);
        return out;
    }

    friend bool operator==(const Dense& a, const Dense& b) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

template <typename T>
struct Triplet {
    std::size_t row;
    std::size_t col;
    T value;
};

/// CSR matrix. Column indices are strictly increasing within a row and stored
/// values are nonzero, except for matrices built with `with_values`, which keep
/// a fixed pattern regardless of the values placed in it.
template <typename T>
class Sparse {
public:
    using value_type = T;

    Sparse() = default;
    /// Empty (all-zero) rows x cols matrix.
    Sparse(std::size_t rows, std::size_t cols);

    /// Duplicates are summed, zeros dropped, entries sorted.
    static Sparse from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet<T>> entries);
    /// Validates the CSR invariants and prunes explicit zeros.
    static Sparse from_csr(std::size_t rows, std::size_t cols, std::vector<std::size_t> offsets,
                           std::vector<std::size_t> indices, std::vector<T> values);
    static Sparse from_dense(const Dense<T>& d);
    static Sparse identity(std::size_t n);

    /// Same sparsity pattern, new values (length nnz). Zeros are kept as
    /// structural entries so that value-only updates never move the pattern.
    Sparse with_values(std::vector<T> values) const;

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t nnz() const noexcept { return values_.size(); }

    std::span<const std::size_t> offsets() const noexcept { return offsets_; }
    std::span<const std::size_t> indices() const noexcept { return indices_; }
    std::span<const T> values() const noexcept { return values_; }

    std::span<const std::size_t> row_indices(std::size_t r) const noexcept {
        return {indices_.data() + offsets_[r], offsets_[r + 1] - offsets_[r]};
    }
    std::span<const T> row_values(std::size_t r) const noexcept {
        return {values_.data() + offsets_[r], offsets_[r + 1] - offsets_[r]};
    }

    /// Value at (r, c), zero when not stored.
    T at(std::size_t r, std::size_t c) const;
    Dense<T> to_dense() const;

    template <typename U>
    Sparse<U> cast() const {
        std::vector<U> v(values_.begin(), values_.end());
        return Sparse<U>::from_csr(rows_, cols_, offsets_, indices_, std::move(v));
    }

    friend bool operator==(const Sparse& a, const Sparse& b) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<std::size_t> offsets_{0};
    std::vector<std::size_t> indices_;
    std::vector<T> values_;
};

template <typename T>
class Diagonal {
public:
    Diagonal() = default;
    explicit Diagonal(std::vector<T> entries) : entries_(std::move(entries)) {}

    std::size_t size() const noexcept { return entries_.size(); }
    T operator[](std::size_t i) const noexcept { return entries_[i]; }
    std::span<const T> entries() const noexcept { return entries_; }

private:
    std::vector<T> entries_;
};

using DenseMatrix = Dense<float>;
using SparseMatrix = Sparse<float>;
using DiagonalMatrix = Diagonal<float>;
using DenseMatrix64 = Dense<double>;
using SparseMatrix64 = Sparse<double>;
using DiagonalMatrix64 = Diagonal<double>;

// ---- products ---------------------------------------------------------------

template <typename T>
Dense<T> spmm(const Sparse<T>& a, const Dense<T>& b);

template <typename T>
Sparse<T> sp_transpose(const Sparse<T>& a);

/// Permutation taking a's CSR value order to the value order of sp_transpose(a):
/// transposed.values()[k] == a.values()[perm[k]].
template <typename T>
std::vector<std::size_t> transpose_permutation(const Sparse<T>& a);

/// Sparse x sparse product (row-wise Gustavson accumulation).
template <typename T>
Sparse<T> spgemm(const Sparse<T>& a, const Sparse<T>& b);

/// S^T A S, the coarsening of an N x N adjacency onto G groups.
template <typename T>
Sparse<T> sp_coarsen(const Sparse<T>& s, const Sparse<T>& a);

template <typename T>
Dense<T> matmul(const Dense<T>& a, const Dense<T>& b);

template <typename T>
Dense<T> transpose(const Dense<T>& a);

template <typename T>
Dense<T> add(const Dense<T>& a, const Dense<T>& b);

template <typename T>
Dense<T> sub(const Dense<T>& a, const Dense<T>& b);

template <typename T>
Dense<T> hadamard(const Dense<T>& a, const Dense<T>& b);

template <typename T>
Dense<T> scale(const Dense<T>& a, T factor);

// ---- normalizations ---------------------------------------------------------

/// Divides every column with positive sum by that sum; zero columns stay zero.
/// Negative entries are rejected with DomainError.
template <typename T>
Sparse<T> col_normalize(const Sparse<T>& s);

template <typename T>
Sparse<T> row_normalize(const Sparse<T>& s);

/// D^-1 A: row i of `a` divided by d[i].
template <typename T>
Sparse<T> inverse_scale_rows(const Diagonal<T>& d, const Sparse<T>& a);

template <typename T>
T max_abs_diff(const Dense<T>& a, const Dense<T>& b);

}  // namespace hg
