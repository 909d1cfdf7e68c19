#include "hg/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "hg/error.hpp"

namespace hg {

namespace {

std::string dims(std::size_t r, std::size_t c) {
    return std::to_string(r) + "x" + std::to_string(c);
}

}  // namespace

// ---- Dense ------------------------------------------------------------------

template <typename T>
Dense<T>::Dense(std::size_t rows, std::size_t cols, T fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

template <typename T>
Dense<T>::Dense(std::size_t rows, std::size_t cols, std::vector<T> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols)
        throw ShapeError("Dense: data length " + std::to_string(data_.size()) + " does not match " +
                         dims(rows, cols));
    if (!all_finite()) throw DomainError("Dense: non-finite entry");
}

template <typename T>
Dense<T> Dense<T>::from_rows(std::initializer_list<std::initializer_list<T>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<T> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw ShapeError("Dense::from_rows: ragged rows");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Dense(r, c, std::move(data));
}

template <typename T>
bool Dense<T>::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

// ---- Sparse -----------------------------------------------------------------

template <typename T>
Sparse<T>::Sparse(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), offsets_(rows + 1, 0) {}

template <typename T>
Sparse<T> Sparse<T>::from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet<T>> entries) {
    for (const auto& e : entries) {
        if (e.row >= rows || e.col >= cols)
            throw ShapeError("Sparse::from_triplets: entry (" + std::to_string(e.row) + "," +
                             std::to_string(e.col) + ") outside " + dims(rows, cols));
        if (!std::isfinite(e.value)) throw DomainError("Sparse::from_triplets: non-finite value");
    }
    std::sort(entries.begin(), entries.end(), [](const Triplet<T>& a, const Triplet<T>& b) {
        return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    Sparse out(rows, cols);
    out.indices_.reserve(entries.size());
    out.values_.reserve(entries.size());
    std::size_t k = 0;
    for (std::size_t r = 0; r < rows; ++r) {
        while (k < entries.size() && entries[k].row == r) {
            const std::size_t c = entries[k].col;
            T sum = T(0);
            while (k < entries.size() && entries[k].row == r && entries[k].col == c) sum += entries[k++].value;
            if (sum != T(0)) {
                out.indices_.push_back(c);
                out.values_.push_back(sum);
            }
        }
        out.offsets_[r + 1] = out.indices_.size();
    }
    return out;
}

template <typename T>
Sparse<T> Sparse<T>::from_csr(std::size_t rows, std::size_t cols, std::vector<std::size_t> offsets,
                              std::vector<std::size_t> indices, std::vector<T> values) {
    if (offsets.size() != rows + 1 || offsets.front() != 0 || offsets.back() != indices.size() ||
        indices.size() != values.size())
        throw ShapeError("Sparse::from_csr: inconsistent array lengths for " + dims(rows, cols));
    for (std::size_t r = 0; r < rows; ++r) {
        if (offsets[r] > offsets[r + 1]) throw ShapeError("Sparse::from_csr: offsets not monotone");
        for (std::size_t k = offsets[r]; k < offsets[r + 1]; ++k) {
            if (indices[k] >= cols) throw ShapeError("Sparse::from_csr: column index out of range");
            if (k > offsets[r] && indices[k] <= indices[k - 1])
                throw ShapeError("Sparse::from_csr: column indices not strictly increasing");
            if (!std::isfinite(values[k])) throw DomainError("Sparse::from_csr: non-finite value");
        }
    }
    Sparse out(rows, cols);
    out.indices_.reserve(indices.size());
    out.values_.reserve(values.size());
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t k = offsets[r]; k < offsets[r + 1]; ++k) {
            if (values[k] == T(0)) continue;
            out.indices_.push_back(indices[k]);
            out.values_.push_back(values[k]);
        }
        out.offsets_[r + 1] = out.indices_.size();
    }
    return out;
}

template <typename T>
Sparse<T> Sparse<T>::from_dense(const Dense<T>& d) {
    Sparse out(d.rows(), d.cols());
    for (std::size_t r = 0; r < d.rows(); ++r) {
        for (std::size_t c = 0; c < d.cols(); ++c) {
            if (d(r, c) == T(0)) continue;
            out.indices_.push_back(c);
            out.values_.push_back(d(r, c));
        }
        out.offsets_[r + 1] = out.indices_.size();
    }
    return out;
}

template <typename T>
Sparse<T> Sparse<T>::identity(std::size_t n) {
    Sparse out(n, n);
    out.indices_.resize(n);
    out.values_.assign(n, T(1));
    std::iota(out.indices_.begin(), out.indices_.end(), std::size_t{0});
    std::iota(out.offsets_.begin(), out.offsets_.end(), std::size_t{0});
    return out;
}

template <typename T>
Sparse<T> Sparse<T>::with_values(std::vector<T> values) const {
    if (values.size() != values_.size())
        throw ShapeError("Sparse::with_values: expected " + std::to_string(values_.size()) + " values, got " +
                         std::to_string(values.size()));
    Sparse out = *this;
    out.values_ = std::move(values);
    return out;
}

template <typename T>
T Sparse<T>::at(std::size_t r, std::size_t c) const {
    if (r >= rows_ || c >= cols_) throw ShapeError("Sparse::at: index outside " + dims(rows_, cols_));
    const auto idx = row_indices(r);
    const auto it = std::lower_bound(idx.begin(), idx.end(), c);
    if (it == idx.end() || *it != c) return T(0);
    return values_[offsets_[r] + static_cast<std::size_t>(it - idx.begin())];
}

template <typename T>
Dense<T> Sparse<T>::to_dense() const {
    Dense<T> out(rows_, cols_);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t k = offsets_[r]; k < offsets_[r + 1]; ++k) out(r, indices_[k]) = values_[k];
    return out;
}

// ---- products ---------------------------------------------------------------

template <typename T>
Dense<T> spmm(const Sparse<T>& a, const Dense<T>& b) {
    if (a.cols() != b.rows())
        throw ShapeError("spmm: " + dims(a.rows(), a.cols()) + " times " + dims(b.rows(), b.cols()));
    Dense<T> out(a.rows(), b.cols());
    const auto idx = a.indices();
    const auto val = a.values();
    const auto off = a.offsets();
    for (std::size_t r = 0; r < a.rows(); ++r) {
        auto dst = out.row(r);
        for (std::size_t k = off[r]; k < off[r + 1]; ++k) {
            const T v = val[k];
            const auto src = b.row(idx[k]);
            for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += v * src[c];
        }
    }
    return out;
}

template <typename T>
std::vector<std::size_t> transpose_permutation(const Sparse<T>& a) {
    std::vector<std::size_t> count(a.cols() + 1, 0);
    for (std::size_t c : a.indices()) ++count[c + 1];
    std::partial_sum(count.begin(), count.end(), count.begin());
    std::vector<std::size_t> perm(a.nnz());
    const auto off = a.offsets();
    const auto idx = a.indices();
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t k = off[r]; k < off[r + 1]; ++k) perm[count[idx[k]]++] = k;
    return perm;
}

template <typename T>
Sparse<T> sp_transpose(const Sparse<T>& a) {
    std::vector<std::size_t> offsets(a.cols() + 1, 0);
    for (std::size_t c : a.indices()) ++offsets[c + 1];
    std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
    std::vector<std::size_t> cursor(offsets.begin(), offsets.end() - 1);
    std::vector<std::size_t> indices(a.nnz());
    std::vector<T> values(a.nnz());
    const auto off = a.offsets();
    const auto idx = a.indices();
    const auto val = a.values();
    for (std::size_t r = 0; r < a.rows(); ++r) {
        for (std::size_t k = off[r]; k < off[r + 1]; ++k) {
            const std::size_t dst = cursor[idx[k]]++;
            indices[dst] = r;
            values[dst] = val[k];
        }
    }
    // Rows are visited in order, so each transposed row is already sorted.
    Sparse<T> pattern = Sparse<T>::from_csr(a.cols(), a.rows(), std::move(offsets), std::move(indices),
                                            std::vector<T>(values.size(), T(1)));
    return pattern.with_values(std::move(values));
}

template <typename T>
Sparse<T> spgemm(const Sparse<T>& a, const Sparse<T>& b) {
    if (a.cols() != b.rows())
        throw ShapeError("spgemm: " + dims(a.rows(), a.cols()) + " times " + dims(b.rows(), b.cols()));
    std::vector<T> accum(b.cols(), T(0));
    std::vector<char> touched(b.cols(), 0);
    std::vector<std::size_t> cols_in_row;
    std::vector<std::size_t> offsets{0};
    std::vector<std::size_t> indices;
    std::vector<T> values;
    offsets.reserve(a.rows() + 1);
    for (std::size_t r = 0; r < a.rows(); ++r) {
        cols_in_row.clear();
        const auto ai = a.row_indices(r);
        const auto av = a.row_values(r);
        for (std::size_t k = 0; k < ai.size(); ++k) {
            const auto bi = b.row_indices(ai[k]);
            const auto bv = b.row_values(ai[k]);
            for (std::size_t m = 0; m < bi.size(); ++m) {
                if (!touched[bi[m]]) {
                    touched[bi[m]] = 1;
                    cols_in_row.push_back(bi[m]);
                }
                accum[bi[m]] += av[k] * bv[m];
            }
        }
        std::sort(cols_in_row.begin(), cols_in_row.end());
        for (std::size_t c : cols_in_row) {
            if (accum[c] != T(0)) {
                indices.push_back(c);
                values.push_back(accum[c]);
            }
            accum[c] = T(0);
            touched[c] = 0;
        }
        offsets.push_back(indices.size());
    }
    return Sparse<T>::from_csr(a.rows(), b.cols(), std::move(offsets), std::move(indices), std::move(values));
}

template <typename T>
Sparse<T> sp_coarsen(const Sparse<T>& s, const Sparse<T>& a) {
    if (a.rows() != a.cols() || s.rows() != a.rows())
        throw ShapeError("sp_coarsen: assignment " + dims(s.rows(), s.cols()) + " vs adjacency " +
                         dims(a.rows(), a.cols()));
    return spgemm(sp_transpose(s), spgemm(a, s));
}

template <typename T>
Dense<T> matmul(const Dense<T>& a, const Dense<T>& b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul: " + dims(a.rows(), a.cols()) + " times " + dims(b.rows(), b.cols()));
    Dense<T> out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto dst = out.row(i);
        const auto lhs = a.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const T v = lhs[k];
            const auto src = b.row(k);
            for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += v * src[j];
        }
    }
    return out;
}

template <typename T>
Dense<T> transpose(const Dense<T>& a) {
    Dense<T> out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
    return out;
}

namespace {

template <typename T, typename Op>
Dense<T> elementwise(const char* name, const Dense<T>& a, const Dense<T>& b, Op op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeError(std::string(name) + ": " + dims(a.rows(), a.cols()) + " vs " + dims(b.rows(), b.cols()));
    Dense<T> out(a.rows(), a.cols());
    const auto x = a.data();
    const auto y = b.data();
    auto z = out.data();
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = op(x[i], y[i]);
    return out;
}

}  // namespace

template <typename T>
Dense<T> add(const Dense<T>& a, const Dense<T>& b) {
    return elementwise("add", a, b, [](T x, T y) { return x + y; });
}

template <typename T>
Dense<T> sub(const Dense<T>& a, const Dense<T>& b) {
    return elementwise("sub", a, b, [](T x, T y) { return x - y; });
}

template <typename T>
Dense<T> hadamard(const Dense<T>& a, const Dense<T>& b) {
    return elementwise("hadamard", a, b, [](T x, T y) { return x * y; });
}

template <typename T>
Dense<T> scale(const Dense<T>& a, T factor) {
    Dense<T> out = a;
    for (T& v : out.data()) v *= factor;
    return out;
}

// ---- normalizations ---------------------------------------------------------

namespace {

template <typename T>
void reject_negative(const char* name, const Sparse<T>& s) {
    for (T v : s.values())
        if (v < T(0)) throw DomainError(std::string(name) + ": negative entry");
}

}  // namespace

template <typename T>
Sparse<T> col_normalize(const Sparse<T>& s) {
    reject_negative("col_normalize", s);
    std::vector<T> sums(s.cols(), T(0));
    const auto idx = s.indices();
    const auto val = s.values();
    for (std::size_t k = 0; k < val.size(); ++k) sums[idx[k]] += val[k];
    std::vector<T> out(val.begin(), val.end());
    for (std::size_t k = 0; k < out.size(); ++k)
        if (sums[idx[k]] > T(0)) out[k] /= sums[idx[k]];
    return s.with_values(std::move(out));
}

template <typename T>
Sparse<T> row_normalize(const Sparse<T>& s) {
    reject_negative("row_normalize", s);
    std::vector<T> out(s.values().begin(), s.values().end());
    const auto off = s.offsets();
    for (std::size_t r = 0; r < s.rows(); ++r) {
        T sum = T(0);
        for (std::size_t k = off[r]; k < off[r + 1]; ++k) sum += out[k];
        if (sum > T(0))
            for (std::size_t k = off[r]; k < off[r + 1]; ++k) out[k] /= sum;
    }
    return s.with_values(std::move(out));
}

template <typename T>
Sparse<T> inverse_scale_rows(const Diagonal<T>& d, const Sparse<T>& a) {
    if (d.size() != a.rows())
        throw ShapeError("inverse_scale_rows: diagonal of size " + std::to_string(d.size()) + " vs " +
                         dims(a.rows(), a.cols()));
    std::vector<T> out(a.values().begin(), a.values().end());
    const auto off = a.offsets();
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t k = off[r]; k < off[r + 1]; ++k) out[k] /= d[r];
    return a.with_values(std::move(out));
}

template <typename T>
T max_abs_diff(const Dense<T>& a, const Dense<T>& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeError("max_abs_diff: " + dims(a.rows(), a.cols()) + " vs " + dims(b.rows(), b.cols()));
    T worst = T(0);
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
    return worst;
}

#define HG_INSTANTIATE_LINALG(T)                                                  \
    template class Dense<T>;                                                      \
    template class Sparse<T>;                                                     \
    template Dense<T> spmm(const Sparse<T>&, const Dense<T>&);                    \
    template Sparse<T> sp_transpose(const Sparse<T>&);                            \
    template std::vector<std::size_t> transpose_permutation(const Sparse<T>&);    \
    template Sparse<T> spgemm(const Sparse<T>&, const Sparse<T>&);                \
    template Sparse<T> sp_coarsen(const Sparse<T>&, const Sparse<T>&);            \
    template Dense<T> matmul(const Dense<T>&, const Dense<T>&);                   \
    template Dense<T> transpose(const Dense<T>&);                                 \
    template Dense<T> add(const Dense<T>&, const Dense<T>&);                      \
    template Dense<T> sub(const Dense<T>&, const Dense<T>&);                      \
    template Dense<T> hadamard(const Dense<T>&, const Dense<T>&);                 \
    template Dense<T> scale(const Dense<T>&, T);                                  \
    template Sparse<T> col_normalize(const Sparse<T>&);                           \
    template Sparse<T> row_normalize(const Sparse<T>&);                           \
    template Sparse<T> inverse_scale_rows(const Diagonal<T>&, const Sparse<T>&);  \
    template T max_abs_diff(const Dense<T>&, const Dense<T>&);

HG_INSTANTIATE_LINALG(float)
HG_INSTANTIATE_LINALG(double)

#undef HG_INSTANTIATE_LINALG

}  // namespace hg
