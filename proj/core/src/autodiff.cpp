#include "hg/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hg/error.hpp"

namespace hg::ad {

namespace {

std::string shape_of(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeError(std::string(op) + ": " + shape_of(a) + " vs " + shape_of(b));
}

void accumulate(std::vector<Matrix>& grads, std::size_t id, const Matrix& delta) {
    auto dst = grads[id].data();
    const auto src = delta.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

Matrix column(std::span<const double> values) {
    return Matrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

std::vector<double> as_vector(const Matrix& m) { return {m.data().begin(), m.data().end()}; }

}  // namespace

// ---- tape bookkeeping ---------------------------------------------------------

// Backward closures capture input ids plus shared copies of the forward values
// they need, never the Tape itself, so a Tape can be moved after recording.

Var Tape::leaf(Matrix value) {
    nodes_.push_back(Node{std::move(value), true, {}});
    return Var{nodes_.size() - 1};
}

Var Tape::constant(Matrix value) {
    nodes_.push_back(Node{std::move(value), false, {}});
    return Var{nodes_.size() - 1};
}

bool Tape::any_requires_grad(std::initializer_list<Var> inputs) const {
    return std::any_of(inputs.begin(), inputs.end(), [&](Var v) { return nodes_.at(v.id).requires_grad; });
}

Var Tape::push(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
    const bool grad = any_requires_grad(inputs);
    nodes_.push_back(Node{std::move(value), grad, grad ? std::move(backward) : Backward{}});
    return Var{nodes_.size() - 1};
}

Gradients Tape::backward(Var output, const Matrix& seed) const {
    const Matrix& out = value(output);
    require_same_shape("backward seed", out, seed);
    Gradients g;
    g.grads_.reserve(nodes_.size());
    for (const auto& n : nodes_) g.grads_.emplace_back(n.value.rows(), n.value.cols());
    g.grads_[output.id] = seed;
    for (std::size_t i = output.id + 1; i-- > 0;) {
        const Node& n = nodes_[i];
        if (!n.backward) continue;
        // Copy: the closure may accumulate into other entries of the same vector.
        const Matrix grad = g.grads_[i];
        n.backward(grad, g.grads_);
    }
    return g;
}

Gradients Tape::backward(Var output) const {
    const Matrix& out = value(output);
    if (out.rows() != 1 || out.cols() != 1) throw ShapeError("backward: implicit seed needs a 1x1 output");
    return backward(output, Matrix(1, 1, 1.0));
}

// ---- dense primitives ---------------------------------------------------------

Var Tape::matmul(Var a, Var b) {
    Matrix out = hg::matmul(value(a), value(b));
    const bool ga = requires_grad(a), gb = requires_grad(b);
    auto av = std::make_shared<const Matrix>(value(a));
    auto bv = std::make_shared<const Matrix>(value(b));
    return push(std::move(out), {a, b}, [a, b, ga, gb, av, bv](const Matrix& g, std::vector<Matrix>& grads) {
        if (ga) accumulate(grads, a.id, hg::matmul(g, hg::transpose(*bv)));
        if (gb) accumulate(grads, b.id, hg::matmul(hg::transpose(*av), g));
    });
}

Var Tape::add(Var a, Var b) {
    Matrix out = hg::add(value(a), value(b));
    const bool ga = requires_grad(a), gb = requires_grad(b);
    return push(std::move(out), {a, b}, [a, b, ga, gb](const Matrix& g, std::vector<Matrix>& grads) {
        if (ga) accumulate(grads, a.id, g);
        if (gb) accumulate(grads, b.id, g);
    });
}

Var Tape::sub(Var a, Var b) {
    Matrix out = hg::sub(value(a), value(b));
    const bool ga = requires_grad(a), gb = requires_grad(b);
    return push(std::move(out), {a, b}, [a, b, ga, gb](const Matrix& g, std::vector<Matrix>& grads) {
        if (ga) accumulate(grads, a.id, g);
        if (gb) accumulate(grads, b.id, hg::scale(g, -1.0));
    });
}

Var Tape::mul(Var a, Var b) {
    Matrix out = hg::hadamard(value(a), value(b));
    const bool ga = requires_grad(a), gb = requires_grad(b);
    auto av = std::make_shared<const Matrix>(value(a));
    auto bv = std::make_shared<const Matrix>(value(b));
    return push(std::move(out), {a, b}, [a, b, ga, gb, av, bv](const Matrix& g, std::vector<Matrix>& grads) {
        if (ga) accumulate(grads, a.id, hg::hadamard(g, *bv));
        if (gb) accumulate(grads, b.id, hg::hadamard(g, *av));
    });
}

Var Tape::scale(Var a, double factor) {
    Matrix out = hg::scale(value(a), factor);
    return push(std::move(out), {a}, [a, factor](const Matrix& g, std::vector<Matrix>& grads) {
        accumulate(grads, a.id, hg::scale(g, factor));
    });
}

Var Tape::add_row(Var a, Var bias) {
    const Matrix& x = value(a);
    const Matrix& b = value(bias);
    if (b.rows() != 1 || b.cols() != x.cols())
        throw ShapeError("add_row: bias " + shape_of(b) + " does not broadcast over " + shape_of(x));
    Matrix out = x;
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += b(0, j);
    const bool ga = requires_grad(a), gb = requires_grad(bias);
    return push(std::move(out), {a, bias}, [a, bias, ga, gb](const Matrix& g, std::vector<Matrix>& grads) {
        if (ga) accumulate(grads, a.id, g);
        if (gb) {
            Matrix db(1, g.cols());
            for (std::size_t i = 0; i < g.rows(); ++i)
                for (std::size_t j = 0; j < g.cols(); ++j) db(0, j) += g(i, j);
            accumulate(grads, bias.id, db);
        }
    });
}

Var Tape::relu(Var a) {
    Matrix out = hg::relu(value(a));
    auto av = std::make_shared<const Matrix>(value(a));
    return push(std::move(out), {a}, [a, av](const Matrix& g, std::vector<Matrix>& grads) {
        Matrix d = g;
        const auto x = av->data();
        auto dd = d.data();
        for (std::size_t i = 0; i < dd.size(); ++i)
            if (!(x[i] > 0.0)) dd[i] = 0.0;
        accumulate(grads, a.id, d);
    });
}

Var Tape::concat_cols(Var a, Var b) {
    const Matrix& x = value(a);
    const Matrix& y = value(b);
    if (x.rows() != y.rows()) throw ShapeError("concat_cols: " + shape_of(x) + " vs " + shape_of(y));
    const std::size_t ca = x.cols(), cb = y.cols();
    Matrix out(x.rows(), ca + cb);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        std::copy(x.row(i).begin(), x.row(i).end(), out.row(i).begin());
        std::copy(y.row(i).begin(), y.row(i).end(), out.row(i).begin() + static_cast<long>(ca));
    }
    const bool ga = requires_grad(a), gb = requires_grad(b);
    return push(std::move(out), {a, b}, [a, b, ga, gb, ca, cb](const Matrix& g, std::vector<Matrix>& grads) {
        Matrix da(g.rows(), ca), db(g.rows(), cb);
        for (std::size_t i = 0; i < g.rows(); ++i) {
            for (std::size_t j = 0; j < ca; ++j) da(i, j) = g(i, j);
            for (std::size_t j = 0; j < cb; ++j) db(i, j) = g(i, ca + j);
        }
        if (ga) accumulate(grads, a.id, da);
        if (gb) accumulate(grads, b.id, db);
    });
}

Var Tape::merge_rows(Var prev, Var next, std::vector<char> keep_prev) {
    const Matrix& p = value(prev);
    const Matrix& n = value(next);
    require_same_shape("merge_rows", p, n);
    if (keep_prev.size() != p.rows()) throw ShapeError("merge_rows: mask length does not match rows");
    Matrix out = n;
    for (std::size_t i = 0; i < p.rows(); ++i)
        if (keep_prev[i]) std::copy(p.row(i).begin(), p.row(i).end(), out.row(i).begin());
    const bool gp = requires_grad(prev), gn = requires_grad(next);
    auto mask = std::make_shared<const std::vector<char>>(std::move(keep_prev));
    return push(std::move(out), {prev, next}, [prev, next, gp, gn, mask](const Matrix& g, std::vector<Matrix>& grads) {
        Matrix dp(g.rows(), g.cols()), dn(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.rows(); ++i) {
            Matrix& dst = (*mask)[i] ? dp : dn;
            std::copy(g.row(i).begin(), g.row(i).end(), dst.row(i).begin());
        }
        if (gp) accumulate(grads, prev.id, dp);
        if (gn) accumulate(grads, next.id, dn);
    });
}

Var Tape::softmax_rows(Var a) {
    const Matrix& x = value(a);
    Matrix out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto row = x.row(i);
        if (row.empty()) continue;
        const double peak = *std::max_element(row.begin(), row.end());
        double sum = 0.0;
        for (std::size_t j = 0; j < row.size(); ++j) sum += out(i, j) = std::exp(row[j] - peak);
        for (std::size_t j = 0; j < row.size(); ++j) out(i, j) /= sum;
    }
    auto y = std::make_shared<const Matrix>(out);
    return push(std::move(out), {a}, [a, y](const Matrix& g, std::vector<Matrix>& grads) {
        Matrix d(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.rows(); ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < g.cols(); ++j) dot += g(i, j) * (*y)(i, j);
            for (std::size_t j = 0; j < g.cols(); ++j) d(i, j) = (*y)(i, j) * (g(i, j) - dot);
        }
        accumulate(grads, a.id, d);
    });
}

Var Tape::cross_entropy(Var logits, std::vector<std::size_t> labels) {
    const Matrix& z = value(logits);
    if (labels.size() != z.rows()) throw ShapeError("cross_entropy: label count does not match rows");
    auto probs = std::make_shared<Matrix>(z.rows(), z.cols());
    double total = 0.0;
    for (std::size_t i = 0; i < z.rows(); ++i) {
        if (labels[i] >= z.cols()) throw DomainError("cross_entropy: label out of range");
        const auto row = z.row(i);
        const double peak = *std::max_element(row.begin(), row.end());
        double sum = 0.0;
        for (std::size_t j = 0; j < row.size(); ++j) sum += (*probs)(i, j) = std::exp(row[j] - peak);
        for (std::size_t j = 0; j < row.size(); ++j) (*probs)(i, j) /= sum;
        total += std::log(sum) + peak - row[labels[i]];
    }
    const double n = static_cast<double>(std::max<std::size_t>(1, z.rows()));
    auto lab = std::make_shared<const std::vector<std::size_t>>(std::move(labels));
    return push(Matrix(1, 1, total / n), {logits}, [logits, probs, lab, n](const Matrix& g, std::vector<Matrix>& grads) {
        Matrix d = *probs;
        for (std::size_t i = 0; i < d.rows(); ++i) d(i, (*lab)[i]) -= 1.0;
        accumulate(grads, logits.id, hg::scale(d, g(0, 0) / n));
    });
}

Var Tape::sum(Var a) {
    const Matrix& x = value(a);
    double total = 0.0;
    for (double v : x.data()) total += v;
    const std::size_t r = x.rows(), c = x.cols();
    return push(Matrix(1, 1, total), {a}, [a, r, c](const Matrix& g, std::vector<Matrix>& grads) {
        accumulate(grads, a.id, Matrix(r, c, g(0, 0)));
    });
}

Var Tape::batch_norm(Var z, Var gamma, Var beta, const BNParams<double>& stats, BnMode mode) {
    const Matrix& x = value(z);
    const std::size_t c = x.cols();
    const Matrix& gm = value(gamma);
    const Matrix& bt = value(beta);
    if (gm.rows() != 1 || gm.cols() != c || bt.rows() != 1 || bt.cols() != c)
        throw ShapeError("batch_norm: gamma/beta must be 1x" + std::to_string(c));
    BNParams<double> params = stats;
    params.gamma = as_vector(gm);
    params.beta = as_vector(bt);
    if (params.running_mean.size() != c) params.running_mean.assign(c, 0.0);
    if (params.running_var.size() != c) params.running_var.assign(c, 1.0);
    auto f = std::make_shared<BnForward<double>>(batch_norm_forward(x, params, mode));
    Matrix out = f->output;
    const bool gz = requires_grad(z), gg = requires_grad(gamma), gb = requires_grad(beta);
    auto gvec = std::make_shared<const std::vector<double>>(params.gamma);
    return push(std::move(out), {z, gamma, beta},
                [z, gamma, beta, gz, gg, gb, f, gvec, mode](const Matrix& g, std::vector<Matrix>& grads) {
                    const std::size_t n = g.rows(), c = g.cols();
                    Matrix dgamma(1, c), dbeta(1, c);
                    for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t j = 0; j < c; ++j) {
                            dgamma(0, j) += g(i, j) * f->normalized(i, j);
                            dbeta(0, j) += g(i, j);
                        }
                    if (gg) accumulate(grads, gamma.id, dgamma);
                    if (gb) accumulate(grads, beta.id, dbeta);
                    if (!gz) return;
                    Matrix dz(n, c);
                    for (std::size_t j = 0; j < c; ++j) {
                        const double k = (*gvec)[j] * f->inv_std[j];
                        if (mode == BnMode::eval) {
                            for (std::size_t i = 0; i < n; ++i) dz(i, j) = k * g(i, j);
                            continue;
                        }
                        const double nn = static_cast<double>(n);
                        for (std::size_t i = 0; i < n; ++i)
                            dz(i, j) = k / nn * (nn * g(i, j) - dbeta(0, j) - f->normalized(i, j) * dgamma(0, j));
                    }
                    accumulate(grads, z.id, dz);
                });
}

// ---- sparse primitives --------------------------------------------------------

Var Tape::spmm(std::shared_ptr<const Sparse<double>> a, Var x) {
    Matrix out = hg::spmm(*a, value(x));
    return push(std::move(out), {x}, [a, x](const Matrix& g, std::vector<Matrix>& grads) {
        accumulate(grads, x.id, hg::spmm(sp_transpose(*a), g));
    });
}

Var Tape::sparse_spmm(Pattern pattern, Var values, Var x) {
    const Matrix& v = value(values);
    if (v.rows() != pattern->nnz() || v.cols() != 1) throw ShapeError("sparse_spmm: values must be nnz x 1");
    Matrix out = hg::spmm(pattern->with_values(as_vector(v)), value(x));
    const bool gv = requires_grad(values), gx = requires_grad(x);
    auto vv = std::make_shared<const Matrix>(v);
    auto xv = std::make_shared<const Matrix>(value(x));
    return push(std::move(out), {values, x},
                [pattern, values, x, gv, gx, vv, xv](const Matrix& g, std::vector<Matrix>& grads) {
                    Matrix dv(vv->rows(), 1), dx(xv->rows(), xv->cols());
                    const auto off = pattern->offsets();
                    const auto idx = pattern->indices();
                    for (std::size_t r = 0; r < pattern->rows(); ++r) {
                        const auto gr = g.row(r);
                        for (std::size_t k = off[r]; k < off[r + 1]; ++k) {
                            const auto xr = xv->row(idx[k]);
                            double dot = 0.0;
                            for (std::size_t j = 0; j < gr.size(); ++j) dot += gr[j] * xr[j];
                            dv(k, 0) = dot;
                            auto dxr = dx.row(idx[k]);
                            for (std::size_t j = 0; j < gr.size(); ++j) dxr[j] += (*vv)(k, 0) * gr[j];
                        }
                    }
                    if (gv) accumulate(grads, values.id, dv);
                    if (gx) accumulate(grads, x.id, dx);
                });
}

Var Tape::gather(Var values, std::shared_ptr<const std::vector<std::size_t>> perm) {
    const Matrix& v = value(values);
    if (v.cols() != 1) throw ShapeError("gather: values must be a column");
    Matrix out(perm->size(), 1);
    for (std::size_t k = 0; k < perm->size(); ++k) {
        if ((*perm)[k] >= v.rows()) throw ShapeError("gather: index out of range");
        out(k, 0) = v((*perm)[k], 0);
    }
    const std::size_t n = v.rows();
    return push(std::move(out), {values}, [values, perm, n](const Matrix& g, std::vector<Matrix>& grads) {
        Matrix d(n, 1);
        for (std::size_t k = 0; k < perm->size(); ++k) d((*perm)[k], 0) += g(k, 0);
        accumulate(grads, values.id, d);
    });
}

Var Tape::sparse_row_softmax(Pattern pattern, Var logits) {
    const Matrix& l = value(logits);
    if (l.rows() != pattern->nnz() || l.cols() != 1) throw ShapeError("sparse_row_softmax: logits must be nnz x 1");
    Matrix out = column(hg::sparse_row_softmax<double>(*pattern, l.data()));
    auto y = std::make_shared<const Matrix>(out);
    return push(std::move(out), {logits}, [pattern, logits, y](const Matrix& g, std::vector<Matrix>& grads) {
        Matrix d(y->rows(), 1);
        const auto off = pattern->offsets();
        for (std::size_t r = 0; r < pattern->rows(); ++r) {
            double dot = 0.0;
            for (std::size_t k = off[r]; k < off[r + 1]; ++k) dot += g(k, 0) * (*y)(k, 0);
            for (std::size_t k = off[r]; k < off[r + 1]; ++k) d(k, 0) = (*y)(k, 0) * (g(k, 0) - dot);
        }
        accumulate(grads, logits.id, d);
    });
}

Var Tape::sparse_col_normalize(Pattern pattern, Var values) {
    const Matrix& v = value(values);
    if (v.rows() != pattern->nnz() || v.cols() != 1) throw ShapeError("sparse_col_normalize: values must be nnz x 1");
    Matrix out = column(hg::col_normalize(pattern->with_values(as_vector(v))).values());
    auto vv = std::make_shared<const Matrix>(v);
    return push(std::move(out), {values}, [pattern, values, vv](const Matrix& g, std::vector<Matrix>& grads) {
        const auto idx = pattern->indices();
        std::vector<double> sums(pattern->cols(), 0.0), dots(pattern->cols(), 0.0);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            sums[idx[k]] += (*vv)(k, 0);
            dots[idx[k]] += g(k, 0) * (*vv)(k, 0);
        }
        Matrix d(idx.size(), 1);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            const double s = sums[idx[k]];
            d(k, 0) = s > 0.0 ? g(k, 0) / s - dots[idx[k]] / (s * s) : g(k, 0);
        }
        accumulate(grads, values.id, d);
    });
}

Var Tape::sparse_row_normalize(Pattern pattern, Var values) {
    const Matrix& v = value(values);
    if (v.rows() != pattern->nnz() || v.cols() != 1) throw ShapeError("sparse_row_normalize: values must be nnz x 1");
    Matrix out = column(hg::row_normalize(pattern->with_values(as_vector(v))).values());
    auto vv = std::make_shared<const Matrix>(v);
    return push(std::move(out), {values}, [pattern, values, vv](const Matrix& g, std::vector<Matrix>& grads) {
        const auto off = pattern->offsets();
        Matrix d(vv->rows(), 1);
        for (std::size_t r = 0; r < pattern->rows(); ++r) {
            double s = 0.0, dot = 0.0;
            for (std::size_t k = off[r]; k < off[r + 1]; ++k) {
                s += (*vv)(k, 0);
                dot += g(k, 0) * (*vv)(k, 0);
            }
            for (std::size_t k = off[r]; k < off[r + 1]; ++k) d(k, 0) = s > 0.0 ? g(k, 0) / s - dot / (s * s) : g(k, 0);
        }
        accumulate(grads, values.id, d);
    });
}

Var Tape::slic_logits(Var x, std::shared_ptr<const Matrix> positions, Pattern pattern, Var centers,
                      double position_weight, double temperature) {
    if (!(temperature > 0.0)) throw DomainError("slic_logits: temperature must be positive");
    Matrix out = column(hg::slic_logits(value(x), *positions, *pattern, value(centers), position_weight, temperature));
    const bool gx = requires_grad(x), gc = requires_grad(centers);
    auto xv = std::make_shared<const Matrix>(value(x));
    auto cv = std::make_shared<const Matrix>(value(centers));
    return push(std::move(out), {x, centers},
                [x, centers, gx, gc, xv, cv, positions, pattern, position_weight, temperature](
                    const Matrix& g, std::vector<Matrix>& grads) {
                    const std::size_t c = xv->cols();
                    const double l2 = position_weight * position_weight;
                    Matrix dx(xv->rows(), c), dc(cv->rows(), cv->cols());
                    const auto off = pattern->offsets();
                    const auto idx = pattern->indices();
                    for (std::size_t p = 0; p < pattern->rows(); ++p) {
                        for (std::size_t k = off[p]; k < off[p + 1]; ++k) {
                            const std::size_t grp = idx[k];
                            const double w = 2.0 * g(k, 0) / temperature;
                            for (std::size_t j = 0; j < c; ++j) {
                                const double diff = (*xv)(p, j) - (*cv)(grp, j);
                                dx(p, j) -= w * diff;
                                dc(grp, j) += w * diff;
                            }
                            for (std::size_t j = 0; j < 2; ++j)
                                dc(grp, c + j) += w * l2 * ((*positions)(p, j) - (*cv)(grp, c + j));
                        }
                    }
                    if (gx) accumulate(grads, x.id, dx);
                    if (gc) accumulate(grads, centers.id, dc);
                });
}

// ---- composite builders -------------------------------------------------------

KernelVars leaf_kernels(Tape& tape, const KernelSet<double>& k) {
    KernelVars out;
    for (std::size_t d = 0; d < kNumDirections; ++d) out[d] = tape.leaf(k.weights[d]);
    return out;
}

KernelVars constant_kernels(Tape& tape, const KernelSet<double>& k) {
    KernelVars out;
    for (std::size_t d = 0; d < kNumDirections; ++d) out[d] = tape.constant(k.weights[d]);
    return out;
}

Var directional_sum(Tape& tape, const DirectionalAdjacency<double>& propagators, Var x, const KernelVars& k) {
    const std::size_t cin = tape.value(k[0]).rows();
    const std::size_t cout = tape.value(k[0]).cols();
    if (tape.value(x).cols() != cin)
        throw ShapeError("directional_sum: input has " + std::to_string(tape.value(x).cols()) +
                         " channels, kernel expects " + std::to_string(cin));
    Var out = tape.constant(Matrix(propagators[0].rows(), cout));
    for (std::size_t d = 0; d < kNumDirections; ++d) {
        if (propagators[d].nnz() == 0) continue;
        auto p = std::make_shared<const Sparse<double>>(propagators[d]);
        out = tape.add(out, tape.matmul(tape.spmm(p, x), k[d]));
    }
    return out;
}

Var conv_as_graph(Tape& tape, Var x, const GridShape& shape, const KernelVars& k, double eps) {
    if (tape.value(x).rows() != shape.pixels()) throw ShapeError("conv_as_graph: input rows do not match grid");
    return directional_sum(tape, normalized_propagators(pixel_adjacency_all<double>(shape), eps), x, k);
}

Var group_conv(Tape& tape, const GroupAdjacencySet<double>& g, Var z, const KernelVars& k, double eps) {
    if (!g.refined) throw DomainError("group_conv: adjacency is not refined");
    if (tape.value(z).rows() != g.groups()) throw ShapeError("group_conv: feature rows do not match groups");
    return directional_sum(tape, normalized_propagators(g.adjacency, eps), z, k);
}

Var pool(Tape& tape, const TapedAssignment& s, Var x) {
    if (tape.value(x).rows() != s.pattern->rows()) throw ShapeError("pool: assignment rows do not match features");
    auto perm = std::make_shared<const std::vector<std::size_t>>(transpose_permutation(*s.pattern));
    auto transposed = std::make_shared<const Sparse<double>>(sp_transpose(*s.pattern));
    const Var normalized = tape.sparse_col_normalize(s.pattern, s.values);
    return tape.sparse_spmm(transposed, tape.gather(normalized, perm), x);
}

Var unpool(Tape& tape, const TapedAssignment& s, Var z) {
    if (tape.value(z).rows() != s.pattern->cols()) throw ShapeError("unpool: assignment groups do not match features");
    return tape.sparse_spmm(s.pattern, tape.sparse_row_normalize(s.pattern, s.values), z);
}

LayerVars leaf_layer(Tape& tape, const HGLayer<double>& layer) {
    LayerVars v;
    v.kernels = leaf_kernels(tape, layer.kernels);
    const std::size_t c = layer.bn.channels();
    v.gamma = tape.leaf(Matrix(1, c, layer.bn.gamma));
    v.beta = tape.leaf(Matrix(1, c, layer.bn.beta));
    return v;
}

Var hg_module_forward(Tape& tape, Var x, const TapedAssignment& s, const GroupAdjacencySet<double>& g,
                      const HGConvModule<double>& m, const std::vector<LayerVars>& layers, BnMode mode) {
    m.validate();
    if (layers.size() != m.layers.size()) throw ShapeError("hg_module_forward: layer variable count mismatch");
    Var z = pool(tape, s, x);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        Var c = group_conv(tape, g, z, layers[l].kernels);
        if (m.batch_norm) c = tape.batch_norm(c, layers[l].gamma, layers[l].beta, m.layers[l].bn, mode);
        z = tape.relu(c);
    }
    return unpool(tape, s, z);
}

TapedSlic slic_step(Tape& tape, Var x, const GridShape& shape, const CenterSet<double>& centers, Pattern pattern,
                    const ClusterConfig& cfg, std::optional<Var> logit_offset) {
    auto positions = std::make_shared<const Matrix>(pixel_positions<double>(shape));
    Var logits = tape.slic_logits(x, positions, pattern, tape.constant(centers.vectors), cfg.position_weight,
                                  cfg.temperature);
    if (logit_offset) logits = tape.add(logits, *logit_offset);
    const Var values = tape.sparse_row_softmax(pattern, logits);
    return TapedSlic{TapedAssignment{std::move(pattern), values}, logits, centers};
}

TapedSlic diff_slic(Tape& tape, Var x, const GridShape& shape, const CenterSet<double>& initial,
                    const ClusterConfig& cfg, bool unrolled, std::optional<Var> logit_offset) {
    cfg.validate();
    const Matrix& xv = tape.value(x);
    if (xv.rows() != shape.pixels()) throw ShapeError("diff_slic: feature rows do not match grid");
    if (initial.vectors.cols() != xv.cols() + 2) throw ShapeError("diff_slic: center set does not match features");
    auto positions = std::make_shared<const Matrix>(pixel_positions<double>(shape));

    if (!unrolled) {
        const SlicResult<double> untaped = hg::diff_slic(xv, shape, initial, cfg);
        auto pattern = std::make_shared<const Sparse<double>>(
            slic_candidates(*positions, untaped.assignment_centers, cfg.candidates_per_pixel));
        return slic_step(tape, x, shape, untaped.assignment_centers, pattern, cfg, logit_offset);
    }

    const Var augmented = tape.concat_cols(x, tape.constant(*positions));
    Var centers = tape.constant(initial.vectors);
    for (std::size_t it = 0;; ++it) {
        CenterSet<double> current{initial.seeds, tape.value(centers)};
        auto pattern =
            std::make_shared<const Sparse<double>>(slic_candidates(*positions, current, cfg.candidates_per_pixel));
        Var logits = tape.slic_logits(x, positions, pattern, centers, cfg.position_weight, cfg.temperature);
        const bool last = it + 1 == cfg.iterations;
        if (last && logit_offset) logits = tape.add(logits, *logit_offset);
        const Var values = tape.sparse_row_softmax(pattern, logits);
        if (last) return TapedSlic{TapedAssignment{pattern, values}, logits, std::move(current)};

        std::vector<double> mass(pattern->cols(), 0.0);
        const Matrix& sv = tape.value(values);
        for (std::size_t k = 0; k < pattern->nnz(); ++k) mass[pattern->indices()[k]] += sv(k, 0);
        std::vector<char> keep(mass.size());
        for (std::size_t g = 0; g < mass.size(); ++g) keep[g] = !(mass[g] >= kEmptyGroupMass);
        auto perm = std::make_shared<const std::vector<std::size_t>>(transpose_permutation(*pattern));
        auto transposed = std::make_shared<const Sparse<double>>(sp_transpose(*pattern));
        const Var pooled = tape.sparse_spmm(transposed, tape.gather(tape.sparse_col_normalize(pattern, values), perm),
                                            augmented);
        centers = tape.merge_rows(centers, pooled, std::move(keep));
    }
}

// ---- pipelines ----------------------------------------------------------------

TapedRun forward_with_tape(const Pipeline& p, std::span<const Matrix> inputs) {
    TapedRun run;
    run.inputs.reserve(inputs.size());
    for (const auto& m : inputs) run.inputs.push_back(run.tape.leaf(m));
    if (p.build) {
        run.output = p.build(run.tape, run.inputs);
    } else {
        if (run.inputs.empty()) throw ShapeError("forward_with_tape: empty pipeline needs an input");
        run.output = run.inputs.front();
    }
    return run;
}

TapedRun forward_with_tape(const Pipeline& p) { return forward_with_tape(p, p.params); }

namespace {

double scalar_value(const TapedRun& run) {
    const Matrix& out = run.tape.value(run.output);
    if (out.rows() != 1 || out.cols() != 1) throw ShapeError("gradcheck: pipeline output must be 1x1");
    const double v = out(0, 0);
    if (!std::isfinite(v)) throw NumericError("gradcheck: non-finite pipeline value");
    return v;
}

}  // namespace

GradcheckReport gradcheck(const Pipeline& p, double h) {
    if (!(h > 0.0)) throw DomainError("gradcheck: step must be positive");
    const TapedRun base = forward_with_tape(p);
    scalar_value(base);
    const Gradients grads = base.tape.backward(base.output);

    GradcheckReport report;
    std::vector<Matrix> point = p.params;
    for (std::size_t i = 0; i < point.size(); ++i) {
        const std::string name = i < p.param_names.size() ? p.param_names[i] : "param" + std::to_string(i);
        GradcheckEntry entry{name, 0.0, 0.0};
        const Matrix& analytic = grads[base.inputs[i]];
        for (std::size_t j = 0; j < point[i].size(); ++j) {
            const double a = analytic.data()[j];
            if (!std::isfinite(a)) throw NumericError("gradcheck: non-finite analytic gradient for " + name);
            const double saved = point[i].data()[j];
            point[i].data()[j] = saved + h;
            const double up = scalar_value(forward_with_tape(p, point));
            point[i].data()[j] = saved - h;
            const double down = scalar_value(forward_with_tape(p, point));
            point[i].data()[j] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
            entry.max_abs_analytic = std::max(entry.max_abs_analytic, std::abs(a));
            if (rel > entry.max_rel_error) entry.max_rel_error = rel;
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.offending_param = name;
                report.offending_index = j;
            }
        }
        report.per_param.push_back(entry);
    }
    return report;
}

}  // namespace hg::ad
