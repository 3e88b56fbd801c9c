#pragma once

#include "rolemix/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

namespace rolemix {

// Policy for a masked softmax whose active set is empty. Routing opts into
// `all_zero` (pass-through blocks); everything else treats it as an error.
enum class EmptyActive { error, all_zero };

namespace detail {

template <typename Scalar>
void check_same_shape(const Mat<Scalar>& a, const Mat<Scalar>& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
    }
}

template <typename Scalar>
Scalar stable_sigmoid(Scalar x) {
    Scalar y;
    if (x >= Scalar(0)) {
        y = Scalar(1) / (Scalar(1) + std::exp(-x));
    } else {
        Scalar e = std::exp(x);
        y = e / (Scalar(1) + e);
    }
    // Keep the documented open-interval range even where exp saturates.
    if (y >= Scalar(1)) y = std::nextafter(Scalar(1), Scalar(0));
    if (y <= Scalar(0)) y = std::numeric_limits<Scalar>::denorm_min();
    return y;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul: inner dimensions disagree " + shape_str(a.value()) + " * " +
                                    shape_str(b.value()));
    }
    Mat<Scalar> out = a.value() * b.value();
    auto an = a.node(), bn = b.node();
    return Tensor<Scalar>::make_op(std::move(out), "matmul", {an, bn}, [an, bn](auto& self) {
        Tensor<Scalar>::accum(an, self.grad * bn->value.transpose());
        Tensor<Scalar>::accum(bn, an->value.transpose() * self.grad);
    });
}

// a * b^T; the common projection form y = x * W^T.
template <typename Scalar>
Tensor<Scalar> matmul_nt(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    if (a.cols() != b.cols()) {
        throw std::invalid_argument("matmul_nt: inner dimensions disagree " + shape_str(a.value()) + " * " +
                                    shape_str(b.value()) + "^T");
    }
    Mat<Scalar> out = a.value() * b.value().transpose();
    auto an = a.node(), bn = b.node();
    return Tensor<Scalar>::make_op(std::move(out), "matmul_nt", {an, bn}, [an, bn](auto& self) {
        Tensor<Scalar>::accum(an, self.grad * bn->value);
        Tensor<Scalar>::accum(bn, self.grad.transpose() * an->value);
    });
}

template <typename Scalar>
Tensor<Scalar> transpose(const Tensor<Scalar>& x) {
    Mat<Scalar> out = x.value().transpose();
    auto xn = x.node();
    return Tensor<Scalar>::make_op(std::move(out), "transpose", {xn},
                                   [xn](auto& self) { Tensor<Scalar>::accum(xn, self.grad.transpose()); });
}

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    detail::check_same_shape(a.value(), b.value(), "add");
    Mat<Scalar> out = a.value() + b.value();
    auto an = a.node(), bn = b.node();
    return Tensor<Scalar>::make_op(std::move(out), "add", {an, bn}, [an, bn](auto& self) {
        Tensor<Scalar>::accum(an, self.grad);
        Tensor<Scalar>::accum(bn, self.grad);
    });
}

// x [T x d] + row vector [1 x d], broadcast over rows (bias add).
template <typename Scalar>
Tensor<Scalar> add_rowvec(const Tensor<Scalar>& x, const Tensor<Scalar>& row) {
    if (row.rows() != 1 || row.cols() != x.cols()) {
        throw std::invalid_argument("add_rowvec: expected [1x" + std::to_string(x.cols()) + "], got " +
                                    shape_str(row.value()));
    }
    Mat<Scalar> out = x.value().rowwise() + row.value().row(0);
    auto xn = x.node(), rn = row.node();
    return Tensor<Scalar>::make_op(std::move(out), "add_rowvec", {xn, rn}, [xn, rn](auto& self) {
        Tensor<Scalar>::accum(xn, self.grad);
        Tensor<Scalar>::accum(rn, self.grad.colwise().sum());
    });
}

template <typename Scalar>
Tensor<Scalar> hadamard(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    detail::check_same_shape(a.value(), b.value(), "hadamard");
    Mat<Scalar> out = (a.value().array() * b.value().array()).matrix();
    auto an = a.node(), bn = b.node();
    return Tensor<Scalar>::make_op(std::move(out), "hadamard", {an, bn}, [an, bn](auto& self) {
        Tensor<Scalar>::accum(an, (self.grad.array() * bn->value.array()).matrix());
        Tensor<Scalar>::accum(bn, (self.grad.array() * an->value.array()).matrix());
    });
}

template <typename Scalar>
Tensor<Scalar> sum_all(const Tensor<Scalar>& x) {
    Mat<Scalar> out(1, 1);
    out(0, 0) = x.value().sum();
    auto xn = x.node();
    return Tensor<Scalar>::make_op(std::move(out), "sum_all", {xn}, [xn](auto& self) {
        Tensor<Scalar>::accum(xn, Mat<Scalar>::Constant(xn->value.rows(), xn->value.cols(), self.grad(0, 0)));
    });
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& x, double s) {
    Mat<Scalar> out = x.value() * Scalar(s);
    auto xn = x.node();
    return Tensor<Scalar>::make_op(std::move(out), "scale", {xn}, [xn, s](auto& self) {
        Tensor<Scalar>::accum(xn, self.grad * Scalar(s));
    });
}

// y = x * w(flat_index): scales a whole matrix by one entry of another tensor.
// Routing uses this to mix adapter outputs by gate weight.
template <typename Scalar>
Tensor<Scalar> scale_by_entry(const Tensor<Scalar>& x, const Tensor<Scalar>& w, Index flat_index) {
    if (flat_index < 0 || flat_index >= w.size()) {
        throw std::invalid_argument("scale_by_entry: index " + std::to_string(flat_index) + " out of range for " +
                                    shape_str(w.value()));
    }
    Index r = flat_index / w.cols(), c = flat_index % w.cols();
    Mat<Scalar> out = x.value() * w.value()(r, c);
    auto xn = x.node(), wn = w.node();
    return Tensor<Scalar>::make_op(std::move(out), "scale_by_entry", {xn, wn}, [xn, wn, r, c](auto& self) {
        Scalar wk = wn->value(r, c);
        Tensor<Scalar>::accum(xn, self.grad * wk);
        if (wn->requires_grad) {
            wn->ensure_grad();
            wn->grad(r, c) += (self.grad.array() * xn->value.array()).sum();
        }
    });
}

template <typename Scalar>
Tensor<Scalar> slice_cols(const Tensor<Scalar>& x, Index start, Index count) {
    if (start < 0 || count < 0 || start + count > x.cols()) {
        throw std::invalid_argument("slice_cols: range [" + std::to_string(start) + ", " +
                                    std::to_string(start + count) + ") out of " + shape_str(x.value()));
    }
    Mat<Scalar> out = x.value().middleCols(start, count);
    auto xn = x.node();
    return Tensor<Scalar>::make_op(std::move(out), "slice_cols", {xn}, [xn, start, count](auto& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        xn->grad.middleCols(start, count) += self.grad;
    });
}

template <typename Scalar>
Tensor<Scalar> concat_cols(const std::vector<Tensor<Scalar>>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty input");
    Index rows = parts[0].rows(), cols = 0;
    for (const auto& p : parts) {
        if (p.rows() != rows) {
            throw std::invalid_argument("concat_cols: row mismatch " + shape_str(parts[0].value()) + " vs " +
                                        shape_str(p.value()));
        }
        cols += p.cols();
    }
    Mat<Scalar> out(rows, cols);
    std::vector<typename Tensor<Scalar>::NodePtr> nodes;
    std::vector<Index> offsets;
    Index at = 0;
    for (const auto& p : parts) {
        out.middleCols(at, p.cols()) = p.value();
        nodes.push_back(p.node());
        offsets.push_back(at);
        at += p.cols();
    }
    return Tensor<Scalar>::make_op(std::move(out), "concat_cols", nodes, [nodes, offsets](auto& self) {
        for (size_t i = 0; i < nodes.size(); ++i) {
            if (!nodes[i]->requires_grad) continue;
            nodes[i]->ensure_grad();
            nodes[i]->grad += self.grad.middleCols(offsets[i], nodes[i]->value.cols());
        }
    });
}

// Gathers rows of an embedding table; gradient scatters additively, so
// repeated ids accumulate.
template <typename Scalar>
Tensor<Scalar> embedding_rows(const Tensor<Scalar>& table, const std::vector<int>& ids) {
    Mat<Scalar> out(static_cast<Index>(ids.size()), table.cols());
    for (size_t t = 0; t < ids.size(); ++t) {
        if (ids[t] < 0 || ids[t] >= table.rows()) {
            throw std::out_of_range("embedding_rows: id " + std::to_string(ids[t]) + " outside table " +
                                    shape_str(table.value()));
        }
        out.row(static_cast<Index>(t)) = table.value().row(ids[t]);
    }
    auto tn = table.node();
    return Tensor<Scalar>::make_op(std::move(out), "embedding_rows", {tn}, [tn, ids](auto& self) {
        if (!tn->requires_grad) return;
        tn->ensure_grad();
        for (size_t t = 0; t < ids.size(); ++t) {
            tn->grad.row(ids[t]) += self.grad.row(static_cast<Index>(t));
        }
    });
}

// Column means: [T x d] -> [1 x d].
template <typename Scalar>
Tensor<Scalar> rows_mean(const Tensor<Scalar>& x) {
    if (x.rows() < 1) throw std::invalid_argument("rows_mean: empty input");
    Mat<Scalar> out = x.value().colwise().mean();
    auto xn = x.node();
    const Scalar inv = Scalar(1) / Scalar(x.rows());
    return Tensor<Scalar>::make_op(std::move(out), "rows_mean", {xn}, [xn, inv](auto& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        xn->grad += (Mat<Scalar>::Ones(xn->value.rows(), 1) * self.grad) * inv;
    });
}

// ---------------------------------------------------------------------------
// Nonlinearities
// ---------------------------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& x) {
    Mat<Scalar> out = x.value().unaryExpr([](Scalar v) { return detail::stable_sigmoid(v); });
    auto xn = x.node();
    Mat<Scalar> y = out;
    return Tensor<Scalar>::make_op(std::move(out), "sigmoid", {xn}, [xn, y](auto& self) {
        Tensor<Scalar>::accum(xn, (self.grad.array() * y.array() * (Scalar(1) - y.array())).matrix());
    });
}

// tanh-approximation GELU; smooth everywhere, which keeps finite-difference
// checks well conditioned.
template <typename Scalar>
Tensor<Scalar> gelu(const Tensor<Scalar>& x) {
    const Scalar c = Scalar(0.7978845608028654);  // sqrt(2/pi)
    const Scalar k = Scalar(0.044715);
    Mat<Scalar> out = x.value().unaryExpr([c, k](Scalar v) {
        return Scalar(0.5) * v * (Scalar(1) + std::tanh(c * (v + k * v * v * v)));
    });
    auto xn = x.node();
    return Tensor<Scalar>::make_op(std::move(out), "gelu", {xn}, [xn, c, k](auto& self) {
        if (!xn->requires_grad) return;
        Mat<Scalar> dx = xn->value.unaryExpr([c, k](Scalar v) {
            Scalar u = c * (v + k * v * v * v);
            Scalar th = std::tanh(u);
            Scalar sech2 = Scalar(1) - th * th;
            return Scalar(0.5) * (Scalar(1) + th) + Scalar(0.5) * v * sech2 * c * (Scalar(1) + Scalar(3) * k * v * v);
        });
        Tensor<Scalar>::accum(xn, (self.grad.array() * dx.array()).matrix());
    });
}

// ---------------------------------------------------------------------------
// Normalization and softmax family
// ---------------------------------------------------------------------------

// Row-wise layer norm with affine gain/bias ([1 x d] each), epsilon 1e-5.
template <typename Scalar>
Tensor<Scalar> layer_norm(const Tensor<Scalar>& x, const Tensor<Scalar>& gain, const Tensor<Scalar>& bias,
                          double eps = 1e-5) {
    const Index d = x.cols();
    if (d < 2) throw std::invalid_argument("layer_norm: needs width >= 2, got " + shape_str(x.value()));
    if (gain.rows() != 1 || gain.cols() != d || bias.rows() != 1 || bias.cols() != d) {
        throw std::invalid_argument("layer_norm: gain/bias must be [1x" + std::to_string(d) + "]");
    }
    Mat<Scalar> xhat(x.rows(), d);
    Mat<Scalar> inv_std(x.rows(), 1);
    for (Index r = 0; r < x.rows(); ++r) {
        Scalar mean = x.value().row(r).mean();
        Scalar var = (x.value().row(r).array() - mean).square().mean();
        Scalar is = Scalar(1) / std::sqrt(var + Scalar(eps));
        inv_std(r, 0) = is;
        xhat.row(r) = (x.value().row(r).array() - mean) * is;
    }
    Mat<Scalar> out = (xhat.array().rowwise() * gain.value().row(0).array()).rowwise() + bias.value().row(0).array();
    auto xn = x.node(), gn = gain.node(), bn = bias.node();
    return Tensor<Scalar>::make_op(std::move(out), "layer_norm", {xn, gn, bn}, [xn, gn, bn, xhat, inv_std](auto& self) {
        if (gn->requires_grad) {
            gn->ensure_grad();
            gn->grad += (self.grad.array() * xhat.array()).colwise().sum().matrix();
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            bn->grad += self.grad.colwise().sum();
        }
        if (xn->requires_grad) {
            xn->ensure_grad();
            for (Index r = 0; r < xhat.rows(); ++r) {
                // dxhat = dy * gain; dx via the standard two-correction form.
                Eigen::Array<Scalar, 1, Eigen::Dynamic> dxhat =
                    self.grad.row(r).array() * gn->value.row(0).array();
                Scalar m1 = dxhat.mean();
                Scalar m2 = (dxhat * xhat.row(r).array()).mean();
                xn->grad.row(r) += ((dxhat - m1 - xhat.row(r).array() * m2) * inv_std(r, 0)).matrix();
            }
        }
    });
}

// Softmax over the active entries of a flat vector; inactive outputs are
// exactly 0.0 and receive no gradient. Max-subtraction runs over active
// entries only.
template <typename Scalar>
Tensor<Scalar> masked_softmax(const Tensor<Scalar>& logits, const std::vector<uint8_t>& active,
                              EmptyActive empty_policy = EmptyActive::error) {
    const Index n = logits.size();
    if (static_cast<Index>(active.size()) != n) {
        throw std::invalid_argument("masked_softmax: mask length " + std::to_string(active.size()) +
                                    " vs logits " + shape_str(logits.value()));
    }
    std::vector<Index> idx;
    for (Index i = 0; i < n; ++i) {
        if (active[static_cast<size_t>(i)]) idx.push_back(i);
    }
    Mat<Scalar> out = Mat<Scalar>::Zero(logits.rows(), logits.cols());
    if (idx.empty()) {
        if (empty_policy == EmptyActive::error) {
            throw std::domain_error("masked_softmax: no active entries");
        }
        auto ln = logits.node();
        return Tensor<Scalar>::make_op(std::move(out), "masked_softmax", {ln}, [](auto&) {});
    }
    const Scalar* flat = logits.value().data();
    Scalar mx = flat[idx[0]];
    for (Index i : idx) mx = std::max(mx, flat[i]);
    Scalar sum = Scalar(0);
    for (Index i : idx) {
        Scalar e = std::exp(flat[i] - mx);
        out.data()[i] = e;
        sum += e;
    }
    for (Index i : idx) out.data()[i] /= sum;
    auto ln = logits.node();
    Mat<Scalar> w = out;
    return Tensor<Scalar>::make_op(std::move(out), "masked_softmax", {ln}, [ln, w, idx](auto& self) {
        if (!ln->requires_grad) return;
        ln->ensure_grad();
        Scalar dot = Scalar(0);
        for (Index i : idx) dot += self.grad.data()[i] * w.data()[i];
        for (Index i : idx) {
            ln->grad.data()[i] += w.data()[i] * (self.grad.data()[i] - dot);
        }
    });
}

// Per-row causal softmax for attention scores [T x T]: row t sees columns
// 0..t. Disallowed entries are exactly zero in both value and gradient.
template <typename Scalar>
Tensor<Scalar> causal_row_softmax(const Tensor<Scalar>& scores) {
    if (scores.rows() != scores.cols()) {
        throw std::invalid_argument("causal_row_softmax: expected square scores, got " + shape_str(scores.value()));
    }
    const Index t_len = scores.rows();
    Mat<Scalar> out = Mat<Scalar>::Zero(t_len, t_len);
    for (Index t = 0; t < t_len; ++t) {
        Scalar mx = scores.value()(t, 0);
        for (Index c = 1; c <= t; ++c) mx = std::max(mx, scores.value()(t, c));
        Scalar sum = Scalar(0);
        for (Index c = 0; c <= t; ++c) {
            Scalar e = std::exp(scores.value()(t, c) - mx);
            out(t, c) = e;
            sum += e;
        }
        for (Index c = 0; c <= t; ++c) out(t, c) /= sum;
    }
    auto sn = scores.node();
    Mat<Scalar> w = out;
    return Tensor<Scalar>::make_op(std::move(out), "causal_row_softmax", {sn}, [sn, w](auto& self) {
        if (!sn->requires_grad) return;
        sn->ensure_grad();
        const Index t_len = w.rows();
        for (Index t = 0; t < t_len; ++t) {
            Scalar dot = Scalar(0);
            for (Index c = 0; c <= t; ++c) dot += self.grad(t, c) * w(t, c);
            for (Index c = 0; c <= t; ++c) sn->grad(t, c) += w(t, c) * (self.grad(t, c) - dot);
        }
    });
}

// Mean negative log-likelihood over unmasked positions. logits [T x V],
// targets/mask length T; throws if every position is masked out.
template <typename Scalar>
Tensor<Scalar> cross_entropy(const Tensor<Scalar>& logits, const std::vector<int>& targets,
                             const std::vector<uint8_t>& loss_mask) {
    const Index t_len = logits.rows(), vocab = logits.cols();
    if (static_cast<Index>(targets.size()) != t_len || static_cast<Index>(loss_mask.size()) != t_len) {
        throw std::invalid_argument("cross_entropy: targets/mask length mismatch vs logits " +
                                    shape_str(logits.value()));
    }
    Index count = 0;
    for (auto m : loss_mask) count += (m != 0);
    if (count == 0) throw std::domain_error("cross_entropy: all positions masked, empty loss");

    Mat<Scalar> probs(t_len, vocab);
    Scalar total = Scalar(0);
    for (Index t = 0; t < t_len; ++t) {
        Scalar mx = logits.value().row(t).maxCoeff();
        Eigen::Array<Scalar, 1, Eigen::Dynamic> e = (logits.value().row(t).array() - mx).exp();
        Scalar sum = e.sum();
        probs.row(t) = (e / sum).matrix();
        if (loss_mask[static_cast<size_t>(t)]) {
            int y = targets[static_cast<size_t>(t)];
            if (y < 0 || y >= vocab) {
                throw std::out_of_range("cross_entropy: target " + std::to_string(y) + " outside vocab " +
                                        std::to_string(vocab));
            }
            Scalar logp = (logits.value()(t, y) - mx) - std::log(sum);
            total -= logp;
        }
    }
    Mat<Scalar> out(1, 1);
    out(0, 0) = total / Scalar(count);
    auto ln = logits.node();
    return Tensor<Scalar>::make_op(std::move(out), "cross_entropy", {ln},
                                   [ln, probs, targets, loss_mask, count](auto& self) {
        if (!ln->requires_grad) return;
        ln->ensure_grad();
        const Scalar g = self.grad(0, 0) / Scalar(count);
        for (Index t = 0; t < probs.rows(); ++t) {
            if (!loss_mask[static_cast<size_t>(t)]) continue;
            ln->grad.row(t) += probs.row(t) * g;
            ln->grad(t, targets[static_cast<size_t>(t)]) -= g;
        }
    });
}

}  // namespace rolemix
