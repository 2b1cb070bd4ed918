#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "tensor.hpp"

namespace advnf {

// Tape-based reverse-mode autodiff. A fresh graph is built per minibatch;
// parameters are long-lived leaf nodes whose gradients persist until the
// optimizer clears them. Gradients always accumulate (grad += upstream).
struct GraphNode {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    std::vector<std::shared_ptr<GraphNode>> parents;
    std::function<void(GraphNode&)> backward_fn;

    void ensure_grad() {
        if (!has_grad) {
            grad = Tensor(value.shape(), 0.0);
            has_grad = true;
        }
    }

    void clear_grad() {
        if (has_grad) grad.fill(0.0);
    }
};

using NodePtr = std::shared_ptr<GraphNode>;

// Leaf holding a trainable parameter; gradient flows into it.
inline NodePtr param(Tensor value) {
    auto n = std::make_shared<GraphNode>();
    n->value = std::move(value);
    n->requires_grad = true;
    return n;
}

// Leaf holding data; no gradient is ever propagated to it.
inline NodePtr constant(Tensor value) {
    auto n = std::make_shared<GraphNode>();
    n->value = std::move(value);
    n->requires_grad = false;
    return n;
}

inline NodePtr cst(double v) { return constant(Tensor::scalar(v)); }

namespace detail {

inline void check_finite(const Tensor& t, const char* op) {
    if (!t.all_finite())
        throw NumericError(std::string(op) + ": non-finite value produced");
}

inline NodePtr make_node(Tensor value, std::vector<NodePtr> parents,
                         std::function<void(GraphNode&)> bw, const char* op) {
    check_finite(value, op);
    auto n = std::make_shared<GraphNode>();
    n->value = std::move(value);
    for (const auto& p : parents)
        if (p->requires_grad) n->requires_grad = true;
    n->parents = std::move(parents);
    if (n->requires_grad) n->backward_fn = std::move(bw);
    return n;
}

inline void accumulate(const NodePtr& n, const Tensor& g) {
    if (!n->requires_grad) return;
    n->ensure_grad();
    double* dst = n->grad.data();
    const double* src = g.data();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += src[i];
}

// Sums gradient `g` (broadcast result shape) back down to `shape`.
inline Tensor reduce_to(const Tensor& g, const std::vector<std::size_t>& shape) {
    if (g.shape() == shape) return g;
    Tensor out(shape, 0.0);
    for (std::size_t i = 0; i < g.size(); ++i)
        out[broadcast_index(i, g.shape(), shape)] += g[i];
    return out;
}

}  // namespace detail

// ---- binary elementwise ops (right-aligned broadcasting) ----

namespace detail {

template <typename F, typename DA, typename DB>
NodePtr binary_op(const NodePtr& a, const NodePtr& b, const char* name, F f, DA da, DB db) {
    const Tensor& av = a->value;
    const Tensor& bv = b->value;
    Tensor out;
    if (av.same_shape(bv)) {
        out = Tensor(av.shape());
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = f(av[i], bv[i]);
    } else {
        auto shape = broadcast_shape(av.shape(), bv.shape());
        out = Tensor(shape);
        for (std::size_t i = 0; i < out.size(); ++i) {
            const double x = av[broadcast_index(i, shape, av.shape())];
            const double y = bv[broadcast_index(i, shape, bv.shape())];
            out[i] = f(x, y);
        }
    }
    auto bw = [a, b, da, db](GraphNode& self) {
        const Tensor& av = a->value;
        const Tensor& bv = b->value;
        const Tensor& g = self.grad;
        const bool same = av.same_shape(bv);
        if (a->requires_grad) {
            Tensor ga(g.shape());
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double x = same ? av[i] : av[broadcast_index(i, g.shape(), av.shape())];
                const double y = same ? bv[i] : bv[broadcast_index(i, g.shape(), bv.shape())];
                ga[i] = g[i] * da(x, y);
            }
            accumulate(a, reduce_to(ga, av.shape()));
        }
        if (b->requires_grad) {
            Tensor gb(g.shape());
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double x = same ? av[i] : av[broadcast_index(i, g.shape(), av.shape())];
                const double y = same ? bv[i] : bv[broadcast_index(i, g.shape(), bv.shape())];
                gb[i] = g[i] * db(x, y);
            }
            accumulate(b, reduce_to(gb, bv.shape()));
        }
    };
    return make_node(std::move(out), {a, b}, std::move(bw), name);
}

}  // namespace detail

inline NodePtr op_add(const NodePtr& a, const NodePtr& b) {
    return detail::binary_op(
        a, b, "op_add", [](double x, double y) { return x + y; },
        [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

inline NodePtr op_sub(const NodePtr& a, const NodePtr& b) {
    return detail::binary_op(
        a, b, "op_sub", [](double x, double y) { return x - y; },
        [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

inline NodePtr op_mul(const NodePtr& a, const NodePtr& b) {
    return detail::binary_op(
        a, b, "op_mul", [](double x, double y) { return x * y; },
        [](double, double y) { return y; }, [](double x, double) { return x; });
}

inline NodePtr op_div(const NodePtr& a, const NodePtr& b) {
    for (std::size_t i = 0; i < b->value.size(); ++i)
        if (b->value[i] == 0.0)
            throw NumericError("op_div: division by zero");
    return detail::binary_op(
        a, b, "op_div", [](double x, double y) { return x / y; },
        [](double, double y) { return 1.0 / y; },
        [](double x, double y) { return -x / (y * y); });
}

// ---- unary elementwise ops ----

namespace detail {

// dy: derivative as a function of (x, y) with y = f(x)
template <typename F, typename D>
NodePtr unary_op(const NodePtr& a, const char* name, F f, D dy) {
    const Tensor& av = a->value;
    Tensor out(av.shape());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = f(av[i]);
    auto bw = [a, dy](GraphNode& self) {
        const Tensor& g = self.grad;
        Tensor ga(g.shape());
        for (std::size_t i = 0; i < g.size(); ++i)
            ga[i] = g[i] * dy(a->value[i], self.value[i]);
        accumulate(a, ga);
    };
    return make_node(std::move(out), {a}, std::move(bw), name);
}

inline double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double stable_softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

}  // namespace detail

inline NodePtr op_neg(const NodePtr& a) {
    return detail::unary_op(
        a, "op_neg", [](double x) { return -x; }, [](double, double) { return -1.0; });
}

inline NodePtr op_tanh(const NodePtr& a) {
    return detail::unary_op(
        a, "op_tanh", [](double x) { return std::tanh(x); },
        [](double, double y) { return 1.0 - y * y; });
}

inline NodePtr op_relu(const NodePtr& a) {
    return detail::unary_op(
        a, "op_relu", [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline NodePtr op_sigmoid(const NodePtr& a) {
    return detail::unary_op(
        a, "op_sigmoid", [](double x) { return detail::stable_sigmoid(x); },
        [](double, double y) { return y * (1.0 - y); });
}

inline NodePtr op_exp(const NodePtr& a) {
    return detail::unary_op(
        a, "op_exp", [](double x) { return std::exp(x); },
        [](double, double y) { return y; });
}

inline NodePtr op_log(const NodePtr& a) {
    for (std::size_t i = 0; i < a->value.size(); ++i)
        if (a->value[i] <= 0.0)
            throw NumericError("op_log: non-positive input");
    return detail::unary_op(
        a, "op_log", [](double x) { return std::log(x); },
        [](double x, double) { return 1.0 / x; });
}

inline NodePtr op_square(const NodePtr& a) {
    return detail::unary_op(
        a, "op_square", [](double x) { return x * x; },
        [](double x, double) { return 2.0 * x; });
}

inline NodePtr op_sqrt(const NodePtr& a) {
    for (std::size_t i = 0; i < a->value.size(); ++i)
        if (a->value[i] <= 0.0)
            throw NumericError("op_sqrt: non-positive input");
    return detail::unary_op(
        a, "op_sqrt", [](double x) { return std::sqrt(x); },
        [](double, double y) { return 0.5 / y; });
}

inline NodePtr op_sin(const NodePtr& a) {
    return detail::unary_op(
        a, "op_sin", [](double x) { return std::sin(x); },
        [](double x, double) { return std::cos(x); });
}

inline NodePtr op_cos(const NodePtr& a) {
    return detail::unary_op(
        a, "op_cos", [](double x) { return std::cos(x); },
        [](double x, double) { return -std::sin(x); });
}

inline NodePtr op_tan(const NodePtr& a) {
    return detail::unary_op(
        a, "op_tan", [](double x) { return std::tan(x); },
        [](double, double y) { return 1.0 + y * y; });
}

inline NodePtr op_atan(const NodePtr& a) {
    return detail::unary_op(
        a, "op_atan", [](double x) { return std::atan(x); },
        [](double x, double) { return 1.0 / (1.0 + x * x); });
}

inline NodePtr op_softplus(const NodePtr& a) {
    return detail::unary_op(
        a, "op_softplus", [](double x) { return detail::stable_softplus(x); },
        [](double x, double) { return detail::stable_sigmoid(x); });
}

inline NodePtr op_clamp(const NodePtr& a, double lo, double hi) {
    if (!(lo <= hi)) throw ValueError("op_clamp: lo must be <= hi");
    return detail::unary_op(
        a, "op_clamp",
        [lo, hi](double x) { return std::min(std::max(x, lo), hi); },
        [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

// ---- matrix product ----

namespace detail {

// C[m,n] = A[m,k] * B[k,n], row-major
inline void matmul_raw(const double* A, std::size_t m, std::size_t k,
                       const double* B, std::size_t n, double* C) {
    std::fill(C, C + m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        double* c = C + i * n;
        const double* arow = A + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double a = arow[p];
            const double* b = B + p * n;
            for (std::size_t j = 0; j < n; ++j)
                c[j] += a * b[j];
        }
    }
}

}  // namespace detail

inline NodePtr op_matmul(const NodePtr& a, const NodePtr& b) {
    const Tensor& A = a->value;
    const Tensor& B = b->value;
    if (A.rank() != 2 || B.rank() != 2)
        throw ValueError("op_matmul: operands must be rank-2");
    if (A.dim(1) != B.dim(0))
        throw ValueError("op_matmul: inner dimensions disagree " + A.shape_str() + " x " +
                         B.shape_str());
    const std::size_t m = A.dim(0), k = A.dim(1), n = B.dim(1);
    Tensor out({m, n});
    detail::matmul_raw(A.data(), m, k, B.data(), n, out.data());
    auto bw = [a, b, m, k, n](GraphNode& self) {
        const double* g = self.grad.data();
        if (a->requires_grad) {
            a->ensure_grad();
            double* ga = a->grad.data();
            const double* Bd = b->value.data();
            // ga[i,p] += sum_j g[i,j] * B[p,j]
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double s = 0.0;
                    const double* gi = g + i * n;
                    const double* bp = Bd + p * n;
                    for (std::size_t j = 0; j < n; ++j) s += gi[j] * bp[j];
                    ga[i * k + p] += s;
                }
        }
        if (b->requires_grad) {
            b->ensure_grad();
            double* gb = b->grad.data();
            const double* Ad = a->value.data();
            // gb[p,j] += sum_i A[i,p] * g[i,j]
            for (std::size_t i = 0; i < m; ++i) {
                const double* gi = g + i * n;
                const double* ai = Ad + i * k;
                for (std::size_t p = 0; p < k; ++p) {
                    const double av = ai[p];
                    double* gbp = gb + p * n;
                    for (std::size_t j = 0; j < n; ++j) gbp[j] += av * gi[j];
                }
            }
        }
    };
    return detail::make_node(std::move(out), {a, b}, std::move(bw), "op_matmul");
}

// ---- reductions ----

namespace detail {

inline NodePtr reduce_op(const NodePtr& a, std::vector<std::size_t> axes, bool mean,
                         const char* name) {
    const Tensor& av = a->value;
    if (axes.empty()) return a;  // documented contract: no axes, no change
    std::sort(axes.begin(), axes.end());
    for (std::size_t i = 0; i < axes.size(); ++i) {
        if (axes[i] >= av.rank()) throw ValueError("op_reduce: axis out of range");
        if (i > 0 && axes[i] == axes[i - 1]) throw ValueError("op_reduce: duplicate axis");
    }
    std::vector<bool> reduced(av.rank(), false);
    for (std::size_t ax : axes) reduced[ax] = true;
    std::vector<std::size_t> out_shape;
    std::size_t count = 1;
    for (std::size_t i = 0; i < av.rank(); ++i) {
        if (reduced[i])
            count *= av.shape()[i];
        else
            out_shape.push_back(av.shape()[i]);
    }
    // flat index in input -> flat index in output (captures by value: the
    // backward closure outlives this frame)
    auto out_index = [in_shape = av.shape(), reduced](std::size_t flat) {
        std::size_t idx = 0, stride = 1;
        for (std::size_t k = in_shape.size(); k-- > 0;) {
            const std::size_t d = in_shape[k];
            const std::size_t coord = flat % d;
            flat /= d;
            if (!reduced[k]) {
                idx += coord * stride;
                stride *= d;
            }
        }
        return idx;
    };
    Tensor out(out_shape, 0.0);
    for (std::size_t i = 0; i < av.size(); ++i)
        out[out_index(i)] += av[i];
    const double scale = mean ? 1.0 / static_cast<double>(count) : 1.0;
    if (mean)
        for (std::size_t i = 0; i < out.size(); ++i) out[i] *= scale;
    auto bw = [a, out_index, scale](GraphNode& self) {
        Tensor ga(a->value.shape());
        for (std::size_t i = 0; i < ga.size(); ++i)
            ga[i] = self.grad[out_index(i)] * scale;
        accumulate(a, ga);
    };
    return make_node(std::move(out), {a}, std::move(bw), name);
}

inline std::vector<std::size_t> all_axes(const NodePtr& a) {
    std::vector<std::size_t> axes(a->value.rank());
    for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = i;
    return axes;
}

}  // namespace detail

inline NodePtr op_sum(const NodePtr& a, std::vector<std::size_t> axes) {
    return detail::reduce_op(a, std::move(axes), false, "op_sum");
}

inline NodePtr op_sum(const NodePtr& a) { return op_sum(a, detail::all_axes(a)); }

inline NodePtr op_mean(const NodePtr& a, std::vector<std::size_t> axes) {
    return detail::reduce_op(a, std::move(axes), true, "op_mean");
}

inline NodePtr op_mean(const NodePtr& a) { return op_mean(a, detail::all_axes(a)); }

// ---- concatenation ----

inline NodePtr op_concat(const std::vector<NodePtr>& parts, std::size_t axis) {
    if (parts.empty()) throw ValueError("op_concat: no inputs");
    const std::size_t rank = parts[0]->value.rank();
    if (axis >= rank) throw ValueError("op_concat: axis out of range");
    std::vector<std::size_t> shape = parts[0]->value.shape();
    shape[axis] = 0;
    for (const auto& p : parts) {
        if (p->value.rank() != rank) throw ValueError("op_concat: rank mismatch");
        for (std::size_t d = 0; d < rank; ++d)
            if (d != axis && p->value.shape()[d] != shape[d])
                throw ValueError("op_concat: shape mismatch off the concat axis");
        shape[axis] += p->value.shape()[axis];
    }

    // outer = product of dims before axis, inner = product after
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= shape[d];
    for (std::size_t d = axis + 1; d < rank; ++d) inner *= shape[d];

    Tensor out(shape);
    std::size_t offset = 0;  // offset along the concat axis
    for (const auto& p : parts) {
        const std::size_t w = p->value.shape()[axis];
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t c = 0; c < w; ++c)
                for (std::size_t in = 0; in < inner; ++in)
                    out[(o * shape[axis] + offset + c) * inner + in] =
                        p->value[(o * w + c) * inner + in];
        offset += w;
    }
    auto parts_copy = parts;
    auto bw = [parts_copy, axis, outer, inner, total = shape[axis]](GraphNode& self) {
        std::size_t offset = 0;
        for (const auto& p : parts_copy) {
            const std::size_t w = p->value.shape()[axis];
            if (p->requires_grad) {
                Tensor gp(p->value.shape());
                for (std::size_t o = 0; o < outer; ++o)
                    for (std::size_t c = 0; c < w; ++c)
                        for (std::size_t in = 0; in < inner; ++in)
                            gp[(o * w + c) * inner + in] =
                                self.grad[(o * total + offset + c) * inner + in];
                detail::accumulate(p, gp);
            }
            offset += w;
        }
    };
    return detail::make_node(std::move(out), parts, std::move(bw), "op_concat");
}

// ---- selection / gathering ----

// Selects positions along the last axis where mask is nonzero. The backward
// pass scatters gradients back to the selected positions and leaves zeros
// elsewhere.
inline NodePtr op_mask_select(const NodePtr& a, const Tensor& mask) {
    const Tensor& av = a->value;
    if (av.rank() == 0) throw ValueError("op_mask_select: scalar input");
    const std::size_t n = av.shape().back();
    if (mask.rank() != 1 || mask.size() != n)
        throw ValueError("op_mask_select: mask length must match the last axis");
    std::vector<std::size_t> keep;
    for (std::size_t j = 0; j < n; ++j)
        if (mask[j] != 0.0) keep.push_back(j);
    std::vector<std::size_t> shape = av.shape();
    shape.back() = keep.size();
    const std::size_t rows = av.size() / n;
    Tensor out(shape);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < keep.size(); ++j)
            out[r * keep.size() + j] = av[r * n + keep[j]];
    auto bw = [a, keep, n, rows](GraphNode& self) {
        Tensor ga(a->value.shape(), 0.0);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < keep.size(); ++j)
                ga[r * n + keep[j]] = self.grad[r * keep.size() + j];
        detail::accumulate(a, ga);
    };
    return detail::make_node(std::move(out), {a}, std::move(bw), "op_mask_select");
}

// out[r, :] = a[indices[r], :]; rank-1 inputs gather elements. Duplicate
// indices are allowed (their gradients add up).
inline NodePtr op_gather_rows(const NodePtr& a, std::vector<std::size_t> indices) {
    const Tensor& av = a->value;
    if (av.rank() != 1 && av.rank() != 2)
        throw ValueError("op_gather_rows: input must be rank-1 or rank-2");
    if (av.rank() == 1) {
        for (std::size_t r : indices)
            if (r >= av.dim(0)) throw ValueError("op_gather_rows: index out of range");
        Tensor out({indices.size()});
        for (std::size_t r = 0; r < indices.size(); ++r) out[r] = av[indices[r]];
        auto bw = [a, indices](GraphNode& self) {
            Tensor ga(a->value.shape(), 0.0);
            for (std::size_t r = 0; r < indices.size(); ++r)
                ga[indices[r]] += self.grad[r];
            detail::accumulate(a, ga);
        };
        return detail::make_node(std::move(out), {a}, std::move(bw), "op_gather_rows");
    }
    const std::size_t cols = av.dim(1);
    for (std::size_t r : indices)
        if (r >= av.dim(0)) throw ValueError("op_gather_rows: row index out of range");
    Tensor out({indices.size(), cols});
    for (std::size_t r = 0; r < indices.size(); ++r)
        for (std::size_t j = 0; j < cols; ++j)
            out.at(r, j) = av.at(indices[r], j);
    auto bw = [a, indices, cols](GraphNode& self) {
        Tensor ga(a->value.shape(), 0.0);
        for (std::size_t r = 0; r < indices.size(); ++r)
            for (std::size_t j = 0; j < cols; ++j)
                ga[indices[r] * cols + j] += self.grad[r * cols + j];
        detail::accumulate(a, ga);
    };
    return detail::make_node(std::move(out), {a}, std::move(bw), "op_gather_rows");
}

// out[:, c] = a[:, indices[c]]; duplicate indices allowed (grads add up).
inline NodePtr op_gather_cols(const NodePtr& a, std::vector<std::size_t> indices) {
    const Tensor& av = a->value;
    if (av.rank() != 2) throw ValueError("op_gather_cols: input must be rank-2");
    const std::size_t rows = av.dim(0), cols = av.dim(1);
    for (std::size_t c : indices)
        if (c >= cols) throw ValueError("op_gather_cols: column index out of range");
    Tensor out({rows, indices.size()});
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < indices.size(); ++c)
            out.at(r, c) = av.at(r, indices[c]);
    auto bw = [a, indices, rows, cols](GraphNode& self) {
        Tensor ga(a->value.shape(), 0.0);
        const std::size_t k = indices.size();
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < k; ++c)
                ga[r * cols + indices[c]] += self.grad[r * k + c];
        detail::accumulate(a, ga);
    };
    return detail::make_node(std::move(out), {a}, std::move(bw), "op_gather_cols");
}

// ---- backward pass ----

// Reverse-mode sweep from a scalar root. Interior gradients are recomputed per
// call; leaf gradients accumulate across calls until cleared.
inline void backward(const NodePtr& root) {
    if (!root->value.is_scalar())
        throw ValueError("backward: root must be a scalar");
    if (!root->requires_grad) return;  // nothing trainable upstream

    std::vector<GraphNode*> order;
    std::unordered_set<GraphNode*> seen;
    struct Frame {
        GraphNode* node;
        std::size_t next;
    };
    std::vector<Frame> stack;
    seen.insert(root.get());
    stack.push_back({root.get(), 0});
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next < f.node->parents.size()) {
            GraphNode* p = f.node->parents[f.next++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }
    // fresh pass through interior nodes; leaves keep accumulating
    for (GraphNode* n : order)
        if (n->backward_fn) {
            n->clear_grad();
            n->has_grad = false;
        }
    root->ensure_grad();
    root->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        GraphNode* n = *it;
        if (n->backward_fn && n->has_grad) n->backward_fn(*n);
    }
}

inline void zero_grad(const std::vector<NodePtr>& params) {
    for (const auto& p : params) {
        p->clear_grad();
        p->has_grad = false;
    }
}

}  // namespace advnf
