#pragma once

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "autodiff.hpp"
#include "mlp.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace advnf {

// Conditional RealNVP-style flow built from affine coupling layers. The
// generative direction runs z (base space) through the couplings to y and,
// for circular targets, through the inverse projection to angles. Conditions
// enter each coupling net as extra input columns, raw.

enum class BaseKind { normal, uniform_box };
enum class ProjectionKind { none, tan_map, sigmoid_map };

struct CouplingLayer {
    Tensor mask;  // 1 = pass-through coordinate, 0 = transformed
    Mlp scale_net;       // final tanh
    Mlp translate_net;   // final linear
};

struct FlowModel {
    std::size_t dim = 0;       // coordinates per sample
    std::size_t cond_dim = 0;  // condition entries appended to net inputs
    BaseKind base = BaseKind::normal;
    double box_lo = 0.0, box_hi = 1.0;  // uniform_box support
    ProjectionKind projection = ProjectionKind::none;
    double alpha = 1e-4;   // projection edge offset
    std::size_t lattice_n = 0;  // side length when samples are spin angles, else 0
    std::vector<std::size_t> hidden;  // coupling-net hidden widths
    std::vector<CouplingLayer> layers;

    std::vector<NodePtr> params() const {
        std::vector<NodePtr> out;
        for (const auto& l : layers) {
            auto s = l.scale_net.params();
            auto t = l.translate_net.params();
            out.insert(out.end(), s.begin(), s.end());
            out.insert(out.end(), t.begin(), t.end());
        }
        return out;
    }
};

namespace detail {

inline Tensor inverted_mask(const Tensor& mask) {
    Tensor inv = mask;
    for (std::size_t i = 0; i < inv.size(); ++i) inv[i] = mask[i] != 0.0 ? 0.0 : 1.0;
    return inv;
}

}  // namespace detail

// condition row replicated for a batch of m samples
inline NodePtr tile_condition(const std::vector<double>& cond, std::size_t m) {
    Tensor t({m, cond.size()});
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < cond.size(); ++c) t.at(r, c) = cond[c];
    return constant(std::move(t));
}

// One coupling step z -> x. Returns the output and the per-row log-det
// contribution (sum of the scale outputs over transformed coordinates).
inline std::pair<NodePtr, NodePtr> coupling_forward(const CouplingLayer& layer,
                                                    const NodePtr& z, const NodePtr& cond) {
    auto mask = constant(layer.mask);
    auto zm = op_mul(z, mask);
    auto inp = cond->value.size() ? op_concat({zm, cond}, 1) : zm;
    auto inv = constant(detail::inverted_mask(layer.mask));
    auto s = op_mul(layer.scale_net.forward(inp), inv);
    auto t = op_mul(layer.translate_net.forward(inp), inv);
    // pass-through coordinates see s = 0, t = 0 and come out unchanged
    auto x = op_add(op_mul(z, op_exp(s)), t);
    return {x, op_sum(s, {1})};
}

// Exact algebraic inverse of coupling_forward; log-det is the negated sum.
inline std::pair<NodePtr, NodePtr> coupling_inverse(const CouplingLayer& layer,
                                                    const NodePtr& x, const NodePtr& cond) {
    auto mask = constant(layer.mask);
    auto xm = op_mul(x, mask);
    auto inp = cond->value.size() ? op_concat({xm, cond}, 1) : xm;
    auto inv = constant(detail::inverted_mask(layer.mask));
    auto s = op_mul(layer.scale_net.forward(inp), inv);
    auto t = op_mul(layer.translate_net.forward(inp), inv);
    auto z = op_mul(op_sub(x, t), op_exp(op_neg(s)));
    return {z, op_neg(op_sum(s, {1}))};
}

// ---- circular projections between angle space and the flow's open space ----
// proj maps angles theta in [0, 2*pi) to unbounded coordinates; proj_inverse
// is used in the generative direction. Log-jacobians are per row.

namespace detail {

struct ProjResult {
    NodePtr out;
    NodePtr log_det;  // per-row sum of log |d out / d in|
};

// sigmoid map: y = logit(alpha + (1 - 2 alpha) * theta / (2 pi))
inline ProjResult project_sigmoid(const NodePtr& theta, double alpha) {
    const double a = (1.0 - 2.0 * alpha) / (2.0 * M_PI);
    auto v = op_add(op_mul(theta, cst(a)), cst(alpha));
    auto log_v = op_log(v);
    auto log_1mv = op_log(op_sub(cst(1.0), v));
    auto y = op_sub(log_v, log_1mv);
    const double d = static_cast<double>(theta->value.dim(1));
    auto ld = op_sub(cst(d * std::log(a)),
                     op_sum(op_add(log_v, log_1mv), {1}));
    return {y, ld};
}

inline ProjResult project_sigmoid_inverse(const NodePtr& y, double alpha) {
    const double a = (1.0 - 2.0 * alpha) / (2.0 * M_PI);
    auto sig = op_sigmoid(y);
    auto theta = op_mul(op_sub(sig, cst(alpha)), cst(1.0 / a));
    // log |d theta / d y| = -log a + log sig + log(1 - sig), via softplus
    const double d = static_cast<double>(y->value.dim(1));
    auto sp = op_add(op_softplus(y), op_softplus(op_neg(y)));
    auto ld = op_sub(cst(-d * std::log(a)), op_sum(sp, {1}));
    return {theta, ld};
}

// tan map: y = tan(alpha + (1 - 2 alpha) * theta / 4). Note the image of
// [0, 2 pi) is only part of the line (the map was taken as given); the
// sigmoid map is the default for lattice targets.
inline ProjResult project_tan(const NodePtr& theta, double alpha) {
    const double a = (1.0 - 2.0 * alpha) / 4.0;
    auto arg = op_add(op_mul(theta, cst(a)), cst(alpha));
    for (std::size_t i = 0; i < arg->value.size(); ++i)
        if (std::abs(arg->value[i]) >= M_PI / 2.0 - 1e-12)
            throw NumericError("project_tan: angle outside the invertible branch");
    auto y = op_tan(arg);
    const double d = static_cast<double>(theta->value.dim(1));
    auto one_plus_y2 = op_add(cst(1.0), op_square(y));
    auto ld = op_add(cst(d * std::log(a)), op_sum(op_log(one_plus_y2), {1}));
    return {y, ld};
}

inline ProjResult project_tan_inverse(const NodePtr& y, double alpha) {
    const double a = (1.0 - 2.0 * alpha) / 4.0;
    auto theta = op_mul(op_sub(op_atan(y), cst(alpha)), cst(1.0 / a));
    const double d = static_cast<double>(y->value.dim(1));
    auto one_plus_y2 = op_add(cst(1.0), op_square(y));
    auto ld = op_sub(cst(-d * std::log(a)), op_sum(op_log(one_plus_y2), {1}));
    return {theta, ld};
}

inline ProjResult project(const FlowModel& f, const NodePtr& x) {
    switch (f.projection) {
        case ProjectionKind::none: return {x, nullptr};
        case ProjectionKind::sigmoid_map: return project_sigmoid(x, f.alpha);
        case ProjectionKind::tan_map: return project_tan(x, f.alpha);
    }
    throw ValueError("project: unknown projection");
}

inline ProjResult project_inverse(const FlowModel& f, const NodePtr& y) {
    switch (f.projection) {
        case ProjectionKind::none: return {y, nullptr};
        case ProjectionKind::sigmoid_map: return project_sigmoid_inverse(y, f.alpha);
        case ProjectionKind::tan_map: return project_tan_inverse(y, f.alpha);
    }
    throw ValueError("project_inverse: unknown projection");
}

// per-row log density of the base distribution, as a graph node
inline NodePtr base_log_prob(const FlowModel& f, const NodePtr& z) {
    const double d = static_cast<double>(f.dim);
    if (f.base == BaseKind::normal) {
        auto ss = op_sum(op_square(z), {1});
        return op_sub(op_mul(cst(-0.5), ss), cst(0.5 * d * std::log(2.0 * M_PI)));
    }
    // uniform box: constant density; values outside the box are a hard error
    for (std::size_t i = 0; i < z->value.size(); ++i)
        if (z->value[i] < f.box_lo || z->value[i] > f.box_hi)
            throw NumericError("base_log_prob: point outside the uniform base box");
    const std::size_t m = z->value.dim(0);
    return constant(Tensor({m}, -d * std::log(f.box_hi - f.box_lo)));
}

}  // namespace detail

struct FlowForward {
    NodePtr x;        // samples in data space (angles for lattice models)
    NodePtr log_det;  // per-row log |det dx/dz|, projection included
};

// Generative pass: base points z through all couplings, then out of the
// projected space if the model has one.
inline FlowForward flow_forward(const FlowModel& f, const NodePtr& z, const NodePtr& cond) {
    NodePtr h = z;
    NodePtr ld;
    for (const auto& layer : f.layers) {
        auto [next, step_ld] = coupling_forward(layer, h, cond);
        h = next;
        ld = ld ? op_add(ld, step_ld) : step_ld;
    }
    if (!ld) ld = constant(Tensor({z->value.dim(0)}, 0.0));
    auto proj = detail::project_inverse(f, h);
    if (proj.log_det) ld = op_add(ld, proj.log_det);
    return {proj.out, ld};
}

struct FlowInverse {
    NodePtr z;        // recovered base points
    NodePtr log_det;  // per-row log |det dz/dx|, projection included
};

inline FlowInverse flow_inverse(const FlowModel& f, const NodePtr& x, const NodePtr& cond) {
    auto proj = detail::project(f, x);
    NodePtr h = proj.out;
    NodePtr ld = proj.log_det;
    for (auto it = f.layers.rbegin(); it != f.layers.rend(); ++it) {
        auto [next, step_ld] = coupling_inverse(*it, h, cond);
        h = next;
        ld = ld ? op_add(ld, step_ld) : step_ld;
    }
    if (!ld) ld = constant(Tensor({x->value.dim(0)}, 0.0));
    return {h, ld};
}

// Per-row log q(x | cond) for a batch of data points, differentiable in the
// flow parameters: change of variables through the inverse pass.
inline NodePtr flow_log_prob(const FlowModel& f, const Tensor& x,
                             const std::vector<double>& cond) {
    if (x.rank() != 2 || x.dim(1) != f.dim)
        throw ValueError("flow_log_prob: expected shape (m, dim)");
    if (cond.size() != f.cond_dim)
        throw ValueError("flow_log_prob: condition size mismatch");
    const std::size_t m = x.dim(0);
    auto cnode = tile_condition(cond, m);
    auto inv = flow_inverse(f, constant(x), cnode);
    return op_add(detail::base_log_prob(f, inv.z), inv.log_det);
}

struct FlowSamples {
    Tensor x;                   // (m, dim) raw coordinates (not wrapped)
    std::vector<double> log_q;  // per-row model log density at x
};

// Draws m samples for the given condition. log_q is consistent with
// flow_log_prob evaluated at the returned coordinates.
inline FlowSamples flow_sample(const FlowModel& f, const std::vector<double>& cond,
                               std::size_t m, Rng& rng) {
    if (cond.size() != f.cond_dim)
        throw ValueError("flow_sample: condition size mismatch");
    Tensor z({m, f.dim});
    if (f.base == BaseKind::normal) {
        for (std::size_t i = 0; i < z.size(); ++i) z[i] = rng.normal();
    } else {
        for (std::size_t i = 0; i < z.size(); ++i) z[i] = rng.uniform(f.box_lo, f.box_hi);
    }
    auto znode = constant(z);
    auto cnode = tile_condition(cond, m);
    auto fwd = flow_forward(f, znode, cnode);
    auto base_lp = detail::base_log_prob(f, znode);
    FlowSamples out;
    out.x = fwd.x->value;
    out.log_q.resize(m);
    for (std::size_t r = 0; r < m; ++r)
        out.log_q[r] = base_lp->value[r] - fwd.log_det->value[r];
    return out;
}

// ---- mask layouts and standard architectures ----

// d = 2: alternate which single coordinate passes through
inline Tensor coordinate_mask(std::size_t dim, std::size_t layer_index) {
    Tensor m({dim}, 0.0);
    for (std::size_t j = 0; j < dim; ++j)
        m[j] = (j % 2 == layer_index % 2) ? 1.0 : 0.0;
    return m;
}

// lattice: checkerboard by site parity, alternating per layer
inline Tensor checkerboard_mask(std::size_t n, std::size_t layer_index) {
    Tensor m({n * n}, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            m[i * n + j] = ((i + j) % 2 == layer_index % 2) ? 1.0 : 0.0;
    return m;
}

namespace detail {

inline CouplingLayer make_coupling(std::size_t dim, std::size_t cond_dim,
                                   const std::vector<std::size_t>& hidden, Tensor mask,
                                   Rng& rng) {
    CouplingLayer l;
    l.mask = std::move(mask);
    const std::size_t in_dim = dim + cond_dim;
    l.scale_net = Mlp(in_dim, hidden, dim, Mlp::Output::tanh, rng, true);
    l.translate_net = Mlp(in_dim, hidden, dim, Mlp::Output::linear, rng, true);
    return l;
}

}  // namespace detail

// 2-D synthetic flow: unconstrained support, normal base.
inline FlowModel make_synthetic_flow(std::size_t cond_dim, std::size_t n_layers, Rng& rng,
                                     std::vector<std::size_t> hidden = {32, 32}) {
    FlowModel f;
    f.dim = 2;
    f.cond_dim = cond_dim;
    f.hidden = hidden;
    for (std::size_t l = 0; l < n_layers; ++l)
        f.layers.push_back(
            detail::make_coupling(2, cond_dim, hidden, coordinate_mask(2, l), rng));
    return f;
}

// Spin-lattice flow: samples are n*n angles, reached through a circular
// projection (sigmoid map unless asked otherwise).
inline FlowModel make_lattice_flow(std::size_t n, std::size_t cond_dim, std::size_t n_layers,
                                   Rng& rng, std::vector<std::size_t> hidden = {128, 128},
                                   ProjectionKind projection = ProjectionKind::sigmoid_map) {
    FlowModel f;
    f.dim = n * n;
    f.cond_dim = cond_dim;
    f.lattice_n = n;
    f.projection = projection;
    f.hidden = hidden;
    for (std::size_t l = 0; l < n_layers; ++l)
        f.layers.push_back(
            detail::make_coupling(f.dim, cond_dim, hidden, checkerboard_mask(n, l), rng));
    return f;
}

}  // namespace advnf
