#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

#include "autodiff.hpp"
#include "flow.hpp"
#include "lattice.hpp"
#include "mlp.hpp"
#include "rng.hpp"
#include "synthetic.hpp"
#include "tensor.hpp"

namespace advnf {

// Discriminator, the three training losses, and the combined objective
//   O = -l1 * L_adv + l2 * L_rkl + l3 * L_fkl.
// The generator performs gradient descent on O while the discriminator
// performs gradient ascent on it, both from one shared backward pass.

struct Discriminator {
    enum class InputKind { synthetic, lattice };
    InputKind kind = InputKind::synthetic;
    Mlp net;  // outputs one raw logit
    double logit_clamp = 30.0;

    std::vector<NodePtr> params() const { return net.params(); }
};

// Input: the 2-D sample with its condition vector appended.
inline Discriminator make_synthetic_discriminator(std::size_t cond_dim, Rng& rng) {
    Discriminator d;
    d.kind = Discriminator::InputKind::synthetic;
    d.net = Mlp(2 + cond_dim, {64, 64, 64, 64, 8}, 1, Mlp::Output::linear, rng, false);
    return d;
}

// Input: per-site cos and sin of the angles, plus the temperature.
inline Discriminator make_lattice_discriminator(std::size_t n, Rng& rng) {
    Discriminator d;
    d.kind = Discriminator::InputKind::lattice;
    d.net = Mlp(2 * n * n + 1, {256, 128, 64}, 1, Mlp::Output::linear, rng, false);
    return d;
}

// Raw logit for a batch, clamped to a stable range. x is in data space
// (angles for lattice models); cond is the tiled condition block (m, c).
inline NodePtr disc_logits(const Discriminator& d, const NodePtr& x, const NodePtr& cond) {
    NodePtr feat;
    if (d.kind == Discriminator::InputKind::synthetic) {
        feat = op_concat({x, cond}, 1);
    } else {
        feat = op_concat({op_cos(x), op_sin(x), cond}, 1);
    }
    return op_clamp(d.net.forward(feat), -d.logit_clamp, d.logit_clamp);
}

inline NodePtr disc_prob(const Discriminator& d, const NodePtr& x, const NodePtr& cond) {
    return op_sigmoid(disc_logits(d, x, cond));
}

struct LossWeights {
    double l1 = 0.0;  // adversarial
    double l2 = 0.0;  // reverse KL
    double l3 = 0.0;  // forward KL

    void validate() const {
        if (l1 < 0.0 || l2 < 0.0 || l3 < 0.0)
            throw ValueError("LossWeights: weights must be non-negative");
        if (l1 == 0.0 && l2 == 0.0 && l3 == 0.0)
            throw ValueError("LossWeights: at least one weight must be positive");
    }

    void validate_phase1() const {
        if (l2 == 0.0 && l3 == 0.0)
            throw ValueError("LossWeights: phase 1 needs a reverse- or forward-KL term");
    }
};

// ---- forward KL: negative mean model log-likelihood of data ----

inline NodePtr fkl_loss(const FlowModel& f, const Tensor& x, const std::vector<double>& cond) {
    return op_neg(op_mean(flow_log_prob(f, x, cond)));
}

// ---- reverse KL: pathwise estimator through generated samples ----

// Target handle for the reverse-KL loss. `value` is a cheap numeric
// evaluation used to screen rows before the graph is built; `graph` builds the
// differentiable log-density on the surviving rows only.
struct RklTarget {
    std::function<double(const double* x, std::size_t dim)> value;
    std::function<NodePtr(const NodePtr& x)> graph;
};

struct RklLoss {
    NodePtr loss;
    std::size_t excluded = 0;  // rows dropped for non-finite target values
};

// Draws m base points, pushes them through the flow and evaluates
//   mean[ log q_z(z) - log|det dT/dz| - log p(T(z)) ]
// over rows whose target evaluation is finite. More than 10% bad rows is an
// error. Base draws are constants, so the estimator is pathwise.
inline RklLoss rkl_loss(const FlowModel& f, const std::vector<double>& cond, std::size_t m,
                        const RklTarget& target, Rng& rng) {
    if (m == 0) throw ValueError("rkl_loss: empty batch");
    Tensor z({m, f.dim});
    if (f.base == BaseKind::normal) {
        for (std::size_t i = 0; i < z.size(); ++i) z[i] = rng.normal();
    } else {
        for (std::size_t i = 0; i < z.size(); ++i) z[i] = rng.uniform(f.box_lo, f.box_hi);
    }
    auto znode = constant(z);
    auto cnode = tile_condition(cond, m);
    auto fwd = flow_forward(f, znode, cnode);

    // screen target values numerically before touching the graph
    std::vector<std::size_t> good;
    good.reserve(m);
    for (std::size_t r = 0; r < m; ++r) {
        const double lp = target.value(fwd.x->value.data() + r * f.dim, f.dim);
        if (std::isfinite(lp)) good.push_back(r);
    }
    RklLoss out;
    out.excluded = m - good.size();
    if (out.excluded * 10 > m)
        throw NumericError("rkl_loss: more than 10% of target evaluations were non-finite");

    auto base_lp = detail::base_log_prob(f, znode);
    Tensor qz_good({good.size()});
    for (std::size_t i = 0; i < good.size(); ++i) qz_good[i] = base_lp->value[good[i]];

    auto x_good = op_gather_rows(fwd.x, good);
    auto ld_good = op_gather_rows(fwd.log_det, good);
    auto lp_good = target.graph(x_good);
    out.loss = op_mean(op_sub(op_sub(constant(qz_good), ld_good), lp_good));
    return out;
}

// ---- adversarial loss ----

//   L_adv = -mean log D(real) - mean log(1 - D(fake))
// computed from logits with softplus for stability. A discriminator stuck at
// 0.5 gives exactly 2 log 2.
inline NodePtr adv_loss(const NodePtr& real_logits, const NodePtr& fake_logits) {
    auto real_term = op_mean(op_softplus(op_neg(real_logits)));
    auto fake_term = op_mean(op_softplus(fake_logits));
    return op_add(real_term, fake_term);
}

inline NodePtr adv_loss(const Discriminator& d, const NodePtr& x_real, const NodePtr& x_fake,
                        const NodePtr& cond_real, const NodePtr& cond_fake) {
    return adv_loss(disc_logits(d, x_real, cond_real), disc_logits(d, x_fake, cond_fake));
}

// ---- combined objective ----

// Terms with zero weight must be omitted (pass nullptr); the corresponding
// losses are then never evaluated. Linear in the weights by construction.
inline NodePtr objective(const LossWeights& w, const NodePtr& l_adv, const NodePtr& l_rkl,
                         const NodePtr& l_fkl) {
    w.validate();
    if (w.l1 > 0.0 && !l_adv) throw ValueError("objective: adversarial term missing");
    if (w.l2 > 0.0 && !l_rkl) throw ValueError("objective: reverse-KL term missing");
    if (w.l3 > 0.0 && !l_fkl) throw ValueError("objective: forward-KL term missing");
    NodePtr o;
    auto fold = [&o](const NodePtr& term) { o = o ? op_add(o, term) : term; };
    if (w.l1 > 0.0) fold(op_mul(cst(-w.l1), l_adv));
    if (w.l2 > 0.0) fold(op_mul(cst(w.l2), l_rkl));
    if (w.l3 > 0.0) fold(op_mul(cst(w.l3), l_fkl));
    return o;
}

// ---- standard reverse-KL targets ----

inline RklTarget make_mog_rkl_target(const MOGParams& p, std::size_t component) {
    p.validate();
    if (component >= p.n_components())
        throw ValueError("make_mog_rkl_target: component out of range");
    const double m1 = p.means[component][0], m2 = p.means[component][1];
    const double var = p.variances[component];
    RklTarget t;
    t.value = [m1, m2, var](const double* x, std::size_t) {
        return detail::log_normal2_iso(x[0], x[1], m1, m2, var);
    };
    t.graph = [m1, m2, var](const NodePtr& x) {
        Tensor mu({2});
        mu[0] = m1;
        mu[1] = m2;
        auto diff = op_sub(x, constant(mu));
        auto ss = op_sum(op_square(diff), {1});
        return op_sub(op_mul(cst(-0.5 / var), ss), cst(std::log(2.0 * M_PI * var)));
    };
    return t;
}

inline RklTarget make_rings_rkl_target(const RingsParams& p, std::size_t component) {
    p.validate();
    if (component >= p.n_components())
        throw ValueError("make_rings_rkl_target: component out of range");
    const double r = p.radii[component];
    const double var = p.sigma * p.sigma;
    RklTarget t;
    t.value = [r, var](const double* x, std::size_t) {
        const double rho = std::hypot(x[0], x[1]);
        if (rho == 0.0) return -std::numeric_limits<double>::infinity();
        return detail::log_normal1(rho, r, var) - std::log(2.0 * M_PI) - std::log(rho);
    };
    t.graph = [r, var](const NodePtr& x) {
        auto rho = op_sqrt(op_sum(op_square(x), {1}));
        auto d = op_sub(rho, cst(r));
        auto radial = op_sub(op_mul(cst(-0.5 / var), op_square(d)),
                             cst(0.5 * std::log(2.0 * M_PI * var)));
        return op_sub(op_sub(radial, cst(std::log(2.0 * M_PI))), op_log(rho));
    };
    return t;
}

// Boltzmann target for spin-lattice flows: log p = -E/T up to the partition
// function, which the reverse-KL objective never needs.
inline RklTarget make_lattice_rkl_target(std::size_t n, const LatticeCondition& cond) {
    cond.validate();
    RklTarget t;
    t.value = [n, cond](const double* x, std::size_t dim) {
        SpinConfig c(n);
        for (std::size_t s = 0; s < dim; ++s) c.theta[s] = wrap_angle(x[s]);
        return log_boltzmann_unnorm(c, cond);
    };
    t.graph = [n, cond](const NodePtr& x) {
        return log_boltzmann_unnorm_graph(x, n, cond);
    };
    return t;
}

}  // namespace advnf
