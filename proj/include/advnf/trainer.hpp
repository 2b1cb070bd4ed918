#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "adam.hpp"
#include "adversarial.hpp"
#include "flow.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace advnf {

// Two-phase training. Phase 1 fits the flow with KL losses only; phase 2
// alternates one generator descent step and one discriminator ascent step per
// iteration, both derived from a single backward pass over the shared
// objective. A plain (non-adversarial) flow is the same code path with the
// adversarial weight pinned to zero and no phase-2 iterations.

struct Lambda1Schedule {
    // (iteration, value) points, piecewise constant from each point on.
    // Values must not increase over the run.
    std::vector<std::pair<std::size_t, double>> points;

    void validate() const {
        for (std::size_t i = 1; i < points.size(); ++i) {
            if (points[i].first <= points[i - 1].first)
                throw ValueError("Lambda1Schedule: iterations must increase");
            if (points[i].second > points[i - 1].second)
                throw ValueError("Lambda1Schedule: values must not increase");
        }
        for (const auto& [it, v] : points)
            if (v < 0.0) throw ValueError("Lambda1Schedule: negative weight");
    }

    double at(std::size_t iter, double fallback) const {
        double v = fallback;
        for (const auto& [start, val] : points) {
            if (iter >= start)
                v = val;
            else
                break;
        }
        return v;
    }
};

struct TrainConfig {
    LossWeights weights;
    Lambda1Schedule lambda1_schedule;  // empty: weights.l1 throughout phase 2
    std::size_t batch_size = 256;

    std::size_t max_epochs = 500;  // phase 1
    std::size_t patience = 10;     // 0 disables early stopping
    double tolerance = 1e-3;       // minimum improvement that resets patience

    // epoch length, in batches per condition, when no dataset drives the loop
    // (pure reverse KL samples its own batches, so the training budget must
    // not depend on how much reference data happens to exist)
    std::size_t rkl_epoch_batches = 4;

    std::size_t phase2_iters = 0;  // 0 leaves the model untouched by phase 2
    double lr_gen = 1e-4;
    double lr_disc = 5e-5;
    bool lr_decay = true;  // halve at 50% and again at 75% of phase 2

    std::uint64_t seed = 1;

    // optional hook: invoked on improving phase-1 epochs and, when
    // checkpoint_every > 0, every that many phase-2 iterations
    std::function<void(int phase, std::size_t iteration)> on_checkpoint;
    std::size_t checkpoint_every = 0;

    void validate() const {
        weights.validate();
        lambda1_schedule.validate();
        if (batch_size == 0) throw ValueError("TrainConfig: batch_size must be positive");
        if (rkl_epoch_batches == 0)
            throw ValueError("TrainConfig: rkl_epoch_batches must be positive");
        if (!(lr_gen > 0.0) || !(lr_disc > 0.0))
            throw ValueError("TrainConfig: learning rates must be positive");
    }
};

// Everything the trainer needs for one condition: the condition vector fed to
// the flow and discriminator, samples of the target for likelihood/real
// batches, and the differentiable target for the reverse-KL term.
struct ConditionData {
    std::vector<double> cond;
    Tensor data;  // (N, dim) in the flow's data space
    RklTarget rkl_target;
};

struct TrainData {
    std::size_t dim = 0;
    std::vector<ConditionData> conditions;

    void validate(const LossWeights& w) const {
        if (conditions.empty()) throw ValueError("TrainData: no conditions");
        for (const auto& c : conditions) {
            if ((w.l3 > 0.0 || w.l1 > 0.0) &&
                (c.data.rank() != 2 || c.data.dim(1) != dim || c.data.dim(0) == 0))
                throw ValueError("TrainData: conditions need (N, dim) sample blocks");
            if (w.l2 > 0.0 && !c.rkl_target.graph)
                throw ValueError("TrainData: reverse KL requested without a target");
        }
    }
};

struct TraceRow {
    int phase = 1;
    std::size_t iteration = 0;
    double l1 = 0.0, l2 = 0.0, l3 = 0.0;
    double total = 0.0;
    double fkl = std::nan("");
    double rkl = std::nan("");
    double adv = std::nan("");
    double lr_gen = 0.0, lr_disc = 0.0;
};

namespace detail {

// hands out row batches from a shuffled pass over one condition's data
class BatchPool {
  public:
    BatchPool(const Tensor* data, Rng rng) : data_(data), rng_(rng) {
        order_.resize(data_->dim(0));
        for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
        rng_.shuffle(order_);
    }

    Tensor next(std::size_t batch) {
        const std::size_t n = order_.size();
        const std::size_t take = std::min(batch, n);
        const std::size_t cols = data_->dim(1);
        Tensor out({take, cols});
        for (std::size_t r = 0; r < take; ++r) {
            if (pos_ == n) {
                rng_.shuffle(order_);
                pos_ = 0;
            }
            const std::size_t src = order_[pos_++];
            for (std::size_t c = 0; c < cols; ++c) out.at(r, c) = data_->at(src, c);
        }
        return out;
    }

    std::size_t batches_per_pass(std::size_t batch) const {
        return (order_.size() + batch - 1) / batch;
    }

  private:
    const Tensor* data_;
    Rng rng_;
    std::vector<std::size_t> order_;
    std::size_t pos_ = 0;
};

inline std::vector<Tensor> snapshot_params(const std::vector<NodePtr>& params) {
    std::vector<Tensor> out;
    out.reserve(params.size());
    for (const auto& p : params) out.push_back(p->value);
    return out;
}

inline void restore_params(const std::vector<NodePtr>& params, const std::vector<Tensor>& snap) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = snap[i];
}

}  // namespace detail

// On return the flow holds the parameters of the best epoch seen (the ones a
// divergence rollback would also restore), so patience overshoot never leaks
// into the final model.
struct Phase1Result {
    std::size_t epochs_run = 0;
    bool early_stopped = false;
    double best_loss = std::nan("");
    std::vector<TraceRow> trace;
};

// Minibatch KL training, one condition per batch in round-robin order, with
// patience-based early stopping on the epoch-mean loss. On a non-finite loss
// the model is restored to the last improving epoch and the error rethrown.
inline Phase1Result train_phase1(FlowModel& flow, const TrainData& data,
                                 const TrainConfig& cfg) {
    cfg.validate();
    cfg.weights.validate_phase1();
    LossWeights w{0.0, cfg.weights.l2, cfg.weights.l3};  // phase 1 is never adversarial
    data.validate(w);

    Rng root(cfg.seed);
    Rng rkl_rng = root.derive("phase1.rkl");
    const std::size_t n_cond = data.conditions.size();
    std::vector<detail::BatchPool> pools;
    if (w.l3 > 0.0)
        for (std::size_t c = 0; c < n_cond; ++c)
            pools.emplace_back(&data.conditions[c].data, root.derive("phase1.pool", c));
    // an epoch covers the dataset when one is consumed; self-sampled reverse
    // KL has no dataset, so its epoch is a fixed batch count instead
    std::size_t rounds = cfg.rkl_epoch_batches;
    if (w.l3 > 0.0) {
        const Tensor& d0 = data.conditions[0].data;
        rounds = 1;
        if (d0.rank() == 2 && d0.dim(0) > 0)
            rounds = (d0.dim(0) + cfg.batch_size - 1) / cfg.batch_size;
    }

    auto params = flow.params();
    AdamState opt(params);
    Phase1Result res;
    std::vector<Tensor> last_good = detail::snapshot_params(params);
    double best = std::numeric_limits<double>::infinity();
    std::size_t wait = 0;

    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        double epoch_loss = 0.0, epoch_fkl = 0.0, epoch_rkl = 0.0;
        std::size_t n_batches = 0, n_fkl = 0, n_rkl = 0;
        try {
            for (std::size_t round = 0; round < rounds; ++round) {
                for (std::size_t c = 0; c < n_cond; ++c) {
                    const auto& cd = data.conditions[c];
                    NodePtr l_fkl, l_rkl;
                    if (w.l3 > 0.0) {
                        l_fkl = fkl_loss(flow, pools[c].next(cfg.batch_size), cd.cond);
                        epoch_fkl += l_fkl->value[0];
                        ++n_fkl;
                    }
                    if (w.l2 > 0.0) {
                        auto r = rkl_loss(flow, cd.cond, cfg.batch_size, cd.rkl_target,
                                          rkl_rng);
                        l_rkl = r.loss;
                        epoch_rkl += l_rkl->value[0];
                        ++n_rkl;
                    }
                    auto obj = objective(w, nullptr, l_rkl, l_fkl);
                    if (!std::isfinite(obj->value[0]))
                        throw NumericError("train_phase1: non-finite loss");
                    backward(obj);
                    opt.step(cfg.lr_gen);
                    zero_grad(params);
                    epoch_loss += obj->value[0];
                    ++n_batches;
                }
            }
        } catch (const NumericError& e) {
            detail::restore_params(params, last_good);
            throw NumericError("train_phase1: diverged in epoch " + std::to_string(epoch) +
                               " (" + e.what() + "); model restored to last good state");
        }
        epoch_loss /= static_cast<double>(n_batches);

        TraceRow row;
        row.phase = 1;
        row.iteration = epoch;
        row.l1 = 0.0;
        row.l2 = w.l2;
        row.l3 = w.l3;
        row.total = epoch_loss;
        if (n_fkl) row.fkl = epoch_fkl / static_cast<double>(n_fkl);
        if (n_rkl) row.rkl = epoch_rkl / static_cast<double>(n_rkl);
        row.lr_gen = cfg.lr_gen;
        row.lr_disc = 0.0;
        res.trace.push_back(row);
        res.epochs_run = epoch + 1;

        if (epoch_loss < best - cfg.tolerance) {
            best = epoch_loss;
            wait = 0;
            last_good = detail::snapshot_params(params);
            if (cfg.on_checkpoint) cfg.on_checkpoint(1, epoch);
        } else if (cfg.patience > 0) {
            ++wait;
            if (wait >= cfg.patience) {
                res.early_stopped = true;
                break;
            }
        }
    }
    // end on the best-epoch parameters rather than wherever patience ran out
    detail::restore_params(params, last_good);
    res.best_loss = best;
    return res;
}

struct Phase2Result {
    std::size_t iterations_run = 0;
    std::vector<TraceRow> trace;
};

// Adversarial fine-tuning: per iteration one generator step down the shared
// objective and one discriminator step up it, gradients taken from the same
// backward pass. The adversarial weight follows the schedule; learning rates
// halve at 50% and 75% of the run.
inline Phase2Result train_phase2(FlowModel& flow, Discriminator& disc, const TrainData& data,
                                 const TrainConfig& cfg) {
    cfg.validate();
    {  // the schedule can raise the adversarial weight above its base value
        LossWeights eff = cfg.weights;
        for (const auto& [it, v] : cfg.lambda1_schedule.points) eff.l1 = std::max(eff.l1, v);
        data.validate(eff);
    }
    Phase2Result res;
    if (cfg.phase2_iters == 0) return res;  // explicitly a no-op

    Rng root(cfg.seed);
    Rng rkl_rng = root.derive("phase2.rkl");
    Rng fake_rng = root.derive("phase2.fake");
    const std::size_t n_cond = data.conditions.size();
    const bool needs_data = cfg.weights.l3 > 0.0 || cfg.weights.l1 > 0.0 ||
                            !cfg.lambda1_schedule.points.empty();
    std::vector<detail::BatchPool> pools;
    if (needs_data)
        for (std::size_t c = 0; c < n_cond; ++c)
            pools.emplace_back(&data.conditions[c].data, root.derive("phase2.pool", c));

    auto gen_params = flow.params();
    auto disc_params = disc.params();
    AdamState gen_opt(gen_params);
    AdamState disc_opt(disc_params);
    std::vector<Tensor> last_good_gen = detail::snapshot_params(gen_params);
    std::vector<Tensor> last_good_disc = detail::snapshot_params(disc_params);

    const std::size_t K = cfg.phase2_iters;
    for (std::size_t iter = 0; iter < K; ++iter) {
        const double l1 = cfg.lambda1_schedule.points.empty()
                              ? cfg.weights.l1
                              : cfg.lambda1_schedule.at(iter, cfg.weights.l1);
        LossWeights w{l1, cfg.weights.l2, cfg.weights.l3};
        double decay = 1.0;
        if (cfg.lr_decay) {
            if (iter * 4 >= K * 3)
                decay = 0.25;
            else if (iter * 2 >= K)
                decay = 0.5;
        }
        const double lr_gen = cfg.lr_gen * decay;
        const double lr_disc = cfg.lr_disc * decay;
        const std::size_t c = iter % n_cond;
        const auto& cd = data.conditions[c];

        try {
            NodePtr l_fkl, l_rkl, l_adv;
            double rkl_value = std::nan(""), fkl_value = std::nan(""),
                   adv_value = std::nan("");
            if (w.l3 > 0.0) {
                l_fkl = fkl_loss(flow, pools[c].next(cfg.batch_size), cd.cond);
                fkl_value = l_fkl->value[0];
            }
            if (w.l2 > 0.0) {
                auto r = rkl_loss(flow, cd.cond, cfg.batch_size, cd.rkl_target, rkl_rng);
                l_rkl = r.loss;
                rkl_value = l_rkl->value[0];
            }
            if (w.l1 > 0.0) {
                Tensor real = pools[c].next(cfg.batch_size);
                const std::size_t m = real.dim(0);
                Tensor z({m, flow.dim});
                if (flow.base == BaseKind::normal)
                    for (std::size_t i = 0; i < z.size(); ++i) z[i] = fake_rng.normal();
                else
                    for (std::size_t i = 0; i < z.size(); ++i)
                        z[i] = fake_rng.uniform(flow.box_lo, flow.box_hi);
                auto cnode = tile_condition(cd.cond, m);
                auto fake = flow_forward(flow, constant(z), cnode);
                l_adv = adv_loss(disc, constant(real), fake.x, cnode, cnode);
                adv_value = l_adv->value[0];
            }
            auto obj = objective(w, l_adv, l_rkl, l_fkl);
            if (!std::isfinite(obj->value[0]))
                throw NumericError("train_phase2: non-finite objective");
            backward(obj);
            gen_opt.step(lr_gen, 1.0);    // generator descends the objective
            disc_opt.step(lr_disc, -1.0); // discriminator ascends it
            zero_grad(gen_params);
            zero_grad(disc_params);

            TraceRow row;
            row.phase = 2;
            row.iteration = iter;
            row.l1 = w.l1;
            row.l2 = w.l2;
            row.l3 = w.l3;
            row.total = obj->value[0];
            row.fkl = fkl_value;
            row.rkl = rkl_value;
            row.adv = adv_value;
            row.lr_gen = lr_gen;
            row.lr_disc = lr_disc;
            res.trace.push_back(row);
            res.iterations_run = iter + 1;
            if (iter % 100 == 0) {
                last_good_gen = detail::snapshot_params(gen_params);
                last_good_disc = detail::snapshot_params(disc_params);
            }
            if (cfg.checkpoint_every > 0 && cfg.on_checkpoint &&
                (iter + 1) % cfg.checkpoint_every == 0)
                cfg.on_checkpoint(2, iter);
        } catch (const NumericError& e) {
            detail::restore_params(gen_params, last_good_gen);
            detail::restore_params(disc_params, last_good_disc);
            throw NumericError("train_phase2: diverged at iteration " + std::to_string(iter) +
                               " (" + e.what() + "); model restored to last good state");
        }
    }
    return res;
}

// ---- benchmark weight presets ----

enum class Variant { fkl, rkl, fkl_rkl };
enum class Domain { synthetic, xy, exy };

struct Preset {
    LossWeights weights;
    // fractional schedule, resolved against the phase-2 iteration count
    std::vector<std::pair<double, double>> lambda1_frac_schedule;
};

inline const char* variant_name(Variant v) {
    switch (v) {
        case Variant::fkl: return "fkl";
        case Variant::rkl: return "rkl";
        case Variant::fkl_rkl: return "fkl_rkl";
    }
    return "?";
}

// Benchmark loss weights per domain and variant. The adversarial flag pins
// the adversarial weight to zero without touching the KL weights.
inline Preset preset_weights(Domain d, Variant v, bool adversarial) {
    Preset p;
    switch (d) {
        case Domain::synthetic:
            switch (v) {
                case Variant::fkl: p.weights = {1.0, 0.0, 1.0}; break;
                case Variant::rkl: p.weights = {1.0, 1.0, 0.0}; break;
                case Variant::fkl_rkl: p.weights = {1.0, 0.5, 1.0}; break;
            }
            break;
        case Domain::xy:
            switch (v) {
                case Variant::fkl: p.weights = {100.0, 0.0, 1.0}; break;
                case Variant::rkl:
                    p.weights = {10.0, 1.0, 0.0};
                    p.lambda1_frac_schedule = {{0.0, 100.0}, {0.5, 10.0}};
                    break;
                case Variant::fkl_rkl: p.weights = {1.0, 0.5, 1.0}; break;
            }
            break;
        case Domain::exy:
            switch (v) {
                case Variant::fkl: p.weights = {100.0, 0.0, 1.0}; break;
                case Variant::rkl: p.weights = {5.0, 1.0, 0.0}; break;
                case Variant::fkl_rkl: p.weights = {1.0, 1.0, 1.0}; break;
            }
            break;
    }
    if (!adversarial) {
        p.weights.l1 = 0.0;
        p.lambda1_frac_schedule.clear();
        if (d == Domain::synthetic && v == Variant::fkl_rkl) p.weights = {0.0, 0.5, 1.0};
        if (d == Domain::xy && v == Variant::fkl_rkl) p.weights = {0.0, 0.5, 1.0};
        if (d == Domain::exy && v == Variant::fkl_rkl) p.weights = {0.0, 1.0, 1.0};
    }
    return p;
}

inline Lambda1Schedule resolve_schedule(const Preset& p, std::size_t phase2_iters) {
    Lambda1Schedule s;
    for (const auto& [frac, val] : p.lambda1_frac_schedule)
        s.points.push_back({static_cast<std::size_t>(frac * static_cast<double>(phase2_iters)),
                            val});
    s.validate();
    return s;
}

}  // namespace advnf
