// Trains a reverse-KL flow on the 3x3 XY model at T=1 and compares three
// estimates of the mean energy per site: long-run MCMC, raw flow samples,
// and flow samples de-biased by independent Metropolis-Hastings resampling.
//
// The point of the demo is what the numbers show: a flow trained on the
// reverse KL alone concentrates on a subset of the target's support, and
// resampling can only correct the density *within* the region the proposal
// actually covers.  The raw-flow and resampled estimates therefore agree
// with each other while both keep a residual offset from the MCMC
// reference.  Closing that gap is what the adversarial training phase is
// for (see mixture_modes for the two-phase recipe on a synthetic target).

#include <cstdio>
#include <vector>

#include <advnf/adversarial.hpp>
#include <advnf/flow.hpp>
#include <advnf/lattice.hpp>
#include <advnf/mcmc.hpp>
#include <advnf/trainer.hpp>

using namespace advnf;

namespace {

SpinConfig wrapped_config(std::size_t n, const double* row) {
    SpinConfig c(n);
    for (std::size_t s = 0; s < c.sites(); ++s) c.theta[s] = wrap_angle(row[s]);
    return c;
}

}  // namespace

int main() {
    const std::size_t n = 3;
    const LatticeCondition lat{1.0, 1.0, 0.0};
    const std::size_t dim = n * n;
    Rng rng(7);

    // Reference: single-site Metropolis with a long burn-in and wide thinning.
    MHConfig mc;
    mc.burn_in_steps = 20000;
    mc.thinning = 20;
    mc.n_samples = 20000;
    mc.seed = rng.derive("mcmc").seed();
    MHResult ref = mh_generate(n, lat, mc);
    double e_ref = 0.0;
    for (const auto& c : ref.samples) e_ref += energy_per_site(c, lat);
    e_ref /= static_cast<double>(ref.samples.size());

    // Reverse-KL-only flow: no training data, just the target density.
    Rng init_rng = rng.derive("init");
    FlowModel flow = make_lattice_flow(n, 1, 4, init_rng, {32, 32});

    TrainConfig cfg;
    cfg.max_epochs = 300;
    cfg.batch_size = 128;
    cfg.rkl_epoch_batches = 1;
    cfg.lr_gen = 2e-3;
    cfg.weights = {0.0, 1.0, 0.0};
    cfg.patience = 0;
    cfg.seed = rng.derive("train").seed();

    TrainData data;
    data.dim = dim;
    data.conditions.push_back({{lat.T}, Tensor{}, make_lattice_rkl_target(n, lat)});
    std::printf("training a reverse-KL flow on the 3x3 XY model at T=%.1f...\n", lat.T);
    train_phase1(flow, data, cfg);

    // Raw flow estimate: sample, wrap angles back onto [0, 2pi), average.
    const std::vector<double> cond{lat.T};
    Rng sample_rng = rng.derive("sample");
    FlowSamples raw = flow_sample(flow, cond, 20000, sample_rng);
    double e_raw = 0.0;
    for (std::size_t i = 0; i < raw.log_q.size(); ++i)
        e_raw += energy_per_site(wrapped_config(n, raw.x.data() + i * dim), lat);
    e_raw /= static_cast<double>(raw.log_q.size());

    // De-biased estimate: independent Metropolis-Hastings with the flow as
    // the proposal.  Exact in the limit *if* the proposal covers the target.
    using Row = std::vector<double>;
    const RklTarget target = make_lattice_rkl_target(n, lat);
    FlowSamples buf;
    std::size_t next = 0;
    auto sampler = [&](Rng& r) -> std::pair<Row, double> {
        if (next >= buf.log_q.size()) {
            buf = flow_sample(flow, cond, 256, r);
            next = 0;
        }
        Row row(buf.x.data() + next * dim, buf.x.data() + (next + 1) * dim);
        const double lq = buf.log_q[next];
        ++next;
        return {std::move(row), lq};
    };
    auto log_p = [&](const Row& row) { return target.value(row.data(), dim); };

    std::printf("\n3x3 XY model at T=%.1f, mean energy per site:\n", lat.T);
    std::printf("  MCMC reference:            %+.4f\n", e_ref);
    std::printf("  flow, raw samples:         %+.4f\n", e_raw);
    for (const std::size_t len : {std::size_t{2000}, std::size_t{20000}}) {
        next = buf.log_q.size();  // reset the sampler buffer between chains
        Rng imh_rng = rng.derive("imh", len);
        IMHResult<Row> imh = imh_resample<Row>(sampler, log_p, len, imh_rng);
        double e_imh = 0.0;
        std::size_t streak = 0, best_streak = 0;
        for (std::size_t i = 0; i < imh.chain.size(); ++i) {
            e_imh += energy_per_site(wrapped_config(n, imh.chain[i].data()), lat);
            streak = (i > 0 && imh.chain[i] == imh.chain[i - 1]) ? streak + 1 : 1;
            best_streak = std::max(best_streak, streak);
        }
        e_imh /= static_cast<double>(imh.chain.size());
        std::printf("  flow + resampling (%5zu): %+.4f  (acceptance %.1f%%, longest hold %.1f%%)\n",
                    len, e_imh, imh.acceptance_rate(),
                    100.0 * static_cast<double>(best_streak) / static_cast<double>(len));
    }
    std::printf(
        "\nThe resampled estimates track the raw flow estimate, not the\n"
        "reference: the reverse-KL flow under-covers the target, and the\n"
        "accept/reject step cannot restore mass the proposal never emits.\n"
        "The acceptance and longest-hold columns diagnose how bad it is --\n"
        "a poorly covering proposal shows acceptance falling with chain\n"
        "length and chains that freeze on rare high-ratio states.  The fix\n"
        "is a better-covering proposal, which is what the adversarial\n"
        "training phase is for (see mixture_modes).\n");
    return 0;
}
