#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "lattice.hpp"
#include "rng.hpp"

namespace advnf {

// Single-site Metropolis for the lattice models, plus the independent
// Metropolis-Hastings resampler used to de-bias trained flows. One "step" is
// one proposal at one uniformly chosen site; a sweep is n*n steps.

enum class ProposalKind { full_resample, perturbation };

struct MHConfig {
    std::size_t burn_in_steps = 0;
    std::size_t thinning = 1;  // record every thinning-th step, >= 1
    std::size_t n_samples = 0;
    ProposalKind proposal = ProposalKind::full_resample;
    double delta = 0.5;  // half-width of the perturbation proposal
    std::uint64_t seed = 1;

    void validate() const {
        if (thinning < 1) throw ValueError("MHConfig: thinning must be >= 1");
        if (proposal == ProposalKind::perturbation && !(delta > 0.0))
            throw ValueError("MHConfig: perturbation width must be positive");
    }
};

// proposal_fn(rng, current_angle) -> proposed angle; injectable for testing
using AngleProposal = std::function<double(Rng&, double)>;

inline AngleProposal make_proposal(ProposalKind kind, double delta) {
    if (kind == ProposalKind::full_resample)
        return [](Rng& rng, double) { return rng.uniform(0.0, 2.0 * M_PI); };
    return [delta](Rng& rng, double t) { return wrap_angle(t + rng.uniform(-delta, delta)); };
}

// One Metropolis attempt at a uniformly chosen site. Returns acceptance.
inline bool mh_step(SpinConfig& c, const LatticeCondition& cond, Rng& rng,
                    const AngleProposal& propose) {
    const std::size_t site = rng.uniform_index(c.sites());
    const std::size_t i = site / c.n, j = site % c.n;
    const double t_new = propose(rng, c.at(i, j));
    const double de = delta_energy(c, i, j, t_new, cond.J, cond.K);
    bool accept = de <= 0.0;
    if (!accept) accept = rng.uniform() < std::exp(-de / cond.T);
    if (accept) c.set(i, j, t_new);
    return accept;
}

inline bool mh_step(SpinConfig& c, const LatticeCondition& cond, Rng& rng,
                    ProposalKind kind = ProposalKind::full_resample, double delta = 0.5) {
    return mh_step(c, cond, rng, make_proposal(kind, delta));
}

struct MHResult {
    std::vector<SpinConfig> samples;
    std::size_t accepted = 0;
    std::size_t attempted = 0;

    double acceptance_rate() const {
        return attempted ? 100.0 * static_cast<double>(accepted) / static_cast<double>(attempted)
                         : 0.0;
    }
};

// Full chain: uniform random initialization, burn-in, then one recorded
// configuration every `thinning` steps.
inline MHResult mh_generate(std::size_t n, const LatticeCondition& cond, const MHConfig& mc) {
    mc.validate();
    cond.validate();
    Rng rng(mc.seed);
    const AngleProposal propose = make_proposal(mc.proposal, mc.delta);
    SpinConfig c = SpinConfig::random(n, rng);
    MHResult out;
    for (std::size_t s = 0; s < mc.burn_in_steps; ++s) {
        out.accepted += mh_step(c, cond, rng, propose);
        ++out.attempted;
    }
    out.samples.reserve(mc.n_samples);
    for (std::size_t k = 0; k < mc.n_samples; ++k) {
        for (std::size_t s = 0; s < mc.thinning; ++s) {
            out.accepted += mh_step(c, cond, rng, propose);
            ++out.attempted;
        }
        out.samples.push_back(c);
    }
    return out;
}

// ---- independent Metropolis-Hastings ----

template <typename S>
struct IMHResult {
    std::vector<S> chain;  // length == attempted; rejected steps repeat the state
    std::size_t accepted = 0;
    std::size_t attempted = 0;
    std::size_t nonfinite_proposals = 0;  // diagnostic, not part of the accept math

    double acceptance_rate() const {
        return attempted ? 100.0 * static_cast<double>(accepted) / static_cast<double>(attempted)
                         : 0.0;
    }
};

// sampler(rng) -> (sample, log q(sample)); target_log_p(sample) -> double.
// The chain starts from the first finite proposal (counted as accepted); a
// non-finite proposal afterwards is treated as a rejection.
template <typename S, typename Sampler, typename LogP>
IMHResult<S> imh_resample(Sampler&& sampler, LogP&& target_log_p, std::size_t n, Rng& rng) {
    IMHResult<S> out;
    if (n == 0) return out;
    out.chain.reserve(n);

    S cur;
    double cur_lp = 0.0, cur_lq = 0.0;
    for (;;) {
        auto [x, lq] = sampler(rng);
        const double lp = target_log_p(x);
        if (std::isfinite(lp) && std::isfinite(lq)) {
            cur = std::move(x);
            cur_lp = lp;
            cur_lq = lq;
            break;
        }
        ++out.nonfinite_proposals;
    }
    out.chain.push_back(cur);
    ++out.accepted;
    ++out.attempted;

    while (out.chain.size() < n) {
        auto [x, lq] = sampler(rng);
        ++out.attempted;
        bool accept = false;
        const double lp = std::isfinite(lq) ? target_log_p(x) : 0.0;
        if (std::isfinite(lq) && std::isfinite(lp)) {
            const double log_ratio = (lp - cur_lp) + (cur_lq - lq);
            accept = log_ratio >= 0.0 || rng.uniform() < std::exp(log_ratio);
        } else {
            ++out.nonfinite_proposals;
        }
        if (accept) {
            cur = std::move(x);
            cur_lp = lp;
            cur_lq = lq;
            ++out.accepted;
        }
        out.chain.push_back(cur);
    }
    return out;
}

}  // namespace advnf
