#pragma once
// Evaluation metrics: negative log-likelihood, IMH acceptance rate, and
// histogram comparisons (percent overlap, 1-D earth-mover distance) over
// lattice observables, plus a per-mode occupancy diagnostic for the
// synthetic targets.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <mutex>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <advnf/adversarial.hpp>
#include <advnf/checkpoint.hpp>
#include <advnf/flow.hpp>
#include <advnf/lattice.hpp>
#include <advnf/mcmc.hpp>
#include <advnf/synthetic.hpp>

namespace advnf {

// ---- histograms ----

struct Histogram {
    std::vector<double> edges;   // ascending bin boundaries, bins() + 1 entries
    std::vector<double> masses;  // one nonnegative mass per bin
    std::size_t clamped = 0;     // samples outside the range, forced into edge bins

    static Histogram uniform(double lo, double hi, std::size_t bins) {
        if (!(hi > lo)) throw ValueError("Histogram: range must be increasing");
        if (bins == 0) throw ValueError("Histogram: need at least one bin");
        Histogram h;
        h.edges.resize(bins + 1);
        for (std::size_t i = 0; i <= bins; ++i)
            h.edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
        h.masses.assign(bins, 0.0);
        return h;
    }

    std::size_t bins() const { return masses.size(); }

    void add(double x) {
        if (!std::isfinite(x)) throw NumericError("Histogram: non-finite sample");
        if (x < edges.front()) {
            masses.front() += 1.0;
            ++clamped;
            return;
        }
        if (x > edges.back()) {
            masses.back() += 1.0;
            ++clamped;
            return;
        }
        auto it = std::upper_bound(edges.begin(), edges.end(), x);
        std::size_t idx = static_cast<std::size_t>(it - edges.begin());
        idx = (idx == 0) ? 0 : idx - 1;
        if (idx >= bins()) idx = bins() - 1;  // x exactly at the upper boundary
        masses[idx] += 1.0;
    }

    double total() const {
        double t = 0.0;
        for (double m : masses) t += m;
        return t;
    }

    Histogram normalized() const {
        const double t = total();
        if (!(t > 0.0)) throw ValueError("Histogram: cannot normalize an empty histogram");
        Histogram h = *this;
        for (double& m : h.masses) m /= t;
        return h;
    }
};

namespace detail {

inline void require_same_edges(const Histogram& p, const Histogram& q, const char* who) {
    if (p.edges != q.edges) throw ValueError(std::string(who) + ": histogram edges differ");
}

}  // namespace detail

// Overlap of two (normalized) histograms in percent: 100 * sum_i min(p_i, q_i).
inline double percent_overlap(const Histogram& p, const Histogram& q) {
    detail::require_same_edges(p, q, "percent_overlap");
    Histogram pn = p.normalized(), qn = q.normalized();
    double s = 0.0;
    for (std::size_t i = 0; i < pn.bins(); ++i) s += std::min(pn.masses[i], qn.masses[i]);
    return std::clamp(100.0 * s, 0.0, 100.0);
}

// 1-D earth-mover distance via cumulative differences. By default the result
// is in observable-axis units (each term weighted by its bin width); with
// scale_by_bin_width=false it is in raw bin counts.
inline double emd_1d(const Histogram& p, const Histogram& q, bool scale_by_bin_width = true) {
    detail::require_same_edges(p, q, "emd_1d");
    Histogram pn = p.normalized(), qn = q.normalized();
    double cum = 0.0, emd = 0.0;
    for (std::size_t i = 0; i < pn.bins(); ++i) {
        cum += pn.masses[i] - qn.masses[i];
        const double w = scale_by_bin_width ? (pn.edges[i + 1] - pn.edges[i]) : 1.0;
        emd += std::abs(cum) * w;
    }
    return emd;
}

// ---- lattice observables ----

struct ObservableHistograms {
    Histogram energy;         // per-site energy, 80 bins on [-2, 0]
    Histogram magnetization;  // 40 bins on [0, 1]
};

inline ObservableHistograms observable_histograms(const std::vector<SpinConfig>& configs,
                                                  double J, double K) {
    if (configs.empty()) throw ValueError("observable_histograms: empty ensemble");
    ObservableHistograms h{Histogram::uniform(-2.0, 0.0, 80), Histogram::uniform(0.0, 1.0, 40)};
    const LatticeCondition cond{1.0, J, K};
    for (const auto& c : configs) {
        h.energy.add(energy_per_site(c, cond));
        h.magnetization.add(magnetization(c));
    }
    return h;
}

// ---- negative log-likelihood ----

inline double nll(const FlowModel& f, const Tensor& test_set, const std::vector<double>& cond) {
    if (test_set.rank() != 2 || test_set.dim(0) == 0)
        throw ValueError("nll: empty test set");
    return fkl_loss(f, test_set, cond)->value[0];
}

// ---- per-mode occupancy (collapse diagnostic) ----

// Fraction of the samples within 3 standard deviations of each mode center
// (radially, for rings). Samples are (m, 2) rows; fractions need not sum to 1.
inline std::vector<double> mode_occupancy(const Tensor& samples, const SyntheticTarget& t) {
    if (samples.rank() != 2 || samples.dim(1) != 2 || samples.dim(0) == 0)
        throw ValueError("mode_occupancy: expected nonempty (m, 2) samples");
    const std::size_t m = samples.dim(0);
    const std::size_t k = t.n_components();
    std::vector<double> occ(k, 0.0);
    for (std::size_t r = 0; r < m; ++r) {
        const double x1 = samples[r * 2], x2 = samples[r * 2 + 1];
        for (std::size_t c = 0; c < k; ++c) {
            if (t.is_mog()) {
                const double d1 = x1 - t.mog.means[c][0];
                const double d2 = x2 - t.mog.means[c][1];
                const double band = 3.0 * std::sqrt(t.mog.variances[c]);
                if (d1 * d1 + d2 * d2 <= band * band) occ[c] += 1.0;
            } else {
                const double rho = std::hypot(x1, x2);
                if (std::abs(rho - t.rings.radii[c]) <= 3.0 * t.rings.sigma) occ[c] += 1.0;
            }
        }
    }
    for (double& o : occ) o /= static_cast<double>(m);
    return occ;
}

// ---- model evaluation against reference ensembles ----

struct ConditionMetrics {
    double nll = 0.0;
    double ar = 0.0;  // percent
    double ol_energy = 0.0, emd_energy = 0.0;
    double ol_mag = 0.0, emd_mag = 0.0;
};

struct MetricsReport {
    std::vector<ConditionMetrics> per_condition;
    ConditionMetrics mean;
    ConditionMetrics std;  // population standard deviation across conditions
};

namespace detail {

inline void aggregate(MetricsReport& rep) {
    const auto fields = {&ConditionMetrics::nll,       &ConditionMetrics::ar,
                         &ConditionMetrics::ol_energy, &ConditionMetrics::emd_energy,
                         &ConditionMetrics::ol_mag,    &ConditionMetrics::emd_mag};
    const double n = static_cast<double>(rep.per_condition.size());
    for (auto f : fields) {
        double mu = 0.0;
        for (const auto& row : rep.per_condition) mu += row.*f;
        mu /= n;
        double var = 0.0;
        for (const auto& row : rep.per_condition) {
            const double d = row.*f - mu;
            var += d * d;
        }
        rep.mean.*f = mu;
        rep.std.*f = std::sqrt(var / n);
    }
}

}  // namespace detail

struct ObservableComparison {
    double ol_energy = 0.0, emd_energy = 0.0;
    double ol_mag = 0.0, emd_mag = 0.0;
};

inline ObservableComparison compare_ensembles(const std::vector<SpinConfig>& samples,
                                              const std::vector<SpinConfig>& reference,
                                              double J, double K) {
    auto hs = observable_histograms(samples, J, K);
    auto hr = observable_histograms(reference, J, K);
    ObservableComparison c;
    c.ol_energy = percent_overlap(hs.energy, hr.energy);
    c.emd_energy = emd_1d(hs.energy, hr.energy);
    c.ol_mag = percent_overlap(hs.magnetization, hr.magnetization);
    c.emd_mag = emd_1d(hs.magnetization, hr.magnetization);
    return c;
}

// One lattice condition's evaluation inputs: the physics parameters, the
// condition vector the flow was trained with, a reference MCMC ensemble, and
// held-out rows for the likelihood.
struct ConditionEval {
    LatticeCondition lat;
    std::vector<double> cond;
    std::vector<SpinConfig> reference;
    Tensor test_set;  // (N, n*n) raw angle rows
};

// Draws n samples per condition from the flow, de-biases them through IMH
// against the unnormalized Boltzmann weight, and compares observable
// histograms against the reference ensemble. Deterministic given the seed.
inline MetricsReport evaluate_model(const FlowModel& f, const std::vector<ConditionEval>& conds,
                                    std::size_t n_per_condition, std::uint64_t seed,
                                    std::size_t jobs = 1) {
    if (conds.empty()) throw ValueError("evaluate_model: no conditions");
    if (n_per_condition == 0) throw ValueError("evaluate_model: need samples per condition");
    const std::size_t n_side = f.lattice_n;
    if (n_side == 0) throw ValueError("evaluate_model: flow does not model a lattice");
    for (const auto& c : conds)
        if (c.reference.empty()) throw ValueError("evaluate_model: missing reference ensemble");

    MetricsReport rep;
    rep.per_condition.resize(conds.size());
    Rng root(seed);

    auto eval_one = [&](std::size_t ci) {
        const auto& ce = conds[ci];
        Rng rng = root.derive("evaluate_model", ci);
        auto target = make_lattice_rkl_target(n_side, ce.lat);

        const std::size_t batch = std::min<std::size_t>(256, n_per_condition);
        FlowSamples buf;
        std::size_t idx = batch;  // force a fill on first use
        auto sampler = [&](Rng& r) {
            if (idx == batch) {
                buf = flow_sample(f, ce.cond, batch, r);
                idx = 0;
            }
            std::vector<double> row(buf.x.data() + idx * f.dim,
                                    buf.x.data() + (idx + 1) * f.dim);
            const double lq = buf.log_q[idx];
            ++idx;
            return std::make_pair(std::move(row), lq);
        };
        auto log_p = [&](const std::vector<double>& row) {
            return target.value(row.data(), row.size());
        };
        auto imh = imh_resample<std::vector<double>>(sampler, log_p, n_per_condition, rng);

        std::vector<SpinConfig> chain;
        chain.reserve(imh.chain.size());
        for (const auto& row : imh.chain) {
            SpinConfig c(n_side);
            for (std::size_t s = 0; s < row.size(); ++s) c.theta[s] = wrap_angle(row[s]);
            chain.push_back(std::move(c));
        }

        ConditionMetrics m;
        m.ar = imh.acceptance_rate();
        auto cmp = compare_ensembles(chain, ce.reference, ce.lat.J, ce.lat.K);
        m.ol_energy = cmp.ol_energy;
        m.emd_energy = cmp.emd_energy;
        m.ol_mag = cmp.ol_mag;
        m.emd_mag = cmp.emd_mag;
        m.nll = nll(f, ce.test_set, ce.cond);
        rep.per_condition[ci] = m;
    };

    if (jobs <= 1) {
        for (std::size_t ci = 0; ci < conds.size(); ++ci) eval_one(ci);
    } else {
        std::vector<std::thread> pool;
        std::size_t next = 0;
        const std::size_t workers = std::min(jobs, conds.size());
        std::mutex mx;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (;;) {
                    std::size_t ci;
                    {
                        std::lock_guard<std::mutex> lock(mx);
                        if (next >= conds.size()) return;
                        ci = next++;
                    }
                    eval_one(ci);
                }
            });
        for (auto& t : pool) t.join();
    }

    detail::aggregate(rep);
    return rep;
}

// ---- synthetic-target evaluation (likelihood, acceptance, occupancy) ----

struct SyntheticConditionEval {
    SyntheticCondition cond;
    Tensor test_set;  // (N, 2)
};

struct SyntheticMetrics {
    double nll = 0.0;
    double ar = 0.0;
};

struct SyntheticReport {
    std::vector<SyntheticMetrics> per_condition;
    SyntheticMetrics mean;
    SyntheticMetrics std;
    std::vector<double> occupancy;  // per mode, over IMH output pooled across conditions
};

inline SyntheticReport evaluate_synthetic_model(const FlowModel& f, const SyntheticTarget& t,
                                                const std::vector<SyntheticConditionEval>& conds,
                                                std::size_t n_per_condition,
                                                std::uint64_t seed) {
    if (conds.empty()) throw ValueError("evaluate_synthetic_model: no conditions");
    if (n_per_condition == 0)
        throw ValueError("evaluate_synthetic_model: need samples per condition");

    SyntheticReport rep;
    Rng root(seed);
    Tensor pooled({conds.size() * n_per_condition, 2});
    std::size_t out = 0;

    for (std::size_t ci = 0; ci < conds.size(); ++ci) {
        const auto& ce = conds[ci];
        Rng rng = root.derive("evaluate_synthetic", ci);
        RklTarget target = t.is_mog() ? make_mog_rkl_target(t.mog, ce.cond.component)
                                      : make_rings_rkl_target(t.rings, ce.cond.component);

        const std::size_t batch = std::min<std::size_t>(256, n_per_condition);
        FlowSamples buf;
        std::size_t idx = batch;
        auto sampler = [&](Rng& r) {
            if (idx == batch) {
                buf = flow_sample(f, ce.cond.value, batch, r);
                idx = 0;
            }
            std::array<double, 2> x{buf.x[idx * 2], buf.x[idx * 2 + 1]};
            const double lq = buf.log_q[idx];
            ++idx;
            return std::make_pair(x, lq);
        };
        auto log_p = [&](const std::array<double, 2>& x) { return target.value(x.data(), 2); };
        auto imh = imh_resample<std::array<double, 2>>(sampler, log_p, n_per_condition, rng);

        for (const auto& x : imh.chain) {
            pooled[out * 2] = x[0];
            pooled[out * 2 + 1] = x[1];
            ++out;
        }

        SyntheticMetrics m;
        m.ar = imh.acceptance_rate();
        m.nll = nll(f, ce.test_set, ce.cond.value);
        rep.per_condition.push_back(m);
    }

    const double n = static_cast<double>(rep.per_condition.size());
    for (auto field : {&SyntheticMetrics::nll, &SyntheticMetrics::ar}) {
        double mu = 0.0;
        for (const auto& r : rep.per_condition) mu += r.*field;
        mu /= n;
        double var = 0.0;
        for (const auto& r : rep.per_condition) {
            const double d = r.*field - mu;
            var += d * d;
        }
        rep.mean.*field = mu;
        rep.std.*field = std::sqrt(var / n);
    }
    rep.occupancy = mode_occupancy(pooled, t);
    return rep;
}

// ---- report CSV ----

inline void write_metrics_header(std::ostream& os) {
    os << "variant,condition,nll,ar,ol_energy,emd_energy,ol_mag,emd_mag\n";
}

inline void write_metrics_row(std::ostream& os, const std::string& variant,
                              const std::string& condition, const ConditionMetrics& m) {
    os << variant << ',' << condition << ',' << detail::format_double(m.nll) << ','
       << detail::format_double(m.ar) << ',' << detail::format_double(m.ol_energy) << ','
       << detail::format_double(m.emd_energy) << ',' << detail::format_double(m.ol_mag) << ','
       << detail::format_double(m.emd_mag) << '\n';
}

// One row per condition plus a summary row holding the across-condition mean.
inline void write_metrics_report(std::ostream& os, const std::string& variant,
                                 const std::vector<std::string>& condition_labels,
                                 const MetricsReport& rep) {
    if (condition_labels.size() != rep.per_condition.size())
        throw ValueError("write_metrics_report: label count mismatch");
    for (std::size_t i = 0; i < rep.per_condition.size(); ++i)
        write_metrics_row(os, variant, condition_labels[i], rep.per_condition[i]);
    write_metrics_row(os, variant, "mean", rep.mean);
}

}  // namespace advnf
