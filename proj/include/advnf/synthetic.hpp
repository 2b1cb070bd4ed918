#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "rng.hpp"
#include "tensor.hpp"

namespace advnf {

// 2-D synthetic multi-modal targets: isotropic Gaussian mixtures and
// concentric rings. Components have equal weight; conditioning names one
// component.

struct MOGParams {
    std::vector<std::array<double, 2>> means;
    std::vector<double> variances;  // per-component isotropic sigma^2

    std::size_t n_components() const { return means.size(); }

    void validate() const {
        if (means.empty() || means.size() != variances.size())
            throw ValueError("MOGParams: means/variances must be non-empty and match");
        for (double v : variances)
            if (!(v > 0.0)) throw ValueError("MOGParams: variances must be positive");
    }
};

struct RingsParams {
    std::vector<double> radii;
    double sigma = 0.1;  // radial std deviation, shared

    std::size_t n_components() const { return radii.size(); }

    void validate() const {
        if (radii.empty()) throw ValueError("RingsParams: no radii");
        for (double r : radii)
            if (!(r > 0.0)) throw ValueError("RingsParams: radii must be positive");
        if (!(sigma > 0.0)) throw ValueError("RingsParams: sigma must be positive");
    }
};

// Condition for synthetic targets: the defining parameter of the chosen
// component — the Gaussian mean for mixtures, the ring radius for rings —
// which is what the flow is conditioned on. The index is kept for
// bookkeeping (dataset labels, per-mode diagnostics).
struct SyntheticCondition {
    std::size_t component = 0;
    std::vector<double> value;  // mean (2 entries) or radius (1 entry)
};

namespace detail {

inline double log_normal2_iso(double x1, double x2, double m1, double m2, double var) {
    const double d1 = x1 - m1, d2 = x2 - m2;
    return -0.5 * (d1 * d1 + d2 * d2) / var - std::log(2.0 * M_PI * var);
}

inline double log_normal1(double x, double mean, double var) {
    const double d = x - mean;
    return -0.5 * d * d / var - 0.5 * std::log(2.0 * M_PI * var);
}

inline double log_sum_exp(const std::vector<double>& v) {
    double mx = v[0];
    for (double x : v) mx = std::max(mx, x);
    double s = 0.0;
    for (double x : v) s += std::exp(x - mx);
    return mx + std::log(s);
}

}  // namespace detail

// log of the full (equal-weight) mixture density at x
inline double mog_log_density(const MOGParams& p, double x1, double x2) {
    p.validate();
    std::vector<double> terms(p.n_components());
    for (std::size_t k = 0; k < terms.size(); ++k)
        terms[k] = detail::log_normal2_iso(x1, x2, p.means[k][0], p.means[k][1], p.variances[k]);
    return detail::log_sum_exp(terms) - std::log(static_cast<double>(p.n_components()));
}

// log density of one named component (the conditional target)
inline double mog_conditional_log_density(const MOGParams& p, std::size_t component,
                                          double x1, double x2) {
    p.validate();
    if (component >= p.n_components())
        throw ValueError("mog_conditional_log_density: component out of range");
    return detail::log_normal2_iso(x1, x2, p.means[component][0], p.means[component][1],
                                   p.variances[component]);
}

// Cartesian density of the rings target: a Gaussian profile in the radius,
// uniform in angle, with the 1/|x| polar-area factor. Undefined at the origin.
inline double rings_log_density_cartesian(const RingsParams& p, double x1, double x2) {
    p.validate();
    const double rho = std::sqrt(x1 * x1 + x2 * x2);
    if (rho == 0.0)
        throw NumericError("rings_log_density_cartesian: density undefined at the origin");
    const double var = p.sigma * p.sigma;
    std::vector<double> terms(p.n_components());
    for (std::size_t k = 0; k < terms.size(); ++k)
        terms[k] = detail::log_normal1(rho, p.radii[k], var);
    return detail::log_sum_exp(terms) - std::log(static_cast<double>(p.n_components())) -
           std::log(2.0 * M_PI) - std::log(rho);
}

inline double rings_conditional_log_density(const RingsParams& p, std::size_t component,
                                            double x1, double x2) {
    p.validate();
    if (component >= p.n_components())
        throw ValueError("rings_conditional_log_density: component out of range");
    const double rho = std::sqrt(x1 * x1 + x2 * x2);
    if (rho == 0.0)
        throw NumericError("rings_conditional_log_density: density undefined at the origin");
    const double var = p.sigma * p.sigma;
    return detail::log_normal1(rho, p.radii[component], var) - std::log(2.0 * M_PI) -
           std::log(rho);
}

inline std::array<double, 2> sample_mog(const MOGParams& p, std::size_t component, Rng& rng) {
    p.validate();
    if (component >= p.n_components())
        throw ValueError("sample_mog: component out of range");
    const double s = std::sqrt(p.variances[component]);
    return {p.means[component][0] + s * rng.normal(), p.means[component][1] + s * rng.normal()};
}

// Radial draws that land at or below zero are rejected and redrawn.
inline std::array<double, 2> sample_rings(const RingsParams& p, std::size_t component, Rng& rng) {
    p.validate();
    if (component >= p.n_components())
        throw ValueError("sample_rings: component out of range");
    double rho = p.radii[component] + p.sigma * rng.normal();
    while (!(rho > 0.0))
        rho = p.radii[component] + p.sigma * rng.normal();
    const double phi = rng.uniform(0.0, 2.0 * M_PI);
    return {rho * std::cos(phi), rho * std::sin(phi)};
}

// ---- unified target handle ----

enum class SyntheticKind { mog4, mog8, rings4 };

struct SyntheticTarget {
    SyntheticKind kind;
    MOGParams mog;
    RingsParams rings;

    bool is_mog() const { return kind != SyntheticKind::rings4; }

    std::size_t n_components() const {
        return is_mog() ? mog.n_components() : rings.n_components();
    }

    double conditional_log_density(std::size_t component, double x1, double x2) const {
        return is_mog() ? mog_conditional_log_density(mog, component, x1, x2)
                        : rings_conditional_log_density(rings, component, x1, x2);
    }

    // entries of the condition vector fed to conditional models
    std::size_t cond_dim() const { return is_mog() ? 2 : 1; }

    SyntheticCondition condition(std::size_t component) const {
        if (component >= n_components())
            throw ValueError("SyntheticTarget: component index out of range");
        SyntheticCondition c;
        c.component = component;
        if (is_mog())
            c.value = {mog.means[component][0], mog.means[component][1]};
        else
            c.value = {rings.radii[component]};
        return c;
    }

    double mixture_log_density(double x1, double x2) const {
        return is_mog() ? mog_log_density(mog, x1, x2)
                        : rings_log_density_cartesian(rings, x1, x2);
    }

    std::array<double, 2> sample(std::size_t component, Rng& rng) const {
        return is_mog() ? sample_mog(mog, component, rng) : sample_rings(rings, component, rng);
    }
};

// Standard benchmark geometries.
inline SyntheticTarget make_synthetic_target(SyntheticKind kind) {
    SyntheticTarget t;
    t.kind = kind;
    switch (kind) {
        case SyntheticKind::mog4:
            t.mog.means = {{2.0, 2.0}, {2.0, -2.0}, {-2.0, 2.0}, {-2.0, -2.0}};
            t.mog.variances.assign(4, 0.25);
            break;
        case SyntheticKind::mog8: {
            const double r = 3.0;
            for (int k = 0; k < 8; ++k) {
                const double a = 2.0 * M_PI * k / 8.0;
                t.mog.means.push_back({r * std::cos(a), r * std::sin(a)});
            }
            t.mog.variances.assign(8, 0.09);
            break;
        }
        case SyntheticKind::rings4:
            t.rings.radii = {1.0, 2.0, 3.0, 4.0};
            t.rings.sigma = 0.1;
            break;
    }
    return t;
}

inline const char* synthetic_kind_name(SyntheticKind k) {
    switch (k) {
        case SyntheticKind::mog4: return "mog4";
        case SyntheticKind::mog8: return "mog8";
        case SyntheticKind::rings4: return "rings4";
    }
    return "?";
}

// Labeled draws, samples_per_component from each component in order.
struct SyntheticDataset {
    std::vector<std::array<double, 2>> x;
    std::vector<std::size_t> component;

    std::size_t size() const { return x.size(); }
};

inline SyntheticDataset generate_synthetic_dataset(const SyntheticTarget& target,
                                                   std::size_t samples_per_component,
                                                   Rng& rng) {
    SyntheticDataset d;
    const std::size_t k = target.n_components();
    d.x.reserve(k * samples_per_component);
    d.component.reserve(k * samples_per_component);
    for (std::size_t c = 0; c < k; ++c)
        for (std::size_t s = 0; s < samples_per_component; ++s) {
            d.x.push_back(target.sample(c, rng));
            d.component.push_back(c);
        }
    return d;
}

}  // namespace advnf
