#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "autodiff.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace advnf {

// Square-lattice planar spin models with periodic boundaries.
//   XY:       E = -J * sum_<ij> cos(theta_i - theta_j)
//   extended: adds -K * sum_plaquettes cos(tl - tr + br - bl)
// Energies are exposed both as plain-double functions (used by MCMC) and as
// graph ops over batches of flattened configurations (used when the Boltzmann
// log-density must be differentiated).

inline double wrap_angle(double x) {
    const double two_pi = 2.0 * M_PI;
    double w = x - two_pi * std::floor(x / two_pi);
    if (w >= two_pi) w = 0.0;  // guards the x = -eps rounding case
    return w;
}

struct SpinConfig {
    std::size_t n = 0;
    std::vector<double> theta;  // n*n angles in [0, 2*pi), row-major

    SpinConfig() = default;

    explicit SpinConfig(std::size_t n_, double fill = 0.0) : n(n_), theta(n_ * n_, fill) {
        if (n < 3) throw ValueError("SpinConfig: lattice side must be >= 3");
    }

    double at(std::size_t i, std::size_t j) const { return theta[i * n + j]; }
    void set(std::size_t i, std::size_t j, double v) { theta[i * n + j] = wrap_angle(v); }

    std::size_t sites() const { return n * n; }

    static SpinConfig random(std::size_t n, Rng& rng) {
        SpinConfig c(n);
        for (double& t : c.theta) t = rng.uniform(0.0, 2.0 * M_PI);
        return c;
    }
};

struct LatticeCondition {
    double T = 1.0;  // temperature
    double J = 1.0;  // bond coupling
    double K = 0.0;  // plaquette coupling (0 disables the extended term)

    void validate() const {
        if (!(T > 0.0)) throw ValueError("LatticeCondition: temperature must be positive");
    }
};

// bond part: right and down neighbor of each site, each bond counted once
inline double xy_energy(const SpinConfig& c, double J) {
    const std::size_t n = c.n;
    double e = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double t = c.at(i, j);
            e += std::cos(t - c.at(i, (j + 1) % n));
            e += std::cos(t - c.at((i + 1) % n, j));
        }
    return -J * e;
}

// plaquette corners: top-left, top-right, bottom-right, bottom-left
inline double exy_energy(const SpinConfig& c, double J, double K) {
    double e = xy_energy(c, J);
    if (K == 0.0) return e;
    const std::size_t n = c.n;
    double p = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const std::size_t i1 = (i + 1) % n, j1 = (j + 1) % n;
            p += std::cos(c.at(i, j) - c.at(i, j1) + c.at(i1, j1) - c.at(i1, j));
        }
    return e - K * p;
}

inline double lattice_energy(const SpinConfig& c, const LatticeCondition& cond) {
    return exy_energy(c, cond.J, cond.K);
}

// log of the unnormalized Boltzmann weight, -E/T
inline double log_boltzmann_unnorm(const SpinConfig& c, const LatticeCondition& cond) {
    cond.validate();
    return -lattice_energy(c, cond) / cond.T;
}

// |mean spin vector|, in [0, 1]
inline double magnetization(const SpinConfig& c) {
    double sx = 0.0, sy = 0.0;
    for (double t : c.theta) {
        sx += std::cos(t);
        sy += std::sin(t);
    }
    const double inv = 1.0 / static_cast<double>(c.sites());
    return std::sqrt(sx * sx + sy * sy) * inv;
}

inline double energy_per_site(const SpinConfig& c, const LatticeCondition& cond) {
    return lattice_energy(c, cond) / static_cast<double>(c.sites());
}

// Energy terms touching site (i, j) only: the four incident bonds plus, when
// K != 0, the four plaquettes containing the site. Used for incremental
// Metropolis updates.
inline double local_energy(const SpinConfig& c, std::size_t i, std::size_t j, double theta_ij,
                           double J, double K) {
    const std::size_t n = c.n;
    const std::size_t im = (i + n - 1) % n, ip = (i + 1) % n;
    const std::size_t jm = (j + n - 1) % n, jp = (j + 1) % n;
    double e = 0.0;
    e -= J * (std::cos(theta_ij - c.at(i, jp)) + std::cos(theta_ij - c.at(i, jm)) +
              std::cos(theta_ij - c.at(ip, j)) + std::cos(theta_ij - c.at(im, j)));
    if (K != 0.0) {
        // plaquettes anchored at (i,j), (i,jm), (im,j), (im,jm); the site takes
        // the TL, TR, BL, BR corner respectively
        double p = 0.0;
        p += std::cos(theta_ij - c.at(i, jp) + c.at(ip, jp) - c.at(ip, j));
        p += std::cos(c.at(i, jm) - theta_ij + c.at(ip, j) - c.at(ip, jm));
        p += std::cos(c.at(im, j) - c.at(im, jp) + c.at(i, jp) - theta_ij);
        p += std::cos(c.at(im, jm) - c.at(im, j) + theta_ij - c.at(i, jm));
        e -= K * p;
    }
    return e;
}

// energy change from setting site (i, j) to theta_new
inline double delta_energy(const SpinConfig& c, std::size_t i, std::size_t j, double theta_new,
                           double J, double K) {
    return local_energy(c, i, j, theta_new, J, K) - local_energy(c, i, j, c.at(i, j), J, K);
}

// ---- graph versions over batches of flattened configurations ----

namespace detail {

inline std::vector<std::size_t> roll_right(std::size_t n) {
    std::vector<std::size_t> p(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) p[i * n + j] = i * n + (j + 1) % n;
    return p;
}

inline std::vector<std::size_t> roll_down(std::size_t n) {
    std::vector<std::size_t> p(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) p[i * n + j] = ((i + 1) % n) * n + j;
    return p;
}

inline std::vector<std::size_t> roll_diag(std::size_t n) {
    std::vector<std::size_t> p(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) p[i * n + j] = ((i + 1) % n) * n + (j + 1) % n;
    return p;
}

}  // namespace detail

// theta: (m, n*n) batch of configurations -> (m) energies, differentiable
inline NodePtr lattice_energy_graph(const NodePtr& theta, std::size_t n, double J, double K) {
    if (theta->value.rank() != 2 || theta->value.dim(1) != n * n)
        throw ValueError("lattice_energy_graph: expected shape (m, n*n)");
    const auto right = op_gather_cols(theta, detail::roll_right(n));
    const auto down = op_gather_cols(theta, detail::roll_down(n));
    NodePtr bonds = op_add(op_cos(op_sub(theta, right)), op_cos(op_sub(theta, down)));
    NodePtr e = op_mul(cst(-J), op_sum(bonds, {1}));
    if (K != 0.0) {
        const auto diag = op_gather_cols(theta, detail::roll_diag(n));
        // tl - tr + br - bl
        NodePtr arg = op_add(op_sub(theta, right), op_sub(diag, down));
        e = op_add(e, op_mul(cst(-K), op_sum(op_cos(arg), {1})));
    }
    return e;
}

inline NodePtr log_boltzmann_unnorm_graph(const NodePtr& theta, std::size_t n,
                                          const LatticeCondition& cond) {
    cond.validate();
    return op_mul(cst(-1.0 / cond.T), lattice_energy_graph(theta, n, cond.J, cond.K));
}

}  // namespace advnf
