#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include <advnf/lattice.hpp>
#include <advnf/rng.hpp>
#include <advnf/synthetic.hpp>

#include "support/gradient_check.hpp"

using namespace advnf;

namespace {

// naive mixture density, no log-sum-exp: independent oracle for moderate values
double mog_density_naive(const MOGParams& p, double x1, double x2) {
    double s = 0.0;
    for (std::size_t k = 0; k < p.n_components(); ++k) {
        const double d1 = x1 - p.means[k][0], d2 = x2 - p.means[k][1];
        s += std::exp(-0.5 * (d1 * d1 + d2 * d2) / p.variances[k]) /
             (2.0 * M_PI * p.variances[k]);
    }
    return s / static_cast<double>(p.n_components());
}

}  // namespace

TEST_CASE("mog: single standard component at the origin") {
    MOGParams p;
    p.means = {{0.0, 0.0}};
    p.variances = {1.0};
    REQUIRE(mog_log_density(p, 0.0, 0.0) == Catch::Approx(-std::log(2.0 * M_PI)).epsilon(1e-12));
    REQUIRE(mog_log_density(p, 0.0, 0.0) == Catch::Approx(-1.8379).margin(1e-4));
}

TEST_CASE("mog: log-sum-exp matches the naive sum away from underflow") {
    auto t = make_synthetic_target(SyntheticKind::mog4);
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        const double x1 = rng.uniform(-3.0, 3.0), x2 = rng.uniform(-3.0, 3.0);
        const double naive = std::log(mog_density_naive(t.mog, x1, x2));
        REQUIRE(mog_log_density(t.mog, x1, x2) == Catch::Approx(naive).epsilon(1e-10));
    }
}

TEST_CASE("mog: conditional density of the named component") {
    auto t = make_synthetic_target(SyntheticKind::mog4);
    // component 0 sits at (2,2) with variance 0.25
    const double v = mog_conditional_log_density(t.mog, 0, 2.0, 2.0);
    REQUIRE(v == Catch::Approx(-std::log(2.0 * M_PI * 0.25)).epsilon(1e-12));
    REQUIRE(v == Catch::Approx(-0.4516).margin(1e-4));
    REQUIRE_THROWS_AS(mog_conditional_log_density(t.mog, 4, 0.0, 0.0), ValueError);
}

TEST_CASE("mog: far tail stays finite through log-sum-exp") {
    auto t = make_synthetic_target(SyntheticKind::mog8);
    const double v = mog_log_density(t.mog, 200.0, -200.0);
    REQUIRE(std::isfinite(v));
    REQUIRE(v < -1e5);
}

TEST_CASE("rings: density formula and origin domain error") {
    RingsParams p;
    p.radii = {1.0};
    p.sigma = 0.1;
    // at (1, 0): radial gaussian at its peak, times 1/(2*pi*rho)
    const double expect =
        std::log(1.0 / (0.1 * std::sqrt(2.0 * M_PI))) - std::log(2.0 * M_PI * 1.0);
    REQUIRE(rings_log_density_cartesian(p, 1.0, 0.0) == Catch::Approx(expect).epsilon(1e-12));
    // rotation invariance
    REQUIRE(rings_log_density_cartesian(p, 0.0, -1.0) ==
            Catch::Approx(rings_log_density_cartesian(p, 1.0, 0.0)).epsilon(1e-12));
    REQUIRE_THROWS_AS(rings_log_density_cartesian(p, 0.0, 0.0), NumericError);

    auto t = make_synthetic_target(SyntheticKind::rings4);
    REQUIRE(t.rings.radii == std::vector<double>{1.0, 2.0, 3.0, 4.0});
    const double a = rings_conditional_log_density(t.rings, 2, 3.0, 0.0);
    const double b = rings_conditional_log_density(t.rings, 2, 0.0, 3.0);
    REQUIRE(a == Catch::Approx(b).epsilon(1e-12));
}

TEST_CASE("synthetic sampling: component statistics are right") {
    auto t = make_synthetic_target(SyntheticKind::mog4);
    Rng rng(17);
    const int n = 20000;
    double m1 = 0.0, m2 = 0.0;
    for (int i = 0; i < n; ++i) {
        auto x = sample_mog(t.mog, 1, rng);  // mean (2, -2)
        m1 += x[0];
        m2 += x[1];
    }
    // std error = 0.5 / sqrt(n) ~ 0.0035
    REQUIRE(std::abs(m1 / n - 2.0) < 0.02);
    REQUIRE(std::abs(m2 / n + 2.0) < 0.02);

    auto r = make_synthetic_target(SyntheticKind::rings4);
    double rad = 0.0;
    for (int i = 0; i < n; ++i) {
        auto x = sample_rings(r.rings, 3, rng);  // radius 4
        const double rho = std::hypot(x[0], x[1]);
        REQUIRE(rho > 0.0);
        rad += rho;
    }
    REQUIRE(std::abs(rad / n - 4.0) < 0.01);
}

TEST_CASE("synthetic dataset: labeled draws per component") {
    auto t = make_synthetic_target(SyntheticKind::mog8);
    Rng rng(23);
    auto d = generate_synthetic_dataset(t, 500, rng);
    REQUIRE(d.size() == 4000);
    REQUIRE(d.component[0] == 0);
    REQUIRE(d.component[499] == 0);
    REQUIRE(d.component[500] == 1);
    REQUIRE(d.component[3999] == 7);
    // reproducible
    Rng rng2(23);
    auto d2 = generate_synthetic_dataset(t, 500, rng2);
    REQUIRE(d.x == d2.x);
}

TEST_CASE("condition vectors carry the component mean or radius") {
    auto mog = make_synthetic_target(SyntheticKind::mog4);
    REQUIRE(mog.cond_dim() == 2);
    auto c = mog.condition(1);
    REQUIRE(c.component == 1);
    REQUIRE(c.value == std::vector<double>{mog.mog.means[1][0], mog.mog.means[1][1]});

    auto rings = make_synthetic_target(SyntheticKind::rings4);
    REQUIRE(rings.cond_dim() == 1);
    auto r = rings.condition(3);
    REQUIRE(r.value == std::vector<double>{4.0});
    REQUIRE_THROWS_AS(rings.condition(7), ValueError);
}

// ---- lattice ----

TEST_CASE("wrap_angle: range and edge cases") {
    REQUIRE(wrap_angle(0.0) == 0.0);
    REQUIRE(wrap_angle(2.0 * M_PI) == 0.0);
    REQUIRE(wrap_angle(-0.1) == Catch::Approx(2.0 * M_PI - 0.1));
    REQUIRE(wrap_angle(7.0 * M_PI) == Catch::Approx(M_PI));
    for (double x : {-100.0, -1.0, 0.5, 6.4, 1e6}) {
        const double w = wrap_angle(x);
        REQUIRE(w >= 0.0);
        REQUIRE(w < 2.0 * M_PI);
    }
}

TEST_CASE("spin config: validation and access") {
    REQUIRE_THROWS_AS(SpinConfig(2), ValueError);
    SpinConfig c(4, 0.0);
    REQUIRE(c.sites() == 16);
    c.set(1, 2, 9.0);
    REQUIRE(c.at(1, 2) == Catch::Approx(wrap_angle(9.0)));
    LatticeCondition bad{0.0, 1.0, 0.0};
    REQUIRE_THROWS_AS(bad.validate(), ValueError);
}

TEST_CASE("xy energy: aligned and alternating references") {
    SpinConfig aligned(4, 0.0);
    REQUIRE(xy_energy(aligned, 1.0) == Catch::Approx(-32.0).margin(1e-12));

    // columns alternate 0, pi: horizontal bonds cancel vertical bonds exactly
    SpinConfig alt(4, 0.0);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) alt.set(i, j, (j % 2) ? M_PI : 0.0);
    REQUIRE(xy_energy(alt, 1.0) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("extended xy energy: aligned reference and per-site value") {
    SpinConfig aligned(4, 0.0);
    REQUIRE(exy_energy(aligned, 1.0, 1.0) == Catch::Approx(-48.0).margin(1e-12));
    LatticeCondition cond{1.0, 1.0, 1.0};
    REQUIRE(energy_per_site(aligned, cond) == Catch::Approx(-3.0).margin(1e-12));
    LatticeCondition xy{1.0, 1.5, 0.0};
    REQUIRE(energy_per_site(aligned, xy) == Catch::Approx(-3.0).margin(1e-12));  // -2J
}

TEST_CASE("log boltzmann weight") {
    SpinConfig aligned(4, 0.0);
    LatticeCondition cond{1.0, 1.0, 0.0};
    REQUIRE(log_boltzmann_unnorm(aligned, cond) == Catch::Approx(32.0).margin(1e-12));
    LatticeCondition cold{0.5, 1.0, 0.0};
    REQUIRE(log_boltzmann_unnorm(aligned, cold) == Catch::Approx(64.0).margin(1e-12));
}

TEST_CASE("magnetization: aligned is 1, balanced is 0, range holds") {
    SpinConfig aligned(5, 1.3);
    REQUIRE(magnetization(aligned) == Catch::Approx(1.0).epsilon(1e-12));
    SpinConfig half(4, 0.0);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) half.set(i, j, (j % 2) ? M_PI : 0.0);
    REQUIRE(magnetization(half) == Catch::Approx(0.0).margin(1e-12));
    Rng rng(5);
    for (int k = 0; k < 20; ++k) {
        auto c = SpinConfig::random(4, rng);
        const double m = magnetization(c);
        REQUIRE(m >= 0.0);
        REQUIRE(m <= 1.0);
    }
}

TEST_CASE("energy invariances: translation, rotation, reflection, global spin shift") {
    Rng rng(29);
    auto c = SpinConfig::random(5, rng);
    const double J = 0.8, K = 0.6;
    const double e0 = exy_energy(c, J, K);

    SpinConfig shifted(5);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j)
            shifted.set(i, j, c.at((i + 2) % 5, (j + 3) % 5));
    REQUIRE(exy_energy(shifted, J, K) == Catch::Approx(e0).margin(1e-9));

    SpinConfig rotated(5);  // 90 degrees: (i, j) <- (j, n-1-i)
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j)
            rotated.set(i, j, c.at(j, 5 - 1 - i));
    REQUIRE(exy_energy(rotated, J, K) == Catch::Approx(e0).margin(1e-9));

    SpinConfig mirrored(5);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j)
            mirrored.set(i, j, c.at(i, 5 - 1 - j));
    REQUIRE(exy_energy(mirrored, J, K) == Catch::Approx(e0).margin(1e-9));

    SpinConfig turned(5);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j)
            turned.set(i, j, c.at(i, j) + 1.234);
    REQUIRE(exy_energy(turned, J, K) == Catch::Approx(e0).margin(1e-9));
}

TEST_CASE("delta energy matches a full recompute") {
    Rng rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        const double J = rng.uniform(0.5, 1.5);
        const double K = (trial % 2) ? rng.uniform(0.2, 1.0) : 0.0;
        auto c = SpinConfig::random(4, rng);
        const std::size_t i = rng.uniform_index(4), j = rng.uniform_index(4);
        const double t_new = rng.uniform(0.0, 2.0 * M_PI);
        const double de = delta_energy(c, i, j, t_new, J, K);
        SpinConfig c2 = c;
        c2.set(i, j, t_new);
        const double full = exy_energy(c2, J, K) - exy_energy(c, J, K);
        REQUIRE(de == Catch::Approx(full).margin(1e-10));
    }
}

TEST_CASE("graph energy equals the scalar energy on a batch") {
    Rng rng(37);
    const std::size_t n = 4, m = 3;
    Tensor batch({m, n * n});
    std::vector<SpinConfig> cfgs;
    for (std::size_t r = 0; r < m; ++r) {
        auto c = SpinConfig::random(n, rng);
        cfgs.push_back(c);
        for (std::size_t s = 0; s < n * n; ++s) batch[r * n * n + s] = c.theta[s];
    }
    for (double K : {0.0, 0.7}) {
        auto e = lattice_energy_graph(constant(batch), n, 1.1, K);
        REQUIRE(e->value.shape() == std::vector<std::size_t>{m});
        for (std::size_t r = 0; r < m; ++r)
            REQUIRE(e->value[r] == Catch::Approx(exy_energy(cfgs[r], 1.1, K)).margin(1e-12));
    }
    LatticeCondition cond{0.8, 1.1, 0.7};
    auto lb = log_boltzmann_unnorm_graph(constant(batch), n, cond);
    for (std::size_t r = 0; r < m; ++r)
        REQUIRE(lb->value[r] ==
                Catch::Approx(log_boltzmann_unnorm(cfgs[r], cond)).margin(1e-12));
}

TEST_CASE("energy gradient with respect to angles matches finite differences") {
    Rng rng(41);
    const std::size_t n = 4;
    auto theta = param(Tensor({2, n * n}));
    for (std::size_t i = 0; i < theta->value.size(); ++i)
        theta->value[i] = rng.uniform(0.0, 2.0 * M_PI);
    for (double K : {0.0, 0.5}) {
        auto res = testsupport::check_gradients(
            {theta}, [&] { return op_sum(lattice_energy_graph(theta, n, 1.0, K)); },
            1e-4, 1e-6, 1e-8);
        INFO(res.detail);
        REQUIRE(res.ok);
    }
}
