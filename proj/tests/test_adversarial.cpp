#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <memory>

#include <advnf/adversarial.hpp>

using namespace advnf;

namespace {

RklTarget standard_normal_target(double shift = 0.0) {
    RklTarget t;
    t.value = [](const double* x, std::size_t dim) {
        double s = 0.0;
        for (std::size_t j = 0; j < dim; ++j) s += x[j] * x[j];
        return -0.5 * s - 0.5 * static_cast<double>(dim) * std::log(2.0 * M_PI);
    };
    t.graph = [shift](const NodePtr& x) {
        const std::size_t d = x->value.dim(1);
        auto s = op_sum(op_square(x), std::vector<std::size_t>{1});
        auto lp = op_sub(op_mul(cst(-0.5), s),
                         cst(0.5 * static_cast<double>(d) * std::log(2.0 * M_PI)));
        if (shift != 0.0) lp = op_add(lp, cst(shift));
        return lp;
    };
    return t;
}

void zero_final_layer(Mlp& net) {
    const std::size_t last = net.n_layers() - 1;
    auto w = net.weight(last);
    auto b = net.bias(last);
    for (std::size_t i = 0; i < w->value.size(); ++i) w->value[i] = 0.0;
    for (std::size_t i = 0; i < b->value.size(); ++i) b->value[i] = 0.0;
}

}  // namespace

TEST_CASE("adv_loss: an undecided discriminator scores exactly 2 log 2") {
    Rng rng(1);
    auto d = make_synthetic_discriminator(2, rng);
    zero_final_layer(d.net);

    Tensor xr({8, 2});
    Tensor xf({8, 2});
    for (std::size_t i = 0; i < xr.size(); ++i) {
        xr[i] = rng.uniform(-2, 2);
        xf[i] = rng.uniform(-2, 2);
    }
    auto cond = tile_condition({1, 0}, 8);
    auto loss = adv_loss(d, constant(xr), constant(xf), cond, cond);
    REQUIRE(loss->value[0] == Catch::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
    REQUIRE(loss->value[0] == Catch::Approx(1.3863).margin(1e-4));
}

TEST_CASE("adv_loss: gradient signs push logits apart") {
    auto lr = param(Tensor({4}, 0.0));
    auto lf = param(Tensor({4}, 0.0));
    auto loss = adv_loss(lr, lf);
    backward(loss);
    // lowering the loss means raising real logits and lowering fake ones
    for (std::size_t i = 0; i < 4; ++i) {
        REQUIRE(lr->grad[i] == Catch::Approx(-0.5 / 4.0).epsilon(1e-12));
        REQUIRE(lf->grad[i] == Catch::Approx(0.5 / 4.0).epsilon(1e-12));
    }
}

TEST_CASE("adv_loss keeps the saturating form for the generator") {
    // with the generator far behind, its gradient through -L_adv vanishes
    auto lf = param(Tensor({1}, -20.0));
    auto obj = op_mul(cst(-1.0), adv_loss(constant(Tensor({1}, 0.0)), lf));
    backward(obj);
    REQUIRE(std::abs(lf->grad[0]) < 1e-8);
}

TEST_CASE("discriminator logits are clamped") {
    Rng rng(2);
    auto d = make_synthetic_discriminator(1, rng);
    for (const auto& p : d.net.params())
        for (std::size_t i = 0; i < p->value.size(); ++i)
            p->value[i] = (p->value[i] >= 0 ? 50.0 : -50.0);
    Tensor x({1, 2}, 100.0);
    auto lg = disc_logits(d, constant(x), tile_condition({1}, 1));
    REQUIRE(std::abs(lg->value[0]) <= 30.0);
}

TEST_CASE("lattice discriminator sees angles through cos/sin features") {
    Rng rng(3);
    auto d = make_lattice_discriminator(3, rng);
    Tensor x({2, 9});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(0.0, 2.0 * M_PI);
    Tensor x_shift = x;
    for (std::size_t i = 0; i < x.size(); ++i) x_shift[i] += 2.0 * M_PI;
    auto cond = tile_condition({0.9}, 2);
    auto a = disc_logits(d, constant(x), cond);
    auto b = disc_logits(d, constant(x_shift), cond);
    for (std::size_t r = 0; r < 2; ++r)
        REQUIRE(a->value[r] == Catch::Approx(b->value[r]).margin(1e-9));
}

TEST_CASE("fkl_loss: identity flow on a batch at the origin gives log 2 pi") {
    Rng rng(4);
    auto f = make_synthetic_flow(1, 4, rng);
    Tensor x({3, 2}, 0.0);
    auto loss = fkl_loss(f, x, {1});
    REQUIRE(loss->value[0] == Catch::Approx(std::log(2.0 * M_PI)).epsilon(1e-12));
}

TEST_CASE("rkl_loss: vanishes when the model already matches the target") {
    Rng rng(5);
    auto f = make_synthetic_flow(1, 4, rng);  // identity at init, base = N(0, I)
    auto target = standard_normal_target();
    Rng draw(6);
    auto r = rkl_loss(f, {1}, 64, target, draw);
    REQUIRE(r.excluded == 0);
    REQUIRE(std::abs(r.loss->value[0]) < 1e-12);
}

TEST_CASE("rkl_loss: additive constant in the target shifts the loss exactly") {
    Rng rng(7);
    auto f = make_synthetic_flow(1, 4, rng);
    for (const auto& p : f.params())
        for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] += rng.uniform(-0.2, 0.2);
    const double kappa = 3.75;
    Rng d1(8), d2(8);  // identical base draws
    auto l_plain = rkl_loss(f, {1}, 64, standard_normal_target(), d1);
    auto l_shift = rkl_loss(f, {1}, 64, standard_normal_target(kappa), d2);
    REQUIRE(l_shift.loss->value[0] ==
            Catch::Approx(l_plain.loss->value[0] - kappa).epsilon(1e-12));
}

TEST_CASE("rkl_loss: non-finite target rows are excluded, too many is an error") {
    Rng rng(9);
    auto f = make_synthetic_flow(1, 2, rng);

    auto counting_target = [](std::size_t period) {
        auto n = std::make_shared<std::size_t>(0);
        RklTarget t = standard_normal_target();
        auto base = t.value;
        t.value = [n, period, base](const double* x, std::size_t dim) {
            const std::size_t k = (*n)++;
            if (k % period == period - 1) return std::nan("");
            return base(x, dim);
        };
        return t;
    };

    Rng d1(10);
    auto ok = rkl_loss(f, {1}, 50, counting_target(10), d1);  // 5 of 50 dropped: at the limit
    REQUIRE(ok.excluded == 5);
    REQUIRE(std::isfinite(ok.loss->value[0]));

    Rng d2(10);
    REQUIRE_THROWS_AS(rkl_loss(f, {1}, 50, counting_target(5), d2), NumericError);
}

TEST_CASE("objective: linear in the weights, zero-weight terms stay absent") {
    auto a = constant(Tensor({}, 1.3));
    auto r = constant(Tensor({}, -0.7));
    auto k = constant(Tensor({}, 2.1));

    auto o1 = objective({1.0, 2.0, 3.0}, a, r, k);
    auto o2 = objective({2.0, 4.0, 6.0}, a, r, k);
    REQUIRE(o2->value[0] == Catch::Approx(2.0 * o1->value[0]).epsilon(1e-12));
    REQUIRE(o1->value[0] ==
            Catch::Approx(-1.0 * 1.3 + 2.0 * (-0.7) + 3.0 * 2.1).epsilon(1e-12));

    // zero-weight terms are passed as null and never touched
    auto o3 = objective({0.0, 0.0, 1.0}, nullptr, nullptr, k);
    REQUIRE(o3->value[0] == Catch::Approx(2.1).epsilon(1e-12));

    REQUIRE_THROWS_AS(objective({0.0, 0.0, 0.0}, a, r, k), ValueError);
    REQUIRE_THROWS_AS(objective({1.0, 0.0, 0.0}, nullptr, nullptr, nullptr), ValueError);
    REQUIRE_THROWS_AS(objective({-1.0, 0.0, 1.0}, a, r, k), ValueError);
}

TEST_CASE("mixture and ring targets agree with the reference densities") {
    auto mog = make_synthetic_target(SyntheticKind::mog8);
    auto t = make_mog_rkl_target(mog.mog, 3);
    double x[2] = {1.2, -0.4};
    const double ref = mog.conditional_log_density(3, x[0], x[1]);
    REQUIRE(t.value(x, 2) == Catch::Approx(ref).epsilon(1e-12));
    Tensor xt({1, 2});
    xt[0] = x[0];
    xt[1] = x[1];
    REQUIRE(t.graph(constant(xt))->value[0] == Catch::Approx(ref).epsilon(1e-10));

    auto rings = make_synthetic_target(SyntheticKind::rings4);
    auto rt = make_rings_rkl_target(rings.rings, 2);
    double y[2] = {-2.1, 1.7};
    const double rref = rings.conditional_log_density(2, y[0], y[1]);
    REQUIRE(rt.value(y, 2) == Catch::Approx(rref).epsilon(1e-12));
    Tensor yt({1, 2});
    yt[0] = y[0];
    yt[1] = y[1];
    REQUIRE(rt.graph(constant(yt))->value[0] == Catch::Approx(rref).epsilon(1e-10));

    // the ring density is singular at the origin; the screen must reject it
    double origin[2] = {0.0, 0.0};
    REQUIRE_FALSE(std::isfinite(rt.value(origin, 2)));
}

TEST_CASE("lattice target matches the spin-model log weight") {
    const std::size_t n = 3;
    LatticeCondition cond{1.2, 1.0, 0.5};
    auto t = make_lattice_rkl_target(n, cond);
    Rng rng(11);
    Tensor x({2, n * n});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-8.0, 8.0);  // raw angles
    auto g = t.graph(constant(x));
    for (std::size_t r = 0; r < 2; ++r) {
        SpinConfig c(n);
        for (std::size_t s = 0; s < n * n; ++s) c.set(s / n, s % n, x[r * n * n + s]);
        const double ref = log_boltzmann_unnorm(c, cond);
        REQUIRE(g->value[r] == Catch::Approx(ref).margin(1e-9));
        REQUIRE(t.value(x.data() + r * n * n, n * n) == Catch::Approx(ref).margin(1e-9));
    }
}
