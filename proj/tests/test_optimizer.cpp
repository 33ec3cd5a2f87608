#include <cmath>
#include <vector>

#include "doctest.h"
#include "dprp/error.hpp"
#include "dprp/optimizer.hpp"
#include "fd_check.hpp"

using namespace dprp;
using dprp_test::rand_tensor;

namespace {

struct Bench {
    Tensor p;
    std::vector<NamedTensor> params;
    std::vector<Tensor> grads;
    SgdState state;

    Bench(Tensor init, Tensor grad, const SgdConfig& cfg) : p(std::move(init)) {
        params.push_back({"p", &p});
        grads.push_back(std::move(grad));
        state.init(params, cfg);
    }
};

}  // namespace

TEST_CASE("sgd with zero momentum and decay is vanilla gradient descent") {
    Rng rng(401);
    SgdConfig cfg;
    cfg.lr = 0.05;
    cfg.momentum = 0.0;
    cfg.weight_decay = 0.0;
    Tensor p0 = rand_tensor({3, 4}, rng);
    Bench b(p0, rand_tensor({3, 4}, rng), cfg);
    sgd_step(b.params, b.grads, b.state, cfg);
    for (size_t i = 0; i < p0.data.size(); ++i)
        CHECK(b.p.data[i] == doctest::Approx(p0.data[i] - 0.05 * b.grads[0].data[i]).epsilon(1e-14));
}

TEST_CASE("two momentum steps with constant gradient displace by lr*g*2.9") {
    Rng rng(402);
    SgdConfig cfg;
    cfg.lr = 0.01;
    cfg.momentum = 0.9;
    cfg.weight_decay = 0.0;
    Tensor p0 = rand_tensor({5}, rng);
    Tensor g = rand_tensor({5}, rng);
    Bench b(p0, g, cfg);
    sgd_step(b.params, b.grads, b.state, cfg);
    sgd_step(b.params, b.grads, b.state, cfg);
    for (size_t i = 0; i < p0.data.size(); ++i)
        CHECK(p0.data[i] - b.p.data[i] == doctest::Approx(0.01 * g.data[i] * 2.9).epsilon(1e-12));
}

TEST_CASE("weight decay alone shrinks parameters by (1 - lr*wd) per step") {
    Rng rng(403);
    SgdConfig cfg;
    cfg.lr = 0.1;
    cfg.momentum = 0.0;
    cfg.weight_decay = 0.01;
    Tensor p0 = rand_tensor({4, 2}, rng);
    Bench b(p0, Tensor({4, 2}), cfg);
    for (int step = 0; step < 3; ++step) sgd_step(b.params, b.grads, b.state, cfg);
    double shrink = std::pow(1.0 - 0.1 * 0.01, 3);
    for (size_t i = 0; i < p0.data.size(); ++i)
        CHECK(b.p.data[i] == doctest::Approx(p0.data[i] * shrink).epsilon(1e-12));
}

TEST_CASE("sgd_step validates alignment and shapes") {
    Rng rng(404);
    SgdConfig cfg;
    Tensor p = rand_tensor({2, 2}, rng);
    std::vector<NamedTensor> params{{"p", &p}};
    SgdState state;
    state.init(params, cfg);
    std::vector<Tensor> none;
    CHECK_THROWS_AS(sgd_step(params, none, state, cfg), Error);
    std::vector<Tensor> wrong{rand_tensor({2, 3}, rng)};
    CHECK_THROWS_WITH_AS(sgd_step(params, wrong, state, cfg), doctest::Contains("shape mismatch"), Error);
}

TEST_CASE("sgd updates are float-rounded in f32 mode") {
    PrecisionScope scope(Precision::f32);
    Rng rng(405);
    SgdConfig cfg;
    cfg.lr = 0.017;
    Tensor p0 = rand_tensor({7}, rng);
    quantize_inplace(p0);
    Bench b(p0, rand_tensor({7}, rng), cfg);
    sgd_step(b.params, b.grads, b.state, cfg);
    for (double v : b.p.data) CHECK(v == static_cast<double>(static_cast<float>(v)));
    for (double v : b.state.velocity[0].data) CHECK(v == static_cast<double>(static_cast<float>(v)));
}

TEST_CASE("sgd config validation") {
    SgdConfig cfg;
    cfg.lr = 0.0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = SgdConfig{};
    cfg.momentum = 1.0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = SgdConfig{};
    cfg.weight_decay = -1e-9;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = SgdConfig{};
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = SgdConfig{};
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("state init zeroes one buffer per parameter") {
    Rng rng(406);
    Tensor a = rand_tensor({3, 2}, rng);
    Tensor c = rand_tensor({5}, rng);
    std::vector<NamedTensor> params{{"a", &a}, {"c", &c}};
    SgdConfig cfg;
    cfg.lr = 0.25;
    SgdState state;
    state.init(params, cfg);
    CHECK(state.lr == 0.25);
    REQUIRE(state.velocity.size() == 2);
    CHECK(state.velocity[0].shape == a.shape);
    CHECK(state.velocity[1].shape == c.shape);
    for (double v : state.velocity[0].data) CHECK(v == 0.0);
}

TEST_CASE("plateau keeps the rate while the loss improves") {
    PlateauState plateau;
    SgdState state;
    state.lr = 0.1;
    for (int e = 0; e < 40; ++e) CHECK(plateau_step(plateau, state, 1.0 - 0.01 * e) == 0.1);
}

TEST_CASE("a flat stretch of 11 epochs triggers exactly one reduction") {
    PlateauState plateau;
    SgdState state;
    state.lr = 0.1;
    plateau_step(plateau, state, 1.0);  // establishes the best
    int cuts = 0;
    for (int e = 1; e <= 11; ++e) {
        double before = state.lr;
        plateau_step(plateau, state, 1.0);
        if (state.lr < before) {
            ++cuts;
            CHECK(e == 11);
        }
    }
    CHECK(cuts == 1);
    CHECK(state.lr == doctest::Approx(0.01).epsilon(1e-12));
}

TEST_CASE("two flat plateaus take the rate from 0.1 to 0.001") {
    PlateauState plateau;
    SgdState state;
    state.lr = 0.1;
    plateau_step(plateau, state, 1.0);
    for (int e = 0; e < 11; ++e) plateau_step(plateau, state, 1.0);
    CHECK(state.lr == doctest::Approx(0.01).epsilon(1e-12));
    plateau_step(plateau, state, 0.5);  // new best starts the second plateau
    for (int e = 0; e < 11; ++e) plateau_step(plateau, state, 0.5);
    CHECK(state.lr == doctest::Approx(0.001).epsilon(1e-12));
}

TEST_CASE("the rate never drops below min_lr") {
    PlateauState plateau;
    SgdState state;
    state.lr = 0.1;
    plateau_step(plateau, state, 1.0);
    for (int round = 0; round < 8; ++round)
        for (int e = 0; e < 11; ++e) plateau_step(plateau, state, 1.0);
    CHECK(state.lr == 1e-5);
}

TEST_CASE("improvement must clear the 1e-8 tolerance") {
    PlateauState plateau;
    SgdState state;
    state.lr = 0.1;
    plateau_step(plateau, state, 1.0);
    plateau_step(plateau, state, 1.0 - 1e-9);  // inside tolerance: stalls
    CHECK(plateau.stalled == 1);
    plateau_step(plateau, state, 1.0 - 1e-7);  // clears it
    CHECK(plateau.stalled == 0);
    CHECK(plateau.best == doctest::Approx(1.0 - 1e-7).epsilon(1e-15));
}
