#include <doctest.h>

#include <cmath>
#include <vector>

#include "dprp/model.hpp"
#include "dprp/optimizer.hpp"
#include "dprp/pruning.hpp"
#include "dprp/rng.hpp"
#include "fd_check.hpp"

using namespace dprp;
using dprp_test::rand_tensor;

TEST_CASE("compute_tau examples") {
    CHECK(compute_tau(Tensor({4}, {1.0, 0.5, 0.004, 0.003}), 0.01) == 2);
    Tensor geo({6});
    double v = 1.0;
    for (int i = 0; i < 6; ++i, v *= 0.5) geo(i) = v;
    CHECK(compute_tau(geo, 0.1) == 6);
    CHECK(compute_tau(Tensor({3}, {1.0, 1e-6, 1e-7}), 0.1) == 1);
    CHECK(compute_tau(Tensor({1}, {0.42}), 0.5) == 1);
}

TEST_CASE("compute_tau ignores scale and sign") {
    Tensor sigma({4}, {1.0, 0.5, 0.004, 0.003});
    int base = compute_tau(sigma, 0.01);
    Tensor scaled = sigma;
    for (auto& x : scaled.data) x *= 123.0;
    CHECK(compute_tau(scaled, 0.01) == base);
    Tensor flipped = sigma;
    flipped(1) = -flipped(1);
    flipped(3) = -flipped(3);
    CHECK(compute_tau(flipped, 0.01) == base);
}

TEST_CASE("compute_tau validation") {
    CHECK_THROWS_AS(compute_tau(Tensor({2, 2}), 0.1), Error);
    CHECK_THROWS_AS(compute_tau(Tensor({3}, {1, 2, 3}), 0.0), Error);
    CHECK_THROWS_AS(compute_tau(Tensor({3}, {1, 2, 3}), 1.0), Error);
}

namespace {

FactorizedParam make_param(int h, int w, int r, Rng& rng) {
    FactorizedParam p;
    p.h = h;
    p.w = w;
    p.r = r;
    p.theta = std::min(h, w);
    p.U = rand_tensor({h, r}, rng);
    p.V = rand_tensor({w, r}, rng);
    p.sigma = Tensor({r});
    double v = 1.0;
    for (int i = 0; i < r; ++i, v *= 0.6) p.sigma(i) = v;
    return p;
}

}  // namespace

TEST_CASE("truncate at full rank is the identity with no event") {
    Rng rng(111);
    FactorizedParam p = make_param(12, 9, 9, rng);
    Tensor before = p.U;
    auto ev = truncate(p, 9);
    CHECK_FALSE(ev.has_value());
    CHECK(p.r == 9);
    CHECK(p.U.data == before.data);
}

TEST_CASE("truncate removes tail columns and counts removed parameters") {
    Rng rng(112);
    FactorizedParam p = make_param(256, 9, 9, rng);
    Tensor mu = rand_tensor({256, 9}, rng);
    Tensor ms = rand_tensor({9}, rng);
    Tensor mv = rand_tensor({9, 9}, rng);
    Tensor mu_before = mu, ms_before = ms, mv_before = mv;
    std::vector<double> tail = {p.sigma(7), p.sigma(8)};

    auto ev = truncate(p, 7, MomentumRefs{&mu, &ms, &mv});
    REQUIRE(ev.has_value());
    CHECK(ev->rank_before == 9);
    CHECK(ev->rank_after == 7);
    CHECK(ev->removed_sigma == tail);
    CHECK(ev->params_removed == 2 * (256 + 9 + 1));
    CHECK(ev->rank_after == ev->rank_before - static_cast<int>(ev->removed_sigma.size()));

    CHECK(p.r == 7);
    CHECK(p.U.shape == std::vector<int>{256, 7});
    CHECK(p.V.shape == std::vector<int>{9, 7});
    CHECK(p.sigma.shape == std::vector<int>{7});
    CHECK(mu.shape == std::vector<int>{256, 7});
    CHECK(ms.shape == std::vector<int>{7});
    CHECK(mv.shape == std::vector<int>{9, 7});
    for (int i = 0; i < 256; ++i)
        for (int j = 0; j < 7; ++j) CHECK(mu(i, j) == mu_before(i, j));
    for (int j = 0; j < 7; ++j) CHECK(ms(j) == ms_before(j));
    for (int i = 0; i < 9; ++i)
        for (int j = 0; j < 7; ++j) CHECK(mv(i, j) == mv_before(i, j));
}

TEST_CASE("truncate validates tau") {
    Rng rng(113);
    FactorizedParam p = make_param(6, 4, 4, rng);
    CHECK_THROWS_AS(truncate(p, 0), Error);
    CHECK_THROWS_AS(truncate(p, 5), Error);
}

TEST_CASE("truncate equals zeroing the removed sigma entries exactly") {
    Rng rng(114);
    FcShape fs{10, 6};
    FactorizedParam p;
    p.h = fs.h();
    p.w = fs.w();
    p.r = 6;
    p.theta = 6;
    p.U = rand_tensor({p.h, 6}, rng);
    p.V = rand_tensor({p.w, 6}, rng);
    p.sigma = Tensor({6}, {1.0, 0.7, 0.4, 0.2, 1e-7, -3e-8});
    Tensor x = rand_tensor({3, 10}, rng);

    FactorizedParam zeroed = p;
    zeroed.sigma(4) = 0.0;
    zeroed.sigma(5) = 0.0;
    Tape t1;
    const Tensor& y_zeroed = t1.value(forward_fc(t1, register_params(t1, zeroed), t1.constant(x)));

    FactorizedParam truncated = p;
    auto ev = truncate(truncated, 4);
    REQUIRE(ev.has_value());
    Tape t2;
    const Tensor& y_trunc = t2.value(forward_fc(t2, register_params(t2, truncated), t2.constant(x)));

    REQUIRE(y_zeroed.shape == y_trunc.shape);
    CHECK(y_zeroed.data == y_trunc.data);

    // conv path as well
    ConvShape cs{2, 3, 3, 3, 1, 1};
    FactorizedParam pc = make_param(cs.h(), cs.w(), 5, rng);
    pc.sigma(3) = 2e-9;
    pc.sigma(4) = -1e-9;
    Tensor xc = rand_tensor({1, 3, 4, 4}, rng);
    FactorizedParam pz = pc;
    pz.sigma(3) = 0.0;
    pz.sigma(4) = 0.0;
    Tape t3;
    const Tensor& yz = t3.value(forward_conv(t3, register_params(t3, pz), cs, t3.constant(xc)));
    FactorizedParam pt = pc;
    truncate(pt, 3);
    Tape t4;
    const Tensor& yt = t4.value(forward_conv(t4, register_params(t4, pt), cs, t4.constant(xc)));
    CHECK(yz.data == yt.data);
}

TEST_CASE("truncating a tiny tail barely moves the forward output") {
    Rng rng(115);
    FactorizedParam p;
    p.h = 8;
    p.w = 12;
    p.r = 5;
    p.theta = 8;
    // orthonormal-ish columns scaled to unit norm
    p.U = rand_tensor({8, 5}, rng);
    p.V = rand_tensor({12, 5}, rng);
    for (int j = 0; j < 5; ++j) {
        double nu = 0.0, nv = 0.0;
        for (int i = 0; i < 8; ++i) nu += p.U(i, j) * p.U(i, j);
        for (int i = 0; i < 12; ++i) nv += p.V(i, j) * p.V(i, j);
        nu = std::sqrt(nu);
        nv = std::sqrt(nv);
        for (int i = 0; i < 8; ++i) p.U(i, j) /= nu;
        for (int i = 0; i < 12; ++i) p.V(i, j) /= nv;
    }
    p.sigma = Tensor({5}, {1.0, 0.5, 0.2, 8e-7, 5e-7});
    Tensor x = rand_tensor({2, 12}, rng);

    Tape t1;
    const Tensor& before = t1.value(forward_fc(t1, register_params(t1, p), t1.constant(x)));
    FactorizedParam q = p;
    truncate(q, 3);
    Tape t2;
    const Tensor& after = t2.value(forward_fc(t2, register_params(t2, q), t2.constant(x)));
    double worst = 0.0;
    for (size_t i = 0; i < before.data.size(); ++i) worst = std::max(worst, std::fabs(before.data[i] - after.data[i]));
    CHECK(worst < 1e-4);
}

namespace {

// plants a sharp post-index drop in one layer's sigma and slow decay elsewhere
void plant_sigmas(Model& model, size_t sharp_layer, int keep) {
    for (size_t li = 0; li < model.layers().size(); ++li) {
        ModelLayer& layer = model.layers()[li];
        if (!layer.spec.factorized) continue;
        Tensor& s = layer.fact.sigma;
        for (int i = 0; i < s.shape[0]; ++i) s(i) = 1.0 / (1.0 + 0.1 * i);
        if (li == sharp_layer)
            for (int i = keep; i < s.shape[0]; ++i) s(i) = 1e-9 / (1.0 + i);
    }
}

}  // namespace

TEST_CASE("prune_step truncates only the layer below the ratio threshold") {
    Rng rng(501);
    Model model(desk_architecture(4, 3, 16), rng);
    SgdConfig cfg;
    SgdState opt;
    opt.init(model.named_parameters(), cfg);
    plant_sigmas(model, 1, 5);

    LossConfig lc;
    lc.epsilon = 0.1;
    std::vector<int> before = model.ranks();
    auto events = prune_step(model, opt, lc, 7);
    REQUIRE(events.size() == 1);
    CHECK(events[0].epoch == 7);
    CHECK(events[0].layer == 1);
    CHECK(events[0].rank_before == before[1]);
    CHECK(events[0].rank_after == 5);
    CHECK(events[0].params_removed ==
          static_cast<long long>(before[1] - 5) * (128 + 9 + 1));
    CHECK(model.ranks() == std::vector<int>{9, 5, 9, 4});
}

TEST_CASE("prune_step keeps momentum buffers aligned with every parameter") {
    Rng rng(502);
    Model model(desk_architecture(4, 3, 16), rng);
    SgdConfig cfg;
    SgdState opt;
    opt.init(model.named_parameters(), cfg);
    for (Tensor& v : opt.velocity)
        for (double& x : v.data) x = rng.normal();
    plant_sigmas(model, 0, 3);
    plant_sigmas(model, 2, 6);

    LossConfig lc;
    lc.epsilon = 0.1;
    prune_step(model, opt, lc, 1);
    auto named = model.named_parameters();
    REQUIRE(named.size() == opt.velocity.size());
    for (size_t i = 0; i < named.size(); ++i)
        CHECK(named[i].tensor->shape == opt.velocity[i].shape);

    Tape tape;
    Var logits = model.forward(tape, rand_tensor({2, 3, 16, 16}, rng));
    CHECK(tape.value(logits).shape == std::vector<int>{2, 4});
}

TEST_CASE("prune_step is mode-independent and idempotent at the fixed point") {
    Rng rng(503);
    Model model(desk_architecture(4, 3, 16), rng);
    SgdConfig cfg;
    SgdState opt;
    opt.init(model.named_parameters(), cfg);
    plant_sigmas(model, 2, 4);

    LossConfig lc;
    lc.epsilon = 0.1;
    lc.mode = RegMode::none;
    auto events = prune_step(model, opt, lc, 0);
    CHECK(!events.empty());
    CHECK(prune_step(model, opt, lc, 1).empty());
}

TEST_CASE("prune_step leaves slow-decay models untouched") {
    Rng rng(504);
    Model model(desk_architecture(4, 3, 16), rng);
    SgdConfig cfg;
    SgdState opt;
    opt.init(model.named_parameters(), cfg);
    plant_sigmas(model, 999, 0);  // slow decay everywhere

    LossConfig lc;
    lc.epsilon = 0.1;
    CHECK(prune_step(model, opt, lc, 0).empty());
    CHECK(model.ranks() == std::vector<int>{9, 9, 9, 4});
}

TEST_CASE("prune_step walks the cursor correctly past dense and bias-free layers") {
    Architecture arch = desk_architecture(4, 3, 16);
    arch.nodes[2].layer.factorized = false;  // conv2 dense
    arch.nodes[4].layer.bias = false;        // conv3 factorized, no bias
    Rng rng(505);
    Model model(arch, rng);
    SgdConfig cfg;
    SgdState opt;
    opt.init(model.named_parameters(), cfg);
    plant_sigmas(model, 2, 2);  // conv3; slow decay elsewhere
    Tensor& fc_sigma = model.layers()[3].fact.sigma;
    for (int i = 2; i < fc_sigma.shape[0]; ++i) fc_sigma(i) = 1e-9 / (1.0 + i);

    LossConfig lc;
    lc.epsilon = 0.1;
    auto events = prune_step(model, opt, lc, 3);
    REQUIRE(events.size() == 2);
    CHECK(events[0].layer == 2);
    CHECK(events[1].layer == 3);
    CHECK(model.ranks() == std::vector<int>{9, 2, 2});

    auto named = model.named_parameters();
    REQUIRE(named.size() == opt.velocity.size());
    for (size_t i = 0; i < named.size(); ++i)
        CHECK(named[i].tensor->shape == opt.velocity[i].shape);

    long long expect = 0;
    for (const ModelLayer& layer : model.layers())
        expect += layer.spec.factorized ? layer.fact.trainable_count() : layer.dense.trainable_count();
    CHECK(model.trainable_count() == expect);
}

TEST_CASE("parameter counts are non-increasing across repeated prune steps") {
    Rng rng(506);
    Model model(desk_architecture(4, 3, 16), rng);
    SgdConfig cfg;
    SgdState opt;
    opt.init(model.named_parameters(), cfg);

    LossConfig lc;
    lc.epsilon = 0.3;
    long long prev = model.trainable_count();
    for (int round = 0; round < 6; ++round) {
        for (ModelLayer& layer : model.layers()) {
            if (!layer.spec.factorized) continue;
            for (int i = 0; i < layer.fact.sigma.shape[0]; ++i)
                layer.fact.sigma(i) = std::pow(0.1 + 0.8 * rng.uniform(), i);
        }
        auto events = prune_step(model, opt, lc, round);
        long long now = model.trainable_count();
        CHECK(now <= prev);
        long long removed = 0;
        for (const auto& ev : events) removed += ev.params_removed;
        CHECK(prev - now == removed);
        prev = now;
    }
}
