#include <cmath>
#include <unistd.h>

#include <filesystem>

#include "doctest.h"
#include "dprp/checkpoint.hpp"
#include "dprp/error.hpp"
#include "dprp/metrics.hpp"
#include "dprp/training.hpp"

using namespace dprp;

namespace {

struct TempDir {
    std::string path;
    TempDir() {
        static int counter = 0;
        path = (std::filesystem::temp_directory_path() /
                ("dprp_fit_" + std::to_string(::getpid()) + "_" + std::to_string(counter++)))
                   .string();
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
};

LayerSpec conv_spec(int s, int c, bool factorized) {
    LayerSpec spec;
    spec.kind = LayerKind::conv;
    spec.conv = ConvShape{s, c, 3, 3, 1, 1};
    spec.factorized = factorized;
    spec.relu = true;
    return spec;
}

LayerSpec fc_spec(int d1, int d2, bool factorized) {
    LayerSpec spec;
    spec.kind = LayerKind::fc;
    spec.fc = FcShape{d1, d2};
    spec.factorized = factorized;
    return spec;
}

// conv(3->8) -> pool -> gap -> fc; small enough for fast epochs on 8x8 input.
Architecture tiny_architecture(int n_classes, bool factorized) {
    Architecture arch;
    arch.name = "tiny";
    arch.in_channels = 3;
    arch.in_h = 8;
    arch.in_w = 8;
    arch.n_classes = n_classes;
    ArchNode conv;
    conv.kind = NodeKind::layer;
    conv.layer = conv_spec(8, 3, factorized);
    ArchNode pool;
    pool.kind = NodeKind::avg_pool;
    pool.pool_k = 2;
    ArchNode gap;
    gap.kind = NodeKind::global_avg_pool;
    ArchNode fc;
    fc.kind = NodeKind::layer;
    fc.layer = fc_spec(8, n_classes, factorized);
    arch.nodes = {conv, pool, gap, fc};
    return arch;
}

FitConfig quick_config(int epochs, int batch, RegMode mode, uint64_t seed) {
    FitConfig cfg;
    cfg.sgd.max_epochs = epochs;
    cfg.sgd.batch_size = batch;
    cfg.sgd.seed = seed;
    cfg.loss.mode = mode;
    return cfg;
}

bool records_equal(const EpochRecord& a, const EpochRecord& b) {
    return a.epoch == b.epoch && a.losses.app == b.losses.app && a.losses.orth == b.losses.orth &&
           a.losses.sort == b.losses.sort && a.losses.comp == b.losses.comp &&
           a.losses.reg == b.losses.reg && a.losses.total == b.losses.total && a.lr == b.lr &&
           a.ranks == b.ranks && a.sigmas == b.sigmas && a.params == b.params &&
           a.macs == b.macs && a.top1 == b.top1;
}

}  // namespace

TEST_CASE("unregularized dense training learns a separable synthetic set") {
    LabeledImageSet data = gen_synthetic(2, 60, 8, 31);
    auto [train, holdout] = split_holdout(data, 20);
    Architecture arch = tiny_architecture(2, false);
    Rng rng(7);
    Model model(arch, rng);

    FitConfig cfg = quick_config(30, 16, RegMode::proposed, 7);
    cfg.loss.lambda_str = 0.0;
    cfg.loss.lambda_comp = 0.0;
    TrainState state = init_train_state(model, cfg);
    FitResult result = fit(model, state, train, holdout, cfg);

    REQUIRE(result.records.size() == 30);
    double best = result.records[0].losses.app;
    for (const EpochRecord& rec : result.records) best = std::min(best, rec.losses.app);
    CHECK(best < 0.1);
    CHECK(result.records.back().losses.app < 0.1);
    for (const EpochRecord& rec : result.records) {
        CHECK(rec.losses.total == rec.losses.app);
        CHECK(rec.losses.orth == 0.0);
        CHECK(rec.losses.comp == 0.0);
    }
}

TEST_CASE("mode none keeps the total equal to the classification loss") {
    LabeledImageSet data = gen_synthetic(3, 20, 8, 5);
    auto [train, holdout] = split_holdout(data, 12);
    Architecture arch = tiny_architecture(3, true);
    Rng rng(3);
    Model model(arch, rng);

    FitConfig cfg = quick_config(3, 16, RegMode::none, 3);
    TrainState state = init_train_state(model, cfg);
    FitResult result = fit(model, state, train, holdout, cfg);
    REQUIRE(result.records.size() == 3);
    for (const EpochRecord& rec : result.records) {
        CHECK(rec.losses.total == rec.losses.app);
        CHECK(rec.losses.orth == 0.0);
        CHECK(rec.losses.sort == 0.0);
        CHECK(rec.losses.comp == 0.0);
        CHECK(rec.losses.reg == 0.0);
    }
}

TEST_CASE("fit is deterministic for a fixed seed") {
    LabeledImageSet data = gen_synthetic(3, 20, 8, 17);
    auto [train, holdout] = split_holdout(data, 12);
    Architecture arch = tiny_architecture(3, true);

    auto run = [&](bool augment) {
        Rng rng(11);
        Model model(arch, rng);
        FitConfig cfg = quick_config(3, 16, RegMode::proposed, 11);
        cfg.sgd.lr = 0.01;
        cfg.loss.mu_orth = 10.0;
        cfg.augment = augment;
        TrainState state = init_train_state(model, cfg);
        return fit(model, state, train, holdout, cfg);
    };

    SUBCASE("plain") {
        FitResult a = run(false);
        FitResult b = run(false);
        REQUIRE(a.records.size() == b.records.size());
        for (size_t i = 0; i < a.records.size(); ++i)
            CHECK(records_equal(a.records[i], b.records[i]));
    }
    SUBCASE("with augmentation") {
        FitResult a = run(true);
        FitResult b = run(true);
        REQUIRE(a.records.size() == b.records.size());
        for (size_t i = 0; i < a.records.size(); ++i)
            CHECK(records_equal(a.records[i], b.records[i]));
    }
}

TEST_CASE("epoch records account parameters exactly from the surviving ranks") {
    LabeledImageSet data = gen_synthetic(4, 15, 8, 23);
    auto [train, holdout] = split_holdout(data, 12);
    Architecture arch = tiny_architecture(4, true);
    Rng rng(2);
    Model model(arch, rng);

    FitConfig cfg = quick_config(4, 16, RegMode::proposed, 2);
    cfg.sgd.lr = 0.01;
    cfg.loss.mu_orth = 10.0;
    cfg.loss.epsilon = 0.15;
    TrainState state = init_train_state(model, cfg);
    FitResult result = fit(model, state, train, holdout, cfg);

    long long prev = result.initial_params;
    for (const EpochRecord& rec : result.records) {
        CHECK(rec.params <= prev);
        prev = rec.params;

        long long expect = 0;
        size_t fact_i = 0;
        for (const ModelLayer& layer : model.layers()) {
            if (layer.spec.factorized) {
                expect += param_counts(layer.spec, rec.ranks[fact_i]).second;
                ++fact_i;
            } else {
                expect += param_counts(layer.spec, 0).first;
            }
            if (layer.spec.bias) expect += layer.spec.bias_len();
        }
        CHECK(rec.params == expect);
        CHECK(rec.macs == mac_count(arch, rec.ranks));

        REQUIRE(rec.sigmas.size() == rec.ranks.size());
        for (size_t i = 0; i < rec.sigmas.size(); ++i)
            CHECK(static_cast<int>(rec.sigmas[i].size()) == rec.ranks[i]);
        for (const PruneEvent& ev : rec.events) {
            CHECK(ev.epoch == rec.epoch);
            CHECK(ev.rank_after < ev.rank_before);
        }
    }
}

TEST_CASE("fit resumes bitwise from a mid-run checkpoint") {
    PrecisionScope scope(Precision::f32);
    LabeledImageSet data = gen_synthetic(3, 20, 8, 41);
    auto [train, holdout] = split_holdout(data, 12);
    Architecture arch = tiny_architecture(3, true);

    FitConfig cfg6 = quick_config(6, 16, RegMode::proposed, 13);
    cfg6.sgd.lr = 0.01;
    cfg6.loss.mu_orth = 10.0;
    FitResult full;
    {
        Rng rng(13);
        Model model(arch, rng);
        TrainState state = init_train_state(model, cfg6);
        full = fit(model, state, train, holdout, cfg6);
    }
    REQUIRE(full.records.size() == 6);

    TempDir dir;
    {
        Rng rng(13);
        Model model(arch, rng);
        FitConfig cfg3 = cfg6;
        cfg3.sgd.max_epochs = 3;
        cfg3.checkpoint_dir = dir.path;
        TrainState state = init_train_state(model, cfg3);
        FitResult head = fit(model, state, train, holdout, cfg3);
        REQUIRE(head.records.size() == 3);
        for (int i = 0; i < 3; ++i) CHECK(records_equal(head.records[i], full.records[i]));
    }

    LoadedCheckpoint lc = load_checkpoint(dir.path);
    CHECK(lc.epoch == 3);
    TrainState state;
    state.opt = std::move(lc.opt);
    state.plateau = lc.plateau;
    state.rng = lc.rng;
    state.epoch = lc.epoch;
    FitResult tail = fit(lc.model, state, train, holdout, cfg6);
    REQUIRE(tail.records.size() == 3);
    for (int i = 0; i < 3; ++i) CHECK(records_equal(tail.records[i], full.records[i + 3]));
}

TEST_CASE("evaluate matches a single-shot top-k computation") {
    LabeledImageSet data = gen_synthetic(4, 75, 8, 29);
    Architecture arch = tiny_architecture(4, true);
    Rng rng(9);
    Model model(arch, rng);

    Tape tape;
    const Tensor& logits = tape.value(model.forward(tape, data.images));
    CHECK(evaluate(model, data) == topk_accuracy(logits, data.labels, 1));
    CHECK(evaluate(model, data, 2) == topk_accuracy(logits, data.labels, 2));
}

TEST_CASE("fit input validation and failure paths") {
    Architecture arch = tiny_architecture(3, true);
    Rng rng(1);
    Model model(arch, rng);
    FitConfig cfg = quick_config(1, 8, RegMode::none, 1);
    TrainState state = init_train_state(model, cfg);

    SUBCASE("empty training set is a config error") {
        LabeledImageSet empty;
        try {
            fit(model, state, empty, empty, cfg);
            FAIL("expected a config error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::config);
        }
    }

    SUBCASE("image shape mismatch is a dimension error") {
        LabeledImageSet wrong = gen_synthetic(3, 4, 16, 2);
        try {
            fit(model, state, wrong, LabeledImageSet{}, cfg);
            FAIL("expected a dimension error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::dimension);
        }
    }

    SUBCASE("label outside the class range is an input error") {
        LabeledImageSet data = gen_synthetic(4, 4, 8, 2);
        try {
            fit(model, state, data, LabeledImageSet{}, cfg);
            FAIL("expected an input error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::input);
        }
    }

    SUBCASE("mismatched optimizer state is a usage error") {
        LabeledImageSet data = gen_synthetic(3, 4, 8, 2);
        state.opt.velocity.pop_back();
        try {
            fit(model, state, data, LabeledImageSet{}, cfg);
            FAIL("expected a usage error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::usage);
        }
    }

    SUBCASE("a non-finite parameter aborts with a numeric error naming the op") {
        LabeledImageSet data = gen_synthetic(3, 4, 8, 2);
        model.layers()[0].fact.sigma(0) = std::nan("");
        try {
            fit(model, state, data, LabeledImageSet{}, cfg);
            FAIL("expected a numeric error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::numeric);
            CHECK(std::string(e.what()).find("op") != std::string::npos);
        }
    }

    SUBCASE("a completed run returns no further records") {
        LabeledImageSet data = gen_synthetic(3, 4, 8, 2);
        state.epoch = cfg.sgd.max_epochs;
        FitResult result = fit(model, state, data, LabeledImageSet{}, cfg);
        CHECK(result.records.empty());
    }

    SUBCASE("empty holdout reports zero accuracy without touching the loop") {
        LabeledImageSet data = gen_synthetic(3, 4, 8, 2);
        FitResult result = fit(model, state, data, LabeledImageSet{}, cfg);
        REQUIRE(result.records.size() == 1);
        CHECK(result.records[0].top1 == 0.0);
    }
}
