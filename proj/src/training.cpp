#include "dprp/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dprp/checkpoint.hpp"
#include "dprp/error.hpp"
#include "dprp/metrics.hpp"

namespace dprp {

namespace {

// Copies the rows named by idx into a fresh [b,C,H,W] batch.
std::pair<Tensor, std::vector<int>> gather_batch(const LabeledImageSet& set,
                                                 const std::vector<int>& idx, size_t begin,
                                                 size_t end) {
    int c = set.images.shape[1];
    int h = set.images.shape[2];
    int w = set.images.shape[3];
    int b = static_cast<int>(end - begin);
    size_t row = static_cast<size_t>(c) * h * w;
    Tensor batch({b, c, h, w});
    std::vector<int> labels(static_cast<size_t>(b));
    for (size_t i = begin; i < end; ++i) {
        size_t src = static_cast<size_t>(idx[i]) * row;
        std::copy_n(set.images.data.begin() + static_cast<long>(src), row,
                    batch.data.begin() + static_cast<long>((i - begin) * row));
        labels[i - begin] = set.labels[static_cast<size_t>(idx[i])];
    }
    return {std::move(batch), std::move(labels)};
}

std::vector<LayerVars> factorized_vars(const Model& model,
                                       const std::vector<LayerBinding>& bindings) {
    std::vector<LayerVars> out;
    for (size_t i = 0; i < bindings.size(); ++i)
        if (model.layers()[i].spec.factorized) out.push_back(bindings[i].fact);
    return out;
}

std::vector<CompStats> comp_stats_for(const Model& model, const LossConfig& cfg) {
    std::vector<CompStats> out;
    if (cfg.mode != RegMode::proposed || cfg.lambda_comp <= 0.0) return out;
    for (const ModelLayer& layer : model.layers()) {
        if (!layer.spec.factorized) continue;
        CompStats cs;
        cs.tau = compute_tau(layer.fact.sigma, cfg.epsilon);
        double ss = 0.0;
        for (double v : layer.fact.sigma.data) ss += v * v;
        cs.sigma_norm = std::sqrt(ss);
        out.push_back(cs);
    }
    return out;
}

std::vector<std::vector<double>> sigma_snapshot(const Model& model) {
    std::vector<std::vector<double>> out;
    for (const ModelLayer& layer : model.layers())
        if (layer.spec.factorized) out.push_back(layer.fact.sigma.data);
    return out;
}

void check_set(const LabeledImageSet& set, const Model& model, const char* who) {
    if (set.size() < 1) throw_error(ErrorKind::config, std::string(who) + ": empty dataset");
    if (set.images.rank() != 4)
        throw_error(ErrorKind::dimension,
                    std::string(who) + ": images must be [N,C,H,W], got " + shape_str(set.images.shape));
    if (set.images.shape[1] != model.arch().in_channels ||
        set.images.shape[2] != model.arch().in_h || set.images.shape[3] != model.arch().in_w)
        throw_error(ErrorKind::dimension,
                    std::string(who) + ": image shape " + shape_str(set.images.shape) +
                        " does not match the model input " + std::to_string(model.arch().in_channels) +
                        "x" + std::to_string(model.arch().in_h) + "x" + std::to_string(model.arch().in_w));
    if (set.labels.size() != static_cast<size_t>(set.size()))
        throw_error(ErrorKind::dimension, std::string(who) + ": label count mismatch");
}

}  // namespace

TrainState init_train_state(Model& model, const FitConfig& cfg) {
    cfg.sgd.validate();
    cfg.loss.validate();
    TrainState state;
    state.opt.init(model.named_parameters(), cfg.sgd);
    state.plateau = cfg.plateau;
    state.plateau.best = std::numeric_limits<double>::infinity();
    state.plateau.stalled = 0;
    state.rng = Rng(cfg.sgd.seed);
    return state;
}

double evaluate(const Model& model, const LabeledImageSet& set, int k) {
    if (set.size() == 0) return 0.0;
    check_set(set, model, "evaluate");
    const int chunk = 256;
    int n = set.size();
    std::vector<int> idx(static_cast<size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    long long hits = 0;
    for (int begin = 0; begin < n; begin += chunk) {
        int end = std::min(n, begin + chunk);
        auto [images, labels] = gather_batch(set, idx, static_cast<size_t>(begin),
                                             static_cast<size_t>(end));
        Tape tape;
        const Tensor& logits = tape.value(model.forward(tape, images));
        hits += topk_hits(logits, labels, k);
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

FitResult fit(Model& model, TrainState& state, const LabeledImageSet& train,
              const LabeledImageSet& holdout, const FitConfig& cfg) {
    cfg.sgd.validate();
    cfg.loss.validate();
    check_set(train, model, "fit");
    if (holdout.size() > 0) check_set(holdout, model, "fit");
    for (int label : train.labels)
        if (label < 0 || label >= model.arch().n_classes)
            throw_error(ErrorKind::input, "fit: label " + std::to_string(label) + " outside [0, " +
                                              std::to_string(model.arch().n_classes) + ")");
    if (state.opt.velocity.size() != model.named_parameters().size())
        throw_error(ErrorKind::usage, "fit: optimizer state does not match the model");

    FitResult result;
    result.initial_ranks = model.ranks();
    result.initial_sigmas = sigma_snapshot(model);
    ModelAccount initial = account(model);
    result.initial_params = initial.params;
    result.initial_macs = initial.macs;

    int n = train.size();
    std::vector<int> idx(static_cast<size_t>(n));
    int batch = std::min(cfg.sgd.batch_size, n);

    for (int epoch = state.epoch + 1; epoch <= cfg.sgd.max_epochs; ++epoch) {
        double lr_used = state.opt.lr;
        // shuffling a freshly ordered list keeps the epoch's permutation a pure
        // function of the rng stream, so resumed runs see the same batches
        std::iota(idx.begin(), idx.end(), 0);
        state.rng.shuffle(idx);
        LossBreakdown sums;
        int batches = 0;
        for (int begin = 0; begin < n; begin += batch) {
            int end = std::min(n, begin + batch);
            auto [images, labels] = gather_batch(train, idx, static_cast<size_t>(begin),
                                                 static_cast<size_t>(end));
            if (cfg.augment) images = augment_batch(images, state.rng, cfg.augment_pad);

            Tape tape;
            std::vector<LayerBinding> bindings;
            Var logits = model.forward(tape, images, &bindings);
            Var app = tape.cross_entropy(logits, labels);
            std::vector<LayerVars> fact = factorized_vars(model, bindings);
            std::vector<CompStats> comp = comp_stats_for(model, cfg.loss);
            LossBreakdown bd;
            Var total = total_loss(tape, app, fact, cfg.loss, comp, &bd);
            tape.backward(total);

            std::vector<NamedTensor> named = model.named_parameters();
            std::vector<Var> vars = model.param_vars(bindings);
            std::vector<Tensor> grads;
            grads.reserve(vars.size());
            for (const Var& v : vars) grads.push_back(tape.grad(v));
            sgd_step(named, grads, state.opt, cfg.sgd);

            sums.app += bd.app;
            sums.orth += bd.orth;
            sums.sort += bd.sort;
            sums.comp += bd.comp;
            sums.reg += bd.reg;
            sums.total += bd.total;
            ++batches;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = lr_used;
        rec.events = prune_step(model, state.opt, cfg.loss, epoch);
        double inv = 1.0 / static_cast<double>(batches);
        rec.losses.app = sums.app * inv;
        rec.losses.orth = sums.orth * inv;
        rec.losses.sort = sums.sort * inv;
        rec.losses.comp = sums.comp * inv;
        rec.losses.reg = sums.reg * inv;
        rec.losses.total = sums.total * inv;
        plateau_step(state.plateau, state.opt, rec.losses.app);
        rec.top1 = evaluate(model, holdout);
        rec.ranks = model.ranks();
        rec.sigmas = sigma_snapshot(model);
        ModelAccount acct = account(model);
        rec.params = acct.params;
        rec.macs = acct.macs;
        state.epoch = epoch;
        result.records.push_back(std::move(rec));

        if (!cfg.checkpoint_dir.empty()) {
            bool final_epoch = epoch == cfg.sgd.max_epochs;
            bool cadence = cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0;
            if (final_epoch || cadence)
                save_checkpoint(cfg.checkpoint_dir, model, state.opt, state.plateau, state.rng,
                                cfg.loss, cfg.sgd, train.stats, epoch, &result.initial_sigmas);
        }
    }
    return result;
}

}  // namespace dprp
