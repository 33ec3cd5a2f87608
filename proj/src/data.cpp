#include "dprp/data.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>

#include "dprp/error.hpp"

namespace dprp {

namespace {

constexpr int kCifarDim = 32;
constexpr int kCifarChannels = 3;
constexpr int kCifarRecord = 1 + kCifarChannels * kCifarDim * kCifarDim;
constexpr int kCifarClasses = 10;

void check_images(const Tensor& images, const char* who) {
    if (images.rank() != 4)
        throw_error(ErrorKind::dimension,
                    std::string(who) + ": expected [N,C,H,W] images, got " + shape_str(images.shape));
}

}  // namespace

ChannelStats standardize(Tensor& images) {
    check_images(images, "standardize");
    int n = images.shape[0];
    int c = images.shape[1];
    long long per_channel = static_cast<long long>(n) * images.shape[2] * images.shape[3];
    ChannelStats st;
    for (int ch = 0; ch < c; ++ch) {
        double sum = 0.0;
        for (int i = 0; i < n; ++i)
            for (int y = 0; y < images.shape[2]; ++y)
                for (int x = 0; x < images.shape[3]; ++x) sum += images(i, ch, y, x);
        double mean = sum / static_cast<double>(per_channel);
        double var = 0.0;
        for (int i = 0; i < n; ++i)
            for (int y = 0; y < images.shape[2]; ++y)
                for (int x = 0; x < images.shape[3]; ++x) {
                    double d = images(i, ch, y, x) - mean;
                    var += d * d;
                }
        double sd = std::sqrt(var / static_cast<double>(per_channel));
        if (!(sd > 0.0)) sd = 1.0;
        st.mean.push_back(mean);
        st.std_dev.push_back(sd);
    }
    apply_stats(images, st);
    return st;
}

void apply_stats(Tensor& images, const ChannelStats& stats) {
    check_images(images, "apply_stats");
    int c = images.shape[1];
    if (static_cast<int>(stats.mean.size()) != c || static_cast<int>(stats.std_dev.size()) != c)
        throw_error(ErrorKind::dimension, "apply_stats: stats cover " + std::to_string(stats.mean.size()) +
                                              " channels, images have " + std::to_string(c));
    for (int i = 0; i < images.shape[0]; ++i)
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < images.shape[2]; ++y)
                for (int x = 0; x < images.shape[3]; ++x)
                    images(i, ch, y, x) = (images(i, ch, y, x) - stats.mean[ch]) / stats.std_dev[ch];
}

LabeledImageSet load_cifar10(const std::vector<std::string>& paths, int limit_per_class,
                             const ChannelStats* stats) {
    if (paths.empty()) throw_error(ErrorKind::config, "load_cifar10: empty file list");
    std::vector<double> pixels;
    std::vector<int> labels;
    std::vector<int> per_class(kCifarClasses, 0);
    for (const std::string& path : paths) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw_error(ErrorKind::input, "load_cifar10: cannot open " + path);
        std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                       std::istreambuf_iterator<char>());
        if (buf.size() % kCifarRecord != 0)
            throw_error(ErrorKind::format,
                        "load_cifar10: " + path + " has size " + std::to_string(buf.size()) +
                            ", not a multiple of " + std::to_string(kCifarRecord) +
                            "; partial record starts at byte offset " +
                            std::to_string(buf.size() - buf.size() % kCifarRecord));
        size_t records = buf.size() / kCifarRecord;
        for (size_t rec = 0; rec < records; ++rec) {
            size_t offset = rec * kCifarRecord;
            int label = buf[offset];
            if (label >= kCifarClasses)
                throw_error(ErrorKind::format, "load_cifar10: " + path + " has label byte " +
                                                   std::to_string(label) + " at byte offset " +
                                                   std::to_string(offset));
            if (limit_per_class > 0 && per_class[label] >= limit_per_class) continue;
            ++per_class[label];
            labels.push_back(label);
            for (int j = 1; j < kCifarRecord; ++j)
                pixels.push_back(static_cast<double>(buf[offset + static_cast<size_t>(j)]) / 255.0);
        }
    }
    LabeledImageSet set;
    set.n_c = kCifarClasses;
    set.labels = std::move(labels);
    set.images = Tensor({static_cast<int>(set.labels.size()), kCifarChannels, kCifarDim, kCifarDim},
                        std::move(pixels));
    if (stats) {
        set.stats = *stats;
        apply_stats(set.images, set.stats);
    } else {
        set.stats = standardize(set.images);
    }
    return set;
}

LabeledImageSet gen_synthetic(int n_c, int per_class, int hw, uint64_t seed,
                              const ChannelStats* stats, double noise, double label_noise) {
    if (n_c < 2)
        throw_error(ErrorKind::config, "gen_synthetic: need at least 2 classes, got " + std::to_string(n_c));
    if (!(noise >= 0.0))
        throw_error(ErrorKind::config, "gen_synthetic: noise level must be non-negative");
    if (!(label_noise >= 0.0 && label_noise < 1.0))
        throw_error(ErrorKind::config, "gen_synthetic: label noise must lie in [0, 1)");
    if (per_class < 1)
        throw_error(ErrorKind::config,
                    "gen_synthetic: samples per class must be positive, got " + std::to_string(per_class));
    if (hw < 1)
        throw_error(ErrorKind::config, "gen_synthetic: image size must be positive, got " + std::to_string(hw));

    const int channels = 3;
    const int freqs = 3;
    const double pi = 3.14159265358979323846;
    Rng rng(seed);

    // per class: a smooth random field per channel, standardized to unit
    // spread over its pixels
    std::vector<Tensor> templates;
    for (int k = 0; k < n_c; ++k) {
        Tensor field({channels, hw, hw});
        for (int c = 0; c < channels; ++c) {
            double amp[3][3];
            for (int fy = 0; fy < freqs; ++fy)
                for (int fx = 0; fx < freqs; ++fx) amp[fy][fx] = rng.normal() / (1.0 + fy + fx);
            for (int y = 0; y < hw; ++y)
                for (int x = 0; x < hw; ++x) {
                    double v = 0.0;
                    for (int fy = 0; fy < freqs; ++fy)
                        for (int fx = 0; fx < freqs; ++fx)
                            v += amp[fy][fx] * std::cos(pi * fy * (y + 0.5) / hw) *
                                 std::cos(pi * fx * (x + 0.5) / hw);
                    field(c, y, x) = v;
                }
            double sum = 0.0;
            for (int y = 0; y < hw; ++y)
                for (int x = 0; x < hw; ++x) sum += field(c, y, x);
            double mean = sum / (hw * hw);
            double var = 0.0;
            for (int y = 0; y < hw; ++y)
                for (int x = 0; x < hw; ++x) {
                    double d = field(c, y, x) - mean;
                    var += d * d;
                }
            double sd = std::sqrt(var / (hw * hw));
            if (!(sd > 1e-12)) sd = 1.0;
            for (int y = 0; y < hw; ++y)
                for (int x = 0; x < hw; ++x) field(c, y, x) = (field(c, y, x) - mean) / sd;
        }
        templates.push_back(std::move(field));
    }

    int n = n_c * per_class;
    LabeledImageSet set;
    set.n_c = n_c;
    set.images = Tensor({n, channels, hw, hw});
    for (int i = 0; i < n; ++i) {
        int label = i % n_c;
        const Tensor& tpl = templates[static_cast<size_t>(label)];
        for (int c = 0; c < channels; ++c)
            for (int y = 0; y < hw; ++y)
                for (int x = 0; x < hw; ++x)
                    set.images(i, c, y, x) = tpl(c, y, x) + rng.normal() * noise;
        if (label_noise > 0.0 && rng.uniform() < label_noise)
            label = (label + 1 + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(n_c - 1)))) % n_c;
        set.labels.push_back(label);
    }
    if (stats) {
        set.stats = *stats;
        apply_stats(set.images, set.stats);
    } else {
        set.stats = standardize(set.images);
    }
    return set;
}

std::pair<LabeledImageSet, LabeledImageSet> split_holdout(const LabeledImageSet& set, int holdout_n) {
    int n = set.size();
    if (holdout_n < 1 || holdout_n >= n)
        throw_error(ErrorKind::usage, "split_holdout: holdout size " + std::to_string(holdout_n) +
                                          " outside (0, " + std::to_string(n) + ")");
    int train_n = n - holdout_n;
    long long sample = static_cast<long long>(set.images.shape[1]) * set.images.shape[2] * set.images.shape[3];
    LabeledImageSet train;
    LabeledImageSet hold;
    train.n_c = hold.n_c = set.n_c;
    train.stats = hold.stats = set.stats;
    train.images = Tensor({train_n, set.images.shape[1], set.images.shape[2], set.images.shape[3]});
    hold.images = Tensor({holdout_n, set.images.shape[1], set.images.shape[2], set.images.shape[3]});
    std::copy_n(set.images.data.begin(), static_cast<size_t>(train_n * sample), train.images.data.begin());
    std::copy_n(set.images.data.begin() + static_cast<size_t>(train_n * sample),
                static_cast<size_t>(holdout_n * sample), hold.images.data.begin());
    train.labels.assign(set.labels.begin(), set.labels.begin() + train_n);
    hold.labels.assign(set.labels.begin() + train_n, set.labels.end());
    return {std::move(train), std::move(hold)};
}

Tensor augment_batch(const Tensor& images, Rng& rng, int pad) {
    check_images(images, "augment_batch");
    if (pad < 0) throw_error(ErrorKind::config, "augment_batch: negative pad " + std::to_string(pad));
    int n = images.shape[0];
    int c = images.shape[1];
    int h = images.shape[2];
    int w = images.shape[3];
    Tensor out(images.shape);
    for (int i = 0; i < n; ++i) {
        bool flip = rng.uniform() < 0.5;
        int oy = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(2 * pad + 1))) - pad;
        int ox = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(2 * pad + 1))) - pad;
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    int sx = flip ? w - 1 - x : x;
                    int sy = y + oy;
                    sx += ox;
                    double v = 0.0;
                    if (sy >= 0 && sy < h && sx >= 0 && sx < w) v = images(i, ch, sy, sx);
                    out(i, ch, y, x) = v;
                }
    }
    return out;
}

}  // namespace dprp
