#include "dprp/checkpoint.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include "dprp/error.hpp"
#include "json_util.hpp"

namespace dprp {

namespace {

void put_scalar(std::string& out, double v, Precision prec) {
    if (prec == Precision::f32) {
        float f = static_cast<float>(v);
        uint32_t bits;
        std::memcpy(&bits, &f, 4);
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
    } else {
        uint64_t bits;
        std::memcpy(&bits, &v, 8);
        for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
    }
}

double get_scalar(const unsigned char* p, Precision prec) {
    if (prec == Precision::f32) {
        uint32_t bits = static_cast<uint32_t>(p[0]) | static_cast<uint32_t>(p[1]) << 8 |
                        static_cast<uint32_t>(p[2]) << 16 | static_cast<uint32_t>(p[3]) << 24;
        float f;
        std::memcpy(&f, &bits, 4);
        return static_cast<double>(f);
    }
    uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(p[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

size_t scalar_size(Precision prec) { return prec == Precision::f32 ? 4 : 8; }

nlohmann::json plateau_to_json(const PlateauState& p) {
    nlohmann::json j{{"stalled", p.stalled}, {"factor", p.factor},   {"patience", p.patience},
                     {"min_lr", p.min_lr},   {"tol", p.tol}};
    if (std::isfinite(p.best))
        j["best"] = p.best;
    else
        j["best"] = "inf";
    return j;
}

PlateauState plateau_from_json(const nlohmann::json& j) {
    const std::string ctx = "plateau";
    check_keys(j, {"best", "stalled", "factor", "patience", "min_lr", "tol"}, ctx);
    PlateauState p;
    if (j.contains("best") && j.at("best").is_string())
        p.best = std::numeric_limits<double>::infinity();
    else
        p.best = json_num(j, "best", p.best, ctx);
    p.stalled = json_int(j, "stalled", p.stalled, ctx);
    p.factor = json_num(j, "factor", p.factor, ctx);
    p.patience = json_int(j, "patience", p.patience, ctx);
    p.min_lr = json_num(j, "min_lr", p.min_lr, ctx);
    p.tol = json_num(j, "tol", p.tol, ctx);
    return p;
}

}  // namespace

void save_checkpoint(const std::string& dir, Model& model, const SgdState& opt,
                     const PlateauState& plateau, const Rng& rng, const LossConfig& loss,
                     const SgdConfig& sgd, const ChannelStats& stats, int epoch,
                     const std::vector<std::vector<double>>* initial_sigmas) {
    std::filesystem::create_directories(dir);
    Precision prec = precision();

    std::vector<NamedTensor> named = model.named_parameters();
    if (opt.velocity.size() != named.size())
        throw_error(ErrorKind::usage, "save_checkpoint: " + std::to_string(opt.velocity.size()) +
                                          " momentum buffers for " + std::to_string(named.size()) +
                                          " parameters");

    std::string blob;
    nlohmann::json table = nlohmann::json::array();
    auto append = [&](const std::string& name, const Tensor& t) {
        nlohmann::json entry{{"name", name}, {"shape", t.shape}, {"offset", blob.size()},
                             {"count", t.numel()}};
        for (double v : t.data) put_scalar(blob, v, prec);
        table.push_back(std::move(entry));
    };
    for (const NamedTensor& p : named) append(p.name, *p.tensor);
    for (size_t i = 0; i < named.size(); ++i) append("velocity." + named[i].name, opt.velocity[i]);

    nlohmann::json manifest{{"version", 1},
                            {"dtype", prec == Precision::f32 ? "f32" : "f64"},
                            {"epoch", epoch},
                            {"architecture", arch_to_json(model.arch())},
                            {"loss", loss_to_json(loss)},
                            {"sgd", sgd_to_json(sgd)},
                            {"plateau", plateau_to_json(plateau)},
                            {"lr", opt.lr},
                            {"rng", rng.serialize()},
                            {"ranks", model.ranks()},
                            {"normalization", {{"mean", stats.mean}, {"std", stats.std_dev}}},
                            {"tensors", std::move(table)}};
    if (initial_sigmas && !initial_sigmas->empty()) manifest["initial_sigmas"] = *initial_sigmas;

    std::ofstream mf(dir + "/manifest.json", std::ios::binary);
    if (!mf) throw_error(ErrorKind::input, "save_checkpoint: cannot write " + dir + "/manifest.json");
    mf << manifest.dump(2) << "\n";
    std::ofstream pf(dir + "/params.bin", std::ios::binary);
    if (!pf) throw_error(ErrorKind::input, "save_checkpoint: cannot write " + dir + "/params.bin");
    pf.write(blob.data(), static_cast<std::streamsize>(blob.size()));
}

LoadedCheckpoint load_checkpoint(const std::string& dir) {
    std::ifstream mf(dir + "/manifest.json", std::ios::binary);
    if (!mf) throw_error(ErrorKind::input, "load_checkpoint: cannot open " + dir + "/manifest.json");
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(mf);
    } catch (const nlohmann::json::exception& e) {
        throw_error(ErrorKind::format, dir + "/manifest.json: " + e.what());
    }

    int version = json_int(manifest, "version", 0, "manifest");
    if (version != 1)
        throw_error(ErrorKind::format,
                    dir + "/manifest.json: unsupported version " + std::to_string(version));
    std::string dtype = json_str(manifest, "dtype", "f32", "manifest");
    if (dtype != "f32" && dtype != "f64")
        throw_error(ErrorKind::format, dir + "/manifest.json: unknown dtype '" + dtype + "'");
    Precision prec = dtype == "f32" ? Precision::f32 : Precision::f64;

    if (!manifest.contains("architecture"))
        throw_error(ErrorKind::format, dir + "/manifest.json: missing architecture");
    Architecture arch = arch_from_json(manifest.at("architecture"));
    Rng seed_rng(0);
    LoadedCheckpoint out(Model(arch, seed_rng));
    out.precision = prec;
    out.epoch = json_int(manifest, "epoch", 0, "manifest");
    out.loss = manifest.contains("loss") ? loss_from_json(manifest.at("loss")) : LossConfig{};
    out.sgd = manifest.contains("sgd") ? sgd_from_json(manifest.at("sgd")) : SgdConfig{};
    out.plateau = manifest.contains("plateau") ? plateau_from_json(manifest.at("plateau"))
                                               : PlateauState{};
    out.rng = Rng::deserialize(json_str(manifest, "rng", Rng(0).serialize(), "manifest"));
    out.opt.lr = json_num(manifest, "lr", out.sgd.lr, "manifest");
    if (manifest.contains("normalization")) {
        const nlohmann::json& norm = manifest.at("normalization");
        check_keys(norm, {"mean", "std"}, "normalization");
        out.stats.mean = norm.value("mean", std::vector<double>{});
        out.stats.std_dev = norm.value("std", std::vector<double>{});
    }
    if (manifest.contains("initial_sigmas")) {
        if (!manifest.at("initial_sigmas").is_array())
            throw_error(ErrorKind::format, dir + "/manifest.json: 'initial_sigmas' must be an array");
        out.initial_sigmas =
            manifest.at("initial_sigmas").get<std::vector<std::vector<double>>>();
    }

    std::ifstream pf(dir + "/params.bin", std::ios::binary);
    if (!pf) throw_error(ErrorKind::input, "load_checkpoint: cannot open " + dir + "/params.bin");
    std::vector<unsigned char> blob((std::istreambuf_iterator<char>(pf)),
                                    std::istreambuf_iterator<char>());

    if (!manifest.contains("tensors") || !manifest.at("tensors").is_array())
        throw_error(ErrorKind::format, dir + "/manifest.json: missing tensor table");
    const nlohmann::json& table = manifest.at("tensors");
    size_t esize = scalar_size(prec);

    auto decode = [&](const nlohmann::json& entry) -> std::pair<std::string, Tensor> {
        std::string name = json_str(entry, "name", "", "tensor entry");
        std::vector<int> shape = entry.value("shape", std::vector<int>{});
        long long count = entry.value("count", -1LL);
        long long offset = entry.value("offset", -1LL);
        long long numel = 1;
        for (int s : shape) numel *= s;
        if (shape.empty() || count != numel || offset < 0)
            throw_error(ErrorKind::format, "blob '" + name + "': inconsistent table entry");
        if (static_cast<size_t>(offset) + static_cast<size_t>(count) * esize > blob.size())
            throw_error(ErrorKind::format, "blob '" + name + "' at byte offset " +
                                               std::to_string(offset) + " runs past the end of params.bin (" +
                                               std::to_string(blob.size()) + " bytes)");
        Tensor t(shape);
        for (long long i = 0; i < count; ++i)
            t.data[static_cast<size_t>(i)] =
                get_scalar(blob.data() + static_cast<size_t>(offset) + static_cast<size_t>(i) * esize, prec);
        return {std::move(name), std::move(t)};
    };

    std::vector<NamedTensor> named = out.model.named_parameters();
    size_t expect = named.size() * 2;
    if (table.size() != expect)
        throw_error(ErrorKind::format, dir + "/manifest.json: tensor table has " +
                                           std::to_string(table.size()) + " entries, expected " +
                                           std::to_string(expect));
    out.opt.velocity.resize(named.size());
    for (size_t i = 0; i < named.size(); ++i) {
        auto [name, tensor] = decode(table[i]);
        if (name != named[i].name)
            throw_error(ErrorKind::format, "tensor table entry '" + name + "' does not match parameter '" +
                                               named[i].name + "'");
        *named[i].tensor = std::move(tensor);
        auto [vname, vtensor] = decode(table[named.size() + i]);
        if (vname != "velocity." + named[i].name)
            throw_error(ErrorKind::format, "tensor table entry '" + vname +
                                               "' does not match momentum buffer 'velocity." +
                                               named[i].name + "'");
        out.opt.velocity[i] = std::move(vtensor);
        if (!named[i].tensor->same_shape(out.opt.velocity[i]))
            throw_error(ErrorKind::format,
                        "blob shapes for '" + named[i].name + "' and its momentum buffer differ");
    }

    std::vector<int> ranks = manifest.value("ranks", std::vector<int>{});
    size_t rank_i = 0;
    for (ModelLayer& layer : out.model.layers()) {
        if (!layer.spec.factorized) continue;
        FactorizedParam& fp = layer.fact;
        if (fp.sigma.rank() != 1 || fp.U.rank() != 2 || fp.V.rank() != 2)
            throw_error(ErrorKind::format, "layer " + layer.name + ": malformed factor shapes");
        int r = fp.sigma.shape[0];
        if (fp.U.shape[0] != fp.h || fp.U.shape[1] != r || fp.V.shape[0] != fp.w ||
            fp.V.shape[1] != r || r < 1 || r > fp.theta)
            throw_error(ErrorKind::format, "layer " + layer.name + ": factor shapes " +
                                               shape_str(fp.U.shape) + "/" + shape_str(fp.sigma.shape) +
                                               "/" + shape_str(fp.V.shape) + " are inconsistent");
        fp.r = r;
        if (rank_i >= ranks.size() || ranks[rank_i] != r)
            throw_error(ErrorKind::format, "layer " + layer.name + ": manifest rank entry disagrees with blob shapes");
        ++rank_i;
    }
    return out;
}

}  // namespace dprp
