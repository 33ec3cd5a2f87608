#include "dprp/reports.hpp"

#include <cstdio>
#include <fstream>

#include "dprp/error.hpp"
#include "json.hpp"

namespace dprp {

namespace {

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw_error(ErrorKind::input, "cannot write " + path);
    return out;
}

void check_layer_count(size_t got, size_t expect, const std::string& path) {
    if (got != expect)
        throw_error(ErrorKind::usage, path + ": " + std::to_string(got) + " layer entries for " +
                                          std::to_string(expect) + " layer names");
}

}  // namespace

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_report_csv(const std::string& path, const std::vector<EpochRecord>& records) {
    std::ofstream out = open_out(path);
    out << "epoch,L_app,L_orth,L_sort,L_comp,L_total,lr,params,macs,top1\n";
    for (const EpochRecord& r : records) {
        out << r.epoch << ',' << format_double(r.losses.app) << ',' << format_double(r.losses.orth)
            << ',' << format_double(r.losses.sort) << ',' << format_double(r.losses.comp) << ','
            << format_double(r.losses.total) << ',' << format_double(r.lr) << ',' << r.params << ','
            << r.macs << ',' << format_double(r.top1) << '\n';
    }
}

void write_ranks_csv(const std::string& path, const std::vector<EpochRecord>& records,
                     const std::vector<std::string>& layer_names) {
    std::ofstream out = open_out(path);
    out << "epoch";
    for (const std::string& name : layer_names) out << ',' << name;
    out << '\n';
    for (const EpochRecord& r : records) {
        check_layer_count(r.ranks.size(), layer_names.size(), path);
        out << r.epoch;
        for (int rank : r.ranks) out << ',' << rank;
        out << '\n';
    }
}

void write_sigma_trace_csv(const std::string& path,
                           const std::vector<std::vector<double>>& initial_sigmas,
                           const std::vector<EpochRecord>& records,
                           const std::vector<std::string>& layer_names) {
    std::ofstream out = open_out(path);
    out << "epoch,layer,index,value\n";
    auto emit = [&](int epoch, const std::vector<std::vector<double>>& sigmas) {
        check_layer_count(sigmas.size(), layer_names.size(), path);
        for (size_t l = 0; l < sigmas.size(); ++l)
            for (size_t i = 0; i < sigmas[l].size(); ++i)
                out << epoch << ',' << layer_names[l] << ',' << i << ','
                    << format_double(sigmas[l][i]) << '\n';
    };
    emit(0, initial_sigmas);
    for (const EpochRecord& r : records) emit(r.epoch, r.sigmas);
}

void write_events_jsonl(const std::string& path, const std::vector<EpochRecord>& records,
                        const std::vector<std::string>& layer_names) {
    std::ofstream out = open_out(path);
    for (const EpochRecord& r : records) {
        for (const PruneEvent& e : r.events) {
            nlohmann::json j{{"epoch", e.epoch},
                             {"layer", e.layer},
                             {"rank_before", e.rank_before},
                             {"rank_after", e.rank_after},
                             {"removed_sigma", e.removed_sigma},
                             {"params_removed", e.params_removed}};
            if (e.layer >= 0 && static_cast<size_t>(e.layer) < layer_names.size())
                j["name"] = layer_names[static_cast<size_t>(e.layer)];
            out << j.dump() << '\n';
        }
    }
}

}  // namespace dprp
