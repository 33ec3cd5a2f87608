#pragma once

#include <string>
#include <vector>

#include "dprp/training.hpp"

namespace dprp {

// Plot-ready files for one training run. Numbers print with enough digits to
// round-trip doubles, so identical runs give byte-identical files.

// epoch,L_app,L_orth,L_sort,L_comp,L_total,lr,params,macs,top1; one row per epoch.
void write_report_csv(const std::string& path, const std::vector<EpochRecord>& records);

// epoch followed by one rank column per factorized layer.
void write_ranks_csv(const std::string& path, const std::vector<EpochRecord>& records,
                     const std::vector<std::string>& layer_names);

// epoch,layer,index,value rows; epoch 0 carries the initialization values.
void write_sigma_trace_csv(const std::string& path,
                           const std::vector<std::vector<double>>& initial_sigmas,
                           const std::vector<EpochRecord>& records,
                           const std::vector<std::string>& layer_names);

// One JSON object per prune event, in epoch order.
void write_events_jsonl(const std::string& path, const std::vector<EpochRecord>& records,
                        const std::vector<std::string>& layer_names);

// %.17g rendering shared by every report writer.
std::string format_double(double v);

}  // namespace dprp
