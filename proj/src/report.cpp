#include "brtr/report.hpp"

#include <cmath>

#include <json.hpp>

namespace brtr {

namespace {

nlohmann::ordered_json metric_value(const std::optional<double>& v) {
    if (!v) return nullptr;
    if (std::isinf(*v)) return *v > 0 ? "inf" : "-inf";
    if (std::isnan(*v)) return nullptr;
    return *v;
}

} // namespace

std::string report_to_json(const RunReport& report, const std::optional<ReportMetrics>& metrics) {
    nlohmann::ordered_json j;
    j["elbo_trace"] = report.elbo_trace;
    j["final_ranks"] = report.final_ranks;
    j["iterations"] = report.iterations;
    j["pruned_per_iteration"] = report.pruned_per_iteration;
    j["rank_trace"] = report.rank_trace;
    j["converged"] = report.converged;
    j["wall_seconds"] = report.wall_seconds;
    j["jitter_events"] = report.jitter_events;
    if (metrics) {
        j["metrics"] = {{"rse_low", metric_value(metrics->rse_low)},
                        {"rse_sparse", metric_value(metrics->rse_sparse)},
                        {"psnr", metric_value(metrics->psnr)},
                        {"ree", metric_value(metrics->ree)}};
    } else {
        j["metrics"] = nullptr;
    }
    return j.dump(2) + "\n";
}

} // namespace brtr
