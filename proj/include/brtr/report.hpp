#pragma once

#include <optional>
#include <string>

#include "brtr/inference.hpp"

namespace brtr {

/// Ground-truth comparisons attached to a report. Absent values serialize as null.
struct ReportMetrics {
    std::optional<double> rse_low;
    std::optional<double> rse_sparse;
    std::optional<double> psnr;
    std::optional<double> ree;
};

/// JSON document for a fit; psnr = +inf is written as the string "inf".
std::string report_to_json(const RunReport& report, const std::optional<ReportMetrics>& metrics);

} // namespace brtr
