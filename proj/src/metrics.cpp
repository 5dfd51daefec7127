#include "brtr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace brtr {

namespace {

void check_same_shape(const DenseTensor& a, const DenseTensor& b, const char* what) {
    if (!(a.shape() == b.shape())) throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

double squared_distance(const DenseTensor& a, const DenseTensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

} // namespace

double rse(const DenseTensor& est, const DenseTensor& truth) {
    check_same_shape(est, truth, "rse");
    const double norm = frobenius_norm(truth);
    if (norm == 0.0) throw std::invalid_argument("rse: truth has zero norm");
    return std::sqrt(squared_distance(est, truth)) / norm;
}

double psnr(const DenseTensor& est, const DenseTensor& truth) {
    check_same_shape(est, truth, "psnr");
    const double mse = squared_distance(est, truth) / static_cast<double>(truth.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    double peak = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) peak = std::max(peak, std::abs(truth[i]));
    return 10.0 * std::log10(peak * peak / mse);
}

double ree(const TRRank& est, const TRRank& truth) {
    if (est.order() != truth.order()) throw std::invalid_argument("ree: rank length mismatch");
    double s = 0.0;
    for (std::size_t n = 1; n <= truth.order(); ++n) {
        s += std::abs(static_cast<double>(est[n]) - static_cast<double>(truth[n]));
    }
    return s / static_cast<double>(truth.order());
}

double mr_of(const IndexMask& mask) {
    return static_cast<double>(mask.size() - mask.observed_count()) /
           static_cast<double>(mask.size());
}

double sr_of(std::size_t corrupted_observed, const IndexMask& mask) {
    const std::size_t observed = mask.observed_count();
    if (observed == 0) throw std::invalid_argument("sr_of: no observed entries");
    return static_cast<double>(corrupted_observed) / static_cast<double>(observed);
}

} // namespace brtr
