#include <chrono>
#include <cmath>

#include "brtr/inference.hpp"

namespace brtr {

namespace {

std::vector<std::size_t> inner_ranks(const TRRank& r) {
    std::vector<std::size_t> out;
    for (std::size_t n = 1; n <= r.order(); ++n) out.push_back(r[n]);
    return out;
}

} // namespace

FitResult fit(const DenseTensor& y, const IndexMask& mask, const InferenceConfig& cfg) {
    const auto start = std::chrono::steady_clock::now();
    const Observations obs(y, mask);
    FitResult result{initialize(obs, cfg), {}};
    auto& state = result.state;
    auto& report = result.report;
    const std::size_t order = state.order();

    bool pruned_last = false;
    for (std::size_t it = 1; it <= cfg.max_iters; ++it) {
        for (std::size_t n = 1; n <= order; ++n) update_core(state, obs, n);
        for (std::size_t n = 1; n <= order; ++n) update_ard(state, n);
        update_sparse(state, obs);
        update_eta(state, obs);
        update_tau(state, obs);
        if (cfg.balance_gauge) {
            for (std::size_t n = 1; n <= order; ++n) balance_gauge(state, n);
        }

        const double value = elbo(state, obs);
        if (!std::isfinite(value)) {
            throw NumericalError("non-finite ELBO at iteration " + std::to_string(it));
        }
        report.elbo_trace.push_back(value);
        report.iterations = it;

        std::size_t removed = 0;
        if (it > cfg.prune_after) removed = prune(state, cfg.prune_threshold).removed;
        report.pruned_per_iteration.push_back(removed);
        report.rank_trace.push_back(inner_ranks(state.ranks));

        if (it > 1 && !pruned_last && removed == 0) {
            const double prev = report.elbo_trace[it - 2];
            if (std::abs(value - prev) < cfg.elbo_rel_tol * std::abs(prev)) {
                report.converged = true;
                break;
            }
        }
        pruned_last = removed > 0;
    }

    report.final_ranks = inner_ranks(state.ranks);
    report.jitter_events = state.jitter_events;
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

} // namespace brtr
