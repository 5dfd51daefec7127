#include <algorithm>
#include <numeric>

#include "brtr/inference.hpp"

namespace brtr {

namespace {

DenseTensor keep_mode(const DenseTensor& t, std::size_t mode, const std::vector<std::size_t>& keep) {
    std::vector<std::size_t> dims = t.shape().dims();
    dims[mode] = keep.size();
    DenseTensor out{Shape(dims)};
    for (std::size_t c = 0; c < dims[2]; ++c)
        for (std::size_t b = 0; b < dims[1]; ++b)
            for (std::size_t a = 0; a < dims[0]; ++a) {
                const std::size_t sa = mode == 0 ? keep[a] : a;
                const std::size_t sc = mode == 2 ? keep[c] : c;
                out(a, b, c) = t(sa, b, sc);
            }
    return out;
}

// Covariance over vec of an rl x rr slice restricted to the kept rows (side 0)
// or columns (side 2) of the slice.
Matrix keep_cov(const Matrix& cov, std::size_t rl, std::size_t rr, std::size_t side,
                const std::vector<std::size_t>& keep) {
    std::vector<Eigen::Index> idx;
    const std::size_t nl = side == 0 ? keep.size() : rl;
    const std::size_t nr = side == 2 ? keep.size() : rr;
    for (std::size_t b = 0; b < nr; ++b)
        for (std::size_t a = 0; a < nl; ++a) {
            const std::size_t sa = side == 0 ? keep[a] : a;
            const std::size_t sb = side == 2 ? keep[b] : b;
            idx.push_back(static_cast<Eigen::Index>(sa + rl * sb));
        }
    return cov(idx, idx);
}

} // namespace

PruneResult prune(PosteriorState& state, double threshold) {
    const std::size_t order = state.order();
    PruneResult result;
    result.per_position.assign(order, 0);
    if (!(threshold > 0.0)) return result;

    for (std::size_t k = 0; k < order; ++k) {
        // Ring position k+1 joins core k (third mode) and core k+1 (first mode).
        const std::size_t next = (k + 1) % order;
        auto& left = state.cores[k];
        auto& right = state.cores[next];
        const std::size_t rank = state.ranks[k + 1];
        if (rank <= 1) continue;

        const double count = static_cast<double>(left.left_rank() * left.dim() +
                                                  right.dim() * right.right_rank());
        std::vector<double> power(rank, 0.0);
        for (std::size_t r = 0; r < rank; ++r) {
            double s = 0.0;
            for (std::size_t i = 0; i < left.dim(); ++i)
                for (std::size_t a = 0; a < left.left_rank(); ++a) s += left.mean(a, i, r) * left.mean(a, i, r);
            for (std::size_t c = 0; c < right.right_rank(); ++c)
                for (std::size_t i = 0; i < right.dim(); ++i) s += right.mean(r, i, c) * right.mean(r, i, c);
            power[r] = s / count;
        }
        const double mean_power =
            std::accumulate(power.begin(), power.end(), 0.0) / static_cast<double>(rank);

        std::vector<std::size_t> keep;
        for (std::size_t r = 0; r < rank; ++r) {
            if (!(power[r] < threshold * mean_power)) keep.push_back(r);
        }
        if (keep.empty()) {
            keep.push_back(static_cast<std::size_t>(
                std::max_element(power.begin(), power.end()) - power.begin()));
        }
        if (keep.size() == rank) continue;

        const std::size_t ll = left.left_rank();
        const std::size_t rr = right.right_rank();
        for (auto& cov : left.slice_cov) cov = keep_cov(cov, ll, rank, 2, keep);
        left.mean = keep_mode(left.mean, 2, keep);
        for (auto& cov : right.slice_cov) cov = keep_cov(cov, rank, rr, 0, keep);
        right.mean = keep_mode(right.mean, 0, keep);

        auto& ard = state.ard[k];
        std::vector<Eigen::Index> ki(keep.begin(), keep.end());
        ard.c = Vector(ard.c(ki));
        ard.d = Vector(ard.d(ki));

        state.ranks.set(k + 1, keep.size());
        result.per_position[k] = rank - keep.size();
        result.removed += rank - keep.size();
    }
    if (result.removed > 0) state.recon_variance.reset();
    state.check_consistency();
    return result;
}

} // namespace brtr
