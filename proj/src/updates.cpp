#include <cmath>
#include <optional>
#include <stdexcept>

#include <Eigen/Cholesky>

#include "brtr/inference.hpp"
#include "subchain.hpp"

namespace brtr {

namespace {

std::size_t checked_mode(const PosteriorState& state, std::size_t n) {
    if (n < 1 || n > state.order()) {
        throw std::out_of_range("mode " + std::to_string(n) + " out of range");
    }
    return n - 1;
}

// Inverse of a symmetric positive-definite matrix. Retries once with a small
// diagonal jitter when the factorization fails.
Matrix spd_inverse(const Matrix& precision, std::size_t& jitter_events) {
    Eigen::LLT<Matrix> llt(precision);
    if (llt.info() != Eigen::Success) {
        ++jitter_events;
        Matrix jittered = precision;
        jittered.diagonal().array() += 1e-10 * precision.diagonal().mean();
        llt.compute(jittered);
        if (llt.info() != Eigen::Success) {
            throw NumericalError("slice precision matrix is not positive definite");
        }
    }
    Matrix inv = llt.solve(Matrix::Identity(precision.rows(), precision.cols()));
    return 0.5 * (inv + inv.transpose());
}

} // namespace

DesignMoments expected_design_moments(const PosteriorState& state, std::size_t n,
                                      const MultiIndex& idx) {
    const std::size_t k = checked_mode(state, n);
    const std::size_t order = state.order();
    std::vector<std::size_t> dims;
    for (const auto& c : state.cores) dims.push_back(c.dim());
    const auto zero = idx.to_zero_based(Shape(dims));

    const auto rows = static_cast<Eigen::Index>(state.ranks[k + 1]);
    const auto cols = static_cast<Eigen::Index>(state.ranks[k]);
    const bool exact = state.moment_mode == MomentMode::exact;

    Matrix q = Matrix::Identity(rows, rows);
    Matrix kron = Matrix::Identity(rows * rows, rows * rows);
    for (std::size_t s = 1; s < order; ++s) {
        const std::size_t m = (k + s) % order;
        const auto& core = state.cores[m];
        const Matrix slice = lateral_slices(core.mean)[zero[m]];
        q = q * slice;
        if (exact) {
            const Matrix full =
                detail::kron_mean(slice) +
                detail::kron_cov(core.slice_cov[zero[m]], slice.rows(), slice.cols());
            kron = kron * full;
        }
    }

    DesignMoments out;
    out.mean = vec_transpose(q);
    if (exact) {
        out.second = detail::kron_to_design_layout(kron, rows, cols);
    } else {
        out.second = out.mean * out.mean.transpose();
    }
    return out;
}

void update_core(PosteriorState& state, const Observations& obs, std::size_t n) {
    const std::size_t k = checked_mode(state, n);
    const double tau = state.tau.expectation();
    std::optional<DenseTensor> weights;
    if (state.joint_sparse) {
        // Entry weights once q(S) is maximized out of the block.
        weights.emplace(obs.shape());
        for (auto o : obs.observed()) {
            const double eta = state.eta.a[o] / state.eta.b[o];
            (*weights)[o] = tau * eta / (tau + eta);
        }
    }
    const auto stats = detail::accumulate_slice_stats(state, obs, k, weights ? &*weights : nullptr);

    auto& core = state.cores[k];
    const Vector u_left = state.ard[state.left_ard(k)].expectation();
    const Vector u_right = state.ard[state.right_ard(k)].expectation();
    const auto rl = u_left.size(), rr = u_right.size();
    Vector prior(rl * rr);
    for (Eigen::Index b = 0; b < rr; ++b)
        for (Eigen::Index a = 0; a < rl; ++a) prior(a + rl * b) = u_left(a) * u_right(b);

    for (std::size_t i = 0; i < core.dim(); ++i) {
        Matrix precision = tau * stats.second[i];
        precision.diagonal() += prior;
        core.slice_cov[i] = spd_inverse(precision, state.jitter_events);
        Vector mean;
        if (weights) {
            Matrix system = stats.weighted[i];
            if (!stats.cov.empty()) system += tau * stats.cov[i];
            system.diagonal() += prior;
            mean = spd_inverse(system, state.jitter_events) * stats.weighted_rhs[i];
        } else {
            mean = tau * (core.slice_cov[i] * stats.rhs[i]);
        }
        set_lateral_slice(core.mean, i, Eigen::Map<const Matrix>(mean.data(), rl, rr));
    }
    state.recon_variance = detail::variance_from_stats(core, stats);
    if (weights) update_sparse(state, obs);
}

void update_ard(PosteriorState& state, std::size_t n) {
    const std::size_t k = checked_mode(state, n);
    const std::size_t order = state.order();
    const std::size_t next = (k + 1) % order;
    const auto& left_core = state.cores[k];   // rank index on its third mode
    const auto& right_core = state.cores[next]; // rank index on its first mode
    const Vector u_prev = state.ard[state.left_ard(k)].expectation();
    const Vector u_next = state.ard[state.right_ard(next)].expectation();

    auto& ard = state.ard[k];
    const std::size_t rank = state.ranks[k + 1];
    const double shape = state.hyper.c0 + 0.5 * static_cast<double>(
                                              left_core.dim() * left_core.left_rank() +
                                              right_core.dim() * right_core.right_rank());
    const std::size_t rl = left_core.left_rank();
    const std::size_t rn = right_core.right_rank();
    for (std::size_t r = 0; r < rank; ++r) {
        double left_sum = 0.0;
        for (std::size_t i = 0; i < left_core.dim(); ++i) {
            const auto& cov = left_core.slice_cov[i];
            for (std::size_t a = 0; a < rl; ++a) {
                const double m = left_core.mean(a, i, r);
                const auto v = static_cast<Eigen::Index>(a + rl * r);
                left_sum += u_prev(static_cast<Eigen::Index>(a)) * (m * m + cov(v, v));
            }
        }
        double right_sum = 0.0;
        for (std::size_t i = 0; i < right_core.dim(); ++i) {
            const auto& cov = right_core.slice_cov[i];
            for (std::size_t c = 0; c < rn; ++c) {
                const double m = right_core.mean(r, i, c);
                const auto v = static_cast<Eigen::Index>(r + rank * c);
                right_sum += u_next(static_cast<Eigen::Index>(c)) * (m * m + cov(v, v));
            }
        }
        ard.c(static_cast<Eigen::Index>(r)) = shape;
        ard.d(static_cast<Eigen::Index>(r)) = state.hyper.d0 + 0.5 * left_sum + 0.5 * right_sum;
    }
}

void update_sparse(PosteriorState& state, const Observations& obs) {
    const DenseTensor recon = tr_full(state.mean_cores());
    const double tau = state.tau.expectation();
    for (auto o : obs.observed()) {
        const double eta = state.eta.a[o] / state.eta.b[o];
        const double var = 1.0 / (eta + tau);
        state.sparse.var[o] = var;
        state.sparse.mean[o] = var * tau * (obs.y()[o] - recon[o]);
    }
}

void update_eta(PosteriorState& state, const Observations& obs) {
    const auto& h = state.hyper;
    for (auto o : obs.observed()) {
        const double s = state.sparse.mean[o];
        state.eta.a[o] = h.a0_eta + 0.5;
        state.eta.b[o] = h.b0_eta + 0.5 * (s * s + state.sparse.var[o]);
    }
}

double recon_variance_sum(const PosteriorState& state, const Observations& obs) {
    if (state.moment_mode == MomentMode::plugin) return 0.0;
    const auto stats = detail::accumulate_slice_stats(state, obs, 0);
    return detail::variance_from_stats(state.cores[0], stats);
}

namespace detail {

// sum_o E[(y_o - recon_o - S_o)^2]
double expected_residual_sq(const PosteriorState& state, const Observations& obs) {
    const DenseTensor recon = tr_full(state.mean_cores());
    double total = 0.0;
    for (auto o : obs.observed()) {
        const double r = obs.y()[o] - recon[o] - state.sparse.mean[o];
        total += r * r + state.sparse.var[o];
    }
    if (state.moment_mode == MomentMode::exact) {
        total += state.recon_variance ? *state.recon_variance : recon_variance_sum(state, obs);
    }
    return total;
}

} // namespace detail

void update_tau(PosteriorState& state, const Observations& obs) {
    const auto& h = state.hyper;
    state.tau.a = h.a0_tau + 0.5 * static_cast<double>(obs.count());
    state.tau.b = h.b0_tau + 0.5 * detail::expected_residual_sq(state, obs);
}

Prediction predict(const PosteriorState& state, const IndexMask& mask) {
    Prediction p{tr_full(state.mean_cores()), DenseTensor(state.sparse.mean.shape())};
    if (!(mask.shape() == p.sparse.shape())) {
        throw std::invalid_argument("predict: mask shape mismatch");
    }
    for (std::size_t o = 0; o < mask.size(); ++o) {
        if (mask[o]) p.sparse[o] = state.sparse.mean[o];
    }
    return p;
}

} // namespace brtr
