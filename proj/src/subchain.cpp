#include "subchain.hpp"

#include <cmath>
#include <functional>

namespace brtr::detail {

Matrix kron_mean(const Matrix& mean) { return kronecker(mean, mean); }

Matrix kron_cov(const Matrix& cov, Eigen::Index rows, Eigen::Index cols) {
    // entry ((a*rows + c), (b*cols + d)) = Cov[Z(a,b), Z(c,d)]
    Matrix out(rows * rows, cols * cols);
    for (Eigen::Index b = 0; b < cols; ++b)
        for (Eigen::Index d = 0; d < cols; ++d)
            for (Eigen::Index a = 0; a < rows; ++a)
                for (Eigen::Index c = 0; c < rows; ++c)
                    out(a * rows + c, b * cols + d) = cov(a + rows * b, c + rows * d);
    return out;
}

Matrix kron_to_design_layout(const Matrix& k, Eigen::Index rows, Eigen::Index cols) {
    // E[Q(i,j) Q(l,m)] sits at k(i*rows + l, j*cols + m) and belongs at
    // (j + cols*i, m + cols*l) of the design second moment.
    Matrix out(rows * cols, rows * cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index l = 0; l < rows; ++l)
            for (Eigen::Index j = 0; j < cols; ++j)
                for (Eigen::Index m = 0; m < cols; ++m)
                    out(j + cols * i, m + cols * l) = k(i * rows + l, j * cols + m);
    return out;
}

namespace {

struct CoreMoments {
    std::vector<Matrix> mean;
    std::vector<Matrix> kron_full;  // E[Z kron Z]
    std::vector<Matrix> kron_cov;   // E[Z kron Z] - E[Z] kron E[Z]
};

CoreMoments core_moments(const CorePosterior& core, bool exact) {
    CoreMoments m;
    m.mean = lateral_slices(core.mean);
    if (exact) {
        const auto rows = static_cast<Eigen::Index>(core.left_rank());
        const auto cols = static_cast<Eigen::Index>(core.right_rank());
        m.kron_full.reserve(m.mean.size());
        m.kron_cov.reserve(m.mean.size());
        for (std::size_t i = 0; i < m.mean.size(); ++i) {
            m.kron_cov.push_back(kron_cov(core.slice_cov[i], rows, cols));
            m.kron_full.push_back(kron_mean(m.mean[i]) + m.kron_cov.back());
        }
    }
    return m;
}

} // namespace

SliceStats accumulate_slice_stats(const PosteriorState& state, const Observations& obs,
                                  std::size_t k, const DenseTensor* weights) {
    const std::size_t order = state.order();
    const bool exact = state.moment_mode == MomentMode::exact;
    const auto& shape = obs.shape();
    const auto strides = shape.strides();

    const auto q_rows = static_cast<Eigen::Index>(state.ranks[k + 1]);
    const auto q_cols = static_cast<Eigen::Index>(state.ranks[k]);
    const Eigen::Index len = q_rows * q_cols;
    const std::size_t dim_k = shape[k];

    SliceStats stats;
    stats.second.assign(dim_k, Matrix::Zero(len, len));
    stats.rhs.assign(dim_k, Vector::Zero(len));
    if (weights) {
        stats.weighted.assign(dim_k, Matrix::Zero(len, len));
        stats.weighted_rhs.assign(dim_k, Vector::Zero(len));
    }
    std::vector<Matrix> cov_kron;
    if (exact) cov_kron.assign(dim_k, Matrix::Zero(q_rows * q_rows, q_cols * q_cols));

    // Subchain order k+1, .., N-1, 0, .., k-1.
    std::vector<std::size_t> chain;
    for (std::size_t s = 1; s < order; ++s) chain.push_back((k + s) % order);
    std::vector<CoreMoments> moments;
    moments.reserve(chain.size());
    for (auto m : chain) moments.push_back(core_moments(state.cores[m], exact));

    const std::size_t last = chain.size() - 1;
    const std::size_t last_mode = chain[last];
    const auto& last_mom = moments[last];
    const auto& y = obs.y();
    const auto& mask = obs.mask();
    const auto& s_mean = state.sparse.mean;

    Matrix design(len, static_cast<Eigen::Index>(shape[last_mode]));
    Matrix design_w(weights ? len : 0, static_cast<Eigen::Index>(shape[last_mode]));
    Vector a(len);

    // prefix: mean product over chain[0..depth); dvar: covariance part of the
    // prefix's E[T kron T] (absent while it is exactly zero).
    std::function<void(std::size_t, const Matrix&, const Matrix*, std::size_t)> walk =
        [&](std::size_t depth, const Matrix& prefix, const Matrix* dvar, std::size_t offset) {
            if (depth < last) {
                const std::size_t mode = chain[depth];
                const auto& mom = moments[depth];
                Matrix kron_prefix;
                if (exact) kron_prefix = kron_mean(prefix);
                for (std::size_t i = 0; i < shape[mode]; ++i) {
                    Matrix next = prefix * mom.mean[i];
                    if (exact) {
                        Matrix next_var = kron_prefix * mom.kron_cov[i];
                        if (dvar) next_var.noalias() += *dvar * mom.kron_full[i];
                        walk(depth + 1, next, &next_var, offset + i * strides[mode]);
                    } else {
                        walk(depth + 1, next, nullptr, offset + i * strides[mode]);
                    }
                }
                return;
            }

            Matrix kron_prefix;
            if (exact) kron_prefix = kron_mean(prefix);
            Matrix w_full, w_cov;
            for (std::size_t ik = 0; ik < dim_k; ++ik) {
                const std::size_t base = offset + ik * strides[k];
                Eigen::Index count = 0;
                if (exact) {
                    w_full.setZero(last_mom.kron_full[0].rows(), last_mom.kron_full[0].cols());
                    w_cov.setZero(w_full.rows(), w_full.cols());
                }
                for (std::size_t il = 0; il < shape[last_mode]; ++il) {
                    const std::size_t off = base + il * strides[last_mode];
                    if (!mask[off]) continue;
                    const Matrix q = prefix * last_mom.mean[il];
                    a = vec_transpose(q);
                    if (weights) {
                        const double w = (*weights)[off];
                        design_w.col(count) = std::sqrt(w) * a;
                        stats.weighted_rhs[ik].noalias() += (w * y[off]) * a;
                    }
                    design.col(count++) = a;
                    stats.rhs[ik].noalias() += (y[off] - s_mean[off]) * a;
                    if (exact) {
                        w_full += last_mom.kron_full[il];
                        w_cov += last_mom.kron_cov[il];
                    }
                }
                if (count == 0) continue;
                stats.second[ik].selfadjointView<Eigen::Lower>().rankUpdate(design.leftCols(count));
                if (weights) {
                    stats.weighted[ik].selfadjointView<Eigen::Lower>().rankUpdate(
                        design_w.leftCols(count));
                }
                if (exact) {
                    cov_kron[ik].noalias() += kron_prefix * w_cov;
                    if (dvar) cov_kron[ik].noalias() += *dvar * w_full;
                }
            }
        };

    const Matrix identity = Matrix::Identity(q_rows, q_rows);
    walk(0, identity, nullptr, 0);

    for (std::size_t ik = 0; ik < dim_k; ++ik) {
        stats.second[ik] = stats.second[ik].selfadjointView<Eigen::Lower>();
        if (weights) stats.weighted[ik] = stats.weighted[ik].selfadjointView<Eigen::Lower>();
    }
    if (exact) {
        stats.cov.resize(dim_k);
        for (std::size_t ik = 0; ik < dim_k; ++ik) {
            Matrix c = kron_to_design_layout(cov_kron[ik], q_rows, q_cols);
            stats.cov[ik] = 0.5 * (c + c.transpose());
            stats.second[ik] += stats.cov[ik];
        }
    }
    return stats;
}

double variance_from_stats(const CorePosterior& core, const SliceStats& stats) {
    if (stats.cov.empty()) return 0.0;
    const auto means = lateral_slices(core.mean);
    double total = 0.0;
    for (std::size_t i = 0; i < means.size(); ++i) {
        const Eigen::Map<const Vector> z(means[i].data(), means[i].size());
        total += core.slice_cov[i].cwiseProduct(stats.second[i]).sum();
        total += z.dot(stats.cov[i] * z);
    }
    return total;
}

} // namespace brtr::detail
