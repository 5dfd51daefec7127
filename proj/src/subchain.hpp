#pragma once

// Internal: subchain moment machinery shared by the core, tau and ELBO updates.

#include <cstddef>
#include <vector>

#include "brtr/posterior.hpp"

namespace brtr::detail {

/// Per-slice sufficient statistics for the update of one core. a_o denotes the
/// design row vec(Q_o^T) of observed entry o.
struct SliceStats {
    /// sum_o E[a_o a_o^T] over observed entries in the slice.
    std::vector<Matrix> second;
    /// sum_o (E[a_o a_o^T] - E[a_o] E[a_o]^T); empty in plugin mode.
    std::vector<Matrix> cov;
    /// sum_o E[a_o] (y_o - E[S_o]).
    std::vector<Vector> rhs;
    /// With entry weights w: sum_o w_o E[a_o] E[a_o]^T and sum_o w_o E[a_o] y_o.
    std::vector<Matrix> weighted;
    std::vector<Vector> weighted_rhs;
};

/// Walks every observed entry grouped by slice of core k (0-based), sharing
/// subchain prefix products between entries. The weighted fields are filled
/// only when weights are given.
SliceStats accumulate_slice_stats(const PosteriorState& state, const Observations& obs,
                                  std::size_t k, const DenseTensor* weights = nullptr);

/// E[Z] kron E[Z] for a slice mean.
Matrix kron_mean(const Matrix& mean);

/// Covariance of vec(Z) rearranged into the layout of E[Z kron Z].
Matrix kron_cov(const Matrix& cov, Eigen::Index rows, Eigen::Index cols);

/// Rearranges K = E[Q kron Q] (Q is rows x cols) into E[vec(Q^T) vec(Q^T)^T].
Matrix kron_to_design_layout(const Matrix& k, Eigen::Index rows, Eigen::Index cols);

/// sum_i tr(V_i P_i) + mean_i^T C_i mean_i for core k: the summed variance of
/// the reconstruction over observed entries, given stats built for core k.
double variance_from_stats(const CorePosterior& core, const SliceStats& stats);

/// sum over observed entries of E[(y - reconstruction - S)^2]. Uses the cached
/// reconstruction variance when present.
double expected_residual_sq(const PosteriorState& state, const Observations& obs);

} // namespace brtr::detail
