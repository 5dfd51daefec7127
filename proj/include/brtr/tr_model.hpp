#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "brtr/tensor.hpp"

namespace brtr {

/// Ring rank (R_0, R_1, .., R_N) with R_0 == R_N.
class TRRank {
public:
    TRRank() = default;
    TRRank(std::initializer_list<std::size_t> ranks);
    explicit TRRank(std::vector<std::size_t> ranks);

    /// Builds (R_N, R_1, .., R_N) from the N inner ranks.
    static TRRank from_inner(std::span<const std::size_t> inner);
    static TRRank uniform(std::size_t order, std::size_t rank);

    std::size_t order() const { return ranks_.empty() ? 0 : ranks_.size() - 1; }
    std::size_t operator[](std::size_t k) const { return ranks_[k]; }
    const std::vector<std::size_t>& values() const { return ranks_; }

    /// Sets R_k, keeping R_0 and R_N equal.
    void set(std::size_t k, std::size_t value);

    bool operator==(const TRRank&) const = default;

private:
    std::vector<std::size_t> ranks_;
};

/// The N order-3 cores of a tensor ring; core n is R_{n-1} x I_n x R_n.
class TRCores {
public:
    TRCores() = default;
    explicit TRCores(std::vector<DenseTensor> cores);

    std::size_t order() const { return cores_.size(); }
    TRRank ranks() const;
    Shape dims() const;

    /// Core by 0-based position.
    const DenseTensor& core(std::size_t k) const { return cores_[k]; }
    DenseTensor& core(std::size_t k) { return cores_[k]; }
    const std::vector<DenseTensor>& cores() const { return cores_; }

    /// Lateral slice Z(:, i, :) of core k (both 0-based).
    Matrix slice(std::size_t k, std::size_t i) const;

private:
    std::vector<DenseTensor> cores_;
};

/// Lateral slices of an order-3 tensor, one R_{n-1} x R_n matrix per middle index.
std::vector<Matrix> lateral_slices(const DenseTensor& core);

/// Writes a lateral slice back into an order-3 tensor.
void set_lateral_slice(DenseTensor& core, std::size_t i, const Matrix& slice);

/// Tr(Z_1(i_1) Z_2(i_2) ... Z_N(i_N)) for a 1-based index.
double tr_entry(const TRCores& cores, const MultiIndex& idx);

/// Full reconstruction. Built from two half-ring connection products.
DenseTensor tr_full(const TRCores& cores);

/// Tensor connection product of a chain of order-3 tensors. The merged middle
/// index runs first-index-fastest over the original middle indices.
DenseTensor tcp(std::span<const DenseTensor> chain);

/// Connection product of all cores except core n (1-based), starting at n+1
/// and wrapping: shape R_n x (I_{n+1}..I_N I_1..I_{n-1}) x R_{n-1}.
DenseTensor subchain_except(const TRCores& cores, std::size_t n);

/// vec(Q^T) with Q = Z_{n+1}(i_{n+1}) .. Z_{n-1}(i_{n-1}), so that
/// tr_entry(cores, idx) = <design_row, vec(Z_n(i_n))>.
Vector design_row(const TRCores& cores, std::size_t n, const MultiIndex& idx);

/// vec(M^T) for an R x C matrix, i.e. the row-major flattening of M.
Vector vec_transpose(const Matrix& m);

} // namespace brtr
