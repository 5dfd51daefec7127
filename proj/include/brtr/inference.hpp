#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "brtr/posterior.hpp"

namespace brtr {

/// Non-finite ELBO or an unrecoverable factorization failure.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Core means from a sequential-SVD tensor ring approximation of t, zero-padded
/// to the shape dictated by max_rank.
TRCores tr_svd(const DenseTensor& t, const TRRank& max_rank);

PosteriorState initialize(const Observations& obs, const InferenceConfig& cfg);

/// Moments of vec(Q^T) for the subchain Q that multiplies core n (1-based) at idx.
struct DesignMoments {
    Vector mean;
    Matrix second;
};

DesignMoments expected_design_moments(const PosteriorState& state, std::size_t n,
                                      const MultiIndex& idx);

// Coordinate-ascent updates. Mode numbers are 1-based. With joint_sparse set,
// update_core maximizes over q(Z^(n)) and q(S) together and leaves q(S) updated.
void update_core(PosteriorState& state, const Observations& obs, std::size_t n);
void update_ard(PosteriorState& state, std::size_t n);
void update_sparse(PosteriorState& state, const Observations& obs);
void update_eta(PosteriorState& state, const Observations& obs);
void update_tau(PosteriorState& state, const Observations& obs);

/// Sum over observed entries of Var[reconstruction], computed from scratch.
/// Zero in plugin mode.
double recon_variance_sum(const PosteriorState& state, const Observations& obs);

/// ELBO split by model factor; total() is the evidence lower bound.
struct ElboTerms {
    double likelihood = 0.0;
    double core_prior = 0.0;
    double core_entropy = 0.0;
    double ard_prior = 0.0;
    double ard_entropy = 0.0;
    double sparse_prior = 0.0;
    double sparse_entropy = 0.0;
    double eta_prior = 0.0;
    double eta_entropy = 0.0;
    double tau_prior = 0.0;
    double tau_entropy = 0.0;

    double total() const;
};

ElboTerms elbo_terms(const PosteriorState& state, const Observations& obs);
double elbo(const PosteriorState& state, const Observations& obs);

/// Re-expresses the two cores sharing ring position n (1-based) in the bond basis
/// that is optimal for the ELBO given the ARD factor of that position, then
/// refreshes that factor. The reconstruction is unchanged. Returns false when the
/// state is left as it was.
bool balance_gauge(PosteriorState& state, std::size_t n);

struct PruneResult {
    std::size_t removed = 0;
    /// Removed indices per ring position 1..N.
    std::vector<std::size_t> per_position;
};

PruneResult prune(PosteriorState& state, double threshold);

struct RunReport {
    std::vector<double> elbo_trace;
    std::vector<std::size_t> final_ranks;
    std::size_t iterations = 0;
    std::vector<std::size_t> pruned_per_iteration;
    std::vector<std::vector<std::size_t>> rank_trace;
    double wall_seconds = 0.0;
    std::size_t jitter_events = 0;
    bool converged = false;
};

struct FitResult {
    PosteriorState state;
    RunReport report;
};

FitResult fit(const DenseTensor& y, const IndexMask& mask, const InferenceConfig& cfg);

struct Prediction {
    DenseTensor low_rank;
    DenseTensor sparse;
};

/// Point estimates: low-rank part from the core means, sparse part on the
/// observed support only.
Prediction predict(const PosteriorState& state, const IndexMask& mask);

} // namespace brtr
