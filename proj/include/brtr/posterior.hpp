#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "brtr/tensor.hpp"
#include "brtr/tr_model.hpp"

namespace brtr {

/// Gamma shape/rate constants of the top-level priors. The ARD pair applies to
/// every mode.
struct Hyperpriors {
    double c0 = 1e-6;
    double d0 = 1e-6;
    double a0_eta = 1e-6;
    double b0_eta = 1e-6;
    double a0_tau = 1e-6;
    double b0_tau = 1e-6;

    void validate() const;
};

enum class MomentMode { exact, plugin };
enum class InitMode { tr_approx, random };

MomentMode parse_moment_mode(std::string_view s);
InitMode parse_init_mode(std::string_view s);
std::string_view to_string(MomentMode m);
std::string_view to_string(InitMode m);

struct InferenceConfig {
    TRRank max_rank;
    std::size_t max_iters = 100;
    double elbo_rel_tol = 1e-6;
    /// Relative component power below which a rank index is removed; 0 disables pruning.
    double prune_threshold = 1e-4;
    /// Pruning starts after this many full sweeps.
    std::size_t prune_after = 2;
    /// Rebalance every bond basis once per sweep before pruning.
    bool balance_gauge = true;
    /// Update each core jointly with q(S): core means solve a weighted fit to y
    /// and the sparse posterior is refreshed right after.
    bool joint_sparse = true;
    MomentMode moment_mode = MomentMode::exact;
    InitMode init_mode = InitMode::random;
    std::uint64_t seed = 0;
    Hyperpriors hyper;

    /// Defaults with max rank 30 on every ring position.
    static InferenceConfig defaults(std::size_t order);
    void validate(std::size_t order) const;
};

/// q(Z^(n)): a Gaussian per lateral slice over vec(Z_n(i_n)).
struct CorePosterior {
    DenseTensor mean;
    std::vector<Matrix> slice_cov;

    std::size_t left_rank() const { return mean.shape()[0]; }
    std::size_t dim() const { return mean.shape()[1]; }
    std::size_t right_rank() const { return mean.shape()[2]; }
};

/// q(u^(n)) = prod_r Ga(c_r, d_r).
struct ArdPosterior {
    Vector c;
    Vector d;

    Vector expectation() const { return c.cwiseQuotient(d); }
    Vector expected_log() const;
};

/// q(S) on observed entries; mean is zero and var unused elsewhere.
struct SparsePosterior {
    DenseTensor mean;
    DenseTensor var;
};

struct EtaPosterior {
    DenseTensor a;
    DenseTensor b;
};

struct TauPosterior {
    double a = 1.0;
    double b = 1.0;

    double expectation() const { return a / b; }
    double expected_log() const;
};

/// Observed data with its cached support.
class Observations {
public:
    Observations(DenseTensor y, IndexMask mask);

    const DenseTensor& y() const { return y_; }
    const IndexMask& mask() const { return mask_; }
    const Shape& shape() const { return y_.shape(); }
    std::span<const std::size_t> observed() const { return observed_; }
    std::size_t count() const { return observed_.size(); }

private:
    DenseTensor y_;
    IndexMask mask_;
    std::vector<std::size_t> observed_;
};

struct PosteriorState {
    std::vector<CorePosterior> cores;
    /// ard[p] holds u^(p+1), the factor on ring position p+1 (u^(0) == u^(N)).
    std::vector<ArdPosterior> ard;
    SparsePosterior sparse;
    EtaPosterior eta;
    TauPosterior tau;
    Hyperpriors hyper;
    TRRank ranks;
    MomentMode moment_mode = MomentMode::exact;
    bool joint_sparse = true;

    /// Sum over observed entries of Var[reconstruction] under the current core
    /// posteriors. Set by update_core, cleared by prune.
    std::optional<double> recon_variance;
    std::size_t jitter_events = 0;

    std::size_t order() const { return cores.size(); }
    TRCores mean_cores() const;

    /// ARD factor index for the left/right ring position of core k (0-based).
    std::size_t left_ard(std::size_t k) const { return (k + order() - 1) % order(); }
    std::size_t right_ard(std::size_t k) const { return k; }

    /// Throws std::logic_error on any structural inconsistency.
    void check_consistency() const;
};

} // namespace brtr
