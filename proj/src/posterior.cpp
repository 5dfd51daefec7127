#include "brtr/posterior.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include <boost/math/special_functions/digamma.hpp>

namespace brtr {

void Hyperpriors::validate() const {
    for (double v : {c0, d0, a0_eta, b0_eta, a0_tau, b0_tau}) {
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw std::invalid_argument("hyperprior constants must be positive and finite");
        }
    }
}

MomentMode parse_moment_mode(std::string_view s) {
    if (s == "exact") return MomentMode::exact;
    if (s == "plugin") return MomentMode::plugin;
    throw std::invalid_argument("unknown moment mode: " + std::string(s));
}

InitMode parse_init_mode(std::string_view s) {
    if (s == "tr-approx") return InitMode::tr_approx;
    if (s == "random") return InitMode::random;
    throw std::invalid_argument("unknown init mode: " + std::string(s));
}

std::string_view to_string(MomentMode m) { return m == MomentMode::exact ? "exact" : "plugin"; }
std::string_view to_string(InitMode m) { return m == InitMode::tr_approx ? "tr-approx" : "random"; }

InferenceConfig InferenceConfig::defaults(std::size_t order) {
    InferenceConfig cfg;
    cfg.max_rank = TRRank::uniform(order, 30);
    return cfg;
}

void InferenceConfig::validate(std::size_t order) const {
    if (max_rank.order() != order) {
        throw std::invalid_argument("max rank has " + std::to_string(max_rank.order()) +
                                    " ring positions, tensor has order " + std::to_string(order));
    }
    if (max_iters < 1) throw std::invalid_argument("max_iters must be at least 1");
    if (!(elbo_rel_tol > 0.0)) throw std::invalid_argument("elbo_rel_tol must be positive");
    if (!(prune_threshold >= 0.0) || !std::isfinite(prune_threshold)) {
        throw std::invalid_argument("prune_threshold must be non-negative");
    }
    hyper.validate();
}

Vector ArdPosterior::expected_log() const {
    Vector out(c.size());
    for (Eigen::Index r = 0; r < c.size(); ++r) {
        out(r) = boost::math::digamma(c(r)) - std::log(d(r));
    }
    return out;
}

double TauPosterior::expected_log() const { return boost::math::digamma(a) - std::log(b); }

Observations::Observations(DenseTensor y, IndexMask mask) : y_(std::move(y)), mask_(std::move(mask)) {
    if (!(y_.shape() == mask_.shape())) {
        throw std::invalid_argument("tensor and mask shapes differ");
    }
    observed_ = mask_.observed_offsets();
    for (auto o : observed_) {
        if (!std::isfinite(y_[o])) throw std::invalid_argument("observed entries must be finite");
    }
}

TRCores PosteriorState::mean_cores() const {
    std::vector<DenseTensor> means;
    means.reserve(cores.size());
    for (const auto& c : cores) means.push_back(c.mean);
    return TRCores(std::move(means));
}

void PosteriorState::check_consistency() const {
    const std::size_t n = order();
    if (ranks.order() != n || ard.size() != n) {
        throw std::logic_error("posterior state: order mismatch");
    }
    for (std::size_t k = 0; k < n; ++k) {
        const auto& c = cores[k];
        if (c.left_rank() != ranks[k] || c.right_rank() != ranks[k + 1]) {
            throw std::logic_error("posterior state: core " + std::to_string(k + 1) +
                                   " shape does not match ranks");
        }
        if (c.slice_cov.size() != c.dim()) {
            throw std::logic_error("posterior state: slice covariance count mismatch");
        }
        const auto len = static_cast<Eigen::Index>(c.left_rank() * c.right_rank());
        for (const auto& v : c.slice_cov) {
            if (v.rows() != len || v.cols() != len) {
                throw std::logic_error("posterior state: slice covariance size mismatch");
            }
        }
        if (static_cast<std::size_t>(ard[k].c.size()) != ranks[k + 1] ||
            static_cast<std::size_t>(ard[k].d.size()) != ranks[k + 1]) {
            throw std::logic_error("posterior state: ARD factor " + std::to_string(k + 1) +
                                   " length mismatch");
        }
    }
}

} // namespace brtr
