#include <cmath>
#include <numbers>

#include <Eigen/Cholesky>
#include <boost/math/special_functions/digamma.hpp>

#include "brtr/inference.hpp"
#include "subchain.hpp"

namespace brtr {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

// E_q[ln Ga(x | a0, b0)] for q(x) = Ga(a, b).
double gamma_prior_term(double a0, double b0, double a, double b) {
    const double e_log = boost::math::digamma(a) - std::log(b);
    return a0 * std::log(b0) - std::lgamma(a0) + (a0 - 1.0) * e_log - b0 * a / b;
}

double gamma_entropy(double a, double b) {
    return a - std::log(b) + std::lgamma(a) + (1.0 - a) * boost::math::digamma(a);
}

double log_det_spd(const Matrix& m) {
    Eigen::LLT<Matrix> llt(m);
    if (llt.info() != Eigen::Success) {
        throw NumericalError("slice covariance is not positive definite");
    }
    return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

} // namespace

double ElboTerms::total() const {
    return likelihood + core_prior + core_entropy + ard_prior + ard_entropy + sparse_prior +
           sparse_entropy + eta_prior + eta_entropy + tau_prior + tau_entropy;
}

ElboTerms elbo_terms(const PosteriorState& state, const Observations& obs) {
    ElboTerms t;
    const auto& h = state.hyper;
    const double n_obs = static_cast<double>(obs.count());
    const double e_tau = state.tau.expectation();
    const double e_log_tau = state.tau.expected_log();

    t.likelihood = 0.5 * n_obs * (e_log_tau - kLog2Pi) -
                   0.5 * e_tau * detail::expected_residual_sq(state, obs);

    for (std::size_t k = 0; k < state.order(); ++k) {
        const auto& core = state.cores[k];
        const auto& ard_l = state.ard[state.left_ard(k)];
        const auto& ard_r = state.ard[state.right_ard(k)];
        const Vector eu_l = ard_l.expectation(), elog_l = ard_l.expected_log();
        const Vector eu_r = ard_r.expectation(), elog_r = ard_r.expected_log();
        const std::size_t rl = core.left_rank(), rr = core.right_rank();
        const auto len = static_cast<double>(rl * rr);
        const auto dim = static_cast<double>(core.dim());

        t.core_prior += 0.5 * dim *
                        (static_cast<double>(rr) * elog_l.sum() +
                         static_cast<double>(rl) * elog_r.sum() - len * kLog2Pi);
        for (std::size_t i = 0; i < core.dim(); ++i) {
            const auto& cov = core.slice_cov[i];
            for (std::size_t b = 0; b < rr; ++b) {
                for (std::size_t a = 0; a < rl; ++a) {
                    const double m = core.mean(a, i, b);
                    const auto v = static_cast<Eigen::Index>(a + rl * b);
                    t.core_prior -= 0.5 * eu_l(static_cast<Eigen::Index>(a)) *
                                    eu_r(static_cast<Eigen::Index>(b)) * (m * m + cov(v, v));
                }
            }
            t.core_entropy += 0.5 * (len * (1.0 + kLog2Pi) + log_det_spd(cov));
        }
    }

    for (const auto& ard : state.ard) {
        for (Eigen::Index r = 0; r < ard.c.size(); ++r) {
            t.ard_prior += gamma_prior_term(h.c0, h.d0, ard.c(r), ard.d(r));
            t.ard_entropy += gamma_entropy(ard.c(r), ard.d(r));
        }
    }

    for (auto o : obs.observed()) {
        const double a = state.eta.a[o], b = state.eta.b[o];
        const double e_eta = a / b;
        const double e_log_eta = boost::math::digamma(a) - std::log(b);
        const double s = state.sparse.mean[o], var = state.sparse.var[o];
        t.sparse_prior += 0.5 * (e_log_eta - kLog2Pi) - 0.5 * e_eta * (s * s + var);
        t.sparse_entropy += 0.5 * (1.0 + kLog2Pi + std::log(var));
        t.eta_prior += gamma_prior_term(h.a0_eta, h.b0_eta, a, b);
        t.eta_entropy += gamma_entropy(a, b);
    }

    t.tau_prior = gamma_prior_term(h.a0_tau, h.b0_tau, state.tau.a, state.tau.b);
    t.tau_entropy = gamma_entropy(state.tau.a, state.tau.b);
    return t;
}

double elbo(const PosteriorState& state, const Observations& obs) {
    return elbo_terms(state, obs).total();
}

} // namespace brtr
