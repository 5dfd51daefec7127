#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/SVD>

#include "brtr/inference.hpp"
#include "brtr/random.hpp"

namespace brtr {

namespace {

// Singular values below this fraction of the largest are treated as zero.
constexpr double kSvdRelTol = 1e-12;

std::size_t numerical_rank(const Vector& s, std::size_t cap) {
    if (s.size() == 0 || s(0) <= 0.0) return 1;
    std::size_t r = 0;
    while (r < static_cast<std::size_t>(s.size()) && r < cap && s(r) > kSvdRelTol * s(0)) ++r;
    return std::max<std::size_t>(r, 1);
}

DenseTensor pad_core(const DenseTensor& core, std::size_t left, std::size_t right) {
    DenseTensor out(Shape{left, core.shape()[1], right});
    for (std::size_t b = 0; b < core.shape()[2]; ++b)
        for (std::size_t i = 0; i < core.shape()[1]; ++i)
            for (std::size_t a = 0; a < core.shape()[0]; ++a) out(a, i, b) = core(a, i, b);
    return out;
}

} // namespace

TRCores tr_svd(const DenseTensor& t, const TRRank& max_rank) {
    const std::size_t order = t.order();
    if (order < 2) throw std::invalid_argument("tr_svd needs a tensor of order >= 2");
    if (max_rank.order() != order) throw std::invalid_argument("tr_svd: rank/order mismatch");
    const auto& dims = t.shape().dims();
    const std::size_t total = t.size();

    // First split: I_1 x rest, with the kept components arranged on an r0 x r1 grid.
    Eigen::Map<const Matrix> unfold(t.data().data(), static_cast<Eigen::Index>(dims[0]),
                                    static_cast<Eigen::Index>(total / dims[0]));
    Eigen::BDCSVD<Matrix> svd(unfold, Eigen::ComputeThinU | Eigen::ComputeThinV);
    std::size_t kept = numerical_rank(svd.singularValues(), max_rank[0] * max_rank[1]);
    std::size_t r0 = std::min<std::size_t>(
        max_rank[0], static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(kept)))));
    std::size_t r1 = std::min<std::size_t>(max_rank[1], (kept + r0 - 1) / r0);
    kept = std::min(kept, r0 * r1);

    std::vector<DenseTensor> cores;
    DenseTensor first(Shape{r0, dims[0], r1});
    const std::size_t rest = total / dims[0];
    // remainder(b, m, a) = (S V^T)(j, m) with j = a + r0*b
    DenseTensor remainder(Shape{r1, rest, r0});
    const Matrix sv = svd.singularValues().head(static_cast<Eigen::Index>(kept)).asDiagonal() *
                      svd.matrixV().leftCols(static_cast<Eigen::Index>(kept)).transpose();
    for (std::size_t j = 0; j < kept; ++j) {
        const std::size_t a = j % r0, b = j / r0;
        for (std::size_t i = 0; i < dims[0]; ++i) first(a, i, b) = svd.matrixU()(i, j);
        for (std::size_t m = 0; m < rest; ++m) remainder(b, m, a) = sv(j, m);
    }
    cores.push_back(std::move(first));

    // Sequential SVDs over the remainder, carrying r0 on the trailing mode.
    std::vector<std::size_t> r(order + 1);
    r[0] = r0;
    r[1] = r1;
    r[order] = r0;
    Matrix current = Eigen::Map<const Matrix>(remainder.data().data(),
                                              static_cast<Eigen::Index>(r1),
                                              static_cast<Eigen::Index>(rest * r0));
    std::size_t remaining = rest * r0;
    for (std::size_t n = 1; n + 1 < order; ++n) {
        const std::size_t rows = r[n] * dims[n];
        remaining /= dims[n];
        const Matrix unfolded = Eigen::Map<const Matrix>(
            current.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(remaining));
        Eigen::BDCSVD<Matrix> step(unfolded, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const std::size_t rk = numerical_rank(step.singularValues(), max_rank[n + 1]);
        r[n + 1] = rk;
        DenseTensor core(Shape{r[n], dims[n], rk});
        Eigen::Map<Matrix>(core.data().data(), static_cast<Eigen::Index>(rows),
                           static_cast<Eigen::Index>(rk)) =
            step.matrixU().leftCols(static_cast<Eigen::Index>(rk));
        cores.push_back(std::move(core));
        current = step.singularValues().head(static_cast<Eigen::Index>(rk)).asDiagonal() *
                  step.matrixV().leftCols(static_cast<Eigen::Index>(rk)).transpose();
    }
    DenseTensor last(Shape{r[order - 1], dims[order - 1], r0});
    std::copy(current.data(), current.data() + current.size(), last.data().begin());
    cores.push_back(std::move(last));

    // Equalize core norms; the reconstruction is unchanged.
    std::vector<double> norms;
    double log_mean = 0.0;
    for (const auto& c : cores) {
        norms.push_back(frobenius_norm(c));
        log_mean += std::log(std::max(norms.back(), 1e-300));
    }
    log_mean /= static_cast<double>(order);
    if (std::all_of(norms.begin(), norms.end(), [](double v) { return v > 0.0; })) {
        for (std::size_t n = 0; n < order; ++n) {
            const double scale = std::exp(log_mean) / norms[n];
            for (auto& v : cores[n].data()) v *= scale;
        }
    }

    for (std::size_t n = 0; n < order; ++n) {
        cores[n] = pad_core(cores[n], max_rank[n], max_rank[n + 1]);
    }
    return TRCores(std::move(cores));
}

PosteriorState initialize(const Observations& obs, const InferenceConfig& cfg) {
    const std::size_t order = obs.shape().order();
    if (order < 2) throw std::invalid_argument("inference needs a tensor of order >= 2");
    cfg.validate(order);
    if (obs.count() == 0) throw std::invalid_argument("no observed entries");

    PosteriorState state;
    state.hyper = cfg.hyper;
    state.ranks = cfg.max_rank;
    state.moment_mode = cfg.moment_mode;
    state.joint_sparse = cfg.joint_sparse;

    TRCores means;
    if (cfg.init_mode == InitMode::tr_approx) {
        DenseTensor filled(obs.shape());
        for (auto o : obs.observed()) filled[o] = obs.y()[o];
        means = tr_svd(filled, cfg.max_rank);
    } else {
        CounterRng rng(cfg.seed, streams::kInitCores);
        std::vector<DenseTensor> cores;
        for (std::size_t n = 0; n < order; ++n) {
            DenseTensor c(Shape{cfg.max_rank[n], obs.shape()[n], cfg.max_rank[n + 1]});
            for (auto& v : c.data()) v = rng.normal();
            cores.push_back(std::move(c));
        }
        means = TRCores(std::move(cores));
    }

    for (std::size_t n = 0; n < order; ++n) {
        CorePosterior core;
        core.mean = means.core(n);
        const auto len = static_cast<Eigen::Index>(cfg.max_rank[n] * cfg.max_rank[n + 1]);
        core.slice_cov.assign(obs.shape()[n], Matrix::Identity(len, len));
        state.cores.push_back(std::move(core));

        // Shapes from the hyperpriors, rates chosen so that E[u] = 1.
        ArdPosterior ard;
        const auto r = static_cast<Eigen::Index>(cfg.max_rank[n + 1]);
        ard.c = Vector::Constant(r, cfg.hyper.c0);
        ard.d = Vector::Constant(r, cfg.hyper.c0);
        state.ard.push_back(std::move(ard));
    }

    state.tau = TauPosterior{cfg.hyper.a0_tau, cfg.hyper.a0_tau};

    state.eta.a = DenseTensor(obs.shape(), cfg.hyper.a0_eta);
    state.eta.b = DenseTensor(obs.shape(), cfg.hyper.a0_eta);
    state.sparse.mean = DenseTensor(obs.shape());
    state.sparse.var = DenseTensor(obs.shape());
    CounterRng rng(cfg.seed, streams::kInitSparse);
    for (auto o : obs.observed()) {
        state.sparse.mean[o] = rng.normal_at(o);
        state.sparse.var[o] = 1.0;
    }
    state.check_consistency();
    return state;
}

} // namespace brtr
