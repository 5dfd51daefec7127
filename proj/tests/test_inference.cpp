#include <cmath>
#include <numbers>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <boost/math/special_functions/digamma.hpp>
#include <gtest/gtest.h>

#include "brtr/inference.hpp"
#include "brtr/metrics.hpp"
#include "test_support.hpp"

using namespace brtr;
using brtr::testing::Gen;

namespace {

struct Problem {
    DenseTensor y;
    IndexMask mask;
};

// Low-rank ring plus a few gross errors, partially observed.
Problem random_problem(Gen& g, std::size_t order, std::size_t max_dim, double p_observed) {
    std::vector<std::size_t> dims(order);
    for (auto& d : dims) d = g.size(2, max_dim);
    const TRCores truth = g.cores(dims, 3);
    DenseTensor y = tr_full(truth);
    for (std::size_t o = 0; o < y.size(); ++o) {
        y[o] += 0.05 * g.normal();
        if (g.coin(0.1)) y[o] += g.uniform(-5.0, 5.0);
    }
    return {y, g.mask(y.shape(), p_observed)};
}

InferenceConfig config(std::size_t order, std::size_t rank, std::uint64_t seed) {
    InferenceConfig cfg = InferenceConfig::defaults(order);
    cfg.max_rank = TRRank::uniform(order, rank);
    cfg.seed = seed;
    cfg.prune_threshold = 0.0;
    return cfg;
}

double rel_change(const DenseTensor& a, const DenseTensor& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t o = 0; o < a.size(); ++o) {
        num += (a[o] - b[o]) * (a[o] - b[o]);
        den += b[o] * b[o];
    }
    return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

// Single observed entry, both modes of size one, every rank one.
struct Scalar {
    Observations obs;
    PosteriorState state;
};

Scalar scalar_problem(double y) {
    Observations obs(DenseTensor(Shape{1, 1}, y), IndexMask(Shape{1, 1}));
    InferenceConfig cfg = config(2, 1, 0);
    PosteriorState state = initialize(obs, cfg);
    return {std::move(obs), std::move(state)};
}

Matrix random_spd(Gen& g, Eigen::Index n, double scale) {
    const Matrix a = g.matrix(n, n);
    return scale * (a * a.transpose() / static_cast<double>(n) + 0.2 * Matrix::Identity(n, n));
}

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

double gamma_log_prior(double a0, double b0, double a, double b) {
    const double elog = boost::math::digamma(a) - std::log(b);
    return a0 * std::log(b0) - std::lgamma(a0) + (a0 - 1.0) * elog - b0 * a / b;
}

double gamma_entropy(double a, double b) {
    return a - std::log(b) + std::lgamma(a) + (1.0 - a) * boost::math::digamma(a);
}

} // namespace

// ---------------------------------------------------------------------------

TEST(Initialize, ExpectationsAreOne) {
    Gen g(40);
    const Problem p = random_problem(g, 3, 4, 0.7);
    const Observations obs(p.y, p.mask);
    const PosteriorState s = initialize(obs, config(3, 3, 1));
    EXPECT_EQ(s.tau.expectation(), 1.0);
    for (auto o : obs.observed()) {
        EXPECT_EQ(s.eta.a[o] / s.eta.b[o], 1.0);
        EXPECT_EQ(s.sparse.var[o], 1.0);
    }
    for (const auto& a : s.ard) EXPECT_EQ(a.expectation(), Vector::Ones(a.c.size()));
    for (const auto& c : s.cores)
        for (const auto& v : c.slice_cov) EXPECT_EQ(v, Matrix::Identity(v.rows(), v.cols()));
    for (std::size_t o = 0; o < p.mask.size(); ++o) {
        if (!p.mask[o]) EXPECT_EQ(s.sparse.mean[o], 0.0);
    }
}

TEST(Initialize, RankOneCoversAreScalarIdentity) {
    Gen g(41);
    const Problem p = random_problem(g, 3, 4, 1.0);
    const Observations obs(p.y, p.mask);
    InferenceConfig cfg = config(3, 1, 0);
    cfg.init_mode = InitMode::tr_approx;
    const PosteriorState s = initialize(obs, cfg);
    for (const auto& c : s.cores) {
        EXPECT_EQ(c.left_rank(), 1u);
        EXPECT_EQ(c.right_rank(), 1u);
        for (const auto& v : c.slice_cov) EXPECT_EQ(v, Matrix::Identity(1, 1));
    }
}

TEST(Initialize, TrApproxReproducesExactRingTensor) {
    Gen g(42);
    for (int trial = 0; trial < 5; ++trial) {
        const TRCores truth = g.cores({5, 4, 6, 5}, std::vector<std::size_t>{2, 2, 3, 2, 2});
        const DenseTensor y = tr_full(truth);
        const Observations obs(y, IndexMask(y.shape()));
        // The first split leaves the (R_0, R_1) grid in an arbitrary basis, so later bonds can need
        // up to R_0 * R_n * R_0. Exact recovery holds once no bond is truncated.
        InferenceConfig cfg = config(4, 12, 0);
        cfg.init_mode = InitMode::tr_approx;
        const PosteriorState s = initialize(obs, cfg);
        EXPECT_LE(rse(tr_full(s.mean_cores()), y), 1e-6);
    }
}

TEST(Initialize, Errors) {
    const DenseTensor y(Shape{2, 2});
    EXPECT_THROW(initialize(Observations(y, IndexMask(y.shape(), false)), config(2, 2, 0)),
                 std::invalid_argument);
    EXPECT_THROW(initialize(Observations(y, IndexMask(y.shape())), config(3, 2, 0)),
                 std::invalid_argument);
    const DenseTensor v(Shape{4});
    EXPECT_THROW(initialize(Observations(v, IndexMask(v.shape())), config(1, 1, 0)),
                 std::invalid_argument);
}

// ---------------------------------------------------------------------------

TEST(DesignMoments, ZeroCovarianceMatchesPlugin) {
    Gen g(43);
    const Problem p = random_problem(g, 4, 3, 1.0);
    const Observations obs(p.y, p.mask);
    PosteriorState s = initialize(obs, config(4, 3, 2));
    for (auto& c : s.cores)
        for (auto& v : c.slice_cov) v.setZero();
    PosteriorState plug = s;
    plug.moment_mode = MomentMode::plugin;
    const MultiIndex idx{2, 1, 2, 2};
    for (std::size_t n = 1; n <= 4; ++n) {
        const auto e = expected_design_moments(s, n, idx);
        const auto q = expected_design_moments(plug, n, idx);
        EXPECT_LT((e.second - q.second).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_EQ(e.mean, q.mean);
        EXPECT_LT((e.mean - design_row(s.mean_cores(), n, idx)).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(DesignMoments, ScalarChain) {
    Gen g(44);
    const DenseTensor y = g.tensor(Shape{2, 3, 2});
    const Observations obs(y, IndexMask(y.shape()));
    PosteriorState s = initialize(obs, config(3, 1, 3));
    const MultiIndex idx{1, 3, 2};
    const double v2 = 0.3, v3 = 0.7;
    s.cores[1].slice_cov[2](0, 0) = v2;
    s.cores[2].slice_cov[1](0, 0) = v3;
    const double m2 = s.cores[1].mean(0, 2, 0), m3 = s.cores[2].mean(0, 1, 0);
    const auto d = expected_design_moments(s, 1, idx);
    EXPECT_NEAR(d.mean(0), m2 * m3, 1e-15);
    EXPECT_NEAR(d.second(0, 0), (m2 * m2 + v2) * (m3 * m3 + v3), 1e-14);
}

TEST(DesignMoments, MonteCarloOracle) {
    Gen g(45);
    const DenseTensor y = g.tensor(Shape{2, 2, 2});
    const Observations obs(y, IndexMask(y.shape()));
    PosteriorState s = initialize(obs, config(3, 2, 4));
    for (auto& c : s.cores)
        for (auto& v : c.slice_cov) v = random_spd(g, 4, 0.3);

    const MultiIndex idx{2, 1, 2};
    const std::size_t n = 2;
    const auto exact = expected_design_moments(s, n, idx);

    // Subchain for core 2 at this index: Z_3(i_3) Z_1(i_1).
    const std::vector<std::pair<std::size_t, std::size_t>> chain{{2, 1}, {0, 1}};
    std::vector<Eigen::LLT<Matrix>> chol;
    std::vector<Vector> means;
    for (auto [k, i] : chain) {
        chol.emplace_back(s.cores[k].slice_cov[i]);
        const Matrix m = lateral_slices(s.cores[k].mean)[i];
        means.emplace_back(Eigen::Map<const Vector>(m.data(), m.size()));
    }

    const int samples = 200000;
    const auto len = exact.mean.size();
    Vector sum_a = Vector::Zero(len), sum_a2 = Vector::Zero(len);
    Matrix sum = Matrix::Zero(len, len), sum_sq = Matrix::Zero(len, len);
    Vector z(4);
    for (int t = 0; t < samples; ++t) {
        Matrix q = Matrix::Identity(2, 2);
        for (std::size_t c = 0; c < chain.size(); ++c) {
            for (Eigen::Index j = 0; j < 4; ++j) z(j) = g.normal();
            const Vector v = means[c] + chol[c].matrixL() * z;
            q = q * Eigen::Map<const Matrix>(v.data(), 2, 2);
        }
        const Vector a = vec_transpose(q);
        const Matrix outer = a * a.transpose();
        sum_a += a;
        sum_a2 += a.cwiseProduct(a);
        sum += outer;
        sum_sq += outer.cwiseProduct(outer);
    }
    // 14 distinct moments are compared; 4 standard errors keeps the family-wise miss rate near 0.1%.
    const double kBound = 4.0;
    const double ns = samples;
    for (Eigen::Index i = 0; i < len; ++i) {
        const double mean = sum_a(i) / ns;
        const double se = std::sqrt((sum_a2(i) / ns - mean * mean) / ns);
        EXPECT_LE(std::abs(mean - exact.mean(i)), kBound * se) << "mean " << i;
        for (Eigen::Index j = i; j < len; ++j) {
            const double m = sum(i, j) / ns;
            const double sd = std::sqrt((sum_sq(i, j) / ns - m * m) / ns);
            EXPECT_LE(std::abs(m - exact.second(i, j)), kBound * sd) << "second " << i << "," << j;
        }
    }
}

// ---------------------------------------------------------------------------

TEST(UpdateCore, SingleEntryHandCase) {
    auto [obs, s] = scalar_problem(2.0);
    s.joint_sparse = false;
    s.cores[1].mean(0, 0, 0) = 1.0;
    s.cores[1].slice_cov[0].setZero();
    s.sparse.mean[0] = 0.5;
    update_core(s, obs, 1);
    EXPECT_NEAR(s.cores[0].slice_cov[0](0, 0), 0.5, 1e-15);
    EXPECT_NEAR(s.cores[0].mean(0, 0, 0), 0.5 * (2.0 - 0.5), 1e-15);
}

TEST(UpdateCore, SingleEntryJointHandCase) {
    // Maximizing tau (y - z - s)^2 + eta s^2 + u z^2 with tau = eta = u = 1
    // jointly over z and s gives z = s = y / 3.
    auto [obs, s] = scalar_problem(2.0);
    s.cores[1].mean(0, 0, 0) = 1.0;
    s.cores[1].slice_cov[0].setZero();
    s.sparse.mean[0] = 0.5;
    update_core(s, obs, 1);
    EXPECT_NEAR(s.cores[0].slice_cov[0](0, 0), 0.5, 1e-15);
    EXPECT_NEAR(s.cores[0].mean(0, 0, 0), 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(s.sparse.mean[0], 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(s.sparse.var[0], 0.5, 1e-15);
}

TEST(UpdateCore, UnobservedSliceRevertsToPrior) {
    Gen g(46);
    const DenseTensor y = g.tensor(Shape{3, 2, 2});
    IndexMask mask(y.shape());
    for (std::size_t o = 0; o < y.size(); ++o) {
        if (y.shape().unravel(o)[0] == 1) mask.set(o, false);
    }
    const Observations obs(y, mask);
    PosteriorState s = initialize(obs, config(3, 2, 5));
    s.ard[0].c.setOnes();
    s.ard[0].d << 2.0, 4.0;  // u^(1) on the right of core 1
    s.ard[2].c.setOnes();
    s.ard[2].d << 1.0, 5.0;  // u^(3) on the left of core 1
    for (bool joint : {false, true}) {
        PosteriorState t = s;
        t.joint_sparse = joint;
        update_core(t, obs, 1);
        const Vector ul = t.ard[2].expectation(), ur = t.ard[0].expectation();
        Matrix prior_cov = Matrix::Zero(4, 4);
        for (Eigen::Index b = 0; b < 2; ++b)
            for (Eigen::Index a = 0; a < 2; ++a) prior_cov(a + 2 * b, a + 2 * b) = 1.0 / (ul(a) * ur(b));
        EXPECT_LT((t.cores[0].slice_cov[1] - prior_cov).cwiseAbs().maxCoeff(), 1e-12);
        for (std::size_t a = 0; a < 2; ++a)
            for (std::size_t b = 0; b < 2; ++b) EXPECT_EQ(t.cores[0].mean(a, 1, b), 0.0);
    }
}

TEST(UpdateCore, PluginEqualsExactWithoutCovariance) {
    Gen g(47);
    const Problem p = random_problem(g, 3, 4, 0.8);
    const Observations obs(p.y, p.mask);
    PosteriorState s = initialize(obs, config(3, 2, 6));
    for (auto& c : s.cores)
        for (auto& v : c.slice_cov) v.setZero();
    PosteriorState plug = s;
    plug.moment_mode = MomentMode::plugin;
    update_core(s, obs, 2);
    update_core(plug, obs, 2);
    for (std::size_t o = 0; o < s.cores[1].mean.size(); ++o) {
        EXPECT_NEAR(s.cores[1].mean[o], plug.cores[1].mean[o], 1e-12);
    }
    for (std::size_t i = 0; i < s.cores[1].dim(); ++i) {
        EXPECT_LT((s.cores[1].slice_cov[i] - plug.cores[1].slice_cov[i]).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(UpdateCore, CachedVarianceMatchesFreshSum) {
    Gen g(48);
    const Problem p = random_problem(g, 4, 3, 0.8);
    const Observations obs(p.y, p.mask);
    PosteriorState s = initialize(obs, config(4, 2, 7));
    for (std::size_t n = 1; n <= 4; ++n) {
        update_core(s, obs, n);
        ASSERT_TRUE(s.recon_variance.has_value());
        EXPECT_NEAR(*s.recon_variance, recon_variance_sum(s, obs), 1e-9 * *s.recon_variance);
    }
}

// ---------------------------------------------------------------------------

TEST(UpdateArd, IdentitySecondMoments) {
    const DenseTensor y(Shape{3, 4, 5});
    const Observations obs(y, IndexMask(y.shape()));
    InferenceConfig cfg = config(3, 2, 0);
    cfg.max_rank = TRRank{2, 3, 4, 2};
    PosteriorState s = initialize(obs, cfg);
    for (auto& c : s.cores)
        for (std::size_t o = 0; o < c.mean.size(); ++o) c.mean[o] = 0.0;
    // Ring position 2 joins core 2 (I=4, R_1=3) and core 3 (I=5, R_3=2).
    update_ard(s, 2);
    const double expected_d = 1e-6 + 0.5 * 4 * 3 + 0.5 * 5 * 2;
    const double expected_c = 1e-6 + 0.5 * (4 * 3 + 5 * 2);
    ASSERT_EQ(s.ard[1].c.size(), 4);
    for (Eigen::Index r = 0; r < 4; ++r) {
        EXPECT_NEAR(s.ard[1].d(r), expected_d, 1e-12);
        EXPECT_EQ(s.ard[1].c(r), expected_c);
    }
    // Wrap-around: position 3 joins core 3 and core 1.
    update_ard(s, 3);
    for (Eigen::Index r = 0; r < 2; ++r) {
        EXPECT_NEAR(s.ard[2].d(r), 1e-6 + 0.5 * 5 * 4 + 0.5 * 3 * 3, 1e-12);
    }
}

TEST(UpdateArd, ZeroComponentHasMinimalRate) {
    Gen g(49);
    const Problem p = random_problem(g, 3, 4, 1.0);
    const Observations obs(p.y, p.mask);
    PosteriorState s = initialize(obs, config(3, 3, 8));
    // index 1 on ring position 1: third mode of core 1, first mode of core 2
    for (std::size_t i = 0; i < s.cores[0].dim(); ++i) {
        for (std::size_t a = 0; a < 3; ++a) s.cores[0].mean(a, i, 1) = 0.0;
        auto& v = s.cores[0].slice_cov[i];
        for (Eigen::Index a = 0; a < 3; ++a) {
            v.row(a + 3).setZero();
            v.col(a + 3).setZero();
        }
    }
    for (std::size_t i = 0; i < s.cores[1].dim(); ++i) {
        for (std::size_t c = 0; c < 3; ++c) s.cores[1].mean(1, i, c) = 0.0;
        auto& v = s.cores[1].slice_cov[i];
        for (Eigen::Index c = 0; c < 3; ++c) {
            v.row(1 + 3 * c).setZero();
            v.col(1 + 3 * c).setZero();
        }
    }
    update_ard(s, 1);
    EXPECT_EQ(s.ard[0].d(1), s.hyper.d0);
    const Vector e = s.ard[0].expectation();
    EXPECT_EQ(e.maxCoeff(), e(1));
}

// ---------------------------------------------------------------------------

TEST(UpdateSparse, HandCases) {
    auto [obs, s] = scalar_problem(3.0);
    s.cores[0].mean(0, 0, 0) = 1.0;
    s.cores[1].mean(0, 0, 0) = 2.0;
    update_sparse(s, obs);
    EXPECT_EQ(s.sparse.var[0], 0.5);
    EXPECT_EQ(s.sparse.mean[0], 0.5 * (3.0 - 2.0));

    s.eta.b[0] = 1e-300;
    update_sparse(s, obs);
    EXPECT_LT(s.sparse.var[0], 1e-200);
    EXPECT_LT(std::abs(s.sparse.mean[0]), 1e-200);

    auto [obs2, z] = scalar_problem(2.0);
    z.cores[0].mean(0, 0, 0) = 1.0;
    z.cores[1].mean(0, 0, 0) = 2.0;
    update_sparse(z, obs2);
    EXPECT_EQ(z.sparse.mean[0], 0.0);
}

TEST(UpdateEta, HandCases) {
    auto [obs, s] = scalar_problem(1.0);
    s.sparse.mean[0] = 1.0;
    s.sparse.var[0] = 0.5;
    update_eta(s, obs);
    EXPECT_NEAR(s.eta.a[0], 0.500001, 1e-15);
    EXPECT_NEAR(s.eta.b[0], 0.750001, 1e-15);
    EXPECT_NEAR(s.eta.a[0] / s.eta.b[0], 2.0 / 3.0, 1e-5);

    s.sparse.mean[0] = 0.0;
    s.sparse.var[0] = 0.0;
    update_eta(s, obs);
    EXPECT_GT(s.eta.a[0] / s.eta.b[0], 1e5);
}

TEST(UpdateEta, EntrywiseIndependent) {
    const DenseTensor y(Shape{3, 3});
    const Observations obs(y, IndexMask(y.shape()));
    PosteriorState s = initialize(obs, config(2, 1, 0));
    for (std::size_t o = 0; o < 9; ++o) {
        s.sparse.mean[o] = 0.25;
        s.sparse.var[o] = 0.125;
    }
    update_eta(s, obs);
    for (std::size_t o = 1; o < 9; ++o) {
        EXPECT_EQ(s.eta.a[o], s.eta.a[0]);
        EXPECT_EQ(s.eta.b[o], s.eta.b[0]);
    }
}

TEST(UpdateTau, ShapeCountsObservations) {
    Gen g(50);
    const DenseTensor y = g.tensor(Shape{10, 10});
    const Observations obs(y, IndexMask(y.shape()));
    PosteriorState s = initialize(obs, config(2, 2, 9));
    update_tau(s, obs);
    EXPECT_NEAR(s.tau.a, 50.000001, 1e-12);
}

TEST(UpdateTau, PerfectFitLeavesPriorRate) {
    Gen g(51);
    const DenseTensor y = g.tensor(Shape{3, 4});
    const Observations obs(y, IndexMask(y.shape()));
    PosteriorState s = initialize(obs, config(2, 2, 10));
    s.moment_mode = MomentMode::plugin;
    const DenseTensor recon = tr_full(s.mean_cores());
    for (std::size_t o = 0; o < y.size(); ++o) {
        s.sparse.mean[o] = y[o] - recon[o];
        s.sparse.var[o] = 0.0;
    }
    update_tau(s, obs);
    EXPECT_NEAR(s.tau.b, s.hyper.b0_tau, 1e-20);
    EXPECT_EQ(s.tau.a, s.hyper.a0_tau + 6.0);
}

TEST(UpdateTau, PluginEqualsExactWithoutCovariance) {
    Gen g(52);
    const Problem p = random_problem(g, 3, 4, 0.7);
    const Observations obs(p.y, p.mask);
    PosteriorState s = initialize(obs, config(3, 2, 11));
    for (auto& c : s.cores)
        for (auto& v : c.slice_cov) v.setZero();
    PosteriorState plug = s;
    plug.moment_mode = MomentMode::plugin;
    update_tau(s, obs);
    update_tau(plug, obs);
    EXPECT_NEAR(s.tau.b, plug.tau.b, 1e-12 * plug.tau.b);
}

// ---------------------------------------------------------------------------

TEST(Elbo, SingleEntryHandAssembled) {
    auto [obs, s] = scalar_problem(1.7);
    s.cores[0].mean(0, 0, 0) = 0.8;
    s.cores[0].slice_cov[0](0, 0) = 0.3;
    s.cores[1].mean(0, 0, 0) = -1.1;
    s.cores[1].slice_cov[0](0, 0) = 0.2;
    s.ard[0].c(0) = 2.5;
    s.ard[0].d(0) = 1.5;
    s.ard[1].c(0) = 0.7;
    s.ard[1].d(0) = 2.0;
    s.sparse.mean[0] = 0.4;
    s.sparse.var[0] = 0.15;
    s.eta.a[0] = 1.2;
    s.eta.b[0] = 0.9;
    s.tau = TauPosterior{3.0, 0.6};
    s.recon_variance.reset();

    const auto& h = s.hyper;
    const double m1 = 0.8, v1 = 0.3, m2 = -1.1, v2 = 0.2;
    const double e_tau = 3.0 / 0.6, elog_tau = boost::math::digamma(3.0) - std::log(0.6);
    const double recon_var = (m1 * m1 + v1) * (m2 * m2 + v2) - m1 * m1 * m2 * m2;
    const double r = 1.7 - m1 * m2 - 0.4;
    double expected = 0.5 * (elog_tau - kLog2Pi) - 0.5 * e_tau * (r * r + recon_var + 0.15);

    const double eu1 = 2.5 / 1.5, elog_u1 = boost::math::digamma(2.5) - std::log(1.5);
    const double eu2 = 0.7 / 2.0, elog_u2 = boost::math::digamma(0.7) - std::log(2.0);
    for (auto [m, v] : {std::pair{m1, v1}, std::pair{m2, v2}}) {
        expected += 0.5 * (elog_u1 + elog_u2 - kLog2Pi) - 0.5 * eu1 * eu2 * (m * m + v);
        expected += 0.5 * (1.0 + kLog2Pi + std::log(v));
    }
    expected += gamma_log_prior(h.c0, h.d0, 2.5, 1.5) + gamma_entropy(2.5, 1.5);
    expected += gamma_log_prior(h.c0, h.d0, 0.7, 2.0) + gamma_entropy(0.7, 2.0);

    const double e_eta = 1.2 / 0.9, elog_eta = boost::math::digamma(1.2) - std::log(0.9);
    expected += 0.5 * (elog_eta - kLog2Pi) - 0.5 * e_eta * (0.4 * 0.4 + 0.15);
    expected += 0.5 * (1.0 + kLog2Pi + std::log(0.15));
    expected += gamma_log_prior(h.a0_eta, h.b0_eta, 1.2, 0.9) + gamma_entropy(1.2, 0.9);
    expected += gamma_log_prior(h.a0_tau, h.b0_tau, 3.0, 0.6) + gamma_entropy(3.0, 0.6);

    EXPECT_NEAR(elbo(s, obs), expected, 1e-10);
}

TEST(Elbo, InvariantUnderRelabeling) {
    Gen g(53);
    const Problem p = random_problem(g, 3, 4, 0.8);
    const Observations obs(p.y, p.mask);
    PosteriorState s = initialize(obs, config(3, 3, 12));
    for (std::size_t n = 1; n <= 3; ++n) update_core(s, obs, n);
    for (std::size_t n = 1; n <= 3; ++n) update_ard(s, n);
    s.recon_variance.reset();
    const double before = elbo(s, obs);

    // Swap indices 0 and 2 on ring position 2 (core 2 third mode, core 3 first mode).
    const std::vector<std::size_t> perm{2, 1, 0};
    PosteriorState t = s;
    auto& left = t.cores[1];
    auto& right = t.cores[2];
    const std::size_t rl = left.left_rank(), rr = right.right_rank();
    for (std::size_t i = 0; i < left.dim(); ++i) {
        for (std::size_t a = 0; a < rl; ++a)
            for (std::size_t r = 0; r < 3; ++r) left.mean(a, i, r) = s.cores[1].mean(a, i, perm[r]);
        std::vector<Eigen::Index> idx;
        for (std::size_t r = 0; r < 3; ++r)
            for (std::size_t a = 0; a < rl; ++a) idx.push_back(static_cast<Eigen::Index>(a + rl * perm[r]));
        left.slice_cov[i] = s.cores[1].slice_cov[i](idx, idx);
    }
    for (std::size_t i = 0; i < right.dim(); ++i) {
        for (std::size_t r = 0; r < 3; ++r)
            for (std::size_t c = 0; c < rr; ++c) right.mean(r, i, c) = s.cores[2].mean(perm[r], i, c);
        std::vector<Eigen::Index> idx;
        for (std::size_t c = 0; c < rr; ++c)
            for (std::size_t r = 0; r < 3; ++r) idx.push_back(static_cast<Eigen::Index>(perm[r] + 3 * c));
        right.slice_cov[i] = s.cores[2].slice_cov[i](idx, idx);
    }
    for (std::size_t r = 0; r < 3; ++r) {
        t.ard[1].c(static_cast<Eigen::Index>(r)) = s.ard[1].c(static_cast<Eigen::Index>(perm[r]));
        t.ard[1].d(static_cast<Eigen::Index>(r)) = s.ard[1].d(static_cast<Eigen::Index>(perm[r]));
    }
    EXPECT_NEAR(elbo(t, obs), before, 1e-10 * std::abs(before));
}

TEST(Elbo, PropertyEverySubUpdateAscends) {
    Gen g(54);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t order = g.size(3, 4);
        const Problem p = random_problem(g, order, order == 3 ? 6 : 4, 0.85);
        const Observations obs(p.y, p.mask);
        InferenceConfig cfg = config(order, g.size(1, 3), 100 + static_cast<std::uint64_t>(trial));
        PosteriorState s = initialize(obs, cfg);
        double prev = elbo(s, obs);
        auto check = [&](const char* what) {
            const double now = elbo(s, obs);
            EXPECT_GE(now, prev - 1e-8 * std::abs(prev)) << what << " trial " << trial;
            prev = now;
        };
        for (int sweep = 0; sweep < 4; ++sweep) {
            for (std::size_t n = 1; n <= order; ++n) {
                update_core(s, obs, n);
                check("core");
            }
            for (std::size_t n = 1; n <= order; ++n) {
                update_ard(s, n);
                check("ard");
            }
            update_sparse(s, obs);
            check("sparse");
            update_eta(s, obs);
            check("eta");
            update_tau(s, obs);
            check("tau");
            for (std::size_t n = 1; n <= order; ++n) {
                balance_gauge(s, n);
                check("gauge");
            }
        }
    }
}

TEST(Elbo, SeparateCoreUpdatesAscend) {
    Gen g(55);
    for (int trial = 0; trial < 5; ++trial) {
        const Problem p = random_problem(g, 3, 5, 0.8);
        const Observations obs(p.y, p.mask);
        InferenceConfig cfg = config(3, 2, 200 + static_cast<std::uint64_t>(trial));
        cfg.joint_sparse = false;
        PosteriorState s = initialize(obs, cfg);
        double prev = elbo(s, obs);
        for (int sweep = 0; sweep < 3; ++sweep) {
            for (std::size_t n = 1; n <= 3; ++n) {
                update_core(s, obs, n);
                const double now = elbo(s, obs);
                EXPECT_GE(now, prev - 1e-8 * std::abs(prev));
                prev = now;
            }
            update_sparse(s, obs);
            update_eta(s, obs);
            update_tau(s, obs);
            prev = elbo(s, obs);
        }
    }
}

// ---------------------------------------------------------------------------

TEST(BalanceGauge, KeepsReconstruction) {
    Gen g(56);
    const Problem p = random_problem(g, 4, 4, 0.9);
    const Observations obs(p.y, p.mask);
    PosteriorState s = initialize(obs, config(4, 3, 13));
    for (std::size_t n = 1; n <= 4; ++n) update_core(s, obs, n);
    for (std::size_t n = 1; n <= 4; ++n) update_ard(s, n);
    const DenseTensor before = tr_full(s.mean_cores());
    const double var_before = recon_variance_sum(s, obs);
    for (std::size_t n = 1; n <= 4; ++n) balance_gauge(s, n);
    EXPECT_LT(rel_change(tr_full(s.mean_cores()), before), 1e-10);
    EXPECT_NEAR(recon_variance_sum(s, obs), var_before, 1e-8 * var_before);
    EXPECT_THROW(balance_gauge(s, 5), std::out_of_range);
}

// ---------------------------------------------------------------------------

TEST(Prune, NothingBelowThreshold) {
    Gen g(57);
    const Problem p = random_problem(g, 3, 4, 1.0);
    const Observations obs(p.y, p.mask);
    PosteriorState s = initialize(obs, config(3, 3, 14));
    const PosteriorState before = s;
    const auto r = prune(s, 1e-4);
    EXPECT_EQ(r.removed, 0u);
    EXPECT_EQ(s.ranks, before.ranks);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(s.cores[k].mean, before.cores[k].mean);
}

TEST(Prune, ZeroComponentRemoved) {
    Gen g(58);
    const Problem p = random_problem(g, 3, 4, 1.0);
    const Observations obs(p.y, p.mask);
    for (double threshold : {1e-12, 1e-4, 0.5}) {
        PosteriorState s = initialize(obs, config(3, 3, 15));
        // index 2 on ring position 2
        for (std::size_t i = 0; i < s.cores[1].dim(); ++i)
            for (std::size_t a = 0; a < 3; ++a) s.cores[1].mean(a, i, 2) = 0.0;
        for (std::size_t i = 0; i < s.cores[2].dim(); ++i)
            for (std::size_t c = 0; c < 3; ++c) s.cores[2].mean(2, i, c) = 0.0;
        const DenseTensor kept_left = s.cores[1].mean;
        const Matrix cov0 = s.cores[1].slice_cov[0];
        const auto r = prune(s, threshold);
        EXPECT_GE(r.per_position[1], 1u);
        EXPECT_EQ(s.ranks[2], 3u - r.per_position[1]);
        EXPECT_NO_THROW(s.check_consistency());
        if (r.removed == 1) {
            EXPECT_EQ(s.cores[1].mean(1, 0, 1), kept_left(1, 0, 1));
            EXPECT_EQ(s.cores[1].slice_cov[0](4, 1), cov0(4, 1));
            EXPECT_EQ(s.ard[1].c.size(), 2);
        }
    }
}

TEST(Prune, NeverBelowRankOneAndZeroDisables) {
    Gen g(59);
    const Problem p = random_problem(g, 3, 4, 1.0);
    const Observations obs(p.y, p.mask);
    PosteriorState s = initialize(obs, config(3, 2, 16));
    for (auto& c : s.cores)
        for (std::size_t o = 0; o < c.mean.size(); ++o) c.mean[o] = 0.0;
    PosteriorState off = s;
    EXPECT_EQ(prune(off, 0.0).removed, 0u);
    prune(s, 1e-4);
    for (std::size_t k = 0; k <= 3; ++k) EXPECT_GE(s.ranks[k], 1u);
    EXPECT_NO_THROW(s.check_consistency());
}

TEST(Prune, PropertyChainConsistency) {
    Gen g(60);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t order = g.size(2, 4);
        const Problem p = random_problem(g, order, 4, 0.9);
        const Observations obs(p.y, p.mask);
        PosteriorState s = initialize(obs, config(order, 4, static_cast<std::uint64_t>(trial)));
        for (auto& c : s.cores)
            for (std::size_t o = 0; o < c.mean.size(); ++o)
                if (g.coin(0.3)) c.mean[o] *= 1e-4;
        prune(s, g.uniform(0.1, 0.9));
        EXPECT_NO_THROW(s.check_consistency());
        EXPECT_EQ(s.ranks[0], s.ranks[order]);
        EXPECT_EQ(s.mean_cores().ranks(), s.ranks);
    }
}

// ---------------------------------------------------------------------------

TEST(Fit, RankOneNoiseFreeConverges) {
    Gen g(61);
    const TRCores truth = g.cores({5, 4, 6}, std::vector<std::size_t>{1, 1, 1, 1});
    const DenseTensor y = tr_full(truth);
    InferenceConfig cfg = config(3, 1, 3);
    cfg.init_mode = InitMode::tr_approx;
    // E[tau] grows by a roughly constant factor per sweep in the noise-free limit, so the error
    // shrinks geometrically and the relative ELBO change is what ends the run.
    const auto full = fit(y, IndexMask(y.shape()), cfg);
    EXPECT_TRUE(full.report.converged);
    EXPECT_LE(rse(predict(full.state, IndexMask(y.shape())).low_rank, y), 1e-6);
}

TEST(Fit, ReportShapeAndDeterminism) {
    Gen g(62);
    const Problem p = random_problem(g, 3, 5, 0.8);
    InferenceConfig cfg = config(3, 4, 21);
    cfg.prune_threshold = 1e-2;
    cfg.max_iters = 15;
    const auto a = fit(p.y, p.mask, cfg);
    const auto b = fit(p.y, p.mask, cfg);
    EXPECT_EQ(a.report.elbo_trace, b.report.elbo_trace);
    EXPECT_EQ(a.report.rank_trace, b.report.rank_trace);
    EXPECT_EQ(a.report.final_ranks, b.report.final_ranks);
    EXPECT_EQ(a.report.elbo_trace.size(), a.report.iterations);
    EXPECT_EQ(a.report.pruned_per_iteration.size(), a.report.iterations);
    for (std::size_t it = 0; it < 2 && it < a.report.iterations; ++it) {
        EXPECT_EQ(a.report.pruned_per_iteration[it], 0u);
    }
}

TEST(Fit, ElboMonotoneBetweenSweepsWithoutPruning) {
    Gen g(63);
    for (int trial = 0; trial < 5; ++trial) {
        const Problem p = random_problem(g, 3, 5, 0.8);
        InferenceConfig cfg = config(3, 3, 30 + static_cast<std::uint64_t>(trial));
        cfg.max_iters = 30;
        const auto r = fit(p.y, p.mask, cfg).report;
        for (std::size_t t = 1; t < r.elbo_trace.size(); ++t) {
            EXPECT_GE(r.elbo_trace[t], r.elbo_trace[t - 1] - 1e-8 * std::abs(r.elbo_trace[t - 1]));
        }
    }
}

TEST(Fit, StationaryAtConvergence) {
    Gen g(64);
    const TRCores truth = g.cores({4, 5, 4}, std::vector<std::size_t>{2, 2, 2, 2});
    DenseTensor y = tr_full(truth);
    for (std::size_t o = 0; o < y.size(); ++o) y[o] = 10.0 * y[o] + 0.1 * g.normal();
    const IndexMask mask(y.shape());
    const Observations obs(y, mask);
    InferenceConfig cfg = config(3, 2, 5);
    cfg.elbo_rel_tol = 1e-9;
    cfg.max_iters = 3000;
    auto result = fit(y, mask, cfg);
    ASSERT_TRUE(result.report.converged);

    // Parameters drift along near-flat directions, so stationarity is checked on the objective:
    // no single coordinate update may move the ELBO by more than a few convergence tolerances.
    PosteriorState s = result.state;
    double value = elbo(s, obs);
    const double bound = 10.0 * cfg.elbo_rel_tol * std::abs(value);
    const auto check = [&](const char* what) {
        const double next = elbo(s, obs);
        EXPECT_LT(std::abs(next - value), bound) << what;
        value = next;
    };
    for (std::size_t n = 1; n <= 3; ++n) {
        update_core(s, obs, n);
        check("core");
    }
    for (std::size_t n = 1; n <= 3; ++n) {
        update_ard(s, n);
        check("ard");
    }
    update_sparse(s, obs);
    check("sparse");
    update_eta(s, obs);
    check("eta");
    update_tau(s, obs);
    check("tau");
}

// ---------------------------------------------------------------------------

TEST(Predict, SupportAndZeroMeans) {
    Gen g(65);
    const Problem p = random_problem(g, 3, 4, 0.6);
    const Observations obs(p.y, p.mask);
    PosteriorState s = initialize(obs, config(3, 2, 17));
    const Prediction pr = predict(s, p.mask);
    for (std::size_t o = 0; o < p.mask.size(); ++o) {
        if (!p.mask[o]) EXPECT_EQ(pr.sparse[o], 0.0);
        else EXPECT_EQ(pr.sparse[o], s.sparse.mean[o]);
    }
    for (auto& c : s.cores)
        for (std::size_t o = 0; o < c.mean.size(); ++o) c.mean[o] = 0.0;
    EXPECT_EQ(predict(s, p.mask).low_rank, DenseTensor(p.y.shape()));
}

TEST(Predict, RecoversCleanTensorFromOutliers) {
    Gen g(66);
    const TRCores truth = g.cores({6, 6, 6}, std::vector<std::size_t>{2, 2, 2, 2});
    DenseTensor clean = tr_full(truth);
    for (auto& v : clean.data()) v *= 10.0;
    DenseTensor y = clean;
    double peak = 0.0;
    for (std::size_t o = 0; o < y.size(); ++o) peak = std::max(peak, std::abs(clean[o]));
    for (std::size_t o = 0; o < y.size(); o += 11) y[o] += g.uniform(-peak, peak);
    InferenceConfig cfg = config(3, 4, 6);
    cfg.prune_threshold = 1e-4;
    cfg.max_iters = 300;
    const auto result = fit(y, IndexMask(y.shape()), cfg);
    EXPECT_LE(rse(predict(result.state, IndexMask(y.shape())).low_rank, clean), 1e-4);
}
