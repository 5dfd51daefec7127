#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/SVD>

#include "brtr/inference.hpp"

namespace brtr {

namespace {

// Second moments of the bond components, weighted by the outer ARD factors:
// a(r, s) = sum_{i,a} u_in(a) E[Z(a,i,r) Z(a,i,s)] for the core left of the bond.
Matrix left_moment(const CorePosterior& core, const Vector& u_in) {
    const auto rl = static_cast<Eigen::Index>(core.left_rank());
    const auto rr = static_cast<Eigen::Index>(core.right_rank());
    Matrix a = Matrix::Zero(rr, rr);
    for (std::size_t i = 0; i < core.dim(); ++i) {
        const auto& cov = core.slice_cov[i];
        for (Eigen::Index r = 0; r < rr; ++r)
            for (Eigen::Index s = 0; s < rr; ++s)
                for (Eigen::Index l = 0; l < rl; ++l) {
                    const auto ui = static_cast<std::size_t>(i);
                    a(r, s) += u_in(l) * (core.mean(l, ui, r) * core.mean(l, ui, s) +
                                          cov(l + rl * r, l + rl * s));
                }
    }
    return 0.5 * (a + a.transpose());
}

Matrix right_moment(const CorePosterior& core, const Vector& u_out) {
    const auto rl = static_cast<Eigen::Index>(core.left_rank());
    const auto rr = static_cast<Eigen::Index>(core.right_rank());
    Matrix b = Matrix::Zero(rl, rl);
    for (std::size_t i = 0; i < core.dim(); ++i) {
        const auto& cov = core.slice_cov[i];
        for (Eigen::Index c = 0; c < rr; ++c)
            for (Eigen::Index r = 0; r < rl; ++r)
                for (Eigen::Index s = 0; s < rl; ++s) {
                    const auto ui = static_cast<std::size_t>(i);
                    b(r, s) += u_out(c) * (core.mean(r, ui, c) * core.mean(s, ui, c) +
                                           cov(r + rl * c, s + rl * c));
                }
    }
    return 0.5 * (b + b.transpose());
}

// Bond part of the ELBO once q(u) on the bond is optimal.
double bond_objective(const Matrix& x, const Matrix& y, double log_det_g, double alpha,
                      double beta, double c, double d0) {
    double f = (alpha - beta) * log_det_g;
    for (Eigen::Index r = 0; r < x.rows(); ++r) f -= c * std::log(d0 + 0.5 * (x(r, r) + y(r, r)));
    return f;
}

} // namespace

bool balance_gauge(PosteriorState& state, std::size_t n) {
    const std::size_t order = state.order();
    if (n < 1 || n > order) throw std::out_of_range("ring position out of range");
    const std::size_t k = n - 1;
    const std::size_t next = (k + 1) % order;
    auto& left = state.cores[k];
    auto& right = state.cores[next];

    const Matrix a = left_moment(left, state.ard[state.left_ard(k)].expectation());
    const Matrix b = right_moment(right, state.ard[state.right_ard(next)].expectation());
    const Eigen::LLT<Matrix> la(a), lb(b);
    if (la.info() != Eigen::Success || lb.info() != Eigen::Success) return false;
    const Matrix l_a = la.matrixL();
    const Matrix l_b = lb.matrixL();

    // With L_a^T L_b = U S V^T, g = L_a^{-T} U S^{1/2} and g_inv = S^{1/2} V^T L_b^{-1}
    // give g^T a g = g_inv b g_inv^T = S.
    Eigen::JacobiSVD<Matrix> svd(l_a.transpose() * l_b, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vector root = svd.singularValues().cwiseSqrt();
    if (!(root.minCoeff() > 0.0)) return false;

    const double alpha = static_cast<double>(left.dim() * left.left_rank());
    const double beta = static_cast<double>(right.dim() * right.right_rank());
    const double c = state.hyper.c0 + 0.5 * (alpha + beta);
    const double d0 = state.hyper.d0;
    // Per-component rescaling that is optimal when the two sides differ in size.
    const double q = (alpha - beta) / (2.0 * c);
    const double scale = std::pow((1.0 + q) / (1.0 - q), 0.25);

    Matrix g = l_a.transpose().triangularView<Eigen::Upper>().solve(svd.matrixU()) *
               (scale * root).asDiagonal();
    Matrix g_inv = (root / scale).asDiagonal() * svd.matrixV().transpose() *
                   l_b.triangularView<Eigen::Lower>().solve(Matrix::Identity(b.rows(), b.cols()));

    const double before = bond_objective(a, b, 0.0, alpha, beta, c, d0);
    const double log_det_g = l_a.diagonal().array().log().sum() * -1.0 +
                             0.5 * svd.singularValues().array().log().sum() +
                             static_cast<double>(g.cols()) * std::log(scale);
    const Matrix x = g.transpose() * a * g;
    const Matrix y = g_inv * b * g_inv.transpose();
    const double after = bond_objective(x, y, log_det_g, alpha, beta, c, d0);
    if (!(after > before)) return false;

    const auto rl = static_cast<Eigen::Index>(left.left_rank());
    const auto rr = static_cast<Eigen::Index>(right.right_rank());
    const Matrix t_left = kronecker(g.transpose(), Matrix::Identity(rl, rl));
    const auto left_slices = lateral_slices(left.mean);
    for (std::size_t i = 0; i < left.dim(); ++i) {
        set_lateral_slice(left.mean, i, left_slices[i] * g);
        Matrix v = t_left * left.slice_cov[i] * t_left.transpose();
        left.slice_cov[i] = 0.5 * (v + v.transpose());
    }
    const Matrix t_right = kronecker(Matrix::Identity(rr, rr), g_inv);
    const auto right_slices = lateral_slices(right.mean);
    for (std::size_t i = 0; i < right.dim(); ++i) {
        set_lateral_slice(right.mean, i, g_inv * right_slices[i]);
        Matrix v = t_right * right.slice_cov[i] * t_right.transpose();
        right.slice_cov[i] = 0.5 * (v + v.transpose());
    }
    update_ard(state, n);
    return true;
}

} // namespace brtr
