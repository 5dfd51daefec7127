#include "brtr/tr_model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace brtr {

TRRank::TRRank(std::initializer_list<std::size_t> ranks) : TRRank(std::vector<std::size_t>(ranks)) {}

TRRank::TRRank(std::vector<std::size_t> ranks) : ranks_(std::move(ranks)) {
    if (ranks_.size() < 2) {
        throw std::invalid_argument("TR rank needs at least (R_0, R_1)");
    }
    for (auto r : ranks_) {
        if (r == 0) throw std::invalid_argument("TR ranks must be positive");
    }
    if (ranks_.front() != ranks_.back()) {
        throw std::invalid_argument("TR rank is not ring-closed (R_0 != R_N)");
    }
}

TRRank TRRank::from_inner(std::span<const std::size_t> inner) {
    if (inner.empty()) throw std::invalid_argument("empty TR rank");
    std::vector<std::size_t> r;
    r.reserve(inner.size() + 1);
    r.push_back(inner.back());
    r.insert(r.end(), inner.begin(), inner.end());
    return TRRank(std::move(r));
}

TRRank TRRank::uniform(std::size_t order, std::size_t rank) {
    return TRRank(std::vector<std::size_t>(order + 1, rank));
}

void TRRank::set(std::size_t k, std::size_t value) {
    if (value == 0) throw std::invalid_argument("TR ranks must be positive");
    ranks_.at(k) = value;
    if (k == 0) ranks_.back() = value;
    if (k + 1 == ranks_.size()) ranks_.front() = value;
}

TRCores::TRCores(std::vector<DenseTensor> cores) : cores_(std::move(cores)) {
    if (cores_.empty()) throw std::invalid_argument("TR needs at least one core");
    for (std::size_t k = 0; k < cores_.size(); ++k) {
        if (cores_[k].order() != 3) {
            throw std::invalid_argument("core " + std::to_string(k + 1) + " is not order-3");
        }
        const auto& next = cores_[(k + 1) % cores_.size()];
        if (cores_[k].shape()[2] != next.shape()[0]) {
            throw std::invalid_argument("rank chain broken between core " + std::to_string(k + 1) +
                                        " and its successor");
        }
    }
}

TRRank TRCores::ranks() const {
    std::vector<std::size_t> r;
    r.push_back(cores_.front().shape()[0]);
    for (const auto& c : cores_) r.push_back(c.shape()[2]);
    return TRRank(std::move(r));
}

Shape TRCores::dims() const {
    std::vector<std::size_t> d;
    for (const auto& c : cores_) d.push_back(c.shape()[1]);
    return Shape(std::move(d));
}

Matrix TRCores::slice(std::size_t k, std::size_t i) const {
    const auto& c = cores_.at(k);
    Matrix m(c.shape()[0], c.shape()[2]);
    for (std::size_t b = 0; b < c.shape()[2]; ++b)
        for (std::size_t a = 0; a < c.shape()[0]; ++a) m(a, b) = c(a, i, b);
    return m;
}

std::vector<Matrix> lateral_slices(const DenseTensor& core) {
    const std::size_t r0 = core.shape()[0], dim = core.shape()[1], r1 = core.shape()[2];
    std::vector<Matrix> out(dim, Matrix(r0, r1));
    for (std::size_t b = 0; b < r1; ++b)
        for (std::size_t i = 0; i < dim; ++i)
            for (std::size_t a = 0; a < r0; ++a) out[i](a, b) = core(a, i, b);
    return out;
}

void set_lateral_slice(DenseTensor& core, std::size_t i, const Matrix& slice) {
    for (std::size_t b = 0; b < core.shape()[2]; ++b)
        for (std::size_t a = 0; a < core.shape()[0]; ++a) core(a, i, b) = slice(a, b);
}

double tr_entry(const TRCores& cores, const MultiIndex& idx) {
    const auto zero = idx.to_zero_based(cores.dims());
    Matrix chain = cores.slice(0, zero[0]);
    for (std::size_t k = 1; k < cores.order(); ++k) {
        chain = chain * cores.slice(k, zero[k]);
    }
    return chain.trace();
}

namespace {

// Both operands and the result are viewed as column-major matrices over
// their existing storage: (R0*IA) x R1 times R1 x (IB*R2).
DenseTensor tcp_pair(const DenseTensor& a, const DenseTensor& b) {
    const std::size_t r0 = a.shape()[0], ia = a.shape()[1], r1 = a.shape()[2];
    const std::size_t ib = b.shape()[1], r2 = b.shape()[2];
    if (b.shape()[0] != r1) {
        throw std::invalid_argument("tcp: adjacent rank dimensions do not chain");
    }
    DenseTensor out(Shape{r0, ia * ib, r2});
    using CMap = Eigen::Map<const Matrix>;
    Eigen::Map<Matrix> c(out.data().data(), r0 * ia, ib * r2);
    c.noalias() = CMap(a.data().data(), r0 * ia, r1) * CMap(b.data().data(), r1, ib * r2);
    return out;
}

} // namespace

DenseTensor tcp(std::span<const DenseTensor> chain) {
    if (chain.empty()) throw std::invalid_argument("tcp of an empty chain");
    for (const auto& c : chain) {
        if (c.order() != 3) throw std::invalid_argument("tcp operands must be order-3");
    }
    DenseTensor acc = chain[0];
    for (std::size_t k = 1; k < chain.size(); ++k) acc = tcp_pair(acc, chain[k]);
    return acc;
}

DenseTensor tr_full(const TRCores& cores) {
    const std::size_t order = cores.order();
    const Shape dims = cores.dims();
    if (order == 1) {
        DenseTensor out(dims);
        for (std::size_t i = 0; i < dims[0]; ++i) out[i] = cores.slice(0, i).trace();
        return out;
    }

    // Split the ring where the left half's index count first reaches sqrt(total).
    const double half = std::sqrt(static_cast<double>(dims.numel()));
    std::size_t split = 1;
    double left_count = static_cast<double>(dims[0]);
    while (split + 1 < order && left_count < half) {
        left_count *= static_cast<double>(dims[split]);
        ++split;
    }

    const auto& all = cores.cores();
    DenseTensor left = tcp(std::span<const DenseTensor>(all.data(), split));
    DenseTensor right = tcp(std::span<const DenseTensor>(all.data() + split, order - split));

    const std::size_t r0 = left.shape()[0], p1 = left.shape()[1], rk = left.shape()[2];
    const std::size_t p2 = right.shape()[1];

    // entry(m1 + p1*m2) = sum_{a,b} left(a,m1,b) * right(b,m2,a)
    Matrix lmat(p1, r0 * rk);
    for (std::size_t b = 0; b < rk; ++b)
        for (std::size_t m1 = 0; m1 < p1; ++m1)
            for (std::size_t a = 0; a < r0; ++a) lmat(m1, a + r0 * b) = left(a, m1, b);
    Matrix rmat(r0 * rk, p2);
    for (std::size_t a = 0; a < r0; ++a)
        for (std::size_t m2 = 0; m2 < p2; ++m2)
            for (std::size_t b = 0; b < rk; ++b) rmat(a + r0 * b, m2) = right(b, m2, a);

    DenseTensor out(dims);
    Eigen::Map<Matrix>(out.data().data(), p1, p2).noalias() = lmat * rmat;
    return out;
}

DenseTensor subchain_except(const TRCores& cores, std::size_t n) {
    const std::size_t order = cores.order();
    if (n < 1 || n > order) throw std::out_of_range("subchain_except: mode out of range");
    if (order < 2) throw std::invalid_argument("subchain_except needs at least two cores");
    std::vector<DenseTensor> chain;
    chain.reserve(order - 1);
    for (std::size_t s = 1; s < order; ++s) chain.push_back(cores.core((n - 1 + s) % order));
    return tcp(chain);
}

Vector vec_transpose(const Matrix& m) {
    Vector v(m.size());
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) v(j + m.cols() * i) = m(i, j);
    return v;
}

Vector design_row(const TRCores& cores, std::size_t n, const MultiIndex& idx) {
    const std::size_t order = cores.order();
    if (n < 1 || n > order) throw std::out_of_range("design_row: mode out of range");
    const auto zero = idx.to_zero_based(cores.dims());
    const std::size_t k = n - 1;
    const std::size_t rows = cores.core(k).shape()[2];
    Matrix q = Matrix::Identity(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(rows));
    for (std::size_t s = 1; s < order; ++s) {
        const std::size_t m = (k + s) % order;
        q = q * cores.slice(m, zero[m]);
    }
    return vec_transpose(q);
}

} // namespace brtr
