#include "brtr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace brtr {

Shape::Shape(std::initializer_list<std::size_t> dims) : Shape(std::vector<std::size_t>(dims)) {}

Shape::Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
    if (dims_.empty()) {
        throw std::invalid_argument("shape must have at least one mode");
    }
    numel_ = 1;
    for (std::size_t d : dims_) {
        if (d == 0) {
            throw std::invalid_argument("shape dimensions must be positive");
        }
        if (numel_ > std::numeric_limits<std::size_t>::max() / d) {
            throw std::overflow_error("shape element count overflows");
        }
        numel_ *= d;
    }
}

std::vector<std::size_t> Shape::strides() const {
    std::vector<std::size_t> s(dims_.size());
    std::size_t acc = 1;
    for (std::size_t n = 0; n < dims_.size(); ++n) {
        s[n] = acc;
        acc *= dims_[n];
    }
    return s;
}

std::size_t Shape::offset(std::span<const std::size_t> index) const {
    if (index.size() != dims_.size()) {
        throw std::invalid_argument("index order does not match shape");
    }
    std::size_t off = 0;
    std::size_t stride = 1;
    for (std::size_t n = 0; n < dims_.size(); ++n) {
        if (index[n] >= dims_[n]) {
            throw std::out_of_range("index out of range in mode " + std::to_string(n + 1));
        }
        off += index[n] * stride;
        stride *= dims_[n];
    }
    return off;
}

std::vector<std::size_t> Shape::unravel(std::size_t offset) const {
    std::vector<std::size_t> idx(dims_.size());
    for (std::size_t n = 0; n < dims_.size(); ++n) {
        idx[n] = offset % dims_[n];
        offset /= dims_[n];
    }
    return idx;
}

std::vector<std::size_t> MultiIndex::to_zero_based(const Shape& shape) const {
    if (indices.size() != shape.order()) {
        throw std::out_of_range("multi-index order does not match shape");
    }
    std::vector<std::size_t> idx(indices.size());
    for (std::size_t n = 0; n < indices.size(); ++n) {
        if (indices[n] < 1 || indices[n] > shape[n]) {
            throw std::out_of_range("multi-index out of range in mode " + std::to_string(n + 1));
        }
        idx[n] = indices[n] - 1;
    }
    return idx;
}

MultiIndex MultiIndex::from_zero_based(std::span<const std::size_t> idx) {
    std::vector<std::size_t> one(idx.begin(), idx.end());
    for (auto& i : one) ++i;
    return MultiIndex(std::move(one));
}

DenseTensor::DenseTensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_.numel(), fill) {}

DenseTensor::DenseTensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_.numel()) {
        throw std::invalid_argument("data length does not match shape");
    }
}

double DenseTensor::at(const MultiIndex& idx) const {
    return data_[shape_.offset(idx.to_zero_based(shape_))];
}

double& DenseTensor::at(const MultiIndex& idx) {
    return data_[shape_.offset(idx.to_zero_based(shape_))];
}

IndexMask::IndexMask(Shape shape, bool observed)
    : shape_(std::move(shape)), bits_(shape_.numel(), observed ? 1 : 0) {}

IndexMask::IndexMask(Shape shape, std::vector<std::uint8_t> bits)
    : shape_(std::move(shape)), bits_(std::move(bits)) {
    if (bits_.size() != shape_.numel()) {
        throw std::invalid_argument("mask length does not match shape");
    }
    for (auto b : bits_) {
        if (b > 1) throw std::invalid_argument("mask bits must be 0 or 1");
    }
}

std::size_t IndexMask::observed_count() const {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

std::vector<std::size_t> IndexMask::observed_offsets() const {
    std::vector<std::size_t> out;
    out.reserve(bits_.size());
    for (std::size_t i = 0; i < bits_.size(); ++i) {
        if (bits_[i]) out.push_back(i);
    }
    return out;
}

std::vector<double> vectorize(const DenseTensor& t) {
    return {t.data().begin(), t.data().end()};
}

DenseTensor reshape(const DenseTensor& t, const Shape& shape) {
    if (shape.numel() != t.size()) {
        throw std::invalid_argument("reshape must preserve the element count");
    }
    return DenseTensor(shape, vectorize(t));
}

IndexMask reshape(const IndexMask& m, const Shape& shape) {
    if (shape.numel() != m.size()) {
        throw std::invalid_argument("reshape must preserve the element count");
    }
    return IndexMask(shape, std::vector<std::uint8_t>(m.bits().begin(), m.bits().end()));
}

DenseTensor hadamard(const DenseTensor& a, const DenseTensor& b) {
    if (!(a.shape() == b.shape())) {
        throw std::invalid_argument("hadamard: shape mismatch");
    }
    DenseTensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return out;
}

Matrix kronecker(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
        }
    }
    return out;
}

double inner(const DenseTensor& a, const DenseTensor& b) {
    if (!(a.shape() == b.shape())) {
        throw std::invalid_argument("inner: shape mismatch");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double frobenius_norm(const DenseTensor& t) {
    double s = 0.0;
    for (double v : t.data()) s += v * v;
    return std::sqrt(s);
}

double trace(const Matrix& m) {
    if (m.rows() != m.cols()) {
        throw std::invalid_argument("trace of a non-square matrix");
    }
    return m.trace();
}

DenseTensor circular_permute(const DenseTensor& t, std::size_t n) {
    const std::size_t order = t.order();
    if (n > order) {
        throw std::out_of_range("circular_permute: n exceeds tensor order");
    }
    if (n == 0 || n == order) return t;

    const auto& dims = t.shape().dims();
    std::vector<std::size_t> pdims(order);
    for (std::size_t k = 0; k < order; ++k) pdims[k] = dims[(k + n) % order];
    Shape pshape(pdims);

    // Source modes n..N-1 come first, so the permuted flat offset splits into
    // a head (modes 0..n-1 of the source) and a tail block.
    std::size_t head = 1;
    for (std::size_t k = 0; k < n; ++k) head *= dims[k];
    const std::size_t tail = t.size() / head;

    DenseTensor out(pshape);
    for (std::size_t h = 0; h < head; ++h) {
        for (std::size_t r = 0; r < tail; ++r) {
            out[r + tail * h] = t[h + head * r];
        }
    }
    return out;
}

} // namespace brtr
