#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace brtr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Mode sizes I_1..I_N of an N-way array.
class Shape {
public:
    Shape() = default;
    Shape(std::initializer_list<std::size_t> dims);
    explicit Shape(std::vector<std::size_t> dims);

    std::size_t order() const { return dims_.size(); }
    std::size_t numel() const { return numel_; }
    std::size_t operator[](std::size_t mode) const { return dims_[mode]; }
    const std::vector<std::size_t>& dims() const { return dims_; }

    /// Stride of each mode under first-index-fastest linearization.
    std::vector<std::size_t> strides() const;

    /// Flat offset of a 0-based index tuple.
    std::size_t offset(std::span<const std::size_t> index) const;

    /// 0-based index tuple of a flat offset.
    std::vector<std::size_t> unravel(std::size_t offset) const;

    bool operator==(const Shape&) const = default;

private:
    std::vector<std::size_t> dims_;
    std::size_t numel_ = 0;
};

/// 1-based multi-index (i_1..i_N). Converted to 0-based at the API boundary.
struct MultiIndex {
    std::vector<std::size_t> indices;

    MultiIndex() = default;
    MultiIndex(std::initializer_list<std::size_t> idx) : indices(idx) {}
    explicit MultiIndex(std::vector<std::size_t> idx) : indices(std::move(idx)) {}

    /// Throws std::out_of_range unless 1 <= i_n <= I_n for every mode.
    std::vector<std::size_t> to_zero_based(const Shape& shape) const;
    static MultiIndex from_zero_based(std::span<const std::size_t> idx);
};

/// Dense N-way array of doubles stored first-index-fastest.
class DenseTensor {
public:
    DenseTensor() = default;
    explicit DenseTensor(Shape shape, double fill = 0.0);
    DenseTensor(Shape shape, std::vector<double> data);

    const Shape& shape() const { return shape_; }
    std::size_t order() const { return shape_.order(); }
    std::size_t size() const { return data_.size(); }

    double operator[](std::size_t offset) const { return data_[offset]; }
    double& operator[](std::size_t offset) { return data_[offset]; }

    /// 1-based element access.
    double at(const MultiIndex& idx) const;
    double& at(const MultiIndex& idx);

    /// 0-based element access for order-3 tensors (cores).
    double operator()(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[i + shape_[0] * (j + shape_[1] * k)];
    }
    double& operator()(std::size_t i, std::size_t j, std::size_t k) {
        return data_[i + shape_[0] * (j + shape_[1] * k)];
    }

    std::span<const double> data() const { return data_; }
    std::span<double> data() { return data_; }

    bool operator==(const DenseTensor&) const = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

/// Observation indicator over a tensor's index set.
class IndexMask {
public:
    IndexMask() = default;
    explicit IndexMask(Shape shape, bool observed = true);
    IndexMask(Shape shape, std::vector<std::uint8_t> bits);

    const Shape& shape() const { return shape_; }
    std::size_t size() const { return bits_.size(); }
    bool operator[](std::size_t offset) const { return bits_[offset] != 0; }
    void set(std::size_t offset, bool observed) { bits_[offset] = observed ? 1 : 0; }

    std::size_t observed_count() const;
    /// Flat offsets of observed entries in increasing order.
    std::vector<std::size_t> observed_offsets() const;

    std::span<const std::uint8_t> bits() const { return bits_; }

    bool operator==(const IndexMask&) const = default;

private:
    Shape shape_;
    std::vector<std::uint8_t> bits_;
};

std::vector<double> vectorize(const DenseTensor& t);

/// Reinterprets the flat data under a new shape with the same element count.
DenseTensor reshape(const DenseTensor& t, const Shape& shape);
IndexMask reshape(const IndexMask& m, const Shape& shape);

DenseTensor hadamard(const DenseTensor& a, const DenseTensor& b);

/// Block matrix whose (i,j) block is a(i,j)*b, so vec(B X A^T) = (A kron B) vec(X).
Matrix kronecker(const Matrix& a, const Matrix& b);

double inner(const DenseTensor& a, const DenseTensor& b);
double frobenius_norm(const DenseTensor& t);
double trace(const Matrix& m);

/// Moves the first n modes to the back: result(i_{n+1}..i_N, i_1..i_n) = t(i_1..i_N).
DenseTensor circular_permute(const DenseTensor& t, std::size_t n);

} // namespace brtr
