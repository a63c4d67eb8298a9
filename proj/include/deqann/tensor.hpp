#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "deqann/errors.hpp"

namespace deqann {

// Dense row-major tensor of doubles. The flat buffer always holds exactly
// product(shape) elements; every mutating path preserves that invariant.
class DenseTensor {
  public:
    DenseTensor() = default;
    explicit DenseTensor(std::vector<std::size_t> shape);
    DenseTensor(std::vector<std::size_t> shape, std::vector<double> data);
    DenseTensor(std::vector<std::size_t> shape, double fill);

    static DenseTensor identity(std::size_t n);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t ndim() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t dim(std::size_t axis) const;

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& raw() { return data_; }
    const std::vector<double>& raw() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // 2-d accessors; only valid when ndim() == 2.
    double& at(std::size_t r, std::size_t c);
    double at(std::size_t r, std::size_t c) const;

    // Returns a tensor with the same flat data and a new shape of equal size.
    DenseTensor reshaped(std::vector<std::size_t> shape) const;

    bool same_shape(const DenseTensor& other) const { return shape_ == other.shape_; }
    std::string shape_string() const;

  private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

std::size_t shape_product(const std::vector<std::size_t>& shape);

// result[i,j] = sum_k a[i,k] * b[k,j]; both operands must be 2-d.
DenseTensor matmul(const DenseTensor& a, const DenseTensor& b);

// Euclidean norm of the flattened tensor, any rank.
double l2_norm(const DenseTensor& t);

// Solves a * y = rhs for square a via LU with partial pivoting.
// rhs may be a vector (shape {n}) or a matrix (shape {n, k}); the result has
// the shape of rhs. Throws SingularMatrixError when no usable pivot exists.
DenseTensor solve_dense(const DenseTensor& a, const DenseTensor& rhs);

DenseTensor add(const DenseTensor& a, const DenseTensor& b);
DenseTensor sub(const DenseTensor& a, const DenseTensor& b);
DenseTensor scale(const DenseTensor& a, double s);
// a += s * b, in place; shapes must match.
void axpy(DenseTensor& a, double s, const DenseTensor& b);

bool all_finite(const DenseTensor& t);
bool all_finite(const std::vector<double>& v);

}  // namespace deqann
