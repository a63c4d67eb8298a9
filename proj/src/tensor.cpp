#include "deqann/tensor.hpp"

#include <cmath>
#include <cstdio>
#include <utility>

namespace deqann {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

DenseTensor::DenseTensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {}

DenseTensor::DenseTensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_product(shape_)) {
        throw ShapeError("tensor data size " + std::to_string(data_.size()) +
                         " does not match shape " + shape_string());
    }
}

DenseTensor::DenseTensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(shape_product(shape_), fill) {}

DenseTensor DenseTensor::identity(std::size_t n) {
    DenseTensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t.data_[i * n + i] = 1.0;
    return t;
}

std::size_t DenseTensor::dim(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_string());
    }
    return shape_[axis];
}

double& DenseTensor::at(std::size_t r, std::size_t c) {
    return data_[r * shape_[1] + c];
}

double DenseTensor::at(std::size_t r, std::size_t c) const {
    return data_[r * shape_[1] + c];
}

DenseTensor DenseTensor::reshaped(std::vector<std::size_t> shape) const {
    if (shape_product(shape) != data_.size()) {
        throw ShapeError("cannot reshape " + shape_string() + " to a shape of different size");
    }
    return DenseTensor(std::move(shape), data_);
}

std::string DenseTensor::shape_string() const {
    std::string s = "(";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(shape_[i]);
    }
    s += ")";
    return s;
}

DenseTensor matmul(const DenseTensor& a, const DenseTensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2) {
        throw ShapeError("matmul requires 2-d operands, got " + a.shape_string() + " and " +
                         b.shape_string());
    }
    const std::size_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2) {
        throw ShapeError("matmul inner dimensions differ: " + a.shape_string() + " vs " +
                         b.shape_string());
    }
    DenseTensor out({m, n});
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    // i-k-j loop order keeps the inner loop contiguous in both b and out.
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = pa[i * k + kk];
            if (aik == 0.0) continue;
            const double* brow = pb + kk * n;
            double* orow = po + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

double l2_norm(const DenseTensor& t) {
    double acc = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) acc += t[i] * t[i];
    return std::sqrt(acc);
}

DenseTensor solve_dense(const DenseTensor& a, const DenseTensor& rhs) {
    if (a.ndim() != 2 || a.dim(0) != a.dim(1)) {
        throw ShapeError("solve_dense requires a square matrix, got " + a.shape_string());
    }
    const std::size_t n = a.dim(0);
    std::size_t k = 0;
    if (rhs.ndim() == 1 && rhs.dim(0) == n) {
        k = 1;
    } else if (rhs.ndim() == 2 && rhs.dim(0) == n) {
        k = rhs.dim(1);
    } else {
        throw ShapeError("solve_dense rhs shape " + rhs.shape_string() +
                         " incompatible with matrix " + a.shape_string());
    }

    std::vector<double> lu(a.raw());
    std::vector<double> x(rhs.raw());
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;

    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        double best = std::fabs(lu[perm[col] * n + col]);
        for (std::size_t r = col + 1; r < n; ++r) {
            const double v = std::fabs(lu[perm[r] * n + col]);
            if (v > best) {
                best = v;
                pivot = r;
            }
        }
        if (!(best > 0.0) || !std::isfinite(best)) {
            throw SingularMatrixError("singular matrix in solve_dense at column " +
                                      std::to_string(col));
        }
        std::swap(perm[col], perm[pivot]);
        const double diag = lu[perm[col] * n + col];
        for (std::size_t r = col + 1; r < n; ++r) {
            double& factor = lu[perm[r] * n + col];
            factor /= diag;
            if (factor == 0.0) continue;
            for (std::size_t c = col + 1; c < n; ++c) {
                lu[perm[r] * n + c] -= factor * lu[perm[col] * n + c];
            }
        }
    }

    DenseTensor out(rhs.shape());
    // Forward then back substitution, one rhs column at a time.
    std::vector<double> y(n);
    for (std::size_t j = 0; j < k; ++j) {
        for (std::size_t i = 0; i < n; ++i) {
            double acc = x[perm[i] * k + j];
            for (std::size_t c = 0; c < i; ++c) acc -= lu[perm[i] * n + c] * y[c];
            y[i] = acc;
        }
        for (std::size_t ii = n; ii-- > 0;) {
            double acc = y[ii];
            for (std::size_t c = ii + 1; c < n; ++c) acc -= lu[perm[ii] * n + c] * y[c];
            y[ii] = acc / lu[perm[ii] * n + ii];
        }
        for (std::size_t i = 0; i < n; ++i) out[i * k + j] = y[i];
    }
    return out;
}

static void check_same_shape(const DenseTensor& a, const DenseTensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op) + " shape mismatch: " + a.shape_string() + " vs " +
                         b.shape_string());
    }
}

DenseTensor add(const DenseTensor& a, const DenseTensor& b) {
    check_same_shape(a, b, "add");
    DenseTensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

DenseTensor sub(const DenseTensor& a, const DenseTensor& b) {
    check_same_shape(a, b, "sub");
    DenseTensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

DenseTensor scale(const DenseTensor& a, double s) {
    DenseTensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
    return out;
}

void axpy(DenseTensor& a, double s, const DenseTensor& b) {
    check_same_shape(a, b, "axpy");
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += s * b[i];
}

bool all_finite(const std::vector<double>& v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

bool all_finite(const DenseTensor& t) { return all_finite(t.raw()); }

}  // namespace deqann
