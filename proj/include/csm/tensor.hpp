#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace csm {

/// Dense 64-bit float tensor, row-major, rank 1 or 2.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> v;

    Tensor() = default;

    static Tensor zeros(std::size_t n) {
        Tensor t;
        t.shape = {n};
        t.v.assign(n, 0.0);
        return t;
    }

    static Tensor zeros(std::size_t rows, std::size_t cols) {
        Tensor t;
        t.shape = {rows, cols};
        t.v.assign(rows * cols, 0.0);
        return t;
    }

    std::size_t size() const { return v.size(); }
    std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
    std::size_t cols() const { return shape.size() > 1 ? shape[1] : 1; }

    double& at(std::size_t i) { return v[i]; }
    double at(std::size_t i) const { return v[i]; }
    double& at(std::size_t r, std::size_t c) { return v[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return v[r * cols() + c]; }

    std::span<double> span() { return {v.data(), v.size()}; }
    std::span<const double> span() const { return {v.data(), v.size()}; }

    /// Row r of a rank-2 tensor as a span.
    std::span<const double> row(std::size_t r) const { return {v.data() + r * cols(), cols()}; }
    std::span<double> row(std::size_t r) { return {v.data() + r * cols(), cols()}; }

    void fill(double x) { std::fill(v.begin(), v.end(), x); }

    bool finite() const;

    bool operator==(const Tensor&) const = default;
};

// Shared arithmetic kernels. Both the autodiff tape and the plain inference
// path call these, so the two paths accumulate in the same order and agree
// bit for bit.

/// out += W x  (W: (m,n), x: n, out: m)
void matvec_acc(const Tensor& w, std::span<const double> x, std::span<double> out);

/// out += W^T g  (W: (m,n), g: m, out: n)
void matvec_t_acc(const Tensor& w, std::span<const double> g, std::span<double> out);

/// w_grad += g x^T  (outer product accumulation)
void outer_acc(Tensor& w_grad, std::span<const double> g, std::span<const double> x);

double dot(std::span<const double> a, std::span<const double> b);

/// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

/// In-place softmax with max-subtraction.
void softmax_inplace(std::span<double> x);

double sum_squares(std::span<const double> x);

}  // namespace csm
