#include "csm/tensor.hpp"

#include <cassert>
#include <cmath>

namespace csm {

bool Tensor::finite() const {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

void matvec_acc(const Tensor& w, std::span<const double> x, std::span<double> out) {
    const std::size_t m = w.rows(), n = w.cols();
    assert(x.size() == n && out.size() == m);
    const double* wp = w.v.data();
    for (std::size_t i = 0; i < m; ++i) {
        double acc = 0.0;
        const double* row = wp + i * n;
        for (std::size_t j = 0; j < n; ++j) acc += row[j] * x[j];
        out[i] += acc;
    }
}

void matvec_t_acc(const Tensor& w, std::span<const double> g, std::span<double> out) {
    const std::size_t m = w.rows(), n = w.cols();
    assert(g.size() == m && out.size() == n);
    const double* wp = w.v.data();
    for (std::size_t i = 0; i < m; ++i) {
        const double gi = g[i];
        if (gi == 0.0) continue;
        const double* row = wp + i * n;
        for (std::size_t j = 0; j < n; ++j) out[j] += gi * row[j];
    }
}

void outer_acc(Tensor& w_grad, std::span<const double> g, std::span<const double> x) {
    const std::size_t m = w_grad.rows(), n = w_grad.cols();
    assert(g.size() == m && x.size() == n);
    double* wp = w_grad.v.data();
    for (std::size_t i = 0; i < m; ++i) {
        const double gi = g[i];
        if (gi == 0.0) continue;
        double* row = wp + i * n;
        for (std::size_t j = 0; j < n; ++j) row[j] += gi * x[j];
    }
}

double dot(std::span<const double> a, std::span<const double> b) {
    assert(a.size() == b.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    assert(x.size() == y.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

void softmax_inplace(std::span<double> x) {
    if (x.empty()) return;
    double mx = x[0];
    for (double v : x) mx = std::max(mx, v);
    double sum = 0.0;
    for (double& v : x) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (double& v : x) v /= sum;
}

double sum_squares(std::span<const double> x) {
    double acc = 0.0;
    for (double v : x) acc += v * v;
    return acc;
}

}  // namespace csm
