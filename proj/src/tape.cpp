#include "csm/tape.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>

namespace csm {

Tape::Var Tape::push(Tensor value) {
    Node n;
    n.grad = Tensor::zeros(value.size());
    n.grad.shape = value.shape;
    n.own_value = std::move(value);
    nodes_.push_back(std::move(n));
    return static_cast<Var>(nodes_.size() - 1);
}

Tape::Var Tape::param(const Tensor* value, Tensor* grad) {
    assert(value && grad && value->size() == grad->size());
    Node n;
    n.ext_value = value;
    n.grad_sink = grad;
    nodes_.push_back(std::move(n));
    return static_cast<Var>(nodes_.size() - 1);
}

Tape::Var Tape::constant(Tensor value) {
    return push(std::move(value));
}

Tape::Var Tape::matvec(Var w, Var x) {
    const Tensor& wt = value(w);
    Tensor out = Tensor::zeros(wt.rows());
    matvec_acc(wt, val_span(x), out.span());
    Var y = push(std::move(out));
    nodes_[y].back = [w, x, y](Tape& t) {
        std::span<const double> gy = t.nodes_[y].grad.span();
        // dW += g x^T
        std::span<double> gw = t.grad_span(w);
        const std::size_t m = t.value(w).rows(), nn = t.value(w).cols();
        std::span<const double> xs = t.val_span(x);
        for (std::size_t i = 0; i < m; ++i) {
            const double gi = gy[i];
            if (gi == 0.0) continue;
            double* row = gw.data() + i * nn;
            for (std::size_t j = 0; j < nn; ++j) row[j] += gi * xs[j];
        }
        // dx += W^T g
        matvec_t_acc(t.value(w), gy, t.grad_span(x));
    };
    return y;
}

Tape::Var Tape::sparse_embed(Var w, const SparseFeature& f) {
    const Tensor& wt = value(w);
    if (wt.rows() != f.dimension) throw std::invalid_argument("sparse_embed: dimension mismatch");
    Tensor out = Tensor::zeros(wt.cols());
    for (const auto& [index, count] : f.entries) {
        axpy(count, wt.row(index), out.span());
    }
    Var y = push(std::move(out));
    nodes_[y].back = [w, y, entries = f.entries](Tape& t) {
        std::span<const double> gy = t.nodes_[y].grad.span();
        std::span<double> gw = t.grad_span(w);
        const std::size_t d = gy.size();
        for (const auto& [index, count] : entries) {
            double* row = gw.data() + index * d;
            for (std::size_t j = 0; j < d; ++j) row[j] += count * gy[j];
        }
    };
    return y;
}

Tape::Var Tape::embed_row(Var w, std::size_t row) {
    const Tensor& wt = value(w);
    Tensor out = Tensor::zeros(wt.cols());
    std::span<const double> src = wt.row(row);
    std::copy(src.begin(), src.end(), out.v.begin());
    Var y = push(std::move(out));
    nodes_[y].back = [w, y, row](Tape& t) {
        std::span<const double> gy = t.nodes_[y].grad.span();
        std::span<double> gw = t.grad_span(w);
        double* dst = gw.data() + row * gy.size();
        for (std::size_t j = 0; j < gy.size(); ++j) dst[j] += gy[j];
    };
    return y;
}

Tape::Var Tape::add(Var a, Var b) {
    std::span<const double> av = val_span(a), bv = val_span(b);
    assert(av.size() == bv.size());
    Tensor out = Tensor::zeros(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out.v[i] = av[i] + bv[i];
    Var y = push(std::move(out));
    nodes_[y].back = [a, b, y](Tape& t) {
        std::span<const double> gy = t.nodes_[y].grad.span();
        axpy(1.0, gy, t.grad_span(a));
        axpy(1.0, gy, t.grad_span(b));
    };
    return y;
}

Tape::Var Tape::add3(Var a, Var b, Var c) {
    std::span<const double> av = val_span(a), bv = val_span(b), cv = val_span(c);
    assert(av.size() == bv.size() && bv.size() == cv.size());
    Tensor out = Tensor::zeros(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out.v[i] = av[i] + bv[i] + cv[i];
    Var y = push(std::move(out));
    nodes_[y].back = [a, b, c, y](Tape& t) {
        std::span<const double> gy = t.nodes_[y].grad.span();
        axpy(1.0, gy, t.grad_span(a));
        axpy(1.0, gy, t.grad_span(b));
        axpy(1.0, gy, t.grad_span(c));
    };
    return y;
}

Tape::Var Tape::mul(Var a, Var b) {
    std::span<const double> av = val_span(a), bv = val_span(b);
    assert(av.size() == bv.size());
    Tensor out = Tensor::zeros(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out.v[i] = av[i] * bv[i];
    Var y = push(std::move(out));
    nodes_[y].back = [a, b, y](Tape& t) {
        std::span<const double> gy = t.nodes_[y].grad.span();
        std::span<const double> av2 = t.val_span(a), bv2 = t.val_span(b);
        std::span<double> ga = t.grad_span(a), gb = t.grad_span(b);
        for (std::size_t i = 0; i < gy.size(); ++i) {
            ga[i] += gy[i] * bv2[i];
            gb[i] += gy[i] * av2[i];
        }
    };
    return y;
}

Tape::Var Tape::sigmoid(Var x) {
    std::span<const double> xv = val_span(x);
    Tensor out = Tensor::zeros(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) out.v[i] = 1.0 / (1.0 + std::exp(-xv[i]));
    Var y = push(std::move(out));
    nodes_[y].back = [x, y](Tape& t) {
        std::span<const double> gy = t.nodes_[y].grad.span();
        std::span<const double> yv = t.val_span(y);
        std::span<double> gx = t.grad_span(x);
        for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * yv[i] * (1.0 - yv[i]);
    };
    return y;
}

Tape::Var Tape::tanh(Var x) {
    std::span<const double> xv = val_span(x);
    Tensor out = Tensor::zeros(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) out.v[i] = std::tanh(xv[i]);
    Var y = push(std::move(out));
    nodes_[y].back = [x, y](Tape& t) {
        std::span<const double> gy = t.nodes_[y].grad.span();
        std::span<const double> yv = t.val_span(y);
        std::span<double> gx = t.grad_span(x);
        for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * (1.0 - yv[i] * yv[i]);
    };
    return y;
}

Tape::Var Tape::lerp(Var a, Var b, Var tt) {
    std::span<const double> av = val_span(a), bv = val_span(b), tv = val_span(tt);
    assert(av.size() == bv.size() && bv.size() == tv.size());
    Tensor out = Tensor::zeros(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out.v[i] = av[i] + tv[i] * (bv[i] - av[i]);
    Var y = push(std::move(out));
    nodes_[y].back = [a, b, tt, y](Tape& t) {
        std::span<const double> gy = t.nodes_[y].grad.span();
        std::span<const double> av2 = t.val_span(a), bv2 = t.val_span(b), tv2 = t.val_span(tt);
        std::span<double> ga = t.grad_span(a), gb = t.grad_span(b), gt = t.grad_span(tt);
        for (std::size_t i = 0; i < gy.size(); ++i) {
            ga[i] += gy[i] * (1.0 - tv2[i]);
            gb[i] += gy[i] * tv2[i];
            gt[i] += gy[i] * (bv2[i] - av2[i]);
        }
    };
    return y;
}

Tape::Var Tape::concat(Var a, Var b) {
    std::span<const double> av = val_span(a), bv = val_span(b);
    Tensor out = Tensor::zeros(av.size() + bv.size());
    std::copy(av.begin(), av.end(), out.v.begin());
    std::copy(bv.begin(), bv.end(), out.v.begin() + static_cast<std::ptrdiff_t>(av.size()));
    Var y = push(std::move(out));
    nodes_[y].back = [a, b, y](Tape& t) {
        std::span<const double> gy = t.nodes_[y].grad.span();
        std::span<double> ga = t.grad_span(a), gb = t.grad_span(b);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gy[i];
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gy[ga.size() + i];
    };
    return y;
}

Tape::Var Tape::stack(std::span<const Var> scalars) {
    Tensor out = Tensor::zeros(scalars.size());
    for (std::size_t i = 0; i < scalars.size(); ++i) out.v[i] = val_span(scalars[i])[0];
    Var y = push(std::move(out));
    nodes_[y].back = [items = std::vector<Var>(scalars.begin(), scalars.end()), y](Tape& t) {
        std::span<const double> gy = t.nodes_[y].grad.span();
        for (std::size_t i = 0; i < items.size(); ++i) t.grad_span(items[i])[0] += gy[i];
    };
    return y;
}

Tape::Var Tape::softmax(Var x) {
    Tensor out;
    out.shape = {val_span(x).size()};
    out.v.assign(val_span(x).begin(), val_span(x).end());
    softmax_inplace(out.span());
    Var y = push(std::move(out));
    nodes_[y].back = [x, y](Tape& t) {
        std::span<const double> gy = t.nodes_[y].grad.span();
        std::span<const double> yv = t.val_span(y);
        std::span<double> gx = t.grad_span(x);
        double gdoty = 0.0;
        for (std::size_t i = 0; i < gy.size(); ++i) gdoty += gy[i] * yv[i];
        for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += yv[i] * (gy[i] - gdoty);
    };
    return y;
}

Tape::Var Tape::weighted_sum(Var weights, std::span<const Var> items) {
    std::span<const double> wv = val_span(weights);
    assert(wv.size() == items.size() && !items.empty());
    const std::size_t d = val_span(items[0]).size();
    Tensor out = Tensor::zeros(d);
    for (std::size_t i = 0; i < items.size(); ++i) {
        axpy(wv[i], val_span(items[i]), out.span());
    }
    Var y = push(std::move(out));
    nodes_[y].back = [weights, y, its = std::vector<Var>(items.begin(), items.end())](Tape& t) {
        std::span<const double> gy = t.nodes_[y].grad.span();
        std::span<const double> wv2 = t.val_span(weights);
        std::span<double> gw = t.grad_span(weights);
        for (std::size_t i = 0; i < its.size(); ++i) {
            gw[i] += csm::dot(gy, t.val_span(its[i]));
            axpy(wv2[i], gy, t.grad_span(its[i]));
        }
    };
    return y;
}

Tape::Var Tape::dot(Var a, Var b) {
    Tensor out = Tensor::zeros(1);
    out.v[0] = csm::dot(val_span(a), val_span(b));
    Var y = push(std::move(out));
    nodes_[y].back = [a, b, y](Tape& t) {
        const double g = t.nodes_[y].grad.v[0];
        axpy(g, t.val_span(b), t.grad_span(a));
        axpy(g, t.val_span(a), t.grad_span(b));
    };
    return y;
}

Tape::Var Tape::sum(std::span<const Var> scalars) {
    Tensor out = Tensor::zeros(1);
    for (Var s : scalars) out.v[0] += val_span(s)[0];
    Var y = push(std::move(out));
    nodes_[y].back = [items = std::vector<Var>(scalars.begin(), scalars.end()), y](Tape& t) {
        const double g = t.nodes_[y].grad.v[0];
        for (Var s : items) t.grad_span(s)[0] += g;
    };
    return y;
}

Tape::Var Tape::cross_entropy(Var logits, std::size_t target) {
    std::span<const double> lv = val_span(logits);
    if (target >= lv.size()) throw std::out_of_range("cross_entropy: target out of range");
    Tensor probs;
    probs.shape = {lv.size()};
    probs.v.assign(lv.begin(), lv.end());
    softmax_inplace(probs.span());
    Tensor out = Tensor::zeros(1);
    out.v[0] = -std::log(probs.v[target]);
    Var y = push(std::move(out));
    nodes_[y].aux = std::move(probs);
    nodes_[y].back = [logits, y, target](Tape& t) {
        const double g = t.nodes_[y].grad.v[0];
        std::span<const double> pv = t.nodes_[y].aux.span();
        std::span<double> gl = t.grad_span(logits);
        for (std::size_t i = 0; i < pv.size(); ++i) {
            gl[i] += g * (pv[i] - (i == target ? 1.0 : 0.0));
        }
    };
    return y;
}

void Tape::backward(Var root, double seed) {
    assert(val_span(root).size() == 1);
    grad_span(root)[0] += seed;
    for (std::size_t i = root + 1; i-- > 0;) {
        if (nodes_[i].back) nodes_[i].back(*this);
    }
}

}  // namespace csm
