#include "csm/nn.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace csm {

GruCellParams GruCellParams::zeros(std::size_t hidden, std::size_t input) {
    GruCellParams cell;
    cell.w_update = Tensor::zeros(hidden, input);
    cell.u_update = Tensor::zeros(hidden, hidden);
    cell.b_update = Tensor::zeros(hidden);
    cell.w_reset = Tensor::zeros(hidden, input);
    cell.u_reset = Tensor::zeros(hidden, hidden);
    cell.b_reset = Tensor::zeros(hidden);
    cell.w_cand = Tensor::zeros(hidden, input);
    cell.u_cand = Tensor::zeros(hidden, hidden);
    cell.b_cand = Tensor::zeros(hidden);
    return cell;
}

Tensor gru_step(const GruCellParams& cell, std::span<const double> h_prev,
                std::span<const double> x) {
    const std::size_t h = cell.hidden();
    if (h_prev.size() != h || x.size() != cell.input()) {
        throw std::invalid_argument("gru_step: shape mismatch");
    }

    Tensor z = Tensor::zeros(h), r = Tensor::zeros(h), hc = Tensor::zeros(h);
    matvec_acc(cell.w_update, x, z.span());
    matvec_acc(cell.u_update, h_prev, z.span());
    matvec_acc(cell.w_reset, x, r.span());
    matvec_acc(cell.u_reset, h_prev, r.span());
    for (std::size_t i = 0; i < h; ++i) {
        z.v[i] = 1.0 / (1.0 + std::exp(-(z.v[i] + cell.b_update.v[i])));
        r.v[i] = 1.0 / (1.0 + std::exp(-(r.v[i] + cell.b_reset.v[i])));
    }

    Tensor rh = Tensor::zeros(h);
    for (std::size_t i = 0; i < h; ++i) rh.v[i] = r.v[i] * h_prev[i];
    matvec_acc(cell.w_cand, x, hc.span());
    matvec_acc(cell.u_cand, rh.span(), hc.span());

    Tensor out = Tensor::zeros(h);
    for (std::size_t i = 0; i < h; ++i) {
        const double cand = std::tanh(hc.v[i] + cell.b_cand.v[i]);
        out.v[i] = h_prev[i] + z.v[i] * (cand - h_prev[i]);
        if (!std::isfinite(out.v[i])) throw std::runtime_error("gru_step: non-finite output");
    }
    return out;
}

GruVars register_gru(Tape& tape, const GruCellParams& cell, GruCellParams& grads) {
    GruVars vars;
    vars.w_update = tape.param(&cell.w_update, &grads.w_update);
    vars.u_update = tape.param(&cell.u_update, &grads.u_update);
    vars.b_update = tape.param(&cell.b_update, &grads.b_update);
    vars.w_reset = tape.param(&cell.w_reset, &grads.w_reset);
    vars.u_reset = tape.param(&cell.u_reset, &grads.u_reset);
    vars.b_reset = tape.param(&cell.b_reset, &grads.b_reset);
    vars.w_cand = tape.param(&cell.w_cand, &grads.w_cand);
    vars.u_cand = tape.param(&cell.u_cand, &grads.u_cand);
    vars.b_cand = tape.param(&cell.b_cand, &grads.b_cand);
    return vars;
}

Tape::Var gru_step(Tape& tape, const GruVars& cell, Tape::Var h_prev, Tape::Var x) {
    Tape::Var z = tape.sigmoid(tape.add3(tape.matvec(cell.w_update, x),
                                         tape.matvec(cell.u_update, h_prev), cell.b_update));
    Tape::Var r = tape.sigmoid(tape.add3(tape.matvec(cell.w_reset, x),
                                         tape.matvec(cell.u_reset, h_prev), cell.b_reset));
    Tape::Var hc = tape.tanh(tape.add3(tape.matvec(cell.w_cand, x),
                                       tape.matvec(cell.u_cand, tape.mul(r, h_prev)), cell.b_cand));
    return tape.lerp(h_prev, hc, z);
}

AttentionResult attention(const AttentionParams& params, std::span<const double> state,
                          std::span<const Tensor> memory,
                          std::span<const Tensor> memory_proj_cache) {
    if (memory.empty()) throw std::invalid_argument("attention: empty memory");
    const std::size_t a = params.score_vec.size();

    Tensor s_proj = Tensor::zeros(a);
    matvec_acc(params.state_proj, state, s_proj.span());

    AttentionResult out;
    out.weights = Tensor::zeros(memory.size());
    Tensor hidden = Tensor::zeros(a);
    for (std::size_t i = 0; i < memory.size(); ++i) {
        hidden.fill(0.0);
        if (!memory_proj_cache.empty()) {
            axpy(1.0, memory_proj_cache[i].span(), hidden.span());
        } else {
            matvec_acc(params.memory_proj, memory[i].span(), hidden.span());
        }
        double score = 0.0;
        for (std::size_t j = 0; j < a; ++j) {
            score += params.score_vec.v[j] * std::tanh(hidden.v[j] + s_proj.v[j]);
        }
        out.weights.v[i] = score;
    }
    softmax_inplace(out.weights.span());

    out.context = Tensor::zeros(memory[0].size());
    for (std::size_t i = 0; i < memory.size(); ++i) {
        axpy(out.weights.v[i], memory[i].span(), out.context.span());
    }
    return out;
}

SoftmaxXent softmax_xent(std::span<const double> logits, std::size_t target) {
    if (target >= logits.size()) throw std::out_of_range("softmax_xent: target out of range");
    SoftmaxXent out;
    out.probs.shape = {logits.size()};
    out.probs.v.assign(logits.begin(), logits.end());
    softmax_inplace(out.probs.span());
    out.loss = -std::log(out.probs.v[target]);
    return out;
}

double clip_global_norm(std::span<Tensor* const> grads, double max_norm) {
    double sq = 0.0;
    for (const Tensor* g : grads) sq += sum_squares(g->span());
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) throw std::runtime_error("clip_global_norm: non-finite gradient");
    if (norm > max_norm) {
        const double scale = max_norm / norm;
        for (Tensor* g : grads) {
            for (double& x : g->v) x *= scale;
        }
    }
    return norm;
}

AdamState::AdamState(const AdamConfig& config, std::span<Tensor* const> params) : cfg_(config) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const Tensor* p : params) {
        m_.push_back(Tensor::zeros(p->size()));
        v_.push_back(Tensor::zeros(p->size()));
    }
}

void AdamState::update(std::span<Tensor* const> params, std::span<const Tensor* const> grads) {
    if (params.size() != m_.size() || grads.size() != m_.size()) {
        throw std::invalid_argument("AdamState: parameter list mismatch");
    }
    t_ += 1;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& p = *params[k];
        const Tensor& g = *grads[k];
        Tensor& m = m_[k];
        Tensor& v = v_[k];
        if (p.size() != m.size() || g.size() != m.size()) {
            throw std::invalid_argument("AdamState: tensor shape mismatch");
        }
        for (std::size_t i = 0; i < p.size(); ++i) {
            m.v[i] = cfg_.beta1 * m.v[i] + (1.0 - cfg_.beta1) * g.v[i];
            v.v[i] = cfg_.beta2 * v.v[i] + (1.0 - cfg_.beta2) * g.v[i] * g.v[i];
            const double step = cfg_.lr * (m.v[i] / bc1) / (std::sqrt(v.v[i] / bc2) + cfg_.eps);
            if (!std::isfinite(step)) throw std::runtime_error("AdamState: non-finite update");
            p.v[i] -= step;
        }
    }
}

std::string GradCheckReport::summary() const {
    std::ostringstream os;
    os << (passed ? "PASS" : "FAIL") << ": " << checked << " coordinates checked, max rel error "
       << max_rel_error;
    if (!passed) {
        os << "; worst offenders:";
        for (const GradCheckEntry& e : failures) {
            os << " [" << e.tensor << "[" << e.index << "] analytic=" << e.analytic
               << " numeric=" << e.numeric << " rel=" << e.rel_error << "]";
        }
    }
    return os.str();
}

GradCheckReport grad_check(const std::function<double()>& loss,
                           std::span<const std::pair<std::string, Tensor*>> params,
                           std::span<const Tensor* const> analytic_grads, std::size_t n_samples,
                           double h, double tol, std::uint64_t seed) {
    if (params.size() != analytic_grads.size() || params.empty()) {
        throw std::invalid_argument("grad_check: parameter list mismatch");
    }
    Rng rng(seed);
    GradCheckReport report;
    for (std::size_t k = 0; k < n_samples; ++k) {
        const std::size_t ti = k % params.size();
        Tensor& t = *params[ti].second;
        if (t.size() == 0) continue;
        const std::size_t idx = rng.uniform_below(t.size());

        const double saved = t.v[idx];
        t.v[idx] = saved + h;
        const double up = loss();
        t.v[idx] = saved - h;
        const double down = loss();
        t.v[idx] = saved;

        const double numeric = (up - down) / (2.0 * h);
        const double analytic = analytic_grads[ti]->v[idx];
        const double denom = std::max(std::abs(analytic) + std::abs(numeric), 1e-5);
        const double rel = std::abs(analytic - numeric) / denom;

        report.checked += 1;
        GradCheckEntry entry{params[ti].first, idx, analytic, numeric, rel};
        if (rel > report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst = entry;
        }
        if (rel >= tol) {
            report.passed = false;
            report.failures.push_back(entry);
        }
    }
    std::sort(report.failures.begin(), report.failures.end(),
              [](const GradCheckEntry& a, const GradCheckEntry& b) { return a.rel_error > b.rel_error; });
    if (report.failures.size() > 10) report.failures.resize(10);
    return report;
}

void init_uniform(Tensor& t, Rng& rng, double scale) {
    for (double& x : t.v) x = rng.uniform(-scale, scale);
}

}  // namespace csm
