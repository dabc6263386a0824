#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "csm/rng.hpp"
#include "csm/tape.hpp"
#include "csm/tensor.hpp"

namespace csm {

/// Gated recurrent cell:
///   z  = sigmoid(W_z x + U_z h + b_z)
///   r  = sigmoid(W_r x + U_r h + b_r)
///   hc = tanh(W_c x + U_c (r * h) + b_c)
///   h' = (1 - z) * h + z * hc
struct GruCellParams {
    Tensor w_update, u_update, b_update;
    Tensor w_reset, u_reset, b_reset;
    Tensor w_cand, u_cand, b_cand;

    static GruCellParams zeros(std::size_t hidden, std::size_t input);
    std::size_t hidden() const { return b_update.size(); }
    std::size_t input() const { return w_update.cols(); }

    template <typename F>
    void for_each(const std::string& prefix, F&& f) {
        f(prefix + ".w_update", w_update);
        f(prefix + ".u_update", u_update);
        f(prefix + ".b_update", b_update);
        f(prefix + ".w_reset", w_reset);
        f(prefix + ".u_reset", u_reset);
        f(prefix + ".b_reset", b_reset);
        f(prefix + ".w_cand", w_cand);
        f(prefix + ".u_cand", u_cand);
        f(prefix + ".b_cand", b_cand);
    }
};

/// One step of the cell on plain values. Output must not alias the inputs.
Tensor gru_step(const GruCellParams& cell, std::span<const double> h_prev,
                std::span<const double> x);

/// Tape handles of one cell's parameters.
struct GruVars {
    Tape::Var w_update, u_update, b_update;
    Tape::Var w_reset, u_reset, b_reset;
    Tape::Var w_cand, u_cand, b_cand;
};

GruVars register_gru(Tape& tape, const GruCellParams& cell, GruCellParams& grads);
Tape::Var gru_step(Tape& tape, const GruVars& cell, Tape::Var h_prev, Tape::Var x);

/// Additive attention: score_i = v . tanh(S s + M m_i), weights = softmax,
/// context = sum_i weights_i m_i.
struct AttentionParams {
    Tensor state_proj;   // (attn, state_dim)
    Tensor memory_proj;  // (attn, memory_dim)
    Tensor score_vec;    // (attn)

    template <typename F>
    void for_each(const std::string& prefix, F&& f) {
        f(prefix + ".state_proj", state_proj);
        f(prefix + ".memory_proj", memory_proj);
        f(prefix + ".score_vec", score_vec);
    }
};

struct AttentionResult {
    Tensor context;
    Tensor weights;  // simplex over memory entries
};

/// memory_proj_cache, if non-empty, must hold memory_proj * m_i per entry.
AttentionResult attention(const AttentionParams& params, std::span<const double> state,
                          std::span<const Tensor> memory,
                          std::span<const Tensor> memory_proj_cache = {});

/// Numerically stable softmax cross-entropy on plain values.
struct SoftmaxXent {
    double loss = 0.0;
    Tensor probs;
};
SoftmaxXent softmax_xent(std::span<const double> logits, std::size_t target);

/// Scales all gradients by max_norm/norm when the joint L2 norm exceeds
/// max_norm. Returns the pre-clip norm. Throws on a non-finite norm.
double clip_global_norm(std::span<Tensor* const> grads, double max_norm);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Bias-corrected Adam over a fixed list of parameter tensors.
class AdamState {
public:
    AdamState(const AdamConfig& config, std::span<Tensor* const> params);

    /// One optimization step; params and grads must match the construction
    /// list. Throws on non-finite updates.
    void update(std::span<Tensor* const> params, std::span<const Tensor* const> grads);

    std::int64_t step_count() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

private:
    AdamConfig cfg_;
    std::int64_t t_ = 0;
    std::vector<Tensor> m_, v_;
};

struct GradCheckEntry {
    std::string tensor;
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_error = 0.0;
};

struct GradCheckReport {
    bool passed = true;
    std::size_t checked = 0;
    double max_rel_error = 0.0;
    GradCheckEntry worst;
    std::vector<GradCheckEntry> failures;  // worst offenders first, capped

    std::string summary() const;
};

/// Central-difference verification of analytic gradients.
///
/// Samples coordinates round-robin across tensors (so every tensor is
/// covered), perturbs them in place by +-h, and compares the analytic value
/// against (f(x+h) - f(x-h)) / 2h. The relative error denominator is floored
/// at 1e-5 so coordinates with near-zero gradients are judged on the
/// absolute difference, below finite-difference noise.
GradCheckReport grad_check(const std::function<double()>& loss,
                           std::span<const std::pair<std::string, Tensor*>> params,
                           std::span<const Tensor* const> analytic_grads, std::size_t n_samples,
                           double h, double tol, std::uint64_t seed);

/// Uniform(-scale, scale) init for weight matrices, zeros for biases
/// (tensor names ending in a ".b_*" component count as biases).
void init_uniform(Tensor& t, Rng& rng, double scale = 0.08);

}  // namespace csm
