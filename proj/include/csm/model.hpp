#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "csm/nn.hpp"
#include "csm/patterns.hpp"
#include "csm/session.hpp"
#include "csm/tape.hpp"
#include "csm/tensor.hpp"

namespace csm {

struct ModelConfig {
    int n_positions = kSerpSize;  // N; the per-step distribution has N+1 outcomes (EOS last)
    int state_dim = 32;           // width of recurrent states and embeddings
    int pos_dim = 32;             // width of the clicked-position embedding
    int attn_dim = 32;            // width of the attention scoring space
    /// The recurrence consumes the previous step's attention context. When
    /// set, it consumes the context computed this step instead.
    bool feed_fresh_attention = false;
    /// Training sequences longer than this are truncated (and counted).
    int max_train_clicks = 20;

    std::size_t eos_index() const { return static_cast<std::size_t>(n_positions); }
    bool operator==(const ModelConfig&) const = default;
};

/// All trainable tensors of the encoder-decoder network.
struct CsmParams {
    ModelConfig config;

    Tensor query_embed;    // (2^N, d), row i = embedding column of pattern i
    Tensor result_embed;   // (2N 2^N, d)
    GruCellParams enc_fwd;  // input d, hidden d
    GruCellParams enc_bwd;  // input d, hidden d
    Tensor init_proj;       // (d, 2d): decoder start from the two final encoder states
    AttentionParams attention;  // state (d) x memory (2d) -> attn_dim
    GruCellParams decoder;  // input 2d + pos_dim, hidden d
    Tensor pos_embed;       // (N, pos_dim), row p-1 = embedding of position p
    Tensor output_proj;     // (N+1, d + 2d)

    /// Visits every tensor in a fixed order (the order is part of the
    /// checkpoint format and of training determinism).
    template <typename F>
    void for_each(F&& f) {
        f(std::string("query_embed"), query_embed);
        f(std::string("result_embed"), result_embed);
        enc_fwd.for_each("enc_fwd", f);
        enc_bwd.for_each("enc_bwd", f);
        f(std::string("init_proj"), init_proj);
        attention.for_each("attention", f);
        decoder.for_each("decoder", f);
        f(std::string("pos_embed"), pos_embed);
        f(std::string("output_proj"), output_proj);
    }

    template <typename F>
    void for_each(F&& f) const {
        const_cast<CsmParams*>(this)->for_each(
            [&f](const std::string& name, Tensor& t) { f(name, static_cast<const Tensor&>(t)); });
    }

    std::vector<std::pair<std::string, Tensor*>> named_tensors();

    /// Seeded initialization: uniform(-0.08, 0.08) matrices, zero biases.
    static CsmParams init(const ModelConfig& config, std::uint64_t seed);
    static CsmParams zeros_like(const CsmParams& other);
};

/// Sparse features of one SERP: the query plus its N results.
struct SerpFeatures {
    SparseFeature query;
    std::vector<SparseFeature> results;
};

SerpFeatures featurize_serp(const PatternStats& stats, std::uint64_t query_id,
                            std::span<const std::uint64_t> results);

/// Encoder output: contextual embeddings of the query (index 0) and results
/// (1..N), each the concatenation of the forward and backward recurrent
/// states, plus the concatenated final states that seed the decoder.
struct EncodedSerp {
    std::vector<Tensor> memory;       // N+1 entries, each 2d
    Tensor init_src;                  // 2d
    std::vector<Tensor> memory_proj;  // cached attention projections, N+1 x attn_dim
};

EncodedSerp encode(const CsmParams& params, const PatternStats& stats, std::uint64_t query_id,
                   std::span<const std::uint64_t> results);
EncodedSerp encode(const CsmParams& params, const SerpFeatures& features);

struct DecoderState {
    Tensor hidden;          // s_t
    Tensor context;         // a_t (zero at t=0)
    int prev_position = 0;  // clicked position observed at t (0 = none yet)
    int t = 0;
};

DecoderState decoder_init(const CsmParams& params, const EncodedSerp& enc);

/// One prediction step. probs covers positions 1..N then EOS. Feeding an
/// observed position (advance) yields the next state; EOS is terminal and is
/// never fed back.
struct StepResult {
    Tensor probs;
    Tensor hidden;   // s_{t+1}
    Tensor context;  // a_{t+1}
    int t = 0;

    DecoderState advance(int position) const;
};

StepResult decoder_step(const CsmParams& params, const DecoderState& state, const EncodedSerp& enc);

/// ln P(sequence then EOS). The empty sequence scores ln P(EOS at the first
/// step). Positions must lie in [1, N].
double sequence_log_prob(const CsmParams& params, const PatternStats& stats, std::uint64_t query_id,
                         std::span<const std::uint64_t> results, const ClickSequence& seq);
double sequence_log_prob(const CsmParams& params, const PatternStats& stats,
                         const QuerySession& session);

/// Records the full forward pass of the model on a tape; used by training and
/// by the gradient checks.
class TapeModel {
public:
    TapeModel(Tape& tape, const CsmParams& params, CsmParams& grads);

    /// Negative log-likelihood node of one (SERP, sequence) pair.
    Tape::Var sequence_nll(const SerpFeatures& features, const ClickSequence& seq);

private:
    struct EncodedVars {
        std::vector<Tape::Var> memory;
        std::vector<Tape::Var> memory_proj;
        Tape::Var init_src = 0;
    };
    EncodedVars encode_vars(const SerpFeatures& features);

    Tape& tape_;
    const CsmParams& params_;
    Tape::Var query_embed_, result_embed_;
    GruVars enc_fwd_, enc_bwd_, decoder_;
    Tape::Var init_proj_, state_proj_, memory_proj_, score_vec_, pos_embed_, output_proj_;
};

struct TrainConfig {
    int batch_size = 64;
    int epochs = 5;
    double lr = 1e-3;
    double clip_norm = 1.0;
    std::uint64_t seed = 1;
    /// Called after each epoch with (epoch, mean nll); epoch 0 reports the
    /// pre-training loss.
    std::function<void(int, double)> on_epoch;
};

struct TrainResult {
    std::vector<double> epoch_mean_nll;  // entry 0 = before training
    std::uint64_t truncated_sessions = 0;
};

class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Minimizes mean sequence NLL with Adam and global-norm clipping.
/// Deterministic given the seed. Throws TrainingDiverged on non-finite loss
/// or gradients.
TrainResult train(CsmParams& params, const PatternStats& stats,
                  std::span<const QuerySession> sessions, const TrainConfig& config);

}  // namespace csm
