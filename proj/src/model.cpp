#include "csm/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace csm {

namespace {

void check_positions(const ClickSequence& seq, int n_positions) {
    for (int p : seq) {
        if (p < 1 || p > n_positions) throw std::out_of_range("click position outside [1, N]");
    }
}

std::uint64_t serp_key(std::uint64_t query_id, std::span<const std::uint64_t> results) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::uint64_t x) {
        for (int i = 0; i < 8; ++i) {
            h ^= (x >> (8 * i)) & 0xff;
            h *= 0x100000001b3ULL;
        }
    };
    mix(query_id);
    for (std::uint64_t r : results) mix(r);
    return h;
}

}  // namespace

std::vector<std::pair<std::string, Tensor*>> CsmParams::named_tensors() {
    std::vector<std::pair<std::string, Tensor*>> out;
    for_each([&out](const std::string& name, Tensor& t) { out.emplace_back(name, &t); });
    return out;
}

CsmParams CsmParams::init(const ModelConfig& config, std::uint64_t seed) {
    if (config.n_positions < 1 || config.n_positions > 20) {
        throw std::invalid_argument("n_positions out of range");
    }
    const std::size_t n = static_cast<std::size_t>(config.n_positions);
    const std::size_t d = static_cast<std::size_t>(config.state_dim);
    const std::size_t dp = static_cast<std::size_t>(config.pos_dim);
    const std::size_t da = static_cast<std::size_t>(config.attn_dim);
    const std::size_t two_d = 2 * d;

    CsmParams params;
    params.config = config;
    params.query_embed = Tensor::zeros(std::size_t{1} << n, d);
    params.result_embed = Tensor::zeros(2 * n * (std::size_t{1} << n), d);
    params.enc_fwd = GruCellParams::zeros(d, d);
    params.enc_bwd = GruCellParams::zeros(d, d);
    params.init_proj = Tensor::zeros(d, two_d);
    params.attention.state_proj = Tensor::zeros(da, d);
    params.attention.memory_proj = Tensor::zeros(da, two_d);
    params.attention.score_vec = Tensor::zeros(da);
    params.decoder = GruCellParams::zeros(d, two_d + dp);
    params.pos_embed = Tensor::zeros(n, dp);
    params.output_proj = Tensor::zeros(n + 1, d + two_d);

    Rng rng(seed);
    params.for_each([&rng](const std::string& name, Tensor& t) {
        if (name.find(".b_") == std::string::npos) init_uniform(t, rng);
    });
    return params;
}

CsmParams CsmParams::zeros_like(const CsmParams& other) {
    CsmParams zero = other;
    zero.for_each([](const std::string&, Tensor& t) { t.fill(0.0); });
    return zero;
}

SerpFeatures featurize_serp(const PatternStats& stats, std::uint64_t query_id,
                            std::span<const std::uint64_t> results) {
    SerpFeatures f;
    f.query = stats.query_feature(query_id);
    f.results.reserve(results.size());
    for (std::uint64_t doc : results) {
        f.results.push_back(stats.result_feature(query_id, doc));
    }
    return f;
}

EncodedSerp encode(const CsmParams& params, const PatternStats& stats, std::uint64_t query_id,
                   std::span<const std::uint64_t> results) {
    if (results.size() != static_cast<std::size_t>(params.config.n_positions)) {
        throw std::invalid_argument("encode: result list length must equal n_positions");
    }
    return encode(params, featurize_serp(stats, query_id, results));
}

EncodedSerp encode(const CsmParams& params, const SerpFeatures& features) {
    const std::size_t n = features.results.size();
    const std::size_t d = static_cast<std::size_t>(params.config.state_dim);

    std::vector<Tensor> inputs;
    inputs.reserve(n + 1);
    inputs.push_back(embed(params.query_embed, features.query));
    for (const SparseFeature& f : features.results) {
        inputs.push_back(embed(params.result_embed, f));
    }

    std::vector<Tensor> fwd(n + 1), bwd(n + 1);
    Tensor h = Tensor::zeros(d);
    for (std::size_t i = 0; i <= n; ++i) {
        h = gru_step(params.enc_fwd, h.span(), inputs[i].span());
        fwd[i] = h;
    }
    h = Tensor::zeros(d);
    for (std::size_t i = n + 1; i-- > 0;) {
        h = gru_step(params.enc_bwd, h.span(), inputs[i].span());
        bwd[i] = h;
    }

    EncodedSerp enc;
    enc.memory.reserve(n + 1);
    for (std::size_t i = 0; i <= n; ++i) {
        Tensor m = Tensor::zeros(2 * d);
        std::copy(fwd[i].v.begin(), fwd[i].v.end(), m.v.begin());
        std::copy(bwd[i].v.begin(), bwd[i].v.end(), m.v.begin() + static_cast<std::ptrdiff_t>(d));
        enc.memory.push_back(std::move(m));
    }
    enc.init_src = Tensor::zeros(2 * d);
    std::copy(fwd[n].v.begin(), fwd[n].v.end(), enc.init_src.v.begin());
    std::copy(bwd[0].v.begin(), bwd[0].v.end(),
              enc.init_src.v.begin() + static_cast<std::ptrdiff_t>(d));

    enc.memory_proj.reserve(n + 1);
    for (const Tensor& m : enc.memory) {
        Tensor proj = Tensor::zeros(params.attention.score_vec.size());
        matvec_acc(params.attention.memory_proj, m.span(), proj.span());
        enc.memory_proj.push_back(std::move(proj));
    }
    return enc;
}

DecoderState decoder_init(const CsmParams& params, const EncodedSerp& enc) {
    DecoderState state;
    state.hidden = Tensor::zeros(params.init_proj.rows());
    matvec_acc(params.init_proj, enc.init_src.span(), state.hidden.span());
    state.context = Tensor::zeros(enc.memory.empty() ? 0 : enc.memory[0].size());
    state.prev_position = 0;
    state.t = 0;
    return state;
}

StepResult decoder_step(const CsmParams& params, const DecoderState& state, const EncodedSerp& enc) {
    const std::size_t dp = static_cast<std::size_t>(params.config.pos_dim);

    AttentionResult att =
        attention(params.attention, state.hidden.span(), enc.memory, enc.memory_proj);

    const Tensor& fed_context = params.config.feed_fresh_attention ? att.context : state.context;
    Tensor x = Tensor::zeros(fed_context.size() + dp);
    std::copy(fed_context.v.begin(), fed_context.v.end(), x.v.begin());
    if (state.prev_position > 0) {
        std::span<const double> row = params.pos_embed.row(state.prev_position - 1);
        std::copy(row.begin(), row.end(),
                  x.v.begin() + static_cast<std::ptrdiff_t>(fed_context.size()));
    }

    StepResult step;
    step.hidden = gru_step(params.decoder, state.hidden.span(), x.span());
    step.context = att.context;
    step.t = state.t + 1;

    Tensor cat = Tensor::zeros(step.hidden.size() + step.context.size());
    std::copy(step.hidden.v.begin(), step.hidden.v.end(), cat.v.begin());
    std::copy(step.context.v.begin(), step.context.v.end(),
              cat.v.begin() + static_cast<std::ptrdiff_t>(step.hidden.size()));
    step.probs = Tensor::zeros(params.output_proj.rows());
    matvec_acc(params.output_proj, cat.span(), step.probs.span());
    softmax_inplace(step.probs.span());
    return step;
}

DecoderState StepResult::advance(int position) const {
    if (position < 1) throw std::invalid_argument("advance: EOS is terminal, positions start at 1");
    DecoderState next;
    next.hidden = hidden;
    next.context = context;
    next.prev_position = position;
    next.t = t;
    return next;
}

TapeModel::TapeModel(Tape& tape, const CsmParams& params, CsmParams& grads)
    : tape_(tape), params_(params) {
    query_embed_ = tape.param(&params.query_embed, &grads.query_embed);
    result_embed_ = tape.param(&params.result_embed, &grads.result_embed);
    enc_fwd_ = register_gru(tape, params.enc_fwd, grads.enc_fwd);
    enc_bwd_ = register_gru(tape, params.enc_bwd, grads.enc_bwd);
    init_proj_ = tape.param(&params.init_proj, &grads.init_proj);
    state_proj_ = tape.param(&params.attention.state_proj, &grads.attention.state_proj);
    memory_proj_ = tape.param(&params.attention.memory_proj, &grads.attention.memory_proj);
    score_vec_ = tape.param(&params.attention.score_vec, &grads.attention.score_vec);
    decoder_ = register_gru(tape, params.decoder, grads.decoder);
    pos_embed_ = tape.param(&params.pos_embed, &grads.pos_embed);
    output_proj_ = tape.param(&params.output_proj, &grads.output_proj);
}

TapeModel::EncodedVars TapeModel::encode_vars(const SerpFeatures& features) {
    const std::size_t n = features.results.size();
    const std::size_t d = static_cast<std::size_t>(params_.config.state_dim);

    std::vector<Tape::Var> inputs;
    inputs.reserve(n + 1);
    inputs.push_back(tape_.sparse_embed(query_embed_, features.query));
    for (const SparseFeature& f : features.results) {
        inputs.push_back(tape_.sparse_embed(result_embed_, f));
    }

    std::vector<Tape::Var> fwd(n + 1), bwd(n + 1);
    Tape::Var h = tape_.zeros(d);
    for (std::size_t i = 0; i <= n; ++i) {
        h = gru_step(tape_, enc_fwd_, h, inputs[i]);
        fwd[i] = h;
    }
    h = tape_.zeros(d);
    for (std::size_t i = n + 1; i-- > 0;) {
        h = gru_step(tape_, enc_bwd_, h, inputs[i]);
        bwd[i] = h;
    }

    EncodedVars enc;
    enc.memory.reserve(n + 1);
    for (std::size_t i = 0; i <= n; ++i) {
        enc.memory.push_back(tape_.concat(fwd[i], bwd[i]));
    }
    enc.init_src = tape_.concat(fwd[n], bwd[0]);
    enc.memory_proj.reserve(n + 1);
    for (Tape::Var m : enc.memory) {
        enc.memory_proj.push_back(tape_.matvec(memory_proj_, m));
    }
    return enc;
}

Tape::Var TapeModel::sequence_nll(const SerpFeatures& features, const ClickSequence& seq) {
    check_positions(seq, params_.config.n_positions);
    const std::size_t dp = static_cast<std::size_t>(params_.config.pos_dim);

    EncodedVars enc = encode_vars(features);

    Tape::Var hidden = tape_.matvec(init_proj_, enc.init_src);
    Tape::Var context = tape_.zeros(tape_.value(enc.memory[0]).size());
    Tape::Var pos_vec = tape_.zeros(dp);

    std::vector<Tape::Var> step_losses;
    step_losses.reserve(seq.size() + 1);
    for (std::size_t t = 0; t <= seq.size(); ++t) {
        // Fresh attention from the current state.
        std::vector<Tape::Var> scores;
        scores.reserve(enc.memory.size());
        Tape::Var s_proj = tape_.matvec(state_proj_, hidden);
        for (std::size_t i = 0; i < enc.memory.size(); ++i) {
            scores.push_back(
                tape_.dot(score_vec_, tape_.tanh(tape_.add(s_proj, enc.memory_proj[i]))));
        }
        Tape::Var weights = tape_.softmax(tape_.stack(scores));
        Tape::Var att_context = tape_.weighted_sum(weights, enc.memory);

        Tape::Var fed = params_.config.feed_fresh_attention ? att_context : context;
        Tape::Var x = tape_.concat(fed, pos_vec);
        hidden = gru_step(tape_, decoder_, hidden, x);
        context = att_context;

        Tape::Var logits = tape_.matvec(output_proj_, tape_.concat(hidden, att_context));
        const std::size_t target =
            t < seq.size() ? static_cast<std::size_t>(seq[t] - 1) : params_.config.eos_index();
        step_losses.push_back(tape_.cross_entropy(logits, target));

        if (t < seq.size()) {
            pos_vec = tape_.embed_row(pos_embed_, static_cast<std::size_t>(seq[t] - 1));
        }
    }
    return tape_.sum(step_losses);
}

double sequence_log_prob(const CsmParams& params, const PatternStats& stats, std::uint64_t query_id,
                         std::span<const std::uint64_t> results, const ClickSequence& seq) {
    Tape tape;
    CsmParams grads = CsmParams::zeros_like(params);
    TapeModel model(tape, params, grads);
    Tape::Var nll = model.sequence_nll(featurize_serp(stats, query_id, results), seq);
    return -tape.value(nll).v[0];
}

double sequence_log_prob(const CsmParams& params, const PatternStats& stats,
                         const QuerySession& session) {
    return sequence_log_prob(params, stats, session.query_id, session.results,
                             click_sequence_of(session));
}

namespace {

struct PreparedSession {
    const SerpFeatures* features;
    ClickSequence seq;
};

}  // namespace

TrainResult train(CsmParams& params, const PatternStats& stats,
                  std::span<const QuerySession> sessions, const TrainConfig& config) {
    if (sessions.empty()) throw std::invalid_argument("train: empty training set");
    if (config.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");

    TrainResult result;

    // Featurization is the same for every session sharing a SERP; cache it.
    std::unordered_map<std::uint64_t, SerpFeatures> feature_cache;
    std::vector<PreparedSession> prepared;
    prepared.reserve(sessions.size());
    for (const QuerySession& s : sessions) {
        const std::uint64_t key = serp_key(s.query_id, s.results);
        auto it = feature_cache.find(key);
        if (it == feature_cache.end()) {
            it = feature_cache.emplace(key, featurize_serp(stats, s.query_id, s.results)).first;
        }
        ClickSequence seq = click_sequence_of(s);
        if (static_cast<int>(seq.size()) > params.config.max_train_clicks) {
            seq.resize(static_cast<std::size_t>(params.config.max_train_clicks));
            result.truncated_sessions += 1;
        }
        prepared.push_back({&it->second, std::move(seq)});
    }

    CsmParams grads = CsmParams::zeros_like(params);
    std::vector<Tensor*> param_list, grad_list;
    params.for_each([&param_list](const std::string&, Tensor& t) { param_list.push_back(&t); });
    grads.for_each([&grad_list](const std::string&, Tensor& t) { grad_list.push_back(&t); });
    std::vector<const Tensor*> grad_clist(grad_list.begin(), grad_list.end());

    AdamConfig adam_config;
    adam_config.lr = config.lr;
    AdamState adam(adam_config, param_list);

    // Pre-training loss over the full set (forward only; grads never read).
    {
        double total = 0.0;
        for (const PreparedSession& p : prepared) {
            Tape tape;
            TapeModel model(tape, params, grads);
            total += tape.value(model.sequence_nll(*p.features, p.seq)).v[0];
        }
        const double mean = total / static_cast<double>(prepared.size());
        if (!std::isfinite(mean)) throw TrainingDiverged("non-finite pre-training loss");
        result.epoch_mean_nll.push_back(mean);
        if (config.on_epoch) config.on_epoch(0, mean);
    }

    std::vector<std::size_t> order(prepared.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(config.seed);

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            const double inv_batch = 1.0 / static_cast<double>(end - start);
            for (Tensor* g : grad_list) g->fill(0.0);
            for (std::size_t k = start; k < end; ++k) {
                const PreparedSession& p = prepared[order[k]];
                Tape tape;
                TapeModel model(tape, params, grads);
                Tape::Var nll = model.sequence_nll(*p.features, p.seq);
                const double loss = tape.value(nll).v[0];
                if (!std::isfinite(loss)) throw TrainingDiverged("non-finite training loss");
                epoch_loss += loss;
                tape.backward(nll, inv_batch);
            }
            clip_global_norm(grad_list, config.clip_norm);
            adam.update(param_list, grad_clist);
        }
        const double mean = epoch_loss / static_cast<double>(prepared.size());
        result.epoch_mean_nll.push_back(mean);
        if (config.on_epoch) config.on_epoch(epoch, mean);
    }
    return result;
}

}  // namespace csm
