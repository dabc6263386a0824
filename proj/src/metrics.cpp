#include "csm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace csm {

namespace {

constexpr double kProbEps = 1e-10;

double clamp_prob(double p) { return std::min(1.0 - kProbEps, std::max(kProbEps, p)); }

}  // namespace

std::size_t observed_rank(const EvalRecord& record) {
    for (std::size_t i = 0; i < record.top_k.size(); ++i) {
        if (record.top_k[i].sequence == record.observed) return i + 1;
    }
    return 0;
}

double recall_at_k(std::span<const EvalRecord> records, std::size_t k) {
    if (records.empty()) return 0.0;
    std::size_t hits = 0;
    for (const EvalRecord& r : records) {
        const std::size_t rank = observed_rank(r);
        if (rank != 0 && rank <= k) hits += 1;
    }
    return static_cast<double>(hits) / static_cast<double>(records.size());
}

double topk_mass(const EvalRecord& record, std::size_t k) {
    double mass = 0.0;
    const std::size_t limit = std::min(k, record.top_k.size());
    for (std::size_t i = 0; i < limit; ++i) mass += std::exp(record.top_k[i].log_prob);
    return mass;
}

double prob_clicks_le(const EvalRecord& record, int l) {
    double p = 0.0;
    for (const ScoredSequence& s : record.top_k) {
        if (static_cast<int>(s.sequence.size()) <= l) p += std::exp(s.log_prob);
    }
    return p;
}

double prob_nonconsecutive(const EvalRecord& record) {
    double p = 0.0;
    for (const ScoredSequence& s : record.top_k) {
        if (!is_ordered(s.sequence)) p += std::exp(s.log_prob);
    }
    return p;
}

std::vector<double> click_prob_positions(const EvalRecord& record, int n_positions) {
    std::vector<double> probs(static_cast<std::size_t>(n_positions), 0.0);
    for (const ScoredSequence& s : record.top_k) {
        const double p = std::exp(s.log_prob);
        std::vector<bool> seen(static_cast<std::size_t>(n_positions), false);
        for (int pos : s.sequence) {
            if (pos >= 1 && pos <= n_positions && !seen[pos - 1]) {
                seen[pos - 1] = true;
                probs[pos - 1] += p;
            }
        }
    }
    return probs;
}

double binary_perplexity(std::span<const BinaryPrediction> predictions) {
    if (predictions.empty()) throw std::invalid_argument("binary_perplexity: empty input");
    double log2_sum = 0.0;
    for (const BinaryPrediction& bp : predictions) {
        const double p = clamp_prob(bp.p);
        log2_sum += bp.label ? std::log2(p) : std::log2(1.0 - p);
    }
    return std::exp2(-log2_sum / static_cast<double>(predictions.size()));
}

ClickPerplexity click_perplexity(const std::vector<std::vector<BinaryPrediction>>& per_position) {
    if (per_position.empty()) throw std::invalid_argument("click_perplexity: empty input");
    ClickPerplexity out;
    out.per_position.reserve(per_position.size());
    double total = 0.0;
    for (const auto& preds : per_position) {
        const double ppl = binary_perplexity(preds);
        out.per_position.push_back(ppl);
        total += ppl;
    }
    out.mean = total / static_cast<double>(per_position.size());
    return out;
}

double auc(std::span<const BinaryPrediction> predictions) {
    std::size_t n_pos = 0, n_neg = 0;
    for (const BinaryPrediction& bp : predictions) (bp.label ? n_pos : n_neg) += 1;
    if (n_pos == 0 || n_neg == 0) {
        throw std::invalid_argument("auc: needs at least one positive and one negative label");
    }

    std::vector<std::size_t> idx(predictions.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&predictions](std::size_t a, std::size_t b) { return predictions[a].p < predictions[b].p; });

    // Rank sum of positives with average ranks over tied scores.
    double rank_sum = 0.0;
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        while (j < idx.size() && predictions[idx[j]].p == predictions[idx[i]].p) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
        for (std::size_t t = i; t < j; ++t) {
            if (predictions[idx[t]].label) rank_sum += avg_rank;
        }
        i = j;
    }
    const double u = rank_sum - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

NaiveBaselines naive_baselines(std::span<const QuerySession> train_sessions) {
    if (train_sessions.empty()) throw std::invalid_argument("naive_baselines: empty training set");
    NaiveBaselines out;
    std::array<std::uint64_t, 6> le_counts{};
    std::uint64_t nonconsecutive = 0;
    for (const QuerySession& s : train_sessions) {
        const ClickSequence seq = click_sequence_of(s);
        for (int l = 0; l < 6; ++l) {
            if (static_cast<int>(seq.size()) <= l) le_counts[l] += 1;
        }
        if (!is_ordered(seq)) nonconsecutive += 1;
    }
    const double n = static_cast<double>(train_sessions.size());
    for (int l = 0; l < 6; ++l) out.p_clicks_le[l] = static_cast<double>(le_counts[l]) / n;
    out.p_nonconsecutive = static_cast<double>(nonconsecutive) / n;
    return out;
}

}  // namespace csm
