#include "csm/beam.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace csm {

bool sequence_order(const ScoredSequence& a, const ScoredSequence& b) {
    if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
    if (a.sequence.size() != b.sequence.size()) return a.sequence.size() < b.sequence.size();
    return a.sequence < b.sequence;
}

namespace {

struct OpenEntry {
    ClickSequence prefix;
    double log_prob = 0.0;
    DecoderState state;
};

/// Keeps `pool` sorted (best first) and capped at k.
void pool_insert(std::vector<ScoredSequence>& pool, std::size_t k, ScoredSequence seq) {
    auto it = std::lower_bound(pool.begin(), pool.end(), seq, sequence_order);
    pool.insert(it, std::move(seq));
    if (pool.size() > k) pool.pop_back();
}

}  // namespace

BeamResult beam_search(const CsmParams& params, const EncodedSerp& enc, std::size_t k,
                       std::size_t beam_size, std::size_t max_len) {
    if (k < 1 || beam_size < 1 || max_len < 1) {
        throw std::invalid_argument("beam_search: k, beam_size and max_len must be >= 1");
    }
    const int n = params.config.n_positions;
    const std::size_t eos = params.config.eos_index();

    std::vector<ScoredSequence> completed;
    completed.reserve(k + 1);
    std::vector<OpenEntry> open;
    open.push_back({{}, 0.0, decoder_init(params, enc)});

    struct Candidate {
        std::size_t parent;
        int position;
        double log_prob;
    };
    std::vector<StepResult> steps;
    std::vector<Candidate> candidates;

    bool exhausted = false;
    while (!open.empty()) {
        steps.clear();
        steps.reserve(open.size());
        candidates.clear();

        for (std::size_t i = 0; i < open.size(); ++i) {
            const OpenEntry& entry = open[i];
            steps.push_back(decoder_step(params, entry.state, enc));
            const StepResult& step = steps.back();
            const double p_eos = step.probs.v[eos];
            if (p_eos > 0.0) {
                pool_insert(completed, k, {entry.prefix, entry.log_prob + std::log(p_eos)});
            }
            if (entry.prefix.size() < max_len) {
                for (int pos = 1; pos <= n; ++pos) {
                    const double p = step.probs.v[pos - 1];
                    if (p > 0.0) candidates.push_back({i, pos, entry.log_prob + std::log(p)});
                }
            }
        }

        // All candidates of a round share the same prefix length, so the
        // tie-break reduces to the lexicographic order of their sequences.
        auto candidate_order = [&open](const Candidate& a, const Candidate& b) {
            if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
            const ClickSequence& pa = open[a.parent].prefix;
            const ClickSequence& pb = open[b.parent].prefix;
            for (std::size_t i = 0; i < pa.size(); ++i) {
                if (pa[i] != pb[i]) return pa[i] < pb[i];
            }
            return a.position < b.position;
        };
        if (candidates.size() > beam_size) {
            std::nth_element(candidates.begin(),
                             candidates.begin() + static_cast<std::ptrdiff_t>(beam_size),
                             candidates.end(), candidate_order);
            candidates.resize(beam_size);
        }
        std::sort(candidates.begin(), candidates.end(), candidate_order);

        std::vector<OpenEntry> next;
        next.reserve(candidates.size());
        for (const Candidate& c : candidates) {
            OpenEntry child;
            child.prefix = open[c.parent].prefix;
            child.prefix.push_back(c.position);
            child.log_prob = c.log_prob;
            child.state = steps[c.parent].advance(c.position);
            next.push_back(std::move(child));
        }
        open = std::move(next);

        if (open.empty()) {
            exhausted = true;
            break;
        }
        if (completed.size() >= k && completed[k - 1].log_prob >= open.front().log_prob) {
            break;
        }
    }

    BeamResult result;
    result.truncated = exhausted && completed.size() < k;
    result.sequences = std::move(completed);
    if (result.sequences.size() > k) result.sequences.resize(k);
    return result;
}

BeamResult beam_search(const CsmParams& params, const PatternStats& stats, std::uint64_t query_id,
                       std::span<const std::uint64_t> results, std::size_t k, std::size_t beam_size,
                       std::size_t max_len) {
    return beam_search(params, encode(params, stats, query_id, results), k, beam_size, max_len);
}

namespace {

void enumerate_rec(const CsmParams& params, const EncodedSerp& enc, const DecoderState& state,
                   ClickSequence& prefix, double log_prob, std::size_t max_len,
                   Enumeration& out) {
    StepResult step = decoder_step(params, state, enc);
    const double p_eos = step.probs.v[params.config.eos_index()];
    if (p_eos > 0.0) {
        out.sequences.push_back({prefix, log_prob + std::log(p_eos)});
    }
    if (prefix.size() >= max_len) {
        out.open_prefix_mass += std::exp(log_prob) * (1.0 - p_eos);
        return;
    }
    for (int pos = 1; pos <= params.config.n_positions; ++pos) {
        const double p = step.probs.v[pos - 1];
        if (p <= 0.0) continue;
        prefix.push_back(pos);
        enumerate_rec(params, enc, step.advance(pos), prefix, log_prob + std::log(p), max_len, out);
        prefix.pop_back();
    }
}

}  // namespace

Enumeration exhaustive_enumerate(const CsmParams& params, const EncodedSerp& enc,
                                 std::size_t max_len, std::size_t budget) {
    // (N+1)^max_len bounds the search tree; refuse clearly infeasible calls.
    double tree = 1.0;
    for (std::size_t i = 0; i < max_len; ++i) {
        tree *= static_cast<double>(params.config.n_positions + 1);
        if (tree > static_cast<double>(budget)) {
            throw std::invalid_argument("exhaustive_enumerate: (N+1)^max_len exceeds budget");
        }
    }

    Enumeration out;
    ClickSequence prefix;
    enumerate_rec(params, enc, decoder_init(params, enc), prefix, 0.0, max_len, out);
    std::sort(out.sequences.begin(), out.sequences.end(), sequence_order);
    return out;
}

Enumeration exhaustive_enumerate(const CsmParams& params, const PatternStats& stats,
                                 std::uint64_t query_id, std::span<const std::uint64_t> results,
                                 std::size_t max_len, std::size_t budget) {
    return exhaustive_enumerate(params, encode(params, stats, query_id, results), max_len, budget);
}

}  // namespace csm
