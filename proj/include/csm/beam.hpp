#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "csm/model.hpp"

namespace csm {

struct ScoredSequence {
    ClickSequence sequence;
    double log_prob = 0.0;
};

/// True iff a ranks before b: higher log-probability first, ties broken by
/// shorter sequence, then lexicographically smaller positions. The total
/// order makes beam output, enumeration output and top-K prefixes exactly
/// comparable.
bool sequence_order(const ScoredSequence& a, const ScoredSequence& b);

struct BeamResult {
    std::vector<ScoredSequence> sequences;  // best first
    /// Set when fewer than K sequences were completable within max_len.
    bool truncated = false;
};

/// Best-first extraction of the K most probable click sequences.
///
/// Expands every open prefix by all N+1 successors per round, keeps the
/// beam_size best open prefixes plus a pool of completed sequences, and stops
/// once the K best completed sequences all score at least as high as the best
/// open prefix (no extension can overtake them: every extension strictly
/// lowers the log-probability). With beam_size >= K the result is exactly the
/// top K of the model distribution over sequences of length <= max_len.
BeamResult beam_search(const CsmParams& params, const EncodedSerp& enc, std::size_t k,
                       std::size_t beam_size, std::size_t max_len);
BeamResult beam_search(const CsmParams& params, const PatternStats& stats, std::uint64_t query_id,
                       std::span<const std::uint64_t> results, std::size_t k, std::size_t beam_size,
                       std::size_t max_len);

struct Enumeration {
    std::vector<ScoredSequence> sequences;  // every sequence of length <= max_len, best first
    /// Probability mass of prefixes longer than max_len; sequences' mass plus
    /// this equals 1 up to rounding.
    double open_prefix_mass = 0.0;
};

/// Scores every sequence of length <= max_len. Feasible only for small
/// (N+1)^max_len; throws when that exceeds `budget`.
Enumeration exhaustive_enumerate(const CsmParams& params, const EncodedSerp& enc,
                                 std::size_t max_len, std::size_t budget = 1000000);
Enumeration exhaustive_enumerate(const CsmParams& params, const PatternStats& stats,
                                 std::uint64_t query_id, std::span<const std::uint64_t> results,
                                 std::size_t max_len, std::size_t budget = 1000000);

}  // namespace csm
