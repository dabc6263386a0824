#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "csm/session.hpp"
#include "csm/tensor.hpp"

namespace csm {

/// Set of clicked positions in a session as a bitmask: bit p-1 is set iff
/// position p was clicked at least once.
using ClickPattern = std::uint32_t;

ClickPattern click_pattern_of(const ClickSequence& seq, int n_positions);

/// Sparse count vector; indices strictly increasing, counts > 0.
struct SparseFeature {
    std::size_t dimension = 0;
    std::vector<std::pair<std::uint32_t, double>> entries;
};

/// Click-pattern counts keyed by query, by (doc, position) and by
/// (query, doc, position). Built on the training split only; immutable after
/// construction, so concurrent featurization is safe.
class PatternStats {
public:
    explicit PatternStats(int n_positions = kSerpSize);

    void add_session(const QuerySession& session);

    int n_positions() const { return n_; }
    std::size_t query_feature_dim() const { return std::size_t{1} << n_; }
    std::size_t result_feature_dim() const { return 2 * static_cast<std::size_t>(n_) * (std::size_t{1} << n_); }

    /// 2^N-dimensional pattern counts of the query; unknown query -> empty.
    SparseFeature query_feature(std::uint64_t query_id) const;

    /// 2*N*2^N-dimensional feature of a result. First half: pattern counts per
    /// position the doc was shown at, over all queries. Second half: the same
    /// restricted to sessions of this query. Offsets: (p-1)*2^N + pattern and
    /// N*2^N + (p-1)*2^N + pattern.
    SparseFeature result_feature(std::uint64_t query_id, std::uint64_t doc_id) const;

    void save(std::ostream& out) const;
    static PatternStats load(std::istream& in);

    /// Stable hash of the full contents; used to detect checkpoint/stats
    /// mismatches.
    std::uint64_t fingerprint() const;

    bool operator==(const PatternStats&) const = default;

private:
    using CountMap = std::map<ClickPattern, std::uint64_t>;

    static std::uint64_t doc_pos_key(std::uint64_t doc, int pos) { return (doc << 4) | static_cast<std::uint64_t>(pos); }

    int n_;
    std::map<std::uint64_t, CountMap> query_counts_;                       // query -> pattern counts
    std::map<std::uint64_t, CountMap> result_pos_counts_;                  // (doc,pos) -> pattern counts
    std::map<std::uint64_t, std::map<std::uint64_t, CountMap>> query_result_pos_counts_;  // query -> (doc,pos) -> counts
};

/// Aggregates pattern counts over the training sessions. Order-independent.
PatternStats count_patterns(std::span<const QuerySession> sessions, int n_positions = kSerpSize);

/// x = W f by sparse accumulation. Weights are stored transposed, (dim, d),
/// so each feature index selects a contiguous row. Throws on dimension
/// mismatch.
Tensor embed(const Tensor& weights, const SparseFeature& f);

}  // namespace csm
