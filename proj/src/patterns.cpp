#include "csm/patterns.hpp"

#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace csm {

namespace {

constexpr char kMagic[8] = {'C', 'S', 'M', 'P', 'A', 'T', '0', '1'};

void put_u64(std::ostream& out, std::uint64_t x) {
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((x >> (8 * i)) & 0xff);
    out.write(buf, 8);
}

std::uint64_t get_u64(std::istream& in) {
    char buf[8];
    in.read(buf, 8);
    if (!in) throw std::runtime_error("truncated pattern-stats file");
    std::uint64_t x = 0;
    for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
    return x;
}

std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

void write_count_map(std::ostream& out, const std::map<ClickPattern, std::uint64_t>& counts) {
    put_u64(out, counts.size());
    for (const auto& [pattern, count] : counts) {
        put_u64(out, pattern);
        put_u64(out, count);
    }
}

std::map<ClickPattern, std::uint64_t> read_count_map(std::istream& in) {
    std::map<ClickPattern, std::uint64_t> counts;
    std::uint64_t n = get_u64(in);
    for (std::uint64_t i = 0; i < n; ++i) {
        std::uint64_t pattern = get_u64(in);
        std::uint64_t count = get_u64(in);
        counts.emplace(static_cast<ClickPattern>(pattern), count);
    }
    return counts;
}

}  // namespace

ClickPattern click_pattern_of(const ClickSequence& seq, int n_positions) {
    ClickPattern pattern = 0;
    for (int p : seq) {
        if (p < 1 || p > n_positions) throw std::out_of_range("click position outside [1, N]");
        pattern |= ClickPattern{1} << (p - 1);
    }
    return pattern;
}

PatternStats::PatternStats(int n_positions) : n_(n_positions) {
    if (n_positions < 1 || n_positions > 20) throw std::invalid_argument("n_positions out of range");
}

void PatternStats::add_session(const QuerySession& session) {
    const ClickPattern pattern = click_pattern_of(click_sequence_of(session), n_);
    query_counts_[session.query_id][pattern] += 1;
    auto& per_query = query_result_pos_counts_[session.query_id];
    for (int p = 1; p <= n_ && p <= kSerpSize; ++p) {
        const std::uint64_t key = doc_pos_key(session.results[p - 1], p);
        result_pos_counts_[key][pattern] += 1;
        per_query[key][pattern] += 1;
    }
}

SparseFeature PatternStats::query_feature(std::uint64_t query_id) const {
    SparseFeature f;
    f.dimension = query_feature_dim();
    auto it = query_counts_.find(query_id);
    if (it == query_counts_.end()) return f;
    f.entries.reserve(it->second.size());
    for (const auto& [pattern, count] : it->second) {
        f.entries.emplace_back(pattern, static_cast<double>(count));
    }
    return f;
}

SparseFeature PatternStats::result_feature(std::uint64_t query_id, std::uint64_t doc_id) const {
    SparseFeature f;
    f.dimension = result_feature_dim();
    const std::uint32_t block = std::uint32_t{1} << n_;
    for (int p = 1; p <= n_; ++p) {
        auto it = result_pos_counts_.find(doc_pos_key(doc_id, p));
        if (it == result_pos_counts_.end()) continue;
        const std::uint32_t base = static_cast<std::uint32_t>(p - 1) * block;
        for (const auto& [pattern, count] : it->second) {
            f.entries.emplace_back(base + pattern, static_cast<double>(count));
        }
    }
    auto qit = query_result_pos_counts_.find(query_id);
    if (qit != query_result_pos_counts_.end()) {
        const std::uint32_t half = static_cast<std::uint32_t>(n_) * block;
        for (int p = 1; p <= n_; ++p) {
            auto it = qit->second.find(doc_pos_key(doc_id, p));
            if (it == qit->second.end()) continue;
            const std::uint32_t base = half + static_cast<std::uint32_t>(p - 1) * block;
            for (const auto& [pattern, count] : it->second) {
                f.entries.emplace_back(base + pattern, static_cast<double>(count));
            }
        }
    }
    return f;
}

void PatternStats::save(std::ostream& out) const {
    out.write(kMagic, sizeof(kMagic));
    put_u64(out, static_cast<std::uint64_t>(n_));
    put_u64(out, query_counts_.size());
    for (const auto& [query, counts] : query_counts_) {
        put_u64(out, query);
        write_count_map(out, counts);
    }
    put_u64(out, result_pos_counts_.size());
    for (const auto& [key, counts] : result_pos_counts_) {
        put_u64(out, key);
        write_count_map(out, counts);
    }
    put_u64(out, query_result_pos_counts_.size());
    for (const auto& [query, inner] : query_result_pos_counts_) {
        put_u64(out, query);
        put_u64(out, inner.size());
        for (const auto& [key, counts] : inner) {
            put_u64(out, key);
            write_count_map(out, counts);
        }
    }
}

PatternStats PatternStats::load(std::istream& in) {
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::string_view(magic, 8) != std::string_view(kMagic, 8)) {
        throw std::runtime_error("not a pattern-stats file (bad magic)");
    }
    PatternStats stats(static_cast<int>(get_u64(in)));
    std::uint64_t nq = get_u64(in);
    for (std::uint64_t i = 0; i < nq; ++i) {
        std::uint64_t query = get_u64(in);
        stats.query_counts_.emplace(query, read_count_map(in));
    }
    std::uint64_t nr = get_u64(in);
    for (std::uint64_t i = 0; i < nr; ++i) {
        std::uint64_t key = get_u64(in);
        stats.result_pos_counts_.emplace(key, read_count_map(in));
    }
    std::uint64_t nqr = get_u64(in);
    for (std::uint64_t i = 0; i < nqr; ++i) {
        std::uint64_t query = get_u64(in);
        std::uint64_t inner_size = get_u64(in);
        auto& inner = stats.query_result_pos_counts_[query];
        for (std::uint64_t j = 0; j < inner_size; ++j) {
            std::uint64_t key = get_u64(in);
            inner.emplace(key, read_count_map(in));
        }
    }
    return stats;
}

std::uint64_t PatternStats::fingerprint() const {
    std::ostringstream buf;
    save(buf);
    return fnv1a(buf.str());
}

PatternStats count_patterns(std::span<const QuerySession> sessions, int n_positions) {
    PatternStats stats(n_positions);
    for (const QuerySession& s : sessions) stats.add_session(s);
    return stats;
}

Tensor embed(const Tensor& weights, const SparseFeature& f) {
    if (weights.rows() != f.dimension) {
        throw std::invalid_argument("embedding width does not match feature dimension");
    }
    Tensor out = Tensor::zeros(weights.cols());
    for (const auto& [index, count] : f.entries) {
        axpy(count, weights.row(index), out.span());
    }
    return out;
}

}  // namespace csm
