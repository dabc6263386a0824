#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace csm {

/// Result-list length of the session-log format. Records with a different
/// number of results are rejected at parse time.
inline constexpr int kSerpSize = 10;

struct ClickEvent {
    std::uint64_t time_passed = 0;
    int position = 0;  // 1..kSerpSize

    bool operator==(const ClickEvent&) const = default;
};

/// One logged SERP impression: a query record plus the clicks attached to it.
struct QuerySession {
    std::uint64_t session_id = 0;
    std::uint64_t time_passed = 0;
    std::uint64_t query_id = 0;
    std::uint64_t region_id = 0;
    std::array<std::uint64_t, kSerpSize> results{};  // distinct document ids, positions 1..10
    std::vector<ClickEvent> clicks;                  // ordered by time_passed, non-decreasing

    bool operator==(const QuerySession&) const = default;
};

/// Time-ordered list of clicked positions. Repeats are preserved; the
/// terminating EOS is implicit.
using ClickSequence = std::vector<int>;

ClickSequence click_sequence_of(const QuerySession& session);

/// True iff positions are strictly increasing (length <= 1 counts as ordered).
/// Repeated positions are not ordered.
bool is_ordered(const ClickSequence& s);

/// Histogram over (click count capped at 10+, ordered/unordered).
struct SessionStats {
    static constexpr int kRows = 11;  // 0..9 clicks, row 10 = "10 or more"
    std::array<std::array<std::uint64_t, 2>, kRows> counts{};  // [row][0]=ordered, [1]=unordered

    std::uint64_t& cell(int clicks, bool ordered) {
        return counts[clicks >= 10 ? 10 : clicks][ordered ? 0 : 1];
    }
    std::uint64_t cell(int clicks, bool ordered) const {
        return counts[clicks >= 10 ? 10 : clicks][ordered ? 0 : 1];
    }
    std::uint64_t total() const;
};

SessionStats session_stats(std::span<const QuerySession> sessions);

class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

struct ParseOptions {
    /// If true, a malformed record throws ParseError. If false, malformed
    /// records are skipped and counted.
    bool fail_fast = false;
};

struct ParseCounters {
    std::uint64_t skipped_records = 0;  // malformed lines (skip-and-count mode)
    std::uint64_t dropped_clicks = 0;   // clicks on URLs absent from the result list
};

struct ParseResult {
    std::vector<QuerySession> sessions;
    ParseCounters counters;
};

/// Parses the tab-separated session-log format:
///   SessionID \t TimePassed \t Q \t QueryID \t RegionID \t URL1 URL2 ... URL10
///   SessionID \t TimePassed \t C \t URLID
/// Clicks attach to the most recent query record of their session.
ParseResult parse_log(std::istream& in, const ParseOptions& opts = {});

/// Canonical serializer; parse_log(write_log(x)) == x for valid session lists.
void write_log(std::ostream& out, std::span<const QuerySession> sessions);

struct SplitResult {
    std::vector<QuerySession> train;
    std::vector<QuerySession> eval;
};

/// train = first floor(fraction*n) sessions; eval = seeded uniform sample
/// without replacement from the remainder, kept in original order.
/// Throws std::invalid_argument if eval_sample_size exceeds the remainder.
SplitResult split_sessions(std::span<const QuerySession> sessions, double train_fraction,
                           std::size_t eval_sample_size, std::uint64_t seed);

}  // namespace csm
