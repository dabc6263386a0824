#include "csm/session.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <unordered_set>

#include "csm/rng.hpp"

namespace csm {

ClickSequence click_sequence_of(const QuerySession& session) {
    ClickSequence seq;
    seq.reserve(session.clicks.size());
    for (const ClickEvent& c : session.clicks) seq.push_back(c.position);
    return seq;
}

bool is_ordered(const ClickSequence& s) {
    for (std::size_t i = 1; i < s.size(); ++i) {
        if (s[i] <= s[i - 1]) return false;
    }
    return true;
}

std::uint64_t SessionStats::total() const {
    std::uint64_t n = 0;
    for (const auto& row : counts) n += row[0] + row[1];
    return n;
}

SessionStats session_stats(std::span<const QuerySession> sessions) {
    SessionStats stats;
    for (const QuerySession& s : sessions) {
        ClickSequence seq = click_sequence_of(s);
        stats.cell(static_cast<int>(seq.size()), is_ordered(seq)) += 1;
    }
    return stats;
}

namespace {

bool parse_u64(std::string_view sv, std::uint64_t& out) {
    if (sv.empty()) return false;
    auto [ptr, ec] = std::from_chars(sv.data(), sv.data() + sv.size(), out);
    return ec == std::errc{} && ptr == sv.data() + sv.size();
}

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return fields;
}

}  // namespace

ParseResult parse_log(std::istream& in, const ParseOptions& opts) {
    ParseResult result;
    std::string line;
    std::size_t line_no = 0;

    // Index of the most recent query record per session id; a click record is
    // valid only while its session is the one currently being read.
    bool have_current = false;
    std::uint64_t current_session = 0;
    std::size_t current_index = 0;

    auto record_error = [&](const std::string& what) {
        if (opts.fail_fast) throw ParseError(line_no, what);
        result.counters.skipped_records += 1;
    };

    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;

        std::vector<std::string_view> fields = split(line, '\t');
        std::uint64_t session_id = 0, time_passed = 0;
        if (fields.size() < 4 || !parse_u64(fields[0], session_id) || !parse_u64(fields[1], time_passed)) {
            record_error("malformed record header");
            continue;
        }

        if (fields[2] == "Q") {
            if (fields.size() != 6) {
                record_error("query record must have 6 tab-separated fields");
                continue;
            }
            QuerySession s;
            s.session_id = session_id;
            s.time_passed = time_passed;
            if (!parse_u64(fields[3], s.query_id) || !parse_u64(fields[4], s.region_id)) {
                record_error("bad query/region id");
                continue;
            }
            std::vector<std::string_view> urls = split(fields[5], ' ');
            if (urls.size() != kSerpSize) {
                record_error("query record must list exactly 10 URLs");
                continue;
            }
            bool ok = true;
            std::unordered_set<std::uint64_t> seen;
            for (int i = 0; i < kSerpSize; ++i) {
                if (!parse_u64(urls[i], s.results[i]) || !seen.insert(s.results[i]).second) {
                    ok = false;
                    break;
                }
            }
            if (!ok) {
                record_error("URL list must contain 10 distinct integer ids");
                continue;
            }
            result.sessions.push_back(std::move(s));
            have_current = true;
            current_session = session_id;
            current_index = result.sessions.size() - 1;
        } else if (fields[2] == "C") {
            if (fields.size() != 4) {
                record_error("click record must have 4 tab-separated fields");
                continue;
            }
            if (!have_current || session_id != current_session) {
                record_error("click record without a preceding query record in its session");
                continue;
            }
            std::uint64_t url = 0;
            if (!parse_u64(fields[3], url)) {
                record_error("bad URL id");
                continue;
            }
            QuerySession& s = result.sessions[current_index];
            if (!s.clicks.empty() && time_passed < s.clicks.back().time_passed) {
                record_error("click records of a session must be time-ordered");
                continue;
            }
            int position = 0;
            for (int i = 0; i < kSerpSize; ++i) {
                if (s.results[i] == url) {
                    position = i + 1;
                    break;
                }
            }
            if (position == 0) {
                result.counters.dropped_clicks += 1;
                continue;
            }
            s.clicks.push_back({time_passed, position});
        } else {
            record_error("unknown record type");
        }
    }
    return result;
}

void write_log(std::ostream& out, std::span<const QuerySession> sessions) {
    for (const QuerySession& s : sessions) {
        out << s.session_id << '\t' << s.time_passed << '\t' << 'Q' << '\t' << s.query_id << '\t'
            << s.region_id << '\t';
        for (int i = 0; i < kSerpSize; ++i) {
            if (i) out << ' ';
            out << s.results[i];
        }
        out << '\n';
        for (const ClickEvent& c : s.clicks) {
            out << s.session_id << '\t' << c.time_passed << '\t' << 'C' << '\t'
                << s.results[c.position - 1] << '\n';
        }
    }
}

SplitResult split_sessions(std::span<const QuerySession> sessions, double train_fraction,
                           std::size_t eval_sample_size, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw std::invalid_argument("train_fraction must be in (0, 1)");
    }
    const std::size_t n = sessions.size();
    const std::size_t n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n)));
    const std::size_t n_rest = n - n_train;
    if (eval_sample_size > n_rest) {
        throw std::invalid_argument("eval_sample_size exceeds the held-out remainder");
    }

    SplitResult out;
    out.train.assign(sessions.begin(), sessions.begin() + static_cast<std::ptrdiff_t>(n_train));

    std::vector<std::size_t> rest(n_rest);
    for (std::size_t i = 0; i < n_rest; ++i) rest[i] = n_train + i;
    Rng rng(seed);
    // Partial Fisher-Yates: the first eval_sample_size slots become the sample.
    for (std::size_t i = 0; i < eval_sample_size; ++i) {
        std::size_t j = i + rng.uniform_below(n_rest - i);
        std::swap(rest[i], rest[j]);
    }
    rest.resize(eval_sample_size);
    std::sort(rest.begin(), rest.end());
    out.eval.reserve(eval_sample_size);
    for (std::size_t idx : rest) out.eval.push_back(sessions[idx]);
    return out;
}

}  // namespace csm
