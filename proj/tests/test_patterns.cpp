#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <sstream>

#include "csm/patterns.hpp"
#include "csm/rng.hpp"
#include "csm/simulator.hpp"
#include "test_support.hpp"

using namespace csm;
using csm::testing::make_session;

TEST_CASE("click_pattern_of is the set of clicked positions") {
    CHECK(click_pattern_of({1, 3}, 10) == 0b101);
    CHECK(click_pattern_of({3, 1, 3}, 10) == 0b101);
    CHECK(click_pattern_of({}, 10) == 0);
    CHECK_THROWS_AS(click_pattern_of({11}, 10), std::out_of_range);
}

TEST_CASE("count_patterns: one session increments one query cell") {
    QuerySession s = make_session(1, 5, {11, 12, 13, 14, 15, 16, 17, 18, 19, 20}, {1, 3});
    PatternStats stats = count_patterns(std::vector<QuerySession>{s});

    SparseFeature q = stats.query_feature(5);
    CHECK(q.dimension == 1024);
    REQUIRE(q.entries.size() == 1);
    CHECK(q.entries[0].first == 0b101);
    CHECK(q.entries[0].second == 1.0);
}

TEST_CASE("featurize_query: unknown query and multi-pattern queries") {
    std::vector<QuerySession> sessions;
    sessions.push_back(make_session(1, 7, {1, 2, 3}, {}));
    sessions.push_back(make_session(2, 7, {1, 2, 3}, {1}));
    PatternStats stats = count_patterns(sessions);

    CHECK(stats.query_feature(42).entries.empty());

    SparseFeature q = stats.query_feature(7);
    REQUIRE(q.entries.size() == 2);
    CHECK(q.entries[0].first == 0);
    CHECK(q.entries[0].second == 1.0);
    CHECK(q.entries[1].first == 1);
    CHECK(q.entries[1].second == 1.0);
}

TEST_CASE("featurize_result: offsets follow the two-part layout") {
    // doc 13 shown at position 3 under query 100, clicks at {1,3} -> pattern 0b101.
    QuerySession s = make_session(1, 100, {11, 12, 13, 14, 15, 16, 17, 18, 19, 20}, {1, 3});
    PatternStats stats = count_patterns(std::vector<QuerySession>{s});

    SparseFeature f = stats.result_feature(100, 13);
    CHECK(f.dimension == 20480);
    REQUIRE(f.entries.size() == 2);
    CHECK(f.entries[0].first == 2 * 1024 + 5);
    CHECK(f.entries[0].second == 1.0);
    CHECK(f.entries[1].first == 10240 + 2 * 1024 + 5);
    CHECK(f.entries[1].second == 1.0);

    CHECK(stats.result_feature(100, 999).entries.empty());

    // Same doc under a different query: part 1 populated, part 2 empty.
    SparseFeature other = stats.result_feature(555, 13);
    REQUIRE(other.entries.size() == 1);
    CHECK(other.entries[0].first == 2 * 1024 + 5);
}

TEST_CASE("two identical sessions double every touched cell") {
    QuerySession s = make_session(1, 5, {11, 12, 13, 14, 15, 16, 17, 18, 19, 20}, {2});
    PatternStats stats = count_patterns(std::vector<QuerySession>{s, s});
    SparseFeature q = stats.query_feature(5);
    REQUIRE(q.entries.size() == 1);
    CHECK(q.entries[0].second == 2.0);
    SparseFeature f = stats.result_feature(5, 11);
    for (const auto& [idx, count] : f.entries) CHECK(count == 2.0);
}

TEST_CASE("query pattern counts sum to the number of sessions with that query") {
    SimulatorConfig config;
    config.attractiveness = {0.5, 0.4, 0.3, 0.2, 0.2, 0.2, 0.1, 0.1, 0.1, 0.1};
    config.continuation = 0.5;
    config.revisit = 0.1;
    config.seed = 17;
    std::vector<QuerySession> sessions = simulate_log(config, 1000, 7, 40);
    PatternStats stats = count_patterns(sessions);

    std::map<std::uint64_t, std::size_t> per_query;
    for (const QuerySession& s : sessions) per_query[s.query_id] += 1;
    for (const auto& [query, expected] : per_query) {
        double total = 0.0;
        for (const auto& [idx, count] : stats.query_feature(query).entries) total += count;
        CHECK(total == static_cast<double>(expected));
    }
}

TEST_CASE("counting is order-independent") {
    SimulatorConfig config;
    config.attractiveness = {0.5, 0.4, 0.3, 0.2, 0.2, 0.2, 0.1, 0.1, 0.1, 0.1};
    config.continuation = 0.5;
    config.seed = 23;
    std::vector<QuerySession> sessions = simulate_log(config, 300, 5, 30);
    PatternStats forward = count_patterns(sessions);
    std::reverse(sessions.begin(), sessions.end());
    PatternStats reversed = count_patterns(sessions);
    CHECK(forward == reversed);
    CHECK(forward.fingerprint() == reversed.fingerprint());
}

TEST_CASE("part-2 support is the query-restricted subset of part 1") {
    SimulatorConfig config;
    config.attractiveness = {0.5, 0.4, 0.3, 0.2, 0.2, 0.2, 0.1, 0.1, 0.1, 0.1};
    config.continuation = 0.6;
    config.seed = 29;
    std::vector<QuerySession> sessions = simulate_log(config, 500, 6, 30);
    PatternStats stats = count_patterns(sessions);

    const QuerySession& probe = sessions[0];
    SparseFeature f = stats.result_feature(probe.query_id, probe.results[0]);
    const std::uint32_t half = 10 * 1024;
    std::vector<std::uint32_t> part1, part2_shifted;
    for (const auto& [idx, count] : f.entries) {
        if (idx < half) part1.push_back(idx);
        else part2_shifted.push_back(idx - half);
    }
    CHECK(!part2_shifted.empty());
    for (std::uint32_t idx : part2_shifted) {
        CHECK(std::binary_search(part1.begin(), part1.end(), idx));
    }
}

TEST_CASE("embed is linear and rejects dimension mismatches") {
    Rng rng(5);
    Tensor w = Tensor::zeros(16, 4);
    for (double& x : w.v) x = rng.uniform(-1.0, 1.0);

    SparseFeature zero{16, {}};
    CHECK(embed(w, zero).v == std::vector<double>(4, 0.0));

    SparseFeature unit{16, {{3, 1.0}}};
    Tensor col = embed(w, unit);
    for (std::size_t j = 0; j < 4; ++j) CHECK(col.v[j] == w.at(3, j));

    SparseFeature f1{16, {{1, 2.0}, {7, 1.0}}};
    SparseFeature f2{16, {{1, 1.0}, {9, 3.0}}};
    SparseFeature sum{16, {{1, 3.0}, {7, 1.0}, {9, 3.0}}};
    Tensor lhs = embed(w, sum);
    Tensor a = embed(w, f1), b = embed(w, f2);
    for (std::size_t j = 0; j < 4; ++j) {
        CHECK(lhs.v[j] == doctest::Approx(a.v[j] + b.v[j]).epsilon(1e-9));
    }

    SparseFeature wrong{8, {}};
    CHECK_THROWS_AS(embed(w, wrong), std::invalid_argument);
}

TEST_CASE("pattern stats round-trip through the binary format") {
    SimulatorConfig config;
    config.attractiveness = {0.5, 0.4, 0.3, 0.2, 0.2, 0.2, 0.1, 0.1, 0.1, 0.1};
    config.continuation = 0.5;
    config.revisit = 0.15;
    config.seed = 31;
    PatternStats stats = count_patterns(simulate_log(config, 400, 6, 30));

    std::stringstream buf;
    stats.save(buf);
    PatternStats loaded = PatternStats::load(buf);
    CHECK(loaded == stats);
    CHECK(loaded.fingerprint() == stats.fingerprint());

    std::istringstream garbage("not a stats file");
    CHECK_THROWS(PatternStats::load(garbage));
}

TEST_CASE("empty training set featurizes to zero vectors") {
    PatternStats stats(10);
    CHECK(stats.query_feature(1).entries.empty());
    CHECK(stats.result_feature(1, 2).entries.empty());
}
