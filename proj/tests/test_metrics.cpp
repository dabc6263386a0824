#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "csm/beam.hpp"
#include "csm/metrics.hpp"
#include "csm/rng.hpp"
#include "csm/simulator.hpp"
#include "test_support.hpp"

using namespace csm;
using csm::testing::make_session;

namespace {

EvalRecord record_of(ClickSequence observed,
                     std::vector<std::pair<ClickSequence, double>> topk_probs) {
    EvalRecord r;
    r.observed = std::move(observed);
    for (auto& [seq, p] : topk_probs) r.top_k.push_back({seq, std::log(p)});
    return r;
}

/// O(n^2) pairwise AUC for cross-checking the rank-based implementation.
double auc_pairwise(std::span<const BinaryPrediction> preds) {
    double wins = 0.0;
    std::size_t pairs = 0;
    for (const BinaryPrediction& pos : preds) {
        if (!pos.label) continue;
        for (const BinaryPrediction& neg : preds) {
            if (neg.label) continue;
            pairs += 1;
            if (pos.p > neg.p) wins += 1.0;
            else if (pos.p == neg.p) wins += 0.5;
        }
    }
    return wins / static_cast<double>(pairs);
}

}  // namespace

TEST_CASE("recall_at_k counts membership in the first K entries") {
    std::vector<EvalRecord> records;
    // observed ranks 1, 2 and 5
    records.push_back(record_of({1}, {{{1}, 0.5}, {{}, 0.3}, {{2}, 0.1}, {{3}, 0.05}, {{1, 2}, 0.02}}));
    records.push_back(record_of({}, {{{1}, 0.5}, {{}, 0.3}, {{2}, 0.1}, {{3}, 0.05}, {{1, 2}, 0.02}}));
    records.push_back(record_of({1, 2}, {{{1}, 0.5}, {{}, 0.3}, {{2}, 0.1}, {{3}, 0.05}, {{1, 2}, 0.02}}));

    CHECK(recall_at_k(records, 2) == doctest::Approx(2.0 / 3));
    CHECK(recall_at_k(records, 1) == doctest::Approx(1.0 / 3));
    CHECK(recall_at_k(records, 5) == doctest::Approx(1.0));

    // observed == argmax everywhere -> recall@1 = 1
    std::vector<EvalRecord> exact;
    exact.push_back(record_of({2}, {{{2}, 0.9}, {{}, 0.1}}));
    exact.push_back(record_of({}, {{{}, 0.8}, {{1}, 0.2}}));
    CHECK(recall_at_k(exact, 1) == doctest::Approx(1.0));

    // recall is non-decreasing in K
    for (std::size_t k = 1; k < 5; ++k) {
        CHECK(recall_at_k(records, k) <= recall_at_k(records, k + 1));
    }
}

TEST_CASE("topk_mass sums the leading probabilities") {
    EvalRecord r = record_of({}, {{{}, 0.5}, {{1}, 0.25}});
    CHECK(topk_mass(r, 1) == doctest::Approx(0.5));
    CHECK(topk_mass(r, 2) == doctest::Approx(0.75));
    CHECK(topk_mass(r, 10) == doctest::Approx(0.75));  // shorter list
    CHECK(topk_mass(r, 1) <= topk_mass(r, 2));
}

TEST_CASE("prob_clicks_le marginalizes by sequence length") {
    EvalRecord r = record_of({}, {{{}, 0.4}, {{1}, 0.3}, {{1, 2}, 0.2}});
    CHECK(prob_clicks_le(r, 0) == doctest::Approx(0.4));
    CHECK(prob_clicks_le(r, 1) == doctest::Approx(0.7));
    CHECK(prob_clicks_le(r, 2) == doctest::Approx(0.9));
    CHECK(prob_clicks_le(r, 2) == doctest::Approx(topk_mass(r, 3)));
    for (int l = 0; l < 4; ++l) CHECK(prob_clicks_le(r, l) <= prob_clicks_le(r, l + 1) + 1e-15);
}

TEST_CASE("prob_nonconsecutive partitions the top-K mass with the ordered part") {
    EvalRecord r = record_of({}, {{{}, 0.5}, {{2, 1}, 0.25}, {{1, 2}, 0.25}});
    CHECK(prob_nonconsecutive(r) == doctest::Approx(0.25));

    double ordered_mass = 0.0;
    for (const ScoredSequence& s : r.top_k) {
        if (is_ordered(s.sequence)) ordered_mass += std::exp(s.log_prob);
    }
    CHECK(prob_nonconsecutive(r) + ordered_mass == doctest::Approx(topk_mass(r, 3)).epsilon(1e-12));
}

TEST_CASE("click_prob_positions uses membership, not multiplicity") {
    EvalRecord r = record_of({}, {{{1}, 0.6}, {{1, 2}, 0.3}, {{}, 0.1}});
    std::vector<double> probs = click_prob_positions(r, 10);
    CHECK(probs[0] == doctest::Approx(0.9));
    CHECK(probs[1] == doctest::Approx(0.3));
    for (int p = 2; p < 10; ++p) CHECK(probs[p] == 0.0);

    EvalRecord rep = record_of({}, {{{1, 1}, 0.5}});
    CHECK(click_prob_positions(rep, 10)[0] == doctest::Approx(0.5));

    const double mass = topk_mass(r, 3);
    for (double p : probs) CHECK(p <= mass + 1e-12);
}

TEST_CASE("binary_perplexity basics") {
    std::vector<BinaryPrediction> half = {{0.5, true}, {0.5, false}, {0.5, true}};
    CHECK(binary_perplexity(half) == doctest::Approx(2.0).epsilon(1e-12));

    std::vector<BinaryPrediction> perfect = {{1.0, true}, {0.0, false}};
    CHECK(binary_perplexity(perfect) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("constant-predictor perplexities recover the published baselines") {
    // 30466 of 100000 sessions have zero clicks; the constant predictor at
    // that rate lands at the published 1.8512 baseline.
    {
        std::vector<BinaryPrediction> preds;
        preds.reserve(100000);
        for (int i = 0; i < 100000; ++i) preds.push_back({0.30466, i < 30466});
        CHECK(binary_perplexity(preds) == doctest::Approx(1.8512).epsilon(0.002 / 1.8512));
    }
    // 92.73% ordered sequences -> non-consecutive rate 0.0727, baseline 1.2984.
    {
        std::vector<BinaryPrediction> preds;
        preds.reserve(10000);
        for (int i = 0; i < 10000; ++i) preds.push_back({0.0727, i < 727});
        CHECK(binary_perplexity(preds) == doctest::Approx(1.298).epsilon(0.003 / 1.298));
    }
}

TEST_CASE("binary_perplexity of the matched constant equals 2^H(rate)") {
    for (double rate : {0.1, 0.30466, 0.5, 0.9273}) {
        const int n = 10000;
        const int positives = static_cast<int>(std::round(rate * n));
        std::vector<BinaryPrediction> preds;
        const double exact_rate = static_cast<double>(positives) / n;
        for (int i = 0; i < n; ++i) preds.push_back({exact_rate, i < positives});
        const double h = -(exact_rate * std::log2(exact_rate) +
                           (1 - exact_rate) * std::log2(1 - exact_rate));
        CHECK(binary_perplexity(preds) == doctest::Approx(std::exp2(h)).epsilon(1e-6));
    }
}

TEST_CASE("click_perplexity averages per-position perplexities") {
    std::vector<std::vector<BinaryPrediction>> per_position(10);
    for (auto& preds : per_position) {
        preds = {{0.5, true}, {0.5, false}};
    }
    ClickPerplexity out = click_perplexity(per_position);
    for (double p : out.per_position) CHECK(p == doctest::Approx(2.0));
    CHECK(out.mean == doctest::Approx(2.0));
}

TEST_CASE("auc: constants, perfect separation, the worked example") {
    std::vector<BinaryPrediction> constant = {{0.3, true}, {0.3, false}, {0.3, true}, {0.3, false}};
    CHECK(auc(constant) == 0.5);

    std::vector<BinaryPrediction> separated = {{0.9, true}, {0.8, true}, {0.2, false}, {0.1, false}};
    CHECK(auc(separated) == 1.0);

    std::vector<BinaryPrediction> example = {{0.9, true}, {0.8, false}, {0.8, true}, {0.1, false}};
    CHECK(auc(example) == doctest::Approx(0.875));

    std::vector<BinaryPrediction> single = {{0.9, true}, {0.8, true}};
    CHECK_THROWS_AS(auc(single), std::invalid_argument);
}

TEST_CASE("auc matches the pairwise oracle and ignores monotone transforms") {
    Rng rng(41);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<BinaryPrediction> preds;
        for (int i = 0; i < 60; ++i) {
            // Coarse grid so ties actually occur.
            const double p = std::round(rng.uniform() * 8) / 8.0;
            preds.push_back({p, rng.bernoulli(0.4)});
        }
        bool has_pos = false, has_neg = false;
        for (const auto& bp : preds) (bp.label ? has_pos : has_neg) = true;
        if (!has_pos || !has_neg) continue;

        const double fast = auc(preds);
        CHECK(fast == doctest::Approx(auc_pairwise(preds)).epsilon(1e-12));

        std::vector<BinaryPrediction> squashed = preds;
        for (auto& bp : squashed) bp.p = 1.0 / (1.0 + std::exp(-5.0 * bp.p));
        CHECK(auc(squashed) == doctest::Approx(fast).epsilon(1e-12));
    }
}

TEST_CASE("naive_baselines are empirical training frequencies") {
    std::vector<QuerySession> sessions;
    sessions.push_back(make_session(1, 1, {}, {}));
    sessions.push_back(make_session(2, 1, {}, {1}));
    sessions.push_back(make_session(3, 1, {}, {1}));
    NaiveBaselines nb = naive_baselines(sessions);
    CHECK(nb.p_clicks_le[0] == doctest::Approx(1.0 / 3));
    CHECK(nb.p_clicks_le[1] == doctest::Approx(1.0));
    CHECK(nb.p_nonconsecutive == 0.0);

    SimulatorConfig config;
    config.attractiveness = {0.5, 0.4, 0.3, 0.2, 0.2, 0.2, 0.1, 0.1, 0.1, 0.1};
    config.continuation = 0.6;
    config.revisit = 0.0;
    config.seed = 12;
    NaiveBaselines sim_nb = naive_baselines(simulate_log(config, 500, 5, 30));
    CHECK(sim_nb.p_nonconsecutive == 0.0);
}

TEST_CASE("oracle distribution: degenerate case and normalization") {
    SimulatorConfig config;
    config.attractiveness = {1.0, 0, 0, 0, 0, 0, 0, 0, 0, 0};
    config.continuation = 0.0;
    config.seed = 1;
    auto dist = oracle_distribution(config, 1);
    double p1 = 0.0;
    for (const auto& [seq, p] : dist) {
        if (seq == ClickSequence{1}) p1 += p;
    }
    CHECK(p1 == doctest::Approx(1.0).epsilon(1e-12));

    for (auto kind : {UserModelKind::position_decay, UserModelKind::cascade}) {
        SimulatorConfig c;
        c.kind = kind;
        c.attractiveness = {0.5, 0.4, 0.3, 0.25, 0.2, 0.15, 0.12, 0.1, 0.08, 0.05};
        c.continuation = 0.6;
        c.revisit = kind == UserModelKind::position_decay ? 0.2 : 0.0;
        c.query_spread = 0.5;
        c.max_clicks = 3;
        c.seed = 77;
        double total = 0.0;
        for (const auto& [seq, p] : oracle_distribution(c, 3)) {
            CHECK(p >= 0.0);
            total += p;
        }
        CHECK(std::abs(total - 1.0) < 1e-9);
    }
}

TEST_CASE("oracle probabilities match simulated frequencies within 3 sigma") {
    SimulatorConfig config;
    config.attractiveness = {0.5, 0.35, 0.25, 0.15, 0.1, 0.08, 0.06, 0.05, 0.04, 0.03};
    config.continuation = 0.55;
    config.revisit = 0.2;
    config.max_clicks = 2;
    config.seed = 123;

    const std::size_t n = 1000000;
    std::map<ClickSequence, std::size_t> freq;
    for (const QuerySession& s : simulate_log(config, n, 1, 20)) {
        freq[click_sequence_of(s)] += 1;
    }

    for (const auto& [seq, p] : oracle_distribution(config, 1)) {
        const double observed = static_cast<double>(freq[seq]) / static_cast<double>(n);
        const double sigma = std::sqrt(p * (1.0 - p) / static_cast<double>(n));
        INFO("sequence size " << seq.size() << " p=" << p << " observed=" << observed);
        CHECK(std::abs(observed - p) <= 3.0 * sigma + 1e-12);
    }
}

TEST_CASE("full-enumeration estimators equal the exact model marginals") {
    using csm::testing::make_tiny;
    auto tiny = make_tiny(51);
    EncodedSerp enc = encode(tiny.params, tiny.stats, tiny.query, tiny.results);
    Enumeration e = exhaustive_enumerate(tiny.params, enc, 4);

    EvalRecord record;
    record.top_k = e.sequences;

    // Direct marginals accumulated over the same distribution.
    double le2 = 0.0, nonconsecutive = 0.0, total = 0.0;
    std::array<double, 3> by_position{};
    for (const ScoredSequence& s : e.sequences) {
        const double p = std::exp(s.log_prob);
        total += p;
        if (s.sequence.size() <= 2) le2 += p;
        if (!is_ordered(s.sequence)) nonconsecutive += p;
        std::array<bool, 3> seen{};
        for (int pos : s.sequence) seen[pos - 1] = true;
        for (int i = 0; i < 3; ++i) {
            if (seen[i]) by_position[i] += p;
        }
    }

    CHECK(prob_clicks_le(record, 2) == doctest::Approx(le2).epsilon(1e-9));
    CHECK(prob_nonconsecutive(record) == doctest::Approx(nonconsecutive).epsilon(1e-9));
    CHECK(topk_mass(record, e.sequences.size()) == doctest::Approx(total).epsilon(1e-9));
    CHECK(topk_mass(record, e.sequences.size()) ==
          doctest::Approx(1.0 - e.open_prefix_mass).epsilon(1e-6));
    std::vector<double> probs = click_prob_positions(record, 3);
    for (int i = 0; i < 3; ++i) CHECK(probs[i] == doctest::Approx(by_position[i]).epsilon(1e-9));
    CHECK(prob_clicks_le(record, 4) == doctest::Approx(topk_mass(record, e.sequences.size())).epsilon(1e-12));
}

TEST_CASE("oracle click probabilities are the distribution marginals") {
    SimulatorConfig config;
    config.attractiveness = {0.6, 0.4, 0.25, 0.15, 0.1, 0.05, 0.05, 0.05, 0.05, 0.05};
    config.continuation = 0.5;
    config.revisit = 0.1;
    config.max_clicks = 3;
    config.seed = 9;

    std::array<double, kSerpSize> probs = oracle_click_probabilities(config, 3);
    std::array<double, kSerpSize> manual{};
    for (const auto& [seq, p] : oracle_distribution(config, 3)) {
        std::array<bool, kSerpSize> seen{};
        for (int pos : seq) seen[pos - 1] = true;
        for (int i = 0; i < kSerpSize; ++i) {
            if (seen[i]) manual[i] += p;
        }
    }
    for (int i = 0; i < kSerpSize; ++i) CHECK(probs[i] == doctest::Approx(manual[i]).epsilon(1e-12));
}
