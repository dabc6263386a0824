#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <utility>
#include <vector>

#include "csm/session.hpp"

namespace csm {

enum class UserModelKind {
    /// Clicks happen one at a time; the user scans downward from the previous
    /// click (or, with the revisit probability, back up from it) and clicks
    /// the first attractive result. The first click is always attempted;
    /// later ones are gated by the continuation probability.
    position_decay,
    /// Top-down scan; every examined result is clicked with its attractiveness,
    /// and each click ends the session with probability 1 - continuation.
    /// Produces ordered sequences only (revisit must be 0).
    cascade,
};

/// Generative user model for synthesizing ground-truth logs. The sequence
/// distribution it induces is exactly computable (oracle_distribution below),
/// which makes synthetic-recovery tests possible.
struct SimulatorConfig {
    UserModelKind kind = UserModelKind::position_decay;
    std::array<double, kSerpSize> attractiveness{};  // per-position click appeal, in [0,1]
    double continuation = 0.5;  // chance of attempting another click after each click
    double revisit = 0.0;       // chance the next click lands on or above the previous one
    /// Per-query variation of attractiveness/continuation/revisit, in [0,1).
    /// 0 makes every query identical; larger values spread the per-query
    /// profiles so that sessions are distinguishable by query.
    double query_spread = 0.0;
    int max_clicks = 4;
    std::uint64_t seed = 1;

    void validate() const;  // throws std::invalid_argument
};

/// Reads a flat `key = value` file (# comments allowed). Keys: kind,
/// attractiveness (10 comma-separated values), continuation, revisit,
/// query_spread, max_clicks, seed.
SimulatorConfig load_simulator_config(std::istream& in);

/// The effective parameters of one query, derived deterministically from the
/// config seed. With query_spread == 0 every query shares the base profile.
struct QueryProfile {
    std::array<double, kSerpSize> attractiveness{};
    double continuation = 0.0;
    double revisit = 0.0;
};

QueryProfile query_profile(const SimulatorConfig& config, std::uint64_t query_id);

/// Fixed result list of a query (distinct doc ids from [1, n_docs]).
std::array<std::uint64_t, kSerpSize> query_results(const SimulatorConfig& config,
                                                   std::uint64_t query_id, std::uint64_t n_docs);

/// Draws n_sessions i.i.d. sessions; query ids are uniform over [1, n_queries].
std::vector<QuerySession> simulate_log(const SimulatorConfig& config, std::size_t n_sessions,
                                       std::uint64_t n_queries, std::uint64_t n_docs);

/// Exact sequence distribution of the generator for one query, enumerated by
/// walking the (last position, clicks so far) state space. Sorted by
/// descending probability. Throws if the enumeration would exceed `budget`
/// sequences.
std::vector<std::pair<ClickSequence, double>> oracle_distribution(const SimulatorConfig& config,
                                                                  std::uint64_t query_id,
                                                                  std::size_t budget = 1000000);

/// Exact per-position click probabilities for one query (marginals of
/// oracle_distribution).
std::array<double, kSerpSize> oracle_click_probabilities(const SimulatorConfig& config,
                                                         std::uint64_t query_id);

}  // namespace csm
