#include "csm/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "csm/rng.hpp"

namespace csm {

namespace {

double clamp01(double x) { return std::min(1.0, std::max(0.0, x)); }

constexpr std::uint64_t kProfileSalt = 0x70726f66;  // query profile stream
constexpr std::uint64_t kResultsSalt = 0x72657375;  // result assignment stream

/// Per-step outcome distribution of the position-decay walk:
/// stop probability plus (position, probability) continuations.
struct StepDistribution {
    double stop = 1.0;
    std::vector<std::pair<int, double>> moves;
};

/// The user scans a set of candidate positions in a fixed direction and
/// clicks the first attractive one (or none). The first click is always
/// attempted; each later click happens only with the continuation
/// probability. After a click at position l, the next scan goes down from
/// l+1 or, with the revisit probability, back up from l.
StepDistribution decay_step(const QueryProfile& prof, int last, int clicks, int max_clicks) {
    StepDistribution d;
    if (clicks >= max_clicks) return d;

    const double cont = clicks == 0 ? 1.0 : prof.continuation;
    d.stop = 1.0 - cont;

    // Scan from `from` towards `to` (inclusive); `branch` is the probability
    // of taking this scan at all.
    auto add_scan = [&](int from, int to, int step, double branch) {
        if (branch <= 0.0) return;
        double skip = 1.0;
        for (int p = from; step > 0 ? p <= to : p >= to; p += step) {
            const double a = prof.attractiveness[p - 1];
            if (a > 0.0) d.moves.emplace_back(p, cont * branch * skip * a);
            skip *= 1.0 - a;
        }
        d.stop += cont * branch * skip;  // scanned out without a click
    };

    if (last == 0) {
        add_scan(1, kSerpSize, 1, 1.0);
    } else {
        add_scan(last, 1, -1, prof.revisit);  // nearest-first back up to an earlier-or-equal position
        if (last < kSerpSize) {
            add_scan(last + 1, kSerpSize, 1, 1.0 - prof.revisit);
        } else {
            d.stop += cont * (1.0 - prof.revisit);
        }
    }
    return d;
}

/// Probability that a cascade scan over positions [from, N] produces no click.
double cascade_tail_skip(const QueryProfile& prof, int from) {
    double p = 1.0;
    for (int j = from; j <= kSerpSize; ++j) p *= 1.0 - prof.attractiveness[j - 1];
    return p;
}

void enumerate_decay(const SimulatorConfig& config, const QueryProfile& prof, ClickSequence& prefix,
                     int last, double prefix_prob, std::size_t budget,
                     std::vector<std::pair<ClickSequence, double>>& out) {
    if (out.size() >= budget) throw std::runtime_error("oracle enumeration budget exceeded");
    StepDistribution d = decay_step(prof, last, static_cast<int>(prefix.size()), config.max_clicks);
    if (d.stop > 0.0) out.emplace_back(prefix, prefix_prob * d.stop);
    for (const auto& [p, prob] : d.moves) {
        prefix.push_back(p);
        enumerate_decay(config, prof, prefix, p, prefix_prob * prob, budget, out);
        prefix.pop_back();
    }
}

/// Emits every sequence that extends `prefix` with clicks at positions >= next.
/// scanning_prob is the probability of reaching this state (prefix clicked,
/// scan continuing from position `next`). Each sequence is emitted exactly
/// once with its total probability.
void enumerate_cascade(const SimulatorConfig& config, const QueryProfile& prof, ClickSequence& prefix,
                       int next, double scanning_prob, std::size_t budget,
                       std::vector<std::pair<ClickSequence, double>>& out) {
    if (out.size() >= budget) throw std::runtime_error("oracle enumeration budget exceeded");
    double skip = 1.0;
    for (int p = next; p <= kSerpSize; ++p) {
        const double a = prof.attractiveness[p - 1];
        if (a > 0.0) {
            double click_prob = scanning_prob * skip * a;
            prefix.push_back(p);
            if (static_cast<int>(prefix.size()) >= config.max_clicks) {
                out.emplace_back(prefix, click_prob);
            } else {
                // Ends by a deliberate stop or by scanning out the tail.
                double end = (1.0 - prof.continuation) +
                             prof.continuation * cascade_tail_skip(prof, p + 1);
                out.emplace_back(prefix, click_prob * end);
                enumerate_cascade(config, prof, prefix, p + 1, click_prob * prof.continuation,
                                  budget, out);
            }
            prefix.pop_back();
        }
        skip *= 1.0 - a;
    }
}

int sample_move(Rng& rng, const StepDistribution& d) {
    // Returns 0 for stop, else the sampled position.
    double r = rng.uniform();
    double cum = d.stop;
    if (r < cum) return 0;
    for (const auto& [p, prob] : d.moves) {
        cum += prob;
        if (r < cum) return p;
    }
    return d.moves.empty() ? 0 : d.moves.back().first;
}

}  // namespace

void SimulatorConfig::validate() const {
    auto check01 = [](double x, const char* name) {
        if (!(x >= 0.0 && x <= 1.0)) {
            throw std::invalid_argument(std::string(name) + " must be in [0, 1]");
        }
    };
    for (double a : attractiveness) check01(a, "attractiveness");
    check01(continuation, "continuation");
    check01(revisit, "revisit");
    if (!(query_spread >= 0.0 && query_spread < 1.0)) {
        throw std::invalid_argument("query_spread must be in [0, 1)");
    }
    if (max_clicks < 0) throw std::invalid_argument("max_clicks must be >= 0");
    if (kind == UserModelKind::cascade && revisit != 0.0) {
        throw std::invalid_argument("cascade model does not revisit; set revisit = 0");
    }
}

SimulatorConfig load_simulator_config(std::istream& in) {
    SimulatorConfig config;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            std::size_t b = s.find_first_not_of(" \t");
            std::size_t e = s.find_last_not_of(" \t");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) continue;
        try {
            if (key == "kind") {
                if (value == "position-decay") {
                    config.kind = UserModelKind::position_decay;
                } else if (value == "cascade-with-abandonment") {
                    config.kind = UserModelKind::cascade;
                } else {
                    throw std::invalid_argument("unknown kind: " + value);
                }
            } else if (key == "attractiveness") {
                std::stringstream ss(value);
                std::string item;
                int i = 0;
                while (std::getline(ss, item, ',')) {
                    if (i >= kSerpSize) throw std::invalid_argument("too many attractiveness values");
                    config.attractiveness[i++] = std::stod(item);
                }
                if (i != kSerpSize) throw std::invalid_argument("attractiveness needs 10 values");
            } else if (key == "continuation") {
                config.continuation = std::stod(value);
            } else if (key == "revisit") {
                config.revisit = std::stod(value);
            } else if (key == "query_spread") {
                config.query_spread = std::stod(value);
            } else if (key == "max_clicks") {
                config.max_clicks = std::stoi(value);
            } else if (key == "seed") {
                config.seed = std::stoull(value);
            } else {
                throw std::invalid_argument("unknown key: " + key);
            }
        } catch (const std::invalid_argument&) {
            throw;
        } catch (const std::exception&) {
            throw std::invalid_argument("bad value for " + key + " at line " + std::to_string(line_no));
        }
    }
    config.validate();
    return config;
}

QueryProfile query_profile(const SimulatorConfig& config, std::uint64_t query_id) {
    QueryProfile prof;
    prof.attractiveness = config.attractiveness;
    prof.continuation = config.continuation;
    prof.revisit = config.revisit;
    if (config.query_spread > 0.0) {
        Rng rng(mix_seed(config.seed, kProfileSalt ^ query_id));
        const double s = config.query_spread;
        prof.continuation = clamp01(prof.continuation * (1.0 + s * rng.uniform(-1.0, 1.0)));
        prof.revisit = clamp01(prof.revisit * (1.0 + s * rng.uniform(-1.0, 1.0)));
        for (double& a : prof.attractiveness) {
            a = clamp01(a * (1.0 + s * rng.uniform(-1.0, 1.0)));
        }
    }
    return prof;
}

std::array<std::uint64_t, kSerpSize> query_results(const SimulatorConfig& config,
                                                   std::uint64_t query_id, std::uint64_t n_docs) {
    if (n_docs < kSerpSize) throw std::invalid_argument("n_docs must be >= 10");
    Rng rng(mix_seed(config.seed, kResultsSalt ^ query_id));
    std::array<std::uint64_t, kSerpSize> results{};
    std::unordered_set<std::uint64_t> seen;
    for (int i = 0; i < kSerpSize; ++i) {
        std::uint64_t doc;
        do {
            doc = 1 + rng.uniform_below(n_docs);
        } while (!seen.insert(doc).second);
        results[i] = doc;
    }
    return results;
}

std::vector<QuerySession> simulate_log(const SimulatorConfig& config, std::size_t n_sessions,
                                       std::uint64_t n_queries, std::uint64_t n_docs) {
    config.validate();
    if (n_queries == 0) throw std::invalid_argument("n_queries must be > 0");

    std::vector<QuerySession> sessions;
    sessions.reserve(n_sessions);
    Rng rng(config.seed);

    for (std::size_t i = 0; i < n_sessions; ++i) {
        QuerySession s;
        s.session_id = i + 1;
        s.time_passed = i;
        s.query_id = 1 + rng.uniform_below(n_queries);
        s.region_id = 0;
        s.results = query_results(config, s.query_id, n_docs);

        QueryProfile prof = query_profile(config, s.query_id);
        std::uint64_t t = 1;
        if (config.kind == UserModelKind::position_decay) {
            int last = 0;
            while (true) {
                StepDistribution d =
                    decay_step(prof, last, static_cast<int>(s.clicks.size()), config.max_clicks);
                int p = sample_move(rng, d);
                if (p == 0) break;
                s.clicks.push_back({t++, p});
                last = p;
            }
        } else {
            int clicks = 0;
            for (int p = 1; p <= kSerpSize && clicks < config.max_clicks; ++p) {
                if (!rng.bernoulli(prof.attractiveness[p - 1])) continue;
                s.clicks.push_back({t++, p});
                ++clicks;
                if (clicks >= config.max_clicks || !rng.bernoulli(prof.continuation)) break;
            }
        }
        sessions.push_back(std::move(s));
    }
    return sessions;
}

std::vector<std::pair<ClickSequence, double>> oracle_distribution(const SimulatorConfig& config,
                                                                  std::uint64_t query_id,
                                                                  std::size_t budget) {
    config.validate();
    QueryProfile prof = query_profile(config, query_id);
    std::vector<std::pair<ClickSequence, double>> out;
    ClickSequence prefix;
    if (config.kind == UserModelKind::position_decay) {
        enumerate_decay(config, prof, prefix, 0, 1.0, budget, out);
    } else {
        if (config.max_clicks == 0) {
            out.emplace_back(ClickSequence{}, 1.0);
        } else {
            out.emplace_back(ClickSequence{}, cascade_tail_skip(prof, 1));
            enumerate_cascade(config, prof, prefix, 1, 1.0, budget, out);
        }
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        if (a.first.size() != b.first.size()) return a.first.size() < b.first.size();
        return a.first < b.first;
    });
    return out;
}

std::array<double, kSerpSize> oracle_click_probabilities(const SimulatorConfig& config,
                                                         std::uint64_t query_id) {
    std::array<double, kSerpSize> probs{};
    for (const auto& [seq, p] : oracle_distribution(config, query_id)) {
        std::array<bool, kSerpSize> seen{};
        for (int pos : seq) seen[pos - 1] = true;
        for (int i = 0; i < kSerpSize; ++i) {
            if (seen[i]) probs[i] += p;
        }
    }
    return probs;
}

}  // namespace csm
