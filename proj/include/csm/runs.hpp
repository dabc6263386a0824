#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "csm/metrics.hpp"
#include "csm/runconfig.hpp"

namespace csm {

/// Command implementations behind the CLI. Each writes its declared output
/// files (reports embed the config fingerprint), prints a human summary to
/// `out`, and throws on validation errors. All runs are deterministic given
/// the config.

struct SynthOutcome {
    std::size_t sessions_written = 0;
    SessionStats stats;
};
SynthOutcome run_synth(const RunConfig& config, std::ostream& out);

struct StatsOutcome {
    SessionStats stats;
    ParseCounters counters;
};
StatsOutcome run_stats(const RunConfig& config, std::ostream& out);

struct TrainOutcome {
    std::vector<double> epoch_mean_nll;
    std::uint64_t truncated_sessions = 0;
    std::uint64_t checkpoint_fingerprint = 0;
    std::uint64_t stats_fingerprint = 0;
    /// Set when training aborted on a non-finite loss; a diagnostic
    /// checkpoint is still written.
    bool diverged = false;
};
TrainOutcome run_train(const RunConfig& config, std::ostream& out);

struct PredictOutcome {
    std::vector<ScoredSequence> sequences;
    bool truncated = false;
};
PredictOutcome run_predict(const RunConfig& config, std::uint64_t query_id,
                           const std::vector<std::uint64_t>& results, std::ostream& out);

struct EvalOutcome {
    std::size_t sessions = 0;
    double recall_at_1 = 0.0;
    double recall_at_k = 0.0;
    double mean_topk_mass = 0.0;
    std::vector<std::string> report_files;
};
EvalOutcome run_eval(const RunConfig& config, std::ostream& out);

/// Formats one beam listing line: probability (6 significant digits), a tab,
/// then space-separated positions or "EOS" for the empty sequence.
std::string format_prediction_line(const ScoredSequence& s);

/// Renders the click-count/order histogram as a text table.
std::string format_stats_table(const SessionStats& stats);

/// Directory override honored by every command (outputs land there instead of
/// config.out_dir when the variable is set).
extern const char* kOutDirEnvVar;  // "CSM_OUT_DIR"

/// Evaluates sessions against a model: one beam search per session on a
/// worker pool, records ordered by session index. Shared by run_eval and the
/// test suites.
std::vector<EvalRecord> evaluate_sessions(const CsmParams& params, const PatternStats& stats,
                                          std::span<const QuerySession> sessions, std::size_t k,
                                          std::size_t beam_size, std::size_t max_len, int threads);

}  // namespace csm
