#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "csm/beam.hpp"
#include "csm/session.hpp"

namespace csm {

/// One evaluated session: the observed sequence and the model's top-K list
/// for its SERP.
struct EvalRecord {
    ClickSequence observed;
    std::vector<ScoredSequence> top_k;  // descending log-probability
};

/// Fraction of records whose observed sequence appears among the first K
/// entries of their top-K list (shorter lists are simply misses beyond their
/// length).
double recall_at_k(std::span<const EvalRecord> records, std::size_t k);

/// 1-based rank of the observed sequence in the list, or 0 if absent.
std::size_t observed_rank(const EvalRecord& record);

/// Total probability of the K most probable sequences.
double topk_mass(const EvalRecord& record, std::size_t k);

/// P(click count <= L), marginalized over the top-K list (raw sums, not
/// renormalized; the missing tail is visible via topk_mass).
double prob_clicks_le(const EvalRecord& record, int l);

/// P(sequence not ordered by position), marginalized over the top-K list.
double prob_nonconsecutive(const EvalRecord& record);

/// Per-position click probability: sum of the probabilities of top-K
/// sequences containing the position (membership, not multiplicity).
std::vector<double> click_prob_positions(const EvalRecord& record, int n_positions);

struct BinaryPrediction {
    double p = 0.0;  // predicted probability of the positive event
    bool label = false;
};

/// 2 ^ (mean binary cross-entropy in bits). Probabilities are clamped to
/// [1e-10, 1 - 1e-10] before the logs.
double binary_perplexity(std::span<const BinaryPrediction> predictions);

struct ClickPerplexity {
    std::vector<double> per_position;
    double mean = 0.0;
};

/// Binary perplexity per position, averaged over positions.
ClickPerplexity click_perplexity(const std::vector<std::vector<BinaryPrediction>>& per_position);

/// Area under the ROC curve via the rank statistic (ties get average ranks).
/// Throws std::invalid_argument when only one class is present.
double auc(std::span<const BinaryPrediction> predictions);

/// Constant predictors fitted on the training set.
struct NaiveBaselines {
    std::array<double, 6> p_clicks_le{};  // L = 0..5
    double p_nonconsecutive = 0.0;
};

NaiveBaselines naive_baselines(std::span<const QuerySession> train_sessions);

}  // namespace csm
