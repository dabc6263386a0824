#include "csm/runs.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <thread>

#include "csm/checkpoint.hpp"

namespace csm {

const char* kOutDirEnvVar = "CSM_OUT_DIR";

namespace {

namespace fs = std::filesystem;

std::string resolve_out_dir(const RunConfig& config) {
    if (const char* env = std::getenv(kOutDirEnvVar); env && *env) return env;
    return config.out_dir;
}

std::string hex64(std::uint64_t x) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << x;
    return os.str();
}

std::ofstream open_report(const std::string& dir, const std::string& name, std::uint64_t fingerprint,
                          std::vector<std::string>* files) {
    fs::create_directories(dir);
    const std::string path = (fs::path(dir) / name).string();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "# config=" << hex64(fingerprint) << "\n";
    if (files) files->push_back(path);
    return out;
}

std::vector<QuerySession> parse_log_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open log: " + path);
    return parse_log(in).sessions;
}

PatternStats load_stats_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open pattern stats: " + path);
    return PatternStats::load(in);
}

Checkpoint load_checkpoint_file(const std::string& path, std::uint64_t expected_stats,
                                std::ostream& out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    LoadedCheckpoint loaded = load_checkpoint(in, expected_stats);
    if (loaded.stats_mismatch) {
        out << "warning: checkpoint was trained against different pattern stats "
            << "(fingerprint mismatch)\n";
    }
    return std::move(loaded.checkpoint);
}

/// K values reported in metrics.csv: powers of two up to k, plus k itself.
std::vector<std::size_t> report_ks(std::size_t k) {
    std::vector<std::size_t> ks;
    for (std::size_t v = 1; v < k; v *= 2) ks.push_back(v);
    ks.push_back(k);
    return ks;
}

void write_recall_curve(std::ofstream& out, std::span<const std::size_t> ranks, std::size_t k) {
    // ranks holds the 1-based rank of the observed sequence per record (0 = miss).
    std::vector<std::size_t> hits_at(k + 1, 0);
    for (std::size_t r : ranks) {
        if (r >= 1 && r <= k) hits_at[r] += 1;
    }
    out << "rank,recall\n";
    std::size_t cum = 0;
    for (std::size_t rank = 1; rank <= k; ++rank) {
        cum += hits_at[rank];
        const double recall =
            ranks.empty() ? 0.0 : static_cast<double>(cum) / static_cast<double>(ranks.size());
        out << rank << ',' << std::setprecision(10) << recall << "\n";
    }
}

double safe_auc(std::span<const BinaryPrediction> preds) {
    try {
        return auc(preds);
    } catch (const std::invalid_argument&) {
        return std::numeric_limits<double>::quiet_NaN();
    }
}

}  // namespace

std::string format_stats_table(const SessionStats& stats) {
    std::ostringstream os;
    os << "clicks   ordered  unordered\n";
    for (int row = 0; row < SessionStats::kRows; ++row) {
        os << std::left << std::setw(9) << (row == 10 ? std::string("10+") : std::to_string(row))
           << std::right << std::setw(8) << stats.counts[row][0] << std::setw(11)
           << stats.counts[row][1] << "\n";
    }
    os << "total    " << std::setw(8) << stats.total() << "\n";
    return os.str();
}

std::string format_prediction_line(const ScoredSequence& s) {
    std::ostringstream os;
    os << std::setprecision(6) << std::exp(s.log_prob) << '\t';
    if (s.sequence.empty()) {
        os << "EOS";
    } else {
        for (std::size_t i = 0; i < s.sequence.size(); ++i) {
            if (i) os << ' ';
            os << s.sequence[i];
        }
    }
    return os.str();
}

SynthOutcome run_synth(const RunConfig& config, std::ostream& out) {
    config.sim.validate();
    std::vector<QuerySession> sessions =
        simulate_log(config.sim, config.synth_sessions, config.synth_queries, config.synth_docs);

    if (fs::path(config.log_path).has_parent_path()) {
        fs::create_directories(fs::path(config.log_path).parent_path());
    }
    std::ofstream log_out(config.log_path, std::ios::binary);
    if (!log_out) throw std::runtime_error("cannot write log: " + config.log_path);
    write_log(log_out, sessions);
    log_out.close();

    SynthOutcome outcome;
    outcome.sessions_written = sessions.size();
    outcome.stats = session_stats(sessions);
    out << "wrote " << sessions.size() << " sessions to " << config.log_path << "\n";
    out << format_stats_table(outcome.stats);
    return outcome;
}

StatsOutcome run_stats(const RunConfig& config, std::ostream& out) {
    std::ifstream in(config.log_path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open log: " + config.log_path);
    ParseResult parsed = parse_log(in);

    StatsOutcome outcome;
    outcome.stats = session_stats(parsed.sessions);
    outcome.counters = parsed.counters;

    out << format_stats_table(outcome.stats);
    if (parsed.counters.skipped_records || parsed.counters.dropped_clicks) {
        out << "skipped records: " << parsed.counters.skipped_records
            << ", dropped clicks: " << parsed.counters.dropped_clicks << "\n";
    }

    const std::uint64_t fp = config_fingerprint(config);
    std::ofstream csv = open_report(resolve_out_dir(config), "session_stats.csv", fp, nullptr);
    csv << "clicks,ordered,unordered\n";
    for (int row = 0; row < SessionStats::kRows; ++row) {
        csv << (row == 10 ? std::string("10+") : std::to_string(row)) << ','
            << outcome.stats.counts[row][0] << ',' << outcome.stats.counts[row][1] << "\n";
    }
    return outcome;
}

TrainOutcome run_train(const RunConfig& config, std::ostream& out) {
    std::vector<QuerySession> sessions = parse_log_file(config.log_path);
    SplitResult split = split_sessions(sessions, config.train_fraction, config.eval_sample,
                                       config.split_seed);
    out << "training on " << split.train.size() << " sessions (" << split.eval.size()
        << " held out for eval)\n";

    PatternStats stats = count_patterns(split.train, config.model.n_positions);
    if (fs::path(config.stats_path).has_parent_path()) {
        fs::create_directories(fs::path(config.stats_path).parent_path());
    }
    {
        std::ofstream stats_out(config.stats_path, std::ios::binary);
        if (!stats_out) throw std::runtime_error("cannot write pattern stats: " + config.stats_path);
        stats.save(stats_out);
    }

    TrainOutcome outcome;
    outcome.stats_fingerprint = stats.fingerprint();

    CsmParams params = CsmParams::init(config.model, config.train_seed);
    TrainConfig tc;
    tc.batch_size = config.batch;
    tc.epochs = config.epochs;
    tc.lr = config.lr;
    tc.clip_norm = config.clip;
    tc.seed = config.train_seed;
    tc.on_epoch = [&out](int epoch, double nll) {
        out << "epoch " << epoch << ": mean nll " << nll << "\n";
    };

    try {
        TrainResult tr = train(params, stats, split.train, tc);
        outcome.epoch_mean_nll = tr.epoch_mean_nll;
        outcome.truncated_sessions = tr.truncated_sessions;
    } catch (const TrainingDiverged& e) {
        outcome.diverged = true;
        out << "training diverged: " << e.what() << "\n";
    }

    const std::uint64_t fp = config_fingerprint(config);
    if (fs::path(config.checkpoint_path).has_parent_path()) {
        fs::create_directories(fs::path(config.checkpoint_path).parent_path());
    }
    {
        std::ofstream ckpt_out(config.checkpoint_path, std::ios::binary);
        if (!ckpt_out) throw std::runtime_error("cannot write checkpoint: " + config.checkpoint_path);
        Checkpoint ckpt;
        ckpt.params = std::move(params);
        ckpt.stats_fingerprint = outcome.stats_fingerprint;
        ckpt.config_fingerprint = fp;
        save_checkpoint(ckpt_out, ckpt);
    }
    outcome.checkpoint_fingerprint = file_fingerprint(config.checkpoint_path);
    out << (outcome.diverged ? "diagnostic checkpoint " : "checkpoint ") << config.checkpoint_path
        << " fingerprint " << hex64(outcome.checkpoint_fingerprint) << "\n";

    std::ofstream curve = open_report(resolve_out_dir(config), "loss_curve.csv", fp, nullptr);
    curve << "epoch,mean_nll\n";
    for (std::size_t e = 0; e < outcome.epoch_mean_nll.size(); ++e) {
        curve << e << ',' << std::setprecision(17) << outcome.epoch_mean_nll[e] << "\n";
    }
    if (outcome.truncated_sessions) {
        out << "truncated " << outcome.truncated_sessions << " over-long training sequences\n";
    }
    return outcome;
}

PredictOutcome run_predict(const RunConfig& config, std::uint64_t query_id,
                           const std::vector<std::uint64_t>& results, std::ostream& out) {
    if (results.size() != static_cast<std::size_t>(config.model.n_positions)) {
        throw std::invalid_argument("predict: expected exactly " +
                                    std::to_string(config.model.n_positions) + " result ids");
    }
    PatternStats stats = load_stats_file(config.stats_path);
    Checkpoint ckpt = load_checkpoint_file(config.checkpoint_path, stats.fingerprint(), out);

    BeamResult beam = beam_search(ckpt.params, stats, query_id, results, config.k,
                                  config.effective_beam(), config.max_len);
    PredictOutcome outcome;
    outcome.truncated = beam.truncated;
    outcome.sequences = std::move(beam.sequences);
    for (const ScoredSequence& s : outcome.sequences) {
        out << format_prediction_line(s) << "\n";
    }
    if (outcome.truncated) {
        out << "note: fewer than K sequences completable within max_len\n";
    }
    return outcome;
}

std::vector<EvalRecord> evaluate_sessions(const CsmParams& params, const PatternStats& stats,
                                          std::span<const QuerySession> sessions, std::size_t k,
                                          std::size_t beam_size, std::size_t max_len, int threads) {
    std::vector<EvalRecord> records(sessions.size());
    if (threads <= 0) {
        threads = static_cast<int>(std::thread::hardware_concurrency());
        if (threads <= 0) threads = 1;
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= sessions.size()) break;
            const QuerySession& s = sessions[i];
            BeamResult beam = beam_search(params, stats, s.query_id, s.results, k, beam_size, max_len);
            records[i].observed = click_sequence_of(s);
            records[i].top_k = std::move(beam.sequences);
        }
    };
    if (threads == 1 || sessions.size() <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(threads));
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }
    return records;
}

EvalOutcome run_eval(const RunConfig& config, std::ostream& out) {
    std::vector<QuerySession> sessions = parse_log_file(config.log_path);
    SplitResult split = split_sessions(sessions, config.train_fraction, config.eval_sample,
                                       config.split_seed);

    PatternStats stats = load_stats_file(config.stats_path);
    Checkpoint ckpt = load_checkpoint_file(config.checkpoint_path, stats.fingerprint(), out);
    const CsmParams& params = ckpt.params;
    const int n = params.config.n_positions;

    out << "evaluating " << split.eval.size() << " sessions with K=" << config.k << "\n";
    std::vector<EvalRecord> records =
        evaluate_sessions(params, stats, split.eval, config.k, config.effective_beam(),
                          config.max_len, config.threads);

    const std::uint64_t fp = config_fingerprint(config);
    const std::string dir = resolve_out_dir(config);
    EvalOutcome outcome;
    outcome.sessions = records.size();

    // Ranks of the observed sequences, overall and per group.
    std::vector<std::size_t> ranks(records.size());
    std::vector<std::size_t> ordered_ranks, unordered_ranks;
    std::vector<std::vector<std::size_t>> ranks_by_clicks(static_cast<std::size_t>(config.l_max) + 1);
    for (std::size_t i = 0; i < records.size(); ++i) {
        ranks[i] = observed_rank(records[i]);
        const ClickSequence& obs = records[i].observed;
        (is_ordered(obs) ? ordered_ranks : unordered_ranks).push_back(ranks[i]);
        if (obs.size() <= static_cast<std::size_t>(config.l_max)) {
            ranks_by_clicks[obs.size()].push_back(ranks[i]);
        }
    }

    {
        std::ofstream f = open_report(dir, "recalls.csv", fp, &outcome.report_files);
        write_recall_curve(f, ranks, config.k);
    }
    {
        std::ofstream f = open_report(dir, "recalls_in_ordered_group.csv", fp, &outcome.report_files);
        write_recall_curve(f, ordered_ranks, config.k);
    }
    {
        std::ofstream f = open_report(dir, "recalls_in_unordered_group.csv", fp, &outcome.report_files);
        write_recall_curve(f, unordered_ranks, config.k);
    }
    for (int l = 0; l <= config.l_max; ++l) {
        std::ofstream f = open_report(dir, "recalls_in_group_" + std::to_string(l) + ".csv", fp,
                                      &outcome.report_files);
        write_recall_curve(f, ranks_by_clicks[static_cast<std::size_t>(l)], config.k);
    }

    {
        std::ofstream f = open_report(dir, "total_probability_of_k_most_probable_sequences.csv", fp,
                                      &outcome.report_files);
        f << "k,total_probability\n";
        for (std::size_t kk = 1; kk <= config.k; ++kk) {
            double mass = 0.0;
            for (const EvalRecord& r : records) mass += topk_mass(r, kk);
            f << kk << ',' << std::setprecision(10)
              << (records.empty() ? 0.0 : mass / static_cast<double>(records.size())) << "\n";
        }
    }

    // Task metrics against the naive constant baselines fitted on the train split.
    NaiveBaselines naive = naive_baselines(split.train);

    std::ofstream metrics = open_report(dir, "metrics.csv", fp, &outcome.report_files);
    metrics << "metric,parameter,value\n";
    metrics << std::setprecision(10);
    metrics << "sessions,-," << records.size() << "\n";

    for (std::size_t kk : report_ks(config.k)) {
        metrics << "recall," << kk << ',' << recall_at_k(records, kk) << "\n";
    }
    double mean_mass_k = 0.0;
    for (const EvalRecord& r : records) mean_mass_k += topk_mass(r, config.k);
    if (!records.empty()) mean_mass_k /= static_cast<double>(records.size());
    for (std::size_t kk : report_ks(config.k)) {
        double mass = 0.0;
        for (const EvalRecord& r : records) mass += topk_mass(r, kk);
        metrics << "topk_mass," << kk << ','
                << (records.empty() ? 0.0 : mass / static_cast<double>(records.size())) << "\n";
    }

    std::ostringstream summary;
    summary << "Sessions evaluated: " << records.size() << "\n\n";
    summary << "Task 1 (click count <= L)\n";
    summary << "L        perplexity  baseline    auc       baseline_auc\n";
    for (int l = 0; l <= config.l_max; ++l) {
        std::vector<BinaryPrediction> model_preds, base_preds;
        model_preds.reserve(records.size());
        base_preds.reserve(records.size());
        for (const EvalRecord& r : records) {
            const bool label = static_cast<int>(r.observed.size()) <= l;
            model_preds.push_back({prob_clicks_le(r, l), label});
            base_preds.push_back({naive.p_clicks_le[static_cast<std::size_t>(l)], label});
        }
        const double ppl = binary_perplexity(model_preds);
        const double base_ppl = binary_perplexity(base_preds);
        const double a = safe_auc(model_preds);
        const double base_a = safe_auc(base_preds);
        metrics << "task1_perplexity," << l << ',' << ppl << "\n";
        metrics << "task1_perplexity_baseline," << l << ',' << base_ppl << "\n";
        metrics << "task1_auc," << l << ',' << a << "\n";
        metrics << "task1_auc_baseline," << l << ',' << base_a << "\n";
        summary << std::left << std::setw(9) << l << std::setw(12) << std::setprecision(5) << ppl
                << std::setw(12) << base_ppl << std::setw(10) << a << base_a << "\n";
    }

    {
        std::vector<BinaryPrediction> model_preds, base_preds;
        for (const EvalRecord& r : records) {
            const bool label = !is_ordered(r.observed);
            model_preds.push_back({prob_nonconsecutive(r), label});
            base_preds.push_back({naive.p_nonconsecutive, label});
        }
        const double ppl = binary_perplexity(model_preds);
        const double base_ppl = binary_perplexity(base_preds);
        const double a = safe_auc(model_preds);
        const double base_a = safe_auc(base_preds);
        metrics << "task2_perplexity,-," << ppl << "\n";
        metrics << "task2_perplexity_baseline,-," << base_ppl << "\n";
        metrics << "task2_auc,-," << a << "\n";
        metrics << "task2_auc_baseline,-," << base_a << "\n";
        summary << "\nTask 2 (non-consecutive order)\n";
        summary << "perplexity " << std::setprecision(5) << ppl << " (baseline " << base_ppl
                << "), auc " << a << " (baseline " << base_a << ")\n";
    }

    {
        // Task 3: per-position click prediction.
        std::vector<std::vector<BinaryPrediction>> model_pp(static_cast<std::size_t>(n));
        std::vector<std::vector<BinaryPrediction>> base_pp(static_cast<std::size_t>(n));
        std::vector<double> train_click_rate(static_cast<std::size_t>(n), 0.0);
        for (const QuerySession& s : split.train) {
            std::vector<bool> seen(static_cast<std::size_t>(n), false);
            for (const ClickEvent& c : s.clicks) seen[static_cast<std::size_t>(c.position - 1)] = true;
            for (int p = 0; p < n; ++p) {
                if (seen[static_cast<std::size_t>(p)]) train_click_rate[static_cast<std::size_t>(p)] += 1.0;
            }
        }
        for (double& r : train_click_rate) r /= static_cast<double>(split.train.size());

        for (const EvalRecord& r : records) {
            const std::vector<double> probs = click_prob_positions(r, n);
            std::vector<bool> clicked(static_cast<std::size_t>(n), false);
            for (int pos : r.observed) clicked[static_cast<std::size_t>(pos - 1)] = true;
            for (int p = 0; p < n; ++p) {
                model_pp[static_cast<std::size_t>(p)].push_back(
                    {probs[static_cast<std::size_t>(p)], clicked[static_cast<std::size_t>(p)]});
                base_pp[static_cast<std::size_t>(p)].push_back(
                    {train_click_rate[static_cast<std::size_t>(p)], clicked[static_cast<std::size_t>(p)]});
            }
        }
        const ClickPerplexity model_ppl = click_perplexity(model_pp);
        const ClickPerplexity base_ppl = click_perplexity(base_pp);
        for (int p = 0; p < n; ++p) {
            metrics << "task3_perplexity," << (p + 1) << ',' << model_ppl.per_position[static_cast<std::size_t>(p)] << "\n";
        }
        metrics << "task3_perplexity,mean," << model_ppl.mean << "\n";
        metrics << "task3_perplexity_baseline,mean," << base_ppl.mean << "\n";
        summary << "\nTask 3 (click prediction)\n";
        summary << "mean per-position perplexity " << std::setprecision(5) << model_ppl.mean
                << " (baseline " << base_ppl.mean << ")";

        if (config.eval_oracle) {
            std::vector<std::vector<BinaryPrediction>> oracle_pp(static_cast<std::size_t>(n));
            for (std::size_t i = 0; i < records.size(); ++i) {
                const std::array<double, kSerpSize> probs =
                    oracle_click_probabilities(config.sim, split.eval[i].query_id);
                std::vector<bool> clicked(static_cast<std::size_t>(n), false);
                for (int pos : records[i].observed) clicked[static_cast<std::size_t>(pos - 1)] = true;
                for (int p = 0; p < n; ++p) {
                    oracle_pp[static_cast<std::size_t>(p)].push_back(
                        {probs[static_cast<std::size_t>(p)], clicked[static_cast<std::size_t>(p)]});
                }
            }
            const ClickPerplexity oracle_ppl = click_perplexity(oracle_pp);
            metrics << "task3_perplexity_oracle,mean," << oracle_ppl.mean << "\n";
            summary << ", oracle bound " << oracle_ppl.mean;
        }
        summary << "\n";
    }

    metrics.close();
    {
        std::ofstream f = open_report(dir, "summary.txt", fp, &outcome.report_files);
        f << summary.str();
    }

    outcome.recall_at_1 = recall_at_k(records, 1);
    outcome.recall_at_k = recall_at_k(records, config.k);
    outcome.mean_topk_mass = mean_mass_k;
    out << summary.str();
    out << "recall@1 " << outcome.recall_at_1 << ", recall@" << config.k << ' '
        << outcome.recall_at_k << ", mean top-K mass " << outcome.mean_topk_mass << "\n";
    out << "reports in " << dir << "\n";
    return outcome;
}

}  // namespace csm
