#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "csm/checkpoint.hpp"
#include "csm/runs.hpp"
#include "test_support.hpp"

using namespace csm;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("csm_test_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

RunConfig small_config(const TempDir& dir, std::uint64_t seed) {
    RunConfig config = preset_config("desk");
    config.log_path = dir.file("sessions.log");
    config.stats_path = dir.file("patterns.pats");
    config.checkpoint_path = dir.file("model.ckpt");
    config.out_dir = dir.file("out");
    config.synth_sessions = 600;
    config.synth_queries = 8;
    config.synth_docs = 100;
    config.eval_sample = 60;
    config.epochs = 1;
    config.k = 8;
    config.max_len = 6;
    config.threads = 2;
    config.sim.seed = seed;
    config.split_seed = seed;
    config.train_seed = seed;
    return config;
}

std::string first_line(const std::string& path) {
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    return line;
}

}  // namespace

TEST_CASE("checkpoints round-trip bit-exactly") {
    ModelConfig mc;
    mc.n_positions = 3;
    mc.state_dim = 5;
    mc.pos_dim = 4;
    mc.attn_dim = 6;
    Checkpoint ckpt;
    ckpt.params = CsmParams::init(mc, 321);
    ckpt.stats_fingerprint = 0xabcdef;
    ckpt.config_fingerprint = 0x123456;

    std::stringstream buf;
    save_checkpoint(buf, ckpt);
    LoadedCheckpoint loaded = load_checkpoint(buf, 0xabcdef);
    CHECK_FALSE(loaded.stats_mismatch);
    CHECK(loaded.checkpoint.stats_fingerprint == 0xabcdef);
    CHECK(loaded.checkpoint.config_fingerprint == 0x123456);
    CHECK(loaded.checkpoint.params.config == mc);

    bool identical = true;
    ckpt.params.for_each([&](const std::string& name, Tensor& t) {
        loaded.checkpoint.params.for_each([&](const std::string& name2, Tensor& t2) {
            if (name == name2 && !(t == t2)) identical = false;
        });
    });
    CHECK(identical);

    // Serialization is deterministic byte-for-byte.
    std::stringstream again;
    save_checkpoint(again, ckpt);
    CHECK(buf.str() == again.str());

    std::stringstream mismatch(buf.str());
    CHECK(load_checkpoint(mismatch, 0xdead).stats_mismatch);

    std::istringstream garbage("nonsense");
    CHECK_THROWS(load_checkpoint(garbage, 0));
}

TEST_CASE("run_synth is deterministic and reports the histogram") {
    TempDir dir("synth");
    RunConfig config = small_config(dir, 5);

    std::ostringstream out1, out2;
    SynthOutcome o1 = run_synth(config, out1);
    const std::uint64_t hash1 = file_fingerprint(config.log_path);
    SynthOutcome o2 = run_synth(config, out2);
    CHECK(o1.sessions_written == 600);
    CHECK(file_fingerprint(config.log_path) == hash1);
    CHECK(o1.stats.total() == o2.stats.total());
    CHECK(out1.str() == out2.str());
}

TEST_CASE("run_synth with zero sessions writes an empty log") {
    TempDir dir("synth0");
    RunConfig config = small_config(dir, 5);
    config.synth_sessions = 0;
    std::ostringstream out;
    SynthOutcome o = run_synth(config, out);
    CHECK(o.sessions_written == 0);
    CHECK(fs::file_size(config.log_path) == 0);
}

TEST_CASE("run_synth with revisit 0 yields no unordered rows") {
    TempDir dir("synthord");
    RunConfig config = small_config(dir, 6);
    config.sim.revisit = 0.0;
    std::ostringstream out;
    SynthOutcome o = run_synth(config, out);
    for (int row = 0; row < SessionStats::kRows; ++row) CHECK(o.stats.counts[row][1] == 0);
}

TEST_CASE("run_stats mirrors session_stats and writes the csv report") {
    TempDir dir("stats");
    RunConfig config = small_config(dir, 7);
    std::ostringstream out;
    run_synth(config, out);
    StatsOutcome stats = run_stats(config, out);
    CHECK(stats.stats.total() == 600);
    CHECK(fs::exists(fs::path(config.out_dir) / "session_stats.csv"));
    CHECK(first_line((fs::path(config.out_dir) / "session_stats.csv").string()).starts_with("# config="));
}

TEST_CASE("run_train with zero epochs emits a single pre-training loss entry") {
    TempDir dir("train0");
    RunConfig config = small_config(dir, 8);
    config.epochs = 0;
    std::ostringstream out;
    run_synth(config, out);
    TrainOutcome outcome = run_train(config, out);
    CHECK_FALSE(outcome.diverged);
    REQUIRE(outcome.epoch_mean_nll.size() == 1);
    // Sequence NLL sums L+1 nearly-uniform steps; with max_clicks = 4 it must
    // land between one and five times ln(11).
    CHECK(outcome.epoch_mean_nll[0] > std::log(11.0));
    CHECK(outcome.epoch_mean_nll[0] < 5 * std::log(11.0));
    CHECK(fs::exists(config.checkpoint_path));
    CHECK(fs::exists(fs::path(config.out_dir) / "loss_curve.csv"));
}

TEST_CASE("fixed seeds reproduce the checkpoint hash exactly") {
    TempDir dir("det");
    RunConfig config = small_config(dir, 9);
    config.synth_sessions = 300;
    config.eval_sample = 30;
    std::ostringstream out;
    run_synth(config, out);
    TrainOutcome a = run_train(config, out);
    TrainOutcome b = run_train(config, out);
    CHECK(a.checkpoint_fingerprint == b.checkpoint_fingerprint);
    CHECK(a.stats_fingerprint == b.stats_fingerprint);
    CHECK(a.epoch_mean_nll == b.epoch_mean_nll);
}

TEST_CASE("a diverging run still writes a diagnostic checkpoint") {
    TempDir dir("diverge");
    RunConfig config = small_config(dir, 10);
    config.synth_sessions = 200;
    config.eval_sample = 20;
    config.lr = 1e18;  // guaranteed blow-up
    config.epochs = 2;
    std::ostringstream out;
    run_synth(config, out);
    TrainOutcome outcome = run_train(config, out);
    CHECK(outcome.diverged);
    CHECK(fs::exists(config.checkpoint_path));
}

TEST_CASE("run_predict prints sorted rows and handles unknown queries") {
    TempDir dir("predict");
    RunConfig config = small_config(dir, 11);
    config.synth_sessions = 300;
    config.eval_sample = 30;
    std::ostringstream out;
    run_synth(config, out);
    run_train(config, out);

    std::vector<std::uint64_t> results{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    std::ostringstream listing;
    PredictOutcome outcome = run_predict(config, 999999, results, listing);
    REQUIRE(!outcome.sequences.empty());
    for (std::size_t i = 1; i < outcome.sequences.size(); ++i) {
        CHECK(outcome.sequences[i - 1].log_prob >= outcome.sequences[i].log_prob);
    }
}

TEST_CASE("prediction lines follow the probability-tab-positions format") {
    CHECK(format_prediction_line({{}, std::log(0.25)}) == "0.25\tEOS");
    CHECK(format_prediction_line({{3, 1, 2}, std::log(0.125)}) == "0.125\t3 1 2");
    CHECK(format_prediction_line({{1}, std::log(1.0 / 3)}) == "0.333333\t1");
}

TEST_CASE("overfit scenario: eval on the training distribution reaches recall@1 = 1") {
    TempDir dir("overfit");
    RunConfig config = small_config(dir, 12);
    // Degenerate simulator: every session clicks exactly result 1.
    config.sim.attractiveness = {1.0, 0, 0, 0, 0, 0, 0, 0, 0, 0};
    config.sim.continuation = 0.0;
    config.sim.revisit = 0.0;
    config.sim.query_spread = 0.0;
    config.synth_sessions = 400;
    config.synth_queries = 2;
    config.eval_sample = 40;
    config.epochs = 4;
    config.lr = 0.01;
    config.model.state_dim = 8;
    config.model.pos_dim = 8;
    config.model.attn_dim = 8;
    config.k = 4;

    std::ostringstream out;
    run_synth(config, out);
    run_train(config, out);
    EvalOutcome eval = run_eval(config, out);
    CHECK(eval.recall_at_1 == doctest::Approx(1.0));
    CHECK(eval.sessions == 40);
}

TEST_CASE("run_eval writes the full report set with monotone recall curves") {
    TempDir dir("eval");
    RunConfig config = small_config(dir, 13);
    config.synth_sessions = 400;
    config.eval_sample = 40;
    std::ostringstream out;
    run_synth(config, out);
    run_train(config, out);
    EvalOutcome eval = run_eval(config, out);

    for (const char* name :
         {"recalls.csv", "recalls_in_ordered_group.csv", "recalls_in_unordered_group.csv",
          "recalls_in_group_0.csv", "recalls_in_group_5.csv",
          "total_probability_of_k_most_probable_sequences.csv", "metrics.csv", "summary.txt"}) {
        CHECK(fs::exists(fs::path(config.out_dir) / name));
    }

    std::ifstream recalls(fs::path(config.out_dir) / "recalls.csv");
    std::string line;
    std::getline(recalls, line);  // fingerprint comment
    CHECK(line.starts_with("# config="));
    std::getline(recalls, line);  // header
    CHECK(line == "rank,recall");
    double prev = -1.0;
    std::size_t rows = 0;
    while (std::getline(recalls, line)) {
        const double r = std::stod(line.substr(line.find(',') + 1));
        CHECK(r >= prev);
        prev = r;
        rows += 1;
    }
    CHECK(rows == config.k);
    CHECK(eval.recall_at_k == doctest::Approx(prev));
}

TEST_CASE("fixed-seed train and eval runs produce identical report bytes") {
    TempDir dir("repro");
    RunConfig config = small_config(dir, 14);
    config.synth_sessions = 300;
    config.eval_sample = 24;
    config.k = 6;

    std::ostringstream out;
    run_synth(config, out);
    run_train(config, out);
    run_eval(config, out);
    const std::uint64_t metrics1 = file_fingerprint((fs::path(config.out_dir) / "metrics.csv").string());
    const std::uint64_t recalls1 = file_fingerprint((fs::path(config.out_dir) / "recalls.csv").string());
    const std::uint64_t ckpt1 = file_fingerprint(config.checkpoint_path);

    run_train(config, out);
    run_eval(config, out);
    CHECK(file_fingerprint((fs::path(config.out_dir) / "metrics.csv").string()) == metrics1);
    CHECK(file_fingerprint((fs::path(config.out_dir) / "recalls.csv").string()) == recalls1);
    CHECK(file_fingerprint(config.checkpoint_path) == ckpt1);
}

TEST_CASE("evaluation records are identical for any worker count") {
    TempDir dir("threads");
    RunConfig config = small_config(dir, 16);
    config.synth_sessions = 200;
    config.eval_sample = 24;
    std::ostringstream out;
    run_synth(config, out);
    run_train(config, out);

    std::ifstream stats_in(config.stats_path, std::ios::binary);
    PatternStats stats = PatternStats::load(stats_in);
    std::ifstream ckpt_in(config.checkpoint_path, std::ios::binary);
    CsmParams params = load_checkpoint(ckpt_in, 0).checkpoint.params;

    std::vector<QuerySession> sessions = simulate_log(config.sim, 200, 8, 100);
    SplitResult split = split_sessions(sessions, 0.5, 24, config.split_seed);

    std::vector<EvalRecord> one = evaluate_sessions(params, stats, split.eval, 8, 8, 6, 1);
    std::vector<EvalRecord> three = evaluate_sessions(params, stats, split.eval, 8, 8, 6, 3);
    REQUIRE(one.size() == three.size());
    for (std::size_t i = 0; i < one.size(); ++i) {
        CHECK(one[i].observed == three[i].observed);
        REQUIRE(one[i].top_k.size() == three[i].top_k.size());
        for (std::size_t j = 0; j < one[i].top_k.size(); ++j) {
            CHECK(one[i].top_k[j].sequence == three[i].top_k[j].sequence);
            CHECK(one[i].top_k[j].log_prob == three[i].top_k[j].log_prob);
        }
    }
}

TEST_CASE("the output-dir environment override wins") {
    TempDir dir("envdir");
    RunConfig config = small_config(dir, 15);
    std::ostringstream out;
    run_synth(config, out);

    const std::string override_dir = dir.file("elsewhere");
    ::setenv(kOutDirEnvVar, override_dir.c_str(), 1);
    run_stats(config, out);
    ::unsetenv(kOutDirEnvVar);
    CHECK(fs::exists(fs::path(override_dir) / "session_stats.csv"));
    CHECK_FALSE(fs::exists(fs::path(config.out_dir) / "session_stats.csv"));
}

TEST_CASE("run configs load from files with overrides and fingerprints") {
    RunConfig base = preset_config("desk");
    std::istringstream file(
        "# run config\n"
        "train.epochs = 7\n"
        "beam.k = 32\n"
        "synth.continuation = 0.4\n");
    RunConfig loaded = load_run_config(file, base);
    CHECK(loaded.epochs == 7);
    CHECK(loaded.k == 32);
    CHECK(loaded.sim.continuation == doctest::Approx(0.4));

    CHECK(config_fingerprint(loaded) != config_fingerprint(base));
    apply_config_value(loaded, "train.epochs", "3");
    CHECK(loaded.epochs == 3);
    CHECK_THROWS_AS(apply_config_value(loaded, "no.such.key", "1"), std::invalid_argument);

    CHECK_THROWS_AS(preset_config("galaxy"), std::invalid_argument);
}
