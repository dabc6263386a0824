#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "csm/model.hpp"
#include "csm/simulator.hpp"

namespace csm {

/// Everything a command run needs. Loaded from a flat `key = value` file,
/// overridable per key with --set, seeded from a named preset.
struct RunConfig {
    // paths
    std::string log_path = "sessions.log";
    std::string stats_path = "patterns.pats";
    std::string checkpoint_path = "model.ckpt";
    std::string out_dir = "out";

    ModelConfig model;

    // split
    double train_fraction = 0.5;
    std::size_t eval_sample = 2000;
    std::uint64_t split_seed = 7;

    // training
    int batch = 64;
    int epochs = 3;
    double lr = 1e-3;
    double clip = 1.0;
    std::uint64_t train_seed = 1;

    // beam
    std::size_t k = 128;
    std::size_t beam_size = 0;  // 0 = same as k
    std::size_t max_len = 20;

    // eval
    int l_max = 5;
    int threads = 0;  // 0 = hardware concurrency
    bool eval_oracle = false;  // also report the simulator ground-truth bound

    // synthesis
    SimulatorConfig sim;
    std::size_t synth_sessions = 50000;
    std::uint64_t synth_queries = 400;
    std::uint64_t synth_docs = 4000;

    std::size_t effective_beam() const { return beam_size == 0 ? k : beam_size; }
};

/// Named presets: "desk" (small, minutes on a laptop) and "paper"
/// (d=256, K=1024, the scale of the original experiments).
RunConfig preset_config(const std::string& name);

/// Applies one `key=value` override; throws std::invalid_argument on unknown
/// keys or bad values.
void apply_config_value(RunConfig& config, const std::string& key, const std::string& value);

/// Reads `key = value` lines (# comments) on top of `base`.
RunConfig load_run_config(std::istream& in, RunConfig base);

/// Canonical serialization (fixed key order, full precision); the fingerprint
/// embedded in every report is the FNV-1a hash of this text.
std::string canonical_config(const RunConfig& config);
std::uint64_t config_fingerprint(const RunConfig& config);

}  // namespace csm
