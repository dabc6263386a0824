#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "csm/model.hpp"

namespace csm {

/// Checkpoint payload: parameters, their hyperparameters, and the fingerprint
/// of the PatternStats the model was trained against.
struct Checkpoint {
    CsmParams params;
    std::uint64_t stats_fingerprint = 0;
    std::uint64_t config_fingerprint = 0;  // fingerprint of the run configuration
};

void save_checkpoint(std::ostream& out, const Checkpoint& ckpt);

struct LoadedCheckpoint {
    Checkpoint checkpoint;
    /// Set when the provided stats fingerprint did not match; loading still
    /// succeeds (warning-level event, reported by callers).
    bool stats_mismatch = false;
};

/// expected_stats_fingerprint == 0 skips the mismatch check.
LoadedCheckpoint load_checkpoint(std::istream& in, std::uint64_t expected_stats_fingerprint = 0);

/// FNV-1a over a file's bytes; used for determinism checks and reports.
std::uint64_t file_fingerprint(const std::string& path);

}  // namespace csm
