#include "csm/runconfig.hpp"

#include <istream>
#include <sstream>
#include <stdexcept>

namespace csm {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t");
    std::size_t e = s.find_last_not_of(" \t");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

double to_double(const std::string& v) { return std::stod(v); }
int to_int(const std::string& v) { return std::stoi(v); }
std::uint64_t to_u64(const std::string& v) { return std::stoull(v); }
std::size_t to_size(const std::string& v) { return static_cast<std::size_t>(std::stoull(v)); }

bool to_bool(const std::string& v) {
    if (v == "1" || v == "true" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "no") return false;
    throw std::invalid_argument("expected a boolean, got: " + v);
}

std::string format_double(double x) {
    std::ostringstream os;
    os.precision(17);
    os << x;
    return os.str();
}

}  // namespace

RunConfig preset_config(const std::string& name) {
    RunConfig config;
    // Desk-scale simulator: gently decaying attractiveness, moderate
    // continuation, occasional revisits. The per-query spread is large enough
    // that the most likely first click differs across queries, so conditional
    // models have something to learn beyond the global frequencies.
    config.sim.kind = UserModelKind::position_decay;
    config.sim.attractiveness = {0.50, 0.45, 0.40, 0.30, 0.22, 0.16, 0.12, 0.09, 0.07, 0.05};
    config.sim.continuation = 0.55;
    config.sim.revisit = 0.12;
    config.sim.query_spread = 0.75;
    config.sim.max_clicks = 4;
    config.sim.seed = 1;

    if (name == "desk") {
        config.model.state_dim = 32;
        config.model.pos_dim = 32;
        config.model.attn_dim = 32;
        config.k = 128;
        config.epochs = 3;
        config.synth_sessions = 50000;
    } else if (name == "paper") {
        config.model.state_dim = 256;
        config.model.pos_dim = 256;
        config.model.attn_dim = 256;
        config.k = 1024;
        config.epochs = 1;
        config.eval_sample = 100000;
        config.synth_sessions = 1000000;
    } else {
        throw std::invalid_argument("unknown preset: " + name);
    }
    return config;
}

void apply_config_value(RunConfig& config, const std::string& key, const std::string& value) {
    try {
        if (key == "log") config.log_path = value;
        else if (key == "stats") config.stats_path = value;
        else if (key == "checkpoint") config.checkpoint_path = value;
        else if (key == "out_dir") config.out_dir = value;
        else if (key == "model.d") config.model.state_dim = to_int(value);
        else if (key == "model.d_pos") config.model.pos_dim = to_int(value);
        else if (key == "model.attn") config.model.attn_dim = to_int(value);
        else if (key == "model.feed_fresh_attention") config.model.feed_fresh_attention = to_bool(value);
        else if (key == "model.max_train_clicks") config.model.max_train_clicks = to_int(value);
        else if (key == "split.fraction") config.train_fraction = to_double(value);
        else if (key == "split.eval_sample") config.eval_sample = to_size(value);
        else if (key == "split.seed") config.split_seed = to_u64(value);
        else if (key == "train.batch") config.batch = to_int(value);
        else if (key == "train.epochs") config.epochs = to_int(value);
        else if (key == "train.lr") config.lr = to_double(value);
        else if (key == "train.clip") config.clip = to_double(value);
        else if (key == "train.seed") config.train_seed = to_u64(value);
        else if (key == "beam.k") config.k = to_size(value);
        else if (key == "beam.size") config.beam_size = to_size(value);
        else if (key == "beam.max_len") config.max_len = to_size(value);
        else if (key == "eval.l_max") config.l_max = to_int(value);
        else if (key == "eval.threads") config.threads = to_int(value);
        else if (key == "eval.oracle") config.eval_oracle = to_bool(value);
        else if (key == "synth.kind") {
            if (value == "position-decay") config.sim.kind = UserModelKind::position_decay;
            else if (value == "cascade-with-abandonment") config.sim.kind = UserModelKind::cascade;
            else throw std::invalid_argument("unknown synth.kind: " + value);
        } else if (key == "synth.attractiveness") {
            std::stringstream ss(value);
            std::string item;
            int i = 0;
            while (std::getline(ss, item, ',')) {
                if (i >= kSerpSize) throw std::invalid_argument("too many attractiveness values");
                config.sim.attractiveness[i++] = to_double(item);
            }
            if (i != kSerpSize) throw std::invalid_argument("synth.attractiveness needs 10 values");
        }
        else if (key == "synth.continuation") config.sim.continuation = to_double(value);
        else if (key == "synth.revisit") config.sim.revisit = to_double(value);
        else if (key == "synth.query_spread") config.sim.query_spread = to_double(value);
        else if (key == "synth.max_clicks") config.sim.max_clicks = to_int(value);
        else if (key == "synth.seed") config.sim.seed = to_u64(value);
        else if (key == "synth.sessions") config.synth_sessions = to_size(value);
        else if (key == "synth.queries") config.synth_queries = to_u64(value);
        else if (key == "synth.docs") config.synth_docs = to_u64(value);
        else throw std::invalid_argument("unknown config key: " + key);
    } catch (const std::invalid_argument&) {
        throw;
    } catch (const std::exception&) {
        throw std::invalid_argument("bad value for " + key + ": " + value);
    }
}

RunConfig load_run_config(std::istream& in, RunConfig base) {
    std::string line;
    while (std::getline(in, line)) {
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (!key.empty()) apply_config_value(base, key, value);
    }
    return base;
}

std::string canonical_config(const RunConfig& c) {
    std::ostringstream os;
    os << "log=" << c.log_path << '\n';
    os << "stats=" << c.stats_path << '\n';
    os << "checkpoint=" << c.checkpoint_path << '\n';
    os << "out_dir=" << c.out_dir << '\n';
    os << "model.n=" << c.model.n_positions << '\n';
    os << "model.d=" << c.model.state_dim << '\n';
    os << "model.d_pos=" << c.model.pos_dim << '\n';
    os << "model.attn=" << c.model.attn_dim << '\n';
    os << "model.feed_fresh_attention=" << (c.model.feed_fresh_attention ? 1 : 0) << '\n';
    os << "model.max_train_clicks=" << c.model.max_train_clicks << '\n';
    os << "split.fraction=" << format_double(c.train_fraction) << '\n';
    os << "split.eval_sample=" << c.eval_sample << '\n';
    os << "split.seed=" << c.split_seed << '\n';
    os << "train.batch=" << c.batch << '\n';
    os << "train.epochs=" << c.epochs << '\n';
    os << "train.lr=" << format_double(c.lr) << '\n';
    os << "train.clip=" << format_double(c.clip) << '\n';
    os << "train.seed=" << c.train_seed << '\n';
    os << "beam.k=" << c.k << '\n';
    os << "beam.size=" << c.beam_size << '\n';
    os << "beam.max_len=" << c.max_len << '\n';
    os << "eval.l_max=" << c.l_max << '\n';
    os << "eval.threads=" << c.threads << '\n';
    os << "eval.oracle=" << (c.eval_oracle ? 1 : 0) << '\n';
    os << "synth.kind="
       << (c.sim.kind == UserModelKind::position_decay ? "position-decay" : "cascade-with-abandonment")
       << '\n';
    os << "synth.attractiveness=";
    for (int i = 0; i < kSerpSize; ++i) {
        if (i) os << ',';
        os << format_double(c.sim.attractiveness[i]);
    }
    os << '\n';
    os << "synth.continuation=" << format_double(c.sim.continuation) << '\n';
    os << "synth.revisit=" << format_double(c.sim.revisit) << '\n';
    os << "synth.query_spread=" << format_double(c.sim.query_spread) << '\n';
    os << "synth.max_clicks=" << c.sim.max_clicks << '\n';
    os << "synth.seed=" << c.sim.seed << '\n';
    os << "synth.sessions=" << c.synth_sessions << '\n';
    os << "synth.queries=" << c.synth_queries << '\n';
    os << "synth.docs=" << c.synth_docs << '\n';
    return os.str();
}

std::uint64_t config_fingerprint(const RunConfig& config) {
    const std::string text = canonical_config(config);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace csm
