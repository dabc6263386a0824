#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>
#include <sstream>

#include "csm/beam.hpp"
#include "csm/checkpoint.hpp"
#include "csm/metrics.hpp"
#include "csm/model.hpp"
#include "csm/simulator.hpp"

namespace py = pybind11;
using namespace csm;

namespace {

std::array<std::uint64_t, kSerpSize> to_results(const std::vector<std::uint64_t>& ids) {
    if (ids.size() != kSerpSize) throw std::invalid_argument("expected exactly 10 result ids");
    std::array<std::uint64_t, kSerpSize> out{};
    std::copy(ids.begin(), ids.end(), out.begin());
    return out;
}

std::vector<std::pair<ClickSequence, double>> to_pairs(const std::vector<ScoredSequence>& seqs) {
    std::vector<std::pair<ClickSequence, double>> out;
    out.reserve(seqs.size());
    for (const ScoredSequence& s : seqs) out.emplace_back(s.sequence, s.log_prob);
    return out;
}

std::vector<BinaryPrediction> to_predictions(const std::vector<std::pair<double, bool>>& pairs) {
    std::vector<BinaryPrediction> preds;
    preds.reserve(pairs.size());
    for (const auto& [p, label] : pairs) preds.push_back({p, label});
    return preds;
}

}  // namespace

PYBIND11_MODULE(_csm, m) {
    m.doc() = "click sequence model toolkit";

    py::class_<ClickEvent>(m, "ClickEvent")
        .def(py::init<>())
        .def_readwrite("time_passed", &ClickEvent::time_passed)
        .def_readwrite("position", &ClickEvent::position);

    py::class_<QuerySession>(m, "QuerySession")
        .def(py::init<>())
        .def_readwrite("session_id", &QuerySession::session_id)
        .def_readwrite("query_id", &QuerySession::query_id)
        .def_readwrite("region_id", &QuerySession::region_id)
        .def_property(
            "results",
            [](const QuerySession& s) {
                return std::vector<std::uint64_t>(s.results.begin(), s.results.end());
            },
            [](QuerySession& s, const std::vector<std::uint64_t>& ids) { s.results = to_results(ids); })
        .def_property(
            "clicks",
            [](const QuerySession& s) { return s.clicks; },
            [](QuerySession& s, const std::vector<ClickEvent>& clicks) { s.clicks = clicks; })
        .def("click_sequence", [](const QuerySession& s) { return click_sequence_of(s); });

    m.def("parse_log", [](const std::string& text) {
        std::istringstream in(text);
        ParseResult r = parse_log(in);
        return py::make_tuple(r.sessions, r.counters.skipped_records, r.counters.dropped_clicks);
    });
    m.def("write_log", [](const std::vector<QuerySession>& sessions) {
        std::ostringstream out;
        write_log(out, sessions);
        return out.str();
    });
    m.def("is_ordered", &is_ordered);
    m.def("session_stats", [](const std::vector<QuerySession>& sessions) {
        SessionStats stats = session_stats(sessions);
        std::vector<std::pair<std::uint64_t, std::uint64_t>> rows;
        for (const auto& row : stats.counts) rows.emplace_back(row[0], row[1]);
        return rows;
    });
    m.def(
        "split_sessions",
        [](const std::vector<QuerySession>& sessions, double fraction, std::size_t eval_sample,
           std::uint64_t seed) {
            SplitResult s = split_sessions(sessions, fraction, eval_sample, seed);
            return py::make_tuple(s.train, s.eval);
        },
        py::arg("sessions"), py::arg("train_fraction"), py::arg("eval_sample_size"), py::arg("seed"));

    py::enum_<UserModelKind>(m, "UserModelKind")
        .value("position_decay", UserModelKind::position_decay)
        .value("cascade", UserModelKind::cascade);

    py::class_<SimulatorConfig>(m, "SimulatorConfig")
        .def(py::init<>())
        .def_readwrite("kind", &SimulatorConfig::kind)
        .def_property(
            "attractiveness",
            [](const SimulatorConfig& c) {
                return std::vector<double>(c.attractiveness.begin(), c.attractiveness.end());
            },
            [](SimulatorConfig& c, const std::vector<double>& a) {
                if (a.size() != kSerpSize) throw std::invalid_argument("need 10 values");
                std::copy(a.begin(), a.end(), c.attractiveness.begin());
            })
        .def_readwrite("continuation", &SimulatorConfig::continuation)
        .def_readwrite("revisit", &SimulatorConfig::revisit)
        .def_readwrite("query_spread", &SimulatorConfig::query_spread)
        .def_readwrite("max_clicks", &SimulatorConfig::max_clicks)
        .def_readwrite("seed", &SimulatorConfig::seed);

    m.def("simulate_log", &simulate_log, py::arg("config"), py::arg("n_sessions"),
          py::arg("n_queries"), py::arg("n_docs"));
    m.def("oracle_distribution", &oracle_distribution, py::arg("config"), py::arg("query_id"),
          py::arg("budget") = 1000000);

    py::class_<PatternStats>(m, "PatternStats")
        .def(py::init<int>(), py::arg("n_positions") = kSerpSize)
        .def("add_session", &PatternStats::add_session)
        .def("n_positions", &PatternStats::n_positions)
        .def("fingerprint", &PatternStats::fingerprint)
        .def("query_feature",
             [](const PatternStats& s, std::uint64_t q) {
                 SparseFeature f = s.query_feature(q);
                 return py::make_tuple(f.dimension, f.entries);
             })
        .def("result_feature",
             [](const PatternStats& s, std::uint64_t q, std::uint64_t d) {
                 SparseFeature f = s.result_feature(q, d);
                 return py::make_tuple(f.dimension, f.entries);
             })
        .def("save",
             [](const PatternStats& s, const std::string& path) {
                 std::ofstream out(path, std::ios::binary);
                 if (!out) throw std::runtime_error("cannot write " + path);
                 s.save(out);
             })
        .def_static("load", [](const std::string& path) {
            std::ifstream in(path, std::ios::binary);
            if (!in) throw std::runtime_error("cannot open " + path);
            return PatternStats::load(in);
        });

    m.def("count_patterns", [](const std::vector<QuerySession>& sessions, int n_positions) {
        return count_patterns(sessions, n_positions);
    }, py::arg("sessions"), py::arg("n_positions") = kSerpSize);

    py::class_<ModelConfig>(m, "ModelConfig")
        .def(py::init<>())
        .def_readwrite("n_positions", &ModelConfig::n_positions)
        .def_readwrite("state_dim", &ModelConfig::state_dim)
        .def_readwrite("pos_dim", &ModelConfig::pos_dim)
        .def_readwrite("attn_dim", &ModelConfig::attn_dim)
        .def_readwrite("feed_fresh_attention", &ModelConfig::feed_fresh_attention)
        .def_readwrite("max_train_clicks", &ModelConfig::max_train_clicks);

    py::class_<CsmParams>(m, "CsmParams")
        .def_static("init", &CsmParams::init, py::arg("config"), py::arg("seed"))
        .def_property_readonly("config", [](const CsmParams& p) { return p.config; });

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("epochs", &TrainConfig::epochs)
        .def_readwrite("lr", &TrainConfig::lr)
        .def_readwrite("clip_norm", &TrainConfig::clip_norm)
        .def_readwrite("seed", &TrainConfig::seed);

    m.def(
        "train",
        [](CsmParams& params, const PatternStats& stats, const std::vector<QuerySession>& sessions,
           const TrainConfig& config) {
            TrainResult r = train(params, stats, sessions, config);
            return py::make_tuple(r.epoch_mean_nll, r.truncated_sessions);
        },
        py::arg("params"), py::arg("stats"), py::arg("sessions"), py::arg("config"));

    m.def(
        "sequence_log_prob",
        [](const CsmParams& params, const PatternStats& stats, std::uint64_t query,
           const std::vector<std::uint64_t>& results, const ClickSequence& seq) {
            return sequence_log_prob(params, stats, query, results, seq);
        },
        py::arg("params"), py::arg("stats"), py::arg("query_id"), py::arg("results"),
        py::arg("sequence"));

    m.def(
        "beam_search",
        [](const CsmParams& params, const PatternStats& stats, std::uint64_t query,
           const std::vector<std::uint64_t>& results, std::size_t k, std::size_t beam_size,
           std::size_t max_len) {
            BeamResult r = beam_search(params, stats, query, results, k, beam_size, max_len);
            return py::make_tuple(to_pairs(r.sequences), r.truncated);
        },
        py::arg("params"), py::arg("stats"), py::arg("query_id"), py::arg("results"), py::arg("k"),
        py::arg("beam_size"), py::arg("max_len"));

    m.def(
        "exhaustive_enumerate",
        [](const CsmParams& params, const PatternStats& stats, std::uint64_t query,
           const std::vector<std::uint64_t>& results, std::size_t max_len, std::size_t budget) {
            Enumeration e = exhaustive_enumerate(params, stats, query, results, max_len, budget);
            return py::make_tuple(to_pairs(e.sequences), e.open_prefix_mass);
        },
        py::arg("params"), py::arg("stats"), py::arg("query_id"), py::arg("results"),
        py::arg("max_len"), py::arg("budget") = 1000000);

    m.def("auc", [](const std::vector<std::pair<double, bool>>& pairs) {
        const std::vector<BinaryPrediction> preds = to_predictions(pairs);
        return auc(preds);
    });
    m.def("binary_perplexity", [](const std::vector<std::pair<double, bool>>& pairs) {
        const std::vector<BinaryPrediction> preds = to_predictions(pairs);
        return binary_perplexity(preds);
    });

    m.def("save_checkpoint",
          [](const std::string& path, const CsmParams& params, std::uint64_t stats_fingerprint) {
              std::ofstream out(path, std::ios::binary);
              if (!out) throw std::runtime_error("cannot write " + path);
              Checkpoint ckpt;
              ckpt.params = params;
              ckpt.stats_fingerprint = stats_fingerprint;
              save_checkpoint(out, ckpt);
          },
          py::arg("path"), py::arg("params"), py::arg("stats_fingerprint") = 0);
    m.def("load_checkpoint", [](const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot open " + path);
        LoadedCheckpoint loaded = load_checkpoint(in, 0);
        return loaded.checkpoint.params;
    });

    m.attr("SERP_SIZE") = kSerpSize;
}
