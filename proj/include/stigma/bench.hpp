#pragma once

// Experiment runner behind the stigma-bench CLI.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "stigma/cluster.hpp"
#include "stigma/institution.hpp"
#include "stigma/netsim.hpp"
#include "stigma/trainer.hpp"

namespace stigma::bench {

using netsim::DeviceClass;

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Experiment { init, consensus, training, edge_accuracy, transfer };

inline std::string_view to_string(Experiment e) {
    switch (e) {
    case Experiment::init: return "init";
    case Experiment::consensus: return "consensus";
    case Experiment::training: return "training";
    case Experiment::edge_accuracy: return "edge-accuracy";
    case Experiment::transfer: return "transfer";
    }
    return "?";
}

inline Experiment parse_experiment(std::string_view s) {
    for (auto e : {Experiment::init, Experiment::consensus, Experiment::training, Experiment::edge_accuracy,
                   Experiment::transfer})
        if (to_string(e) == s) return e;
    throw ConfigError("unknown experiment: " + std::string(s));
}


struct ExperimentConfig {
    Experiment experiment = Experiment::init;
    std::vector<std::size_t> institutions{3, 5, 7, 10};
    std::size_t repetitions = 10;
    std::uint64_t seed = 1;
    double leader_interval_ms = 30.0;
    double vote_delay_ms = 100.0;
    double join_interval_s = 10.0;
    double coord_cost_ms = 1.0;
    double jitter = netsim::kDefaultJitter;
    std::uint64_t size_bytes = 1'000'000;
    /// Hardware of every institution in the init/consensus experiments.
    DeviceClass placement = DeviceClass::es_medium;
    /// Devices swept by the training, edge-accuracy and transfer experiments.
    std::vector<DeviceClass> devices{netsim::kAllDevices.begin(), netsim::kAllDevices.end()};
    std::vector<double> accuracies{0.97, 0.85, 0.70};
    double train_accuracy = 0.97;
    std::size_t samples = 500;
    trainer::CostModel cost;
    std::size_t workers = 0;  // 0: hardware concurrency
    std::string out;

    consensus::ConsensusConfig consensus_config() const {
        consensus::ConsensusConfig c;
        c.leader_interval_ms = leader_interval_ms;
        c.vote_round_delay_ms = vote_delay_ms;
        c.join_interval_ms = join_interval_s * 1000.0;
        return c;
    }

    void validate() const {
        if (repetitions < 1) throw ConfigError("repetitions must be at least 1");
        if (institutions.empty()) throw ConfigError("institution list is empty");
        for (auto n : institutions)
            if (n < 1) throw ConfigError("institution counts must be at least 1");
        if (!(leader_interval_ms > 0.0) || !(vote_delay_ms > 0.0) || !(join_interval_s > 0.0))
            throw ConfigError("intervals must be positive");
        if (coord_cost_ms < 0.0) throw ConfigError("coordinator cost must be non-negative");
        if (jitter < 0.0 || jitter >= 1.0) throw ConfigError("jitter must lie in [0, 1)");
        if (devices.empty()) throw ConfigError("device list is empty");
        for (double a : accuracies)
            if (a <= 0.0 || a > 1.0) throw ConfigError("accuracies must lie in (0, 1]");
        if (samples < 2) throw ConfigError("need at least two samples");
        try {
            cost.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }

    /// Applies every key present in `j`; keys mirror the CLI flag names.
    void merge_json(const nlohmann::json& j) {
        try {
            for (const auto& [key, v] : j.items()) {
                if (key == "experiment") experiment = parse_experiment(v.get<std::string>());
                else if (key == "institutions") institutions = v.get<std::vector<std::size_t>>();
                else if (key == "reps") repetitions = v.get<std::size_t>();
                else if (key == "seed") seed = v.get<std::uint64_t>();
                else if (key == "leader-interval-ms") leader_interval_ms = v.get<double>();
                else if (key == "vote-delay-ms") vote_delay_ms = v.get<double>();
                else if (key == "join-interval-s") join_interval_s = v.get<double>();
                else if (key == "coord-cost-ms") coord_cost_ms = v.get<double>();
                else if (key == "jitter") jitter = v.get<double>();
                else if (key == "size-bytes") size_bytes = v.get<std::uint64_t>();
                else if (key == "placement") placement = netsim::parse_device(v.get<std::string>());
                else if (key == "devices") {
                    devices.clear();
                    for (const auto& d : v) devices.push_back(netsim::parse_device(d.get<std::string>()));
                } else if (key == "accuracies") accuracies = v.get<std::vector<double>>();
                else if (key == "train-accuracy") train_accuracy = v.get<double>();
                else if (key == "samples") samples = v.get<std::size_t>();
                else if (key == "cost") cost = trainer::CostModel::from_json(v);
                else if (key == "workers") workers = v.get<std::size_t>();
                else if (key == "out") out = v.get<std::string>();
                else throw ConfigError("unknown config key: " + key);
            }
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("bad config value: ") + e.what());
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
};

struct ResultRow {
    std::string experiment;
    std::string parameter;
    std::string run;  // run index, or "mean" / "stddev"
    std::uint64_t seed = 0;
    double value = 0.0;
    std::string unit = "ms";
    std::string status = "ok";
};

struct Summary {
    std::string parameter;
    std::size_t count = 0;
    double mean = 0.0;
    double stddev = 0.0;
    double cv = 0.0;  // stddev / mean
};

/// Per-parameter mean and sample standard deviation over successful runs,
/// in order of first appearance.
inline std::vector<Summary> summarize(const std::vector<ResultRow>& rows) {
    std::vector<Summary> out;
    std::vector<std::vector<double>> values;
    for (const auto& r : rows) {
        if (r.status != "ok" || r.run == "mean" || r.run == "stddev") continue;
        auto it = std::find_if(out.begin(), out.end(), [&](const Summary& s) { return s.parameter == r.parameter; });
        if (it == out.end()) {
            out.push_back(Summary{r.parameter});
            values.emplace_back();
            it = out.end() - 1;
        }
        values[static_cast<std::size_t>(it - out.begin())].push_back(r.value);
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto& v = values[i];
        auto& s = out[i];
        s.count = v.size();
        double sum = 0.0;
        for (double x : v) sum += x;
        s.mean = sum / static_cast<double>(v.size());
        double ss = 0.0;
        for (double x : v) ss += (x - s.mean) * (x - s.mean);
        s.stddev = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
        s.cv = s.mean != 0.0 ? s.stddev / s.mean : 0.0;
    }
    return out;
}

inline std::string format_value(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
    return out + "\"";
}

inline std::string to_csv(const std::vector<ResultRow>& rows) {
    std::string out = "experiment,parameter,run,seed,value,unit,status\n";
    for (const auto& r : rows) {
        out += csv_field(r.experiment) + "," + csv_field(r.parameter) + "," + r.run + "," + std::to_string(r.seed) +
               "," + format_value(r.value) + "," + r.unit + "," + csv_field(r.status) + "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Single measurements

inline TimeMs measure_network(const ExperimentConfig& cfg, std::size_t n, std::uint64_t seed, bool consensus_time) {
    NetworkOptions net;
    net.per_message_cost_ms = cfg.coord_cost_ms;
    Cluster<> c(cfg.consensus_config(),
                Topology::from_devices(std::vector<DeviceClass>(n, cfg.placement), cfg.jitter), net, seed);
    const TimeMs init = c.measure_init();
    return consensus_time ? c.measure_consensus() : init;
}

/// Virtual time from the start of local training until the model's
/// registration is committed, for a lone institution on `device`.
inline TimeMs measure_training(const ExperimentConfig& cfg, DeviceClass device, double accuracy, std::uint64_t seed) {
    institution::FederationOptions o;
    o.institutions = 1;
    o.devices = {device};
    o.jitter = cfg.jitter;
    o.consensus = cfg.consensus_config();
    o.network.per_message_cost_ms = cfg.coord_cost_ms;
    o.network.record_messages = false;
    o.cost = cfg.cost;
    o.seed = seed;
    institution::Federation f(o);
    f.initialize();
    f.load_synthetic(0, cfg.samples);
    const TimeMs t0 = f.network().now();
    f.train_and_register(0, accuracy);
    return f.network().now() - t0;
}

inline TimeMs measure_transfer(const ExperimentConfig& cfg, DeviceClass device, std::uint64_t seed) {
    netsim::Rng rng(seed);
    return netsim::transfer_time(cfg.size_bytes, netsim::device_link(device, cfg.jitter), &rng);
}

// ---------------------------------------------------------------------------

struct Job {
    std::string parameter;
    std::function<double(std::uint64_t seed)> measure;
};

inline std::vector<Job> plan(const ExperimentConfig& cfg) {
    std::vector<Job> jobs;
    switch (cfg.experiment) {
    case Experiment::init:
    case Experiment::consensus: {
        const bool cons = cfg.experiment == Experiment::consensus;
        for (auto n : cfg.institutions)
            jobs.push_back({std::to_string(n), [&cfg, n, cons](std::uint64_t s) { return measure_network(cfg, n, s, cons); }});
        break;
    }
    case Experiment::training:
        for (auto d : cfg.devices)
            jobs.push_back({std::string(netsim::to_string(d)),
                            [&cfg, d](std::uint64_t s) { return measure_training(cfg, d, cfg.train_accuracy, s); }});
        break;
    case Experiment::edge_accuracy:
        for (auto d : cfg.devices)
            for (double a : cfg.accuracies) {
                char label[64];
                std::snprintf(label, sizeof label, "%s@%.2f", std::string(netsim::to_string(d)).c_str(), a);
                jobs.push_back({label, [&cfg, d, a](std::uint64_t s) { return measure_training(cfg, d, a, s); }});
            }
        break;
    case Experiment::transfer:
        for (auto d : cfg.devices)
            jobs.push_back({std::string(netsim::to_string(d)),
                            [&cfg, d](std::uint64_t s) { return measure_transfer(cfg, d, s); }});
        break;
    }
    return jobs;
}

/// One row per (parameter, repetition) followed by mean/stddev rows per
/// parameter. Repetition r uses seed + r. Output order is independent of
/// worker scheduling.
inline std::vector<ResultRow> run(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto jobs = plan(cfg);
    const std::string exp(to_string(cfg.experiment));
    std::vector<ResultRow> rows(jobs.size() * cfg.repetitions);
    for (std::size_t j = 0; j < jobs.size(); ++j)
        for (std::size_t r = 0; r < cfg.repetitions; ++r) {
            auto& row = rows[j * cfg.repetitions + r];
            row.experiment = exp;
            row.parameter = jobs[j].parameter;
            row.run = std::to_string(r);
            row.seed = cfg.seed + r;
        }

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < rows.size(); i = next++) {
            auto& row = rows[i];
            try {
                row.value = jobs[i / cfg.repetitions].measure(row.seed);
            } catch (const std::exception& e) {
                row.value = std::nan("");
                row.status = std::string("error:") + e.what();
            }
        }
    };
    std::size_t n_workers = cfg.workers ? cfg.workers : std::max(1u, std::thread::hardware_concurrency());
    n_workers = std::min(n_workers, rows.size());
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    for (const auto& s : summarize(rows)) {
        rows.push_back({exp, s.parameter, "mean", cfg.seed, s.mean, "ms", "ok"});
        rows.push_back({exp, s.parameter, "stddev", cfg.seed, s.stddev, "ms", "ok"});
    }
    return rows;
}

inline bool has_errors(const std::vector<ResultRow>& rows) {
    return std::any_of(rows.begin(), rows.end(), [](const ResultRow& r) { return r.status != "ok"; });
}

}  // namespace stigma::bench
