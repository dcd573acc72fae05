// stigma-bench: runs one experiment and writes CSV rows plus summaries.
//
// Exit codes: 0 ok, 1 configuration error, 2 simulation error.

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "stigma/bench.hpp"

namespace {

template <class T>
std::vector<T> split_list(const std::string& s, T (*parse)(const std::string&)) {
    std::vector<T> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(parse(item));
    return out;
}

std::size_t parse_count(const std::string& s) {
    std::size_t pos = 0;
    long long v = std::stoll(s, &pos);
    if (pos != s.size() || v < 0) throw stigma::bench::ConfigError("bad institution count: " + s);
    return static_cast<std::size_t>(v);
}

stigma::netsim::DeviceClass parse_dev(const std::string& s) { return stigma::netsim::parse_device(s); }

}  // namespace

int main(int argc, char** argv) {
    using namespace stigma::bench;

    CLI::App app{"Run a federation benchmark and emit CSV"};
    std::string experiment, institutions, devices, placement, config_path, out;
    std::size_t reps = 0, workers = 0;
    std::uint64_t seed = 0, size_bytes = 0;
    double leader_ms = 0, vote_ms = 0, join_s = 0, coord_ms = 0, jitter = 0;

    app.add_option("experiment", experiment, "init | consensus | training | edge-accuracy | transfer");
    auto* o_inst = app.add_option("--institutions", institutions, "Comma-separated institution counts");
    auto* o_reps = app.add_option("--reps", reps, "Repetitions per parameter point");
    auto* o_seed = app.add_option("--seed", seed, "Base seed; repetition r uses seed + r");
    auto* o_leader = app.add_option("--leader-interval-ms", leader_ms, "Leader heartbeat interval");
    auto* o_vote = app.add_option("--vote-delay-ms", vote_ms, "Delay between voting rounds");
    auto* o_join = app.add_option("--join-interval-s", join_s, "Spacing between institution joins");
    auto* o_coord = app.add_option("--coord-cost-ms", coord_ms, "Per-message processing cost");
    auto* o_jitter = app.add_option("--jitter", jitter, "Latency jitter fraction in [0, 1)");
    auto* o_size = app.add_option("--size-bytes", size_bytes, "Payload size for the transfer experiment");
    auto* o_dev = app.add_option("--devices", devices, "Comma-separated device classes to sweep");
    auto* o_place = app.add_option("--placement", placement, "Device class hosting every institution");
    auto* o_workers = app.add_option("--workers", workers, "Parallel workers (0 = all cores)");
    app.add_option("--config", config_path, "JSON config; flags override its values");
    auto* o_out = app.add_option("--out", out, "CSV output file (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    ExperimentConfig cfg;
    try {
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in) throw ConfigError("cannot read config file " + config_path);
            nlohmann::json j;
            try {
                in >> j;
            } catch (const nlohmann::json::exception& e) {
                throw ConfigError(std::string("config is not valid JSON: ") + e.what());
            }
            cfg.merge_json(j);
        }
        if (!experiment.empty()) cfg.experiment = parse_experiment(experiment);
        else if (config_path.empty()) throw ConfigError("no experiment given");
        if (o_inst->count()) cfg.institutions = split_list<std::size_t>(institutions, parse_count);
        if (o_reps->count()) cfg.repetitions = reps;
        if (o_seed->count()) cfg.seed = seed;
        if (o_leader->count()) cfg.leader_interval_ms = leader_ms;
        if (o_vote->count()) cfg.vote_delay_ms = vote_ms;
        if (o_join->count()) cfg.join_interval_s = join_s;
        if (o_coord->count()) cfg.coord_cost_ms = coord_ms;
        if (o_jitter->count()) cfg.jitter = jitter;
        if (o_size->count()) cfg.size_bytes = size_bytes;
        if (o_dev->count()) cfg.devices = split_list<stigma::netsim::DeviceClass>(devices, parse_dev);
        if (o_place->count()) cfg.placement = stigma::netsim::parse_device(placement);
        if (o_workers->count()) cfg.workers = workers;
        if (o_out->count()) cfg.out = out;
        cfg.validate();
    } catch (const std::exception& e) {
        std::cerr << "stigma-bench: " << e.what() << "\n";
        return 1;
    }

    const auto rows = run(cfg);
    const auto csv = to_csv(rows);
    if (cfg.out.empty()) {
        std::cout << csv;
    } else {
        std::ofstream f(cfg.out, std::ios::binary);
        if (!f) {
            std::cerr << "stigma-bench: cannot write " << cfg.out << "\n";
            return 1;
        }
        f << csv;
    }
    for (const auto& s : summarize(rows))
        std::cerr << to_string(cfg.experiment) << " " << s.parameter << ": mean " << format_value(s.mean)
                  << " ms, stddev " << format_value(s.stddev) << " ms (" << format_value(100.0 * s.cv) << "%)\n";
    return has_errors(rows) ? 2 : 0;
}
