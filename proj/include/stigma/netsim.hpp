#pragma once

// Seeded discrete-event engine: virtual time in milliseconds, a (fire_at, seq)
// ordered queue, link timing derived from the testbed device table, and an
// optional JSON-lines trace of everything that was processed.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace stigma::netsim {

using TimeMs = double;
using NodeId = std::uint32_t;
using EventId = std::uint64_t;

inline constexpr NodeId kNoNode = std::numeric_limits<NodeId>::max();
inline constexpr std::size_t kDefaultStepLimit = 10'000'000;

class SimulationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Randomness

/// mt19937_64 output is fixed by the standard; the helpers below avoid the
/// implementation-defined std distributions so traces match across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    bool bernoulli(double p) { return p > 0.0 && uniform() < p; }

    double normal() {
        // Box-Muller; 1 - u keeps the log argument in (0, 1].
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    std::size_t below(std::size_t bound) {
        return bound == 0 ? 0 : static_cast<std::size_t>(engine_() % bound);
    }

private:
    std::mt19937_64 engine_;
};

// ---------------------------------------------------------------------------
// Links and devices

struct LinkProfile {
    double bandwidth_mbps = 1.0;
    double one_way_latency_ms = 0.0;
    double jitter_frac = 0.0;

    LinkProfile() = default;
    LinkProfile(double bandwidth, double latency, double jitter = 0.0)
        : bandwidth_mbps(bandwidth), one_way_latency_ms(latency), jitter_frac(jitter) {
        if (!(bandwidth_mbps > 0.0)) throw std::invalid_argument("link bandwidth must be positive");
        if (one_way_latency_ms < 0.0) throw std::invalid_argument("link latency must be non-negative");
        if (jitter_frac < 0.0 || jitter_frac >= 1.0)
            throw std::invalid_argument("jitter fraction must lie in [0, 1)");
    }

    friend bool operator==(const LinkProfile&, const LinkProfile&) = default;
};

enum class DeviceClass : std::uint8_t { m5a_xlarge, c5_large, es_large, es_medium, egs, njn, rpi4 };

inline constexpr std::array<DeviceClass, 7> kAllDevices = {
    DeviceClass::m5a_xlarge, DeviceClass::c5_large, DeviceClass::es_large, DeviceClass::es_medium,
    DeviceClass::egs,        DeviceClass::njn,      DeviceClass::rpi4};

enum class Tier : std::uint8_t { cloud, fog, edge_gateway, constrained };

inline std::string_view to_string(DeviceClass d) {
    switch (d) {
    case DeviceClass::m5a_xlarge: return "m5a.xlarge";
    case DeviceClass::c5_large: return "c5.large";
    case DeviceClass::es_large: return "ES-large";
    case DeviceClass::es_medium: return "ES-medium";
    case DeviceClass::egs: return "EGS";
    case DeviceClass::njn: return "NJN";
    case DeviceClass::rpi4: return "RPi4";
    }
    return "?";
}

inline DeviceClass parse_device(std::string_view name) {
    for (auto d : kAllDevices)
        if (to_string(d) == name) return d;
    throw std::invalid_argument("unknown device class: " + std::string(name));
}

inline Tier tier_of(DeviceClass d) {
    switch (d) {
    case DeviceClass::m5a_xlarge:
    case DeviceClass::c5_large: return Tier::cloud;
    case DeviceClass::es_large:
    case DeviceClass::es_medium: return Tier::fog;
    case DeviceClass::egs: return Tier::edge_gateway;
    case DeviceClass::njn:
    case DeviceClass::rpi4: return Tier::constrained;
    }
    return Tier::cloud;
}

/// Measured per-device bandwidth (Mb/s) of the C3 testbed.
inline double device_bandwidth_mbps(DeviceClass d) {
    switch (d) {
    case DeviceClass::m5a_xlarge: return 27.0;
    case DeviceClass::c5_large: return 26.0;
    case DeviceClass::es_large: return 65.0;
    case DeviceClass::es_medium: return 65.0;
    case DeviceClass::egs: return 813.0;
    case DeviceClass::njn: return 450.0;
    case DeviceClass::rpi4: return 800.0;
    }
    return 1.0;
}

/// One-way access latency per device. Fog instances are bounded at 12 ms; the
/// edge switch (3.8 us) is treated as zero; the public-cloud figure is synthetic.
inline double device_latency_ms(DeviceClass d) {
    switch (tier_of(d)) {
    case Tier::cloud: return 20.0;
    case Tier::fog: return 12.0;
    case Tier::edge_gateway:
    case Tier::constrained: return 0.0;
    }
    return 0.0;
}

inline constexpr double kDefaultJitter = 0.3;

/// Link from an IoT source to a single device (the device's own access link).
inline LinkProfile device_link(DeviceClass d, double jitter = 0.0) {
    return LinkProfile(device_bandwidth_mbps(d), device_latency_ms(d), jitter);
}

/// Symmetric pairwise link: min bandwidth, max latency of the two endpoints.
inline LinkProfile link_between(DeviceClass a, DeviceClass b, double jitter = 0.0) {
    return LinkProfile(std::min(device_bandwidth_mbps(a), device_bandwidth_mbps(b)),
                       std::max(device_latency_ms(a), device_latency_ms(b)), jitter);
}

inline std::map<std::pair<DeviceClass, DeviceClass>, LinkProfile> default_links(double jitter = 0.0) {
    std::map<std::pair<DeviceClass, DeviceClass>, LinkProfile> links;
    for (auto a : kAllDevices)
        for (auto b : kAllDevices) links.emplace(std::pair{a, b}, link_between(a, b, jitter));
    return links;
}

/// Latency draw: uniform multiplicative jitter in [1 - j, 1 + j].
inline double sample_latency(const LinkProfile& link, Rng* rng) {
    if (rng == nullptr || link.jitter_frac == 0.0) return link.one_way_latency_ms;
    return link.one_way_latency_ms * (1.0 + rng->uniform(-link.jitter_frac, link.jitter_frac));
}

inline double serialization_ms(std::uint64_t size_bytes, const LinkProfile& link) {
    return static_cast<double>(size_bytes) * 8.0 / (link.bandwidth_mbps * 1000.0);
}

/// latency (+ jitter draw when an rng is supplied) + size * 8 / (Mb/s * 1000) ms.
inline double transfer_time(std::uint64_t size_bytes, const LinkProfile& link, Rng* rng = nullptr) {
    return sample_latency(link, rng) + serialization_ms(size_bytes, link);
}

// ---------------------------------------------------------------------------
// Trace

enum class EventKind : std::uint8_t { message, timer };

inline std::string_view to_string(EventKind k) { return k == EventKind::message ? "message" : "timer"; }

struct TraceEntry {
    TimeMs at = 0.0;
    NodeId node = kNoNode;
    EventKind kind = EventKind::timer;
    std::string summary;

    friend bool operator==(const TraceEntry&, const TraceEntry&) = default;
};

class EventTrace {
public:
    void push(TraceEntry e) { entries_.push_back(std::move(e)); }
    const std::vector<TraceEntry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    void clear() { entries_.clear(); }

    /// One JSON object per line: {"time","node","kind","summary"}.
    std::string to_jsonl() const {
        std::string out;
        for (const auto& e : entries_) {
            nlohmann::ordered_json j;
            j["time"] = e.at;
            j["node"] = e.node;
            j["kind"] = to_string(e.kind);
            j["summary"] = e.summary;
            out += j.dump();
            out += '\n';
        }
        return out;
    }

    friend bool operator==(const EventTrace&, const EventTrace&) = default;

private:
    std::vector<TraceEntry> entries_;
};

class StepLimitExceeded : public SimulationError {
public:
    StepLimitExceeded(std::size_t limit, EventTrace partial)
        : SimulationError("simulation exceeded step limit of " + std::to_string(limit) + " events (livelock?)"),
          trace_(std::move(partial)) {}
    const EventTrace& trace() const { return trace_; }

private:
    EventTrace trace_;
};

// ---------------------------------------------------------------------------
// Engine

template <class Payload>
struct SimEvent {
    TimeMs fire_at = 0.0;
    std::uint64_t seq = 0;
    NodeId node = kNoNode;
    EventKind kind = EventKind::timer;
    Payload payload{};
};

/// Single-threaded event loop. Events are processed in (fire_at, seq) order;
/// seq is the insertion counter, so same-time events keep insertion order.
template <class Payload>
class Simulator {
public:
    using Event = SimEvent<Payload>;
    using Handler = std::function<void(Event&)>;
    using Describer = std::function<std::string(const Event&)>;

    explicit Simulator(std::uint64_t seed, std::size_t step_limit = kDefaultStepLimit)
        : rng_(seed), step_limit_(step_limit) {}

    Simulator(const Simulator&) = delete;
    Simulator& operator=(const Simulator&) = delete;
    Simulator(Simulator&&) noexcept = default;
    Simulator& operator=(Simulator&&) noexcept = default;

    void set_handler(Handler h) { handler_ = std::move(h); }

    /// Enables trace recording.
    void set_describer(Describer d) { describer_ = std::move(d); }

    EventId schedule(TimeMs delay_ms, NodeId node, EventKind kind, Payload payload) {
        if (finished_) throw SimulationError("schedule on a finished simulation");
        if (!(delay_ms >= 0.0)) throw std::invalid_argument("negative or NaN event delay");
        const EventId id = next_seq_++;
        queue_.push_back(Event{now_ + delay_ms, id, node, kind, std::move(payload)});
        std::push_heap(queue_.begin(), queue_.end(), Later{});
        return id;
    }

    TimeMs now() const { return now_; }
    Rng& rng() { return rng_; }
    std::size_t pending() const { return queue_.size(); }
    std::size_t steps() const { return steps_; }
    bool finished() const { return finished_; }
    const EventTrace& trace() const { return trace_; }

    std::optional<TimeMs> next_time() const {
        if (queue_.empty()) return std::nullopt;
        return queue_.front().fire_at;
    }

    void finish() {
        finished_ = true;
        queue_.clear();
    }

    /// Processes one event. Returns false when the queue is empty.
    bool step() {
        if (queue_.empty()) return false;
        if (steps_ >= step_limit_) throw StepLimitExceeded(step_limit_, trace_);
        std::pop_heap(queue_.begin(), queue_.end(), Later{});
        Event ev = std::move(queue_.back());
        queue_.pop_back();
        now_ = ev.fire_at;
        ++steps_;
        if (describer_) trace_.push(TraceEntry{ev.fire_at, ev.node, ev.kind, describer_(ev)});
        if (handler_) handler_(ev);
        return true;
    }

    const EventTrace& run_until_idle() {
        while (step()) {}
        return trace_;
    }

    /// Processes every event with fire_at <= deadline and advances the clock to it.
    void run_until(TimeMs deadline) {
        while (!queue_.empty() && queue_.front().fire_at <= deadline) step();
        if (deadline > now_) now_ = deadline;
    }

    /// Steps until done() holds (checked before each event) or the clock would
    /// pass the deadline. Returns whether done() was reached.
    template <class Pred>
    bool run_until(Pred&& done, TimeMs deadline) {
        while (!done()) {
            if (queue_.empty() || queue_.front().fire_at > deadline) return false;
            step();
        }
        return true;
    }

private:
    struct Later {
        bool operator()(const Event& a, const Event& b) const {
            if (a.fire_at != b.fire_at) return a.fire_at > b.fire_at;
            return a.seq > b.seq;
        }
    };

    Rng rng_;
    std::size_t step_limit_;
    std::size_t steps_ = 0;
    TimeMs now_ = 0.0;
    std::uint64_t next_seq_ = 0;
    bool finished_ = false;
    std::vector<Event> queue_;
    Handler handler_;
    Describer describer_;
    EventTrace trace_;
};

}  // namespace stigma::netsim
