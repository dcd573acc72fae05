#pragma once

// Drives a set of consensus replicas (plus an optional application protocol)
// over the discrete-event engine. Each node has a serial CPU: handling a
// received message costs `per_message_cost_ms`, and so does emitting each
// outbound message. The leader handles O(n) messages per slot, so this cost is
// what makes it the bottleneck as the federation grows.

#include <algorithm>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "stigma/consensus.hpp"
#include "stigma/ledger.hpp"
#include "stigma/netsim.hpp"

namespace stigma {

using consensus::NodeId;
using consensus::TimeMs;

struct NetworkOptions {
    double per_message_cost_ms = 1.0;
    double drop_prob = 0.0;
    double dup_prob = 0.0;
    /// Extra uniform delay in [0, reorder_ms] per message copy.
    double reorder_ms = 0.0;
    bool record_trace = false;
    bool record_messages = false;
    std::size_t step_limit = netsim::kDefaultStepLimit;

    void validate() const {
        if (per_message_cost_ms < 0.0) throw std::invalid_argument("per-message cost must be non-negative");
        if (drop_prob < 0.0 || drop_prob > 1.0 || dup_prob < 0.0 || dup_prob > 1.0)
            throw std::invalid_argument("drop/duplication probabilities must lie in [0, 1]");
        if (reorder_ms < 0.0) throw std::invalid_argument("reorder window must be non-negative");
    }
};

class Topology {
public:
    static Topology uniform(std::size_t n, netsim::LinkProfile link) {
        Topology t;
        t.n_ = n;
        t.uniform_ = link;
        return t;
    }

    static Topology from_devices(std::vector<netsim::DeviceClass> devices, double jitter) {
        Topology t;
        t.n_ = devices.size();
        t.devices_ = std::move(devices);
        t.jitter_ = jitter;
        return t;
    }

    std::size_t size() const { return n_; }

    std::optional<netsim::DeviceClass> device(NodeId node) const {
        if (devices_.empty()) return std::nullopt;
        return devices_.at(node);
    }

    netsim::LinkProfile link(NodeId a, NodeId b) const {
        if (uniform_) return *uniform_;
        return netsim::link_between(devices_.at(a), devices_.at(b), jitter_);
    }

private:
    std::size_t n_ = 0;
    std::optional<netsim::LinkProfile> uniform_;
    std::vector<netsim::DeviceClass> devices_;
    double jitter_ = 0.0;
};

/// Application payload for clusters that carry consensus traffic only.
struct NoApp {
    ledger::Bytes encode() const { return {}; }
    std::string describe() const { return "app"; }
    std::string_view name() const { return "app"; }
};

struct MessageRecord {
    TimeMs sent_at = 0.0;
    NodeId from = 0;
    NodeId to = 0;
    std::string type;
    std::optional<consensus::Slot> slot;
    std::size_t size_bytes = 0;
    bool dropped = false;
    ledger::Bytes payload;
};

struct ApplyRecord {
    TimeMs at = 0.0;
    NodeId node = 0;
    consensus::Slot log_slot = 0;
    ledger::TransactionRecord record;
};

template <class App = NoApp>
class Cluster {
public:
    using Wire = std::variant<consensus::Message, App>;
    struct Delivery {
        NodeId from = 0;
        Wire payload;
    };
    struct Wakeup {};
    struct Action {
        std::function<void()> fn;
        std::string label;
    };
    using EventPayload = std::variant<Delivery, Wakeup, Action>;
    using Sim = netsim::Simulator<EventPayload>;

    using CommitHandler = std::function<void(NodeId, const ledger::TransactionRecord&)>;
    using AppHandler = std::function<void(NodeId self, NodeId from, const App&)>;
    using ChosenHandler = std::function<void(NodeId, consensus::Slot, const consensus::Value&)>;

    Cluster(consensus::ConsensusConfig config, Topology topology, NetworkOptions options, std::uint64_t seed)
        : config_(std::move(config)), topology_(std::move(topology)), options_(options),
          sim_(seed, options.step_limit) {
        config_.validate();
        options_.validate();
        const auto n = topology_.size();
        if (n == 0) throw std::invalid_argument("a network needs at least one institution");
        for (auto m : config_.initial_members)
            if (m >= n) throw std::invalid_argument("initial member outside the network");
        for (NodeId i = 0; i < n; ++i) {
            auto& r = replicas_.emplace_back(std::make_unique<consensus::Replica>(i, config_));
            r->set_apply_hook([this, i](consensus::Slot slot, const consensus::Value& v,
                                        const ledger::TransactionRecord* rec) { on_apply(i, slot, v, rec); });
            r->set_chosen_hook([this, i](consensus::Slot slot, const consensus::Value& v) { on_chosen(i, slot, v); });
        }
        cpu_free_.assign(n, 0.0);
        crashed_.assign(n, false);
        armed_.assign(n, std::nullopt);
        next_seq_.assign(n, 0);
        sim_.set_handler([this](typename Sim::Event& ev) { dispatch_event(ev); });
        if (options_.record_trace) sim_.set_describer([this](const typename Sim::Event& ev) { return describe(ev); });
    }

    Cluster(const Cluster&) = delete;
    Cluster& operator=(const Cluster&) = delete;

    // -- setup ----------------------------------------------------------------

    /// Founders start at t = 0; every other institution k (in order) requests
    /// to join at k * join_interval_ms.
    void start() {
        if (started_) throw netsim::SimulationError("network already started");
        started_ = true;
        std::size_t k = 0;
        for (NodeId i = 0; i < replicas_.size(); ++i) {
            const bool founder = std::find(config_.initial_members.begin(), config_.initial_members.end(), i) !=
                                 config_.initial_members.end();
            if (founder) {
                schedule(i, 0.0, [this, i] { deliver(i, replicas_[i]->start(sim_.now())); }, "start");
            } else {
                ++k;
                schedule(i, static_cast<double>(k) * config_.join_interval_ms, [this, i] { request_join(i); },
                         "join");
            }
        }
    }

    void set_commit_handler(CommitHandler h) { commit_handler_ = std::move(h); }
    void set_app_handler(AppHandler h) { app_handler_ = std::move(h); }
    void set_chosen_handler(ChosenHandler h) { chosen_handler_ = std::move(h); }

    // -- inputs ---------------------------------------------------------------

    consensus::RequestId propose(NodeId node, consensus::Command command) {
        const consensus::RequestId id{node, next_seq_.at(node)++};
        submit(node, consensus::Value{id, std::move(command)});
        return id;
    }

    /// A no-op value used to time one round of agreement.
    consensus::RequestId propose_probe(NodeId node) {
        const consensus::RequestId id{node, next_seq_.at(node)++};
        submit(node, consensus::Value{id, std::nullopt});
        return id;
    }

    void submit(NodeId node, consensus::Value value) {
        schedule(node, 0.0, [this, node, value = std::move(value)] {
            auto r = replicas_[node]->propose(value, sim_.now());
            deliver(node, std::move(r.outbound));
        }, "propose");
    }

    /// Peer-to-peer application message; charged to the sender's CPU.
    void send_app(NodeId from, NodeId to, App msg) { send(from, to, Wire{std::move(msg)}, std::nullopt); }

    void schedule(NodeId node, TimeMs delay, std::function<void()> fn, std::string label) {
        sim_.schedule(delay, node, netsim::EventKind::timer, EventPayload{Action{std::move(fn), std::move(label)}});
    }

    /// Silences a node: it processes nothing and all its traffic is lost.
    void crash(NodeId node) { crashed_.at(node) = true; }
    bool crashed(NodeId node) const { return crashed_.at(node); }

    // -- running --------------------------------------------------------------

    template <class Pred>
    bool run_until(Pred&& done, TimeMs horizon_ms) {
        return sim_.run_until(std::forward<Pred>(done), sim_.now() + horizon_ms);
    }

    void run_for(TimeMs ms) { sim_.run_until(sim_.now() + ms); }

    TimeMs now() const { return sim_.now(); }
    Sim& simulator() { return sim_; }
    const netsim::EventTrace& trace() const { return sim_.trace(); }

    // -- observation ----------------------------------------------------------

    std::size_t size() const { return replicas_.size(); }
    const consensus::Replica& replica(NodeId i) const { return *replicas_.at(i); }
    const consensus::ConsensusConfig& config() const { return config_; }
    const Topology& topology() const { return topology_; }
    const std::vector<MessageRecord>& messages() const { return messages_; }
    const std::vector<ApplyRecord>& applies() const { return applies_; }
    std::size_t safety_violations() const { return safety_violations_; }
    const std::map<consensus::Slot, consensus::Value>& chosen_values() const { return chosen_; }

    /// Time the value was first chosen anywhere (at the deciding leader).
    std::optional<TimeMs> chosen_at(const consensus::RequestId& id) const {
        auto it = chosen_at_.find(id);
        if (it == chosen_at_.end()) return std::nullopt;
        return it->second;
    }

    /// Live node currently acting as leader with the highest ballot.
    std::optional<NodeId> leader() const {
        std::optional<NodeId> best;
        for (NodeId i = 0; i < replicas_.size(); ++i) {
            if (crashed_[i] || !replicas_[i]->is_leader()) continue;
            if (!best || replicas_[*best]->ballot() < replicas_[i]->ballot()) best = i;
        }
        return best;
    }

    bool applied_everywhere(const consensus::RequestId& id) const {
        auto it = applied_by_.find(id);
        if (it == applied_by_.end()) return false;
        for (NodeId i = 0; i < replicas_.size(); ++i)
            if (!crashed_[i] && !it->second.contains(i)) return false;
        return true;
    }

    /// Every live node has applied every institution's Join.
    bool init_complete() const {
        if (!started_) return false;
        for (NodeId i = 0; i < replicas_.size(); ++i)
            if (!crashed_[i] && replicas_[i]->members().size() != replicas_.size()) return false;
        return true;
    }

    /// Virtual time from genesis until the last Join is applied on every node.
    TimeMs measure_init(TimeMs horizon_ms = 3'600'000.0) {
        if (!started_) start();
        if (!run_until([this] { return init_complete(); }, horizon_ms))
            throw netsim::SimulationError("network initialization did not complete");
        return sim_.now();
    }

    /// Virtual time from one proposal at `origin` (default: the leader) until
    /// every live member has applied it.
    TimeMs measure_consensus(std::optional<NodeId> origin = std::nullopt, TimeMs horizon_ms = 600'000.0) {
        if (!init_complete()) throw netsim::SimulationError("consensus measured before initialization finished");
        const NodeId from = origin ? *origin : leader().value_or(config_.initial_members.front());
        const TimeMs t0 = sim_.now();
        const auto id = propose_probe(from);
        if (!run_until([&] { return applied_everywhere(id); }, horizon_ms))
            throw netsim::SimulationError("proposal was not applied everywhere");
        return sim_.now() - t0;
    }

private:
    void request_join(NodeId node) {
        const auto device = topology_.device(node);
        ledger::JoinBody join{ledger::InstitutionId{node}, device ? std::string(netsim::to_string(*device)) : ""};
        const consensus::RequestId id{node, next_seq_[node]++};
        auto r = replicas_[node]->propose(consensus::Value{id, consensus::Command{join, ledger::InstitutionId{node}}},
                                          sim_.now());
        deliver(node, std::move(r.outbound));
    }

    void dispatch_event(typename Sim::Event& ev) {
        const NodeId node = ev.node;
        if (crashed_[node]) return;
        const TimeMs now = sim_.now();
        if (cpu_free_[node] > now) {
            // Busy: requeue behind the work already in progress.
            const bool was_armed = armed_[node] && *armed_[node] == ev.seq;
            const auto id = sim_.schedule(cpu_free_[node] - now, node, ev.kind, std::move(ev.payload));
            if (was_armed) armed_[node] = id;
            return;
        }
        current_ = node;
        cursor_ = now;
        std::visit(
            [&](auto& p) {
                using T = std::decay_t<decltype(p)>;
                if constexpr (std::is_same_v<T, Delivery>) {
                    cursor_ += options_.per_message_cost_ms;
                    if (auto* m = std::get_if<consensus::Message>(&p.payload)) {
                        deliver(node, replicas_[node]->handle(p.from, *m, now));
                    } else if (app_handler_) {
                        app_handler_(node, p.from, std::get<App>(p.payload));
                    }
                } else if constexpr (std::is_same_v<T, Wakeup>) {
                    if (armed_[node] && *armed_[node] == ev.seq) {
                        armed_[node].reset();
                        deliver(node, replicas_[node]->tick(now));
                    }
                } else {
                    p.fn();
                }
            },
            ev.payload);
        cpu_free_[node] = cursor_;
        current_ = netsim::kNoNode;
        arm(node);
    }

    void arm(NodeId node) {
        const auto next = replicas_[node]->next_wakeup();
        if (!next) return;
        // An overdue wakeup counts as due now, so an already armed event still covers it.
        const TimeMs due = std::max(*next, sim_.now());
        if (armed_[node] && armed_at_[node] <= due) return;
        const TimeMs delay = due - sim_.now();
        armed_[node] = sim_.schedule(delay, node, netsim::EventKind::timer, EventPayload{Wakeup{}});
        armed_at_[node] = sim_.now() + delay;
    }

    void deliver(NodeId from, std::vector<consensus::Outbound> out) {
        for (auto& o : out) {
            auto slot = consensus::message_slot(o.message);
            send(from, o.to, Wire{std::move(o.message)}, slot);
        }
        if (current_ != from) arm(from);
    }

    void send(NodeId from, NodeId to, Wire wire, std::optional<consensus::Slot> slot) {
        if (current_ != from) {
            // Outside the sender's own event: start from its CPU horizon.
            cursor_ = std::max(sim_.now(), cpu_free_[from]);
        }
        cursor_ += options_.per_message_cost_ms;
        if (current_ != from) cpu_free_[from] = cursor_;
        const TimeMs depart = cursor_;

        auto bytes = std::visit(
            [](const auto& m) {
                using T = std::decay_t<decltype(m)>;
                if constexpr (std::is_same_v<T, consensus::Message>)
                    return consensus::encode(m);
                else
                    return m.encode();
            },
            wire);
        const std::size_t size = bytes.size() + kEnvelopeBytes;
        const bool lost = crashed_[from] || crashed_[to] || sim_.rng().bernoulli(options_.drop_prob);
        if (options_.record_messages) {
            MessageRecord rec;
            rec.sent_at = depart;
            rec.from = from;
            rec.to = to;
            rec.type = wire_name(wire);
            rec.slot = slot;
            rec.size_bytes = size;
            rec.dropped = lost;
            rec.payload = std::move(bytes);
            messages_.push_back(std::move(rec));
        }
        if (lost) return;
        const int copies = sim_.rng().bernoulli(options_.dup_prob) ? 2 : 1;
        const auto link = topology_.link(from, to);
        for (int c = 0; c < copies; ++c) {
            TimeMs delay = depart - sim_.now() + netsim::transfer_time(size, link, &sim_.rng());
            if (options_.reorder_ms > 0.0) delay += sim_.rng().uniform(0.0, options_.reorder_ms);
            sim_.schedule(delay, to, netsim::EventKind::message, EventPayload{Delivery{from, wire}});
        }
    }

    static std::string wire_name(const Wire& w) {
        if (const auto* m = std::get_if<consensus::Message>(&w)) return std::string(consensus::message_name(*m));
        return std::string(std::get<App>(w).name());
    }

    std::string describe(const typename Sim::Event& ev) const {
        std::string s;
        std::visit(
            [&](const auto& p) {
                using T = std::decay_t<decltype(p)>;
                if constexpr (std::is_same_v<T, Delivery>) {
                    s = "recv from=" + std::to_string(p.from) + " ";
                    if (const auto* m = std::get_if<consensus::Message>(&p.payload))
                        s += consensus::describe(*m);
                    else
                        s += std::get<App>(p.payload).describe();
                } else if constexpr (std::is_same_v<T, Wakeup>) {
                    s = "tick";
                } else {
                    s = p.label;
                }
            },
            ev.payload);
        if (crashed_[ev.node]) s += " (crashed)";
        else if (cpu_free_[ev.node] > ev.fire_at) s += " (deferred)";
        return s;
    }

    void on_apply(NodeId node, consensus::Slot slot, const consensus::Value& v, const ledger::TransactionRecord* rec) {
        if (v.id.origin != netsim::kNoNode) applied_by_[v.id].insert(node);
        if (rec == nullptr) return;
        applies_.push_back(ApplyRecord{sim_.now(), node, slot, *rec});
        if (commit_handler_) commit_handler_(node, *rec);
    }

    void on_chosen(NodeId node, consensus::Slot slot, const consensus::Value& v) {
        auto [it, inserted] = chosen_.try_emplace(slot, v);
        if (!inserted && !(it->second == v)) ++safety_violations_;
        if (v.id.origin != netsim::kNoNode) chosen_at_.try_emplace(v.id, sim_.now());
        if (chosen_handler_) chosen_handler_(node, slot, v);
    }

    static constexpr std::size_t kEnvelopeBytes = 64;

    consensus::ConsensusConfig config_;
    Topology topology_;
    NetworkOptions options_;
    Sim sim_;
    std::vector<std::unique_ptr<consensus::Replica>> replicas_;
    std::vector<TimeMs> cpu_free_;
    std::vector<bool> crashed_;
    std::vector<std::optional<netsim::EventId>> armed_;
    std::map<NodeId, TimeMs> armed_at_;
    std::vector<std::uint64_t> next_seq_;
    NodeId current_ = netsim::kNoNode;
    TimeMs cursor_ = 0.0;
    bool started_ = false;

    CommitHandler commit_handler_;
    AppHandler app_handler_;
    ChosenHandler chosen_handler_;

    std::vector<MessageRecord> messages_;
    std::vector<ApplyRecord> applies_;
    std::map<consensus::RequestId, std::set<NodeId>> applied_by_;
    std::map<consensus::RequestId, TimeMs> chosen_at_;
    std::map<consensus::Slot, consensus::Value> chosen_;
    std::size_t safety_violations_ = 0;
};

}  // namespace stigma
