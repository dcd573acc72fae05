#pragma once

// Multi-Paxos replicated log with a stable leader.
//
// Each Replica is a pure state machine: inputs are (message | timer | local
// proposal, now) and outputs are outbound messages. Nothing here touches a
// clock or a socket; stigma::Cluster drives replicas over netsim.
//
// Wire protocol (all fields little-endian, length-prefixed as in ledger):
//   Prepare        {ballot, from_slot}                   phase 1a
//   Promise        {ballot, from_slot, accepted[], decided[]}
//   Nack           {ballot, promised}                    rejection of `ballot`
//   Accept         {ballot, slot, value}                 phase 2a
//   Accepted       {ballot, slot}                        phase 2b
//   Decide         {slot, value}                         commit / learn
//   Heartbeat      {ballot, commit}                      every leader interval
//   CatchupRequest {from_slot}
//   CatchupReply   {decided[]}
//   Forward        {value, hops}                         follower -> leader relay
//
// Membership only grows (Join records). The configuration for slot s is the
// membership after applying slots < s; the leader never has a slot in flight
// past an undecided Join, and extends its phase-1 promise set to every new
// member before proposing under the larger configuration.

#include <algorithm>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "stigma/ledger.hpp"
#include "stigma/netsim.hpp"

namespace stigma::consensus {

using netsim::NodeId;
using netsim::TimeMs;
using Slot = std::uint64_t;

struct Ballot {
    std::uint64_t round = 0;
    NodeId node = 0;
    friend auto operator<=>(const Ballot&, const Ballot&) = default;
};

inline std::string to_string(const Ballot& b) {
    return "(" + std::to_string(b.round) + "," + std::to_string(b.node) + ")";
}

/// Majority of n members: ceil((n + 1) / 2).
inline std::size_t quorum_size(std::size_t members) { return members / 2 + 1; }

struct RequestId {
    NodeId origin = netsim::kNoNode;
    std::uint64_t seq = 0;
    friend auto operator<=>(const RequestId&, const RequestId&) = default;
};

/// A ledger transaction waiting to be ordered.
struct Command {
    ledger::Body body;
    ledger::InstitutionId proposer;
    friend bool operator==(const Command&, const Command&) = default;
};

/// Log value. A value without a command is a no-op (gap filler or latency probe).
struct Value {
    RequestId id;
    std::optional<Command> command;

    bool is_join() const { return command && std::holds_alternative<ledger::JoinBody>(command->body); }
    friend bool operator==(const Value&, const Value&) = default;
};

inline Value noop_value(Slot slot) { return Value{RequestId{netsim::kNoNode, slot}, std::nullopt}; }

struct ConsensusConfig {
    TimeMs leader_interval_ms = 30.0;
    TimeMs vote_round_delay_ms = 100.0;
    TimeMs join_interval_ms = 10'000.0;
    /// Followers start an election after this many silent leader intervals.
    double election_timeout_factor = 4.0;
    /// Unacknowledged forwarded proposals are re-sent after this long.
    TimeMs forward_retry_ms = 1'000.0;
    std::vector<NodeId> initial_members{0};

    void validate() const {
        if (!(leader_interval_ms > 0.0) || !(vote_round_delay_ms > 0.0) || !(join_interval_ms > 0.0) ||
            !(election_timeout_factor > 0.0) || !(forward_retry_ms > 0.0))
            throw std::invalid_argument("consensus intervals must be positive");
        if (initial_members.empty()) throw std::invalid_argument("at least one initial member required");
    }

    TimeMs election_timeout_ms() const { return leader_interval_ms * election_timeout_factor; }
};

// ---------------------------------------------------------------------------
// Messages

struct AcceptedEntry {
    Slot slot = 0;
    Ballot ballot;
    Value value;
};

struct DecidedEntry {
    Slot slot = 0;
    Value value;
};

struct Prepare {
    Ballot ballot;
    Slot from_slot = 0;
};
struct Promise {
    Ballot ballot;
    Slot from_slot = 0;
    std::vector<AcceptedEntry> accepted;
    std::vector<DecidedEntry> decided;
};
struct Nack {
    Ballot ballot;
    Ballot promised;
};
struct Accept {
    Ballot ballot;
    Slot slot = 0;
    Value value;
};
struct Accepted {
    Ballot ballot;
    Slot slot = 0;
};
struct Decide {
    Slot slot = 0;
    Value value;
};
struct Heartbeat {
    Ballot ballot;
    Slot commit = 0;
};
struct CatchupRequest {
    Slot from_slot = 0;
};
struct CatchupReply {
    std::vector<DecidedEntry> decided;
};
struct Forward {
    Value value;
    std::uint32_t hops = 0;
};

using Message = std::variant<Prepare, Promise, Nack, Accept, Accepted, Decide, Heartbeat, CatchupRequest,
                             CatchupReply, Forward>;

inline std::string_view message_name(const Message& m) {
    static constexpr std::string_view kNames[] = {"Prepare",   "Promise",   "Nack",           "Accept",
                                                  "Accepted",  "Decide",    "Heartbeat",      "CatchupRequest",
                                                  "CatchupReply", "Forward"};
    return kNames[m.index()];
}

/// Slot the message concerns, for per-slot accounting.
inline std::optional<Slot> message_slot(const Message& m) {
    if (const auto* a = std::get_if<Accept>(&m)) return a->slot;
    if (const auto* a = std::get_if<Accepted>(&m)) return a->slot;
    if (const auto* d = std::get_if<Decide>(&m)) return d->slot;
    return std::nullopt;
}

struct Outbound {
    NodeId to = 0;
    Message message;
};

// Encoding, used for link timing and for payload scans.

inline void encode(ledger::Encoder& e, const Ballot& b) { e.u64(b.round).u32(b.node); }

inline void encode(ledger::Encoder& e, const Value& v) {
    e.u32(v.id.origin).u64(v.id.seq).boolean(v.command.has_value());
    if (v.command) {
        e.u8(static_cast<std::uint8_t>(ledger::kind_of(v.command->body)));
        e.nested(ledger::encode_body(v.command->body));
        e.u32(v.command->proposer.value);
    }
}

inline ledger::Bytes encode(const Message& m) {
    ledger::Encoder e;
    e.u8(static_cast<std::uint8_t>(m.index()));
    std::visit(
        [&](const auto& msg) {
            using T = std::decay_t<decltype(msg)>;
            if constexpr (std::is_same_v<T, Prepare>) {
                encode(e, msg.ballot);
                e.u64(msg.from_slot);
            } else if constexpr (std::is_same_v<T, Promise>) {
                encode(e, msg.ballot);
                e.u64(msg.from_slot).u64(msg.accepted.size());
                for (const auto& a : msg.accepted) {
                    e.u64(a.slot);
                    encode(e, a.ballot);
                    encode(e, a.value);
                }
                e.u64(msg.decided.size());
                for (const auto& d : msg.decided) {
                    e.u64(d.slot);
                    encode(e, d.value);
                }
            } else if constexpr (std::is_same_v<T, Nack>) {
                encode(e, msg.ballot);
                encode(e, msg.promised);
            } else if constexpr (std::is_same_v<T, Accept>) {
                encode(e, msg.ballot);
                e.u64(msg.slot);
                encode(e, msg.value);
            } else if constexpr (std::is_same_v<T, Accepted>) {
                encode(e, msg.ballot);
                e.u64(msg.slot);
            } else if constexpr (std::is_same_v<T, Decide>) {
                e.u64(msg.slot);
                encode(e, msg.value);
            } else if constexpr (std::is_same_v<T, Heartbeat>) {
                encode(e, msg.ballot);
                e.u64(msg.commit);
            } else if constexpr (std::is_same_v<T, CatchupRequest>) {
                e.u64(msg.from_slot);
            } else if constexpr (std::is_same_v<T, CatchupReply>) {
                e.u64(msg.decided.size());
                for (const auto& d : msg.decided) {
                    e.u64(d.slot);
                    encode(e, d.value);
                }
            } else {
                encode(e, msg.value);
                e.u32(msg.hops);
            }
        },
        m);
    return std::move(e).bytes();
}

inline std::string value_digest(const Value& v) {
    ledger::Encoder e;
    encode(e, v);
    return ledger::to_hex(ledger::fingerprint(e.bytes())).substr(0, 8);
}

inline std::string describe(const Message& m) {
    std::string s(message_name(m));
    std::visit(
        [&](const auto& msg) {
            using T = std::decay_t<decltype(msg)>;
            if constexpr (std::is_same_v<T, Prepare>)
                s += " b=" + to_string(msg.ballot) + " from=" + std::to_string(msg.from_slot);
            else if constexpr (std::is_same_v<T, Promise>)
                s += " b=" + to_string(msg.ballot) + " accepted=" + std::to_string(msg.accepted.size()) +
                     " decided=" + std::to_string(msg.decided.size());
            else if constexpr (std::is_same_v<T, Nack>)
                s += " b=" + to_string(msg.ballot) + " promised=" + to_string(msg.promised);
            else if constexpr (std::is_same_v<T, Accept>)
                s += " b=" + to_string(msg.ballot) + " slot=" + std::to_string(msg.slot) +
                     " v=" + value_digest(msg.value);
            else if constexpr (std::is_same_v<T, Accepted>)
                s += " b=" + to_string(msg.ballot) + " slot=" + std::to_string(msg.slot);
            else if constexpr (std::is_same_v<T, Decide>)
                s += " slot=" + std::to_string(msg.slot) + " v=" + value_digest(msg.value);
            else if constexpr (std::is_same_v<T, Heartbeat>)
                s += " b=" + to_string(msg.ballot) + " commit=" + std::to_string(msg.commit);
            else if constexpr (std::is_same_v<T, CatchupRequest>)
                s += " from=" + std::to_string(msg.from_slot);
            else if constexpr (std::is_same_v<T, CatchupReply>)
                s += " decided=" + std::to_string(msg.decided.size());
            else
                s += " v=" + value_digest(msg.value);
        },
        m);
    return s;
}

// ---------------------------------------------------------------------------
// Acceptor

struct PaxosInstance {
    Slot slot = 0;
    std::optional<Ballot> accepted_ballot;
    std::optional<Value> accepted_value;
    std::optional<Value> chosen;
};

/// Acceptor role. A single promise covers every slot (multi-Paxos).
class Acceptor {
public:
    /// Promise iff ballot >= promised (re-promising the same ballot keeps
    /// duplicated Prepares harmless); otherwise Nack carrying the promise.
    std::variant<Promise, Nack> on_prepare(const Ballot& ballot, Slot from_slot = 0) {
        if (promised_ && ballot < *promised_) return Nack{ballot, *promised_};
        promised_ = ballot;
        Promise p{ballot, from_slot, {}, {}};
        for (auto it = instances_.lower_bound(from_slot); it != instances_.end(); ++it) {
            const auto& inst = it->second;
            if (inst.chosen)
                p.decided.push_back(DecidedEntry{inst.slot, *inst.chosen});
            else if (inst.accepted_ballot)
                p.accepted.push_back(AcceptedEntry{inst.slot, *inst.accepted_ballot, *inst.accepted_value});
        }
        return p;
    }

    std::variant<Accepted, Nack> on_accept(const Ballot& ballot, Slot slot, const Value& value) {
        if (promised_ && ballot < *promised_) return Nack{ballot, *promised_};
        promised_ = ballot;
        auto& inst = instance(slot);
        inst.accepted_ballot = ballot;
        inst.accepted_value = value;
        return Accepted{ballot, slot};
    }

    /// Records a decision. Returns false if a different value was already chosen.
    bool learn(Slot slot, const Value& value) {
        auto& inst = instance(slot);
        if (inst.chosen) return *inst.chosen == value;
        inst.chosen = value;
        return true;
    }

    const std::optional<Ballot>& promised() const { return promised_; }

    const PaxosInstance* find(Slot slot) const {
        auto it = instances_.find(slot);
        return it == instances_.end() ? nullptr : &it->second;
    }

    const std::optional<Value>* chosen(Slot slot) const {
        const auto* inst = find(slot);
        return inst && inst->chosen ? &inst->chosen : nullptr;
    }

    std::vector<DecidedEntry> decided_from(Slot from, std::size_t limit) const {
        std::vector<DecidedEntry> out;
        for (auto it = instances_.lower_bound(from); it != instances_.end() && out.size() < limit; ++it)
            if (it->second.chosen) out.push_back(DecidedEntry{it->first, *it->second.chosen});
        return out;
    }

    std::optional<Slot> highest_slot() const {
        if (instances_.empty()) return std::nullopt;
        return instances_.rbegin()->first;
    }

private:
    PaxosInstance& instance(Slot slot) {
        auto [it, inserted] = instances_.try_emplace(slot);
        if (inserted) it->second.slot = slot;
        return it->second;
    }

    std::optional<Ballot> promised_;
    std::map<Slot, PaxosInstance> instances_;
};

// ---------------------------------------------------------------------------
// Replica

enum class Role : std::uint8_t { follower, candidate, leader };

struct ProposeResult {
    std::optional<Slot> slot;
    std::vector<Outbound> outbound;
};

class Replica {
public:
    /// (log slot, value, ledger record appended for it or nullptr).
    using ApplyHook = std::function<void(Slot, const Value&, const ledger::TransactionRecord*)>;
    using ChosenHook = std::function<void(Slot, const Value&)>;

    static constexpr std::size_t kCatchupBatch = 512;
    static constexpr std::uint32_t kMaxForwardHops = 4;

    Replica(NodeId id, ConsensusConfig config) : id_(id), config_(std::move(config)), ledger_(founders(config_)) {
        config_.validate();
        members_ = config_.initial_members;
        leader_hint_ = config_.initial_members.front();
    }

    void set_apply_hook(ApplyHook h) { apply_hook_ = std::move(h); }
    void set_chosen_hook(ChosenHook h) { chosen_hook_ = std::move(h); }

    NodeId id() const { return id_; }
    Role role() const { return role_; }
    bool is_leader() const { return role_ == Role::leader; }
    std::optional<NodeId> leader_hint() const { return leader_hint_; }
    const Ballot& ballot() const { return ballot_; }
    const Acceptor& acceptor() const { return acceptor_; }
    const ledger::Ledger& ledger() const { return ledger_; }
    const std::vector<NodeId>& members() const { return members_; }
    bool is_member() const { return contains(members_, id_); }
    /// Every slot below this one is chosen and applied.
    Slot applied_upto() const { return applied_upto_; }
    bool has_applied(const RequestId& id) const { return applied_ids_.contains(id); }
    const ConsensusConfig& config() const { return config_; }
    std::size_t safety_violations() const { return conflicts_; }

    /// The first initial member runs phase 1 over the founding configuration;
    /// other founders arm their election timers.
    std::vector<Outbound> start(TimeMs now) {
        std::vector<Outbound> out;
        if (id_ == config_.initial_members.front())
            start_election(now, out);
        else if (is_member())
            reset_election_timer(now);
        return out;
    }

    /// Leader binds the value to the next free slot; anyone else relays it.
    ProposeResult propose(const Value& value, TimeMs now) {
        ProposeResult r;
        if (value.id.origin == id_) own_unapplied_.insert_or_assign(value.id, OwnProposal{value, now});
        if (role_ == Role::leader) {
            enqueue(value);
            pump(now, r.outbound);
            if (auto it = assigned_.find(value.id); it != assigned_.end()) r.slot = it->second;
        } else {
            relay(value, 0, now, r.outbound);
        }
        return r;
    }

    std::vector<Outbound> handle(NodeId from, const Message& msg, TimeMs now) {
        std::vector<Outbound> out;
        std::visit([&](const auto& m) { on(from, m, now, out); }, msg);
        return out;
    }

    std::vector<Outbound> tick(TimeMs now) {
        std::vector<Outbound> out;
        if (role_ == Role::leader) {
            if (now >= next_heartbeat_at_) {
                broadcast_heartbeat(out);
                next_heartbeat_at_ = now + config_.leader_interval_ms;
            }
            if (!promise_quorum() && now >= phase1_deadline_) {
                // Promise round timed out: retry under a higher ballot.
                step_down(now);
                start_election(now, out);
            }
            if (role_ == Role::leader) {
                // Slow slots are re-sent under the same ballot; only a Nack unseats the leader.
                for (auto& [slot, f] : inflight_) {
                    if (now < f.deadline) continue;
                    for (auto m : f.voters)
                        if (m != id_ && !f.acks.contains(m)) out.push_back(Outbound{m, Accept{ballot_, slot, f.value}});
                    f.attempts = std::min(f.attempts + 1, 5u);
                    f.deadline = now + config_.vote_round_delay_ms * static_cast<double>(1u << f.attempts);
                }
            }
        } else if (role_ == Role::candidate) {
            if (now >= phase1_deadline_) start_election(now, out);
        } else if (is_member()) {
            if (retry_at_ && now >= *retry_at_) {
                const bool leader_heard = leader_heard_at_ && *leader_heard_at_ > nack_at_;
                retry_at_.reset();
                if (!leader_heard) start_election(now, out);
            } else if (now >= election_deadline_) {
                start_election(now, out);
            }
        }
        for (auto& [rid, own] : own_unapplied_) {
            if (role_ != Role::leader && now >= own.sent_at + config_.forward_retry_ms) {
                own.sent_at = now;
                relay(own.value, 0, now, out);
            }
        }
        return out;
    }

    /// Earliest time at which tick() has work to do.
    std::optional<TimeMs> next_wakeup() const {
        std::optional<TimeMs> t;
        auto consider = [&](TimeMs v) {
            if (!t || v < *t) t = v;
        };
        if (role_ == Role::leader) {
            consider(next_heartbeat_at_);
            if (!promise_quorum()) consider(phase1_deadline_);
            for (const auto& [_, f] : inflight_) consider(f.deadline);
        } else if (role_ == Role::candidate) {
            consider(phase1_deadline_);
        } else if (is_member()) {
            if (retry_at_) consider(*retry_at_);
            else consider(election_deadline_);
        }
        if (role_ != Role::leader)
            for (const auto& [_, own] : own_unapplied_) consider(own.sent_at + config_.forward_retry_ms);
        return t;
    }

private:
    struct InFlight {
        Value value;
        std::set<NodeId> voters;
        std::set<NodeId> acks;
        TimeMs deadline = 0.0;
        unsigned attempts = 0;
    };
    struct OwnProposal {
        Value value;
        TimeMs sent_at = 0.0;
    };

    static std::vector<ledger::InstitutionId> founders(const ConsensusConfig& c) {
        std::vector<ledger::InstitutionId> out;
        for (auto n : c.initial_members) out.push_back(ledger::InstitutionId{n});
        return out;
    }

    template <class C, class T>
    static bool contains(const C& c, const T& v) {
        return std::find(c.begin(), c.end(), v) != c.end();
    }

    void observe(const Ballot& b) { max_round_seen_ = std::max(max_round_seen_, b.round); }

    void reset_election_timer(TimeMs now) { election_deadline_ = now + config_.election_timeout_ms(); }

    // -- leadership ---------------------------------------------------------

    void start_election(TimeMs now, std::vector<Outbound>& out) {
        role_ = Role::candidate;
        ballot_ = Ballot{max_round_seen_ + 1, id_};
        observe(ballot_);
        promised_by_.clear();
        asked_.clear();
        recovered_.clear();
        phase1_deadline_ = now + config_.vote_round_delay_ms;
        retry_at_.reset();
        const auto self = acceptor_.on_prepare(ballot_, applied_upto_);
        absorb_promise(id_, std::get<Promise>(self), now, out);
        request_promises(now, out);
        maybe_lead(now, out);
    }

    /// Sends Prepare to every current member that has not been asked under this ballot.
    void request_promises(TimeMs now, std::vector<Outbound>& out) {
        for (auto m : members_) {
            if (m == id_ || asked_.contains(m)) continue;
            if (role_ == Role::leader) phase1_deadline_ = now + config_.vote_round_delay_ms;
            asked_.insert(m);
            out.push_back(Outbound{m, Prepare{ballot_, std::min(applied_upto_, next_slot_)}});
        }
    }

    bool promise_quorum() const {
        std::size_t count = 0;
        for (auto m : members_)
            if (promised_by_.contains(m)) ++count;
        return count >= quorum_size(members_.size());
    }

    void absorb_promise(NodeId from, const Promise& p, TimeMs now, std::vector<Outbound>& out) {
        promised_by_.insert(from);
        for (const auto& d : p.decided) learn(d.slot, d.value, now, out);
        for (const auto& a : p.accepted) {
            auto it = recovered_.find(a.slot);
            if (it == recovered_.end() || it->second.ballot < a.ballot) recovered_.insert_or_assign(a.slot, a);
        }
    }

    void maybe_lead(TimeMs now, std::vector<Outbound>& out) {
        if (role_ != Role::candidate || !promise_quorum()) return;
        role_ = Role::leader;
        leader_hint_ = id_;
        next_slot_ = applied_upto_;
        inflight_.clear();
        broadcast_heartbeat(out);
        next_heartbeat_at_ = now + config_.leader_interval_ms;
        pump(now, out);
    }

    void step_down(TimeMs now) {
        if (role_ == Role::follower) return;
        // Unfinished work goes back to the queue; duplicates are dropped at apply.
        std::deque<Value> back;
        for (auto& [_, f] : inflight_)
            if (f.value.command || f.value.id.origin != netsim::kNoNode) back.push_back(f.value);
        for (auto& v : pending_) back.push_back(std::move(v));
        pending_ = std::move(back);
        inflight_.clear();
        recovered_.clear();
        role_ = Role::follower;
        reset_election_timer(now);
    }

    void enqueue(const Value& v) {
        if (applied_ids_.contains(v.id)) return;
        for (const auto& p : pending_)
            if (p.id == v.id) return;
        for (const auto& [_, f] : inflight_)
            if (f.value.id == v.id) return;
        pending_.push_back(v);
    }

    bool join_in_flight() const {
        for (const auto& [slot, f] : inflight_)
            if (f.value.is_join()) return true;
        // A decided but unapplied Join also blocks: its configuration is not in force yet.
        for (Slot s = applied_upto_; s < next_slot_; ++s)
            if (const auto* c = acceptor_.chosen(s); c && (*c)->is_join()) return true;
        return false;
    }

    std::optional<Slot> max_recovered() const {
        if (recovered_.empty()) return std::nullopt;
        return recovered_.rbegin()->first;
    }

    /// Proposes as many slots as the configuration barrier allows.
    void pump(TimeMs now, std::vector<Outbound>& out) {
        while (role_ == Role::leader) {
            if (join_in_flight()) return;
            if (!promise_quorum()) {
                request_promises(now, out);
                return;
            }
            const Slot slot = next_slot_;
            if (acceptor_.chosen(slot)) {
                ++next_slot_;
                continue;
            }
            std::optional<Value> value;
            if (auto it = recovered_.find(slot); it != recovered_.end()) {
                value = it->second.value;
            } else if (auto hi = max_recovered(); hi && slot < *hi) {
                value = noop_value(slot);
            } else {
                while (!pending_.empty() && applied_ids_.contains(pending_.front().id)) pending_.pop_front();
                if (pending_.empty()) return;
                value = std::move(pending_.front());
                pending_.pop_front();
            }
            ++next_slot_;
            assigned_.insert_or_assign(value->id, slot);
            InFlight f;
            f.value = *value;
            f.voters.insert(members_.begin(), members_.end());
            f.deadline = now + config_.vote_round_delay_ms;
            if (std::holds_alternative<Accepted>(acceptor_.on_accept(ballot_, slot, f.value))) f.acks.insert(id_);
            for (auto m : members_)
                if (m != id_) out.push_back(Outbound{m, Accept{ballot_, slot, f.value}});
            inflight_.insert_or_assign(slot, std::move(f));
            check_decided(slot, now, out);
        }
    }

    void check_decided(Slot slot, TimeMs now, std::vector<Outbound>& out) {
        auto it = inflight_.find(slot);
        if (it == inflight_.end()) return;
        const auto& f = it->second;
        if (f.acks.size() < quorum_size(f.voters.size())) return;
        Value value = f.value;
        inflight_.erase(it);
        learn(slot, value, now, out);
        for (auto m : members_)
            if (m != id_) out.push_back(Outbound{m, Decide{slot, value}});
        pump(now, out);
    }

    void broadcast_heartbeat(std::vector<Outbound>& out) {
        for (auto m : members_)
            if (m != id_) out.push_back(Outbound{m, Heartbeat{ballot_, applied_upto_}});
    }

    void relay(const Value& value, std::uint32_t hops, TimeMs now, std::vector<Outbound>& out) {
        if (role_ == Role::leader) {
            enqueue(value);
            pump(now, out);
            return;
        }
        if (leader_hint_ && *leader_hint_ != id_ && hops < kMaxForwardHops) {
            out.push_back(Outbound{*leader_hint_, Forward{value, hops + 1}});
        } else {
            enqueue(value);
        }
    }

    void flush_pending_to_leader(TimeMs now, std::vector<Outbound>& out) {
        if (role_ != Role::follower || !leader_hint_ || *leader_hint_ == id_) return;
        auto values = std::move(pending_);
        pending_.clear();
        for (auto& v : values)
            if (!applied_ids_.contains(v.id)) relay(v, 0, now, out);
    }

    // -- learning -----------------------------------------------------------

    void learn(Slot slot, const Value& value, TimeMs now, std::vector<Outbound>& out) {
        const bool fresh = acceptor_.chosen(slot) == nullptr;
        if (!acceptor_.learn(slot, value)) {
            ++conflicts_;
            return;
        }
        if (!fresh) return;
        if (chosen_hook_) chosen_hook_(slot, value);
        apply_ready(now, out);
    }

    void apply_ready(TimeMs now, std::vector<Outbound>& out) {
        bool applied_join = false;
        while (const auto* chosen = acceptor_.chosen(applied_upto_)) {
            const Value value = **chosen;
            const Slot slot = applied_upto_++;
            const ledger::TransactionRecord* record = nullptr;
            if (value.command && !applied_ids_.contains(value.id)) {
                try {
                    record = &ledger_.append(value.command->body, value.command->proposer);
                } catch (const ledger::PolicyViolation&) {
                    record = nullptr;
                }
                if (record && value.is_join()) {
                    const auto joined = std::get<ledger::JoinBody>(record->body).institution.value;
                    if (!contains(members_, joined)) {
                        members_.push_back(joined);
                        applied_join = true;
                        if (joined == id_) reset_election_timer(now);
                    }
                }
            }
            if (value.id.origin != netsim::kNoNode) applied_ids_.insert(value.id);
            own_unapplied_.erase(value.id);
            if (apply_hook_) apply_hook_(slot, value, record);
        }
        if (next_slot_ < applied_upto_) next_slot_ = applied_upto_;
        if (role_ == Role::candidate && applied_join) {
            request_promises(now, out);
            maybe_lead(now, out);
        }
        if (role_ == Role::leader) pump(now, out);
    }

    // -- handlers -----------------------------------------------------------

    void on(NodeId from, const Prepare& m, TimeMs now, std::vector<Outbound>& out) {
        observe(m.ballot);
        auto reply = acceptor_.on_prepare(m.ballot, m.from_slot);
        if (auto* p = std::get_if<Promise>(&reply)) {
            if (m.ballot.node != id_ && role_ != Role::follower && ballot_ < m.ballot) step_down(now);
            reset_election_timer(now);
            out.push_back(Outbound{from, std::move(*p)});
        } else {
            out.push_back(Outbound{from, std::get<Nack>(reply)});
        }
    }

    void on(NodeId from, const Promise& m, TimeMs now, std::vector<Outbound>& out) {
        observe(m.ballot);
        if (m.ballot != ballot_ || role_ == Role::follower) return;
        absorb_promise(from, m, now, out);
        if (role_ == Role::candidate) {
            request_promises(now, out);
            maybe_lead(now, out);
        } else {
            pump(now, out);
        }
    }

    void on(NodeId, const Nack& m, TimeMs now, std::vector<Outbound>&) {
        observe(m.promised);
        if (m.ballot != ballot_ || role_ == Role::follower || !(ballot_ < m.promised)) return;
        step_down(now);
        nack_at_ = now;
        retry_at_ = now + config_.vote_round_delay_ms;
    }

    void on(NodeId from, const Accept& m, TimeMs now, std::vector<Outbound>& out) {
        observe(m.ballot);
        auto reply = acceptor_.on_accept(m.ballot, m.slot, m.value);
        if (std::holds_alternative<Accepted>(reply)) {
            if (m.ballot.node != id_ && role_ != Role::follower && ballot_ < m.ballot) step_down(now);
            if (role_ == Role::follower) {
                leader_hint_ = m.ballot.node;
                reset_election_timer(now);
            }
            out.push_back(Outbound{from, std::get<Accepted>(reply)});
        } else {
            out.push_back(Outbound{from, std::get<Nack>(reply)});
        }
    }

    void on(NodeId from, const Accepted& m, TimeMs now, std::vector<Outbound>& out) {
        if (role_ != Role::leader || m.ballot != ballot_) return;  // stale ack
        auto it = inflight_.find(m.slot);
        if (it == inflight_.end() || !it->second.voters.contains(from)) return;
        it->second.acks.insert(from);
        check_decided(m.slot, now, out);
    }

    void on(NodeId from, const Decide& m, TimeMs now, std::vector<Outbound>& out) {
        learn(m.slot, m.value, now, out);
        if (m.slot > applied_upto_ && !catchup_outstanding(now))
            request_catchup(from, now, out);
    }

    void on(NodeId from, const Heartbeat& m, TimeMs now, std::vector<Outbound>& out) {
        observe(m.ballot);
        const auto& promised = acceptor_.promised();
        if (promised && m.ballot < *promised) {
            out.push_back(Outbound{from, Nack{m.ballot, *promised}});
            return;
        }
        if (role_ != Role::follower && ballot_ < m.ballot) step_down(now);
        if (role_ != Role::follower) return;
        leader_hint_ = m.ballot.node;
        leader_heard_at_ = now;
        retry_at_.reset();
        reset_election_timer(now);
        if (m.commit > applied_upto_ && !catchup_outstanding(now)) request_catchup(from, now, out);
        flush_pending_to_leader(now, out);
    }

    void on(NodeId from, const CatchupRequest& m, TimeMs, std::vector<Outbound>& out) {
        auto decided = acceptor_.decided_from(m.from_slot, kCatchupBatch);
        if (!decided.empty()) out.push_back(Outbound{from, CatchupReply{std::move(decided)}});
    }

    void on(NodeId from, const CatchupReply& m, TimeMs now, std::vector<Outbound>& out) {
        catchup_sent_at_.reset();
        for (const auto& d : m.decided) learn(d.slot, d.value, now, out);
        if (m.decided.size() == kCatchupBatch) request_catchup(from, now, out);
    }

    void on(NodeId, const Forward& m, TimeMs now, std::vector<Outbound>& out) {
        if (applied_ids_.contains(m.value.id)) return;
        relay(m.value, m.hops, now, out);
    }

    bool catchup_outstanding(TimeMs now) const {
        return catchup_sent_at_ && now < *catchup_sent_at_ + config_.vote_round_delay_ms;
    }

    void request_catchup(NodeId from, TimeMs now, std::vector<Outbound>& out) {
        catchup_sent_at_ = now;
        out.push_back(Outbound{from, CatchupRequest{applied_upto_}});
    }

    NodeId id_;
    ConsensusConfig config_;
    Acceptor acceptor_;
    ledger::Ledger ledger_;
    std::vector<NodeId> members_;

    Role role_ = Role::follower;
    Ballot ballot_{};
    std::uint64_t max_round_seen_ = 0;
    std::optional<NodeId> leader_hint_;

    // candidate / leader
    std::set<NodeId> promised_by_;
    std::set<NodeId> asked_;
    std::map<Slot, AcceptedEntry> recovered_;
    std::map<Slot, InFlight> inflight_;
    std::deque<Value> pending_;
    std::map<RequestId, Slot> assigned_;
    Slot next_slot_ = 0;
    TimeMs phase1_deadline_ = 0.0;
    TimeMs next_heartbeat_at_ = 0.0;

    // follower
    TimeMs election_deadline_ = 0.0;
    std::optional<TimeMs> retry_at_;
    TimeMs nack_at_ = 0.0;
    std::optional<TimeMs> leader_heard_at_;
    std::optional<TimeMs> catchup_sent_at_;

    Slot applied_upto_ = 0;
    std::set<RequestId> applied_ids_;
    std::map<RequestId, OwnProposal> own_unapplied_;
    ApplyHook apply_hook_;
    ChosenHook chosen_hook_;
    std::size_t conflicts_ = 0;
};

}  // namespace stigma::consensus
