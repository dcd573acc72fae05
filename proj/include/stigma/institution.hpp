#pragma once

// Per-hospital node logic on top of the replicated ledger: anonymization,
// local training, model registration, discovery and vote-gated rolling
// updates. Parameters only ever travel peer-to-peer, after a CommitUpdate.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "stigma/cluster.hpp"
#include "stigma/ledger.hpp"
#include "stigma/trainer.hpp"

namespace stigma::institution {

using ledger::InstitutionId;
using trainer::ModelParams;

// ---------------------------------------------------------------------------
// Records and anonymization

struct RawRecord {
    std::string name;
    std::string patient_id;
    int age = 0;
    std::string zip;
    std::map<std::string, double> measurements;
};

struct AnonRecord {
    ledger::Digest pseudonym{};
    std::string age_band;
    std::string zip2;
    std::map<std::string, double> measurements;
    friend bool operator==(const AnonRecord&, const AnonRecord&) = default;
};

/// Ten-year band, e.g. 34 -> "30-39".
inline std::string age_band(int age) {
    if (age < 0) throw std::invalid_argument("age must be non-negative");
    const int lo = age / 10 * 10;
    return std::to_string(lo) + "-" + std::to_string(lo + 9);
}

inline ledger::Digest pseudonym(std::string_view salt, std::string_view patient_id) {
    std::string buf(salt);
    buf += patient_id;
    return ledger::fingerprint(buf);
}

inline AnonRecord anonymize(const RawRecord& r, std::string_view salt) {
    if (salt.empty()) throw std::invalid_argument("anonymization salt must be nonempty");
    if (r.patient_id.empty()) throw std::invalid_argument("record is missing patient_id");
    return AnonRecord{pseudonym(salt, r.patient_id), age_band(r.age), r.zip.substr(0, 2), r.measurements};
}

inline ledger::Bytes serialize(const AnonRecord& r) {
    ledger::Encoder e;
    e.digest(r.pseudonym).str(r.age_band).str(r.zip2).u64(r.measurements.size());
    for (const auto& [k, v] : r.measurements) e.str(k).f64(v);
    return std::move(e).bytes();
}

inline constexpr std::string_view kLabelKey = "diagnosis";

inline std::string feature_key(std::size_t j) { return "f" + std::to_string(j); }

/// Synthetic patients whose features follow trainer::make_dataset.
inline std::vector<RawRecord> generate_records(std::uint64_t seed, std::size_t n, double separation,
                                               std::size_t dim = 2) {
    static constexpr std::array<std::string_view, 8> kFirst = {"Ana", "Ben", "Chiara", "Dario",
                                                               "Eva", "Felix", "Greta", "Hugo"};
    static constexpr std::array<std::string_view, 8> kLast = {"Berger", "Huber", "Kofler", "Moser",
                                                              "Novak", "Rossi", "Wagner", "Zanetti"};
    const auto ds = trainer::make_dataset(seed, n, separation, dim);
    netsim::Rng rng(seed ^ 0xA11CEULL);
    std::vector<RawRecord> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        RawRecord r;
        r.name = std::string(kFirst[rng.below(kFirst.size())]) + " " + std::string(kLast[rng.below(kLast.size())]) +
                 " " + std::to_string(rng.below(10000));
        r.patient_id = "P" + std::to_string(100000000 + rng.below(900000000));
        r.age = 18 + static_cast<int>(rng.below(72));
        r.zip = std::to_string(10000 + rng.below(90000));
        for (std::size_t j = 0; j < dim; ++j) r.measurements[feature_key(j)] = ds.samples[i].x[j];
        r.measurements[std::string(kLabelKey)] = ds.samples[i].label;
        r.measurements["hr"] = std::round(55.0 + rng.uniform(0.0, 50.0));
        out.push_back(std::move(r));
    }
    return out;
}

inline trainer::SyntheticDataset to_dataset(const std::vector<AnonRecord>& records, std::size_t dim) {
    trainer::SyntheticDataset ds;
    ds.dim = dim;
    for (const auto& r : records) {
        trainer::Sample s;
        for (std::size_t j = 0; j < dim; ++j) {
            auto it = r.measurements.find(feature_key(j));
            if (it == r.measurements.end()) throw std::invalid_argument("record lacks feature " + feature_key(j));
            s.x.push_back(it->second);
        }
        auto lab = r.measurements.find(std::string(kLabelKey));
        if (lab == r.measurements.end()) throw std::invalid_argument("record lacks a label");
        s.label = lab->second >= 0.5 ? 1 : 0;
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Parameters

inline ledger::Bytes encode_params(const ModelParams& p) {
    ledger::Encoder e;
    e.u64(p.sample_count).u64(p.weights.size());
    for (double w : p.weights) e.f64(w);
    return std::move(e).bytes();
}

inline ledger::Digest params_fingerprint(const ModelParams& p) { return ledger::fingerprint(encode_params(p)); }

/// Sample-count-weighted average.
inline ModelParams merge_models(const ModelParams& a, const ModelParams& b) {
    if (a.weights.size() != b.weights.size()) throw std::invalid_argument("cannot merge models of different dimension");
    const double na = static_cast<double>(a.sample_count), nb = static_cast<double>(b.sample_count);
    ModelParams out;
    out.sample_count = a.sample_count + b.sample_count;
    out.weights.resize(a.weights.size());
    for (std::size_t i = 0; i < a.weights.size(); ++i) {
        if (out.sample_count == 0)
            out.weights[i] = 0.5 * (a.weights[i] + b.weights[i]);
        else if (a.weights[i] == b.weights[i])
            out.weights[i] = a.weights[i];
        else
            out.weights[i] = std::clamp((na * a.weights[i] + nb * b.weights[i]) / (na + nb),
                                        std::min(a.weights[i], b.weights[i]), std::max(a.weights[i], b.weights[i]));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Peer-to-peer messages

struct AppMessage {
    enum class Kind : std::uint8_t { params_request = 0, params_transfer = 1 };
    Kind kind = Kind::params_request;
    std::string proposal_id;
    std::string model_id;
    ModelParams params;  // transfer only

    ledger::Bytes encode() const {
        ledger::Encoder e;
        e.u8(static_cast<std::uint8_t>(kind)).str(proposal_id).str(model_id);
        if (kind == Kind::params_transfer) e.nested(encode_params(params));
        return std::move(e).bytes();
    }
    std::string_view name() const { return kind == Kind::params_request ? "ParamsRequest" : "ParamsTransfer"; }
    std::string describe() const { return std::string(name()) + " proposal=" + proposal_id + " model=" + model_id; }
};

/// Kind and proposal id of an encoded AppMessage, if it is one.
inline std::optional<std::pair<AppMessage::Kind, std::string>> peek_app(std::span<const std::uint8_t> bytes) {
    try {
        ledger::Decoder d(bytes);
        const auto k = d.u8();
        if (k > 1) return std::nullopt;
        return std::pair{static_cast<AppMessage::Kind>(k), d.str()};
    } catch (const ledger::DecodeError&) {
        return std::nullopt;
    }
}

// ---------------------------------------------------------------------------
// Voting

struct VotePolicy {
    /// Fraction of the electorate that must approve; 1.0 is unanimity.
    double threshold = 1.0;

    std::uint64_t required(std::uint64_t electorate) const {
        const auto need = static_cast<std::uint64_t>(std::ceil(threshold * static_cast<double>(electorate) - 1e-9));
        return std::max<std::uint64_t>(need, 1);
    }

    /// Approved / rejected once the outcome can no longer change.
    std::optional<bool> decide(const ledger::VoteTally& t) const {
        const auto need = required(t.electorate);
        if (t.yes >= need) return true;
        if (t.electorate - t.no < need) return false;
        return std::nullopt;
    }
};

using VoteScript = std::function<bool(InstitutionId voter, const ledger::UpdateProposal&)>;

enum class UpdateStatus { voting, approved, rejected, merging, merged, failed };

inline std::string_view to_string(UpdateStatus s) {
    switch (s) {
    case UpdateStatus::voting: return "voting";
    case UpdateStatus::approved: return "approved";
    case UpdateStatus::rejected: return "rejected";
    case UpdateStatus::merging: return "merging";
    case UpdateStatus::merged: return "merged";
    case UpdateStatus::failed: return "failed";
    }
    return "?";
}

struct UpdateOutcome {
    ledger::UpdateProposal proposal;
    UpdateStatus status = UpdateStatus::voting;
    ledger::VoteTally tally;
    std::optional<ledger::ModelDescriptor> merged;

    bool finished() const {
        return status == UpdateStatus::rejected || status == UpdateStatus::merged || status == UpdateStatus::failed;
    }
};

class TrainingFailed : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Federation

struct FederationOptions {
    std::size_t institutions = 3;
    /// Per-institution hardware; empty places everyone on ES-medium.
    std::vector<netsim::DeviceClass> devices;
    double jitter = 0.0;
    consensus::ConsensusConfig consensus;
    NetworkOptions network{.record_messages = true};
    trainer::CostModel cost;
    trainer::TrainOptions training;
    VotePolicy vote_policy;
    std::string algorithm_tag = "logreg";
    std::size_t feature_dim = 2;
    std::uint64_t seed = 1;
    TimeMs horizon_ms = 3'600'000.0;
};

class Federation {
public:
    using Net = Cluster<AppMessage>;

    explicit Federation(FederationOptions opt) : opt_(std::move(opt)), net_(make_net(opt_)) {
        opt_.cost.validate();
        nodes_.resize(opt_.institutions);
        for (NodeId i = 0; i < nodes_.size(); ++i)
            nodes_[i].salt = ledger::to_hex(ledger::fingerprint("salt/" + std::to_string(opt_.seed) + "/" + std::to_string(i)));
        net_.set_commit_handler([this](NodeId n, const ledger::TransactionRecord& r) { on_commit(n, r); });
        net_.set_app_handler([this](NodeId self, NodeId from, const AppMessage& m) { on_app(self, from, m); });
    }

    Federation(const Federation&) = delete;
    Federation& operator=(const Federation&) = delete;

    std::size_t size() const { return nodes_.size(); }
    Net& network() { return net_; }
    const Net& network() const { return net_; }
    const FederationOptions& options() const { return opt_; }
    const ledger::Ledger& ledger(NodeId n) const { return net_.replica(n).ledger(); }
    const std::vector<AnonRecord>& records(NodeId n) const { return nodes_.at(n).records; }
    const std::string& salt(NodeId n) const { return nodes_.at(n).salt; }
    std::optional<ModelParams> local_params(NodeId n, const std::string& model_id) const {
        const auto& m = nodes_.at(n).current;
        auto it = m.find(model_id);
        if (it == m.end()) return std::nullopt;
        return it->second;
    }

    netsim::DeviceClass device(NodeId n) const {
        return opt_.devices.empty() ? netsim::DeviceClass::es_medium : opt_.devices.at(n);
    }

    std::string model_id(NodeId n) const { return "i" + std::to_string(n) + "/" + opt_.algorithm_tag; }

    void set_vote_script(VoteScript s) { vote_script_ = std::move(s); }

    /// Runs until every institution has joined; returns the virtual time.
    TimeMs initialize() { return net_.measure_init(opt_.horizon_ms); }

    /// Anonymizes and stores records locally; raw input is not retained.
    void ingest(NodeId n, const std::vector<RawRecord>& raw) {
        auto& node = nodes_.at(n);
        for (const auto& r : raw) node.records.push_back(anonymize(r, node.salt));
    }

    /// Generates, ingests and hands back a node's synthetic raw input.
    std::vector<RawRecord> load_synthetic(NodeId n, std::size_t count = 500, double separation = 4.0) {
        auto raw = generate_records(opt_.seed * 1'000'003ULL + n, count, separation, opt_.feature_dim);
        ingest(n, raw);
        return raw;
    }

    /// Trains locally and submits the descriptor once the device's modeled
    /// training time has elapsed. Returns the descriptor that will commit.
    ledger::ModelDescriptor begin_train_and_register(NodeId n, double target_accuracy) {
        auto& node = nodes_.at(n);
        if (node.records.empty()) throw std::invalid_argument("cannot train on an empty dataset");
        if (!net_.replica(n).is_member()) throw std::logic_error("institution has not joined the network");
        const auto ds = to_dataset(node.records, opt_.feature_dim);
        const auto result = trainer::train_toy(ds, target_accuracy, opt_.training);
        if (result.achieved_accuracy < 0.5)
            throw TrainingFailed("training did not reach 0.5 accuracy within the epoch budget");

        const auto id = model_id(n);
        ledger::ModelDescriptor d;
        d.model_id = id;
        d.owner = InstitutionId{n};
        d.version = next_version(n, id);
        d.algorithm_tag = opt_.algorithm_tag;
        d.accuracy_estimate = result.achieved_accuracy;
        d.params_fingerprint = params_fingerprint(result.params);
        d.sample_count = result.params.sample_count;
        d.metrics["epochs"] = static_cast<double>(result.epochs_used);
        d.metrics["train_ms"] = opt_.cost.estimate_ms(device(n), target_accuracy);
        node.current[id] = result.params;
        node.by_fingerprint[d.params_fingerprint] = result.params;

        net_.schedule(n, d.metrics["train_ms"], [this, n, d] {
            net_.propose(n, consensus::Command{d, InstitutionId{n}});
        }, "register " + id);
        return d;
    }

    ledger::ModelDescriptor train_and_register(NodeId n, double target_accuracy) {
        auto d = begin_train_and_register(n, target_accuracy);
        await_registered({d});
        return d;
    }

    /// Runs until every descriptor is on every live replica.
    void await_registered(const std::vector<ledger::ModelDescriptor>& ds) {
        auto done = [&] {
            for (NodeId i = 0; i < size(); ++i) {
                if (net_.crashed(i)) continue;
                for (const auto& d : ds) {
                    auto m = ledger(i).latest_model(d.model_id);
                    if (!m || m->version < d.version) return false;
                }
            }
            return true;
        };
        if (!net_.run_until(done, opt_.horizon_ms)) throw netsim::SimulationError("model registration did not commit");
    }

    std::vector<ledger::ModelDescriptor> find_suitable(NodeId n, double min_accuracy,
                                                       const ledger::SuitabilityPredicate& extra = {}) const {
        return ledger::find_suitable(ledger(n), {opt_.algorithm_tag, min_accuracy, InstitutionId{n}}, extra);
    }

    /// Submits a ProposeUpdate that would merge `peer` into this node's model.
    std::string begin_rolling_update(NodeId n, const ledger::ModelDescriptor& peer) {
        auto& node = nodes_.at(n);
        const auto target = model_id(n);
        if (!ledger(n).latest_model(target) || !node.current.contains(target))
            throw std::logic_error("institution has no registered model to update");
        if (peer.owner == InstitutionId{n}) throw std::invalid_argument("cannot update from an own model");
        ledger::UpdateProposal p;
        p.proposal_id = "u" + std::to_string(n) + "-" + std::to_string(node.proposals++);
        p.source_model_id = peer.model_id;
        p.target_model_id = target;
        p.proposer = InstitutionId{n};
        p.params_fingerprint = peer.params_fingerprint;
        node.updates[p.proposal_id] = UpdateOutcome{p, UpdateStatus::voting, {}, std::nullopt};
        net_.propose(n, consensus::Command{p, InstitutionId{n}});
        return p.proposal_id;
    }

    const UpdateOutcome& update(NodeId n, const std::string& proposal_id) const {
        return nodes_.at(n).updates.at(proposal_id);
    }

    /// Runs until the proposal is rejected, failed, or merged and the new
    /// version is on every live replica.
    UpdateOutcome await_update(NodeId n, const std::string& proposal_id) {
        auto done = [&] {
            const auto& u = update(n, proposal_id);
            if (!u.finished()) return false;
            if (u.status != UpdateStatus::merged) return true;
            for (NodeId i = 0; i < size(); ++i) {
                if (net_.crashed(i)) continue;
                auto m = ledger(i).latest_model(u.merged->model_id);
                if (!m || m->version < u.merged->version) return false;
            }
            return true;
        };
        if (!net_.run_until(done, opt_.horizon_ms)) throw netsim::SimulationError("rolling update did not finish");
        return update(n, proposal_id);
    }

    UpdateOutcome initiate_rolling_update(NodeId n, const ledger::ModelDescriptor& peer) {
        return await_update(n, begin_rolling_update(n, peer));
    }

    void run_for(TimeMs ms) { net_.run_for(ms); }

    /// Every replica's chain verifies and all logs are identical.
    bool replicas_consistent() const {
        const auto reference = ledger(0).to_bytes();
        for (NodeId i = 0; i < size(); ++i) {
            if (!ledger::verify_chain(ledger(i))) return false;
            if (ledger(i).to_bytes() != reference) return false;
        }
        return true;
    }

private:
    struct NodeState {
        std::string salt;
        std::vector<AnonRecord> records;
        std::map<std::string, ModelParams> current;
        std::map<ledger::Digest, ModelParams> by_fingerprint;
        std::map<std::string, std::uint64_t> issued_versions;
        std::map<std::string, UpdateOutcome> updates;
        std::multimap<std::string, std::pair<NodeId, std::string>> waiting;  // proposal -> (requester, model)
        std::uint64_t proposals = 0;
    };

    static Net make_net(const FederationOptions& opt) {
        return Net(opt.consensus, make_topology(opt), opt.network, opt.seed);
    }

    static Topology make_topology(const FederationOptions& opt) {
        if (opt.institutions == 0) throw std::invalid_argument("a federation needs at least one institution");
        auto devices = opt.devices;
        if (devices.empty()) devices.assign(opt.institutions, netsim::DeviceClass::es_medium);
        if (devices.size() != opt.institutions) throw std::invalid_argument("one device class per institution");
        return Topology::from_devices(std::move(devices), opt.jitter);
    }

    std::uint64_t next_version(NodeId n, const std::string& id) {
        auto& issued = nodes_[n].issued_versions[id];
        const auto committed = ledger(n).latest_model(id);
        issued = std::max(issued, committed ? committed->version : 0) + 1;
        return issued;
    }

    bool vote(InstitutionId voter, const ledger::UpdateProposal& p) const {
        return vote_script_ ? vote_script_(voter, p) : true;
    }

    void on_commit(NodeId n, const ledger::TransactionRecord& rec) {
        auto& node = nodes_[n];
        const auto& lg = ledger(n);
        if (const auto* p = std::get_if<ledger::UpdateProposal>(&rec.body)) {
            const auto electorate = lg.members_at(rec.slot);
            if (std::find(electorate.begin(), electorate.end(), InstitutionId{n}) == electorate.end()) return;
            ledger::VoteBody v{p->proposal_id, InstitutionId{n}, vote(InstitutionId{n}, *p)};
            net_.propose(n, consensus::Command{v, InstitutionId{n}});
        } else if (const auto* v = std::get_if<ledger::VoteBody>(&rec.body)) {
            auto it = node.updates.find(v->proposal_id);
            if (it == node.updates.end() || it->second.status != UpdateStatus::voting) return;
            auto& u = it->second;
            u.tally = lg.tally(v->proposal_id);
            const auto verdict = opt_.vote_policy.decide(u.tally);
            if (!verdict) return;
            if (!*verdict) {
                u.status = UpdateStatus::rejected;
                return;
            }
            u.status = UpdateStatus::approved;
            ledger::CommitBody c{v->proposal_id, u.tally.yes, u.tally.electorate};
            net_.propose(n, consensus::Command{c, InstitutionId{n}});
        } else if (const auto* c = std::get_if<ledger::CommitBody>(&rec.body)) {
            auto it = node.updates.find(c->proposal_id);
            if (it != node.updates.end() && it->second.status == UpdateStatus::approved) {
                const auto src = lg.latest_model(it->second.proposal.source_model_id);
                if (!src) {
                    it->second.status = UpdateStatus::failed;
                } else {
                    AppMessage req{AppMessage::Kind::params_request, c->proposal_id, src->model_id, {}};
                    net_.send_app(n, src->owner.value, std::move(req));
                }
            }
            auto [lo, hi] = node.waiting.equal_range(c->proposal_id);
            std::vector<std::pair<NodeId, std::string>> ready;
            for (auto w = lo; w != hi; ++w) ready.push_back(w->second);
            node.waiting.erase(lo, hi);
            for (const auto& [requester, model] : ready) serve(n, requester, c->proposal_id, model);
        } else if (const auto* m = std::get_if<ledger::ModelDescriptor>(&rec.body)) {
            if (m->owner != InstitutionId{n}) return;
            for (auto& [_, u] : node.updates)
                if (u.status == UpdateStatus::merging && u.merged && u.merged->model_id == m->model_id &&
                    u.merged->version == m->version)
                    u.status = UpdateStatus::merged;
        }
    }

    void on_app(NodeId self, NodeId from, const AppMessage& m) {
        if (m.kind == AppMessage::Kind::params_request) {
            if (ledger(self).has_commit(m.proposal_id))
                serve(self, from, m.proposal_id, m.model_id);
            else
                nodes_[self].waiting.emplace(m.proposal_id, std::pair{from, m.model_id});
            return;
        }
        auto& node = nodes_[self];
        auto it = node.updates.find(m.proposal_id);
        if (it == node.updates.end() || it->second.status != UpdateStatus::approved) return;
        auto& u = it->second;
        if (params_fingerprint(m.params) != u.proposal.params_fingerprint) {
            u.status = UpdateStatus::failed;
            return;
        }
        const auto& target = u.proposal.target_model_id;
        const auto merged = merge_models(node.current.at(target), m.params);
        const auto [train, holdout] =
            trainer::split_holdout(to_dataset(node.records, opt_.feature_dim), opt_.training.split_seed);
        (void)train;
        ledger::ModelDescriptor d;
        d.model_id = target;
        d.owner = InstitutionId{self};
        d.version = next_version(self, target);
        d.algorithm_tag = opt_.algorithm_tag;
        d.accuracy_estimate = trainer::accuracy(merged, holdout);
        d.params_fingerprint = params_fingerprint(merged);
        d.sample_count = merged.sample_count;
        node.current[target] = merged;
        node.by_fingerprint[d.params_fingerprint] = merged;
        u.merged = d;
        u.status = UpdateStatus::merging;
        net_.propose(self, consensus::Command{d, InstitutionId{self}});
    }

    /// Owner side: hand out parameters only for a committed proposal naming
    /// this owner's model and the requesting proposer.
    void serve(NodeId owner, NodeId requester, const std::string& proposal_id, const std::string& model) {
        const auto& lg = ledger(owner);
        if (!lg.has_commit(proposal_id)) return;
        const auto prop = lg.find_proposal(proposal_id);
        if (!prop || prop->second.proposer != InstitutionId{requester} || prop->second.source_model_id != model) return;
        const auto desc = lg.latest_model(model);
        if (!desc || desc->owner != InstitutionId{owner}) return;
        auto it = nodes_[owner].by_fingerprint.find(prop->second.params_fingerprint);
        if (it == nodes_[owner].by_fingerprint.end()) return;
        net_.send_app(owner, requester, AppMessage{AppMessage::Kind::params_transfer, proposal_id, model, it->second});
    }

    FederationOptions opt_;
    Net net_;
    std::vector<NodeState> nodes_;
    VoteScript vote_script_;
};

// ---------------------------------------------------------------------------
// Audits over a finished run

/// ParamsTransfer messages whose sender had not yet applied the matching
/// CommitUpdate when the message left.
inline std::size_t params_without_commit(const std::vector<MessageRecord>& messages,
                                         const std::vector<ApplyRecord>& applies) {
    std::size_t bad = 0;
    for (const auto& m : messages) {
        if (m.type != "ParamsTransfer") continue;
        const auto head = peek_app(m.payload);
        bool ok = false;
        if (head) {
            for (const auto& a : applies) {
                if (a.node != m.from || a.at > m.sent_at) continue;
                const auto* c = std::get_if<ledger::CommitBody>(&a.record.body);
                if (c && c->proposal_id == head->second) {
                    ok = true;
                    break;
                }
            }
        }
        bad += !ok;
    }
    return bad;
}

/// Messages whose payload contains any of the given byte strings.
inline std::size_t messages_containing(const std::vector<MessageRecord>& messages,
                                       const std::vector<ledger::Bytes>& needles) {
    std::size_t hits = 0;
    for (const auto& m : messages) {
        for (const auto& n : needles) {
            if (n.empty()) continue;
            if (std::search(m.payload.begin(), m.payload.end(), n.begin(), n.end()) != m.payload.end()) {
                ++hits;
                break;
            }
        }
    }
    return hits;
}

/// Byte strings that must never leave an institution: direct identifiers,
/// pseudonyms and whole serialized records.
inline std::vector<ledger::Bytes> sensitive_tokens(const std::vector<RawRecord>& raw,
                                                   const std::vector<AnonRecord>& anon) {
    std::vector<ledger::Bytes> out;
    for (const auto& r : raw) {
        out.emplace_back(r.patient_id.begin(), r.patient_id.end());
        out.emplace_back(r.name.begin(), r.name.end());
    }
    for (const auto& a : anon) {
        out.emplace_back(a.pseudonym.begin(), a.pseudonym.end());
        out.push_back(serialize(a));
    }
    return out;
}

}  // namespace stigma::institution
