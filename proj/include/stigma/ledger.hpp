#pragma once

// Append-only, hash-chained ledger. Records carry fingerprints and metadata
// only; parameter vectors and patient data never appear in a record body.

#include <algorithm>
#include <array>
#include <bit>
#include <compare>
#include <cstdint>
#include <cstring>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

namespace stigma::ledger {

struct InstitutionId {
    std::uint32_t value = 0;
    friend auto operator<=>(const InstitutionId&, const InstitutionId&) = default;
};

using Digest = std::array<std::uint8_t, 32>;
using Bytes = std::vector<std::uint8_t>;

inline constexpr Digest kGenesisDigest{};

inline Digest fingerprint(std::span<const std::uint8_t> payload) {
    Digest out{};
    unsigned int len = 0;
    if (EVP_Digest(payload.data(), payload.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 ||
        len != out.size())
        throw std::runtime_error("SHA-256 digest failed");
    return out;
}

inline Digest fingerprint(std::string_view payload) {
    return fingerprint(std::span(reinterpret_cast<const std::uint8_t*>(payload.data()), payload.size()));
}

inline std::string to_hex(std::span<const std::uint8_t> bytes) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (auto b : bytes) {
        out.push_back(kDigits[b >> 4]);
        out.push_back(kDigits[b & 0xf]);
    }
    return out;
}

inline std::optional<Digest> digest_from_hex(std::string_view hex) {
    if (hex.size() != 64) return std::nullopt;
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        return -1;
    };
    Digest d{};
    for (std::size_t i = 0; i < d.size(); ++i) {
        int hi = nibble(hex[2 * i]), lo = nibble(hex[2 * i + 1]);
        if (hi < 0 || lo < 0) return std::nullopt;
        d[i] = static_cast<std::uint8_t>(hi << 4 | lo);
    }
    return d;
}

// ---------------------------------------------------------------------------
// Canonical encoding: every field is a little-endian u64 length followed by
// its bytes, concatenated in declared order.

class Encoder {
public:
    Encoder& raw_field(std::span<const std::uint8_t> bytes) {
        put_u64(bytes.size());
        out_.insert(out_.end(), bytes.begin(), bytes.end());
        return *this;
    }
    Encoder& str(std::string_view s) {
        return raw_field(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
    }
    Encoder& u64(std::uint64_t v) {
        std::array<std::uint8_t, 8> b{};
        for (int i = 0; i < 8; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
        return raw_field(b);
    }
    Encoder& u32(std::uint32_t v) {
        std::array<std::uint8_t, 4> b{};
        for (int i = 0; i < 4; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
        return raw_field(b);
    }
    Encoder& u8(std::uint8_t v) { return raw_field(std::span(&v, 1)); }
    Encoder& boolean(bool v) { return u8(v ? 1 : 0); }
    Encoder& f64(double v) { return u64(std::bit_cast<std::uint64_t>(v)); }
    Encoder& digest(const Digest& d) { return raw_field(d); }
    Encoder& nested(const Bytes& b) { return raw_field(b); }

    const Bytes& bytes() const& { return out_; }
    Bytes bytes() && { return std::move(out_); }

private:
    void put_u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    Bytes out_;
};

class DecodeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Strict reader: fixed-width fields must have their exact width and booleans
/// must be 0 or 1, so every accepted input re-encodes to itself.
class Decoder {
public:
    explicit Decoder(std::span<const std::uint8_t> in) : in_(in) {}

    std::span<const std::uint8_t> raw_field() {
        const std::uint64_t len = take_u64();
        if (len > in_.size() - pos_) throw DecodeError("field length past end of input");
        auto out = in_.subspan(pos_, len);
        pos_ += len;
        return out;
    }
    std::string str() {
        auto f = raw_field();
        return std::string(f.begin(), f.end());
    }
    std::uint64_t u64() { return fixed<8>(); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(fixed<4>()); }
    std::uint8_t u8() { return static_cast<std::uint8_t>(fixed<1>()); }
    bool boolean() {
        auto v = u8();
        if (v > 1) throw DecodeError("boolean out of range");
        return v == 1;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    Digest digest() {
        auto f = raw_field();
        if (f.size() != 32) throw DecodeError("digest must be 32 bytes");
        Digest d{};
        std::memcpy(d.data(), f.data(), 32);
        return d;
    }
    bool done() const { return pos_ == in_.size(); }
    void expect_done() const {
        if (!done()) throw DecodeError("trailing bytes");
    }

private:
    template <std::size_t N>
    std::uint64_t fixed() {
        auto f = raw_field();
        if (f.size() != N) throw DecodeError("fixed-width field has wrong length");
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < N; ++i) v |= static_cast<std::uint64_t>(f[i]) << (8 * i);
        return v;
    }
    std::uint64_t take_u64() {
        if (in_.size() - pos_ < 8) throw DecodeError("truncated length prefix");
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return v;
    }

    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// Record bodies

enum class TransactionKind : std::uint8_t { Join, RegisterModel, ProposeUpdate, Vote, CommitUpdate };

inline std::string_view to_string(TransactionKind k) {
    switch (k) {
    case TransactionKind::Join: return "Join";
    case TransactionKind::RegisterModel: return "RegisterModel";
    case TransactionKind::ProposeUpdate: return "ProposeUpdate";
    case TransactionKind::Vote: return "Vote";
    case TransactionKind::CommitUpdate: return "CommitUpdate";
    }
    return "?";
}

struct JoinBody {
    InstitutionId institution;
    std::string device_class;
    friend bool operator==(const JoinBody&, const JoinBody&) = default;
};

struct ModelDescriptor {
    std::string model_id;
    InstitutionId owner;
    std::uint64_t version = 1;
    std::string algorithm_tag;
    double accuracy_estimate = 0.0;
    Digest params_fingerprint{};
    std::uint64_t sample_count = 0;
    /// Free-form inference/performance figures (e.g. "latency_ms").
    std::map<std::string, double> metrics;
    friend bool operator==(const ModelDescriptor&, const ModelDescriptor&) = default;
};

struct UpdateProposal {
    std::string proposal_id;
    std::string source_model_id;  // peer model offering the update
    std::string target_model_id;  // proposer's model to be improved
    InstitutionId proposer;
    Digest params_fingerprint{};
    friend bool operator==(const UpdateProposal&, const UpdateProposal&) = default;
};

struct VoteBody {
    std::string proposal_id;
    InstitutionId voter;
    bool approve = false;
    friend bool operator==(const VoteBody&, const VoteBody&) = default;
};

struct CommitBody {
    std::string proposal_id;
    std::uint64_t yes_votes = 0;
    std::uint64_t electorate = 0;
    friend bool operator==(const CommitBody&, const CommitBody&) = default;
};

/// Alternative index == TransactionKind.
using Body = std::variant<JoinBody, ModelDescriptor, UpdateProposal, VoteBody, CommitBody>;

inline TransactionKind kind_of(const Body& b) { return static_cast<TransactionKind>(b.index()); }

inline Bytes encode_body(const Body& body) {
    Encoder e;
    std::visit(
        [&](const auto& b) {
            using T = std::decay_t<decltype(b)>;
            if constexpr (std::is_same_v<T, JoinBody>) {
                e.u32(b.institution.value).str(b.device_class);
            } else if constexpr (std::is_same_v<T, ModelDescriptor>) {
                e.str(b.model_id).u32(b.owner.value).u64(b.version).str(b.algorithm_tag);
                e.f64(b.accuracy_estimate).digest(b.params_fingerprint).u64(b.sample_count);
                e.u64(b.metrics.size());
                for (const auto& [k, v] : b.metrics) e.str(k).f64(v);
            } else if constexpr (std::is_same_v<T, UpdateProposal>) {
                e.str(b.proposal_id).str(b.source_model_id).str(b.target_model_id);
                e.u32(b.proposer.value).digest(b.params_fingerprint);
            } else if constexpr (std::is_same_v<T, VoteBody>) {
                e.str(b.proposal_id).u32(b.voter.value).boolean(b.approve);
            } else {
                e.str(b.proposal_id).u64(b.yes_votes).u64(b.electorate);
            }
        },
        body);
    return std::move(e).bytes();
}

inline Body decode_body(TransactionKind kind, std::span<const std::uint8_t> bytes) {
    Decoder d(bytes);
    Body out;
    switch (kind) {
    case TransactionKind::Join: {
        JoinBody b;
        b.institution.value = d.u32();
        b.device_class = d.str();
        out = std::move(b);
        break;
    }
    case TransactionKind::RegisterModel: {
        ModelDescriptor b;
        b.model_id = d.str();
        b.owner.value = d.u32();
        b.version = d.u64();
        b.algorithm_tag = d.str();
        b.accuracy_estimate = d.f64();
        b.params_fingerprint = d.digest();
        b.sample_count = d.u64();
        const auto n = d.u64();
        for (std::uint64_t i = 0; i < n; ++i) {
            auto key = d.str();
            auto value = d.f64();
            if (!b.metrics.empty() && !(b.metrics.rbegin()->first < key))
                throw DecodeError("metrics keys not strictly ascending");
            b.metrics.emplace(std::move(key), value);
        }
        out = std::move(b);
        break;
    }
    case TransactionKind::ProposeUpdate: {
        UpdateProposal b;
        b.proposal_id = d.str();
        b.source_model_id = d.str();
        b.target_model_id = d.str();
        b.proposer.value = d.u32();
        b.params_fingerprint = d.digest();
        out = std::move(b);
        break;
    }
    case TransactionKind::Vote: {
        VoteBody b;
        b.proposal_id = d.str();
        b.voter.value = d.u32();
        b.approve = d.boolean();
        out = std::move(b);
        break;
    }
    case TransactionKind::CommitUpdate: {
        CommitBody b;
        b.proposal_id = d.str();
        b.yes_votes = d.u64();
        b.electorate = d.u64();
        out = std::move(b);
        break;
    }
    default: throw DecodeError("unknown transaction kind");
    }
    d.expect_done();
    return out;
}

// ---------------------------------------------------------------------------
// Fingerprint-only policy

class PolicyViolation : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Metric keys that would smuggle parameters or direct identifiers onto the ledger.
inline bool is_forbidden_metric_key(std::string_view key) {
    static constexpr std::string_view kPrefixes[] = {"param", "weight", "bias", "raw"};
    static constexpr std::string_view kIdentifiers[] = {"name", "patient_id", "pseudonym", "record"};
    for (auto p : kPrefixes)
        if (key.starts_with(p)) return true;
    for (auto id : kIdentifiers)
        if (key == id) return true;
    return false;
}

inline void check_policy(const Body& body) {
    if (const auto* m = std::get_if<ModelDescriptor>(&body)) {
        if (m->model_id.empty()) throw PolicyViolation("model descriptor without model_id");
        if (m->version < 1) throw PolicyViolation("model version must be >= 1");
        if (!(m->accuracy_estimate >= 0.0 && m->accuracy_estimate <= 1.0))
            throw PolicyViolation("accuracy estimate outside [0, 1]");
        for (const auto& [key, _] : m->metrics)
            if (is_forbidden_metric_key(key))
                throw PolicyViolation("descriptor field '" + key + "' carries raw parameters or identifiers");
    }
}

// ---------------------------------------------------------------------------
// Records

struct TransactionRecord {
    std::uint64_t slot = 0;
    Body body;
    InstitutionId proposer;
    Digest prev_digest{};
    Digest record_digest{};

    TransactionKind kind() const { return kind_of(body); }
    friend bool operator==(const TransactionRecord&, const TransactionRecord&) = default;
};

/// slot || kind || body || proposer || prev_digest, each length-prefixed.
inline Bytes encode_for_digest(std::uint64_t slot, const Body& body, InstitutionId proposer,
                               const Digest& prev) {
    Encoder e;
    e.u64(slot).u8(static_cast<std::uint8_t>(kind_of(body))).nested(encode_body(body));
    e.u32(proposer.value).digest(prev);
    return std::move(e).bytes();
}

inline Digest compute_digest(const TransactionRecord& r) {
    return fingerprint(encode_for_digest(r.slot, r.body, r.proposer, r.prev_digest));
}

inline Bytes encode_record(const TransactionRecord& r) {
    Encoder e;
    e.u64(r.slot).u8(static_cast<std::uint8_t>(r.kind())).nested(encode_body(r.body));
    e.u32(r.proposer.value).digest(r.prev_digest).digest(r.record_digest);
    return std::move(e).bytes();
}

inline bool verify_chain(std::span<const TransactionRecord> records) {
    Digest prev = kGenesisDigest;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        if (r.slot != i || r.prev_digest != prev || compute_digest(r) != r.record_digest) return false;
        prev = r.record_digest;
    }
    return true;
}

/// Decodes a concatenation of encoded records; nullopt on any malformed byte.
inline std::optional<std::vector<TransactionRecord>> decode_records(std::span<const std::uint8_t> bytes) {
    std::vector<TransactionRecord> out;
    try {
        Decoder d(bytes);
        while (!d.done()) {
            TransactionRecord r;
            r.slot = d.u64();
            const auto kind = d.u8();
            if (kind > static_cast<std::uint8_t>(TransactionKind::CommitUpdate)) return std::nullopt;
            r.body = decode_body(static_cast<TransactionKind>(kind), d.raw_field());
            r.proposer.value = d.u32();
            r.prev_digest = d.digest();
            r.record_digest = d.digest();
            out.push_back(std::move(r));
        }
    } catch (const DecodeError&) {
        return std::nullopt;
    }
    return out;
}

/// Byte-level check of a serialized ledger: it must decode, re-encode to the
/// same bytes, and form a valid chain.
inline bool verify_chain_bytes(std::span<const std::uint8_t> bytes) {
    auto records = decode_records(bytes);
    if (!records) return false;
    Bytes reencoded;
    for (const auto& r : *records) {
        auto b = encode_record(r);
        reencoded.insert(reencoded.end(), b.begin(), b.end());
    }
    if (!std::equal(reencoded.begin(), reencoded.end(), bytes.begin(), bytes.end())) return false;
    return verify_chain(*records);
}

inline nlohmann::ordered_json body_to_json(const Body& body) {
    nlohmann::ordered_json j;
    std::visit(
        [&](const auto& b) {
            using T = std::decay_t<decltype(b)>;
            if constexpr (std::is_same_v<T, JoinBody>) {
                j["institution"] = b.institution.value;
                j["device_class"] = b.device_class;
            } else if constexpr (std::is_same_v<T, ModelDescriptor>) {
                j["model_id"] = b.model_id;
                j["owner"] = b.owner.value;
                j["version"] = b.version;
                j["algorithm_tag"] = b.algorithm_tag;
                j["accuracy_estimate"] = b.accuracy_estimate;
                j["params_fingerprint"] = to_hex(b.params_fingerprint);
                j["sample_count"] = b.sample_count;
                j["metrics"] = nlohmann::ordered_json::object();
                for (const auto& [k, v] : b.metrics) j["metrics"][k] = v;
            } else if constexpr (std::is_same_v<T, UpdateProposal>) {
                j["proposal_id"] = b.proposal_id;
                j["source_model_id"] = b.source_model_id;
                j["target_model_id"] = b.target_model_id;
                j["proposer"] = b.proposer.value;
                j["params_fingerprint"] = to_hex(b.params_fingerprint);
            } else if constexpr (std::is_same_v<T, VoteBody>) {
                j["proposal_id"] = b.proposal_id;
                j["voter"] = b.voter.value;
                j["approve"] = b.approve;
            } else {
                j["proposal_id"] = b.proposal_id;
                j["yes_votes"] = b.yes_votes;
                j["electorate"] = b.electorate;
            }
        },
        body);
    return j;
}

// ---------------------------------------------------------------------------
// Ledger replica

struct SuitabilityQuery {
    std::string algorithm_tag;
    double min_accuracy = 0.0;
    std::optional<InstitutionId> querier;
};

/// Extra acceptance test applied after the tag/accuracy filter.
using SuitabilityPredicate = std::function<bool(const ModelDescriptor&, const SuitabilityQuery&)>;

struct VoteTally {
    std::uint64_t yes = 0;
    std::uint64_t no = 0;
    std::uint64_t electorate = 0;
};

class Ledger {
public:
    explicit Ledger(std::vector<InstitutionId> founders = {}) : founders_(std::move(founders)) {}

    /// Only the consensus layer calls this, once per decided value, in slot order.
    const TransactionRecord& append(Body body, InstitutionId proposer) {
        check_policy(body);
        if (const auto* m = std::get_if<ModelDescriptor>(&body)) {
            const auto prev = latest_model(m->model_id);
            if (prev && m->version <= prev->version) throw PolicyViolation("model version must increase");
        }
        TransactionRecord r;
        r.slot = records_.size();
        r.body = std::move(body);
        r.proposer = proposer;
        r.prev_digest = records_.empty() ? kGenesisDigest : records_.back().record_digest;
        r.record_digest = compute_digest(r);
        records_.push_back(std::move(r));
        return records_.back();
    }

    const std::vector<TransactionRecord>& records() const { return records_; }
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }
    const Digest& head_digest() const { return records_.empty() ? kGenesisDigest : records_.back().record_digest; }

    /// Founders followed by every joined institution, in join order.
    std::vector<InstitutionId> members() const { return members_at(records_.size()); }

    /// Membership in force for the record at `slot` (joins strictly before it).
    std::vector<InstitutionId> members_at(std::uint64_t slot) const {
        std::vector<InstitutionId> out = founders_;
        for (std::uint64_t i = 0; i < slot && i < records_.size(); ++i)
            if (const auto* j = std::get_if<JoinBody>(&records_[i].body))
                if (std::find(out.begin(), out.end(), j->institution) == out.end()) out.push_back(j->institution);
        return out;
    }

    std::optional<ModelDescriptor> latest_model(std::string_view model_id) const {
        std::optional<ModelDescriptor> best;
        for (const auto& r : records_)
            if (const auto* m = std::get_if<ModelDescriptor>(&r.body))
                if (m->model_id == model_id && (!best || m->version > best->version)) best = *m;
        return best;
    }

    std::optional<std::pair<std::uint64_t, UpdateProposal>> find_proposal(std::string_view id) const {
        for (const auto& r : records_)
            if (const auto* p = std::get_if<UpdateProposal>(&r.body))
                if (p->proposal_id == id) return std::pair{r.slot, *p};
        return std::nullopt;
    }

    bool has_commit(std::string_view proposal_id) const {
        for (const auto& r : records_)
            if (const auto* c = std::get_if<CommitBody>(&r.body))
                if (c->proposal_id == proposal_id) return true;
        return false;
    }

    /// First vote per member counts; votes from non-members are ignored.
    VoteTally tally(std::string_view proposal_id) const {
        VoteTally t;
        auto prop = find_proposal(proposal_id);
        if (!prop) return t;
        const auto electorate = members_at(prop->first);
        t.electorate = electorate.size();
        std::vector<InstitutionId> seen;
        for (const auto& r : records_) {
            const auto* v = std::get_if<VoteBody>(&r.body);
            if (v == nullptr || v->proposal_id != proposal_id) continue;
            if (std::find(electorate.begin(), electorate.end(), v->voter) == electorate.end()) continue;
            if (std::find(seen.begin(), seen.end(), v->voter) != seen.end()) continue;
            seen.push_back(v->voter);
            (v->approve ? t.yes : t.no) += 1;
        }
        return t;
    }

    Bytes to_bytes() const {
        Bytes out;
        for (const auto& r : records_) {
            auto b = encode_record(r);
            out.insert(out.end(), b.begin(), b.end());
        }
        return out;
    }

    /// One record per line, digests hex-encoded.
    std::string dump_jsonl() const {
        std::string out;
        for (const auto& r : records_) {
            nlohmann::ordered_json j;
            j["slot"] = r.slot;
            j["kind"] = to_string(r.kind());
            j["proposer"] = r.proposer.value;
            j["body"] = body_to_json(r.body);
            j["prev_digest"] = to_hex(r.prev_digest);
            j["record_digest"] = to_hex(r.record_digest);
            out += j.dump();
            out += '\n';
        }
        return out;
    }

private:
    std::vector<InstitutionId> founders_;
    std::vector<TransactionRecord> records_;
};

inline bool verify_chain(const Ledger& ledger) { return verify_chain(std::span(ledger.records())); }

/// Latest version of each model matching the tag with accuracy >= threshold,
/// excluding the querier's own models; sorted by accuracy desc, then model_id.
inline std::vector<ModelDescriptor> find_suitable(const Ledger& ledger, const SuitabilityQuery& query,
                                                  const SuitabilityPredicate& extra = {}) {
    std::map<std::string, ModelDescriptor> latest;
    for (const auto& r : ledger.records()) {
        const auto* m = std::get_if<ModelDescriptor>(&r.body);
        if (m == nullptr) continue;
        auto it = latest.find(m->model_id);
        if (it == latest.end() || m->version > it->second.version) latest.insert_or_assign(m->model_id, *m);
    }
    std::vector<ModelDescriptor> out;
    for (auto& [_, m] : latest) {
        if (m.algorithm_tag != query.algorithm_tag) continue;
        if (m.accuracy_estimate < query.min_accuracy) continue;
        if (query.querier && m.owner == *query.querier) continue;
        if (extra && !extra(m, query)) continue;
        out.push_back(m);
    }
    std::sort(out.begin(), out.end(), [](const ModelDescriptor& a, const ModelDescriptor& b) {
        if (a.accuracy_estimate != b.accuracy_estimate) return a.accuracy_estimate > b.accuracy_estimate;
        return a.model_id < b.model_id;
    });
    return out;
}

}  // namespace stigma::ledger
