#include <gtest/gtest.h>

#include "stigma/ledger.hpp"

using namespace stigma::ledger;

namespace {

ModelDescriptor model(std::string id, std::uint32_t owner, double acc, std::uint64_t version = 1,
                      std::string tag = "cnn-3layer") {
    ModelDescriptor m;
    m.model_id = std::move(id);
    m.owner = InstitutionId{owner};
    m.version = version;
    m.algorithm_tag = std::move(tag);
    m.accuracy_estimate = acc;
    m.params_fingerprint = fingerprint("params of " + m.model_id + " v" + std::to_string(version));
    m.sample_count = 500;
    return m;
}

Ledger three_records() {
    Ledger l({InstitutionId{0}});
    l.append(JoinBody{InstitutionId{1}, "RPi4"}, InstitutionId{1});
    auto m = model("i0/cnn", 0, 0.97);
    m.metrics["latency_ms"] = 12.5;
    l.append(m, InstitutionId{0});
    l.append(VoteBody{"u0-0", InstitutionId{1}, true}, InstitutionId{1});
    return l;
}

}  // namespace

TEST(Fingerprint, KnownVectors) {
    EXPECT_EQ(to_hex(fingerprint("")), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    EXPECT_EQ(to_hex(fingerprint("abc")), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Fingerprint, DeterministicAndBitSensitive) {
    std::string x = "model update payload";
    EXPECT_EQ(fingerprint(x), fingerprint(x));
    for (std::size_t i = 0; i < x.size(); ++i)
        for (int bit = 0; bit < 8; ++bit) {
            std::string y = x;
            y[i] = static_cast<char>(y[i] ^ (1 << bit));
            EXPECT_NE(fingerprint(x), fingerprint(y));
        }
}

TEST(Fingerprint, HexRoundTrip) {
    const auto d = fingerprint("abc");
    EXPECT_EQ(digest_from_hex(to_hex(d)), d);
    EXPECT_FALSE(digest_from_hex("zz").has_value());
}

TEST(Append, FirstRecordLinksToGenesis) {
    Ledger l;
    const auto& r = l.append(JoinBody{InstitutionId{3}, "EGS"}, InstitutionId{3});
    EXPECT_EQ(r.slot, 0u);
    EXPECT_EQ(r.prev_digest, Digest{});
    EXPECT_EQ(r.record_digest, compute_digest(r));
}

TEST(Append, ChainsConsecutiveRecords) {
    auto l = three_records();
    ASSERT_EQ(l.size(), 3u);
    for (std::size_t i = 1; i < l.size(); ++i) {
        EXPECT_EQ(l.records()[i].slot, i);
        EXPECT_EQ(l.records()[i].prev_digest, l.records()[i - 1].record_digest);
    }
    EXPECT_EQ(l.head_digest(), l.records().back().record_digest);
}

TEST(Append, DigestCoversDeclaredFields) {
    auto l = three_records();
    const auto& r = l.records()[1];
    // slot ‖ kind ‖ body ‖ proposer ‖ prev, each length-prefixed
    Encoder e;
    e.u64(r.slot).u8(static_cast<std::uint8_t>(r.kind())).nested(encode_body(r.body)).u32(r.proposer.value);
    e.digest(r.prev_digest);
    EXPECT_EQ(r.record_digest, fingerprint(e.bytes()));
}

TEST(Append, RejectsParameterLikeMetrics) {
    Ledger l;
    for (std::string key : {"weights", "param_0", "bias", "raw_params", "patient_id", "name"}) {
        auto m = model("m", 0, 0.9);
        m.metrics[key] = 1.0;
        EXPECT_THROW(l.append(m, InstitutionId{0}), PolicyViolation) << key;
    }
    EXPECT_TRUE(l.empty());
}

TEST(Append, RejectsMalformedDescriptors) {
    Ledger l;
    EXPECT_THROW(l.append(model("m", 0, 1.5), InstitutionId{0}), PolicyViolation);
    EXPECT_THROW(l.append(model("m", 0, 0.9, 0), InstitutionId{0}), PolicyViolation);
    EXPECT_THROW(l.append(model("", 0, 0.9), InstitutionId{0}), PolicyViolation);
}

TEST(Append, VersionsMustIncrease) {
    Ledger l;
    l.append(model("m", 0, 0.9, 1), InstitutionId{0});
    EXPECT_THROW(l.append(model("m", 0, 0.9, 1), InstitutionId{0}), PolicyViolation);
    l.append(model("m", 0, 0.95, 2), InstitutionId{0});
    EXPECT_EQ(l.latest_model("m")->version, 2u);
}

TEST(VerifyChain, FreshLedgersVerify) {
    EXPECT_TRUE(verify_chain(Ledger{}));
    Ledger l;
    for (int i = 0; i < 5; ++i) l.append(JoinBody{InstitutionId{static_cast<std::uint32_t>(i)}, ""}, InstitutionId{0});
    EXPECT_TRUE(verify_chain(l));
    EXPECT_TRUE(verify_chain_bytes(l.to_bytes()));
}

TEST(VerifyChain, DetectsFieldEdits) {
    auto l = three_records();
    auto records = l.records();
    std::get<VoteBody>(records[2].body).approve = false;
    EXPECT_FALSE(verify_chain(records));
    records = l.records();
    records[1].proposer = InstitutionId{9};
    EXPECT_FALSE(verify_chain(records));
    records = l.records();
    records[0].prev_digest[5] ^= 1;
    EXPECT_FALSE(verify_chain(records));
}

TEST(VerifyChain, EverySingleByteMutationIsDetected) {
    const auto bytes = three_records().to_bytes();
    ASSERT_TRUE(verify_chain_bytes(bytes));
    std::size_t mutations = 0;
    for (std::size_t i = 0; i < bytes.size(); ++i)
        for (std::uint8_t delta : {0x01, 0x80, 0xFF}) {
            auto t = bytes;
            t[i] = static_cast<std::uint8_t>(t[i] ^ delta);
            EXPECT_FALSE(verify_chain_bytes(t)) << "byte " << i << " xor " << int(delta);
            ++mutations;
        }
    EXPECT_GT(mutations, 300u);
}

TEST(VerifyChain, RecordsRoundTripThroughBytes) {
    const auto l = three_records();
    const auto decoded = decode_records(l.to_bytes());
    ASSERT_TRUE(decoded.has_value());
    EXPECT_EQ(*decoded, l.records());
}

TEST(Bodies, EncodeDecodeRoundTrip) {
    const std::vector<Body> bodies = {
        JoinBody{InstitutionId{4}, "NJN"}, model("x", 2, 0.5, 3),
        UpdateProposal{"u1", "a", "b", InstitutionId{1}, fingerprint("p")}, VoteBody{"u1", InstitutionId{2}, false},
        CommitBody{"u1", 3, 3}};
    for (const auto& b : bodies) EXPECT_EQ(decode_body(kind_of(b), encode_body(b)), b);
}

TEST(FindSuitable, EmptyLedger) {
    EXPECT_TRUE(find_suitable(Ledger{}, {"cnn-3layer", 0.0, std::nullopt}).empty());
}

TEST(FindSuitable, FiltersByThreshold) {
    Ledger l;
    l.append(model("a", 1, 0.97), InstitutionId{1});
    l.append(model("b", 2, 0.85), InstitutionId{2});
    const auto r = find_suitable(l, {"cnn-3layer", 0.90, std::nullopt});
    ASSERT_EQ(r.size(), 1u);
    EXPECT_EQ(r[0].model_id, "a");
}

TEST(FindSuitable, ReturnsLatestVersionOnly) {
    Ledger l;
    l.append(model("a", 1, 0.91, 1), InstitutionId{1});
    l.append(model("a", 1, 0.93, 2), InstitutionId{1});
    const auto r = find_suitable(l, {"cnn-3layer", 0.0, std::nullopt});
    ASSERT_EQ(r.size(), 1u);
    EXPECT_EQ(r[0].version, 2u);
}

TEST(FindSuitable, ExcludesQuerierAndOtherTagsAndOrders) {
    Ledger l;
    l.append(model("c", 3, 0.90), InstitutionId{3});
    l.append(model("b", 2, 0.95), InstitutionId{2});
    l.append(model("a", 1, 0.95), InstitutionId{1});
    l.append(model("mine", 0, 0.99), InstitutionId{0});
    l.append(model("svm", 4, 0.99, 1, "svm"), InstitutionId{4});
    const auto r = find_suitable(l, {"cnn-3layer", 0.5, InstitutionId{0}});
    ASSERT_EQ(r.size(), 3u);
    EXPECT_EQ(r[0].model_id, "a");
    EXPECT_EQ(r[1].model_id, "b");
    EXPECT_EQ(r[2].model_id, "c");
    EXPECT_EQ(find_suitable(l, {"cnn-3layer", 0.5, InstitutionId{0}}), r);
    const auto only_b = find_suitable(l, {"cnn-3layer", 0.5, InstitutionId{0}},
                                      [](const ModelDescriptor& m, const SuitabilityQuery&) { return m.model_id == "b"; });
    ASSERT_EQ(only_b.size(), 1u);
}

TEST(Membership, FoundersPlusJoins) {
    Ledger l({InstitutionId{0}});
    l.append(JoinBody{InstitutionId{1}, ""}, InstitutionId{1});
    l.append(VoteBody{"x", InstitutionId{0}, true}, InstitutionId{0});
    l.append(JoinBody{InstitutionId{2}, ""}, InstitutionId{2});
    EXPECT_EQ(l.members_at(0).size(), 1u);
    EXPECT_EQ(l.members_at(1).size(), 2u);
    EXPECT_EQ(l.members().size(), 3u);
}

TEST(Tally, FirstVotePerMemberOfElectorate) {
    Ledger l({InstitutionId{0}, InstitutionId{1}});
    l.append(UpdateProposal{"u", "a", "b", InstitutionId{0}, {}}, InstitutionId{0});
    l.append(JoinBody{InstitutionId{2}, ""}, InstitutionId{2});
    l.append(VoteBody{"u", InstitutionId{0}, true}, InstitutionId{0});
    l.append(VoteBody{"u", InstitutionId{0}, false}, InstitutionId{0});
    l.append(VoteBody{"u", InstitutionId{2}, false}, InstitutionId{2});
    l.append(VoteBody{"u", InstitutionId{1}, false}, InstitutionId{1});
    const auto t = l.tally("u");
    EXPECT_EQ(t.electorate, 2u);
    EXPECT_EQ(t.yes, 1u);
    EXPECT_EQ(t.no, 1u);
}

TEST(Dump, JsonLinesPerRecord) {
    const auto l = three_records();
    const auto dump = l.dump_jsonl();
    std::size_t lines = 0, start = 0;
    for (std::size_t pos; (pos = dump.find('\n', start)) != std::string::npos; start = pos + 1, ++lines) {
        const auto j = nlohmann::json::parse(dump.substr(start, pos - start));
        EXPECT_EQ(j["slot"].get<std::size_t>(), lines);
        EXPECT_EQ(j["record_digest"].get<std::string>(), to_hex(l.records()[lines].record_digest));
        EXPECT_EQ(j["prev_digest"].get<std::string>().size(), 64u);
    }
    EXPECT_EQ(lines, 3u);
}
