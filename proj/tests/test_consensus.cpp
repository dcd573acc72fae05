#include <gtest/gtest.h>

#include <deque>

#include "stigma/consensus.hpp"

using namespace stigma::consensus;
using stigma::ledger::InstitutionId;
using stigma::ledger::JoinBody;
using stigma::ledger::VoteBody;

namespace {

const Ballot A1{1, 0}, B2{2, 1}, B1{1, 1};

Value vote_value(NodeId origin, std::uint64_t seq) {
    return Value{RequestId{origin, seq}, Command{VoteBody{"p" + std::to_string(seq), InstitutionId{origin}, true},
                                                 InstitutionId{origin}}};
}

ConsensusConfig founders(std::size_t n) {
    ConsensusConfig c;
    c.initial_members.clear();
    for (NodeId i = 0; i < n; ++i) c.initial_members.push_back(i);
    return c;
}

template <class T>
std::size_t count_of(const std::vector<Outbound>& out) {
    return static_cast<std::size_t>(std::count_if(
        out.begin(), out.end(), [](const Outbound& o) { return std::holds_alternative<T>(o.message); }));
}

// Delivers messages instantly and in FIFO order until quiescent.
struct Harness {
    std::vector<Replica> nodes;
    std::deque<std::pair<NodeId, Outbound>> wire;
    TimeMs now = 0.0;

    explicit Harness(std::size_t n) {
        const auto cfg = founders(n);
        for (NodeId i = 0; i < n; ++i) nodes.emplace_back(i, cfg);
    }
    void push(NodeId from, std::vector<Outbound> out) {
        for (auto& o : out) wire.emplace_back(from, std::move(o));
    }
    void settle() {
        while (!wire.empty()) {
            auto [from, o] = std::move(wire.front());
            wire.pop_front();
            push(o.to, nodes[o.to].handle(from, o.message, now));
        }
    }
    void boot() {
        for (auto& r : nodes) push(r.id(), r.start(now));
        settle();
    }
};

}  // namespace

TEST(Ballot, LexicographicOrder) {
    EXPECT_LT((Ballot{1, 5}), (Ballot{2, 0}));
    EXPECT_LT((Ballot{2, 0}), (Ballot{2, 1}));
    EXPECT_EQ((Ballot{3, 3}), (Ballot{3, 3}));
}

TEST(Quorum, MajorityOfMembers) {
    EXPECT_EQ(quorum_size(1), 1u);
    EXPECT_EQ(quorum_size(3), 2u);
    EXPECT_EQ(quorum_size(4), 3u);
    EXPECT_EQ(quorum_size(10), 6u);
}

TEST(Acceptor, PromiseWithoutPriorAccept) {
    Acceptor a;
    auto r = a.on_prepare(A1);
    ASSERT_TRUE(std::holds_alternative<Promise>(r));
    EXPECT_TRUE(std::get<Promise>(r).accepted.empty());
    EXPECT_EQ(a.promised(), A1);
}

TEST(Acceptor, NackCarriesHigherPromise) {
    Acceptor a;
    a.on_prepare(B2);
    auto r = a.on_prepare(A1);
    ASSERT_TRUE(std::holds_alternative<Nack>(r));
    EXPECT_EQ(std::get<Nack>(r).promised, B2);
    EXPECT_EQ(a.promised(), B2);
}

TEST(Acceptor, PromiseReportsAcceptedValue) {
    Acceptor a;
    a.on_prepare(A1);
    const auto v = vote_value(0, 1);
    ASSERT_TRUE(std::holds_alternative<Accepted>(a.on_accept(A1, 0, v)));
    auto r = a.on_prepare(B2);
    ASSERT_TRUE(std::holds_alternative<Promise>(r));
    const auto& acc = std::get<Promise>(r).accepted;
    ASSERT_EQ(acc.size(), 1u);
    EXPECT_EQ(acc[0].ballot, A1);
    EXPECT_EQ(acc[0].value, v);
}

TEST(Acceptor, AcceptRules) {
    Acceptor a;
    a.on_prepare(A1);
    EXPECT_TRUE(std::holds_alternative<Accepted>(a.on_accept(A1, 0, vote_value(0, 1))));
    Acceptor b;
    b.on_prepare(B2);
    EXPECT_TRUE(std::holds_alternative<Nack>(b.on_accept(A1, 0, vote_value(0, 1))));
    Acceptor c;
    c.on_prepare(A1);
    EXPECT_TRUE(std::holds_alternative<Accepted>(c.on_accept(B2, 0, vote_value(0, 1))));
    EXPECT_EQ(c.promised(), B2);
    EXPECT_LE(*c.find(0)->accepted_ballot, *c.promised());
}

TEST(Acceptor, ChosenNeverChanges) {
    Acceptor a;
    EXPECT_TRUE(a.learn(3, vote_value(0, 1)));
    EXPECT_TRUE(a.learn(3, vote_value(0, 1)));
    EXPECT_FALSE(a.learn(3, vote_value(0, 2)));
    EXPECT_EQ(**a.chosen(3), vote_value(0, 1));
}

TEST(Acceptor, PromisedBallotNeverDecreases) {
    Acceptor a;
    std::optional<Ballot> prev;
    const std::vector<Ballot> seq = {A1, B1, A1, B2, B1, Ballot{7, 0}, Ballot{3, 4}};
    for (std::size_t i = 0; i < seq.size(); ++i) {
        if (i % 2) a.on_prepare(seq[i]);
        else a.on_accept(seq[i], i, vote_value(0, i));
        if (prev) {
            EXPECT_GE(*a.promised(), *prev);
        }
        prev = a.promised();
    }
}

TEST(Replica, SingleMemberDecidesAlone) {
    Replica r(0, ConsensusConfig{});
    EXPECT_TRUE(r.start(0.0).empty());
    EXPECT_TRUE(r.is_leader());
    auto res = r.propose(vote_value(0, 1), 0.0);
    EXPECT_TRUE(res.outbound.empty());
    ASSERT_TRUE(res.slot.has_value());
    EXPECT_EQ(r.ledger().size(), 1u);
    EXPECT_TRUE(r.has_applied(RequestId{0, 1}));
}

TEST(Replica, FirstFounderLeadsAfterBoot) {
    Harness h(3);
    h.boot();
    EXPECT_TRUE(h.nodes[0].is_leader());
    EXPECT_FALSE(h.nodes[1].is_leader());
    EXPECT_EQ(h.nodes[1].leader_hint(), NodeId{0});
}

TEST(Replica, SteadyLeaderSendsOnlyAccepts) {
    Harness h(3);
    h.boot();
    auto res = h.nodes[0].propose(vote_value(0, 1), 0.0);
    EXPECT_EQ(res.outbound.size(), 2u);
    EXPECT_EQ(count_of<Accept>(res.outbound), 2u);
    EXPECT_EQ(count_of<Prepare>(res.outbound), 0u);
}

TEST(Replica, FollowerForwardsToLeader) {
    Harness h(3);
    h.boot();
    auto res = h.nodes[2].propose(vote_value(2, 1), 0.0);
    ASSERT_EQ(res.outbound.size(), 1u);
    EXPECT_TRUE(std::holds_alternative<Forward>(res.outbound[0].message));
    EXPECT_EQ(res.outbound[0].to, 0u);
    h.push(2, std::move(res.outbound));
    h.settle();
    for (auto& r : h.nodes) EXPECT_TRUE(r.has_applied(RequestId{2, 1}));
}

TEST(Replica, BackToBackValuesGetConsecutiveSlots) {
    Harness h(3);
    h.boot();
    auto r1 = h.nodes[0].propose(vote_value(0, 1), 0.0);
    auto r2 = h.nodes[0].propose(vote_value(0, 2), 0.0);
    ASSERT_TRUE(r1.slot && r2.slot);
    EXPECT_EQ(*r2.slot, *r1.slot + 1);
}

TEST(Replica, QuorumArithmeticOnAccepts) {
    // n = 10: five acks (self + 4) are not enough, the sixth decides.
    auto cfg = founders(10);
    Replica leader(0, cfg);
    std::vector<Replica> others;
    for (NodeId i = 1; i < 10; ++i) others.emplace_back(i, cfg);
    leader.start(0.0);
    for (auto& o : others) {
        auto out = o.handle(0, Prepare{leader.ballot(), 0}, 0.0);
        leader.handle(o.id(), out.at(0).message, 0.0);
    }
    ASSERT_TRUE(leader.is_leader());
    auto res = leader.propose(vote_value(0, 1), 0.0);
    ASSERT_TRUE(res.slot.has_value());
    const Slot s = *res.slot;
    for (NodeId i = 1; i <= 4; ++i) leader.handle(i, Accepted{leader.ballot(), s}, 0.0);
    EXPECT_EQ(leader.acceptor().chosen(s), nullptr);
    // a stale-ballot ack is ignored
    leader.handle(5, Accepted{Ballot{0, 5}, s}, 0.0);
    EXPECT_EQ(leader.acceptor().chosen(s), nullptr);
    auto out = leader.handle(5, Accepted{leader.ballot(), s}, 0.0);
    EXPECT_NE(leader.acceptor().chosen(s), nullptr);
    EXPECT_EQ(count_of<Decide>(out), 9u);
}

TEST(Replica, FollowerElectsAfterFourSilentIntervals) {
    Replica r(1, founders(3));
    r.start(0.0);
    EXPECT_EQ(r.next_wakeup(), 120.0);
    EXPECT_TRUE(r.tick(119.9).empty());
    auto out = r.tick(120.0);
    EXPECT_EQ(count_of<Prepare>(out), 2u);
    EXPECT_EQ(r.role(), Role::candidate);
}

TEST(Replica, NackTriggersRetryAfterVoteDelay) {
    Replica r(1, founders(3));
    r.start(0.0);
    r.tick(120.0);
    const Ballot mine = r.ballot();
    const Ballot higher{mine.round + 4, 2};
    r.handle(2, Nack{mine, higher}, 130.0);
    EXPECT_EQ(r.role(), Role::follower);
    EXPECT_EQ(r.next_wakeup(), 230.0);
    EXPECT_EQ(count_of<Prepare>(r.tick(229.0)), 0u);
    auto out = r.tick(230.0);
    ASSERT_EQ(count_of<Prepare>(out), 2u);
    EXPECT_GT(r.ballot().round, higher.round);
}

TEST(Replica, JoinAddsMemberAndGrowsQuorum) {
    Harness h(1);
    h.nodes.emplace_back(1, founders(1));
    h.boot();
    EXPECT_FALSE(h.nodes[1].is_member());
    const Value join{RequestId{1, 0}, Command{JoinBody{InstitutionId{1}, "RPi4"}, InstitutionId{1}}};
    h.push(1, h.nodes[1].propose(join, 0.0).outbound);
    h.settle();
    EXPECT_TRUE(h.nodes[1].is_member());
    EXPECT_EQ(h.nodes[0].members().size(), 2u);
    // Two members: the leader now needs the joiner's ack.
    auto res = h.nodes[0].propose(vote_value(0, 9), 0.0);
    EXPECT_EQ(count_of<Accept>(res.outbound), 1u);
    EXPECT_FALSE(h.nodes[0].has_applied(RequestId{0, 9}));
    h.push(0, std::move(res.outbound));
    h.settle();
    EXPECT_TRUE(h.nodes[0].has_applied(RequestId{0, 9}));
    EXPECT_EQ(h.nodes[0].ledger().to_bytes(), h.nodes[1].ledger().to_bytes());
}

TEST(Replica, DuplicateDeliveryIsIdempotent) {
    Harness h(3);
    h.boot();
    const auto v = vote_value(1, 1);
    for (int i = 0; i < 3; ++i) h.push(1, h.nodes[1].propose(v, 0.0).outbound);
    h.settle();
    for (auto& r : h.nodes) {
        EXPECT_EQ(r.ledger().size(), 1u);
        EXPECT_EQ(r.safety_violations(), 0u);
    }
}

TEST(Messages, EncodingAndDescription) {
    const Message m = Accept{Ballot{2, 1}, 7, vote_value(1, 3)};
    EXPECT_EQ(message_name(m), "Accept");
    EXPECT_EQ(message_slot(m), Slot{7});
    EXPECT_FALSE(encode(m).empty());
    const auto d = describe(m);
    EXPECT_NE(d.find("slot=7"), std::string::npos) << d;
}

TEST(Replica, SlowSlotIsResentWithoutSteppingDown) {
    Harness h(3);
    h.boot();
    auto& leader = h.nodes[0];
    const Ballot b = leader.ballot();
    auto res = leader.propose(vote_value(0, 1), 0.0);
    ASSERT_TRUE(res.slot.has_value());
    // Node 1 acks late; node 2 never does.
    leader.handle(1, Accepted{b, *res.slot}, 0.0);
    EXPECT_NE(leader.acceptor().chosen(*res.slot), nullptr);
    leader.propose(vote_value(0, 2), 0.0);
    auto out = leader.tick(100.0);
    EXPECT_TRUE(leader.is_leader());
    EXPECT_EQ(leader.ballot(), b);
    EXPECT_EQ(count_of<Prepare>(out), 0u);
    EXPECT_EQ(count_of<Accept>(out), 2u);
    // Backoff: the next resend waits twice as long.
    EXPECT_EQ(count_of<Accept>(leader.tick(250.0)), 0u);
    EXPECT_EQ(count_of<Accept>(leader.tick(300.0)), 2u);
}
