#include <gtest/gtest.h>

#include <set>

#include "stigma/netsim.hpp"

using namespace stigma::netsim;

namespace {

struct Tick {
    int n = 0;
};

Simulator<Tick> make_sim(std::uint64_t seed, std::size_t limit = kDefaultStepLimit) {
    Simulator<Tick> sim(seed, limit);
    sim.set_describer([](const SimEvent<Tick>& e) { return "tick " + std::to_string(e.payload.n); });
    return sim;
}

// A small gossip workload whose timing depends on the rng.
std::string gossip_trace(std::uint64_t seed) {
    Simulator<Tick> sim(seed);
    sim.set_describer([](const SimEvent<Tick>& e) { return "hop " + std::to_string(e.payload.n); });
    const LinkProfile link(50.0, 10.0, 0.3);
    sim.set_handler([&](SimEvent<Tick>& e) {
        if (e.payload.n >= 40) return;
        const NodeId to = static_cast<NodeId>(sim.rng().below(5));
        sim.schedule(transfer_time(1000 + 100 * e.payload.n, link, &sim.rng()), to, EventKind::message,
                     Tick{e.payload.n + 1});
    });
    sim.schedule(0.0, 0, EventKind::message, Tick{0});
    sim.schedule(0.0, 1, EventKind::message, Tick{20});
    return sim.run_until_idle().to_jsonl();
}

}  // namespace

TEST(Schedule, FiresAtNowPlusDelay) {
    auto sim = make_sim(1);
    sim.schedule(5.0, 0, EventKind::timer, Tick{1});
    const auto& trace = sim.run_until_idle();
    ASSERT_EQ(trace.size(), 1u);
    EXPECT_DOUBLE_EQ(trace.entries()[0].at, 5.0);
}

TEST(Schedule, EqualTimesKeepInsertionOrder) {
    auto sim = make_sim(1);
    for (int i = 0; i < 10; ++i) sim.schedule(3.0, 0, EventKind::timer, Tick{i});
    const auto& trace = sim.run_until_idle();
    ASSERT_EQ(trace.size(), 10u);
    for (int i = 0; i < 10; ++i) EXPECT_EQ(trace.entries()[i].summary, "tick " + std::to_string(i));
}

TEST(Schedule, ReturnsUniqueIds) {
    auto sim = make_sim(1);
    std::set<EventId> ids;
    for (int i = 0; i < 100; ++i) ids.insert(sim.schedule(1.0, 0, EventKind::timer, Tick{i}));
    EXPECT_EQ(ids.size(), 100u);
}

TEST(Schedule, RejectsNegativeDelay) {
    auto sim = make_sim(1);
    EXPECT_THROW(sim.schedule(-1.0, 0, EventKind::timer, Tick{}), std::invalid_argument);
}

TEST(Schedule, RejectsFinishedSimulation) {
    auto sim = make_sim(1);
    sim.finish();
    EXPECT_THROW(sim.schedule(1.0, 0, EventKind::timer, Tick{}), SimulationError);
}

TEST(RunUntilIdle, EmptyQueueGivesEmptyTrace) {
    auto sim = make_sim(1);
    EXPECT_TRUE(sim.run_until_idle().empty());
}

TEST(RunUntilIdle, StepLimitIsReportedWithPartialTrace) {
    auto sim = make_sim(1, 100);
    sim.set_handler([&](SimEvent<Tick>& e) { sim.schedule(1.0, 0, EventKind::timer, Tick{e.payload.n + 1}); });
    sim.schedule(0.0, 0, EventKind::timer, Tick{0});
    try {
        sim.run_until_idle();
        FAIL() << "expected step limit";
    } catch (const StepLimitExceeded& e) {
        EXPECT_EQ(e.trace().size(), 100u);
    }
    EXPECT_EQ(sim.trace().size(), 100u);
}

TEST(RunUntilIdle, SameSeedReplaysByteIdentically) {
    const auto a = gossip_trace(42);
    const auto b = gossip_trace(42);
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, b);
    EXPECT_NE(a, gossip_trace(43));
}

TEST(RunUntilIdle, ClockIsMonotone) {
    Simulator<Tick> sim(9);
    sim.set_describer([](const SimEvent<Tick>&) { return std::string("x"); });
    sim.set_handler([&](SimEvent<Tick>& e) {
        if (e.payload.n < 500) sim.schedule(sim.rng().uniform(0.0, 3.0), 0, EventKind::timer, Tick{e.payload.n + 1});
        if (e.payload.n % 7 == 0 && e.payload.n < 500)
            sim.schedule(0.0, 1, EventKind::timer, Tick{e.payload.n + 1000});
    });
    sim.schedule(0.0, 0, EventKind::timer, Tick{0});
    const auto& t = sim.run_until_idle();
    for (std::size_t i = 1; i < t.size(); ++i) EXPECT_LE(t.entries()[i - 1].at, t.entries()[i].at);
}

TEST(RunUntil, PredicateStopsBeforeDeadline) {
    auto sim = make_sim(1);
    int seen = 0;
    sim.set_handler([&](SimEvent<Tick>&) { ++seen; });
    for (int i = 1; i <= 10; ++i) sim.schedule(i * 10.0, 0, EventKind::timer, Tick{i});
    EXPECT_TRUE(sim.run_until([&] { return seen == 3; }, 1000.0));
    EXPECT_DOUBLE_EQ(sim.now(), 30.0);
    EXPECT_FALSE(sim.run_until([&] { return seen == 100; }, 55.0));
    EXPECT_EQ(seen, 5);
}

TEST(Trace, JsonLinesHaveFourFields) {
    auto sim = make_sim(1);
    sim.schedule(2.5, 3, EventKind::message, Tick{7});
    const auto line = sim.run_until_idle().to_jsonl();
    const auto j = nlohmann::json::parse(line.substr(0, line.find('\n')));
    EXPECT_DOUBLE_EQ(j["time"].get<double>(), 2.5);
    EXPECT_EQ(j["node"].get<int>(), 3);
    EXPECT_EQ(j["kind"], "message");
    EXPECT_EQ(j["summary"], "tick 7");
}

// ---------------------------------------------------------------------------

TEST(TransferTime, OneMegabyteOverM5aLink) {
    // 8e6 bits at 27e6 bit/s
    const double expected = 8.0e6 / 27.0e6 * 1000.0;
    EXPECT_NEAR(transfer_time(1'000'000, LinkProfile(27.0, 0.0)), expected, 1e-9);
    EXPECT_NEAR(transfer_time(1'000'000, LinkProfile(27.0, 0.0)), 296.3, 0.1);
}

TEST(TransferTime, OneMegabyteOverEgsLink) {
    EXPECT_NEAR(transfer_time(1'000'000, LinkProfile(813.0, 0.0)), 8.0e6 / 813.0e6 * 1000.0, 1e-9);
    EXPECT_NEAR(transfer_time(1'000'000, LinkProfile(813.0, 0.0)), 9.84, 0.01);
}

TEST(TransferTime, ZeroBytesIsLatency) {
    EXPECT_DOUBLE_EQ(transfer_time(0, LinkProfile(5.0, 12.0)), 12.0);
}

TEST(TransferTime, MonotoneAndAdditiveWithoutJitter) {
    const LinkProfile link(65.0, 12.0);
    double prev = -1.0;
    for (std::uint64_t s = 0; s < 5'000'000; s += 250'000) {
        const double t = transfer_time(s, link);
        EXPECT_GE(t, prev);
        prev = t;
    }
    for (std::uint64_t a : {0ULL, 1ULL, 777ULL, 1'000'000ULL})
        for (std::uint64_t b : {0ULL, 3ULL, 12345ULL, 2'000'000ULL})
            EXPECT_NEAR(transfer_time(a + b, link), transfer_time(a, link) + transfer_time(b, link) - 12.0, 1e-9);
}

TEST(TransferTime, JitterStaysWithinBounds) {
    const LinkProfile link(65.0, 12.0, 0.3);
    Rng rng(5);
    double lo = 1e9, hi = -1e9;
    for (int i = 0; i < 10000; ++i) {
        const double l = sample_latency(link, &rng);
        EXPECT_GE(l, 12.0 * 0.7);
        EXPECT_LE(l, 12.0 * 1.3);
        lo = std::min(lo, l);
        hi = std::max(hi, l);
    }
    EXPECT_LT(lo, 12.0 * 0.75);
    EXPECT_GT(hi, 12.0 * 1.25);
}

TEST(LinkProfile, RejectsInvalidValues) {
    EXPECT_THROW(LinkProfile(0.0, 1.0), std::invalid_argument);
    EXPECT_THROW(LinkProfile(10.0, -1.0), std::invalid_argument);
    EXPECT_THROW(LinkProfile(10.0, 1.0, 1.0), std::invalid_argument);
}

TEST(DefaultLinks, TableBandwidths) {
    const auto links = default_links();
    EXPECT_EQ(links.size(), 49u);
    EXPECT_DOUBLE_EQ(links.at({DeviceClass::rpi4, DeviceClass::rpi4}).bandwidth_mbps, 800.0);
    EXPECT_DOUBLE_EQ(links.at({DeviceClass::m5a_xlarge, DeviceClass::egs}).bandwidth_mbps, 27.0);
    EXPECT_DOUBLE_EQ(links.at({DeviceClass::es_large, DeviceClass::es_medium}).one_way_latency_ms, 12.0);
    const std::map<DeviceClass, double> table = {
        {DeviceClass::m5a_xlarge, 27}, {DeviceClass::c5_large, 26}, {DeviceClass::es_large, 65},
        {DeviceClass::es_medium, 65},  {DeviceClass::egs, 813},     {DeviceClass::njn, 450},
        {DeviceClass::rpi4, 800}};
    for (auto [a, bwa] : table)
        for (auto [b, bwb] : table) {
            EXPECT_DOUBLE_EQ(links.at({a, b}).bandwidth_mbps, std::min(bwa, bwb));
            EXPECT_EQ(links.at({a, b}), links.at({b, a}));
        }
}

TEST(DefaultLinks, DeviceNamesRoundTrip) {
    for (auto d : kAllDevices) EXPECT_EQ(parse_device(to_string(d)), d);
    EXPECT_THROW(parse_device("Cray-1"), std::invalid_argument);
}
