#include <unistd.h>

#include <filesystem>
#include <vector>

#include "clmac/cl.hpp"
#include "clmac/error.hpp"
#include "doctest.h"

using namespace clmac;
namespace fs = std::filesystem;

namespace {

AgentConfig small_config() {
    AgentConfig c;
    c.history = 4;
    c.k_max = 3;
    c.channels = 2;
    c.batch_size = 4;
    c.memory_capacity = 30;
    c.lstm_units = 5;
    c.dense_units = 4;
    return c;
}

const ContextKey kPhi1({{1, 0}, {2, 1}});
const ContextKey kPhi2({{3, 0}, {4, 1}});
const ContextKey kPhi3({{5, 1}, {6, 0}});

// A few decisions with training so that parameters, memory and optimizer
// state all move.
void train(Agent& agent, int steps) {
    for (int i = 0; i < steps; ++i) {
        const AgentAction a = agent.select_action();
        StepOutcome o;
        o.observation = a.k > 0 ? (i % 3 == 0 ? Observation::Collision : Observation::Success) : Observation::Idle;
        o.reward = o.observation == Observation::Success ? a.k : 0.0;
        agent.record_experience(a, o);
        agent.train_step();
    }
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("clmac_cl_test_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("variant and scope names") {
    CHECK(parse_variant("CL_DDQL") == AgentVariant::ClDdql);
    CHECK(parse_variant("plain-ddql") == AgentVariant::PlainDdql);
    CHECK(parse_variant("ddql") == AgentVariant::PlainDdql);
    CHECK(parse_variant("Random") == AgentVariant::Random);
    CHECK(parse_reset_scope("heads_only") == ResetScope::HeadsOnly);
    CHECK(parse_reset_scope("FULL") == ResetScope::Full);
    CHECK_THROWS_AS(parse_variant("dqn"), ConfigError);
    CHECK_THROWS_AS(parse_reset_scope("partial"), ConfigError);
    CHECK(parse_variant(to_string(AgentVariant::PlainDdql)) == AgentVariant::PlainDdql);
}

TEST_CASE("snapshot serialization round trip") {
    Agent agent(small_config(), 1);
    train(agent, 25);
    const Snapshot snap = capture(agent);
    const auto bytes = serialize(snap);
    CHECK(deserialize_snapshot(bytes).bit_equal(snap));
    auto cut = bytes;
    cut.pop_back();
    CHECK_THROWS_AS(deserialize_snapshot(cut), Error);
    auto extra = bytes;
    extra.push_back(std::byte{0});
    CHECK_THROWS_AS(deserialize_snapshot(extra), Error);
    CHECK(deserialize_memory(serialize(agent.memory())) == agent.memory());
}

TEST_CASE("restore loads weights, optimizer and memory but keeps epsilon") {
    Agent agent(small_config(), 2);
    train(agent, 20);
    const Snapshot snap = capture(agent);
    train(agent, 30);
    const double eps = agent.epsilon();
    restore(agent, snap);
    CHECK(agent.online().bit_equal(snap.online));
    CHECK(agent.target().bit_equal(snap.target));
    CHECK(agent.optimizer_state().bit_equal(snap.optimizer));
    CHECK(agent.memory() == snap.memory);
    CHECK(agent.epsilon() == eps);
    restore(agent, snap, true);
    CHECK(agent.epsilon() == snap.epsilon);
}

TEST_CASE("CL-DDQL reloads a revisited context bit-exactly") {
    Agent agent(small_config(), 3);
    ContextStore store;
    ContinualController ctl(AgentVariant::ClDdql, ResetScope::HeadsOnly, &store);
    ctl.begin(kPhi1);
    train(agent, 25);
    const Snapshot leaving = capture(agent);

    CHECK(ctl.on_context_announcement(&agent, kPhi2) == ContextEvent::Novel);
    CHECK(agent.epsilon() == 1.0);
    CHECK(agent.memory().size() == 0);
    train(agent, 25);
    const Snapshot phi2 = capture(agent);

    CHECK(ctl.on_context_announcement(&agent, kPhi1) == ContextEvent::Revisit);
    CHECK(agent.online().bit_equal(leaving.online));
    CHECK(agent.target().bit_equal(leaving.target));
    CHECK(agent.memory() == leaving.memory);
    CHECK(store.context_count() == 2);

    // Training in phi1 leaves phi2's stored snapshot alone.
    train(agent, 25);
    CHECK(store.get(kPhi2)->bit_equal(phi2));
    CHECK(ctl.on_context_announcement(&agent, kPhi2) == ContextEvent::Revisit);
    CHECK(store.context_count() == 2);
    CHECK(ctl.on_context_announcement(&agent, kPhi3) == ContextEvent::Novel);
    CHECK(store.context_count() == 3);
    CHECK(store.registry() == std::vector<ContextKey>{kPhi1, kPhi2, kPhi3});
}

TEST_CASE("an announcement of the current context is ignored") {
    Agent agent(small_config(), 4);
    ContextStore store;
    ContinualController ctl(AgentVariant::ClDdql, ResetScope::Full, &store);
    ctl.begin(kPhi1);
    train(agent, 10);
    const Snapshot before = capture(agent);
    CHECK(ctl.on_context_announcement(&agent, kPhi1) == ContextEvent::Ignored);
    CHECK(capture(agent).bit_equal(before));
}

TEST_CASE("PLAIN-DDQL resets on every announcement, including revisits") {
    Agent agent(small_config(), 5);
    ContextStore store;
    ContinualController ctl(AgentVariant::PlainDdql, ResetScope::Full, &store);
    ctl.begin(kPhi1);
    train(agent, 25);
    const Snapshot leaving = capture(agent);
    ctl.on_context_announcement(&agent, kPhi2);
    train(agent, 25);
    ctl.on_context_announcement(&agent, kPhi1);
    CHECK(agent.epsilon() == 1.0);
    CHECK(agent.memory().size() == 0);
    CHECK_FALSE(agent.online().bit_equal(leaving.online));
    CHECK_FALSE(store.has_snapshot(kPhi1));
}

TEST_CASE("CL-DDQL and PLAIN-DDQL agree until the first revisit") {
    auto run = [](AgentVariant v) {
        Agent agent(small_config(), 6);
        ContextStore store;
        ContinualController ctl(v, ResetScope::HeadsOnly, &store);
        ctl.begin(kPhi1);
        train(agent, 20);
        ctl.on_context_announcement(&agent, kPhi2);
        train(agent, 20);
        ctl.on_context_announcement(&agent, kPhi3);
        train(agent, 20);
        return capture(agent);
    };
    CHECK(run(AgentVariant::ClDdql).bit_equal(run(AgentVariant::PlainDdql)));
}

TEST_CASE("RANDOM ignores the learning machinery") {
    Agent agent(small_config(), 7);
    ContextStore store;
    ContinualController ctl(AgentVariant::Random, ResetScope::Full, &store);
    ctl.begin(kPhi1);
    const Snapshot before = capture(agent);
    ctl.on_context_announcement(&agent, kPhi2);
    CHECK(capture(agent).bit_equal(before));
    CHECK_FALSE(store.has_snapshot(kPhi1));
}

TEST_CASE("reset scopes") {
    Agent agent(small_config(), 8);
    train(agent, 25);
    const auto shape = agent.config().net_shape();
    SUBCASE("heads only keeps the LSTM") {
        const std::vector<double> lstm(agent.online().layer(nn::Layer::Lstm).begin(),
                                       agent.online().layer(nn::Layer::Lstm).end());
        const std::vector<double> shared(agent.online().layer(nn::Layer::Shared).begin(),
                                         agent.online().layer(nn::Layer::Shared).end());
        reset_for_new_context(agent, ResetScope::HeadsOnly);
        const auto now = agent.online().layer(nn::Layer::Lstm);
        CHECK(std::equal(lstm.begin(), lstm.end(), now.begin()));
        const auto sh = agent.online().layer(nn::Layer::Shared);
        CHECK_FALSE(std::equal(shared.begin(), shared.end(), sh.begin()));
        CHECK(agent.memory().size() == 0);
        CHECK(agent.epsilon() == 1.0);
    }
    SUBCASE("full equals the seeded initializer at that counter") {
        reset_for_new_context(agent, ResetScope::Full);
        const auto want = nn::initialize(shape, mix_seed(agent.init_seed(), agent.init_counter()));
        CHECK(agent.online().bit_equal(want));
        CHECK(agent.target().bit_equal(want));
        CHECK(agent.memory().size() == 0);
        CHECK(agent.epsilon() == 1.0);
    }
}

TEST_CASE("random policy is uniform over the 20 transmit actions (chi-square, 19 dof, p = 0.001 critical value 43.82)") {
    Rng rng(11);
    std::vector<int> counts(20, 0);
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const AgentAction a = random_policy(rng, 10, 2);
        REQUIRE(a.k >= 1);
        REQUIRE(a.k <= 10);
        ++counts[static_cast<std::size_t>((a.k - 1) * 2 + a.channel)];
    }
    const double e = n / 20.0;
    double x2 = 0.0;
    for (int c : counts) {
        CHECK(std::abs(c - e) < 3.0 * std::sqrt(e * (1.0 - 1.0 / 20.0)));
        x2 += (c - e) * (c - e) / e;
    }
    CHECK(x2 < 43.82);
    for (int i = 0; i < 100; ++i) {
        CHECK(random_policy(rng, 10, 1).channel == 0);
    }
}

TEST_CASE("store spills least recently used snapshots to disk") {
    TempDir dir;
    StoreOptions opts;
    opts.resident_cap = 1;
    opts.spill_dir = dir.path;
    ContextStore store(opts);
    Agent agent(small_config(), 9);
    train(agent, 10);
    const Snapshot s1 = capture(agent);
    train(agent, 10);
    const Snapshot s2 = capture(agent);
    store.put(kPhi1, s1);
    store.put(kPhi2, s2);
    CHECK(store.resident() == 1);
    CHECK(fs::exists(dir.path / ContextStore::spill_filename(kPhi1)));
    CHECK(store.get(kPhi1)->bit_equal(s1));
    CHECK(store.get(kPhi2)->bit_equal(s2));
    CHECK(store.resident() == 1);
    CHECK_FALSE(store.get(kPhi3).has_value());
    CHECK(ContextStore::spill_filename(kPhi1).size() == 16 + 5);

    StoreOptions bad;
    bad.resident_cap = 2;
    CHECK_THROWS_AS(ContextStore{bad}, ConfigError);
}
