#include <cmath>
#include <map>

#include "clmac/error.hpp"
#include "clmac/rng.hpp"
#include "clmac/scenario.hpp"
#include "doctest.h"

using namespace clmac;

namespace {

// Pearson statistic for `counts` against a uniform expectation.
double chi_square(const std::vector<int>& counts, double total) {
    const double expect = total / static_cast<double>(counts.size());
    double x2 = 0.0;
    for (int c : counts) {
        x2 += (c - expect) * (c - expect) / expect;
    }
    return x2;
}

}  // namespace

TEST_CASE("rng draws are reproducible and in range") {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) {
        CHECK(a() == b());
    }
    Rng r(1);
    for (int i = 0; i < 10000; ++i) {
        const double u = r.uniform01();
        CHECK((u >= 0.0 && u < 1.0));
        const auto k = r.uniform_int(-3, 4);
        CHECK((k >= -3 && k <= 4));
    }
    CHECK(mix_seed(1, 1) != mix_seed(1, 2));
    CHECK(mix_seed(1, 1) != mix_seed(2, 1));
}

TEST_CASE("rng below is uniform (chi-square, 9 dof, p = 0.001 critical value 27.88)") {
    Rng r(5);
    std::vector<int> counts(10, 0);
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        ++counts[r.below(10)];
    }
    CHECK(chi_square(counts, n) < 27.88);
}

TEST_CASE("rng exponential has the requested mean") {
    Rng r(6);
    double sum = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double x = r.exponential(50.0);
        CHECK(x >= 0.0);
        sum += x;
    }
    // standard error 50 / sqrt(n) ~ 0.11
    CHECK(std::abs(sum / n - 50.0) < 0.6);
}

TEST_CASE("scenario 1 schedule") {
    const auto inst = build_scenario1(80000);
    std::map<int, std::vector<std::pair<Slot, Slot>>> by_id;
    for (const auto& i : inst) {
        REQUIRE(i.active_until);
        by_id[i.ue_id].emplace_back(i.active_from, *i.active_until);
    }
    CHECK(by_id[1] == std::vector<std::pair<Slot, Slot>>{{0, 20000}, {60000, 80000}});
    CHECK(by_id[2] == std::vector<std::pair<Slot, Slot>>{{0, 20000}, {60000, 80000}});
    CHECK(by_id[3] == std::vector<std::pair<Slot, Slot>>{{20000, 40000}});
    CHECK(by_id[6] == std::vector<std::pair<Slot, Slot>>{{40000, 60000}});
    for (std::size_t i = 1; i < inst.size(); ++i) {
        CHECK(inst[i - 1].active_from <= inst[i].active_from);
    }
    const auto tiny = build_scenario1(4);
    CHECK(tiny.size() == 8);
    CHECK_THROWS_AS(build_scenario1(6), ConfigError);
    CHECK_THROWS_AS(build_scenario1(0), ConfigError);
}

TEST_CASE("scenario 2 keeps one UE per channel, all profiles valid") {
    Scenario2Params p;
    p.channels = 3;
    p.beta = 30.0;
    p.seed = 4;
    Scenario2Source src(p, 10);
    std::vector<Slot> covered_until(3, 0);
    for (int n = 0; n < 3000; ++n) {
        const auto inst = src.next();
        REQUIRE(inst);
        CHECK_NOTHROW(inst->profile.validate(3, 10));
        CHECK(inst->profile.k >= 1);
        CHECK(inst->profile.k <= 4);
        REQUIRE(inst->active_until);
        CHECK(*inst->active_until - inst->active_from >= inst->profile.frame);
        // Vacated draw: a lane's successor starts exactly where it left off.
        const int c = inst->profile.channel;
        CHECK(inst->active_from == covered_until[c]);
        covered_until[c] = *inst->active_until;
    }
}

TEST_CASE("scenario 2 novelty probability controls reuse") {
    // Few draws: the default ranges allow only a limited number of profiles.
    auto reuse_share = [](double novelty) {
        Scenario2Params p;
        p.channels = 1;
        p.beta = 10.0;
        p.novelty_prob = novelty;
        p.seed = 8;
        Scenario2Source src(p, 10);
        std::map<int, int> seen;
        int reused = 0;
        const int n = 40;
        for (int i = 0; i < n; ++i) {
            const auto inst = src.next();
            if (seen[inst->ue_id]++ > 0) {
                ++reused;
            }
        }
        return static_cast<double>(reused) / n;
    };
    CHECK(reuse_share(1.0) < 0.1);
    CHECK(reuse_share(0.0) > 0.9);
}

TEST_CASE("scenario 2 streams are seed-determined") {
    Scenario2Params p;
    p.seed = 12;
    Scenario2Source a(p, 10), b(p, 10);
    for (int i = 0; i < 200; ++i) {
        const auto x = a.next();
        const auto y = b.next();
        CHECK(x->ue_id == y->ue_id);
        CHECK(x->profile == y->profile);
        CHECK(x->active_from == y->active_from);
    }
}

TEST_CASE("config parsing") {
    SUBCASE("custom scenario") {
        const auto parsed = parse_config(R"({"scenario": "custom", "T": 100,
            "custom": {"channels": 1, "ues": [{"id": 1, "k": 3, "offset": 0, "frame": 8, "channel": 0,
                                               "intervals": [[0, null]]}]}})");
        CHECK(parsed.lifetime == 100);
        const auto& c = std::get<CustomScenario>(parsed.scenario);
        REQUIRE(c.instances.size() == 1);
        CHECK(c.instances[0].profile == UeProfile{3, 0, 8, 0});
        CHECK_FALSE(c.instances[0].active_until);
    }
    SUBCASE("scenario 2 beta fraction") {
        const auto parsed = parse_config(R"({"scenario": "scenario2", "T": 1000,
            "scenario2": {"channels": 3, "beta_fraction": 0.5}})");
        const auto& p = std::get<Scenario2Params>(parsed.scenario);
        CHECK(p.channels == 3);
        CHECK(p.beta == 500.0);
    }
    SUBCASE("bad profile is named") {
        try {
            parse_config(R"({"scenario": "custom", "T": 100,
                "custom": {"channels": 1, "ues": [{"id": 1, "k": 3, "offset": 7, "frame": 8, "channel": 0,
                                                   "intervals": [[0, null]]}]}})");
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("custom.ues[0]") != std::string::npos);
        }
    }
    SUBCASE("malformed documents") {
        CHECK_THROWS_AS(parse_config("{"), ConfigError);
        CHECK_THROWS_AS(parse_config(R"({"scenario": "nope"})"), ConfigError);
        CHECK_THROWS_AS(parse_config(R"({"scenario": "scenario1", "T": 10})"), ConfigError);
        CHECK_THROWS_AS(parse_config(R"({"scenario": "scenario2", "scenario2": {"beta_fraction": 0.2, "beta_slots": 5}})"),
                        ConfigError);
        CHECK_THROWS_AS(parse_config(R"({"scenario": "scenario2", "scenario2": {"k_range": [1, 20]}})"), ConfigError);
    }
}
