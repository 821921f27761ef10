#include <algorithm>
#include <cmath>
#include <vector>

#include "clmac/env.hpp"
#include "clmac/error.hpp"
#include "clmac/metrics.hpp"
#include "clmac/rng.hpp"
#include "clmac/slot_log.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace clmac;

namespace {

std::vector<std::uint32_t> random_occupancy(Rng& rng, std::size_t n, int channels, double busy) {
    std::vector<std::uint32_t> occ(n, 0);
    for (auto& o : occ) {
        for (int c = 0; c < channels; ++c) {
            if (rng.bernoulli(busy)) {
                o |= 1U << c;
            }
        }
    }
    return occ;
}

// Drives an environment with a fixed action callback and returns its log.
template <class Policy>
SlotLog simulate(int channels, std::vector<UeInstance> ues, Slot until, Policy policy) {
    SlotLog log;
    log.channels = channels;
    Environment env(channels, 10, std::make_unique<FixedSchedule>(std::move(ues)), &log);
    while (env.now() < until) {
        env.apply_action(policy(env.now()));
    }
    return log;
}

std::vector<SeriesPoint> series_of(const std::vector<double>& values, Slot first, Slot stride) {
    std::vector<SeriesPoint> out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        SeriesPoint p;
        p.slot = first + static_cast<Slot>(i) * stride;
        p.throughput = values[i];
        out.push_back(p);
    }
    return out;
}

// The convergence rule evaluated point by point, with no precomputation.
std::optional<Slot> scan_convergence(const std::vector<SeriesPoint>& s, Slot start, Slot end, double frac,
                                     Slot sustain, double tail) {
    double sum = 0.0;
    int n = 0;
    for (const auto& p : s) {
        if (p.slot >= start && p.slot <= end && p.slot >= end - tail * (end - start)) {
            sum += p.throughput;
            ++n;
        }
    }
    const double thr = frac * sum / n;
    for (const auto& p : s) {
        if (p.slot < start || p.slot + sustain > end) {
            continue;
        }
        bool ok = true;
        for (const auto& q : s) {
            if (q.slot >= p.slot && q.slot <= p.slot + sustain && q.throughput < thr) {
                ok = false;
            }
        }
        if (ok) {
            return p.slot - start;
        }
    }
    return std::nullopt;
}

}  // namespace

TEST_CASE("oracle: small cases") {
    const std::vector<std::uint32_t> busy(12, 0x3);
    CHECK(oracle_max_payload(busy, 2, 10) == 0.0);
    // one channel, idle gap of 5: one length-5 packet (4.5) beats 2 + 3 (4.0)
    const std::vector<std::uint32_t> gap{1, 0, 0, 0, 0, 0, 1};
    CHECK(oracle_max_payload(gap, 1, 10) == 4.5);
    CHECK(oracle_max_payload(gap, 1, 3) == 4.0);  // 3 + 2 when K_max = 3
    // Scenario-1 first context over one 8-slot frame
    std::vector<std::uint32_t> frame(8, 0);
    for (Slot s = 0; s < 8; ++s) {
        frame[s] = (occupied({3, 0, 8, 0}, s) ? 1U : 0U) | (occupied({4, 3, 8, 1}, s) ? 2U : 0U);
    }
    CHECK(oracle_max_payload(frame, 2, 10) == oracle::brute_payload(frame, 2, 10, 0.5));
    CHECK(oracle_max_payload(frame, 2, 10) == 7.0);  // length 3 on channel 1, then length 5 on channel 0
}

TEST_CASE("oracle equals exhaustive search on random short windows") {
    Rng rng(1);
    for (int trial = 0; trial < 300; ++trial) {
        const int channels = static_cast<int>(rng.uniform_int(1, 2));
        const int k_max = static_cast<int>(rng.uniform_int(1, 6));
        const auto n = static_cast<std::size_t>(rng.uniform_int(1, 14));
        const auto occ = random_occupancy(rng, n, channels, rng.uniform(0.2, 0.8));
        CHECK(oracle_max_payload(occ, channels, k_max, 0.5) == oracle::brute_payload(occ, channels, k_max, 0.5));
        double per_channel = 0.0;
        for (int c = 0; c < channels; ++c) {
            std::vector<std::uint32_t> one(n);
            for (std::size_t i = 0; i < n; ++i) {
                one[i] = occ[i] >> c & 1U;
            }
            per_channel += oracle::brute_payload(one, 1, k_max, 0.5);
        }
        CHECK(oracle_max_payload_multi(occ, channels, k_max, 0.5) == per_channel);
        CHECK(oracle_max_payload_multi(occ, channels, k_max, 0.5) >= oracle_max_payload(occ, channels, k_max, 0.5));
    }
}

TEST_CASE("normalized throughput") {
    const std::vector<UeInstance> ue1{{1, {3, 0, 8, 0}, 0, std::nullopt}};
    WindowParams wp;
    SUBCASE("one length-5 packet per frame in the idle gap is optimal") {
        const auto log = simulate(1, ue1, 2000, [](Slot t) { return t % 8 == 3 ? AgentAction{5, 0} : AgentAction{0, 0}; });
        CHECK(*normalized_throughput(log, 1000, wp) == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(*normalized_throughput(log, 2000, wp) == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(*collision_rate(log, 1000, wp) == 0.0);
    }
    SUBCASE("sensing only gives zero throughput and no collisions") {
        const auto log = simulate(1, ue1, 1200, [](Slot) { return AgentAction{0, 0}; });
        CHECK(*normalized_throughput(log, 1000, wp) == 0.0);
        CHECK(*collision_rate(log, 1000, wp) == 0.0);
    }
    SUBCASE("always colliding") {
        const auto log = simulate(1, ue1, 1200, [](Slot) { return AgentAction{8, 0}; });
        CHECK(*collision_rate(log, 1000, wp) == 1.0);
        CHECK(*normalized_throughput(log, 1000, wp) == 0.0);
    }
    SUBCASE("absent before one full window") {
        const auto log = simulate(1, ue1, 500, [](Slot) { return AgentAction{0, 0}; });
        CHECK_FALSE(normalized_throughput(log, 400, wp));
        CHECK_FALSE(collision_rate(log, 400, wp));
        CHECK_FALSE(normalized_throughput(log, 1000, wp));
    }
    SUBCASE("no UEs and no traffic counts as 0/0 = 1") {
        SlotLog log;
        log.channels = 1;
        log.occupancy.assign(1000, 1U);
        CHECK(*normalized_throughput(log, 1000, wp) == 1.0);
    }
}

TEST_CASE("collision rate is a plain ratio") {
    SlotLog log;
    log.channels = 1;
    log.occupancy.assign(20, 0);
    for (int i = 0; i < 10; ++i) {
        log.observations.push_back({i, i < 3 ? Observation::Collision : Observation::Idle});
    }
    WindowParams wp;
    wp.window = 20;
    CHECK(*collision_rate(log, 20, wp) == doctest::Approx(0.3));
}

TEST_CASE("property: numerator never exceeds the oracle; metrics stay in [0, 1]") {
    Rng rng(2);
    std::vector<UeInstance> ues{{1, {3, 0, 8, 0}, 0, Slot{1500}}, {2, {4, 3, 8, 1}, 0, std::nullopt},
                                {3, {2, 4, 9, 0}, 1500, std::nullopt}};
    const auto log = simulate(2, ues, 3000, [&](Slot) {
        return AgentAction{static_cast<int>(rng.uniform_int(0, 10)), static_cast<int>(rng.below(2))};
    });
    MetricParams mp;
    mp.window.window = 200;
    mp.stride = 7;
    const auto series = compute_series(log, mp);
    CHECK(!series.empty());
    for (const auto& p : series) {
        CHECK(p.throughput >= 0.0);
        CHECK(p.throughput <= 1.0);
        CHECK(p.throughput_multi <= p.throughput + 1e-15);
        CHECK(p.collision_rate >= 0.0);
        CHECK(p.collision_rate <= 1.0);
    }
}

TEST_CASE("property: relabeling UE ids changes nothing") {
    auto run = [](int id_a, int id_b) {
        std::vector<UeInstance> ues{{id_a, {3, 0, 8, 0}, 0, Slot{600}}, {id_b, {4, 3, 8, 0}, 600, std::nullopt}};
        Rng rng(3);
        const auto log = simulate(1, ues, 1500, [&](Slot) {
            return AgentAction{static_cast<int>(rng.uniform_int(0, 6)), 0};
        });
        MetricParams mp;
        mp.window.window = 300;
        mp.stride = 50;
        const auto s = compute_series(log, mp);
        std::vector<double> v;
        for (const auto& p : s) {
            v.push_back(p.throughput);
            v.push_back(p.collision_rate);
            v.push_back(p.context_id);
        }
        return v;
    };
    CHECK(run(1, 2) == run(17, 4));
}

TEST_CASE("context intervals and ids") {
    SlotLog log;
    log.channels = 1;
    log.occupancy.assign(100, 0);
    const ContextKey a({{1, 0}}), b({{2, 0}});
    log.context_changes = {{0, a}, {30, b}, {60, a}};
    const auto iv = context_intervals(log);
    REQUIRE(iv.size() == 3);
    CHECK(iv[0].context_id == 0);
    CHECK(iv[1].context_id == 1);
    CHECK(iv[2].context_id == 0);
    CHECK(iv[2].revisit);
    CHECK(iv[2].end == 100);
}

TEST_CASE("convergence time") {
    MetricParams mp;
    SUBCASE("constant series converges immediately") {
        const auto s = series_of(std::vector<double>(101, 0.7), 20000, 100);
        const auto c = convergence_time(s, 20000, 30000, mp);
        CHECK(c.value == Slot{0});
        CHECK_FALSE(c.censored);
    }
    SUBCASE("step at a known slot") {
        std::vector<double> v(101, 0.0);
        for (std::size_t i = 23; i < v.size(); ++i) {
            v[i] = 0.8;
        }
        const auto s = series_of(v, 20000, 100);
        CHECK(convergence_time(s, 20000, 30000, mp).value == Slot{2300});
    }
    SUBCASE("never sustained is censored at the interval length") {
        std::vector<double> v(101);
        for (std::size_t i = 0; i < v.size(); ++i) {
            v[i] = i % 5 == 0 ? 0.0 : 1.0;
        }
        const auto s = series_of(v, 0, 100);
        const auto c = convergence_time(s, 0, 10000, mp);
        CHECK(c.censored);
        CHECK(c.value == Slot{10000});
    }
    SUBCASE("short contexts get no value") {
        const auto s = series_of(std::vector<double>(40, 1.0), 0, 100);
        const auto c = convergence_time(s, 0, 4000, mp);
        CHECK(c.too_short);
        CHECK_FALSE(c.value);
    }
    SUBCASE("noisy ramps agree with the direct scan") {
        Rng rng(4);
        for (int trial = 0; trial < 100; ++trial) {
            const Slot start = 100 * rng.uniform_int(0, 50);
            const Slot len = 100 * rng.uniform_int(50, 200);
            const Slot ramp = rng.uniform_int(0, len);
            std::vector<double> v;
            for (Slot t = 0; t <= len; t += 100) {
                const double base = std::min(1.0, static_cast<double>(t) / std::max<Slot>(ramp, 1));
                v.push_back(std::clamp(base * 0.8 + rng.uniform(-0.15, 0.15), 0.0, 1.0));
            }
            const auto s = series_of(v, start, 100);
            const auto want = scan_convergence(s, start, start + len, 0.9, 1000, 0.2);
            const auto got = convergence_time(s, start, start + len, mp);
            if (want) {
                CHECK(got.value == want);
                CHECK_FALSE(got.censored);
            } else {
                CHECK(got.censored);
                CHECK(got.value == len);
            }
        }
    }
}

TEST_CASE("summaries across rounds") {
    const std::vector<double> one{0.42};
    CHECK(summarize(one).mean == 0.42);
    CHECK(summarize(one).std == 0.0);
    const std::vector<double> two{0.4, 0.6};
    CHECK(summarize(two).mean == doctest::Approx(0.5));
    CHECK(summarize(two).std == doctest::Approx(std::sqrt(0.02)));
    std::vector<double> many{0.1, 0.7, 0.3333, 0.9, 1e-9, 0.55};
    const Stats ref = summarize(many);
    std::sort(many.begin(), many.end());
    do {
        const Stats s = summarize(many);
        CHECK(s.mean == ref.mean);
        CHECK(s.std == ref.std);
    } while (std::next_permutation(many.begin(), many.end()));
}

TEST_CASE("metric parameter validation") {
    MetricParams mp;
    mp.stride = 0;
    CHECK_THROWS_AS(mp.validate(), ConfigError);
    mp = {};
    mp.convergence.level_fraction = 1.5;
    CHECK_THROWS_AS(mp.validate(), ConfigError);
}
