#pragma once

#include <cstdint>
#include <memory>
#include <string_view>
#include <variant>
#include <vector>

#include "clmac/env.hpp"
#include "clmac/rng.hpp"

namespace clmac {

// Fixed change points: three contexts over quarters of the lifetime, the
// first one returning in the last quarter.
//
//   UE  (k, offset, frame, channel)  active
//   1   (3, 0, 8, 0)                 [0, T/4) and [3T/4, T)
//   2   (4, 3, 8, 1)                 [0, T/4) and [3T/4, T)
//   3   (4, 0, 9, 0)                 [T/4, T/2)
//   4   (2, 4, 9, 1)                 [T/4, T/2)
//   5   (4, 0, 9, 1)                 [T/2, 3T/4)
//   6   (2, 4, 9, 0)                 [T/2, 3T/4)
struct Scenario1Config {
    Slot lifetime = 80000;
    static constexpr int kChannels = 2;
};

struct IntRange {
    int lo = 0;
    int hi = 0;  // inclusive
};

enum class ChannelDraw {
    Vacated,  // replacement stays on the channel its predecessor left
    Uniform,  // replacement channel drawn uniformly from [0, C)
};

// Stochastic change points: each channel always hosts one UE whose stay is
// exponential with mean `beta` slots; on departure a replacement arrives with
// a novel profile (probability `novelty_prob`) or a previously seen one.
struct Scenario2Params {
    int channels = 2;
    double beta = 16000.0;  // mean active duration, slots
    double novelty_prob = 0.5;
    IntRange k_range{1, 4};
    IntRange offset_range{4, 8};
    IntRange frame_range{8, 12};
    ChannelDraw channel_draw = ChannelDraw::Vacated;
    std::uint64_t seed = 0;

    void validate(int k_max) const;
};

// Explicit UE list, e.g. a single-context run.
struct CustomScenario {
    int channels = 1;
    std::vector<UeInstance> instances;
};

using ScenarioConfig = std::variant<Scenario1Config, Scenario2Params, CustomScenario>;

// Throws ConfigError if `lifetime` is not a positive multiple of 4.
std::vector<UeInstance> build_scenario1(Slot lifetime);

// Lazy arrival/departure stream for Scenario2Params. Draws are consumed
// only as the environment advances, so the horizon is unbounded.
class Scenario2Source final : public UeSource {
public:
    Scenario2Source(Scenario2Params params, int k_max);

    std::optional<UeInstance> next() override;

    // Profiles seen so far on a channel, in first-seen order.
    const std::vector<std::pair<int, UeProfile>>& seen(int channel) const { return seen_[channel]; }

private:
    UeInstance draw_successor(int lane, Slot start, const UeInstance* departing);
    UeProfile draw_fresh(int channel);
    Slot draw_stay(const UeProfile& profile);

    Scenario2Params params_;
    int k_max_;
    Rng rng_;
    int next_id_ = 1;
    std::vector<std::vector<std::pair<int, UeProfile>>> seen_;  // per channel: (ue_id, profile)
    std::vector<UeInstance> pending_;                          // per lane
};

int scenario_channels(const ScenarioConfig& config);

// Arrival stream for one round. `seed` only matters for Scenario 2, where it
// is mixed with the configured sampler seed.
std::unique_ptr<UeSource> make_source(const ScenarioConfig& config, Slot lifetime, int k_max, std::uint64_t seed);

// Parses the scenario part of a JSON config document:
//
//   { "scenario": "scenario1" | "scenario2" | "custom",
//     "T": <slots>,
//     "scenario2": { "channels", "beta_fraction" | "beta_slots", "novelty_prob",
//                    "k_range", "offset_range", "frame_range", "channel_draw" },
//     "custom": { "channels", "ues": [ { "id", "k", "offset", "frame", "channel",
//                                        "intervals": [[from, until], ...] } ] } }
//
// Missing fields take their defaults (beta_fraction 0.2); "agent.k_max" is
// honoured when validating profiles; other sections are ignored here.
// Schema problems throw ConfigError naming the offending field.
struct ParsedScenario {
    ScenarioConfig scenario;
    Slot lifetime = 80000;
};
ParsedScenario parse_config(std::string_view text);

}  // namespace clmac
