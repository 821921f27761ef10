#include "clmac/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "clmac/error.hpp"
#include "json_fields.hpp"

namespace clmac {

namespace {

constexpr int kFreshDrawAttempts = 1000;

bool contains_profile(const std::vector<std::pair<int, UeProfile>>& pool, const UeProfile& p) {
    return std::any_of(pool.begin(), pool.end(), [&](const auto& e) { return e.second == p; });
}

}  // namespace

std::vector<UeInstance> build_scenario1(Slot lifetime) {
    if (lifetime <= 0 || lifetime % 4 != 0) {
        throw ConfigError("scenario1: T must be a positive multiple of 4, got " + std::to_string(lifetime));
    }
    const Slot q = lifetime / 4;
    auto ue = [](int id, UeProfile p, Slot from, Slot until) { return UeInstance{id, p, from, until}; };
    return {
        ue(1, {3, 0, 8, 0}, 0, q),
        ue(2, {4, 3, 8, 1}, 0, q),
        ue(3, {4, 0, 9, 0}, q, 2 * q),
        ue(4, {2, 4, 9, 1}, q, 2 * q),
        ue(5, {4, 0, 9, 1}, 2 * q, 3 * q),
        ue(6, {2, 4, 9, 0}, 2 * q, 3 * q),
        ue(1, {3, 0, 8, 0}, 3 * q, lifetime),
        ue(2, {4, 3, 8, 1}, 3 * q, lifetime),
    };
}

void Scenario2Params::validate(int k_max) const {
    if (channels < 1 || channels > 32) {
        throw ConfigError("scenario2.channels: must lie in [1, 32]");
    }
    if (!(beta > 0.0) || !std::isfinite(beta)) {
        throw ConfigError("scenario2.beta: must be positive");
    }
    if (!(novelty_prob >= 0.0 && novelty_prob <= 1.0)) {
        throw ConfigError("scenario2.novelty_prob: must lie in [0, 1]");
    }
    auto check = [](const IntRange& r, const char* name, int min_lo) {
        if (r.lo < min_lo || r.hi < r.lo) {
            throw ConfigError(std::string("scenario2.") + name + ": need " + std::to_string(min_lo) +
                              " <= lo <= hi");
        }
    };
    check(k_range, "k_range", 1);
    check(offset_range, "offset_range", 0);
    check(frame_range, "frame_range", 1);
    if (k_range.hi > k_max) {
        throw ConfigError("scenario2.k_range: upper bound exceeds K_max " + std::to_string(k_max));
    }
    if (k_range.lo + offset_range.lo > frame_range.hi) {
        throw ConfigError("scenario2: no (k, offset, frame) in the ranges satisfies offset + k <= frame");
    }
}

Scenario2Source::Scenario2Source(Scenario2Params params, int k_max)
    : params_(std::move(params)), k_max_(k_max), rng_(params_.seed), seen_(params_.channels) {
    params_.validate(k_max_);
    for (int lane = 0; lane < params_.channels; ++lane) {
        pending_.push_back(draw_successor(lane, 0, nullptr));
    }
}

UeProfile Scenario2Source::draw_fresh(int channel) {
    const auto& pool = seen_[channel];
    UeProfile p;
    for (int attempt = 0; attempt < kFreshDrawAttempts; ++attempt) {
        p.k = static_cast<int>(rng_.uniform_int(params_.k_range.lo, params_.k_range.hi));
        p.offset = static_cast<int>(rng_.uniform_int(params_.offset_range.lo, params_.offset_range.hi));
        p.frame = static_cast<int>(rng_.uniform_int(params_.frame_range.lo, params_.frame_range.hi));
        p.channel = channel;
        if (p.offset + p.k <= p.frame && !contains_profile(pool, p)) {
            return p;
        }
    }
    // The profile space for this channel is exhausted; settle for a fitting
    // profile even if it has been seen.
    while (true) {
        p.k = static_cast<int>(rng_.uniform_int(params_.k_range.lo, params_.k_range.hi));
        p.offset = static_cast<int>(rng_.uniform_int(params_.offset_range.lo, params_.offset_range.hi));
        p.frame = static_cast<int>(rng_.uniform_int(params_.frame_range.lo, params_.frame_range.hi));
        if (p.offset + p.k <= p.frame) {
            return p;
        }
    }
}

Slot Scenario2Source::draw_stay(const UeProfile& profile) {
    const double stay = std::ceil(rng_.exponential(params_.beta));
    const double capped = std::min(stay, static_cast<double>(std::numeric_limits<Slot>::max() / 4));
    return std::max<Slot>(static_cast<Slot>(capped), profile.frame);
}

UeInstance Scenario2Source::draw_successor(int lane, Slot start, const UeInstance* departing) {
    int channel = lane;
    if (params_.channel_draw == ChannelDraw::Uniform) {
        channel = static_cast<int>(rng_.below(static_cast<std::uint64_t>(params_.channels)));
    }
    auto& pool = seen_[channel];

    // A repeat never re-admits the UE that just left; with nothing else in the
    // pool the draw falls back to a fresh profile.
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (departing == nullptr || pool[i].first != departing->ue_id) {
            candidates.push_back(i);
        }
    }
    const bool novel = rng_.bernoulli(params_.novelty_prob);

    UeInstance inst;
    if (!novel && !candidates.empty()) {
        const auto& pick = pool[candidates[rng_.below(candidates.size())]];
        inst.ue_id = pick.first;
        inst.profile = pick.second;
    } else {
        inst.profile = draw_fresh(channel);
        auto existing = std::find_if(pool.begin(), pool.end(), [&](const auto& e) { return e.second == inst.profile; });
        if (existing != pool.end()) {
            inst.ue_id = existing->first;
        } else {
            inst.ue_id = next_id_++;
            pool.emplace_back(inst.ue_id, inst.profile);
        }
    }
    inst.active_from = start;
    inst.active_until = start + draw_stay(inst.profile);
    return inst;
}

std::optional<UeInstance> Scenario2Source::next() {
    std::size_t lane = 0;
    for (std::size_t i = 1; i < pending_.size(); ++i) {
        if (pending_[i].active_from < pending_[lane].active_from) {
            lane = i;
        }
    }
    UeInstance out = pending_[lane];
    pending_[lane] = draw_successor(static_cast<int>(lane), *out.active_until, &out);
    return out;
}

int scenario_channels(const ScenarioConfig& config) {
    return std::visit(
        [](const auto& c) -> int {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, Scenario1Config>) {
                return Scenario1Config::kChannels;
            } else {
                return c.channels;
            }
        },
        config);
}

std::unique_ptr<UeSource> make_source(const ScenarioConfig& config, Slot lifetime, int k_max, std::uint64_t seed) {
    return std::visit(
        [&](const auto& c) -> std::unique_ptr<UeSource> {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, Scenario1Config>) {
                return std::make_unique<FixedSchedule>(build_scenario1(lifetime));
            } else if constexpr (std::is_same_v<T, Scenario2Params>) {
                Scenario2Params p = c;
                p.seed = mix_seed(c.seed, seed);
                return std::make_unique<Scenario2Source>(p, k_max);
            } else {
                return std::make_unique<FixedSchedule>(c.instances);
            }
        },
        config);
}

namespace {

using detail::Json;

IntRange read_range(const Json& obj, const std::string& path, const char* key, IntRange fallback) {
    if (!obj.contains(key)) {
        return fallback;
    }
    const Json& v = obj.at(key);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() || !v[1].is_number_integer()) {
        throw ConfigError(detail::join_path(path, key) + ": expected [lo, hi] integers");
    }
    return {v[0].get<int>(), v[1].get<int>()};
}

Scenario2Params parse_scenario2(const Json* s, Slot lifetime, int k_max) {
    Scenario2Params p;
    p.beta = 0.2 * static_cast<double>(lifetime);
    if (s != nullptr) {
        const std::string path = "scenario2";
        detail::reject_unknown(*s, path,
                               {"channels", "beta_fraction", "beta_slots", "novelty_prob", "k_range", "offset_range",
                                "frame_range", "channel_draw", "seed"});
        p.channels = static_cast<int>(detail::read_int(*s, path, "channels", p.channels));
        if (s->contains("beta_fraction") && s->contains("beta_slots")) {
            throw ConfigError("scenario2: give beta_fraction or beta_slots, not both");
        }
        if (s->contains("beta_fraction")) {
            const double f = detail::read_number(*s, path, "beta_fraction", 0.2);
            if (!(f > 0.0)) {
                throw ConfigError("scenario2.beta_fraction: must be positive");
            }
            p.beta = f * static_cast<double>(lifetime);
        }
        p.beta = detail::read_number(*s, path, "beta_slots", p.beta);
        p.novelty_prob = detail::read_number(*s, path, "novelty_prob", p.novelty_prob);
        p.k_range = read_range(*s, path, "k_range", p.k_range);
        p.offset_range = read_range(*s, path, "offset_range", p.offset_range);
        p.frame_range = read_range(*s, path, "frame_range", p.frame_range);
        const std::string draw = detail::read_string(*s, path, "channel_draw", "vacated");
        if (draw == "vacated") {
            p.channel_draw = ChannelDraw::Vacated;
        } else if (draw == "uniform") {
            p.channel_draw = ChannelDraw::Uniform;
        } else {
            throw ConfigError("scenario2.channel_draw: expected \"vacated\" or \"uniform\"");
        }
        p.seed = static_cast<std::uint64_t>(detail::read_int(*s, path, "seed", 0));
    }
    p.validate(k_max);
    return p;
}

CustomScenario parse_custom(const Json* s, int k_max) {
    if (s == nullptr) {
        throw ConfigError("custom: section required when scenario is \"custom\"");
    }
    const std::string path = "custom";
    detail::reject_unknown(*s, path, {"channels", "ues"});
    CustomScenario c;
    c.channels = static_cast<int>(detail::read_int(*s, path, "channels", 1));
    if (c.channels < 1 || c.channels > 32) {
        throw ConfigError("custom.channels: must lie in [1, 32]");
    }
    if (!s->contains("ues") || !s->at("ues").is_array()) {
        throw ConfigError("custom.ues: expected an array");
    }
    const Json& ues = s->at("ues");
    for (std::size_t i = 0; i < ues.size(); ++i) {
        const std::string upath = "custom.ues[" + std::to_string(i) + "]";
        const Json& u = ues[i];
        if (!u.is_object()) {
            throw ConfigError(upath + ": expected an object");
        }
        detail::reject_unknown(u, upath, {"id", "k", "offset", "frame", "channel", "intervals"});
        for (const char* req : {"id", "k", "offset", "frame", "channel"}) {
            if (!u.contains(req)) {
                throw ConfigError(detail::join_path(upath, req) + ": required");
            }
        }
        UeProfile p;
        const int id = static_cast<int>(detail::read_int(u, upath, "id", 0));
        p.k = static_cast<int>(detail::read_int(u, upath, "k", 1));
        p.offset = static_cast<int>(detail::read_int(u, upath, "offset", 0));
        p.frame = static_cast<int>(detail::read_int(u, upath, "frame", 1));
        p.channel = static_cast<int>(detail::read_int(u, upath, "channel", 0));
        try {
            p.validate(c.channels, k_max);
        } catch (const ConfigError& e) {
            throw ConfigError(upath + " (UE " + std::to_string(id) + "): " + e.what());
        }
        if (!u.contains("intervals")) {
            c.instances.push_back({id, p, 0, std::nullopt});
            continue;
        }
        const Json& iv = u.at("intervals");
        if (!iv.is_array()) {
            throw ConfigError(upath + ".intervals: expected an array of [from, until]");
        }
        for (std::size_t j = 0; j < iv.size(); ++j) {
            const std::string ipath = upath + ".intervals[" + std::to_string(j) + "]";
            const Json& pair = iv[j];
            if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number_integer() ||
                !(pair[1].is_number_integer() || pair[1].is_null())) {
                throw ConfigError(ipath + ": expected [from, until] with until an integer or null");
            }
            UeInstance inst{id, p, pair[0].get<Slot>(), std::nullopt};
            if (!pair[1].is_null()) {
                inst.active_until = pair[1].get<Slot>();
                if (*inst.active_until <= inst.active_from) {
                    throw ConfigError(ipath + ": from must precede until");
                }
            }
            if (inst.active_from < 0) {
                throw ConfigError(ipath + ": from must be >= 0");
            }
            c.instances.push_back(inst);
        }
    }
    return c;
}

}  // namespace

ParsedScenario parse_config(std::string_view text) {
    const Json doc = detail::parse_document(text);
    ParsedScenario out;
    out.lifetime = detail::read_int(doc, "", "T", out.lifetime);
    if (out.lifetime <= 0) {
        throw ConfigError("T: must be positive");
    }
    int k_max = 10;
    if (const Json* agent = detail::section(doc, "", "agent")) {
        k_max = static_cast<int>(detail::read_int(*agent, "agent", "k_max", k_max));
    }
    const std::string kind = detail::read_string(doc, "", "scenario", "scenario1");
    if (kind == "scenario1") {
        if (out.lifetime % 4 != 0) {
            throw ConfigError("T: scenario1 needs a multiple of 4");
        }
        out.scenario = Scenario1Config{out.lifetime};
    } else if (kind == "scenario2") {
        out.scenario = parse_scenario2(detail::section(doc, "", "scenario2"), out.lifetime, k_max);
    } else if (kind == "custom") {
        out.scenario = parse_custom(detail::section(doc, "", "custom"), k_max);
    } else {
        throw ConfigError("scenario: expected \"scenario1\", \"scenario2\" or \"custom\", got \"" + kind + "\"");
    }
    return out;
}

}  // namespace clmac
