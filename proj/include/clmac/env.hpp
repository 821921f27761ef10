#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace clmac {

using Slot = std::int64_t;

struct SlotLog;

// Periodic TDMA schedule: a packet of `k` slots starting at `offset` within
// every frame of `frame` slots, on channel `channel`.
struct UeProfile {
    int k = 1;
    int offset = 0;
    int frame = 1;
    int channel = 0;

    // Throws ConfigError if the profile is malformed for the given limits.
    void validate(int channels, int k_max) const;

    friend auto operator<=>(const UeProfile&, const UeProfile&) = default;
};

// True iff the profile transmits in `slot`. Frames are aligned to slot 0.
bool occupied(const UeProfile& profile, Slot slot);

// One activity interval of a UE. A UE that leaves and returns has several
// instances sharing the same id.
struct UeInstance {
    int ue_id = 0;
    UeProfile profile;
    Slot active_from = 0;
    std::optional<Slot> active_until;  // exclusive; nullopt = open-ended

    bool active_at(Slot slot) const {
        return slot >= active_from && (!active_until || slot < *active_until);
    }
};

struct ContextMember {
    int ue_id = 0;
    int channel = 0;

    friend auto operator<=>(const ContextMember&, const ContextMember&) = default;
};

// Canonical identity of a context: the sorted, duplicate-free set of
// (ue_id, channel) pairs that are active.
class ContextKey {
public:
    ContextKey() = default;
    explicit ContextKey(std::vector<ContextMember> members);

    const std::vector<ContextMember>& members() const { return members_; }
    bool empty() const { return members_.empty(); }

    // "{(1,0),(2,1)}"
    std::string to_string() const;
    // FNV-1a over the canonical member list; stable across runs and hosts.
    std::uint64_t stable_hash() const;

    friend bool operator==(const ContextKey&, const ContextKey&) = default;
    friend auto operator<=>(const ContextKey&, const ContextKey&) = default;

private:
    std::vector<ContextMember> members_;
};

// One-hot position follows declaration order; None pads unfilled history.
enum class Observation : std::uint8_t { Busy = 0, Idle = 1, Success = 2, Collision = 3, None = 4 };

inline constexpr int kObservationKinds = 5;

const char* to_string(Observation obs);

// k = 0 senses `channel` for one slot; k > 0 transmits a k-slot packet.
struct AgentAction {
    int k = 0;
    int channel = 0;

    int duration() const { return k > 0 ? k : 1; }
    bool is_sense() const { return k == 0; }

    friend bool operator==(const AgentAction&, const AgentAction&) = default;
};

struct StepOutcome {
    Observation observation = Observation::None;
    double reward = 0.0;
    int duration = 1;
    std::optional<ContextKey> announced_context;
};

// Stream of UE activity intervals in non-decreasing `active_from` order.
class UeSource {
public:
    virtual ~UeSource() = default;
    virtual std::optional<UeInstance> next() = 0;
};

// A finite, pre-built list of instances.
class FixedSchedule final : public UeSource {
public:
    explicit FixedSchedule(std::vector<UeInstance> instances);

    std::optional<UeInstance> next() override;
    const std::vector<UeInstance>& instances() const { return instances_; }

private:
    std::vector<UeInstance> instances_;
    std::size_t cursor_ = 0;
};

// Slot-level simulation of `channels` TDMA channels plus one agent radio.
//
// The clock always sits on a decision boundary. Membership changes take
// effect at the start of the slot they are scheduled for; a change that
// happens while an action is in flight is announced once the action ends.
class Environment {
public:
    Environment(int channels, int k_max, std::unique_ptr<UeSource> source, SlotLog* log = nullptr);

    StepOutcome apply_action(const AgentAction& action);

    // Context at the current clock slot.
    ContextKey active_context() const;
    Slot now() const { return now_; }
    int channels() const { return channels_; }
    int k_max() const { return k_max_; }
    const std::vector<UeInstance>& active_instances() const { return active_; }

    // Busy-channel bitmask at the current slot.
    std::uint32_t occupancy_mask() const;
    // Key last reported to the agent (initially the slot-0 context).
    const ContextKey& announced() const { return announced_; }

private:
    void admit_until(Slot slot);
    void retire_before(Slot slot);
    void enter_slot(Slot slot);
    bool busy(int channel) const;

    int channels_;
    int k_max_;
    std::unique_ptr<UeSource> source_;
    SlotLog* log_;
    std::optional<UeInstance> pending_;
    std::vector<UeInstance> active_;
    Slot now_ = 0;
    ContextKey announced_;
};

}  // namespace clmac

template <>
struct std::hash<clmac::ContextKey> {
    std::size_t operator()(const clmac::ContextKey& key) const noexcept {
        return static_cast<std::size_t>(key.stable_hash());
    }
};
