#pragma once

#include <cstdint>
#include <vector>

#include "clmac/env.hpp"

namespace clmac {

enum class ActivityKind : std::uint8_t { Idle = 0, Sense = 1, Transmit = 2 };

struct AgentSlot {
    ActivityKind kind = ActivityKind::Idle;
    std::uint8_t channel = 0;
    std::int32_t packet_id = -1;  // index into SlotLog::packets for Transmit
};

struct PacketRecord {
    Slot start = 0;
    int k = 0;
    int channel = 0;
    bool success = false;

    Slot completion() const { return start + k - 1; }
};

// Observations are stamped with the last slot of the action that produced them.
struct ObservationRecord {
    Slot slot = 0;
    Observation observation = Observation::None;
};

struct ContextChange {
    Slot slot = 0;
    ContextKey key;
};

struct EpsilonRecord {
    Slot slot = 0;
    double epsilon = 0.0;
};

// Append-only per-run record. Index i of `occupancy`/`activity` is slot i.
struct SlotLog {
    int channels = 0;
    std::vector<std::uint32_t> occupancy;  // bit c set = some UE occupies channel c
    std::vector<AgentSlot> activity;
    std::vector<PacketRecord> packets;            // ordered by start (and completion)
    std::vector<ObservationRecord> observations;  // ordered by slot
    std::vector<ContextChange> context_changes;   // first entry is the slot-0 context
    std::vector<EpsilonRecord> epsilons;          // one per agent decision

    Slot length() const { return static_cast<Slot>(occupancy.size()); }
};

}  // namespace clmac
