#include "clmac/env.hpp"

#include <algorithm>
#include <sstream>

#include "clmac/error.hpp"
#include "clmac/slot_log.hpp"

namespace clmac {

void UeProfile::validate(int channels, int k_max) const {
    std::ostringstream why;
    if (k < 1) {
        why << "k must be >= 1";
    } else if (k > k_max) {
        why << "k " << k << " exceeds K_max " << k_max;
    } else if (offset < 0) {
        why << "offset must be >= 0";
    } else if (frame < 1) {
        why << "frame must be >= 1";
    } else if (offset + k > frame) {
        why << "offset + k (" << offset + k << ") exceeds frame " << frame;
    } else if (channel < 0 || channel >= channels) {
        why << "channel " << channel << " outside [0, " << channels << ")";
    } else {
        return;
    }
    throw ConfigError("invalid UE profile (" + std::to_string(k) + "," + std::to_string(offset) + "," +
                      std::to_string(frame) + "," + std::to_string(channel) + "): " + why.str());
}

bool occupied(const UeProfile& profile, Slot slot) {
    const Slot phase = slot % profile.frame;
    return phase >= profile.offset && phase < profile.offset + profile.k;
}

ContextKey::ContextKey(std::vector<ContextMember> members) : members_(std::move(members)) {
    std::sort(members_.begin(), members_.end());
    members_.erase(std::unique(members_.begin(), members_.end()), members_.end());
}

std::string ContextKey::to_string() const {
    std::string out = "{";
    for (std::size_t i = 0; i < members_.size(); ++i) {
        if (i != 0) {
            out += ',';
        }
        out += '(' + std::to_string(members_[i].ue_id) + ',' + std::to_string(members_[i].channel) + ')';
    }
    return out + '}';
}

std::uint64_t ContextKey::stable_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](std::int64_t v) {
        for (int byte = 0; byte < 8; ++byte) {
            h ^= static_cast<std::uint64_t>(v >> (8 * byte)) & 0xffU;
            h *= 0x100000001b3ULL;
        }
    };
    feed(static_cast<std::int64_t>(members_.size()));
    for (const auto& m : members_) {
        feed(m.ue_id);
        feed(m.channel);
    }
    return h;
}

const char* to_string(Observation obs) {
    switch (obs) {
        case Observation::Busy: return "Busy";
        case Observation::Idle: return "Idle";
        case Observation::Success: return "Success";
        case Observation::Collision: return "Collision";
        case Observation::None: return "None";
    }
    return "?";
}

FixedSchedule::FixedSchedule(std::vector<UeInstance> instances) : instances_(std::move(instances)) {
    std::stable_sort(instances_.begin(), instances_.end(),
                     [](const UeInstance& a, const UeInstance& b) { return a.active_from < b.active_from; });
    for (const auto& inst : instances_) {
        if (inst.active_until && *inst.active_until <= inst.active_from) {
            throw ConfigError("UE " + std::to_string(inst.ue_id) + ": active_from must precede active_until");
        }
    }
}

std::optional<UeInstance> FixedSchedule::next() {
    if (cursor_ == instances_.size()) {
        return std::nullopt;
    }
    return instances_[cursor_++];
}

Environment::Environment(int channels, int k_max, std::unique_ptr<UeSource> source, SlotLog* log)
    : channels_(channels), k_max_(k_max), source_(std::move(source)), log_(log) {
    if (channels < 1 || channels > 32) {
        throw ConfigError("channel count must lie in [1, 32]");
    }
    if (k_max < 1) {
        throw ConfigError("K_max must be >= 1");
    }
    pending_ = source_ ? source_->next() : std::nullopt;
    admit_until(0);
    announced_ = active_context();
    if (log_ != nullptr) {
        log_->channels = channels_;
        log_->context_changes.push_back({0, announced_});
    }
}

void Environment::retire_before(Slot slot) {
    std::erase_if(active_, [slot](const UeInstance& u) { return u.active_until && *u.active_until <= slot; });
}

void Environment::admit_until(Slot slot) {
    while (pending_ && pending_->active_from <= slot) {
        UeInstance inst = *pending_;
        pending_ = source_->next();
        if (pending_ && pending_->active_from < inst.active_from) {
            throw Error("UE source yielded instances out of order");
        }
        if (inst.active_until && *inst.active_until <= slot) {
            continue;  // interval already over
        }
        inst.profile.validate(channels_, k_max_);
        retire_before(slot);
        for (const auto& other : active_) {
            if (other.ue_id == inst.ue_id) {
                throw Error("UE id " + std::to_string(inst.ue_id) + " is already active at slot " +
                            std::to_string(slot));
            }
        }
        active_.push_back(inst);
    }
}

void Environment::enter_slot(Slot slot) {
    const bool track = log_ != nullptr;
    ContextKey before;
    if (track) {
        before = active_context();
    }
    retire_before(slot);
    admit_until(slot);
    if (track) {
        ContextKey after = active_context();
        if (after != before) {
            log_->context_changes.push_back({slot, std::move(after)});
        }
    }
}

bool Environment::busy(int channel) const {
    return std::any_of(active_.begin(), active_.end(), [&](const UeInstance& u) {
        return u.profile.channel == channel && occupied(u.profile, now_);
    });
}

std::uint32_t Environment::occupancy_mask() const {
    std::uint32_t mask = 0;
    for (const auto& u : active_) {
        if (occupied(u.profile, now_)) {
            mask |= 1U << u.profile.channel;
        }
    }
    return mask;
}

ContextKey Environment::active_context() const {
    std::vector<ContextMember> members;
    members.reserve(active_.size());
    for (const auto& u : active_) {
        members.push_back({u.ue_id, u.profile.channel});
    }
    return ContextKey(std::move(members));
}

StepOutcome Environment::apply_action(const AgentAction& action) {
    if (action.channel < 0 || action.channel >= channels_) {
        throw Error("action channel " + std::to_string(action.channel) + " outside [0, " +
                    std::to_string(channels_) + ")");
    }
    if (action.k < 0 || action.k > k_max_) {
        throw Error("action length " + std::to_string(action.k) + " outside [0, " + std::to_string(k_max_) + "]");
    }

    const int duration = action.duration();
    const Slot start = now_;
    bool hit = false;
    std::int32_t packet_id = -1;
    if (log_ != nullptr && !action.is_sense()) {
        packet_id = static_cast<std::int32_t>(log_->packets.size());
        log_->packets.push_back({start, action.k, action.channel, false});
    }

    for (int i = 0; i < duration; ++i) {
        hit = hit || busy(action.channel);
        if (log_ != nullptr) {
            log_->occupancy.push_back(occupancy_mask());
            log_->activity.push_back({action.is_sense() ? ActivityKind::Sense : ActivityKind::Transmit,
                                      static_cast<std::uint8_t>(action.channel), packet_id});
        }
        ++now_;
        enter_slot(now_);
    }

    StepOutcome out;
    out.duration = duration;
    if (action.is_sense()) {
        out.observation = hit ? Observation::Busy : Observation::Idle;
    } else if (hit) {
        out.observation = Observation::Collision;
    } else {
        out.observation = Observation::Success;
        out.reward = static_cast<double>(action.k);
    }
    if (log_ != nullptr) {
        if (packet_id >= 0) {
            log_->packets[static_cast<std::size_t>(packet_id)].success = !hit;
        }
        log_->observations.push_back({now_ - 1, out.observation});
    }

    ContextKey current = active_context();
    if (current != announced_) {
        announced_ = current;
        out.announced_context = std::move(current);
    }
    return out;
}

}  // namespace clmac
