#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <list>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "clmac/agent.hpp"
#include "clmac/env.hpp"

namespace clmac {

enum class AgentVariant { ClDdql, PlainDdql, Random };
enum class ResetScope { Full, HeadsOnly };

const char* to_string(AgentVariant v);
const char* to_string(ResetScope s);
// Accepts "cl-ddql", "plain-ddql", "random" / "full", "heads-only"
// (case-insensitive, '_' and '-' interchangeable).
AgentVariant parse_variant(const std::string& text);
ResetScope parse_reset_scope(const std::string& text);

// Everything an agent needs to resume learning in a context. `decisions`
// (the epsilon clock) is kept for diagnostics only.
struct Snapshot {
    nn::DuelingNet online;
    nn::DuelingNet target;
    nn::OptimizerState optimizer;
    ReplayMemory memory;
    double epsilon = 0.0;
    std::uint64_t decisions = 0;

    bool bit_equal(const Snapshot& other) const;
};

Snapshot capture(const Agent& agent);
// Loads W, W-, optimizer state and replay memory. Epsilon stays unless
// `reload_epsilon` is set.
void restore(Agent& agent, const Snapshot& snap, bool reload_epsilon = false);

// "CLSN" u32 version | u64 decisions | f64 epsilon | u64 len + network bytes
// (online, then target) | optimizer | memory
std::vector<std::byte> serialize(const Snapshot& snap);
Snapshot deserialize_snapshot(std::span<const std::byte> bytes);

std::vector<std::byte> serialize(const ReplayMemory& memory);
ReplayMemory deserialize_memory(std::span<const std::byte> bytes);

struct StoreOptions {
    // Snapshots kept in memory; the least recently used beyond this are
    // written to `spill_dir`. Requires spill_dir when set.
    std::optional<std::size_t> resident_cap;
    std::optional<std::filesystem::path> spill_dir;
};

// Registry of seen contexts (in first-seen order) and their snapshots.
class ContextStore {
public:
    explicit ContextStore(StoreOptions options = {});

    bool seen(const ContextKey& key) const { return index_.contains(key); }
    // Returns false if the key was already registered.
    bool register_key(const ContextKey& key);
    const std::vector<ContextKey>& registry() const { return order_; }
    std::size_t context_count() const { return order_.size(); }

    void put(const ContextKey& key, Snapshot snap);
    bool has_snapshot(const ContextKey& key) const;
    // Copy of the stored snapshot, reading it back from disk if spilled.
    std::optional<Snapshot> get(const ContextKey& key);

    std::size_t resident() const { return resident_.size(); }
    static std::string spill_filename(const ContextKey& key);

private:
    void touch(const ContextKey& key);
    void enforce_cap();

    StoreOptions options_;
    std::vector<ContextKey> order_;
    std::map<ContextKey, std::size_t> index_;
    std::map<ContextKey, Snapshot> resident_;
    std::map<ContextKey, std::filesystem::path> spilled_;
    std::list<ContextKey> lru_;  // front = most recently used
};

void reset_for_new_context(Agent& agent, ResetScope scope);

// Uniform over k in [1, K_max] and c in [0, C); never senses.
AgentAction random_policy(Rng& rng, int k_max, int channels);

enum class ContextEvent { Ignored, Novel, Revisit };

const char* to_string(ContextEvent e);

// Applies the save / reset / reload policy on context announcements.
class ContinualController {
public:
    ContinualController(AgentVariant variant, ResetScope scope, ContextStore* store);

    // Registers the context the agent starts in; the agent is assumed fresh.
    void begin(const ContextKey& initial);
    ContextEvent on_context_announcement(Agent* agent, const ContextKey& phi);

    const ContextKey& current() const { return current_; }
    AgentVariant variant() const { return variant_; }
    ResetScope scope() const { return scope_; }

private:
    AgentVariant variant_;
    ResetScope scope_;
    ContextStore* store_;
    ContextKey current_;
    bool started_ = false;
};

}  // namespace clmac
