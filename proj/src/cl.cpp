#include "clmac/cl.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>

#include "clmac/error.hpp"
#include "clmac/serialize.hpp"

namespace clmac {

namespace {

constexpr std::uint32_t kSnapMagic = 0x4e534c43;  // "CLSN"
constexpr std::uint32_t kMemMagic = 0x4d524c43;   // "CLRM"
constexpr std::uint32_t kVersion = 1;

std::string normalize(std::string text) {
    for (char& ch : text) {
        ch = ch == '_' ? '-' : static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    }
    return text;
}

void write_blob(ByteWriter& w, const std::vector<std::byte>& blob) {
    w.u64(blob.size());
    w.raw(blob);
}

std::span<const std::byte> read_blob(ByteReader& r) {
    const std::uint64_t n = r.u64();
    if (n > r.remaining()) {
        throw Error("snapshot blob: truncated section");
    }
    return r.raw(static_cast<std::size_t>(n));
}

void write_doubles(ByteWriter& w, const std::vector<double>& v) {
    w.u64(v.size());
    w.f64s(v);
}

std::vector<double> read_doubles(ByteReader& r) {
    const std::uint64_t n = r.u64();
    if (n > r.remaining() / 8) {
        throw Error("snapshot blob: truncated vector");
    }
    std::vector<double> v(static_cast<std::size_t>(n));
    r.f64s(v);
    return v;
}

const nn::Layer kAllLayers[] = {nn::Layer::Lstm, nn::Layer::Shared, nn::Layer::Value, nn::Layer::Advantage};
const nn::Layer kHeadLayers[] = {nn::Layer::Shared, nn::Layer::Value, nn::Layer::Advantage};

}  // namespace

const char* to_string(AgentVariant v) {
    switch (v) {
        case AgentVariant::ClDdql: return "cl-ddql";
        case AgentVariant::PlainDdql: return "plain-ddql";
        case AgentVariant::Random: return "random";
    }
    return "?";
}

const char* to_string(ResetScope s) {
    return s == ResetScope::Full ? "full" : "heads-only";
}

const char* to_string(ContextEvent e) {
    switch (e) {
        case ContextEvent::Ignored: return "ignored";
        case ContextEvent::Novel: return "novel";
        case ContextEvent::Revisit: return "revisit";
    }
    return "?";
}

AgentVariant parse_variant(const std::string& text) {
    const std::string t = normalize(text);
    if (t == "cl-ddql") {
        return AgentVariant::ClDdql;
    }
    if (t == "plain-ddql" || t == "ddql") {
        return AgentVariant::PlainDdql;
    }
    if (t == "random") {
        return AgentVariant::Random;
    }
    throw ConfigError("unknown agent variant '" + text + "' (expected cl-ddql, plain-ddql or random)");
}

ResetScope parse_reset_scope(const std::string& text) {
    const std::string t = normalize(text);
    if (t == "full") {
        return ResetScope::Full;
    }
    if (t == "heads-only") {
        return ResetScope::HeadsOnly;
    }
    throw ConfigError("unknown reset scope '" + text + "' (expected full or heads-only)");
}

bool Snapshot::bit_equal(const Snapshot& other) const {
    return online.bit_equal(other.online) && target.bit_equal(other.target) && optimizer.bit_equal(other.optimizer) &&
           memory == other.memory && decisions == other.decisions &&
           std::bit_cast<std::uint64_t>(epsilon) == std::bit_cast<std::uint64_t>(other.epsilon);
}

Snapshot capture(const Agent& agent) {
    return Snapshot{agent.online(), agent.target(), agent.optimizer_state(), agent.memory(), agent.epsilon(),
                    agent.decisions_since_reset()};
}

void restore(Agent& agent, const Snapshot& snap, bool reload_epsilon) {
    if (!(snap.online.shape() == agent.online().shape()) || !(snap.target.shape() == agent.target().shape())) {
        throw Error("snapshot network shape does not match the agent");
    }
    if (snap.memory.capacity() != agent.memory().capacity()) {
        throw Error("snapshot memory capacity does not match the agent");
    }
    agent.online() = snap.online;
    agent.target() = snap.target;
    agent.optimizer_state() = snap.optimizer;
    agent.memory() = snap.memory;
    if (reload_epsilon) {
        agent.set_decisions_since_reset(snap.decisions);
    }
}

std::vector<std::byte> serialize(const ReplayMemory& memory) {
    ByteWriter w;
    w.u32(kMemMagic);
    w.u32(kVersion);
    w.u32(static_cast<std::uint32_t>(memory.capacity()));
    w.u32(static_cast<std::uint32_t>(memory.size()));
    for (std::size_t i = 0; i < memory.size(); ++i) {
        const Experience& e = memory.at(i);
        w.u16(static_cast<std::uint16_t>(e.window.size()));
        for (const HistoryEntry& h : e.window) {
            w.u8(static_cast<std::uint8_t>(h.observation));
            w.u8(h.k);
            w.u8(h.channel);
        }
        w.i32(e.action.k);
        w.i32(e.action.channel);
        w.f64(e.reward);
        w.i32(e.duration);
    }
    return w.take();
}

ReplayMemory deserialize_memory(std::span<const std::byte> bytes) {
    ByteReader r(bytes);
    if (r.u32() != kMemMagic) {
        throw Error("replay memory blob: bad magic");
    }
    if (r.u32() != kVersion) {
        throw Error("replay memory blob: unsupported version");
    }
    const std::uint32_t cap = r.u32();
    const std::uint32_t count = r.u32();
    if (cap == 0 || count > cap || cap > 0x7fffffffU) {
        throw Error("replay memory blob: bad size fields");
    }
    ReplayMemory mem(static_cast<int>(cap));
    for (std::uint32_t i = 0; i < count; ++i) {
        Experience e;
        const std::uint16_t len = r.u16();
        if (len < 2) {
            throw Error("replay memory blob: experience window too short");
        }
        e.window.resize(len);
        for (HistoryEntry& h : e.window) {
            const std::uint8_t obs = r.u8();
            if (obs >= kObservationKinds) {
                throw Error("replay memory blob: bad observation code");
            }
            h.observation = static_cast<Observation>(obs);
            h.k = r.u8();
            h.channel = r.u8();
        }
        e.action.k = r.i32();
        e.action.channel = r.i32();
        e.reward = r.f64();
        e.duration = r.i32();
        mem.push(std::move(e));
    }
    if (!r.done()) {
        throw Error("replay memory blob: trailing bytes");
    }
    return mem;
}

std::vector<std::byte> serialize(const Snapshot& snap) {
    ByteWriter w;
    w.u32(kSnapMagic);
    w.u32(kVersion);
    w.u64(snap.decisions);
    w.f64(snap.epsilon);
    write_blob(w, nn::serialize(snap.online));
    write_blob(w, nn::serialize(snap.target));
    w.u64(snap.optimizer.steps);
    write_doubles(w, snap.optimizer.m);
    write_doubles(w, snap.optimizer.v);
    write_blob(w, serialize(snap.memory));
    return w.take();
}

Snapshot deserialize_snapshot(std::span<const std::byte> bytes) {
    ByteReader r(bytes);
    if (r.u32() != kSnapMagic) {
        throw Error("snapshot blob: bad magic");
    }
    if (r.u32() != kVersion) {
        throw Error("snapshot blob: unsupported version");
    }
    const std::uint64_t decisions = r.u64();
    const double epsilon = r.f64();
    nn::DuelingNet online = nn::deserialize(read_blob(r));
    nn::DuelingNet target = nn::deserialize(read_blob(r));
    nn::OptimizerState opt;
    opt.steps = r.u64();
    opt.m = read_doubles(r);
    opt.v = read_doubles(r);
    ReplayMemory mem = deserialize_memory(read_blob(r));
    if (!r.done()) {
        throw Error("snapshot blob: trailing bytes");
    }
    return Snapshot{std::move(online), std::move(target), std::move(opt), std::move(mem), epsilon, decisions};
}

ContextStore::ContextStore(StoreOptions options) : options_(std::move(options)) {
    if (options_.resident_cap && !options_.spill_dir) {
        throw ConfigError("a resident snapshot cap needs a spill directory");
    }
    if (options_.spill_dir) {
        std::filesystem::create_directories(*options_.spill_dir);
    }
}

bool ContextStore::register_key(const ContextKey& key) {
    if (seen(key)) {
        return false;
    }
    index_.emplace(key, order_.size());
    order_.push_back(key);
    return true;
}

std::string ContextStore::spill_filename(const ContextKey& key) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx.snap", static_cast<unsigned long long>(key.stable_hash()));
    return buf;
}

void ContextStore::touch(const ContextKey& key) {
    lru_.remove(key);
    lru_.push_front(key);
}

void ContextStore::put(const ContextKey& key, Snapshot snap) {
    register_key(key);
    spilled_.erase(key);
    resident_.insert_or_assign(key, std::move(snap));
    touch(key);
    enforce_cap();
}

bool ContextStore::has_snapshot(const ContextKey& key) const {
    return resident_.contains(key) || spilled_.contains(key);
}

std::optional<Snapshot> ContextStore::get(const ContextKey& key) {
    if (auto it = resident_.find(key); it != resident_.end()) {
        touch(key);
        return it->second;
    }
    auto sp = spilled_.find(key);
    if (sp == spilled_.end()) {
        return std::nullopt;
    }
    std::ifstream in(sp->second, std::ios::binary);
    if (!in) {
        throw Error("cannot read snapshot file " + sp->second.string());
    }
    std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Snapshot snap = deserialize_snapshot(std::as_bytes(std::span<const char>(raw)));
    spilled_.erase(sp);
    resident_.insert_or_assign(key, snap);
    touch(key);
    enforce_cap();
    return snap;
}

void ContextStore::enforce_cap() {
    if (!options_.resident_cap) {
        return;
    }
    while (resident_.size() > *options_.resident_cap && !lru_.empty()) {
        const ContextKey victim = lru_.back();
        lru_.pop_back();
        auto it = resident_.find(victim);
        if (it == resident_.end()) {
            continue;
        }
        const auto path = *options_.spill_dir / spill_filename(victim);
        const auto bytes = serialize(it->second);
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            throw Error("cannot write snapshot file " + path.string());
        }
        spilled_.insert_or_assign(victim, path);
        resident_.erase(it);
    }
}

void reset_for_new_context(Agent& agent, ResetScope scope) {
    if (scope == ResetScope::Full) {
        agent.reset(kAllLayers);
    } else {
        agent.reset(kHeadLayers);
    }
}

AgentAction random_policy(Rng& rng, int k_max, int channels) {
    const auto pick = rng.below(static_cast<std::uint64_t>(k_max) * static_cast<std::uint64_t>(channels));
    return {1 + static_cast<int>(pick / static_cast<std::uint64_t>(channels)),
            static_cast<int>(pick % static_cast<std::uint64_t>(channels))};
}

ContinualController::ContinualController(AgentVariant variant, ResetScope scope, ContextStore* store)
    : variant_(variant), scope_(scope), store_(store) {
    if (variant_ == AgentVariant::ClDdql && store_ == nullptr) {
        throw Error("the continual-learning variant needs a context store");
    }
}

void ContinualController::begin(const ContextKey& initial) {
    current_ = initial;
    started_ = true;
    if (variant_ == AgentVariant::ClDdql) {
        store_->register_key(initial);
    }
}

ContextEvent ContinualController::on_context_announcement(Agent* agent, const ContextKey& phi) {
    if (!started_) {
        begin(phi);
        return ContextEvent::Novel;
    }
    if (phi == current_) {
        std::cerr << "warning: context " << phi.to_string() << " announced while already current; ignored\n";
        return ContextEvent::Ignored;
    }
    const ContextKey previous = current_;
    current_ = phi;
    switch (variant_) {
        case AgentVariant::Random:
            return ContextEvent::Novel;
        case AgentVariant::PlainDdql:
            reset_for_new_context(*agent, scope_);
            return ContextEvent::Novel;
        case AgentVariant::ClDdql:
            break;
    }
    store_->put(previous, capture(*agent));
    if (store_->seen(phi)) {
        if (auto snap = store_->get(phi)) {
            restore(*agent, *snap);
            return ContextEvent::Revisit;
        }
    }
    store_->register_key(phi);
    reset_for_new_context(*agent, scope_);
    return ContextEvent::Novel;
}

}  // namespace clmac
