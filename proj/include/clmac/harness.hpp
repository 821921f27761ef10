#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "clmac/agent.hpp"
#include "clmac/cl.hpp"
#include "clmac/metrics.hpp"
#include "clmac/scenario.hpp"
#include "clmac/slot_log.hpp"

namespace clmac {

// Everything that determines a run's outputs.
struct RunSpec {
    std::string name = "run";
    ScenarioConfig scenario = Scenario1Config{};
    Slot lifetime = 80000;  // T
    AgentVariant variant = AgentVariant::ClDdql;
    ResetScope reset_scope = ResetScope::HeadsOnly;
    AgentConfig agent;  // channels follow the scenario
    int rounds = 10;
    std::uint64_t seed = 1;
    int workers = 1;  // rounds run concurrently; results do not depend on it
    MetricParams metrics;
    std::optional<std::size_t> snapshot_cap;
    std::optional<std::filesystem::path> snapshot_dir;

    // Fills derived fields (agent.channels, metric k_max) and checks ranges.
    void resolve();
    void validate() const;
};

// Parses a JSON run config. Besides the scenario fields understood by
// parse_config it accepts:
//
//   "name": string,
//   "agent":     { history, k_max, gamma, batch_size, memory_capacity,
//                  target_sync_period, eps_initial, eps_floor, eps_decrement,
//                  lstm_units, dense_units },
//   "optimizer": { kind: "adam" | "sgd", learning_rate, beta1, beta2,
//                  epsilon, clip_norm },
//   "run":       { variant, reset_scope, rounds, seed, workers,
//                  snapshot_cap, snapshot_dir },
//   "metrics":   { window, stride, header, level_fraction, sustain,
//                  tail_fraction, min_windows }
//
// Unknown fields are rejected.
RunSpec parse_run_spec(std::string_view json_text);
// Resolved spec as JSON; parse_run_spec(to_json(s)) reproduces s.
std::string to_json(const RunSpec& spec);

struct Announcement {
    Slot slot = 0;  // clock when the agent learned of the change
    ContextKey key;
    ContextEvent event = ContextEvent::Novel;
};

struct RoundResult {
    int index = 0;
    std::uint64_t seed = 0;
    RoundMetrics metrics;
    std::vector<Announcement> announcements;
    std::size_t contexts_registered = 0;  // |Omega| for the CL variant
    std::uint64_t train_steps = 0;
};

struct IntervalStats {
    std::size_t index = 0;  // position in the context sequence
    Stats start;
    Stats convergence;  // over rounds where a value exists
    std::size_t censored = 0;
    std::size_t absent = 0;
};

struct Aggregates {
    Stats throughput;        // all-time averages
    Stats throughput_multi;  // against the per-channel-radio oracle
    Stats collision;
    Stats convergence;  // per-round mean over contexts with a value
    std::vector<IntervalStats> intervals;
};

struct RunResult {
    RunSpec spec;
    std::vector<RoundResult> rounds;
    Aggregates aggregates;
};

Aggregates aggregate_rounds(std::span<const RoundResult> rounds);

// One simulated round. If `log_out` is given the slot log is moved there.
RoundResult run_round(const RunSpec& spec, int round, SlotLog* log_out = nullptr);

using Progress = std::function<void(int round, int done, int total)>;
RunResult run(RunSpec spec, const Progress& progress = {});

// slot,norm_throughput,collision_rate,epsilon,context_id
std::string round_csv(const RoundResult& round);
std::string summary_json(const RunResult& result);

// Writes round_<i>.csv, summary.json and spec.json into `dir`. Files are
// staged in a sibling directory and moved into place at the end; on failure
// the staging directory is removed and `dir` is left untouched.
void write_bundle(const RunResult& result, const std::filesystem::path& dir);

struct CompareRow {
    std::string name;
    std::string variant;
    Slot lifetime = 0;
    Stats throughput;
    Stats collision;
    Stats convergence;
};

// One row per result; warns on stderr when lifetimes differ.
std::vector<CompareRow> compare(std::span<const RunResult> results);
std::string compare_csv(std::span<const CompareRow> rows);

// Shortest decimal form that reads back to the same double.
std::string format_double(double v);

}  // namespace clmac
