#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "clmac/env.hpp"
#include "clmac/slot_log.hpp"

namespace clmac {

// Best total payload, sum of (k - header) over packets, that one radio can
// deliver in the window: packets never overlap in time, each sits on a
// single channel whose slots are all UE-free. `occupancy` holds one bitmask
// per slot.
double oracle_max_payload(std::span<const std::uint32_t> occupancy, int channels, int k_max, double header = 0.5);
// Sum over channels of the single-channel optimum, as if one radio per
// channel were available.
double oracle_max_payload_multi(std::span<const std::uint32_t> occupancy, int channels, int k_max,
                                double header = 0.5);

struct WindowParams {
    int window = 1000;
    int k_max = 10;
    double header = 0.5;
};

// Both use the window [slot - window, slot). Absent when slot < window or
// slot exceeds the log.
//
// Throughput counts successful agent packets lying entirely inside the
// window, so the numerator is always a feasible schedule for the oracle.
// 0/0 is 1.
std::optional<double> normalized_throughput(const SlotLog& log, Slot slot, const WindowParams& p);
std::optional<double> collision_rate(const SlotLog& log, Slot slot, const WindowParams& p);

struct SeriesPoint {
    Slot slot = 0;  // window end (exclusive)
    double throughput = 0.0;
    double throughput_multi = 0.0;  // against the per-channel-radio oracle
    double collision_rate = 0.0;
    std::optional<double> epsilon;  // at the last decision before `slot`
    int context_id = 0;             // context active in slot - 1
};

struct ConvergenceParams {
    double level_fraction = 0.9;  // threshold relative to the steady level
    Slot sustain = 1000;          // slots the threshold must hold
    double tail_fraction = 0.2;   // share of the interval defining the steady level
    int min_windows = 5;          // shorter contexts get no value
};

struct MetricParams {
    WindowParams window;
    int stride = 100;
    ConvergenceParams convergence;

    void validate() const;
};

struct ContextInterval {
    Slot start = 0;
    Slot end = 0;  // exclusive
    ContextKey key;
    int context_id = 0;    // first-seen order within the run
    bool revisit = false;  // key seen in an earlier interval
    std::optional<Slot> convergence;
    bool censored = false;   // never reached steady state; convergence = length
    bool too_short = false;  // below min_windows; no convergence value
};

struct RoundMetrics {
    std::vector<SeriesPoint> series;
    std::vector<ContextInterval> contexts;
    double mean_throughput = 0.0;  // all-time averages over the series
    double mean_throughput_multi = 0.0;
    double mean_collision = 0.0;
};

// Points at slot = window, window + stride, ... up to the log length.
std::vector<SeriesPoint> compute_series(const SlotLog& log, const MetricParams& p);
std::vector<ContextInterval> context_intervals(const SlotLog& log);

// Steady level L = mean throughput over points in the final tail_fraction of
// [start, end]; the result is the first point s in [start, end] with
// throughput >= level_fraction * L at every point of [s, s + sustain], minus
// start. Points must lie within the interval. Censored results return the
// interval length with `censored` set.
struct Convergence {
    std::optional<Slot> value;
    bool censored = false;
    bool too_short = false;
};
Convergence convergence_time(std::span<const SeriesPoint> series, Slot start, Slot end, const MetricParams& p);

RoundMetrics compute_round_metrics(const SlotLog& log, const MetricParams& p);

// Mean over points whose slot lies in (from, to].
std::optional<double> mean_throughput_between(std::span<const SeriesPoint> series, Slot from, Slot to);
std::optional<double> mean_collision_between(std::span<const SeriesPoint> series, Slot from, Slot to);

struct Stats {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation; 0 for one value
    std::size_t n = 0;
};

Stats summarize(std::span<const double> values);

}  // namespace clmac
