#include "clmac/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "clmac/error.hpp"

namespace clmac {

namespace {

// best[t] = max(best[t+1], max over usable (c, k) of (k - header) + best[t+k]),
// with run[c] the number of free slots on c starting at t.
double dp_payload(std::span<const std::uint32_t> occupancy, std::uint32_t channel_mask, int channels, int k_max,
                  double header) {
    const std::size_t n = occupancy.size();
    std::vector<double> best(n + 1, 0.0);
    std::vector<int> run(static_cast<std::size_t>(channels), 0);
    for (std::size_t t = n; t-- > 0;) {
        double b = best[t + 1];
        for (int c = 0; c < channels; ++c) {
            if ((channel_mask >> c & 1U) == 0) {
                continue;
            }
            int& r = run[static_cast<std::size_t>(c)];
            r = (occupancy[t] >> c & 1U) != 0 ? 0 : r + 1;
            const int kk = std::min(r, k_max);
            for (int k = 1; k <= kk; ++k) {
                b = std::max(b, (k - header) + best[t + static_cast<std::size_t>(k)]);
            }
        }
        best[t] = b;
    }
    return best[0];
}

bool in_log(const SlotLog& log, Slot slot, const WindowParams& p) {
    return slot >= p.window && slot <= log.length() && p.window > 0;
}

std::span<const std::uint32_t> window_occupancy(const SlotLog& log, Slot slot, const WindowParams& p) {
    return std::span(log.occupancy).subspan(static_cast<std::size_t>(slot - p.window), static_cast<std::size_t>(p.window));
}

// Payload of successful agent packets lying entirely inside the window.
double window_payload(const SlotLog& log, Slot slot, const WindowParams& p) {
    const Slot from = slot - p.window;
    auto first = std::lower_bound(log.packets.begin(), log.packets.end(), from,
                                  [](const PacketRecord& r, Slot s) { return r.start < s; });
    double payload = 0.0;
    for (auto it = first; it != log.packets.end() && it->start < slot; ++it) {
        if (it->success && it->completion() < slot) {
            payload += it->k - p.header;
        }
    }
    return payload;
}

// 0/0 counts as 1.
double ratio(double payload, double denom) {
    return denom <= 0.0 ? (payload > 0.0 ? 0.0 : 1.0) : payload / denom;
}

double mean_of(std::span<const SeriesPoint> series, Slot from, Slot to, double SeriesPoint::* field, bool* any) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& pt : series) {
        if (pt.slot > from && pt.slot <= to) {
            sum += pt.*field;
            ++n;
        }
    }
    *any = n > 0;
    return n > 0 ? sum / static_cast<double>(n) : 0.0;
}

}  // namespace

double oracle_max_payload(std::span<const std::uint32_t> occupancy, int channels, int k_max, double header) {
    const std::uint32_t all = channels >= 32 ? ~0U : (1U << channels) - 1U;
    return dp_payload(occupancy, all, channels, k_max, header);
}

double oracle_max_payload_multi(std::span<const std::uint32_t> occupancy, int channels, int k_max, double header) {
    double total = 0.0;
    for (int c = 0; c < channels; ++c) {
        total += dp_payload(occupancy, 1U << c, channels, k_max, header);
    }
    return total;
}

void MetricParams::validate() const {
    if (window.window < 1 || stride < 1) {
        throw ConfigError("metrics window and stride must be positive");
    }
    if (window.k_max < 1) {
        throw ConfigError("metrics k_max must be positive");
    }
    if (!(convergence.level_fraction > 0.0 && convergence.level_fraction <= 1.0) ||
        !(convergence.tail_fraction > 0.0 && convergence.tail_fraction <= 1.0) || convergence.sustain < 0 ||
        convergence.min_windows < 1) {
        throw ConfigError("convergence thresholds out of range");
    }
}

std::optional<double> normalized_throughput(const SlotLog& log, Slot slot, const WindowParams& p) {
    if (!in_log(log, slot, p)) {
        return std::nullopt;
    }
    const double denom = oracle_max_payload(window_occupancy(log, slot, p), log.channels, p.k_max, p.header);
    return ratio(window_payload(log, slot, p), denom);
}

std::optional<double> collision_rate(const SlotLog& log, Slot slot, const WindowParams& p) {
    if (!in_log(log, slot, p)) {
        return std::nullopt;
    }
    const Slot from = slot - p.window;
    auto first = std::lower_bound(log.observations.begin(), log.observations.end(), from,
                                  [](const ObservationRecord& r, Slot s) { return r.slot < s; });
    std::size_t total = 0;
    std::size_t hits = 0;
    for (auto it = first; it != log.observations.end() && it->slot < slot; ++it) {
        ++total;
        hits += it->observation == Observation::Collision ? 1 : 0;
    }
    return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

std::vector<ContextInterval> context_intervals(const SlotLog& log) {
    std::vector<ContextInterval> out;
    std::map<ContextKey, int> ids;
    for (std::size_t i = 0; i < log.context_changes.size(); ++i) {
        const auto& ch = log.context_changes[i];
        ContextInterval iv;
        iv.start = ch.slot;
        iv.end = i + 1 < log.context_changes.size() ? log.context_changes[i + 1].slot : log.length();
        iv.key = ch.key;
        auto [it, fresh] = ids.emplace(ch.key, static_cast<int>(ids.size()));
        iv.context_id = it->second;
        iv.revisit = !fresh;
        if (iv.end > iv.start) {
            out.push_back(std::move(iv));
        }
    }
    return out;
}

std::vector<SeriesPoint> compute_series(const SlotLog& log, const MetricParams& p) {
    p.validate();
    const auto intervals = context_intervals(log);
    std::vector<SeriesPoint> out;
    std::size_t ctx = 0;
    std::size_t eps = 0;
    for (Slot s = p.window.window; s <= log.length(); s += p.stride) {
        SeriesPoint pt;
        pt.slot = s;
        const auto occ = window_occupancy(log, s, p.window);
        const double payload = window_payload(log, s, p.window);
        pt.throughput = ratio(payload, oracle_max_payload(occ, log.channels, p.window.k_max, p.window.header));
        pt.throughput_multi =
            ratio(payload, oracle_max_payload_multi(occ, log.channels, p.window.k_max, p.window.header));
        pt.collision_rate = *collision_rate(log, s, p.window);
        while (eps < log.epsilons.size() && log.epsilons[eps].slot < s) {
            ++eps;
        }
        if (eps > 0) {
            pt.epsilon = log.epsilons[eps - 1].epsilon;
        }
        while (ctx + 1 < intervals.size() && intervals[ctx + 1].start <= s - 1) {
            ++ctx;
        }
        pt.context_id = intervals.empty() ? 0 : intervals[ctx].context_id;
        out.push_back(pt);
    }
    return out;
}

Convergence convergence_time(std::span<const SeriesPoint> series, Slot start, Slot end, const MetricParams& p) {
    Convergence out;
    const Slot length = end - start;
    if (length < static_cast<Slot>(p.convergence.min_windows) * p.window.window) {
        out.too_short = true;
        return out;
    }
    const double tail_from = static_cast<double>(end) - p.convergence.tail_fraction * static_cast<double>(length);
    double sum = 0.0;
    std::size_t n = 0;
    std::vector<const SeriesPoint*> inside;
    for (const auto& pt : series) {
        if (pt.slot >= start && pt.slot <= end) {
            inside.push_back(&pt);
            if (static_cast<double>(pt.slot) >= tail_from) {
                sum += pt.throughput;
                ++n;
            }
        }
    }
    if (n == 0) {
        out.too_short = true;
        return out;
    }
    const double threshold = p.convergence.level_fraction * (sum / static_cast<double>(n));
    // next_below[i]: slot of the first point at or after i under threshold
    constexpr Slot kNever = std::numeric_limits<Slot>::max();
    std::vector<Slot> next_below(inside.size() + 1, kNever);
    for (std::size_t i = inside.size(); i-- > 0;) {
        next_below[i] = inside[i]->throughput >= threshold ? next_below[i + 1] : inside[i]->slot;
    }
    std::optional<Slot> found;
    for (std::size_t i = 0; i < inside.size(); ++i) {
        const Slot s = inside[i]->slot;
        if (s + p.convergence.sustain > end) {
            break;
        }
        if (next_below[i] > s + p.convergence.sustain) {
            found = s - start;
            break;
        }
    }
    if (found) {
        out.value = found;
    } else {
        out.value = length;
        out.censored = true;
    }
    return out;
}

RoundMetrics compute_round_metrics(const SlotLog& log, const MetricParams& p) {
    RoundMetrics m;
    m.series = compute_series(log, p);
    m.contexts = context_intervals(log);
    for (auto& iv : m.contexts) {
        const Convergence c = convergence_time(m.series, iv.start, iv.end, p);
        iv.convergence = c.value;
        iv.censored = c.censored;
        iv.too_short = c.too_short;
    }
    if (!m.series.empty()) {
        for (const auto& pt : m.series) {
            m.mean_throughput += pt.throughput;
            m.mean_throughput_multi += pt.throughput_multi;
            m.mean_collision += pt.collision_rate;
        }
        const double n = static_cast<double>(m.series.size());
        m.mean_throughput /= n;
        m.mean_throughput_multi /= n;
        m.mean_collision /= n;
    }
    return m;
}

std::optional<double> mean_throughput_between(std::span<const SeriesPoint> series, Slot from, Slot to) {
    bool any = false;
    const double v = mean_of(series, from, to, &SeriesPoint::throughput, &any);
    return any ? std::optional<double>(v) : std::nullopt;
}

std::optional<double> mean_collision_between(std::span<const SeriesPoint> series, Slot from, Slot to) {
    bool any = false;
    const double v = mean_of(series, from, to, &SeriesPoint::collision_rate, &any);
    return any ? std::optional<double>(v) : std::nullopt;
}

Stats summarize(std::span<const double> values) {
    Stats s;
    s.n = values.size();
    if (values.empty()) {
        return s;
    }
    // summed in sorted order so the result does not depend on round order
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    double sum = 0.0;
    for (double v : sorted) {
        sum += v;
    }
    s.mean = sum / static_cast<double>(s.n);
    if (s.n > 1) {
        double ss = 0.0;
        for (double v : sorted) {
            ss += (v - s.mean) * (v - s.mean);
        }
        s.std = std::sqrt(ss / static_cast<double>(s.n - 1));
    }
    return s;
}

}  // namespace clmac
