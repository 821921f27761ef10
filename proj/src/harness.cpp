#include "clmac/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <exception>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "clmac/error.hpp"
#include "json_fields.hpp"

namespace clmac {

namespace {

using detail::Json;
using OJson = nlohmann::ordered_json;

struct ScenarioName {
    const char* operator()(const Scenario1Config&) const { return "scenario1"; }
    const char* operator()(const Scenario2Params&) const { return "scenario2"; }
    const char* operator()(const CustomScenario&) const { return "custom"; }
};

OJson range_json(const IntRange& r) {
    return OJson::array({r.lo, r.hi});
}

OJson stats_json(const Stats& s) {
    OJson j;
    j["mean"] = s.mean;
    j["std"] = s.std;
    j["n"] = s.n;
    return j;
}

void parse_agent(const Json* s, AgentConfig& a) {
    if (s == nullptr) {
        return;
    }
    const std::string path = "agent";
    detail::reject_unknown(*s, path,
                           {"history", "k_max", "gamma", "batch_size", "memory_capacity", "target_sync_period",
                            "eps_initial", "eps_floor", "eps_decrement", "lstm_units", "dense_units"});
    a.history = static_cast<int>(detail::read_int(*s, path, "history", a.history));
    a.k_max = static_cast<int>(detail::read_int(*s, path, "k_max", a.k_max));
    a.gamma = detail::read_number(*s, path, "gamma", a.gamma);
    a.batch_size = static_cast<int>(detail::read_int(*s, path, "batch_size", a.batch_size));
    a.memory_capacity = static_cast<int>(detail::read_int(*s, path, "memory_capacity", a.memory_capacity));
    a.target_sync_period = static_cast<int>(detail::read_int(*s, path, "target_sync_period", a.target_sync_period));
    a.eps_initial = detail::read_number(*s, path, "eps_initial", a.eps_initial);
    a.eps_floor = detail::read_number(*s, path, "eps_floor", a.eps_floor);
    a.eps_decrement = detail::read_number(*s, path, "eps_decrement", a.eps_decrement);
    a.lstm_units = static_cast<int>(detail::read_int(*s, path, "lstm_units", a.lstm_units));
    a.dense_units = static_cast<int>(detail::read_int(*s, path, "dense_units", a.dense_units));
}

void parse_optimizer(const Json* s, nn::OptimizerConfig& o) {
    if (s == nullptr) {
        return;
    }
    const std::string path = "optimizer";
    detail::reject_unknown(*s, path, {"kind", "learning_rate", "beta1", "beta2", "epsilon", "clip_norm"});
    const std::string kind = detail::read_string(*s, path, "kind", "adam");
    if (kind == "adam") {
        o.kind = nn::OptimizerKind::Adam;
    } else if (kind == "sgd") {
        o.kind = nn::OptimizerKind::Sgd;
    } else {
        throw ConfigError("optimizer.kind: expected \"adam\" or \"sgd\"");
    }
    o.learning_rate = detail::read_number(*s, path, "learning_rate", o.learning_rate);
    o.beta1 = detail::read_number(*s, path, "beta1", o.beta1);
    o.beta2 = detail::read_number(*s, path, "beta2", o.beta2);
    o.epsilon = detail::read_number(*s, path, "epsilon", o.epsilon);
    if (s->contains("clip_norm") && !s->at("clip_norm").is_null()) {
        o.clip_norm = detail::read_number(*s, path, "clip_norm", 0.0);
    }
}

void parse_run(const Json* s, RunSpec& r) {
    if (s == nullptr) {
        return;
    }
    const std::string path = "run";
    detail::reject_unknown(*s, path,
                           {"variant", "reset_scope", "rounds", "seed", "workers", "snapshot_cap", "snapshot_dir"});
    try {
        r.variant = parse_variant(detail::read_string(*s, path, "variant", to_string(r.variant)));
        r.reset_scope = parse_reset_scope(detail::read_string(*s, path, "reset_scope", to_string(r.reset_scope)));
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("run: ") + e.what());
    }
    r.rounds = static_cast<int>(detail::read_int(*s, path, "rounds", r.rounds));
    const long long seed = detail::read_int(*s, path, "seed", static_cast<long long>(r.seed));
    if (seed < 0) {
        throw ConfigError("run.seed: must be non-negative");
    }
    r.seed = static_cast<std::uint64_t>(seed);
    r.workers = static_cast<int>(detail::read_int(*s, path, "workers", r.workers));
    if (s->contains("snapshot_cap") && !s->at("snapshot_cap").is_null()) {
        const long long cap = detail::read_int(*s, path, "snapshot_cap", 0);
        if (cap < 1) {
            throw ConfigError("run.snapshot_cap: must be positive");
        }
        r.snapshot_cap = static_cast<std::size_t>(cap);
    }
    if (s->contains("snapshot_dir") && !s->at("snapshot_dir").is_null()) {
        r.snapshot_dir = detail::read_string(*s, path, "snapshot_dir", "");
    }
}

void parse_metrics(const Json* s, MetricParams& m) {
    if (s == nullptr) {
        return;
    }
    const std::string path = "metrics";
    detail::reject_unknown(*s, path,
                           {"window", "stride", "header", "level_fraction", "sustain", "tail_fraction", "min_windows"});
    m.window.window = static_cast<int>(detail::read_int(*s, path, "window", m.window.window));
    m.stride = static_cast<int>(detail::read_int(*s, path, "stride", m.stride));
    m.window.header = detail::read_number(*s, path, "header", m.window.header);
    m.convergence.level_fraction = detail::read_number(*s, path, "level_fraction", m.convergence.level_fraction);
    m.convergence.sustain = detail::read_int(*s, path, "sustain", m.convergence.sustain);
    m.convergence.tail_fraction = detail::read_number(*s, path, "tail_fraction", m.convergence.tail_fraction);
    m.convergence.min_windows = static_cast<int>(detail::read_int(*s, path, "min_windows", m.convergence.min_windows));
}

void scenario_json(const RunSpec& spec, OJson& root) {
    if (const auto* s2 = std::get_if<Scenario2Params>(&spec.scenario)) {
        OJson j;
        j["channels"] = s2->channels;
        j["beta_slots"] = s2->beta;
        j["novelty_prob"] = s2->novelty_prob;
        j["k_range"] = range_json(s2->k_range);
        j["offset_range"] = range_json(s2->offset_range);
        j["frame_range"] = range_json(s2->frame_range);
        j["channel_draw"] = s2->channel_draw == ChannelDraw::Vacated ? "vacated" : "uniform";
        j["seed"] = s2->seed;
        root["scenario2"] = j;
    } else if (const auto* c = std::get_if<CustomScenario>(&spec.scenario)) {
        OJson j;
        j["channels"] = c->channels;
        OJson ues = OJson::array();
        for (const auto& inst : c->instances) {
            OJson u;
            u["id"] = inst.ue_id;
            u["k"] = inst.profile.k;
            u["offset"] = inst.profile.offset;
            u["frame"] = inst.profile.frame;
            u["channel"] = inst.profile.channel;
            OJson until = inst.active_until ? OJson(*inst.active_until) : OJson(nullptr);
            u["intervals"] = OJson::array({OJson::array({inst.active_from, until})});
            ues.push_back(u);
        }
        j["ues"] = ues;
        root["custom"] = j;
    }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    out.flush();
    if (!out) {
        throw Error("cannot write " + path.string());
    }
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

void RunSpec::resolve() {
    agent.channels = scenario_channels(scenario);
    metrics.window.k_max = agent.k_max;
    if (auto* s1 = std::get_if<Scenario1Config>(&scenario)) {
        s1->lifetime = lifetime;
    }
}

void RunSpec::validate() const {
    if (lifetime < 1) {
        throw ConfigError("T must be positive");
    }
    if (std::holds_alternative<Scenario1Config>(scenario) && lifetime % 4 != 0) {
        throw ConfigError("T: scenario1 needs a multiple of 4");
    }
    if (const auto* s2 = std::get_if<Scenario2Params>(&scenario)) {
        s2->validate(agent.k_max);
    }
    if (const auto* c = std::get_if<CustomScenario>(&scenario)) {
        for (const auto& inst : c->instances) {
            inst.profile.validate(c->channels, agent.k_max);
        }
    }
    if (rounds < 1) {
        throw ConfigError("rounds must be at least 1");
    }
    if (workers < 1) {
        throw ConfigError("workers must be at least 1");
    }
    if (snapshot_cap && !snapshot_dir) {
        throw ConfigError("snapshot_cap needs snapshot_dir");
    }
    agent.validate();
    metrics.validate();
}

RunSpec parse_run_spec(std::string_view json_text) {
    const Json doc = detail::parse_document(json_text);
    detail::reject_unknown(doc, "",
                           {"name", "scenario", "T", "scenario2", "custom", "agent", "optimizer", "run", "metrics"});
    ParsedScenario parsed = parse_config(json_text);
    RunSpec spec;
    spec.name = detail::read_string(doc, "", "name", spec.name);
    spec.scenario = std::move(parsed.scenario);
    spec.lifetime = parsed.lifetime;
    parse_agent(detail::section(doc, "", "agent"), spec.agent);
    parse_optimizer(detail::section(doc, "", "optimizer"), spec.agent.optimizer);
    parse_run(detail::section(doc, "", "run"), spec);
    parse_metrics(detail::section(doc, "", "metrics"), spec.metrics);
    spec.resolve();
    spec.validate();
    return spec;
}

std::string to_json(const RunSpec& spec) {
    OJson root;
    root["name"] = spec.name;
    root["scenario"] = std::visit(ScenarioName{}, spec.scenario);
    root["T"] = spec.lifetime;
    scenario_json(spec, root);

    const AgentConfig& a = spec.agent;
    OJson agent;
    agent["history"] = a.history;
    agent["k_max"] = a.k_max;
    agent["gamma"] = a.gamma;
    agent["batch_size"] = a.batch_size;
    agent["memory_capacity"] = a.memory_capacity;
    agent["target_sync_period"] = a.target_sync_period;
    agent["eps_initial"] = a.eps_initial;
    agent["eps_floor"] = a.eps_floor;
    agent["eps_decrement"] = a.eps_decrement;
    agent["lstm_units"] = a.lstm_units;
    agent["dense_units"] = a.dense_units;
    root["agent"] = agent;

    const nn::OptimizerConfig& o = a.optimizer;
    OJson opt;
    opt["kind"] = o.kind == nn::OptimizerKind::Adam ? "adam" : "sgd";
    opt["learning_rate"] = o.learning_rate;
    opt["beta1"] = o.beta1;
    opt["beta2"] = o.beta2;
    opt["epsilon"] = o.epsilon;
    opt["clip_norm"] = o.clip_norm ? OJson(*o.clip_norm) : OJson(nullptr);
    root["optimizer"] = opt;

    OJson run;
    run["variant"] = to_string(spec.variant);
    run["reset_scope"] = to_string(spec.reset_scope);
    run["rounds"] = spec.rounds;
    run["seed"] = spec.seed;
    run["workers"] = spec.workers;
    run["snapshot_cap"] = spec.snapshot_cap ? OJson(*spec.snapshot_cap) : OJson(nullptr);
    run["snapshot_dir"] = spec.snapshot_dir ? OJson(spec.snapshot_dir->string()) : OJson(nullptr);
    root["run"] = run;

    const MetricParams& m = spec.metrics;
    OJson met;
    met["window"] = m.window.window;
    met["stride"] = m.stride;
    met["header"] = m.window.header;
    met["level_fraction"] = m.convergence.level_fraction;
    met["sustain"] = m.convergence.sustain;
    met["tail_fraction"] = m.convergence.tail_fraction;
    met["min_windows"] = m.convergence.min_windows;
    root["metrics"] = met;
    return root.dump(2) + "\n";
}

RoundResult run_round(const RunSpec& spec, int round, SlotLog* log_out) {
    RoundResult out;
    out.index = round;
    out.seed = spec.seed + static_cast<std::uint64_t>(round);

    const int channels = spec.agent.channels;
    const int k_max = spec.agent.k_max;
    SlotLog log;
    log.channels = channels;
    log.occupancy.reserve(static_cast<std::size_t>(spec.lifetime + k_max));
    log.activity.reserve(static_cast<std::size_t>(spec.lifetime + k_max));
    Environment env(channels, k_max, make_source(spec.scenario, spec.lifetime, k_max, mix_seed(out.seed, 1)), &log);

    const bool learning = spec.variant != AgentVariant::Random;
    std::optional<Agent> agent;
    if (learning) {
        agent.emplace(spec.agent, mix_seed(out.seed, 2));
    }
    Rng random_rng(mix_seed(out.seed, 3));

    StoreOptions store_opts;
    store_opts.resident_cap = spec.snapshot_cap;
    if (spec.snapshot_dir) {
        store_opts.spill_dir = *spec.snapshot_dir / ("round_" + std::to_string(round));
    }
    std::optional<ContextStore> store;
    if (spec.variant == AgentVariant::ClDdql) {
        store.emplace(store_opts);
    }
    ContinualController controller(spec.variant, spec.reset_scope, store ? &*store : nullptr);
    controller.begin(env.announced());
    out.announcements.push_back({0, env.announced(), ContextEvent::Novel});

    while (env.now() < spec.lifetime) {
        AgentAction action;
        if (learning) {
            log.epsilons.push_back({env.now(), agent->epsilon()});
            action = agent->select_action();
        } else {
            log.epsilons.push_back({env.now(), 1.0});
            action = random_policy(random_rng, k_max, channels);
        }
        const StepOutcome outcome = env.apply_action(action);
        if (learning) {
            agent->record_experience(action, outcome);
            for (int i = 0; i < outcome.duration; ++i) {
                if (agent->train_step()) {
                    ++out.train_steps;
                }
            }
        }
        // Changes reported once the lifetime is over have no effect.
        if (outcome.announced_context && env.now() < spec.lifetime) {
            const ContextEvent ev = controller.on_context_announcement(agent ? &*agent : nullptr,
                                                                       *outcome.announced_context);
            out.announcements.push_back({env.now(), *outcome.announced_context, ev});
        }
    }

    // The last action may run past T; metrics cover [0, T).
    const auto t = static_cast<std::size_t>(spec.lifetime);
    log.occupancy.resize(t);
    log.activity.resize(t);
    std::erase_if(log.observations, [&](const ObservationRecord& r) { return r.slot >= spec.lifetime; });
    std::erase_if(log.context_changes, [&](const ContextChange& c) { return c.slot >= spec.lifetime; });

    out.metrics = compute_round_metrics(log, spec.metrics);
    out.contexts_registered = store ? store->context_count() : 0;
    if (log_out != nullptr) {
        *log_out = std::move(log);
    }
    return out;
}

Aggregates aggregate_rounds(std::span<const RoundResult> rounds) {
    Aggregates agg;
    std::vector<double> tp, tpm, col, conv;
    std::size_t max_intervals = 0;
    for (const auto& r : rounds) {
        tp.push_back(r.metrics.mean_throughput);
        tpm.push_back(r.metrics.mean_throughput_multi);
        col.push_back(r.metrics.mean_collision);
        std::vector<double> values;
        for (const auto& iv : r.metrics.contexts) {
            if (iv.convergence) {
                values.push_back(static_cast<double>(*iv.convergence));
            }
        }
        if (!values.empty()) {
            conv.push_back(summarize(values).mean);
        }
        max_intervals = std::max(max_intervals, r.metrics.contexts.size());
    }
    agg.throughput = summarize(tp);
    agg.throughput_multi = summarize(tpm);
    agg.collision = summarize(col);
    agg.convergence = summarize(conv);
    for (std::size_t i = 0; i < max_intervals; ++i) {
        IntervalStats is;
        is.index = i;
        std::vector<double> starts, values;
        for (const auto& r : rounds) {
            if (i >= r.metrics.contexts.size()) {
                continue;
            }
            const auto& iv = r.metrics.contexts[i];
            starts.push_back(static_cast<double>(iv.start));
            if (iv.convergence) {
                values.push_back(static_cast<double>(*iv.convergence));
                is.censored += iv.censored ? 1 : 0;
            } else {
                ++is.absent;
            }
        }
        is.start = summarize(starts);
        is.convergence = summarize(values);
        agg.intervals.push_back(is);
    }
    return agg;
}

RunResult run(RunSpec spec, const Progress& progress) {
    spec.resolve();
    spec.validate();
    RunResult result;
    result.spec = spec;
    result.rounds.resize(static_cast<std::size_t>(spec.rounds));

    std::atomic<int> next{0};
    std::atomic<int> done{0};
    std::mutex mu;
    std::exception_ptr failure;
    auto worker = [&] {
        for (;;) {
            const int r = next.fetch_add(1);
            if (r >= spec.rounds) {
                return;
            }
            {
                std::lock_guard lock(mu);
                if (failure) {
                    return;
                }
            }
            try {
                result.rounds[static_cast<std::size_t>(r)] = run_round(spec, r);
            } catch (...) {
                std::lock_guard lock(mu);
                if (!failure) {
                    failure = std::current_exception();
                }
                return;
            }
            const int d = done.fetch_add(1) + 1;
            if (progress) {
                std::lock_guard lock(mu);
                progress(r, d, spec.rounds);
            }
        }
    };
    const int n = std::min(spec.workers, spec.rounds);
    if (n <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < n; ++i) {
            pool.emplace_back(worker);
        }
        for (auto& t : pool) {
            t.join();
        }
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
    result.aggregates = aggregate_rounds(result.rounds);
    return result;
}

std::string round_csv(const RoundResult& round) {
    std::string out = "slot,norm_throughput,collision_rate,epsilon,context_id\n";
    for (const auto& pt : round.metrics.series) {
        out += std::to_string(pt.slot);
        out += ',';
        out += format_double(pt.throughput);
        out += ',';
        out += format_double(pt.collision_rate);
        out += ',';
        if (pt.epsilon) {
            out += format_double(*pt.epsilon);
        }
        out += ',';
        out += std::to_string(pt.context_id);
        out += '\n';
    }
    return out;
}

std::string summary_json(const RunResult& result) {
    const Aggregates& a = result.aggregates;
    OJson root;
    root["name"] = result.spec.name;
    root["variant"] = to_string(result.spec.variant);
    root["reset_scope"] = to_string(result.spec.reset_scope);
    root["T"] = result.spec.lifetime;
    OJson agg;
    agg["throughput"] = stats_json(a.throughput);
    agg["throughput_multi_radio"] = stats_json(a.throughput_multi);
    agg["collision_rate"] = stats_json(a.collision);
    agg["convergence"] = stats_json(a.convergence);
    OJson intervals = OJson::array();
    for (const auto& is : a.intervals) {
        OJson j;
        j["index"] = is.index;
        j["start"] = stats_json(is.start);
        j["convergence"] = stats_json(is.convergence);
        j["censored"] = is.censored;
        j["absent"] = is.absent;
        intervals.push_back(j);
    }
    agg["by_interval"] = intervals;
    root["aggregates"] = agg;

    OJson rounds = OJson::array();
    for (const auto& r : result.rounds) {
        OJson j;
        j["round"] = r.index;
        j["seed"] = r.seed;
        j["mean_throughput"] = r.metrics.mean_throughput;
        j["mean_throughput_multi_radio"] = r.metrics.mean_throughput_multi;
        j["mean_collision_rate"] = r.metrics.mean_collision;
        j["train_steps"] = r.train_steps;
        j["contexts_registered"] = r.contexts_registered;
        OJson timeline = OJson::array();
        for (const auto& iv : r.metrics.contexts) {
            OJson c;
            c["context_id"] = iv.context_id;
            c["key"] = iv.key.to_string();
            c["start"] = iv.start;
            c["end"] = iv.end;
            c["revisit"] = iv.revisit;
            c["convergence"] = iv.convergence ? OJson(*iv.convergence) : OJson(nullptr);
            c["censored"] = iv.censored;
            c["too_short"] = iv.too_short;
            timeline.push_back(c);
        }
        j["contexts"] = timeline;
        OJson ann = OJson::array();
        for (const auto& an : r.announcements) {
            OJson c;
            c["slot"] = an.slot;
            c["key"] = an.key.to_string();
            c["event"] = to_string(an.event);
            ann.push_back(c);
        }
        j["announcements"] = ann;
        rounds.push_back(j);
    }
    root["rounds"] = rounds;
    return root.dump(2) + "\n";
}

void write_bundle(const RunResult& result, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    const fs::path target = fs::absolute(dir).lexically_normal();
    const fs::path parent = target.parent_path();
    fs::create_directories(parent);
    const fs::path staging = parent / ("." + target.filename().string() + ".staging");
    const fs::path previous = parent / ("." + target.filename().string() + ".previous");
    std::error_code ec;
    fs::remove_all(staging, ec);
    try {
        fs::create_directories(staging);
        for (const auto& r : result.rounds) {
            write_text(staging / ("round_" + std::to_string(r.index) + ".csv"), round_csv(r));
        }
        write_text(staging / "summary.json", summary_json(result));
        write_text(staging / "spec.json", to_json(result.spec));
        fs::remove_all(previous, ec);
        if (fs::exists(target)) {
            fs::rename(target, previous);
        }
        fs::rename(staging, target);
        fs::remove_all(previous, ec);
    } catch (...) {
        fs::remove_all(staging, ec);
        if (!fs::exists(target) && fs::exists(previous)) {
            fs::rename(previous, target, ec);
        }
        throw;
    }
}

std::vector<CompareRow> compare(std::span<const RunResult> results) {
    std::vector<CompareRow> rows;
    std::set<Slot> lifetimes;
    for (const auto& r : results) {
        lifetimes.insert(r.spec.lifetime);
        rows.push_back({r.spec.name, to_string(r.spec.variant), r.spec.lifetime, r.aggregates.throughput,
                        r.aggregates.collision, r.aggregates.convergence});
    }
    if (lifetimes.size() > 1) {
        std::cerr << "warning: compared runs have different lifetimes T\n";
    }
    return rows;
}

std::string compare_csv(std::span<const CompareRow> rows) {
    std::string out =
        "name,variant,T,throughput_mean,throughput_std,collision_mean,collision_std,convergence_mean,"
        "convergence_std\n";
    for (const auto& r : rows) {
        out += r.name + ',' + r.variant + ',' + std::to_string(r.lifetime) + ',' + format_double(r.throughput.mean) +
               ',' + format_double(r.throughput.std) + ',' + format_double(r.collision.mean) + ',' +
               format_double(r.collision.std) + ',' + format_double(r.convergence.mean) + ',' +
               format_double(r.convergence.std) + '\n';
    }
    return out;
}

}  // namespace clmac
