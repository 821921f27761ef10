// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails. Names given on the command line select a subset
// (substring match), e.g. `clmac_acceptance gradient oracle`.

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "clmac/agent.hpp"
#include "clmac/cl.hpp"
#include "clmac/harness.hpp"
#include "clmac/kernels.hpp"
#include "clmac/metrics.hpp"
#include "oracles.hpp"

using namespace clmac;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

void progress(const std::string& what) {
    std::fprintf(stderr, "  .. %s\n", what.c_str());
}

RunResult run_quiet(const RunSpec& spec) {
    const auto t0 = std::chrono::steady_clock::now();
    RunResult r = run(spec, [&](int round, int done, int total) {
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::fprintf(stderr, "  .. %s %s round %d (%d/%d, %.0f s)\n", spec.name.c_str(), to_string(spec.variant), round,
                     done, total, s);
    });
    return r;
}

// ---------------------------------------------------------------------------

// d = 1 reduces the multi-slot target to the one-step double-Q target.
Verdict eq5_reduction() {
    const auto t0 = std::chrono::steady_clock::now();
    const nn::NetShape shape{2, 1, 1, 1, 2};
    nn::DuelingNet online(shape);
    nn::DuelingNet target(shape);
    const std::vector<double> next(2, 0.0);
    Rng rng(101);
    double worst = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const double r = rng.uniform(-10.0, 10.0);
        const double qhat = rng.uniform(-100.0, 100.0);
        double gamma = rng.uniform01();
        while (gamma == 0.0) {
            gamma = rng.uniform01();
        }
        // With zero advantages every Q equals the value bias.
        target.tensor(nn::TensorId::ValueB)[0] = qhat;
        const double got = compute_target(r, 1, next, online, target, gamma);
        worst = std::max(worst, std::abs(got - (r + gamma * qhat)));
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {worst <= 1e-12 && secs < 1.0, fmt("max |error| %.3g (tol 1e-12), %.3f s (limit 1 s)", worst, secs)};
}

// Backprop against central differences of an independent reference loss.
Verdict gradient_check() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(202);
    double worst = 0.0;
    const double h = 1e-5;
    for (int net_i = 0; net_i < 50; ++net_i) {
        nn::NetShape shape;
        shape.input_dim = static_cast<int>(rng.uniform_int(2, 8));
        shape.history = static_cast<int>(rng.uniform_int(1, 5));
        shape.lstm_units = static_cast<int>(rng.uniform_int(1, 8));
        shape.dense_units = static_cast<int>(rng.uniform_int(1, 8));
        shape.actions = static_cast<int>(rng.uniform_int(2, 8));
        auto net = nn::initialize(shape, static_cast<std::uint64_t>(net_i));
        oracle::randomize(net, rng, 0.8);
        const int batch = static_cast<int>(rng.uniform_int(1, 4));
        std::vector<double> states(static_cast<std::size_t>(batch * shape.history * shape.input_dim));
        for (double& x : states) {
            x = rng.uniform(-1.0, 1.0);
        }
        std::vector<int> actions(batch);
        std::vector<double> targets(batch);
        for (int b = 0; b < batch; ++b) {
            actions[b] = static_cast<int>(rng.below(static_cast<std::uint64_t>(shape.actions)));
            targets[b] = rng.uniform(-3.0, 3.0);
        }
        const double scale = 2.0 / batch;
        nn::Gradients grads(shape);
        nn::Workspace ws;
        nn::backward_batch(net, states, batch, actions, targets, scale, grads, ws);
        for (std::size_t i = 0; i < net.size(); ++i) {
            const double keep = net.values()[i];
            net.values()[i] = keep + h;
            const double up = oracle::loss(net, states, batch, actions, targets, scale);
            net.values()[i] = keep - h;
            const double down = oracle::loss(net, states, batch, actions, targets, scale);
            net.values()[i] = keep;
            const double fd = (up - down) / (2 * h);
            const double an = grads.values()[i];
            worst = std::max(worst, std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6}));
        }
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {worst <= 1e-4 && secs < 60.0,
            fmt("50 nets, max relative error %.3g (tol 1e-4, step 1e-5, denominator floor 1e-6), %.1f s", worst, secs)};
}

Verdict oracle_equivalence() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(303);
    int mismatches = 0;
    for (int w = 0; w < 200; ++w) {
        const int channels = static_cast<int>(rng.uniform_int(1, 2));
        const int k_max = static_cast<int>(rng.uniform_int(1, 6));
        const auto n = static_cast<std::size_t>(rng.uniform_int(1, 16));
        const double busy = rng.uniform(0.1, 0.9);
        std::vector<std::uint32_t> occ(n, 0);
        for (auto& o : occ) {
            for (int c = 0; c < channels; ++c) {
                o |= rng.bernoulli(busy) ? 1U << c : 0U;
            }
        }
        if (oracle_max_payload(occ, channels, k_max, 0.5) != oracle::brute_payload(occ, channels, k_max, 0.5)) {
            ++mismatches;
        }
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {mismatches == 0 && secs < 60.0, fmt("%d / 200 windows differ, %.1f s", mismatches, secs)};
}

// Drives `agent` for `slots` slots in `env`, training as the harness does.
void drive(Agent& agent, Environment& env, Slot slots) {
    const Slot until = env.now() + slots;
    while (env.now() < until) {
        const AgentAction a = agent.select_action();
        const StepOutcome o = env.apply_action(a);
        agent.record_experience(a, o);
        for (int i = 0; i < o.duration; ++i) {
            agent.train_step();
        }
    }
}

Verdict snapshot_fidelity() {
    AgentConfig cfg;
    cfg.channels = 2;
    const ContextKey phi_a({{1, 0}, {2, 1}});
    const ContextKey phi_b({{3, 0}, {4, 1}});
    const auto source = [] { return std::make_unique<FixedSchedule>(build_scenario1(80000)); };

    std::vector<std::string> failures;
    const fs::path spill = fs::temp_directory_path() / ("clmac_acceptance_" + std::to_string(::getpid()));
    for (const bool on_disk : {false, true}) {
        Agent agent(cfg, 404);
        StoreOptions opts;
        if (on_disk) {
            fs::remove_all(spill);
            opts.resident_cap = 1;
            opts.spill_dir = spill;
        }
        ContextStore store(opts);
        ContinualController ctl(AgentVariant::ClDdql, ResetScope::HeadsOnly, &store);
        ctl.begin(phi_a);
        Environment env_a(2, cfg.k_max, source());
        drive(agent, env_a, 1500);
        const Snapshot saved = capture(agent);

        ctl.on_context_announcement(&agent, phi_b);
        Environment env_b(2, cfg.k_max, source());
        for (int i = 0; i < 20000; ++i) {  // move env_b into the second quarter
            env_b.apply_action({0, 0});
        }
        const std::uint64_t steps_before = agent.applied_steps();
        while (agent.applied_steps() - steps_before < 1000) {
            const AgentAction a = agent.select_action();
            const StepOutcome o = env_b.apply_action(a);
            agent.record_experience(a, o);
            for (int i = 0; i < o.duration && agent.applied_steps() - steps_before < 1000; ++i) {
                agent.train_step();
            }
        }
        if (on_disk) {
            store.put(phi_b, capture(agent));  // evicts phi_a to disk
        }
        ctl.on_context_announcement(&agent, phi_a);
        const char* where = on_disk ? "spilled" : "resident";
        if (!agent.online().bit_equal(saved.online)) {
            failures.push_back(std::string(where) + ": W differs");
        }
        if (!agent.target().bit_equal(saved.target)) {
            failures.push_back(std::string(where) + ": W- differs");
        }
        if (!(agent.memory() == saved.memory)) {
            failures.push_back(std::string(where) + ": replay memory differs");
        }
        if (on_disk && !fs::exists(spill / ContextStore::spill_filename(phi_a))) {
            failures.push_back("spill file missing");
        }
    }
    fs::remove_all(spill);
    std::string detail = "1000 training steps on another context between save and reload, resident and spilled store";
    for (const auto& f : failures) {
        detail += "; " + f;
    }
    return {failures.empty(), detail};
}

RunSpec single_context_spec(AgentVariant v) {
    RunSpec s;
    s.name = "single_context";
    CustomScenario c;
    c.channels = 1;
    c.instances = {{1, {3, 0, 8, 0}, 0, std::nullopt}};
    s.scenario = c;
    s.lifetime = 40000;
    s.rounds = 10;
    s.seed = 1;
    s.variant = v;
    return s;
}

Verdict single_context() {
    double cl_sum = 0.0, rnd_tp = 0.0, rnd_col = 0.0;
    std::string per_round;
    const auto cl = run_quiet(single_context_spec(AgentVariant::ClDdql));
    for (const auto& r : cl.rounds) {
        const double v = *mean_throughput_between(r.metrics.series, 35000, 40000);
        cl_sum += v;
        per_round += fmt(" %.3f", v);
    }
    const auto rnd = run_quiet(single_context_spec(AgentVariant::Random));
    for (const auto& r : rnd.rounds) {
        rnd_tp += *mean_throughput_between(r.metrics.series, 35000, 40000);
        rnd_col += *mean_collision_between(r.metrics.series, 35000, 40000);
    }
    const double n = 10.0;
    const double cl_mean = cl_sum / n;
    const double rnd_tp_mean = rnd_tp / n;
    const double rnd_col_mean = rnd_col / n;
    const bool pass = cl_mean >= 0.8 && rnd_tp_mean <= 0.35 && rnd_col_mean >= 0.3;
    return {pass, fmt("final 5000 slots: CL-DDQL throughput %.4f (need >= 0.8; rounds%s), Random throughput %.4f "
                      "(need <= 0.35), Random collision %.4f (need >= 0.3)",
                      cl_mean, per_round.c_str(), rnd_tp_mean, rnd_col_mean)};
}

struct Scenario1Runs {
    RunResult cl, plain, random;
};

const Scenario1Runs& scenario1_runs() {
    static const Scenario1Runs runs = [] {
        RunSpec s;
        s.name = "scenario1";
        s.lifetime = 80000;
        s.scenario = Scenario1Config{80000};
        s.rounds = 10;
        s.seed = 1;
        Scenario1Runs r;
        s.variant = AgentVariant::ClDdql;
        r.cl = run_quiet(s);
        s.variant = AgentVariant::PlainDdql;
        r.plain = run_quiet(s);
        s.variant = AgentVariant::Random;
        r.random = run_quiet(s);
        return r;
    }();
    return runs;
}

// Mean over rounds of the convergence time of the interval starting nearest
// to `at` (censored values count as the interval length).
double mean_convergence(const RunResult& res, Slot at, int* censored) {
    double sum = 0.0;
    for (const auto& r : res.rounds) {
        const ContextInterval* best = nullptr;
        for (const auto& iv : r.metrics.contexts) {
            if (best == nullptr || std::abs(iv.start - at) < std::abs(best->start - at)) {
                best = &iv;
            }
        }
        sum += static_cast<double>(best->convergence.value_or(best->end - best->start));
        *censored += best->censored ? 1 : 0;
    }
    return sum / static_cast<double>(res.rounds.size());
}

Verdict backward_transfer() {
    const auto& runs = scenario1_runs();
    int cc = 0, pc = 0;
    const double cl_q1 = mean_convergence(runs.cl, 0, &cc);
    const double cl_q4 = mean_convergence(runs.cl, 60000, &cc);
    const double pl_q1 = mean_convergence(runs.plain, 0, &pc);
    const double pl_q4 = mean_convergence(runs.plain, 60000, &pc);
    const double cl_ratio = cl_q4 / cl_q1;
    const double pl_ratio = pl_q4 / pl_q1;
    const bool pass = cl_ratio <= 0.25 && pl_ratio >= 0.60;
    return {pass, fmt("CL-DDQL Q4/Q1 convergence %.0f/%.0f = %.3f (need <= 0.25); PLAIN-DDQL %.0f/%.0f = %.3f "
                      "(need >= 0.60); censored intervals CL %d, PLAIN %d",
                      cl_q4, cl_q1, cl_ratio, pl_q4, pl_q1, pl_ratio, cc, pc)};
}

Verdict scenario1_ordering() {
    const auto& runs = scenario1_runs();
    int bad = 0;
    std::string rows;
    for (std::size_t i = 0; i < runs.cl.rounds.size(); ++i) {
        const auto& c = runs.cl.rounds[i].metrics;
        const auto& p = runs.plain.rounds[i].metrics;
        const auto& r = runs.random.rounds[i].metrics;
        const bool ok = c.mean_throughput > p.mean_throughput && p.mean_throughput > r.mean_throughput &&
                        c.mean_collision < p.mean_collision && p.mean_collision < r.mean_collision;
        bad += ok ? 0 : 1;
        rows += fmt(" [r%zu tp %.3f/%.3f/%.3f col %.3f/%.3f/%.3f%s]", i, c.mean_throughput, p.mean_throughput,
                    r.mean_throughput, c.mean_collision, p.mean_collision, r.mean_collision, ok ? "" : " x");
    }
    return {bad == 0, fmt("%d of 10 rounds out of order (CL/DDQL/Random):", bad) + rows};
}

double mean_all_time(const RunResult& res) {
    return res.aggregates.throughput.mean;
}

Verdict beta_trend() {
    const Slot T = 40000;
    double gap[2];
    double tp[2][2];
    const double betas[2] = {0.2, 1.0};
    for (int b = 0; b < 2; ++b) {
        RunSpec s;
        s.name = fmt("scenario2_beta_%.1f", betas[b]);
        Scenario2Params p;
        p.channels = 2;
        p.beta = betas[b] * static_cast<double>(T);
        s.scenario = p;
        s.lifetime = T;
        s.rounds = 10;
        s.seed = 1;
        s.variant = AgentVariant::ClDdql;
        tp[b][0] = mean_all_time(run_quiet(s));
        s.variant = AgentVariant::PlainDdql;
        tp[b][1] = mean_all_time(run_quiet(s));
        gap[b] = tp[b][0] - tp[b][1];
    }
    return {gap[0] > gap[1], fmt("T=%lld, C=2: gap at beta=0.2T %.4f (CL %.4f, DDQL %.4f) vs beta=1.0T %.4f (CL %.4f, "
                                 "DDQL %.4f); need the first larger",
                                 static_cast<long long>(T), gap[0], tp[0][0], tp[0][1], gap[1], tp[1][0], tp[1][1])};
}

Verdict determinism() {
    RunSpec s;
    s.name = "determinism";
    Scenario2Params p;
    p.channels = 2;
    p.beta = 1500.0;
    s.scenario = p;
    s.lifetime = 6000;
    s.rounds = 2;
    s.seed = 77;
    const auto a = run(s);
    s.workers = 2;
    const auto b = run(s);
    int differ = 0;
    for (std::size_t i = 0; i < a.rounds.size(); ++i) {
        differ += round_csv(a.rounds[i]) == round_csv(b.rounds[i]) ? 0 : 1;
    }
    return {differ == 0, fmt("scenario2 T=6000, 2 rounds, run twice: %d round CSVs differ", differ)};
}

struct Criterion {
    const char* name;
    std::function<Verdict()> check;
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all{
        {"eq5-reduction", eq5_reduction},
        {"gradient-check", gradient_check},
        {"oracle-equivalence", oracle_equivalence},
        {"snapshot-fidelity", snapshot_fidelity},
        {"determinism", determinism},
        {"single-context", single_context},
        {"scenario1-backward-transfer", backward_transfer},
        {"scenario1-ordering", scenario1_ordering},
        {"scenario2-beta-trend", beta_trend},
    };
    std::vector<std::string> filters(argv + 1, argv + argc);
    std::fprintf(stderr, "kernels: %s\n", kernels::active().name);
    int failed = 0;
    for (const auto& c : all) {
        if (!filters.empty() &&
            std::none_of(filters.begin(), filters.end(), [&](const std::string& f) { return std::string(c.name).find(f) != std::string::npos; })) {
            continue;
        }
        progress(c.name);
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = c.check();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("%s %s: %s (%.1f s)\n", v.pass ? "PASS" : "FAIL", c.name, v.detail.c_str(), secs);
        std::fflush(stdout);
        failed += v.pass ? 0 : 1;
    }
    return failed == 0 ? 0 : 1;
}
