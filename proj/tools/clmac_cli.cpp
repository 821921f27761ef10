// Command-line runner for the multi-channel MAC experiments.

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "clmac/error.hpp"
#include "clmac/harness.hpp"
#include "clmac/kernels.hpp"

namespace fs = std::filesystem;
using namespace clmac;

namespace {

struct CommonOpts {
    std::uint64_t seed = 1;
    int rounds = 10;
    std::string out = "results";
    std::vector<std::string> variants{"cl-ddql"};
    std::string reset_scope = "heads-only";
    std::optional<double> gamma;
    std::optional<long long> lifetime;
    int workers = 1;
    std::optional<int> stride;
    bool quiet = false;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--seed", o.seed, "base seed; round i uses seed + i")->capture_default_str();
    cmd->add_option("--rounds", o.rounds, "independent rounds")->capture_default_str();
    cmd->add_option("-o,--out", o.out, "output directory")->capture_default_str();
    cmd->add_option("--variant", o.variants, "cl-ddql, plain-ddql, random or all (repeatable)")
        ->capture_default_str();
    cmd->add_option("--reset-scope", o.reset_scope, "full or heads-only")->capture_default_str();
    cmd->add_option("--gamma", o.gamma, "discount factor in [0, 1)");
    cmd->add_option("-T,--lifetime", o.lifetime, "slots per round");
    cmd->add_option("-j,--workers", o.workers, "rounds run concurrently")->capture_default_str();
    cmd->add_option("--stride", o.stride, "metric stride in slots");
    cmd->add_flag("-q,--quiet", o.quiet, "no progress output");
}

std::vector<AgentVariant> variants_of(const CommonOpts& o) {
    std::vector<AgentVariant> out;
    for (const auto& v : o.variants) {
        if (v == "all") {
            out = {AgentVariant::ClDdql, AgentVariant::PlainDdql, AgentVariant::Random};
            continue;
        }
        const AgentVariant parsed = parse_variant(v);
        if (std::find(out.begin(), out.end(), parsed) == out.end()) {
            out.push_back(parsed);
        }
    }
    return out;
}

void apply_common(const CommonOpts& o, RunSpec& spec) {
    spec.seed = o.seed;
    spec.rounds = o.rounds;
    spec.workers = o.workers;
    spec.reset_scope = parse_reset_scope(o.reset_scope);
    if (o.gamma) {
        spec.agent.gamma = *o.gamma;
    }
    if (o.lifetime) {
        spec.lifetime = *o.lifetime;
    }
    if (o.stride) {
        spec.metrics.stride = *o.stride;
    }
}

RunResult execute(RunSpec spec, const fs::path& dir, bool quiet) {
    if (!quiet) {
        std::cerr << spec.name << " (" << to_string(spec.variant) << ", T=" << spec.lifetime
                  << ", rounds=" << spec.rounds << ", kernels=" << kernels::active().name << ")\n";
    }
    Progress progress;
    if (!quiet) {
        progress = [](int round, int done, int total) {
            std::cerr << "  round " << round << " done (" << done << "/" << total << ")\n";
        };
    }
    RunResult result = run(std::move(spec), progress);
    write_bundle(result, dir);
    if (!quiet) {
        const auto& a = result.aggregates;
        std::cerr << "  throughput " << a.throughput.mean << " +- " << a.throughput.std << ", collision "
                  << a.collision.mean << " +- " << a.collision.std << " -> " << dir.string() << "\n";
    }
    return result;
}

// Runs every variant, each into <out>/<variant> when more than one.
std::vector<RunResult> run_variants(const RunSpec& base, const CommonOpts& o, const fs::path& out) {
    const auto variants = variants_of(o);
    std::vector<RunResult> results;
    for (AgentVariant v : variants) {
        RunSpec spec = base;
        spec.variant = v;
        const fs::path dir = variants.size() > 1 ? out / to_string(v) : out;
        results.push_back(execute(spec, dir, o.quiet));
    }
    return results;
}

void write_compare(std::vector<RunResult>& results, const fs::path& out) {
    const auto rows = compare(results);
    fs::create_directories(out);
    std::ofstream f(out / "compare.csv", std::ios::trunc);
    f << compare_csv(rows);
    if (!f) {
        throw Error("cannot write " + (out / "compare.csv").string());
    }
    std::cout << compare_csv(rows);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot open config file " + path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Continual-learning multi-channel MAC simulator"};
    app.require_subcommand(1);

    CommonOpts s1;
    auto* cmd_s1 = app.add_subcommand("scenario1", "fixed change points, three contexts, first one returns");
    add_common(cmd_s1, s1);

    CommonOpts s2;
    double s2_beta = 0.2;
    int s2_channels = 2;
    double s2_novelty = 0.5;
    auto* cmd_s2 = app.add_subcommand("scenario2", "stochastic UE arrivals and departures");
    add_common(cmd_s2, s2);
    cmd_s2->add_option("--beta", s2_beta, "mean UE active time as a fraction of T")->capture_default_str();
    cmd_s2->add_option("--channels", s2_channels, "number of channels")->capture_default_str();
    cmd_s2->add_option("--novelty", s2_novelty, "probability a replacement UE is new")->capture_default_str();

    CommonOpts sb;
    std::vector<double> betas{0.2, 0.4, 0.6, 0.8, 1.0};
    int sb_channels = 2;
    auto* cmd_sb = app.add_subcommand("sweep-beta", "scenario2 over several mean active times");
    add_common(cmd_sb, sb);
    cmd_sb->add_option("--betas", betas, "fractions of T")->capture_default_str();
    cmd_sb->add_option("--channels", sb_channels, "number of channels")->capture_default_str();

    CommonOpts sc;
    std::vector<int> channel_counts{1, 2, 3, 4, 5};
    double sc_beta = 0.2;
    auto* cmd_sc = app.add_subcommand("sweep-channels", "scenario2 over several channel counts");
    add_common(cmd_sc, sc);
    cmd_sc->add_option("--counts", channel_counts, "channel counts")->capture_default_str();
    cmd_sc->add_option("--beta", sc_beta, "mean UE active time as a fraction of T")->capture_default_str();

    CommonOpts cu;
    std::string config_path;
    auto* cmd_cu = app.add_subcommand("custom", "run a JSON config");
    cmd_cu->add_option("config", config_path, "config file")->required();
    cmd_cu->add_option("-o,--out", cu.out, "output directory")->capture_default_str();
    cmd_cu->add_option("--seed", cu.seed, "override run.seed");
    cmd_cu->add_option("--rounds", cu.rounds, "override run.rounds");
    cmd_cu->add_option("--variant", cu.variants, "override run.variant");
    cmd_cu->add_option("--reset-scope", cu.reset_scope, "override run.reset_scope");
    cmd_cu->add_option("--gamma", cu.gamma, "override agent.gamma");
    cmd_cu->add_option("-j,--workers", cu.workers, "rounds run concurrently");
    cmd_cu->add_flag("-q,--quiet", cu.quiet, "no progress output");

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_s1->parsed()) {
            RunSpec spec;
            spec.name = "scenario1";
            apply_common(s1, spec);
            run_variants(spec, s1, s1.out);
        } else if (cmd_s2->parsed()) {
            RunSpec spec;
            spec.name = "scenario2";
            apply_common(s2, spec);
            Scenario2Params p;
            p.channels = s2_channels;
            p.beta = s2_beta * static_cast<double>(spec.lifetime);
            p.novelty_prob = s2_novelty;
            spec.scenario = p;
            run_variants(spec, s2, s2.out);
        } else if (cmd_sb->parsed()) {
            std::vector<RunResult> all;
            for (double b : betas) {
                RunSpec spec;
                apply_common(sb, spec);
                Scenario2Params p;
                p.channels = sb_channels;
                p.beta = b * static_cast<double>(spec.lifetime);
                spec.scenario = p;
                spec.name = "beta_" + format_double(b);
                CommonOpts o = sb;
                auto res = run_variants(spec, o, fs::path(sb.out) / spec.name);
                all.insert(all.end(), std::make_move_iterator(res.begin()), std::make_move_iterator(res.end()));
            }
            write_compare(all, sb.out);
        } else if (cmd_sc->parsed()) {
            std::vector<RunResult> all;
            for (int c : channel_counts) {
                RunSpec spec;
                apply_common(sc, spec);
                Scenario2Params p;
                p.channels = c;
                p.beta = sc_beta * static_cast<double>(spec.lifetime);
                spec.scenario = p;
                spec.name = "channels_" + std::to_string(c);
                auto res = run_variants(spec, sc, fs::path(sc.out) / spec.name);
                all.insert(all.end(), std::make_move_iterator(res.begin()), std::make_move_iterator(res.end()));
            }
            write_compare(all, sc.out);
        } else if (cmd_cu->parsed()) {
            RunSpec spec = parse_run_spec(read_file(config_path));
            if (cmd_cu->count("--seed") > 0) {
                spec.seed = cu.seed;
            }
            if (cmd_cu->count("--rounds") > 0) {
                spec.rounds = cu.rounds;
            }
            if (cmd_cu->count("--reset-scope") > 0) {
                spec.reset_scope = parse_reset_scope(cu.reset_scope);
            }
            if (cu.gamma) {
                spec.agent.gamma = *cu.gamma;
            }
            if (cmd_cu->count("--workers") > 0) {
                spec.workers = cu.workers;
            }
            if (cmd_cu->count("--variant") > 0) {
                run_variants(spec, cu, cu.out);
            } else {
                execute(spec, cu.out, cu.quiet);
            }
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
