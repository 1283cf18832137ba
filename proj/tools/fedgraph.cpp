#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "fedgraph/errors.hpp"
#include "fedgraph/experiment.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using namespace fedgraph;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<std::size_t> workers;
    std::string mode;
    std::string checkpoint;  // eval only
};

void setup_logging() {
    auto logger = spdlog::stderr_color_mt("fedgraph");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
    spdlog::set_level(spdlog::level::info);
    if (const char* env = std::getenv("FEDGRAPH_LOG")) {
        const auto level = spdlog::level::from_str(env);
        // from_str maps unknown names to "off"; only honour it when asked for.
        if (level != spdlog::level::off || std::string(env) == "off") spdlog::set_level(level);
        else spdlog::warn("FEDGRAPH_LOG='{}' is not a log level; using info", env);
    }
}

cli::CliConfig resolve(const Options& o) {
    if (o.config.empty()) throw ConfigError("--config is required");
    auto c = cli::load_config(o.config);
    auto& r = c.run;
    if (o.seed) {
        r.seeds = Seeds{*o.seed, *o.seed, *o.seed};
        r.partition.seed = *o.seed;
    }
    if (!o.out.empty()) r.out_dir = o.out;
    if (o.workers) r.workers = *o.workers;
    if (!o.mode.empty()) r.mode = parse_run_mode(o.mode);
    r.validate();
    fs::create_directories(r.out_dir);
    return c;
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(p, std::ios::binary);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("cannot write " + p.string());
}

std::vector<std::uint8_t> read_bytes(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw ConfigError("cannot open " + p.string());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::ofstream open_csv(const fs::path& p) {
    std::ofstream f(p);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    return f;
}

std::vector<ClientGraph> clients_for(const cli::CliConfig& c, const Graph& g) {
    if (!c.partition_cache.empty()) {
        spdlog::info("loading partition cache {}", c.partition_cache);
        return decode_partition(read_bytes(c.partition_cache));
    }
    return partition(g, c.run.partition);
}

void log_round(const RoundRecord& r) {
    spdlog::debug("round {} lambda={:.4f} delta={:.1f} reward={:.4f}", r.round, r.lambda, r.delta, r.reward);
}

int cmd_partition(const Options& o) {
    const auto c = resolve(o);
    const auto g = load_graph(c.run);
    const auto clients = partition(g, c.run.partition);
    std::cout << "client,nodes,internal_edges,boundary_edges,train_nodes\n";
    for (const auto& cg : clients) {
        std::size_t reach = 0;
        for (NodeId v = 0; v < cg.num_nodes(); ++v) {
            if (cg.neighbor_count(v) > cg.degree[v])
                throw PartitionError("client " + std::to_string(cg.id) + " node " +
                                     std::to_string(cg.local_to_global[v]) + " has more neighbours than its degree");
            reach += cg.neighbor_count(v);
        }
        if (reach != cg.internal.nnz() + cg.boundary.size())
            throw PartitionError("client " + std::to_string(cg.id) + " fails degree conservation");
        std::cout << cg.id << ',' << cg.num_nodes() << ',' << cg.internal.nnz() / 2 << ',' << cg.boundary.size()
                  << ',' << cg.train_nodes().size() << '\n';
    }
    const auto path = fs::path(c.run.out_dir) / "partition.bin";
    write_bytes(path, encode_partition(clients));
    spdlog::info("wrote {}", path.string());
    return 0;
}

int cmd_train(const Options& o) {
    const auto c = resolve(o);
    if (c.run.mode == RunMode::fedgraph_ddpg) throw ConfigError("mode fedgraph_ddpg needs the train-drl subcommand");
    const auto g = load_graph(c.run);
    Federation fed(clients_for(c, g), federation_config(c.run));
    const fs::path out(c.run.out_dir);
    auto csv = open_csv(out / "metrics.csv");
    write_metrics_header(csv);
    spdlog::info("training {} for {} rounds on {} clients", to_string(c.run.mode), c.run.rounds, fed.clients().size());
    const auto recs = run_training(fed, c.run, [&](const RoundRecord& r) {
        write_metrics_rows(csv, r);
        log_round(r);
    });
    write_bytes(out / "weights.bin", encode_weights(fed.global_weights()));
    if (!recs.empty()) spdlog::info("final test accuracy {:.4f}", recs.back().lambda);
    return 0;
}

int cmd_train_drl(const Options& o) {
    auto c = resolve(o);
    c.run.mode = RunMode::fedgraph_ddpg;
    c.run.ddpg.validate();
    const auto g = load_graph(c.run);
    Federation fed(clients_for(c, g), federation_config(c.run));
    const auto codec = make_codec(c.run, fed.clients().size());
    DdpgConfig dcfg = c.run.ddpg;
    DdpgController ctl(codec.dim(), dcfg, c.run.seeds.controller);
    FederatedEnvironment env(fed, codec, c.run.reward, c.run.seeds.training);

    const fs::path out(c.run.out_dir);
    auto csv = open_csv(out / "metrics.csv");
    const std::vector<std::string> extra{"episode", "return"};
    write_metrics_header(csv, extra);
    double ret = 0.0, discount = 1.0;
    spdlog::info("training the controller: {} episodes of {} rounds", dcfg.episodes, dcfg.rounds);
    const auto stats = train_controller(env, ctl, dcfg.episodes, dcfg.rounds, [&](std::size_t ep, std::size_t t, double r) {
        if (t == 0) ret = 0.0, discount = 1.0;
        ret += discount * r;
        discount *= dcfg.gamma;
        std::ostringstream rs;
        rs.precision(10);
        rs << ret;
        const std::vector<std::string> vals{std::to_string(ep), rs.str()};
        write_metrics_rows(csv, env.records().back(), vals);
        log_round(env.records().back());
    });

    auto returns = open_csv(out / "returns.csv");
    returns << "episode,return\n";
    returns.precision(10);
    for (const auto& s : stats) {
        returns << s.episode << ',' << s.ret << '\n';
        spdlog::info("episode {} return {:.4f}", s.episode, s.ret);
    }
    write_bytes(out / "controller.bin", ctl.save());
    write_bytes(out / "weights.bin", encode_weights(fed.global_weights()));
    return 0;
}

int cmd_eval(const Options& o) {
    const auto c = resolve(o);
    const fs::path ckpt = o.checkpoint.empty() ? fs::path(c.run.out_dir) / "weights.bin" : fs::path(o.checkpoint);
    const auto w = decode_weights(read_bytes(ckpt));
    const auto g = load_graph(c.run);
    if (w.layers.empty() || w.layers.front().rows() != g.feature_dim() || w.layers.back().cols() != g.num_classes)
        throw ConfigError("checkpoint shape does not match the dataset");
    auto csv = open_csv(fs::path(c.run.out_dir) / "eval.csv");
    csv << "split,nodes,accuracy\n";
    std::cout << "split,nodes,accuracy\n";
    const std::pair<const char*, const std::vector<std::uint8_t>*> splits[] = {
        {"train", &g.train_mask}, {"val", &g.val_mask}, {"test", &g.test_mask}};
    for (const auto& [name, mask] : splits) {
        std::vector<NodeId> nodes;
        for (NodeId v = 0; v < g.num_nodes(); ++v)
            if ((*mask)[v]) nodes.push_back(v);
        if (nodes.empty()) continue;
        std::ostringstream line;
        line.precision(10);
        line << name << ',' << nodes.size() << ',' << evaluate(g, w, nodes) << '\n';
        csv << line.str();
        std::cout << line.str();
    }
    return 0;
}

int cmd_bench(const Options& o) {
    auto c = resolve(o);
    if (!o.mode.empty()) c.bench.modes = {parse_run_mode(o.mode)};
    if (o.seed) c.bench.seeds = {*o.seed};
    auto csv = open_csv(fs::path(c.run.out_dir) / "bench.csv");
    write_bench_header(csv);
    write_bench_header(std::cout);
    run_bench(c.run, c.bench, [&](const BenchRow& row) {
        write_bench_row(csv, row);
        write_bench_row(std::cout, row);
        std::cout.flush();
    });
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    setup_logging();
    CLI::App app{"FedGraph: federated GCN training simulator"};
    app.require_subcommand(1);
    Options o;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "YAML run profile")->required();
        sub->add_option("--seed", o.seed, "Override every seed");
        sub->add_option("--out", o.out, "Output directory");
        sub->add_option("--workers", o.workers, "Worker threads (default: one per client)");
        sub->add_option("--mode", o.mode, "Sampler mode");
    };
    struct Sub {
        const char* name;
        const char* help;
        int (*run)(const Options&);
    };
    const Sub subs[] = {
        {"partition", "Partition the dataset and write the partition cache", cmd_partition},
        {"train", "Federated training with a fixed sampling policy", cmd_train},
        {"train-drl", "Train the DDPG sampling controller", cmd_train_drl},
        {"eval", "Evaluate a weight checkpoint", cmd_eval},
        {"bench", "Time-to-target sweep over samplers and heterogeneity", cmd_bench},
    };
    int (*chosen)(const Options&) = nullptr;
    for (const auto& s : subs) {
        auto* sub = app.add_subcommand(s.name, s.help);
        add_common(sub);
        if (std::string(s.name) == "eval") sub->add_option("--checkpoint", o.checkpoint, "Weight checkpoint");
        sub->callback([&chosen, run = s.run] { chosen = run; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        return chosen(o);
    } catch (const ConfigError& e) {
        spdlog::error("{}", e.what());
        return kExitConfig;
    } catch (const RoundAborted& e) {
        spdlog::error("round aborted: {}", e.what());
        return kExitRuntime;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kExitRuntime;
    }
}
