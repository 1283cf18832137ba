#include "run_config.hpp"

#include <yaml-cpp/yaml.h>

#include <filesystem>
#include <set>

#include "fedgraph/errors.hpp"

namespace fedgraph::cli {

namespace {

namespace fs = std::filesystem;

void allow_keys(const YAML::Node& node, const std::string& where, std::initializer_list<const char*> keys) {
    if (!node.IsMap()) throw ConfigError("config: '" + where + "' must be a mapping");
    const std::set<std::string> ok(keys.begin(), keys.end());
    for (const auto& kv : node) {
        const auto key = kv.first.as<std::string>();
        if (!ok.count(key)) throw ConfigError("config: unknown key '" + (where.empty() ? key : where + "." + key) + "'");
    }
}

template <class T>
void read(const YAML::Node& node, const char* key, T& out, const std::string& where) {
    const auto v = node[key];
    if (!v) return;
    try {
        out = v.as<T>();
    } catch (const YAML::Exception&) {
        throw ConfigError("config: bad value for '" + (where.empty() ? std::string(key) : where + "." + key) + "'");
    }
}

std::string resolve(const fs::path& base, const std::string& p) {
    if (p.empty() || fs::path(p).is_absolute()) return p;
    return (base / p).lexically_normal().string();
}

}  // namespace

CliConfig load_config(const std::string& path) {
    YAML::Node root;
    try {
        root = YAML::LoadFile(path);
    } catch (const YAML::BadFile&) {
        throw ConfigError("config: cannot open " + path);
    } catch (const YAML::Exception& e) {
        throw ConfigError("config: " + path + ": " + e.what());
    }
    if (root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
    allow_keys(root, "", {"dataset", "synth", "mode", "rounds", "workers", "out", "seeds", "partition", "train",
                          "sampler", "exchange", "clock", "reward", "ddpg", "codec", "bench"});

    const fs::path base = fs::absolute(path).parent_path();
    CliConfig c;
    RunConfig& r = c.run;

    std::string dataset;
    read(root, "dataset", dataset, "");
    r.dataset = resolve(base, dataset);
    if (const auto s = root["synth"]) {
        allow_keys(s, "synth", {"blocks", "nodes_per_block", "p_in", "p_out", "feature_dim", "feature_noise", "seed"});
        SbmSpec spec;
        read(s, "blocks", spec.blocks, "synth");
        read(s, "nodes_per_block", spec.nodes_per_block, "synth");
        read(s, "p_in", spec.p_in, "synth");
        read(s, "p_out", spec.p_out, "synth");
        read(s, "feature_dim", spec.feature_dim, "synth");
        read(s, "feature_noise", spec.feature_noise, "synth");
        read(s, "seed", spec.seed, "synth");
        r.synth = spec;
    }

    std::string mode = to_string(r.mode);
    read(root, "mode", mode, "");
    r.mode = parse_run_mode(mode);
    read(root, "rounds", r.rounds, "");
    read(root, "workers", r.workers, "");
    read(root, "out", r.out_dir, "");

    if (const auto s = root["seeds"]) {
        allow_keys(s, "seeds", {"partition", "training", "controller"});
        read(s, "partition", r.seeds.partition, "seeds");
        read(s, "training", r.seeds.training, "seeds");
        read(s, "controller", r.seeds.controller, "seeds");
    }
    r.partition.seed = r.seeds.partition;

    if (const auto p = root["partition"]) {
        allow_keys(p, "partition", {"clients", "mean_fraction", "variance", "mode", "classes_per_client", "cache"});
        read(p, "clients", r.partition.num_clients, "partition");
        read(p, "mean_fraction", r.partition.mean_fraction, "partition");
        read(p, "variance", r.partition.fraction_variance, "partition");
        std::string pm = "iid";
        read(p, "mode", pm, "partition");
        if (pm == "iid") r.partition.mode = PartitionMode::iid;
        else if (pm == "noniid") r.partition.mode = PartitionMode::noniid;
        else throw ConfigError("config: partition.mode must be iid or noniid");
        read(p, "classes_per_client", r.partition.noniid_classes_per_client, "partition");
        std::string cache;
        read(p, "cache", cache, "partition");
        c.partition_cache = resolve(base, cache);
    }

    if (const auto t = root["train"]) {
        allow_keys(t, "train", {"layers", "hidden", "dropout", "optimizer", "lr", "local_iterations"});
        read(t, "layers", r.train.num_layers, "train");
        read(t, "hidden", r.train.hidden_dim, "train");
        read(t, "dropout", r.train.dropout, "train");
        std::string opt = "adam";
        read(t, "optimizer", opt, "train");
        if (opt == "adam") r.train.optimizer.kind = OptimizerKind::adam;
        else if (opt == "sgd") r.train.optimizer.kind = OptimizerKind::sgd;
        else throw ConfigError("config: train.optimizer must be adam or sgd");
        read(t, "lr", r.train.optimizer.lr, "train");
        read(t, "local_iterations", r.train.local_iterations, "train");
    }

    if (const auto s = root["sampler"]) {
        allow_keys(s, "sampler", {"batch_size", "probabilities", "fanouts", "layer_size"});
        read(s, "batch_size", r.policy.batch_size, "sampler");
        read(s, "probabilities", r.policy.probabilities, "sampler");
        read(s, "fanouts", r.fanouts, "sampler");
        read(s, "layer_size", r.layer_size, "sampler");
    }

    std::string exchange = "stale";
    read(root, "exchange", exchange, "");
    if (exchange == "stale") r.exchange = ExchangeMode::stale;
    else if (exchange == "synchronous") r.exchange = ExchangeMode::synchronous;
    else throw ConfigError("config: exchange must be stale or synchronous");

    if (const auto k = root["clock"]) {
        allow_keys(k, "clock", {"kind", "c1", "c2"});
        std::string kind = "simulated";
        read(k, "kind", kind, "clock");
        if (kind == "simulated") r.clock.kind = ClockModel::Kind::simulated;
        else if (kind == "wallclock") r.clock.kind = ClockModel::Kind::wallclock;
        else throw ConfigError("config: clock.kind must be simulated or wallclock");
        read(k, "c1", r.clock.c1, "clock");
        read(k, "c2", r.clock.c2, "clock");
    }

    if (const auto w = root["reward"]) {
        allow_keys(w, "reward", {"omega", "target", "alpha", "beta"});
        read(w, "omega", r.reward.omega, "reward");
        read(w, "target", r.reward.target, "reward");
        read(w, "alpha", r.reward.alpha, "reward");
        read(w, "beta", r.reward.beta, "reward");
    }

    if (const auto d = root["ddpg"]) {
        allow_keys(d, "ddpg", {"state_dim", "hidden", "actor_lr", "critic_lr", "gamma", "phi", "batch",
                               "buffer_capacity", "noise_sigma", "noise_decay", "noise_floor", "pca_warmup",
                               "updates_per_step", "state_clip", "episodes", "rounds"});
        auto& q = r.ddpg;
        read(d, "state_dim", q.state_dim, "ddpg");
        read(d, "hidden", q.hidden, "ddpg");
        read(d, "actor_lr", q.actor_lr, "ddpg");
        read(d, "critic_lr", q.critic_lr, "ddpg");
        read(d, "gamma", q.gamma, "ddpg");
        read(d, "phi", q.phi, "ddpg");
        read(d, "batch", q.batch, "ddpg");
        read(d, "buffer_capacity", q.buffer_capacity, "ddpg");
        read(d, "noise_sigma", q.noise_sigma, "ddpg");
        read(d, "noise_decay", q.noise_decay, "ddpg");
        read(d, "noise_floor", q.noise_floor, "ddpg");
        read(d, "pca_warmup", q.pca_warmup, "ddpg");
        read(d, "updates_per_step", q.updates_per_step, "ddpg");
        read(d, "state_clip", q.state_clip, "ddpg");
        read(d, "episodes", q.episodes, "ddpg");
        read(d, "rounds", q.rounds, "ddpg");
    }

    if (const auto a = root["codec"]) {
        allow_keys(a, "codec", {"kappa_min", "kappa_max", "p_min", "p_max", "pin_kappa"});
        read(a, "kappa_min", r.codec.kappa_min, "codec");
        read(a, "kappa_max", r.codec.kappa_max, "codec");
        read(a, "p_min", r.codec.p_min, "codec");
        read(a, "p_max", r.codec.p_max, "codec");
        read(a, "pin_kappa", r.pin_kappa, "codec");
    }

    if (const auto b = root["bench"]) {
        allow_keys(b, "bench", {"modes", "variances", "seeds", "target", "max_rounds"});
        std::vector<std::string> modes;
        read(b, "modes", modes, "bench");
        if (!modes.empty()) {
            c.bench.modes.clear();
            for (const auto& m : modes) c.bench.modes.push_back(parse_run_mode(m));
        }
        read(b, "variances", c.bench.variances, "bench");
        read(b, "seeds", c.bench.seeds, "bench");
        read(b, "target", c.bench.target, "bench");
        read(b, "max_rounds", c.bench.max_rounds, "bench");
    }
    return c;
}

}  // namespace fedgraph::cli
