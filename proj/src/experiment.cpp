#include "fedgraph/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <ostream>
#include <map>

#include "fedgraph/errors.hpp"

namespace fedgraph {

namespace {
const std::map<std::string, RunMode> kModes{
    {"fedgraph_fixed", RunMode::fedgraph_fixed}, {"fedgraph_ddpg", RunMode::fedgraph_ddpg},
    {"full_batch", RunMode::full_batch},         {"node_wise", RunMode::node_wise},
    {"layer_wise", RunMode::layer_wise},         {"nonshare", RunMode::nonshare},
    {"allshare", RunMode::allshare},
};
}

RunMode parse_run_mode(const std::string& s) {
    auto it = kModes.find(s);
    if (it == kModes.end()) throw ConfigError("unknown sampler mode '" + s + "'");
    return it->second;
}

std::string to_string(RunMode m) {
    for (const auto& [name, mode] : kModes)
        if (mode == m) return name;
    return "unknown";
}

void RunConfig::validate() const {
    if (!synth) {
        if (dataset.empty()) throw ConfigError("config: dataset path or synth spec required");
        for (const char* f : {"cora.content", "cora.cites"})
            if (!std::filesystem::exists(std::filesystem::path(dataset) / f))
                throw ConfigError("config: missing dataset file " + (std::filesystem::path(dataset) / f).string());
    }
    if (partition.num_clients == 0 || partition.num_clients > 65535)
        throw ConfigError("config: num_clients must be in [1, 65535]");
    if (!(partition.mean_fraction > 0.0 && partition.mean_fraction <= 1.0))
        throw ConfigError("config: mean_fraction must lie in (0, 1]");
    if (partition.fraction_variance < 0.0) throw ConfigError("config: fraction_variance must be >= 0");
    try {
        train.validate();
        policy.validate(train.num_layers);
        if (mode == RunMode::fedgraph_ddpg) ddpg.validate();
    } catch (const PreconditionError& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    if (fanouts.size() + 1 != train.num_layers) throw ConfigError("config: fanouts must have num_layers-1 entries");
    if (clock.c1 < 0 || clock.c2 < 0 || clock.c1 + clock.c2 <= 0) throw ConfigError("config: bad clock coefficients");
    if (!(reward.omega > 1.0)) throw ConfigError("config: Ω must exceed 1");
    if (!(reward.target > 0.0 && reward.target <= 1.0)) throw ConfigError("config: Λ must lie in (0, 1]");
    if (!(codec.kappa_min >= 1 && codec.kappa_max >= codec.kappa_min)) throw ConfigError("config: bad κ bounds");
    if (!(codec.p_min > 0 && codec.p_min <= codec.p_max && codec.p_max <= 1.0))
        throw ConfigError("config: bad p bounds");
}

Graph load_graph(const RunConfig& cfg) {
    Graph g;
    if (cfg.synth) {
        g = synth_sbm(*cfg.synth);
    } else {
        const auto dir = std::filesystem::path(cfg.dataset);
        g = load_citation_graph((dir / "cora.content").string(), (dir / "cora.cites").string());
    }
    assign_splits(g, SplitRatios{}, cfg.seeds.partition);
    return g;
}

FederationConfig federation_config(const RunConfig& cfg) {
    FederationConfig f;
    f.train = cfg.train;
    f.plan.policy = cfg.policy;
    f.plan.fanouts = cfg.fanouts;
    f.plan.layer_size = cfg.layer_size;
    switch (cfg.mode) {
        case RunMode::full_batch: f.plan.kind = SamplerKind::full_batch; break;
        case RunMode::node_wise: f.plan.kind = SamplerKind::node_wise; break;
        case RunMode::layer_wise: f.plan.kind = SamplerKind::layer_wise; break;
        default: f.plan.kind = SamplerKind::fedgraph; break;
    }
    if (cfg.mode == RunMode::nonshare) f.share = ShareMode::non_share;
    if (cfg.mode == RunMode::allshare) f.share = ShareMode::all_share;
    f.exchange = cfg.exchange;
    f.clock = cfg.clock;
    f.workers = cfg.workers == 0 ? cfg.partition.num_clients : cfg.workers;
    f.seed = cfg.seeds.training;
    return f;
}

ActionCodec make_codec(const RunConfig& cfg, std::size_t num_clients) {
    ActionCodec c = cfg.codec;
    c.num_clients = num_clients;
    c.num_layers = cfg.train.num_layers;
    if (cfg.pin_kappa) c.pinned_kappa = cfg.policy.batch_size;
    else c.pinned_kappa.reset();
    return c;
}

std::vector<double> observe_weights(const Federation& fed) {
    auto out = flatten(fed.global_weights());
    for (const auto& w : fed.client_weights()) {
        const auto f = flatten(w);
        out.insert(out.end(), f.begin(), f.end());
    }
    return out;
}

std::vector<SamplingPolicy> gen_sampling(DdpgController& ctl, const ActionCodec& codec, const Federation& fed,
                                         std::optional<double> r_prev) {
    return codec.decode(ctl.step(observe_weights(fed), r_prev));
}

void score_round(RoundRecord& rec, RewardConfig& cfg) {
    if (cfg.alpha <= 0.0) {
        cfg.alpha = 1.0 / rec.delta;
        cfg.beta = 0.0;
    }
    rec.reward = reward(rec.lambda, rec.delta, cfg);
}

FederatedEnvironment::FederatedEnvironment(Federation& fed, ActionCodec codec, RewardConfig reward,
                                           std::uint64_t base_seed)
    : fed_(fed), codec_(std::move(codec)), reward_(reward), base_seed_(base_seed) {
    if (codec_.num_clients != fed.clients().size()) throw PreconditionError("FederatedEnvironment: codec client count");
}

void FederatedEnvironment::reset(std::size_t episode) {
    episode_ = episode;
    fed_.reset(base_seed_ + episode);
}

std::vector<double> FederatedEnvironment::observe() { return observe_weights(fed_); }

double FederatedEnvironment::step(std::span<const double> action) {
    fed_.set_policies(codec_.decode(action));
    auto rec = fed_.run_round();
    score_round(rec, reward_);
    records_.push_back(rec);
    return rec.reward;
}

std::vector<RoundRecord> run_training(Federation& fed, const RunConfig& cfg,
                                      const std::function<void(const RoundRecord&)>& on_round) {
    if (cfg.mode == RunMode::fedgraph_ddpg) throw PreconditionError("run_training: use the controller for ddpg mode");
    RewardConfig reward = cfg.reward;
    std::vector<RoundRecord> out;
    for (std::size_t t = 0; t < cfg.rounds; ++t) {
        auto rec = fed.run_round();
        score_round(rec, reward);
        if (on_round) on_round(rec);
        out.push_back(std::move(rec));
    }
    return out;
}

namespace {

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    if (n == 0) return std::numeric_limits<double>::quiet_NaN();
    if (n % 2 == 1) return v[n / 2];
    const double a = v[n / 2 - 1], b = v[n / 2];
    // Keeps inf instead of producing nan when both halves are unreached.
    return std::isinf(a) || std::isinf(b) ? std::max(a, b) : 0.5 * (a + b);
}

}  // namespace

BenchRun run_to_target(const RunConfig& cfg, double target, std::size_t max_rounds) {
    if (cfg.mode == RunMode::fedgraph_ddpg) throw ConfigError("bench: ddpg mode has no fixed policy");
    const auto g = load_graph(cfg);
    Federation fed(partition(g, cfg.partition), federation_config(cfg));
    BenchRun out;
    for (std::size_t t = 0; t < max_rounds; ++t) {
        const auto rec = fed.run_round();
        out.time_to_target += rec.delta;
        out.rounds = t + 1;
        out.final_accuracy = rec.lambda;
        if (rec.lambda >= target) {
            out.reached = true;
            return out;
        }
    }
    out.time_to_target = std::numeric_limits<double>::infinity();
    return out;
}

std::vector<BenchRow> run_bench(const RunConfig& base, const BenchMatrix& matrix,
                                const std::function<void(const BenchRow&)>& on_row) {
    if (matrix.modes.empty() || matrix.variances.empty() || matrix.seeds.empty())
        throw ConfigError("bench: empty config matrix");
    auto modes = matrix.modes;
    std::sort(modes.begin(), modes.end(), [](RunMode a, RunMode b) { return to_string(a) < to_string(b); });
    auto variances = matrix.variances;
    std::sort(variances.begin(), variances.end());

    std::vector<BenchRow> rows;
    for (auto mode : modes)
        for (double var : variances) {
            BenchRow row;
            row.sampler = to_string(mode);
            row.variance = var;
            row.seeds = matrix.seeds.size();
            std::vector<double> times, rounds, accs;
            for (auto seed : matrix.seeds) {
                RunConfig cfg = base;
                cfg.mode = mode;
                cfg.partition.fraction_variance = var;
                cfg.partition.seed = seed;
                cfg.seeds.partition = seed;
                cfg.seeds.training = seed;
                const auto run = run_to_target(cfg, matrix.target, matrix.max_rounds);
                times.push_back(run.time_to_target);
                rounds.push_back(run.reached ? static_cast<double>(run.rounds)
                                             : std::numeric_limits<double>::infinity());
                accs.push_back(run.final_accuracy);
                row.reached += run.reached ? 1 : 0;
            }
            row.time_to_target = median(times);
            row.rounds_to_target = median(rounds);
            row.final_accuracy = median(accs);
            if (on_row) on_row(row);
            rows.push_back(std::move(row));
        }
    return rows;
}

void write_bench_header(std::ostream& out) { out << kBenchHeader << '\n'; }

void write_bench_row(std::ostream& out, const BenchRow& row) {
    const auto old = out.precision(10);
    out << row.sampler << ',' << row.variance << ',' << row.time_to_target << ',' << row.rounds_to_target << ','
        << row.final_accuracy << ',' << row.reached << ',' << row.seeds << '\n';
    out.precision(old);
}

}  // namespace fedgraph
