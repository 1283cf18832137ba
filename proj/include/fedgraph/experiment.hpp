#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fedgraph/ddpg.hpp"
#include "fedgraph/federation.hpp"
#include "fedgraph/graph.hpp"
#include "fedgraph/partition.hpp"

namespace fedgraph {

enum class RunMode { fedgraph_fixed, fedgraph_ddpg, full_batch, node_wise, layer_wise, nonshare, allshare };

RunMode parse_run_mode(const std::string& s);
std::string to_string(RunMode m);

struct Seeds {
    std::uint64_t partition = 1;
    std::uint64_t training = 2;
    std::uint64_t controller = 3;
};

/// Everything needed to reproduce one experiment.
struct RunConfig {
    std::string dataset;  // directory holding cora.content and cora.cites
    std::optional<SbmSpec> synth;
    PartitionSpec partition;
    TrainConfig train;
    RunMode mode = RunMode::fedgraph_fixed;
    SamplingPolicy policy{256, {0.5, 0.5}};
    std::vector<std::uint32_t> fanouts{25, 10};
    std::uint32_t layer_size = 256;
    ExchangeMode exchange = ExchangeMode::stale;
    ClockModel clock;
    RewardConfig reward;
    DdpgConfig ddpg;
    ActionCodec codec;  // num_clients / num_layers are filled in from the partition
    bool pin_kappa = true;
    std::size_t rounds = 100;  // T
    Seeds seeds;
    std::size_t workers = 0;  // 0 = one per client
    std::string out_dir = "out";

    void validate() const;
};

/// Loads or synthesises the graph and assigns the train/val/test split.
Graph load_graph(const RunConfig& cfg);
FederationConfig federation_config(const RunConfig& cfg);

/// Flattened {W̄, W_1, …, W_|C|} in (client, layer, row-major) order.
std::vector<double> observe_weights(const Federation& fed);

/// One controller step: encode the observed weights, store the previous
/// transition, update, and decode the next action into per-client policies.
std::vector<SamplingPolicy> gen_sampling(DdpgController& ctl, const ActionCodec& codec, const Federation& fed,
                                         std::optional<double> r_prev);

/// Federated training as a control environment. Each episode restarts the
/// federation from fresh weights seeded by base_seed + episode.
class FederatedEnvironment : public ControlEnvironment {
public:
    FederatedEnvironment(Federation& fed, ActionCodec codec, RewardConfig reward, std::uint64_t base_seed);
    void reset(std::size_t episode) override;
    std::vector<double> observe() override;
    double step(std::span<const double> action) override;

    const RewardConfig& reward_config() const noexcept { return reward_; }
    const std::vector<RoundRecord>& records() const noexcept { return records_; }
    std::size_t episode() const noexcept { return episode_; }

private:
    Federation& fed_;
    ActionCodec codec_;
    RewardConfig reward_;
    std::uint64_t base_seed_;
    std::size_t episode_ = 0;
    std::vector<RoundRecord> records_;
};

/// Fills rec.reward, calibrating cfg.alpha from the first δ when it is <= 0.
void score_round(RoundRecord& rec, RewardConfig& cfg);

/// T rounds of a fixed-policy mode (every mode except fedgraph_ddpg).
std::vector<RoundRecord> run_training(Federation& fed, const RunConfig& cfg,
                                      const std::function<void(const RoundRecord&)>& on_round = {});

ActionCodec make_codec(const RunConfig& cfg, std::size_t num_clients);

/// Sweep of fixed-policy modes over partition variances. Each seed drives
/// both the partition and the training run.
struct BenchMatrix {
    std::vector<RunMode> modes{RunMode::full_batch};
    std::vector<double> variances{0.1, 0.5, 1.0};
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    double target = 0.7;           // accuracy that stops the clock
    std::size_t max_rounds = 200;  // per run; unreached targets report +inf
};

struct BenchRun {
    double time_to_target = 0.0;  // Σδ up to and including the first round with λ >= target
    std::size_t rounds = 0;       // rounds executed
    double final_accuracy = 0.0;
    bool reached = false;
};

struct BenchRow {
    std::string sampler;
    double variance = 0.0;
    double time_to_target = 0.0;  // median over seeds
    double rounds_to_target = 0.0;
    double final_accuracy = 0.0;
    std::size_t reached = 0;  // seeds that hit the target
    std::size_t seeds = 0;
};

BenchRun run_to_target(const RunConfig& cfg, double target, std::size_t max_rounds);
/// One row per (mode, variance), sorted by sampler name then variance.
std::vector<BenchRow> run_bench(const RunConfig& base, const BenchMatrix& matrix,
                                const std::function<void(const BenchRow&)>& on_row = {});

inline constexpr const char* kBenchHeader =
    "sampler,variance,time_to_target,rounds_to_target,final_accuracy,reached,seeds";
void write_bench_header(std::ostream& out);
void write_bench_row(std::ostream& out, const BenchRow& row);

}  // namespace fedgraph
