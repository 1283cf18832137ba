#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <unordered_map>
#include <vector>

#include "fedgraph/matrix.hpp"
#include "fedgraph/numeric.hpp"
#include "fedgraph/partition.hpp"
#include "fedgraph/rng.hpp"
#include "fedgraph/sampler.hpp"

namespace fedgraph {

/// Trainable feature weights W^(1..L-1); layers[l] is [d_l x d_{l+1}].
struct GcnWeights {
    std::vector<Matrix> layers;

    std::vector<std::size_t> dims() const;
    std::size_t num_layers() const noexcept { return layers.size() + 1; }
    std::size_t parameter_count() const;
    bool operator==(const GcnWeights&) const = default;

    static GcnWeights zeros(std::span<const std::size_t> dims);
    static GcnWeights glorot(std::span<const std::size_t> dims, RngStream& rng);
};

// Flattened (layer, row-major) copy of all weights.
std::vector<double> flatten(const GcnWeights& w);

std::vector<std::uint8_t> encode_weights(const GcnWeights& w);
GcnWeights decode_weights(std::span<const std::uint8_t> bytes);

struct TrainConfig {
    std::size_t num_layers = 3;  // L, counting the input layer
    std::size_t hidden_dim = 16;
    double dropout = 0.5;
    AdamConfig optimizer{OptimizerKind::adam, 0.01};
    std::size_t local_iterations = 1;

    std::vector<std::size_t> layer_dims(std::size_t feature_dim, std::size_t num_classes) const;
    void validate() const;
};

/// Rows h_j^(l)(u)·W_j^(l) received from other clients, keyed by
/// (0-based weight layer, serving client, global node id).
class ExternalRows {
public:
    void insert(std::size_t layer, ClientId owner, NodeId global, std::span<const double> row);
    const std::vector<double>* find(std::size_t layer, ClientId owner, NodeId global) const;
    std::size_t size() const noexcept { return rows_.size(); }
    bool empty() const noexcept { return rows_.empty(); }

private:
    static std::uint64_t key(std::size_t layer, ClientId owner, NodeId global) {
        return (std::uint64_t{static_cast<std::uint8_t>(layer)} << 56) | (std::uint64_t{owner} << 32) | global;
    }
    std::unordered_map<std::uint64_t, std::vector<double>> rows_;
};

// Sentinel for "never use external rows" (the nonShare ablation).
inline constexpr std::size_t kNoExternal = std::numeric_limits<std::size_t>::max();

struct ForwardOptions {
    bool train = false;
    double dropout = 0.0;
    // First 0-based weight layer whose aggregation includes external rows.
    // 1 is the privacy-preserving default (paper layer 2); 0 shares raw-feature products.
    std::size_t external_from = 1;
};

struct ForwardTrace {
    const LayerPlan* plan = nullptr;
    GcnWeights weights;
    SparseMatrix features;           // layer-1 input after dropout (rows = plan.layers[0])
    std::vector<Matrix> inputs;      // H per layer; inputs[0] is left empty in favour of `features`
    std::vector<Matrix> masks;       // dropout masks (empty when disabled)
    std::vector<Matrix> pre_activations;  // Z^(l+1) per weight layer
};

struct ForwardResult {
    Matrix logits;  // rows follow plan.layers.back()
    ForwardTrace trace;
};

ForwardResult forward(const LayerPlan& plan, const ClientGraph& cg, const GcnWeights& w, const ExternalRows& ext,
                      const ForwardOptions& opts, RngStream* rng = nullptr);

/// dL/dW for every layer; external rows are constants.
GcnWeights backward(const ForwardTrace& trace, const Matrix& logits_grad);

std::vector<std::int32_t> batch_labels(const ClientGraph& cg, const LayerPlan& plan);

/// Argmax accuracy; ties go to the lowest class index.
double accuracy(const Matrix& logits, std::span<const std::int32_t> labels);
std::size_t count_correct(const Matrix& logits, std::span<const std::int32_t> labels);

struct ExchangeStats {
    std::size_t values = 0;    // f64 payload values received
    std::size_t bytes = 0;     // framed message bytes, both directions
    std::size_t messages = 0;
};

/// Client-side view of the embedding exchange.
class Exchange {
public:
    virtual ~Exchange() = default;
    // Fetch every external row referenced by `plan` at weight layers >= first_layer.
    virtual ExternalRows fetch(ClientId requester, const LayerPlan& plan, std::size_t first_layer,
                               std::size_t iteration, ExchangeStats& stats) = 0;
};

enum class SamplerKind { fedgraph, full_batch, node_wise, layer_wise };

struct PlanSpec {
    SamplerKind kind = SamplerKind::fedgraph;
    SamplingPolicy policy;
    std::vector<std::uint32_t> fanouts{25, 10};
    std::uint32_t layer_size = 256;
};

LayerPlan build_plan(const ClientGraph& cg, const PlanSpec& spec, std::size_t num_layers, RngStream& rng);

struct LocalResult {
    GcnWeights weights;
    std::vector<double> losses;
    std::size_t batch_size = 0;  // κ actually used (last iteration)
    std::size_t nodes_processed = 0;
    std::size_t edges_processed = 0;
    ExchangeStats exchange;
};

/// One sample → fetch → forward → loss → backward → optimizer step on `w`,
/// accumulating statistics into `result`.
void local_train_step(const ClientGraph& cg, GcnWeights& w, const PlanSpec& plan_spec, const TrainConfig& cfg,
                      Exchange* exchange, std::size_t external_from, std::vector<AdamState>& optimizer,
                      RngStream& rng, std::size_t iteration, LocalResult& result);

/// Algorithm-1 style local round: start from the downloaded global weights,
/// run cfg.local_iterations of sample → fetch → forward → loss → backward → step.
/// `exchange` may be null when no external rows are used.
LocalResult local_train_round(const ClientGraph& cg, const GcnWeights& global, const PlanSpec& plan_spec,
                              const TrainConfig& cfg, Exchange* exchange, std::size_t external_from,
                              std::vector<AdamState>& optimizer, RngStream& rng);

struct EvalCounts {
    std::size_t correct = 0;
    std::size_t total = 0;
    double accuracy() const { return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total); }
};

/// Unsampled forward over the client's full neighbourhood of `nodes`. With an
/// exchange, external rows for weight layers >= external_from are fetched
/// under `iteration`.
EvalCounts evaluate_counts(const ClientGraph& cg, const GcnWeights& w, std::span<const NodeId> nodes,
                           Exchange* exchange = nullptr, std::size_t external_from = kNoExternal,
                           std::size_t iteration = 0);

double evaluate(const ClientGraph& cg, const GcnWeights& w, std::span<const NodeId> nodes);
double evaluate(const Graph& g, const GcnWeights& w, std::span<const NodeId> nodes);

}  // namespace fedgraph
