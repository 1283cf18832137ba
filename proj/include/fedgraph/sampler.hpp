#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "fedgraph/partition.hpp"
#include "fedgraph/rng.hpp"

namespace fedgraph {

/// A node in a sampled layer: either a local node (local id) or a boundary
/// node held by another client (global id + serving client).
struct NodeRef {
    NodeId id = 0;
    ClientId owner = 0;
    bool external = false;

    static NodeRef local(NodeId v) { return {v, 0, false}; }
    static NodeRef remote(ClientId owner, NodeId global) { return {global, owner, true}; }
    bool operator==(const NodeRef&) const = default;
};

struct NodeRefHash {
    std::size_t operator()(const NodeRef& r) const noexcept {
        return std::hash<std::uint64_t>{}((std::uint64_t{r.id} << 17) ^ (std::uint64_t{r.owner} << 1) ^
                                          std::uint64_t{r.external});
    }
};

/// Row-compressed sparse matrix over positions in two node lists.
struct SparseRows {
    std::vector<std::uint32_t> offsets{0};
    std::vector<std::uint32_t> cols;
    std::vector<double> values;

    std::size_t num_rows() const noexcept { return offsets.size() - 1; }
    std::size_t nnz() const noexcept { return cols.size(); }
};

struct SamplingPolicy {
    std::uint32_t batch_size = 256;     // κ
    std::vector<double> probabilities;  // p^(1) .. p^(L-1), each in (0, 1]

    void validate(std::size_t num_layers) const;
    bool operator==(const SamplingPolicy&) const = default;
};

/// Sampled computation graph. layers[0] is V^(1) (input layer), layers[L-1]
/// is the mini-batch V^(L). adjacency[l] maps rows of layers[l+1] to columns
/// of layers[l]. Rows for external nodes are always empty.
struct LayerPlan {
    std::vector<std::vector<NodeRef>> layers;
    std::vector<SparseRows> adjacency;

    std::size_t num_layers() const noexcept { return layers.size(); }
    std::vector<NodeId> batch() const;
    std::size_t edge_count() const;
    std::size_t node_count() const;
};

/// Per-neighbour Bernoulli(p^(l)) selection with |V(v)|/|N(v)| rescaling of
/// the selected Q entries. The self-loop entry is always kept, unscaled; an
/// empty draw falls back to one uniformly chosen neighbour.
LayerPlan model_construct(const ClientGraph& cg, const SamplingPolicy& policy, RngStream& rng);

/// Plan over every neighbour of `targets` (no sampling, no rng).
LayerPlan full_plan(const ClientGraph& cg, std::span<const NodeId> targets, std::size_t num_layers);

/// All training nodes as the batch, all neighbours at every layer.
LayerPlan full_batch_plan(const ClientGraph& cg, std::size_t num_layers);

/// GraphSAGE-style fixed fan-out sampling; fanouts[l] applies to adjacency[l].
LayerPlan nodewise_plan(const ClientGraph& cg, std::uint32_t batch_size, std::span<const std::uint32_t> fanouts,
                        RngStream& rng);

/// FastGCN-style layer sampling: each layer draws `layer_size` nodes with
/// probability proportional to d̃ (with replacement); entries are importance
/// weighted by draw multiplicity / (layer_size * q(u)).
LayerPlan layerwise_plan(const ClientGraph& cg, std::uint32_t batch_size, std::uint32_t layer_size,
                         std::size_t num_layers, RngStream& rng);

}  // namespace fedgraph
