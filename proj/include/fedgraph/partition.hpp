#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedgraph/graph.hpp"
#include "fedgraph/matrix.hpp"

namespace fedgraph {

/// An original edge from a local node to a node held by another client.
struct BoundaryEdge {
    NodeId local;     // local id of the endpoint owned here
    ClientId owner;   // client that serves embeddings for `remote`
    NodeId remote;    // global id of the remote endpoint
    double q_weight;  // 1/sqrt(d̃(local) d̃(remote)) from global degrees

    bool operator==(const BoundaryEdge&) const = default;
};

/// One client's share of the graph. Internal edges use local ids; boundary
/// edges reference remote nodes by global id. Degrees are global (restricted
/// to nodes held by at least one client), so Q-weights agree on both sides.
struct ClientGraph {
    ClientId id = 0;
    std::size_t num_classes = 0;
    std::vector<NodeId> local_to_global;
    Csr internal;
    std::vector<double> internal_q;  // aligned with internal.neighbors
    std::vector<std::uint32_t> boundary_offsets{0};
    std::vector<BoundaryEdge> boundary;  // grouped by local node
    std::vector<std::uint32_t> degree;   // global degree (without self-loop) per local node
    std::vector<std::pair<NodeId, std::uint32_t>> remote_degree;  // sorted by global id
    Matrix features;
    std::vector<std::int32_t> labels;
    std::vector<std::uint8_t> train_mask, val_mask, test_mask;

    std::size_t num_nodes() const noexcept { return local_to_global.size(); }
    std::size_t feature_dim() const noexcept { return features.cols(); }

    std::span<const NodeId> internal_neighbors(NodeId v) const { return internal.row(v); }
    std::span<const double> internal_weights(NodeId v) const {
        return {internal_q.data() + internal.offsets[v], internal.degree(v)};
    }
    std::span<const BoundaryEdge> boundary_edges(NodeId v) const {
        return {boundary.data() + boundary_offsets[v], boundary_offsets[v + 1] - boundary_offsets[v]};
    }
    // Self-loop entry of Q: 1/d̃(v).
    double self_weight(NodeId v) const { return 1.0 / static_cast<double>(degree[v] + 1); }
    // |V(v)|: neighbours in the original graph, internal plus external.
    std::size_t neighbor_count(NodeId v) const { return internal.degree(v) + boundary_edges(v).size(); }

    std::vector<NodeId> train_nodes() const;
    std::vector<NodeId> test_nodes() const;
    // Local id of a global node, or -1.
    std::int64_t local_of(NodeId global) const;
    // Whether `remote` is an external neighbour served by `owner` for this client.
    bool has_boundary_neighbor(ClientId owner, NodeId remote) const;

    bool operator==(const ClientGraph&) const = default;
};

enum class PartitionMode { iid, noniid };

struct PartitionSpec {
    std::size_t num_clients = 4;
    double mean_fraction = 0.8;
    double fraction_variance = 0.1;
    PartitionMode mode = PartitionMode::iid;
    std::size_t noniid_classes_per_client = 2;
    std::uint64_t seed = 0;
};

/// Each client draws ξ ~ Normal(mean, variance) clamped to [0.05, 1] and takes
/// ⌈ξ·n⌉ uniformly chosen nodes (overlap across clients allowed).
std::vector<ClientGraph> partition(const Graph& g, const PartitionSpec& spec);

/// Builds client graphs from explicit node sets (global ids). Also the
/// backend of `partition`.
std::vector<ClientGraph> partition_with_assignment(const Graph& g,
                                                   const std::vector<std::vector<NodeId>>& node_sets,
                                                   bool require_training_nodes = true);

/// Whole graph as a single client; used for centralised evaluation.
ClientGraph whole_graph_client(const Graph& g);

// Binary partition cache. Layout is documented in docs/formats.md.
std::vector<std::uint8_t> encode_partition(std::span<const ClientGraph> clients);
std::vector<ClientGraph> decode_partition(std::span<const std::uint8_t> bytes);

}  // namespace fedgraph
