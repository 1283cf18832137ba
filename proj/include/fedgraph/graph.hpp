#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedgraph/matrix.hpp"

namespace fedgraph {

using NodeId = std::uint32_t;
using ClientId = std::uint16_t;

/// Compressed sparse rows over node ids.
struct Csr {
    std::vector<std::uint32_t> offsets{0};
    std::vector<NodeId> neighbors;

    std::size_t num_rows() const noexcept { return offsets.size() - 1; }
    std::size_t nnz() const noexcept { return neighbors.size(); }
    std::span<const NodeId> row(std::size_t r) const {
        return {neighbors.data() + offsets[r], offsets[r + 1] - offsets[r]};
    }
    std::size_t degree(std::size_t r) const { return offsets[r + 1] - offsets[r]; }
    bool operator==(const Csr&) const = default;
};

/// Undirected node-classification graph. Self-loops are never stored; the
/// normalisation adds them. Labels are -1 for unlabeled nodes.
struct Graph {
    Csr adjacency;
    Matrix features;  // [n x d]
    std::vector<std::int32_t> labels;
    std::size_t num_classes = 0;
    std::vector<std::string> class_names;
    std::vector<std::string> node_names;
    std::vector<std::uint8_t> train_mask, val_mask, test_mask;

    std::size_t num_nodes() const noexcept { return adjacency.num_rows(); }
    std::size_t feature_dim() const noexcept { return features.cols(); }
    bool is_labeled(NodeId v) const { return labels[v] >= 0; }
    bool has_edge(NodeId a, NodeId b) const;

    /// Builds a symmetric, deduplicated adjacency from an edge list (self-loops dropped).
    static Csr build_adjacency(std::size_t n, std::span<const std::pair<NodeId, NodeId>> edges);
};

struct SplitRatios {
    double train = 0.6;
    double val = 0.2;
    double test = 0.2;
};

/// Draws disjoint train/val/test masks over the labeled nodes.
void assign_splits(Graph& g, SplitRatios ratios, std::uint64_t seed);

/// Sparse D̃^{-1/2}(A+I)D̃^{-1/2}; every row starts with its diagonal entry.
struct NormalizedAdjacency {
    std::vector<std::uint32_t> offsets{0};
    std::vector<NodeId> cols;
    std::vector<double> values;

    std::size_t num_rows() const noexcept { return offsets.size() - 1; }
    double at(NodeId r, NodeId c) const;
    Matrix to_dense() const;
};

NormalizedAdjacency normalized_adjacency(const Graph& g);

/// Reads a content file (`id f1 .. fd label`) and a citation file (`id id`).
/// Class names are indexed in sorted order; feature rows are L1-normalised.
Graph load_citation_graph(const std::string& node_file, const std::string& edge_file);

struct SbmSpec {
    std::size_t blocks = 2;
    std::size_t nodes_per_block = 50;
    double p_in = 0.1;
    double p_out = 0.01;
    std::size_t feature_dim = 8;
    double feature_noise = 1.0;
    std::uint64_t seed = 0;
};

/// Stochastic block model with labels = block id and features = one-hot block
/// signal (first `blocks` columns) plus Gaussian noise.
Graph synth_sbm(const SbmSpec& spec);

}  // namespace fedgraph
