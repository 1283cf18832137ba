#include "fedgraph/graph.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "fedgraph/errors.hpp"
#include "fedgraph/rng.hpp"

namespace fedgraph {

bool Graph::has_edge(NodeId a, NodeId b) const {
    auto r = adjacency.row(a);
    return std::binary_search(r.begin(), r.end(), b);
}

Csr Graph::build_adjacency(std::size_t n, std::span<const std::pair<NodeId, NodeId>> edges) {
    std::vector<std::vector<NodeId>> lists(n);
    for (auto [a, b] : edges) {
        if (a >= n || b >= n) throw PreconditionError("build_adjacency: node id out of range");
        if (a == b) continue;
        lists[a].push_back(b);
        lists[b].push_back(a);
    }
    Csr csr;
    csr.offsets.reserve(n + 1);
    for (auto& l : lists) {
        std::sort(l.begin(), l.end());
        l.erase(std::unique(l.begin(), l.end()), l.end());
        csr.neighbors.insert(csr.neighbors.end(), l.begin(), l.end());
        csr.offsets.push_back(static_cast<std::uint32_t>(csr.neighbors.size()));
    }
    return csr;
}

void assign_splits(Graph& g, SplitRatios ratios, std::uint64_t seed) {
    const std::size_t n = g.num_nodes();
    g.train_mask.assign(n, 0);
    g.val_mask.assign(n, 0);
    g.test_mask.assign(n, 0);
    std::vector<NodeId> labeled;
    for (NodeId v = 0; v < n; ++v)
        if (g.is_labeled(v)) labeled.push_back(v);
    auto rng = RngStream::derive(seed, Stream::split);
    rng.shuffle(labeled);
    const double total = ratios.train + ratios.val + ratios.test;
    const auto n_train = static_cast<std::size_t>(std::llround(labeled.size() * ratios.train / total));
    const auto n_val = static_cast<std::size_t>(std::llround(labeled.size() * ratios.val / total));
    for (std::size_t i = 0; i < labeled.size(); ++i) {
        if (i < n_train)
            g.train_mask[labeled[i]] = 1;
        else if (i < n_train + n_val)
            g.val_mask[labeled[i]] = 1;
        else
            g.test_mask[labeled[i]] = 1;
    }
}

double NormalizedAdjacency::at(NodeId r, NodeId c) const {
    for (auto k = offsets[r]; k < offsets[r + 1]; ++k)
        if (cols[k] == c) return values[k];
    return 0.0;
}

Matrix NormalizedAdjacency::to_dense() const {
    Matrix m(num_rows(), num_rows());
    for (std::size_t r = 0; r < num_rows(); ++r)
        for (auto k = offsets[r]; k < offsets[r + 1]; ++k) m(r, cols[k]) = values[k];
    return m;
}

NormalizedAdjacency normalized_adjacency(const Graph& g) {
    const auto& a = g.adjacency;
    const std::size_t n = a.num_rows();
    auto weight = [&](NodeId v, NodeId u) {
        return 1.0 / std::sqrt(static_cast<double>(a.degree(v) + 1) * static_cast<double>(a.degree(u) + 1));
    };

    NormalizedAdjacency q;
    q.offsets.reserve(n + 1);
    q.cols.reserve(a.nnz() + n);
    q.values.reserve(a.nnz() + n);
    for (NodeId v = 0; v < n; ++v) {
        q.cols.push_back(v);
        q.values.push_back(1.0 / static_cast<double>(a.degree(v) + 1));
        for (NodeId u : a.row(v)) {
            q.cols.push_back(u);
            q.values.push_back(weight(v, u));
        }
        q.offsets.push_back(static_cast<std::uint32_t>(q.cols.size()));
    }
    return q;
}

namespace {

std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) out.push_back(std::move(tok));
    return out;
}

bool blank(const std::string& line) {
    return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

Graph load_citation_graph(const std::string& node_file, const std::string& edge_file) {
    std::ifstream nodes_in(node_file);
    if (!nodes_in) throw IngestError("cannot open node file '" + node_file + "'");

    std::vector<std::string> ids;
    std::vector<std::string> raw_labels;
    std::vector<double> feats;
    std::unordered_map<std::string, NodeId> index;
    std::size_t dim = 0;
    bool dim_known = false;

    std::string line;
    std::size_t lineno = 0;
    while (std::getline(nodes_in, line)) {
        ++lineno;
        if (blank(line)) continue;
        auto toks = split_ws(line);
        const auto where = node_file + ":" + std::to_string(lineno);
        if (toks.size() < 2) throw IngestError(where + ": expected `id [features...] label`");
        const std::size_t d = toks.size() - 2;
        if (!dim_known) {
            dim = d;
            dim_known = true;
        } else if (d != dim) {
            throw IngestError(where + ": expected " + std::to_string(dim) + " features, got " + std::to_string(d));
        }
        if (!index.emplace(toks[0], static_cast<NodeId>(ids.size())).second)
            throw IngestError(where + ": duplicate node id '" + toks[0] + "'");
        ids.push_back(toks[0]);
        for (std::size_t i = 1; i + 1 < toks.size(); ++i) {
            char* end = nullptr;
            errno = 0;
            const double x = std::strtod(toks[i].c_str(), &end);
            if (end == toks[i].c_str() || *end != '\0' || errno == ERANGE || !std::isfinite(x))
                throw IngestError(where + ": malformed feature value '" + toks[i] + "'");
            feats.push_back(x);
        }
        raw_labels.push_back(toks.back());
    }

    Graph g;
    const std::size_t n = ids.size();
    std::map<std::string, std::int32_t> classes;
    for (const auto& l : raw_labels) classes.emplace(l, 0);
    std::int32_t next = 0;
    for (auto& [name, idx] : classes) {
        idx = next++;
        g.class_names.push_back(name);
    }
    g.num_classes = classes.size();
    g.labels.reserve(n);
    for (const auto& l : raw_labels) g.labels.push_back(classes.at(l));

    g.features = Matrix::from_data(n, dim, std::move(feats));
    for (std::size_t v = 0; v < n; ++v) {
        auto row = g.features.row(v);
        double s = 0.0;
        for (double x : row) s += std::abs(x);
        if (s > 0.0)
            for (double& x : row) x /= s;
    }

    std::ifstream edges_in(edge_file);
    if (!edges_in) throw IngestError("cannot open edge file '" + edge_file + "'");
    std::vector<std::pair<NodeId, NodeId>> edges;
    lineno = 0;
    while (std::getline(edges_in, line)) {
        ++lineno;
        if (blank(line)) continue;
        auto toks = split_ws(line);
        const auto where = edge_file + ":" + std::to_string(lineno);
        if (toks.size() != 2) throw IngestError(where + ": expected `id id`");
        auto a = index.find(toks[0]);
        auto b = index.find(toks[1]);
        if (a == index.end()) throw IngestError(where + ": unknown node id '" + toks[0] + "'");
        if (b == index.end()) throw IngestError(where + ": unknown node id '" + toks[1] + "'");
        edges.emplace_back(a->second, b->second);
    }
    g.adjacency = Graph::build_adjacency(n, edges);
    g.node_names = std::move(ids);
    return g;
}

Graph synth_sbm(const SbmSpec& spec) {
    if (spec.p_in < 0.0 || spec.p_in > 1.0 || spec.p_out < 0.0 || spec.p_out > 1.0)
        throw PreconditionError("synth_sbm: probabilities must lie in [0, 1]");
    const std::size_t n = spec.blocks * spec.nodes_per_block;
    const std::size_t dim = std::max(spec.feature_dim, spec.blocks);
    auto rng = RngStream::derive(spec.seed, Stream::synth);

    Graph g;
    g.num_classes = spec.blocks;
    g.labels.resize(n);
    for (std::size_t v = 0; v < n; ++v) g.labels[v] = static_cast<std::int32_t>(v / spec.nodes_per_block);
    for (std::size_t b = 0; b < spec.blocks; ++b) g.class_names.push_back("block" + std::to_string(b));

    std::vector<std::pair<NodeId, NodeId>> edges;
    for (NodeId a = 0; a < n; ++a)
        for (NodeId b = a + 1; b < n; ++b) {
            const double p = g.labels[a] == g.labels[b] ? spec.p_in : spec.p_out;
            if (rng.bernoulli(p)) edges.emplace_back(a, b);
        }
    g.adjacency = Graph::build_adjacency(n, edges);

    g.features = Matrix(n, dim);
    for (std::size_t v = 0; v < n; ++v) {
        auto row = g.features.row(v);
        for (double& x : row) x = spec.feature_noise * rng.normal();
        row[static_cast<std::size_t>(g.labels[v])] += 1.0;
    }
    return g;
}

}  // namespace fedgraph
