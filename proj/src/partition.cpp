#include "fedgraph/partition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "fedgraph/binary_io.hpp"
#include "fedgraph/errors.hpp"
#include "fedgraph/rng.hpp"

namespace fedgraph {

std::vector<NodeId> ClientGraph::train_nodes() const {
    std::vector<NodeId> out;
    for (NodeId v = 0; v < num_nodes(); ++v)
        if (train_mask[v] && labels[v] >= 0) out.push_back(v);
    return out;
}

std::vector<NodeId> ClientGraph::test_nodes() const {
    std::vector<NodeId> out;
    for (NodeId v = 0; v < num_nodes(); ++v)
        if (test_mask[v] && labels[v] >= 0) out.push_back(v);
    return out;
}

std::int64_t ClientGraph::local_of(NodeId global) const {
    // local_to_global is sorted by construction
    auto it = std::lower_bound(local_to_global.begin(), local_to_global.end(), global);
    if (it == local_to_global.end() || *it != global) return -1;
    return it - local_to_global.begin();
}

bool ClientGraph::has_boundary_neighbor(ClientId owner, NodeId remote) const {
    return std::any_of(boundary.begin(), boundary.end(),
                       [&](const BoundaryEdge& e) { return e.owner == owner && e.remote == remote; });
}

std::vector<ClientGraph> partition_with_assignment(const Graph& g,
                                                   const std::vector<std::vector<NodeId>>& node_sets,
                                                   bool require_training_nodes) {
    const std::size_t n = g.num_nodes();
    const std::size_t num_clients = node_sets.size();
    if (num_clients == 0) throw PreconditionError("partition: need at least one client");
    if (num_clients > 0xFFFF) throw PreconditionError("partition: too many clients");

    // holders[u]: clients holding u, ascending.
    std::vector<std::vector<ClientId>> holders(n);
    std::vector<std::vector<NodeId>> sets(num_clients);
    for (std::size_t c = 0; c < num_clients; ++c) {
        sets[c] = node_sets[c];
        std::sort(sets[c].begin(), sets[c].end());
        sets[c].erase(std::unique(sets[c].begin(), sets[c].end()), sets[c].end());
        for (NodeId u : sets[c]) {
            if (u >= n) throw PreconditionError("partition: node id out of range");
            holders[u].push_back(static_cast<ClientId>(c));
        }
    }

    // Degrees over the graph restricted to held nodes.
    std::vector<std::uint32_t> deg(n, 0);
    for (NodeId u = 0; u < n; ++u) {
        if (holders[u].empty()) continue;
        for (NodeId w : g.adjacency.row(u))
            if (!holders[w].empty()) ++deg[u];
    }
    auto qw = [&](NodeId a, NodeId b) {
        return 1.0 / std::sqrt(static_cast<double>(deg[a] + 1) * static_cast<double>(deg[b] + 1));
    };

    const bool has_masks = g.train_mask.size() == n;
    std::vector<ClientGraph> out(num_clients);
    std::vector<std::int64_t> local(n, -1);
    for (std::size_t c = 0; c < num_clients; ++c) {
        auto& cg = out[c];
        cg.id = static_cast<ClientId>(c);
        cg.num_classes = g.num_classes;
        cg.local_to_global = sets[c];
        const std::size_t m = sets[c].size();
        for (std::size_t i = 0; i < m; ++i) local[sets[c][i]] = static_cast<std::int64_t>(i);

        cg.internal.offsets.reserve(m + 1);
        cg.boundary_offsets.reserve(m + 1);
        cg.degree.resize(m);
        cg.features = Matrix(m, g.feature_dim());
        cg.labels.resize(m);
        cg.train_mask.assign(m, 0);
        cg.val_mask.assign(m, 0);
        cg.test_mask.assign(m, 0);
        std::vector<std::pair<NodeId, std::uint32_t>> remote_deg;

        for (std::size_t i = 0; i < m; ++i) {
            const NodeId v = sets[c][i];
            cg.degree[i] = deg[v];
            for (NodeId u : g.adjacency.row(v)) {
                if (local[u] >= 0) {
                    cg.internal.neighbors.push_back(static_cast<NodeId>(local[u]));
                    cg.internal_q.push_back(qw(v, u));
                } else if (!holders[u].empty()) {
                    cg.boundary.push_back({static_cast<NodeId>(i), holders[u].front(), u, qw(v, u)});
                    remote_deg.emplace_back(u, deg[u]);
                }
            }
            cg.internal.offsets.push_back(static_cast<std::uint32_t>(cg.internal.neighbors.size()));
            cg.boundary_offsets.push_back(static_cast<std::uint32_t>(cg.boundary.size()));

            std::copy(g.features.row(v).begin(), g.features.row(v).end(), cg.features.row(i).begin());
            cg.labels[i] = g.labels[v];
            if (has_masks) {
                cg.train_mask[i] = g.train_mask[v];
                cg.val_mask[i] = g.val_mask[v];
                cg.test_mask[i] = g.test_mask[v];
            }
        }
        std::sort(remote_deg.begin(), remote_deg.end());
        remote_deg.erase(std::unique(remote_deg.begin(), remote_deg.end()), remote_deg.end());
        cg.remote_degree = std::move(remote_deg);

        for (NodeId u : sets[c]) local[u] = -1;

        if (require_training_nodes && cg.train_nodes().empty())
            throw PartitionError("client " + std::to_string(c) + " has no labeled training nodes");
    }
    return out;
}

std::vector<ClientGraph> partition(const Graph& g, const PartitionSpec& spec) {
    if (spec.num_clients == 0) throw PreconditionError("partition: num_clients must be >= 1");
    if (spec.mode == PartitionMode::noniid && spec.noniid_classes_per_client > g.num_classes)
        throw PreconditionError("partition: noniid_classes_per_client exceeds class count");

    const std::size_t n = g.num_nodes();
    const double stddev = std::sqrt(std::max(spec.fraction_variance, 0.0));
    auto root = RngStream::derive(spec.seed, Stream::partition);

    std::vector<std::vector<NodeId>> sets(spec.num_clients);
    for (std::size_t c = 0; c < spec.num_clients; ++c) {
        auto rng = root.derive(Stream::partition, c);
        const double xi = std::clamp(spec.mean_fraction + stddev * rng.normal(), 0.05, 1.0);

        std::vector<NodeId> pool;
        if (spec.mode == PartitionMode::iid) {
            pool.resize(n);
            std::iota(pool.begin(), pool.end(), 0u);
        } else {
            auto chosen = rng.sample_without_replacement(static_cast<std::uint32_t>(g.num_classes),
                                                         static_cast<std::uint32_t>(spec.noniid_classes_per_client));
            std::vector<std::uint8_t> allowed(g.num_classes, 0);
            for (auto k : chosen) allowed[k] = 1;
            for (NodeId v = 0; v < n; ++v)
                if (g.labels[v] >= 0 && allowed[static_cast<std::size_t>(g.labels[v])]) pool.push_back(v);
        }
        const auto want = static_cast<std::size_t>(std::ceil(xi * static_cast<double>(n) - 1e-9));
        const std::size_t take = std::min(want, pool.size());
        // Shuffled-prefix sampling: a larger ξ under the same seed yields a superset.
        rng.shuffle(pool);
        pool.resize(take);
        sets[c] = std::move(pool);
    }
    return partition_with_assignment(g, sets);
}

ClientGraph whole_graph_client(const Graph& g) {
    std::vector<NodeId> all(g.num_nodes());
    std::iota(all.begin(), all.end(), 0u);
    auto gg = g;
    if (gg.train_mask.size() != g.num_nodes()) {
        gg.train_mask.assign(g.num_nodes(), 0);
        gg.val_mask.assign(g.num_nodes(), 0);
        gg.test_mask.assign(g.num_nodes(), 0);
    }
    return std::move(partition_with_assignment(gg, {all}, false).front());
}

namespace {

constexpr std::string_view kPartitionMagic = "FGPC";
constexpr std::uint32_t kPartitionVersion = 1;

}  // namespace

std::vector<std::uint8_t> encode_partition(std::span<const ClientGraph> clients) {
    ByteWriter w;
    w.put_magic(kPartitionMagic);
    w.put<std::uint32_t>(kPartitionVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(clients.size()));
    for (const auto& cg : clients) {
        const auto n = static_cast<std::uint32_t>(cg.num_nodes());
        w.put<std::uint16_t>(cg.id);
        w.put<std::uint32_t>(n);
        w.put<std::uint32_t>(static_cast<std::uint32_t>(cg.feature_dim()));
        w.put<std::uint32_t>(static_cast<std::uint32_t>(cg.num_classes));
        w.put_span<std::uint32_t>(cg.local_to_global);
        w.put_span<std::uint32_t>(cg.internal.offsets);
        w.put_span<std::uint32_t>(cg.internal.neighbors);
        w.put_span<double>(cg.internal_q);
        w.put_span<std::uint32_t>(cg.boundary_offsets);
        for (const auto& e : cg.boundary) {
            w.put<std::uint32_t>(e.local);
            w.put<std::uint16_t>(e.owner);
            w.put<std::uint32_t>(e.remote);
            w.put<double>(e.q_weight);
        }
        w.put_span<std::uint32_t>(cg.degree);
        w.put<std::uint32_t>(static_cast<std::uint32_t>(cg.remote_degree.size()));
        for (auto [u, d] : cg.remote_degree) {
            w.put<std::uint32_t>(u);
            w.put<std::uint32_t>(d);
        }
        w.put_span<double>(cg.features.data());
        w.put_span<std::int32_t>(cg.labels);
        w.put_span<std::uint8_t>(cg.train_mask);
        w.put_span<std::uint8_t>(cg.val_mask);
        w.put_span<std::uint8_t>(cg.test_mask);
    }
    return w.take();
}

std::vector<ClientGraph> decode_partition(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    r.expect_magic(kPartitionMagic);
    const auto version = r.get<std::uint32_t>();
    if (version != kPartitionVersion)
        throw FormatError("unsupported partition cache version " + std::to_string(version));
    const auto count = r.get<std::uint32_t>();
    std::vector<ClientGraph> out;
    for (std::uint32_t c = 0; c < count; ++c) {
        ClientGraph cg;
        cg.id = r.get<std::uint16_t>();
        const auto n = r.get<std::uint32_t>();
        const auto d = r.get<std::uint32_t>();
        cg.num_classes = r.get<std::uint32_t>();
        cg.local_to_global = r.get_vector<std::uint32_t>(n);
        cg.internal.offsets = r.get_vector<std::uint32_t>(std::size_t{n} + 1);
        const auto nnz = cg.internal.offsets.back();
        cg.internal.neighbors = r.get_vector<std::uint32_t>(nnz);
        cg.internal_q = r.get_vector<double>(nnz);
        cg.boundary_offsets = r.get_vector<std::uint32_t>(std::size_t{n} + 1);
        const auto nb = cg.boundary_offsets.back();
        cg.boundary.reserve(nb);
        for (std::uint32_t i = 0; i < nb; ++i) {
            BoundaryEdge e{};
            e.local = r.get<std::uint32_t>();
            e.owner = r.get<std::uint16_t>();
            e.remote = r.get<std::uint32_t>();
            e.q_weight = r.get<double>();
            cg.boundary.push_back(e);
        }
        cg.degree = r.get_vector<std::uint32_t>(n);
        const auto nr = r.get<std::uint32_t>();
        cg.remote_degree.reserve(nr);
        for (std::uint32_t i = 0; i < nr; ++i) {
            const auto u = r.get<std::uint32_t>();
            const auto dd = r.get<std::uint32_t>();
            cg.remote_degree.emplace_back(u, dd);
        }
        cg.features = Matrix::from_data(n, d, r.get_vector<double>(std::size_t{n} * d));
        cg.labels = r.get_vector<std::int32_t>(n);
        cg.train_mask = r.get_vector<std::uint8_t>(n);
        cg.val_mask = r.get_vector<std::uint8_t>(n);
        cg.test_mask = r.get_vector<std::uint8_t>(n);
        out.push_back(std::move(cg));
    }
    if (!r.at_end()) throw FormatError("trailing bytes after partition cache");
    return out;
}

}  // namespace fedgraph
