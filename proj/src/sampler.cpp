#include "fedgraph/sampler.hpp"

#include <algorithm>
#include <string>
#include <unordered_map>

#include "fedgraph/errors.hpp"

namespace fedgraph {

void SamplingPolicy::validate(std::size_t num_layers) const {
    if (batch_size < 1) throw PreconditionError("SamplingPolicy: batch size must be >= 1");
    if (probabilities.size() + 1 != num_layers)
        throw PreconditionError("SamplingPolicy: expected " + std::to_string(num_layers - 1) + " probabilities");
    for (double p : probabilities)
        if (!(p > 0.0 && p <= 1.0)) throw PreconditionError("SamplingPolicy: probabilities must lie in (0, 1]");
}

std::vector<NodeId> LayerPlan::batch() const {
    std::vector<NodeId> out;
    for (const auto& r : layers.back()) out.push_back(r.id);
    return out;
}

std::size_t LayerPlan::edge_count() const {
    std::size_t s = 0;
    for (const auto& a : adjacency) s += a.nnz();
    return s;
}

std::size_t LayerPlan::node_count() const {
    std::size_t s = 0;
    for (const auto& l : layers) s += l.size();
    return s;
}

namespace {

struct Candidate {
    NodeRef ref;
    double q;
};

// Builds the next-lower layer of a plan, assigning column positions in
// first-seen order.
class LayerBuilder {
public:
    std::uint32_t column(const NodeRef& r) {
        auto [it, inserted] = index_.emplace(r, static_cast<std::uint32_t>(nodes_.size()));
        if (inserted) nodes_.push_back(r);
        return it->second;
    }
    void add(const NodeRef& r, double w) {
        rows_.cols.push_back(column(r));
        rows_.values.push_back(w);
    }
    void end_row() { rows_.offsets.push_back(static_cast<std::uint32_t>(rows_.cols.size())); }

    std::vector<NodeRef> take_nodes() { return std::move(nodes_); }
    SparseRows take_rows() { return std::move(rows_); }

private:
    std::unordered_map<NodeRef, std::uint32_t, NodeRefHash> index_;
    std::vector<NodeRef> nodes_;
    SparseRows rows_;
};

void gather_candidates(const ClientGraph& cg, NodeId v, std::vector<Candidate>& out) {
    out.clear();
    auto nbrs = cg.internal_neighbors(v);
    auto qs = cg.internal_weights(v);
    for (std::size_t k = 0; k < nbrs.size(); ++k) out.push_back({NodeRef::local(nbrs[k]), qs[k]});
    for (const auto& e : cg.boundary_edges(v)) out.push_back({NodeRef::remote(e.owner, e.remote), e.q_weight});
}

// Expands layer by layer from the batch downwards; `select` fills the row of
// one local node.
template <class SelectFn>
LayerPlan expand(std::vector<NodeRef> batch, std::size_t num_layers, SelectFn&& select) {
    if (num_layers < 2) throw PreconditionError("plan: need at least 2 layers");
    LayerPlan plan;
    plan.layers.resize(num_layers);
    plan.adjacency.resize(num_layers - 1);
    plan.layers[num_layers - 1] = std::move(batch);
    for (std::size_t l = num_layers - 1; l-- > 0;) {
        LayerBuilder b;
        for (const auto& r : plan.layers[l + 1]) {
            if (!r.external) select(l, r.id, b);
            b.end_row();
        }
        plan.layers[l] = b.take_nodes();
        plan.adjacency[l] = b.take_rows();
    }
    return plan;
}

std::vector<NodeRef> sample_batch(const ClientGraph& cg, std::uint32_t batch_size, RngStream& rng) {
    const auto train = cg.train_nodes();
    if (train.empty())
        throw PreconditionError("client " + std::to_string(cg.id) + " has no labeled training nodes");
    const auto pick = rng.sample_without_replacement(static_cast<std::uint32_t>(train.size()), batch_size);
    std::vector<NodeRef> batch;
    batch.reserve(pick.size());
    for (auto i : pick) batch.push_back(NodeRef::local(train[i]));
    return batch;
}

}  // namespace

LayerPlan model_construct(const ClientGraph& cg, const SamplingPolicy& policy, RngStream& rng) {
    const std::size_t num_layers = policy.probabilities.size() + 1;
    policy.validate(num_layers);
    auto batch = sample_batch(cg, policy.batch_size, rng);

    std::vector<Candidate> cand;
    std::vector<std::uint32_t> chosen;
    return expand(std::move(batch), num_layers, [&](std::size_t l, NodeId v, LayerBuilder& b) {
        b.add(NodeRef::local(v), cg.self_weight(v));
        gather_candidates(cg, v, cand);
        if (cand.empty()) return;
        const double p = policy.probabilities[l];
        chosen.clear();
        for (std::uint32_t k = 0; k < cand.size(); ++k)
            if (rng.bernoulli(p)) chosen.push_back(k);
        if (chosen.empty()) chosen.push_back(static_cast<std::uint32_t>(rng.uniform_int(cand.size())));
        const double scale = static_cast<double>(cand.size()) / static_cast<double>(chosen.size());
        for (auto k : chosen) b.add(cand[k].ref, scale * cand[k].q);
    });
}

LayerPlan full_plan(const ClientGraph& cg, std::span<const NodeId> targets, std::size_t num_layers) {
    std::vector<NodeRef> batch;
    batch.reserve(targets.size());
    for (NodeId v : targets) batch.push_back(NodeRef::local(v));
    std::vector<Candidate> cand;
    return expand(std::move(batch), num_layers, [&](std::size_t, NodeId v, LayerBuilder& b) {
        b.add(NodeRef::local(v), cg.self_weight(v));
        gather_candidates(cg, v, cand);
        for (const auto& c : cand) b.add(c.ref, c.q);
    });
}

LayerPlan full_batch_plan(const ClientGraph& cg, std::size_t num_layers) {
    const auto train = cg.train_nodes();
    return full_plan(cg, train, num_layers);
}

LayerPlan nodewise_plan(const ClientGraph& cg, std::uint32_t batch_size, std::span<const std::uint32_t> fanouts,
                        RngStream& rng) {
    const std::size_t num_layers = fanouts.size() + 1;
    for (auto f : fanouts)
        if (f == 0) throw PreconditionError("nodewise_plan: fanouts must be positive");
    auto batch = sample_batch(cg, batch_size, rng);
    std::vector<Candidate> cand;
    return expand(std::move(batch), num_layers, [&](std::size_t l, NodeId v, LayerBuilder& b) {
        b.add(NodeRef::local(v), cg.self_weight(v));
        gather_candidates(cg, v, cand);
        if (cand.empty()) return;
        const auto m = static_cast<std::uint32_t>(cand.size());
        const auto pick = rng.sample_without_replacement(m, std::min(m, fanouts[l]));
        const double scale = static_cast<double>(m) / static_cast<double>(pick.size());
        for (auto k : pick) b.add(cand[k].ref, scale * cand[k].q);
    });
}

LayerPlan layerwise_plan(const ClientGraph& cg, std::uint32_t batch_size, std::uint32_t layer_size,
                         std::size_t num_layers, RngStream& rng) {
    if (layer_size < 1) throw PreconditionError("layerwise_plan: layer_size must be >= 1");
    if (num_layers < 2) throw PreconditionError("plan: need at least 2 layers");

    // Sampling pool: local nodes and every distinct boundary node, weighted by d̃.
    std::vector<NodeRef> pool;
    std::vector<double> cumulative;
    double total = 0.0;
    for (NodeId v = 0; v < cg.num_nodes(); ++v) {
        pool.push_back(NodeRef::local(v));
        total += cg.degree[v] + 1.0;
        cumulative.push_back(total);
    }
    std::unordered_map<NodeRef, std::size_t, NodeRefHash> pool_index;
    for (const auto& e : cg.boundary) {
        const auto ref = NodeRef::remote(e.owner, e.remote);
        if (pool_index.contains(ref)) continue;
        pool_index.emplace(ref, pool.size());
        auto it = std::lower_bound(cg.remote_degree.begin(), cg.remote_degree.end(), std::make_pair(e.remote, 0u));
        pool.push_back(ref);
        total += it->second + 1.0;
        cumulative.push_back(total);
    }
    auto prob = [&](std::size_t idx) {
        const double prev = idx == 0 ? 0.0 : cumulative[idx - 1];
        return (cumulative[idx] - prev) / total;
    };

    auto batch = sample_batch(cg, batch_size, rng);
    LayerPlan plan;
    plan.layers.resize(num_layers);
    plan.adjacency.resize(num_layers - 1);
    plan.layers[num_layers - 1] = std::move(batch);

    std::vector<Candidate> cand;
    for (std::size_t l = num_layers - 1; l-- > 0;) {
        // Draw with replacement; remember multiplicities.
        std::unordered_map<NodeRef, std::pair<std::uint32_t, std::uint32_t>, NodeRefHash> drawn;  // ref -> (col, count)
        std::vector<NodeRef> nodes;
        std::vector<std::size_t> node_pool_idx;
        for (std::uint32_t s = 0; s < layer_size; ++s) {
            const double x = rng.uniform() * total;
            auto idx = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), x) -
                                                cumulative.begin());
            idx = std::min(idx, pool.size() - 1);
            auto [it, inserted] = drawn.emplace(pool[idx], std::make_pair(static_cast<std::uint32_t>(nodes.size()), 0u));
            if (inserted) {
                nodes.push_back(pool[idx]);
                node_pool_idx.push_back(idx);
            }
            ++it->second.second;
        }
        SparseRows rows;
        for (const auto& r : plan.layers[l + 1]) {
            if (!r.external) {
                const NodeId v = r.id;
                auto add = [&](const NodeRef& u, double q) {
                    auto it = drawn.find(u);
                    if (it == drawn.end()) return;
                    const auto [col, count] = it->second;
                    const double qu = prob(node_pool_idx[col]);
                    rows.cols.push_back(col);
                    rows.values.push_back(count * q / (layer_size * qu));
                };
                add(NodeRef::local(v), cg.self_weight(v));
                gather_candidates(cg, v, cand);
                for (const auto& c : cand) add(c.ref, c.q);
            }
            rows.offsets.push_back(static_cast<std::uint32_t>(rows.cols.size()));
        }
        plan.layers[l] = std::move(nodes);
        plan.adjacency[l] = std::move(rows);
    }
    return plan;
}

}  // namespace fedgraph
