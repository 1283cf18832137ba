#include "fedgraph/gcn.hpp"

#include <string>

#include "fedgraph/binary_io.hpp"
#include "fedgraph/errors.hpp"

namespace fedgraph {

std::vector<std::size_t> GcnWeights::dims() const {
    std::vector<std::size_t> d;
    if (layers.empty()) return d;
    d.push_back(layers.front().rows());
    for (const auto& m : layers) d.push_back(m.cols());
    return d;
}

std::size_t GcnWeights::parameter_count() const {
    std::size_t s = 0;
    for (const auto& m : layers) s += m.size();
    return s;
}

GcnWeights GcnWeights::zeros(std::span<const std::size_t> dims) {
    if (dims.size() < 2) throw PreconditionError("GcnWeights: need at least 2 layer dims");
    GcnWeights w;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) w.layers.emplace_back(dims[l], dims[l + 1]);
    return w;
}

GcnWeights GcnWeights::glorot(std::span<const std::size_t> dims, RngStream& rng) {
    if (dims.size() < 2) throw PreconditionError("GcnWeights: need at least 2 layer dims");
    GcnWeights w;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) w.layers.push_back(glorot_uniform(dims[l], dims[l + 1], rng));
    return w;
}

std::vector<double> flatten(const GcnWeights& w) {
    std::vector<double> out;
    out.reserve(w.parameter_count());
    for (const auto& m : w.layers) out.insert(out.end(), m.data().begin(), m.data().end());
    return out;
}

namespace {
constexpr std::string_view kWeightsMagic = "FGWT";
constexpr std::uint32_t kWeightsVersion = 1;
}  // namespace

std::vector<std::uint8_t> encode_weights(const GcnWeights& w) {
    ByteWriter out;
    out.put_magic(kWeightsMagic);
    out.put<std::uint32_t>(kWeightsVersion);
    const auto dims = w.dims();
    out.put<std::uint32_t>(static_cast<std::uint32_t>(dims.size()));
    for (auto d : dims) out.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    for (const auto& m : w.layers) out.put_span<double>(m.data());
    return out.take();
}

GcnWeights decode_weights(std::span<const std::uint8_t> bytes) {
    ByteReader in(bytes);
    in.expect_magic(kWeightsMagic);
    const auto version = in.get<std::uint32_t>();
    if (version != kWeightsVersion) throw FormatError("unsupported weight checkpoint version " + std::to_string(version));
    const auto count = in.get<std::uint32_t>();
    if (count < 2) throw FormatError("weight checkpoint needs at least 2 dims");
    auto dims = in.get_vector<std::uint32_t>(count);
    GcnWeights w;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l)
        w.layers.push_back(
            Matrix::from_data(dims[l], dims[l + 1], in.get_vector<double>(std::size_t{dims[l]} * dims[l + 1])));
    if (!in.at_end()) throw FormatError("trailing bytes after weight checkpoint");
    return w;
}

std::vector<std::size_t> TrainConfig::layer_dims(std::size_t feature_dim, std::size_t num_classes) const {
    std::vector<std::size_t> d{feature_dim};
    for (std::size_t l = 1; l + 1 < num_layers; ++l) d.push_back(hidden_dim);
    d.push_back(num_classes);
    return d;
}

void TrainConfig::validate() const {
    if (num_layers < 2) throw PreconditionError("TrainConfig: num_layers must be >= 2");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw PreconditionError("TrainConfig: dropout must be in [0, 1)");
    if (!(optimizer.lr > 0.0)) throw PreconditionError("TrainConfig: learning rate must be positive");
    if (hidden_dim == 0) throw PreconditionError("TrainConfig: hidden_dim must be positive");
}

void ExternalRows::insert(std::size_t layer, ClientId owner, NodeId global, std::span<const double> row) {
    rows_[key(layer, owner, global)] = std::vector<double>(row.begin(), row.end());
}

const std::vector<double>* ExternalRows::find(std::size_t layer, ClientId owner, NodeId global) const {
    auto it = rows_.find(key(layer, owner, global));
    return it == rows_.end() ? nullptr : &it->second;
}

ForwardResult forward(const LayerPlan& plan, const ClientGraph& cg, const GcnWeights& w, const ExternalRows& ext,
                      const ForwardOptions& opts, RngStream* rng) {
    const std::size_t num_weights = w.layers.size();
    if (plan.num_layers() != num_weights + 1)
        throw ShapeError("forward: plan has " + std::to_string(plan.num_layers()) + " layers, weights expect " +
                         std::to_string(num_weights + 1));
    if (w.layers.front().rows() != cg.feature_dim()) throw ShapeError("forward: feature dim mismatch");
    const bool use_dropout = opts.train && opts.dropout > 0.0;
    if (use_dropout && rng == nullptr) throw PreconditionError("forward: dropout needs an rng");

    ForwardResult res;
    res.trace.plan = &plan;
    res.trace.weights = w;

    // Layer-1 embeddings are the raw features of local nodes; external rows stay zero.
    // Dropout entries where the input is zero never matter, so masks are only
    // drawn on the support.
    const double keep = 1.0 - opts.dropout;
    const auto& in_nodes = plan.layers[0];
    SparseMatrix x(cg.feature_dim());
    for (const auto& u : in_nodes) {
        if (u.external) {
            x.push_empty_row();
            continue;
        }
        auto src = cg.features.row(u.id);
        for (std::size_t j = 0; j < src.size(); ++j) {
            if (src[j] == 0.0) continue;
            if (use_dropout && !rng->bernoulli(keep)) continue;
            x.indices.push_back(static_cast<std::uint32_t>(j));
            x.values.push_back(use_dropout ? src[j] / keep : src[j]);
        }
        x.offsets.push_back(static_cast<std::uint32_t>(x.indices.size()));
        ++x.rows;
    }

    Matrix h;
    for (std::size_t l = 0; l < num_weights; ++l) {
        const auto& W = w.layers[l];
        if ((l == 0 ? x.cols : h.cols()) != W.rows())
            throw ShapeError("forward: layer " + std::to_string(l + 1) + " input width mismatch");
        Matrix mask;
        Matrix y;
        if (l == 0) {
            y = matmul(x, W);
        } else if (use_dropout) {
            mask = Matrix(h.rows(), h.cols());
            Matrix hm(h.rows(), h.cols());
            const auto& hd = h.data();
            auto& md = mask.data();
            auto& hmd = hm.data();
            for (std::size_t j = 0; j < hd.size(); ++j) {
                if (hd[j] == 0.0 || !rng->bernoulli(keep)) continue;
                md[j] = 1.0 / keep;
                hmd[j] = hd[j] * md[j];
            }
            y = matmul(hm, W);
        } else {
            y = matmul(h, W);
        }

        const auto& cols = plan.layers[l];
        const auto& adj = plan.adjacency[l];
        const std::size_t width = W.cols();
        Matrix z(plan.layers[l + 1].size(), width);
        const bool external_here = l >= opts.external_from;
        for (std::size_t r = 0; r < adj.num_rows(); ++r) {
            double* zr = z.row(r).data();
            for (auto k = adj.offsets[r]; k < adj.offsets[r + 1]; ++k) {
                const auto& u = cols[adj.cols[k]];
                const double q = adj.values[k];
                const double* src;
                if (!u.external) {
                    src = y.row(adj.cols[k]).data();
                } else {
                    if (!external_here) continue;
                    const auto* row = ext.find(l, u.owner, u.id);
                    if (row == nullptr)
                        throw ExchangeError("missing external row: client " + std::to_string(u.owner) + ", layer " +
                                            std::to_string(l + 1) + ", node " + std::to_string(u.id));
                    if (row->size() != width) throw ShapeError("forward: external row width mismatch");
                    src = row->data();
                }
                for (std::size_t j = 0; j < width; ++j) zr[j] += q * src[j];
            }
        }

        if (l == 0) res.trace.features = std::move(x);
        res.trace.inputs.push_back(std::move(h));
        res.trace.masks.push_back(std::move(mask));
        if (l + 1 < num_weights) {
            h = relu(z);
            res.trace.pre_activations.push_back(std::move(z));
        } else {
            res.logits = z;
            res.trace.pre_activations.push_back(std::move(z));
        }
    }
    return res;
}

GcnWeights backward(const ForwardTrace& trace, const Matrix& logits_grad) {
    const auto& plan = *trace.plan;
    const std::size_t num_weights = trace.weights.layers.size();
    GcnWeights grads;
    grads.layers.resize(num_weights);

    Matrix dz = logits_grad;
    require_same_shape(dz, trace.pre_activations.back(), "backward logits grad");
    for (std::size_t l = num_weights; l-- > 0;) {
        const auto& cols = plan.layers[l];
        const auto& adj = plan.adjacency[l];
        const auto& W = trace.weights.layers[l];
        // dY = Ãᵀ dZ over local columns only; external contributions are constants.
        Matrix dy(cols.size(), W.cols());
        for (std::size_t r = 0; r < adj.num_rows(); ++r) {
            const double* g = dz.row(r).data();
            for (auto k = adj.offsets[r]; k < adj.offsets[r + 1]; ++k) {
                if (cols[adj.cols[k]].external) continue;
                double* d = dy.row(adj.cols[k]).data();
                const double q = adj.values[k];
                for (std::size_t j = 0; j < W.cols(); ++j) d[j] += q * g[j];
            }
        }
        if (l == 0) {
            grads.layers[0] = matmul_tn(trace.features, dy);
            break;
        }
        const auto& h = trace.inputs[l];
        const auto& mask = trace.masks[l];
        grads.layers[l] = mask.empty() ? matmul_tn(h, dy) : matmul_tn(hadamard(h, mask), dy);
        Matrix dp = matmul_nt(dy, W);
        if (!mask.empty()) dp = hadamard(dp, mask);
        dz = relu_backward(dp, trace.pre_activations[l - 1]);
    }
    return grads;
}

std::vector<std::int32_t> batch_labels(const ClientGraph& cg, const LayerPlan& plan) {
    std::vector<std::int32_t> y;
    y.reserve(plan.layers.back().size());
    for (const auto& r : plan.layers.back()) y.push_back(cg.labels[r.id]);
    return y;
}

std::size_t count_correct(const Matrix& logits, std::span<const std::int32_t> labels) {
    if (labels.size() != logits.rows()) throw ShapeError("accuracy: label count mismatch");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        auto row = logits.row(i);
        std::size_t best = 0;
        for (std::size_t j = 1; j < row.size(); ++j)
            if (row[j] > row[best]) best = j;
        if (static_cast<std::int32_t>(best) == labels[i]) ++correct;
    }
    return correct;
}

double accuracy(const Matrix& logits, std::span<const std::int32_t> labels) {
    if (labels.empty()) throw PreconditionError("accuracy: empty node set");
    return static_cast<double>(count_correct(logits, labels)) / static_cast<double>(labels.size());
}

LayerPlan build_plan(const ClientGraph& cg, const PlanSpec& spec, std::size_t num_layers, RngStream& rng) {
    switch (spec.kind) {
        case SamplerKind::fedgraph:
            return model_construct(cg, spec.policy, rng);
        case SamplerKind::full_batch:
            return full_batch_plan(cg, num_layers);
        case SamplerKind::node_wise:
            if (spec.fanouts.size() + 1 != num_layers)
                throw PreconditionError("node-wise sampler: fanouts must have L-1 entries");
            return nodewise_plan(cg, spec.policy.batch_size, spec.fanouts, rng);
        case SamplerKind::layer_wise:
            return layerwise_plan(cg, spec.policy.batch_size, spec.layer_size, num_layers, rng);
    }
    throw PreconditionError("build_plan: unknown sampler");
}

void local_train_step(const ClientGraph& cg, GcnWeights& w, const PlanSpec& plan_spec, const TrainConfig& cfg,
                      Exchange* exchange, std::size_t external_from, std::vector<AdamState>& optimizer,
                      RngStream& rng, std::size_t iteration, LocalResult& result) {
    auto sample_rng = rng.derive(Stream::sampling, iteration);
    auto dropout_rng = rng.derive(Stream::dropout, iteration);
    const auto plan = build_plan(cg, plan_spec, cfg.num_layers, sample_rng);
    const auto labels = batch_labels(cg, plan);
    if (labels.empty()) throw PreconditionError("client " + std::to_string(cg.id) + ": empty mini-batch");

    ExternalRows ext;
    if (exchange != nullptr && external_from != kNoExternal)
        ext = exchange->fetch(cg.id, plan, external_from, iteration, result.exchange);

    ForwardOptions fo{true, cfg.dropout, external_from};
    auto fwd = forward(plan, cg, w, ext, fo, &dropout_rng);
    auto lg = softmax_cross_entropy(fwd.logits, labels);
    auto grads = backward(fwd.trace, lg.grad);

    if (optimizer.size() != w.layers.size()) {
        optimizer.clear();
        for (std::size_t l = 0; l < w.layers.size(); ++l) optimizer.emplace_back(cfg.optimizer);
    }
    for (std::size_t l = 0; l < w.layers.size(); ++l) adam_step(w.layers[l], grads.layers[l], optimizer[l]);

    result.losses.push_back(lg.loss);
    result.batch_size = labels.size();
    result.nodes_processed += plan.node_count();
    result.edges_processed += plan.edge_count();
}

LocalResult local_train_round(const ClientGraph& cg, const GcnWeights& global, const PlanSpec& plan_spec,
                              const TrainConfig& cfg, Exchange* exchange, std::size_t external_from,
                              std::vector<AdamState>& optimizer, RngStream& rng) {
    cfg.validate();
    LocalResult result;
    result.weights = global;
    for (std::size_t it = 0; it < cfg.local_iterations; ++it)
        local_train_step(cg, result.weights, plan_spec, cfg, exchange, external_from, optimizer, rng, it, result);
    return result;
}

EvalCounts evaluate_counts(const ClientGraph& cg, const GcnWeights& w, std::span<const NodeId> nodes,
                           Exchange* exchange, std::size_t external_from, std::size_t iteration) {
    if (nodes.empty()) return {};
    const auto plan = full_plan(cg, nodes, w.num_layers());
    ExternalRows ext;
    ExchangeStats stats;
    if (exchange != nullptr && external_from != kNoExternal)
        ext = exchange->fetch(cg.id, plan, external_from, iteration, stats);
    const auto fwd = forward(plan, cg, w, ext, ForwardOptions{false, 0.0, exchange ? external_from : kNoExternal});
    const auto labels = batch_labels(cg, plan);
    return {count_correct(fwd.logits, labels), labels.size()};
}

double evaluate(const ClientGraph& cg, const GcnWeights& w, std::span<const NodeId> nodes) {
    if (nodes.empty()) throw PreconditionError("evaluate: empty node set");
    return evaluate_counts(cg, w, nodes).accuracy();
}

double evaluate(const Graph& g, const GcnWeights& w, std::span<const NodeId> nodes) {
    return evaluate(whole_graph_client(g), w, nodes);
}

}  // namespace fedgraph
