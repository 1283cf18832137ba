#include "fedgraph/broker.hpp"

#include <algorithm>
#include <string>

#include "fedgraph/binary_io.hpp"
#include "fedgraph/errors.hpp"

namespace fedgraph {

namespace {
constexpr std::size_t kHeaderBytes = 1 + 4 + 2 + 2 + 1 + 4;
}

std::vector<std::uint8_t> encode_message(const BrokerMessage& m) {
    if (m.type == MsgType::request && !m.payload.empty()) throw PreconditionError("broker request carries a payload");
    if (m.type == MsgType::response && m.payload.rows() != m.ids.size())
        throw ShapeError("broker response: payload rows != id count");
    ByteWriter out;
    out.put<std::uint8_t>(static_cast<std::uint8_t>(m.type));
    out.put<std::uint32_t>(m.round);
    out.put<std::uint16_t>(m.src);
    out.put<std::uint16_t>(m.dst);
    out.put<std::uint8_t>(m.layer);
    out.put<std::uint32_t>(static_cast<std::uint32_t>(m.ids.size()));
    out.put_span<std::uint32_t>(m.ids);
    if (m.type == MsgType::response) out.put_span<double>(m.payload.data());
    return out.take();
}

BrokerMessage decode_message(std::span<const std::uint8_t> frame) {
    ByteReader in(frame);
    BrokerMessage m;
    const auto type = in.get<std::uint8_t>();
    if (type != 1 && type != 2) throw FormatError("unknown broker message type " + std::to_string(type));
    m.type = static_cast<MsgType>(type);
    m.round = in.get<std::uint32_t>();
    m.src = in.get<std::uint16_t>();
    m.dst = in.get<std::uint16_t>();
    m.layer = in.get<std::uint8_t>();
    const auto count = in.get<std::uint32_t>();
    m.ids = in.get_vector<std::uint32_t>(count);
    if (m.type == MsgType::request) {
        if (!in.at_end()) throw FormatError("broker request has trailing bytes");
        return m;
    }
    const std::size_t rest = in.remaining();
    if (count == 0) {
        if (rest != 0) throw FormatError("empty broker response has a payload");
        return m;
    }
    if (rest % (8 * std::size_t{count}) != 0) throw FormatError("broker response payload is not count x width f64");
    const std::size_t width = rest / (8 * std::size_t{count});
    m.payload = Matrix::from_data(count, width, in.get_vector<double>(std::size_t{count} * width));
    return m;
}

std::vector<Matrix> internal_products(const ClientGraph& cg, const GcnWeights& w, std::size_t upto_layer) {
    if (upto_layer >= w.layers.size()) throw PreconditionError("internal_products: layer out of range");
    std::vector<Matrix> out;
    Matrix h;
    for (std::size_t k = 0; k <= upto_layer; ++k) {
        out.push_back(k == 0 ? matmul(SparseMatrix::from_dense(cg.features), w.layers[0]) : matmul(h, w.layers[k]));
        if (k == upto_layer) break;
        const Matrix& p = out.back();
        Matrix z(cg.num_nodes(), p.cols());
        for (NodeId v = 0; v < cg.num_nodes(); ++v) {
            auto zr = z.row(v);
            const double s = cg.self_weight(v);
            auto pv = p.row(v);
            for (std::size_t j = 0; j < zr.size(); ++j) zr[j] = s * pv[j];
            auto nbrs = cg.internal_neighbors(v);
            auto qs = cg.internal_weights(v);
            for (std::size_t i = 0; i < nbrs.size(); ++i) {
                auto pu = p.row(nbrs[i]);
                for (std::size_t j = 0; j < zr.size(); ++j) zr[j] += qs[i] * pu[j];
            }
        }
        h = relu(z);
    }
    return out;
}

Broker::Broker(std::span<const ClientGraph> clients, bool enforce_privacy)
    : clients_(clients), enforce_privacy_(enforce_privacy), authorized_(clients.size()) {
    for (std::size_t i = 0; i < clients.size(); ++i) {
        if (clients[i].id != i) throw PreconditionError("Broker: client ids must equal their positions");
        for (const auto& e : clients[i].boundary)
            authorized_[i].insert((std::uint64_t{e.owner} << 32) | e.remote);
    }
}

void Broker::begin_round(std::uint32_t round) {
    std::lock_guard lock(mu_);
    round_ = round;
    snapshots_.clear();
    memo_.clear();
}

void Broker::publish(std::size_t iteration, std::vector<GcnWeights> weights) {
    if (weights.size() != clients_.size()) throw PreconditionError("Broker::publish: one weight set per client");
    std::lock_guard lock(mu_);
    snapshots_[iteration] = std::move(weights);
    std::erase_if(memo_, [&](const auto& kv) { return std::get<0>(kv.first) == iteration; });
}

const std::vector<GcnWeights>& Broker::snapshot_for(std::size_t iteration) const {
    auto it = snapshots_.upper_bound(iteration);
    if (it == snapshots_.begin()) throw StateError("broker: no weights published for iteration " + std::to_string(iteration));
    return std::prev(it)->second;
}

const Matrix& Broker::products(ClientId client, std::size_t weight_layer, std::size_t iteration) {
    auto it = snapshots_.upper_bound(iteration);
    if (it == snapshots_.begin()) throw StateError("broker: no weights published for iteration " + std::to_string(iteration));
    --it;
    const std::size_t key = it->first;
    auto found = memo_.find({key, client, weight_layer});
    if (found != memo_.end()) return found->second;
    auto all = internal_products(clients_[client], it->second[client], weight_layer);
    for (std::size_t k = 0; k < all.size(); ++k) memo_.try_emplace({key, client, k}, std::move(all[k]));
    return memo_.at({key, client, weight_layer});
}

void Broker::log(const BrokerMessage& m, std::size_t frame_bytes, bool raw) {
    log_.push_back({m.type, m.round, m.src, m.dst, m.layer, static_cast<std::uint32_t>(m.ids.size()),
                    static_cast<std::uint32_t>(m.payload.cols()), raw, frame_bytes});
}

EmbeddingShare Broker::serve_embeddings(ClientId requester, ClientId target, std::size_t layer,
                                        std::span<const NodeId> ids, std::uint32_t round, std::size_t iteration,
                                        ExchangeStats* stats) {
    if (requester >= clients_.size() || target >= clients_.size())
        throw AuthorizationError("broker: unknown client in request " + std::to_string(requester) + " -> " +
                                 std::to_string(target));
    if (requester == target) throw AuthorizationError("broker: client cannot request its own embeddings");
    if (layer < 1 || layer > 255) throw PreconditionError("broker: layer out of range");
    if (enforce_privacy_ && layer < 2)
        throw PrivacyViolation("broker: layer-" + std::to_string(layer) + " rows would expose raw features (client " +
                               std::to_string(requester) + " -> " + std::to_string(target) + ")");
    const auto& allowed = authorized_[requester];
    for (NodeId u : ids)
        if (!allowed.contains((std::uint64_t{target} << 32) | u))
            throw AuthorizationError("broker: node " + std::to_string(u) + " of client " + std::to_string(target) +
                                     " is not a boundary neighbour of client " + std::to_string(requester));

    std::lock_guard lock(mu_);
    if (round != round_)
        throw StateError("broker: request for round " + std::to_string(round) + " during round " + std::to_string(round_));

    BrokerMessage req{MsgType::request, round, requester, target, static_cast<std::uint8_t>(layer),
                      std::vector<std::uint32_t>(ids.begin(), ids.end()), {}};
    auto req_frame = encode_message(req);
    log(req, req_frame.size(), false);

    const auto& owner = clients_[target];
    const std::size_t k = layer - 1;
    const auto& snap = snapshot_for(iteration);
    if (k >= snap[target].layers.size()) throw PreconditionError("broker: layer beyond model depth");
    const Matrix& prod = products(target, k, iteration);

    BrokerMessage resp{MsgType::response, round, target, requester, static_cast<std::uint8_t>(layer), req.ids,
                       Matrix(ids.size(), prod.cols())};
    bool raw = false;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto local = owner.local_of(ids[i]);
        if (local < 0) throw AuthorizationError("broker: client " + std::to_string(target) + " does not hold node " +
                                                std::to_string(ids[i]));
        auto src = prod.row(static_cast<std::size_t>(local));
        std::copy(src.begin(), src.end(), resp.payload.row(i).begin());
        if (prod.cols() == owner.feature_dim()) {
            auto x = owner.features.row(static_cast<std::size_t>(local));
            raw = raw || std::equal(src.begin(), src.end(), x.begin());
        }
    }
    auto resp_frame = encode_message(resp);
    log(resp, resp_frame.size(), raw);
    if (keep_frames_) {
        frames_.push_back(std::move(req_frame));
        frames_.push_back(resp_frame);
    }
    if (stats != nullptr) {
        stats->values += resp.payload.size();
        stats->bytes += log_[log_.size() - 2].bytes + resp_frame.size();
        stats->messages += 2;
    }
    return {target, static_cast<std::uint8_t>(layer), std::move(req.ids), std::move(resp.payload), round};
}

ExternalRows Broker::fetch(ClientId requester, const LayerPlan& plan, std::size_t first_layer, std::size_t iteration,
                           ExchangeStats& stats) {
    ExternalRows ext;
    const std::size_t num_weights = plan.adjacency.size();
    std::uint32_t round;
    {
        std::lock_guard lock(mu_);
        round = round_;
    }
    for (std::size_t k = first_layer; k < num_weights; ++k) {
        const auto& cols = plan.layers[k];
        const auto& adj = plan.adjacency[k];
        std::map<ClientId, std::vector<NodeId>> wanted;
        std::vector<std::uint8_t> seen(cols.size(), 0);
        for (auto c : adj.cols) {
            if (!cols[c].external || seen[c]) continue;
            seen[c] = 1;
            wanted[cols[c].owner].push_back(cols[c].id);
        }
        for (auto& [owner, ids] : wanted) {
            std::sort(ids.begin(), ids.end());
            auto share = serve_embeddings(requester, owner, k + 1, ids, round, iteration, &stats);
            for (std::size_t i = 0; i < share.ids.size(); ++i) ext.insert(k, owner, share.ids[i], share.rows.row(i));
        }
    }
    return ext;
}

std::vector<AuditRecord> Broker::audit_log() const {
    std::lock_guard lock(mu_);
    return log_;
}

AuditReport Broker::audit() const {
    std::lock_guard lock(mu_);
    AuditReport r;
    r.messages = log_.size();
    for (const auto& m : log_) {
        if (m.layer < 2) ++r.low_layer;
        if (m.raw_feature_payload) ++r.raw_features;
    }
    return r;
}

void Broker::clear_audit() {
    std::lock_guard lock(mu_);
    log_.clear();
    frames_.clear();
}

std::vector<std::vector<std::uint8_t>> Broker::frames() const {
    std::lock_guard lock(mu_);
    return frames_;
}

}  // namespace fedgraph
