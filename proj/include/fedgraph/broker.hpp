#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <span>
#include <unordered_set>
#include <vector>

#include "fedgraph/gcn.hpp"
#include "fedgraph/partition.hpp"

namespace fedgraph {

enum class MsgType : std::uint8_t { request = 1, response = 2 };

/// One framed broker record. Wire layout (little-endian, no padding):
///   msg_type u8 | round u32 | src u16 | dst u16 | layer u8 | count u32 |
///   ids u32[count] | payload f64[count * width]
/// `layer` is the 1-based GCN layer l of the rows h^(l)·W^(l). Requests carry
/// no payload; a response's width is implied by the frame length.
struct BrokerMessage {
    MsgType type = MsgType::request;
    std::uint32_t round = 0;
    ClientId src = 0;
    ClientId dst = 0;
    std::uint8_t layer = 0;
    std::vector<std::uint32_t> ids;
    Matrix payload;  // [count x width], empty for requests

    bool operator==(const BrokerMessage&) const = default;
};

std::vector<std::uint8_t> encode_message(const BrokerMessage& m);
BrokerMessage decode_message(std::span<const std::uint8_t> frame);

/// The only cross-client payload: rows h_j^(l)(u)·W_j^(l), l >= 2.
struct EmbeddingShare {
    ClientId source = 0;
    std::uint8_t layer = 0;  // 1-based
    std::vector<NodeId> ids;
    Matrix rows;
    std::uint32_t round = 0;
};

struct AuditRecord {
    MsgType type;
    std::uint32_t round;
    ClientId src, dst;
    std::uint8_t layer;
    std::uint32_t count;
    std::uint32_t width;
    bool raw_feature_payload;  // some payload row equals the node's raw features
    std::size_t bytes;
};

struct AuditReport {
    std::size_t messages = 0;
    std::size_t low_layer = 0;      // layer < 2
    std::size_t raw_features = 0;   // payload rows identical to x(u)
    bool clean() const { return low_layer == 0 && raw_features == 0; }
};

/// In-process embedding broker. Serving clients compute rows from a weight
/// snapshot using their full (unsampled) internal neighbourhood, memoised
/// per (round, snapshot, client, layer). Thread-safe.
class Broker : public Exchange {
public:
    // With enforce_privacy = false layer-1 requests are served (allShare ablation).
    explicit Broker(std::span<const ClientGraph> clients, bool enforce_privacy = true);

    void begin_round(std::uint32_t round);
    // Weights every client serves from for iterations >= `iteration` (until the next publish).
    void publish(std::size_t iteration, std::vector<GcnWeights> weights);

    EmbeddingShare serve_embeddings(ClientId requester, ClientId target, std::size_t layer,
                                    std::span<const NodeId> ids, std::uint32_t round, std::size_t iteration = 0,
                                    ExchangeStats* stats = nullptr);

    ExternalRows fetch(ClientId requester, const LayerPlan& plan, std::size_t first_layer, std::size_t iteration,
                       ExchangeStats& stats) override;

    std::vector<AuditRecord> audit_log() const;
    AuditReport audit() const;
    void clear_audit();
    // Keep encoded frames for inspection (tests).
    void keep_frames(bool on) { keep_frames_ = on; }
    std::vector<std::vector<std::uint8_t>> frames() const;

    static constexpr std::size_t kEvalIteration = std::size_t{1} << 30;

private:
    const Matrix& products(ClientId client, std::size_t weight_layer, std::size_t iteration);
    const std::vector<GcnWeights>& snapshot_for(std::size_t iteration) const;
    void log(const BrokerMessage& m, std::size_t frame_bytes, bool raw);

    std::span<const ClientGraph> clients_;
    bool enforce_privacy_;
    bool keep_frames_ = false;
    std::vector<std::unordered_set<std::uint64_t>> authorized_;  // per requester: owner<<32 | global
    std::uint32_t round_ = 0;
    std::map<std::size_t, std::vector<GcnWeights>> snapshots_;
    std::map<std::tuple<std::size_t, ClientId, std::size_t>, Matrix> memo_;  // (snapshot key, client, layer)
    mutable std::mutex mu_;
    std::vector<AuditRecord> log_;
    std::vector<std::vector<std::uint8_t>> frames_;
};

/// Layer-by-layer internal-only embeddings of every node of a client:
/// result[k] = H_k · W_k where H_0 = features, H_{k+1} = ReLU(Q_int H_k W_k).
std::vector<Matrix> internal_products(const ClientGraph& cg, const GcnWeights& w, std::size_t upto_layer);

}  // namespace fedgraph
