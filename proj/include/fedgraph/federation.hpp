#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fedgraph/broker.hpp"
#include "fedgraph/gcn.hpp"
#include "fedgraph/partition.hpp"

namespace fedgraph {

/// W̄ = Σ κ_i W_i / Σ κ_i.
GcnWeights aggregate(std::span<const GcnWeights> weights, std::span<const double> kappa);

/// How cross-client rows are used: share (layers >= 2, the default),
/// nonShare (never) and allShare (every layer, including raw-feature products).
enum class ShareMode { share, non_share, all_share };

/// stale: servers answer from the weights downloaded at the start of the
/// round. synchronous: clients advance in lock-step and serve their current
/// local weights for each iteration.
enum class ExchangeMode { stale, synchronous };

struct ClockModel {
    enum class Kind { simulated, wallclock };
    Kind kind = Kind::simulated;
    double c1 = 1.0;   // per processed edge
    double c2 = 0.01;  // per exchanged value

    double client_time(std::size_t edges, std::size_t values) const {
        return c1 * static_cast<double>(edges) + c2 * static_cast<double>(values);
    }
};

struct FederationConfig {
    TrainConfig train;
    PlanSpec plan;  // sampler kind and default policy
    ShareMode share = ShareMode::share;
    ExchangeMode exchange = ExchangeMode::stale;
    ClockModel clock;
    std::size_t workers = 1;
    std::uint64_t seed = 0;

    std::size_t external_from() const;
};

struct ClientRoundStats {
    ClientId client = 0;
    double loss = 0.0;  // mean over local iterations
    std::size_t kappa = 0;
    std::size_t nodes = 0;
    std::size_t edges = 0;
    std::size_t values = 0;
    std::size_t bytes = 0;
};

struct RoundRecord {
    std::uint32_t round = 0;
    double delta = 0.0;   // round time under the clock model
    double lambda = 0.0;  // global test accuracy after aggregation
    double reward = 0.0;
    std::vector<ClientRoundStats> clients;
};

struct ServerState {
    GcnWeights global;
    std::vector<SamplingPolicy> policies;
    std::uint32_t round = 0;
};

/// The server plus its simulated clients.
class Federation {
public:
    Federation(std::vector<ClientGraph> clients, FederationConfig cfg);

    // Fresh weights drawn from `seed`; optimizer state cleared; policies reset.
    void reset(std::uint64_t seed);
    // One Algorithm-2 round. On failure throws RoundAborted and leaves state untouched.
    RoundRecord run_round();
    // Global test accuracy of W̄ (same protocol as the per-round λ).
    double evaluate_global();

    void set_policies(std::vector<SamplingPolicy> policies);
    const std::vector<SamplingPolicy>& policies() const noexcept { return state_.policies; }
    const GcnWeights& global_weights() const noexcept { return state_.global; }
    void set_global_weights(GcnWeights w);
    // Local weights from the last round (W̄ before the first round).
    const std::vector<GcnWeights>& client_weights() const noexcept { return client_weights_; }
    const std::vector<ClientGraph>& clients() const noexcept { return clients_; }
    const FederationConfig& config() const noexcept { return cfg_; }
    std::uint32_t round() const noexcept { return state_.round; }
    Broker& broker() noexcept { return *broker_; }
    std::vector<std::size_t> layer_dims() const;

private:
    std::vector<ClientGraph> clients_;
    FederationConfig cfg_;
    std::unique_ptr<Broker> broker_;
    ServerState state_;
    std::vector<GcnWeights> client_weights_;
    std::vector<std::vector<AdamState>> optimizers_;
    std::uint64_t seed_ = 0;
};

// Metrics CSV: one row per (round, client).
inline constexpr const char* kMetricsHeader = "round,delta,lambda,reward,client,loss,kappa,edges,bytes";
void write_metrics_header(std::ostream& out, std::span<const std::string> extra_columns = {});
void write_metrics_rows(std::ostream& out, const RoundRecord& r, std::span<const std::string> extra_values = {});

}  // namespace fedgraph
