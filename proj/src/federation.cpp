#include "fedgraph/federation.hpp"

#include <atomic>
#include <chrono>
#include <exception>
#include <numeric>
#include <ostream>
#include <string>
#include <thread>

#include "fedgraph/errors.hpp"

namespace fedgraph {

GcnWeights aggregate(std::span<const GcnWeights> weights, std::span<const double> kappa) {
    if (weights.empty()) throw PreconditionError("aggregate: no client weights");
    if (weights.size() != kappa.size()) throw PreconditionError("aggregate: one κ per client required");
    double total = 0.0;
    for (double k : kappa) {
        if (!(k >= 0.0)) throw PreconditionError("aggregate: κ must be non-negative");
        total += k;
    }
    if (!(total > 0.0)) throw PreconditionError("aggregate: Σκ must be positive");
    const auto dims = weights.front().dims();
    GcnWeights out = GcnWeights::zeros(dims);
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (weights[i].dims() != dims) throw ShapeError("aggregate: client " + std::to_string(i) + " has other layer dims");
        const double share = kappa[i] / total;
        for (std::size_t l = 0; l < dims.size() - 1; ++l) {
            auto& dst = out.layers[l].data();
            const auto& src = weights[i].layers[l].data();
            for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += share * src[j];
        }
    }
    return out;
}

std::size_t FederationConfig::external_from() const {
    switch (share) {
        case ShareMode::share: return 1;
        case ShareMode::all_share: return 0;
        case ShareMode::non_share: return kNoExternal;
    }
    return kNoExternal;
}

namespace {

// Runs fn(i) for i in [0, n) on up to `workers` threads. Failures are
// rethrown after all workers finish, lowest index first.
template <class Fn>
void run_clients(std::size_t n, std::size_t workers, Fn&& fn) {
    std::vector<std::exception_ptr> errors(n);
    auto guarded = [&](std::size_t i) {
        try {
            fn(i);
        } catch (...) {
            errors[i] = std::current_exception();
        }
    };
    const std::size_t threads = std::min(std::max<std::size_t>(workers, 1), n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) guarded(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t)
            pool.emplace_back([&] {
                for (std::size_t i; (i = next.fetch_add(1)) < n;) guarded(i);
            });
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!errors[i]) continue;
        try {
            std::rethrow_exception(errors[i]);
        } catch (const std::exception& e) {
            throw RoundAborted("client " + std::to_string(i) + ": " + e.what());
        }
    }
}

}  // namespace

Federation::Federation(std::vector<ClientGraph> clients, FederationConfig cfg)
    : clients_(std::move(clients)), cfg_(std::move(cfg)) {
    if (clients_.empty()) throw PreconditionError("Federation: no clients");
    cfg_.train.validate();
    if (cfg_.clock.c1 < 0 || cfg_.clock.c2 < 0 || cfg_.clock.c1 + cfg_.clock.c2 <= 0)
        throw PreconditionError("Federation: clock coefficients must be non-negative and not both zero");
    const std::size_t L = cfg_.train.num_layers;
    if (cfg_.plan.policy.probabilities.empty()) cfg_.plan.policy.probabilities.assign(L - 1, 1.0);
    if (cfg_.plan.kind == SamplerKind::fedgraph) cfg_.plan.policy.validate(L);
    for (const auto& c : clients_)
        if (c.feature_dim() != clients_.front().feature_dim() || c.num_classes != clients_.front().num_classes)
            throw PreconditionError("Federation: clients disagree on feature or class dimensions");
    broker_ = std::make_unique<Broker>(clients_, cfg_.share != ShareMode::all_share);
    reset(cfg_.seed);
}

std::vector<std::size_t> Federation::layer_dims() const {
    return cfg_.train.layer_dims(clients_.front().feature_dim(), clients_.front().num_classes);
}

void Federation::reset(std::uint64_t seed) {
    seed_ = seed;
    auto rng = RngStream::derive(seed, Stream::init);
    state_.global = GcnWeights::glorot(layer_dims(), rng);
    state_.policies.assign(clients_.size(), cfg_.plan.policy);
    state_.round = 0;
    client_weights_.assign(clients_.size(), state_.global);
    optimizers_.assign(clients_.size(), {});
}

void Federation::set_policies(std::vector<SamplingPolicy> policies) {
    if (policies.size() != clients_.size()) throw PreconditionError("set_policies: one policy per client required");
    for (const auto& p : policies) p.validate(cfg_.train.num_layers);
    state_.policies = std::move(policies);
}

void Federation::set_global_weights(GcnWeights w) {
    if (w.dims() != layer_dims()) throw ShapeError("set_global_weights: layer dims do not match the model");
    state_.global = std::move(w);
    client_weights_.assign(clients_.size(), state_.global);
}

RoundRecord Federation::run_round() {
    const std::uint32_t round = state_.round + 1;
    const std::size_t n = clients_.size();
    const std::size_t ext_from = cfg_.external_from();
    Exchange* exchange = ext_from == kNoExternal ? nullptr : broker_.get();

    std::vector<GcnWeights> local(n, state_.global);
    auto optimizers = optimizers_;
    std::vector<LocalResult> results(n);
    std::vector<RngStream> rngs;
    for (std::size_t i = 0; i < n; ++i)
        rngs.push_back(RngStream::derive(seed_, Stream::sampling, (std::uint64_t{round} << 16) | i));

    RoundRecord rec;
    rec.round = round;
    GcnWeights global;
    double elapsed = 0.0;
    try {
        broker_->begin_round(round);
        if (cfg_.exchange == ExchangeMode::stale) broker_->publish(0, local);
        const auto start = std::chrono::steady_clock::now();
        for (std::size_t it = 0; it < cfg_.train.local_iterations; ++it) {
            if (cfg_.exchange == ExchangeMode::synchronous) broker_->publish(it, local);
            run_clients(n, cfg_.workers, [&](std::size_t i) {
                PlanSpec spec = cfg_.plan;
                spec.policy = state_.policies[i];
                local_train_step(clients_[i], local[i], spec, cfg_.train, exchange, ext_from, optimizers[i], rngs[i],
                                 it, results[i]);
            });
        }
        elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

        std::vector<double> kappa;
        for (const auto& r : results) kappa.push_back(static_cast<double>(r.batch_size));
        global = aggregate(local, kappa);

        broker_->publish(Broker::kEvalIteration, std::vector<GcnWeights>(n, global));
        std::vector<EvalCounts> counts(n);
        run_clients(n, cfg_.workers, [&](std::size_t i) {
            const auto test = clients_[i].test_nodes();
            counts[i] = evaluate_counts(clients_[i], global, test, exchange, ext_from, Broker::kEvalIteration);
        });
        std::size_t correct = 0, total = 0;
        for (const auto& c : counts) {
            correct += c.correct;
            total += c.total;
        }
        rec.lambda = total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
    } catch (const std::exception& e) {
        throw RoundAborted("round " + std::to_string(round) + " aborted: " + e.what());
    }

    double slowest = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& r = results[i];
        ClientRoundStats s;
        s.client = static_cast<ClientId>(i);
        s.loss = r.losses.empty() ? 0.0 : std::accumulate(r.losses.begin(), r.losses.end(), 0.0) / r.losses.size();
        s.kappa = r.batch_size;
        s.nodes = r.nodes_processed;
        s.edges = r.edges_processed;
        s.values = r.exchange.values;
        s.bytes = r.exchange.bytes;
        slowest = std::max(slowest, cfg_.clock.client_time(s.edges, s.values));
        rec.clients.push_back(s);
    }
    rec.delta = cfg_.clock.kind == ClockModel::Kind::wallclock ? std::max(elapsed, 1e-9) : slowest;

    state_.global = std::move(global);
    state_.round = round;
    client_weights_ = std::move(local);
    optimizers_ = std::move(optimizers);
    return rec;
}

double Federation::evaluate_global() {
    const std::size_t n = clients_.size();
    const std::size_t ext_from = cfg_.external_from();
    Exchange* exchange = ext_from == kNoExternal ? nullptr : broker_.get();
    broker_->begin_round(state_.round);
    broker_->publish(Broker::kEvalIteration, std::vector<GcnWeights>(n, state_.global));
    std::size_t correct = 0, total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto test = clients_[i].test_nodes();
        const auto c = evaluate_counts(clients_[i], state_.global, test, exchange, ext_from, Broker::kEvalIteration);
        correct += c.correct;
        total += c.total;
    }
    return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

void write_metrics_header(std::ostream& out, std::span<const std::string> extra_columns) {
    out << kMetricsHeader;
    for (const auto& c : extra_columns) out << ',' << c;
    out << '\n';
}

void write_metrics_rows(std::ostream& out, const RoundRecord& r, std::span<const std::string> extra_values) {
    const auto old = out.precision(10);
    for (const auto& c : r.clients) {
        out << r.round << ',' << r.delta << ',' << r.lambda << ',' << r.reward << ',' << c.client << ',' << c.loss
            << ',' << c.kappa << ',' << c.edges << ',' << c.bytes;
        for (const auto& v : extra_values) out << ',' << v;
        out << '\n';
    }
    out.precision(old);
}

}  // namespace fedgraph
