#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fedgraph/broker.hpp"
#include "fedgraph/errors.hpp"
#include "fedgraph/federation.hpp"
#include "test_util.hpp"

using namespace fedgraph;
using namespace testutil;

namespace {

GcnWeights filled(std::span<const std::size_t> dims, double v) {
    auto w = GcnWeights::zeros(dims);
    for (auto& m : w.layers) std::fill(m.data().begin(), m.data().end(), v);
    return w;
}

struct Fixture {
    Graph g;
    std::vector<ClientGraph> clients;
};

Fixture split_fixture(std::size_t n, double p, std::uint64_t seed, std::size_t parts = 2) {
    RngStream rng(seed);
    Fixture f;
    f.g = random_graph(n, p, 4, 3, rng);
    std::vector<std::vector<NodeId>> sets(parts);
    for (NodeId v = 0; v < n; ++v) sets[v % parts].push_back(v);
    f.clients = partition_with_assignment(f.g, sets);
    return f;
}

FederationConfig small_config(SamplerKind kind = SamplerKind::fedgraph) {
    FederationConfig cfg;
    cfg.train.hidden_dim = 6;
    cfg.train.dropout = 0.0;
    cfg.plan.kind = kind;
    cfg.plan.policy = SamplingPolicy{8, {0.6, 0.6}};
    cfg.seed = 42;
    return cfg;
}

std::string metrics_of(Federation& fed, int rounds) {
    std::ostringstream out;
    write_metrics_header(out);
    for (int t = 0; t < rounds; ++t) write_metrics_rows(out, fed.run_round());
    return out.str();
}

}  // namespace

TEST_CASE("aggregate examples") {
    const std::vector<std::size_t> dims{2, 3, 2};
    const std::vector<GcnWeights> one{filled(dims, 0.7)};
    const std::vector<double> k1{5};
    CHECK(aggregate(one, k1) == one[0]);

    const std::vector<GcnWeights> pair{filled(dims, 0.0), filled(dims, 1.0)};
    const std::vector<double> equal{2, 2}, skew{1, 3};
    CHECK(aggregate(pair, equal) == filled(dims, 0.5));
    CHECK(aggregate(pair, skew) == filled(dims, 0.75));

    const std::vector<double> zero{0, 0};
    CHECK_THROWS_AS(aggregate(pair, zero), PreconditionError);
    const std::vector<std::size_t> other{2, 4, 2};
    const std::vector<GcnWeights> mixed{filled(dims, 0.0), filled(other, 1.0)};
    CHECK_THROWS_AS(aggregate(mixed, equal), ShapeError);
    CHECK_THROWS_AS(aggregate(std::vector<GcnWeights>{}, std::vector<double>{}), PreconditionError);
}

TEST_CASE("aggregate equals the direct weighted sum") {
    RngStream rng(3);
    const std::vector<std::size_t> dims{5, 4, 3};
    for (int t = 0; t < 50; ++t) {
        const std::size_t n = 1 + rng.uniform_int(6);
        std::vector<GcnWeights> ws;
        std::vector<double> kappa;
        for (std::size_t i = 0; i < n; ++i) {
            ws.push_back(random_weights(dims, rng, 3.0));
            kappa.push_back(1.0 + static_cast<double>(rng.uniform_int(300)));
        }
        const auto agg = aggregate(ws, kappa);
        const double total = std::accumulate(kappa.begin(), kappa.end(), 0.0);
        for (std::size_t l = 0; l < agg.layers.size(); ++l)
            for (std::size_t j = 0; j < agg.layers[l].size(); ++j) {
                double s = 0.0;
                for (std::size_t i = 0; i < n; ++i) s += kappa[i] * ws[i].layers[l].data()[j];
                CHECK(std::abs(agg.layers[l].data()[j] - s / total) <= 1e-12);
            }
    }
}

TEST_CASE("broker message frames round-trip") {
    BrokerMessage req{MsgType::request, 7, 1, 2, 2, {4, 9, 11}, {}};
    const auto rf = encode_message(req);
    CHECK(rf.size() == 14 + 12);
    CHECK(decode_message(rf) == req);

    BrokerMessage resp{MsgType::response, 7, 2, 1, 2, {4, 9}, Matrix{{1.5, -2, 0}, {0.25, 3, 8}}};
    const auto pf = encode_message(resp);
    CHECK(pf.size() == 14 + 8 + 48);
    CHECK(decode_message(pf) == resp);

    auto bad = pf;
    bad.pop_back();
    CHECK_THROWS_AS(decode_message(bad), FormatError);
    auto trailing = rf;
    trailing.push_back(0);
    CHECK_THROWS_AS(decode_message(trailing), FormatError);
    auto kind = rf;
    kind[0] = 9;
    CHECK_THROWS_AS(decode_message(kind), FormatError);
}

TEST_CASE("broker enforces the privacy and authorization contract") {
    const auto f = split_fixture(20, 0.3, 5);
    Broker broker(f.clients, true);
    RngStream rng(1);
    const std::vector<std::size_t> dims{4, 5, 3};
    broker.begin_round(1);
    broker.publish(0, {random_weights(dims, rng), random_weights(dims, rng)});
    REQUIRE(!f.clients[0].boundary.empty());
    const auto& e = f.clients[0].boundary.front();
    const std::vector<NodeId> ids{e.remote};
    CHECK_THROWS_AS(broker.serve_embeddings(0, e.owner, 1, ids, 1), PrivacyViolation);
    CHECK_NOTHROW(broker.serve_embeddings(0, e.owner, 2, ids, 1));

    // A node that is not a boundary neighbour of client 0.
    NodeId stranger = 0;
    for (NodeId u : f.clients[1].local_to_global)
        if (!f.clients[0].has_boundary_neighbor(1, u)) stranger = u;
    const std::vector<NodeId> bad{stranger};
    CHECK_THROWS_AS(broker.serve_embeddings(0, 1, 2, bad, 1), AuthorizationError);
    CHECK_THROWS_AS(broker.serve_embeddings(0, 0, 2, ids, 1), AuthorizationError);
    CHECK_THROWS_AS(broker.serve_embeddings(0, e.owner, 2, ids, 2), StateError);
}

TEST_CASE("served layer-2 rows match a dense oracle") {
    const auto f = split_fixture(18, 0.35, 8);
    Broker broker(f.clients, true);
    RngStream rng(2);
    const std::vector<std::size_t> dims{4, 5, 3};
    const std::vector<GcnWeights> ws{random_weights(dims, rng), random_weights(dims, rng)};
    broker.begin_round(1);
    broker.publish(0, ws);

    const auto& c1 = f.clients[1];
    const auto q = dense_q(f.g);
    // Oracle over client 1's node set with global-degree Q restricted to internal pairs.
    const auto& nodes = c1.local_to_global;
    Matrix qint(nodes.size(), nodes.size());
    Matrix x(nodes.size(), 4);
    for (std::size_t a = 0; a < nodes.size(); ++a) {
        for (std::size_t b = 0; b < nodes.size(); ++b) qint(a, b) = q(nodes[a], nodes[b]);
        for (std::size_t k = 0; k < 4; ++k) x(a, k) = f.g.features(nodes[a], k);
    }
    const Matrix expect = matmul(relu(matmul(matmul(qint, x), ws[1].layers[0])), ws[1].layers[1]);

    std::vector<NodeId> ids;
    for (const auto& e : f.clients[0].boundary)
        if (e.owner == 1 && std::find(ids.begin(), ids.end(), e.remote) == ids.end()) ids.push_back(e.remote);
    std::sort(ids.begin(), ids.end());
    REQUIRE(!ids.empty());
    const auto share = broker.serve_embeddings(0, 1, 2, ids, 1);
    CHECK(share.layer == 2);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto local = static_cast<std::size_t>(c1.local_of(ids[i]));
        for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(share.rows(i, j) - expect(local, j)) <= 1e-9);
    }

    broker.keep_frames(true);
    broker.serve_embeddings(0, 1, 2, ids, 1);
    broker.serve_embeddings(0, 1, 2, ids, 1);
    const auto frames = broker.frames();
    REQUIRE(frames.size() == 4);
    CHECK(frames[1] == frames[3]);
    CHECK(decode_message(frames[1]).payload == share.rows);
}

TEST_CASE("identical clients with deterministic training agree") {
    RngStream rng(4);
    auto g = random_graph(16, 0.3, 4, 3, rng);
    std::vector<NodeId> all(16);
    std::iota(all.begin(), all.end(), 0);
    auto clients = partition_with_assignment(g, {all, all, all});
    auto cfg = small_config(SamplerKind::full_batch);
    cfg.workers = 3;
    Federation fed(clients, cfg);
    fed.run_round();
    const auto& w = fed.client_weights();
    CHECK(w[0] == w[1]);
    CHECK(w[1] == w[2]);
    CHECK(fed.global_weights().dims() == w[0].dims());
    CHECK(max_abs_diff(fed.global_weights().layers[0], w[0].layers[0]) <= 1e-15);
}

TEST_CASE("round time is the slowest client under the clock model") {
    const auto f = split_fixture(40, 0.2, 9, 3);
    auto cfg = small_config();
    cfg.clock = ClockModel{ClockModel::Kind::simulated, 1.0, 0.0};
    Federation fed(f.clients, cfg);
    for (int t = 0; t < 3; ++t) {
        const auto rec = fed.run_round();
        std::size_t most = 0;
        for (const auto& c : rec.clients) most = std::max(most, c.edges);
        CHECK(rec.delta == static_cast<double>(most));
        CHECK(rec.lambda >= 0.0);
        CHECK(rec.lambda <= 1.0);
    }
    ClockModel clock{ClockModel::Kind::simulated, 1.0, 0.0};
    CHECK(std::max(clock.client_time(100, 0), clock.client_time(250, 0)) == 250.0);
}

TEST_CASE("a failing client aborts the round without touching the server") {
    const auto f = split_fixture(12, 0.3, 10);
    auto g = f.g;
    g.train_mask.assign(12, 0);
    g.train_mask[0] = 1;
    // Client 1 holds no training node, so its sampler fails.
    auto clients = partition_with_assignment(g, {{0, 2, 4}, {1, 3, 5}}, false);
    Federation fed(clients, small_config());
    const auto before = fed.global_weights();
    CHECK_THROWS_AS(fed.run_round(), RoundAborted);
    CHECK(fed.global_weights() == before);
    CHECK(fed.round() == 0);
}

TEST_CASE("runs are deterministic and independent of the worker count") {
    const auto f = split_fixture(40, 0.15, 11, 4);
    auto cfg = small_config();
    cfg.train.dropout = 0.5;
    cfg.workers = 1;
    Federation a(f.clients, cfg);
    cfg.workers = 4;
    Federation b(f.clients, cfg);
    Federation c(f.clients, cfg);
    const auto ma = metrics_of(a, 3);
    CHECK(ma == metrics_of(b, 3));
    CHECK(ma.rfind(std::string(kMetricsHeader) + "\n", 0) == 0);
    c.reset(42);
    CHECK(metrics_of(c, 3) == ma);
}

TEST_CASE("nonShare equals share without boundary edges") {
    RngStream rng(12);
    const auto g = random_graph(20, 0.2, 4, 3, rng);
    std::vector<NodeId> all(20);
    std::iota(all.begin(), all.end(), 0);
    const auto clients = partition_with_assignment(g, {all, all});
    auto cfg = small_config();
    Federation share(clients, cfg);
    cfg.share = ShareMode::non_share;
    Federation none(clients, cfg);
    CHECK(metrics_of(share, 3) == metrics_of(none, 3));
}

TEST_CASE("stale and synchronous exchange coincide with one local iteration") {
    const auto f = split_fixture(30, 0.2, 13, 3);
    auto cfg = small_config();
    Federation stale(f.clients, cfg);
    cfg.exchange = ExchangeMode::synchronous;
    Federation sync(f.clients, cfg);
    CHECK(metrics_of(stale, 2) == metrics_of(sync, 2));

    cfg.train.local_iterations = 3;
    Federation sync3(f.clients, cfg);
    cfg.exchange = ExchangeMode::stale;
    Federation stale3(f.clients, cfg);
    sync3.run_round();
    stale3.run_round();
    CHECK(!(sync3.global_weights() == stale3.global_weights()));
}

TEST_CASE("the audit of a full run is clean; allShare is not") {
    const auto f = split_fixture(40, 0.2, 14, 3);
    auto cfg = small_config();
    Federation fed(f.clients, cfg);
    for (int t = 0; t < 3; ++t) fed.run_round();
    const auto report = fed.broker().audit();
    CHECK(report.messages > 0);
    CHECK(report.clean());
    for (const auto& m : fed.broker().audit_log()) CHECK(m.layer >= 2);

    cfg.share = ShareMode::all_share;
    Federation all(f.clients, cfg);
    all.run_round();
    CHECK(all.broker().audit().low_layer > 0);
}

TEST_CASE("higher selection probability never lowers the expected edge count") {
    const auto f = split_fixture(60, 0.15, 15, 2);
    std::vector<double> mean_edges;
    for (double p : {0.2, 0.5, 0.8, 1.0}) {
        auto cfg = small_config();
        cfg.plan.policy = SamplingPolicy{16, {p, p}};
        Federation fed(f.clients, cfg);
        double edges = 0.0;
        for (int t = 0; t < 10; ++t) edges += fed.run_round().clients[0].edges;
        mean_edges.push_back(edges / 10.0);
    }
    CHECK(std::is_sorted(mean_edges.begin(), mean_edges.end()));
}

TEST_CASE("policies are validated and the metrics header is stable") {
    const auto f = split_fixture(20, 0.2, 16);
    Federation fed(f.clients, small_config());
    CHECK_THROWS_AS(fed.set_policies({SamplingPolicy{4, {0.5, 0.5}}}), PreconditionError);
    CHECK_THROWS_AS(fed.set_policies({SamplingPolicy{4, {0.5, 0.0}}, SamplingPolicy{4, {0.5, 0.5}}}),
                    PreconditionError);
    std::ostringstream out;
    const std::vector<std::string> extra{"episode", "return"};
    write_metrics_header(out, extra);
    CHECK(out.str() == "round,delta,lambda,reward,client,loss,kappa,edges,bytes,episode,return\n");
}
