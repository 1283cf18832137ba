// Acceptance harness: one PASS/FAIL line per criterion. Pass criterion
// numbers as arguments to run a subset.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>

#include "fedgraph/errors.hpp"
#include "fedgraph/experiment.hpp"
#include "test_util.hpp"

using namespace fedgraph;
using namespace testutil;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string fmt(double x) {
    std::ostringstream s;
    s.precision(4);
    s << x;
    return s.str();
}

RunConfig cora_config() {
    RunConfig cfg;
    cfg.dataset = cora_dir();
    cfg.partition.num_clients = 4;
    cfg.partition.mean_fraction = 0.8;
    cfg.partition.fraction_variance = 0.1;
    cfg.partition.seed = 1;
    cfg.policy = SamplingPolicy{256, {0.5, 0.5}};
    return cfg;
}

Verdict centralized() {
    RngStream rng(2024);
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) worst = std::max(worst, centralized_error(rng));
    return {worst <= 1e-9, "max |logit diff| " + fmt(worst)};
}

Verdict gradients() {
    RngStream rng(77);
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) worst = std::max(worst, gradient_error(rng));
    return {worst <= 1e-5, "max relative error " + fmt(worst)};
}

Verdict unbiasedness() {
    const auto cs = two_clients(40, 0.15, 5);
    const auto& cg = cs[0];
    const auto train = cg.train_nodes();
    const auto kappa = static_cast<std::uint32_t>(train.size());
    double worst_z = 0.0, worst_bias_ratio = 0.0;
    std::size_t checked = 0;
    for (double p : {0.3, 0.5, 0.8})
        for (std::size_t i = 0; i < std::min<std::size_t>(6, train.size()); ++i) {
            const NodeId v = train[i];
            RngStream rng = RngStream::derive(17, Stream::sampling, v);
            const auto r = monte_carlo(10000, [&] {
                const auto plan = model_construct(cg, SamplingPolicy{kappa, {p}}, rng);
                return plan_row(cg, plan, batch_position(plan, v));
            });
            const double truth = exact_row(cg, v);
            if (r.se > 0) worst_z = std::max(worst_z, std::abs(r.mean - truth) / r.se);
            else if (r.mean != truth) worst_z = HUGE_VAL;

            // Neighbour terms without the self-loop, which is always kept.
            std::vector<double> terms;
            auto nb = cg.internal_neighbors(v);
            auto w = cg.internal_weights(v);
            for (std::size_t k = 0; k < nb.size(); ++k) terms.push_back(w[k] * node_value(cg, NodeRef::local(nb[k])));
            for (const auto& e : cg.boundary_edges(v))
                terms.push_back(e.q_weight * node_value(cg, NodeRef::remote(e.owner, e.remote)));
            if (terms.empty() || terms.size() > 20) continue;
            const double neighbour_sum = std::accumulate(terms.begin(), terms.end(), 0.0);
            const double bias = std::abs(exact_expectation(terms, p) - neighbour_sum);
            if (r.se > 0) worst_bias_ratio = std::max(worst_bias_ratio, bias / r.se);
            ++checked;
        }
    const bool ok = worst_z <= 3.0 && worst_bias_ratio <= 0.1 && checked > 0;
    return {ok, "max |mean-Qh|/SE " + fmt(worst_z) + ", fallback bias/SE " + fmt(worst_bias_ratio)};
}

Verdict aggregation() {
    bool ok = true;
    std::string detail;
    const std::vector<std::size_t> dims{3, 2};
    const GcnWeights zeros = GcnWeights::zeros(dims);
    GcnWeights ones = zeros;
    for (double& x : ones.layers[0].data()) x = 1.0;
    const std::vector<GcnWeights> pair{zeros, ones};
    const std::vector<double> k13{1.0, 3.0};
    const auto m = aggregate(pair, k13);
    for (double x : m.layers[0].data()) ok = ok && x == 0.75;
    detail += "kappa=(1,3) -> " + fmt(m.layers[0](0, 0));

    RngStream rng(4);
    const auto w = random_weights(dims, rng);
    const std::vector<GcnWeights> single{w};
    const std::vector<double> k1{7.0};
    ok = ok && aggregate(single, k1) == w;

    double worst = 0.0;
    for (int t = 0; t < 50; ++t) {
        const std::size_t n = 1 + rng.uniform_int(6);
        std::vector<GcnWeights> ws;
        std::vector<double> ks;
        for (std::size_t i = 0; i < n; ++i) {
            ws.push_back(random_weights(dims, rng));
            ks.push_back(static_cast<double>(1 + rng.uniform_int(300)));
        }
        const auto agg = aggregate(ws, ks);
        const double total = std::accumulate(ks.begin(), ks.end(), 0.0);
        for (std::size_t l = 0; l < agg.layers.size(); ++l)
            for (std::size_t e = 0; e < agg.layers[l].size(); ++e) {
                double s = 0.0;
                for (std::size_t i = 0; i < n; ++i) s += ks[i] * ws[i].layers[l].data()[e];
                worst = std::max(worst, std::abs(agg.layers[l].data()[e] - s / total));
            }
    }
    ok = ok && worst <= 1e-12;
    return {ok, detail + ", single-client identity, max identity error " + fmt(worst)};
}

// Shared by criteria 5 and 8.
struct CoraRun {
    double accuracy = 0.0;
    AuditReport audit;
    bool injected_rejected = false;
};

CoraRun cora_run() {
    auto cfg = cora_config();
    cfg.rounds = 300;
    const auto g = load_graph(cfg);
    Federation fed(partition(g, cfg.partition), federation_config(cfg));
    const auto recs = run_training(fed, cfg);
    CoraRun out;
    out.accuracy = recs.back().lambda;
    out.audit = fed.broker().audit();
    // Inject a layer-1 request for a real boundary node.
    for (const auto& cg : fed.clients()) {
        if (cg.boundary.empty()) continue;
        const auto& e = cg.boundary.front();
        const std::vector<NodeId> ids{e.remote};
        fed.broker().begin_round(fed.round());
        try {
            fed.broker().serve_embeddings(cg.id, e.owner, 1, ids, fed.round());
        } catch (const PrivacyViolation&) {
            out.injected_rejected = true;
        }
        break;
    }
    return out;
}

CoraRun& shared_cora_run() {
    static CoraRun run = cora_run();
    return run;
}

Verdict cora_accuracy() {
    const auto& r = shared_cora_run();
    return {r.accuracy >= 0.72, "test accuracy after 300 rounds " + fmt(r.accuracy)};
}

Verdict sharing_ablation() {
    std::map<RunMode, std::vector<double>> acc;
    for (auto mode : {RunMode::nonshare, RunMode::fedgraph_fixed, RunMode::allshare})
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            RunConfig cfg;
            cfg.synth = SbmSpec{4, 100, 0.2, 0.02, 8, 2.0, seed};
            cfg.partition.num_clients = 4;
            cfg.partition.mean_fraction = 0.5;
            cfg.partition.fraction_variance = 0.0;
            cfg.partition.seed = seed;
            cfg.seeds.partition = seed;
            cfg.seeds.training = seed;
            cfg.mode = mode;
            cfg.policy = SamplingPolicy{64, {1.0, 1.0}};
            cfg.rounds = 100;
            const auto g = load_graph(cfg);
            Federation fed(partition(g, cfg.partition), federation_config(cfg));
            acc[mode].push_back(run_training(fed, cfg).back().lambda);
        }
    const double non = median(acc[RunMode::nonshare]);
    const double share = median(acc[RunMode::fedgraph_fixed]);
    const double all = median(acc[RunMode::allshare]);
    const bool ok = share - non >= 0.05 && all - share <= 0.03;
    return {ok, "median accuracy nonShare " + fmt(non) + ", share " + fmt(share) + ", allShare " + fmt(all)};
}

Verdict ddpg_convergence() {
    DdpgConfig bcfg;
    bcfg.state_dim = 4;
    bcfg.gamma = 0.0;
    bcfg.pca_warmup = 2;
    bcfg.batch = 32;
    BanditEnvironment bandit(4, 1, 0.5);
    DdpgController bctl(1, bcfg, 1);
    train_controller(bandit, bctl, 1, 3000);
    const auto& a = bandit.actions();
    const double mean_action = std::accumulate(a.end() - 200, a.end(), 0.0) / 200.0;
    const bool bandit_ok = std::abs(mean_action - 0.5) <= 0.05;

    auto cfg = cora_config();
    cfg.mode = RunMode::fedgraph_ddpg;
    const auto g = load_graph(cfg);
    Federation fed(partition(g, cfg.partition), federation_config(cfg));
    const auto codec = make_codec(cfg, fed.clients().size());
    DdpgController ctl(codec.dim(), cfg.ddpg, cfg.seeds.controller);
    FederatedEnvironment env(fed, codec, cfg.reward, cfg.seeds.training);
    const auto rets = train_controller(env, ctl, 60, 30);
    double first = 0.0, last = 0.0;
    for (std::size_t i = 0; i < 10; ++i) {
        first += rets[i].ret / 10.0;
        last += rets[rets.size() - 10 + i].ret / 10.0;
    }
    const bool cora_ok = last >= first;
    return {bandit_ok && cora_ok, "(a) bandit mean action " + fmt(mean_action) + "; (b) Cora returns first-10 mean " +
                                      fmt(first) + ", last-10 mean " + fmt(last)};
}

Verdict privacy() {
    const auto& r = shared_cora_run();
    const bool ok = r.audit.messages > 0 && r.audit.clean() && r.injected_rejected;
    return {ok, std::to_string(r.audit.messages) + " messages audited, " + std::to_string(r.audit.low_layer) +
                    " below layer 2, " + std::to_string(r.audit.raw_features) + " raw-feature payloads; injected l=1 " +
                    (r.injected_rejected ? "rejected" : "accepted")};
}

Verdict reward_table() {
    bool ok = true;
    const RewardConfig a{128.0, 0.9016, 0.25, 20.0};
    ok = ok && reward(0.9016, 20.0, a) == 1.0;
    ok = ok && reward(0.9016, 24.0, a) == 0.0;
    const RewardConfig b{128.0, 1.0, 0.5, 3.0};
    ok = ok && reward(0.0, 3.0, b) == 1.0 / 128.0;
    const bool examples = ok;
    const RewardConfig c{128.0, 0.9016, 1e-3, 100.0};
    for (int i = 0; i <= 40; ++i)
        for (int j = 0; j < 100; ++j) {
            const double d = 50.0 * i, l = 0.01 * j;
            ok = ok && reward(l + 0.01, d, c) > reward(l, d, c);
            ok = ok && reward(l, d + 50.0, c) < reward(l, d, c);
        }
    return {ok, std::string("examples ") + (examples ? "exact" : "wrong") + ", monotonicity sweep " +
                    (ok == examples ? "holds" : "violated")};
}

Verdict heterogeneity() {
    BenchMatrix m;
    m.modes = {RunMode::full_batch};
    m.variances = {0.1, 0.5, 1.0};
    m.target = 0.7;
    std::ostringstream table;
    const auto rows = run_bench(cora_config(), m);
    bool ok = rows.size() == 3;
    std::string detail = "time-to-target by variance:";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        detail += " " + fmt(rows[i].variance) + "->" + fmt(rows[i].time_to_target);
        ok = ok && std::isfinite(rows[i].time_to_target);
        if (i > 0) ok = ok && rows[i].time_to_target >= rows[i - 1].time_to_target;
    }
    return {ok, detail};
}

struct Criterion {
    int id;
    const char* name;
    double budget_seconds;  // 0 = no limit stated
    std::function<Verdict()> run;
};

}  // namespace

int main(int argc, char** argv) {
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::stoi(argv[i]));

    const std::vector<Criterion> criteria{
        {1, "centralized equivalence", 10, centralized},
        {2, "gradient correctness", 60, gradients},
        {3, "sampling unbiasedness", 60, unbiasedness},
        {4, "aggregation exactness", 0, aggregation},
        {5, "desk-scale Cora accuracy", 600, cora_accuracy},
        {6, "sharing ablation", 600, sharing_ablation},
        {7, "DDPG convergence", 1800, ddpg_convergence},
        {8, "privacy contract", 0, privacy},
        {9, "reward unit table", 0, reward_table},
        {10, "heterogeneity harness", 0, heterogeneity},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && !only.count(c.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = c.run();
        } catch (const std::exception& e) {
            v = {false, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (c.budget_seconds > 0 && secs > c.budget_seconds) {
            v.pass = false;
            v.detail += "; over the " + fmt(c.budget_seconds) + " s budget";
        }
        failures += v.pass ? 0 : 1;
        std::printf("%s criterion %d (%s): %s [%.1f s]\n", v.pass ? "PASS" : "FAIL", c.id, c.name, v.detail.c_str(),
                    secs);
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
