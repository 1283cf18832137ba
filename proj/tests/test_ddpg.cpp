#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fedgraph/ddpg.hpp"
#include "fedgraph/errors.hpp"

using namespace fedgraph;

namespace {

DdpgConfig micro_config() {
    DdpgConfig c;
    c.state_dim = 3;
    c.hidden = {4};
    c.batch = 2;
    c.pca_warmup = 2;
    c.gamma = 0.9;
    return c;
}

std::vector<Transition> random_transitions(std::size_t n, std::size_t state_dim, std::size_t action_dim, RngStream& rng) {
    std::vector<Transition> out(n);
    for (auto& t : out) {
        for (std::size_t i = 0; i < state_dim; ++i) {
            t.state.push_back(rng.normal());
            t.next_state.push_back(rng.normal());
        }
        for (std::size_t i = 0; i < action_dim; ++i) t.action.push_back(rng.uniform() * 2 - 1);
        t.reward = rng.normal();
    }
    return out;
}

std::vector<const Transition*> pointers(const std::vector<Transition>& ts) {
    std::vector<const Transition*> out;
    for (const auto& t : ts) out.push_back(&t);
    return out;
}

std::vector<double> flatten(const Mlp::Grads& g) {
    std::vector<double> out;
    for (std::size_t l = 0; l < g.w.size(); ++l) {
        out.insert(out.end(), g.w[l].data().begin(), g.w[l].data().end());
        out.insert(out.end(), g.b[l].data().begin(), g.b[l].data().end());
    }
    return out;
}

double rel_err(double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-4}); }

// Central differences of `f` over the parameters of `net`.
template <class F>
double max_param_error(Mlp& net, const std::vector<double>& analytic, F&& f) {
    auto theta = net.parameters();
    REQUIRE(theta.size() == analytic.size());
    double worst = 0.0;
    const double h = 1e-6;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double x0 = theta[i];
        theta[i] = x0 + h;
        net.set_parameters(theta);
        const double up = f();
        theta[i] = x0 - h;
        net.set_parameters(theta);
        const double down = f();
        theta[i] = x0;
        net.set_parameters(theta);
        worst = std::max(worst, rel_err(analytic[i], (up - down) / (2 * h)));
    }
    return worst;
}

}  // namespace

TEST_CASE("reward examples") {
    RewardConfig cfg{128.0, 0.8, 0.5, 10.0};
    CHECK(reward(0.8, 10.0, cfg) == 1.0);
    CHECK(reward(0.8, 12.0, cfg) == 0.0);
    RewardConfig unit{128.0, 1.0, 0.5, 10.0};
    CHECK(reward(0.0, 10.0, unit) == 1.0 / 128.0);
    CHECK_THROWS_AS(reward(1.5, 1.0, cfg), PreconditionError);
}

TEST_CASE("reward is increasing in accuracy and decreasing in time") {
    RewardConfig cfg{128.0, 0.9016, 0.01, 50.0};
    for (int i = 0; i <= 20; ++i)
        for (int j = 0; j < 100; ++j) {
            const double d = 25.0 * i, l = 0.01 * j;
            CHECK(reward(l + 0.01, d, cfg) > reward(l, d, cfg));
            CHECK(reward(l, d + 25.0, cfg) < reward(l, d, cfg));
        }
}

TEST_CASE("mlp gradients match finite differences") {
    RngStream rng(1);
    for (auto act : {OutputActivation::linear, OutputActivation::tanh}) {
        Mlp net({3, 4, 2}, act, rng, 0.5);
        Matrix x(5, 3);
        for (double& v : x.data()) v = rng.normal();
        Matrix target(5, 2);
        for (double& v : target.data()) v = rng.normal();
        auto loss = [&] {
            const auto y = net.forward(x);
            double s = 0.0;
            for (std::size_t i = 0; i < y.size(); ++i) s += 0.5 * std::pow(y.data()[i] - target.data()[i], 2);
            return s;
        };
        Mlp::Cache cache;
        const auto y = net.forward(x, cache);
        Matrix g(5, 2);
        for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] = y.data()[i] - target.data()[i];
        Matrix gin;
        const auto grads = net.backward(cache, g, &gin);
        CHECK(max_param_error(net, flatten(grads), loss) <= 1e-4);

        double worst = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double x0 = x.data()[i];
            x.data()[i] = x0 + 1e-6;
            const double up = loss();
            x.data()[i] = x0 - 1e-6;
            const double down = loss();
            x.data()[i] = x0;
            worst = std::max(worst, rel_err(gin.data()[i], (up - down) / 2e-6));
        }
        CHECK(worst <= 1e-4);
    }
}

TEST_CASE("soft update") {
    RngStream rng(2);
    Mlp online({2, 3, 1}, OutputActivation::linear, rng, 1.0);
    Mlp target({2, 3, 1}, OutputActivation::linear, rng, 1.0);
    auto copy = target;
    copy.soft_update_from(online, 0.0);
    CHECK(copy == target);
    copy.soft_update_from(online, 1.0);
    CHECK(copy == online);

    auto zeros = target;
    zeros.set_parameters(std::vector<double>(zeros.parameter_count(), 0.0));
    auto ones = online;
    ones.set_parameters(std::vector<double>(ones.parameter_count(), 1.0));
    zeros.soft_update_from(ones, 0.01);
    for (double v : zeros.parameters()) CHECK(v == doctest::Approx(0.01).epsilon(1e-15));

    // Targets stay inside the hull of the online history.
    auto t = target;
    auto lo = t.parameters(), hi = t.parameters();
    for (int k = 0; k < 50; ++k) {
        auto o = online.parameters();
        for (double& v : o) v += rng.normal();
        online.set_parameters(o);
        for (std::size_t i = 0; i < o.size(); ++i) {
            lo[i] = std::min(lo[i], o[i]);
            hi[i] = std::max(hi[i], o[i]);
        }
        t.soft_update_from(online, 0.1);
        const auto p = t.parameters();
        for (std::size_t i = 0; i < p.size(); ++i) {
            CHECK(p[i] >= lo[i] - 1e-12);
            CHECK(p[i] <= hi[i] + 1e-12);
        }
    }
    Mlp other({2, 4, 1}, OutputActivation::linear, rng);
    CHECK_THROWS(t.soft_update_from(other, 0.5));
}

TEST_CASE("replay buffer is a FIFO") {
    ReplayBuffer buf(5);
    for (int i = 0; i < 8; ++i) buf.push({{double(i)}, {0.0}, double(i), {0.0}});
    CHECK(buf.size() == 5);
    const auto items = buf.contents();
    for (int i = 0; i < 5; ++i) CHECK(items[i].reward == i + 3);
    RngStream rng(3);
    const auto pick = buf.sample(5, rng);
    std::vector<double> rs;
    for (auto* t : pick) rs.push_back(t->reward);
    std::sort(rs.begin(), rs.end());
    CHECK(rs == std::vector<double>{3, 4, 5, 6, 7});
    CHECK_THROWS(buf.sample(6, rng));
}

TEST_CASE("critic fixed point, gradients and learning") {
    RngStream rng(4);
    auto cfg = micro_config();
    cfg.gamma = 0.0;
    cfg.critic_lr = 1e-2;
    DdpgController ctl(2, cfg, 7);

    SUBCASE("critic that outputs the reward has zero loss and gradient") {
        std::vector<Transition> ts = random_transitions(4, 3, 2, rng);
        for (auto& t : ts) t.reward = 0.25;
        auto& w = ctl.critic.weights().back();
        std::fill(w.data().begin(), w.data().end(), 0.0);
        ctl.critic.biases().back()(0, 0) = 0.25;
        const auto [loss, grads] = ctl.critic_gradients(pointers(ts));
        CHECK(loss == 0.0);
        for (double g : flatten(grads)) CHECK(g == 0.0);
    }
    SUBCASE("critic gradient matches finite differences") {
        auto c2 = micro_config();
        DdpgController full(2, c2, 9);
        const auto ts = random_transitions(2, 3, 2, rng);
        const auto batch = pointers(ts);
        const auto analytic = flatten(full.critic_gradients(batch).second);
        CHECK(max_param_error(full.critic, analytic, [&] { return full.critic_gradients(batch).first; }) <= 1e-4);
    }
    SUBCASE("critic loss falls on a frozen buffer") {
        auto ts = random_transitions(16, 3, 2, rng);
        for (auto& t : ts) t.reward = 0.5 * t.state[0] - t.action[1];
        const auto batch = pointers(ts);
        const double first = ctl.critic_update(batch);
        double last = first;
        for (int i = 0; i < 100; ++i) last = ctl.critic_update(batch);
        CHECK(last < 0.5 * first);
    }
}

TEST_CASE("actor gradients") {
    RngStream rng(5);
    auto cfg = micro_config();
    DdpgController ctl(2, cfg, 11);
    const auto ts = random_transitions(3, 3, 2, rng);
    const auto batch = pointers(ts);

    const auto analytic = flatten(ctl.actor_gradients(batch).second);
    CHECK(max_param_error(ctl.actor, analytic, [&] { return -ctl.actor_gradients(batch).first; }) <= 1e-4);

    auto& w = ctl.critic.weights().back();
    std::fill(w.data().begin(), w.data().end(), 0.0);
    for (double g : flatten(ctl.actor_gradients(batch).second)) CHECK(g == 0.0);
}

TEST_CASE("actor climbs a fitted quadratic critic to its maximum") {
    DdpgConfig cfg;
    cfg.state_dim = 1;
    cfg.hidden = {64, 64};
    cfg.gamma = 0.0;
    cfg.critic_lr = 3e-3;
    cfg.actor_lr = 1e-3;
    DdpgController ctl(1, cfg, 21);
    RngStream rng(6);
    std::vector<Transition> ts;
    for (int i = 0; i <= 200; ++i) {
        const double a = -1.0 + i / 100.0;
        ts.push_back({{0.0}, {a}, -(a - 0.3) * (a - 0.3), {0.0}});
    }
    const auto all = pointers(ts);
    for (int i = 0; i < 3000; ++i) ctl.critic_update(all);
    const std::vector<const Transition*> states{&ts[0]};
    for (int i = 0; i < 2000; ++i) ctl.actor_update(states);
    const std::vector<double> s{0.0};
    CHECK(std::abs(ctl.act(s)[0] - 0.3) <= 0.02);
}

TEST_CASE("action codec") {
    ActionCodec codec{2, 3, 16, 512, 0.1, 1.0, std::nullopt};
    REQUIRE(codec.dim() == 6);
    const std::vector<double> zero(6, 0.0), one(6, 1.0);
    for (const auto& p : codec.decode(zero)) {
        CHECK(p.batch_size == 264);
        CHECK(p.probabilities == std::vector<double>{0.55, 0.55});
    }
    for (const auto& p : codec.decode(one)) {
        CHECK(p.batch_size == 512);
        CHECK(p.probabilities == std::vector<double>{1.0, 1.0});
    }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const std::vector<double> wild{-7.0, 3.0, nan, 1e9, -1e9, 0.2};
    for (const auto& p : codec.decode(wild)) CHECK_NOTHROW(p.validate(3));
    CHECK(codec.decode(wild)[0].batch_size == 16);

    RngStream rng(7);
    for (int t = 0; t < 200; ++t) {
        std::vector<SamplingPolicy> ps(2);
        for (auto& p : ps) {
            p.batch_size = static_cast<std::uint32_t>(16 + rng.uniform_int(497));
            p.probabilities = {0.1 + 0.9 * rng.uniform(), 0.1 + 0.9 * rng.uniform()};
        }
        const auto back = codec.decode(codec.encode(ps));
        for (std::size_t i = 0; i < 2; ++i) {
            CHECK(back[i].batch_size == ps[i].batch_size);
            for (std::size_t l = 0; l < 2; ++l)
                CHECK(back[i].probabilities[l] == doctest::Approx(ps[i].probabilities[l]).epsilon(1e-12));
        }
        std::vector<double> raw(6);
        for (double& x : raw) x = rng.normal() * 3;
        for (const auto& p : codec.decode(raw)) {
            CHECK(p.batch_size >= 16);
            CHECK(p.batch_size <= 512);
            CHECK_NOTHROW(p.validate(3));
        }
    }
    codec.pinned_kappa = 256;
    for (const auto& p : codec.decode(one)) CHECK(p.batch_size == 256);
    CHECK_THROWS(codec.decode(std::vector<double>(5, 0.0)));
}

TEST_CASE("state encoder") {
    auto cfg = micro_config();
    cfg.pca_warmup = 6;
    DdpgController ctl(2, cfg, 3);
    RngStream rng(8);
    std::vector<std::vector<double>> raws(6, std::vector<double>(5));
    for (auto& r : raws)
        for (double& x : r) x = rng.normal();
    for (std::size_t i = 0; i < raws.size(); ++i) {
        CHECK(!ctl.encoder_ready());
        ctl.step(raws[i], i == 0 ? std::nullopt : std::optional<double>(0.0));
    }
    REQUIRE(ctl.encoder_ready());
    const auto model = pca_fit(raws, 3);
    for (double v : ctl.encode_state(model.mean)) CHECK(std::abs(v) < 1e-9);
    CHECK(ctl.encode_state(raws[2]) == ctl.encode_state(raws[2]));

    auto x = raws[1];
    auto y = x;
    for (std::size_t d = 0; d < 5; ++d) y[d] += 0.5 * model.components(0, d);
    const auto ex = ctl.encode_state(x), ey = ctl.encode_state(y);
    CHECK(std::abs(ex[0] - ey[0]) > 1e-3);
    for (std::size_t i = 1; i < ex.size(); ++i) CHECK(std::abs(ex[i] - ey[i]) < 1e-9);
    CHECK_THROWS_AS(ctl.encode_state(std::vector<double>(4, 0.0)), StateError);
    // Warmup transitions are encoded into the buffer once the encoder is fitted.
    CHECK(ctl.buffer().size() == 5);
}

TEST_CASE("warmup with no noise and a zero actor output emits midpoints") {
    auto cfg = micro_config();
    cfg.noise_sigma = 0.0;
    cfg.noise_floor = 0.0;
    cfg.zero_actor_output = true;
    cfg.pca_warmup = 10;
    cfg.batch = 64;
    DdpgController ctl(6, cfg, 5);
    ActionCodec codec{2, 3, 16, 512, 0.1, 1.0, std::nullopt};
    const std::vector<double> raw(8, 0.3);
    for (int t = 0; t < 5; ++t)
        for (const auto& p : codec.decode(ctl.step(raw, t == 0 ? std::nullopt : std::optional<double>(1.0)))) {
            CHECK(p.batch_size == 264);
            CHECK(p.probabilities == std::vector<double>{0.55, 0.55});
        }
}

TEST_CASE("controllers are deterministic and noise decays to its floor") {
    auto cfg = micro_config();
    cfg.noise_decay = 0.9;
    DdpgController a(2, cfg, 13), b(2, cfg, 13);
    RngStream rng(9);
    double prev = a.noise_sigma();
    for (int t = 0; t < 60; ++t) {
        std::vector<double> s(4);
        for (double& x : s) x = rng.normal();
        const auto r = t == 0 ? std::nullopt : std::optional<double>(rng.normal());
        CHECK(a.step(s, r) == b.step(s, r));
        CHECK(a.noise_sigma() <= prev);
        prev = a.noise_sigma();
    }
    CHECK(a.noise_sigma() == cfg.noise_floor);
    CHECK(a.actor == b.actor);
    CHECK(a.critic == b.critic);
}

TEST_CASE("controller checkpoints round-trip") {
    auto cfg = micro_config();
    DdpgController ctl(2, cfg, 17);
    RngStream rng(10);
    for (int t = 0; t < 12; ++t) {
        std::vector<double> s(4);
        for (double& x : s) x = rng.normal();
        ctl.step(s, t == 0 ? std::nullopt : std::optional<double>(rng.normal()));
    }
    const auto bytes = ctl.save();
    auto back = DdpgController::load(bytes);
    CHECK(back.save() == bytes);
    CHECK(back.actor == ctl.actor);
    CHECK(back.critic_target == ctl.critic_target);
    CHECK(back.buffer().contents() == ctl.buffer().contents());
    CHECK(back.noise_sigma() == ctl.noise_sigma());
    const std::vector<double> probe{0.1, 0.2, 0.3, 0.4};
    CHECK(back.act(back.encode_state(probe)) == ctl.act(ctl.encode_state(probe)));
    auto cut = bytes;
    cut.resize(cut.size() / 2);
    CHECK_THROWS_AS(DdpgController::load(cut), FormatError);
}

TEST_CASE("train_controller bookkeeping") {
    auto cfg = micro_config();
    cfg.batch = 4;
    BanditEnvironment env(2, 2);
    DdpgController ctl(2, cfg, 19);
    const auto one = train_controller(env, ctl, 1, 1);
    CHECK(one.size() == 1);
    CHECK(ctl.buffer().size() == 1);

    DdpgController ctl2(2, cfg, 19);
    BanditEnvironment env2(2, 2);
    const auto rets = train_controller(env2, ctl2, 4, 3);
    CHECK(rets.size() == 4);
    // Three stored transitions per episode; the first step of an episode stores none.
    CHECK(ctl2.buffer().size() == 12);
    cfg.batch = 0;
    CHECK_THROWS_AS(cfg.validate(), PreconditionError);
}

TEST_CASE("bandit controller converges to the optimum") {
    DdpgConfig cfg;
    cfg.state_dim = 4;
    cfg.hidden = {64, 64};
    cfg.gamma = 0.0;
    cfg.pca_warmup = 2;
    cfg.batch = 32;
    BanditEnvironment env(4, 1, 0.5);
    DdpgController ctl(1, cfg, 1);
    train_controller(env, ctl, 1, 3000);
    const auto& a = env.actions();
    const double mean = std::accumulate(a.end() - 200, a.end(), 0.0) / 200.0;
    CHECK(std::abs(mean - 0.5) <= 0.05);
}
