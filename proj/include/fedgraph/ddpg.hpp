#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "fedgraph/gcn.hpp"
#include "fedgraph/matrix.hpp"
#include "fedgraph/numeric.hpp"
#include "fedgraph/pca.hpp"
#include "fedgraph/rng.hpp"
#include "fedgraph/sampler.hpp"

namespace fedgraph {

enum class OutputActivation : std::uint8_t { linear = 0, tanh = 1 };

/// Dense ReLU network with hand-written backprop. Rows are samples.
class Mlp {
public:
    Mlp() = default;
    // Hidden layers are initialised U(±1/√fan_in); the output layer U(±final_scale).
    Mlp(std::vector<std::size_t> dims, OutputActivation out, RngStream& rng, double final_scale = 3e-3);

    struct Cache {
        std::vector<Matrix> inputs;  // input of each layer
        std::vector<Matrix> pre;     // pre-activation of each layer
        Matrix output;
    };
    struct Grads {
        std::vector<Matrix> w, b;
    };

    Matrix forward(const Matrix& x) const;
    Matrix forward(const Matrix& x, Cache& cache) const;
    // Gradients w.r.t. parameters for dL/doutput = grad_out; optionally dL/dinput.
    Grads backward(const Cache& cache, const Matrix& grad_out, Matrix* grad_input = nullptr) const;

    void apply(const Grads& g, std::vector<AdamState>& opt);
    // θ' ← φ θ + (1 − φ) θ'
    void soft_update_from(const Mlp& online, double phi);

    const std::vector<std::size_t>& dims() const noexcept { return dims_; }
    OutputActivation output_activation() const noexcept { return out_; }
    std::vector<Matrix>& weights() noexcept { return w_; }
    std::vector<Matrix>& biases() noexcept { return b_; }
    const std::vector<Matrix>& weights() const noexcept { return w_; }
    const std::vector<Matrix>& biases() const noexcept { return b_; }
    std::size_t parameter_count() const;
    std::vector<double> parameters() const;
    void set_parameters(std::span<const double> theta);
    bool operator==(const Mlp&) const = default;

private:
    std::vector<std::size_t> dims_;
    OutputActivation out_ = OutputActivation::linear;
    std::vector<Matrix> w_;  // [in x out]
    std::vector<Matrix> b_;  // [1 x out]
};

struct Transition {
    std::vector<double> state;
    std::vector<double> action;
    double reward = 0.0;
    std::vector<double> next_state;

    bool operator==(const Transition&) const = default;
};

/// Fixed-capacity FIFO of transitions.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity = 10000);
    void push(Transition t);
    std::size_t size() const noexcept { return items_.size(); }
    std::size_t capacity() const noexcept { return capacity_; }
    // Oldest first.
    std::vector<Transition> contents() const;
    // `k` distinct transitions drawn uniformly.
    std::vector<const Transition*> sample(std::size_t k, RngStream& rng) const;

private:
    std::size_t capacity_;
    std::size_t head_ = 0;  // index of the oldest item once full
    std::vector<Transition> items_;
};

struct RewardConfig {
    double omega = 128.0;     // Ω
    double target = 0.9016;   // Λ
    double alpha = 0.0;       // α; <= 0 means calibrate from the first round's δ
    double beta = 0.0;        // β
};

/// r = Ω^(λ−Λ) − α(δ − β)
double reward(double lambda, double delta, const RewardConfig& cfg);

struct DdpgConfig {
    std::size_t state_dim = 20;
    std::vector<std::size_t> hidden{512, 256};
    double actor_lr = 1e-4;
    double critic_lr = 1e-3;
    double gamma = 0.9;
    double phi = 0.01;  // soft target update rate
    std::size_t batch = 64;
    std::size_t buffer_capacity = 10000;
    double noise_sigma = 0.3;
    double noise_decay = 0.995;
    double noise_floor = 0.02;
    std::size_t pca_warmup = 30;  // raw states collected before the encoder is fitted
    std::size_t updates_per_step = 1;
    double state_clip = 10.0;     // bound on whitened state coordinates
    bool zero_actor_output = false;
    std::size_t episodes = 60;    // Z
    std::size_t rounds = 30;      // T

    void validate() const;
};

/// Maps the actor's [-1, 1]^(|C|·L) output to per-client policies. Slot 0 of
/// each client's block is κ, slots 1..L−1 are p^(1..L−1).
struct ActionCodec {
    std::size_t num_clients = 1;
    std::size_t num_layers = 3;
    double kappa_min = 16, kappa_max = 512;
    double p_min = 0.1, p_max = 1.0;
    std::optional<std::uint32_t> pinned_kappa;  // when set the κ slot is ignored

    std::size_t dim() const noexcept { return num_clients * num_layers; }
    std::vector<SamplingPolicy> decode(std::span<const double> raw) const;
    std::vector<double> encode(std::span<const SamplingPolicy> policies) const;
};

struct UpdateStats {
    double critic_loss = 0.0;
    double actor_objective = 0.0;  // mean Q(s, μ(s))
};

/// Actor-critic controller with target networks, a replay buffer, a
/// PCA state encoder fitted on the first `pca_warmup` raw states, and
/// decaying Gaussian exploration noise.
class DdpgController {
public:
    DdpgController(std::size_t action_dim, DdpgConfig cfg, std::uint64_t seed);

    // Observe the raw state (and the reward earned by the previous action),
    // store the transition, update the networks, and return the next action in [-1, 1]^a.
    std::vector<double> step(std::span<const double> raw_state, std::optional<double> reward_prev);
    // Forget the pending (state, action) pair; the next step stores no transition.
    void begin_episode();
    // Deterministic policy output for an encoded state.
    std::vector<double> act(std::span<const double> state) const;
    std::vector<double> encode_state(std::span<const double> raw_state) const;

    // One critic + actor + soft-target step if the buffer holds at least K transitions.
    std::optional<UpdateStats> update();
    double critic_update(std::span<const Transition* const> batch);
    double actor_update(std::span<const Transition* const> batch);
    void soft_update();
    // Mean squared TD error and its gradient w.r.t. the critic parameters.
    std::pair<double, Mlp::Grads> critic_gradients(std::span<const Transition* const> batch) const;
    // Mean Q(s, μ(s)) and the gradient of its negation w.r.t. the actor parameters.
    std::pair<double, Mlp::Grads> actor_gradients(std::span<const Transition* const> batch) const;

    double noise_sigma() const;
    bool encoder_ready() const noexcept { return pca_.has_value(); }
    const ReplayBuffer& buffer() const noexcept { return buffer_; }
    const DdpgConfig& config() const noexcept { return cfg_; }
    std::size_t action_dim() const noexcept { return action_dim_; }
    std::size_t steps() const noexcept { return steps_; }

    Mlp actor, critic, actor_target, critic_target;

    // Controller checkpoint (networks, targets, encoder, counters); layout in docs/formats.md.
    std::vector<std::uint8_t> save() const;
    static DdpgController load(std::span<const std::uint8_t> bytes);

private:
    DdpgController() = default;
    void fit_encoder();

    DdpgConfig cfg_;
    std::size_t action_dim_ = 0;
    std::uint64_t seed_ = 0;
    std::vector<AdamState> actor_opt_, critic_opt_;
    ReplayBuffer buffer_;
    std::optional<PcaModel> pca_;
    std::size_t steps_ = 0;    // actions emitted
    std::size_t updates_ = 0;  // gradient updates performed
    RngStream noise_rng_, batch_rng_;

    struct Pending {
        std::vector<double> raw_state;
        std::vector<double> action;
    };
    std::optional<Pending> pending_;
    std::vector<std::vector<double>> warmup_states_;
    struct RawTransition {
        std::vector<double> s;
        std::vector<double> a;
        double r;
        std::vector<double> s2;
    };
    std::vector<RawTransition> warmup_transitions_;
};

/// Environment seen by the controller.
class ControlEnvironment {
public:
    virtual ~ControlEnvironment() = default;
    virtual void reset(std::size_t episode) = 0;
    virtual std::vector<double> observe() = 0;
    // Apply an action for one round; returns the reward.
    virtual double step(std::span<const double> action) = 0;
};

struct EpisodeStats {
    std::size_t episode = 0;
    double ret = 0.0;  // discounted return
};

/// Z episodes of T rounds each. `on_step(episode, t, reward)` is optional.
std::vector<EpisodeStats> train_controller(ControlEnvironment& env, DdpgController& ctl, std::size_t episodes,
                                           std::size_t rounds,
                                           const std::function<void(std::size_t, std::size_t, double)>& on_step = {});

/// Fixed state, r = −(a₀ − target)². Used to sanity-check the learner.
class BanditEnvironment : public ControlEnvironment {
public:
    BanditEnvironment(std::size_t state_dim, std::size_t action_dim, double target = 0.5);
    void reset(std::size_t) override {}
    std::vector<double> observe() override { return state_; }
    double step(std::span<const double> action) override;
    const std::vector<double>& actions() const noexcept { return history_; }

private:
    std::vector<double> state_;
    std::size_t action_dim_;
    double target_;
    std::vector<double> history_;  // a₀ of every step
};

}  // namespace fedgraph
