#include "fedgraph/ddpg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedgraph/binary_io.hpp"
#include "fedgraph/errors.hpp"

namespace fedgraph {

Mlp::Mlp(std::vector<std::size_t> dims, OutputActivation out, RngStream& rng, double final_scale)
    : dims_(std::move(dims)), out_(out) {
    if (dims_.size() < 2) throw PreconditionError("Mlp: need at least input and output dims");
    for (auto d : dims_)
        if (d == 0) throw PreconditionError("Mlp: zero-width layer");
    for (std::size_t i = 0; i + 1 < dims_.size(); ++i) {
        const bool last = i + 2 == dims_.size();
        const double bound = last ? final_scale : 1.0 / std::sqrt(static_cast<double>(dims_[i]));
        Matrix w(dims_[i], dims_[i + 1]);
        Matrix b(1, dims_[i + 1]);
        for (double& x : w.data()) x = (2.0 * rng.uniform() - 1.0) * bound;
        for (double& x : b.data()) x = (2.0 * rng.uniform() - 1.0) * bound;
        w_.push_back(std::move(w));
        b_.push_back(std::move(b));
    }
}

Matrix Mlp::forward(const Matrix& x) const {
    Cache c;
    return forward(x, c);
}

Matrix Mlp::forward(const Matrix& x, Cache& cache) const {
    if (x.cols() != dims_.front())
        throw ShapeError("Mlp: input width " + std::to_string(x.cols()) + ", expected " + std::to_string(dims_.front()));
    cache.inputs.clear();
    cache.pre.clear();
    Matrix h = x;
    for (std::size_t i = 0; i < w_.size(); ++i) {
        Matrix z = matmul(h, w_[i]);
        for (std::size_t r = 0; r < z.rows(); ++r) {
            auto zr = z.row(r);
            for (std::size_t j = 0; j < zr.size(); ++j) zr[j] += b_[i](0, j);
        }
        cache.inputs.push_back(std::move(h));
        const bool last = i + 1 == w_.size();
        if (!last) {
            h = relu(z);
        } else if (out_ == OutputActivation::tanh) {
            h = z;
            for (double& v : h.data()) v = std::tanh(v);
        } else {
            h = z;
        }
        cache.pre.push_back(std::move(z));
    }
    cache.output = h;
    return h;
}

Mlp::Grads Mlp::backward(const Cache& cache, const Matrix& grad_out, Matrix* grad_input) const {
    require_same_shape(grad_out, cache.output, "Mlp::backward");
    Grads g;
    g.w.resize(w_.size());
    g.b.resize(w_.size());
    Matrix d = grad_out;
    if (out_ == OutputActivation::tanh) {
        auto& dd = d.data();
        const auto& y = cache.output.data();
        for (std::size_t j = 0; j < dd.size(); ++j) dd[j] *= 1.0 - y[j] * y[j];
    }
    for (std::size_t i = w_.size(); i-- > 0;) {
        g.w[i] = matmul_tn(cache.inputs[i], d);
        Matrix db(1, d.cols());
        for (std::size_t r = 0; r < d.rows(); ++r)
            for (std::size_t j = 0; j < d.cols(); ++j) db(0, j) += d(r, j);
        g.b[i] = std::move(db);
        if (i == 0 && grad_input == nullptr) break;
        Matrix dh = matmul_nt(d, w_[i]);
        if (i == 0) {
            *grad_input = std::move(dh);
            break;
        }
        d = relu_backward(dh, cache.pre[i - 1]);
    }
    return g;
}

void Mlp::apply(const Grads& g, std::vector<AdamState>& opt) {
    if (opt.size() != 2 * w_.size()) throw PreconditionError("Mlp::apply: optimizer state size mismatch");
    for (std::size_t i = 0; i < w_.size(); ++i) {
        adam_step(w_[i], g.w[i], opt[i]);
        adam_step(b_[i], g.b[i], opt[w_.size() + i]);
    }
}

void Mlp::soft_update_from(const Mlp& online, double phi) {
    if (online.dims_ != dims_) throw ShapeError("soft_update: network shapes differ");
    if (!(phi >= 0.0 && phi <= 1.0)) throw PreconditionError("soft_update: φ must lie in [0, 1]");
    auto blend = [phi](Matrix& t, const Matrix& o) {
        auto& td = t.data();
        const auto& od = o.data();
        for (std::size_t j = 0; j < td.size(); ++j) td[j] = phi * od[j] + (1.0 - phi) * td[j];
    };
    for (std::size_t i = 0; i < w_.size(); ++i) {
        blend(w_[i], online.w_[i]);
        blend(b_[i], online.b_[i]);
    }
}

std::size_t Mlp::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < w_.size(); ++i) n += w_[i].size() + b_[i].size();
    return n;
}

std::vector<double> Mlp::parameters() const {
    std::vector<double> out;
    out.reserve(parameter_count());
    for (std::size_t i = 0; i < w_.size(); ++i) {
        out.insert(out.end(), w_[i].data().begin(), w_[i].data().end());
        out.insert(out.end(), b_[i].data().begin(), b_[i].data().end());
    }
    return out;
}

void Mlp::set_parameters(std::span<const double> theta) {
    if (theta.size() != parameter_count()) throw ShapeError("Mlp::set_parameters: wrong parameter count");
    std::size_t k = 0;
    for (std::size_t i = 0; i < w_.size(); ++i) {
        for (double& x : w_[i].data()) x = theta[k++];
        for (double& x : b_[i].data()) x = theta[k++];
    }
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw PreconditionError("ReplayBuffer: capacity must be positive");
}

void ReplayBuffer::push(Transition t) {
    if (items_.size() < capacity_) {
        items_.push_back(std::move(t));
        return;
    }
    items_[head_] = std::move(t);
    head_ = (head_ + 1) % capacity_;
}

std::vector<Transition> ReplayBuffer::contents() const {
    std::vector<Transition> out;
    out.reserve(items_.size());
    for (std::size_t i = 0; i < items_.size(); ++i) out.push_back(items_[(head_ + i) % items_.size()]);
    return out;
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t k, RngStream& rng) const {
    if (k > items_.size()) throw PreconditionError("ReplayBuffer: not enough transitions to sample");
    std::vector<const Transition*> out;
    for (auto i : rng.sample_without_replacement(static_cast<std::uint32_t>(items_.size()), static_cast<std::uint32_t>(k)))
        out.push_back(&items_[i]);
    return out;
}

double reward(double lambda, double delta, const RewardConfig& cfg) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw PreconditionError("reward: λ must lie in [0, 1]");
    return std::pow(cfg.omega, lambda - cfg.target) - cfg.alpha * (delta - cfg.beta);
}

void DdpgConfig::validate() const {
    if (state_dim == 0) throw PreconditionError("DdpgConfig: state_dim must be positive");
    if (!(phi > 0.0 && phi <= 1.0)) throw PreconditionError("DdpgConfig: φ must lie in (0, 1]");
    if (batch < 1) throw PreconditionError("DdpgConfig: K must be >= 1");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw PreconditionError("DdpgConfig: γ must lie in [0, 1)");
    if (!(actor_lr > 0.0 && critic_lr > 0.0)) throw PreconditionError("DdpgConfig: learning rates must be positive");
    if (pca_warmup < 2) throw PreconditionError("DdpgConfig: pca_warmup must be >= 2");
    if (noise_sigma < 0 || noise_floor < 0 || !(noise_decay > 0.0 && noise_decay <= 1.0))
        throw PreconditionError("DdpgConfig: bad noise schedule");
    if (buffer_capacity < batch) throw PreconditionError("DdpgConfig: buffer smaller than K");
}

std::vector<SamplingPolicy> ActionCodec::decode(std::span<const double> raw) const {
    if (raw.size() != dim())
        throw ShapeError("ActionCodec: action has " + std::to_string(raw.size()) + " values, expected " +
                         std::to_string(dim()));
    auto map = [](double x, double lo, double hi) {
        const double c = std::isnan(x) ? 0.0 : std::clamp(x, -1.0, 1.0);
        return lo + (c + 1.0) * 0.5 * (hi - lo);
    };
    std::vector<SamplingPolicy> out(num_clients);
    for (std::size_t c = 0; c < num_clients; ++c) {
        const double* a = raw.data() + c * num_layers;
        if (pinned_kappa) {
            out[c].batch_size = *pinned_kappa;
        } else {
            const double k = std::round(map(a[0], kappa_min, kappa_max));
            out[c].batch_size = static_cast<std::uint32_t>(std::clamp(k, kappa_min, kappa_max));
        }
        for (std::size_t l = 1; l < num_layers; ++l)
            out[c].probabilities.push_back(std::clamp(map(a[l], p_min, p_max), p_min, p_max));
    }
    return out;
}

std::vector<double> ActionCodec::encode(std::span<const SamplingPolicy> policies) const {
    if (policies.size() != num_clients) throw ShapeError("ActionCodec: one policy per client required");
    auto unmap = [](double v, double lo, double hi) { return hi > lo ? 2.0 * (v - lo) / (hi - lo) - 1.0 : 0.0; };
    std::vector<double> raw;
    raw.reserve(dim());
    for (const auto& p : policies) {
        if (p.probabilities.size() + 1 != num_layers) throw ShapeError("ActionCodec: policy depth mismatch");
        raw.push_back(std::clamp(unmap(p.batch_size, kappa_min, kappa_max), -1.0, 1.0));
        for (double q : p.probabilities) raw.push_back(std::clamp(unmap(q, p_min, p_max), -1.0, 1.0));
    }
    return raw;
}

namespace {

Matrix stack(std::span<const Transition* const> batch, bool next, std::size_t width) {
    Matrix m(batch.size(), width);
    for (std::size_t r = 0; r < batch.size(); ++r) {
        const auto& v = next ? batch[r]->next_state : batch[r]->state;
        if (v.size() != width) throw ShapeError("ddpg: transition state width mismatch");
        std::copy(v.begin(), v.end(), m.row(r).begin());
    }
    return m;
}

Matrix concat_cols(const Matrix& a, const Matrix& b) {
    Matrix m(a.rows(), a.cols() + b.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        auto dst = m.row(r);
        std::copy(a.row(r).begin(), a.row(r).end(), dst.begin());
        std::copy(b.row(r).begin(), b.row(r).end(), dst.begin() + a.cols());
    }
    return m;
}

std::vector<AdamState> make_opt(const Mlp& net, double lr) {
    return std::vector<AdamState>(2 * net.weights().size(), AdamState(AdamConfig{OptimizerKind::adam, lr}));
}

}  // namespace

DdpgController::DdpgController(std::size_t action_dim, DdpgConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)), action_dim_(action_dim), seed_(seed), buffer_(cfg_.buffer_capacity),
      noise_rng_(RngStream::derive(seed, Stream::ddpg_noise)), batch_rng_(RngStream::derive(seed, Stream::ddpg_batch)) {
    cfg_.validate();
    if (action_dim == 0) throw PreconditionError("DdpgController: action_dim must be positive");
    auto init = RngStream::derive(seed, Stream::ddpg_init);
    std::vector<std::size_t> adims{cfg_.state_dim};
    adims.insert(adims.end(), cfg_.hidden.begin(), cfg_.hidden.end());
    adims.push_back(action_dim);
    std::vector<std::size_t> cdims{cfg_.state_dim + action_dim};
    cdims.insert(cdims.end(), cfg_.hidden.begin(), cfg_.hidden.end());
    cdims.push_back(1);
    actor = Mlp(adims, OutputActivation::tanh, init, cfg_.zero_actor_output ? 0.0 : 3e-3);
    critic = Mlp(cdims, OutputActivation::linear, init);
    actor_target = actor;
    critic_target = critic;
    actor_opt_ = make_opt(actor, cfg_.actor_lr);
    critic_opt_ = make_opt(critic, cfg_.critic_lr);
}

double DdpgController::noise_sigma() const {
    return std::max(cfg_.noise_floor, cfg_.noise_sigma * std::pow(cfg_.noise_decay, static_cast<double>(steps_)));
}

void DdpgController::begin_episode() { pending_.reset(); }

std::vector<double> DdpgController::encode_state(std::span<const double> raw_state) const {
    std::vector<double> s(cfg_.state_dim, 0.0);
    if (!pca_) return s;
    if (raw_state.size() != pca_->dim())
        throw StateError("state encoder fitted on dimension " + std::to_string(pca_->dim()) + ", got " +
                         std::to_string(raw_state.size()));
    const auto y = pca_project(*pca_, raw_state);
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double var = pca_->variances[i];
        const double v = var > 0.0 ? y[i] / std::sqrt(var) : 0.0;
        s[i] = std::clamp(v, -cfg_.state_clip, cfg_.state_clip);
    }
    return s;
}

void DdpgController::fit_encoder() {
    const std::size_t d = warmup_states_.front().size();
    const std::size_t k = std::min({cfg_.state_dim, d, warmup_states_.size()});
    pca_ = pca_fit(warmup_states_, k);
    for (auto& t : warmup_transitions_)
        buffer_.push({encode_state(t.s), std::move(t.a), t.r, encode_state(t.s2)});
    warmup_transitions_.clear();
    warmup_states_.clear();
    warmup_states_.shrink_to_fit();
}

std::vector<double> DdpgController::act(std::span<const double> state) const {
    Matrix x(1, state.size());
    std::copy(state.begin(), state.end(), x.row(0).begin());
    const auto y = actor.forward(x);
    return {y.data().begin(), y.data().end()};
}

std::vector<double> DdpgController::step(std::span<const double> raw_state, std::optional<double> reward_prev) {
    std::vector<double> raw(raw_state.begin(), raw_state.end());
    if (pending_ && reward_prev) {
        if (pca_) {
            buffer_.push({encode_state(pending_->raw_state), pending_->action, *reward_prev, encode_state(raw)});
        } else {
            warmup_transitions_.push_back({pending_->raw_state, pending_->action, *reward_prev, raw});
        }
    }
    if (!pca_) {
        warmup_states_.push_back(raw);
        if (warmup_states_.size() >= cfg_.pca_warmup) fit_encoder();
    }
    for (std::size_t u = 0; u < cfg_.updates_per_step; ++u)
        if (!update()) break;

    const auto s = encode_state(raw);
    auto a = act(s);
    const double sigma = noise_sigma();
    for (double& v : a) v = std::clamp(v + (sigma > 0.0 ? sigma * noise_rng_.normal() : 0.0), -1.0, 1.0);
    pending_ = Pending{std::move(raw), a};
    ++steps_;
    return a;
}

std::pair<double, Mlp::Grads> DdpgController::critic_gradients(std::span<const Transition* const> batch) const {
    if (batch.empty()) throw PreconditionError("critic_gradients: empty batch");
    const std::size_t B = batch.size();
    const Matrix s = stack(batch, false, cfg_.state_dim);
    const Matrix s2 = stack(batch, true, cfg_.state_dim);
    Matrix a(B, action_dim_);
    for (std::size_t r = 0; r < B; ++r) {
        if (batch[r]->action.size() != action_dim_) throw ShapeError("critic_gradients: action width mismatch");
        std::copy(batch[r]->action.begin(), batch[r]->action.end(), a.row(r).begin());
    }
    const Matrix q_next = critic_target.forward(concat_cols(s2, actor_target.forward(s2)));
    Mlp::Cache cache;
    const Matrix q = critic.forward(concat_cols(s, a), cache);
    Matrix grad(B, 1);
    double loss = 0.0;
    for (std::size_t r = 0; r < B; ++r) {
        const double y = batch[r]->reward + cfg_.gamma * q_next(r, 0);
        const double e = q(r, 0) - y;
        loss += e * e;
        grad(r, 0) = 2.0 * e / static_cast<double>(B);
    }
    return {loss / static_cast<double>(B), critic.backward(cache, grad)};
}

std::pair<double, Mlp::Grads> DdpgController::actor_gradients(std::span<const Transition* const> batch) const {
    if (batch.empty()) throw PreconditionError("actor_gradients: empty batch");
    const std::size_t B = batch.size();
    const Matrix s = stack(batch, false, cfg_.state_dim);
    Mlp::Cache acache, ccache;
    const Matrix a = actor.forward(s, acache);
    const Matrix q = critic.forward(concat_cols(s, a), ccache);
    double objective = 0.0;
    for (std::size_t r = 0; r < B; ++r) objective += q(r, 0);
    Matrix gq(B, 1);
    gq.fill(-1.0 / static_cast<double>(B));
    Matrix gin;
    critic.backward(ccache, gq, &gin);
    Matrix ga(B, action_dim_);
    for (std::size_t r = 0; r < B; ++r)
        for (std::size_t j = 0; j < action_dim_; ++j) ga(r, j) = gin(r, cfg_.state_dim + j);
    return {objective / static_cast<double>(B), actor.backward(acache, ga)};
}

double DdpgController::critic_update(std::span<const Transition* const> batch) {
    auto [loss, g] = critic_gradients(batch);
    critic.apply(g, critic_opt_);
    return loss;
}

double DdpgController::actor_update(std::span<const Transition* const> batch) {
    auto [objective, g] = actor_gradients(batch);
    actor.apply(g, actor_opt_);
    return objective;
}

void DdpgController::soft_update() {
    actor_target.soft_update_from(actor, cfg_.phi);
    critic_target.soft_update_from(critic, cfg_.phi);
}

std::optional<UpdateStats> DdpgController::update() {
    if (buffer_.size() < cfg_.batch) return std::nullopt;
    const auto batch = buffer_.sample(cfg_.batch, batch_rng_);
    UpdateStats st;
    st.critic_loss = critic_update(batch);
    st.actor_objective = actor_update(batch);
    soft_update();
    ++updates_;
    return st;
}

namespace {

constexpr std::string_view kControllerMagic = "FGDC";
constexpr std::uint32_t kControllerVersion = 1;

void put_matrix(ByteWriter& out, const Matrix& m) {
    out.put<std::uint32_t>(static_cast<std::uint32_t>(m.rows()));
    out.put<std::uint32_t>(static_cast<std::uint32_t>(m.cols()));
    out.put_span<double>(m.data());
}

Matrix get_matrix(ByteReader& in) {
    const auto r = in.get<std::uint32_t>();
    const auto c = in.get<std::uint32_t>();
    return Matrix::from_data(r, c, in.get_vector<double>(std::size_t{r} * c));
}

void put_net(ByteWriter& out, const Mlp& net) {
    out.put<std::uint8_t>(static_cast<std::uint8_t>(net.output_activation()));
    out.put<std::uint32_t>(static_cast<std::uint32_t>(net.dims().size()));
    for (auto d : net.dims()) out.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    out.put_span<double>(net.parameters());
}

Mlp get_net(ByteReader& in) {
    const auto act = in.get<std::uint8_t>();
    if (act > 1) throw FormatError("controller checkpoint: unknown output activation");
    const auto n = in.get<std::uint32_t>();
    if (n < 2) throw FormatError("controller checkpoint: network needs at least 2 dims");
    const auto dims32 = in.get_vector<std::uint32_t>(n);
    std::vector<std::size_t> dims(dims32.begin(), dims32.end());
    RngStream dummy(0);
    Mlp net(dims, static_cast<OutputActivation>(act), dummy, 0.0);
    net.set_parameters(in.get_vector<double>(net.parameter_count()));
    return net;
}

void put_doubles(ByteWriter& out, const std::vector<double>& v) {
    out.put<std::uint32_t>(static_cast<std::uint32_t>(v.size()));
    out.put_span<double>(v);
}

std::vector<double> get_doubles(ByteReader& in) { return in.get_vector<double>(in.get<std::uint32_t>()); }

}  // namespace

std::vector<std::uint8_t> DdpgController::save() const {
    ByteWriter out;
    out.put_magic(kControllerMagic);
    out.put<std::uint32_t>(kControllerVersion);
    out.put<std::uint64_t>(seed_);
    out.put<std::uint32_t>(static_cast<std::uint32_t>(action_dim_));
    // config
    out.put<std::uint32_t>(static_cast<std::uint32_t>(cfg_.state_dim));
    out.put<std::uint32_t>(static_cast<std::uint32_t>(cfg_.hidden.size()));
    for (auto h : cfg_.hidden) out.put<std::uint32_t>(static_cast<std::uint32_t>(h));
    for (double v : {cfg_.actor_lr, cfg_.critic_lr, cfg_.gamma, cfg_.phi, cfg_.noise_sigma, cfg_.noise_decay,
                     cfg_.noise_floor, cfg_.state_clip})
        out.put<double>(v);
    for (std::size_t v : {cfg_.batch, cfg_.buffer_capacity, cfg_.pca_warmup, cfg_.updates_per_step, cfg_.episodes,
                          cfg_.rounds})
        out.put<std::uint64_t>(v);
    out.put<std::uint8_t>(cfg_.zero_actor_output ? 1 : 0);
    // progress and current exploration scale
    out.put<std::uint64_t>(steps_);
    out.put<std::uint64_t>(updates_);
    out.put<double>(noise_sigma());
    for (const Mlp* net : {&actor, &critic, &actor_target, &critic_target}) put_net(out, *net);
    // encoder
    out.put<std::uint8_t>(pca_ ? 1 : 0);
    if (pca_) {
        put_doubles(out, pca_->mean);
        put_matrix(out, pca_->components);
        put_doubles(out, pca_->variances);
    }
    // replay buffer, oldest first
    const auto items = buffer_.contents();
    out.put<std::uint64_t>(items.size());
    for (const auto& t : items) {
        put_doubles(out, t.state);
        put_doubles(out, t.action);
        out.put<double>(t.reward);
        put_doubles(out, t.next_state);
    }
    return out.take();
}

DdpgController DdpgController::load(std::span<const std::uint8_t> bytes) {
    ByteReader in(bytes);
    in.expect_magic(kControllerMagic);
    const auto version = in.get<std::uint32_t>();
    if (version != kControllerVersion)
        throw FormatError("unsupported controller checkpoint version " + std::to_string(version));
    DdpgController c;
    c.seed_ = in.get<std::uint64_t>();
    c.action_dim_ = in.get<std::uint32_t>();
    auto& cfg = c.cfg_;
    cfg.state_dim = in.get<std::uint32_t>();
    const auto nh = in.get<std::uint32_t>();
    auto hidden = in.get_vector<std::uint32_t>(nh);
    cfg.hidden.assign(hidden.begin(), hidden.end());
    for (double* v : {&cfg.actor_lr, &cfg.critic_lr, &cfg.gamma, &cfg.phi, &cfg.noise_sigma, &cfg.noise_decay,
                      &cfg.noise_floor, &cfg.state_clip})
        *v = in.get<double>();
    for (std::size_t* v : {&cfg.batch, &cfg.buffer_capacity, &cfg.pca_warmup, &cfg.updates_per_step, &cfg.episodes,
                           &cfg.rounds})
        *v = static_cast<std::size_t>(in.get<std::uint64_t>());
    cfg.zero_actor_output = in.get<std::uint8_t>() != 0;
    try {
        cfg.validate();
    } catch (const PreconditionError& e) {
        throw FormatError(std::string("controller checkpoint: ") + e.what());
    }
    c.steps_ = static_cast<std::size_t>(in.get<std::uint64_t>());
    c.updates_ = static_cast<std::size_t>(in.get<std::uint64_t>());
    in.get<double>();  // σ_t, derivable from steps; kept for readers of the file
    c.actor = get_net(in);
    c.critic = get_net(in);
    c.actor_target = get_net(in);
    c.critic_target = get_net(in);
    if (c.actor.dims().front() != cfg.state_dim || c.actor.dims().back() != c.action_dim_ ||
        c.critic.dims().front() != cfg.state_dim + c.action_dim_ || c.actor_target.dims() != c.actor.dims() ||
        c.critic_target.dims() != c.critic.dims())
        throw FormatError("controller checkpoint: network shapes disagree with the config");
    if (in.get<std::uint8_t>() != 0) {
        PcaModel m;
        m.mean = get_doubles(in);
        m.components = get_matrix(in);
        m.variances = get_doubles(in);
        if (m.components.cols() != m.mean.size() || m.variances.size() != m.components.rows())
            throw FormatError("controller checkpoint: inconsistent encoder");
        c.pca_ = std::move(m);
    }
    c.buffer_ = ReplayBuffer(cfg.buffer_capacity);
    const auto count = in.get<std::uint64_t>();
    if (count > cfg.buffer_capacity) throw FormatError("controller checkpoint: buffer larger than its capacity");
    for (std::uint64_t i = 0; i < count; ++i) {
        Transition t;
        t.state = get_doubles(in);
        t.action = get_doubles(in);
        t.reward = in.get<double>();
        t.next_state = get_doubles(in);
        c.buffer_.push(std::move(t));
    }
    if (!in.at_end()) throw FormatError("trailing bytes after controller checkpoint");
    c.actor_opt_ = make_opt(c.actor, cfg.actor_lr);
    c.critic_opt_ = make_opt(c.critic, cfg.critic_lr);
    c.noise_rng_ = RngStream::derive(c.seed_, Stream::ddpg_noise, c.steps_);
    c.batch_rng_ = RngStream::derive(c.seed_, Stream::ddpg_batch, c.updates_);
    return c;
}

std::vector<EpisodeStats> train_controller(ControlEnvironment& env, DdpgController& ctl, std::size_t episodes,
                                           std::size_t rounds,
                                           const std::function<void(std::size_t, std::size_t, double)>& on_step) {
    const double gamma = ctl.config().gamma;
    std::vector<EpisodeStats> out;
    for (std::size_t ep = 0; ep < episodes; ++ep) {
        env.reset(ep);
        ctl.begin_episode();
        auto action = ctl.step(env.observe(), std::nullopt);
        double ret = 0.0, discount = 1.0;
        for (std::size_t t = 0; t < rounds; ++t) {
            const double r = env.step(action);
            ret += discount * r;
            discount *= gamma;
            if (on_step) on_step(ep, t, r);
            action = ctl.step(env.observe(), r);
        }
        out.push_back({ep, ret});
    }
    return out;
}

BanditEnvironment::BanditEnvironment(std::size_t state_dim, std::size_t action_dim, double target)
    : state_(state_dim, 0.5), action_dim_(action_dim), target_(target) {
    if (action_dim == 0) throw PreconditionError("BanditEnvironment: action_dim must be positive");
}

double BanditEnvironment::step(std::span<const double> action) {
    if (action.size() != action_dim_) throw ShapeError("BanditEnvironment: action width mismatch");
    history_.push_back(action[0]);
    const double e = action[0] - target_;
    return -e * e;
}

}  // namespace fedgraph
