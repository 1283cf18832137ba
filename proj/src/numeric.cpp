#include "fedgraph/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedgraph/errors.hpp"

namespace fedgraph {

LossAndGrad softmax_cross_entropy(const Matrix& logits, std::span<const std::int32_t> labels) {
    const std::size_t b = logits.rows(), c = logits.cols();
    if (b == 0) throw PreconditionError("softmax_cross_entropy: empty batch");
    if (labels.size() != b) throw ShapeError("softmax_cross_entropy: label count != batch rows");

    LossAndGrad out{0.0, Matrix(b, c)};
    const double inv_b = 1.0 / static_cast<double>(b);
    for (std::size_t i = 0; i < b; ++i) {
        const auto y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= c)
            throw PreconditionError("softmax_cross_entropy: label " + std::to_string(y) + " out of range");
        auto row = logits.row(i);
        const double mx = *std::max_element(row.begin(), row.end());
        double sum = 0.0;
        for (double z : row) sum += std::exp(z - mx);
        const double log_sum = std::log(sum) + mx;
        out.loss += (log_sum - row[static_cast<std::size_t>(y)]) * inv_b;
        auto g = out.grad.row(i);
        for (std::size_t j = 0; j < c; ++j) g[j] = std::exp(row[j] - log_sum) * inv_b;
        g[static_cast<std::size_t>(y)] -= inv_b;
    }
    return out;
}

void adam_step(Matrix& param, const Matrix& grad, AdamState& state) {
    require_same_shape(param, grad, "adam_step");
    const auto& cfg = state.config;
    ++state.t;
    if (cfg.kind == OptimizerKind::sgd) {
        for (std::size_t i = 0; i < param.size(); ++i) param.data()[i] -= cfg.lr * grad.data()[i];
        return;
    }
    if (state.m.empty()) {
        state.m = Matrix(param.rows(), param.cols());
        state.v = Matrix(param.rows(), param.cols());
    }
    require_same_shape(param, state.m, "adam_step moments");
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    auto& p = param.data();
    auto& m = state.m.data();
    auto& v = state.v.data();
    const auto& g = grad.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        p[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
}

std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                                     std::span<const double> x, double h) {
    if (!(h > 0.0)) throw PreconditionError("finite_diff_grad: step must be positive");
    std::vector<double> xs(x.begin(), x.end());
    std::vector<double> g(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double orig = xs[i];
        xs[i] = orig + h;
        const double fp = f(xs);
        xs[i] = orig - h;
        const double fm = f(xs);
        xs[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

Matrix dropout_mask(std::size_t rows, std::size_t cols, double rate, RngStream& rng) {
    Matrix mask(rows, cols, 1.0);
    if (rate <= 0.0) return mask;
    const double keep_scale = 1.0 / (1.0 - rate);
    for (double& x : mask.data()) x = rng.uniform() < rate ? 0.0 : keep_scale;
    return mask;
}

Matrix glorot_uniform(std::size_t fan_in, std::size_t fan_out, RngStream& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix w(fan_in, fan_out);
    for (double& x : w.data()) x = (2.0 * rng.uniform() - 1.0) * limit;
    return w;
}

double relative_error(double a, double b, double floor) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace fedgraph
