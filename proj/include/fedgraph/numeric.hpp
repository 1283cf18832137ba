#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "fedgraph/matrix.hpp"
#include "fedgraph/rng.hpp"

namespace fedgraph {

struct LossAndGrad {
    double loss = 0.0;
    Matrix grad;
};

/// Mean softmax cross-entropy over the rows of `logits`; `grad` is dL/dlogits.
LossAndGrad softmax_cross_entropy(const Matrix& logits, std::span<const std::int32_t> labels);

enum class OptimizerKind { adam, sgd };

struct AdamConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Per-parameter optimizer state. In SGD mode the moments stay empty and
/// the update is exactly param -= lr * grad.
struct AdamState {
    AdamConfig config;
    Matrix m;
    Matrix v;
    std::uint64_t t = 0;

    AdamState() = default;
    explicit AdamState(AdamConfig cfg) : config(cfg) {}
};

void adam_step(Matrix& param, const Matrix& grad, AdamState& state);

/// Central-difference gradient of f at x.
std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                                     std::span<const double> x, double h);

// Inverted dropout mask: entries are 0 or 1/(1-rate).
Matrix dropout_mask(std::size_t rows, std::size_t cols, double rate, RngStream& rng);

// Glorot/Xavier uniform initialisation.
Matrix glorot_uniform(std::size_t fan_in, std::size_t fan_out, RngStream& rng);

double relative_error(double a, double b, double floor = 1e-8);

}  // namespace fedgraph
