#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fedgraph/matrix.hpp"

namespace fedgraph {

/// Principal components of a sample set. Rows of `components` with zero
/// variance are zero vectors (rank-deficient or degenerate data); the
/// remaining rows are orthonormal.
struct PcaModel {
    std::vector<double> mean;
    Matrix components;              // [k x d]
    std::vector<double> variances;  // per component, sample-covariance eigenvalue

    std::size_t k() const noexcept { return components.rows(); }
    std::size_t dim() const noexcept { return mean.size(); }
    double captured_variance() const;
};

struct PcaOptions {
    double tolerance = 1e-10;
    int max_iterations = 1000;
};

/// Top-k principal directions by power iteration with deflation. Works on
/// the d x d covariance when d <= n, otherwise on the n x n Gram matrix of
/// the centred samples (same spectrum, much smaller).
PcaModel pca_fit(const std::vector<std::vector<double>>& samples, std::size_t k, PcaOptions opts = {});

std::vector<double> pca_project(const PcaModel& model, std::span<const double> x);
std::vector<double> pca_reconstruct(const PcaModel& model, std::span<const double> y);

}  // namespace fedgraph
