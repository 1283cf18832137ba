#include "fedgraph/pca.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedgraph/errors.hpp"

namespace fedgraph {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

void normalize(std::vector<double>& v) {
    const double n = std::sqrt(dot(v, v));
    if (n > 0.0)
        for (double& x : v) x /= n;
}

struct Eigen {
    double value;
    std::vector<double> vector;
};

// Power iteration with Hotelling deflation on a symmetric PSD matrix.
std::vector<Eigen> top_eigenpairs(Matrix m, std::size_t k, const PcaOptions& opts) {
    const std::size_t n = m.rows();
    double trace = 0.0;
    for (std::size_t i = 0; i < n; ++i) trace += m(i, i);
    const double negligible = std::max(trace, 0.0) * 1e-13;

    std::vector<Eigen> out;
    for (std::size_t c = 0; c < k; ++c) {
        // Deterministic, non-symmetric start so no eigenvector is orthogonal to it by construction.
        std::vector<double> v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = 1.0 + 0.1 * std::sin(1.0 + 7.0 * static_cast<double>(i + c));
        for (const auto& e : out) {
            const double p = dot(v, e.vector);
            for (std::size_t i = 0; i < n; ++i) v[i] -= p * e.vector[i];
        }
        normalize(v);

        double lambda = 0.0;
        std::vector<double> w(n);
        for (int it = 0; it < opts.max_iterations; ++it) {
            for (std::size_t i = 0; i < n; ++i) w[i] = dot(m.row(i), v);
            lambda = dot(v, w);
            normalize(w);
            if (dot(w, v) < 0.0)
                for (double& x : w) x = -x;
            double diff = 0.0;
            for (std::size_t i = 0; i < n; ++i) diff = std::max(diff, std::abs(w[i] - v[i]));
            v.swap(w);
            if (diff < opts.tolerance) break;
        }
        // Rayleigh quotient at the final iterate.
        for (std::size_t i = 0; i < n; ++i) w[i] = dot(m.row(i), v);
        lambda = dot(v, w);

        if (!(lambda > negligible) || !std::isfinite(lambda)) {
            out.push_back({0.0, std::vector<double>(n, 0.0)});
            continue;
        }
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) m(i, j) -= lambda * v[i] * v[j];
        out.push_back({lambda, v});
    }
    return out;
}

// Modified Gram-Schmidt over the non-zero rows, leaving zero rows untouched.
void reorthonormalize(Matrix& comps) {
    for (std::size_t r = 0; r < comps.rows(); ++r) {
        auto row = comps.row(r);
        if (dot(row, row) == 0.0) continue;
        for (std::size_t q = 0; q < r; ++q) {
            auto prev = comps.row(q);
            const double p = dot(row, prev);
            for (std::size_t i = 0; i < row.size(); ++i) row[i] -= p * prev[i];
        }
        const double n = std::sqrt(dot(row, row));
        for (double& x : row) x /= n;
    }
}

}  // namespace

double PcaModel::captured_variance() const {
    return std::accumulate(variances.begin(), variances.end(), 0.0);
}

PcaModel pca_fit(const std::vector<std::vector<double>>& samples, std::size_t k, PcaOptions opts) {
    const std::size_t n = samples.size();
    if (n < 2) throw PreconditionError("pca_fit: need at least 2 samples");
    const std::size_t d = samples.front().size();
    for (const auto& s : samples)
        if (s.size() != d) throw ShapeError("pca_fit: samples have differing dimensions");
    if (k == 0 || k > d || k > n) throw PreconditionError("pca_fit: k must be in [1, min(d, n)]");

    PcaModel model;
    model.mean.assign(d, 0.0);
    for (const auto& s : samples)
        for (std::size_t i = 0; i < d; ++i) model.mean[i] += s[i];
    for (double& x : model.mean) x /= static_cast<double>(n);

    Matrix centred(n, d);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t i = 0; i < d; ++i) centred(r, i) = samples[r][i] - model.mean[i];

    const double denom = static_cast<double>(n - 1);
    model.components = Matrix(k, d);
    model.variances.assign(k, 0.0);

    if (d <= n) {
        Matrix cov = matmul_tn(centred, centred);
        cov *= 1.0 / denom;
        auto eig = top_eigenpairs(std::move(cov), k, opts);
        for (std::size_t c = 0; c < k; ++c) {
            model.variances[c] = eig[c].value;
            std::copy(eig[c].vector.begin(), eig[c].vector.end(), model.components.row(c).begin());
        }
    } else {
        Matrix gram = matmul_nt(centred, centred);
        auto eig = top_eigenpairs(std::move(gram), k, opts);
        for (std::size_t c = 0; c < k; ++c) {
            if (eig[c].value == 0.0) continue;
            model.variances[c] = eig[c].value / denom;
            auto row = model.components.row(c);
            const double scale = 1.0 / std::sqrt(eig[c].value);
            for (std::size_t r = 0; r < n; ++r) {
                const double u = eig[c].vector[r] * scale;
                auto x = centred.row(r);
                for (std::size_t i = 0; i < d; ++i) row[i] += u * x[i];
            }
        }
    }
    reorthonormalize(model.components);
    return model;
}

std::vector<double> pca_project(const PcaModel& model, std::span<const double> x) {
    if (x.size() != model.dim()) throw ShapeError("pca_project: dimension mismatch");
    std::vector<double> centred(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) centred[i] = x[i] - model.mean[i];
    std::vector<double> y(model.k());
    for (std::size_t c = 0; c < model.k(); ++c) y[c] = dot(model.components.row(c), centred);
    return y;
}

std::vector<double> pca_reconstruct(const PcaModel& model, std::span<const double> y) {
    if (y.size() != model.k()) throw ShapeError("pca_reconstruct: dimension mismatch");
    std::vector<double> x = model.mean;
    for (std::size_t c = 0; c < model.k(); ++c) {
        auto row = model.components.row(c);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += y[c] * row[i];
    }
    return x;
}

}  // namespace fedgraph
