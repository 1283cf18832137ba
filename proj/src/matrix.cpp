#include "fedgraph/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedgraph/errors.hpp"

namespace fedgraph {

namespace {

std::string shape_str(const Matrix& m) {
    return "[" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + "]";
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> init) {
    rows_ = init.size();
    cols_ = rows_ == 0 ? 0 : init.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : init) {
        if (r.size() != cols_) throw ShapeError("Matrix: ragged initializer");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::from_data(std::size_t rows, std::size_t cols, std::vector<double> data) {
    if (data.size() != rows * cols) throw ShapeError("Matrix::from_data: data length != rows*cols");
    Matrix m;
    m.rows_ = rows;
    m.cols_ = cols;
    m.data_ = std::move(data);
    return m;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Matrix::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

Matrix Matrix::transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
}

Matrix& Matrix::operator+=(const Matrix& o) {
    require_same_shape(*this, o, "operator+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
}

Matrix& Matrix::operator-=(const Matrix& o) {
    require_same_shape(*this, o, "operator-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
}

Matrix& Matrix::operator*=(double s) {
    for (double& x : data_) x *= s;
    return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(Matrix a, double s) { return a *= s; }

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul: " + shape_str(a) + " x " + shape_str(b));
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    Matrix out(n, m);
    const double* bp = b.data().data();
    for (std::size_t i = 0; i < n; ++i) {
        double* orow = out.row(i).data();
        const double* arow = a.row(i).data();
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = bp + p * m;
            for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows())
        throw ShapeError("matmul_tn: " + shape_str(a) + "^T x " + shape_str(b));
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    Matrix out(k, m);
    double* op = out.data().data();
    for (std::size_t r = 0; r < n; ++r) {
        const double* arow = a.row(r).data();
        const double* brow = b.row(r).data();
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            double* orow = op + p * m;
            for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols())
        throw ShapeError("matmul_nt: " + shape_str(a) + " x " + shape_str(b) + "^T");
    // Same summation order as the dot-product form, but the inner loop runs
    // over contiguous memory and vectorises.
    return matmul(a, b.transposed());
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "hadamard");
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= b.data()[i];
    return out;
}

Matrix relu(const Matrix& z) {
    Matrix out = z;
    for (double& x : out.data()) x = x > 0.0 ? x : 0.0;
    return out;
}

Matrix relu_backward(const Matrix& grad, const Matrix& z) {
    require_same_shape(grad, z, "relu_backward");
    Matrix out = grad;
    for (std::size_t i = 0; i < out.size(); ++i)
        if (!(z.data()[i] > 0.0)) out.data()[i] = 0.0;
    return out;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

double frobenius_norm(const Matrix& a) {
    double s = 0.0;
    for (double x : a.data()) s += x * x;
    return std::sqrt(s);
}

SparseMatrix SparseMatrix::from_dense(const Matrix& m) {
    SparseMatrix s(m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r) s.push_row(m.row(r));
    return s;
}

void SparseMatrix::push_row(std::span<const double> dense) {
    if (dense.size() != cols) throw ShapeError("SparseMatrix: row width mismatch");
    for (std::size_t j = 0; j < dense.size(); ++j) {
        if (dense[j] == 0.0) continue;
        indices.push_back(static_cast<std::uint32_t>(j));
        values.push_back(dense[j]);
    }
    offsets.push_back(static_cast<std::uint32_t>(indices.size()));
    ++rows;
}

void SparseMatrix::push_empty_row() {
    offsets.push_back(static_cast<std::uint32_t>(indices.size()));
    ++rows;
}

Matrix SparseMatrix::to_dense() const {
    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (auto k = offsets[r]; k < offsets[r + 1]; ++k) m(r, indices[k]) = values[k];
    return m;
}

Matrix matmul(const SparseMatrix& a, const Matrix& b) {
    if (a.cols != b.rows()) throw ShapeError("matmul: sparse inner dimensions differ");
    Matrix out(a.rows, b.cols());
    const std::size_t n = b.cols();
    for (std::size_t r = 0; r < a.rows; ++r) {
        double* o = out.row(r).data();
        for (auto k = a.offsets[r]; k < a.offsets[r + 1]; ++k) {
            const double v = a.values[k];
            const double* br = b.row(a.indices[k]).data();
            for (std::size_t j = 0; j < n; ++j) o[j] += v * br[j];
        }
    }
    return out;
}

Matrix matmul_tn(const SparseMatrix& a, const Matrix& b) {
    if (a.rows != b.rows()) throw ShapeError("matmul_tn: sparse row counts differ");
    Matrix out(a.cols, b.cols());
    const std::size_t n = b.cols();
    for (std::size_t r = 0; r < a.rows; ++r) {
        const double* br = b.row(r).data();
        for (auto k = a.offsets[r]; k < a.offsets[r + 1]; ++k) {
            const double v = a.values[k];
            double* o = out.row(a.indices[k]).data();
            for (std::size_t j = 0; j < n; ++j) o[j] += v * br[j];
        }
    }
    return out;
}

}  // namespace fedgraph
