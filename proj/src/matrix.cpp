#include "florg/matrix.hpp"

#include <cmath>
#include <string>

#include "florg/errors.hpp"

namespace florg {

namespace {

std::string shape_str(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (!a.same_shape(b)) {
        throw ContractViolation(std::string(op) + ": shape mismatch " + shape_str(a) +
                                " vs " + shape_str(b));
    }
}

} // namespace

Matrix::Matrix(int rows, int cols) : rows_(rows), cols_(cols) {
    if (rows <= 0 || cols <= 0) {
        throw ContractViolation("Matrix: non-positive dimensions " + std::to_string(rows) +
                                "x" + std::to_string(cols));
    }
    data_.assign(static_cast<std::size_t>(rows) * cols, 0.0);
}

Matrix::Matrix(int rows, int cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
    if (rows <= 0 || cols <= 0) {
        throw ContractViolation("Matrix: non-positive dimensions " + std::to_string(rows) +
                                "x" + std::to_string(cols));
    }
    if (data_.size() != static_cast<std::size_t>(rows) * cols) {
        throw ContractViolation("Matrix: " + std::to_string(data_.size()) +
                                " values for shape " + std::to_string(rows) + "x" +
                                std::to_string(cols));
    }
}

Matrix Matrix::identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ContractViolation("matmul: incompatible shapes " + shape_str(a) + " * " +
                                shape_str(b));
    }
    require_finite(a, "matmul lhs");
    require_finite(b, "matmul rhs");
    Matrix c(a.rows(), b.cols());
    const int n = a.rows(), k = a.cols(), m = b.cols();
    // i-k-j loop order: streams through b and c rows, accumulation order fixed.
    for (int i = 0; i < n; ++i) {
        for (int kk = 0; kk < k; ++kk) {
            const double aik = a(i, kk);
            if (aik == 0.0) continue;
            const double* brow = b.data() + static_cast<std::size_t>(kk) * m;
            double* crow = c.data() + static_cast<std::size_t>(i) * m;
            for (int j = 0; j < m; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

Matrix add(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "add");
    Matrix c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] += b.data()[i];
    return c;
}

Matrix sub(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "sub");
    Matrix c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] -= b.data()[i];
    return c;
}

Matrix scale(const Matrix& a, double s) {
    Matrix c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] *= s;
    return c;
}

Matrix gram(const Matrix& a) {
    require_finite(a, "gram input");
    const int r = a.rows(), k = a.cols();
    Matrix g(k, k);
    for (int i = 0; i < k; ++i) {
        for (int j = i; j < k; ++j) {
            double s = 0.0;
            for (int t = 0; t < r; ++t) s += a(t, i) * a(t, j);
            g(i, j) = s;
            g(j, i) = s;
        }
    }
    return g;
}

double frobenius_norm(const Matrix& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * a.data()[i];
    return std::sqrt(s);
}

double frobenius_dist(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "frobenius_dist");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.data()[i] - b.data()[i];
        s += d * d;
    }
    return std::sqrt(s);
}

double max_abs(const Matrix& a) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a.data()[i]));
    return m;
}

double trace(const Matrix& a) {
    if (a.rows() != a.cols()) {
        throw ContractViolation("trace: not square, " + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()));
    }
    double s = 0.0;
    for (int i = 0; i < a.rows(); ++i) s += a(i, i);
    return s;
}

double dot(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
    return s;
}

bool all_finite(const Matrix& a) {
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!std::isfinite(a.data()[i])) return false;
    return true;
}

void require_finite(const Matrix& a, const char* what) {
    if (!all_finite(a)) {
        throw ContractViolation(std::string(what) + ": non-finite entry");
    }
}

} // namespace florg
