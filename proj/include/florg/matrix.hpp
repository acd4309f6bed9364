#pragma once

#include <cstddef>
#include <vector>

namespace florg {

// Dense row-major fp64 matrix. All numerics in this library run in double;
// there is deliberately no expression-template cleverness, every product is
// an explicit call so the evaluation order (and therefore the bit pattern of
// the result) is fixed.
class Matrix {
public:
    Matrix() = default;
    Matrix(int rows, int cols); // zero-filled
    Matrix(int rows, int cols, std::vector<double> values);

    static Matrix identity(int n);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(int i, int j) { return data_[static_cast<std::size_t>(i) * cols_ + j]; }
    double operator()(int i, int j) const { return data_[static_cast<std::size_t>(i) * cols_ + j]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }
    bool operator==(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_ && data_ == other.data_;
    }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

// a * b with shape checking; the error message carries both shapes.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);

// aᵀ a, symmetrised by construction (entry (i,j) and (j,i) come from the
// same accumulation).
Matrix gram(const Matrix& a);

double frobenius_norm(const Matrix& a);
double frobenius_dist(const Matrix& a, const Matrix& b);
double max_abs(const Matrix& a);
double trace(const Matrix& a);
double dot(const Matrix& a, const Matrix& b); // <a, b>_F

bool all_finite(const Matrix& a);
// Throws ContractViolation naming `what` if a has a NaN/Inf entry.
void require_finite(const Matrix& a, const char* what);

inline Matrix operator*(const Matrix& a, const Matrix& b) { return matmul(a, b); }
inline Matrix operator+(const Matrix& a, const Matrix& b) { return add(a, b); }
inline Matrix operator-(const Matrix& a, const Matrix& b) { return sub(a, b); }

} // namespace florg
