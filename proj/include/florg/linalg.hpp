#pragma once

#include <cstdint>
#include <vector>

#include "florg/matrix.hpp"

namespace florg {

// Eigendecomposition of a symmetric PSD matrix q: row i of `vectors` is the
// unit eigenvector belonging to values[i], values sorted descending, so
// q = vectorsᵀ · diag(values) · vectors.
struct EigenPair {
    std::vector<double> values;
    Matrix vectors;
};

// a = u · diag(sigma) · vᵀ with s = min(rows, cols) columns in u and v.
// sigma is sorted descending; entries below 1e-12·sigma[0] are stored as
// exact zeros and the matching u/v columns come from a deterministic
// orthonormal completion rather than from back-substitution.
struct SvdResult {
    Matrix u;
    std::vector<double> sigma;
    Matrix v;
};

// Thin QR orthonormalisation of an iid Gaussian draw: rows×cols with
// columnsᵀ·columns = I. Requires rows >= cols. Deterministic per seed; the
// R-diagonal is sign-fixed positive so the result is unique.
Matrix orthonormal_columns(int rows, int cols, std::uint64_t seed);

// Re-orthonormalises the columns of an arbitrary full-column-rank matrix
// (used by the scaled-Gaussian init variant).
Matrix orthonormalize_columns(const Matrix& a);

// Default clamp threshold for aggregate Gram matrices: 1e-10 · trace / dim.
double default_psd_tol(const Matrix& q);

// Cyclic Jacobi on the symmetrised input. Rejects matrices that are not
// symmetric to 1e-9 relative, and matrices with an eigenvalue below
// -psd_tol. Eigenvalues in [-psd_tol, psd_tol] are clamped to exact zero.
EigenPair sym_eig(const Matrix& q, double psd_tol);

// Thin SVD through the eigendecomposition of the smaller Gram matrix.
SvdResult thin_svd(const Matrix& a);

// Relative cutoff under which a singular value counts as zero.
inline constexpr double kSvdZeroRel = 1e-12;

} // namespace florg
