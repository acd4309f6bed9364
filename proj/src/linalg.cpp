#include "florg/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "florg/errors.hpp"
#include "florg/rng.hpp"

namespace florg {

namespace {

// ======== Householder QR ========

// In-place QR of a (rows >= cols). Returns the thin Q with the R-diagonal
// sign convention R_jj > 0, which makes the factorisation unique for
// full-column-rank input.
Matrix householder_thin_q(Matrix a, bool check_rank) {
    const int m = a.rows(), n = a.cols();
    std::vector<std::vector<double>> reflectors;
    reflectors.reserve(n);
    std::vector<double> rdiag(n, 0.0);
    const double scale0 = std::max(max_abs(a), 1e-300);

    for (int j = 0; j < n; ++j) {
        // Householder vector for column j below the diagonal
        double norm2 = 0.0;
        for (int i = j; i < m; ++i) norm2 += a(i, j) * a(i, j);
        double norm = std::sqrt(norm2);
        if (check_rank && norm <= 1e-12 * scale0) {
            throw ContractViolation("orthonormalize_columns: rank-deficient input at column " +
                                    std::to_string(j));
        }
        std::vector<double> v(m - j, 0.0);
        double alpha;
        if (norm == 0.0) {
            // Degenerate column: reflector is identity, pivot stays zero.
            alpha = 0.0;
            v[0] = 1.0; // harmless, beta will be zero against a zero column
        } else {
            alpha = (a(j, j) >= 0.0) ? -norm : norm;
            for (int i = j; i < m; ++i) v[i - j] = a(i, j);
            v[0] -= alpha;
            double vnorm = 0.0;
            for (double x : v) vnorm += x * x;
            vnorm = std::sqrt(vnorm);
            for (double& x : v) x /= vnorm;
        }
        // apply I - 2vvᵀ to the trailing block
        for (int c = j; c < n; ++c) {
            double s = 0.0;
            for (int i = j; i < m; ++i) s += v[i - j] * a(i, c);
            s *= 2.0;
            for (int i = j; i < m; ++i) a(i, c) -= s * v[i - j];
        }
        rdiag[j] = (norm == 0.0) ? 0.0 : alpha;
        reflectors.push_back(std::move(v));
    }

    // Accumulate the thin Q by applying the reflectors in reverse to I_{m×n}.
    Matrix q(m, n);
    for (int j = 0; j < n; ++j) q(j, j) = 1.0;
    for (int j = n - 1; j >= 0; --j) {
        const std::vector<double>& v = reflectors[j];
        for (int c = 0; c < n; ++c) {
            double s = 0.0;
            for (int i = j; i < m; ++i) s += v[i - j] * q(i, c);
            s *= 2.0;
            for (int i = j; i < m; ++i) q(i, c) -= s * v[i - j];
        }
    }
    for (int j = 0; j < n; ++j) {
        if (rdiag[j] < 0.0) {
            for (int i = 0; i < m; ++i) q(i, j) = -q(i, j);
        }
    }
    return q;
}

// Deterministic sign fix: the entry of largest magnitude in each eigenvector
// row is made positive (first index wins among ties), so identical inputs
// always yield the identical decomposition.
void normalize_row_signs(Matrix& vectors) {
    for (int i = 0; i < vectors.rows(); ++i) {
        int arg = 0;
        double best = -1.0;
        for (int j = 0; j < vectors.cols(); ++j) {
            const double mag = std::fabs(vectors(i, j));
            if (mag > best) {
                best = mag;
                arg = j;
            }
        }
        if (vectors(i, arg) < 0.0) {
            for (int j = 0; j < vectors.cols(); ++j) vectors(i, j) = -vectors(i, j);
        }
    }
}

double off_diag_norm(const Matrix& s) {
    double acc = 0.0;
    for (int i = 0; i < s.rows(); ++i)
        for (int j = i + 1; j < s.cols(); ++j) acc += s(i, j) * s(i, j);
    return std::sqrt(2.0 * acc);
}

// Orthogonalise column `col` of u against columns [0, col), twice for
// stability, then normalise. Returns the pre-normalisation residual norm.
double mgs_purify_column(Matrix& u, int col) {
    double norm = 0.0;
    for (int pass = 0; pass < 2; ++pass) {
        for (int c = 0; c < col; ++c) {
            double proj = 0.0;
            for (int i = 0; i < u.rows(); ++i) proj += u(i, c) * u(i, col);
            for (int i = 0; i < u.rows(); ++i) u(i, col) -= proj * u(i, c);
        }
        norm = 0.0;
        for (int i = 0; i < u.rows(); ++i) norm += u(i, col) * u(i, col);
        norm = std::sqrt(norm);
    }
    if (norm > 0.0) {
        for (int i = 0; i < u.rows(); ++i) u(i, col) /= norm;
    }
    return norm;
}

// Fill column `col` with the axis vector having the largest component
// outside the span of columns [0, col). Always succeeds since col < rows.
void complete_column_from_axes(Matrix& u, int col) {
    const int m = u.rows();
    int best_axis = 0;
    double best_norm = -1.0;
    for (int axis = 0; axis < m; ++axis) {
        double proj_sq = 0.0;
        for (int c = 0; c < col; ++c) proj_sq += u(axis, c) * u(axis, c);
        const double residual = 1.0 - std::min(proj_sq, 1.0);
        if (residual > best_norm + 1e-15) {
            best_norm = residual;
            best_axis = axis;
        }
    }
    for (int i = 0; i < m; ++i) u(i, col) = 0.0;
    u(best_axis, col) = 1.0;
    mgs_purify_column(u, col);
}

} // namespace

Matrix orthonormal_columns(int rows, int cols, std::uint64_t seed) {
    if (rows <= 0 || cols <= 0 || cols > rows) {
        throw ContractViolation("orthonormal_columns: need rows >= cols >= 1, got " +
                                std::to_string(rows) + "x" + std::to_string(cols));
    }
    Rng rng(seed);
    Matrix g = gaussian_matrix(rows, cols, 1.0, rng);
    return householder_thin_q(std::move(g), /*check_rank=*/false);
}

Matrix orthonormalize_columns(const Matrix& a) {
    if (a.cols() > a.rows()) {
        throw ContractViolation("orthonormalize_columns: more columns than rows");
    }
    require_finite(a, "orthonormalize_columns input");
    return householder_thin_q(a, /*check_rank=*/true);
}

double default_psd_tol(const Matrix& q) {
    return 1e-10 * std::max(trace(q), 0.0) / std::max(q.rows(), 1);
}

EigenPair sym_eig(const Matrix& q, double psd_tol) {
    if (q.rows() != q.cols()) {
        throw ContractViolation("sym_eig: not square, " + std::to_string(q.rows()) + "x" +
                                std::to_string(q.cols()));
    }
    if (!(psd_tol >= 0.0) || !std::isfinite(psd_tol)) {
        throw ContractViolation("sym_eig: psd_tol must be finite and >= 0");
    }
    require_finite(q, "sym_eig input");
    const int n = q.rows();
    const double qnorm = frobenius_norm(q);
    {
        double asym = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) {
                const double d = q(i, j) - q(j, i);
                asym += 2.0 * d * d;
            }
        if (std::sqrt(asym) > 1e-9 * std::max(qnorm, 1e-300) && qnorm > 0.0) {
            throw ContractViolation("sym_eig: input is not symmetric (||q - qT|| > 1e-9 ||q||)");
        }
    }

    // work on the symmetrised copy
    Matrix s(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) s(i, j) = 0.5 * (q(i, j) + q(j, i));
    Matrix v = Matrix::identity(n);

    const double stop = 1e-15 * std::max(frobenius_norm(s), 1e-300);
    const int max_sweeps = 100;
    int sweep = 0;
    while (off_diag_norm(s) > stop && sweep < max_sweeps) {
        ++sweep;
        for (int p = 0; p < n - 1; ++p) {
            for (int qq = p + 1; qq < n; ++qq) {
                const double apq = s(p, qq);
                if (apq == 0.0) continue;
                const double app = s(p, p);
                const double aqq = s(qq, qq);
                const double theta = (aqq - app) / (2.0 * apq);
                double t;
                if (std::fabs(theta) > 1e153) {
                    t = 0.5 / theta; // asymptotic root, avoids theta² overflow
                } else {
                    t = ((theta >= 0.0) ? 1.0 : -1.0) /
                        (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                }
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double sn = t * c;
                // S := Jᵀ S J on columns/rows p,q
                for (int i = 0; i < n; ++i) {
                    const double sip = s(i, p), siq = s(i, qq);
                    s(i, p) = c * sip - sn * siq;
                    s(i, qq) = sn * sip + c * siq;
                }
                for (int j = 0; j < n; ++j) {
                    const double spj = s(p, j), sqj = s(qq, j);
                    s(p, j) = c * spj - sn * sqj;
                    s(qq, j) = sn * spj + c * sqj;
                }
                s(p, qq) = 0.0;
                s(qq, p) = 0.0;
                for (int i = 0; i < n; ++i) {
                    const double vip = v(i, p), viq = v(i, qq);
                    v(i, p) = c * vip - sn * viq;
                    v(i, qq) = sn * vip + c * viq;
                }
            }
        }
    }
    if (sweep >= max_sweeps && off_diag_norm(s) > stop) {
        throw std::runtime_error("sym_eig: Jacobi failed to converge in 100 sweeps");
    }

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (s(a, a) != s(b, b)) return s(a, a) > s(b, b);
        return a < b;
    });

    EigenPair out;
    out.values.resize(n);
    out.vectors = Matrix(n, n);
    for (int i = 0; i < n; ++i) {
        double lam = s(order[i], order[i]);
        if (lam < -psd_tol) {
            throw NotPsdError("sym_eig: eigenvalue " + std::to_string(lam) +
                              " below -psd_tol (" + std::to_string(psd_tol) + ")");
        }
        if (lam <= psd_tol) lam = 0.0;
        out.values[i] = lam;
        for (int j = 0; j < n; ++j) out.vectors(i, j) = v(j, order[i]);
    }
    normalize_row_signs(out.vectors);
    return out;
}

SvdResult thin_svd(const Matrix& a) {
    require_finite(a, "thin_svd input");
    const int m = a.rows(), n = a.cols();
    const int s = std::min(m, n);
    const bool tall = (n <= m);

    // Eigendecompose the smaller Gram matrix. Eigenvalues of the Gram below
    // the fp64 noise floor carry no usable direction, so the clamp threshold
    // here is tighter than the aggregate-Gram default but still above the
    // Jacobi rounding level.
    const Matrix g = tall ? gram(a) : gram(transpose(a));
    const double gram_tol = 1e-14 * std::max(trace(g), 0.0) + 1e-300;
    EigenPair eig = sym_eig(g, gram_tol);

    std::vector<double> sigma(s, 0.0);
    for (int i = 0; i < s; ++i) sigma[i] = std::sqrt(std::max(eig.values[i], 0.0));
    const double cut = kSvdZeroRel * sigma[0];
    for (int i = 0; i < s; ++i) {
        if (sigma[i] <= cut) sigma[i] = 0.0;
    }

    // Eigenvector rows become the columns of the factor on the small side.
    Matrix small_factor(tall ? n : m, s);
    for (int i = 0; i < s; ++i)
        for (int j = 0; j < small_factor.rows(); ++j) small_factor(j, i) = eig.vectors(i, j);

    // Back-substitute the other factor: for σ > 0 the column is a·v/σ (or
    // aᵀ·u/σ), which keeps signs consistent with the small side. Zero-σ
    // columns are completed from axis vectors; everything gets one
    // re-orthonormalisation pass so near-cutoff columns stay orthonormal.
    Matrix big_factor(tall ? m : n, s);
    const Matrix& source = a;
    for (int i = 0; i < s; ++i) {
        if (sigma[i] > 0.0) {
            if (tall) {
                for (int r = 0; r < m; ++r) {
                    double acc = 0.0;
                    for (int c = 0; c < n; ++c) acc += source(r, c) * small_factor(c, i);
                    big_factor(r, i) = acc / sigma[i];
                }
            } else {
                for (int c = 0; c < n; ++c) {
                    double acc = 0.0;
                    for (int r = 0; r < m; ++r) acc += source(r, c) * small_factor(r, i);
                    big_factor(c, i) = acc / sigma[i];
                }
            }
            mgs_purify_column(big_factor, i);
        } else {
            complete_column_from_axes(big_factor, i);
        }
    }

    SvdResult out;
    out.sigma = std::move(sigma);
    if (tall) {
        out.u = std::move(big_factor);
        out.v = std::move(small_factor);
    } else {
        out.u = std::move(small_factor);
        out.v = std::move(big_factor);
    }
    return out;
}

} // namespace florg
