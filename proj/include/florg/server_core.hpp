#pragma once

#include <vector>

#include "florg/adapter.hpp"
#include "florg/linalg.hpp"
#include "florg/matrix.hpp"

namespace florg {

// Weighted sum of client core Grams. Aggregation happens in Gram space,
// where averaging is linear, so unlike factor-averaging schemes it incurs no
// product bias.
struct GramAggregate {
    Matrix q;            // k×k, PSD
    EigenPair eigen;     // full decomposition of q
    int effective_rank;  // eigenvalues above psd_tol
    double psd_tol;
};

// Row-scaled eigenvector factor: row i is sqrt(lambda_i) times the i-th
// eigenvector, rows sorted by descending eigenvalue, so a_tildeᵀ·a_tilde
// reproduces the (possibly truncated) aggregate.
struct CanonicalFactor {
    Matrix a_tilde;                  // r'×k
    std::vector<double> eigenvalues; // the kept eigenvalues, descending
    double truncation_loss = 0.0;    // Gram energy discarded by truncation
};

struct ProcrustesResult {
    Matrix s_star;           // r×r', orthonormal columns
    double residual;         // ||s_star·a_tilde - a_prev||_F²
    double trace_objective;  // <s_star, a_prev·a_tildeᵀ>_F, maximised by s_star
    double sigma_min_cross;  // smallest positive singular value of the cross matrix
    double delta_proc;       // 0 by definition for the optimal alignment
};

// weights must be non-negative and sum to 1 within 1e-9; pass
// uniform_weights(n) for the plain mean. Clients are combined in index
// order, so the result is bit-stable for a fixed input order.
GramAggregate aggregate_gram(const std::vector<Matrix>& locals,
                             const std::vector<double>& weights);

std::vector<double> uniform_weights(int n);

// Extracts the canonical factor of the aggregate (rank-0 aggregates are
// rejected: every useful run has a non-zero core).
CanonicalFactor decompose(const GramAggregate& agg);

// Keeps the top target_r rows (the energy-dominant eigendirections) and
// records the discarded eigenvalue mass. No-op when the factor already fits.
CanonicalFactor truncate_factor(const CanonicalFactor& factor, int target_r);

// Solves min_S ||S·a_tilde - a_prev||_F² over S with orthonormal columns via
// the SVD of the cross matrix a_prev·a_tildeᵀ. Requires a_prev to have at
// least as many rows as the factor.
ProcrustesResult procrustes_align(const Matrix& a_prev, const CanonicalFactor& factor);

// ||s_any·a_tilde - a_prev||² - ||s_star·a_tilde - a_prev||²; non-negative
// for any feasible s_any, zero only at an optimal alignment.
double alignment_drift(const Matrix& s_any, const Matrix& a_prev, const CanonicalFactor& factor,
                       const ProcrustesResult& opt);

// s_star · a_tilde, the aligned next core matrix (r×k).
Matrix apply_alignment(const ProcrustesResult& opt, const CanonicalFactor& factor);

// Zero-pads the factor to `rows` rows: the trivial "no alignment" embedding.
Matrix pad_factor_rows(const CanonicalFactor& factor, int rows);

// w0 + (alpha/r)·l_basis·a_nextᵀ·a_next·r_basis for the given next core.
Matrix assemble_full(const AdapterState& state, const Matrix& a_next);

} // namespace florg
