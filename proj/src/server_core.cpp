#include "florg/server_core.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "florg/errors.hpp"

namespace florg {

std::vector<double> uniform_weights(int n) {
    if (n <= 0) throw ContractViolation("uniform_weights: n must be positive");
    return std::vector<double>(n, 1.0 / n);
}

GramAggregate aggregate_gram(const std::vector<Matrix>& locals,
                             const std::vector<double>& weights) {
    if (locals.empty()) throw ContractViolation("aggregate_gram: no client matrices");
    if (weights.size() != locals.size()) {
        throw ContractViolation("aggregate_gram: " + std::to_string(locals.size()) +
                                " clients but " + std::to_string(weights.size()) + " weights");
    }
    double wsum = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) {
            throw ContractViolation("aggregate_gram: weights must be finite and non-negative");
        }
        wsum += w;
    }
    if (std::fabs(wsum - 1.0) > 1e-9) {
        throw ContractViolation("aggregate_gram: weights sum to " + std::to_string(wsum));
    }
    const int r = locals[0].rows(), k = locals[0].cols();
    for (std::size_t n = 1; n < locals.size(); ++n) {
        if (locals[n].rows() != r || locals[n].cols() != k) {
            throw ContractViolation("aggregate_gram: client " + std::to_string(n) +
                                    " shape mismatch");
        }
    }

    Matrix q(k, k);
    for (std::size_t n = 0; n < locals.size(); ++n) {
        require_finite(locals[n], "aggregate_gram client matrix");
        const Matrix g = gram(locals[n]);
        const double w = weights[n];
        for (std::size_t i = 0; i < q.size(); ++i) q.data()[i] += w * g.data()[i];
    }

    GramAggregate agg;
    agg.psd_tol = default_psd_tol(q);
    agg.eigen = sym_eig(q, agg.psd_tol);
    agg.q = std::move(q);
    agg.effective_rank = 0;
    for (double v : agg.eigen.values) {
        if (v > 0.0) ++agg.effective_rank;
    }
    const int rank_cap = std::min<std::size_t>(k, locals.size() * static_cast<std::size_t>(r));
    if (agg.effective_rank > rank_cap) {
        throw std::runtime_error("aggregate_gram: effective rank " +
                                 std::to_string(agg.effective_rank) + " exceeds bound " +
                                 std::to_string(rank_cap));
    }
    return agg;
}

CanonicalFactor decompose(const GramAggregate& agg) {
    if (agg.effective_rank < 1) {
        throw ContractViolation("decompose: aggregate has rank 0, nothing to factor");
    }
    const int rp = agg.effective_rank;
    const int k = agg.q.cols();
    CanonicalFactor f;
    f.a_tilde = Matrix(rp, k);
    f.eigenvalues.assign(agg.eigen.values.begin(), agg.eigen.values.begin() + rp);
    for (int i = 0; i < rp; ++i) {
        const double s = std::sqrt(agg.eigen.values[i]);
        for (int j = 0; j < k; ++j) f.a_tilde(i, j) = s * agg.eigen.vectors(i, j);
    }
    return f;
}

CanonicalFactor truncate_factor(const CanonicalFactor& factor, int target_r) {
    if (target_r < 1) throw ContractViolation("truncate_factor: target_r must be >= 1");
    if (factor.a_tilde.rows() <= target_r) return factor;

    CanonicalFactor out;
    out.a_tilde = Matrix(target_r, factor.a_tilde.cols());
    for (int i = 0; i < target_r; ++i)
        for (int j = 0; j < factor.a_tilde.cols(); ++j) out.a_tilde(i, j) = factor.a_tilde(i, j);
    out.eigenvalues.assign(factor.eigenvalues.begin(), factor.eigenvalues.begin() + target_r);
    out.truncation_loss = factor.truncation_loss;
    for (std::size_t i = target_r; i < factor.eigenvalues.size(); ++i) {
        out.truncation_loss += factor.eigenvalues[i];
    }
    return out;
}

ProcrustesResult procrustes_align(const Matrix& a_prev, const CanonicalFactor& factor) {
    const Matrix& at = factor.a_tilde;
    if (a_prev.cols() != at.cols()) {
        throw ContractViolation("procrustes_align: width mismatch " +
                                std::to_string(a_prev.cols()) + " vs " +
                                std::to_string(at.cols()));
    }
    if (a_prev.rows() < at.rows()) {
        throw ContractViolation("procrustes_align: previous core has fewer rows (" +
                                std::to_string(a_prev.rows()) + ") than the factor (" +
                                std::to_string(at.rows()) + "); truncate first");
    }
    require_finite(a_prev, "procrustes_align a_prev");

    const Matrix cross = matmul(a_prev, transpose(at)); // r×r'
    SvdResult sv = thin_svd(cross);

    ProcrustesResult res;
    res.s_star = matmul(sv.u, transpose(sv.v));
    res.residual = [&] {
        const Matrix diff = sub(matmul(res.s_star, at), a_prev);
        const double n = frobenius_norm(diff);
        return n * n;
    }();
    res.trace_objective = dot(res.s_star, cross);
    res.sigma_min_cross = 0.0;
    for (double s : sv.sigma) {
        if (s > 0.0) res.sigma_min_cross = s; // sigma is descending: last positive wins
    }
    res.delta_proc = 0.0;
    return res;
}

double alignment_drift(const Matrix& s_any, const Matrix& a_prev, const CanonicalFactor& factor,
                       const ProcrustesResult& opt) {
    const Matrix diff = sub(matmul(s_any, factor.a_tilde), a_prev);
    const double n = frobenius_norm(diff);
    return n * n - opt.residual;
}

Matrix apply_alignment(const ProcrustesResult& opt, const CanonicalFactor& factor) {
    return matmul(opt.s_star, factor.a_tilde);
}

Matrix pad_factor_rows(const CanonicalFactor& factor, int rows) {
    const Matrix& at = factor.a_tilde;
    if (rows < at.rows()) {
        throw ContractViolation("pad_factor_rows: target rows below factor rows");
    }
    if (rows == at.rows()) return at;
    Matrix out(rows, at.cols());
    for (int i = 0; i < at.rows(); ++i)
        for (int j = 0; j < at.cols(); ++j) out(i, j) = at(i, j);
    return out;
}

Matrix assemble_full(const AdapterState& state, const Matrix& a_next) {
    if (a_next.cols() != state.k()) {
        throw ContractViolation("assemble_full: core width " + std::to_string(a_next.cols()) +
                                " does not match basis width " + std::to_string(state.k()));
    }
    const double s = state.alpha / a_next.rows();
    return add(state.w0, scale(matmul(matmul(state.l_basis, gram(a_next)), state.r_basis), s));
}

} // namespace florg
