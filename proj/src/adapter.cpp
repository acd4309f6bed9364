#include "florg/adapter.hpp"

#include <cmath>
#include <string>

#include "florg/errors.hpp"
#include "florg/linalg.hpp"
#include "florg/rng.hpp"

namespace florg {

namespace {

void validate_config(const AdapterConfig& cfg, const Matrix& w0) {
    const int k = std::min(cfg.d_out, cfg.d_in);
    if (cfg.d_out <= 0 || cfg.d_in <= 0) {
        throw ContractViolation("init_adapter: non-positive layer dims");
    }
    if (cfg.r < 1 || cfg.r > k) {
        throw ContractViolation("init_adapter: r=" + std::to_string(cfg.r) +
                                " outside [1, " + std::to_string(k) + "]");
    }
    if (!(cfg.alpha > 0.0) || !std::isfinite(cfg.alpha)) {
        throw ContractViolation("init_adapter: alpha must be positive and finite");
    }
    if (w0.rows() != cfg.d_out || w0.cols() != cfg.d_in) {
        throw ContractViolation("init_adapter: w0 is " + std::to_string(w0.rows()) + "x" +
                                std::to_string(w0.cols()) + ", config wants " +
                                std::to_string(cfg.d_out) + "x" + std::to_string(cfg.d_in));
    }
}

} // namespace

AdapterState init_adapter(const AdapterConfig& cfg, const Matrix& w0, std::uint64_t seed) {
    validate_config(cfg, w0);
    require_finite(w0, "init_adapter w0");
    const int k = std::min(cfg.d_out, cfg.d_in);

    AdapterState st;
    st.w0 = w0;
    st.alpha = cfg.alpha;

    switch (cfg.init) {
        case InitScheme::semi_orthogonal: {
            st.l_basis = orthonormal_columns(cfg.d_out, k, derive_seed(seed, seed_stream::basis_left));
            st.r_basis =
                transpose(orthonormal_columns(cfg.d_in, k, derive_seed(seed, seed_stream::basis_right)));
            break;
        }
        case InitScheme::kaiming: {
            Rng rl(derive_seed(seed, seed_stream::basis_left));
            Rng rr(derive_seed(seed, seed_stream::basis_right));
            Matrix gl = gaussian_matrix(cfg.d_out, k, std::sqrt(2.0 / k), rl);
            Matrix gr = gaussian_matrix(cfg.d_in, k, std::sqrt(2.0 / cfg.d_in), rr);
            st.l_basis = orthonormalize_columns(gl);
            st.r_basis = transpose(orthonormalize_columns(gr));
            break;
        }
        case InitScheme::svd: {
            SvdResult sv = thin_svd(w0);
            st.l_basis = sv.u;
            st.r_basis = transpose(sv.v);
            break;
        }
    }

    Rng ra(derive_seed(seed, seed_stream::adapter_init));
    st.a = gaussian_matrix(cfg.r, k, 1.0 / std::sqrt(static_cast<double>(k)), ra);
    return st;
}

Matrix delta_w(const AdapterState& state) {
    const double s = state.alpha / state.r();
    return scale(matmul(matmul(state.l_basis, gram(state.a)), state.r_basis), s);
}

Matrix grad_a(const AdapterState& state, const Matrix& g_full) {
    if (g_full.rows() != state.w0.rows() || g_full.cols() != state.w0.cols()) {
        throw ContractViolation("grad_a: gradient shape " + std::to_string(g_full.rows()) + "x" +
                                std::to_string(g_full.cols()) + " does not match layer " +
                                std::to_string(state.w0.rows()) + "x" +
                                std::to_string(state.w0.cols()));
    }
    require_finite(g_full, "grad_a g_full");
    Matrix h = matmul(matmul(transpose(state.l_basis), g_full), transpose(state.r_basis));
    Matrix sym = add(h, transpose(h));
    return scale(matmul(state.a, sym), state.alpha / state.r());
}

Matrix local_update(const AdapterState& state, const Matrix& g_full, double eta) {
    if (!(eta > 0.0) || !std::isfinite(eta)) {
        throw ContractViolation("local_update: eta must be positive and finite");
    }
    if (!all_finite(g_full)) {
        throw DivergenceError("local_update: non-finite gradient");
    }
    Matrix step = grad_a(state, g_full);
    Matrix next = sub(state.a, scale(step, eta));
    if (!all_finite(next)) {
        throw DivergenceError("local_update: non-finite core matrix after step");
    }
    return next;
}

Matrix effective_weight(const AdapterState& state) {
    return add(state.w0, delta_w(state));
}

} // namespace florg
