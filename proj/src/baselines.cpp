#include "florg/baselines.hpp"

#include <cmath>
#include <string>

#include "florg/errors.hpp"
#include "florg/linalg.hpp"
#include "florg/rng.hpp"

namespace florg {

namespace {

void validate_cohort(const std::vector<LoraState>& locals, const char* op) {
    if (locals.empty()) throw ContractViolation(std::string(op) + ": no client states");
    const LoraState& first = locals[0];
    for (std::size_t n = 1; n < locals.size(); ++n) {
        if (!locals[n].b.same_shape(first.b) || !locals[n].a.same_shape(first.a)) {
            throw ContractViolation(std::string(op) + ": client " + std::to_string(n) +
                                    " factor shapes differ");
        }
        if (locals[n].alpha != first.alpha) {
            throw ContractViolation(std::string(op) + ": clients disagree on alpha");
        }
    }
}

Matrix mean_of(const std::vector<LoraState>& locals, bool pick_b) {
    const Matrix& proto = pick_b ? locals[0].b : locals[0].a;
    Matrix acc(proto.rows(), proto.cols());
    for (const LoraState& st : locals) {
        const Matrix& m = pick_b ? st.b : st.a;
        require_finite(m, "baseline aggregate input");
        for (std::size_t i = 0; i < acc.size(); ++i) acc.data()[i] += m.data()[i];
    }
    return scale(acc, 1.0 / static_cast<double>(locals.size()));
}

} // namespace

LoraState lora_init(int d_out, int d_in, int r, double alpha, std::uint64_t seed) {
    if (d_out <= 0 || d_in <= 0 || r < 1 || r > std::min(d_out, d_in)) {
        throw ContractViolation("lora_init: bad dimensions");
    }
    if (!(alpha > 0.0) || !std::isfinite(alpha)) {
        throw ContractViolation("lora_init: alpha must be positive and finite");
    }
    LoraState st;
    st.b = Matrix(d_out, r); // zeros: the first update starts from delta = 0
    Rng rng(derive_seed(seed, seed_stream::lora_init));
    st.a = gaussian_matrix(r, d_in, 1.0 / std::sqrt(static_cast<double>(d_in)), rng);
    st.alpha = alpha;
    return st;
}

Matrix lora_delta(const LoraState& state) {
    return scale(matmul(state.b, state.a), state.alpha / state.r());
}

LoraGrads lora_grads(const LoraState& state, const Matrix& g_full) {
    if (g_full.rows() != state.b.rows() || g_full.cols() != state.a.cols()) {
        throw ContractViolation("lora_grads: gradient shape " + std::to_string(g_full.rows()) +
                                "x" + std::to_string(g_full.cols()) + " does not match layer " +
                                std::to_string(state.b.rows()) + "x" +
                                std::to_string(state.a.cols()));
    }
    require_finite(g_full, "lora_grads g_full");
    const double s = state.alpha / state.r();
    LoraGrads g;
    g.gb = scale(matmul(g_full, transpose(state.a)), s);
    g.ga = scale(matmul(transpose(state.b), g_full), s);
    return g;
}

Matrix mean_product(const std::vector<LoraState>& locals) {
    validate_cohort(locals, "mean_product");
    Matrix acc(locals[0].b.rows(), locals[0].a.cols());
    for (const LoraState& st : locals) {
        const Matrix p = matmul(st.b, st.a);
        for (std::size_t i = 0; i < acc.size(); ++i) acc.data()[i] += p.data()[i];
    }
    return scale(acc, 1.0 / static_cast<double>(locals.size()));
}

double aggregation_error(const std::vector<LoraState>& locals) {
    validate_cohort(locals, "aggregation_error");
    const Matrix separate = matmul(mean_of(locals, true), mean_of(locals, false));
    return frobenius_dist(separate, mean_product(locals));
}

LoraState fedit_aggregate(const std::vector<LoraState>& locals) {
    validate_cohort(locals, "fedit_aggregate");
    LoraState out;
    out.b = mean_of(locals, true);
    out.a = mean_of(locals, false);
    out.alpha = locals[0].alpha;
    return out;
}

FederaAggregate federa_aggregate(const std::vector<LoraState>& locals) {
    validate_cohort(locals, "federa_aggregate");
    const int r = locals[0].r();
    const Matrix pbar = mean_product(locals);
    SvdResult sv = thin_svd(pbar);

    FederaAggregate out;
    out.state.alpha = locals[0].alpha;
    out.state.b = Matrix(pbar.rows(), r);
    out.state.a = Matrix(r, pbar.cols());
    out.truncation_loss = 0.0;
    const int s = static_cast<int>(sv.sigma.size());
    for (int i = 0; i < s; ++i) {
        if (i < r) {
            const double root = std::sqrt(sv.sigma[i]);
            for (int row = 0; row < pbar.rows(); ++row) out.state.b(row, i) = sv.u(row, i) * root;
            for (int col = 0; col < pbar.cols(); ++col) out.state.a(i, col) = root * sv.v(col, i);
        } else {
            out.truncation_loss += sv.sigma[i] * sv.sigma[i];
        }
    }
    return out;
}

Matrix ffa_aggregate_b(const std::vector<LoraState>& locals) {
    validate_cohort(locals, "ffa_aggregate_b");
    return mean_of(locals, true);
}

Matrix fedsa_aggregate_a(const std::vector<LoraState>& locals) {
    validate_cohort(locals, "fedsa_aggregate_a");
    return mean_of(locals, false);
}

FedexAggregate fedex_aggregate(const std::vector<LoraState>& locals) {
    validate_cohort(locals, "fedex_aggregate");
    FedexAggregate out;
    out.state = fedit_aggregate(locals);
    out.residual = sub(mean_product(locals), matmul(out.state.b, out.state.a));
    return out;
}

} // namespace florg
