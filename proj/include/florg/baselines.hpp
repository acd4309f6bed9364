#pragma once

#include <cstdint>
#include <vector>

#include "florg/matrix.hpp"

namespace florg {

// Federation schemes supported by the experiment driver. `florg` is the
// Gram-aggregation pipeline in server_core; the rest operate on the
// two-factor (b·a) parameterisation below.
enum class Scheme {
    florg,
    fedit,      // average b and a separately
    federa,     // SVD refactorisation of the averaged product
    ffa_lora,   // a frozen at init, only b trained/averaged
    fedsa_lora, // a shared/averaged, b personal per client
    fedex_lora, // separate averages plus an exact full-matrix residual
};

// Two-factor adapter: effective update (alpha/r)·b·a with b (d_out×r)
// starting at zero and a (r×d_in) Gaussian, the standard convention.
struct LoraState {
    Matrix b;
    Matrix a;
    double alpha = 16.0;

    int r() const { return b.cols(); }
};

struct LoraGrads {
    Matrix gb;
    Matrix ga;
};

LoraState lora_init(int d_out, int d_in, int r, double alpha, std::uint64_t seed);

// (alpha/r) · b · a
Matrix lora_delta(const LoraState& state);

// gb = (alpha/r)·g_full·aᵀ,  ga = (alpha/r)·bᵀ·g_full
LoraGrads lora_grads(const LoraState& state, const Matrix& g_full);

// ||mean(b)·mean(a) - mean(b·a)||_F over the raw factors: the product bias
// incurred by averaging factors instead of products. Zero when all clients
// share either factor.
double aggregation_error(const std::vector<LoraState>& locals);

// mean(b·a) over clients, in index order.
Matrix mean_product(const std::vector<LoraState>& locals);

// FedIT: entrywise means of both factors.
LoraState fedit_aggregate(const std::vector<LoraState>& locals);

// FeDeRA: thin SVD of mean(b·a), top-r components split symmetrically
// (b = u·sqrt(sigma), a = sqrt(sigma)·vᵀ). truncation_loss is the squared
// singular-value mass beyond rank r.
struct FederaAggregate {
    LoraState state;
    double truncation_loss;
};
FederaAggregate federa_aggregate(const std::vector<LoraState>& locals);

// FFA: b averaged, a untouched (callers keep the shared frozen a).
Matrix ffa_aggregate_b(const std::vector<LoraState>& locals);

// FedSA: a averaged, b stays personal on each client.
Matrix fedsa_aggregate_a(const std::vector<LoraState>& locals);

// FedEx: averaged factors plus the residual mean(b·a) - mean(b)·mean(a),
// which the caller folds (scaled by alpha/r) into the frozen base weight so
// the global model matches the exact product mean.
struct FedexAggregate {
    LoraState state;
    Matrix residual; // d_out×d_in, raw (unscaled) product-space residual
};
FedexAggregate fedex_aggregate(const std::vector<LoraState>& locals);

} // namespace florg
