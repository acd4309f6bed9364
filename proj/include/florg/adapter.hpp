#pragma once

#include <cstdint>

#include "florg/matrix.hpp"

namespace florg {

enum class InitScheme {
    semi_orthogonal, // QR of a standard Gaussian draw
    kaiming,         // fan-in scaled Gaussian, then QR-orthonormalised
    svd,             // leading singular subspaces of the frozen weight
};

struct AdapterConfig {
    int d_out = 0;
    int d_in = 0;
    int r = 0;          // trainable rank, 1 <= r <= min(d_out, d_in)
    double alpha = 16.0;
    InitScheme init = InitScheme::semi_orthogonal;
};

// One adapted linear layer. l_basis (d_out×k) and r_basis (k×d_in) are
// frozen and satisfy l_basisᵀ·l_basis = I_k, r_basis·r_basisᵀ = I_k with
// k = min(d_out, d_in). Only `a` (r×k) is trainable; the layer's effective
// weight is w0 + (alpha/r)·l_basis·aᵀa·r_basis.
struct AdapterState {
    Matrix w0;
    Matrix l_basis;
    Matrix r_basis;
    Matrix a;
    double alpha = 16.0;

    int r() const { return a.rows(); }
    int k() const { return a.cols(); }
};

// Deterministic per (cfg, w0, seed). `a` starts Gaussian with std 1/sqrt(k):
// a zero start would be a stationary point of the core gradient, so the
// usual LoRA zero-init cannot be used here.
AdapterState init_adapter(const AdapterConfig& cfg, const Matrix& w0, std::uint64_t seed);

// (alpha/r) · l_basis · aᵀa · r_basis, the additive update to w0.
Matrix delta_w(const AdapterState& state);

// Chain rule through the Gram parameterisation: with h = l_basisᵀ · g_full ·
// r_basisᵀ the core gradient is (alpha/r) · a · (h + hᵀ). g_full is the loss
// gradient with respect to the full weight matrix.
Matrix grad_a(const AdapterState& state, const Matrix& g_full);

// One SGD step on the core matrix; returns the new `a` without mutating the
// state. Throws DivergenceError on non-finite gradients.
Matrix local_update(const AdapterState& state, const Matrix& g_full, double eta);

// w0 + delta_w(state); the full effective weight of the layer.
Matrix effective_weight(const AdapterState& state);

} // namespace florg
