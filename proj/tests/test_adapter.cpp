#include <cmath>
#include <limits>

#include "doctest.h"
#include "florg/adapter.hpp"
#include "florg/errors.hpp"
#include "florg/matrix.hpp"
#include "florg/rng.hpp"
#include "ref_numerics.hpp"

using namespace florg;

namespace {

AdapterState random_state(int d_out, int d_in, int r, double alpha, std::uint64_t seed) {
    Rng rng(seed);
    const Matrix w0 = gaussian_matrix(d_out, d_in, 1.0, rng);
    AdapterConfig cfg;
    cfg.d_out = d_out;
    cfg.d_in = d_in;
    cfg.r = r;
    cfg.alpha = alpha;
    return init_adapter(cfg, w0, seed);
}

// linear probe functional f(A) = <g, w0 + delta_w(A)>, so df/dW = g exactly
double probe(const AdapterState& st, const Matrix& g) {
    return dot(g, effective_weight(st));
}

} // namespace

TEST_CASE("init_adapter shapes and semi-orthogonal bases") {
    const AdapterState st = random_state(10, 7, 3, 16.0, 41);
    const int k = 7;
    CHECK(st.l_basis.rows() == 10);
    CHECK(st.l_basis.cols() == k);
    CHECK(st.r_basis.rows() == k);
    CHECK(st.r_basis.cols() == 7);
    CHECK(st.a.rows() == 3);
    CHECK(st.a.cols() == k);
    CHECK(st.r() == 3);
    CHECK(st.k() == k);
    // columns of l and rows of r are orthonormal
    CHECK(frobenius_dist(ref::naive_gram(st.l_basis), Matrix::identity(k)) <= 1e-11);
    CHECK(frobenius_dist(ref::naive_gram(transpose(st.r_basis)), Matrix::identity(k)) <= 1e-11);
}

TEST_CASE("init_adapter is deterministic and seed-sensitive") {
    const AdapterState a = random_state(8, 8, 2, 8.0, 5);
    const AdapterState b = random_state(8, 8, 2, 8.0, 5);
    CHECK(a.l_basis == b.l_basis);
    CHECK(a.r_basis == b.r_basis);
    CHECK(a.a == b.a);
    const AdapterState c = random_state(8, 8, 2, 8.0, 6);
    CHECK_FALSE(a.a == c.a);
}

TEST_CASE("init_adapter validates its arguments") {
    Rng rng(42);
    const Matrix w0 = gaussian_matrix(6, 4, 1.0, rng);
    AdapterConfig cfg;
    cfg.d_out = 6;
    cfg.d_in = 4;
    cfg.r = 5; // above min(d_out, d_in)
    CHECK_THROWS_AS(init_adapter(cfg, w0, 1), ContractViolation);
    cfg.r = 0;
    CHECK_THROWS_AS(init_adapter(cfg, w0, 1), ContractViolation);
    cfg.r = 2;
    cfg.alpha = 0.0;
    CHECK_THROWS_AS(init_adapter(cfg, w0, 1), ContractViolation);
    cfg.alpha = 16.0;
    CHECK_THROWS_AS(init_adapter(cfg, Matrix(4, 6), 1), ContractViolation); // transposed w0
}

TEST_CASE("svd init uses the leading singular subspaces of the frozen weight") {
    Rng rng(43);
    const Matrix w0 = gaussian_matrix(9, 5, 1.0, rng);
    AdapterConfig cfg;
    cfg.d_out = 9;
    cfg.d_in = 5;
    cfg.r = 2;
    cfg.init = InitScheme::svd;
    const AdapterState st = init_adapter(cfg, w0, 7);
    const ref::JacobiSvd sv = ref::jacobi_svd(w0);
    // same column space: projecting the reference U onto l_basis loses nothing
    const Matrix proj =
        ref::naive_matmul(st.l_basis, ref::naive_matmul(transpose(st.l_basis), sv.u));
    CHECK(frobenius_dist(proj, sv.u) <= 1e-8);
    const Matrix rt = transpose(st.r_basis);
    const Matrix projv = ref::naive_matmul(rt, ref::naive_matmul(transpose(rt), sv.v));
    CHECK(frobenius_dist(projv, sv.v) <= 1e-8);
}

TEST_CASE("kaiming init still lands on orthonormal bases") {
    const AdapterState st = random_state(12, 6, 2, 4.0, 44);
    AdapterConfig cfg;
    cfg.d_out = 12;
    cfg.d_in = 6;
    cfg.r = 2;
    cfg.alpha = 4.0;
    cfg.init = InitScheme::kaiming;
    const AdapterState ka = init_adapter(cfg, st.w0, 44);
    CHECK(frobenius_dist(ref::naive_gram(ka.l_basis), Matrix::identity(6)) <= 1e-11);
    CHECK(frobenius_dist(ref::naive_gram(transpose(ka.r_basis)), Matrix::identity(6)) <= 1e-11);
    CHECK_FALSE(ka.l_basis == st.l_basis);
}

TEST_CASE("delta_w matches the definition computed by reference arithmetic") {
    Rng rng(45);
    for (int t = 0; t < 10; ++t) {
        AdapterState st = random_state(6 + t % 3, 5, 2, 9.0, 100 + t);
        st.a = gaussian_matrix(2, st.k(), 1.0, rng);
        const Matrix want = scale(
            ref::naive_matmul(ref::naive_matmul(st.l_basis, ref::naive_gram(st.a)), st.r_basis),
            st.alpha / st.r());
        CHECK(frobenius_dist(delta_w(st), want) <= 1e-12 * std::max(1.0, frobenius_norm(want)));
        CHECK(frobenius_dist(effective_weight(st), add(st.w0, want)) <=
              1e-12 * std::max(1.0, frobenius_norm(st.w0)));
    }
}

TEST_CASE("delta_w scales quadratically in the core") {
    Rng rng(46);
    AdapterState st = random_state(7, 7, 3, 16.0, 200);
    const Matrix base = delta_w(st);
    for (double c : {2.0, -0.5, 3.75}) {
        AdapterState scaled = st;
        scaled.a = scale(st.a, c);
        const Matrix got = delta_w(scaled);
        CHECK(frobenius_dist(got, scale(base, c * c)) <=
              1e-11 * std::max(1.0, frobenius_norm(base)));
    }
}

TEST_CASE("delta_w is invariant to left-orthogonal moves of the core") {
    Rng rng(47);
    AdapterState st = random_state(8, 6, 3, 12.0, 300);
    const Matrix s = ref::random_semi_orthogonal(3, 3, rng);
    AdapterState rotated = st;
    rotated.a = ref::naive_matmul(s, st.a);
    CHECK(frobenius_dist(delta_w(rotated), delta_w(st)) <=
          1e-11 * std::max(1.0, frobenius_norm(delta_w(st))));
}

TEST_CASE("grad_a passes central finite differences") {
    Rng rng(48);
    int checks = 0;
    for (int t = 0; t < 12; ++t) {
        const int d_out = 3 + rng.uniform_int(5);
        const int d_in = 3 + rng.uniform_int(5);
        const int k = std::min(d_out, d_in);
        const int r = 1 + rng.uniform_int(k);
        AdapterState st = random_state(d_out, d_in, r, 2.0 + rng.uniform() * 20.0, 400 + t);
        st.a = gaussian_matrix(r, k, 1.0, rng);
        const Matrix g = gaussian_matrix(d_out, d_in, 1.0, rng);
        const Matrix ga = grad_a(st, g);
        const double h = 1e-6;
        for (int i = 0; i < r; ++i) {
            for (int j = 0; j < k; ++j) {
                AdapterState plus = st, minus = st;
                plus.a(i, j) += h;
                minus.a(i, j) -= h;
                const double fd = (probe(plus, g) - probe(minus, g)) / (2.0 * h);
                CHECK(std::fabs(ga(i, j) - fd) <= 1e-5 * std::max(std::fabs(fd), 1e-2));
                ++checks;
            }
        }
    }
    CHECK(checks > 100);
}

TEST_CASE("grad_a validates the incoming gradient") {
    AdapterState st = random_state(5, 4, 2, 8.0, 500);
    CHECK_THROWS_AS(grad_a(st, Matrix(4, 5)), ContractViolation);
}

TEST_CASE("local_update applies one explicit gradient step") {
    Rng rng(49);
    AdapterState st = random_state(6, 6, 2, 16.0, 600);
    const Matrix g = gaussian_matrix(6, 6, 1.0, rng);
    const double eta = 3e-3;
    const Matrix next = local_update(st, g, eta);
    const Matrix want = sub(st.a, scale(grad_a(st, g), eta));
    CHECK(next == want); // same arithmetic path, so bitwise
}

TEST_CASE("local_update rejects bad step sizes and diverging gradients") {
    AdapterState st = random_state(5, 5, 2, 8.0, 700);
    const Matrix g(5, 5);
    CHECK_THROWS_AS(local_update(st, g, 0.0), ContractViolation);
    CHECK_THROWS_AS(local_update(st, g, -1e-3), ContractViolation);
    Matrix bad(5, 5);
    bad(2, 2) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(local_update(st, bad, 1e-3), DivergenceError);
}

TEST_CASE("updates leave the frozen pieces untouched") {
    Rng rng(50);
    AdapterState st = random_state(7, 5, 2, 10.0, 800);
    const Matrix w0 = st.w0, l = st.l_basis, r = st.r_basis;
    for (int i = 0; i < 5; ++i) {
        const Matrix g = gaussian_matrix(7, 5, 1.0, rng);
        st.a = local_update(st, g, 1e-3);
    }
    CHECK(st.w0 == w0);
    CHECK(st.l_basis == l);
    CHECK(st.r_basis == r);
}
