#include <cmath>
#include <vector>

#include "doctest.h"
#include "florg/baselines.hpp"
#include "florg/errors.hpp"
#include "florg/matrix.hpp"
#include "florg/rng.hpp"
#include "ref_numerics.hpp"

using namespace florg;

namespace {

std::vector<LoraState> random_cohort(int n, int d_out, int d_in, int r, double alpha, Rng& rng) {
    std::vector<LoraState> out;
    for (int i = 0; i < n; ++i) {
        LoraState st;
        st.b = gaussian_matrix(d_out, r, 1.0, rng);
        st.a = gaussian_matrix(r, d_in, 1.0, rng);
        st.alpha = alpha;
        out.push_back(st);
    }
    return out;
}

} // namespace

TEST_CASE("lora_init freezes the first update at zero delta") {
    const LoraState st = lora_init(8, 6, 2, 16.0, 11);
    CHECK(st.b.rows() == 8);
    CHECK(st.b.cols() == 2);
    CHECK(st.a.rows() == 2);
    CHECK(st.a.cols() == 6);
    CHECK(st.r() == 2);
    CHECK(frobenius_norm(st.b) == 0.0);
    CHECK(frobenius_norm(st.a) > 0.0);
    CHECK(frobenius_norm(lora_delta(st)) == 0.0);
    CHECK(lora_init(8, 6, 2, 16.0, 11).a == st.a);
    CHECK_FALSE(lora_init(8, 6, 2, 16.0, 12).a == st.a);
    CHECK_THROWS_AS(lora_init(8, 6, 7, 16.0, 11), ContractViolation);
    CHECK_THROWS_AS(lora_init(8, 6, 2, 0.0, 11), ContractViolation);
}

TEST_CASE("lora_delta matches the scaled product") {
    Rng rng(12);
    for (int t = 0; t < 8; ++t) {
        const LoraState st = random_cohort(1, 5 + t, 7, 3, 9.0, rng)[0];
        const Matrix want = scale(ref::naive_matmul(st.b, st.a), 9.0 / 3.0);
        CHECK(frobenius_dist(lora_delta(st), want) <= 1e-12 * std::max(1.0, frobenius_norm(want)));
    }
}

TEST_CASE("lora_grads passes central finite differences") {
    Rng rng(13);
    int checks = 0;
    for (int t = 0; t < 6; ++t) {
        const int d_out = 3 + rng.uniform_int(4);
        const int d_in = 3 + rng.uniform_int(4);
        const int r = 1 + rng.uniform_int(std::min(d_out, d_in));
        LoraState st = random_cohort(1, d_out, d_in, r, 2.0 + rng.uniform() * 20.0, rng)[0];
        const Matrix g = gaussian_matrix(d_out, d_in, 1.0, rng);
        const LoraGrads lg = lora_grads(st, g);
        // probe functional f = <g, delta(b, a)> so df/d(delta) = g
        const double h = 1e-6;
        for (int i = 0; i < d_out; ++i) {
            for (int j = 0; j < r; ++j) {
                LoraState plus = st, minus = st;
                plus.b(i, j) += h;
                minus.b(i, j) -= h;
                const double fd =
                    (dot(g, lora_delta(plus)) - dot(g, lora_delta(minus))) / (2.0 * h);
                CHECK(std::fabs(lg.gb(i, j) - fd) <= 1e-5 * std::max(std::fabs(fd), 1e-2));
                ++checks;
            }
        }
        for (int i = 0; i < r; ++i) {
            for (int j = 0; j < d_in; ++j) {
                LoraState plus = st, minus = st;
                plus.a(i, j) += h;
                minus.a(i, j) -= h;
                const double fd =
                    (dot(g, lora_delta(plus)) - dot(g, lora_delta(minus))) / (2.0 * h);
                CHECK(std::fabs(lg.ga(i, j) - fd) <= 1e-5 * std::max(std::fabs(fd), 1e-2));
                ++checks;
            }
        }
    }
    CHECK(checks > 100);
    LoraState st = random_cohort(1, 4, 4, 2, 8.0, rng)[0];
    CHECK_THROWS_AS(lora_grads(st, Matrix(3, 4)), ContractViolation);
}

TEST_CASE("mean_product averages the client products") {
    Rng rng(14);
    const std::vector<LoraState> cohort = random_cohort(4, 5, 6, 2, 16.0, rng);
    Matrix want(5, 6);
    for (const LoraState& st : cohort) {
        const Matrix p = ref::naive_matmul(st.b, st.a);
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 6; ++j) want(i, j) += 0.25 * p(i, j);
    }
    CHECK(frobenius_dist(mean_product(cohort), want) <=
          1e-12 * std::max(1.0, frobenius_norm(want)));
}

TEST_CASE("aggregation_error vanishes exactly for identical clients") {
    Rng rng(15);
    const LoraState proto = random_cohort(1, 6, 7, 2, 16.0, rng)[0];
    for (int n : {2, 4}) {
        const std::vector<LoraState> cohort(n, proto);
        CHECK(aggregation_error(cohort) == 0.0);
    }
}

TEST_CASE("aggregation_error vanishes when only one factor varies") {
    Rng rng(16);
    std::vector<LoraState> cohort = random_cohort(3, 6, 7, 2, 16.0, rng);
    // shared a: mean(b_n) * a == mean(b_n * a)
    cohort[1].a = cohort[0].a;
    cohort[2].a = cohort[0].a;
    CHECK(aggregation_error(cohort) <= 1e-12);
}

TEST_CASE("aggregation_error hits the hand-computed value on a crossed pair") {
    // rank-1 clients on orthogonal axes: the mean of products keeps only the
    // diagonal dyads, the product of means spreads mass onto the off-diagonal
    LoraState c1, c2;
    c1.b = Matrix(3, 1, {1, 0, 0});
    c1.a = Matrix(1, 3, {1, 0, 0});
    c2.b = Matrix(3, 1, {0, 1, 0});
    c2.a = Matrix(1, 3, {0, 1, 0});
    c1.alpha = c2.alpha = 4.0;
    // mean(B)mean(A) - mean(BA) has four entries of magnitude 1/4
    CHECK(aggregation_error({c1, c2}) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("fedit_aggregate averages factors elementwise") {
    Rng rng(17);
    const std::vector<LoraState> cohort = random_cohort(3, 4, 5, 2, 8.0, rng);
    const LoraState agg = fedit_aggregate(cohort);
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 2; ++j) {
            const double want = (cohort[0].b(i, j) + cohort[1].b(i, j) + cohort[2].b(i, j)) / 3.0;
            CHECK(agg.b(i, j) == doctest::Approx(want).epsilon(1e-15));
        }
    }
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 5; ++j) {
            const double want = (cohort[0].a(i, j) + cohort[1].a(i, j) + cohort[2].a(i, j)) / 3.0;
            CHECK(agg.a(i, j) == doctest::Approx(want).epsilon(1e-15));
        }
    }
    CHECK(agg.alpha == 8.0);
}

TEST_CASE("cohort validation rejects ragged or disagreeing clients") {
    Rng rng(18);
    std::vector<LoraState> cohort = random_cohort(2, 4, 5, 2, 8.0, rng);
    cohort[1].alpha = 9.0;
    CHECK_THROWS_AS(fedit_aggregate(cohort), ContractViolation);
    cohort[1].alpha = 8.0;
    cohort[1].b = Matrix(5, 2);
    CHECK_THROWS_AS(fedit_aggregate(cohort), ContractViolation);
    CHECK_THROWS_AS(fedit_aggregate({}), ContractViolation);
}

TEST_CASE("federa_aggregate is the best rank-r refactorisation") {
    Rng rng(19);
    const int r = 2;
    const std::vector<LoraState> cohort = random_cohort(4, 6, 7, r, 16.0, rng);
    const Matrix pbar = mean_product(cohort);
    const FederaAggregate fa = federa_aggregate(cohort);

    const Matrix rebuilt = ref::naive_matmul(fa.state.b, fa.state.a);
    const ref::JacobiSvd sv = ref::jacobi_svd(pbar);

    // distance to the mean product equals the dropped singular mass
    double tail = 0.0;
    for (std::size_t i = r; i < sv.sigma.size(); ++i) tail += sv.sigma[i] * sv.sigma[i];
    const double dist = frobenius_dist(rebuilt, pbar);
    CHECK(dist * dist == doctest::Approx(tail).epsilon(1e-8));
    CHECK(fa.truncation_loss == doctest::Approx(tail).epsilon(1e-8));

    // and no random competitor of the same rank beats it
    for (int probe = 0; probe < 25; ++probe) {
        const Matrix cb = gaussian_matrix(6, r, 1.0, rng);
        const Matrix ca = gaussian_matrix(r, 7, 1.0, rng);
        CHECK(frobenius_dist(ref::naive_matmul(cb, ca), pbar) >= dist - 1e-9);
    }
    CHECK(fa.state.alpha == 16.0);
}

TEST_CASE("federa keeps the factor split balanced") {
    Rng rng(20);
    const std::vector<LoraState> cohort = random_cohort(2, 5, 5, 2, 16.0, rng);
    const FederaAggregate fa = federa_aggregate(cohort);
    // b and a carry equal shares: column i of b and row i of a have the same norm
    for (int i = 0; i < 2; ++i) {
        double nb = 0.0, na = 0.0;
        for (int j = 0; j < 5; ++j) {
            nb += fa.state.b(j, i) * fa.state.b(j, i);
            na += fa.state.a(i, j) * fa.state.a(i, j);
        }
        CHECK(std::sqrt(nb) == doctest::Approx(std::sqrt(na)).epsilon(1e-9));
    }
}

TEST_CASE("ffa and fedsa aggregate exactly one factor") {
    Rng rng(21);
    const std::vector<LoraState> cohort = random_cohort(3, 4, 6, 2, 8.0, rng);
    const Matrix b = ffa_aggregate_b(cohort);
    const Matrix a = fedsa_aggregate_a(cohort);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 2; ++j) {
            const double want = (cohort[0].b(i, j) + cohort[1].b(i, j) + cohort[2].b(i, j)) / 3.0;
            CHECK(b(i, j) == doctest::Approx(want).epsilon(1e-15));
        }
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 6; ++j) {
            const double want = (cohort[0].a(i, j) + cohort[1].a(i, j) + cohort[2].a(i, j)) / 3.0;
            CHECK(a(i, j) == doctest::Approx(want).epsilon(1e-15));
        }
}

TEST_CASE("fedex residual makes the aggregate exact") {
    Rng rng(22);
    for (int t = 0; t < 8; ++t) {
        const int n = 2 + rng.uniform_int(4);
        const std::vector<LoraState> cohort = random_cohort(n, 5, 6, 2, 12.0, rng);
        const FedexAggregate fx = fedex_aggregate(cohort);

        // factor part + residual reproduces the true mean of client products
        const Matrix rebuilt =
            add(ref::naive_matmul(fx.state.b, fx.state.a), fx.residual);
        const Matrix want = mean_product(cohort);
        CHECK(frobenius_dist(rebuilt, want) <= 1e-12 * std::max(1.0, frobenius_norm(want)));

        // equivalently: the reconstructed global model equals the mean of
        // client models, which factor averaging alone misses
        const double gap = frobenius_dist(ref::naive_matmul(fx.state.b, fx.state.a), want);
        CHECK(frobenius_norm(fx.residual) == doctest::Approx(gap).epsilon(1e-9));
    }
}
