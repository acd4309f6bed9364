#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "florg/errors.hpp"
#include "florg/matrix.hpp"
#include "florg/rng.hpp"
#include "ref_numerics.hpp"

using namespace florg;

TEST_CASE("matmul matches a naive reference across shapes") {
    Rng rng(101);
    const int shapes[][3] = {{1, 1, 1}, {1, 5, 1}, {3, 1, 4}, {7, 4, 9}, {16, 16, 16}, {5, 12, 3}};
    for (const auto& s : shapes) {
        const Matrix a = gaussian_matrix(s[0], s[1], 1.0, rng);
        const Matrix b = gaussian_matrix(s[1], s[2], 1.0, rng);
        const Matrix got = matmul(a, b);
        const Matrix want = ref::naive_matmul(a, b);
        CHECK(frobenius_dist(got, want) <= 1e-13 * std::max(1.0, frobenius_norm(want)));
    }
}

TEST_CASE("matmul rejects mismatched shapes and non-finite input") {
    const Matrix a(2, 3);
    const Matrix b(4, 2);
    CHECK_THROWS_AS(matmul(a, b), ContractViolation);
    Matrix c(3, 2);
    c(1, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(matmul(a, c), ContractViolation);
}

TEST_CASE("multiplying by the identity is exact") {
    Rng rng(102);
    const Matrix a = gaussian_matrix(6, 9, 3.0, rng);
    CHECK(matmul(Matrix::identity(6), a) == a);
    CHECK(matmul(a, Matrix::identity(9)) == a);
}

TEST_CASE("transpose is an involution and distributes over products") {
    Rng rng(103);
    const Matrix a = gaussian_matrix(5, 8, 1.0, rng);
    const Matrix b = gaussian_matrix(8, 4, 1.0, rng);
    CHECK(transpose(transpose(a)) == a);
    const Matrix lhs = transpose(ref::naive_matmul(a, b));
    const Matrix rhs = ref::naive_matmul(transpose(b), transpose(a));
    CHECK(frobenius_dist(lhs, rhs) <= 1e-13 * std::max(1.0, frobenius_norm(lhs)));
}

TEST_CASE("elementwise operations match plain loops") {
    Rng rng(104);
    const Matrix a = gaussian_matrix(4, 7, 1.0, rng);
    const Matrix b = gaussian_matrix(4, 7, 1.0, rng);
    const Matrix s = add(a, b);
    const Matrix d = sub(a, b);
    const Matrix c = scale(a, -2.5);
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 7; ++j) {
            CHECK(s(i, j) == a(i, j) + b(i, j));
            CHECK(d(i, j) == a(i, j) - b(i, j));
            CHECK(c(i, j) == a(i, j) * -2.5);
        }
    }
    CHECK_THROWS_AS(add(a, Matrix(7, 4)), ContractViolation);
}

TEST_CASE("gram equals the transpose product and is symmetric PSD") {
    Rng rng(105);
    for (int t = 0; t < 10; ++t) {
        const Matrix a = gaussian_matrix(2 + t, 5, 1.0, rng);
        const Matrix g = gram(a);
        CHECK(frobenius_dist(g, ref::naive_gram(a)) <= 1e-13 * std::max(1.0, frobenius_norm(g)));
        for (int i = 0; i < g.rows(); ++i)
            for (int j = 0; j < g.cols(); ++j) CHECK(g(i, j) == doctest::Approx(g(j, i)).epsilon(1e-12));
        // x'Gx = ||Ax||^2 >= 0 for a few probes
        for (int probe = 0; probe < 4; ++probe) {
            const Matrix x = gaussian_matrix(5, 1, 1.0, rng);
            const Matrix gx = matmul(g, x);
            CHECK(dot(x, gx) >= -1e-12 * frobenius_norm(g));
        }
    }
}

TEST_CASE("norms, trace and dot agree with direct sums") {
    Matrix a(2, 3, {1.0, -2.0, 3.0, 0.5, 0.0, -1.5});
    Matrix b(2, 3, {2.0, 1.0, 0.0, -1.0, 4.0, 2.0});
    CHECK(frobenius_norm(a) == doctest::Approx(std::sqrt(1 + 4 + 9 + 0.25 + 0 + 2.25)));
    CHECK(frobenius_dist(a, b) == doctest::Approx(frobenius_norm(sub(a, b))));
    CHECK(max_abs(a) == 3.0);
    CHECK(dot(a, b) == doctest::Approx(1.0 * 2 - 2 + 0 - 0.5 + 0 - 3));
    Matrix sq(3, 3, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    CHECK(trace(sq) == 15.0);
    CHECK_THROWS_AS(trace(a), ContractViolation);
}

TEST_CASE("matrix constructor rejects non-positive dimensions") {
    CHECK_THROWS_AS(Matrix(0, 3), ContractViolation);
    CHECK_THROWS_AS(Matrix(3, -1), ContractViolation);
    CHECK_THROWS_AS(Matrix(2, 2, {1.0, 2.0}), ContractViolation); // wrong payload size
}

TEST_CASE("require_finite flags NaN and infinity") {
    Matrix a(2, 2);
    CHECK(all_finite(a));
    a(0, 1) = std::numeric_limits<double>::infinity();
    CHECK_FALSE(all_finite(a));
    CHECK_THROWS_AS(require_finite(a, "probe"), ContractViolation);
}

TEST_CASE("rng streams are reproducible and seed-sensitive") {
    Rng a(42), b(42), c(43);
    bool all_equal = true, any_diff = false;
    for (int i = 0; i < 64; ++i) {
        const std::uint64_t va = a.next_u64();
        all_equal = all_equal && (va == b.next_u64());
        any_diff = any_diff || (va != c.next_u64());
    }
    CHECK(all_equal);
    CHECK(any_diff);
}

TEST_CASE("uniform draws stay inside [0, 1)") {
    Rng rng(7);
    for (int i = 0; i < 20000; ++i) {
        const double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
}

TEST_CASE("normal draws have the right first two moments") {
    Rng rng(11);
    const int n = 200000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        sum += x;
        sumsq += x * x;
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    CHECK(std::fabs(mean) < 0.012);     // ~5 standard errors
    CHECK(std::fabs(var - 1.0) < 0.02);
}

TEST_CASE("gamma draws match the distribution moments") {
    Rng rng(12);
    const double shape = 3.5;
    const int n = 200000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = rng.gamma(shape);
        CHECK(x >= 0.0);
        sum += x;
        sumsq += x * x;
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    CHECK(std::fabs(mean - shape) < 0.05); // both moments equal the shape
    CHECK(std::fabs(var - shape) < 0.2);
}

TEST_CASE("gamma handles shapes below one") {
    Rng rng(13);
    const int n = 100000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = rng.gamma(0.3);
        CHECK(x >= 0.0);
        sum += x;
    }
    CHECK(std::fabs(sum / n - 0.3) < 0.02);
}

TEST_CASE("uniform_int covers its range roughly evenly") {
    Rng rng(14);
    std::vector<int> hits(10, 0);
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const int v = rng.uniform_int(10);
        REQUIRE(v >= 0);
        REQUIRE(v < 10);
        ++hits[v];
    }
    for (int h : hits) {
        CHECK(h > n / 10 * 0.9);
        CHECK(h < n / 10 * 1.1);
    }
    CHECK(rng.uniform_int(1) == 0);
}

TEST_CASE("derive_seed separates streams and indices") {
    const std::uint64_t base = 99;
    CHECK(derive_seed(base, 1, 0) != derive_seed(base, 2, 0));
    CHECK(derive_seed(base, 1, 0) != derive_seed(base, 1, 1));
    CHECK(derive_seed(base, 1, 5) == derive_seed(base, 1, 5));
    CHECK(derive_seed(base, 1, 0) != derive_seed(base + 1, 1, 0));
}

TEST_CASE("shuffled_indices is a permutation") {
    Rng rng(15);
    for (int n : {1, 2, 17, 64}) {
        std::vector<int> p = shuffled_indices(n, rng);
        std::sort(p.begin(), p.end());
        std::vector<int> want(n);
        std::iota(want.begin(), want.end(), 0);
        CHECK(p == want);
    }
}

TEST_CASE("sample_without_replacement returns sorted distinct values") {
    Rng rng(16);
    for (int t = 0; t < 50; ++t) {
        const int n = 3 + rng.uniform_int(30);
        const int m = 1 + rng.uniform_int(n);
        std::vector<int> s = sample_without_replacement(n, m, rng);
        REQUIRE(static_cast<int>(s.size()) == m);
        CHECK(std::is_sorted(s.begin(), s.end()));
        for (std::size_t i = 0; i < s.size(); ++i) {
            CHECK(s[i] >= 0);
            CHECK(s[i] < n);
            if (i > 0) CHECK(s[i] != s[i - 1]);
        }
    }
    CHECK_THROWS_AS(sample_without_replacement(3, 4, rng), ContractViolation);
}

TEST_CASE("sample_without_replacement is unbiased enough to trust") {
    Rng rng(17);
    std::vector<int> hits(6, 0);
    const int trials = 30000;
    for (int t = 0; t < trials; ++t) {
        for (int v : sample_without_replacement(6, 2, rng)) ++hits[v];
    }
    // each element appears with probability 1/3
    for (int h : hits) {
        CHECK(h > trials / 3 * 0.92);
        CHECK(h < trials / 3 * 1.08);
    }
}

TEST_CASE("gaussian_matrix is deterministic per seed") {
    Rng a(21), b(21);
    const Matrix ma = gaussian_matrix(4, 6, 2.0, a);
    const Matrix mb = gaussian_matrix(4, 6, 2.0, b);
    CHECK(ma == mb);
    Rng c(22);
    CHECK_FALSE(gaussian_matrix(4, 6, 2.0, c) == ma);
}
