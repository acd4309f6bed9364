#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "doctest.h"
#include "florg/errors.hpp"
#include "florg/matrix.hpp"
#include "florg/rng.hpp"
#include "florg/task.hpp"
#include "ref_numerics.hpp"

using namespace florg;

namespace {

AdapterConfig basis_for(const TaskSpec& spec, int r) {
    AdapterConfig cfg;
    cfg.d_out = spec.d_out;
    cfg.d_in = spec.d_in;
    cfg.r = r;
    cfg.alpha = 16.0;
    return cfg;
}

TaskSpec recovery_spec(int d, int samples, int true_rank, std::uint64_t seed) {
    TaskSpec spec;
    spec.kind = TaskKind::matrix_recovery;
    spec.d_out = d;
    spec.d_in = d;
    spec.num_samples = samples;
    spec.true_rank = true_rank;
    spec.seed = seed;
    return spec;
}

double entropy(const std::vector<double>& p) {
    double h = 0.0;
    for (double v : p) {
        if (v > 0.0) h -= v * std::log(v);
    }
    return h;
}

} // namespace

TEST_CASE("generated recovery task plants a perturbation of the stated rank") {
    const TaskSpec spec = recovery_spec(12, 64, 3, 5);
    const GeneratedTask task = generate_task(spec, basis_for(spec, 4), 5);
    const Matrix diff = sub(task.w_target, task.w0);
    const ref::JacobiSvd sv = ref::jacobi_svd(diff);
    CHECK(sv.sigma[2] > 1e-8);
    for (std::size_t i = 3; i < sv.sigma.size(); ++i) {
        CHECK(sv.sigma[i] <= 1e-10 * sv.sigma[0]);
    }
    CHECK(task.train.count() == 64);
    CHECK(task.train.features.rows() == 12);
    CHECK(task.eval.count() >= 16);
}

TEST_CASE("rank zero plants nothing") {
    const TaskSpec spec = recovery_spec(8, 32, 0, 7);
    const GeneratedTask task = generate_task(spec, basis_for(spec, 2), 7);
    CHECK(task.w_target == task.w0);
    CHECK(task_loss(task, task.w0, task.train, {}) == 0.0);
}

TEST_CASE("task generation is deterministic in the seed") {
    const TaskSpec spec = recovery_spec(6, 40, 2, 9);
    const GeneratedTask a = generate_task(spec, basis_for(spec, 2), 9);
    const GeneratedTask b = generate_task(spec, basis_for(spec, 2), 9);
    CHECK(a.w0 == b.w0);
    CHECK(a.w_target == b.w_target);
    CHECK(a.train.features == b.train.features);
    CHECK(a.train.targets == b.train.targets);
    CHECK(a.eval.features == b.eval.features);
    TaskSpec other = spec;
    other.seed = 10;
    CHECK_FALSE(generate_task(other, basis_for(spec, 2), 10).w0 == a.w0);
}

TEST_CASE("noiseless recovery loss follows the closed form") {
    const TaskSpec spec = recovery_spec(7, 48, 2, 11);
    const GeneratedTask task = generate_task(spec, basis_for(spec, 3), 11);

    // at the planted weight the residual is identically zero
    CHECK(task_loss(task, task.w_target, task.train, {}) <= 1e-24);

    // anywhere else it is 1/(2m) ||(w - w*) X||^2
    Rng rng(12);
    const Matrix w = gaussian_matrix(7, 7, 1.0, rng);
    const Matrix resid = ref::naive_matmul(sub(w, task.w_target), task.train.features);
    const double want = 0.5 * std::pow(frobenius_norm(resid), 2) / 48.0;
    CHECK(task_loss(task, w, task.train, {}) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("subset loss only sees the chosen samples") {
    const TaskSpec spec = recovery_spec(5, 20, 1, 13);
    const GeneratedTask task = generate_task(spec, basis_for(spec, 2), 13);
    Rng rng(14);
    const Matrix w = gaussian_matrix(5, 5, 1.0, rng);
    const std::vector<int> idx = {3, 7, 11};
    double want = 0.0;
    for (int s : idx) {
        for (int i = 0; i < 5; ++i) {
            double acc = 0.0;
            for (int j = 0; j < 5; ++j) acc += w(i, j) * task.train.features(j, s);
            const double d = acc - task.train.targets(i, s);
            want += 0.5 * d * d;
        }
    }
    want /= 3.0;
    CHECK(task_loss(task, w, task.train, idx) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("recovery gradient passes finite differences") {
    const TaskSpec spec = recovery_spec(4, 16, 1, 15);
    const GeneratedTask task = generate_task(spec, basis_for(spec, 2), 15);
    Rng rng(16);
    Matrix w = gaussian_matrix(4, 4, 1.0, rng);
    const Matrix g = task_grad(task, w, task.train, {});
    const double h = 1e-6;
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
            Matrix plus = w, minus = w;
            plus(i, j) += h;
            minus(i, j) -= h;
            const double fd = (task_loss(task, plus, task.train, {}) -
                               task_loss(task, minus, task.train, {})) /
                              (2.0 * h);
            CHECK(std::fabs(g(i, j) - fd) <= 1e-5 * std::max(std::fabs(fd), 1e-2));
        }
    }
}

TEST_CASE("classification gradient passes finite differences") {
    TaskSpec spec;
    spec.kind = TaskKind::softmax_classify;
    spec.d_out = 4;
    spec.d_in = 6;
    spec.num_classes = 4;
    spec.num_samples = 24;
    spec.true_rank = 2;
    spec.seed = 17;
    const GeneratedTask task = generate_task(spec, basis_for(spec, 2), 17);
    Rng rng(18);
    Matrix w = gaussian_matrix(4, 6, 0.5, rng);
    const Matrix g = task_grad(task, w, task.train, {});
    const double h = 1e-6;
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 6; ++j) {
            Matrix plus = w, minus = w;
            plus(i, j) += h;
            minus(i, j) -= h;
            const double fd = (task_loss(task, plus, task.train, {}) -
                               task_loss(task, minus, task.train, {})) /
                              (2.0 * h);
            CHECK(std::fabs(g(i, j) - fd) <= 1e-5 * std::max(std::fabs(fd), 1e-2));
        }
    }
}

TEST_CASE("classification labels are realizable by the planted weight") {
    TaskSpec spec;
    spec.kind = TaskKind::softmax_classify;
    spec.d_out = 5;
    spec.d_in = 8;
    spec.num_classes = 5;
    spec.num_samples = 200;
    spec.true_rank = 2;
    spec.seed = 19;
    const GeneratedTask task = generate_task(spec, basis_for(spec, 2), 19);

    for (int lab : task.train.labels) {
        CHECK(lab >= 0);
        CHECK(lab < 5);
    }
    // the planted weight classifies its own labels perfectly without noise
    CHECK(task_accuracy(task, task.w_target, task.train) == 1.0);
    CHECK(task_accuracy(task, task.w_target, task.eval) == 1.0);
    // cross entropy at the plant is low but positive
    const double loss = task_loss(task, task.w_target, task.train, {});
    CHECK(loss > 0.0);

    // a weight with no signal scores near chance
    const double chance = task_accuracy(task, Matrix(5, 8), task.train);
    CHECK(chance < 0.5);
}

TEST_CASE("accuracy is undefined for recovery tasks") {
    const TaskSpec spec = recovery_spec(5, 20, 1, 21);
    const GeneratedTask task = generate_task(spec, basis_for(spec, 2), 21);
    CHECK(std::isnan(task_accuracy(task, task.w0, task.train)));
}

TEST_CASE("target noise lifts the floor of the recovery loss") {
    TaskSpec spec = recovery_spec(10, 4000, 2, 23);
    spec.noise_std = 0.3;
    const GeneratedTask task = generate_task(spec, basis_for(spec, 2), 23);
    const double at_plant = task_loss(task, task.w_target, task.train, {});
    // residual at the plant is pure noise: expect d_out * std^2 / 2
    const double want = 10 * 0.3 * 0.3 / 2.0;
    CHECK(at_plant == doctest::Approx(want).epsilon(0.1));
}

TEST_CASE("task validation rejects malformed specs") {
    TaskSpec spec = recovery_spec(6, 10, 7, 1); // true_rank > min dim
    CHECK_THROWS_AS(generate_task(spec, basis_for(spec, 2), 1), ContractViolation);
    spec = recovery_spec(6, 0, 2, 1);
    CHECK_THROWS_AS(generate_task(spec, basis_for(spec, 2), 1), ContractViolation);
    spec = recovery_spec(6, 10, 2, 1);
    spec.noise_std = -0.1;
    CHECK_THROWS_AS(generate_task(spec, basis_for(spec, 2), 1), ContractViolation);
    spec = recovery_spec(6, 10, 2, 1);
    spec.kind = TaskKind::softmax_classify;
    spec.num_classes = 4; // must match d_out
    CHECK_THROWS_AS(generate_task(spec, basis_for(spec, 2), 1), ContractViolation);
    spec = recovery_spec(8, 10, 2, 1);
    AdapterConfig wrong = basis_for(spec, 2);
    wrong.d_in = 5;
    CHECK_THROWS_AS(generate_task(spec, wrong, 1), ContractViolation);
}

TEST_CASE("dirichlet_partition is a partition") {
    std::vector<int> labels(97);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 4);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto shards = dirichlet_partition(labels, 5, 0.4, seed);
        REQUIRE(shards.size() == 5);
        std::set<int> seen;
        std::size_t total = 0;
        for (const auto& s : shards) {
            CHECK_FALSE(s.empty());
            CHECK(std::is_sorted(s.begin(), s.end()));
            total += s.size();
            for (int v : s) {
                CHECK(v >= 0);
                CHECK(v < 97);
                CHECK(seen.insert(v).second); // no duplicates across shards
            }
        }
        CHECK(total == labels.size());
    }
}

TEST_CASE("dirichlet_partition is deterministic per seed") {
    std::vector<int> labels(60);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 3);
    CHECK(dirichlet_partition(labels, 4, 0.5, 77) == dirichlet_partition(labels, 4, 0.5, 77));
    CHECK_FALSE(dirichlet_partition(labels, 4, 0.5, 77) == dirichlet_partition(labels, 4, 0.5, 78));
}

TEST_CASE("large concentration makes shards mirror the global label mix") {
    std::vector<int> labels(400);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 4);
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto shards = dirichlet_partition(labels, 4, 1e6, seed);
        for (const auto& s : shards) {
            std::map<int, int> counts;
            for (int v : s) ++counts[labels[v]];
            for (auto& [lab, c] : counts) {
                const double frac = static_cast<double>(c) / s.size();
                worst = std::max(worst, std::fabs(frac - 0.25));
            }
        }
    }
    CHECK(worst < 0.02);
}

TEST_CASE("small concentration skews shards harder than a large one") {
    std::vector<int> labels(600);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 6);
    auto mean_entropy = [&](double rho) {
        double acc = 0.0;
        int cnt = 0;
        for (std::uint64_t seed = 0; seed < 15; ++seed) {
            const auto shards = dirichlet_partition(labels, 6, rho, seed);
            for (const auto& s : shards) {
                std::vector<double> p(6, 0.0);
                for (int v : s) p[labels[v]] += 1.0 / s.size();
                acc += entropy(p);
                ++cnt;
            }
        }
        return acc / cnt;
    };
    CHECK(mean_entropy(0.1) < mean_entropy(10.0) - 0.3);
}

TEST_CASE("dirichlet_partition validates its arguments") {
    std::vector<int> labels = {0, 1, 0, 1};
    CHECK_THROWS_AS(dirichlet_partition({}, 2, 0.5, 1), ContractViolation);
    CHECK_THROWS_AS(dirichlet_partition(labels, 0, 0.5, 1), ContractViolation);
    CHECK_THROWS_AS(dirichlet_partition(labels, 5, 0.5, 1), ContractViolation);
    CHECK_THROWS_AS(dirichlet_partition(labels, 2, 0.0, 1), ContractViolation);
    CHECK_THROWS_AS(dirichlet_partition({0, -1, 2}, 2, 0.5, 1), ContractViolation);
}

TEST_CASE("clustered recovery features separate by label") {
    TaskSpec spec = recovery_spec(8, 120, 2, 25);
    spec.num_classes = 3; // cluster count for recovery features
    const GeneratedTask task = generate_task(spec, basis_for(spec, 2), 25);
    // labels cycle through clusters
    for (int s = 0; s < task.train.count(); ++s) CHECK(task.train.labels[s] == s % 3);

    // cluster centroids should be farther apart than within-cluster spread
    std::vector<Matrix> centroids(3, Matrix(8, 1));
    std::vector<int> counts(3, 0);
    for (int s = 0; s < task.train.count(); ++s) {
        const int c = task.train.labels[s];
        for (int j = 0; j < 8; ++j) centroids[c](j, 0) += task.train.features(j, s);
        ++counts[c];
    }
    for (int c = 0; c < 3; ++c) centroids[c] = scale(centroids[c], 1.0 / counts[c]);
    const double d01 = frobenius_dist(centroids[0], centroids[1]);
    const double d02 = frobenius_dist(centroids[0], centroids[2]);
    CHECK(d01 + d02 > 1.0); // distinct means, far beyond sampling error
}
