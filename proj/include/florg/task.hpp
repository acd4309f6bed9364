#pragma once

#include <cstdint>
#include <vector>

#include "florg/adapter.hpp"
#include "florg/matrix.hpp"

namespace florg {

enum class TaskKind {
    matrix_recovery,  // quadratic: fit a planted weight through linear measurements
    softmax_classify, // cross-entropy on labels generated by a planted weight
};

struct TaskSpec {
    TaskKind kind = TaskKind::matrix_recovery;
    int d_out = 32;
    int d_in = 32;
    int num_samples = 256;
    int true_rank = 2;       // rank of the planted core perturbation
    double noise_std = 0.0;  // target noise (recovery) / logit noise (classify)
    int num_classes = 1;     // classify: label count; recovery: feature clusters
    std::uint64_t seed = 1;
};

// Samples live in columns: features is d_in×m, targets d_out×m (recovery
// only). labels drive partitioning for both kinds; for recovery they are the
// feature-cluster ids (all zero when num_classes <= 1).
struct Dataset {
    Matrix features;
    Matrix targets;
    std::vector<int> labels;

    int count() const { return features.cols(); }
};

// A generated task plants w_target = w0 + (alpha/r)·L·m0ᵀm0·R using the same
// frozen bases the experiment's adapter will draw from basis_seed, so the
// optimum is exactly representable whenever r >= true_rank.
struct GeneratedTask {
    TaskSpec spec;
    Matrix w0;
    Matrix w_target;
    Dataset train;
    Dataset eval;
};

// basis_cfg supplies (r, alpha, init) for the plant; basis_seed must equal
// the seed later passed to init_adapter so both sides share L and R.
GeneratedTask generate_task(const TaskSpec& spec, const AdapterConfig& basis_cfg,
                            std::uint64_t basis_seed);

// Loss/gradient of the task objective at full weight w over the given sample
// indices (empty idx means the whole set). Gradients are with respect to w.
double task_loss(const GeneratedTask& task, const Matrix& w, const Dataset& data,
                 const std::vector<int>& idx);
Matrix task_grad(const GeneratedTask& task, const Matrix& w, const Dataset& data,
                 const std::vector<int>& idx);

// Fraction of correct argmax predictions; only defined for classification
// (returns NaN for recovery tasks).
double task_accuracy(const GeneratedTask& task, const Matrix& w, const Dataset& data);

// Splits sample indices {0..labels.size()-1} across n_clients with
// per-class Dirichlet(rho) proportions. Low rho concentrates classes on few
// clients; very high rho approaches the global label mix everywhere. Resamples
// (up to 100 attempts) until every client has at least one sample, then
// falls back to moving samples from the largest shards.
std::vector<std::vector<int>> dirichlet_partition(const std::vector<int>& labels, int n_clients,
                                                  double rho, std::uint64_t seed);

} // namespace florg
