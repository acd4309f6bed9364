#include "florg/task.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <string>

#include "florg/errors.hpp"
#include "florg/rng.hpp"

namespace florg {

namespace {

void validate_spec(const TaskSpec& spec) {
    if (spec.d_out <= 0 || spec.d_in <= 0) throw ContractViolation("task: non-positive dims");
    if (spec.num_samples < 1) throw ContractViolation("task: num_samples must be >= 1");
    const int k = std::min(spec.d_out, spec.d_in);
    if (spec.true_rank < 0 || spec.true_rank > k) {
        throw ContractViolation("task: true_rank " + std::to_string(spec.true_rank) +
                                " outside [0, " + std::to_string(k) + "]");
    }
    if (!(spec.noise_std >= 0.0) || !std::isfinite(spec.noise_std)) {
        throw ContractViolation("task: noise_std must be finite and >= 0");
    }
    if (spec.kind == TaskKind::softmax_classify) {
        if (spec.num_classes < 2) {
            throw ContractViolation("task: softmax_classify needs num_classes >= 2");
        }
        if (spec.num_classes != spec.d_out) {
            throw ContractViolation("task: softmax_classify requires d_out == num_classes");
        }
    } else if (spec.num_classes < 1) {
        throw ContractViolation("task: num_classes must be >= 1");
    }
}

// Column-wise softmax probabilities for one sample's logits.
std::vector<double> softmax(const std::vector<double>& logits) {
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    std::vector<double> p(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        z += p[i];
    }
    for (double& v : p) v /= z;
    return p;
}

std::vector<double> column_logits(const Matrix& w, const Matrix& features, int col) {
    std::vector<double> out(w.rows(), 0.0);
    for (int i = 0; i < w.rows(); ++i) {
        double acc = 0.0;
        for (int j = 0; j < w.cols(); ++j) acc += w(i, j) * features(j, col);
        out[i] = acc;
    }
    return out;
}

Dataset draw_dataset(const TaskSpec& spec, const Matrix& w_target,
                     const std::vector<Matrix>& cluster_means, int count, std::uint64_t seed) {
    Dataset ds;
    ds.features = Matrix(spec.d_in, count);
    ds.labels.assign(count, 0);
    Rng rng(seed);

    if (spec.kind == TaskKind::matrix_recovery) {
        const int clusters = std::max(spec.num_classes, 1);
        for (int s = 0; s < count; ++s) {
            const int c = s % clusters;
            ds.labels[s] = c;
            for (int j = 0; j < spec.d_in; ++j) {
                double x = rng.normal();
                if (clusters > 1) x += cluster_means[c](j, 0);
                ds.features(j, s) = x;
            }
        }
        ds.targets = Matrix(spec.d_out, count);
        for (int s = 0; s < count; ++s) {
            for (int i = 0; i < spec.d_out; ++i) {
                double acc = 0.0;
                for (int j = 0; j < spec.d_in; ++j) acc += w_target(i, j) * ds.features(j, s);
                if (spec.noise_std > 0.0) acc += spec.noise_std * rng.normal();
                ds.targets(i, s) = acc;
            }
        }
    } else {
        for (int s = 0; s < count; ++s) {
            for (int j = 0; j < spec.d_in; ++j) ds.features(j, s) = rng.normal();
        }
        for (int s = 0; s < count; ++s) {
            std::vector<double> logits = column_logits(w_target, ds.features, s);
            if (spec.noise_std > 0.0) {
                for (double& v : logits) v += spec.noise_std * rng.normal();
            }
            int arg = 0;
            for (int c = 1; c < spec.num_classes; ++c) {
                if (logits[c] > logits[arg]) arg = c;
            }
            ds.labels[s] = arg;
        }
    }
    return ds;
}

std::vector<int> full_index(const Dataset& data) {
    std::vector<int> idx(data.count());
    std::iota(idx.begin(), idx.end(), 0);
    return idx;
}

} // namespace

GeneratedTask generate_task(const TaskSpec& spec, const AdapterConfig& basis_cfg,
                            std::uint64_t basis_seed) {
    validate_spec(spec);
    if (basis_cfg.d_out != spec.d_out || basis_cfg.d_in != spec.d_in) {
        throw ContractViolation("generate_task: basis config dims do not match the task");
    }
    const int k = std::min(spec.d_out, spec.d_in);

    GeneratedTask task;
    task.spec = spec;

    Rng w0_rng(derive_seed(spec.seed, seed_stream::task_gen, 0));
    task.w0 = gaussian_matrix(spec.d_out, spec.d_in, 1.0 / std::sqrt(spec.d_in), w0_rng);

    // Plant through the same bases the adapter will be given, so the
    // optimum lies inside the trainable family. Rank 0 plants nothing.
    if (spec.true_rank == 0) {
        task.w_target = task.w0;
    } else {
        AdapterState bases = init_adapter(basis_cfg, task.w0, basis_seed);
        Rng core_rng(derive_seed(spec.seed, seed_stream::task_gen, 1));
        Matrix m0 = gaussian_matrix(spec.true_rank, k, 1.0 / std::sqrt(k), core_rng);
        const double sc = basis_cfg.alpha / basis_cfg.r;
        task.w_target =
            add(task.w0, scale(matmul(matmul(bases.l_basis, gram(m0)), bases.r_basis), sc));
    }

    std::vector<Matrix> cluster_means;
    if (spec.kind == TaskKind::matrix_recovery && spec.num_classes > 1) {
        Rng mean_rng(derive_seed(spec.seed, seed_stream::task_gen, 2));
        for (int c = 0; c < spec.num_classes; ++c) {
            cluster_means.push_back(gaussian_matrix(spec.d_in, 1, 1.0, mean_rng));
        }
    }

    const int eval_count = std::max(32, spec.num_samples / 4);
    task.train = draw_dataset(spec, task.w_target, cluster_means, spec.num_samples,
                              derive_seed(spec.seed, seed_stream::task_gen, 3));
    task.eval = draw_dataset(spec, task.w_target, cluster_means, eval_count,
                             derive_seed(spec.seed, seed_stream::eval_split, 0));
    return task;
}

double task_loss(const GeneratedTask& task, const Matrix& w, const Dataset& data,
                 const std::vector<int>& idx) {
    const std::vector<int> all = idx.empty() ? full_index(data) : idx;
    const double inv = 1.0 / static_cast<double>(all.size());
    double loss = 0.0;
    if (task.spec.kind == TaskKind::matrix_recovery) {
        for (int s : all) {
            for (int i = 0; i < w.rows(); ++i) {
                double acc = 0.0;
                for (int j = 0; j < w.cols(); ++j) acc += w(i, j) * data.features(j, s);
                const double d = acc - data.targets(i, s);
                loss += 0.5 * d * d;
            }
        }
    } else {
        for (int s : all) {
            const std::vector<double> p = softmax(column_logits(w, data.features, s));
            const double prob = std::max(p[data.labels[s]], 1e-300);
            loss -= std::log(prob);
        }
    }
    return loss * inv;
}

Matrix task_grad(const GeneratedTask& task, const Matrix& w, const Dataset& data,
                 const std::vector<int>& idx) {
    const std::vector<int> all = idx.empty() ? full_index(data) : idx;
    const double inv = 1.0 / static_cast<double>(all.size());
    Matrix g(w.rows(), w.cols());
    if (task.spec.kind == TaskKind::matrix_recovery) {
        for (int s : all) {
            for (int i = 0; i < w.rows(); ++i) {
                double acc = 0.0;
                for (int j = 0; j < w.cols(); ++j) acc += w(i, j) * data.features(j, s);
                const double resid = acc - data.targets(i, s);
                for (int j = 0; j < w.cols(); ++j) g(i, j) += resid * data.features(j, s);
            }
        }
    } else {
        for (int s : all) {
            std::vector<double> p = softmax(column_logits(w, data.features, s));
            p[data.labels[s]] -= 1.0;
            for (int i = 0; i < w.rows(); ++i) {
                if (p[i] == 0.0) continue;
                for (int j = 0; j < w.cols(); ++j) g(i, j) += p[i] * data.features(j, s);
            }
        }
    }
    return scale(g, inv);
}

double task_accuracy(const GeneratedTask& task, const Matrix& w, const Dataset& data) {
    if (task.spec.kind != TaskKind::softmax_classify) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    int correct = 0;
    for (int s = 0; s < data.count(); ++s) {
        const std::vector<double> logits = column_logits(w, data.features, s);
        int arg = 0;
        for (int c = 1; c < static_cast<int>(logits.size()); ++c) {
            if (logits[c] > logits[arg]) arg = c;
        }
        if (arg == data.labels[s]) ++correct;
    }
    return static_cast<double>(correct) / std::max(data.count(), 1);
}

std::vector<std::vector<int>> dirichlet_partition(const std::vector<int>& labels, int n_clients,
                                                  double rho, std::uint64_t seed) {
    if (labels.empty()) throw ContractViolation("dirichlet_partition: no samples");
    if (n_clients < 1) throw ContractViolation("dirichlet_partition: n_clients must be >= 1");
    if (static_cast<int>(labels.size()) < n_clients) {
        throw ContractViolation("dirichlet_partition: fewer samples than clients");
    }
    if (!(rho > 0.0) || !std::isfinite(rho)) {
        throw ContractViolation("dirichlet_partition: rho must be positive and finite");
    }

    // samples per class, classes visited in ascending label order
    std::map<int, std::vector<int>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0) throw ContractViolation("dirichlet_partition: negative label");
        by_class[labels[i]].push_back(static_cast<int>(i));
    }

    std::vector<std::vector<int>> shards;
    for (int attempt = 0; attempt < 100; ++attempt) {
        Rng rng(derive_seed(seed, seed_stream::partition, static_cast<std::uint64_t>(attempt)));
        shards.assign(n_clients, {});
        for (auto& [label, members] : by_class) {
            // Dirichlet draw over clients for this class
            std::vector<double> p(n_clients);
            double total = 0.0;
            for (int c = 0; c < n_clients; ++c) {
                p[c] = rng.gamma(rho);
                total += p[c];
            }
            if (total <= 0.0) {
                std::fill(p.begin(), p.end(), 1.0 / n_clients);
            } else {
                for (double& v : p) v /= total;
            }

            // largest-remainder rounding of proportions to counts
            const int m = static_cast<int>(members.size());
            std::vector<int> counts(n_clients);
            std::vector<std::pair<double, int>> rema(n_clients);
            int assigned = 0;
            for (int c = 0; c < n_clients; ++c) {
                const double want = p[c] * m;
                counts[c] = static_cast<int>(std::floor(want));
                assigned += counts[c];
                rema[c] = {want - counts[c], c};
            }
            std::stable_sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
                if (a.first != b.first) return a.first > b.first;
                return a.second < b.second;
            });
            for (int extra = 0; extra < m - assigned; ++extra) {
                counts[rema[extra % n_clients].second] += 1;
            }

            std::vector<int> order = shuffled_indices(m, rng);
            int cursor = 0;
            for (int c = 0; c < n_clients; ++c) {
                for (int t = 0; t < counts[c]; ++t) {
                    shards[c].push_back(members[order[cursor++]]);
                }
            }
        }
        bool all_nonempty = true;
        for (const auto& s : shards) {
            if (s.empty()) {
                all_nonempty = false;
                break;
            }
        }
        if (all_nonempty) break;
        if (attempt == 99) {
            // give up on resampling: move samples out of the largest shards
            for (int c = 0; c < n_clients; ++c) {
                if (!shards[c].empty()) continue;
                int donor = 0;
                for (int d = 1; d < n_clients; ++d) {
                    if (shards[d].size() > shards[donor].size()) donor = d;
                }
                if (shards[donor].size() <= 1) {
                    throw std::runtime_error("dirichlet_partition: cannot fill empty shard");
                }
                shards[c].push_back(shards[donor].back());
                shards[donor].pop_back();
            }
        }
    }
    for (auto& s : shards) std::sort(s.begin(), s.end());
    return shards;
}

} // namespace florg
