#include "florg/federation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "florg/errors.hpp"
#include "florg/linalg.hpp"
#include "florg/rng.hpp"

namespace florg {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

// factor-norm ceiling for divergence detection; !(x < bound) also nets NaN
constexpr double kBlowupNorm = 1e50;

// one sub-stream per (round, client, epoch) for batch shuffling
std::uint64_t shuffle_index(int round, int client, int epoch) {
    return (static_cast<std::uint64_t>(round) << 40) ^
           (static_cast<std::uint64_t>(client) << 20) ^ static_cast<std::uint64_t>(epoch);
}

std::vector<int> batch_slice(const std::vector<int>& shard, const std::vector<int>& order,
                             int start, int batch_size) {
    std::vector<int> batch;
    const int stop = std::min<int>(start + batch_size, static_cast<int>(shard.size()));
    batch.reserve(stop - start);
    for (int i = start; i < stop; ++i) batch.push_back(shard[order[i]]);
    return batch;
}

void validate_experiment(const ExperimentConfig& cfg) {
    if (cfg.n_clients < 1) throw ContractViolation("experiment: n_clients must be >= 1");
    if (cfg.rounds < 1) throw ContractViolation("experiment: rounds must be >= 1");
    if (cfg.batch_size < 1) throw ContractViolation("experiment: batch_size must be >= 1");
    if (cfg.local_epochs < 1) throw ContractViolation("experiment: local_epochs must be >= 1");
    if (cfg.eta < 0.0 || !std::isfinite(cfg.eta)) {
        throw ContractViolation("experiment: eta must be finite and >= 0");
    }
    if (!(cfg.participation_ratio > 0.0) || cfg.participation_ratio > 1.0) {
        throw ContractViolation("experiment: participation_ratio must be in (0, 1]");
    }
    if (cfg.task.num_samples < cfg.n_clients) {
        throw ContractViolation("experiment: fewer samples than clients");
    }
}

} // namespace

CommCost per_client_comm(Scheme scheme, int d_out, int d_in, int r) {
    const long long lo = d_out, li = d_in, lr = r;
    const long long k = std::min(lo, li);
    switch (scheme) {
        case Scheme::florg:
            return {lr * k, lr * k};
        case Scheme::fedit:
        case Scheme::federa:
            return {lr * (lo + li), lr * (lo + li)};
        case Scheme::ffa_lora:
            return {lr * lo, lr * lo};
        case Scheme::fedsa_lora:
            return {lr * li, lr * li};
        case Scheme::fedex_lora:
            return {lr * (lo + li), lr * (lo + li) + lo * li};
    }
    throw ContractViolation("per_client_comm: unknown scheme");
}

LocalOutcome florg_client_round(const GeneratedTask& task, const std::vector<int>& shard,
                                const AdapterState& base, const Matrix& a_start, double eta,
                                int batch_size, int local_epochs, std::uint64_t seed, int round,
                                int client) {
    if (shard.empty()) throw ContractViolation("client_round: empty shard");
    AdapterState work = base;
    work.a = a_start;
    LocalOutcome out;
    try {
        for (int epoch = 0; epoch < local_epochs; ++epoch) {
            Rng rng(derive_seed(seed, seed_stream::batch_shuffle,
                                shuffle_index(round, client, epoch)));
            const std::vector<int> order = shuffled_indices(static_cast<int>(shard.size()), rng);
            for (int start = 0; start < static_cast<int>(shard.size()); start += batch_size) {
                const std::vector<int> batch = batch_slice(shard, order, start, batch_size);
                const Matrix w = effective_weight(work);
                const Matrix g_full = task_grad(task, w, task.train, batch);
                const Matrix g_core = grad_a(work, g_full);
                const double gn = frobenius_norm(g_core);
                out.max_grad_sq = std::max(out.max_grad_sq, gn * gn);
                // eta 0 is the null-update diagnostic case; the step op
                // itself insists on a positive rate
                if (eta > 0.0) work.a = local_update(work, g_full, eta);
                // trip well below the overflow ceiling so the next batch of
                // products (quartic in the factor) stays representable
                if (!(frobenius_norm(work.a) < kBlowupNorm)) {
                    throw DivergenceError("core factor diverged", round, client);
                }
                ++out.steps;
            }
        }
    } catch (const DivergenceError& e) {
        throw DivergenceError(std::string(e.what()) + " (round " + std::to_string(round) +
                                  ", client " + std::to_string(client) + ")",
                              round, client);
    }
    out.a = std::move(work.a);
    return out;
}

LoraLocalOutcome lora_client_round(const GeneratedTask& task, const std::vector<int>& shard,
                                   const Matrix& w0_eff, const LoraState& start, Scheme scheme,
                                   double eta, int batch_size, int local_epochs,
                                   std::uint64_t seed, int round, int client) {
    if (shard.empty()) throw ContractViolation("client_round: empty shard");
    LoraLocalOutcome out;
    out.state = start;
    for (int epoch = 0; epoch < local_epochs; ++epoch) {
        Rng rng(derive_seed(seed, seed_stream::batch_shuffle, shuffle_index(round, client, epoch)));
        const std::vector<int> order = shuffled_indices(static_cast<int>(shard.size()), rng);
        for (int bstart = 0; bstart < static_cast<int>(shard.size()); bstart += batch_size) {
            const std::vector<int> batch = batch_slice(shard, order, bstart, batch_size);
            const Matrix w = add(w0_eff, lora_delta(out.state));
            const Matrix g_full = task_grad(task, w, task.train, batch);
            const LoraGrads lg = lora_grads(out.state, g_full);
            double gsq = frobenius_norm(lg.gb);
            gsq *= gsq;
            out.state.b = sub(out.state.b, scale(lg.gb, eta));
            if (scheme != Scheme::ffa_lora) {
                const double gna = frobenius_norm(lg.ga);
                gsq += gna * gna;
                out.state.a = sub(out.state.a, scale(lg.ga, eta));
            }
            out.max_grad_sq = std::max(out.max_grad_sq, gsq);
            if (!(frobenius_norm(out.state.b) < kBlowupNorm) ||
                !(frobenius_norm(out.state.a) < kBlowupNorm)) {
                throw DivergenceError("local factors diverged (round " + std::to_string(round) +
                                          ", client " + std::to_string(client) + ")",
                                      round, client);
            }
            ++out.steps;
        }
    }
    return out;
}

// ======== ExperimentEngine ========

ExperimentEngine::ExperimentEngine(const ExperimentConfig& cfg) : cfg_(cfg) {
    validate_experiment(cfg_);
    cfg_.task.seed = cfg_.seed; // one seed drives the task, bases and schedule
    AdapterConfig acfg{cfg_.task.d_out, cfg_.task.d_in, cfg_.r, cfg_.alpha, cfg_.init};
    task_ = generate_task(cfg_.task, acfg, cfg_.seed);
    shards_ = dirichlet_partition(task_.train.labels, cfg_.n_clients, cfg_.rho, cfg_.seed);

    if (cfg_.scheme == Scheme::florg) {
        adapter_ = init_adapter(acfg, task_.w0, cfg_.seed);
        min_lambda_ = core_lambda_min(adapter_.a);
        c_a_ = frobenius_norm(adapter_.a);
        const Matrix w1 = global_weight();
        initial_loss_ = task_loss(task_, w1, task_.eval, {});
        initial_accuracy_ = task_accuracy(task_, w1, task_.eval);
        prev_w_ = w1;
        prev_grad_ = task_grad(task_, w1, task_.eval, {});
        have_prev_grad_ = true;
    } else {
        lora_global_ = lora_init(cfg_.task.d_out, cfg_.task.d_in, cfg_.r, cfg_.alpha, cfg_.seed);
        w0_acc_ = task_.w0;
        if (cfg_.scheme == Scheme::fedsa_lora) {
            client_b_.assign(cfg_.n_clients, lora_global_.b);
        }
        const Matrix w1 = add(w0_acc_, lora_delta(lora_global_));
        initial_loss_ = task_loss(task_, w1, task_.eval, {});
        initial_accuracy_ = task_accuracy(task_, w1, task_.eval);
    }
    f_star_est_ = initial_loss_;
}

double ExperimentEngine::core_lambda_min(const Matrix& a) const {
    // spectrum of the small-side Gram (same nonzero eigenvalues as the
    // k-side one); smallest positive eigenvalue above 1e-10·trace
    const Matrix g = gram(transpose(a));
    EigenPair eig = sym_eig(g, 1e-10 * std::max(trace(g), 0.0));
    double lam = 0.0;
    for (double v : eig.values) {
        if (v > 0.0) lam = v; // descending order: last positive wins
    }
    return lam;
}

Matrix ExperimentEngine::global_weight() const {
    if (cfg_.scheme == Scheme::florg) return effective_weight(adapter_);
    if (cfg_.scheme == Scheme::fedsa_lora) {
        throw ContractViolation("global_weight: fedsa has per-client models");
    }
    return add(w0_acc_, lora_delta(lora_global_));
}

void ExperimentEngine::eval_global(RoundMetrics& m) {
    if (cfg_.scheme == Scheme::fedsa_lora) {
        // personalised evaluation: each client's own b with the shared a
        double loss = 0.0, acc = 0.0, gn = 0.0;
        for (int c = 0; c < cfg_.n_clients; ++c) {
            LoraState st = lora_global_;
            st.b = client_b_[c];
            const Matrix w = add(w0_acc_, lora_delta(st));
            loss += task_loss(task_, w, task_.eval, {});
            gn += frobenius_norm(task_grad(task_, w, task_.eval, {}));
            const double a = task_accuracy(task_, w, task_.eval);
            acc += std::isnan(a) ? 0.0 : a;
        }
        m.global_loss = loss / cfg_.n_clients;
        m.grad_norm = gn / cfg_.n_clients;
        m.eval_accuracy = (task_.spec.kind == TaskKind::softmax_classify)
                              ? acc / cfg_.n_clients
                              : kNan;
    } else {
        const Matrix w = global_weight();
        const Matrix g = task_grad(task_, w, task_.eval, {});
        m.global_loss = task_loss(task_, w, task_.eval, {});
        m.grad_norm = frobenius_norm(g);
        m.eval_accuracy = task_accuracy(task_, w, task_.eval);
        if (cfg_.scheme == Scheme::florg && have_prev_grad_) {
            const double dw = frobenius_dist(w, prev_w_);
            if (dw > 1e-15) {
                smoothness_ = std::max(smoothness_, frobenius_dist(g, prev_grad_) / dw);
            }
            prev_w_ = w;
            prev_grad_ = g;
        }
    }
    if (!std::isfinite(m.global_loss)) {
        throw DivergenceError("global loss diverged at round " + std::to_string(round_), round_);
    }
}

void ExperimentEngine::update_diagnostics(RoundMetrics& m, double tilde_norm) {
    c_a_ = std::max(c_a_, frobenius_norm(adapter_.a));
    c_a_tilde_ = std::max(c_a_tilde_, tilde_norm);
    min_lambda_ = std::min(min_lambda_, m.lambda_min);
    const double eta = cfg_.eta;
    const double omega = 4.0 * eta * min_lambda_ - 0.5 * eta * eta - 0.5 * eta;
    m.omega = omega;
    f_star_est_ = std::min(f_star_est_, m.global_loss);

    if (m.delta_proc != 0.0) {
        if (m.sigma_min_cross > 1e-8) {
            drift_sum_ += 2.0 * eta * psi_sq_ * c_a_tilde_ * c_a_tilde_ * m.delta_proc /
                          (cfg_.n_clients * m.sigma_min_cross);
        } else {
            drift_defined_ = false;
        }
    }

    Theorem2Record rec;
    rec.round = round_;
    rec.lambda_min = m.lambda_min;
    rec.omega = omega;
    rec.delta_proc = m.delta_proc;
    rec.sigma_min_cross = m.sigma_min_cross;
    rec.sigma_defined = m.sigma_min_cross > 1e-8;
    rec.psi_sq = psi_sq_;
    rec.c_a = c_a_;
    rec.c_a_tilde = c_a_tilde_;
    rec.smoothness = smoothness_;
    rec.omega_positive = omega > 0.0;
    rec.drift_defined = drift_defined_;
    const double t = static_cast<double>(round_);
    if (omega > 0.0) {
        rec.term_initial_gap = (initial_loss_ - f_star_est_) / (t * omega);
        rec.term_step_noise =
            eta * eta * psi_sq_ * psi_sq_ / (2.0 * omega) +
            3.0 * smoothness_ * eta * eta * psi_sq_ *
                (eta * eta * psi_sq_ + 2.0 * c_a_ * c_a_) / (2.0 * omega);
        rec.term_drift = drift_defined_ ? drift_sum_ / (t * omega) : kNan;
    } else {
        rec.term_initial_gap = kNan;
        rec.term_step_noise = kNan;
        rec.term_drift = kNan;
    }
    diagnostics_.push_back(rec);
}

RoundMetrics ExperimentEngine::florg_round(const std::vector<int>& participants) {
    last_core_uploads_.clear();
    for (int c : participants) {
        LocalOutcome out = florg_client_round(task_, shards_[c], adapter_, adapter_.a, cfg_.eta,
                                              cfg_.batch_size, cfg_.local_epochs, cfg_.seed,
                                              round_, c);
        psi_sq_ = std::max(psi_sq_, out.max_grad_sq);
        last_core_uploads_.push_back(std::move(out.a));
    }

    GramAggregate agg = aggregate_gram(last_core_uploads_,
                                       uniform_weights(static_cast<int>(participants.size())));
    last_q_ = agg.q;
    CanonicalFactor factor = decompose(agg);
    CanonicalFactor trunc = truncate_factor(factor, cfg_.r);
    ProcrustesResult res = procrustes_align(adapter_.a, trunc);

    RoundMetrics m;
    m.round = round_;
    if (cfg_.align) {
        adapter_.a = apply_alignment(res, trunc);
        m.delta_proc = 0.0;
    } else {
        // trivial row embedding stands in for the skipped alignment
        Matrix s_triv(cfg_.r, trunc.a_tilde.rows());
        for (int i = 0; i < trunc.a_tilde.rows(); ++i) s_triv(i, i) = 1.0;
        double drift = alignment_drift(s_triv, adapter_.a, trunc, res);
        if (drift < 0.0 && drift > -1e-9 * std::max(1.0, res.residual)) drift = 0.0;
        adapter_.a = pad_factor_rows(trunc, cfg_.r);
        m.delta_proc = drift;
    }

    const Matrix q_trunc = gram(trunc.a_tilde);
    m.gram_preservation_err =
        frobenius_dist(gram(adapter_.a), q_trunc) / std::max(frobenius_norm(q_trunc), 1e-300);
    m.agg_error = 0.0; // Gram aggregation is linear: no factor-product bias
    m.truncation_loss = trunc.truncation_loss;
    m.sigma_min_cross = res.sigma_min_cross;
    m.lambda_min = core_lambda_min(adapter_.a);

    const CommCost cc = per_client_comm(Scheme::florg, cfg_.task.d_out, cfg_.task.d_in, cfg_.r);
    m.uplink_params = cc.uplink * static_cast<long long>(participants.size());
    m.downlink_params = cc.downlink * static_cast<long long>(participants.size());

    eval_global(m);
    update_diagnostics(m, frobenius_norm(trunc.a_tilde));
    return m;
}

RoundMetrics ExperimentEngine::lora_round(const std::vector<int>& participants) {
    last_lora_uploads_.clear();
    for (int c : participants) {
        LoraState start = lora_global_;
        if (cfg_.scheme == Scheme::fedsa_lora) start.b = client_b_[c];
        LoraLocalOutcome out =
            lora_client_round(task_, shards_[c], w0_acc_, start, cfg_.scheme, cfg_.eta,
                              cfg_.batch_size, cfg_.local_epochs, cfg_.seed, round_, c);
        psi_sq_ = std::max(psi_sq_, out.max_grad_sq);
        if (cfg_.scheme == Scheme::fedsa_lora) client_b_[c] = out.state.b;
        last_lora_uploads_.push_back(std::move(out.state));
    }

    RoundMetrics m;
    m.round = round_;
    m.agg_error = aggregation_error(last_lora_uploads_);
    m.truncation_loss = 0.0;
    switch (cfg_.scheme) {
        case Scheme::fedit:
            lora_global_ = fedit_aggregate(last_lora_uploads_);
            break;
        case Scheme::federa: {
            FederaAggregate fa = federa_aggregate(last_lora_uploads_);
            lora_global_ = fa.state;
            m.truncation_loss = fa.truncation_loss;
            break;
        }
        case Scheme::ffa_lora:
            lora_global_.b = ffa_aggregate_b(last_lora_uploads_);
            break;
        case Scheme::fedsa_lora:
            lora_global_.a = fedsa_aggregate_a(last_lora_uploads_);
            break;
        case Scheme::fedex_lora: {
            FedexAggregate fe = fedex_aggregate(last_lora_uploads_);
            lora_global_ = fe.state;
            w0_acc_ = add(w0_acc_, scale(fe.residual, cfg_.alpha / cfg_.r));
            break;
        }
        case Scheme::florg:
            throw ContractViolation("lora_round: wrong scheme");
    }

    m.gram_preservation_err = kNan;
    m.delta_proc = kNan;
    m.lambda_min = kNan;
    m.sigma_min_cross = kNan;
    m.omega = kNan;

    const CommCost cc = per_client_comm(cfg_.scheme, cfg_.task.d_out, cfg_.task.d_in, cfg_.r);
    m.uplink_params = cc.uplink * static_cast<long long>(participants.size());
    m.downlink_params = cc.downlink * static_cast<long long>(participants.size());

    eval_global(m);
    return m;
}

RoundMetrics ExperimentEngine::run_round() {
    ++round_;
    const int n = cfg_.n_clients;
    int take = static_cast<int>(std::ceil(cfg_.participation_ratio * n));
    take = std::max(1, std::min(take, n));
    Rng rng(derive_seed(cfg_.seed, seed_stream::participation, static_cast<std::uint64_t>(round_)));
    const std::vector<int> participants = sample_without_replacement(n, take, rng);

    if (cfg_.scheme == Scheme::florg) return florg_round(participants);
    return lora_round(participants);
}

RunResult ExperimentEngine::run(const MetricsSink& sink) {
    RunResult res;
    res.initial_loss = initial_loss_;
    res.initial_accuracy = initial_accuracy_;
    while (round_ < cfg_.rounds) {
        RoundMetrics m = run_round();
        if (sink) sink(m);
        res.metrics.push_back(m);
    }
    res.diagnostics = diagnostics_;
    res.rounds_completed = round_;
    return res;
}

std::vector<std::pair<std::string, Matrix>> ExperimentEngine::state_matrices() const {
    std::vector<std::pair<std::string, Matrix>> out;
    if (cfg_.scheme == Scheme::florg) {
        out.emplace_back("w0", adapter_.w0);
        out.emplace_back("l_basis", adapter_.l_basis);
        out.emplace_back("r_basis", adapter_.r_basis);
        out.emplace_back("core_a", adapter_.a);
    } else {
        out.emplace_back("w0_base", w0_acc_);
        out.emplace_back("factor_b", lora_global_.b);
        out.emplace_back("factor_a", lora_global_.a);
        if (cfg_.scheme == Scheme::fedsa_lora) {
            for (int c = 0; c < cfg_.n_clients; ++c) {
                char name[32];
                std::snprintf(name, sizeof(name), "client_b_%04d", c);
                out.emplace_back(name, client_b_[c]);
            }
        }
    }
    return out;
}

RunResult run_experiment(const ExperimentConfig& cfg, const MetricsSink& sink) {
    ExperimentEngine engine(cfg);
    return engine.run(sink);
}

} // namespace florg
