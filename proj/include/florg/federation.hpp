#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <limits>
#include <vector>

#include "florg/adapter.hpp"
#include "florg/baselines.hpp"
#include "florg/matrix.hpp"
#include "florg/server_core.hpp"
#include "florg/task.hpp"

namespace florg {

struct ExperimentConfig {
    TaskSpec task;
    Scheme scheme = Scheme::florg;
    int n_clients = 20;
    int rounds = 100;
    int r = 4;
    double alpha = 16.0;
    double eta = 5e-5;
    double rho = 0.5; // Dirichlet concentration for the shard split
    double participation_ratio = 1.0;
    int batch_size = 4;
    int local_epochs = 1;
    bool align = true; // orthogonal re-alignment of the server factor
    InitScheme init = InitScheme::semi_orthogonal;
    std::uint64_t seed = 1;
    // optional stopping targets used by the comparison driver ("rounds to
    // target"); NaN disables them
    double target_loss = std::numeric_limits<double>::quiet_NaN();
    double target_accuracy = std::numeric_limits<double>::quiet_NaN();
};

// One CSV row per round. Fields that do not apply to the running scheme are
// NaN; fields that apply and happen to be zero are exact zeros (notably
// agg_error for the Gram pipeline, which is bias-free by construction).
struct RoundMetrics {
    int round = 0;               // 1-based
    double global_loss = 0.0;    // eval loss of the post-aggregation model
    double grad_norm = 0.0;      // ||d loss/d W||_F at that model, eval set
    double agg_error = 0.0;      // factor-averaging product bias
    double gram_preservation_err = 0.0; // relative Gram drift through alignment
    double truncation_loss = 0.0;       // discarded spectral energy
    double delta_proc = 0.0;            // drift of the applied alignment vs optimal
    double lambda_min = 0.0;     // smallest positive eigenvalue of coreᵀcore
    double sigma_min_cross = 0.0;
    double omega = 0.0;          // running step-size margin (see diagnostics)
    long long uplink_params = 0;   // totals over this round's participants
    long long downlink_params = 0;
    double eval_accuracy = 0.0;  // classification only, else NaN
};

// Numerical evaluation of the convergence-bound pieces, one record per
// round. Everything here is an empirical running estimate, not a proof.
struct Theorem2Record {
    int round = 0;
    double lambda_min = 0.0;
    double omega = 0.0;           // 4·eta·min_t lambda_min - eta²/2 - eta/2
    double delta_proc = 0.0;
    double sigma_min_cross = 0.0;
    bool sigma_defined = false;   // sigma_min_cross > 1e-8
    double psi_sq = 0.0;          // running max ||core gradient||_F²
    double c_a = 0.0;             // running max ||A||_F
    double c_a_tilde = 0.0;       // running max ||server factor||_F
    double smoothness = 0.0;      // running max gradient Lipschitz ratio
    // The three bound terms: initial gap / (T·omega), the step-noise terms,
    // and the accumulated alignment-drift term. NaN when omega <= 0.
    double term_initial_gap = 0.0;
    double term_step_noise = 0.0;
    double term_drift = 0.0;
    bool omega_positive = false;
    bool drift_defined = false; // false once a drift contribution needed an
                                // undefined sigma
};

struct CommCost {
    long long uplink = 0;
    long long downlink = 0;
};

// Analytic per-client per-round parameter counts for one adapted layer.
CommCost per_client_comm(Scheme scheme, int d_out, int d_in, int r);

using MetricsSink = std::function<void(const RoundMetrics&)>;

struct RunResult {
    std::vector<RoundMetrics> metrics;
    std::vector<Theorem2Record> diagnostics; // empty for baseline schemes
    double initial_loss = 0.0;
    double initial_accuracy = 0.0; // NaN for recovery tasks
    int rounds_completed = 0;
};

// ======== single-client local pass ========

struct LocalOutcome {
    Matrix a;               // updated core (florg)
    double max_grad_sq = 0; // largest squared gradient norm seen in the pass
    int steps = 0;
};

struct LoraLocalOutcome {
    LoraState state;
    double max_grad_sq = 0;
    int steps = 0;
};

// Mini-batch SGD over the client's shard, local_epochs passes, batch order
// reshuffled per (seed, round, client, epoch). Throws DivergenceError with
// round/client context on non-finite values.
LocalOutcome florg_client_round(const GeneratedTask& task, const std::vector<int>& shard,
                                const AdapterState& base, const Matrix& a_start, double eta,
                                int batch_size, int local_epochs, std::uint64_t seed, int round,
                                int client);

// Same loop for the two-factor schemes. For ffa_lora only b moves.
LoraLocalOutcome lora_client_round(const GeneratedTask& task, const std::vector<int>& shard,
                                   const Matrix& w0_eff, const LoraState& start, Scheme scheme,
                                   double eta, int batch_size, int local_epochs,
                                   std::uint64_t seed, int round, int client);

// ======== experiment driver ========

class ExperimentEngine {
public:
    explicit ExperimentEngine(const ExperimentConfig& cfg);

    RoundMetrics run_round();
    RunResult run(const MetricsSink& sink = {});

    int round() const { return round_; }
    const ExperimentConfig& config() const { return cfg_; }
    const GeneratedTask& task() const { return task_; }
    const std::vector<std::vector<int>>& shards() const { return shards_; }
    double initial_loss() const { return initial_loss_; }

    // introspection (primarily for verification suites)
    const AdapterState& adapter() const { return adapter_; }
    const Matrix& current_core() const { return adapter_.a; }
    const std::vector<Matrix>& last_core_uploads() const { return last_core_uploads_; }
    const std::vector<LoraState>& last_lora_uploads() const { return last_lora_uploads_; }
    const Matrix& last_aggregate() const { return last_q_; }
    const LoraState& lora_global() const { return lora_global_; }
    const Matrix& lora_base_weight() const { return w0_acc_; }
    const std::vector<Matrix>& client_b() const { return client_b_; }
    const std::vector<Theorem2Record>& diagnostics() const { return diagnostics_; }

    // matrices persisted in a checkpoint, name → matrix, scheme-dependent
    std::vector<std::pair<std::string, Matrix>> state_matrices() const;

private:
    RoundMetrics florg_round(const std::vector<int>& participants);
    RoundMetrics lora_round(const std::vector<int>& participants);
    void eval_global(RoundMetrics& m);
    Matrix global_weight() const; // single global model (not fedsa)
    void update_diagnostics(RoundMetrics& m, double tilde_norm);
    double core_lambda_min(const Matrix& a) const;

    ExperimentConfig cfg_;
    GeneratedTask task_;
    std::vector<std::vector<int>> shards_;
    int round_ = 0;

    // florg state
    AdapterState adapter_;
    std::vector<Matrix> last_core_uploads_;
    Matrix last_q_;

    // two-factor state
    LoraState lora_global_;
    std::vector<LoraState> last_lora_uploads_;
    Matrix w0_acc_;
    std::vector<Matrix> client_b_; // fedsa personal factors

    // diagnostics accumulators
    std::vector<Theorem2Record> diagnostics_;
    double initial_loss_ = 0.0;
    double initial_accuracy_ = 0.0;
    double min_lambda_ = std::numeric_limits<double>::infinity();
    double psi_sq_ = 0.0;
    double c_a_ = 0.0;
    double c_a_tilde_ = 0.0;
    double smoothness_ = 0.0;
    double f_star_est_ = std::numeric_limits<double>::infinity();
    double drift_sum_ = 0.0;
    bool drift_defined_ = true;
    Matrix prev_w_;
    Matrix prev_grad_;
    bool have_prev_grad_ = false;
};

RunResult run_experiment(const ExperimentConfig& cfg, const MetricsSink& sink = {});

} // namespace florg
