#pragma once

#include <functional>
#include <string>
#include <utility>

#include "ctfg/ppobaseline.hpp"

namespace ctfg {

// Multinomial logistic regression over flattened feature sequences, fit
// in-repo by full-batch gradient descent with an L2 penalty on the weights.
struct LogRegModel {
    Array w;  // D x C
    Array b;  // 1 x C
    double l2 = 1e-3;
    std::vector<int> classes;  // column <-> class id, ascending
};

// Runs until the full gradient norm drops below tol or max_iters passes.
// Step size by Barzilai-Borwein proposals with a backtracking safeguard.
LogRegModel fit_logreg(const Array& feats, const std::vector<int>& labels, double l2 = 1e-3,
                       double tol = 1e-6, int max_iters = 5000);

// Row-wise class probabilities (rows sum to 1).
Array logreg_probs(const LogRegModel& m, const Array& feats);
std::vector<int> logreg_predict(const LogRegModel& m, const Array& feats);

struct EvalResult {
    double accuracy = 0.0;
    std::vector<int> classes;
    std::vector<std::vector<long>> confusion;  // [true][predicted]
    std::vector<double> precision, recall, f1;
};

EvalResult evaluate(const LogRegModel& m, const Array& feats, const std::vector<int>& labels);

// Deterministic mean-feedback features for a set of windows, flattened
// row-major to steps * token_dim columns.
Array extract_features(const Policy& policy, const std::vector<SensorWindow>& windows,
                       int steps);

enum class Optimizer { grpo, ppo };
std::string optimizer_name(Optimizer o);
Optimizer parse_optimizer(const std::string& s);

struct TransferConfig {
    PolicyConfig policy;
    GrpoConfig grpo;
    GaeConfig gae;
    RewardWeights weights;
    BatchSpec batch;
    AdamConfig policy_adam;                 // lr 1e-4
    AdamConfig proj_adam{1e-2, 0.9, 0.999, 1e-8};
    AdamConfig critic_adam{1e-3, 0.9, 0.999, 1e-8};
    double l2 = 1e-3;
    int probe_interval = 5;  // epochs between accuracy probes; 0 = final only
    long refresh_every = 0;  // reference refresh cadence; 0 = fixed reference

    // optional observer called after every update with the 1-based epoch;
    // used by callers for interval checkpoints
    std::function<void(int, const Policy&, const TmpProjection&, const ValueNet&)> epoch_hook;
};

struct TransferRecord {
    std::string heldout;
    std::uint64_t seed = 0;
    Optimizer optimizer = Optimizer::grpo;
    double accuracy = 0.0;
    EvalResult eval;
    std::vector<std::pair<int, double>> trace;  // (epoch, held-out accuracy)
    std::vector<EpochMetrics> epoch_metrics;    // per-epoch training metrics
    std::vector<double> value_losses;           // ppo only, per epoch
};

// Side artifacts for archiving a run: final parameter snapshots, per-epoch
// per-group reward breakdowns, and wall time per epoch.
struct TransferArtifacts {
    ParamStore policy_params;
    ParamStore proj_params;
    ParamStore critic_params;  // filled for ppo only
    std::vector<std::vector<RewardBreakdown>> epoch_breakdowns;
    std::vector<double> epoch_ms;
};

// Full leave-one-group-out transfer: per-user standardization, group split,
// policy training on the source windows only, deterministic feature
// extraction, source-side classifier fit, held-out evaluation. Held-out
// labels are stripped before training and only rejoined for scoring.
TransferRecord run_transfer(const std::vector<SensorWindow>& raw, const SplitPlan& plan,
                            const std::string& heldout, Optimizer opt,
                            const TransferConfig& cfg, std::uint64_t seed,
                            TransferArtifacts* artifacts = nullptr);

struct ExperimentReport {
    Optimizer optimizer = Optimizer::grpo;
    int tokens = 0;
    std::vector<TransferRecord> records;
    double mean_acc = 0.0;
    double std_acc = 0.0;  // population std over records
    std::vector<int> classes;
    std::vector<double> precision, recall, f1;  // from the summed confusion
};

// Recomputes mean/std and the aggregate per-class metrics from records.
ExperimentReport aggregate_report(Optimizer opt, int tokens,
                                  std::vector<TransferRecord> records);

// Cross product of token counts, optimizers, held-out groups, and seeds;
// one aggregate report per (tokens, optimizer).
std::vector<ExperimentReport> sweep_tokens(const std::vector<SensorWindow>& raw,
                                           const SplitPlan& plan,
                                           const std::vector<int>& token_grid,
                                           const std::vector<Optimizer>& opts,
                                           const std::vector<std::string>& heldouts,
                                           const std::vector<std::uint64_t>& seeds,
                                           const TransferConfig& base);

// Desk-scale cross-user task: per class a distinct base frequency, per user
// an amplitude scale, phase offset, and additive noise.
struct SyntheticTaskSpec {
    int users = 4;
    int classes = 3;
    int channels = 3;
    double sample_rate = 25.0;
    std::vector<double> base_freq = {1.0, 2.0, 3.5};  // one per class, distinct
    double amp_lo = 0.6, amp_hi = 1.4;
    double phase_max = 1.5707963267948966;  // pi/2
    double noise = 0.1;
    int windows_per_cell = 60;
    std::size_t window_len = 75;
    double overlap = 0.5;
};

// One constant-label recording per (user, class); users are 1-based ids.
// Row count is exactly window_len + (windows_per_cell - 1) * stride so the
// windowing pass yields windows_per_cell windows each.
std::vector<Recording> make_synthetic(const SyntheticTaskSpec& spec, Rng& rng);

// make_synthetic -> make_windows with the spec's geometry.
std::vector<SensorWindow> synthetic_windows(const SyntheticTaskSpec& spec, Rng& rng);

// One single-user group per user, named U<id>; held-out defaults to the
// last user.
SplitPlan synthetic_plan(const SyntheticTaskSpec& spec);

// Writes the recordings as one CSV in the standard input format plus its
// schema descriptor next to it (<path> and <path>.schema).
void save_synthetic_csv(const std::string& path, const std::vector<Recording>& recs,
                        const SyntheticTaskSpec& spec);

}  // namespace ctfg
