#pragma once

#include <vector>

#include "ctfg/adam.hpp"
#include "ctfg/dataio.hpp"
#include "ctfg/policy.hpp"
#include "ctfg/rewards.hpp"

namespace ctfg {

struct GrpoConfig {
    std::size_t group = 8;    // sequences sampled per input
    double eps_clip = 0.2;    // ratio clip half-width
    double beta_kl = 0.01;    // weight of the KL anchor to the reference
    double eps_stab = 1e-8;   // advantage denominator floor
    std::size_t tokens = 10;  // feature tokens per sequence
    std::size_t epochs = 100;
};

// One input's sampled group. rewards/advantages are the batch-level values
// shared by every input: the g-th reward is computed on the batch made of
// each input's g-th sequence.
struct GroupRollout {
    std::vector<FeatureSequence> sequences;
    std::vector<double> rewards;
    std::vector<double> advantages;
};

// (R_g - mean) / (population std + eps_stab). Requires >= 2 entries.
std::vector<double> group_advantages(const std::vector<double>& rewards, double eps_stab);

// Per-step KL rows (s x 1 node) from the current decoder distribution to a
// frozen reference distribution over the same prefix, differentiable through
// the current outputs only.
NodeRef kl_rows(Graph& g, const Policy::DecoderOut& cur, const Array& ref_mu,
                const Array& ref_log_sigma);

// Clipped surrogate with KL anchor over one group: new_lp and kl are
// group x steps nodes, old_lp the sampling-time log-probs (held constant),
// adv one advantage per group member applied to all its steps. Errors name
// the (group, step) cell if a probability ratio is about to overflow.
NodeRef grpo_loss(Graph& g, NodeRef new_lp, const Array& old_lp,
                  const std::vector<double>& adv, NodeRef kl, const GrpoConfig& cfg);

// Same surrogate with one advantage per (group, step) cell instead of one
// per group; the vector overload tiles and forwards here.
NodeRef grpo_loss(Graph& g, NodeRef new_lp, const Array& old_lp, const Array& adv, NodeRef kl,
                  const GrpoConfig& cfg);

struct EpochMetrics {
    double mean_reward = 0.0;
    double r_cls = 0.0;
    double r_inv = 0.0;
    double r_tmp = 0.0;
    double loss = 0.0;
    double mean_kl = 0.0;
    double grad_norm = 0.0;
};

// One pass of the training loop: stratified batch, group sampling, parallel
// per-group batch rewards, shared group advantages, one clipped-surrogate
// Adam step on the policy, then one least-squares step on the projection
// using all sampled sequences.
EpochMetrics train_epoch(const std::vector<SensorWindow>& train, Policy& policy,
                         const Policy& reference, TmpProjection& proj,
                         const RewardWeights& weights, const GrpoConfig& cfg,
                         const BatchSpec& bspec, AdamState& policy_opt, AdamState& proj_opt,
                         Rng& rng, std::vector<RewardBreakdown>* breakdowns = nullptr);

// Copies policy parameters into the reference when the schedule fires:
// always at epoch 0, afterwards every `every` epochs when every > 0.
// Returns whether a copy happened.
bool refresh_reference(const Policy& policy, Policy& reference, long epoch = 0, long every = 0);

}  // namespace ctfg
