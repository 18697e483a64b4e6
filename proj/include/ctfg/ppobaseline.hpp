#pragma once

#include "ctfg/grpo.hpp"

namespace ctfg {

struct GaeConfig {
    double gamma = 0.99;
    double lambda = 0.95;
};

// Small critic over a fixed-size state summary: the temporal mean of the
// encoder output concatenated with the mean of the tokens emitted so far
// (zeros before the first step). Two GELU hidden layers of width 64.
class ValueNet {
public:
    ValueNet(std::size_t d_model, std::size_t token_dim, std::size_t hidden = 64);

    std::size_t in_dim() const { return in_dim_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    void init_params(Rng& rng);

    // states: rows x in_dim node; returns rows x 1 values.
    NodeRef build(Graph& g, NodeRef states) const;
    // value-level forward over rows of a state matrix
    std::vector<double> values(const Array& states) const;

private:
    std::size_t in_dim_, hidden_;
    ParamStore params_;
};

// Generalized advantage estimation over one sequence: rewards r_1..r_s and
// values V(s_1)..V(s_{s+1}) (callers pass 0 for the terminal state).
// adv_j = sum_{j' >= j} (gamma*lambda)^(j'-j) * (r_j' + gamma V_{j'+1} - V_j').
std::vector<double> gae_advantages(const std::vector<double>& rewards,
                                   const std::vector<double>& values, const GaeConfig& cfg);

// One mean-squared-error Adam step of the critic on a fixed buffer of state
// rows and scalar targets; returns the pre-step loss.
double value_fit_step(ValueNet& net, const Array& states, const std::vector<double>& targets,
                      AdamState& opt);

// State-summary rows (steps x (d_model + k)) for one sequence's prefixes.
Array state_summaries(const Array& enc_h, const Array& tokens, std::size_t steps);

struct PpoMetrics {
    double mean_reward = 0.0;
    double r_cls = 0.0;
    double r_inv = 0.0;
    double r_tmp = 0.0;
    double loss = 0.0;
    double value_loss = 0.0;
    double mean_kl = 0.0;
    double grad_norm = 0.0;
};

// PPO+GAE counterpart of train_epoch: identical sampling, rewards, clipping,
// and KL anchoring, but per-step critic-based advantages instead of
// group-normalized ones, plus one critic fit step on the sparse returns.
PpoMetrics ppo_update(const std::vector<SensorWindow>& train, Policy& policy,
                      const Policy& reference, TmpProjection& proj, ValueNet& critic,
                      const RewardWeights& weights, const GrpoConfig& cfg,
                      const GaeConfig& gae, const BatchSpec& bspec, AdamState& policy_opt,
                      AdamState& critic_opt, AdamState& proj_opt, Rng& rng,
                      std::vector<RewardBreakdown>* breakdowns = nullptr);

}  // namespace ctfg
