#pragma once

#include <map>
#include <vector>

#include "ctfg/adam.hpp"
#include "ctfg/array.hpp"
#include "ctfg/graph.hpp"
#include "ctfg/rng.hpp"

namespace ctfg {

// Batch rewards over generated feature sequences (each s x k) and the
// encoder outputs (each l x d_model) they were conditioned on. All rewards
// are computed on plain values; no gradient flows through them.

struct RewardWeights {
    double w_cls = 3.0;
    double w_inv = 2.0;
    double w_tmp = 1.0;
};

// Learnable k x d_model map from mean feature tokens to mean encoder rows,
// fitted by least squares separately from the policy update.
struct TmpProjection {
    TmpProjection(std::size_t token_dim, std::size_t d_model);
    ParamStore params;  // single entry "w_proj"
    const Array& w() const { return params.get("w_proj"); }
    std::size_t token_dim, d_model;
};

struct RewardBreakdown {
    double r_cls = 0.0;
    double r_inv = 0.0;
    double r_tmp = 0.0;
    double total = 0.0;
    std::map<int, double> v_c;  // within-user scatter per class
    std::map<int, double> d_c;  // cross-user centroid spread per class
};

// Mean squared-Frobenius distance between class centroids over ordered
// class pairs, normalized by C_batch * (C_batch - 1). Needs >= 2 classes.
double reward_cls(const std::vector<Array>& feats, const std::vector<int>& labels);

// -sum_c (V_c + D_c): V_c averages each user's mean squared distance to
// their own (user, class) centroid; D_c averages squared distances between
// user centroids over unordered pairs (0 with a single user). The optional
// out-maps receive the per-class terms.
double reward_inv(const std::vector<Array>& feats, const std::vector<int>& labels,
                  const std::vector<int>& users, std::map<int, double>* v_out = nullptr,
                  std::map<int, double>* d_out = nullptr);

// -(1/B) sum_i || zbar_i^T W - hbar_i ||^2 with zbar_i the column mean of
// feats[i] and hbar_i the column mean of enc[i].
double reward_tmp(const std::vector<Array>& feats, const std::vector<Array>& enc,
                  const TmpProjection& proj);

RewardBreakdown reward_total(const std::vector<Array>& feats, const std::vector<Array>& enc,
                             const std::vector<int>& labels, const std::vector<int>& users,
                             const TmpProjection& proj, const RewardWeights& weights);

// One Adam step on w_proj minimizing the reconstruction error behind
// reward_tmp. Returns the pre-step reconstruction error (the negated reward).
double fit_projection_step(const std::vector<Array>& feats, const std::vector<Array>& enc,
                           TmpProjection& proj, AdamState& opt);

// Column means as a 1 x cols row vector.
Array col_mean(const Array& m);

}  // namespace ctfg
