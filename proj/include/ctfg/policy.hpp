#pragma once

#include <vector>

#include "ctfg/graph.hpp"
#include "ctfg/rng.hpp"

namespace ctfg {

struct EncoderConfig {
    int d_model = 64;
    int heads = 4;
    int layers = 1;
    int ff = 256;  // hidden width of the position-wise feed-forward
};

struct PolicyConfig {
    int sensor_dim = 3;   // input channels d
    int window_len = 75;  // rows per window l
    EncoderConfig enc;
    int token_dim = 16;  // feature token width k
    int seq_len = 10;    // autoregressive steps s
    double log_sigma_lo = -5.0;
    double log_sigma_hi = 2.0;
};

// Diagonal Gaussian over one token: log_sigma holds log standard deviations,
// so the covariance is diag(exp(log_sigma)^2).
struct GaussianParams {
    std::vector<double> mu;
    std::vector<double> log_sigma;
};

struct EncoderOutput {
    Array h;  // l x d_model
};

struct FeatureSequence {
    Array tokens;  // s x k
    std::vector<GaussianParams> step_params;
    std::vector<double> step_log_prob;
    double total_log_prob = 0.0;
};

// Sinusoidal table, len x d_model: entry (t, q) is sin(t * w_q) for even q
// and cos(t * w_q) for odd q, with w_q = 10000^(-2 floor(q/2) / d_model) and
// t counted from zero.
Array positional_encoding(std::size_t len, std::size_t d_model);

// Log density of z under the diagonal Gaussian (sigma = exp(log_sigma)).
double gaussian_log_density(const GaussianParams& p, const double* z, std::size_t k);

// Analytic KL(p || q) between diagonal Gaussians of equal dimension.
double kl_diag_gaussian(const GaussianParams& p, const GaussianParams& q);

// Autoregressive windowed-signal-to-token policy: a post-LN Transformer
// encoder over the window and a causally masked decoder emitting one
// diagonal-Gaussian token distribution per step. All arithmetic runs through
// Graph, so every path used in training is differentiable.
class Policy {
public:
    explicit Policy(PolicyConfig cfg);

    const PolicyConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    // Fresh Gaussian/zero initialization of every parameter (deterministic in
    // the rng stream).
    void init_params(Rng& rng);

    // Graph builders. x: l x d input node; returns l x d_model state.
    NodeRef build_encoder(Graph& g, NodeRef x) const;

    struct DecoderOut {
        NodeRef mu;         // rows x k
        NodeRef log_sigma;  // rows x k, clamped
    };
    // prefix: (j-1) x k node of already-emitted tokens, or invalid for the
    // first step. Emits distribution parameters for all j rows; row r
    // depends only on tokens before r (strict causal mask).
    DecoderOut build_decoder(Graph& g, NodeRef h, NodeRef prefix) const;

    // Joint log probability of the given tokens (s x k constant) under the
    // decoder output, one row per step; differentiable through mu/log_sigma.
    NodeRef sequence_log_prob(Graph& g, const DecoderOut& out, NodeRef tokens) const;

    // Value-level operations (each builds a throwaway graph).
    EncoderOutput encode(const Array& x) const;
    GaussianParams decode_step(const EncoderOutput& enc, const Array& prefix) const;
    FeatureSequence sample_sequence(const EncoderOutput& enc, int steps, Rng& rng) const;
    // Feeds the mean back instead of a sample; log probs are densities at the
    // mean.
    FeatureSequence deterministic_sequence(const EncoderOutput& enc, int steps) const;
    std::vector<double> log_prob(const std::vector<GaussianParams>& steps,
                                 const Array& tokens) const;

private:
    PolicyConfig cfg_;
    ParamStore params_;
    Array pe_;  // cached sinusoidal table

    NodeRef attention(Graph& g, NodeRef q_src, NodeRef kv_src, const std::string& prefix,
                      bool causal) const;
    NodeRef ln_affine(Graph& g, NodeRef x, const std::string& prefix) const;
    NodeRef feed_forward(Graph& g, NodeRef x, const std::string& prefix) const;
    FeatureSequence rollout(const EncoderOutput& enc, int steps, Rng* rng) const;
};

}  // namespace ctfg
