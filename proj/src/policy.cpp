#include "ctfg/policy.hpp"

#include <cmath>
#include <numbers>

namespace ctfg {

namespace {

constexpr double kMaskFill = -1e30;  // finite, underflows to 0 after softmax

double half_log_two_pi(std::size_t k) {
    return 0.5 * static_cast<double>(k) * std::log(2.0 * std::numbers::pi);
}

}  // namespace

Array positional_encoding(std::size_t len, std::size_t d_model) {
    Array pe(Shape{len, d_model});
    for (std::size_t t = 0; t < len; ++t)
        for (std::size_t q = 0; q < d_model; ++q) {
            double w = std::pow(10000.0, -2.0 * static_cast<double>(q / 2) /
                                             static_cast<double>(d_model));
            double arg = static_cast<double>(t) * w;
            pe.at2(t, q) = (q % 2 == 0) ? std::sin(arg) : std::cos(arg);
        }
    return pe;
}

double gaussian_log_density(const GaussianParams& p, const double* z, std::size_t k) {
    double quad = 0.0, log_det = 0.0;
    for (std::size_t q = 0; q < k; ++q) {
        double sigma = std::exp(p.log_sigma[q]);
        double w = (z[q] - p.mu[q]) / sigma;
        quad += w * w;
        log_det += p.log_sigma[q];
    }
    return -0.5 * quad - log_det - half_log_two_pi(k);
}

double kl_diag_gaussian(const GaussianParams& p, const GaussianParams& q) {
    if (p.mu.size() != q.mu.size()) fail("kl_diag_gaussian: dimension mismatch");
    double kl = 0.0;
    for (std::size_t j = 0; j < p.mu.size(); ++j) {
        double sp = std::exp(p.log_sigma[j]);
        double sq = std::exp(q.log_sigma[j]);
        double dmu = p.mu[j] - q.mu[j];
        kl += (q.log_sigma[j] - p.log_sigma[j]) + (sp * sp + dmu * dmu) / (2.0 * sq * sq) -
              0.5;
    }
    return kl;
}

Policy::Policy(PolicyConfig cfg) : cfg_(cfg) {
    if (cfg_.enc.d_model % cfg_.enc.heads != 0)
        fail("d_model must be divisible by the head count");
    if (cfg_.sensor_dim < 1 || cfg_.window_len < 1 || cfg_.token_dim < 1 ||
        cfg_.seq_len < 1 || cfg_.enc.ff < 1 || cfg_.enc.layers < 1)
        fail("policy dimensions must be positive");
    if (cfg_.log_sigma_lo >= cfg_.log_sigma_hi) fail("log sigma bounds are inverted");
    pe_ = positional_encoding(static_cast<std::size_t>(cfg_.window_len),
                              static_cast<std::size_t>(cfg_.enc.d_model));
}

void Policy::init_params(Rng& rng) {
    params_ = ParamStore();
    auto d = static_cast<std::size_t>(cfg_.sensor_dim);
    auto dm = static_cast<std::size_t>(cfg_.enc.d_model);
    auto heads = static_cast<std::size_t>(cfg_.enc.heads);
    std::size_t dh = dm / heads;
    auto ff = static_cast<std::size_t>(cfg_.enc.ff);
    auto k = static_cast<std::size_t>(cfg_.token_dim);
    auto s = static_cast<std::size_t>(cfg_.seq_len);

    auto gauss = [&](Shape shape, double scale) {
        Array a(std::move(shape));
        for (std::size_t i = 0; i < a.numel(); ++i) a.at(i) = scale * rng.normal();
        return a;
    };
    auto add_attention = [&](const std::string& prefix) {
        double sc = 1.0 / std::sqrt(static_cast<double>(dm));
        for (std::size_t h = 0; h < heads; ++h) {
            std::string hp = prefix + ".h" + std::to_string(h);
            params_.add(hp + ".wq", gauss(Shape{dm, dh}, sc));
            params_.add(hp + ".wk", gauss(Shape{dm, dh}, sc));
            params_.add(hp + ".wv", gauss(Shape{dm, dh}, sc));
        }
        params_.add(prefix + ".wo", gauss(Shape{dm, dm}, sc));
        params_.add(prefix + ".bo", Array(Shape{1, dm}));
    };
    auto add_ln = [&](const std::string& prefix) {
        params_.add(prefix + ".g", Array::full(Shape{1, dm}, 1.0));
        params_.add(prefix + ".b", Array(Shape{1, dm}));
    };
    auto add_ff = [&](const std::string& prefix) {
        params_.add(prefix + ".w1", gauss(Shape{dm, ff}, 1.0 / std::sqrt(double(dm))));
        params_.add(prefix + ".b1", Array(Shape{1, ff}));
        params_.add(prefix + ".w2", gauss(Shape{ff, dm}, 1.0 / std::sqrt(double(ff))));
        params_.add(prefix + ".b2", Array(Shape{1, dm}));
    };

    params_.add("enc.w_in", gauss(Shape{d, dm}, 1.0 / std::sqrt(static_cast<double>(d))));
    for (int l = 0; l < cfg_.enc.layers; ++l) {
        std::string lp = "enc.L" + std::to_string(l);
        add_attention(lp + ".attn");
        add_ln(lp + ".ln1");
        add_ff(lp + ".ff");
        add_ln(lp + ".ln2");
    }
    params_.add("dec.bos", gauss(Shape{1, k}, 0.1));
    params_.add("dec.tok_proj", gauss(Shape{k, dm}, 1.0 / std::sqrt(double(k))));
    params_.add("dec.pos", gauss(Shape{s, dm}, 0.1));
    for (int l = 0; l < cfg_.enc.layers; ++l) {
        std::string lp = "dec.L" + std::to_string(l);
        add_attention(lp + ".self");
        add_ln(lp + ".ln1");
        add_attention(lp + ".cross");
        add_ln(lp + ".ln2");
        add_ff(lp + ".ff");
        add_ln(lp + ".ln3");
    }
    params_.add("dec.head.w", gauss(Shape{dm, 2 * k}, 1.0 / std::sqrt(double(dm))));
    params_.add("dec.head.b", Array(Shape{1, 2 * k}));
}

NodeRef Policy::ln_affine(Graph& g, NodeRef x, const std::string& prefix) const {
    NodeRef normed = g.layer_norm_rows(x);
    return g.add(g.mul(normed, g.param(prefix + ".g")), g.param(prefix + ".b"));
}

NodeRef Policy::attention(Graph& g, NodeRef q_src, NodeRef kv_src,
                          const std::string& prefix, bool causal) const {
    auto dm = static_cast<std::size_t>(cfg_.enc.d_model);
    auto heads = static_cast<std::size_t>(cfg_.enc.heads);
    double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dm / heads));
    std::size_t q_rows = g.value(q_src).shape()[0];
    std::size_t k_rows = g.value(kv_src).shape()[0];

    NodeRef mask;
    if (causal) {
        Array m(Shape{q_rows, k_rows});
        for (std::size_t r = 0; r < q_rows; ++r)
            for (std::size_t c = r + 1; c < k_rows; ++c) m.at2(r, c) = 1.0;
        mask = g.constant(std::move(m));
    }

    std::vector<NodeRef> head_out;
    for (std::size_t h = 0; h < heads; ++h) {
        std::string hp = prefix + ".h" + std::to_string(h);
        NodeRef q = g.matmul(q_src, g.param(hp + ".wq"));
        NodeRef k = g.matmul(kv_src, g.param(hp + ".wk"));
        NodeRef v = g.matmul(kv_src, g.param(hp + ".wv"));
        NodeRef scores = g.scale(g.matmul(q, g.transpose(k)), inv_sqrt_dh);
        if (causal) scores = g.masked_fill(scores, mask, kMaskFill);
        head_out.push_back(g.matmul(g.softmax_rows(scores), v));
    }
    NodeRef cat = g.concat(head_out, 1);
    return g.add(g.matmul(cat, g.param(prefix + ".wo")), g.param(prefix + ".bo"));
}

NodeRef Policy::feed_forward(Graph& g, NodeRef x, const std::string& prefix) const {
    NodeRef hidden = g.gelu(g.add(g.matmul(x, g.param(prefix + ".w1")),
                                  g.param(prefix + ".b1")));
    return g.add(g.matmul(hidden, g.param(prefix + ".w2")), g.param(prefix + ".b2"));
}

NodeRef Policy::build_encoder(Graph& g, NodeRef x) const {
    const Array& xv = g.value(x);
    if (xv.rank() != 2 || xv.shape()[1] != static_cast<std::size_t>(cfg_.sensor_dim))
        fail("encoder input must be rows x " + std::to_string(cfg_.sensor_dim));
    std::size_t rows = xv.shape()[0];
    NodeRef z = g.matmul(x, g.param("enc.w_in"));
    Array pe = rows == pe_.shape()[0]
                   ? pe_
                   : positional_encoding(rows, static_cast<std::size_t>(cfg_.enc.d_model));
    z = g.add(z, g.constant(std::move(pe)));
    for (int l = 0; l < cfg_.enc.layers; ++l) {
        std::string lp = "enc.L" + std::to_string(l);
        NodeRef a = attention(g, z, z, lp + ".attn", false);
        z = ln_affine(g, g.add(z, a), lp + ".ln1");
        NodeRef f = feed_forward(g, z, lp + ".ff");
        z = ln_affine(g, g.add(z, f), lp + ".ln2");
    }
    return z;
}

Policy::DecoderOut Policy::build_decoder(Graph& g, NodeRef h, NodeRef prefix) const {
    auto k = static_cast<std::size_t>(cfg_.token_dim);
    auto s = static_cast<std::size_t>(cfg_.seq_len);
    std::size_t rows = 1;
    if (prefix.valid()) {
        const Array& pv = g.value(prefix);
        if (pv.rank() != 2 || pv.shape()[1] != k)
            fail("decoder prefix must be rows x " + std::to_string(k));
        rows = pv.shape()[0] + 1;
    }
    if (rows > s) fail("decoder prefix longer than the configured sequence length");

    NodeRef tok_in = prefix.valid() ? g.concat({g.param("dec.bos"), prefix}, 0)
                                    : g.param("dec.bos");
    NodeRef z = g.matmul(tok_in, g.param("dec.tok_proj"));
    Array sel(Shape{rows, s});
    for (std::size_t r = 0; r < rows; ++r) sel.at2(r, r) = 1.0;
    z = g.add(z, g.matmul(g.constant(std::move(sel)), g.param("dec.pos")));

    for (int l = 0; l < cfg_.enc.layers; ++l) {
        std::string lp = "dec.L" + std::to_string(l);
        NodeRef a = attention(g, z, z, lp + ".self", true);
        z = ln_affine(g, g.add(z, a), lp + ".ln1");
        NodeRef c = attention(g, z, h, lp + ".cross", false);
        z = ln_affine(g, g.add(z, c), lp + ".ln2");
        NodeRef f = feed_forward(g, z, lp + ".ff");
        z = ln_affine(g, g.add(z, f), lp + ".ln3");
    }

    NodeRef head = g.add(g.matmul(z, g.param("dec.head.w")), g.param("dec.head.b"));
    Array mu_sel(Shape{2 * k, k}), ls_sel(Shape{2 * k, k});
    for (std::size_t i = 0; i < k; ++i) {
        mu_sel.at2(i, i) = 1.0;
        ls_sel.at2(k + i, i) = 1.0;
    }
    NodeRef mu = g.matmul(head, g.constant(std::move(mu_sel)));
    NodeRef ls = g.clamp(g.matmul(head, g.constant(std::move(ls_sel))), cfg_.log_sigma_lo,
                         cfg_.log_sigma_hi);
    return {mu, ls};
}

NodeRef Policy::sequence_log_prob(Graph& g, const DecoderOut& out, NodeRef tokens) const {
    NodeRef diff = g.sub(tokens, out.mu);
    NodeRef inv_sigma = g.exp(g.scale(out.log_sigma, -1.0));
    NodeRef quad = g.sum_axis(g.square(g.mul(diff, inv_sigma)), 1);  // rows x 1
    NodeRef log_det = g.sum_axis(out.log_sigma, 1);
    NodeRef lp = g.sub(g.scale(quad, -0.5), log_det);
    return g.add_scalar(lp, -half_log_two_pi(static_cast<std::size_t>(cfg_.token_dim)));
}

EncoderOutput Policy::encode(const Array& x) const {
    Graph g(&params_);
    NodeRef h = build_encoder(g, g.constant(x));
    return {g.value(h)};
}

GaussianParams Policy::decode_step(const EncoderOutput& enc, const Array& prefix) const {
    Graph g(&params_);
    NodeRef h = g.constant(enc.h);
    NodeRef p;
    if (prefix.numel() > 0) p = g.constant(prefix);
    DecoderOut out = build_decoder(g, h, p);
    const Array& mu = g.value(out.mu);
    const Array& ls = g.value(out.log_sigma);
    std::size_t last = mu.shape()[0] - 1;
    auto k = static_cast<std::size_t>(cfg_.token_dim);
    GaussianParams gp;
    gp.mu.resize(k);
    gp.log_sigma.resize(k);
    for (std::size_t q = 0; q < k; ++q) {
        gp.mu[q] = mu.at2(last, q);
        gp.log_sigma[q] = ls.at2(last, q);
    }
    return gp;
}

FeatureSequence Policy::rollout(const EncoderOutput& enc, int steps, Rng* rng) const {
    if (steps < 1 || steps > cfg_.seq_len)
        fail("rollout steps must be in [1, seq_len]");
    auto k = static_cast<std::size_t>(cfg_.token_dim);
    auto n = static_cast<std::size_t>(steps);
    FeatureSequence seq;
    seq.tokens = Array(Shape{n, k});
    for (std::size_t j = 0; j < n; ++j) {
        std::vector<double> pdata(seq.tokens.data(), seq.tokens.data() + j * k);
        Array prefix(Shape{j, k}, std::move(pdata));
        GaussianParams p = decode_step(enc, prefix);
        for (std::size_t q = 0; q < k; ++q) {
            double z = p.mu[q];
            if (rng) z += std::exp(p.log_sigma[q]) * rng->normal();
            seq.tokens.at2(j, q) = z;
        }
        double lp = gaussian_log_density(p, seq.tokens.data() + j * k, k);
        seq.step_params.push_back(std::move(p));
        seq.step_log_prob.push_back(lp);
        seq.total_log_prob += lp;
    }
    return seq;
}

FeatureSequence Policy::sample_sequence(const EncoderOutput& enc, int steps,
                                        Rng& rng) const {
    return rollout(enc, steps, &rng);
}

FeatureSequence Policy::deterministic_sequence(const EncoderOutput& enc, int steps) const {
    return rollout(enc, steps, nullptr);
}

std::vector<double> Policy::log_prob(const std::vector<GaussianParams>& steps,
                                     const Array& tokens) const {
    auto k = static_cast<std::size_t>(cfg_.token_dim);
    if (tokens.rank() != 2 || tokens.shape()[0] != steps.size() || tokens.shape()[1] != k)
        fail("log_prob: tokens must be steps x token_dim");
    std::vector<double> out(steps.size());
    for (std::size_t j = 0; j < steps.size(); ++j)
        out[j] = gaussian_log_density(steps[j], tokens.data() + j * k, k);
    return out;
}

}  // namespace ctfg
