#include "ctfg/grpo.hpp"

#include <cmath>
#include <string>

namespace ctfg {

std::vector<double> group_advantages(const std::vector<double>& rewards, double eps_stab) {
    std::size_t n = rewards.size();
    if (n < 2) fail("group_advantages: needs at least two rewards");
    if (eps_stab <= 0.0) fail("group_advantages: eps_stab must be positive");
    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= double(n);
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    var /= double(n);  // population variance
    double denom = std::sqrt(var) + eps_stab;
    std::vector<double> adv(n);
    for (std::size_t i = 0; i < n; ++i) adv[i] = (rewards[i] - mean) / denom;
    return adv;
}

NodeRef kl_rows(Graph& g, const Policy::DecoderOut& cur, const Array& ref_mu,
                const Array& ref_log_sigma) {
    const Shape& s = g.value(cur.mu).shape();
    if (ref_mu.shape() != s || ref_log_sigma.shape() != s)
        fail("kl_rows: reference shape mismatch");
    // KL(cur || ref) per element:
    //   (ls_ref - ls_cur) + (sigma_cur^2 + (mu_cur - mu_ref)^2) / (2 sigma_ref^2) - 1/2
    Array inv_two_var(ref_log_sigma.shape());
    for (std::size_t i = 0; i < inv_two_var.numel(); ++i)
        inv_two_var.at(i) = 0.5 * std::exp(-2.0 * ref_log_sigma.at(i));

    NodeRef dls = g.sub(g.constant(ref_log_sigma), cur.log_sigma);
    NodeRef var_cur = g.exp(g.scale(cur.log_sigma, 2.0));
    NodeRef d2 = g.square(g.sub(cur.mu, g.constant(ref_mu)));
    NodeRef quad = g.mul(g.add(var_cur, d2), g.constant(inv_two_var));
    NodeRef per_elem = g.add_scalar(g.add(dls, quad), -0.5);
    return g.sum_axis(per_elem, 1);
}

NodeRef grpo_loss(Graph& g, NodeRef new_lp, const Array& old_lp,
                  const std::vector<double>& adv, NodeRef kl, const GrpoConfig& cfg) {
    const Shape sh = g.value(new_lp).shape();
    if (sh.size() != 2) fail("grpo_loss: log-probs must be group x steps");
    if (adv.size() != sh[0]) fail("grpo_loss: advantage count mismatch");
    Array tiled(Shape{sh[0], sh[1]});
    for (std::size_t a = 0; a < sh[0]; ++a)
        for (std::size_t b = 0; b < sh[1]; ++b) tiled.at2(a, b) = adv[a];
    return grpo_loss(g, new_lp, old_lp, tiled, kl, cfg);
}

NodeRef grpo_loss(Graph& g, NodeRef new_lp, const Array& old_lp, const Array& adv, NodeRef kl,
                  const GrpoConfig& cfg) {
    const Shape& s = g.value(new_lp).shape();
    if (s.size() != 2) fail("grpo_loss: log-probs must be group x steps");
    std::size_t gs = s[0], steps = s[1];
    if (old_lp.shape() != s) fail("grpo_loss: old log-prob shape mismatch");
    if (g.value(kl).shape() != s) fail("grpo_loss: kl shape mismatch");
    if (adv.shape() != s) fail("grpo_loss: advantage shape mismatch");
    if (cfg.eps_clip <= 0.0) fail("grpo_loss: eps_clip must be positive");
    if (cfg.beta_kl < 0.0) fail("grpo_loss: beta_kl must be non-negative");

    NodeRef diff = g.sub(new_lp, g.constant(old_lp));
    const Array& dv = g.value(diff);
    for (std::size_t a = 0; a < gs; ++a)
        for (std::size_t b = 0; b < steps; ++b) {
            double d = dv.at2(a, b);
            if (!std::isfinite(d) || d > 700.0)
                fail("grpo_loss: non-finite probability ratio at (" + std::to_string(a) +
                     ", " + std::to_string(b) + ")");
        }
    NodeRef ratio = g.exp(diff);
    NodeRef advn = g.constant(adv);

    NodeRef unclipped = g.mul(ratio, advn);
    NodeRef clipped = g.mul(g.clamp(ratio, 1.0 - cfg.eps_clip, 1.0 + cfg.eps_clip), advn);
    NodeRef surrogate = g.minimum(unclipped, clipped);
    NodeRef term = g.sub(surrogate, g.scale(kl, cfg.beta_kl));
    return g.scale(g.sum_all(term), -1.0 / double(gs * steps));
}

bool refresh_reference(const Policy& policy, Policy& reference, long epoch, long every) {
    bool fire = (epoch == 0) || (every > 0 && epoch % every == 0);
    if (fire) reference.params() = policy.params();
    return fire;
}

EpochMetrics train_epoch(const std::vector<SensorWindow>& train, Policy& policy,
                         const Policy& reference, TmpProjection& proj,
                         const RewardWeights& weights, const GrpoConfig& cfg,
                         const BatchSpec& bspec, AdamState& policy_opt, AdamState& proj_opt,
                         Rng& rng, std::vector<RewardBreakdown>* breakdowns) {
    if (cfg.group < 2) fail("train_epoch: group size must be at least 2");
    std::size_t G = cfg.group, s = cfg.tokens;
    std::size_t k = std::size_t(policy.config().token_dim);

    std::vector<SensorWindow> batch = stratified_batch(train, bspec, rng);
    std::size_t B = batch.size();

    std::vector<EncoderOutput> encs;
    encs.reserve(B);
    for (const SensorWindow& w : batch) encs.push_back(policy.encode(w.x));

    std::vector<GroupRollout> rolls(B);
    for (std::size_t i = 0; i < B; ++i)
        for (std::size_t gg = 0; gg < G; ++gg)
            rolls[i].sequences.push_back(policy.sample_sequence(encs[i], int(s), rng));

    std::vector<int> labels, users;
    std::vector<Array> enc_arrays;
    for (const SensorWindow& w : batch) {
        labels.push_back(w.y);
        users.push_back(w.user);
    }
    for (const EncoderOutput& e : encs) enc_arrays.push_back(e.h);

    EpochMetrics m;
    std::vector<double> rewards(G);
    for (std::size_t gg = 0; gg < G; ++gg) {
        std::vector<Array> feats;
        for (std::size_t i = 0; i < B; ++i) feats.push_back(rolls[i].sequences[gg].tokens);
        RewardBreakdown rb = reward_total(feats, enc_arrays, labels, users, proj, weights);
        rewards[gg] = rb.total;
        m.r_cls += rb.r_cls / double(G);
        m.r_inv += rb.r_inv / double(G);
        m.r_tmp += rb.r_tmp / double(G);
        m.mean_reward += rb.total / double(G);
        if (breakdowns) breakdowns->push_back(rb);
    }
    std::vector<double> adv = group_advantages(rewards, cfg.eps_stab);
    for (std::size_t i = 0; i < B; ++i) {
        rolls[i].rewards = rewards;
        rolls[i].advantages = adv;
    }

    Graph g(&policy.params());
    NodeRef total{};
    bool first = true;
    double kl_acc = 0.0;
    for (std::size_t i = 0; i < B; ++i) {
        NodeRef h = policy.build_encoder(g, g.constant(batch[i].x));
        EncoderOutput ref_h = reference.encode(batch[i].x);
        std::vector<NodeRef> lp_rows, kl_row_nodes;
        Array old_lp(Shape{G, s});
        for (std::size_t gg = 0; gg < G; ++gg) {
            const FeatureSequence& seq = rolls[i].sequences[gg];
            std::vector<double> pdata(seq.tokens.data(), seq.tokens.data() + (s - 1) * k);
            Array prefix(Shape{s - 1, k}, std::move(pdata));

            Policy::DecoderOut out = policy.build_decoder(g, h, g.constant(prefix));
            NodeRef lp = policy.sequence_log_prob(g, out, g.constant(seq.tokens));

            Array ref_mu, ref_ls;
            {
                Graph gr(&reference.params());
                Policy::DecoderOut rout =
                    reference.build_decoder(gr, gr.constant(ref_h.h), gr.constant(prefix));
                ref_mu = gr.value(rout.mu);
                ref_ls = gr.value(rout.log_sigma);
            }
            NodeRef klr = kl_rows(g, out, ref_mu, ref_ls);
            lp_rows.push_back(g.transpose(lp));
            kl_row_nodes.push_back(g.transpose(klr));
            const Array& klv = g.value(klr);
            for (std::size_t j = 0; j < s; ++j) kl_acc += klv.at(j);
            for (std::size_t j = 0; j < s; ++j) old_lp.at2(gg, j) = seq.step_log_prob[j];
        }
        NodeRef new_lp = g.concat(lp_rows, 0);
        NodeRef kl = g.concat(kl_row_nodes, 0);
        NodeRef li = grpo_loss(g, new_lp, old_lp, adv, kl, cfg);
        total = first ? li : g.add(total, li);
        first = false;
    }
    NodeRef loss = g.scale(total, 1.0 / double(B));
    m.loss = g.value(loss).at(0);
    m.mean_kl = kl_acc / double(B * G * s);

    ArrayMap grads = backward(g, loss, Array::scalar(1.0));
    m.grad_norm = grad_l2_norm(grads);
    adam_step(policy.params(), grads, policy_opt);

    std::vector<Array> feats_all, enc_all;
    for (std::size_t i = 0; i < B; ++i)
        for (std::size_t gg = 0; gg < G; ++gg) {
            feats_all.push_back(rolls[i].sequences[gg].tokens);
            enc_all.push_back(encs[i].h);
        }
    fit_projection_step(feats_all, enc_all, proj, proj_opt);
    return m;
}

}  // namespace ctfg
