#include "ctfg/ppobaseline.hpp"

#include <cmath>

namespace ctfg {

ValueNet::ValueNet(std::size_t d_model, std::size_t token_dim, std::size_t hidden)
    : in_dim_(d_model + token_dim), hidden_(hidden) {
    params_.add("v.w1", Array(Shape{in_dim_, hidden_}));
    params_.add("v.b1", Array(Shape{1, hidden_}));
    params_.add("v.w2", Array(Shape{hidden_, hidden_}));
    params_.add("v.b2", Array(Shape{1, hidden_}));
    params_.add("v.w3", Array(Shape{hidden_, 1}));
    params_.add("v.b3", Array(Shape{1, 1}));
}

void ValueNet::init_params(Rng& rng) {
    for (auto& [name, arr] : params_.all()) {
        if (name[2] == 'b') continue;  // biases stay zero
        double sc = 1.0 / std::sqrt(double(arr.rows()));
        for (std::size_t i = 0; i < arr.numel(); ++i) arr.at(i) = sc * rng.normal();
    }
}

NodeRef ValueNet::build(Graph& g, NodeRef states) const {
    NodeRef h1 = g.gelu(g.add(g.matmul(states, g.param("v.w1")), g.param("v.b1")));
    NodeRef h2 = g.gelu(g.add(g.matmul(h1, g.param("v.w2")), g.param("v.b2")));
    return g.add(g.matmul(h2, g.param("v.w3")), g.param("v.b3"));
}

std::vector<double> ValueNet::values(const Array& states) const {
    Graph g(&params_);
    const Array& v = g.value(build(g, g.constant(states)));
    std::vector<double> out(v.data(), v.data() + v.numel());
    return out;
}

std::vector<double> gae_advantages(const std::vector<double>& rewards,
                                   const std::vector<double>& values, const GaeConfig& cfg) {
    if (rewards.empty()) fail("gae_advantages: empty sequence");
    if (values.size() != rewards.size() + 1)
        fail("gae_advantages: need one value per step plus the terminal state");
    if (cfg.gamma < 0.0 || cfg.gamma > 1.0 || cfg.lambda < 0.0 || cfg.lambda > 1.0)
        fail("gae_advantages: gamma and lambda must lie in [0, 1]");
    std::size_t s = rewards.size();
    std::vector<double> adv(s);
    double acc = 0.0;
    for (std::size_t r = 0; r < s; ++r) {
        std::size_t j = s - 1 - r;
        double delta = rewards[j] + cfg.gamma * values[j + 1] - values[j];
        acc = delta + cfg.gamma * cfg.lambda * acc;
        adv[j] = acc;
    }
    return adv;
}

double value_fit_step(ValueNet& net, const Array& states, const std::vector<double>& targets,
                      AdamState& opt) {
    if (states.rows() != targets.size()) fail("value_fit_step: target count mismatch");
    Array t(Shape{targets.size(), 1}, std::vector<double>(targets.begin(), targets.end()));
    Graph g(&net.params());
    NodeRef resid = g.sub(net.build(g, g.constant(states)), g.constant(t));
    NodeRef loss = g.scale(g.sum_all(g.square(resid)), 1.0 / double(targets.size()));
    double pre = g.value(loss).at(0);
    ArrayMap grads = backward(g, loss, Array::scalar(1.0));
    adam_step(net.params(), grads, opt);
    return pre;
}

Array state_summaries(const Array& enc_h, const Array& tokens, std::size_t steps) {
    std::size_t dm = enc_h.cols(), k = tokens.cols();
    Array hbar = col_mean(enc_h);
    Array out(Shape{steps, dm + k});
    for (std::size_t j = 0; j < steps; ++j) {
        for (std::size_t d = 0; d < dm; ++d) out.at2(j, d) = hbar.at(d);
        if (j > 0) {
            for (std::size_t q = 0; q < k; ++q) {
                double acc = 0.0;
                for (std::size_t r = 0; r < j; ++r) acc += tokens.at2(r, q);
                out.at2(j, dm + q) = acc / double(j);
            }
        }
    }
    return out;
}

PpoMetrics ppo_update(const std::vector<SensorWindow>& train, Policy& policy,
                      const Policy& reference, TmpProjection& proj, ValueNet& critic,
                      const RewardWeights& weights, const GrpoConfig& cfg,
                      const GaeConfig& gae, const BatchSpec& bspec, AdamState& policy_opt,
                      AdamState& critic_opt, AdamState& proj_opt, Rng& rng,
                      std::vector<RewardBreakdown>* breakdowns) {
    if (cfg.group < 2) fail("ppo_update: group size must be at least 2");
    std::size_t G = cfg.group, s = cfg.tokens;
    std::size_t k = std::size_t(policy.config().token_dim);

    std::vector<SensorWindow> batch = stratified_batch(train, bspec, rng);
    std::size_t B = batch.size();

    std::vector<EncoderOutput> encs;
    encs.reserve(B);
    for (const SensorWindow& w : batch) encs.push_back(policy.encode(w.x));

    std::vector<std::vector<FeatureSequence>> seqs(B);
    for (std::size_t i = 0; i < B; ++i)
        for (std::size_t gg = 0; gg < G; ++gg)
            seqs[i].push_back(policy.sample_sequence(encs[i], int(s), rng));

    std::vector<int> labels, users;
    std::vector<Array> enc_arrays;
    for (const SensorWindow& w : batch) {
        labels.push_back(w.y);
        users.push_back(w.user);
    }
    for (const EncoderOutput& e : encs) enc_arrays.push_back(e.h);

    PpoMetrics m;
    std::vector<double> rewards(G);
    for (std::size_t gg = 0; gg < G; ++gg) {
        std::vector<Array> feats;
        for (std::size_t i = 0; i < B; ++i) feats.push_back(seqs[i][gg].tokens);
        RewardBreakdown rb = reward_total(feats, enc_arrays, labels, users, proj, weights);
        rewards[gg] = rb.total;
        m.r_cls += rb.r_cls / double(G);
        m.r_inv += rb.r_inv / double(G);
        m.r_tmp += rb.r_tmp / double(G);
        m.mean_reward += rb.total / double(G);
        if (breakdowns) breakdowns->push_back(rb);
    }

    // sampling-time critic values drive the advantages; the same state rows
    // and sparse returns later train the critic
    std::vector<std::vector<Array>> states(B);
    std::vector<std::vector<std::vector<double>>> adv(B);
    for (std::size_t i = 0; i < B; ++i) {
        states[i].reserve(G);
        adv[i].reserve(G);
        for (std::size_t gg = 0; gg < G; ++gg) {
            Array st = state_summaries(encs[i].h, seqs[i][gg].tokens, s);
            std::vector<double> v = critic.values(st);
            v.push_back(0.0);  // terminal state
            std::vector<double> r(s, 0.0);
            r[s - 1] = rewards[gg];  // reward lands after the last token
            adv[i].push_back(gae_advantages(r, v, gae));
            states[i].push_back(std::move(st));
        }
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
        Array adv_mat(Shape{G, s});
        for (std::size_t gg = 0; gg < G; ++gg) {
            const FeatureSequence& seq = seqs[i][gg];
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
            for (std::size_t j = 0; j < s; ++j) {
                kl_acc += klv.at(j);
                old_lp.at2(gg, j) = seq.step_log_prob[j];
                adv_mat.at2(gg, j) = adv[i][gg][j];
            }
        }
        NodeRef li = grpo_loss(g, g.concat(lp_rows, 0), old_lp, adv_mat,
                               g.concat(kl_row_nodes, 0), cfg);
        total = first ? li : g.add(total, li);
        first = false;
    }
    NodeRef loss = g.scale(total, 1.0 / double(B));
    m.loss = g.value(loss).at(0);
    m.mean_kl = kl_acc / double(B * G * s);

    ArrayMap grads = backward(g, loss, Array::scalar(1.0));
    m.grad_norm = grad_l2_norm(grads);
    adam_step(policy.params(), grads, policy_opt);

    // critic regression to the sparse return, one step on all state rows
    std::size_t rows = B * G * s;
    Array all_states(Shape{rows, critic.in_dim()});
    std::vector<double> targets(rows);
    std::size_t r = 0;
    for (std::size_t i = 0; i < B; ++i)
        for (std::size_t gg = 0; gg < G; ++gg)
            for (std::size_t j = 0; j < s; ++j, ++r) {
                for (std::size_t d = 0; d < critic.in_dim(); ++d)
                    all_states.at2(r, d) = states[i][gg].at2(j, d);
                targets[r] = rewards[gg];
            }
    m.value_loss = value_fit_step(critic, all_states, targets, critic_opt);

    std::vector<Array> feats_all, enc_all;
    for (std::size_t i = 0; i < B; ++i)
        for (std::size_t gg = 0; gg < G; ++gg) {
            feats_all.push_back(seqs[i][gg].tokens);
            enc_all.push_back(encs[i].h);
        }
    fit_projection_step(feats_all, enc_all, proj, proj_opt);
    return m;
}

}  // namespace ctfg
