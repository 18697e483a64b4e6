#include "ctfg/evalharness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

namespace ctfg {

namespace {

std::vector<int> sorted_classes(const std::vector<int>& labels) {
    std::set<int> s(labels.begin(), labels.end());
    return std::vector<int>(s.begin(), s.end());
}

struct LogRegProblem {
    Array x;       // N x D
    Array onehot;  // N x C
    double l2;

    NodeRef build_loss(Graph& g) const {
        std::size_t n = x.rows();
        NodeRef w = g.param("w"), b = g.param("b");
        NodeRef logits = g.add(g.matmul(g.constant(x), w), b);

        // log-sum-exp with a per-row constant shift; the shift needs no
        // gradient, so it can come from the current values
        const Array& lv = g.value(logits);
        Array cmax(Shape{1, n});
        double cmax_total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double mx = lv.at2(i, 0);
            for (std::size_t c = 1; c < lv.cols(); ++c) mx = std::max(mx, lv.at2(i, c));
            cmax.at(i) = mx;
            cmax_total += mx;
        }
        NodeRef shifted = g.sub(g.transpose(logits), g.constant(cmax));  // C x N
        NodeRef lse = g.log(g.sum_axis(g.exp(shifted), 0));              // 1 x N
        NodeRef lse_total = g.add_scalar(g.sum_all(lse), cmax_total);

        NodeRef picked = g.sum_all(g.mul(g.constant(onehot), logits));
        NodeRef data = g.scale(g.sub(lse_total, picked), 1.0 / double(n));
        return g.add(data, g.scale(g.sum_all(g.square(w)), l2));
    }
};

}  // namespace

LogRegModel fit_logreg(const Array& feats, const std::vector<int>& labels, double l2,
                       double tol, int max_iters) {
    if (feats.rows() != labels.size()) fail("fit_logreg: label count mismatch");
    if (l2 < 0.0) fail("fit_logreg: l2 must be non-negative");
    std::vector<int> classes = sorted_classes(labels);
    if (classes.size() < 2) fail("fit_logreg: needs at least two classes");
    std::size_t n = feats.rows(), d = feats.cols(), c = classes.size();

    LogRegProblem prob{feats, Array(Shape{n, c}), l2};
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t col = std::size_t(
            std::lower_bound(classes.begin(), classes.end(), labels[i]) - classes.begin());
        prob.onehot.at2(i, col) = 1.0;
    }

    ParamStore ps;
    ps.add("w", Array(Shape{d, c}));
    ps.add("b", Array(Shape{1, c}));

    auto loss_at = [&]() {
        Graph g(&ps);
        return g.value(prob.build_loss(g)).at(0);
    };

    // steepest descent with Barzilai-Borwein step proposals, safeguarded by an
    // Armijo backtrack: since step r is -alpha_r * g_r, the BB1 quotient
    // s's/s'y reduces to alpha_prev * |g_prev|^2 / (|g_prev|^2 - g_prev'g),
    // which converges far faster than a monotone grow/halve schedule on
    // ill-conditioned feature matrices while keeping every step a descent step
    auto pair_dot = [](const Array& aw, const Array& ab, const Array& bw, const Array& bb) {
        double s = 0.0;
        for (std::size_t i = 0; i < aw.numel(); ++i) s += aw.at(i) * bw.at(i);
        for (std::size_t i = 0; i < ab.numel(); ++i) s += ab.at(i) * bb.at(i);
        return s;
    };

    double alpha = 1.0;
    bool have_prev = false;
    Array gw_prev(Shape{d, c}), gb_prev(Shape{1, c});
    double alpha_prev = 0.0;
    for (int iter = 0; iter < max_iters; ++iter) {
        double f;
        ArrayMap grads;
        {
            Graph g(&ps);
            NodeRef loss = prob.build_loss(g);
            f = g.value(loss).at(0);
            grads = backward(g, loss, Array::scalar(1.0));
        }
        double gnorm = grad_l2_norm(grads);
        if (gnorm < tol) break;

        const Array& gw = grads.at("w");
        const Array& gb = grads.at("b");
        if (have_prev) {
            double pp = pair_dot(gw_prev, gb_prev, gw_prev, gb_prev);
            double pc = pair_dot(gw_prev, gb_prev, gw, gb);
            double denom = pp - pc;
            if (denom > 0.0 && std::isfinite(denom)) alpha = alpha_prev * pp / denom;
        }
        alpha = std::clamp(alpha, 1e-12, 1e3);

        Array w0 = ps.get("w"), b0 = ps.get("b");
        while (true) {
            for (std::size_t i = 0; i < w0.numel(); ++i)
                ps.get("w").at(i) = w0.at(i) - alpha * gw.at(i);
            for (std::size_t i = 0; i < b0.numel(); ++i)
                ps.get("b").at(i) = b0.at(i) - alpha * gb.at(i);
            if (loss_at() <= f - 1e-4 * alpha * gnorm * gnorm || alpha < 1e-12) break;
            alpha *= 0.5;
        }
        gw_prev = gw;
        gb_prev = gb;
        alpha_prev = alpha;
        have_prev = true;
    }

    LogRegModel m;
    m.w = ps.get("w");
    m.b = ps.get("b");
    m.l2 = l2;
    m.classes = std::move(classes);
    return m;
}

Array logreg_probs(const LogRegModel& m, const Array& feats) {
    if (feats.cols() != m.w.rows()) fail("logreg: feature width mismatch");
    Graph g;
    NodeRef logits = g.add(g.matmul(g.constant(feats), g.constant(m.w)), g.constant(m.b));
    return g.value(g.softmax_rows(logits));
}

std::vector<int> logreg_predict(const LogRegModel& m, const Array& feats) {
    Array p = logreg_probs(m, feats);
    std::vector<int> out;
    for (std::size_t i = 0; i < p.rows(); ++i) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < p.cols(); ++c)
            if (p.at2(i, c) > p.at2(i, best)) best = c;
        out.push_back(m.classes[best]);
    }
    return out;
}

EvalResult evaluate(const LogRegModel& m, const Array& feats, const std::vector<int>& labels) {
    if (feats.rows() != labels.size()) fail("evaluate: label count mismatch");
    EvalResult r;
    r.classes = m.classes;
    std::size_t c = m.classes.size();
    r.confusion.assign(c, std::vector<long>(c, 0));

    std::vector<int> pred = logreg_predict(m, feats);
    long correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto it = std::lower_bound(m.classes.begin(), m.classes.end(), labels[i]);
        if (it == m.classes.end() || *it != labels[i])
            fail("evaluate: label " + std::to_string(labels[i]) + " unknown to the model");
        std::size_t ti = std::size_t(it - m.classes.begin());
        std::size_t pi = std::size_t(
            std::lower_bound(m.classes.begin(), m.classes.end(), pred[i]) - m.classes.begin());
        r.confusion[ti][pi]++;
        if (ti == pi) correct++;
    }
    r.accuracy = labels.empty() ? 0.0 : double(correct) / double(labels.size());

    for (std::size_t ci = 0; ci < c; ++ci) {
        long tp = r.confusion[ci][ci], col = 0, row = 0;
        for (std::size_t o = 0; o < c; ++o) {
            col += r.confusion[o][ci];
            row += r.confusion[ci][o];
        }
        double prec = col > 0 ? double(tp) / double(col) : 0.0;
        double rec = row > 0 ? double(tp) / double(row) : 0.0;
        r.precision.push_back(prec);
        r.recall.push_back(rec);
        r.f1.push_back(prec + rec > 0 ? 2.0 * prec * rec / (prec + rec) : 0.0);
    }
    return r;
}

Array extract_features(const Policy& policy, const std::vector<SensorWindow>& windows,
                       int steps) {
    if (windows.empty()) fail("extract_features: no windows");
    std::size_t k = std::size_t(policy.config().token_dim);
    Array out(Shape{windows.size(), std::size_t(steps) * k});
    for (std::size_t i = 0; i < windows.size(); ++i) {
        EncoderOutput enc = policy.encode(windows[i].x);
        FeatureSequence seq = policy.deterministic_sequence(enc, steps);
        for (std::size_t e = 0; e < seq.tokens.numel(); ++e) out.at2(i, e) = seq.tokens.at(e);
    }
    return out;
}

std::string optimizer_name(Optimizer o) { return o == Optimizer::grpo ? "grpo" : "ppo"; }

Optimizer parse_optimizer(const std::string& s) {
    if (s == "grpo") return Optimizer::grpo;
    if (s == "ppo") return Optimizer::ppo;
    fail("unknown optimizer '" + s + "' (expected grpo or ppo)");
}

TransferRecord run_transfer(const std::vector<SensorWindow>& raw, const SplitPlan& plan,
                            const std::string& heldout, Optimizer opt,
                            const TransferConfig& cfg, std::uint64_t seed,
                            TransferArtifacts* artifacts) {
    if (cfg.grpo.tokens != std::size_t(cfg.policy.seq_len))
        fail("run_transfer: grpo.tokens must equal the policy sequence length");

    std::vector<SensorWindow> windows = raw;
    zscore_per_user(windows);
    SplitPlan p = plan;
    p.heldout = heldout;
    auto [train, held] = split_logo(windows, p);
    if (train.empty() || held.empty()) fail("run_transfer: empty split");

    // training must never see the held-out labels
    std::vector<int> held_labels;
    for (SensorWindow& w : held) {
        held_labels.push_back(w.y);
        w.y = -1;
    }
    std::vector<int> train_labels;
    for (const SensorWindow& w : train) train_labels.push_back(w.y);

    TransferRecord rec;
    rec.heldout = heldout;
    rec.seed = seed;
    rec.optimizer = opt;

    Rng rng(seed);
    Policy policy(cfg.policy);
    policy.init_params(rng);
    Policy ref(cfg.policy);
    refresh_reference(policy, ref);
    TmpProjection proj(std::size_t(cfg.policy.token_dim), std::size_t(cfg.policy.enc.d_model));
    AdamState popt(policy.params(), cfg.policy_adam);
    AdamState jopt(proj.params, cfg.proj_adam);

    ValueNet critic(std::size_t(cfg.policy.enc.d_model), std::size_t(cfg.policy.token_dim));
    if (opt == Optimizer::ppo) critic.init_params(rng);
    AdamState copt(critic.params(), cfg.critic_adam);

    int steps = int(cfg.grpo.tokens);
    auto probe = [&](int epoch) {
        Array tf = extract_features(policy, train, steps);
        LogRegModel model = fit_logreg(tf, train_labels, cfg.l2);
        Array hf = extract_features(policy, held, steps);
        EvalResult ev = evaluate(model, hf, held_labels);
        rec.trace.emplace_back(epoch, ev.accuracy);
        return ev;
    };

    int epochs = int(cfg.grpo.epochs);
    for (int e = 1; e <= epochs; ++e) {
        auto t0 = std::chrono::steady_clock::now();
        std::vector<RewardBreakdown> eb;
        std::vector<RewardBreakdown>* ebp = artifacts ? &eb : nullptr;
        refresh_reference(policy, ref, e, cfg.refresh_every);
        if (opt == Optimizer::grpo) {
            rec.epoch_metrics.push_back(train_epoch(train, policy, ref, proj, cfg.weights,
                                                    cfg.grpo, cfg.batch, popt, jopt, rng, ebp));
        } else {
            PpoMetrics pm = ppo_update(train, policy, ref, proj, critic, cfg.weights, cfg.grpo,
                                       cfg.gae, cfg.batch, popt, copt, jopt, rng, ebp);
            rec.epoch_metrics.push_back({pm.mean_reward, pm.r_cls, pm.r_inv, pm.r_tmp, pm.loss,
                                         pm.mean_kl, pm.grad_norm});
            rec.value_losses.push_back(pm.value_loss);
        }
        if (artifacts) {
            artifacts->epoch_breakdowns.push_back(std::move(eb));
            artifacts->epoch_ms.push_back(
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                    .count());
        }
        if (cfg.epoch_hook) cfg.epoch_hook(e, policy, proj, critic);
        if (cfg.probe_interval > 0 && e % cfg.probe_interval == 0 && e != epochs) probe(e);
    }

    rec.eval = probe(epochs);
    rec.accuracy = rec.eval.accuracy;
    if (artifacts) {
        artifacts->policy_params = policy.params();
        artifacts->proj_params = proj.params;
        if (opt == Optimizer::ppo) artifacts->critic_params = critic.params();
    }
    return rec;
}

ExperimentReport aggregate_report(Optimizer opt, int tokens,
                                  std::vector<TransferRecord> records) {
    if (records.empty()) fail("aggregate_report: no records");
    ExperimentReport rep;
    rep.optimizer = opt;
    rep.tokens = tokens;

    double mean = 0.0;
    for (const TransferRecord& r : records) mean += r.accuracy;
    mean /= double(records.size());
    double var = 0.0;
    for (const TransferRecord& r : records)
        var += (r.accuracy - mean) * (r.accuracy - mean);
    rep.mean_acc = mean;
    rep.std_acc = std::sqrt(var / double(records.size()));

    rep.classes = records[0].eval.classes;
    std::size_t c = rep.classes.size();
    std::vector<std::vector<long>> conf(c, std::vector<long>(c, 0));
    for (const TransferRecord& r : records) {
        if (r.eval.classes != rep.classes) fail("aggregate_report: class sets differ");
        for (std::size_t a = 0; a < c; ++a)
            for (std::size_t b = 0; b < c; ++b) conf[a][b] += r.eval.confusion[a][b];
    }
    for (std::size_t ci = 0; ci < c; ++ci) {
        long tp = conf[ci][ci], col = 0, row = 0;
        for (std::size_t o = 0; o < c; ++o) {
            col += conf[o][ci];
            row += conf[ci][o];
        }
        double prec = col > 0 ? double(tp) / double(col) : 0.0;
        double rec = row > 0 ? double(tp) / double(row) : 0.0;
        rep.precision.push_back(prec);
        rep.recall.push_back(rec);
        rep.f1.push_back(prec + rec > 0 ? 2.0 * prec * rec / (prec + rec) : 0.0);
    }
    rep.records = std::move(records);
    return rep;
}

std::vector<ExperimentReport> sweep_tokens(const std::vector<SensorWindow>& raw,
                                           const SplitPlan& plan,
                                           const std::vector<int>& token_grid,
                                           const std::vector<Optimizer>& opts,
                                           const std::vector<std::string>& heldouts,
                                           const std::vector<std::uint64_t>& seeds,
                                           const TransferConfig& base) {
    if (token_grid.empty() || opts.empty() || heldouts.empty() || seeds.empty())
        fail("sweep_tokens: empty grid dimension");
    std::vector<ExperimentReport> out;
    for (int s : token_grid) {
        if (s <= 0) fail("sweep_tokens: token counts must be positive");
        for (Optimizer opt : opts) {
            TransferConfig cfg = base;
            cfg.policy.seq_len = s;
            cfg.grpo.tokens = std::size_t(s);
            std::vector<TransferRecord> records;
            for (const std::string& held : heldouts)
                for (std::uint64_t seed : seeds)
                    records.push_back(run_transfer(raw, plan, held, opt, cfg, seed));
            out.push_back(aggregate_report(opt, s, std::move(records)));
        }
    }
    return out;
}

std::vector<Recording> make_synthetic(const SyntheticTaskSpec& spec, Rng& rng) {
    if (spec.users < 1 || spec.classes < 1 || spec.channels < 1)
        fail("make_synthetic: users, classes, channels must be positive");
    if (spec.base_freq.size() != std::size_t(spec.classes))
        fail("make_synthetic: one base frequency per class required");
    for (std::size_t a = 0; a < spec.base_freq.size(); ++a)
        for (std::size_t b = a + 1; b < spec.base_freq.size(); ++b)
            if (spec.base_freq[a] == spec.base_freq[b])
                fail("make_synthetic: base frequencies must be distinct");
    if (spec.amp_lo > spec.amp_hi || spec.noise < 0.0 || spec.sample_rate <= 0.0)
        fail("make_synthetic: invalid distortion ranges");
    if (spec.windows_per_cell < 1 || spec.window_len < 1 || spec.overlap < 0.0 ||
        spec.overlap >= 1.0)
        fail("make_synthetic: invalid window geometry");

    std::size_t stride = std::size_t(double(spec.window_len) * (1.0 - spec.overlap));
    if (stride == 0) fail("make_synthetic: overlap leaves an empty stride");
    std::size_t rows = spec.window_len + std::size_t(spec.windows_per_cell - 1) * stride;

    std::vector<double> amp(std::size_t(spec.users)), phase(std::size_t(spec.users));
    for (int u = 0; u < spec.users; ++u) {
        amp[u] = spec.amp_lo + (spec.amp_hi - spec.amp_lo) * rng.uniform();
        phase[u] = spec.phase_max * rng.uniform();
    }

    std::vector<Recording> recs;
    for (int u = 0; u < spec.users; ++u)
        for (int c = 0; c < spec.classes; ++c) {
            Recording rec;
            rec.user = u + 1;
            rec.sample_rate = spec.sample_rate;
            rec.samples = Array(Shape{rows, std::size_t(spec.channels)});
            rec.labels.assign(rows, c + 1);
            rec.source = "synthetic";
            double f = spec.base_freq[std::size_t(c)];
            for (std::size_t t = 0; t < rows; ++t)
                for (int ch = 0; ch < spec.channels; ++ch) {
                    double arg = 2.0 * std::numbers::pi * f *
                                     (double(t) / spec.sample_rate + phase[u]) +
                                 double(ch) * std::numbers::pi / 4.0;
                    double v = amp[u] * std::sin(arg);
                    if (spec.noise > 0.0) v += spec.noise * rng.normal();
                    rec.samples.at2(t, std::size_t(ch)) = v;
                }
            recs.push_back(std::move(rec));
        }
    return recs;
}

std::vector<SensorWindow> synthetic_windows(const SyntheticTaskSpec& spec, Rng& rng) {
    std::vector<SensorWindow> out;
    for (const Recording& rec : make_synthetic(spec, rng)) {
        std::vector<SensorWindow> w = make_windows(rec, spec.window_len, spec.overlap);
        out.insert(out.end(), std::make_move_iterator(w.begin()),
                   std::make_move_iterator(w.end()));
    }
    return out;
}

SplitPlan synthetic_plan(const SyntheticTaskSpec& spec) {
    SplitPlan plan;
    for (int u = 1; u <= spec.users; ++u)
        plan.groups.emplace_back("U" + std::to_string(u), std::vector<int>{u});
    plan.heldout = "U" + std::to_string(spec.users);
    return plan;
}

void save_synthetic_csv(const std::string& path, const std::vector<Recording>& recs,
                        const SyntheticTaskSpec& spec) {
    std::ofstream out(path);
    if (!out) fail("cannot write " + path);
    out << "subject,activity";
    for (int ch = 0; ch < spec.channels; ++ch) out << ",c" << ch;
    out << "\n";
    char buf[32];
    for (const Recording& rec : recs)
        for (std::size_t t = 0; t < rec.samples.rows(); ++t) {
            out << rec.user << "," << rec.labels[t];
            for (std::size_t ch = 0; ch < rec.samples.cols(); ++ch) {
                std::snprintf(buf, sizeof buf, "%.17g", rec.samples.at2(t, ch));
                out << "," << buf;
            }
            out << "\n";
        }
    if (!out) fail("write failed for " + path);

    std::ofstream sch(path + ".schema");
    if (!sch) fail("cannot write " + path + ".schema");
    sch << "channels=";
    for (int ch = 0; ch < spec.channels; ++ch) sch << (ch ? "," : "") << "c" << ch;
    sch << "\nlabel=activity\nuser=subject\nrate=" << spec.sample_rate << "\ndelimiter=,\n";
    for (int u = 1; u <= spec.users; ++u) sch << "group.U" << u << "=" << u << "\n";
    if (!sch) fail("write failed for " + path + ".schema");
}

}  // namespace ctfg
