// Acceptance gate: one self-contained check per shipping criterion, each
// printing a single PASS/FAIL line. Exit status is nonzero if any check
// fails. Optional argv values select a subset by number, e.g. "acceptance 1 4".

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ctfg/checkpoint.hpp"
#include "ctfg/cli.hpp"
#include "ctfg/evalharness.hpp"
#include "ctfg/grpo.hpp"
#include "ctfg/ppobaseline.hpp"
#include "horizon_protocol.hpp"
#include "oracle_utils.hpp"

using namespace ctfg;
namespace fs = std::filesystem;
using oracle::bits_equal;
using oracle::fd_scalar;
using oracle::random_array;
using oracle::rel_err;

namespace {

double now_s() {
    using clock = std::chrono::steady_clock;
    static const clock::time_point t0 = clock::now();
    return std::chrono::duration<double>(clock::now() - t0).count();
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

// ---------------------------------------------------------------- criterion 1

bool crit_advantages(std::string& note) {
    const double t0 = now_s();
    Rng rng(1001);
    const std::size_t sizes[] = {2, 4, 8, 64};
    const double scales[] = {0.5, 5.0, 100.0};
    const double shifts[] = {-10.0, 0.0, 10.0};
    double worst_mean = 0.0, worst_affine = 0.0;
    long double pooled_sum = 0.0L, pooled_sq = 0.0L;
    std::size_t pooled_n = 0;

    for (int it = 0; it < 10000; ++it) {
        std::size_t n = sizes[it % 4];
        // guaranteed-spread draws keep the group std well away from zero so
        // the stabilizing epsilon cannot mask a normalization bug; the jitter
        // stays small next to the 100-unit ramp so no draw collapses the std
        std::vector<double> r(n);
        for (std::size_t i = 0; i < n; ++i)
            r[i] = 100.0 * (double(i) - double(n) / 2.0) + 5.0 * rng.normal();

        std::vector<double> adv = group_advantages(r, 1e-8);
        long double mean = 0.0L;
        for (double a : adv) mean += a;
        worst_mean = std::max(worst_mean, std::fabs(double(mean / (long double)(n))));

        for (double a : scales)
            for (double b : shifts) {
                std::vector<double> r2(n);
                for (std::size_t i = 0; i < n; ++i) r2[i] = a * r[i] + b;
                std::vector<double> adv2 = group_advantages(r2, 1e-8);
                for (std::size_t i = 0; i < n; ++i)
                    worst_affine = std::max(worst_affine, std::fabs(adv2[i] - adv[i]));
            }

        if (n == 64) {
            for (double a : adv) {
                pooled_sum += a;
                pooled_sq += (long double)(a)*a;
                ++pooled_n;
            }
        }
    }
    long double pm = pooled_sum / (long double)(pooled_n);
    double var = double(pooled_sq / (long double)(pooled_n)-pm * pm);
    double secs = now_s() - t0;

    note = "mean " + fmt(worst_mean) + ", affine " + fmt(worst_affine) + ", var " + fmt(var) +
           ", " + fmt(secs) + "s";
    return worst_mean < 1e-9 && worst_affine < 1e-9 && var >= 0.9 && var <= 1.1 && secs < 5.0;
}

// ---------------------------------------------------------------- criterion 2

// Central finite differences at sampled coordinates of every tensor in ps
// against one analytic backward pass; build must reconstruct the same loss
// from the store's current values on every call.
double fd_worst(ParamStore& ps, const std::function<NodeRef(Graph&)>& build, int points,
                Rng& rng, double h) {
    Graph g(&ps);
    NodeRef loss = build(g);
    ArrayMap grads = backward(g, loss, Array::scalar(1.0));
    auto value_of = [&]() {
        Graph g2(&ps);
        return g2.value(build(g2)).at(0);
    };
    std::vector<std::pair<std::string, std::size_t>> coords;
    for (const auto& [name, arr] : ps.all())
        for (std::size_t i = 0; i < arr.numel(); ++i) coords.emplace_back(name, i);
    double worst = 0.0;
    for (int p = 0; p < points; ++p) {
        const auto& [name, idx] =
            coords[std::min(coords.size() - 1, std::size_t(rng.uniform() * coords.size()))];
        double fd = fd_scalar(value_of, ps.get(name).at(idx), h);
        worst = std::max(worst, rel_err(grads.at(name).at(idx), fd));
    }
    return worst;
}

bool crit_gradients(std::string& note) {
    const double t0 = now_s();
    Rng rng(2002);
    double worst = 0.0;
    std::string worst_op = "none";
    auto run = [&](const char* name, ParamStore& ps, const std::function<NodeRef(Graph&)>& b) {
        double e = fd_worst(ps, b, 20, rng, 1e-5);
        if (e > worst) {
            worst = e;
            worst_op = name;
        }
    };
    // weighted-sum head makes every output element matter
    auto head = [](Graph& g, NodeRef y, const Array& c) {
        return g.sum_all(g.mul(y, g.constant(c)));
    };

    {  // elementwise pairs, matmul both sides, shape ops
        Array c34 = random_array({3, 4}, rng), w34 = random_array({3, 4}, rng);
        Array row = random_array({1, 4}, rng);
        Array c45 = random_array({4, 5}, rng), c35 = random_array({3, 5}, rng);
        Array c26 = random_array({2, 6}, rng), c43 = random_array({4, 3}, rng);
        Array c53 = random_array({5, 3}, rng), c33 = random_array({3, 3}, rng);
        Array c3x5 = random_array({3, 5}, rng);
        auto with_w = [&](Shape shape, double lo, double hi) {
            ParamStore ps;
            ps.add("w", random_array(std::move(shape), rng, lo, hi));
            return ps;
        };
        ParamStore ps;

        ps = with_w({3, 4}, -1, 1);
        run("add", ps, [&](Graph& g) {
            return head(g, g.add(g.param("w"), g.constant(w34)), c34);
        });
        ps = with_w({3, 4}, -1, 1);
        run("add_row_broadcast", ps, [&](Graph& g) {
            return head(g, g.add(g.param("w"), g.constant(row)), c34);
        });
        ps = with_w({3, 4}, -1, 1);
        run("sub", ps, [&](Graph& g) {
            return head(g, g.sub(g.constant(w34), g.param("w")), c34);
        });
        ps = with_w({3, 4}, -1, 1);
        run("mul", ps, [&](Graph& g) {
            return head(g, g.mul(g.param("w"), g.constant(w34)), c34);
        });
        ps = with_w({3, 4}, -1, 1);
        run("matmul_left", ps, [&](Graph& g) {
            return head(g, g.matmul(g.param("w"), g.constant(c45)), c35);
        });
        ps = with_w({4, 5}, -1, 1);
        run("matmul_right", ps, [&](Graph& g) {
            return head(g, g.matmul(g.constant(c34), g.param("w")), c35);
        });
        ps = with_w({3, 4}, -1, 1);
        run("transpose", ps, [&](Graph& g) { return head(g, g.transpose(g.param("w")), c43); });
        ps = with_w({3, 4}, -1, 1);
        run("reshape", ps, [&](Graph& g) {
            return head(g, g.reshape(g.param("w"), Shape{2, 6}), c26);
        });
        ps = with_w({2, 3}, -1, 1);
        run("concat_rows", ps, [&](Graph& g) {
            return head(g, g.concat({g.param("w"), g.constant(c33)}, 0), c53);
        });
        ps = with_w({3, 2}, -1, 1);
        run("concat_cols", ps, [&](Graph& g) {
            return head(g, g.concat({g.param("w"), g.constant(c33)}, 1), c3x5);
        });
    }
    {  // nonlinearities and normalizers
        Array c46 = random_array({4, 6}, rng), c35 = random_array({3, 5}, rng);
        ParamStore ps;
        auto with_w = [&](Shape shape, double lo, double hi) {
            ParamStore p;
            p.add("w", random_array(std::move(shape), rng, lo, hi));
            return p;
        };
        ps = with_w({4, 6}, -2, 2);
        run("softmax_rows", ps, [&](Graph& g) {
            return head(g, g.softmax_rows(g.param("w")), c46);
        });
        ps = with_w({4, 6}, -2, 2);
        run("layer_norm_rows", ps, [&](Graph& g) {
            return head(g, g.layer_norm_rows(g.param("w")), c46);
        });
        ps = with_w({3, 5}, -2, 2);
        run("gelu", ps, [&](Graph& g) { return head(g, g.gelu(g.param("w")), c35); });
        ps = with_w({3, 5}, -1.5, 1.5);
        run("exp", ps, [&](Graph& g) { return head(g, g.exp(g.param("w")), c35); });
        ps = with_w({3, 5}, 0.4, 3.0);
        run("log", ps, [&](Graph& g) { return head(g, g.log(g.param("w")), c35); });
        ps = with_w({3, 5}, -1, 1);
        run("square", ps, [&](Graph& g) { return head(g, g.square(g.param("w")), c35); });
        ps = with_w({3, 5}, -1, 1);
        run("scale", ps, [&](Graph& g) { return head(g, g.scale(g.param("w"), -1.7), c35); });
        ps = with_w({3, 5}, -1, 1);
        run("add_scalar", ps, [&](Graph& g) {
            return head(g, g.add_scalar(g.param("w"), 0.9), c35);
        });
    }
    {  // reductions
        Array row5 = random_array({1, 5}, rng), col3 = random_array({3, 1}, rng);
        ParamStore ps;
        auto with_w = [&]() {
            ParamStore p;
            p.add("w", random_array({3, 5}, rng));
            return p;
        };
        ps = with_w();
        run("sum_all", ps, [&](Graph& g) { return g.scale(g.sum_all(g.param("w")), 0.7); });
        ps = with_w();
        run("mean_all", ps, [&](Graph& g) { return g.scale(g.mean_all(g.param("w")), 1.3); });
        ps = with_w();
        run("sum_axis0", ps, [&](Graph& g) {
            return head(g, g.sum_axis(g.param("w"), 0), row5);
        });
        ps = with_w();
        run("sum_axis1", ps, [&](Graph& g) {
            return head(g, g.sum_axis(g.param("w"), 1), col3);
        });
        ps = with_w();
        run("mean_axis0", ps, [&](Graph& g) {
            return head(g, g.mean_axis(g.param("w"), 0), row5);
        });
        ps = with_w();
        run("mean_axis1", ps, [&](Graph& g) {
            return head(g, g.mean_axis(g.param("w"), 1), col3);
        });
    }
    {  // piecewise ops, sampled clear of their kinks so FD sees one branch
        Array w0 = random_array({3, 4}, rng), c34 = random_array({3, 4}, rng);
        Array mask({3, 4}), other({3, 4});
        for (std::size_t i = 0; i < w0.numel(); ++i) {
            mask.at(i) = rng.uniform() < 0.5 ? 1.0 : 0.0;
            other.at(i) = w0.at(i) + (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.2, 0.6);
        }
        ParamStore ps;
        ps.add("w", w0);
        run("masked_fill", ps, [&](Graph& g) {
            return head(g, g.masked_fill(g.param("w"), g.constant(mask), -0.9), c34);
        });
        ps = ParamStore();
        ps.add("w", w0);
        run("minimum", ps, [&](Graph& g) {
            return head(g, g.minimum(g.param("w"), g.constant(other)), c34);
        });
        ps = ParamStore();
        ps.add("w", w0);
        run("less", ps, [&](Graph& g) {
            return head(g, g.add(g.param("w"), g.less(g.param("w"), g.constant(other))), c34);
        });
        ps = ParamStore();
        ps.add("w", w0);
        run("greater", ps, [&](Graph& g) {
            return head(g, g.add(g.param("w"), g.greater(g.param("w"), g.constant(other))),
                        c34);
        });
        Array wics({3, 4});  // clamp: keep 0.06 away from both edges
        for (std::size_t i = 0; i < wics.numel(); ++i) {
            double v;
            do
                v = rng.uniform(-1.0, 1.0);
            while (std::fabs(std::fabs(v) - 0.5) < 0.06);
            wics.at(i) = v;
        }
        ps = ParamStore();
        ps.add("w", wics);
        run("clamp", ps, [&](Graph& g) {
            return head(g, g.clamp(g.param("w"), -0.5, 0.5), c34);
        });
    }

    // end-to-end surrogate: encoder -> teacher-forced decoder -> log-probs ->
    // KL rows -> clipped objective, differentiated through every parameter
    {
        PolicyConfig pc;
        pc.sensor_dim = 2;
        pc.window_len = 6;
        pc.enc.d_model = 8;
        pc.enc.heads = 2;
        pc.enc.ff = 16;
        pc.token_dim = 3;
        pc.seq_len = 3;
        const std::size_t s = 3, k = 3, G = 2;

        Policy policy(pc), reference(pc);
        Rng pr(77), rr(78);
        policy.init_params(pr);
        reference.init_params(rr);
        Array x = random_array({6, 2}, rng);

        EncoderOutput enc = policy.encode(x);
        std::vector<FeatureSequence> seqs;
        for (std::size_t gg = 0; gg < G; ++gg)
            seqs.push_back(policy.sample_sequence(enc, int(s), rng));

        EncoderOutput ref_h = reference.encode(x);
        std::vector<Array> prefixes, ref_mu, ref_ls;
        Array old_lp(Shape{G, s});
        for (std::size_t gg = 0; gg < G; ++gg) {
            const FeatureSequence& seq = seqs[gg];
            std::vector<double> pdata(seq.tokens.data(), seq.tokens.data() + (s - 1) * k);
            prefixes.emplace_back(Shape{s - 1, k}, std::move(pdata));
            Graph gr(&reference.params());
            Policy::DecoderOut rout =
                reference.build_decoder(gr, gr.constant(ref_h.h), gr.constant(prefixes[gg]));
            ref_mu.push_back(gr.value(rout.mu));
            ref_ls.push_back(gr.value(rout.log_sigma));
            for (std::size_t j = 0; j < s; ++j) old_lp.at2(gg, j) = seq.step_log_prob[j];
        }
        std::vector<double> adv{0.9, -0.6};
        GrpoConfig gc;
        gc.group = G;
        gc.tokens = s;

        auto build = [&](Graph& g) {
            NodeRef h = policy.build_encoder(g, g.constant(x));
            std::vector<NodeRef> lp_rows, kl_row_nodes;
            for (std::size_t gg = 0; gg < G; ++gg) {
                Policy::DecoderOut out = policy.build_decoder(g, h, g.constant(prefixes[gg]));
                NodeRef lp = policy.sequence_log_prob(g, out, g.constant(seqs[gg].tokens));
                NodeRef klr = kl_rows(g, out, ref_mu[gg], ref_ls[gg]);
                lp_rows.push_back(g.transpose(lp));
                kl_row_nodes.push_back(g.transpose(klr));
            }
            return grpo_loss(g, g.concat(lp_rows, 0), old_lp, adv, g.concat(kl_row_nodes, 0),
                             gc);
        };
        double e = fd_worst(policy.params(), build, 20, rng, 1e-5);
        if (e > worst) {
            worst = e;
            worst_op = "surrogate_end_to_end";
        }
    }

    double secs = now_s() - t0;
    note = "worst rel err " + fmt(worst) + " (" + worst_op + "), " + fmt(secs) + "s";
    return worst < 1e-4 && secs < 60.0;
}

// ---------------------------------------------------------------- criterion 3

bool crit_reward_oracles(std::string& note) {
    const double t0 = now_s();
    Rng rng(3003);
    double worst = 0.0;
    for (int batch = 0; batch < 100; ++batch) {
        std::size_t B = 2 + std::size_t(rng.uniform() * 31);  // <= 32
        int classes = 2 + int(rng.uniform() * 3);             // <= 4
        int users = 1 + int(rng.uniform() * 3);               // <= 3
        std::size_t s = 2 + std::size_t(rng.uniform() * 3);
        std::size_t k = 2 + std::size_t(rng.uniform() * 4);
        std::size_t l = 4 + std::size_t(rng.uniform() * 5);
        std::size_t d = 3 + std::size_t(rng.uniform() * 4);

        std::vector<Array> feats, enc;
        std::vector<int> labels, uids;
        for (std::size_t i = 0; i < B; ++i) {
            feats.push_back(random_array({s, k}, rng));
            enc.push_back(random_array({l, d}, rng));
            labels.push_back(1 + int(rng.uniform() * classes));
            uids.push_back(1 + int(rng.uniform() * users));
        }
        labels[0] = 1;
        labels[1] = 2;  // class-separation term needs two distinct classes

        TmpProjection proj(k, d);
        proj.params.get("w_proj") = random_array({k, d}, rng, -0.5, 0.5);
        RewardWeights w;

        // brute-force references in extended precision, straight loops
        std::set<int> cset(labels.begin(), labels.end());
        std::size_t n = s * k;
        std::map<int, std::vector<long double>> class_mu;
        std::map<int, long double> class_n;
        for (std::size_t i = 0; i < B; ++i) {
            auto& mu = class_mu[labels[i]];
            mu.resize(n, 0.0L);
            for (std::size_t e = 0; e < n; ++e) mu[e] += feats[i].at(e);
            class_n[labels[i]] += 1.0L;
        }
        for (auto& [c, mu] : class_mu)
            for (auto& v : mu) v /= class_n[c];
        long double cls = 0.0L;
        for (int c1 : cset)
            for (int c2 : cset) {
                if (c1 == c2) continue;
                for (std::size_t e = 0; e < n; ++e) {
                    long double dlt = class_mu[c1][e] - class_mu[c2][e];
                    cls += dlt * dlt;
                }
            }
        cls /= (long double)(cset.size()) * (long double)(cset.size() - 1);

        std::map<std::pair<int, int>, std::vector<long double>> uc_mu;
        std::map<std::pair<int, int>, long double> uc_n;
        for (std::size_t i = 0; i < B; ++i) {
            auto key = std::make_pair(uids[i], labels[i]);
            auto& mu = uc_mu[key];
            mu.resize(n, 0.0L);
            for (std::size_t e = 0; e < n; ++e) mu[e] += feats[i].at(e);
            uc_n[key] += 1.0L;
        }
        for (auto& [key, mu] : uc_mu)
            for (auto& v : mu) v /= uc_n[key];
        long double inv = 0.0L;
        for (int c : cset) {
            std::vector<int> us;
            for (auto& [key, mu] : uc_mu)
                if (key.second == c) us.push_back(key.first);
            long double vc = 0.0L;
            for (int u : us) {
                long double scatter = 0.0L, cnt = 0.0L;
                for (std::size_t i = 0; i < B; ++i) {
                    if (uids[i] != u || labels[i] != c) continue;
                    const auto& mu = uc_mu[{u, c}];
                    for (std::size_t e = 0; e < n; ++e) {
                        long double dlt = feats[i].at(e) - mu[e];
                        scatter += dlt * dlt;
                    }
                    cnt += 1.0L;
                }
                vc += scatter / cnt;
            }
            vc /= (long double)(us.size());
            long double dc = 0.0L;
            if (us.size() >= 2) {
                long double pairs = 0.0L;
                for (std::size_t a = 0; a < us.size(); ++a)
                    for (std::size_t b = a + 1; b < us.size(); ++b) {
                        const auto& ma = uc_mu[{us[a], c}];
                        const auto& mb = uc_mu[{us[b], c}];
                        for (std::size_t e = 0; e < n; ++e) {
                            long double dlt = ma[e] - mb[e];
                            dc += dlt * dlt;
                        }
                        pairs += 1.0L;
                    }
                dc /= pairs;
            }
            inv -= vc + dc;
        }

        long double tmp = 0.0L;
        for (std::size_t i = 0; i < B; ++i) {
            std::vector<long double> zbar(k, 0.0L), hbar(d, 0.0L);
            for (std::size_t r = 0; r < s; ++r)
                for (std::size_t e = 0; e < k; ++e) zbar[e] += feats[i].at2(r, e);
            for (auto& v : zbar) v /= (long double)(s);
            for (std::size_t r = 0; r < l; ++r)
                for (std::size_t e = 0; e < d; ++e) hbar[e] += enc[i].at2(r, e);
            for (auto& v : hbar) v /= (long double)(l);
            for (std::size_t e = 0; e < d; ++e) {
                long double proj_e = 0.0L;
                for (std::size_t j = 0; j < k; ++j)
                    proj_e += zbar[j] * (long double)(proj.w().at2(j, e));
                long double dlt = proj_e - hbar[e];
                tmp += dlt * dlt;
            }
        }
        tmp = -tmp / (long double)(B);

        RewardBreakdown rb = reward_total(feats, enc, labels, uids, proj, w);
        worst = std::max({worst, std::fabs(rb.r_cls - double(cls)),
                          std::fabs(rb.r_inv - double(inv)), std::fabs(rb.r_tmp - double(tmp)),
                          std::fabs(rb.total - double(w.w_cls * cls + w.w_inv * inv +
                                                      w.w_tmp * tmp))});
    }
    double secs = now_s() - t0;
    note = "worst abs diff " + fmt(worst) + ", " + fmt(secs) + "s";
    return worst < 1e-10 && secs < 30.0;
}

// ---------------------------------------------------------------- criterion 4

bool crit_gae(std::string& note) {
    const double t0 = now_s();
    Rng rng(4004);
    double worst = 0.0;
    for (int it = 0; it < 1000; ++it) {
        std::size_t s = 1 + std::size_t(rng.uniform() * 20);
        GaeConfig cfg;
        if (it % 2) {
            cfg.gamma = rng.uniform(0.5, 1.0);
            cfg.lambda = rng.uniform(0.5, 1.0);
        }
        std::vector<double> r(s), v(s + 1);
        for (auto& x : r) x = rng.uniform(-2.0, 2.0);
        for (auto& x : v) x = rng.uniform(-2.0, 2.0);
        v[s] = 0.0;

        std::vector<double> adv = gae_advantages(r, v, cfg);
        if (adv.size() != s) {
            note = "wrong advantage count";
            return false;
        }
        for (std::size_t j = 0; j < s; ++j) {
            long double acc = 0.0L, wgt = 1.0L;
            for (std::size_t t = j; t < s; ++t) {
                long double delta =
                    (long double)(r[t]) + (long double)(cfg.gamma) * v[t + 1] - v[t];
                acc += wgt * delta;
                wgt *= (long double)(cfg.gamma) * cfg.lambda;
            }
            worst = std::max(worst, std::fabs(adv[j] - double(acc)));
        }
    }

    // undiscounted telescoping on dyadic inputs: the first advantage must be
    // the exact return minus the first value, bit for bit
    bool telescoped = true;
    for (int it = 0; it < 200; ++it) {
        std::size_t s = 1 + std::size_t(rng.uniform() * 20);
        std::vector<double> r(s), v(s + 1);
        for (auto& x : r) x = double(int(rng.uniform() * 33) - 16) / 8.0;
        for (auto& x : v) x = double(int(rng.uniform() * 33) - 16) / 8.0;
        v[s] = 0.0;
        GaeConfig cfg;
        cfg.gamma = 1.0;
        cfg.lambda = 1.0;
        double ret = 0.0;
        for (double x : r) ret += x;
        std::vector<double> adv = gae_advantages(r, v, cfg);
        if (adv[0] != ret - v[0]) telescoped = false;
    }

    double secs = now_s() - t0;
    note = "worst abs diff " + fmt(worst) + ", telescoping " +
           (telescoped ? "exact" : "BROKEN") + ", " + fmt(secs) + "s";
    return worst < 1e-12 && telescoped;
}

// ---------------------------------------------------------------- criterion 5

bool crit_causality(std::string& note) {
    const double t0 = now_s();
    PolicyConfig pc;  // stock dimensions, ten-step sequences
    const std::size_t s = std::size_t(pc.seq_len), k = std::size_t(pc.token_dim);
    Rng rng(5005);
    int checked = 0;
    for (int trial = 0; trial < 3; ++trial) {
        Policy policy(pc);
        policy.init_params(rng);
        for (int xi = 0; xi < 2; ++xi) {
            Array x = random_array({std::size_t(pc.window_len), std::size_t(pc.sensor_dim)},
                                   rng);
            Array tokens = random_array({s, k}, rng);

            auto decode = [&](const Array& toks) {
                std::vector<double> pdata(toks.data(), toks.data() + (s - 1) * k);
                Array prefix(Shape{s - 1, k}, std::move(pdata));
                Graph g(&policy.params());
                NodeRef h = policy.build_encoder(g, g.constant(x));
                Policy::DecoderOut out = policy.build_decoder(g, h, g.constant(prefix));
                return std::make_pair(g.value(out.mu), g.value(out.log_sigma));
            };
            auto [mu0, ls0] = decode(tokens);

            for (std::size_t p = 0; p + 1 < s; ++p) {
                Array t2 = tokens;
                for (std::size_t e = 0; e < k; ++e) t2.at2(p, e) += 0.373 + double(e) * 0.05;
                auto [mu2, ls2] = decode(t2);
                // rows emitted at or before the perturbed position are
                // untouched, later rows must react
                if (std::memcmp(mu0.data(), mu2.data(), (p + 1) * k * sizeof(double)) != 0 ||
                    std::memcmp(ls0.data(), ls2.data(), (p + 1) * k * sizeof(double)) != 0) {
                    note = "leak at perturbed token " + std::to_string(p);
                    return false;
                }
                bool reacted = std::memcmp(mu0.data() + (p + 1) * k, mu2.data() + (p + 1) * k,
                                           (s - p - 1) * k * sizeof(double)) != 0;
                if (!reacted) {
                    note = "no downstream effect from token " + std::to_string(p);
                    return false;
                }
                ++checked;
            }
        }
    }
    double secs = now_s() - t0;
    note = std::to_string(checked) + " perturbations clean, " + fmt(secs) + "s";
    return true;
}

// ---------------------------------------------------------------- criterion 6

bool crit_end_to_end(std::string& note) {
    const double t0 = now_s();
    SyntheticTaskSpec spec;  // stock task: 4 users, 3 classes, 60 windows/cell
    Rng gen(99);
    std::vector<SensorWindow> windows = synthetic_windows(spec, gen);
    SplitPlan plan = synthetic_plan(spec);

    TransferConfig cfg;  // stock policy and training settings, 100 epochs
    cfg.probe_interval = 0;
    TransferRecord rec = run_transfer(windows, plan, plan.heldout, Optimizer::grpo, cfg, 1);

    double first10 = 0.0, last10 = 0.0;
    std::size_t e = rec.epoch_metrics.size();
    for (std::size_t i = 0; i < 10; ++i) {
        first10 += rec.epoch_metrics[i].mean_reward / 10.0;
        last10 += rec.epoch_metrics[e - 10 + i].mean_reward / 10.0;
    }
    double secs = now_s() - t0;
    note = "held-out acc " + fmt(rec.accuracy) + ", reward " + fmt(first10) + " -> " +
           fmt(last10) + ", " + fmt(secs) + "s";
    return rec.accuracy >= 0.85 && last10 > first10 && secs <= 600.0;
}

// ---------------------------------------------------------------- criterion 7

bool crit_horizon(std::string& note) {
    const double t0 = now_s();
    Rng gen(99);
    std::vector<SensorWindow> windows = synthetic_windows(horizon::task(), gen);
    SplitPlan plan = synthetic_plan(horizon::task());

    auto accs = [&](Optimizer opt, int tokens) {
        std::vector<double> out;
        TransferConfig cfg = horizon::transfer(tokens);
        for (std::uint64_t seed : horizon::seeds)
            out.push_back(
                run_transfer(windows, plan, horizon::heldout, opt, cfg, seed).accuracy);
        return out;
    };
    auto mean_of = [](const std::vector<double>& xs) {
        double m = 0.0;
        for (double x : xs) m += x;
        return m / double(xs.size());
    };
    auto std_of = [&](const std::vector<double>& xs) {
        double m = mean_of(xs), v = 0.0;
        for (double x : xs) v += (x - m) * (x - m);
        return std::sqrt(v / double(xs.size()));
    };

    std::vector<double> grpo_long = accs(Optimizer::grpo, horizon::long_tokens);
    std::vector<double> ppo_long = accs(Optimizer::ppo, horizon::long_tokens);
    std::vector<double> grpo_short = accs(Optimizer::grpo, horizon::short_tokens);

    double sg = std_of(grpo_long), sp = std_of(ppo_long);
    double mg_long = mean_of(grpo_long), mg_short = mean_of(grpo_short);
    double shift = std::fabs(mg_long - mg_short);
    double secs = now_s() - t0;
    note = "std " + fmt(sg) + " (group-rel) vs " + fmt(sp) + " (critic), long-short mean " +
           fmt(mg_long) + " vs " + fmt(mg_short) + ", " + fmt(secs) + "s [ref " +
           fmt(horizon::ref_grpo_std_20) + "/" + fmt(horizon::ref_ppo_std_20) + "]";
    return sg <= sp && shift <= horizon::mean_shift_cap;
}

// ---------------------------------------------------------------- criterion 8

int run_cli_vec(const std::vector<std::string>& args) {
    std::vector<const char*> argv{"ctfg"};
    for (const std::string& a : args) argv.push_back(a.c_str());
    return cli_main(int(argv.size()), argv.data());
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

bool crit_determinism(std::string& note) {
    const double t0 = now_s();
    fs::path root = "acceptance_out";
    fs::remove_all(root / "det1");
    fs::remove_all(root / "det2");
    std::vector<std::string> common{
        "train",         "--seed",
        "11",            "--epochs",
        "3",             "--set",
        "synth.users=2", "--set",
        "synth.windows_per_cell=6",
        "--set",         "synth.window_len=25",
        "--set",         "policy.window_len=25",
        "--set",         "enc.d_model=16",
        "--set",         "enc.ff=32",
        "--set",         "policy.token_dim=4",
        "--set",         "grpo.tokens=4",
        "--set",         "policy.seq_len=4",
        "--set",         "grpo.group_size=4",
        "--set",         "probe.interval=0"};
    auto with_out = [&](const std::string& out) {
        std::vector<std::string> a = common;
        a.insert(a.end(), {"--out", out});
        return a;
    };
    if (run_cli_vec(with_out((root / "det1").string())) != 0 ||
        run_cli_vec(with_out((root / "det2").string())) != 0) {
        note = "training command failed";
        return false;
    }
    std::string base = "synthetic_grpo_4_U2_11";
    bool csv_same = slurp(root / "det1" / (base + ".csv")) ==
                    slurp(root / "det2" / (base + ".csv"));
    bool ckpt_same = slurp(root / "det1" / (base + ".ckpt")) ==
                     slurp(root / "det2" / (base + ".ckpt"));
    bool nonempty = !slurp(root / "det1" / (base + ".ckpt")).empty();
    double secs = now_s() - t0;
    note = std::string("metrics ") + (csv_same ? "identical" : "DIFFER") + ", checkpoint " +
           (ckpt_same ? "identical" : "DIFFER") + ", " + fmt(secs) + "s";
    return csv_same && ckpt_same && nonempty;
}

// ---------------------------------------------------------------- criterion 9

bool crit_round_trip(std::string& note) {
    const double t0 = now_s();
    fs::path root = "acceptance_out";
    fs::create_directories(root);

    PolicyConfig pc;
    pc.sensor_dim = 2;
    pc.window_len = 8;
    pc.enc.d_model = 8;
    pc.enc.heads = 2;
    pc.enc.ff = 16;
    pc.token_dim = 3;
    pc.seq_len = 4;
    Rng rng(9009);
    Policy a(pc);
    a.init_params(rng);

    std::vector<SensorWindow> windows(5);
    for (auto& w : windows) {
        w.x = random_array({8, 2}, rng);
        w.y = 1;
        w.user = 1;
    }
    Array feats_a = extract_features(a, windows, pc.seq_len);

    fs::path ckpt = root / "round_trip.ckpt";
    save_params(ckpt.string(), a.params());
    Policy b(pc);
    b.init_params(rng);  // different state before the load
    for (auto& [name, arr] : load_arrays(ckpt.string())) b.params().get(name) = std::move(arr);
    Array feats_b = extract_features(b, windows, pc.seq_len);
    bool feats_ok = bits_equal(feats_a, feats_b);

    int count_fail = -1;
    for (int it = 0; it < 100; ++it) {
        std::size_t T = 1 + std::size_t(rng.uniform() * 400);
        std::size_t l = 1 + std::size_t(rng.uniform() * 50);
        double ov = rng.uniform(0.0, 0.95);
        std::size_t stride = std::size_t(std::floor(double(l) * (1.0 - ov)));
        if (stride == 0) {
            --it;
            continue;
        }
        std::size_t expect = T >= l ? (T - l) / stride + 1 : 0;

        Recording rec;
        rec.user = 1;
        rec.sample_rate = 25.0;
        rec.samples = random_array({T, 2}, rng);
        rec.labels.assign(T, 1);
        if (window_count(T, l, ov) != expect ||
            make_windows(rec, l, ov).size() != expect) {
            count_fail = it;
            break;
        }
    }

    double secs = now_s() - t0;
    note = std::string("features ") + (feats_ok ? "bit-exact" : "DIFFER") + ", window counts " +
           (count_fail < 0 ? "match" : "wrong at case " + std::to_string(count_fail)) + ", " +
           fmt(secs) + "s";
    return feats_ok && count_fail < 0;
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> pick;
    for (int i = 1; i < argc; ++i) pick.insert(std::atoi(argv[i]));

    struct Entry {
        int id;
        const char* label;
        bool (*run)(std::string&);
    };
    const Entry entries[] = {
        {1, "group advantage properties", crit_advantages},
        {2, "gradients vs finite differences", crit_gradients},
        {3, "reward oracle equivalence", crit_reward_oracles},
        {4, "gae oracle equivalence", crit_gae},
        {5, "decoder causality", crit_causality},
        {6, "synthetic end-to-end transfer", crit_end_to_end},
        {7, "optimizer horizon comparison", crit_horizon},
        {8, "train command determinism", crit_determinism},
        {9, "checkpoint and window round-trip", crit_round_trip},
    };

    bool all_ok = true;
    for (const Entry& e : entries) {
        if (!pick.empty() && !pick.count(e.id)) continue;
        std::string detail;
        bool ok = false;
        try {
            ok = e.run(detail);
        } catch (const std::exception& ex) {
            detail = std::string("exception: ") + ex.what();
        }
        std::printf("criterion %d %-33s %s  (%s)\n", e.id, e.label, ok ? "PASS" : "FAIL",
                    detail.c_str());
        std::fflush(stdout);
        all_ok = all_ok && ok;
    }
    return all_ok ? 0 : 1;
}
