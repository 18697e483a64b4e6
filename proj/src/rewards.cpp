#include "ctfg/rewards.hpp"

#include <set>

namespace ctfg {

namespace {

void check_batch(const std::vector<Array>& feats, const std::vector<int>& labels) {
    if (feats.empty()) fail("reward: empty batch");
    if (labels.size() != feats.size()) fail("reward: labels/features length mismatch");
    const Shape& s0 = feats[0].shape();
    for (const Array& f : feats)
        if (f.shape() != s0) fail("reward: inconsistent feature shapes");
}

double sq_frob_dist(const Array& a, const Array& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        double d = a.at(i) - b.at(i);
        acc += d * d;
    }
    return acc;
}

Array mean_of(const std::vector<const Array*>& group) {
    Array m = Array::zeros_like(*group[0]);
    for (const Array* a : group)
        for (std::size_t i = 0; i < m.numel(); ++i) m.at(i) += a->at(i);
    double inv = 1.0 / double(group.size());
    for (std::size_t i = 0; i < m.numel(); ++i) m.at(i) *= inv;
    return m;
}

}  // namespace

TmpProjection::TmpProjection(std::size_t token_dim_, std::size_t d_model_)
    : token_dim(token_dim_), d_model(d_model_) {
    params.add("w_proj", Array(Shape{token_dim, d_model}));
}

Array col_mean(const Array& m) {
    Array out(Shape{1, m.cols()});
    double inv = 1.0 / double(m.rows());
    for (std::size_t j = 0; j < m.cols(); ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < m.rows(); ++i) acc += m.at2(i, j);
        out.at(j) = acc * inv;
    }
    return out;
}

double reward_cls(const std::vector<Array>& feats, const std::vector<int>& labels) {
    check_batch(feats, labels);
    std::map<int, std::vector<const Array*>> by_class;
    for (std::size_t i = 0; i < feats.size(); ++i) by_class[labels[i]].push_back(&feats[i]);
    if (by_class.size() < 2) fail("reward_cls: needs at least two classes in the batch");
    std::vector<Array> centroids;
    for (auto& [c, group] : by_class) centroids.push_back(mean_of(group));
    std::size_t nc = centroids.size();
    double acc = 0.0;
    for (std::size_t a = 0; a < nc; ++a)
        for (std::size_t b = 0; b < nc; ++b)
            if (a != b) acc += sq_frob_dist(centroids[a], centroids[b]);
    return acc / (double(nc) * double(nc - 1));
}

double reward_inv(const std::vector<Array>& feats, const std::vector<int>& labels,
                  const std::vector<int>& users, std::map<int, double>* v_out,
                  std::map<int, double>* d_out) {
    check_batch(feats, labels);
    if (users.size() != feats.size()) fail("reward: users/features length mismatch");
    std::map<int, std::map<int, std::vector<const Array*>>> cells;  // class -> user -> samples
    for (std::size_t i = 0; i < feats.size(); ++i)
        cells[labels[i]][users[i]].push_back(&feats[i]);

    double total = 0.0;
    for (auto& [c, per_user] : cells) {
        std::vector<Array> ucent;
        double v_c = 0.0;
        for (auto& [u, group] : per_user) {
            Array cent = mean_of(group);
            double scatter = 0.0;
            for (const Array* a : group) scatter += sq_frob_dist(*a, cent);
            v_c += scatter / double(group.size());
            ucent.push_back(std::move(cent));
        }
        v_c /= double(per_user.size());

        double d_c = 0.0;
        if (ucent.size() > 1) {
            std::size_t pairs = 0;
            for (std::size_t a = 0; a < ucent.size(); ++a)
                for (std::size_t b = a + 1; b < ucent.size(); ++b) {
                    d_c += sq_frob_dist(ucent[a], ucent[b]);
                    ++pairs;
                }
            d_c /= double(pairs);
        }
        if (v_out) (*v_out)[c] = v_c;
        if (d_out) (*d_out)[c] = d_c;
        total -= v_c + d_c;
    }
    return total;
}

double reward_tmp(const std::vector<Array>& feats, const std::vector<Array>& enc,
                  const TmpProjection& proj) {
    if (feats.empty()) fail("reward: empty batch");
    if (enc.size() != feats.size()) fail("reward: encoder/features length mismatch");
    const Array& w = proj.w();
    double acc = 0.0;
    for (std::size_t i = 0; i < feats.size(); ++i) {
        if (feats[i].cols() != proj.token_dim || enc[i].cols() != proj.d_model)
            fail("reward_tmp: dimension mismatch with projection");
        Array zbar = col_mean(feats[i]);
        Array hbar = col_mean(enc[i]);
        for (std::size_t d = 0; d < proj.d_model; ++d) {
            double rec = 0.0;
            for (std::size_t q = 0; q < proj.token_dim; ++q) rec += zbar.at(q) * w.at2(q, d);
            double diff = rec - hbar.at(d);
            acc += diff * diff;
        }
    }
    return -acc / double(feats.size());
}

RewardBreakdown reward_total(const std::vector<Array>& feats, const std::vector<Array>& enc,
                             const std::vector<int>& labels, const std::vector<int>& users,
                             const TmpProjection& proj, const RewardWeights& weights) {
    if (weights.w_cls < 0 || weights.w_inv < 0 || weights.w_tmp < 0)
        fail("reward weights must be non-negative");
    RewardBreakdown out;
    out.r_cls = reward_cls(feats, labels);
    out.r_inv = reward_inv(feats, labels, users, &out.v_c, &out.d_c);
    out.r_tmp = reward_tmp(feats, enc, proj);
    out.total = weights.w_cls * out.r_cls + weights.w_inv * out.r_inv + weights.w_tmp * out.r_tmp;
    return out;
}

double fit_projection_step(const std::vector<Array>& feats, const std::vector<Array>& enc,
                           TmpProjection& proj, AdamState& opt) {
    if (feats.empty()) fail("reward: empty batch");
    if (enc.size() != feats.size()) fail("reward: encoder/features length mismatch");
    std::size_t n = feats.size();
    Array zb(Shape{n, proj.token_dim});
    Array hb(Shape{n, proj.d_model});
    for (std::size_t i = 0; i < n; ++i) {
        Array zbar = col_mean(feats[i]);
        Array hbar = col_mean(enc[i]);
        for (std::size_t q = 0; q < proj.token_dim; ++q) zb.at2(i, q) = zbar.at(q);
        for (std::size_t d = 0; d < proj.d_model; ++d) hb.at2(i, d) = hbar.at(d);
    }
    Graph g(&proj.params);
    NodeRef w = g.param("w_proj");
    NodeRef resid = g.sub(g.matmul(g.constant(zb), w), g.constant(hb));
    NodeRef loss = g.scale(g.sum_all(g.square(resid)), 1.0 / double(n));
    double err = g.value(loss).at(0);
    ArrayMap grads = backward(g, loss, Array::scalar(1.0));
    adam_step(proj.params, grads, opt);
    return err;
}

}  // namespace ctfg
