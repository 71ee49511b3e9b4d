#include "ecoc/critic.hpp"

#include <algorithm>
#include <cmath>

namespace ecoc::critic {

void CriticHead::init(int dim, Rng& rng) {
    h = linalg::Mat(dim, dim);
    b.assign(dim, 0.0);
    const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
    for (double& v : h.a) v = (2.0 * rng.uniform01() - 1.0) * bound;
}

Vec CriticHead::features(std::span<const double> action) const {
    Vec out(b.size());
    linalg::matvec(h, action, out);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

Nets Nets::init(int n_items, int dim, int hidden_dim, Rng& rng) {
    Nets nets;
    nets.emb = EmbeddingMatrix(n_items, dim);
    nets.emb.init_random(rng);
    nets.enc.init(dim, hidden_dim, rng);
    nets.proj.init(dim, hidden_dim, rng);
    nets.h1.init(dim, rng);
    nets.h2.init(dim, rng);
    return nets;
}

const CriticHead& Nets::head(int which) const {
    if (which == 1) return h1;
    if (which == 2) return h2;
    throw ValidationError("critic head index must be 1 or 2");
}

TargetSet TargetSet::from(const Nets& nets, bool with_embeddings) {
    TargetSet t;
    t.enc = nets.enc;
    t.proj = nets.proj;
    t.h1 = nets.h1;
    t.h2 = nets.h2;
    if (with_embeddings) t.emb = nets.emb;
    return t;
}

NetGrads NetGrads::zeros_like(const Nets& nets) {
    NetGrads g;
    g.emb = linalg::Mat(nets.emb.n_items, nets.emb.dim);
    g.w1 = linalg::Mat(nets.enc.w1.rows, nets.enc.w1.cols);
    g.b1.assign(nets.enc.b1.size(), 0.0);
    g.lambda = 0.0;
    g.w2 = linalg::Mat(nets.proj.w2.rows, nets.proj.w2.cols);
    g.b2.assign(nets.proj.b2.size(), 0.0);
    g.h1_h = linalg::Mat(nets.h1.h.rows, nets.h1.h.cols);
    g.h1_b.assign(nets.h1.b.size(), 0.0);
    g.h2_h = linalg::Mat(nets.h2.h.rows, nets.h2.h.cols);
    g.h2_b.assign(nets.h2.b.size(), 0.0);
    return g;
}

void NetGrads::zero() {
    emb.zero();
    w1.zero();
    b1.assign(b1.size(), 0.0);
    lambda = 0.0;
    w2.zero();
    b2.assign(b2.size(), 0.0);
    h1_h.zero();
    h1_b.assign(h1_b.size(), 0.0);
    h2_h.zero();
    h2_b.assign(h2_b.size(), 0.0);
}

double q_value(const StateWindow& state, std::span<const double> action, const Nets& nets,
               int head) {
    const Vec m = policy::mu(state, nets.emb, nets.enc, nets.proj);
    return q_from_mu(m, nets.head(head), action);
}

double q_from_mu(std::span<const double> mu, const CriticHead& head,
                 std::span<const double> action) {
    const Vec feat = head.features(action);
    return linalg::dot(mu, feat);
}

double clipped_target(double q1, double q2) { return std::min(q1, q2); }

namespace {
void blend(Vec& target, const Vec& online, double tau) {
    if (target.size() != online.size())
        throw ValidationError("soft_update: parameter shape mismatch");
    for (std::size_t i = 0; i < target.size(); ++i)
        target[i] = tau * target[i] + (1.0 - tau) * online[i];
}
}  // namespace

void soft_update(TargetSet& targets, const Nets& online, double tau) {
    if (!(tau >= 0.0 && tau <= 1.0)) throw ValidationError("soft_update: tau must lie in [0, 1]");
    targets.enc.lambda = tau * targets.enc.lambda + (1.0 - tau) * online.enc.lambda;
    blend(targets.enc.w1.a, online.enc.w1.a, tau);
    blend(targets.enc.b1, online.enc.b1, tau);
    blend(targets.proj.w2.a, online.proj.w2.a, tau);
    blend(targets.proj.b2, online.proj.b2, tau);
    blend(targets.h1.h.a, online.h1.h.a, tau);
    blend(targets.h1.b, online.h1.b, tau);
    blend(targets.h2.h.a, online.h2.h.a, tau);
    blend(targets.h2.b, online.h2.b, tau);
    if (targets.emb) blend(targets.emb->w.a, online.emb.w.a, tau);
}

void q_backward(std::span<const double> mu, const CriticHead& head, std::span<const double> action,
                double g, linalg::Mat* d_h, Vec* d_b, Vec* d_mu_acc, Vec* d_action_acc) {
    if (d_h) linalg::add_outer(*d_h, g, mu, action);
    if (d_b)
        for (std::size_t i = 0; i < mu.size(); ++i) (*d_b)[i] += g * mu[i];
    if (d_mu_acc) {
        const Vec feat = head.features(action);
        for (std::size_t i = 0; i < feat.size(); ++i) (*d_mu_acc)[i] += g * feat[i];
    }
    if (d_action_acc) {
        Vec ht_mu(action.size());
        linalg::mat_t_vec(head.h, mu, ht_mu);
        for (std::size_t i = 0; i < ht_mu.size(); ++i) (*d_action_acc)[i] += g * ht_mu[i];
    }
}

}  // namespace ecoc::critic
