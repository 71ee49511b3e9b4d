#include "ecoc/policy.hpp"

#include <algorithm>
#include <cmath>

namespace ecoc::policy {

void EncoderParams::init(int dim, int hidden_dim, Rng& rng) {
    lambda = 0.8;
    w1 = linalg::Mat(hidden_dim, 2 * dim);
    b1.assign(hidden_dim, 0.0);
    const double bound = 1.0 / std::sqrt(static_cast<double>(2 * dim));
    for (double& v : w1.a) v = (2.0 * rng.uniform01() - 1.0) * bound;
}

void ProjectionParams::init(int dim, int hidden_dim, Rng& rng) {
    w2 = linalg::Mat(dim, hidden_dim);
    b2.assign(dim, 0.0);
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
    for (double& v : w2.a) v = (2.0 * rng.uniform01() - 1.0) * bound;
}

Vec encode(const StateWindow& state, const EmbeddingMatrix& emb, const EncoderParams& enc,
           MuCache* cache) {
    const int T = static_cast<int>(state.length());
    const int d = emb.dim;
    MuCache local;
    MuCache& c = cache ? *cache : local;
    c.state = &state;
    c.positions.clear();
    c.weights.clear();

    for (int p = 0; p < T; ++p) {
        if (state.items[p] != corpus::kPaddingItem) {
            c.positions.push_back(p);
            c.weights.push_back(std::pow(enc.lambda, static_cast<double>(T - 1 - p)));
        }
    }
    if (c.positions.empty()) throw ValidationError("encode: state window holds only padding");
    if (state.items[T - 1] == corpus::kPaddingItem)
        throw ValidationError("encode: state window must end with a real event");

    c.sumw = 0.0;
    for (double w : c.weights) c.sumw += w;
    c.pooled.assign(d, 0.0);
    for (std::size_t k = 0; k < c.positions.size(); ++k) {
        const auto row = emb.row(state.items[c.positions[k]]);
        linalg::axpy(c.weights[k] / c.sumw, row, c.pooled);
    }

    c.input.resize(2 * d);
    std::copy(c.pooled.begin(), c.pooled.end(), c.input.begin());
    const auto last = emb.row(state.items[T - 1]);
    std::copy(last.begin(), last.end(), c.input.begin() + d);

    const int m = enc.hidden();
    c.hidden_act.resize(m);
    Vec pre(m);
    linalg::matvec(enc.w1, c.input, pre);
    for (int i = 0; i < m; ++i) c.hidden_act[i] = std::tanh(pre[i] + enc.b1[i]);
    return c.hidden_act;
}

Vec project(std::span<const double> encoded, const ProjectionParams& proj) {
    Vec out(proj.out_dim());
    linalg::matvec(proj.w2, encoded, out);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += proj.b2[i];
    return out;
}

Vec mu(const StateWindow& state, const EmbeddingMatrix& emb, const EncoderParams& enc,
       const ProjectionParams& proj, MuCache* cache) {
    MuCache local;
    MuCache& c = cache ? *cache : local;
    encode(state, emb, enc, &c);
    c.mu = project(c.hidden_act, proj);
    c.mu_norm = linalg::norm2(c.mu);
    return c.mu;
}

Vec pi(const StateWindow& state, const EmbeddingMatrix& emb, const EncoderParams& enc,
       const ProjectionParams& proj, MuCache* cache) {
    MuCache local;
    MuCache& c = cache ? *cache : local;
    mu(state, emb, enc, proj, &c);
    if (!(c.mu_norm > 0.0)) throw ValidationError("pi: zero preference vector for state");
    Vec out(c.mu.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = c.mu[i] / c.mu_norm;
    return out;
}

void mu_backward(const MuCache& cache, const EmbeddingMatrix& emb, const EncoderParams& enc,
                 const ProjectionParams& proj, std::span<const double> d_mu, ActorGradRefs grads) {
    const int d = emb.dim;
    const int m = enc.hidden();
    const StateWindow& state = *cache.state;
    const int T = static_cast<int>(state.length());

    // projection: mu = W2 h + b2
    linalg::add_outer(grads.d_w2, 1.0, d_mu, cache.hidden_act);
    for (int i = 0; i < d; ++i) grads.d_b2[i] += d_mu[i];
    Vec d_hidden(m);
    linalg::mat_t_vec(proj.w2, d_mu, d_hidden);

    // tanh
    Vec d_pre(m);
    for (int i = 0; i < m; ++i)
        d_pre[i] = d_hidden[i] * (1.0 - cache.hidden_act[i] * cache.hidden_act[i]);

    // encoder affine: pre = W1 x + b1
    linalg::add_outer(grads.d_w1, 1.0, d_pre, cache.input);
    for (int i = 0; i < m; ++i) grads.d_b1[i] += d_pre[i];
    Vec d_input(2 * d);
    linalg::mat_t_vec(enc.w1, d_pre, d_input);

    const std::span<const double> d_pooled(d_input.data(), d);
    // last-event embedding gets the second half of d_input
    {
        auto drow = grads.d_emb.row_span(state.items[T - 1]);
        for (int j = 0; j < d; ++j) drow[j] += d_input[d + j];
    }

    // pooled mean: c = sum_k (w_k / sumw) e_k
    for (std::size_t k = 0; k < cache.positions.size(); ++k) {
        auto drow = grads.d_emb.row_span(state.items[cache.positions[k]]);
        linalg::axpy(cache.weights[k] / cache.sumw, d_pooled, drow);
    }

    // decay scalar: dc/dlambda = (sum_k w'_k e_k - c sum_k w'_k) / sumw,
    // with w'_k = (T-1-p_k) lambda^(T-2-p_k).
    double dw_dot_e = 0.0;  // sum_k w'_k (d_pooled . e_k)
    double sum_dw = 0.0;
    for (std::size_t k = 0; k < cache.positions.size(); ++k) {
        const int expo = T - 1 - cache.positions[k];
        if (expo == 0) continue;
        const double wp = static_cast<double>(expo) *
                          std::pow(enc.lambda, static_cast<double>(expo - 1));
        dw_dot_e += wp * linalg::dot(d_pooled, emb.row(state.items[cache.positions[k]]));
        sum_dw += wp;
    }
    grads.d_lambda += (dw_dot_e - linalg::dot(d_pooled, cache.pooled) * sum_dw) / cache.sumw;
}

Vec normalize_backward(std::span<const double> unit, double norm, std::span<const double> d_unit) {
    const double proj = linalg::dot(d_unit, unit);
    Vec out(unit.size());
    for (std::size_t i = 0; i < unit.size(); ++i) out[i] = (d_unit[i] - proj * unit[i]) / norm;
    return out;
}

std::vector<Scored> rank_items(std::span<const double> preference, const EmbeddingMatrix& emb,
                               int k) {
    if (k < 1 || k > emb.n_items - 1)
        throw ValidationError("rank_items: k must lie in [1, |I|-1]");
    std::vector<Scored> all;
    all.reserve(emb.n_items - 1);
    for (ItemId i = 1; i < emb.n_items; ++i)
        all.push_back({i, linalg::dot(emb.row(i), preference)});
    std::sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.item < b.item;
    });
    all.resize(k);
    return all;
}

int rank_of_item(std::span<const double> preference, const EmbeddingMatrix& emb, ItemId target) {
    if (target <= 0 || target >= emb.n_items)
        throw ValidationError("rank_of_item: invalid target id");
    const double target_score = linalg::dot(emb.row(target), preference);
    int rank = 1;
    for (ItemId i = 1; i < emb.n_items; ++i) {
        if (i == target) continue;
        const double s = linalg::dot(emb.row(i), preference);
        if (s > target_score || (s == target_score && i < target)) ++rank;
    }
    return rank;
}

std::int64_t count_actor_params(int dim, int n_items, int window_len, int hidden_dim) {
    if (dim < 1 || n_items < 2 || window_len < 1 || hidden_dim < 1)
        throw ValidationError("count_actor_params: arguments must be positive");
    const std::int64_t d = dim, I = n_items, m = hidden_dim;
    return d * I + (2 * d + 1) * m + 1 + (m + 1) * d;
}

std::int64_t count_runtime_params(const EmbeddingMatrix& emb, const EncoderParams& enc,
                                  const ProjectionParams& proj) {
    return static_cast<std::int64_t>(emb.w.size()) + static_cast<std::int64_t>(enc.w1.size()) +
           static_cast<std::int64_t>(enc.b1.size()) + 1 +
           static_cast<std::int64_t>(proj.w2.size()) + static_cast<std::int64_t>(proj.b2.size());
}

}  // namespace ecoc::policy
