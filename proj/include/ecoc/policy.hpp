#pragma once
// The actor: recency-weighted reference encoder f, projection g, preference
// extractor mu, unit-norm policy pi, the inner-product ranking head, and the
// closed-form parameter accounting for the continuous decision head.
//
// Gradients are hand-derived; every forward keeps a cache so the matching
// backward can accumulate exact parameter gradients.

#include "ecoc/common.hpp"
#include "ecoc/corpus.hpp"
#include "ecoc/latent.hpp"
#include "ecoc/linalg.hpp"

#include <span>
#include <vector>

namespace ecoc::policy {

using corpus::ItemId;
using corpus::StateWindow;
using latent::EmbeddingMatrix;

constexpr double kLambdaMin = 0.05;  // decay clamp, avoids all-last-item collapse
constexpr double kLambdaMax = 1.0;

struct EncoderParams {
    double lambda = 0.8;  // recency decay in (kLambdaMin, 1]
    linalg::Mat w1;       // hidden x 2d affine
    Vec b1;               // hidden

    int hidden() const { return static_cast<int>(b1.size()); }
    void init(int dim, int hidden_dim, Rng& rng);
};

struct ProjectionParams {
    linalg::Mat w2;  // d x hidden affine
    Vec b2;          // d

    int out_dim() const { return static_cast<int>(b2.size()); }
    void init(int dim, int hidden_dim, Rng& rng);
};

// Forward intermediates kept for the backward pass.
struct MuCache {
    const StateWindow* state = nullptr;
    std::vector<int> positions;  // non-padding slots
    Vec weights;                 // lambda^(T-1-p), aligned with positions
    double sumw = 0.0;
    Vec pooled;      // c
    Vec input;       // [c; e_last]
    Vec hidden_act;  // tanh(W1 input + b1)
    Vec mu;          // W2 hidden_act + b2
    double mu_norm = 0.0;
};

// f: decayed mean of non-padding item embeddings concatenated with the last
// embedding, then affine + tanh. Throws on all-padding states.
Vec encode(const StateWindow& state, const EmbeddingMatrix& emb, const EncoderParams& enc,
           MuCache* cache = nullptr);

// g: affine map from the encoder space to the embedding space.
Vec project(std::span<const double> encoded, const ProjectionParams& proj);

// mu = g(f(...)); deterministic.
Vec mu(const StateWindow& state, const EmbeddingMatrix& emb, const EncoderParams& enc,
       const ProjectionParams& proj, MuCache* cache = nullptr);

// pi = mu / ||mu||; throws when mu is zero.
Vec pi(const StateWindow& state, const EmbeddingMatrix& emb, const EncoderParams& enc,
       const ProjectionParams& proj, MuCache* cache = nullptr);

// Gradient sinks for one backward pass through mu.
struct ActorGradRefs {
    linalg::Mat& d_emb;
    linalg::Mat& d_w1;
    Vec& d_b1;
    double& d_lambda;
    linalg::Mat& d_w2;
    Vec& d_b2;
};

// Accumulates d(loss)/d(params) given d(loss)/d(mu).
void mu_backward(const MuCache& cache, const EmbeddingMatrix& emb, const EncoderParams& enc,
                 const ProjectionParams& proj, std::span<const double> d_mu, ActorGradRefs grads);

// Maps a gradient w.r.t. pi to a gradient w.r.t. mu through the
// normalization: d_mu = (d_pi - (d_pi . pi) pi) / ||mu||.
Vec normalize_backward(std::span<const double> unit, double norm, std::span<const double> d_unit);

struct Scored {
    ItemId item;
    double score;
};

// Top-k by inner product M[i] . p over non-padding items, ties by ascending id.
std::vector<Scored> rank_items(std::span<const double> preference, const EmbeddingMatrix& emb,
                               int k);

// 1-based rank of `target` under the same ordering; O(|I|).
int rank_of_item(std::span<const double> preference, const EmbeddingMatrix& emb, ItemId target);

// Exact actor parameter count: d|I| embeddings + (2d+1)m encoder affine
// + 1 decay scalar + (m+1)d projection. The continuous decision head costs
// (m+1)d where a discrete head would cost (m+1)|I|.
std::int64_t count_actor_params(int dim, int n_items, int window_len, int hidden_dim);

std::int64_t count_runtime_params(const EmbeddingMatrix& emb, const EncoderParams& enc,
                                  const ProjectionParams& proj);

}  // namespace ecoc::policy
