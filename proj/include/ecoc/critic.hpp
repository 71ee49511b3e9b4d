#pragma once
// Twin value heads Q_h(s, a) = mu(s) . h(a) sharing the actor's preference
// extractor, target-network bookkeeping, and clipped double-Q helpers. Also
// hosts the aggregate parameter bundle shared by the loss and training code.

#include "ecoc/corpus.hpp"
#include "ecoc/latent.hpp"
#include "ecoc/linalg.hpp"
#include "ecoc/policy.hpp"

#include <optional>
#include <span>

namespace ecoc::critic {

using corpus::StateWindow;
using latent::EmbeddingMatrix;

// One affine action-feature extractor h(a) = H a + b, d -> d.
struct CriticHead {
    linalg::Mat h;  // d x d
    Vec b;          // d

    void init(int dim, Rng& rng);
    Vec features(std::span<const double> action) const;
};

/// All online parameters: embeddings, encoder, projection, twin heads.
struct Nets {
    EmbeddingMatrix emb;
    policy::EncoderParams enc;
    policy::ProjectionParams proj;
    CriticHead h1, h2;

    int dim() const { return emb.dim; }
    int hidden() const { return enc.hidden(); }
    static Nets init(int n_items, int dim, int hidden_dim, Rng& rng);

    const CriticHead& head(int which) const;
};

/// Frozen copies for target computation. The embedding matrix is only
/// snapshotted when target_embeddings is enabled; by default target-side
/// actions and searches read the online matrix.
struct TargetSet {
    policy::EncoderParams enc;
    policy::ProjectionParams proj;
    CriticHead h1, h2;
    std::optional<EmbeddingMatrix> emb;

    static TargetSet from(const Nets& nets, bool with_embeddings);
    const EmbeddingMatrix& embeddings_or(const EmbeddingMatrix& online) const {
        return emb ? *emb : online;
    }
};

// Gradient accumulator mirroring Nets.
struct NetGrads {
    linalg::Mat emb;
    linalg::Mat w1;
    Vec b1;
    double lambda = 0.0;
    linalg::Mat w2;
    Vec b2;
    linalg::Mat h1_h;
    Vec h1_b;
    linalg::Mat h2_h;
    Vec h2_b;

    static NetGrads zeros_like(const Nets& nets);
    void zero();
    policy::ActorGradRefs actor_refs() { return {emb, w1, b1, lambda, w2, b2}; }
};

// Q(s, a) for one head; convenience form that recomputes mu from the state.
double q_value(const StateWindow& state, std::span<const double> action, const Nets& nets,
               int head);

// Q given a precomputed preference vector; used to score many actions
// against one state.
double q_from_mu(std::span<const double> mu, const CriticHead& head,
                 std::span<const double> action);

double clipped_target(double q1, double q2);

// theta' <- tau * theta' + (1 - tau) * theta, elementwise.
void soft_update(TargetSet& targets, const Nets& online, double tau);

// Backward for g = dL/dQ with Q = mu . (H a + b). Null sinks skip branches,
// which is how gradient stops are realized.
void q_backward(std::span<const double> mu, const CriticHead& head, std::span<const double> action,
                double g, linalg::Mat* d_h, Vec* d_b, Vec* d_mu_acc, Vec* d_action_acc);

}  // namespace ecoc::critic
