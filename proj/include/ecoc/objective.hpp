#pragma once
// The four training losses and their two combinations.
//
// Every loss takes the parameter bundle twice: `live` receives gradients,
// `frozen` feeds the gradient-stopped branches (the TD target y, the
// conservatism softmax weights, the state branch and head inside the
// directional-control term). In production both refer to the same object;
// the finite-difference oracle perturbs only `live`, so the analytic and
// numerical paths agree on what is differentiated. Sampling draws use
// `frozen` parameters, so a fixed rng seed pins the sampled item sets across
// perturbed evaluations.

#include "ecoc/corpus.hpp"
#include "ecoc/critic.hpp"
#include "ecoc/latent.hpp"

#include <span>

namespace ecoc::objective {

using Batch = corpus::Batch;

struct LossConfig {
    double gamma = 0.5;  // discount
    double alpha = 5.0;  // conservatism trade-off
    double beta = 1.0;   // behavioral-constraint trade-off
    int n1 = 500;        // regularization sample count
    int n2 = 10000;      // negative sample count
    latent::XiConfig xi_td{};   // exploration for the TD target
    latent::XiConfig xi_reg{};  // sampling for the conservatism term
    bool bc_cross_entropy = false;  // full-softmax swap for small catalogs
};

// Squared temporal error against the clipped double-Q target
// y = r + gamma * min(Q'_1(s', a'), Q'_2(s', a')), a' = e[i'] / ||e[i']||,
// i' ~ xi(M, pi'(s')) with the target actor; mean over batch and both heads.
double td_loss(const Batch& batch, const critic::Nets& live, const critic::Nets& frozen,
               const critic::TargetSet& targets, const LossConfig& cfg, Rng& rng,
               critic::NetGrads* grads, double grad_scale = 1.0);

// Conservatism gap: softmax-weighted mean of Q over n1 policy-neighborhood
// actions minus Q at the logged action, per head, averaged. The softmax
// weights are constants for differentiation.
double reg_loss(const Batch& batch, const critic::Nets& live, const critic::Nets& frozen,
                const LossConfig& cfg, Rng& rng, critic::NetGrads* grads, double grad_scale = 1.0);

// Pairwise ranking constraint over n2 uniform negatives (or full-softmax
// cross-entropy when bc_cross_entropy is set) on scores y_i = e_i . mu(s).
double bc_loss(const Batch& batch, const critic::Nets& live, const LossConfig& cfg, Rng& rng,
               critic::NetGrads* grads, double grad_scale = 1.0);

// Directional control -Q_1(s, pi(s)): gradients flow only through the action
// argument, realizing grad_theta pi(s) . grad_a Q(s, a) at a = pi(s).
double dc_loss(const Batch& batch, const critic::Nets& live, const critic::Nets& frozen,
               critic::NetGrads* grads, double grad_scale = 1.0);

struct LossParts {
    double td = 0.0;
    double reg = 0.0;
    double bc = 0.0;
    double dc = 0.0;
};

// td + alpha * reg, one rng stream threaded through both.
double critic_loss(const Batch& batch, const critic::Nets& live, const critic::Nets& frozen,
                   const critic::TargetSet& targets, const LossConfig& cfg, Rng& rng,
                   critic::NetGrads* grads, LossParts* parts = nullptr);

// dc + beta * bc.
double actor_loss(const Batch& batch, const critic::Nets& live, const critic::Nets& frozen,
                  const LossConfig& cfg, Rng& rng, critic::NetGrads* grads,
                  LossParts* parts = nullptr);

// Overflow-safe softmax weights (max-shifted).
Vec softmax_weights(std::span<const double> values);

// sum_k softmax(q)_k q_k - logged_q; the per-transition conservatism term.
double reg_softmax_gap(std::span<const double> sampled_q, double logged_q);

// -ln sigmoid(margin), the per-pair ranking term.
double bpr_term(double margin);

}  // namespace ecoc::objective
