#include "ecoc/objective.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <mutex>
#include <unordered_set>

namespace ecoc::objective {

using corpus::ItemId;
using corpus::Transition;
using critic::NetGrads;
using critic::Nets;
using critic::TargetSet;
using latent::NormView;

namespace {

void check_target_item(const Transition& tr, int n_items) {
    if (tr.target <= 0 || tr.target >= n_items)
        throw ValidationError("transition target is padding or out of catalog: " +
                              std::to_string(tr.target));
}

std::once_flag g_replacement_warning;

// n2 negatives, uniform over non-padding, non-target items; distinct when the
// catalog allows it, with-replacement otherwise.
std::vector<ItemId> draw_negatives(int n_items, ItemId target, int n2, Rng& rng) {
    std::vector<ItemId> negs;
    negs.reserve(n2);
    const int usable = n_items - 2;  // minus padding, minus target
    if (usable < 1) throw ValidationError("catalog too small for negative sampling");
    if (n2 > usable) {
        std::call_once(g_replacement_warning, [] {
            std::cerr << "warning: catalog too small for distinct negatives; "
                         "sampling with replacement\n";
        });
        for (int k = 0; k < n2; ++k) {
            for (;;) {
                const ItemId id = static_cast<ItemId>(1 + rng.below(n_items - 1));
                if (id != target) {
                    negs.push_back(id);
                    break;
                }
            }
        }
        return negs;
    }
    if (n2 * 2 <= usable) {
        std::unordered_set<ItemId> seen;
        seen.reserve(n2 * 2);
        while (static_cast<int>(negs.size()) < n2) {
            const ItemId id = static_cast<ItemId>(1 + rng.below(n_items - 1));
            if (id == target || !seen.insert(id).second) continue;
            negs.push_back(id);
        }
        return negs;
    }
    // Dense draw: partial Fisher-Yates over the explicit candidate pool.
    std::vector<ItemId> pool;
    pool.reserve(usable);
    for (ItemId i = 1; i < n_items; ++i)
        if (i != target) pool.push_back(i);
    for (int k = 0; k < n2; ++k) {
        const std::size_t j = k + rng.below(pool.size() - k);
        std::swap(pool[k], pool[j]);
        negs.push_back(pool[k]);
    }
    return negs;
}

}  // namespace

Vec softmax_weights(std::span<const double> values) {
    double vmax = -std::numeric_limits<double>::infinity();
    for (double v : values) vmax = std::max(vmax, v);
    Vec w(values.size());
    double total = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        w[i] = std::exp(values[i] - vmax);
        total += w[i];
    }
    for (double& v : w) v /= total;
    return w;
}

double reg_softmax_gap(std::span<const double> sampled_q, double logged_q) {
    const Vec w = softmax_weights(sampled_q);
    double mean = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) mean += w[i] * sampled_q[i];
    return mean - logged_q;
}

double bpr_term(double margin) { return softplus_neg(margin); }

double td_loss(const Batch& batch, const Nets& live, const Nets& frozen, const TargetSet& targets,
               const LossConfig& cfg, Rng& rng, NetGrads* grads, double grad_scale) {
    if (batch.empty()) throw ValidationError("td_loss: empty batch");
    const int d = live.dim();
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;

    for (const Transition* tr : batch) {
        check_target_item(*tr, live.emb.n_items);

        // Target value y: entirely gradient-stopped, built from target
        // networks plus the frozen view of the online embeddings.
        const latent::EmbeddingMatrix& temb = targets.embeddings_or(frozen.emb);
        const Vec mu_next = policy::mu(tr->next_state, temb, targets.enc, targets.proj);
        const NormView pi_next = latent::normalize(mu_next);
        const ItemId explored = latent::xi_sample(temb, pi_next.direction, cfg.xi_td, rng);
        const Vec a_next = latent::action_of_item(temb, explored);
        const double y =
            tr->reward + cfg.gamma * critic::clipped_target(
                                         critic::q_from_mu(mu_next, targets.h1, a_next),
                                         critic::q_from_mu(mu_next, targets.h2, a_next));

        policy::MuCache mc;
        const Vec mu_s = policy::mu(tr->state, live.emb, live.enc, live.proj, &mc);
        const NormView act = latent::normalize(live.emb.row(tr->target));
        const double q1 = critic::q_from_mu(mu_s, live.h1, act.direction);
        const double q2 = critic::q_from_mu(mu_s, live.h2, act.direction);
        total += 0.5 * ((q1 - y) * (q1 - y) + (q2 - y) * (q2 - y));

        if (grads) {
            const double g1 = grad_scale * (q1 - y) * inv_b;
            const double g2 = grad_scale * (q2 - y) * inv_b;
            Vec d_mu(d, 0.0), d_act(d, 0.0);
            critic::q_backward(mu_s, live.h1, act.direction, g1, &grads->h1_h, &grads->h1_b,
                               &d_mu, &d_act);
            critic::q_backward(mu_s, live.h2, act.direction, g2, &grads->h2_h, &grads->h2_b,
                               &d_mu, &d_act);
            const Vec d_row = policy::normalize_backward(act.direction, act.norm, d_act);
            linalg::axpy(1.0, d_row, grads->emb.row_span(tr->target));
            policy::mu_backward(mc, live.emb, live.enc, live.proj, d_mu, grads->actor_refs());
        }
    }
    return total * inv_b;
}

double reg_loss(const Batch& batch, const Nets& live, const Nets& frozen, const LossConfig& cfg,
                Rng& rng, NetGrads* grads, double grad_scale) {
    if (batch.empty()) throw ValidationError("reg_loss: empty batch");
    if (cfg.n1 < 1) throw ValidationError("reg_loss: n1 must be >= 1");
    const int d = live.dim();
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;

    for (const Transition* tr : batch) {
        check_target_item(*tr, live.emb.n_items);

        // Sampling side: frozen policy direction, frozen matrix.
        const Vec mu_f = policy::mu(tr->state, frozen.emb, frozen.enc, frozen.proj);
        const NormView pi_f = latent::normalize(mu_f);
        const auto sampled =
            latent::xi_sample_many(frozen.emb, pi_f.direction, cfg.xi_reg, cfg.n1, rng);

        // Softmax weights from frozen Q values, per head.
        std::array<Vec, 2> weights;
        for (int h = 0; h < 2; ++h) {
            const critic::CriticHead& head = h == 0 ? frozen.h1 : frozen.h2;
            Vec qf(sampled.size());
            Vec ht_mu(d);
            linalg::mat_t_vec(head.h, mu_f, ht_mu);
            const double bias = linalg::dot(mu_f, head.b);
            for (std::size_t k = 0; k < sampled.size(); ++k) {
                const Vec a_k = latent::action_of_item(frozen.emb, sampled[k]);
                qf[k] = linalg::dot(ht_mu, a_k) + bias;
            }
            weights[h] = softmax_weights(qf);
        }

        // Live side.
        policy::MuCache mc;
        const Vec mu_s = policy::mu(tr->state, live.emb, live.enc, live.proj, &mc);
        const NormView logged = latent::normalize(live.emb.row(tr->target));

        Vec d_mu(d, 0.0);
        double tr_value = 0.0;
        for (int h = 0; h < 2; ++h) {
            const critic::CriticHead& head = h == 0 ? live.h1 : live.h2;
            linalg::Mat* d_h = grads ? (h == 0 ? &grads->h1_h : &grads->h2_h) : nullptr;
            Vec* d_b = grads ? (h == 0 ? &grads->h1_b : &grads->h2_b) : nullptr;

            Vec ht_mu(d);
            linalg::mat_t_vec(head.h, mu_s, ht_mu);
            const double bias = linalg::dot(mu_s, head.b);

            double head_term = 0.0;
            Vec action_mix(d, 0.0);  // sum_k g_k a_k + g_logged a, for dH and d_mu
            double g_sum = 0.0;
            for (std::size_t k = 0; k < sampled.size(); ++k) {
                const NormView a_k = latent::normalize(live.emb.row(sampled[k]));
                const double q_k = linalg::dot(ht_mu, a_k.direction) + bias;
                head_term += weights[h][k] * q_k;
                if (grads) {
                    const double g_k = grad_scale * weights[h][k] * inv_b * 0.5;
                    g_sum += g_k;
                    linalg::axpy(g_k, a_k.direction, action_mix);
                    // action branch into the sampled item's embedding row
                    Vec d_a(d);
                    for (int j = 0; j < d; ++j) d_a[j] = g_k * ht_mu[j];
                    const Vec d_row = policy::normalize_backward(a_k.direction, a_k.norm, d_a);
                    linalg::axpy(1.0, d_row, grads->emb.row_span(sampled[k]));
                }
            }
            const double q_logged = linalg::dot(ht_mu, logged.direction) + bias;
            head_term -= q_logged;
            tr_value += 0.5 * head_term;

            if (grads) {
                const double g_logged = -grad_scale * inv_b * 0.5;
                g_sum += g_logged;
                linalg::axpy(g_logged, logged.direction, action_mix);
                Vec d_a(d);
                for (int j = 0; j < d; ++j) d_a[j] = g_logged * ht_mu[j];
                const Vec d_row = policy::normalize_backward(logged.direction, logged.norm, d_a);
                linalg::axpy(1.0, d_row, grads->emb.row_span(tr->target));

                // head parameters: dH = mu_s (x) action_mix, db = g_sum mu_s
                linalg::add_outer(*d_h, 1.0, mu_s, action_mix);
                for (int j = 0; j < d; ++j) (*d_b)[j] += g_sum * mu_s[j];
                // state branch: d_mu += H action_mix + g_sum b
                Vec h_mix(d);
                linalg::matvec(head.h, action_mix, h_mix);
                for (int j = 0; j < d; ++j) d_mu[j] += h_mix[j] + g_sum * head.b[j];
            }
        }
        total += tr_value;
        if (grads) policy::mu_backward(mc, live.emb, live.enc, live.proj, d_mu, grads->actor_refs());
    }
    return total * inv_b;
}

double bc_loss(const Batch& batch, const Nets& live, const LossConfig& cfg, Rng& rng,
               NetGrads* grads, double grad_scale) {
    if (batch.empty()) throw ValidationError("bc_loss: empty batch");
    const int d = live.dim();
    const int n_items = live.emb.n_items;
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;

    for (const Transition* tr : batch) {
        check_target_item(*tr, n_items);
        policy::MuCache mc;
        const Vec mu_s = policy::mu(tr->state, live.emb, live.enc, live.proj, &mc);
        const double y_target = linalg::dot(live.emb.row(tr->target), mu_s);
        Vec d_mu(d, 0.0);

        if (cfg.bc_cross_entropy) {
            // Full-softmax cross-entropy over the catalog.
            Vec scores(n_items, 0.0);
            double smax = -std::numeric_limits<double>::infinity();
            for (ItemId i = 1; i < n_items; ++i) {
                scores[i] = linalg::dot(live.emb.row(i), mu_s);
                smax = std::max(smax, scores[i]);
            }
            double z = 0.0;
            for (ItemId i = 1; i < n_items; ++i) z += std::exp(scores[i] - smax);
            total += std::log(z) + smax - y_target;
            if (grads) {
                for (ItemId i = 1; i < n_items; ++i) {
                    double dy = std::exp(scores[i] - smax) / z;
                    if (i == tr->target) dy -= 1.0;
                    dy *= grad_scale * inv_b;
                    linalg::axpy(dy, mu_s, grads->emb.row_span(i));
                    linalg::axpy(dy, live.emb.row(i), d_mu);
                }
            }
        } else {
            if (cfg.n2 < 1) throw ValidationError("bc_loss: n2 must be >= 1");
            const auto negs = draw_negatives(n_items, tr->target, cfg.n2, rng);
            const double inv_n = 1.0 / static_cast<double>(negs.size());
            double dy_target = 0.0;
            for (ItemId neg : negs) {
                const double y_neg = linalg::dot(live.emb.row(neg), mu_s);
                const double margin = y_target - y_neg;
                total += bpr_term(margin) * inv_n;
                if (grads) {
                    // d/dm of -ln sigmoid(m) is -sigmoid(-m)
                    const double d_margin = -sigmoid(-margin) * grad_scale * inv_b * inv_n;
                    dy_target += d_margin;
                    linalg::axpy(-d_margin, mu_s, grads->emb.row_span(neg));
                    linalg::axpy(-d_margin, live.emb.row(neg), d_mu);
                }
            }
            if (grads) {
                linalg::axpy(dy_target, mu_s, grads->emb.row_span(tr->target));
                linalg::axpy(dy_target, live.emb.row(tr->target), d_mu);
            }
        }
        if (grads) policy::mu_backward(mc, live.emb, live.enc, live.proj, d_mu, grads->actor_refs());
    }
    return total * inv_b;
}

double dc_loss(const Batch& batch, const Nets& live, const Nets& frozen, NetGrads* grads,
               double grad_scale) {
    if (batch.empty()) throw ValidationError("dc_loss: empty batch");
    const int d = live.dim();
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;

    for (const Transition* tr : batch) {
        // State branch and head are frozen; only the action argument is live.
        const Vec mu_stop = policy::mu(tr->state, frozen.emb, frozen.enc, frozen.proj);
        policy::MuCache mc;
        const Vec pi_live = policy::pi(tr->state, live.emb, live.enc, live.proj, &mc);
        total -= critic::q_from_mu(mu_stop, frozen.h1, pi_live);

        if (grads) {
            const double g = -grad_scale * inv_b;
            Vec d_action(d, 0.0);
            critic::q_backward(mu_stop, frozen.h1, pi_live, g, nullptr, nullptr, nullptr,
                               &d_action);
            const Vec d_mu = policy::normalize_backward(pi_live, mc.mu_norm, d_action);
            policy::mu_backward(mc, live.emb, live.enc, live.proj, d_mu, grads->actor_refs());
        }
    }
    return total * inv_b;
}

double critic_loss(const Batch& batch, const Nets& live, const Nets& frozen,
                   const TargetSet& targets, const LossConfig& cfg, Rng& rng, NetGrads* grads,
                   LossParts* parts) {
    const double td = td_loss(batch, live, frozen, targets, cfg, rng, grads, 1.0);
    const double reg =
        cfg.alpha != 0.0 ? reg_loss(batch, live, frozen, cfg, rng, grads, cfg.alpha) : 0.0;
    if (parts) {
        parts->td = td;
        parts->reg = reg;
    }
    return td + cfg.alpha * reg;
}

double actor_loss(const Batch& batch, const Nets& live, const Nets& frozen, const LossConfig& cfg,
                  Rng& rng, NetGrads* grads, LossParts* parts) {
    const double dc = dc_loss(batch, live, frozen, grads, 1.0);
    const double bc = cfg.beta != 0.0 ? bc_loss(batch, live, cfg, rng, grads, cfg.beta) : 0.0;
    if (parts) {
        parts->dc = dc;
        parts->bc = bc;
    }
    return dc + cfg.beta * bc;
}

}  // namespace ecoc::objective
