#include "ecoc/evalharness.hpp"

#include <algorithm>
#include <cmath>

namespace ecoc::evalharness {

MetricSample metric_from_rank(int rank, int k) {
    MetricSample s;
    if (rank >= 1 && rank <= k) {
        s.hit = 1;
        s.rr = 1.0 / static_cast<double>(rank);
        s.ndcg = 1.0 / std::log2(1.0 + static_cast<double>(rank));
    }
    return s;
}

MetricSample metric_at_k(const std::vector<ItemId>& ranked, ItemId target, int k) {
    const int upto = std::min<int>(k, static_cast<int>(ranked.size()));
    for (int r = 0; r < upto; ++r)
        if (ranked[r] == target) return metric_from_rank(r + 1, k);
    return {};
}

namespace {

MetricReport aggregate_ranks(const std::vector<int>& ranks, std::vector<int> ks) {
    std::sort(ks.begin(), ks.end());
    MetricReport report;
    report.ks = ks;
    report.n_samples = static_cast<std::int64_t>(ranks.size());
    for (int k : ks) {
        double hr = 0.0, mrr = 0.0, ndcg = 0.0;
        for (int rank : ranks) {
            const MetricSample s = metric_from_rank(rank, k);
            hr += s.hit;
            mrr += s.rr;
            ndcg += s.ndcg;
        }
        const double n = std::max<double>(1.0, static_cast<double>(ranks.size()));
        report.hr[k] = hr / n;
        report.mrr[k] = mrr / n;
        report.ndcg[k] = ndcg / n;
    }
    return report;
}

int rank_in_scores(const Vec& scores, ItemId target, int n_items) {
    const double ts = scores[target];
    int rank = 1;
    for (ItemId i = 1; i < n_items; ++i) {
        if (i == target) continue;
        if (scores[i] > ts || (scores[i] == ts && i < target)) ++rank;
    }
    return rank;
}

}  // namespace

MetricReport evaluate_imitation(const critic::Nets& nets, std::span<const Transition> tests,
                                std::vector<int> ks) {
    std::vector<int> ranks;
    ranks.reserve(tests.size());
    for (const Transition& tr : tests) {
        const Vec p = policy::mu(tr.state, nets.emb, nets.enc, nets.proj);
        ranks.push_back(policy::rank_of_item(p, nets.emb, tr.target));
    }
    return aggregate_ranks(ranks, std::move(ks));
}

MetricReport evaluate_static_scores(const Vec& scores, std::span<const Transition> tests,
                                    std::vector<int> ks, int n_items) {
    std::vector<int> ranks;
    ranks.reserve(tests.size());
    for (const Transition& tr : tests) ranks.push_back(rank_in_scores(scores, tr.target, n_items));
    return aggregate_ranks(ranks, std::move(ks));
}

Vec popularity_scores(std::span<const Transition> train, int n_items) {
    Vec counts(n_items, 0.0);
    for (const Transition& tr : train) counts[tr.target] += 1.0;
    return counts;
}

// ---------------------------------------------------------------------------
// Oracle environment
// ---------------------------------------------------------------------------

void OracleEnv::reset(const EpisodeStart& start) {
    user_ = start.user_idx >= 0 ? start.user_idx : world_->user_index(start.user);
    pos_ = start.next_pos;
}

EnvStep OracleEnv::respond(const StateWindow& /*state*/, ItemId recommended, Rng& /*rng*/) {
    if (user_ < 0) throw ValidationError("OracleEnv::respond before reset");
    EnvStep step;
    step.feedback = world_->feedback_at(user_, pos_, recommended);
    ++pos_;
    step.reward = corpus::assign_reward(step.feedback, scheme_, recommended);
    step.done = false;
    return step;
}

// ---------------------------------------------------------------------------
// Fitted environment
// ---------------------------------------------------------------------------

namespace {

int scheme_levels(const corpus::RewardScheme& scheme) {
    switch (scheme.kind) {
        case corpus::RewardSchemeKind::graded_feedback: return 3;
        case corpus::RewardSchemeKind::explicit_rating: return 5;
        case corpus::RewardSchemeKind::price_on_purchase: return 2;
    }
    throw ValidationError("unknown reward scheme");
}

}  // namespace

FeedbackCode FittedEnv::level_to_feedback(int level) const {
    switch (scheme_.kind) {
        case corpus::RewardSchemeKind::graded_feedback:
            return static_cast<FeedbackCode>(corpus::kClick + level);
        case corpus::RewardSchemeKind::explicit_rating:
            return corpus::rating_feedback(level + 1);
        case corpus::RewardSchemeKind::price_on_purchase:
            return level == 0 ? corpus::kClick : corpus::kPurchase;
    }
    throw ValidationError("unknown reward scheme");
}

int FittedEnv::feedback_to_level(FeedbackCode f) const {
    switch (scheme_.kind) {
        case corpus::RewardSchemeKind::graded_feedback:
            if (f < corpus::kClick || f > corpus::kPurchase)
                throw ValidationError("feedback incompatible with graded scheme");
            return f - corpus::kClick;
        case corpus::RewardSchemeKind::explicit_rating:
            return corpus::rating_of(f) - 1;
        case corpus::RewardSchemeKind::price_on_purchase:
            return f == corpus::kPurchase ? 1 : 0;
    }
    throw ValidationError("unknown reward scheme");
}

double FittedEnv::score(const StateWindow& state, ItemId item) const {
    const Vec p = policy::mu(state, emb_, enc_, proj_);
    return linalg::dot(emb_.row(item), p);
}

double FittedEnv::prob_at_least(const StateWindow& state, ItemId item, int level_index) const {
    if (level_index < 1 || level_index > static_cast<int>(thresholds_.size()))
        throw ValidationError("prob_at_least: level index out of range");
    return sigmoid(scale_ * score(state, item) - thresholds_[level_index - 1]);
}

double FittedEnv::mean_positive_rate(std::span<const Transition> data) const {
    double acc = 0.0;
    for (const Transition& tr : data) acc += prob_at_least(tr.state, tr.target, 1);
    return data.empty() ? 0.0 : acc / static_cast<double>(data.size());
}

void FittedEnv::reset(const EpisodeStart& /*start*/) {}

EnvStep FittedEnv::respond(const StateWindow& state, ItemId recommended, Rng& rng) {
    const double y = scale_ * score(state, recommended);
    const double u = rng.uniform01();
    // Walk levels from the top: level L-1 has probability sigma(y - c_{L-1}).
    int level = 0;
    double acc = 0.0;
    for (int j = static_cast<int>(thresholds_.size()); j >= 1; --j) {
        const double p_ge = sigmoid(y - thresholds_[j - 1]);
        const double p_prev =
            j == static_cast<int>(thresholds_.size()) ? 0.0 : sigmoid(y - thresholds_[j]);
        acc += p_ge - p_prev;
        if (u < acc) {
            level = j;
            break;
        }
    }
    EnvStep step;
    step.feedback = level_to_feedback(level);
    step.reward = corpus::assign_reward(step.feedback, scheme_, recommended);
    step.done = false;
    return step;
}

FittedEnv fit_sim_env(const corpus::TransitionStore& test, const corpus::RewardScheme& scheme,
                      const FitEnvConfig& cfg) {
    if (test.empty()) throw ValidationError("fit_sim_env: no transitions to fit on");
    FittedEnv env;
    env.scheme_ = scheme;
    Rng rng(cfg.seed);
    env.emb_ = latent::EmbeddingMatrix(test.catalog_size, cfg.dim);
    env.emb_.init_random(rng);
    env.enc_.init(cfg.dim, cfg.hidden, rng);
    env.proj_.init(cfg.dim, cfg.hidden, rng);
    env.scale_ = 1.0;
    const int levels = scheme_levels(scheme);
    env.thresholds_.resize(levels - 1);
    for (int j = 0; j < levels - 1; ++j) env.thresholds_[j] = static_cast<double>(j);

    // Adam over the flat parameter list.
    struct Group {
        std::span<double> p;
        Vec g, m, v;
    };
    std::vector<Group> groups;
    auto add_group = [&](std::span<double> p) {
        groups.push_back({p, Vec(p.size(), 0.0), Vec(p.size(), 0.0), Vec(p.size(), 0.0)});
    };
    add_group(env.emb_.w.a);
    add_group(env.enc_.w1.a);
    add_group(env.enc_.b1);
    add_group({&env.enc_.lambda, 1});
    add_group(env.proj_.w2.a);
    add_group(env.proj_.b2);
    add_group({&env.scale_, 1});
    add_group(env.thresholds_);

    linalg::Mat d_emb(env.emb_.n_items, cfg.dim);
    linalg::Mat d_w1(env.enc_.w1.rows, env.enc_.w1.cols);
    Vec d_b1(cfg.hidden, 0.0);
    double d_lambda = 0.0;
    linalg::Mat d_w2(env.proj_.w2.rows, env.proj_.w2.cols);
    Vec d_b2(cfg.dim, 0.0);

    const double b1c = 0.9, b2c = 0.999, eps = 1e-8;
    for (std::int64_t step = 1; step <= cfg.steps; ++step) {
        const auto batch = corpus::sample_batch(test, cfg.batch_size, rng);
        for (auto& gr : groups) gr.g.assign(gr.g.size(), 0.0);
        d_emb.zero();
        d_w1.zero();
        d_b1.assign(d_b1.size(), 0.0);
        d_lambda = 0.0;
        d_w2.zero();
        d_b2.assign(d_b2.size(), 0.0);
        double d_scale = 0.0;
        Vec d_thresholds(env.thresholds_.size(), 0.0);

        const double inv_b = 1.0 / static_cast<double>(batch.size());
        for (const Transition* tr : batch) {
            policy::MuCache mc;
            const Vec p = policy::mu(tr->state, env.emb_, env.enc_, env.proj_, &mc);
            const double y = linalg::dot(env.emb_.row(tr->target), p);
            const double z = env.scale_ * y;
            // observed feedback of the target event sits at the end of next_state
            const int obs = env.feedback_to_level(tr->next_state.feedback.back());
            // s_j = P(level >= j); s_0 = 1, s_levels = 0
            const int L = levels;
            Vec s(L + 1, 0.0);
            s[0] = 1.0;
            for (int j = 1; j < L; ++j) s[j] = sigmoid(z - env.thresholds_[j - 1]);
            s[L] = 0.0;
            const double prob = std::max(s[obs] - s[obs + 1], 1e-12);
            // d(-ln prob)/dz_j for z_j = z - c_j
            double dz = 0.0;  // accumulates d/dz
            if (obs >= 1) {
                const double d_sj = s[obs] * (1.0 - s[obs]);
                dz += -d_sj / prob;
                d_thresholds[obs - 1] += (d_sj / prob) * inv_b;
            }
            if (obs + 1 <= L - 1) {
                const double d_sj1 = s[obs + 1] * (1.0 - s[obs + 1]);
                dz += d_sj1 / prob;
                d_thresholds[obs] += (-d_sj1 / prob) * inv_b;
            }
            dz *= inv_b;
            d_scale += dz * y;
            const double dy = dz * env.scale_;
            // y = e_target . mu
            linalg::axpy(dy, p, d_emb.row_span(tr->target));
            Vec d_mu(cfg.dim, 0.0);
            linalg::axpy(dy, env.emb_.row(tr->target), d_mu);
            policy::ActorGradRefs refs{d_emb, d_w1, d_b1, d_lambda, d_w2, d_b2};
            policy::mu_backward(mc, env.emb_, env.enc_, env.proj_, d_mu, refs);
        }

        // gather into group gradients (same order as add_group)
        groups[0].g = d_emb.a;
        groups[1].g = d_w1.a;
        groups[2].g = d_b1;
        groups[3].g[0] = d_lambda;
        groups[4].g = d_w2.a;
        groups[5].g = d_b2;
        groups[6].g[0] = d_scale;
        groups[7].g = d_thresholds;

        const double corr1 = 1.0 - std::pow(b1c, static_cast<double>(step));
        const double corr2 = 1.0 - std::pow(b2c, static_cast<double>(step));
        for (auto& gr : groups) {
            for (std::size_t j = 0; j < gr.p.size(); ++j) {
                gr.m[j] = b1c * gr.m[j] + (1.0 - b1c) * gr.g[j];
                gr.v[j] = b2c * gr.v[j] + (1.0 - b2c) * gr.g[j] * gr.g[j];
                gr.p[j] -= cfg.lr * (gr.m[j] / corr1) / (std::sqrt(gr.v[j] / corr2) + eps);
            }
        }
        env.enc_.lambda =
            std::clamp(env.enc_.lambda, policy::kLambdaMin + 1e-6, policy::kLambdaMax);
        for (std::size_t j = 1; j < env.thresholds_.size(); ++j)
            env.thresholds_[j] = std::max(env.thresholds_[j], env.thresholds_[j - 1] + 1e-3);
    }
    return env;
}

// ---------------------------------------------------------------------------
// Off-policy evaluation
// ---------------------------------------------------------------------------

Recommender greedy_recommender(const critic::Nets& nets) {
    return [&nets](const StateWindow& state, int /*step*/) {
        const Vec p = policy::mu(state, nets.emb, nets.enc, nets.proj);
        return policy::rank_items(p, nets.emb, 1)[0].item;
    };
}

Recommender logged_recommender(const EpisodeStart& start) {
    std::vector<ItemId> items;
    items.reserve(start.continuation.size());
    for (const auto& e : start.continuation) items.push_back(e.item);
    return [items](const StateWindow&, int step) {
        if (step < 0 || step >= static_cast<int>(items.size()))
            throw ValidationError("logged recommender ran past the continuation");
        return items[step];
    };
}

OpeReport ope_run(const Recommender& recommender, SimEnv& env,
                  std::span<const EpisodeStart> starts, int horizon, Rng& rng) {
    if (horizon < 1) throw ValidationError("ope_run: horizon must be >= 1");
    OpeReport report;
    report.horizon = horizon;
    report.n_states = static_cast<std::int64_t>(starts.size());
    for (std::size_t i = 0; i < starts.size(); ++i) {
        const EpisodeStart& start = starts[i];
        const int steps =
            std::min<int>(horizon, static_cast<int>(start.continuation.size()));
        if (steps < 1) continue;
        OpeTrace trace;
        trace.user = start.user;

        Rng rng_policy = rng.split(2 * i);
        env.reset(start);
        StateWindow state = start.window;
        for (int t = 0; t < steps; ++t) {
            const ItemId item = recommender(state, t);
            const EnvStep step = env.respond(state, item, rng_policy);
            trace.policy.push_back({item, step.feedback, step.reward});
            trace.policy_total += step.reward;
            state = corpus::shift(state, item, step.feedback);
            if (step.done) break;
        }

        Rng rng_logged = rng.split(2 * i + 1);
        env.reset(start);
        state = start.window;
        for (int t = 0; t < steps; ++t) {
            const ItemId item = start.continuation[t].item;
            const EnvStep step = env.respond(state, item, rng_logged);
            trace.logged.push_back({item, step.feedback, step.reward});
            trace.logged_total += step.reward;
            state = corpus::shift(state, item, step.feedback);
            if (step.done) break;
        }

        report.policy_total += trace.policy_total;
        report.logged_total += trace.logged_total;
        report.traces.push_back(std::move(trace));
    }
    report.ratio = report.logged_total != 0.0
                       ? report.policy_total / report.logged_total
                       : std::numeric_limits<double>::quiet_NaN();
    return report;
}

std::vector<EpisodeStart> make_episode_starts(const std::vector<corpus::Session>& sessions,
                                              int window_len,
                                              const corpus::SyntheticWorld* world) {
    std::vector<EpisodeStart> starts;
    for (const corpus::Session& s : sessions) {
        const int n = static_cast<int>(s.events.size());
        if (n < 2) continue;
        const int warmup = std::min((n + 1) / 2, n - 1);
        EpisodeStart start;
        start.user = s.user;
        start.user_idx = world ? world->user_index(s.user) : -1;
        start.window = corpus::make_window(s.events, warmup, window_len);
        start.next_pos = warmup + 1;
        start.continuation.assign(s.events.begin() + warmup, s.events.end());
        starts.push_back(std::move(start));
    }
    return starts;
}

}  // namespace ecoc::evalharness
