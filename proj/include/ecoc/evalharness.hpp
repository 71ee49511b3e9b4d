#pragma once
// Imitation metrics (HR/MRR/NDCG at k), simulated-environment interfaces,
// the off-policy evaluation rollout, and reward-ratio reporting.

#include "ecoc/corpus.hpp"
#include "ecoc/critic.hpp"

#include <functional>
#include <map>
#include <memory>
#include <span>
#include <vector>

namespace ecoc::evalharness {

using corpus::FeedbackCode;
using corpus::ItemId;
using corpus::StateWindow;
using corpus::Transition;

struct MetricSample {
    int hit = 0;
    double rr = 0.0;
    double ndcg = 0.0;
};

// Single-relevant-item metrics for a ranked list truncated at k.
MetricSample metric_at_k(const std::vector<ItemId>& ranked, ItemId target, int k);
MetricSample metric_from_rank(int rank, int k);  // same, given the 1-based rank

struct MetricReport {
    std::vector<int> ks;
    std::map<int, double> hr, mrr, ndcg;
    std::int64_t n_samples = 0;
};

MetricReport evaluate_imitation(const critic::Nets& nets, std::span<const Transition> tests,
                                std::vector<int> ks);

// Baseline evaluation for state-independent scores (popularity and friends);
// scores are indexed by item id, slot 0 ignored.
MetricReport evaluate_static_scores(const Vec& scores, std::span<const Transition> tests,
                                    std::vector<int> ks, int n_items);

// Train-split item frequencies, the popularity-ranking baseline.
Vec popularity_scores(std::span<const Transition> train, int n_items);

struct EnvStep {
    FeedbackCode feedback = corpus::kNoFeedback;
    double reward = 0.0;
    bool done = false;
};

struct EpisodeStart {
    std::string user;
    int user_idx = -1;  // resolved for oracle worlds, -1 otherwise
    StateWindow window;
    int next_pos = 1;  // 1-based position of the first responded event
    std::vector<corpus::Event> continuation;  // logged events after the window
};

/// Environment interface: deterministic given the rng stream, rewards
/// consistent with the active reward scheme.
class SimEnv {
public:
    virtual ~SimEnv() = default;
    virtual void reset(const EpisodeStart& start) = 0;
    virtual EnvStep respond(const StateWindow& state, ItemId recommended, Rng& rng) = 0;
};

/// Ground-truth environment over the synthetic world; replaying logged
/// sessions reproduces logged rewards exactly.
class OracleEnv : public SimEnv {
public:
    OracleEnv(const corpus::SyntheticWorld& world, corpus::RewardScheme scheme)
        : world_(&world), scheme_(std::move(scheme)) {}
    void reset(const EpisodeStart& start) override;
    EnvStep respond(const StateWindow& state, ItemId recommended, Rng& rng) override;

private:
    const corpus::SyntheticWorld* world_;
    corpus::RewardScheme scheme_;
    int user_ = -1;
    int pos_ = 1;
};

struct FitEnvConfig {
    int dim = 16;
    int hidden = 32;
    std::int64_t steps = 1500;
    int batch_size = 128;
    double lr = 1e-2;
    std::uint64_t seed = 99;
};

/// Supervised next-feedback model: the reference encoder with an
/// ordered-logistic feedback head; respond() draws the feedback level from
/// the predicted distribution.
class FittedEnv : public SimEnv {
public:
    void reset(const EpisodeStart& start) override;
    EnvStep respond(const StateWindow& state, ItemId recommended, Rng& rng) override;

    // P(feedback at level index >= j), j in 1..levels-1, for one state/item.
    double prob_at_least(const StateWindow& state, ItemId item, int level_index) const;
    double mean_positive_rate(std::span<const Transition> data) const;
    int levels() const { return static_cast<int>(thresholds_.size()) + 1; }

    friend FittedEnv fit_sim_env(const corpus::TransitionStore& test,
                                 const corpus::RewardScheme& scheme, const FitEnvConfig& cfg);

private:
    double score(const StateWindow& state, ItemId item) const;
    FeedbackCode level_to_feedback(int level) const;
    int feedback_to_level(FeedbackCode f) const;

    latent::EmbeddingMatrix emb_;
    policy::EncoderParams enc_;
    policy::ProjectionParams proj_;
    double scale_ = 1.0;
    Vec thresholds_;  // ascending; levels = thresholds + 1
    corpus::RewardScheme scheme_;
};

FittedEnv fit_sim_env(const corpus::TransitionStore& test, const corpus::RewardScheme& scheme,
                      const FitEnvConfig& cfg = {});

// Recommender under evaluation: maps (state, step index within episode) to an
// item. The greedy policy ignores the step index.
using Recommender = std::function<ItemId(const StateWindow&, int)>;

Recommender greedy_recommender(const critic::Nets& nets);
Recommender logged_recommender(const EpisodeStart& start);

struct TraceStep {
    ItemId item;
    FeedbackCode feedback;
    double reward;
};

struct OpeTrace {
    std::string user;
    std::vector<TraceStep> policy;
    std::vector<TraceStep> logged;
    double policy_total = 0.0;
    double logged_total = 0.0;
};

struct OpeReport {
    double policy_total = 0.0;
    double logged_total = 0.0;
    double ratio = 0.0;  // NaN when the logged total is zero
    int horizon = 0;
    std::int64_t n_states = 0;
    std::vector<OpeTrace> traces;
};

// Top-1 greedy rollouts against the environment, normalized by the reward the
// same environment assigns to the logged continuations.
OpeReport ope_run(const Recommender& recommender, SimEnv& env,
                  std::span<const EpisodeStart> starts, int horizon, Rng& rng);

// Episode starts from test sessions: warmup is the first half of each session
// (at least one event), the rest is the logged continuation.
std::vector<EpisodeStart> make_episode_starts(const std::vector<corpus::Session>& sessions,
                                              int window_len,
                                              const corpus::SyntheticWorld* world);

}  // namespace ecoc::evalharness
