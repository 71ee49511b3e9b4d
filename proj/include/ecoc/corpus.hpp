#pragma once
// Logged-interaction data model: sessions, reward schemes, transition mining,
// temporal splitting, uniform batch sampling, and a seeded synthetic session
// generator whose ground-truth model doubles as an oracle environment.

#include "ecoc/common.hpp"
#include "ecoc/linalg.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ecoc::corpus {

using ItemId = std::int32_t;  // 0 is the reserved padding item
constexpr ItemId kPaddingItem = 0;

// Feedback packed into one byte: 0 none/padding, 1 click, 2 favor,
// 3 purchase, 4..8 rating 1..5.
using FeedbackCode = std::int8_t;
constexpr FeedbackCode kNoFeedback = 0;
constexpr FeedbackCode kClick = 1;
constexpr FeedbackCode kFavor = 2;
constexpr FeedbackCode kPurchase = 3;

FeedbackCode rating_feedback(int rating);       // rating in 1..5
bool is_rating(FeedbackCode f);
int rating_of(FeedbackCode f);                  // valid only when is_rating
std::string feedback_name(FeedbackCode f);      // "click", "favor", "purchase", "rating"
FeedbackCode feedback_from_name(const std::string& name, std::optional<int> rating);

struct Event {
    ItemId item = kPaddingItem;
    FeedbackCode feedback = kNoFeedback;
    std::int64_t ts = 0;
};

struct Session {
    std::string user;
    std::vector<Event> events;
    std::int64_t first_ts() const { return events.empty() ? 0 : events.front().ts; }
};

// Fixed-length window of the most recent (item, feedback) pairs, left-padded
// with the padding item. The last slot is always a real event.
struct StateWindow {
    std::vector<ItemId> items;
    std::vector<FeedbackCode> feedback;

    std::size_t length() const { return items.size(); }
    bool operator==(const StateWindow&) const = default;
};

StateWindow make_window(const std::vector<Event>& events, std::size_t upto, int window_len);
StateWindow shift(const StateWindow& w, ItemId item, FeedbackCode feedback);

struct Transition {
    StateWindow state;
    ItemId target = kPaddingItem;
    double reward = 0.0;
    StateWindow next_state;
};

enum class RewardSchemeKind { graded_feedback, explicit_rating, price_on_purchase };

struct RewardScheme {
    RewardSchemeKind kind = RewardSchemeKind::graded_feedback;
    std::map<ItemId, double> price_table;  // positive prices, price_on_purchase only
};

// Pure mapping from a feedback code to its reward under the scheme.
double assign_reward(FeedbackCode feedback, const RewardScheme& scheme, ItemId item = kPaddingItem);

enum class SessionFormat { jsonl, csv };

std::vector<Session> load_sessions(const std::string& path, SessionFormat format);
std::vector<Session> parse_sessions_jsonl(std::istream& in);
std::vector<Session> parse_sessions_csv(std::istream& in);
void write_sessions_jsonl(const std::vector<Session>& sessions, std::ostream& out);

struct SplitResult {
    std::vector<Session> train;
    std::vector<Session> valid;
    std::vector<Session> test;
};

// Splits at a global timestamp boundary so training interactions precede test
// interactions; validation sessions are drawn seeded-random from the training
// era (valid_frac is relative to that era).
SplitResult temporal_split(const std::vector<Session>& sessions, double train_frac,
                           double valid_frac, std::uint64_t seed = 0x5eedULL);

// One transition per prediction position; sessions shorter than 2 yield none.
std::vector<Transition> to_transitions(const Session& session, int window_len,
                                       const RewardScheme& scheme);

struct TransitionStore {
    std::vector<Transition> transitions;
    int window_len = 0;
    int catalog_size = 0;       // items are 1..catalog_size-1; 0 is padding
    std::int64_t skipped_sessions = 0;

    std::size_t size() const { return transitions.size(); }
    bool empty() const { return transitions.empty(); }
};

TransitionStore mine_transitions(const std::vector<Session>& sessions, int window_len,
                                 const RewardScheme& scheme, int catalog_size = 0);

using Batch = std::vector<const Transition*>;

// Uniform with replacement; the same rng state yields the same batch sequence.
Batch sample_batch(const TransitionStore& store, std::size_t size, Rng& rng);

// ---------------------------------------------------------------------------
// Synthetic data with an analytic ground truth.
// ---------------------------------------------------------------------------

struct GenConfig {
    int n_items = 200;       // catalog size incl. padding slot 0
    int n_sessions = 5000;
    int min_len = 3;
    int max_len = 20;
    int latent_dim = 8;
    std::uint64_t seed = 7;
    double affinity_scale = 2.5;
    double pop_scale = 0.5;
    double behavior_temp = 0.8;
    double favor_offset = 1.0;     // ordered-logistic threshold for favor-or-better
    double purchase_offset = 2.5;  // threshold for purchase
};

// Latent-factor click model with popularity skew. Feedback for a
// (user, position, item) triple is an ordered-logistic draw from a hashed
// uniform, so replaying logged sessions reproduces logged feedback exactly.
struct SyntheticWorld {
    GenConfig cfg;
    linalg::Mat user_vecs;  // n_sessions x latent_dim
    linalg::Mat item_vecs;  // n_items x latent_dim (row 0 unused)
    Vec popularity;         // n_items (slot 0 unused)

    double affinity(int user_idx, ItemId item) const;
    FeedbackCode feedback_at(int user_idx, int position, ItemId item) const;
    // P(feedback at least `level`) for level in {kFavor, kPurchase}.
    double prob_at_least(int user_idx, ItemId item, FeedbackCode level) const;
    int user_index(const std::string& user) const;  // "u<k>" names
};

struct SyntheticData {
    std::vector<Session> sessions;
    SyntheticWorld world;
};

SyntheticData gen_synthetic(const GenConfig& cfg);

// Fraction of non-padding items that appear at least once.
double catalog_coverage(const std::vector<Session>& sessions, int n_items);

// Oracle env descriptor: the world's ground-truth parameters, bit-exact.
void save_world(const SyntheticWorld& world, const std::string& path);
SyntheticWorld load_world(const std::string& path);

}  // namespace ecoc::corpus
