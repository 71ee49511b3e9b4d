#include "ecoc/corpus.hpp"

#include "ecoc/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace ecoc::corpus {

using ordered_json = nlohmann::ordered_json;

FeedbackCode rating_feedback(int rating) {
    if (rating < 1 || rating > 5) throw ValidationError("rating must lie in 1..5");
    return static_cast<FeedbackCode>(3 + rating);
}

bool is_rating(FeedbackCode f) { return f >= 4 && f <= 8; }

int rating_of(FeedbackCode f) {
    if (!is_rating(f)) throw ValidationError("feedback is not a rating");
    return f - 3;
}

std::string feedback_name(FeedbackCode f) {
    switch (f) {
        case kClick: return "click";
        case kFavor: return "favor";
        case kPurchase: return "purchase";
        default:
            if (is_rating(f)) return "rating";
            return "none";
    }
}

FeedbackCode feedback_from_name(const std::string& name, std::optional<int> rating) {
    if (name == "click") return kClick;
    if (name == "favor") return kFavor;
    if (name == "purchase") return kPurchase;
    if (name == "rating") {
        if (!rating) throw ValidationError("rating feedback requires a rating value");
        return rating_feedback(*rating);
    }
    throw ValidationError("unknown feedback kind: " + name);
}

StateWindow make_window(const std::vector<Event>& events, std::size_t upto, int window_len) {
    if (window_len < 1) throw ValidationError("window length must be >= 1");
    StateWindow w;
    w.items.assign(window_len, kPaddingItem);
    w.feedback.assign(window_len, kNoFeedback);
    const std::size_t take = std::min<std::size_t>(upto, window_len);
    for (std::size_t k = 0; k < take; ++k) {
        const Event& e = events[upto - take + k];
        const std::size_t slot = window_len - take + k;
        w.items[slot] = e.item;
        w.feedback[slot] = e.feedback;
    }
    return w;
}

StateWindow shift(const StateWindow& w, ItemId item, FeedbackCode feedback) {
    StateWindow out = w;
    if (!out.items.empty()) {
        out.items.erase(out.items.begin());
        out.feedback.erase(out.feedback.begin());
    }
    out.items.push_back(item);
    out.feedback.push_back(feedback);
    return out;
}

double assign_reward(FeedbackCode feedback, const RewardScheme& scheme, ItemId item) {
    switch (scheme.kind) {
        case RewardSchemeKind::graded_feedback:
            if (feedback == kClick) return 1.0;
            if (feedback == kFavor) return 2.0;
            if (feedback == kPurchase) return 3.0;
            throw ValidationError("graded_feedback scheme expects click/favor/purchase feedback");
        case RewardSchemeKind::explicit_rating:
            if (!is_rating(feedback))
                throw ValidationError("explicit_rating scheme expects rating feedback");
            return static_cast<double>(rating_of(feedback));
        case RewardSchemeKind::price_on_purchase: {
            if (feedback != kPurchase) return 0.0;
            auto it = scheme.price_table.find(item);
            if (it == scheme.price_table.end())
                throw ValidationError("price_on_purchase: no price for item " + std::to_string(item));
            return it->second;
        }
    }
    throw ValidationError("unknown reward scheme");
}

namespace {

void validate_session(const Session& s, std::size_t line_no) {
    std::int64_t prev = std::numeric_limits<std::int64_t>::min();
    for (const Event& e : s.events) {
        if (e.item < 1) throw ParseError("item ids must be positive (0 is the padding item)", line_no);
        if (e.ts < prev)
            throw ParseError("timestamps within a session must be non-decreasing", line_no);
        prev = e.ts;
    }
}

void sort_by_first_ts(std::vector<Session>& sessions) {
    std::stable_sort(sessions.begin(), sessions.end(), [](const Session& a, const Session& b) {
        if (a.first_ts() != b.first_ts()) return a.first_ts() < b.first_ts();
        return a.user < b.user;
    });
}

}  // namespace

std::vector<Session> parse_sessions_jsonl(std::istream& in) {
    std::vector<Session> sessions;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        } catch (const std::exception& e) {
            throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
        }
        Session s;
        try {
            s.user = j.at("user").get<std::string>();
            for (const auto& je : j.at("events")) {
                Event e;
                e.item = je.at("item").get<ItemId>();
                std::optional<int> rating;
                if (je.contains("rating") && !je.at("rating").is_null())
                    rating = je.at("rating").get<int>();
                e.feedback = feedback_from_name(je.at("feedback").get<std::string>(), rating);
                e.ts = je.at("ts").get<std::int64_t>();
                s.events.push_back(e);
            }
        } catch (const ValidationError& e) {
            throw ParseError(e.what(), line_no);
        } catch (const std::exception& e) {
            throw ParseError(std::string("bad session record: ") + e.what(), line_no);
        }
        validate_session(s, line_no);
        sessions.push_back(std::move(s));
    }
    sort_by_first_ts(sessions);
    return sessions;
}

std::vector<Session> parse_sessions_csv(std::istream& in) {
    std::vector<Session> sessions;
    std::map<std::string, std::size_t> index;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line_no == 1 && line.rfind("user,", 0) == 0) continue;  // header
        std::istringstream ss(line);
        std::string user, item_s, fb_s, rating_s, ts_s;
        if (!std::getline(ss, user, ',') || !std::getline(ss, item_s, ',') ||
            !std::getline(ss, fb_s, ',') || !std::getline(ss, rating_s, ',') ||
            !std::getline(ss, ts_s))
            throw ParseError("expected columns user,item,feedback,rating,ts", line_no);
        Event e;
        try {
            e.item = static_cast<ItemId>(std::stol(item_s));
            std::optional<int> rating;
            if (!rating_s.empty()) rating = std::stoi(rating_s);
            e.feedback = feedback_from_name(fb_s, rating);
            e.ts = std::stoll(ts_s);
        } catch (const ValidationError& ve) {
            throw ParseError(ve.what(), line_no);
        } catch (const std::exception&) {
            throw ParseError("malformed csv row", line_no);
        }
        if (e.item < 1)
            throw ParseError("item ids must be positive (0 is the padding item)", line_no);
        auto it = index.find(user);
        if (it == index.end()) {
            index.emplace(user, sessions.size());
            sessions.push_back(Session{user, {e}});
        } else {
            Session& s = sessions[it->second];
            if (e.ts < s.events.back().ts)
                throw ParseError("timestamps within a session must be non-decreasing", line_no);
            s.events.push_back(e);
        }
    }
    sort_by_first_ts(sessions);
    return sessions;
}

std::vector<Session> load_sessions(const std::string& path, SessionFormat format) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open session file: " + path);
    return format == SessionFormat::jsonl ? parse_sessions_jsonl(in) : parse_sessions_csv(in);
}

void write_sessions_jsonl(const std::vector<Session>& sessions, std::ostream& out) {
    for (const Session& s : sessions) {
        ordered_json j;
        j["user"] = s.user;
        ordered_json evs = ordered_json::array();
        for (const Event& e : s.events) {
            ordered_json je;
            je["item"] = e.item;
            je["feedback"] = feedback_name(e.feedback);
            if (is_rating(e.feedback)) je["rating"] = rating_of(e.feedback);
            je["ts"] = e.ts;
            evs.push_back(std::move(je));
        }
        j["events"] = std::move(evs);
        out << j.dump() << '\n';
    }
}

SplitResult temporal_split(const std::vector<Session>& sessions, double train_frac,
                           double valid_frac, std::uint64_t seed) {
    if (!(train_frac > 0.0) || !(valid_frac > 0.0) || !(train_frac + valid_frac < 1.0))
        throw ValidationError("split fractions must satisfy 0 < train, valid and train+valid < 1");

    std::vector<Session> ordered = sessions;
    sort_by_first_ts(ordered);

    std::size_t total_events = 0;
    for (const Session& s : ordered) total_events += s.events.size();
    const double target = train_frac * static_cast<double>(total_events);

    SplitResult out;
    std::vector<Session> era;
    std::size_t cum = 0;
    for (Session& s : ordered) {
        if (static_cast<double>(cum) < target) {
            cum += s.events.size();
            era.push_back(std::move(s));
        } else {
            out.test.push_back(std::move(s));
        }
    }

    // Validation is a seeded random draw of sessions from the training era.
    const std::size_t n_valid =
        static_cast<std::size_t>(std::llround(valid_frac * static_cast<double>(era.size())));
    std::vector<std::size_t> idx(era.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    for (std::size_t i = 0; i < n_valid && i + 1 < idx.size(); ++i) {
        const std::size_t j = i + rng.below(idx.size() - i);
        std::swap(idx[i], idx[j]);
    }
    std::vector<bool> is_valid(era.size(), false);
    for (std::size_t i = 0; i < n_valid && i < idx.size(); ++i) is_valid[idx[i]] = true;
    for (std::size_t i = 0; i < era.size(); ++i) {
        (is_valid[i] ? out.valid : out.train).push_back(std::move(era[i]));
    }
    return out;
}

std::vector<Transition> to_transitions(const Session& session, int window_len,
                                       const RewardScheme& scheme) {
    std::vector<Transition> out;
    const std::size_t n = session.events.size();
    if (n < 2) return out;
    out.reserve(n - 1);
    for (std::size_t t = 1; t < n; ++t) {
        const Event& target = session.events[t];
        Transition tr;
        tr.state = make_window(session.events, t, window_len);
        tr.target = target.item;
        tr.reward = assign_reward(target.feedback, scheme, target.item);
        tr.next_state = shift(tr.state, target.item, target.feedback);
        out.push_back(std::move(tr));
    }
    return out;
}

TransitionStore mine_transitions(const std::vector<Session>& sessions, int window_len,
                                 const RewardScheme& scheme, int catalog_size) {
    TransitionStore store;
    store.window_len = window_len;
    ItemId max_item = 0;
    for (const Session& s : sessions) {
        if (s.events.size() < 2) {
            ++store.skipped_sessions;
            continue;
        }
        auto trs = to_transitions(s, window_len, scheme);
        for (auto& tr : trs) {
            max_item = std::max(max_item, tr.target);
            for (ItemId i : tr.state.items) max_item = std::max(max_item, i);
            store.transitions.push_back(std::move(tr));
        }
    }
    store.catalog_size = catalog_size > 0 ? catalog_size : max_item + 1;
    if (max_item >= store.catalog_size)
        throw ValidationError("item id " + std::to_string(max_item) +
                              " exceeds catalog size " + std::to_string(store.catalog_size));
    return store;
}

Batch sample_batch(const TransitionStore& store, std::size_t size, Rng& rng) {
    if (store.empty()) throw ValidationError("cannot sample from an empty transition store");
    if (size < 1) throw ValidationError("batch size must be >= 1");
    Batch batch;
    batch.reserve(size);
    for (std::size_t i = 0; i < size; ++i)
        batch.push_back(&store.transitions[rng.below(store.size())]);
    return batch;
}

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

double SyntheticWorld::affinity(int user_idx, ItemId item) const {
    return cfg.affinity_scale *
               linalg::dot(user_vecs.row_span(user_idx), item_vecs.row_span(item)) +
           popularity[item];
}

FeedbackCode SyntheticWorld::feedback_at(int user_idx, int position, ItemId item) const {
    const double z = affinity(user_idx, item);
    const double u = hash_u01(cfg.seed, static_cast<std::uint64_t>(user_idx),
                              static_cast<std::uint64_t>(position),
                              static_cast<std::uint64_t>(item));
    if (u < sigmoid(z - cfg.purchase_offset)) return kPurchase;
    if (u < sigmoid(z - cfg.favor_offset)) return kFavor;
    return kClick;
}

double SyntheticWorld::prob_at_least(int user_idx, ItemId item, FeedbackCode level) const {
    const double z = affinity(user_idx, item);
    if (level == kPurchase) return sigmoid(z - cfg.purchase_offset);
    if (level == kFavor) return sigmoid(z - cfg.favor_offset);
    return 1.0;
}

int SyntheticWorld::user_index(const std::string& user) const {
    if (user.size() < 2 || user[0] != 'u')
        throw ValidationError("oracle world does not know user '" + user + "'");
    int idx = 0;
    try {
        idx = std::stoi(user.substr(1));
    } catch (const std::exception&) {
        throw ValidationError("oracle world does not know user '" + user + "'");
    }
    if (idx < 0 || idx >= cfg.n_sessions)
        throw ValidationError("oracle user index out of range: " + user);
    return idx;
}

SyntheticData gen_synthetic(const GenConfig& cfg) {
    if (cfg.n_items < 10) throw ValidationError("gen_synthetic requires n_items >= 10");
    if (cfg.latent_dim < 2) throw ValidationError("gen_synthetic requires latent_dim >= 2");
    if (cfg.min_len < 2 || cfg.max_len < cfg.min_len)
        throw ValidationError("gen_synthetic requires 2 <= min_len <= max_len");

    SyntheticData data;
    SyntheticWorld& world = data.world;
    world.cfg = cfg;
    Rng rng(cfg.seed);

    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.latent_dim));
    world.item_vecs = linalg::Mat(cfg.n_items, cfg.latent_dim);
    for (int i = 1; i < cfg.n_items; ++i)
        for (int k = 0; k < cfg.latent_dim; ++k) world.item_vecs.at(i, k) = rng.normal() * scale;
    world.popularity.assign(cfg.n_items, 0.0);
    for (int i = 1; i < cfg.n_items; ++i) world.popularity[i] = rng.normal() * cfg.pop_scale;
    world.user_vecs = linalg::Mat(cfg.n_sessions, cfg.latent_dim);
    for (int uix = 0; uix < cfg.n_sessions; ++uix)
        for (int k = 0; k < cfg.latent_dim; ++k) world.user_vecs.at(uix, k) = rng.normal() * scale;

    const int n_choices = cfg.n_items - 1;
    Vec weights(n_choices);
    data.sessions.reserve(cfg.n_sessions);
    for (int uix = 0; uix < cfg.n_sessions; ++uix) {
        // Behavior policy: softmax over affinities, sampled per display slot.
        double zmax = -1e300;
        for (int i = 1; i < cfg.n_items; ++i)
            zmax = std::max(zmax, world.affinity(uix, i));
        double total = 0.0;
        for (int i = 1; i < cfg.n_items; ++i) {
            weights[i - 1] = std::exp((world.affinity(uix, i) - zmax) / cfg.behavior_temp);
            total += weights[i - 1];
        }

        Session s;
        s.user = "u" + std::to_string(uix);
        const int len = cfg.min_len +
                        static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.max_len - cfg.min_len + 1)));
        const std::int64_t base_ts = static_cast<std::int64_t>(uix) * (cfg.max_len + 2);
        for (int pos = 1; pos <= len; ++pos) {
            const double u = rng.uniform01() * total;
            double acc = 0.0;
            ItemId item = static_cast<ItemId>(n_choices);  // fallback to the last item
            for (int i = 1; i < cfg.n_items; ++i) {
                acc += weights[i - 1];
                if (u < acc) {
                    item = static_cast<ItemId>(i);
                    break;
                }
            }
            Event e;
            e.item = item;
            e.feedback = world.feedback_at(uix, pos, item);
            e.ts = base_ts + pos;
            s.events.push_back(e);
        }
        data.sessions.push_back(std::move(s));
    }
    return data;
}

void save_world(const SyntheticWorld& world, const std::string& path) {
    io::Container c;
    c.meta["kind"] = "ecoc-oracle";
    c.meta["n_items"] = world.cfg.n_items;
    c.meta["n_sessions"] = world.cfg.n_sessions;
    c.meta["min_len"] = world.cfg.min_len;
    c.meta["max_len"] = world.cfg.max_len;
    c.meta["latent_dim"] = world.cfg.latent_dim;
    c.meta["seed"] = world.cfg.seed;
    c.meta["affinity_scale"] = world.cfg.affinity_scale;
    c.meta["pop_scale"] = world.cfg.pop_scale;
    c.meta["behavior_temp"] = world.cfg.behavior_temp;
    c.meta["favor_offset"] = world.cfg.favor_offset;
    c.meta["purchase_offset"] = world.cfg.purchase_offset;
    auto& users = c.add_f64("user_vecs", {world.user_vecs.rows, world.user_vecs.cols});
    users.f = world.user_vecs.a;
    auto& items = c.add_f64("item_vecs", {world.item_vecs.rows, world.item_vecs.cols});
    items.f = world.item_vecs.a;
    auto& pop = c.add_f64("popularity", {world.popularity.size()});
    pop.f = world.popularity;
    io::save_container(c, path);
}

SyntheticWorld load_world(const std::string& path) {
    const io::Container c = io::load_container(path);
    if (c.meta.value("kind", std::string{}) != "ecoc-oracle")
        throw ValidationError("file is not an oracle descriptor: " + path);
    SyntheticWorld world;
    world.cfg.n_items = c.meta.at("n_items").get<int>();
    world.cfg.n_sessions = c.meta.at("n_sessions").get<int>();
    world.cfg.min_len = c.meta.at("min_len").get<int>();
    world.cfg.max_len = c.meta.at("max_len").get<int>();
    world.cfg.latent_dim = c.meta.at("latent_dim").get<int>();
    world.cfg.seed = c.meta.at("seed").get<std::uint64_t>();
    world.cfg.affinity_scale = c.meta.at("affinity_scale").get<double>();
    world.cfg.pop_scale = c.meta.at("pop_scale").get<double>();
    world.cfg.behavior_temp = c.meta.at("behavior_temp").get<double>();
    world.cfg.favor_offset = c.meta.at("favor_offset").get<double>();
    world.cfg.purchase_offset = c.meta.at("purchase_offset").get<double>();
    world.user_vecs = linalg::Mat(world.cfg.n_sessions, world.cfg.latent_dim);
    world.user_vecs.a = c.get("user_vecs").f;
    world.item_vecs = linalg::Mat(world.cfg.n_items, world.cfg.latent_dim);
    world.item_vecs.a = c.get("item_vecs").f;
    world.popularity = c.get("popularity").f;
    if (world.user_vecs.a.size() != world.user_vecs.rows * world.user_vecs.cols ||
        world.item_vecs.a.size() != world.item_vecs.rows * world.item_vecs.cols ||
        world.popularity.size() != static_cast<std::size_t>(world.cfg.n_items))
        throw ValidationError("oracle descriptor arrays have inconsistent shapes");
    return world;
}

double catalog_coverage(const std::vector<Session>& sessions, int n_items) {
    std::vector<bool> seen(n_items, false);
    for (const Session& s : sessions)
        for (const Event& e : s.events)
            if (e.item > 0 && e.item < n_items) seen[e.item] = true;
    std::size_t count = 0;
    for (int i = 1; i < n_items; ++i) count += seen[i] ? 1 : 0;
    return n_items > 1 ? static_cast<double>(count) / static_cast<double>(n_items - 1) : 0.0;
}

}  // namespace ecoc::corpus
