#include "ecoc/config.hpp"

#include "ecoc/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

namespace ecoc::config {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return {};
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::int64_t parse_int(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    std::int64_t out = 0;
    try {
        out = std::stoll(v, &pos);
    } catch (const std::exception&) {
        throw ValidationError("config key '" + key + "': expected integer, got '" + v + "'");
    }
    if (pos != v.size())
        throw ValidationError("config key '" + key + "': expected integer, got '" + v + "'");
    return out;
}

double parse_double(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    double out = 0.0;
    try {
        out = std::stod(v, &pos);
    } catch (const std::exception&) {
        throw ValidationError("config key '" + key + "': expected number, got '" + v + "'");
    }
    if (pos != v.size())
        throw ValidationError("config key '" + key + "': expected number, got '" + v + "'");
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true") return true;
    if (v == "false") return false;
    throw ValidationError("config key '" + key + "': expected true/false, got '" + v + "'");
}

std::vector<std::int64_t> parse_int_list(const std::string& key, const std::string& v) {
    std::vector<std::int64_t> out;
    std::stringstream ss(v);
    std::string part;
    while (std::getline(ss, part, ',')) {
        part = trim(part);
        if (part.empty()) continue;
        out.push_back(parse_int(key, part));
    }
    if (out.empty()) throw ValidationError("config key '" + key + "': empty list");
    return out;
}

std::string render_int_list(const std::vector<std::int64_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(v[i]);
    }
    return out;
}

struct Entry {
    std::string key;
    std::function<std::string(const AppConfig&)> get;
    std::function<void(AppConfig&, const std::string&)> set;
};

#define ECOC_INT_ENTRY(key_str, field)                                             \
    Entry{key_str, [](const AppConfig& c) { return std::to_string(c.field); },     \
          [](AppConfig& c, const std::string& v) { c.field = parse_int(key_str, v); }}
#define ECOC_DBL_ENTRY(key_str, field)                                             \
    Entry{key_str, [](const AppConfig& c) { return io::format_double(c.field); },  \
          [](AppConfig& c, const std::string& v) { c.field = parse_double(key_str, v); }}
#define ECOC_BOOL_ENTRY(key_str, field)                                                        \
    Entry{key_str, [](const AppConfig& c) { return c.field ? std::string("true") : "false"; }, \
          [](AppConfig& c, const std::string& v) { c.field = parse_bool(key_str, v); }}
#define ECOC_STR_ENTRY(key_str, field)                              \
    Entry{key_str, [](const AppConfig& c) { return c.field; },      \
          [](AppConfig& c, const std::string& v) { c.field = v; }}
#define ECOC_LIST_ENTRY(key_str, field)                                           \
    Entry{key_str, [](const AppConfig& c) { return render_int_list(c.field); },   \
          [](AppConfig& c, const std::string& v) { c.field = parse_int_list(key_str, v); }}

const std::vector<Entry>& registry() {
    static const std::vector<Entry> entries = {
        ECOC_STR_ENTRY("data.path", data_path),
        ECOC_STR_ENTRY("data.format", data_format),
        ECOC_STR_ENTRY("data.reward_scheme", reward_scheme),
        ECOC_STR_ENTRY("data.price_path", price_path),
        ECOC_DBL_ENTRY("data.train_frac", train_frac),
        ECOC_DBL_ENTRY("data.valid_frac", valid_frac),
        ECOC_INT_ENTRY("data.split_seed", split_seed),
        ECOC_INT_ENTRY("model.dim", dim),
        ECOC_INT_ENTRY("model.hidden", hidden),
        ECOC_INT_ENTRY("model.window", window),
        ECOC_DBL_ENTRY("loss.gamma", gamma),
        ECOC_DBL_ENTRY("loss.alpha", alpha),
        ECOC_DBL_ENTRY("loss.beta", beta),
        ECOC_INT_ENTRY("loss.n1", n1),
        ECOC_INT_ENTRY("loss.n2", n2),
        ECOC_STR_ENTRY("loss.xi_td_mode", xi_td_mode),
        ECOC_INT_ENTRY("loss.xi_td_n", xi_td_n),
        ECOC_DBL_ENTRY("loss.xi_td_temperature", xi_td_temperature),
        ECOC_STR_ENTRY("loss.xi_reg_mode", xi_reg_mode),
        ECOC_INT_ENTRY("loss.xi_reg_n", xi_reg_n),
        ECOC_DBL_ENTRY("loss.xi_reg_temperature", xi_reg_temperature),
        ECOC_BOOL_ENTRY("loss.bc_cross_entropy", bc_cross_entropy),
        ECOC_INT_ENTRY("train.steps", steps),
        ECOC_INT_ENTRY("train.batch_size", batch_size),
        ECOC_DBL_ENTRY("train.lr", lr),
        ECOC_DBL_ENTRY("train.actor_lr", actor_lr),
        ECOC_DBL_ENTRY("train.critic_lr", critic_lr),
        ECOC_DBL_ENTRY("train.weight_decay", weight_decay),
        ECOC_DBL_ENTRY("train.adam_beta1", adam_beta1),
        ECOC_DBL_ENTRY("train.adam_beta2", adam_beta2),
        ECOC_DBL_ENTRY("train.adam_eps", adam_eps),
        ECOC_DBL_ENTRY("train.tau", tau),
        ECOC_INT_ENTRY("train.seed", train_seed),
        ECOC_INT_ENTRY("train.checkpoint_every", checkpoint_every),
        ECOC_INT_ENTRY("train.log_every", log_every),
        ECOC_BOOL_ENTRY("train.target_embeddings", target_embeddings),
        ECOC_LIST_ENTRY("eval.ks", eval_ks),
        ECOC_INT_ENTRY("eval.seed", eval_seed),
        ECOC_INT_ENTRY("ope.horizon", ope_horizon),
        ECOC_INT_ENTRY("ope.max_states", ope_max_states),
        ECOC_INT_ENTRY("hypotest.n", hypo_n),
        ECOC_INT_ENTRY("hypotest.repeats", hypo_repeats),
        ECOC_LIST_ENTRY("hypotest.buckets", hypo_buckets),
        ECOC_INT_ENTRY("gen.n_items", gen_n_items),
        ECOC_INT_ENTRY("gen.n_sessions", gen_n_sessions),
        ECOC_INT_ENTRY("gen.min_len", gen_min_len),
        ECOC_INT_ENTRY("gen.max_len", gen_max_len),
        ECOC_INT_ENTRY("gen.latent_dim", gen_latent_dim),
        ECOC_INT_ENTRY("gen.seed", gen_seed),
        ECOC_DBL_ENTRY("gen.affinity_scale", gen_affinity_scale),
        ECOC_DBL_ENTRY("gen.pop_scale", gen_pop_scale),
        ECOC_DBL_ENTRY("gen.behavior_temp", gen_behavior_temp),
        ECOC_DBL_ENTRY("gen.favor_offset", gen_favor_offset),
        ECOC_DBL_ENTRY("gen.purchase_offset", gen_purchase_offset),
        ECOC_STR_ENTRY("out.dir", out_dir),
    };
    return entries;
}

#undef ECOC_INT_ENTRY
#undef ECOC_DBL_ENTRY
#undef ECOC_BOOL_ENTRY
#undef ECOC_STR_ENTRY
#undef ECOC_LIST_ENTRY

const Entry* find_entry(const std::string& key) {
    for (const Entry& e : registry())
        if (e.key == key) return &e;
    return nullptr;
}

}  // namespace

std::vector<std::string> known_keys() {
    std::vector<std::string> keys;
    for (const Entry& e : registry()) keys.push_back(e.key);
    return keys;
}

AppConfig parse_text(const std::string& text) {
    AppConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError("expected 'key = value'", line_no);
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const Entry* e = find_entry(key);
        if (!e) throw ParseError("unknown config key '" + key + "'", line_no);
        e->set(cfg, value);
    }
    return cfg;
}

AppConfig load_file(const std::string& path, bool apply_env) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    AppConfig cfg = parse_text(ss.str());
    if (apply_env) apply_env_overrides(cfg);
    return cfg;
}

void apply_env_overrides(AppConfig& cfg) {
    for (const Entry& e : registry()) {
        std::string env_name = "ECOC_" + e.key;
        for (std::size_t i = 0; i < env_name.size(); ++i) {
            if (env_name[i] == '.') {
                env_name.replace(i, 1, "__");
                ++i;
            }
        }
        if (const char* v = std::getenv(env_name.c_str())) e.set(cfg, v);
    }
}

std::string serialize(const AppConfig& cfg) {
    std::ostringstream out;
    out << "# ecoc configuration (env override: ECOC_<key> with '.' -> '__')\n";
    std::string section;
    for (const Entry& e : registry()) {
        const std::string sec = e.key.substr(0, e.key.find('.'));
        if (sec != section) {
            section = sec;
            out << "\n# [" << section << "]\n";
        }
        out << e.key << " = " << e.get(cfg) << "\n";
    }
    return out.str();
}

std::string digest(const AppConfig& cfg) {
    // Output routing is not part of the experiment identity, so the digest
    // covers every section except out.*.
    std::ostringstream material;
    for (const Entry& e : registry()) {
        if (e.key.rfind("out.", 0) == 0) continue;
        material << e.key << '=' << e.get(cfg) << '\n';
    }
    const std::uint64_t h = fnv1a64(material.str());
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace {
latent::XiConfig xi_config(const std::string& mode, std::int64_t n, double temperature,
                           const std::string& which) {
    latent::XiConfig xc;
    if (mode == "topn_uniform")
        xc.mode = latent::XiConfig::Mode::topn_uniform;
    else if (mode == "softmax")
        xc.mode = latent::XiConfig::Mode::softmax;
    else
        throw ValidationError("config: unknown xi mode '" + mode + "' for " + which);
    xc.n = static_cast<int>(n);
    xc.temperature = temperature;
    return xc;
}
}  // namespace

objective::LossConfig loss_config(const AppConfig& cfg) {
    objective::LossConfig lc;
    if (!(cfg.gamma >= 0.0 && cfg.gamma < 1.0))
        throw ValidationError("config: loss.gamma must lie in [0, 1)");
    if (cfg.alpha < 0.0 || cfg.beta < 0.0)
        throw ValidationError("config: loss.alpha and loss.beta must be nonnegative");
    if (cfg.n1 < 1 || cfg.n2 < 1) throw ValidationError("config: loss.n1 and loss.n2 must be >= 1");
    lc.gamma = cfg.gamma;
    lc.alpha = cfg.alpha;
    lc.beta = cfg.beta;
    lc.n1 = static_cast<int>(cfg.n1);
    lc.n2 = static_cast<int>(cfg.n2);
    lc.xi_td = xi_config(cfg.xi_td_mode, cfg.xi_td_n, cfg.xi_td_temperature, "loss.xi_td");
    lc.xi_reg = xi_config(cfg.xi_reg_mode, cfg.xi_reg_n, cfg.xi_reg_temperature, "loss.xi_reg");
    lc.bc_cross_entropy = cfg.bc_cross_entropy;
    return lc;
}

trainer::TrainConfig train_config(const AppConfig& cfg) {
    trainer::TrainConfig tc;
    if (cfg.steps < 1) throw ValidationError("config: train.steps must be >= 1");
    if (!(cfg.lr > 0.0)) throw ValidationError("config: train.lr must be positive");
    if (!(cfg.tau >= 0.0 && cfg.tau <= 1.0))
        throw ValidationError("config: train.tau must lie in [0, 1]");
    tc.steps = cfg.steps;
    tc.batch_size = static_cast<int>(cfg.batch_size);
    tc.lr = cfg.lr;
    tc.actor_lr = cfg.actor_lr;
    tc.critic_lr = cfg.critic_lr;
    tc.weight_decay = cfg.weight_decay;
    tc.adam_beta1 = cfg.adam_beta1;
    tc.adam_beta2 = cfg.adam_beta2;
    tc.adam_eps = cfg.adam_eps;
    tc.tau = cfg.tau;
    tc.loss = loss_config(cfg);
    tc.seed = static_cast<std::uint64_t>(cfg.train_seed);
    tc.checkpoint_every = cfg.checkpoint_every;
    tc.log_every = cfg.log_every;
    tc.target_embeddings = cfg.target_embeddings;
    return tc;
}

corpus::RewardScheme make_reward_scheme(const AppConfig& cfg) {
    corpus::RewardScheme scheme;
    if (cfg.reward_scheme == "graded_feedback")
        scheme.kind = corpus::RewardSchemeKind::graded_feedback;
    else if (cfg.reward_scheme == "explicit_rating")
        scheme.kind = corpus::RewardSchemeKind::explicit_rating;
    else if (cfg.reward_scheme == "price_on_purchase")
        scheme.kind = corpus::RewardSchemeKind::price_on_purchase;
    else
        throw ValidationError("config: unknown reward scheme '" + cfg.reward_scheme + "'");
    if (scheme.kind == corpus::RewardSchemeKind::price_on_purchase) {
        if (cfg.price_path.empty())
            throw ValidationError("config: price_on_purchase requires data.price_path");
        std::ifstream in(cfg.price_path);
        if (!in) throw ValidationError("cannot open price table: " + cfg.price_path);
        nlohmann::json j;
        in >> j;
        for (auto it = j.begin(); it != j.end(); ++it)
            scheme.price_table[std::stoi(it.key())] = it.value().get<double>();
    }
    return scheme;
}

corpus::GenConfig gen_config(const AppConfig& cfg) {
    corpus::GenConfig gc;
    gc.n_items = static_cast<int>(cfg.gen_n_items);
    gc.n_sessions = static_cast<int>(cfg.gen_n_sessions);
    gc.min_len = static_cast<int>(cfg.gen_min_len);
    gc.max_len = static_cast<int>(cfg.gen_max_len);
    gc.latent_dim = static_cast<int>(cfg.gen_latent_dim);
    gc.seed = static_cast<std::uint64_t>(cfg.gen_seed);
    gc.affinity_scale = cfg.gen_affinity_scale;
    gc.pop_scale = cfg.gen_pop_scale;
    gc.behavior_temp = cfg.gen_behavior_temp;
    gc.favor_offset = cfg.gen_favor_offset;
    gc.purchase_offset = cfg.gen_purchase_offset;
    return gc;
}

corpus::SessionFormat session_format(const AppConfig& cfg) {
    if (cfg.data_format == "jsonl") return corpus::SessionFormat::jsonl;
    if (cfg.data_format == "csv") return corpus::SessionFormat::csv;
    throw ValidationError("config: unknown data format '" + cfg.data_format + "'");
}

}  // namespace ecoc::config
