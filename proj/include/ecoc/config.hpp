#pragma once
// Operator configuration: a flat, commented key-value file with dotted
// section keys, environment-variable overrides, canonical serialization,
// and a provenance digest carried by every report.

#include "ecoc/corpus.hpp"
#include "ecoc/objective.hpp"
#include "ecoc/trainer.hpp"

#include <string>
#include <vector>

namespace ecoc::config {

struct AppConfig {
    // data
    std::string data_path = "data/sessions.jsonl";
    std::string data_format = "jsonl";  // jsonl | csv
    std::string reward_scheme = "graded_feedback";
    std::string price_path;  // item->price JSON map, price_on_purchase only
    double train_frac = 0.8;
    double valid_frac = 0.1;
    std::int64_t split_seed = 13;
    // model
    std::int64_t dim = 32;
    std::int64_t hidden = 64;
    std::int64_t window = 50;
    // loss
    double gamma = 0.5;
    double alpha = 5.0;
    double beta = 1.0;
    std::int64_t n1 = 500;
    std::int64_t n2 = 10000;
    std::string xi_td_mode = "topn_uniform";
    std::int64_t xi_td_n = 10;
    double xi_td_temperature = 1.0;
    std::string xi_reg_mode = "topn_uniform";
    std::int64_t xi_reg_n = 10;
    double xi_reg_temperature = 1.0;
    bool bc_cross_entropy = false;
    // train
    std::int64_t steps = 1000;
    std::int64_t batch_size = 256;
    double lr = 1e-3;
    double actor_lr = -1.0;
    double critic_lr = -1.0;
    double weight_decay = 1e-5;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double tau = 0.995;
    std::int64_t train_seed = 1;
    std::int64_t checkpoint_every = 0;
    std::int64_t log_every = 10;
    bool target_embeddings = false;
    // eval
    std::vector<std::int64_t> eval_ks = {5, 10, 20};
    std::int64_t eval_seed = 42;
    // ope
    std::int64_t ope_horizon = 10;
    std::int64_t ope_max_states = 0;  // 0: all test sessions
    // hypotest
    std::int64_t hypo_n = 10000;
    std::int64_t hypo_repeats = 20;
    std::vector<std::int64_t> hypo_buckets = {1, 5, 10, 20};
    // gen
    std::int64_t gen_n_items = 200;
    std::int64_t gen_n_sessions = 5000;
    std::int64_t gen_min_len = 3;
    std::int64_t gen_max_len = 20;
    std::int64_t gen_latent_dim = 8;
    std::int64_t gen_seed = 7;
    double gen_affinity_scale = 2.5;
    double gen_pop_scale = 0.5;
    double gen_behavior_temp = 0.8;
    double gen_favor_offset = 1.0;
    double gen_purchase_offset = 2.5;
    // out
    std::string out_dir = "out";
};

// Parses `key = value` lines; '#' starts a comment; unknown keys are errors.
AppConfig parse_text(const std::string& text);
AppConfig load_file(const std::string& path, bool apply_env = true);

// Applies ECOC_-prefixed environment overrides: dots become double
// underscores (e.g. train.steps -> ECOC_train__steps).
void apply_env_overrides(AppConfig& cfg);

// Canonical commented text; parse_text(serialize(c)) reproduces c.
std::string serialize(const AppConfig& cfg);

// FNV-1a hash over the canonical key/value material, as fixed-width hex.
// Covers everything except out.* (output routing is not experiment identity).
std::string digest(const AppConfig& cfg);

std::vector<std::string> known_keys();

objective::LossConfig loss_config(const AppConfig& cfg);
trainer::TrainConfig train_config(const AppConfig& cfg);
corpus::RewardScheme make_reward_scheme(const AppConfig& cfg);
corpus::GenConfig gen_config(const AppConfig& cfg);
corpus::SessionFormat session_format(const AppConfig& cfg);

}  // namespace ecoc::config
