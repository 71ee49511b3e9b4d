// ecoc command-line tool: gen-data, train, eval, ope, hypotest, inspect.
// Exit codes: 0 success, 1 validation failure, 2 numerical failure.

#include "ecoc/config.hpp"
#include "ecoc/corpus.hpp"
#include "ecoc/evalharness.hpp"
#include "ecoc/hypotest.hpp"
#include "ecoc/io.hpp"
#include "ecoc/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace ecoc;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_dir;
    std::int64_t seed = -1;  // -1: keep the config's seed
};

config::AppConfig resolve_config(const CommonOpts& opts) {
    config::AppConfig cfg =
        opts.config_path.empty() ? config::AppConfig{} : config::load_file(opts.config_path);
    if (opts.config_path.empty()) config::apply_env_overrides(cfg);
    if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
    return cfg;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + path);
    out << text;
}

void write_json(const std::string& path, const ordered_json& j) {
    write_text(path, j.dump(2) + "\n");
}

std::vector<int> to_int_vector(const std::vector<std::int64_t>& v) {
    return std::vector<int>(v.begin(), v.end());
}

int catalog_from_sessions(const std::vector<corpus::Session>& sessions) {
    corpus::ItemId max_item = 0;
    for (const auto& s : sessions)
        for (const auto& e : s.events) max_item = std::max(max_item, e.item);
    return max_item + 1;
}

struct LoadedData {
    corpus::SplitResult split;
    int catalog = 0;
};

LoadedData load_and_split(const config::AppConfig& cfg, const std::string& data_path) {
    const std::string path = data_path.empty() ? cfg.data_path : data_path;
    auto sessions = corpus::load_sessions(path, config::session_format(cfg));
    LoadedData out;
    out.catalog = catalog_from_sessions(sessions);
    out.split = corpus::temporal_split(sessions, cfg.train_frac, cfg.valid_frac,
                                       static_cast<std::uint64_t>(cfg.split_seed));
    return out;
}

ordered_json provenance(const config::AppConfig& cfg, std::int64_t seed) {
    ordered_json j;
    j["config_digest"] = config::digest(cfg);
    j["seed"] = seed;
    return j;
}

int cmd_gen_data(const CommonOpts& opts, bool force) {
    config::AppConfig cfg = resolve_config(opts);
    if (opts.seed >= 0) cfg.gen_seed = opts.seed;
    fs::create_directories(cfg.out_dir);
    const std::string sessions_path = cfg.out_dir + "/sessions.jsonl";
    const std::string oracle_path = cfg.out_dir + "/oracle.bin";
    const std::string manifest_path = cfg.out_dir + "/manifest.json";
    if (!force && (fs::exists(sessions_path) || fs::exists(oracle_path)))
        throw ValidationError("output exists (use --force to overwrite): " + sessions_path);

    const corpus::SyntheticData data = corpus::gen_synthetic(config::gen_config(cfg));
    {
        std::ofstream out(sessions_path, std::ios::trunc);
        if (!out) throw ValidationError("cannot write " + sessions_path);
        corpus::write_sessions_jsonl(data.sessions, out);
    }
    corpus::save_world(data.world, oracle_path);

    std::size_t n_events = 0;
    for (const auto& s : data.sessions) n_events += s.events.size();
    ordered_json manifest;
    manifest["kind"] = "ecoc-dataset";
    manifest["provenance"] = provenance(cfg, cfg.gen_seed);
    manifest["counts"]["sessions"] = data.sessions.size();
    manifest["counts"]["events"] = n_events;
    manifest["counts"]["catalog_coverage"] =
        corpus::catalog_coverage(data.sessions, static_cast<int>(cfg.gen_n_items));
    manifest["files"]["sessions"] = "sessions.jsonl";
    manifest["files"]["oracle"] = "oracle.bin";
    write_json(manifest_path, manifest);
    std::cout << "wrote " << sessions_path << " (" << data.sessions.size() << " sessions, "
              << n_events << " events)\n";
    return 0;
}

int cmd_train(const CommonOpts& opts, const std::string& data_path, const std::string& resume) {
    config::AppConfig cfg = resolve_config(opts);
    if (opts.seed >= 0) cfg.train_seed = opts.seed;
    fs::create_directories(cfg.out_dir);

    const LoadedData data = load_and_split(cfg, data_path);
    const corpus::RewardScheme scheme = config::make_reward_scheme(cfg);
    const corpus::TransitionStore store = corpus::mine_transitions(
        data.split.train, static_cast<int>(cfg.window), scheme, data.catalog);
    if (store.empty()) throw ValidationError("training split yields no transitions");

    const trainer::TrainConfig tc = config::train_config(cfg);
    trainer::TrainState state;
    if (resume.empty()) {
        state = trainer::init_state(data.catalog, static_cast<int>(cfg.dim),
                                    static_cast<int>(cfg.hidden), tc);
    } else {
        auto loaded = trainer::load_checkpoint(resume, config::digest(cfg));
        if (loaded.digest_mismatch)
            std::cerr << "warning: checkpoint config digest " << loaded.stored_digest
                      << " differs from current config " << config::digest(cfg) << "\n";
        state = std::move(loaded.state);
    }

    const std::string ckpt_path = cfg.out_dir + "/checkpoint.bin";
    const auto on_checkpoint = [&](const trainer::TrainState& st) {
        trainer::save_checkpoint(st, ckpt_path, config::digest(cfg));
    };
    const trainer::FitResult result = trainer::fit(state, store, tc, on_checkpoint);
    trainer::save_checkpoint(state, ckpt_path, config::digest(cfg));
    latent::export_embeddings(state.nets.emb, cfg.out_dir + "/embeddings.bin");

    std::ostringstream curve;
    curve << "step,l_td,l_reg,l_bc,l_dc,wall_ms\n";
    for (const auto& row : result.curve)
        curve << row.step << ',' << io::format_double(row.l_td) << ','
              << io::format_double(row.l_reg) << ',' << io::format_double(row.l_bc) << ','
              << io::format_double(row.l_dc) << ',' << io::format_double(row.wall_ms) << "\n";
    write_text(cfg.out_dir + "/curve.csv", curve.str());
    write_text(cfg.out_dir + "/resolved.cfg", config::serialize(cfg));

    const auto& last = result.curve.back();
    std::cout << "trained to step " << state.step << "  td=" << last.l_td
              << " reg=" << last.l_reg << " bc=" << last.l_bc << " dc=" << last.l_dc << "\n";
    std::cout << "checkpoint: " << ckpt_path << "\n";
    return 0;
}

trainer::TrainState load_model(const config::AppConfig& cfg, const std::string& checkpoint) {
    auto loaded = trainer::load_checkpoint(checkpoint, config::digest(cfg));
    if (loaded.digest_mismatch)
        std::cerr << "warning: checkpoint config digest " << loaded.stored_digest
                  << " differs from current config " << config::digest(cfg) << "\n";
    return std::move(loaded.state);
}

const std::vector<corpus::Session>& pick_split(const corpus::SplitResult& split,
                                               const std::string& name) {
    if (name == "train") return split.train;
    if (name == "valid") return split.valid;
    if (name == "test") return split.test;
    throw ValidationError("unknown split '" + name + "'");
}

int cmd_eval(const CommonOpts& opts, const std::string& checkpoint, const std::string& data_path,
             const std::string& split_name) {
    config::AppConfig cfg = resolve_config(opts);
    if (opts.seed >= 0) cfg.eval_seed = opts.seed;
    fs::create_directories(cfg.out_dir);
    const trainer::TrainState state = load_model(cfg, checkpoint);
    const LoadedData data = load_and_split(cfg, data_path);
    const corpus::TransitionStore store =
        corpus::mine_transitions(pick_split(data.split, split_name), static_cast<int>(cfg.window),
                                 config::make_reward_scheme(cfg), state.nets.emb.n_items);
    if (store.empty()) throw ValidationError("split '" + split_name + "' yields no transitions");

    const auto report = evalharness::evaluate_imitation(state.nets, store.transitions,
                                                        to_int_vector(cfg.eval_ks));

    ordered_json j;
    j["kind"] = "ecoc-metrics";
    j["provenance"] = provenance(cfg, cfg.eval_seed);
    j["split"] = split_name;
    j["n_samples"] = report.n_samples;
    j["ks"] = report.ks;
    for (int k : report.ks) {
        const std::string ks = std::to_string(k);
        j["hr"][ks] = report.hr.at(k);
        j["mrr"][ks] = report.mrr.at(k);
        j["ndcg"][ks] = report.ndcg.at(k);
    }
    write_json(cfg.out_dir + "/metrics.json", j);

    std::ostringstream csv;
    csv << "k,hr,mrr,ndcg\n";
    for (int k : report.ks)
        csv << k << ',' << io::format_double(report.hr.at(k)) << ','
            << io::format_double(report.mrr.at(k)) << ',' << io::format_double(report.ndcg.at(k))
            << "\n";
    write_text(cfg.out_dir + "/metrics.csv", csv.str());
    for (int k : report.ks)
        std::cout << "hr@" << k << "=" << report.hr.at(k) << " mrr@" << k << "=" << report.mrr.at(k)
                  << " ndcg@" << k << "=" << report.ndcg.at(k) << "\n";
    return 0;
}

int cmd_ope(const CommonOpts& opts, const std::string& checkpoint, const std::string& data_path,
            const std::string& oracle_path) {
    config::AppConfig cfg = resolve_config(opts);
    if (opts.seed >= 0) cfg.eval_seed = opts.seed;
    fs::create_directories(cfg.out_dir);
    const trainer::TrainState state = load_model(cfg, checkpoint);
    const LoadedData data = load_and_split(cfg, data_path);
    const corpus::RewardScheme scheme = config::make_reward_scheme(cfg);

    std::unique_ptr<corpus::SyntheticWorld> world;
    std::unique_ptr<evalharness::SimEnv> env;
    if (!oracle_path.empty()) {
        world = std::make_unique<corpus::SyntheticWorld>(corpus::load_world(oracle_path));
        if (world->cfg.n_items != state.nets.emb.n_items)
            throw ValidationError("oracle catalog size does not match the checkpoint");
        env = std::make_unique<evalharness::OracleEnv>(*world, scheme);
    } else {
        const corpus::TransitionStore test_store =
            corpus::mine_transitions(data.split.test, static_cast<int>(cfg.window), scheme,
                                     state.nets.emb.n_items);
        if (test_store.empty()) throw ValidationError("test split yields no transitions");
        env = std::make_unique<evalharness::FittedEnv>(
            evalharness::fit_sim_env(test_store, scheme));
    }

    auto starts = evalharness::make_episode_starts(data.split.test, static_cast<int>(cfg.window),
                                                   world.get());
    if (cfg.ope_max_states > 0 && starts.size() > static_cast<std::size_t>(cfg.ope_max_states))
        starts.resize(cfg.ope_max_states);
    if (starts.empty()) throw ValidationError("no usable episode starts in the test split");

    Rng rng(static_cast<std::uint64_t>(cfg.eval_seed));
    const auto report =
        evalharness::ope_run(evalharness::greedy_recommender(state.nets), *env, starts,
                             static_cast<int>(cfg.ope_horizon), rng);

    ordered_json j;
    j["kind"] = "ecoc-ope";
    j["provenance"] = provenance(cfg, cfg.eval_seed);
    j["env"] = oracle_path.empty() ? "fitted" : "oracle";
    j["horizon"] = report.horizon;
    j["n_states"] = report.n_states;
    j["policy_total"] = report.policy_total;
    j["logged_total"] = report.logged_total;
    if (std::isfinite(report.ratio))
        j["ratio"] = report.ratio;
    else
        j["ratio"] = nullptr;
    ordered_json traces = ordered_json::array();
    for (const auto& tr : report.traces) {
        ordered_json jt;
        jt["user"] = tr.user;
        jt["policy_total"] = tr.policy_total;
        jt["logged_total"] = tr.logged_total;
        ordered_json pol = ordered_json::array();
        for (const auto& s : tr.policy)
            pol.push_back({{"item", s.item},
                           {"feedback", corpus::feedback_name(s.feedback)},
                           {"reward", s.reward}});
        jt["policy"] = std::move(pol);
        ordered_json log = ordered_json::array();
        for (const auto& s : tr.logged)
            log.push_back({{"item", s.item},
                           {"feedback", corpus::feedback_name(s.feedback)},
                           {"reward", s.reward}});
        jt["logged"] = std::move(log);
        traces.push_back(std::move(jt));
    }
    j["traces"] = std::move(traces);
    write_json(cfg.out_dir + "/ope.json", j);
    std::cout << "ope ratio=" << report.ratio << " policy_total=" << report.policy_total
              << " logged_total=" << report.logged_total << " over " << report.n_states
              << " states\n";
    return 0;
}

int cmd_hypotest(const CommonOpts& opts, const std::string& checkpoint,
                 const std::string& data_path, const std::string& embeddings_path,
                 std::int64_t n_override, std::int64_t repeats_override) {
    config::AppConfig cfg = resolve_config(opts);
    if (opts.seed >= 0) cfg.eval_seed = opts.seed;
    if (n_override > 0) cfg.hypo_n = n_override;
    if (repeats_override > 0) cfg.hypo_repeats = repeats_override;
    fs::create_directories(cfg.out_dir);
    trainer::TrainState state = load_model(cfg, checkpoint);
    if (!embeddings_path.empty()) {
        latent::EmbeddingMatrix exported = latent::load_embeddings(embeddings_path);
        if (exported.n_items != state.nets.emb.n_items || exported.dim != state.nets.dim())
            throw ValidationError("embedding export shape does not match the checkpoint");
        state.nets.emb = std::move(exported);
    }
    const LoadedData data = load_and_split(cfg, data_path);
    const corpus::TransitionStore store =
        corpus::mine_transitions(data.split.test, static_cast<int>(cfg.window),
                                 config::make_reward_scheme(cfg), state.nets.emb.n_items);
    if (store.size() < static_cast<std::size_t>(cfg.hypo_n))
        throw ValidationError("hypotest: n exceeds available test interactions (" +
                              std::to_string(store.size()) + ")");

    Rng rng(static_cast<std::uint64_t>(cfg.eval_seed));
    const auto report = hypotest::run_assumption_test(
        state.nets, store.transitions, static_cast<int>(cfg.hypo_n),
        static_cast<int>(cfg.hypo_repeats), rng);
    const auto profile = hypotest::cosine_rank_profile(state.nets, store.transitions,
                                                       to_int_vector(cfg.hypo_buckets));

    ordered_json j;
    j["kind"] = "ecoc-hypotest";
    j["provenance"] = provenance(cfg, cfg.eval_seed);
    j["n"] = report.n;
    j["repeats"] = report.repeats;
    j["mean"] = report.mean;
    j["std"] = report.sd;
    j["t"] = report.t;
    j["p"] = report.p;
    j["saturated"] = report.saturated;
    j["skipped"] = report.skipped;
    j["caveat"] = report.caveat;
    ordered_json reps = ordered_json::array();
    for (const auto& r : report.per_repeat)
        reps.push_back({{"mean", r.mean}, {"std", r.sd}, {"t", r.t}, {"p", r.p}, {"n", r.n}});
    j["per_repeat"] = std::move(reps);
    write_json(cfg.out_dir + "/hypotest.json", j);

    std::ostringstream csv;
    csv << "bucket,mean_cosine,count\n";
    for (const auto& b : profile) {
        csv << b.k << ',';
        if (b.count > 0) csv << io::format_double(b.mean_cosine);
        csv << ',' << b.count << "\n";
    }
    write_text(cfg.out_dir + "/cosine_profile.csv", csv.str());
    std::cout << "hypotest mean=" << report.mean << " t=" << report.t << " p=" << report.p
              << " (n=" << report.n << ", repeats=" << report.repeats << ")\n";
    return 0;
}

int cmd_inspect(const std::string& checkpoint) {
    const io::Container c = io::load_container(checkpoint);
    std::cout << "meta: " << c.meta.dump(2) << "\n";
    std::cout << "arrays:\n";
    for (const auto& [name, a] : c.arrays) {
        std::cout << "  " << name << "  " << (a.type == io::Array::Type::f64 ? "f64" : "u64")
                  << " [";
        for (std::size_t i = 0; i < a.shape.size(); ++i)
            std::cout << (i ? "x" : "") << a.shape[i];
        std::cout << "]\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ecoc: continuous-control offline RL toolkit for next-item recommendation"};
    app.require_subcommand(1);

    CommonOpts opts;
    bool force = false;
    std::string data_path, checkpoint, resume, split_name = "test", oracle_path,
                embeddings_path;
    std::int64_t n_override = 0, repeats_override = 0;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opts.config_path, "configuration file");
        sub->add_option("--out", opts.out_dir, "output directory (overrides out.dir)");
        sub->add_option("--seed", opts.seed, "seed override for this command");
    };

    CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic dataset with an oracle");
    add_common(gen);
    gen->add_flag("--force", force, "overwrite existing outputs");

    CLI::App* train = app.add_subcommand("train", "train on the temporal training split");
    add_common(train);
    train->add_option("--data", data_path, "session file (defaults to data.path)");
    train->add_option("--resume", resume, "checkpoint to resume from");

    CLI::App* eval = app.add_subcommand("eval", "imitation metrics on a split");
    add_common(eval);
    eval->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
    eval->add_option("--data", data_path, "session file (defaults to data.path)");
    eval->add_option("--split", split_name, "train|valid|test (default test)");

    CLI::App* ope = app.add_subcommand("ope", "off-policy evaluation rollouts");
    add_common(ope);
    ope->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
    ope->add_option("--data", data_path, "session file (defaults to data.path)");
    ope->add_option("--oracle", oracle_path, "oracle descriptor (fitted env when omitted)");

    CLI::App* hypo = app.add_subcommand("hypotest", "representation-normalization test");
    add_common(hypo);
    hypo->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
    hypo->add_option("--data", data_path, "session file (defaults to data.path)");
    hypo->add_option("--n", n_override, "interactions per repeat");
    hypo->add_option("--repeats", repeats_override, "number of repeats");
    hypo->add_option("--embeddings", embeddings_path,
                     "embedding export overriding the checkpoint's matrix");

    CLI::App* inspect = app.add_subcommand("inspect", "print checkpoint/container metadata");
    inspect->add_option("--checkpoint", checkpoint, "container file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(opts, force);
        if (train->parsed()) return cmd_train(opts, data_path, resume);
        if (eval->parsed()) return cmd_eval(opts, checkpoint, data_path, split_name);
        if (ope->parsed()) return cmd_ope(opts, checkpoint, data_path, oracle_path);
        if (hypo->parsed()) return cmd_hypotest(opts, checkpoint, data_path, embeddings_path,
                                                n_override, repeats_override);
        if (inspect->parsed()) return cmd_inspect(checkpoint);
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
