#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ecoc/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

using namespace ecoc;
using namespace ecoc::trainer;
using corpus::Transition;
using critic::NetGrads;
using critic::Nets;

namespace {

corpus::TransitionStore tiny_store(std::uint64_t seed = 3, int n_items = 12) {
    corpus::GenConfig gcfg;
    gcfg.n_items = n_items;
    gcfg.n_sessions = 30;
    gcfg.min_len = 3;
    gcfg.max_len = 6;
    gcfg.seed = seed;
    const auto data = corpus::gen_synthetic(gcfg);
    return corpus::mine_transitions(data.sessions, 4,
                                    {corpus::RewardSchemeKind::graded_feedback, {}}, n_items);
}

TrainConfig tiny_config() {
    TrainConfig cfg;
    cfg.steps = 4;
    cfg.batch_size = 8;
    cfg.loss.n1 = 4;
    cfg.loss.n2 = 4;
    cfg.loss.xi_td.n = 3;
    cfg.loss.xi_reg.n = 3;
    cfg.loss.alpha = 1.0;
    cfg.log_every = 1;
    cfg.seed = 5;
    return cfg;
}

bool nets_equal(const Nets& a, const Nets& b) {
    return a.emb.w.a == b.emb.w.a && a.enc.w1.a == b.enc.w1.a && a.enc.b1 == b.enc.b1 &&
           a.enc.lambda == b.enc.lambda && a.proj.w2.a == b.proj.w2.a && a.proj.b2 == b.proj.b2 &&
           a.h1.h.a == b.h1.h.a && a.h1.b == b.h1.b && a.h2.h.a == b.h2.h.a && a.h2.b == b.h2.b;
}

std::string file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("train_step with zero learning rates leaves parameters, blends targets") {
    const auto store = tiny_store();
    TrainConfig cfg = tiny_config();
    cfg.lr = 0.0;
    cfg.tau = 0.5;
    TrainState st = init_state(store.catalog_size, 4, 6, cfg);
    // make targets distinct so the blend is observable
    for (double& v : st.targets.h1.b) v += 1.0;
    const Nets before = st.nets;
    const Vec tgt_before = st.targets.h1.b;

    const auto batch = corpus::sample_batch(store, cfg.batch_size, st.rng);
    train_step(st, batch, cfg);
    CHECK(nets_equal(st.nets, before));
    for (std::size_t i = 0; i < tgt_before.size(); ++i)
        CHECK(st.targets.h1.b[i] ==
              doctest::Approx(0.5 * tgt_before[i] + 0.5 * st.nets.h1.b[i]));
}

TEST_CASE("train_step is deterministic given state and batch") {
    const auto store = tiny_store();
    const TrainConfig cfg = tiny_config();
    TrainState a = init_state(store.catalog_size, 4, 6, cfg);
    TrainState b = init_state(store.catalog_size, 4, 6, cfg);
    const auto batch_a = corpus::sample_batch(store, cfg.batch_size, a.rng);
    const auto batch_b = corpus::sample_batch(store, cfg.batch_size, b.rng);
    const auto sa = train_step(a, batch_a, cfg);
    const auto sb = train_step(b, batch_b, cfg);
    CHECK(nets_equal(a.nets, b.nets));
    CHECK(sa.l_td == sb.l_td);
    CHECK(sa.l_bc == sb.l_bc);
}

TEST_CASE("one step matches an independent AdamW reimplementation") {
    const auto store = tiny_store();
    TrainConfig cfg = tiny_config();
    cfg.weight_decay = 1e-3;  // large enough to be visible
    TrainState st = init_state(store.catalog_size, 4, 6, cfg);
    const auto batch = corpus::sample_batch(store, cfg.batch_size, st.rng);

    // reference trajectory computed from the published update rule
    Nets ref = st.nets;
    critic::TargetSet ref_targets = st.targets;
    Rng ref_rng = st.rng;
    auto adam_ref = [&](std::span<double> p, std::span<const double> g, Vec& m, Vec& v,
                        double lr, std::int64_t t) {
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = cfg.adam_beta1 * m[j] + (1 - cfg.adam_beta1) * g[j];
            v[j] = cfg.adam_beta2 * v[j] + (1 - cfg.adam_beta2) * g[j] * g[j];
            const double mhat = m[j] / (1 - std::pow(cfg.adam_beta1, t));
            const double vhat = v[j] / (1 - std::pow(cfg.adam_beta2, t));
            p[j] -= lr * (mhat / (std::sqrt(vhat) + cfg.adam_eps)) + lr * cfg.weight_decay * p[j];
        }
    };

    NetGrads g = NetGrads::zeros_like(ref);
    objective::critic_loss(batch, ref, ref, ref_targets, cfg.loss, ref_rng, &g);
    {
        std::vector<std::pair<std::span<double>, std::span<const double>>> groups = {
            {ref.h1.h.a, g.h1_h.a},   {ref.h1.b, g.h1_b},   {ref.h2.h.a, g.h2_h.a},
            {ref.h2.b, g.h2_b},       {ref.enc.w1.a, g.w1.a}, {ref.enc.b1, g.b1},
            {{&ref.enc.lambda, 1}, {&g.lambda, 1}},          {ref.proj.w2.a, g.w2.a},
            {ref.proj.b2, g.b2},      {ref.emb.w.a, g.emb.a}};
        std::vector<Vec> m, v;
        for (auto& [p, gg] : groups) {
            m.emplace_back(p.size(), 0.0);
            v.emplace_back(p.size(), 0.0);
        }
        for (std::size_t i = 0; i < groups.size(); ++i)
            adam_ref(groups[i].first, groups[i].second, m[i], v[i], cfg.resolved_critic_lr(), 1);
        ref.enc.lambda = std::clamp(ref.enc.lambda, policy::kLambdaMin + 1e-6, policy::kLambdaMax);
    }
    g.zero();
    objective::actor_loss(batch, ref, ref, cfg.loss, ref_rng, &g);
    {
        std::vector<std::pair<std::span<double>, std::span<const double>>> groups = {
            {ref.enc.w1.a, g.w1.a}, {ref.enc.b1, g.b1}, {{&ref.enc.lambda, 1}, {&g.lambda, 1}},
            {ref.proj.w2.a, g.w2.a}, {ref.proj.b2, g.b2}, {ref.emb.w.a, g.emb.a}};
        std::vector<Vec> m, v;
        for (auto& [p, gg] : groups) {
            m.emplace_back(p.size(), 0.0);
            v.emplace_back(p.size(), 0.0);
        }
        for (std::size_t i = 0; i < groups.size(); ++i)
            adam_ref(groups[i].first, groups[i].second, m[i], v[i], cfg.resolved_actor_lr(), 1);
        ref.enc.lambda = std::clamp(ref.enc.lambda, policy::kLambdaMin + 1e-6, policy::kLambdaMax);
    }
    critic::soft_update(ref_targets, ref, cfg.tau);

    train_step(st, batch, cfg);
    auto close = [](const Vec& a, const Vec& b) {
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i)
            CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
    };
    close(st.nets.emb.w.a, ref.emb.w.a);
    close(st.nets.enc.w1.a, ref.enc.w1.a);
    close(st.nets.h1.h.a, ref.h1.h.a);
    close(st.nets.h2.b, ref.h2.b);
    close(st.targets.h1.b, ref_targets.h1.b);
    CHECK(st.nets.enc.lambda == doctest::Approx(ref.enc.lambda).epsilon(1e-12));
}

TEST_CASE("critic-then-actor ordering is observable through selective freezing") {
    const auto store = tiny_store();
    {
        TrainConfig cfg = tiny_config();
        cfg.actor_lr = 0.0;  // critic side still updates heads and shared mu
        TrainState st = init_state(store.catalog_size, 4, 6, cfg);
        const Nets before = st.nets;
        const auto batch = corpus::sample_batch(store, cfg.batch_size, st.rng);
        train_step(st, batch, cfg);
        CHECK(st.nets.h1.h.a != before.h1.h.a);
        CHECK(st.nets.enc.w1.a != before.enc.w1.a);
    }
    {
        TrainConfig cfg = tiny_config();
        cfg.critic_lr = 0.0;  // actor side still updates encoder/projection/embeddings
        TrainState st = init_state(store.catalog_size, 4, 6, cfg);
        const Nets before = st.nets;
        const auto batch = corpus::sample_batch(store, cfg.batch_size, st.rng);
        train_step(st, batch, cfg);
        CHECK(st.nets.h1.h.a == before.h1.h.a);
        CHECK(st.nets.h2.h.a == before.h2.h.a);
        CHECK(st.nets.enc.w1.a != before.enc.w1.a);
    }
}

TEST_CASE("fit with steps=1 equals a single train_step") {
    const auto store = tiny_store();
    TrainConfig cfg = tiny_config();
    cfg.steps = 1;
    TrainState a = init_state(store.catalog_size, 4, 6, cfg);
    TrainState b = init_state(store.catalog_size, 4, 6, cfg);
    const auto result = fit(a, store, cfg);
    const auto batch = corpus::sample_batch(store, cfg.batch_size, b.rng);
    train_step(b, batch, cfg);
    CHECK(nets_equal(a.nets, b.nets));
    REQUIRE(result.curve.size() == 1);
}

TEST_CASE("bc loss starts near ln 2 when ranking scores start near zero") {
    const auto store = tiny_store(8, 30);
    TrainConfig cfg = tiny_config();
    cfg.steps = 1;
    cfg.log_every = 1;
    TrainState st = init_state(store.catalog_size, 6, 8, cfg);
    const auto result = fit(st, store, cfg);
    CHECK(std::fabs(result.curve.front().l_bc - std::log(2.0)) < 0.05);
}

TEST_CASE("two fits from the same seed produce byte-identical checkpoints") {
    const auto store = tiny_store();
    TrainConfig cfg = tiny_config();
    cfg.steps = 6;
    const std::string pa = "trainer_test_a.bin", pb = "trainer_test_b.bin";
    for (const auto& [path, _] : {std::pair{pa, 0}, std::pair{pb, 0}}) {
        TrainState st = init_state(store.catalog_size, 4, 6, cfg);
        fit(st, store, cfg);
        save_checkpoint(st, path, "digest-x");
    }
    CHECK(file_bytes(pa) == file_bytes(pb));
    std::remove(pa.c_str());
    std::remove(pb.c_str());
}

TEST_CASE("checkpoint round trip resumes identically") {
    const auto store = tiny_store();
    TrainConfig cfg = tiny_config();
    cfg.steps = 8;
    cfg.log_every = 1;

    TrainState full = init_state(store.catalog_size, 4, 6, cfg);
    const auto full_curve = fit(full, store, cfg);
    const std::string pfull = "trainer_full.bin";
    save_checkpoint(full, pfull, "d");

    TrainConfig half = cfg;
    half.steps = 4;
    TrainState part = init_state(store.catalog_size, 4, 6, cfg);
    fit(part, store, half);
    const std::string pmid = "trainer_mid.bin";
    save_checkpoint(part, pmid, "d");

    auto resumed = load_checkpoint(pmid, "d");
    CHECK_FALSE(resumed.digest_mismatch);
    const auto tail_curve = fit(resumed.state, store, cfg);
    const std::string presumed = "trainer_resumed.bin";
    save_checkpoint(resumed.state, presumed, "d");

    CHECK(file_bytes(pfull) == file_bytes(presumed));
    // the resumed curve matches the uninterrupted run over steps 5..8
    REQUIRE(tail_curve.curve.size() == 4);
    for (std::size_t i = 0; i < tail_curve.curve.size(); ++i) {
        const auto& want = full_curve.curve[4 + i];
        CHECK(tail_curve.curve[i].step == want.step);
        CHECK(tail_curve.curve[i].l_td == want.l_td);
        CHECK(tail_curve.curve[i].l_bc == want.l_bc);
    }
    std::remove(pfull.c_str());
    std::remove(pmid.c_str());
    std::remove(presumed.c_str());
}

TEST_CASE("truncated checkpoints fail to load; digest mismatch only warns") {
    const auto store = tiny_store();
    const TrainConfig cfg = tiny_config();
    TrainState st = init_state(store.catalog_size, 4, 6, cfg);
    const std::string path = "trainer_trunc.bin";
    save_checkpoint(st, path, "expected");

    const std::string bytes = file_bytes(path);
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() * 2 / 3));
    }
    CHECK_THROWS_AS(load_checkpoint(path, "expected"), ValidationError);

    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    const auto ok = load_checkpoint(path, "expected");
    CHECK_FALSE(ok.digest_mismatch);
    const auto warned = load_checkpoint(path, "different");
    CHECK(warned.digest_mismatch);
    CHECK(warned.stored_digest == "expected");
    std::remove(path.c_str());
}

TEST_CASE("targets stay convex combinations of the online trajectory") {
    const auto store = tiny_store();
    TrainConfig cfg = tiny_config();
    cfg.steps = 20;
    cfg.tau = 0.9;
    TrainState st = init_state(store.catalog_size, 4, 6, cfg);
    Vec lo = st.nets.h1.b, hi = st.nets.h1.b;
    Vec lo_emb = st.nets.emb.w.a, hi_emb = st.nets.emb.w.a;
    while (st.step < cfg.steps) {
        const auto batch = corpus::sample_batch(store, cfg.batch_size, st.rng);
        train_step(st, batch, cfg);
        for (std::size_t i = 0; i < lo.size(); ++i) {
            lo[i] = std::min(lo[i], st.nets.h1.b[i]);
            hi[i] = std::max(hi[i], st.nets.h1.b[i]);
            CHECK(st.targets.h1.b[i] >= lo[i] - 1e-12);
            CHECK(st.targets.h1.b[i] <= hi[i] + 1e-12);
        }
        for (std::size_t i = 0; i < lo_emb.size(); i += 7) {
            lo_emb[i] = std::min(lo_emb[i], st.nets.emb.w.a[i]);
            hi_emb[i] = std::max(hi_emb[i], st.nets.emb.w.a[i]);
        }
    }
}

TEST_CASE("non-finite losses abort with a diagnostic") {
    const auto store = tiny_store();
    TrainConfig cfg = tiny_config();
    TrainState st = init_state(store.catalog_size, 4, 6, cfg);
    for (double& v : st.nets.h1.h.a) v = 1e300;  // force an overflow in Q
    const auto batch = corpus::sample_batch(store, cfg.batch_size, st.rng);
    CHECK_THROWS_AS(train_step(st, batch, cfg), NumericalError);
}

TEST_CASE("grad_check: quadratic-in-head losses are exact to roundoff") {
    const auto store = tiny_store();
    TrainState st = init_state(store.catalog_size, 4, 6, tiny_config());
    Rng rng(1);
    const auto batch = corpus::sample_batch(store, 4, rng);
    objective::LossConfig cfg = tiny_config().loss;
    cfg.gamma = 0.5;
    const auto report = grad_check(LossKind::td, st.nets, st.targets, batch, cfg, 7);
    for (const auto& group : report.groups) {
        if (group.name.rfind("h1", 0) == 0 || group.name.rfind("h2", 0) == 0) {
            // td is quadratic in the head parameters, so central differences
            // are exact and only roundoff remains
            CHECK(group.max_abs_err < 1e-9);
        }
        CHECK(group.max_rel_err <= 1e-4);
    }
}

TEST_CASE("grad_check flags a corrupted gradient (negative control)") {
    const auto store = tiny_store();
    TrainState st = init_state(store.catalog_size, 4, 6, tiny_config());
    Rng rng(2);
    const auto batch = corpus::sample_batch(store, 4, rng);
    const objective::LossConfig cfg = tiny_config().loss;

    NetGrads analytic = critic::NetGrads::zeros_like(st.nets);
    loss_with_grads(LossKind::td, st.nets, st.targets, batch, cfg, 7, analytic);

    Nets probe = st.nets;
    const double keep = probe.enc.b1[0];
    const double h = 1e-5;
    probe.enc.b1[0] = keep + h;
    const double up = loss_value(LossKind::td, probe, st.nets, st.targets, batch, cfg, 7);
    probe.enc.b1[0] = keep - h;
    const double down = loss_value(LossKind::td, probe, st.nets, st.targets, batch, cfg, 7);
    const double fd = (up - down) / (2 * h);
    CHECK(rel_err(analytic.b1[0], fd) <= 1e-4);
    const double corrupted = analytic.b1[0] + 0.01;
    CHECK(rel_err(corrupted, fd) > 1e-4);
}
