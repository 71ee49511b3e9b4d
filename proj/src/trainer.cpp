#include "ecoc/trainer.hpp"

#include "ecoc/io.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

namespace ecoc::trainer {

using critic::NetGrads;
using critic::Nets;
using critic::TargetSet;

namespace {

struct GroupView {
    const char* name;
    std::span<double> param;
};

struct ConstGroupView {
    const char* name;
    std::span<const double> grad;
};

std::vector<GroupView> critic_params(Nets& n) {
    return {{"h1_h", n.h1.h.a}, {"h1_b", n.h1.b},   {"h2_h", n.h2.h.a},
            {"h2_b", n.h2.b},   {"enc_w1", n.enc.w1.a}, {"enc_b1", n.enc.b1},
            {"lambda", {&n.enc.lambda, 1}}, {"proj_w2", n.proj.w2.a},
            {"proj_b2", n.proj.b2}, {"emb", n.emb.w.a}};
}

std::vector<ConstGroupView> critic_grads(const NetGrads& g) {
    return {{"h1_h", g.h1_h.a}, {"h1_b", g.h1_b},   {"h2_h", g.h2_h.a},
            {"h2_b", g.h2_b},   {"enc_w1", g.w1.a}, {"enc_b1", g.b1},
            {"lambda", {&g.lambda, 1}}, {"proj_w2", g.w2.a},
            {"proj_b2", g.b2},  {"emb", g.emb.a}};
}

std::vector<GroupView> actor_params(Nets& n) {
    return {{"enc_w1", n.enc.w1.a}, {"enc_b1", n.enc.b1}, {"lambda", {&n.enc.lambda, 1}},
            {"proj_w2", n.proj.w2.a}, {"proj_b2", n.proj.b2}, {"emb", n.emb.w.a}};
}

std::vector<ConstGroupView> actor_grads(const NetGrads& g) {
    return {{"enc_w1", g.w1.a}, {"enc_b1", g.b1},   {"lambda", {&g.lambda, 1}},
            {"proj_w2", g.w2.a}, {"proj_b2", g.b2}, {"emb", g.emb.a}};
}

void init_side(AdamSide& side, const std::vector<GroupView>& groups) {
    side.m.clear();
    side.v.clear();
    side.t = 0;
    for (const auto& gv : groups) {
        side.m.emplace_back(gv.param.size(), 0.0);
        side.v.emplace_back(gv.param.size(), 0.0);
    }
}

// AdamW: bias-corrected adaptive moments with decoupled weight decay.
void adam_apply(AdamSide& side, const std::vector<GroupView>& params,
                const std::vector<ConstGroupView>& grads, double lr, const TrainConfig& cfg) {
    ++side.t;
    const double corr1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(side.t));
    const double corr2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(side.t));
    for (std::size_t gi = 0; gi < params.size(); ++gi) {
        auto p = params[gi].param;
        auto g = grads[gi].grad;
        Vec& m = side.m[gi];
        Vec& v = side.v[gi];
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = cfg.adam_beta1 * m[j] + (1.0 - cfg.adam_beta1) * g[j];
            v[j] = cfg.adam_beta2 * v[j] + (1.0 - cfg.adam_beta2) * g[j] * g[j];
            const double mhat = m[j] / corr1;
            const double vhat = v[j] / corr2;
            p[j] -= lr * (mhat / (std::sqrt(vhat) + cfg.adam_eps)) + lr * cfg.weight_decay * p[j];
        }
    }
}

void check_finite(double value, const char* which, const Batch& batch, std::int64_t step) {
    if (std::isfinite(value)) return;
    std::ostringstream os;
    os << "non-finite " << which << " at step " << step << "; batch targets:";
    for (std::size_t i = 0; i < batch.size() && i < 8; ++i)
        os << ' ' << batch[i]->target << "(r=" << batch[i]->reward << ")";
    throw NumericalError(os.str());
}

}  // namespace

TrainState init_state(int n_items, int dim, int hidden_dim, const TrainConfig& cfg) {
    TrainState st;
    st.rng = Rng(cfg.seed);
    st.nets = Nets::init(n_items, dim, hidden_dim, st.rng);
    st.targets = TargetSet::from(st.nets, cfg.target_embeddings);
    init_side(st.opt_critic, critic_params(st.nets));
    init_side(st.opt_actor, actor_params(st.nets));
    st.step = 0;
    return st;
}

StepStats train_step(TrainState& st, const Batch& batch, const TrainConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    StepStats stats;
    objective::LossParts parts;
    NetGrads grads = NetGrads::zeros_like(st.nets);

    // (1) critic step: h heads, shared mu parameters, embeddings
    objective::critic_loss(batch, st.nets, st.nets, st.targets, cfg.loss, st.rng, &grads, &parts);
    check_finite(parts.td + parts.reg, "critic loss", batch, st.step);
    adam_apply(st.opt_critic, critic_params(st.nets), critic_grads(grads),
               cfg.resolved_critic_lr(), cfg);
    st.nets.enc.lambda =
        std::clamp(st.nets.enc.lambda, policy::kLambdaMin + 1e-6, policy::kLambdaMax);

    // (2) actor step: encoder, projection, embeddings
    grads.zero();
    objective::actor_loss(batch, st.nets, st.nets, cfg.loss, st.rng, &grads, &parts);
    check_finite(parts.dc + parts.bc, "actor loss", batch, st.step);
    adam_apply(st.opt_actor, actor_params(st.nets), actor_grads(grads), cfg.resolved_actor_lr(),
               cfg);
    st.nets.enc.lambda =
        std::clamp(st.nets.enc.lambda, policy::kLambdaMin + 1e-6, policy::kLambdaMax);

    // (3) targets drift toward the online parameters
    critic::soft_update(st.targets, st.nets, cfg.tau);

    ++st.step;
    stats.l_td = parts.td;
    stats.l_reg = parts.reg;
    stats.l_bc = parts.bc;
    stats.l_dc = parts.dc;
    stats.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return stats;
}

FitResult fit(TrainState& st, const TransitionStore& store, const TrainConfig& cfg,
              const std::function<void(const TrainState&)>& on_checkpoint) {
    if (store.empty()) throw ValidationError("fit: transition store is empty");
    if (cfg.steps < 1) throw ValidationError("fit: steps must be >= 1");
    if (st.step >= cfg.steps)
        throw ValidationError("fit: state is already at step " + std::to_string(st.step) +
                              ", nothing to run up to " + std::to_string(cfg.steps));
    FitResult out;
    CurveRow acc;
    std::int64_t in_acc = 0;
    while (st.step < cfg.steps) {
        const Batch batch = corpus::sample_batch(store, cfg.batch_size, st.rng);
        const StepStats s = train_step(st, batch, cfg);
        acc.l_td += s.l_td;
        acc.l_reg += s.l_reg;
        acc.l_bc += s.l_bc;
        acc.l_dc += s.l_dc;
        acc.wall_ms += s.wall_ms;
        ++in_acc;
        const bool last = st.step >= cfg.steps;
        if ((cfg.log_every > 0 && st.step % cfg.log_every == 0) || last) {
            CurveRow row;
            row.step = st.step;
            row.l_td = acc.l_td / in_acc;
            row.l_reg = acc.l_reg / in_acc;
            row.l_bc = acc.l_bc / in_acc;
            row.l_dc = acc.l_dc / in_acc;
            row.wall_ms = acc.wall_ms;
            out.curve.push_back(row);
            acc = CurveRow{};
            in_acc = 0;
        }
        if (on_checkpoint && cfg.checkpoint_every > 0 && st.step % cfg.checkpoint_every == 0 &&
            !last)
            on_checkpoint(st);
    }
    return out;
}

double loss_value(LossKind kind, const Nets& live, const Nets& frozen, const TargetSet& targets,
                  const Batch& batch, const objective::LossConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    switch (kind) {
        case LossKind::td:
            return objective::td_loss(batch, live, frozen, targets, cfg, rng, nullptr);
        case LossKind::reg:
            return objective::reg_loss(batch, live, frozen, cfg, rng, nullptr);
        case LossKind::bc:
            return objective::bc_loss(batch, live, cfg, rng, nullptr);
        case LossKind::dc:
            return objective::dc_loss(batch, live, frozen, nullptr);
        case LossKind::critic_combined:
            return objective::critic_loss(batch, live, frozen, targets, cfg, rng, nullptr);
        case LossKind::actor_combined:
            return objective::actor_loss(batch, live, frozen, cfg, rng, nullptr);
    }
    throw ValidationError("unknown loss kind");
}

double loss_with_grads(LossKind kind, const Nets& nets, const TargetSet& targets,
                       const Batch& batch, const objective::LossConfig& cfg, std::uint64_t seed,
                       NetGrads& grads) {
    Rng rng(seed);
    switch (kind) {
        case LossKind::td:
            return objective::td_loss(batch, nets, nets, targets, cfg, rng, &grads);
        case LossKind::reg:
            return objective::reg_loss(batch, nets, nets, cfg, rng, &grads);
        case LossKind::bc:
            return objective::bc_loss(batch, nets, cfg, rng, &grads);
        case LossKind::dc:
            return objective::dc_loss(batch, nets, nets, &grads);
        case LossKind::critic_combined:
            return objective::critic_loss(batch, nets, nets, targets, cfg, rng, &grads);
        case LossKind::actor_combined:
            return objective::actor_loss(batch, nets, nets, cfg, rng, &grads);
    }
    throw ValidationError("unknown loss kind");
}

double rel_err(double a, double b) {
    return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-6});
}

double GradCheckReport::worst_rel() const {
    double w = 0.0;
    for (const auto& g : groups) w = std::max(w, g.max_rel_err);
    return w;
}

GradCheckReport grad_check(LossKind kind, const Nets& nets, const TargetSet& targets,
                           const Batch& batch, const objective::LossConfig& cfg,
                           std::uint64_t seed, double fd_step) {
    NetGrads analytic = NetGrads::zeros_like(nets);
    loss_with_grads(kind, nets, targets, batch, cfg, seed, analytic);

    Nets probe = nets;  // live copy to perturb; `nets` stays the frozen base
    const auto params = critic_params(probe);
    const auto grads = critic_grads(analytic);

    GradCheckReport report;
    for (std::size_t gi = 0; gi < params.size(); ++gi) {
        GroupCheck gc;
        gc.name = params[gi].name;
        auto p = params[gi].param;
        auto a = grads[gi].grad;
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double keep = p[j];
            p[j] = keep + fd_step;
            const double up = loss_value(kind, probe, nets, targets, batch, cfg, seed);
            p[j] = keep - fd_step;
            const double down = loss_value(kind, probe, nets, targets, batch, cfg, seed);
            p[j] = keep;
            const double fd = (up - down) / (2.0 * fd_step);
            gc.max_rel_err = std::max(gc.max_rel_err, rel_err(a[j], fd));
            gc.max_abs_err = std::max(gc.max_abs_err, std::fabs(a[j] - fd));
        }
        report.groups.push_back(std::move(gc));
    }
    return report;
}

// ---------------------------------------------------------------------------
// Checkpointing
// ---------------------------------------------------------------------------

namespace {

void put(io::Container& c, const std::string& name, const Vec& data,
         std::vector<std::size_t> shape) {
    auto& a = c.add_f64(name, std::move(shape));
    a.f = data;
}

void put_scalar(io::Container& c, const std::string& name, double v) {
    auto& a = c.add_f64(name, {1});
    a.f[0] = v;
}

Vec take(const io::Container& c, const std::string& name, std::size_t expect) {
    const auto& a = c.get(name);
    if (a.f.size() != expect)
        throw ValidationError("checkpoint array '" + name + "' has unexpected size");
    return a.f;
}

void put_side(io::Container& c, const std::string& prefix, const AdamSide& side) {
    for (std::size_t i = 0; i < side.m.size(); ++i) {
        put(c, prefix + "_m" + std::to_string(i), side.m[i], {side.m[i].size()});
        put(c, prefix + "_v" + std::to_string(i), side.v[i], {side.v[i].size()});
    }
}

void take_side(const io::Container& c, const std::string& prefix, AdamSide& side) {
    for (std::size_t i = 0; i < side.m.size(); ++i) {
        side.m[i] = take(c, prefix + "_m" + std::to_string(i), side.m[i].size());
        side.v[i] = take(c, prefix + "_v" + std::to_string(i), side.v[i].size());
    }
}

}  // namespace

void save_checkpoint(const TrainState& st, const std::string& path,
                     const std::string& config_digest) {
    io::Container c;
    c.meta["kind"] = "ecoc-checkpoint";
    c.meta["format_version"] = 1;
    c.meta["step"] = st.step;
    c.meta["config_digest"] = config_digest;
    c.meta["n_items"] = st.nets.emb.n_items;
    c.meta["dim"] = st.nets.dim();
    c.meta["hidden"] = st.nets.hidden();
    c.meta["target_embeddings"] = st.targets.emb.has_value();

    const Nets& n = st.nets;
    const std::size_t I = n.emb.n_items, d = n.dim(), m = n.hidden();
    put(c, "emb", n.emb.w.a, {I, d});
    put(c, "enc_w1", n.enc.w1.a, {m, 2 * d});
    put(c, "enc_b1", n.enc.b1, {m});
    put_scalar(c, "enc_lambda", n.enc.lambda);
    put(c, "proj_w2", n.proj.w2.a, {d, m});
    put(c, "proj_b2", n.proj.b2, {d});
    put(c, "h1_h", n.h1.h.a, {d, d});
    put(c, "h1_b", n.h1.b, {d});
    put(c, "h2_h", n.h2.h.a, {d, d});
    put(c, "h2_b", n.h2.b, {d});

    const TargetSet& t = st.targets;
    put(c, "tgt_enc_w1", t.enc.w1.a, {m, 2 * d});
    put(c, "tgt_enc_b1", t.enc.b1, {m});
    put_scalar(c, "tgt_enc_lambda", t.enc.lambda);
    put(c, "tgt_proj_w2", t.proj.w2.a, {d, m});
    put(c, "tgt_proj_b2", t.proj.b2, {d});
    put(c, "tgt_h1_h", t.h1.h.a, {d, d});
    put(c, "tgt_h1_b", t.h1.b, {d});
    put(c, "tgt_h2_h", t.h2.h.a, {d, d});
    put(c, "tgt_h2_b", t.h2.b, {d});
    if (t.emb) put(c, "tgt_emb", t.emb->w.a, {I, d});

    put_side(c, "optc", st.opt_critic);
    put_side(c, "opta", st.opt_actor);

    auto& rng_arr = c.add_u64("rng_state", {4});
    const auto words = st.rng.serialize();
    std::copy(words.begin(), words.end(), rng_arr.u.begin());
    auto& counters = c.add_u64("counters", {3});
    counters.u[0] = static_cast<std::uint64_t>(st.step);
    counters.u[1] = static_cast<std::uint64_t>(st.opt_critic.t);
    counters.u[2] = static_cast<std::uint64_t>(st.opt_actor.t);

    io::save_container(c, path);
}

LoadedCheckpoint load_checkpoint(const std::string& path, const std::string& expected_digest) {
    const io::Container c = io::load_container(path);
    if (c.meta.value("kind", std::string{}) != "ecoc-checkpoint")
        throw ValidationError("file is not a checkpoint: " + path);
    if (c.meta.value("format_version", -1) != 1)
        throw ValidationError("unsupported checkpoint version in " + path);

    LoadedCheckpoint out;
    out.stored_digest = c.meta.value("config_digest", std::string{});
    out.digest_mismatch = !expected_digest.empty() && out.stored_digest != expected_digest;

    const int I = c.meta.at("n_items").get<int>();
    const int d = c.meta.at("dim").get<int>();
    const int m = c.meta.at("hidden").get<int>();
    TrainState& st = out.state;
    TrainConfig shape_cfg;
    shape_cfg.target_embeddings = c.meta.value("target_embeddings", false);
    st = init_state(I, d, m, shape_cfg);

    Nets& n = st.nets;
    n.emb.w.a = take(c, "emb", static_cast<std::size_t>(I) * d);
    n.enc.w1.a = take(c, "enc_w1", static_cast<std::size_t>(m) * 2 * d);
    n.enc.b1 = take(c, "enc_b1", m);
    n.enc.lambda = take(c, "enc_lambda", 1)[0];
    n.proj.w2.a = take(c, "proj_w2", static_cast<std::size_t>(d) * m);
    n.proj.b2 = take(c, "proj_b2", d);
    n.h1.h.a = take(c, "h1_h", static_cast<std::size_t>(d) * d);
    n.h1.b = take(c, "h1_b", d);
    n.h2.h.a = take(c, "h2_h", static_cast<std::size_t>(d) * d);
    n.h2.b = take(c, "h2_b", d);

    TargetSet& t = st.targets;
    t.enc.w1.a = take(c, "tgt_enc_w1", static_cast<std::size_t>(m) * 2 * d);
    t.enc.b1 = take(c, "tgt_enc_b1", m);
    t.enc.lambda = take(c, "tgt_enc_lambda", 1)[0];
    t.proj.w2.a = take(c, "tgt_proj_w2", static_cast<std::size_t>(d) * m);
    t.proj.b2 = take(c, "tgt_proj_b2", d);
    t.h1.h.a = take(c, "tgt_h1_h", static_cast<std::size_t>(d) * d);
    t.h1.b = take(c, "tgt_h1_b", d);
    t.h2.h.a = take(c, "tgt_h2_h", static_cast<std::size_t>(d) * d);
    t.h2.b = take(c, "tgt_h2_b", d);
    if (t.emb) t.emb->w.a = take(c, "tgt_emb", static_cast<std::size_t>(I) * d);

    take_side(c, "optc", st.opt_critic);
    take_side(c, "opta", st.opt_actor);

    const auto& rng_arr = c.get("rng_state");
    if (rng_arr.u.size() != 4) throw ValidationError("bad rng state in checkpoint");
    st.rng = Rng::deserialize(
        std::array<std::uint64_t, 4>{rng_arr.u[0], rng_arr.u[1], rng_arr.u[2], rng_arr.u[3]});
    const auto& counters = c.get("counters");
    if (counters.u.size() != 3) throw ValidationError("bad counters in checkpoint");
    st.step = static_cast<std::int64_t>(counters.u[0]);
    st.opt_critic.t = static_cast<std::int64_t>(counters.u[1]);
    st.opt_actor.t = static_cast<std::int64_t>(counters.u[2]);
    return out;
}

}  // namespace ecoc::trainer
