#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ecoc/objective.hpp"
#include "ecoc/trainer.hpp"

#include <cmath>
#include <cstring>

using namespace ecoc;
using namespace ecoc::objective;
using corpus::StateWindow;
using corpus::Transition;
using critic::NetGrads;
using critic::Nets;
using critic::TargetSet;

namespace {

StateWindow window_of(std::vector<corpus::ItemId> items) {
    StateWindow w;
    w.items = std::move(items);
    w.feedback.assign(w.items.size(), corpus::kClick);
    for (std::size_t i = 0; i < w.items.size(); ++i)
        if (w.items[i] == 0) w.feedback[i] = corpus::kNoFeedback;
    return w;
}

Transition make_transition(std::vector<corpus::ItemId> state_items, corpus::ItemId target,
                           double reward) {
    Transition tr;
    tr.state = window_of(std::move(state_items));
    tr.target = target;
    tr.reward = reward;
    tr.next_state = corpus::shift(tr.state, target, corpus::kClick);
    return tr;
}

LossConfig probe_config() {
    LossConfig cfg;
    cfg.gamma = 0.5;
    cfg.alpha = 2.0;
    cfg.beta = 1.5;
    cfg.n1 = 4;
    cfg.n2 = 4;
    cfg.xi_td.n = 3;
    cfg.xi_reg.n = 3;
    return cfg;
}

struct Fixture {
    Nets nets;
    TargetSet targets;
    std::vector<Transition> transitions;
    Batch batch;

    Fixture(int n_items = 12, int d = 4, int m = 6, std::uint64_t seed = 42) {
        Rng rng(seed);
        nets = Nets::init(n_items, d, m, rng);
        // distinct target copies so target-side values differ from online
        Rng trng(seed + 1);
        Nets tnets = Nets::init(n_items, d, m, trng);
        targets = TargetSet::from(tnets, false);
        transitions.push_back(make_transition({0, 3, 7}, 5, 1.0));
        transitions.push_back(make_transition({2, 9, 4}, 1, 3.0));
        for (const auto& tr : transitions) batch.push_back(&tr);
    }
};

bool grads_identical(const NetGrads& a, const NetGrads& b) {
    auto eq = [](const Vec& x, const Vec& y) {
        return x.size() == y.size() &&
               std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0;
    };
    return eq(a.emb.a, b.emb.a) && eq(a.w1.a, b.w1.a) && eq(a.b1, b.b1) &&
           a.lambda == b.lambda && eq(a.w2.a, b.w2.a) && eq(a.b2, b.b2) &&
           eq(a.h1_h.a, b.h1_h.a) && eq(a.h1_b, b.h1_b) && eq(a.h2_h.a, b.h2_h.a) &&
           eq(a.h2_b, b.h2_b);
}

}  // namespace

TEST_CASE("reg_softmax_gap reproduces the hand softmax-mean value") {
    const Vec q{1.0, 2.0};
    // (e^1*1 + e^2*2) / (e^1 + e^2) - 1.5
    CHECK(reg_softmax_gap(q, 1.5) == doctest::Approx(0.2310585786).epsilon(1e-9));
    // translation covariance: shifting every value leaves the gap unchanged
    const Vec shifted{1.0 + 37.5, 2.0 + 37.5};
    CHECK(reg_softmax_gap(shifted, 1.5 + 37.5) == doctest::Approx(reg_softmax_gap(q, 1.5)));
    // constant case
    const Vec flat{0.7, 0.7, 0.7};
    CHECK(reg_softmax_gap(flat, 0.7) == doctest::Approx(0.0));
}

TEST_CASE("bpr_term: zero margin, unit margin, saturation, monotonicity") {
    CHECK(bpr_term(0.0) == doctest::Approx(std::log(2.0)));
    CHECK(bpr_term(1.0) == doctest::Approx(0.3132616875).epsilon(1e-9));
    CHECK(bpr_term(40.0) < 1e-12);
    double prev = bpr_term(-5.0);
    for (double m = -4.5; m < 5.0; m += 0.5) {
        const double cur = bpr_term(m);
        CHECK(cur < prev);
        prev = cur;
    }
}

TEST_CASE("td_loss with gamma=0 reduces to the mean squared reward error") {
    Fixture f;
    LossConfig cfg = probe_config();
    cfg.gamma = 0.0;
    Rng rng(7);
    const double loss = td_loss(f.batch, f.nets, f.nets, f.targets, cfg, rng, nullptr);

    double want = 0.0;
    for (const Transition* tr : f.batch) {
        const Vec mu_s = policy::mu(tr->state, f.nets.emb, f.nets.enc, f.nets.proj);
        const Vec a = latent::action_of_item(f.nets.emb, tr->target);
        const double q1 = critic::q_from_mu(mu_s, f.nets.h1, a);
        const double q2 = critic::q_from_mu(mu_s, f.nets.h2, a);
        want += 0.5 * ((q1 - tr->reward) * (q1 - tr->reward) +
                       (q2 - tr->reward) * (q2 - tr->reward));
    }
    want /= static_cast<double>(f.batch.size());
    CHECK(loss == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("td_loss vanishes when Q is a perfect constant fit at gamma=0") {
    Fixture f;
    // identical states so mu is shared, heads fit the shared reward exactly
    f.transitions.clear();
    f.transitions.push_back(make_transition({3, 7}, 5, 0.7));
    f.transitions.push_back(make_transition({3, 7}, 2, 0.7));
    f.batch.clear();
    for (const auto& tr : f.transitions) f.batch.push_back(&tr);

    const Vec mu_s = policy::mu(f.transitions[0].state, f.nets.emb, f.nets.enc, f.nets.proj);
    const double nn = linalg::dot(mu_s, mu_s);
    for (critic::CriticHead* head : {&f.nets.h1, &f.nets.h2}) {
        head->h.zero();
        for (int i = 0; i < f.nets.dim(); ++i) head->b[i] = 0.7 * mu_s[i] / nn;
    }
    LossConfig cfg = probe_config();
    cfg.gamma = 0.0;
    Rng rng(8);
    CHECK(td_loss(f.batch, f.nets, f.nets, f.targets, cfg, rng, nullptr) ==
          doctest::Approx(0.0).epsilon(1e-18));
}

TEST_CASE("td_loss matches a straight-line independent evaluation on a hand batch") {
    Fixture f;
    const LossConfig cfg = probe_config();
    const std::uint64_t seed = 99;
    Rng rng(seed);
    const double loss = td_loss(f.batch, f.nets, f.nets, f.targets, cfg, rng, nullptr);

    // independent straight-line evaluation, replaying the same rng stream
    Rng oracle_rng(seed);
    double want = 0.0;
    for (const Transition* tr : f.batch) {
        const Vec mu_next =
            policy::mu(tr->next_state, f.nets.emb, f.targets.enc, f.targets.proj);
        const Vec pi_next = latent::normalize(mu_next).direction;
        const corpus::ItemId explored =
            latent::xi_sample(f.nets.emb, pi_next, cfg.xi_td, oracle_rng);
        const Vec a_next = latent::action_of_item(f.nets.emb, explored);
        const double q1t = critic::q_from_mu(mu_next, f.targets.h1, a_next);
        const double q2t = critic::q_from_mu(mu_next, f.targets.h2, a_next);
        const double y = tr->reward + cfg.gamma * std::min(q1t, q2t);
        const Vec mu_s = policy::mu(tr->state, f.nets.emb, f.nets.enc, f.nets.proj);
        const Vec a = latent::action_of_item(f.nets.emb, tr->target);
        const double q1 = critic::q_from_mu(mu_s, f.nets.h1, a);
        const double q2 = critic::q_from_mu(mu_s, f.nets.h2, a);
        want += 0.5 * ((q1 - y) * (q1 - y) + (q2 - y) * (q2 - y));
    }
    want /= static_cast<double>(f.batch.size());
    CHECK(loss == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("td_loss rejects padding targets") {
    Fixture f;
    Transition bad = make_transition({1, 2}, 5, 1.0);
    bad.target = 0;
    Batch batch{&bad};
    LossConfig cfg = probe_config();
    Rng rng(1);
    CHECK_THROWS_AS(td_loss(batch, f.nets, f.nets, f.targets, cfg, rng, nullptr),
                    ValidationError);
}

TEST_CASE("reg_loss is zero when the single sampled item equals the logged one") {
    Fixture f;
    LossConfig cfg = probe_config();
    cfg.n1 = 1;
    cfg.xi_reg.mode = latent::XiConfig::Mode::topn_uniform;
    cfg.xi_reg.n = 1;
    // pick the argmax-cosine item of pi(s) as the logged target
    const StateWindow state = window_of({0, 3, 7});
    const Vec pi_s = policy::pi(state, f.nets.emb, f.nets.enc, f.nets.proj);
    const corpus::ItemId star = latent::nearest_items(f.nets.emb, pi_s, 1)[0];
    Transition tr = make_transition({0, 3, 7}, star, 1.0);
    Batch batch{&tr};
    Rng rng(5);
    CHECK(reg_loss(batch, f.nets, f.nets, cfg, rng, nullptr) ==
          doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("reg_loss is zero when every Q value coincides") {
    Fixture f;
    const Vec mu_s = policy::mu(f.transitions[0].state, f.nets.emb, f.nets.enc, f.nets.proj);
    for (critic::CriticHead* head : {&f.nets.h1, &f.nets.h2}) {
        head->h.zero();
        head->b.assign(f.nets.dim(), 0.25);  // Q = 0.25 * sum(mu), same for every action
    }
    LossConfig cfg = probe_config();
    Rng rng(6);
    Batch batch{&f.transitions[0]};
    CHECK(reg_loss(batch, f.nets, f.nets, cfg, rng, nullptr) ==
          doctest::Approx(0.0).epsilon(1e-12));
    (void)mu_s;
}

TEST_CASE("reg_loss end-to-end translation covariance via a head bias shift") {
    Fixture f;
    // one repeated state so mu is shared across the batch
    Transition tr = make_transition({2, 9, 4}, 3, 1.0);
    Batch batch{&tr};
    LossConfig cfg = probe_config();
    cfg.n1 = 6;

    Rng rng_a(11);
    const double before = reg_loss(batch, f.nets, f.nets, cfg, rng_a, nullptr);

    const Vec mu_s = policy::mu(tr.state, f.nets.emb, f.nets.enc, f.nets.proj);
    const double nn = linalg::dot(mu_s, mu_s);
    const double c = 12.75;
    Nets shifted = f.nets;
    for (critic::CriticHead* head : {&shifted.h1, &shifted.h2})
        for (int i = 0; i < shifted.dim(); ++i) head->b[i] += c * mu_s[i] / nn;
    Rng rng_b(11);
    const double after = reg_loss(batch, shifted, shifted, cfg, rng_b, nullptr);
    CHECK(after == doctest::Approx(before).epsilon(1e-9));
}

TEST_CASE("bc_loss on a crafted margin reproduces hand values") {
    Fixture f;
    // catalog of 3 items so negatives are forced: target 1, negatives {2}
    Rng rng0(12);
    Nets nets = Nets::init(3, 2, 3, rng0);
    LossConfig cfg = probe_config();
    cfg.n2 = 1;
    Transition tr = make_transition({1, 2}, 1, 1.0);
    Batch batch{&tr};

    // zero projection: all scores zero, every margin zero -> ln 2
    nets.proj.w2.zero();
    nets.proj.b2.assign(2, 0.0);
    {
        Rng rng(13);
        CHECK(bc_loss(batch, nets, cfg, rng, nullptr) == doctest::Approx(std::log(2.0)));
    }

    // bias the preference so that y_target - y_neg = 1 exactly
    nets.emb.w.at(1, 0) = 1.0;
    nets.emb.w.at(1, 1) = 0.0;
    nets.emb.w.at(2, 0) = 0.0;
    nets.emb.w.at(2, 1) = 1.0;
    nets.proj.b2 = {1.0, 0.0};  // mu = (1, 0): y_1 = 1, y_2 = 0
    {
        Rng rng(14);
        CHECK(bc_loss(batch, nets, cfg, rng, nullptr) ==
              doctest::Approx(0.3132616875).epsilon(1e-9));
    }
}

TEST_CASE("bc_loss falls back to with-replacement sampling on tiny catalogs") {
    Rng rng0(19);
    Nets nets = Nets::init(4, 2, 3, rng0);  // usable negatives: 2
    LossConfig cfg = probe_config();
    cfg.n2 = 10;  // more than the catalog can supply distinctly
    Transition tr = make_transition({1, 2}, 3, 1.0);
    Batch batch{&tr};
    Rng rng(20);
    NetGrads grads = NetGrads::zeros_like(nets);
    const double loss = bc_loss(batch, nets, cfg, rng, &grads);
    CHECK(std::isfinite(loss));
    // the target never appears among its own negatives: its gradient row is
    // the pure positive-side pull dy * mu summed over pairs
    CHECK(std::isfinite(grads.emb.at(3, 0)));
}

TEST_CASE("bc_loss cross-entropy flag swaps in full softmax") {
    Fixture f;
    LossConfig cfg = probe_config();
    cfg.bc_cross_entropy = true;
    Rng rng(15);
    const double loss = bc_loss(f.batch, f.nets, cfg, rng, nullptr);

    double want = 0.0;
    for (const Transition* tr : f.batch) {
        const Vec mu_s = policy::mu(tr->state, f.nets.emb, f.nets.enc, f.nets.proj);
        double lse = 0.0, smax = -1e300;
        Vec scores(f.nets.emb.n_items, 0.0);
        for (corpus::ItemId i = 1; i < f.nets.emb.n_items; ++i) {
            scores[i] = linalg::dot(f.nets.emb.row(i), mu_s);
            smax = std::max(smax, scores[i]);
        }
        for (corpus::ItemId i = 1; i < f.nets.emb.n_items; ++i) lse += std::exp(scores[i] - smax);
        want += std::log(lse) + smax - scores[tr->target];
    }
    want /= static_cast<double>(f.batch.size());
    CHECK(loss == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("dc_loss on a constant critic is -c with zero actor gradient") {
    Fixture f;
    // H = 0 makes grad_a Q vanish; identical states make the loss exactly -c
    f.nets.h1.h.zero();
    Transition tr1 = make_transition({3, 7}, 5, 1.0);
    Transition tr2 = make_transition({3, 7}, 2, 1.0);
    Batch batch{&tr1, &tr2};
    const Vec mu_s = policy::mu(tr1.state, f.nets.emb, f.nets.enc, f.nets.proj);
    const double c = linalg::dot(mu_s, f.nets.h1.b);

    NetGrads grads = NetGrads::zeros_like(f.nets);
    const double loss = dc_loss(batch, f.nets, f.nets, &grads);
    CHECK(loss == doctest::Approx(-c).epsilon(1e-12));
    for (double g : grads.w1.a) CHECK(g == 0.0);
    for (double g : grads.w2.a) CHECK(g == 0.0);
    for (double g : grads.emb.a) CHECK(g == 0.0);
    CHECK(grads.lambda == 0.0);
}

TEST_CASE("actor gradients are bit-identical whether or not the critic adds the reg term") {
    Fixture f;
    LossConfig with_reg = probe_config();
    with_reg.alpha = 5.0;
    LossConfig no_reg = probe_config();
    no_reg.alpha = 0.0;

    NetGrads ga = NetGrads::zeros_like(f.nets);
    NetGrads gb = NetGrads::zeros_like(f.nets);
    Rng rng_a(21), rng_b(21);
    const double la = actor_loss(f.batch, f.nets, f.nets, with_reg, rng_a, &ga);
    const double lb = actor_loss(f.batch, f.nets, f.nets, no_reg, rng_b, &gb);
    CHECK(la == lb);
    CHECK(grads_identical(ga, gb));
}

TEST_CASE("critic_loss composes td + alpha*reg over one rng stream") {
    Fixture f;
    LossConfig cfg = probe_config();
    cfg.alpha = 2.5;

    Rng rng(33);
    LossParts parts;
    NetGrads combined = NetGrads::zeros_like(f.nets);
    const double total =
        critic_loss(f.batch, f.nets, f.nets, f.targets, cfg, rng, &combined, &parts);
    CHECK(total == doctest::Approx(parts.td + cfg.alpha * parts.reg).epsilon(1e-12));

    // recompute the parts by chaining the same stream manually
    Rng chain(33);
    NetGrads manual = NetGrads::zeros_like(f.nets);
    const double td = td_loss(f.batch, f.nets, f.nets, f.targets, cfg, chain, &manual, 1.0);
    const double reg = reg_loss(f.batch, f.nets, f.nets, cfg, chain, &manual, cfg.alpha);
    CHECK(td == doctest::Approx(parts.td).epsilon(1e-15));
    CHECK(reg == doctest::Approx(parts.reg).epsilon(1e-15));
    CHECK(grads_identical(combined, manual));

    // alpha = 0 equals td alone
    LossConfig zero = cfg;
    zero.alpha = 0.0;
    Rng rng_z(33);
    CHECK(critic_loss(f.batch, f.nets, f.nets, f.targets, zero, rng_z, nullptr) ==
          doctest::Approx(td).epsilon(1e-15));
}

TEST_CASE("actor_loss composes dc + beta*bc") {
    Fixture f;
    LossConfig cfg = probe_config();
    cfg.beta = 0.75;
    Rng rng(34);
    LossParts parts;
    const double total = actor_loss(f.batch, f.nets, f.nets, cfg, rng, nullptr, &parts);
    CHECK(total == doctest::Approx(parts.dc + cfg.beta * parts.bc).epsilon(1e-12));

    LossConfig zero = cfg;
    zero.beta = 0.0;
    Rng rng_z(34);
    CHECK(actor_loss(f.batch, f.nets, f.nets, zero, rng_z, nullptr) ==
          doctest::Approx(parts.dc).epsilon(1e-15));
}

TEST_CASE("target-embedding snapshots feed the TD target and stay gradient-stopped") {
    Fixture f;
    LossConfig cfg = probe_config();

    // snapshot the online matrix into the targets, then move it: y changes
    TargetSet with_emb = f.targets;
    with_emb.emb = f.nets.emb;
    Rng r1(51), r2(51);
    const double base = td_loss(f.batch, f.nets, f.nets, with_emb, cfg, r1, nullptr);
    TargetSet moved = with_emb;
    for (double& v : moved.emb->w.a) v *= 1.5;
    const double shifted = td_loss(f.batch, f.nets, f.nets, moved, cfg, r2, nullptr);
    CHECK(base != shifted);

    // the gradient check still holds with the snapshot in place
    const auto report = trainer::grad_check(trainer::LossKind::td, f.nets, with_emb, f.batch,
                                            cfg, 52);
    CHECK(report.worst_rel() <= 1e-4);
}

TEST_CASE("analytic gradients match finite differences for every loss (small probe)") {
    Fixture f;
    const LossConfig cfg = probe_config();
    using trainer::LossKind;
    for (LossKind kind : {LossKind::td, LossKind::reg, LossKind::bc, LossKind::dc,
                          LossKind::critic_combined, LossKind::actor_combined}) {
        const auto report = trainer::grad_check(kind, f.nets, f.targets, f.batch, cfg, 77);
        INFO("loss kind ", static_cast<int>(kind));
        CHECK(report.worst_rel() <= 1e-4);
    }
}
