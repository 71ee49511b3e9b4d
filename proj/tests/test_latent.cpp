#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ecoc/latent.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>

using namespace ecoc;
using namespace ecoc::latent;

namespace {
EmbeddingMatrix matrix_from_rows(const std::vector<Vec>& rows) {
    EmbeddingMatrix m(static_cast<int>(rows.size()), static_cast<int>(rows[1].size()));
    for (std::size_t i = 1; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j) m.w.at(i, j) = rows[i][j];
    return m;
}

// Independent scan used as the search oracle.
std::vector<ItemId> brute_force_nearest(const EmbeddingMatrix& m, const Vec& dir, int k) {
    struct Entry {
        double sim;
        ItemId id;
    };
    std::vector<Entry> entries;
    const double dn = linalg::norm2(dir);
    for (ItemId i = 1; i < m.n_items; ++i) {
        const double rn = linalg::norm2(m.row(i));
        entries.push_back({linalg::dot(m.row(i), dir) / (rn * dn), i});
    }
    std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        if (a.sim != b.sim) return a.sim > b.sim;
        return a.id < b.id;
    });
    std::vector<ItemId> out;
    for (int i = 0; i < k; ++i) out.push_back(entries[i].id);
    return out;
}
}  // namespace

TEST_CASE("normalize: pythagorean case and identity") {
    const auto nv = normalize(Vec{3.0, 4.0});
    CHECK(nv.norm == doctest::Approx(5.0));
    CHECK(nv.direction[0] == doctest::Approx(0.6));
    CHECK(nv.direction[1] == doctest::Approx(0.8));

    const auto unit = normalize(Vec{1.0, 0.0});
    CHECK(unit.norm == doctest::Approx(1.0));
    CHECK(unit.direction[0] == doctest::Approx(1.0));
}

TEST_CASE("normalize rejects the zero vector") {
    CHECK_THROWS_AS(normalize(Vec{0.0, 0.0}), ValidationError);
}

TEST_CASE("normalize: direction is invariant under positive scaling") {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        Vec v(5);
        for (double& x : v) x = rng.normal();
        const double c = 0.01 + 10.0 * rng.uniform01();
        const auto a = normalize(v);
        Vec scaled = v;
        for (double& x : scaled) x *= c;
        const auto b = normalize(scaled);
        for (int j = 0; j < 5; ++j) CHECK(a.direction[j] == doctest::Approx(b.direction[j]).epsilon(1e-9));
        // reconstruction within 1e-6
        for (int j = 0; j < 5; ++j)
            CHECK(std::fabs(a.direction[j] * a.norm - v[j]) < 1e-6);
    }
}

TEST_CASE("action_of_item normalizes the row and rejects padding") {
    const auto m = matrix_from_rows({{0, 0}, {0.0, 2.0}});
    const Vec a = action_of_item(m, 1);
    CHECK(a[0] == doctest::Approx(0.0));
    CHECK(a[1] == doctest::Approx(1.0));
    CHECK_THROWS_AS(action_of_item(m, 0), ValidationError);
    CHECK_THROWS_AS(action_of_item(m, 5), ValidationError);
}

TEST_CASE("action_of_item composes with normalize on random rows") {
    Rng rng(9);
    EmbeddingMatrix m(20, 6);
    m.init_random(rng);
    for (ItemId i = 1; i < m.n_items; ++i) {
        const Vec a = action_of_item(m, i);
        const auto nv = normalize(m.row(i));
        for (int j = 0; j < 6; ++j) CHECK(a[j] == doctest::Approx(nv.direction[j]));
    }
}

TEST_CASE("nearest_items: hand instance, self-similarity, and tie rule") {
    const auto m = matrix_from_rows({{0, 0}, {1.0, 0.0}, {0.0, 1.0}, {-1.0, 0.0}});
    const auto top2 = nearest_items(m, Vec{0.8, 0.6}, 2);
    CHECK(top2 == std::vector<ItemId>{1, 2});

    // the item's own direction ranks first
    const auto self = nearest_items(m, action_of_item(m, 3), 1);
    CHECK(self[0] == 3);

    // duplicated rows tie; the lower id wins
    const auto dup = matrix_from_rows({{0, 0}, {2.0, 0.0}, {4.0, 0.0}, {0.0, 1.0}});
    const auto tied = nearest_items(dup, Vec{1.0, 0.0}, 2);
    CHECK(tied == std::vector<ItemId>{1, 2});
}

TEST_CASE("nearest_items matches the exhaustive scan and ignores row rescaling") {
    Rng rng(17);
    for (int trial = 0; trial < 40; ++trial) {
        const int n = 8 + static_cast<int>(rng.below(40));
        const int d = 2 + static_cast<int>(rng.below(8));
        EmbeddingMatrix m(n, d);
        m.init_random(rng);
        Vec dir(d);
        for (double& x : dir) x = rng.normal();
        dir = normalize(dir).direction;
        const int k = 1 + static_cast<int>(rng.below(n - 1));
        CHECK(nearest_items(m, dir, k) == brute_force_nearest(m, dir, k));

        // positive per-row rescaling leaves the ranking unchanged
        EmbeddingMatrix scaled = m;
        for (ItemId i = 1; i < n; ++i) {
            const double c = 0.1 + 3.0 * rng.uniform01();
            for (int j = 0; j < d; ++j) scaled.w.at(i, j) *= c;
        }
        CHECK(nearest_items(scaled, dir, k) == nearest_items(m, dir, k));
    }
}

TEST_CASE("xi_sample topn_uniform with n=1 is the argmax item") {
    Rng rng(5);
    EmbeddingMatrix m(30, 4);
    m.init_random(rng);
    Vec dir = normalize(m.row(7)).direction;
    XiConfig cfg;
    cfg.mode = XiConfig::Mode::topn_uniform;
    cfg.n = 1;
    for (int i = 0; i < 10; ++i) CHECK(xi_sample(m, dir, cfg, rng) == 7);
}

TEST_CASE("xi_sample topn_uniform n=2 splits draws evenly and stays in support") {
    Rng rng(6);
    EmbeddingMatrix m(12, 3);
    m.init_random(rng);
    Vec dir(3);
    for (double& x : dir) x = rng.normal();
    dir = normalize(dir).direction;
    XiConfig cfg;
    cfg.n = 2;
    const auto support = nearest_items(m, dir, 2);
    std::int64_t first = 0, total = 100000;
    const auto draws = xi_sample_many(m, dir, cfg, total, rng);
    for (const ItemId id : draws) {
        const bool in_support = id == support[0] || id == support[1];
        REQUIRE(in_support);
        if (id == support[0]) ++first;
    }
    CHECK(std::fabs(static_cast<double>(first) / total - 0.5) < 0.01);
}

TEST_CASE("xi_sample softmax converges to the argmax as temperature vanishes") {
    Rng rng(8);
    EmbeddingMatrix m(25, 5);
    m.init_random(rng);
    Vec dir(5);
    for (double& x : dir) x = rng.normal();
    dir = normalize(dir).direction;
    const ItemId best = nearest_items(m, dir, 1)[0];
    XiConfig cfg;
    cfg.mode = XiConfig::Mode::softmax;
    cfg.temperature = 1e-4;
    const auto draws = xi_sample_many(m, dir, cfg, 200, rng);
    for (const ItemId id : draws) CHECK(id == best);
}

TEST_CASE("xi_sample validates its configuration") {
    Rng rng(1);
    EmbeddingMatrix m(10, 3);
    m.init_random(rng);
    const Vec dir = action_of_item(m, 1);
    XiConfig bad;
    bad.n = 0;
    CHECK_THROWS_AS(xi_sample(m, dir, bad, rng), ValidationError);
    bad = XiConfig{};
    bad.mode = XiConfig::Mode::softmax;
    bad.temperature = 0.0;
    CHECK_THROWS_AS(xi_sample(m, dir, bad, rng), ValidationError);
}

TEST_CASE("decompose: identity rows, scale covariance, reconstruction") {
    const auto eye = matrix_from_rows({{0, 0}, {1.0, 0.0}, {0.0, 1.0}});
    const auto dec = decompose(eye);
    CHECK(dec.norms[1] == doctest::Approx(1.0));
    CHECK(dec.norms[2] == doctest::Approx(1.0));
    CHECK(dec.directions.at(1, 0) == doctest::Approx(1.0));
    CHECK(dec.directions.at(2, 1) == doctest::Approx(1.0));

    EmbeddingMatrix tripled = eye;
    for (ItemId i = 1; i < 3; ++i)
        for (int j = 0; j < 2; ++j) tripled.w.at(i, j) *= 3.0;
    const auto dec3 = decompose(tripled);
    for (ItemId i = 1; i < 3; ++i) {
        CHECK(dec3.norms[i] == doctest::Approx(3.0 * dec.norms[i]));
        for (int j = 0; j < 2; ++j)
            CHECK(dec3.directions.at(i, j) == doctest::Approx(dec.directions.at(i, j)));
    }

    Rng rng(21);
    EmbeddingMatrix m(15, 7);
    m.init_random(rng);
    const auto decr = decompose(m);
    for (ItemId i = 1; i < m.n_items; ++i)
        for (int j = 0; j < 7; ++j)
            CHECK(std::fabs(decr.directions.at(i, j) * decr.norms[i] - m.w.at(i, j)) < 1e-6);
}

TEST_CASE("decompose rejects a zero non-padding row") {
    EmbeddingMatrix m(4, 3);
    Rng rng(2);
    m.init_random(rng);
    for (int j = 0; j < 3; ++j) m.w.at(2, j) = 0.0;
    CHECK_THROWS_AS(decompose(m), ValidationError);
}

TEST_CASE("embedding export round-trips bit-exactly") {
    Rng rng(23);
    EmbeddingMatrix m(17, 5);
    m.init_random(rng);
    const std::string path = "latent_export_test.bin";
    export_embeddings(m, path);
    const EmbeddingMatrix back = load_embeddings(path);
    CHECK(back.n_items == 17);
    CHECK(back.dim == 5);
    REQUIRE(back.w.a.size() == m.w.a.size());
    for (std::size_t i = 0; i < m.w.a.size(); ++i)
        CHECK(std::memcmp(&back.w.a[i], &m.w.a[i], sizeof(double)) == 0);
    std::remove(path.c_str());
}
