#include "ecoc/latent.hpp"

#include "ecoc/io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ecoc::latent {

void EmbeddingMatrix::init_random(Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
    for (int i = 1; i < n_items; ++i)
        for (int j = 0; j < dim; ++j) w.at(i, j) = (2.0 * rng.uniform01() - 1.0) * bound;
    for (int j = 0; j < dim; ++j) w.at(0, j) = 0.0;
}

NormView normalize(std::span<const double> v) {
    const double n = linalg::norm2(v);
    if (!(n > 0.0)) throw ValidationError("cannot normalize a zero vector");
    NormView out;
    out.norm = n;
    out.direction.resize(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out.direction[i] = v[i] / n;
    return out;
}

Vec action_of_item(const EmbeddingMatrix& m, ItemId i) {
    if (i <= 0 || i >= m.n_items)
        throw ValidationError("action_of_item: invalid item id " + std::to_string(i));
    return normalize(m.row(i)).direction;
}

Vec cosines(const EmbeddingMatrix& m, std::span<const double> direction) {
    const double dn = linalg::norm2(direction);
    if (!(dn > 0.0)) throw ValidationError("cosines: zero direction");
    Vec sims(m.n_items, -std::numeric_limits<double>::infinity());
    for (ItemId i = 1; i < m.n_items; ++i) {
        const double rn = linalg::norm2(m.row(i));
        if (!(rn > 0.0)) throw ValidationError("cosines: zero embedding row " + std::to_string(i));
        sims[i] = linalg::dot(m.row(i), direction) / (rn * dn);
    }
    return sims;
}

std::vector<ItemId> nearest_items(const EmbeddingMatrix& m, std::span<const double> direction,
                                  int k) {
    if (k < 1 || k > m.n_items - 1)
        throw ValidationError("nearest_items: k must lie in [1, |I|-1]");
    const Vec sims = cosines(m, direction);
    std::vector<ItemId> ids(m.n_items - 1);
    for (ItemId i = 1; i < m.n_items; ++i) ids[i - 1] = i;
    std::sort(ids.begin(), ids.end(), [&](ItemId a, ItemId b) {
        if (sims[a] != sims[b]) return sims[a] > sims[b];
        return a < b;
    });
    ids.resize(k);
    return ids;
}

ItemId xi_sample(const EmbeddingMatrix& m, std::span<const double> direction, const XiConfig& cfg,
                 Rng& rng) {
    return xi_sample_many(m, direction, cfg, 1, rng)[0];
}

std::vector<ItemId> xi_sample_many(const EmbeddingMatrix& m, std::span<const double> direction,
                                   const XiConfig& cfg, std::size_t count, Rng& rng) {
    std::vector<ItemId> out;
    out.reserve(count);
    if (cfg.mode == XiConfig::Mode::topn_uniform) {
        if (cfg.n < 1) throw ValidationError("xi_sample: topn_uniform requires n >= 1");
        const int n = std::min(cfg.n, m.n_items - 1);
        const auto top = nearest_items(m, direction, n);
        for (std::size_t i = 0; i < count; ++i)
            out.push_back(top[rng.below(static_cast<std::uint64_t>(top.size()))]);
        return out;
    }
    if (!(cfg.temperature > 0.0)) throw ValidationError("xi_sample: softmax temperature must be > 0");
    const Vec sims = cosines(m, direction);
    double smax = -std::numeric_limits<double>::infinity();
    for (ItemId i = 1; i < m.n_items; ++i) smax = std::max(smax, sims[i]);
    Vec weights(m.n_items, 0.0);
    double total = 0.0;
    for (ItemId i = 1; i < m.n_items; ++i) {
        weights[i] = std::exp((sims[i] - smax) / cfg.temperature);
        total += weights[i];
    }
    for (std::size_t k = 0; k < count; ++k) {
        const double u = rng.uniform01() * total;
        double acc = 0.0;
        ItemId pick = static_cast<ItemId>(m.n_items - 1);
        for (ItemId i = 1; i < m.n_items; ++i) {
            acc += weights[i];
            if (u < acc) {
                pick = i;
                break;
            }
        }
        out.push_back(pick);
    }
    return out;
}

void export_embeddings(const EmbeddingMatrix& m, const std::string& path) {
    io::Container c;
    c.meta["kind"] = "ecoc-embeddings";
    c.meta["n_items"] = m.n_items;
    c.meta["dim"] = m.dim;
    auto& items = c.add_f64("items", {static_cast<std::size_t>(m.n_items),
                                      static_cast<std::size_t>(m.dim)});
    items.f = m.w.a;
    io::save_container(c, path);
}

EmbeddingMatrix load_embeddings(const std::string& path) {
    const io::Container c = io::load_container(path);
    if (c.meta.value("kind", std::string{}) != "ecoc-embeddings")
        throw ValidationError("file is not an embedding export: " + path);
    EmbeddingMatrix m(c.meta.at("n_items").get<int>(), c.meta.at("dim").get<int>());
    const auto& items = c.get("items");
    if (items.f.size() != m.w.a.size())
        throw ValidationError("embedding export shape mismatch in " + path);
    m.w.a = items.f;
    return m;
}

NormDecomposition decompose(const EmbeddingMatrix& m) {
    NormDecomposition out;
    out.directions = linalg::Mat(m.n_items, m.dim);
    out.norms.assign(m.n_items, 0.0);
    for (ItemId i = 1; i < m.n_items; ++i) {
        const NormView nv = normalize(m.row(i));
        out.norms[i] = nv.norm;
        for (int j = 0; j < m.dim; ++j) out.directions.at(i, j) = nv.direction[j];
    }
    return out;
}

}  // namespace ecoc::latent
