#pragma once
// Item embedding matrix, norm/direction decomposition, unit-sphere actions,
// exact cosine search, and the exploration sampler over the latent item space.

#include "ecoc/common.hpp"
#include "ecoc/corpus.hpp"
#include "ecoc/linalg.hpp"

#include <span>
#include <vector>

namespace ecoc::latent {

using corpus::ItemId;

/// |I| x d table of item representations. Row 0 is the padding item: all
/// zeros and never trained, ranked, or sampled.
struct EmbeddingMatrix {
    int n_items = 0;
    int dim = 0;
    linalg::Mat w;

    EmbeddingMatrix() = default;
    EmbeddingMatrix(int items, int d) : n_items(items), dim(d), w(items, d) {}

    std::span<const double> row(ItemId i) const { return w.row_span(i); }
    std::span<double> row(ItemId i) { return w.row_span(i); }

    // i.i.d. uniform in [-1/sqrt(d), 1/sqrt(d)]; padding row stays zero.
    void init_random(Rng& rng);
};

struct NormView {
    Vec direction;  // unit
    double norm = 0.0;
};

// Splits v into unit direction and positive norm; rejects zero vectors.
NormView normalize(std::span<const double> v);

// Unit action for a (non-padding) item.
Vec action_of_item(const EmbeddingMatrix& m, ItemId i);

// Cosine similarities of the non-padding rows against a direction.
// Result is indexed by item id; slot 0 holds -infinity.
Vec cosines(const EmbeddingMatrix& m, std::span<const double> direction);

// Exact top-k by cosine similarity, descending; ties broken by ascending id.
std::vector<ItemId> nearest_items(const EmbeddingMatrix& m, std::span<const double> direction,
                                  int k);

struct XiConfig {
    enum class Mode { topn_uniform, softmax };
    Mode mode = Mode::topn_uniform;
    int n = 10;                // topn_uniform support size
    double temperature = 1.0;  // softmax temperature
};

ItemId xi_sample(const EmbeddingMatrix& m, std::span<const double> direction,
                 const XiConfig& cfg, Rng& rng);

// Draws `count` items from one direction, amortizing the cosine scan.
std::vector<ItemId> xi_sample_many(const EmbeddingMatrix& m, std::span<const double> direction,
                                   const XiConfig& cfg, std::size_t count, Rng& rng);

struct NormDecomposition {
    linalg::Mat directions;  // n_items x dim, row 0 zero
    Vec norms;               // n_items, slot 0 zero
};

NormDecomposition decompose(const EmbeddingMatrix& m);

// Self-describing embedding export: an "items" |I| x d array of 64-bit
// reals plus the dimensions in the metadata, round-tripping bit-exactly.
void export_embeddings(const EmbeddingMatrix& m, const std::string& path);
EmbeddingMatrix load_embeddings(const std::string& path);

}  // namespace ecoc::latent
