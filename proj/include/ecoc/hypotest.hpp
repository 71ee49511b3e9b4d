#pragma once
// Statistical machinery for the representation-normalization test:
// X/Y/Z construction, Spearman rank correlation, Fisher z-transformation,
// paired Student's t-test, and the cosine-rank profile.

#include "ecoc/corpus.hpp"
#include "ecoc/critic.hpp"

#include <span>
#include <vector>

namespace ecoc::hypotest {

using corpus::Transition;

struct Xyz {
    Vec x;  // raw inner products M . p, non-padding items in id order
    Vec y;  // cosines  Mbar . pbar
    Vec z;  // norm products  omega_i * ||p|| * sgn(x_i)
};

Xyz build_xyz(const latent::EmbeddingMatrix& emb, std::span<const double> preference);

// Average ranks (1-based) with ties sharing their mean rank.
Vec average_ranks(std::span<const double> values);

// Pearson correlation of the rank vectors; throws on constant input.
double spearman(std::span<const double> x, std::span<const double> y);

// z = 0.5 ln((1 + rho) / (1 - rho)); requires |rho| < 1.
double fisher_z(double rho);

struct TTest {
    double mean = 0.0;
    double sd = 0.0;  // sample standard deviation (n-1)
    double t = 0.0;
    double p = 1.0;  // two-sided
    int n = 0;
};

TTest paired_t(std::span<const double> differences);

// Two-sided p-value of Student's t with `dof` degrees of freedom, via the
// regularized incomplete beta function (absolute accuracy ~1e-12).
double student_t_two_sided_p(double t, int dof);
double reg_incomplete_beta(double a, double b, double x);

struct HypoReport {
    double mean = 0.0;  // mean of z_xy - z_xz, averaged over repeats
    double sd = 0.0;
    double t = 0.0;
    double p = 1.0;
    int n = 0;  // differences per repeat
    int repeats = 0;
    std::int64_t saturated = 0;  // correlations clamped at the Fisher boundary
    std::int64_t skipped = 0;    // degenerate samples dropped
    std::string caveat;
    std::vector<TTest> per_repeat;
};

constexpr double kRhoClamp = 1e-12;  // rho clamped to +/-(1 - kRhoClamp)

// Per repeat: sample N interactions, compute p = mu(s) each, build X/Y/Z,
// correlate and Fisher-transform, t-test the differences; the report averages
// the per-repeat statistics.
HypoReport run_assumption_test(const critic::Nets& nets, std::span<const Transition> data, int n,
                               int repeats, Rng& rng);

struct ProfileBucket {
    int k = 0;
    double mean_cosine = 0.0;
    std::int64_t count = 0;  // zero marks an empty (omitted) bucket
};

// Mean cos(e_target, p) over interactions whose target ranks within top-k,
// one bucket per requested k.
std::vector<ProfileBucket> cosine_rank_profile(const critic::Nets& nets,
                                               std::span<const Transition> data,
                                               std::vector<int> ks);

}  // namespace ecoc::hypotest
