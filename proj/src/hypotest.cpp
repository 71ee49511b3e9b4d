#include "ecoc/hypotest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ecoc::hypotest {

Xyz build_xyz(const latent::EmbeddingMatrix& emb, std::span<const double> preference) {
    const double pnorm = linalg::norm2(preference);
    if (!(pnorm > 0.0)) throw ValidationError("build_xyz: zero preference vector");
    const int n = emb.n_items - 1;
    Xyz out;
    out.x.resize(n);
    out.y.resize(n);
    out.z.resize(n);
    for (int i = 1; i <= n; ++i) {
        const auto row = emb.row(i);
        const double rnorm = linalg::norm2(row);
        if (!(rnorm > 0.0))
            throw ValidationError("build_xyz: zero embedding row " + std::to_string(i));
        const double x = linalg::dot(row, preference);
        out.x[i - 1] = x;
        out.y[i - 1] = x / (rnorm * pnorm);
        const double sgn = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
        out.z[i - 1] = rnorm * pnorm * sgn;
    }
    return out;
}

Vec average_ranks(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (values[a] != values[b]) return values[a] < values[b];
        return a < b;
    });
    Vec ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[idx[j + 1]] == values[idx[i]]) ++j;
        const double avg = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

namespace {
double pearson(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (!(sxx > 0.0) || !(syy > 0.0))
        throw ValidationError("correlation undefined for constant input");
    return sxy / std::sqrt(sxx * syy);
}
}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ValidationError("spearman: length mismatch");
    if (x.size() < 2) throw ValidationError("spearman: need at least two samples");
    const Vec rx = average_ranks(x);
    const Vec ry = average_ranks(y);
    return pearson(rx, ry);
}

double fisher_z(double rho) {
    if (!(std::fabs(rho) < 1.0))
        throw ValidationError("fisher_z: |rho| must be < 1");
    return 0.5 * std::log((1.0 + rho) / (1.0 - rho));
}

double reg_incomplete_beta(double a, double b, double x) {
    if (x < 0.0 || x > 1.0) throw ValidationError("reg_incomplete_beta: x outside [0,1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    // Continued fraction (modified Lentz), with the symmetry switch for
    // convergence when x is past the mean.
    const double ln_beta = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
    const double front = std::exp(a * std::log(x) + b * std::log(1.0 - x) - ln_beta);
    auto cf = [](double a_, double b_, double x_) {
        const double tiny = 1e-300;
        double c = 1.0;
        double d = 1.0 - (a_ + b_) * x_ / (a_ + 1.0);
        if (std::fabs(d) < tiny) d = tiny;
        d = 1.0 / d;
        double h = d;
        for (int m = 1; m <= 500; ++m) {
            const double m_ = static_cast<double>(m);
            double num = m_ * (b_ - m_) * x_ / ((a_ + 2.0 * m_ - 1.0) * (a_ + 2.0 * m_));
            d = 1.0 + num * d;
            if (std::fabs(d) < tiny) d = tiny;
            c = 1.0 + num / c;
            if (std::fabs(c) < tiny) c = tiny;
            d = 1.0 / d;
            h *= d * c;
            num = -(a_ + m_) * (a_ + b_ + m_) * x_ / ((a_ + 2.0 * m_) * (a_ + 2.0 * m_ + 1.0));
            d = 1.0 + num * d;
            if (std::fabs(d) < tiny) d = tiny;
            c = 1.0 + num / c;
            if (std::fabs(c) < tiny) c = tiny;
            d = 1.0 / d;
            const double delta = d * c;
            h *= delta;
            if (std::fabs(delta - 1.0) < 1e-15) break;
        }
        return h;
    };
    if (x < (a + 1.0) / (a + b + 2.0)) return front * cf(a, b, x) / a;
    return 1.0 - std::exp(b * std::log(1.0 - x) + a * std::log(x) - ln_beta) * cf(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, int dof) {
    if (dof < 1) throw ValidationError("student_t_two_sided_p: dof must be >= 1");
    const double v = static_cast<double>(dof);
    const double x = v / (v + t * t);
    return reg_incomplete_beta(0.5 * v, 0.5, x);
}

TTest paired_t(std::span<const double> differences) {
    const int n = static_cast<int>(differences.size());
    if (n < 2) throw ValidationError("paired_t: need at least two differences");
    TTest out;
    out.n = n;
    for (double d : differences) out.mean += d;
    out.mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double d : differences) ss += (d - out.mean) * (d - out.mean);
    out.sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (!(out.sd > 0.0)) throw ValidationError("paired_t: zero variance sample");
    out.t = out.mean / (out.sd / std::sqrt(static_cast<double>(n)));
    out.p = student_t_two_sided_p(out.t, n - 1);
    return out;
}

HypoReport run_assumption_test(const critic::Nets& nets, std::span<const Transition> data, int n,
                               int repeats, Rng& rng) {
    if (n < 2) throw ValidationError("run_assumption_test: n must be >= 2");
    if (repeats < 1) throw ValidationError("run_assumption_test: repeats must be >= 1");
    if (static_cast<std::size_t>(n) > data.size())
        throw ValidationError("run_assumption_test: n exceeds available interactions");

    HypoReport report;
    report.repeats = repeats;
    report.caveat =
        "preference vectors are assumed i.i.d. multivariate normal by the test design; "
        "this is not enforced on the model";

    std::vector<std::size_t> indices(data.size());
    for (int r = 0; r < repeats; ++r) {
        Rng sub = rng.split(static_cast<std::uint64_t>(r));
        std::iota(indices.begin(), indices.end(), 0);
        // partial Fisher-Yates: the first n entries form the sample
        for (int i = 0; i < n; ++i) {
            const std::size_t j = i + sub.below(indices.size() - i);
            std::swap(indices[i], indices[j]);
        }
        Vec diffs;
        diffs.reserve(n);
        for (int i = 0; i < n; ++i) {
            const Transition& tr = data[indices[i]];
            double rho_xy = 0.0, rho_xz = 0.0;
            try {
                const Vec p = policy::mu(tr.state, nets.emb, nets.enc, nets.proj);
                const Xyz xyz = build_xyz(nets.emb, p);
                rho_xy = spearman(xyz.x, xyz.y);
                rho_xz = spearman(xyz.x, xyz.z);
            } catch (const ValidationError&) {
                ++report.skipped;
                continue;
            }
            const double bound = 1.0 - kRhoClamp;
            if (std::fabs(rho_xy) >= bound) {
                rho_xy = std::clamp(rho_xy, -bound, bound);
                ++report.saturated;
            }
            if (std::fabs(rho_xz) >= bound) {
                rho_xz = std::clamp(rho_xz, -bound, bound);
                ++report.saturated;
            }
            diffs.push_back(fisher_z(rho_xy) - fisher_z(rho_xz));
        }
        report.per_repeat.push_back(paired_t(diffs));
    }

    report.mean = report.sd = report.t = report.p = 0.0;
    report.n = 0;
    for (const TTest& t : report.per_repeat) {
        report.mean += t.mean;
        report.sd += t.sd;
        report.t += t.t;
        report.p += t.p;
        report.n += t.n;
    }
    const double r = static_cast<double>(repeats);
    report.mean /= r;
    report.sd /= r;
    report.t /= r;
    report.p /= r;
    report.n = static_cast<int>(report.n / repeats);
    return report;
}

std::vector<ProfileBucket> cosine_rank_profile(const critic::Nets& nets,
                                               std::span<const Transition> data,
                                               std::vector<int> ks) {
    std::sort(ks.begin(), ks.end());
    std::vector<ProfileBucket> buckets;
    for (int k : ks) buckets.push_back({k, 0.0, 0});
    for (const Transition& tr : data) {
        Vec p;
        int rank = 0;
        double cosine = 0.0;
        try {
            p = policy::mu(tr.state, nets.emb, nets.enc, nets.proj);
            rank = policy::rank_of_item(p, nets.emb, tr.target);
            const latent::NormView pv = latent::normalize(p);
            const latent::NormView ev = latent::normalize(nets.emb.row(tr.target));
            cosine = linalg::dot(pv.direction, ev.direction);
        } catch (const ValidationError&) {
            continue;
        }
        for (ProfileBucket& b : buckets) {
            if (rank <= b.k) {
                b.mean_cosine += cosine;
                ++b.count;
            }
        }
    }
    for (ProfileBucket& b : buckets)
        if (b.count > 0) b.mean_cosine /= static_cast<double>(b.count);
    return buckets;
}

}  // namespace ecoc::hypotest
