#include "sarfah/speckle.hpp"

#include <cmath>
#include <stdexcept>

#include "sarfah/rng.hpp"
#include "sarfah/wavelet.hpp"

namespace sarfah {

namespace {

void check_gamma(const GammaParams& p) {
    if (!(p.shape_a > 0.0) || !(p.scale_b > 0.0))
        throw std::invalid_argument("GammaParams: shape and scale must be positive");
}

void check_ggd(const GGDParams& p) {
    if (!(p.alpha > 0.0) || !(p.beta > 0.0))
        throw std::invalid_argument("GGDParams: alpha and beta must be positive");
}

}  // namespace

Image speckle_field(int64_t h, int64_t w, LooksCount looks, uint64_t seed) {
    if (!(looks.L > 0.0)) throw std::invalid_argument("speckle: looks must be positive");
    Image field(h, w);
    const double shape = looks.L;
    const double scale = 1.0 / looks.L;
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int64_t i = 0; i < h * w; ++i) {
        Rng rng(mix_seed(seed, static_cast<uint64_t>(i)));
        field.px[i] = rng.gamma(shape, scale);
    }
    return field;
}

Image synthesize_speckle(const Image& clean, LooksCount looks, uint64_t seed) {
    for (double v : clean.px)
        if (!std::isfinite(v))
            throw std::invalid_argument("synthesize_speckle: non-finite input pixel");
    for (double v : clean.px)
        if (v < 0.0) throw std::invalid_argument("synthesize_speckle: negative input pixel");
    Image out = speckle_field(clean.h, clean.w, looks, seed);
    for (int64_t i = 0; i < out.size(); ++i) out.px[i] *= clean.px[i];
    return out;
}

double gamma_pdf(double x, const GammaParams& p) {
    check_gamma(p);
    if (x < 0.0) return 0.0;
    const double a = p.shape_a, b = p.scale_b;
    if (x == 0.0) {
        if (a > 1.0) return 0.0;
        if (a == 1.0) return 1.0 / b;
        return INFINITY;  // pdf diverges at 0 for a < 1
    }
    const double logp = -a * std::log(b) + (a - 1.0) * std::log(x) - x / b - std::lgamma(a);
    return std::exp(logp);
}

double ggd_pdf(double x, const GGDParams& p) {
    check_ggd(p);
    const double ax = std::fabs(x) / p.alpha;
    const double lognorm = std::log(p.beta) - std::log(2.0 * p.alpha) - std::lgamma(1.0 / p.beta);
    return std::exp(lognorm - std::pow(ax, p.beta));
}

GammaParams fit_gamma(std::span<const double> samples) {
    if (samples.size() < 2) throw std::invalid_argument("fit_gamma: need at least 2 samples");
    double mean = 0.0;
    for (double v : samples) {
        if (v < 0.0) throw std::invalid_argument("fit_gamma: negative sample");
        mean += v;
    }
    mean /= static_cast<double>(samples.size());
    double var = 0.0;
    for (double v : samples) var += (v - mean) * (v - mean);
    var /= static_cast<double>(samples.size() - 1);
    if (!(var > 0.0)) throw std::invalid_argument("fit_gamma: degenerate fit (zero variance)");
    return GammaParams{mean * mean / var, var / mean};
}

namespace {

// Γ(1/β)Γ(3/β)/Γ(2/β)^2, the GGD moment ratio E|x|^2 / (E|x|)^2
double ggd_moment_ratio(double beta) {
    return std::exp(std::lgamma(1.0 / beta) + std::lgamma(3.0 / beta) -
                    2.0 * std::lgamma(2.0 / beta));
}

}  // namespace

GGDParams fit_ggd(std::span<const double> samples) {
    if (samples.size() < 2) throw std::invalid_argument("fit_ggd: need at least 2 samples");
    double m1 = 0.0, m2 = 0.0;
    for (double v : samples) {
        m1 += std::fabs(v);
        m2 += v * v;
    }
    m1 /= static_cast<double>(samples.size());
    m2 /= static_cast<double>(samples.size());
    if (!(m1 > 0.0)) throw std::invalid_argument("fit_ggd: all samples are zero");
    const double ratio = m2 / (m1 * m1);

    double lo = 0.1, hi = 10.0;
    // ggd_moment_ratio is strictly decreasing on [0.1, 10]
    if (ratio > ggd_moment_ratio(lo) || ratio < ggd_moment_ratio(hi))
        throw std::invalid_argument("fit_ggd: moment ratio outside achievable range");
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (ggd_moment_ratio(mid) > ratio)
            lo = mid;
        else
            hi = mid;
    }
    const double beta = 0.5 * (lo + hi);
    const double alpha =
        m1 * std::exp(std::lgamma(1.0 / beta) - std::lgamma(2.0 / beta));
    return GGDParams{alpha, beta};
}

namespace {

struct Moments {
    double mean = 0.0, var = 0.0, skew = 0.0;
};

Moments sample_moments(const std::vector<double>& v) {
    Moments m;
    const double n = static_cast<double>(v.size());
    for (double x : v) m.mean += x;
    m.mean /= n;
    double m2 = 0.0, m3 = 0.0;
    for (double x : v) {
        const double d = x - m.mean;
        m2 += d * d;
        m3 += d * d * d;
    }
    m2 /= n;
    m3 /= n;
    m.var = m2 * n / (n - 1.0);
    m.skew = m3 / std::pow(m2, 1.5);
    return m;
}

}  // namespace

Theorem1Report verify_theorem1(const GammaParams& p, int level_j, int64_t field_size,
                               uint64_t seed, const Theorem1Options& opt) {
    check_gamma(p);
    if (level_j < 1) throw std::invalid_argument("verify_theorem1: level must be positive");
    if (field_size < 2 || (field_size & (field_size - 1)) != 0)
        throw std::invalid_argument("verify_theorem1: field size must be a power of two");
    int64_t J = 0;
    while ((int64_t(1) << J) < field_size) ++J;
    if (J < level_j) throw std::invalid_argument("verify_theorem1: field too small for level");

    const int64_t coeffs_per_field = (field_size >> level_j) * (field_size >> level_j);
    const int64_t replicates = std::max<int64_t>(1, (opt.min_samples + coeffs_per_field - 1) /
                                                        coeffs_per_field);

    std::vector<double> ll, lh, hl, hh;
    ll.reserve(replicates * coeffs_per_field);
    lh.reserve(replicates * coeffs_per_field);
    hl.reserve(replicates * coeffs_per_field);
    hh.reserve(replicates * coeffs_per_field);

    for (int64_t r = 0; r < replicates; ++r) {
        Image field(field_size, field_size);
        const uint64_t rseed = mix_seed(seed, static_cast<uint64_t>(r));
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (int64_t i = 0; i < field.size(); ++i) {
            Rng rng(mix_seed(rseed, static_cast<uint64_t>(i)));
            field.px[i] = rng.gamma(p.shape_a, p.scale_b);
        }
        CascadeResult cas = dwt2_cascade(field, level_j);
        const SubBands& top = cas.levels.back();
        ll.insert(ll.end(), top.ll.px.begin(), top.ll.px.end());
        lh.insert(lh.end(), top.lh.px.begin(), top.lh.px.end());
        hl.insert(hl.end(), top.hl.px.begin(), top.hl.px.end());
        hh.insert(hh.end(), top.hh.px.begin(), top.hh.px.end());
    }

    // GM(2^{2j} a, 2^{-j} b): mean 2^j a b, variance a b^2
    const double pred_mean = std::ldexp(p.shape_a * p.scale_b, level_j);
    const double pred_var = p.shape_a * p.scale_b * p.scale_b;

    Theorem1Report rep;
    rep.level_j = level_j;
    Moments mll = sample_moments(ll);
    rep.ll_mean = mll.mean;
    rep.ll_var = mll.var;
    rep.ll_moment_error = std::max(std::fabs(mll.mean - pred_mean) / pred_mean,
                                   std::fabs(mll.var - pred_var) / pred_var);
    rep.hf_skewness[0] = sample_moments(lh).skew;
    rep.hf_skewness[1] = sample_moments(hl).skew;
    rep.hf_skewness[2] = sample_moments(hh).skew;
    double max_skew = 0.0;
    for (double s : rep.hf_skewness) max_skew = std::max(max_skew, std::fabs(s));
    rep.pass = rep.ll_moment_error < opt.moment_tol && max_skew < opt.skew_tol;
    return rep;
}

}  // namespace sarfah
