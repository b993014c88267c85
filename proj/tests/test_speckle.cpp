#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "sarfah/rng.hpp"
#include "sarfah/speckle.hpp"

using namespace sarfah;

namespace {
// composite Simpson quadrature oracle, independent of any pdf implementation
template <typename F>
double simpson(F f, double a, double b, int n) {
    if (n % 2) ++n;
    const double h = (b - a) / n;
    double acc = f(a) + f(b);
    for (int i = 1; i < n; ++i) acc += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return acc * h / 3.0;
}

std::vector<double> gamma_draws(double shape, double scale, size_t n, uint64_t seed) {
    std::vector<double> v(n);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int64_t i = 0; i < static_cast<int64_t>(n); ++i) {
        Rng rng(mix_seed(seed, static_cast<uint64_t>(i)));
        v[i] = rng.gamma(shape, scale);
    }
    return v;
}
}  // namespace

TEST_CASE("speckle on an all-zero image stays zero") {
    Image zeros(16, 16, 0.0);
    Image out = synthesize_speckle(zeros, {1.0}, 42);
    for (double v : out.px) CHECK(v == 0.0);
}

TEST_CASE("speckle field is unit-mean with variance 1/L") {
    // 10^6 draws; tolerances from the spec'd Monte-Carlo bands
    Image s1 = speckle_field(1000, 1000, {1.0}, 7);
    double mean = 0.0;
    for (double v : s1.px) mean += v;
    mean /= s1.size();
    CHECK(std::fabs(mean - 1.0) < 0.005);

    Image s4 = speckle_field(1000, 1000, {4.0}, 8);
    double m4 = 0.0;
    for (double v : s4.px) m4 += v;
    m4 /= s4.size();
    double var4 = 0.0;
    for (double v : s4.px) var4 += (v - m4) * (v - m4);
    var4 /= (s4.size() - 1);
    CHECK(std::fabs(var4 - 0.25) < 0.01);
}

TEST_CASE("sampler law holds for several looks (3-sigma bands)") {
    for (double L : {1.0, 4.0, 10.0}) {
        Image s = speckle_field(512, 512, {L}, static_cast<uint64_t>(L * 1000));
        const double n = static_cast<double>(s.size());
        double mean = 0.0;
        for (double v : s.px) mean += v;
        mean /= n;
        double var = 0.0;
        for (double v : s.px) var += (v - mean) * (v - mean);
        var /= (n - 1.0);
        CHECK(std::fabs(mean - 1.0) < 3.0 * std::sqrt(1.0 / L / n));
        // var of sample variance of Gamma ~ (2/(n-1) + kurtosis/n) * var^2
        const double kurt = 6.0 / L;
        const double sd_var = (1.0 / L) * std::sqrt(2.0 / (n - 1.0) + kurt / n);
        CHECK(std::fabs(var - 1.0 / L) < 3.0 * sd_var);
    }
}

TEST_CASE("speckle is deterministic per seed and rejects bad input") {
    Image img(8, 8, 100.0);
    Image a = synthesize_speckle(img, {2.0}, 5);
    Image b = synthesize_speckle(img, {2.0}, 5);
    for (int64_t i = 0; i < a.size(); ++i) CHECK(a.px[i] == b.px[i]);
    Image c = synthesize_speckle(img, {2.0}, 6);
    bool differs = false;
    for (int64_t i = 0; i < a.size(); ++i) differs |= a.px[i] != c.px[i];
    CHECK(differs);

    Image bad(2, 2, 1.0);
    bad.px[3] = std::nan("");
    CHECK_THROWS_AS(synthesize_speckle(bad, {1.0}, 0), std::invalid_argument);
    CHECK_THROWS_AS(speckle_field(4, 4, {0.0}, 0), std::invalid_argument);
}

TEST_CASE("gamma_pdf: indicator, exponential reduction, quadrature normalization") {
    GammaParams p{4.0, 0.5};
    CHECK(gamma_pdf(-0.5, p) == 0.0);
    CHECK(gamma_pdf(0.0, GammaParams{1.0, 1.0}) == doctest::Approx(1.0));

    const double integral = simpson([&](double x) { return gamma_pdf(x, p); }, 0.0, 40.0, 400000);
    CHECK(std::fabs(integral - 1.0) < 1e-6);

    CHECK_THROWS_AS(gamma_pdf(1.0, GammaParams{-1.0, 1.0}), std::invalid_argument);
}

TEST_CASE("ggd_pdf: symmetry, Gaussian shape at beta=2, quadrature normalization") {
    GGDParams p{1.3, 1.7};
    for (double x : {0.1, 0.5, 1.0, 2.7}) CHECK(ggd_pdf(x, p) == doctest::Approx(ggd_pdf(-x, p)));

    GGDParams g{2.0, 2.0};
    for (double x : {0.3, 1.0, 2.2}) {
        const double ratio = ggd_pdf(x, g) / ggd_pdf(0.0, g);
        CHECK(ratio == doctest::Approx(std::exp(-(x / g.alpha) * (x / g.alpha))).epsilon(1e-12));
    }

    // realistic magnitude pair from a fitted high-frequency histogram
    GGDParams hf{122.89, 1.10};
    const double integral = simpson([&](double x) { return ggd_pdf(x, hf); }, -50.0 * hf.alpha,
                                    50.0 * hf.alpha, 2000000);
    CHECK(std::fabs(integral - 1.0) < 1e-6);
}

TEST_CASE("fit_gamma: recovery, moment identity, degenerate errors") {
    auto s = gamma_draws(4.0, 0.5, 1000000, 99);
    GammaParams p = fit_gamma(s);
    CHECK(p.shape_a > 3.8);
    CHECK(p.shape_a < 4.2);
    CHECK(p.scale_b > 0.475);
    CHECK(p.scale_b < 0.525);

    double mean = 0.0;
    for (double v : s) mean += v;
    mean /= s.size();
    CHECK(p.shape_a * p.scale_b == doctest::Approx(mean).epsilon(1e-12));

    std::vector<double> flat(10, 3.0);
    CHECK_THROWS_AS(fit_gamma(flat), std::invalid_argument);
    std::vector<double> neg{1.0, -2.0, 3.0};
    CHECK_THROWS_AS(fit_gamma(neg), std::invalid_argument);
    std::vector<double> one{1.0};
    CHECK_THROWS_AS(fit_gamma(one), std::invalid_argument);
}

TEST_CASE("fit_gamma is consistent as draws grow") {
    auto coarse = gamma_draws(2.0, 1.5, 10000, 11);
    auto fine = gamma_draws(2.0, 1.5, 1000000, 12);
    GammaParams pc = fit_gamma(coarse);
    GammaParams pf = fit_gamma(fine);
    CHECK(std::fabs(pf.shape_a - 2.0) < std::fabs(pc.shape_a - 2.0) + 0.02);
    CHECK(std::fabs(pf.shape_a - 2.0) < 0.02);
    CHECK(std::fabs(pf.scale_b - 1.5) < 0.02);
}

TEST_CASE("fit_ggd: Laplace gives beta=1, Gaussian gives beta=2") {
    const size_t n = 1000000;
    std::vector<double> lap(n), gau(n);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int64_t i = 0; i < static_cast<int64_t>(n); ++i) {
        Rng rng(mix_seed(1234, static_cast<uint64_t>(i)));
        const double u = rng.uniform() - 0.5;
        lap[i] = -2.0 * std::copysign(std::log1p(-2.0 * std::fabs(u)), u);  // Laplace(scale 2)
        gau[i] = rng.normal() * 3.0;
    }
    GGDParams pl = fit_ggd(lap);
    CHECK(pl.beta > 0.95);
    CHECK(pl.beta < 1.05);
    GGDParams pg = fit_ggd(gau);
    CHECK(pg.beta > 1.9);
    CHECK(pg.beta < 2.1);

    std::vector<double> zeros(16, 0.0);
    CHECK_THROWS_AS(fit_ggd(zeros), std::invalid_argument);
}

TEST_CASE("verify_theorem1: LL follows the predicted Gamma law, HF bands are symmetric") {
    Theorem1Options fast;
    fast.min_samples = 250000;

    Theorem1Report r1 = verify_theorem1({1.0, 1.0}, 1, 1024, 2024, fast);
    CHECK(r1.ll_mean == doctest::Approx(2.0).epsilon(0.02));
    CHECK(r1.ll_var == doctest::Approx(1.0).epsilon(0.02));
    CHECK(std::fabs(r1.hf_skewness[2]) < 0.02);
    CHECK(r1.pass);

    Theorem1Report r2 = verify_theorem1({1.0, 1.0}, 2, 1024, 2025, fast);
    CHECK(r2.ll_mean == doctest::Approx(4.0).epsilon(0.02));
    CHECK(r2.pass);

    CHECK_THROWS_AS(verify_theorem1({1.0, 1.0}, 1, 1000, 0), std::invalid_argument);
    CHECK_THROWS_AS(verify_theorem1({1.0, 1.0}, 6, 16, 0), std::invalid_argument);
}
