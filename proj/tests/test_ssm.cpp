#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "fd_check.hpp"
#include "sarfah/reference.hpp"
#include "sarfah/ssm.hpp"

using namespace sarfah;
using sarfah::testing::fd_max_rel_err;
using sarfah::testing::weighted_loss;

namespace {
template <typename F>
double simpson(F f, double a, double b, int n) {
    if (n % 2) ++n;
    const double h = (b - a) / n;
    double acc = f(a) + f(b);
    for (int i = 1; i < n; ++i) acc += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return acc * h / 3.0;
}

Tensor rot180(const Tensor& x) {
    const Shape& s = x.shape();
    Tensor out = Tensor::zeros(s);
    for (int64_t n = 0; n < s[0]; ++n)
        for (int64_t c = 0; c < s[1]; ++c)
            for (int64_t y = 0; y < s[2]; ++y)
                for (int64_t xx = 0; xx < s[3]; ++xx)
                    out.at4(n, c, y, xx) = x.at4(n, c, s[2] - 1 - y, s[3] - 1 - xx);
    return out;
}

// independent reference: per-direction naive selective scan over the feature map
Tensor ref_ss2d(const Tensor& x, const std::array<Ss2dDirectionParams, 4>& dirs) {
    const Shape& s = x.shape();
    const int64_t N = s[0], C = s[1], H = s[2], W = s[3], S = H * W;
    Tensor out = Tensor::zeros(s);
    for (int64_t n = 0; n < N; ++n)
        for (int dir = 0; dir < 4; ++dir) {
            const auto& P = dirs[dir];
            const int64_t L = P.a.shape()[1];
            std::vector<double> h(C * L, 0.0);
            for (int64_t st = 0; st < S; ++st) {
                int64_t pos;
                switch (dir) {
                    case 0: pos = st; break;
                    case 1: pos = S - 1 - st; break;
                    case 2: pos = (st % H) * W + (st / H); break;
                    default: {
                        const int64_t r = S - 1 - st;
                        pos = (r % H) * W + (r / H);
                    }
                }
                std::vector<double> tok(C);
                for (int64_t j = 0; j < C; ++j) tok[j] = x.data()[(n * C + j) * S + pos];
                std::vector<double> B(L), Cc(L);
                for (int64_t l = 0; l < L; ++l) {
                    B[l] = P.b_b.data()[l];
                    Cc[l] = P.b_c.data()[l];
                    for (int64_t j = 0; j < C; ++j) {
                        B[l] += P.w_b.data()[l * C + j] * tok[j];
                        Cc[l] += P.w_c.data()[l * C + j] * tok[j];
                    }
                }
                for (int64_t c = 0; c < C; ++c) {
                    double pre = P.b_dt.data()[c];
                    for (int64_t j = 0; j < C; ++j) pre += P.w_dt.data()[c * C + j] * tok[j];
                    const double dt = std::log1p(std::exp(pre));
                    std::vector<double> adiag(L);
                    for (int64_t l = 0; l < L; ++l) adiag[l] = P.a.data()[c * L + l];
                    ZohResult z = zoh_discretize(adiag, B, dt);
                    double y = P.d.data()[c] * tok[c];
                    for (int64_t l = 0; l < L; ++l) {
                        h[c * L + l] = z.a_bar[l] * h[c * L + l] + z.b_bar[l] * tok[c];
                        y += Cc[l] * h[c * L + l];
                    }
                    out.data()[(n * C + c) * S + pos] += y;
                }
            }
        }
    return out;
}
}  // namespace

TEST_CASE("zoh_discretize: limits and closed forms") {
    // A = 0: A_bar = 1, B_bar = delta * B (L'Hopital limit)
    std::vector<double> a{0.0}, b{3.0};
    ZohResult r = zoh_discretize(a, b, 0.25);
    CHECK(r.a_bar[0] == doctest::Approx(1.0));
    CHECK(r.b_bar[0] == doctest::Approx(0.75));

    // A = -1, delta = ln 2: A_bar = 1/2
    std::vector<double> a2{-1.0}, b2{1.0};
    ZohResult r2 = zoh_discretize(a2, b2, std::log(2.0));
    CHECK(r2.a_bar[0] == doctest::Approx(0.5).epsilon(1e-14));

    CHECK_THROWS_AS(zoh_discretize(a, b, 0.0), std::invalid_argument);
}

TEST_CASE("zoh B_bar matches the quadrature oracle for random diagonal A") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const double av = -4.0 * rng.uniform() - 0.01;
        const double bv = 2.0 * rng.normal();
        const double delta = 0.01 + rng.uniform();
        std::vector<double> a{av}, b{bv};
        ZohResult r = zoh_discretize(a, b, delta);
        const double oracle =
            simpson([&](double s) { return std::exp(s * av) * bv; }, 0.0, delta, 20000);
        CHECK(std::fabs(r.b_bar[0] - oracle) < 1e-9);
    }
}

TEST_CASE("phi1 limit branch agrees with the direct formula at |z| = 1e-6") {
    for (double z : {1e-6, -1e-6})
        CHECK(std::fabs(zoh_phi1_direct(z) - zoh_phi1_series(z)) < 1e-8);
}

TEST_CASE("ssm_scan: memoryless when A_bar = 0") {
    DiscreteSSM p{{0.0, 0.0}, {0.5, 0.25}, {2.0, 4.0}, 1.5};
    std::vector<double> x{1.0, -2.0, 3.0};
    auto y = ssm_scan(x, p);
    // y_s = (C . B_bar + D) x_s = (1 + 1 + 1.5) x_s
    for (size_t s = 0; s < x.size(); ++s) CHECK(y[s] == doctest::Approx(3.5 * x[s]));
}

TEST_CASE("ssm_scan: impulse response is geometric") {
    DiscreteSSM p{{0.8}, {0.5}, {2.0}, 0.25};
    std::vector<double> x{1.0, 0.0, 0.0, 0.0, 0.0};
    auto y = ssm_scan(x, p);
    CHECK(y[0] == doctest::Approx(2.0 * 0.5 + 0.25));
    for (size_t s = 1; s < x.size(); ++s)
        CHECK(y[s] == doctest::Approx(2.0 * std::pow(0.8, s) * 0.5));
}

TEST_CASE("ssm_scan equals the naive reference loop on random parameters") {
    Rng rng(77);
    for (int trial = 0; trial < 20; ++trial) {
        const size_t L = 1 + static_cast<size_t>(rng.uniform() * 6);
        const size_t S = 2 + static_cast<size_t>(rng.uniform() * 40);
        DiscreteSSM p;
        for (size_t l = 0; l < L; ++l) {
            p.a_bar.push_back(rng.uniform() * 1.6 - 0.8);
            p.b_bar.push_back(rng.normal());
            p.c.push_back(rng.normal());
        }
        p.d = rng.normal();
        std::vector<double> x(S);
        for (auto& v : x) v = rng.normal();
        auto got = ssm_scan(x, p);
        auto want = reference::ssm_scan(x, p.a_bar, p.b_bar, p.c, p.d);
        for (size_t s = 0; s < S; ++s) CHECK(std::fabs(got[s] - want[s]) < 1e-10);
    }
}

TEST_CASE("ssm_scan is linear in the input sequence") {
    Rng rng(88);
    SSMParams p{{-1.0, -2.0, -0.5}, {0.3, 0.6, -0.2}, {1.0, -1.0, 0.4}, 0.7, 0.3};
    std::vector<double> x1(30), x2(30), mix(30);
    for (size_t i = 0; i < 30; ++i) {
        x1[i] = rng.normal();
        x2[i] = rng.normal();
        mix[i] = 2.0 * x1[i] - 0.5 * x2[i];
    }
    auto y1 = ssm_scan(x1, p);
    auto y2 = ssm_scan(x2, p);
    auto ym = ssm_scan(mix, p);
    for (size_t i = 0; i < 30; ++i)
        CHECK(ym[i] == doctest::Approx(2.0 * y1[i] - 0.5 * y2[i]).epsilon(1e-10));
}

TEST_CASE("ss2d: zeroed projections with unit skip act as identity x4") {
    ParamTree pt;
    Rng rng(9);
    Ss2d layer(pt, "ss2d", 3, 4, rng);
    for (auto& d : layer.dirs()) {
        std::fill(d.w_b.data().begin(), d.w_b.data().end(), 0.0);
        std::fill(d.w_c.data().begin(), d.w_c.data().end(), 0.0);
    }
    Tensor x = Tensor::randn({2, 3, 4, 5}, rng);
    Tensor y = layer.forward(x);
    for (int64_t i = 0; i < x.numel(); ++i)
        CHECK(y.data()[i] == doctest::Approx(4.0 * x.data()[i]).epsilon(1e-12));
}

TEST_CASE("ss2d on a 1x1 map is the sum of four single-step scans") {
    ParamTree pt;
    Rng rng(19);
    Ss2d layer(pt, "ss2d", 2, 3, rng);
    for (auto& d : layer.dirs())
        for (auto& v : d.w_dt.data()) v = rng.normal() * 0.2;
    Tensor x = Tensor::randn({1, 2, 1, 1}, rng);
    Tensor got = layer.forward(x);
    Tensor want = ref_ss2d(x, layer.dirs());
    for (int64_t i = 0; i < got.numel(); ++i)
        CHECK(got.data()[i] == doctest::Approx(want.data()[i]).epsilon(1e-12));
}

TEST_CASE("ss2d equals four independent 1D oracle scans recombined") {
    ParamTree pt;
    Rng rng(29);
    Ss2d layer(pt, "ss2d", 3, 4, rng);
    for (auto& d : layer.dirs())
        for (auto& v : d.w_dt.data()) v = rng.normal() * 0.3;
    Tensor x = Tensor::randn({2, 3, 4, 4}, rng);
    Tensor got = layer.forward(x);
    Tensor want = ref_ss2d(x, layer.dirs());
    double m = 0.0;
    for (int64_t i = 0; i < got.numel(); ++i)
        m = std::max(m, std::fabs(got.data()[i] - want.data()[i]));
    CHECK(m < 1e-10);
}

TEST_CASE("ss2d with tied directions is 180-degree rotation equivariant") {
    ParamTree pt;
    Rng rng(39);
    Ss2d layer(pt, "ss2d", 2, 3, rng, /*tied=*/true);
    for (auto& v : layer.dirs()[0].w_dt.data()) v = rng.normal() * 0.3;
    Tensor x = Tensor::randn({1, 2, 3, 5}, rng);
    Tensor a = layer.forward(rot180(x));
    Tensor b = rot180(layer.forward(x));
    for (int64_t i = 0; i < a.numel(); ++i)
        CHECK(a.data()[i] == doctest::Approx(b.data()[i]).epsilon(1e-12));
}

TEST_CASE("ss2d gradients (input and every parameter) match finite differences") {
    ParamTree pt;
    Rng rng(49);
    Ss2d layer(pt, "ss2d", 3, 2, rng);
    for (auto& d : layer.dirs())
        for (auto& v : d.w_dt.data()) v = rng.normal() * 0.2;
    Tensor x = Tensor::randn({1, 3, 3, 4}, rng);
    std::vector<Tensor> checked{x};
    for (auto& d : layer.dirs())
        for (Tensor* t : {&d.a, &d.w_b, &d.b_b, &d.w_c, &d.b_c, &d.w_dt, &d.b_dt, &d.d})
            checked.push_back(*t);
    CHECK(fd_max_rel_err(checked, [&] { return weighted_loss(layer.forward(x), 50); }, 1e-5) <
          1e-4);
}

TEST_CASE("ss2d gradients with tied directions accumulate correctly") {
    ParamTree pt;
    Rng rng(59);
    Ss2d layer(pt, "ss2d", 2, 2, rng, /*tied=*/true);
    Tensor x = Tensor::randn({1, 2, 2, 3}, rng);
    auto& d = layer.dirs()[0];
    std::vector<Tensor> checked{x, d.a, d.w_b, d.w_c, d.w_dt, d.d};
    CHECK(fd_max_rel_err(checked, [&] { return weighted_loss(layer.forward(x), 60); }, 1e-5) <
          1e-4);
}

TEST_CASE("vss block: shape preservation and the zero-init probe") {
    ParamTree pt;
    Rng rng(69);
    VssOptions opt;
    opt.state_dim = 2;
    opt.pos_h = 4;
    opt.pos_w = 4;
    opt.zero_init_probe = true;
    VssBlock block(pt, "vss", 4, rng, opt);
    Tensor x = Tensor::randn({2, 4, 4, 4}, rng);
    Tensor y = block.forward(x);
    CHECK(y.shape() == x.shape());
    Tensor fm = block.normalized_input(x);
    for (int64_t i = 0; i < y.numel(); ++i)
        CHECK(y.data()[i] == doctest::Approx(fm.data()[i]).epsilon(1e-12));

    // different spatial size exercises the pos-embed interpolation path
    Tensor x2 = Tensor::randn({1, 4, 6, 8}, rng);
    CHECK(block.forward(x2).shape() == x2.shape());
}

TEST_CASE("vss block gradient passes finite differences") {
    ParamTree pt;
    Rng rng(79);
    VssOptions opt;
    opt.state_dim = 2;
    opt.pos_h = 3;
    opt.pos_w = 3;
    VssBlock block(pt, "vss", 3, rng, opt);
    Tensor x = Tensor::randn({1, 3, 3, 3}, rng);
    std::vector<Tensor> checked{x};
    pt.for_each_trainable([&](const std::string&, Tensor& t) { checked.push_back(t); });
    CHECK(fd_max_rel_err(checked, [&] { return weighted_loss(block.forward(x), 80); }, 1e-5,
                         /*max_per_tensor=*/24) < 1e-4);
}
