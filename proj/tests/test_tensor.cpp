#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fd_check.hpp"
#include "sarfah/layers.hpp"
#include "sarfah/reference.hpp"
#include "sarfah/rng.hpp"
#include "sarfah/tensor.hpp"

using namespace sarfah;
using sarfah::testing::fd_max_rel_err;
using sarfah::testing::weighted_loss;

namespace {
Tensor randn(Shape s, uint64_t seed, double stddev = 1.0) {
    Rng rng(seed);
    return Tensor::randn(std::move(s), rng, stddev);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.shape() == b.shape());
    double m = 0.0;
    auto da = a.data();
    auto db = b.data();
    for (size_t i = 0; i < da.size(); ++i) m = std::max(m, std::fabs(da[i] - db[i]));
    return m;
}
}  // namespace

TEST_CASE("scalar autodiff: d(x^2)/dx at 3 is 6") {
    Tensor x = Tensor::from_data({1}, {3.0});
    x.set_requires_grad(true);
    Tensor loss = sum(mul(x, x));
    backward(loss);
    CHECK(std::fabs(x.grad()[0] - 6.0) < 1e-10);
}

TEST_CASE("gradient accumulates across fan-out") {
    Tensor x = Tensor::from_data({1}, {2.0});
    x.set_requires_grad(true);
    Tensor y = add(mul(x, x), x);  // x^2 + x, dy/dx = 2x + 1 = 5
    backward(sum(y));
    CHECK(std::fabs(x.grad()[0] - 5.0) < 1e-12);
}

TEST_CASE("elementwise and activation gradients match finite differences") {
    Tensor x = randn({2, 3, 4, 4}, 11);
    // keep clear of the relu/abs kinks
    for (auto& v : x.data())
        if (std::fabs(v) < 0.05) v += 0.1;
    Tensor y = randn({2, 3, 4, 4}, 12);

    auto check = [&](const char* name, std::function<Tensor()> loss) {
        INFO(name);
        CHECK(fd_max_rel_err({x, y}, loss) < 1e-4);
    };
    check("add", [&] { return weighted_loss(add(x, y), 1); });
    check("sub", [&] { return weighted_loss(sub(x, y), 2); });
    check("mul", [&] { return weighted_loss(mul(x, y), 3); });
    check("relu", [&] { return weighted_loss(relu(x), 4); });
    check("sigmoid", [&] { return weighted_loss(sigmoid(x), 5); });
    check("silu", [&] { return weighted_loss(silu(x), 6); });
    check("gelu", [&] { return weighted_loss(gelu(x), 7); });
    check("abs", [&] { return weighted_loss(abs_val(x), 8); });
    check("mean", [&] { return mean(mul(x, y)); });
    check("scalar ops", [&] { return weighted_loss(add_scalar(mul_scalar(x, 1.7), 0.3), 9); });
}

TEST_CASE("softmax of uniform logits is uniform; gradient checks out") {
    Tensor u = Tensor::full({2, 5}, 1.25);
    Tensor s = softmax_lastdim(u);
    for (double v : s.data()) CHECK(v == doctest::Approx(0.2).epsilon(1e-12));

    Tensor x = randn({3, 6}, 21);
    CHECK(fd_max_rel_err({x}, [&] { return weighted_loss(softmax_lastdim(x), 22); }) < 1e-4);
}

TEST_CASE("concat/slice/reshape plumbing") {
    Tensor a = randn({2, 3, 4, 4}, 31);
    Tensor b = randn({2, 2, 4, 4}, 32);
    Tensor cat = concat_channels({a, b});
    CHECK(cat.shape() == Shape({2, 5, 4, 4}));
    CHECK(max_abs_diff(slice_channels(cat, 0, 3), a) == 0.0);
    CHECK(max_abs_diff(slice_channels(cat, 3, 5), b) == 0.0);

    CHECK(fd_max_rel_err({a, b}, [&] {
              Tensor c = concat_channels({a, b});
              return weighted_loss(slice_channels(c, 1, 4), 33);
          }) < 1e-4);

    Tensor r = reshape(a, {2, 48});
    CHECK(r.shape() == Shape({2, 48}));
    CHECK(fd_max_rel_err({a}, [&] { return weighted_loss(reshape(a, {6, 16}), 34); }) < 1e-4);

    CHECK(fd_max_rel_err({a, b}, [&] {
              Tensor c = concat_batch({slice_batch(a, 0, 1), slice_batch(a, 1, 2)});
              return weighted_loss(mul(c, a), 35);
          }) < 1e-4);

    Tensor s = randn({4}, 36);
    CHECK(fd_max_rel_err({a, s}, [&] {
              return weighted_loss(scale_by_scalar_tensor(a, slice_element(s, 2)), 37);
          }) < 1e-4);
}

TEST_CASE("conv2d: identity kernel and counting example") {
    Tensor x = randn({1, 1, 5, 5}, 41);
    Tensor w = Tensor::from_data({1, 1, 1, 1}, {1.0});
    Tensor out = conv2d(x, w, Tensor());
    CHECK(max_abs_diff(out, x) == 0.0);

    Tensor ones = Tensor::full({1, 1, 5, 5}, 1.0);
    Tensor k3 = Tensor::full({1, 1, 3, 3}, 1.0);
    Tensor y = conv2d(ones, k3, Tensor(), 1, 1);
    CHECK(y.at4(0, 0, 2, 2) == doctest::Approx(9.0));
    CHECK(y.at4(0, 0, 0, 0) == doctest::Approx(4.0));
}

TEST_CASE("conv2d matches the direct loop oracle") {
    Rng rng(52);
    for (int trial = 0; trial < 8; ++trial) {
        const int stride = 1 + (trial % 2);
        const int pad = trial % 3;
        const int groups = (trial % 4 == 3) ? 2 : 1;
        Tensor x = randn({2, 4, 9, 8}, 100 + trial);
        Tensor w = randn({6, 4 / groups, 3, 3}, 200 + trial);
        Tensor b = randn({6}, 300 + trial);
        Tensor got = conv2d(x, w, b, stride, pad, groups);
        Tensor want = reference::conv2d(x, w, b, stride, pad, groups);
        CHECK(max_abs_diff(got, want) < 1e-10);
    }
}

TEST_CASE("conv2d gradients match finite differences") {
    Tensor x = randn({2, 3, 6, 5}, 61);
    Tensor w = randn({4, 3, 3, 3}, 62, 0.5);
    Tensor b = randn({4}, 63);
    CHECK(fd_max_rel_err({x, w, b}, [&] { return weighted_loss(conv2d(x, w, b, 1, 1), 64); }) <
          1e-4);
    // strided + grouped
    Tensor xg = randn({1, 4, 6, 6}, 65);
    Tensor wg = randn({4, 2, 3, 3}, 66, 0.5);
    Tensor bg = randn({4}, 67);
    CHECK(fd_max_rel_err({xg, wg, bg}, [&] {
              return weighted_loss(conv2d(xg, wg, bg, 2, 1, 2), 68);
          }) < 1e-4);
    // depthwise
    Tensor xd = randn({2, 3, 5, 5}, 69);
    Tensor wd = randn({3, 1, 3, 3}, 70, 0.5);
    CHECK(fd_max_rel_err({xd, wd}, [&] {
              return weighted_loss(conv2d(xd, wd, Tensor(), 1, 1, 3), 71);
          }) < 1e-4);
}

TEST_CASE("conv2d rejects shape mismatches") {
    Tensor x = randn({1, 3, 5, 5}, 81);
    Tensor w = randn({2, 4, 3, 3}, 82);
    CHECK_THROWS_AS(conv2d(x, w, Tensor()), std::invalid_argument);
}

TEST_CASE("deformable conv with zero offsets equals conv2d") {
    Tensor x = randn({2, 3, 7, 6}, 91);
    Tensor w = randn({4, 3, 3, 3}, 92, 0.5);
    Tensor b = randn({4}, 93);
    Tensor off = Tensor::zeros({2, 18, 7, 6});
    Tensor got = deformable_conv2d(x, w, b, off);
    Tensor want = conv2d(x, w, b, 1, 1);
    CHECK(max_abs_diff(got, want) < 1e-12);
}

TEST_CASE("deformable conv with integer offsets equals conv of shifted image") {
    // whole sampling grid shifted by (1, 0): interior outputs equal the plain
    // convolution evaluated one row below
    Tensor x = randn({1, 2, 8, 8}, 101);
    Tensor w = randn({3, 2, 3, 3}, 102, 0.5);
    Tensor off = Tensor::zeros({1, 18, 8, 8});
    for (int t = 0; t < 9; ++t)
        for (int i = 0; i < 64; ++i) off.impl_->data[(2 * t) * 64 + i] = 1.0;
    Tensor got = deformable_conv2d(x, w, Tensor(), off);
    Tensor plain = conv2d(x, w, Tensor(), 1, 1);
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t y = 1; y < 6; ++y)
            for (int64_t xx = 1; xx < 7; ++xx)
                CHECK(got.at4(0, c, y, xx) == doctest::Approx(plain.at4(0, c, y + 1, xx)).epsilon(1e-12));
}

TEST_CASE("deformable conv: fractional offset on a linear ramp hits the bilinear midpoint") {
    // f(y, x) = x; a 1x1 kernel with dx = 0.5 must read x + 0.5 exactly
    Tensor x = Tensor::zeros({1, 1, 4, 6});
    for (int64_t y = 0; y < 4; ++y)
        for (int64_t xx = 0; xx < 6; ++xx) x.at4(0, 0, y, xx) = static_cast<double>(xx);
    Tensor w = Tensor::from_data({1, 1, 1, 1}, {1.0});
    Tensor off = Tensor::zeros({1, 2, 4, 6});
    for (int64_t i = 0; i < 24; ++i) off.impl_->data[24 + i] = 0.5;  // dx plane
    Tensor got = deformable_conv2d(x, w, Tensor(), off);
    CHECK(got.at4(0, 0, 2, 2) == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(got.at4(0, 0, 1, 4) == doctest::Approx(4.5).epsilon(1e-12));
}

TEST_CASE("deformable conv matches its loop oracle on random offsets") {
    for (int trial = 0; trial < 4; ++trial) {
        Tensor x = randn({1, 3, 6, 6}, 120 + trial);
        Tensor w = randn({2, 3, 3, 3}, 130 + trial, 0.5);
        Tensor b = randn({2}, 140 + trial);
        Tensor off = randn({1, 18, 6, 6}, 150 + trial, 1.5);
        Tensor got = deformable_conv2d(x, w, b, off);
        Tensor want = reference::deformable_conv2d(x, w, b, off);
        CHECK(max_abs_diff(got, want) < 1e-10);
    }
}

TEST_CASE("deformable conv gradients (input, weight, offsets) match finite differences") {
    Tensor x = randn({1, 2, 5, 5}, 161);
    Tensor w = randn({2, 2, 3, 3}, 162, 0.5);
    Tensor b = randn({2}, 163);
    Tensor off = randn({1, 18, 5, 5}, 164, 0.4);
    // keep sampling positions away from integer lattice kinks
    for (auto& v : off.impl_->data) {
        double frac = v - std::floor(v);
        if (frac < 0.05 || frac > 0.95) v += 0.2;
    }
    CHECK(fd_max_rel_err({x, w, b, off}, [&] {
              return weighted_loss(deformable_conv2d(x, w, b, off), 165);
          }) < 1e-4);
}

TEST_CASE("maxpool2d: example and oracle") {
    Tensor x = Tensor::from_data({1, 1, 2, 2}, {1.0, 2.0, 3.0, 4.0});
    CHECK(maxpool2d(x).item() == doctest::Approx(4.0));

    Tensor r = randn({2, 3, 8, 6}, 171);
    CHECK(max_abs_diff(maxpool2d(r), reference::maxpool2d(r)) == 0.0);

    CHECK(fd_max_rel_err({r}, [&] { return weighted_loss(maxpool2d(r), 172); }) < 1e-4);
}

TEST_CASE("batchnorm2d: train-mode normalization and both backward modes") {
    Tensor x = randn({4, 3, 5, 5}, 181, 2.0);
    Tensor gamma = Tensor::full({3}, 1.0);
    Tensor beta = Tensor::zeros({3});
    Tensor rm = Tensor::zeros({3});
    Tensor rv = Tensor::full({3}, 1.0);

    Tensor y = batchnorm2d(x, gamma, beta, rm, rv, true);
    // per-channel mean ~ 0, biased variance ~ 1 before affine
    const int64_t m = 4 * 5 * 5;
    for (int64_t c = 0; c < 3; ++c) {
        double s = 0.0, s2 = 0.0;
        for (int64_t n = 0; n < 4; ++n)
            for (int64_t i = 0; i < 25; ++i) {
                double v = y.at4(n, c, i / 5, i % 5);
                s += v;
                s2 += v * v;
            }
        const double mean_c = s / m;
        const double var_c = s2 / m - mean_c * mean_c;
        CHECK(std::fabs(mean_c) < 1e-6);
        CHECK(std::fabs(var_c - 1.0) < 1e-4);  // eps shifts variance slightly below 1
    }

    Tensor g2 = randn({3}, 182);
    Tensor b2 = randn({3}, 183);
    CHECK(fd_max_rel_err({x, g2, b2}, [&] {
              Tensor rm2 = Tensor::zeros({3});
              Tensor rv2 = Tensor::full({3}, 1.0);
              return weighted_loss(batchnorm2d(x, g2, b2, rm2, rv2, true), 184);
          }) < 1e-4);

    // eval mode is a deterministic affine map
    Tensor rm3 = randn({3}, 185);
    Tensor rv3 = Tensor::from_data({3}, {0.5, 1.5, 2.5});
    CHECK(fd_max_rel_err({x, g2, b2}, [&] {
              return weighted_loss(batchnorm2d(x, g2, b2, rm3, rv3, false), 186);
          }) < 1e-4);
    Tensor e1 = batchnorm2d(x, g2, b2, rm3, rv3, false);
    Tensor e2 = batchnorm2d(x, g2, b2, rm3, rv3, false);
    CHECK(max_abs_diff(e1, e2) == 0.0);
}

TEST_CASE("layernorm over channels: gradient check") {
    Tensor x = randn({2, 5, 3, 3}, 191);
    Tensor gamma = randn({5}, 192);
    Tensor beta = randn({5}, 193);
    CHECK(fd_max_rel_err({x, gamma, beta}, [&] {
              return weighted_loss(layernorm_chan(x, gamma, beta), 194);
          }) < 1e-4);
}

TEST_CASE("linear / gap / gmp / channel reductions / gates: gradient checks") {
    Tensor x = randn({2, 4, 4, 4}, 201);
    Tensor w = randn({3, 4}, 202);
    Tensor b = randn({3}, 203);
    CHECK(fd_max_rel_err({x, w, b}, [&] { return weighted_loss(linear(gap(x), w, b), 204); }) <
          1e-4);
    CHECK(fd_max_rel_err({x}, [&] { return weighted_loss(gmp(x), 205); }) < 1e-4);
    CHECK(fd_max_rel_err({x}, [&] { return weighted_loss(channel_mean(x), 206); }) < 1e-4);
    CHECK(fd_max_rel_err({x}, [&] { return weighted_loss(channel_max(x), 207); }) < 1e-4);

    Tensor gate_c = randn({2, 4}, 208);
    CHECK(fd_max_rel_err({x, gate_c}, [&] {
              return weighted_loss(mul_channel_gate(x, gate_c), 209);
          }) < 1e-4);
    Tensor gate_s = randn({2, 1, 4, 4}, 210);
    CHECK(fd_max_rel_err({x, gate_s}, [&] {
              return weighted_loss(mul_spatial_gate(x, gate_s), 211);
          }) < 1e-4);
}

TEST_CASE("bilinear resize: constant preservation and gradient") {
    Tensor c = Tensor::full({1, 2, 4, 4}, 3.25);
    Tensor up = bilinear_resize(c, 8, 8);
    for (double v : up.data()) CHECK(v == doctest::Approx(3.25).epsilon(1e-12));

    Tensor x = randn({2, 3, 4, 5}, 221);
    CHECK(fd_max_rel_err({x}, [&] { return weighted_loss(bilinear_resize(x, 7, 9), 222); }) <
          1e-4);
    CHECK(fd_max_rel_err({x}, [&] { return weighted_loss(bilinear_resize(x, 2, 3), 223); }) <
          1e-4);
}

TEST_CASE("tape dwt2/idwt2 round trip and gradients") {
    Tensor x = randn({2, 3, 8, 8}, 231);
    Tensor rec = idwt2(dwt2(x));
    CHECK(max_abs_diff(rec, x) < 1e-12);
    CHECK(fd_max_rel_err({x}, [&] { return weighted_loss(dwt2(x), 232); }) < 1e-4);
    Tensor bands = randn({1, 8, 4, 4}, 233);
    CHECK(fd_max_rel_err({bands}, [&] { return weighted_loss(idwt2(bands), 234); }) < 1e-4);
}

TEST_CASE("backward rejects non-scalar loss") {
    Tensor x = randn({2, 2}, 241);
    x.set_requires_grad(true);
    Tensor y = mul(x, x);
    CHECK_THROWS_AS(backward(y), std::invalid_argument);
}

TEST_CASE("NoGradGuard suppresses tape construction") {
    Tensor x = randn({2, 2}, 251);
    x.set_requires_grad(true);
    NoGradGuard ng;
    Tensor y = mul(x, x);
    CHECK_FALSE(y.requires_grad());
}
