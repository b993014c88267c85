#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "fd_check.hpp"
#include "sarfah/lfsp.hpp"

using namespace sarfah;
using sarfah::testing::fd_max_rel_err;
using sarfah::testing::weighted_loss;

namespace {
LfspOptions small_opts(bool dass = true) {
    LfspOptions o;
    o.dass = dass;
    o.dass_experts = 2;
    o.vss.state_dim = 2;
    o.vss.pos_h = 3;
    o.vss.pos_w = 3;
    return o;
}
}  // namespace

TEST_CASE("ode_solve: zero field is the identity, bit for bit") {
    Rng rng(1);
    Tensor u0 = Tensor::randn({1, 2, 3, 3}, rng);
    auto zero = [](const Tensor& u, double) { return Tensor::zeros(u.shape()); };
    for (int n : {1, 4, 7}) {
        Tensor uT = ode_solve(u0, zero, {1.0, n, true}, 99);
        for (int64_t i = 0; i < u0.numel(); ++i) CHECK(uT.data()[i] == u0.data()[i]);
    }
}

TEST_CASE("ode_solve: constant field integrates exactly for any N and any jitter") {
    Tensor u0 = Tensor::from_data({1, 1, 2, 2}, {2.0, -4.0, 8.0, 0.5});
    const double c = 3.0;
    auto constant = [&](const Tensor& u, double) { return Tensor::full(u.shape(), c); };
    for (int n : {1, 2, 4, 8, 16, 32, 64}) {
        for (uint64_t seed : {0ull, 5ull}) {
            Tensor uT = ode_solve(u0, constant, {1.0, n, true}, seed);
            for (int64_t i = 0; i < u0.numel(); ++i)
                CHECK(uT.data()[i] == u0.data()[i] + c);  // dyadic steps keep this exact
        }
    }
}

TEST_CASE("ode_solve: first-order convergence on f(u) = -u") {
    Tensor u0 = Tensor::from_data({1}, {1.0});
    auto decay = [](const Tensor& u, double) { return neg(u); };
    const double target = std::exp(-1.0);
    std::vector<double> log_h, log_err;
    for (int n : {4, 8, 16, 32, 64}) {
        Tensor uT = ode_solve(u0, decay, {1.0, n, false}, 0);
        const double err = std::fabs(uT.item() - target);
        log_h.push_back(std::log(1.0 / n));
        log_err.push_back(std::log(err));
    }
    // least-squares slope of log err vs log h
    double mx = 0, my = 0;
    for (size_t i = 0; i < log_h.size(); ++i) {
        mx += log_h[i];
        my += log_err[i];
    }
    mx /= log_h.size();
    my /= log_err.size();
    double num = 0, den = 0;
    for (size_t i = 0; i < log_h.size(); ++i) {
        num += (log_h[i] - mx) * (log_err[i] - my);
        den += (log_h[i] - mx) * (log_h[i] - mx);
    }
    const double slope = num / den;
    CHECK(slope > 0.9);
    CHECK(slope < 1.1);
}

TEST_CASE("ode_solve: flow-map injectivity probe on a Lipschitz field") {
    Rng rng(7);
    auto decay = [](const Tensor& u, double) { return mul_scalar(u, -1.0); };
    for (int trial = 0; trial < 10; ++trial) {
        Tensor a = Tensor::randn({1, 1, 2, 2}, rng);
        Tensor b = Tensor::randn({1, 1, 2, 2}, rng);
        Tensor ua = ode_solve(a, decay, {1.0, 8, false}, 0);
        Tensor ub = ode_solve(b, decay, {1.0, 8, false}, 0);
        double din = 0.0, dout = 0.0;
        for (int64_t i = 0; i < 4; ++i) {
            din = std::max(din, std::fabs(a.data()[i] - b.data()[i]));
            dout = std::max(dout, std::fabs(ua.data()[i] - ub.data()[i]));
        }
        if (din > 1e-6) CHECK(dout > 1e-9);
    }
}

TEST_CASE("ode_solve rejects a zero step count") {
    Tensor u0 = Tensor::from_data({1}, {1.0});
    auto zero = [](const Tensor& u, double) { return Tensor::zeros(u.shape()); };
    CHECK_THROWS_AS(ode_solve(u0, zero, {1.0, 0, false}, 0), std::invalid_argument);
}

TEST_CASE("lfsp field: shape contract and eval determinism") {
    ParamTree pt;
    Rng rng(21);
    LfspOde lfsp(pt, "lfsp", 4, {1.0, 2, true}, rng, small_opts());
    for (auto [h, w] : {std::pair<int64_t, int64_t>{4, 4}, {6, 8}}) {
        Tensor u = Tensor::randn({1, 4, h, w}, rng);
        Tensor f = lfsp.field(u, 0.25, /*training=*/false);
        CHECK(f.shape() == u.shape());
        Tensor f2 = lfsp.field(u, 0.25, false);
        for (int64_t i = 0; i < f.numel(); ++i) CHECK(f.data()[i] == f2.data()[i]);
    }
}

TEST_CASE("lfsp solver is deterministic in eval mode and jittered in training") {
    ParamTree pt;
    Rng rng(31);
    LfspOde lfsp(pt, "lfsp", 2, {1.0, 3, true}, rng, small_opts(false));
    Tensor u = Tensor::randn({1, 2, 4, 4}, rng);
    {
        NoGradGuard ng;
        Tensor a = lfsp.forward(u, false, 1);
        Tensor b = lfsp.forward(u, false, 2);  // seed ignored when deterministic
        for (int64_t i = 0; i < a.numel(); ++i) CHECK(a.data()[i] == b.data()[i]);
        Tensor c = lfsp.forward(u, true, 1);
        Tensor d = lfsp.forward(u, true, 1);
        for (int64_t i = 0; i < c.numel(); ++i) CHECK(c.data()[i] == d.data()[i]);
        Tensor e = lfsp.forward(u, true, 2);
        bool differs = false;
        for (int64_t i = 0; i < c.numel(); ++i) differs |= c.data()[i] != e.data()[i];
        CHECK(differs);
    }
}

TEST_CASE("lfsp parameter count is independent of the step count") {
    std::vector<int64_t> counts;
    for (int n : {1, 4, 6}) {
        ParamTree pt;
        Rng rng(41);
        LfspOde lfsp(pt, "lfsp", 4, {1.0, n, true}, rng, small_opts());
        counts.push_back(pt.trainable_count());
    }
    CHECK(counts[0] == counts[1]);
    CHECK(counts[1] == counts[2]);
}

TEST_CASE("disabling the NODE wrapper keeps parameters and applies the field once") {
    ParamTree pt_node, pt_plain;
    Rng r1(51), r2(51);
    LfspOde with_node(pt_node, "lfsp", 2, {1.0, 4, true}, r1, small_opts(false));
    auto opts = small_opts(false);
    opts.use_node = false;
    LfspOde without(pt_plain, "lfsp", 2, {1.0, 4, true}, r2, opts);
    CHECK(pt_node.trainable_count() == pt_plain.trainable_count());

    NoGradGuard ng;
    Rng rng(52);
    Tensor u = Tensor::randn({1, 2, 4, 4}, rng);
    Tensor direct = without.field(u, 0.0, false);
    Tensor fwd = without.forward(u, false, 0);
    for (int64_t i = 0; i < u.numel(); ++i) CHECK(fwd.data()[i] == direct.data()[i]);
}

TEST_CASE("gradient through field (incl. the t plane) and the unrolled solver") {
    ParamTree pt;
    Rng rng(61);
    LfspOde lfsp(pt, "lfsp", 2, {1.0, 2, false}, rng, small_opts());
    Tensor u = Tensor::randn({1, 2, 4, 4}, rng);
    Tensor tplane = Tensor::full({1, 1, 4, 4}, 0.3);

    std::vector<Tensor> checked{u, tplane};
    CHECK(fd_max_rel_err(checked, [&] {
              return weighted_loss(lfsp.field_with_tplane(u, tplane, true), 62);
          }, 1e-5, /*max_per_tensor=*/16) < 1e-4);

    std::vector<Tensor> through_solver{u};
    pt.for_each_trainable([&](const std::string&, Tensor& t) { through_solver.push_back(t); });
    CHECK(fd_max_rel_err(through_solver, [&] {
              return weighted_loss(lfsp.forward(u, true, 7), 63);
          }, 1e-6, /*max_per_tensor=*/8) < 1e-4);
}
