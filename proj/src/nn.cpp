#include "sarfah/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace sarfah {

Conv2d::Conv2d(ParamTree& pt, const std::string& prefix, int64_t in_ch, int64_t out_ch, int k,
               Rng& rng, int stride_, int pad_, int groups_, bool zero_init)
    : stride(stride_), pad(pad_ < 0 ? k / 2 : pad_), groups(groups_) {
    if (in_ch % groups != 0) throw std::invalid_argument("Conv2d: in_ch not divisible by groups");
    const int64_t cig = in_ch / groups;
    if (zero_init) {
        w = pt.create(prefix + ".w", {out_ch, cig, k, k});
    } else {
        const double stddev = std::sqrt(2.0 / static_cast<double>(cig * k * k));
        w = pt.create_randn(prefix + ".w", {out_ch, cig, k, k}, rng, stddev);
    }
    b = pt.create(prefix + ".b", {out_ch});
}

BatchNorm2d::BatchNorm2d(ParamTree& pt, const std::string& prefix, int64_t channels) {
    gamma = pt.create_full(prefix + ".gamma", {channels}, 1.0);
    beta = pt.create(prefix + ".beta", {channels});
    running_mean = pt.create(prefix + ".running_mean", {channels}, /*trainable=*/false);
    running_var = pt.create_full(prefix + ".running_var", {channels}, 1.0, /*trainable=*/false);
}

Linear::Linear(ParamTree& pt, const std::string& prefix, int64_t in_dim, int64_t out_dim, Rng& rng,
               bool zero_init) {
    if (zero_init) {
        w = pt.create(prefix + ".w", {out_dim, in_dim});
    } else {
        const double stddev = std::sqrt(2.0 / static_cast<double>(in_dim));
        w = pt.create_randn(prefix + ".w", {out_dim, in_dim}, rng, stddev);
    }
    b = pt.create(prefix + ".b", {out_dim});
}

LayerNormChan::LayerNormChan(ParamTree& pt, const std::string& prefix, int64_t channels) {
    gamma = pt.create_full(prefix + ".gamma", {channels}, 1.0);
    beta = pt.create(prefix + ".beta", {channels});
}

DeformConv2d::DeformConv2d(ParamTree& pt, const std::string& prefix, int64_t in_ch, int64_t out_ch,
                           int k, Rng& rng)
    : offset_branch(pt, prefix + ".offset", in_ch, 2 * k * k, 3, rng, 1, -1, 1,
                    /*zero_init=*/true) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(in_ch * k * k));
    w = pt.create_randn(prefix + ".w", {out_ch, in_ch, k, k}, rng, stddev);
    b = pt.create(prefix + ".b", {out_ch});
}

DynamicConv1x1::DynamicConv1x1(ParamTree& pt, const std::string& prefix, int64_t in_ch,
                               int64_t out_ch, int64_t num_experts, Rng& rng, int64_t reduction) {
    if (num_experts < 1) throw std::invalid_argument("DynamicConv1x1: need at least one expert");
    const double stddev = std::sqrt(2.0 / static_cast<double>(in_ch));
    for (int64_t k = 0; k < num_experts; ++k) {
        expert_w.push_back(pt.create_randn(prefix + ".expert" + std::to_string(k) + ".w",
                                           {out_ch, in_ch, 1, 1}, rng, stddev));
        expert_b.push_back(
            pt.create(prefix + ".expert" + std::to_string(k) + ".b", {out_ch}));
    }
    const int64_t hidden = std::max<int64_t>(1, in_ch / reduction);
    fc1 = Linear(pt, prefix + ".attn.fc1", in_ch, hidden, rng);
    fc2 = Linear(pt, prefix + ".attn.fc2", hidden, num_experts, rng);
}

Tensor DynamicConv1x1::forward(const Tensor& x) const {
    const int64_t n = x.shape()[0];
    const int64_t K = experts();
    Tensor alpha = softmax_lastdim(fc2.forward(relu(fc1.forward(gap(x)))));  // [N, K]
    last_alpha.assign(alpha.data().begin(), alpha.data().end());
    std::vector<Tensor> outs;
    outs.reserve(n);
    for (int64_t in = 0; in < n; ++in) {
        Tensor wn = scale_by_scalar_tensor(expert_w[0], slice_element(alpha, in * K));
        Tensor bn = scale_by_scalar_tensor(expert_b[0], slice_element(alpha, in * K));
        for (int64_t k = 1; k < K; ++k) {
            Tensor ak = slice_element(alpha, in * K + k);
            wn = add(wn, scale_by_scalar_tensor(expert_w[k], ak));
            bn = add(bn, scale_by_scalar_tensor(expert_b[k], ak));
        }
        outs.push_back(conv2d(slice_batch(x, in, in + 1), wn, bn));
    }
    return n == 1 ? outs[0] : concat_batch(outs);
}

}  // namespace sarfah
