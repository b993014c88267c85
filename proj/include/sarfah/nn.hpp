#pragma once

#include <string>
#include <vector>

#include "sarfah/layers.hpp"
#include "sarfah/params.hpp"
#include "sarfah/tensor.hpp"

namespace sarfah {

// Thin parameter-owning wrappers over the functional layers. Construction
// registers the leaves in the ParamTree under the given prefix; weights use
// He-normal init unless zero_init is requested.

struct Conv2d {
    Tensor w, b;
    int stride = 1, pad = 0, groups = 1;

    Conv2d() = default;
    Conv2d(ParamTree& pt, const std::string& prefix, int64_t in_ch, int64_t out_ch, int k,
           Rng& rng, int stride = 1, int pad = -1, int groups = 1, bool zero_init = false);
    Tensor forward(const Tensor& x) const { return conv2d(x, w, b, stride, pad, groups); }
};

struct BatchNorm2d {
    Tensor gamma, beta, running_mean, running_var;
    double momentum = 0.1;

    BatchNorm2d() = default;
    BatchNorm2d(ParamTree& pt, const std::string& prefix, int64_t channels);
    Tensor forward(const Tensor& x, bool training) const {
        Tensor rm = running_mean, rv = running_var;
        return batchnorm2d(x, gamma, beta, rm, rv, training, momentum);
    }
};

struct ConvBnRelu {
    Conv2d conv;
    BatchNorm2d bn;

    ConvBnRelu() = default;
    ConvBnRelu(ParamTree& pt, const std::string& prefix, int64_t in_ch, int64_t out_ch, int k,
               Rng& rng, int stride = 1, int pad = -1)
        : conv(pt, prefix + ".conv", in_ch, out_ch, k, rng, stride, pad),
          bn(pt, prefix + ".bn", out_ch) {}
    Tensor forward(const Tensor& x, bool training) const {
        return relu(bn.forward(conv.forward(x), training));
    }
};

struct Linear {
    Tensor w, b;

    Linear() = default;
    Linear(ParamTree& pt, const std::string& prefix, int64_t in_dim, int64_t out_dim, Rng& rng,
           bool zero_init = false);
    Tensor forward(const Tensor& x) const { return linear(x, w, b); }
};

struct LayerNormChan {
    Tensor gamma, beta;

    LayerNormChan() = default;
    LayerNormChan(ParamTree& pt, const std::string& prefix, int64_t channels);
    Tensor forward(const Tensor& x) const { return layernorm_chan(x, gamma, beta); }
};

// Deformable conv stage: the offsets come from a sibling 3x3 conv branch on
// the same input, zero-initialized so training starts from the plain
// convolution.
struct DeformConv2d {
    Conv2d offset_branch;
    Tensor w, b;

    DeformConv2d() = default;
    DeformConv2d(ParamTree& pt, const std::string& prefix, int64_t in_ch, int64_t out_ch, int k,
                 Rng& rng);
    Tensor forward(const Tensor& x) const {
        return deformable_conv2d(x, w, b, offset_branch.forward(x));
    }
};

// Input-conditioned convex combination of K expert 1x1 kernels
// (W = sum_k alpha_k W_k), with the soft attention produced by
// Softmax(FC(ReLU(FC(GAP(x))))).
struct DynamicConv1x1 {
    std::vector<Tensor> expert_w;  // [out, in, 1, 1] each
    std::vector<Tensor> expert_b;  // [out] each
    Linear fc1, fc2;
    mutable std::vector<double> last_alpha;  // test/debug visibility

    DynamicConv1x1() = default;
    DynamicConv1x1(ParamTree& pt, const std::string& prefix, int64_t in_ch, int64_t out_ch,
                   int64_t num_experts, Rng& rng, int64_t reduction = 16);
    Tensor forward(const Tensor& x) const;
    int64_t experts() const { return static_cast<int64_t>(expert_w.size()); }
};

}  // namespace sarfah
