#include "sarfah/attention.hpp"

#include <algorithm>

namespace sarfah {

Cbam::Cbam(ParamTree& pt, const std::string& prefix, int64_t channels, Rng& rng,
           const CbamOptions& opt)
    : channel_only_(opt.channel_only) {
    const int64_t hidden = std::max<int64_t>(1, channels / opt.reduction);
    mlp1_ = Linear(pt, prefix + ".mlp1", channels, hidden, rng);
    mlp2_ = Linear(pt, prefix + ".mlp2", hidden, channels, rng);
    if (!channel_only_) spatial_ = Conv2d(pt, prefix + ".spatial", 2, 1, 7, rng);
}

Tensor Cbam::forward(const Tensor& x) const {
    auto mlp = [&](const Tensor& v) { return mlp2_.forward(relu(mlp1_.forward(v))); };
    Tensor w_cha = sigmoid(add(mlp(gap(x)), mlp(gmp(x))));
    Tensor refined = mul_channel_gate(x, w_cha);
    if (channel_only_) return refined;
    Tensor planes = concat_channels({channel_mean(refined), channel_max(refined)});
    Tensor w_spa = sigmoid(spatial_.forward(planes));
    return mul_spatial_gate(refined, w_spa);
}

Dass::Dass(ParamTree& pt, const std::string& prefix, int64_t channels, Rng& rng,
           const DassOptions& opt)
    : use_dcn_(opt.use_dcn) {
    cbam_ = Cbam(pt, prefix + ".cbam", channels, rng, CbamOptions{opt.cbam_reduction, false});
    vss_ = VssBlock(pt, prefix + ".vss", channels, rng, opt.vss);
    if (use_dcn_)
        fuse_dyn_ = DynamicConv1x1(pt, prefix + ".fuse", 2 * channels, channels, opt.experts, rng);
    else
        fuse_plain_ = Conv2d(pt, prefix + ".fuse", 2 * channels, channels, 1, rng);
    bn_ = BatchNorm2d(pt, prefix + ".bn", channels);
}

Tensor Dass::forward(const Tensor& x, bool training) const {
    Tensor detail = cbam_.forward(x);
    Tensor global = vss_.forward(x);
    Tensor cat = concat_channels({detail, global});
    Tensor fused = use_dcn_ ? fuse_dyn_.forward(cat) : fuse_plain_.forward(cat);
    return relu(bn_.forward(fused, training));
}

}  // namespace sarfah
