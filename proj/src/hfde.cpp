#include "sarfah/hfde.hpp"

#include <stdexcept>

namespace sarfah {

DeforPlacement defor_placement_from_string(const std::string& s) {
    if (s == "none") return DeforPlacement::kNone;
    if (s == "encoder") return DeforPlacement::kEncoder;
    if (s == "decoder") return DeforPlacement::kDecoder;
    if (s == "both") return DeforPlacement::kBoth;
    throw std::invalid_argument("deforconv placement must be none|encoder|decoder|both, got " + s);
}

std::string to_string(DeforPlacement p) {
    switch (p) {
        case DeforPlacement::kNone: return "none";
        case DeforPlacement::kEncoder: return "encoder";
        case DeforPlacement::kDecoder: return "decoder";
        default: return "both";
    }
}

Hfde::Stage::Stage(ParamTree& pt, const std::string& prefix, int64_t in_ch, int64_t out_ch,
                   Rng& rng, bool deformable)
    : deform(deformable) {
    if (deform)
        dconv = DeformConv2d(pt, prefix + ".dconv", in_ch, out_ch, 3, rng);
    else
        conv = Conv2d(pt, prefix + ".conv", in_ch, out_ch, 3, rng);
    bn = BatchNorm2d(pt, prefix + ".bn", out_ch);
}

Tensor Hfde::Stage::forward(const Tensor& x, bool training) const {
    Tensor y = deform ? dconv.forward(x) : conv.forward(x);
    return relu(bn.forward(y, training));
}

Hfde::Hfde(ParamTree& pt, const std::string& prefix, int64_t channels, Rng& rng,
           const HfdeOptions& opt)
    : use_dass_(opt.dass) {
    if (channels % 2 != 0) throw std::invalid_argument("Hfde: channel count must be even");
    const int64_t half = channels / 2;
    const bool enc_deform =
        opt.placement == DeforPlacement::kEncoder || opt.placement == DeforPlacement::kBoth;
    const bool dec_deform =
        opt.placement == DeforPlacement::kDecoder || opt.placement == DeforPlacement::kBoth;

    stem_ = ConvBnRelu(pt, prefix + ".stem", channels, half, 3, rng);
    stem_attn_ = Cbam(pt, prefix + ".stem_attn", half, rng,
                      CbamOptions{opt.cbam_reduction, /*channel_only=*/true});
    enc1_ = Stage(pt, prefix + ".enc1", half, channels, rng, enc_deform);
    enc2_ = Stage(pt, prefix + ".enc2", channels, 2 * channels, rng, enc_deform);
    bott_conv_ = ConvBnRelu(pt, prefix + ".bott1", 2 * channels, 2 * channels, 3, rng);
    bott_deform_ = DeformConv2d(pt, prefix + ".bott2.dconv", 2 * channels, 2 * channels, 3, rng);
    bott_bn_ = BatchNorm2d(pt, prefix + ".bott2.bn", 2 * channels);
    if (use_dass_) {
        DassOptions d;
        d.experts = opt.dass_experts;
        d.use_dcn = opt.dcn_in_dass;
        d.cbam_reduction = opt.cbam_reduction;
        d.vss = opt.vss;
        dass_ = Dass(pt, prefix + ".dass", 2 * channels, rng, d);
    }
    up1_ = Conv2d(pt, prefix + ".up1", 2 * channels, channels, 1, rng);
    up2_ = Conv2d(pt, prefix + ".up2", channels, half, 1, rng);
    dec1_ = Stage(pt, prefix + ".dec1", channels, channels, rng, dec_deform);
    dec2_ = Stage(pt, prefix + ".dec2", half, half, rng, dec_deform);
    head1_ = ConvBnRelu(pt, prefix + ".head1", half, channels, 3, rng);
    head2_ = ConvBnRelu(pt, prefix + ".head2", channels, channels, 3, rng);
}

Tensor Hfde::forward(const Tensor& x, bool training) const {
    const Shape& s = x.shape();
    if (s[2] % 4 != 0 || s[3] % 4 != 0)
        throw std::invalid_argument("Hfde: spatial dims must be divisible by 4");

    Tensor f0e = stem_attn_.forward(stem_.forward(x, training));
    Tensor f1e = maxpool2d(enc1_.forward(f0e, training));
    Tensor f2e = maxpool2d(enc2_.forward(f1e, training));

    Tensor b = bott_conv_.forward(f2e, training);
    b = relu(bott_bn_.forward(bott_deform_.forward(b), training));
    Tensor f0d = use_dass_ ? dass_.forward(b, training) : b;

    Tensor d1 = add(f0d, f2e);
    d1 = up1_.forward(bilinear_resize(d1, 2 * d1.shape()[2], 2 * d1.shape()[3]));
    Tensor f1d = dec1_.forward(d1, training);

    Tensor d2 = add(f1d, f1e);
    d2 = up2_.forward(bilinear_resize(d2, 2 * d2.shape()[2], 2 * d2.shape()[3]));
    Tensor f2d = dec2_.forward(d2, training);

    return head2_.forward(head1_.forward(f2d, training), training);
}

}  // namespace sarfah
