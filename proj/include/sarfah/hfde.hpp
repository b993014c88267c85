#pragma once

#include <string>

#include "sarfah/attention.hpp"
#include "sarfah/nn.hpp"

namespace sarfah {

enum class DeforPlacement { kNone, kEncoder, kDecoder, kBoth };

DeforPlacement defor_placement_from_string(const std::string& s);
std::string to_string(DeforPlacement p);

struct HfdeOptions {
    DeforPlacement placement = DeforPlacement::kDecoder;
    bool dass = true;
    int64_t dass_experts = 4;
    bool dcn_in_dass = true;
    VssOptions vss;
    int64_t cbam_reduction = 16;
};

// Asymmetric U-shaped high-frequency denoiser: a channel-squeezing stem
// (C -> C/2) with channel attention, two encoder stages with maxpool
// (C/2 -> C -> 2C), a bottleneck of Conv-BN-ReLU + DeforConv-BN-ReLU + DASS,
// two decoder stages (bilinear upsample with a 1x1 channel halving, then a
// width-preserving stage conv) fed by encoder skip sums, and a two-conv head
// restoring C channels. The placement enum decides which stage convs are
// deformable; the bottleneck deformable conv is structural and always on.
class Hfde {
public:
    Hfde() = default;
    Hfde(ParamTree& pt, const std::string& prefix, int64_t channels, Rng& rng,
         const HfdeOptions& opt = {});
    Tensor forward(const Tensor& x, bool training) const;

private:
    // stage conv that is plain or deformable depending on placement
    struct Stage {
        bool deform = false;
        Conv2d conv;
        DeformConv2d dconv;
        BatchNorm2d bn;

        Stage() = default;
        Stage(ParamTree& pt, const std::string& prefix, int64_t in_ch, int64_t out_ch, Rng& rng,
              bool deformable);
        Tensor forward(const Tensor& x, bool training) const;
    };

    ConvBnRelu stem_;
    Cbam stem_attn_;
    Stage enc1_, enc2_;
    ConvBnRelu bott_conv_;
    DeformConv2d bott_deform_;
    BatchNorm2d bott_bn_;
    Dass dass_;
    bool use_dass_ = true;
    Conv2d up1_, up2_;
    Stage dec1_, dec2_;
    ConvBnRelu head1_, head2_;
};

}  // namespace sarfah
