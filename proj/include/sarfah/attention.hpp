#pragma once

#include <string>

#include "sarfah/nn.hpp"
#include "sarfah/ssm.hpp"

namespace sarfah {

struct CbamOptions {
    int64_t reduction = 16;
    bool channel_only = false;  // the HFDE stem uses just the channel sub-block
};

// Sequential channel and spatial attention. The channel gate comes from a
// shared MLP over global-avg and global-max pooled vectors; the spatial gate
// from a 7x7 conv over the channelwise avg and max planes.
class Cbam {
public:
    Cbam() = default;
    Cbam(ParamTree& pt, const std::string& prefix, int64_t channels, Rng& rng,
         const CbamOptions& opt = {});
    Tensor forward(const Tensor& x) const;

private:
    Linear mlp1_, mlp2_;
    Conv2d spatial_;
    bool channel_only_ = false;
};

struct DassOptions {
    int64_t experts = 4;
    bool use_dcn = true;  // false = the "plain 1x1 fusion" ablation
    int64_t cbam_reduction = 16;
    VssOptions vss;
};

// Dual-branch fusion: CBAM local-detail branch and VSS global branch,
// concatenated and fused by a dynamic 1x1 convolution with BN + ReLU.
// Channel count is preserved.
class Dass {
public:
    Dass() = default;
    Dass(ParamTree& pt, const std::string& prefix, int64_t channels, Rng& rng,
         const DassOptions& opt = {});
    Tensor forward(const Tensor& x, bool training) const;

    bool uses_dcn() const { return use_dcn_; }
    const DynamicConv1x1& fusion() const { return fuse_dyn_; }

private:
    Cbam cbam_;
    VssBlock vss_;
    DynamicConv1x1 fuse_dyn_;
    Conv2d fuse_plain_;
    BatchNorm2d bn_;
    bool use_dcn_ = true;
};

}  // namespace sarfah
