#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "sarfah/nn.hpp"
#include "sarfah/tensor.hpp"

namespace sarfah {

// phi1(z) = (e^z - 1)/z, the ZOH input-matrix factor. The series branch is
// the analytic limit used near z = 0; both are exposed so the continuity
// property can compare them directly.
double zoh_phi1_direct(double z);
double zoh_phi1_series(double z);
double zoh_phi1(double z);        // series below |z| = 1e-8, direct otherwise
double zoh_phi1_deriv(double z);  // d phi1 / dz with its own series guard

struct ZohResult {
    std::vector<double> a_bar;
    std::vector<double> b_bar;
};

// A_bar = e^{delta A}, B_bar = (delta A)^{-1}(e^{delta A} - I) delta B for a
// diagonal A, with the analytic limit taking over entrywise as delta*A -> 0.
ZohResult zoh_discretize(std::span<const double> a_diag, std::span<const double> b, double delta);

// Already-discretized scalar-input recurrence:
//   h_s = a_bar ⊙ h_{s-1} + b_bar x_s,  y_s = <c, h_s> + d x_s,  h_0 = 0.
struct DiscreteSSM {
    std::vector<double> a_bar, b_bar, c;
    double d = 0.0;
};
std::vector<double> ssm_scan(std::span<const double> x, const DiscreteSSM& p);

// Continuous description; scanning first applies the ZOH discretization.
struct SSMParams {
    std::vector<double> a_diag, b, c;
    double d = 0.0;
    double delta = 1.0;
};
std::vector<double> ssm_scan(std::span<const double> x, const SSMParams& p);

// Parameters of one directional selective scan over [N, C, H, W] features.
// B, C and the per-channel timescale are linear projections of the token
// (selective); delta goes through softplus.
struct Ss2dDirectionParams {
    Tensor a;     // [C, L], negative
    Tensor w_b;   // [L, C]
    Tensor b_b;   // [L]
    Tensor w_c;   // [L, C]
    Tensor b_c;   // [L]
    Tensor w_dt;  // [C, C]
    Tensor b_dt;  // [C]
    Tensor d;     // [C]
};

// Four directional scans (row-major fwd/bwd, column-major fwd/bwd) summed.
// Forward and backward are fused; gradients flow to the input and every
// parameter tensor.
Tensor ss2d_scan(const Tensor& x, const std::array<Ss2dDirectionParams, 4>& dirs);

class Ss2d {
public:
    Ss2d() = default;
    // tied = true registers a single parameter set shared by all four
    // directions (used by the rotation-equivariance property).
    Ss2d(ParamTree& pt, const std::string& prefix, int64_t channels, int64_t state_dim, Rng& rng,
         bool tied = false);
    Tensor forward(const Tensor& x) const { return ss2d_scan(x, dirs_); }
    std::array<Ss2dDirectionParams, 4>& dirs() { return dirs_; }

private:
    std::array<Ss2dDirectionParams, 4> dirs_;
};

struct VssOptions {
    int64_t state_dim = 8;
    int64_t pos_h = 16;  // pos-embed training resolution; interpolated elsewhere
    int64_t pos_w = 16;
    bool zero_init_probe = false;  // zero the scan and FFN output projections
};

// VSS block: 1x1 lift + learned positional embedding + LN, a SiLU gate
// branch, a DWConv -> FC -> SiLU -> SS2D -> LN scan branch, gate ⊙ scan with
// a residual onto the normalized input, then an FFN with residual.
class VssBlock {
public:
    VssBlock() = default;
    VssBlock(ParamTree& pt, const std::string& prefix, int64_t channels, Rng& rng,
             const VssOptions& opt = {});
    Tensor forward(const Tensor& x) const;
    // the identity-plus-embedding path the zero-init probe collapses to
    Tensor normalized_input(const Tensor& x) const;

private:
    Conv2d in_proj_, gate_fc_, dw_, scan_fc_, ffn1_, ffn2_;
    Tensor pos_embed_;
    LayerNormChan ln_in_, ln_scan_;
    Ss2d ss2d_;
};

}  // namespace sarfah
