#pragma once

#include "sarfah/tensor.hpp"

namespace sarfah {

// All feature-map ops use NCHW layout. Domain violations throw
// std::invalid_argument.

// Cross-correlation with zero padding. weight is [Co, Ci/groups, kh, kw];
// bias may be undefined.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride = 1,
              int padding = 0, int groups = 1);

// Deformable convolution, stride 1, "same" zero padding (k odd). offsets is
// [N, 2*k*k, H, W] holding (dy, dx) pairs per kernel tap; samples are read
// with bilinear interpolation and taps falling outside the input contribute 0.
Tensor deformable_conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
                         const Tensor& offsets);

Tensor maxpool2d(const Tensor& x);  // 2x2, stride 2

// Batch normalization. running_mean/running_var are plain buffers updated in
// train mode (not part of the tape); gamma/beta are affine parameters.
Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   Tensor& running_mean, Tensor& running_var, bool training,
                   double momentum = 0.1, double eps = 1e-5);

// LayerNorm across the channel dimension at every spatial position.
Tensor layernorm_chan(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                      double eps = 1e-5);

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);  // x:[N,in] w:[out,in]

Tensor gap(const Tensor& x);  // global average pool -> [N, C]
Tensor gmp(const Tensor& x);  // global max pool -> [N, C]

Tensor channel_mean(const Tensor& x);  // -> [N, 1, H, W]
Tensor channel_max(const Tensor& x);   // -> [N, 1, H, W]

Tensor mul_channel_gate(const Tensor& x, const Tensor& gate);  // gate [N, C]
Tensor mul_spatial_gate(const Tensor& x, const Tensor& gate);  // gate [N, 1, H, W]

// Bilinear resize with border replication (align_corners = false).
Tensor bilinear_resize(const Tensor& x, int64_t out_h, int64_t out_w);

// x [N,C,H,W] + p [1,C,H,W], p broadcast over the batch dimension.
Tensor add_broadcast_batch(const Tensor& x, const Tensor& p);

// Scale-1 orthonormal Haar transform on every (n, c) plane. dwt2 returns the
// four half-size planes stacked as [N, 4*C, H/2, W/2] in LL,LH,HL,HH blocks.
Tensor dwt2(const Tensor& x);
Tensor idwt2(const Tensor& bands);

}  // namespace sarfah
