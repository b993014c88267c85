#pragma once

#include <vector>

#include "sarfah/tensor.hpp"

namespace sarfah::reference {

// Naive serial implementations written independently of the OpenMP kernels.
// They exist as oracles for the test suites and as the baseline side of the
// kernel benchmarks; keep them simple, not fast.

// Direct 6-loop cross-correlation (groups supported).
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride = 1,
              int padding = 0, int groups = 1);

// Deformable convolution, stride 1, same padding, zero outside the image.
Tensor deformable_conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
                         const Tensor& offsets);

Tensor maxpool2d(const Tensor& x);

// Step-by-step discrete state-space recurrence:
//   h_s = a_bar ⊙ h_{s-1} + b_bar * x_s,  y_s = <c, h_s> + d * x_s
std::vector<double> ssm_scan(const std::vector<double>& x, const std::vector<double>& a_bar,
                             const std::vector<double>& b_bar, const std::vector<double>& c,
                             double d);

// Mean local SSIM with an 11x11 Gaussian window (sigma 1.5), valid windows
// only, dynamic range 255 — evaluated window by window.
double ssim(const std::vector<double>& a, const std::vector<double>& b, int h, int w);

// Edge-preservation degree (ratio of average) along a direction; dir 0 =
// horizontal neighbours, 1 = vertical.
double epd_roa(const std::vector<double>& den, const std::vector<double>& noisy, int h, int w,
               int x0, int y0, int rw, int rh, int dir);

}  // namespace sarfah::reference
