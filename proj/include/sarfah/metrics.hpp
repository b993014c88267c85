#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sarfah/image.hpp"

namespace sarfah {

struct Region {
    int64_t x0 = 0, y0 = 0, width = 0, height = 0;
};

Region full_frame(const Image& img);
Region parse_region(const std::string& spec);  // "x0,y0,w,h"
std::string region_to_string(const Region& r);

struct MetricEntry {
    std::string name;
    double value;
    std::optional<Region> region;
};
using MetricReport = std::vector<MetricEntry>;

// +inf sentinels serialize as "inf"
std::string format_metric_value(double v);

// ---- full-reference ----------------------------------------------------------

// 10 log10(255^2 / MSE); identical images return the +inf sentinel.
double psnr(const Image& a, const Image& b);

// Mean local SSIM, 11x11 Gaussian window (sigma 1.5), K1=0.01 K2=0.03,
// dynamic range 255, valid windows only. Images must be at least 11x11.
double ssim(const Image& a, const Image& b);

// SSIM computed on Sobel gradient-magnitude maps (3x3, replicated borders).
double gssim(const Image& a, const Image& b);

double mae(const Image& a, const Image& b);

// Pearson correlation of the two pixel populations; both must be non-constant.
double iicc(const Image& a, const Image& b);

// ---- no-reference ------------------------------------------------------------

// mean^2 / variance over the region; constant region gives the +inf sentinel.
double enl(const Image& img, const Region& region);

// mean(denoised)/mean(noisy) over the region.
double moi(const Image& denoised, const Image& noisy, const Region& region);

// mean of the ratio image noisy/denoised over the full frame; denoised must be
// strictly positive.
double mor(const Image& denoised, const Image& noisy);

enum class EpdDirection { kHorizontal, kVertical };
EpdDirection epd_direction_from_string(const std::string& s);

// sum |d1/d2| / sum |n1/n2| over adjacent-pixel pairs along the direction.
double epd_roa(const Image& denoised, const Image& noisy, const Region& region, EpdDirection dir);

}  // namespace sarfah
