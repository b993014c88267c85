#pragma once

#include <vector>

#include "sarfah/image.hpp"

namespace sarfah {

// The four scale-1 Haar coefficient planes.
struct SubBands {
    Image ll, lh, hl, hh;
};

// Stride-2 correlation with the 1/2-weighted 2x2 orthonormal Haar stencils.
// Requires even H and W; no boundary handling by design.
SubBands dwt2_haar(const Image& img);

// Exact left inverse of dwt2_haar.
Image idwt2_haar(const SubBands& sb);

struct CascadeResult {
    std::vector<SubBands> levels;  // levels[j-1] holds the scale-j bands
    Image final_ll;
};

// Repeated dwt2_haar applied to successive LL planes; H and W must be
// divisible by 2^levels.
CascadeResult dwt2_cascade(const Image& img, int levels);

}  // namespace sarfah
