#include "sarfah/wavelet.hpp"

#include <stdexcept>

namespace sarfah {

SubBands dwt2_haar(const Image& img) {
    if (img.h % 2 != 0 || img.w % 2 != 0)
        throw std::invalid_argument("dwt2_haar: image dimensions must be even");
    const int64_t oh = img.h / 2, ow = img.w / 2;
    SubBands sb{Image(oh, ow), Image(oh, ow), Image(oh, ow), Image(oh, ow)};
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (oh > 64)
#endif
    for (int64_t k = 0; k < oh; ++k)
        for (int64_t l = 0; l < ow; ++l) {
            const double x00 = img.at(2 * k, 2 * l);
            const double x01 = img.at(2 * k, 2 * l + 1);
            const double x10 = img.at(2 * k + 1, 2 * l);
            const double x11 = img.at(2 * k + 1, 2 * l + 1);
            sb.ll.at(k, l) = 0.5 * (x00 + x01 + x10 + x11);
            sb.lh.at(k, l) = 0.5 * (x00 + x01 - x10 - x11);
            sb.hl.at(k, l) = 0.5 * (x00 - x01 + x10 - x11);
            sb.hh.at(k, l) = 0.5 * (x00 - x01 - x10 + x11);
        }
    return sb;
}

Image idwt2_haar(const SubBands& sb) {
    const int64_t oh = sb.ll.h, ow = sb.ll.w;
    auto same = [&](const Image& p) { return p.h == oh && p.w == ow; };
    if (!same(sb.lh) || !same(sb.hl) || !same(sb.hh))
        throw std::invalid_argument("idwt2_haar: sub-band planes differ in size");
    Image img(2 * oh, 2 * ow);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (oh > 64)
#endif
    for (int64_t k = 0; k < oh; ++k)
        for (int64_t l = 0; l < ow; ++l) {
            const double ll = sb.ll.at(k, l);
            const double lh = sb.lh.at(k, l);
            const double hl = sb.hl.at(k, l);
            const double hh = sb.hh.at(k, l);
            img.at(2 * k, 2 * l) = 0.5 * (ll + lh + hl + hh);
            img.at(2 * k, 2 * l + 1) = 0.5 * (ll + lh - hl - hh);
            img.at(2 * k + 1, 2 * l) = 0.5 * (ll - lh + hl - hh);
            img.at(2 * k + 1, 2 * l + 1) = 0.5 * (ll - lh - hl + hh);
        }
    return img;
}

CascadeResult dwt2_cascade(const Image& img, int levels) {
    if (levels < 1) throw std::invalid_argument("dwt2_cascade: levels must be positive");
    const int64_t div = int64_t(1) << levels;
    if (img.h % div != 0 || img.w % div != 0)
        throw std::invalid_argument("dwt2_cascade: dimensions not divisible by 2^levels");
    CascadeResult res;
    Image cur = img;
    for (int j = 0; j < levels; ++j) {
        SubBands sb = dwt2_haar(cur);
        cur = sb.ll;
        res.levels.push_back(std::move(sb));
    }
    res.final_ll = cur;
    return res;
}

}  // namespace sarfah
