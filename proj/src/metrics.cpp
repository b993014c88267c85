#include "sarfah/metrics.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace sarfah {

namespace {

void check_same_shape(const Image& a, const Image& b, const char* op) {
    if (a.h != b.h || a.w != b.w)
        throw std::invalid_argument(std::string(op) + ": image size mismatch");
}

void check_region(const Image& img, const Region& r, const char* op) {
    if (r.width < 1 || r.height < 1 || r.x0 < 0 || r.y0 < 0 || r.x0 + r.width > img.w ||
        r.y0 + r.height > img.h)
        throw std::invalid_argument(std::string(op) + ": region outside the image");
}

constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = (0.01 * 255.0) * (0.01 * 255.0);
constexpr double kC2 = (0.03 * 255.0) * (0.03 * 255.0);

const std::vector<double>& gaussian_kernel_1d() {
    static const std::vector<double> k = [] {
        std::vector<double> v(kWin);
        double s = 0.0;
        for (int i = 0; i < kWin; ++i) {
            const double d = i - (kWin - 1) / 2.0;
            v[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
            s += v[i];
        }
        for (auto& x : v) x /= s;
        return v;
    }();
    return k;
}

// separable valid-mode Gaussian filtering
std::vector<double> gauss_filter_valid(const std::vector<double>& img, int64_t h, int64_t w) {
    const auto& k = gaussian_kernel_1d();
    const int64_t oh = h - kWin + 1, ow = w - kWin + 1;
    std::vector<double> rows(static_cast<size_t>(h * ow));
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < kWin; ++i) acc += k[i] * img[y * w + x + i];
            rows[y * ow + x] = acc;
        }
    std::vector<double> out(static_cast<size_t>(oh * ow));
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int64_t y = 0; y < oh; ++y)
        for (int64_t x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < kWin; ++i) acc += k[i] * rows[(y + i) * ow + x];
            out[y * ow + x] = acc;
        }
    return out;
}

double ssim_planes(const std::vector<double>& a, const std::vector<double>& b, int64_t h,
                   int64_t w) {
    if (h < kWin || w < kWin)
        throw std::invalid_argument("ssim: image smaller than the 11x11 window");
    std::vector<double> aa(a.size()), bb(b.size()), ab(a.size());
    for (size_t i = 0; i < a.size(); ++i) {
        aa[i] = a[i] * a[i];
        bb[i] = b[i] * b[i];
        ab[i] = a[i] * b[i];
    }
    auto mu_a = gauss_filter_valid(a, h, w);
    auto mu_b = gauss_filter_valid(b, h, w);
    auto m_aa = gauss_filter_valid(aa, h, w);
    auto m_bb = gauss_filter_valid(bb, h, w);
    auto m_ab = gauss_filter_valid(ab, h, w);
    double total = 0.0;
    for (size_t i = 0; i < mu_a.size(); ++i) {
        const double va = m_aa[i] - mu_a[i] * mu_a[i];
        const double vb = m_bb[i] - mu_b[i] * mu_b[i];
        const double cov = m_ab[i] - mu_a[i] * mu_b[i];
        const double num = (2.0 * mu_a[i] * mu_b[i] + kC1) * (2.0 * cov + kC2);
        const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + kC1) * (va + vb + kC2);
        total += num / den;
    }
    return total / static_cast<double>(mu_a.size());
}

std::vector<double> sobel_magnitude(const Image& img) {
    std::vector<double> out(static_cast<size_t>(img.size()));
    auto at = [&](int64_t y, int64_t x) {
        y = std::max<int64_t>(0, std::min(y, img.h - 1));
        x = std::max<int64_t>(0, std::min(x, img.w - 1));
        return img.at(y, x);
    };
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int64_t y = 0; y < img.h; ++y)
        for (int64_t x = 0; x < img.w; ++x) {
            const double gx = (at(y - 1, x + 1) + 2.0 * at(y, x + 1) + at(y + 1, x + 1)) -
                              (at(y - 1, x - 1) + 2.0 * at(y, x - 1) + at(y + 1, x - 1));
            const double gy = (at(y + 1, x - 1) + 2.0 * at(y + 1, x) + at(y + 1, x + 1)) -
                              (at(y - 1, x - 1) + 2.0 * at(y - 1, x) + at(y - 1, x + 1));
            out[y * img.w + x] = std::sqrt(gx * gx + gy * gy);
        }
    return out;
}

}  // namespace

Region full_frame(const Image& img) { return {0, 0, img.w, img.h}; }

Region parse_region(const std::string& spec) {
    Region r;
    char c1, c2, c3;
    std::istringstream is(spec);
    if (!(is >> r.x0 >> c1 >> r.y0 >> c2 >> r.width >> c3 >> r.height) || c1 != ',' ||
        c2 != ',' || c3 != ',')
        throw std::invalid_argument("region: expected x0,y0,w,h got '" + spec + "'");
    return r;
}

std::string region_to_string(const Region& r) {
    std::ostringstream os;
    os << r.x0 << "," << r.y0 << "," << r.width << "," << r.height;
    return os.str();
}

std::string format_metric_value(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
}

double psnr(const Image& a, const Image& b) {
    check_same_shape(a, b, "psnr");
    double mse = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) {
        const double d = a.px[i] - b.px[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

double ssim(const Image& a, const Image& b) {
    check_same_shape(a, b, "ssim");
    return ssim_planes(a.px, b.px, a.h, a.w);
}

double gssim(const Image& a, const Image& b) {
    check_same_shape(a, b, "gssim");
    return ssim_planes(sobel_magnitude(a), sobel_magnitude(b), a.h, a.w);
}

double mae(const Image& a, const Image& b) {
    check_same_shape(a, b, "mae");
    double acc = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) acc += std::fabs(a.px[i] - b.px[i]);
    return acc / static_cast<double>(a.size());
}

double iicc(const Image& a, const Image& b) {
    check_same_shape(a, b, "iicc");
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) {
        ma += a.px[i];
        mb += b.px[i];
    }
    ma /= n;
    mb /= n;
    double va = 0.0, vb = 0.0, cov = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) {
        const double da = a.px[i] - ma, db = b.px[i] - mb;
        va += da * da;
        vb += db * db;
        cov += da * db;
    }
    if (va == 0.0 || vb == 0.0)
        throw std::invalid_argument("iicc: correlation undefined for a constant image");
    return cov / std::sqrt(va * vb);
}

double enl(const Image& img, const Region& r) {
    check_region(img, r, "enl");
    const int64_t n = r.width * r.height;
    if (n < 2) throw std::invalid_argument("enl: region needs at least 2 pixels");
    double mean = 0.0;
    for (int64_t y = r.y0; y < r.y0 + r.height; ++y)
        for (int64_t x = r.x0; x < r.x0 + r.width; ++x) mean += img.at(y, x);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (int64_t y = r.y0; y < r.y0 + r.height; ++y)
        for (int64_t x = r.x0; x < r.x0 + r.width; ++x) {
            const double d = img.at(y, x) - mean;
            var += d * d;
        }
    var /= static_cast<double>(n - 1);
    if (var == 0.0) return std::numeric_limits<double>::infinity();
    return mean * mean / var;
}

double moi(const Image& denoised, const Image& noisy, const Region& r) {
    check_same_shape(denoised, noisy, "moi");
    check_region(denoised, r, "moi");
    double md = 0.0, mn = 0.0;
    for (int64_t y = r.y0; y < r.y0 + r.height; ++y)
        for (int64_t x = r.x0; x < r.x0 + r.width; ++x) {
            md += denoised.at(y, x);
            mn += noisy.at(y, x);
        }
    if (mn == 0.0) throw std::invalid_argument("moi: noisy region mean is zero");
    return md / mn;
}

double mor(const Image& denoised, const Image& noisy) {
    check_same_shape(denoised, noisy, "mor");
    double acc = 0.0;
    for (int64_t i = 0; i < denoised.size(); ++i) {
        if (denoised.px[i] == 0.0)
            throw std::invalid_argument("mor: denoised image has a zero pixel");
        acc += noisy.px[i] / denoised.px[i];
    }
    return acc / static_cast<double>(denoised.size());
}

EpdDirection epd_direction_from_string(const std::string& s) {
    if (s == "hd" || s == "HD" || s == "horizontal") return EpdDirection::kHorizontal;
    if (s == "vd" || s == "VD" || s == "vertical") return EpdDirection::kVertical;
    throw std::invalid_argument("epd direction must be HD or VD, got " + s);
}

double epd_roa(const Image& denoised, const Image& noisy, const Region& r, EpdDirection dir) {
    check_same_shape(denoised, noisy, "epd_roa");
    check_region(denoised, r, "epd_roa");
    const int64_t dx = dir == EpdDirection::kHorizontal ? 1 : 0;
    const int64_t dy = dir == EpdDirection::kHorizontal ? 0 : 1;
    if ((dir == EpdDirection::kHorizontal && r.width < 2) ||
        (dir == EpdDirection::kVertical && r.height < 2))
        throw std::invalid_argument("epd_roa: region needs at least 2 pixels along the direction");
    double num = 0.0, den = 0.0;
    for (int64_t y = r.y0; y < r.y0 + r.height - dy; ++y)
        for (int64_t x = r.x0; x < r.x0 + r.width - dx; ++x) {
            const double d2 = denoised.at(y + dy, x + dx);
            const double n2 = noisy.at(y + dy, x + dx);
            if (d2 == 0.0 || n2 == 0.0)
                throw std::invalid_argument("epd_roa: zero denominator pixel");
            num += std::fabs(denoised.at(y, x) / d2);
            den += std::fabs(noisy.at(y, x) / n2);
        }
    return num / den;
}

}  // namespace sarfah
