#include "sarfah/reference.hpp"

#include <cmath>
#include <stdexcept>

namespace sarfah::reference {

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int padding,
              int groups) {
    const Shape& xs = x.shape();
    const Shape& ws = weight.shape();
    const int64_t n = xs[0], ci = xs[1], h = xs[2], w = xs[3];
    const int64_t co = ws[0], cig = ws[1], kh = ws[2], kw = ws[3];
    const int64_t oh = (h + 2 * padding - kh) / stride + 1;
    const int64_t ow = (w + 2 * padding - kw) / stride + 1;
    const int64_t co_per_g = co / groups;
    Tensor out = Tensor::zeros({n, co, oh, ow});
    for (int64_t in = 0; in < n; ++in)
        for (int64_t oc = 0; oc < co; ++oc)
            for (int64_t oy = 0; oy < oh; ++oy)
                for (int64_t ox = 0; ox < ow; ++ox) {
                    double acc = bias.defined() ? bias.data()[oc] : 0.0;
                    const int64_t g = oc / co_per_g;
                    for (int64_t icg = 0; icg < cig; ++icg)
                        for (int64_t ky = 0; ky < kh; ++ky)
                            for (int64_t kx = 0; kx < kw; ++kx) {
                                const int64_t iy = oy * stride - padding + ky;
                                const int64_t ix = ox * stride - padding + kx;
                                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                                acc += weight.at4(oc, icg, ky, kx) *
                                       x.at4(in, g * cig + icg, iy, ix);
                            }
                    out.at4(in, oc, oy, ox) = acc;
                }
    return out;
}

Tensor deformable_conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
                         const Tensor& offsets) {
    const Shape& xs = x.shape();
    const Shape& ws = weight.shape();
    const int64_t n = xs[0], ci = xs[1], h = xs[2], w = xs[3];
    const int64_t co = ws[0], k = ws[2];
    const int64_t pad = k / 2;
    auto sample = [&](int64_t in, int64_t c, double py, double px) -> double {
        const int64_t y0 = static_cast<int64_t>(std::floor(py));
        const int64_t x0 = static_cast<int64_t>(std::floor(px));
        const double fy = py - std::floor(py);
        const double fx = px - std::floor(px);
        double v = 0.0;
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
                const int64_t yy = y0 + dy, xx = x0 + dx;
                if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                const double wgt = (dy ? fy : 1.0 - fy) * (dx ? fx : 1.0 - fx);
                v += wgt * x.at4(in, c, yy, xx);
            }
        return v;
    };
    Tensor out = Tensor::zeros({n, co, h, w});
    for (int64_t in = 0; in < n; ++in)
        for (int64_t oc = 0; oc < co; ++oc)
            for (int64_t oy = 0; oy < h; ++oy)
                for (int64_t ox = 0; ox < w; ++ox) {
                    double acc = bias.defined() ? bias.data()[oc] : 0.0;
                    for (int64_t c = 0; c < ci; ++c)
                        for (int64_t ky = 0; ky < k; ++ky)
                            for (int64_t kx = 0; kx < k; ++kx) {
                                const int64_t t = ky * k + kx;
                                const double dy = offsets.at4(in, 2 * t, oy, ox);
                                const double dx = offsets.at4(in, 2 * t + 1, oy, ox);
                                acc += weight.at4(oc, c, ky, kx) *
                                       sample(in, c, oy - pad + ky + dy, ox - pad + kx + dx);
                            }
                    out.at4(in, oc, oy, ox) = acc;
                }
    return out;
}

Tensor maxpool2d(const Tensor& x) {
    const Shape& s = x.shape();
    const int64_t n = s[0], c = s[1], h = s[2], w = s[3];
    Tensor out = Tensor::zeros({n, c, h / 2, w / 2});
    for (int64_t in = 0; in < n; ++in)
        for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t oy = 0; oy < h / 2; ++oy)
                for (int64_t ox = 0; ox < w / 2; ++ox) {
                    double m = x.at4(in, ch, 2 * oy, 2 * ox);
                    m = std::max(m, x.at4(in, ch, 2 * oy, 2 * ox + 1));
                    m = std::max(m, x.at4(in, ch, 2 * oy + 1, 2 * ox));
                    m = std::max(m, x.at4(in, ch, 2 * oy + 1, 2 * ox + 1));
                    out.at4(in, ch, oy, ox) = m;
                }
    return out;
}

std::vector<double> ssm_scan(const std::vector<double>& x, const std::vector<double>& a_bar,
                             const std::vector<double>& b_bar, const std::vector<double>& c,
                             double d) {
    const size_t L = a_bar.size();
    if (b_bar.size() != L || c.size() != L)
        throw std::invalid_argument("ssm_scan reference: state size mismatch");
    std::vector<double> h(L, 0.0);
    std::vector<double> y(x.size());
    for (size_t s = 0; s < x.size(); ++s) {
        double acc = d * x[s];
        for (size_t l = 0; l < L; ++l) {
            h[l] = a_bar[l] * h[l] + b_bar[l] * x[s];
            acc += c[l] * h[l];
        }
        y[s] = acc;
    }
    return y;
}

double ssim(const std::vector<double>& a, const std::vector<double>& b, int h, int w) {
    constexpr int win = 11;
    constexpr double sigma = 1.5;
    constexpr double c1 = (0.01 * 255.0) * (0.01 * 255.0);
    constexpr double c2 = (0.03 * 255.0) * (0.03 * 255.0);
    if (h < win || w < win) throw std::invalid_argument("ssim reference: image smaller than window");

    double kernel[win][win];
    double ksum = 0.0;
    for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
            const double dy = i - (win - 1) / 2.0;
            const double dx = j - (win - 1) / 2.0;
            kernel[i][j] = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
            ksum += kernel[i][j];
        }
    for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) kernel[i][j] /= ksum;

    double total = 0.0;
    int64_t count = 0;
    for (int y0 = 0; y0 + win <= h; ++y0)
        for (int x0 = 0; x0 + win <= w; ++x0) {
            double ma = 0.0, mb = 0.0;
            for (int i = 0; i < win; ++i)
                for (int j = 0; j < win; ++j) {
                    ma += kernel[i][j] * a[(y0 + i) * w + x0 + j];
                    mb += kernel[i][j] * b[(y0 + i) * w + x0 + j];
                }
            double va = 0.0, vb = 0.0, cov = 0.0;
            for (int i = 0; i < win; ++i)
                for (int j = 0; j < win; ++j) {
                    const double da = a[(y0 + i) * w + x0 + j] - ma;
                    const double db = b[(y0 + i) * w + x0 + j] - mb;
                    va += kernel[i][j] * da * da;
                    vb += kernel[i][j] * db * db;
                    cov += kernel[i][j] * da * db;
                }
            const double num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
            const double den = (ma * ma + mb * mb + c1) * (va + vb + c2);
            total += num / den;
            ++count;
        }
    return total / static_cast<double>(count);
}

double epd_roa(const std::vector<double>& den, const std::vector<double>& noisy, int h, int w,
               int x0, int y0, int rw, int rh, int dir) {
    double num = 0.0, denom = 0.0;
    const int dx = dir == 0 ? 1 : 0;
    const int dy = dir == 0 ? 0 : 1;
    for (int y = y0; y < y0 + rh - dy; ++y)
        for (int x = x0; x < x0 + rw - dx; ++x) {
            const int i1 = y * w + x;
            const int i2 = (y + dy) * w + (x + dx);
            num += std::fabs(den[i1] / den[i2]);
            denom += std::fabs(noisy[i1] / noisy[i2]);
        }
    return num / denom;
}

}  // namespace sarfah::reference
