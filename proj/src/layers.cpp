#include "sarfah/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sarfah {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int padding,
              int groups) {
    const Shape& xs = x.shape();
    const Shape& ws = weight.shape();
    require(xs.size() == 4 && ws.size() == 4, "conv2d: x and weight must be 4D");
    const int64_t n = xs[0], ci = xs[1], h = xs[2], w = xs[3];
    const int64_t co = ws[0], cig = ws[1], kh = ws[2], kw = ws[3];
    require(groups >= 1 && ci % groups == 0 && co % groups == 0,
            "conv2d: channel counts not divisible by groups");
    require(cig == ci / groups, "conv2d: weight in-channels mismatch");
    if (bias.defined()) require(bias.numel() == co, "conv2d: bias size mismatch");
    require(stride >= 1 && padding >= 0, "conv2d: bad stride/padding");
    const int64_t oh = (h + 2 * padding - kh) / stride + 1;
    const int64_t ow = (w + 2 * padding - kw) / stride + 1;
    require(oh >= 1 && ow >= 1, "conv2d: kernel larger than padded input");

    const int64_t co_per_g = co / groups;
    std::vector<double> out(static_cast<size_t>(n * co * oh * ow));
    const double* xp = x.impl_->data.data();
    const double* wp = weight.impl_->data.data();
    const double* bp = bias.defined() ? bias.impl_->data.data() : nullptr;

#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static)
#endif
    for (int64_t in = 0; in < n; ++in)
        for (int64_t oc = 0; oc < co; ++oc) {
            const int64_t g = oc / co_per_g;
            const int64_t ci0 = g * cig;
            double* op = out.data() + (in * co + oc) * oh * ow;
            const double bv = bp ? bp[oc] : 0.0;
            for (int64_t oy = 0; oy < oh; ++oy)
                for (int64_t ox = 0; ox < ow; ++ox) {
                    double acc = bv;
                    const int64_t iy0 = oy * stride - padding;
                    const int64_t ix0 = ox * stride - padding;
                    for (int64_t icg = 0; icg < cig; ++icg) {
                        const double* xc = xp + (in * ci + ci0 + icg) * h * w;
                        const double* wc = wp + (oc * cig + icg) * kh * kw;
                        for (int64_t ky = 0; ky < kh; ++ky) {
                            const int64_t iy = iy0 + ky;
                            if (iy < 0 || iy >= h) continue;
                            for (int64_t kx = 0; kx < kw; ++kx) {
                                const int64_t ix = ix0 + kx;
                                if (ix < 0 || ix >= w) continue;
                                acc += wc[ky * kw + kx] * xc[iy * w + ix];
                            }
                        }
                    }
                    op[oy * ow + ox] = acc;
                }
        }

    auto px = x.impl_;
    auto pw = weight.impl_;
    auto pb = bias.defined() ? bias.impl_ : nullptr;
    auto bw = [px, pw, pb, n, ci, h, w, co, cig, kh, kw, oh, ow, stride, padding, co_per_g,
               groups](TensorImpl& self) {
        const double* g = self.grad.data();
        const double* xp = px->data.data();
        const double* wp = pw->data.data();
        if (pb && pb->requires_grad) {
            pb->ensure_grad();
            for (int64_t oc = 0; oc < co; ++oc) {
                double acc = 0.0;
                for (int64_t in = 0; in < n; ++in) {
                    const double* gp = g + (in * co + oc) * oh * ow;
                    for (int64_t i = 0; i < oh * ow; ++i) acc += gp[i];
                }
                pb->grad[oc] += acc;
            }
        }
        if (pw->requires_grad) {
            pw->ensure_grad();
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static)
#endif
            for (int64_t oc = 0; oc < co; ++oc)
                for (int64_t icg = 0; icg < cig; ++icg) {
                    const int64_t gi = oc / co_per_g;
                    const int64_t c = gi * cig + icg;
                    for (int64_t ky = 0; ky < kh; ++ky)
                        for (int64_t kx = 0; kx < kw; ++kx) {
                            double acc = 0.0;
                            for (int64_t in = 0; in < n; ++in) {
                                const double* gp = g + (in * co + oc) * oh * ow;
                                const double* xc = xp + (in * ci + c) * h * w;
                                for (int64_t oy = 0; oy < oh; ++oy) {
                                    const int64_t iy = oy * stride - padding + ky;
                                    if (iy < 0 || iy >= h) continue;
                                    for (int64_t ox = 0; ox < ow; ++ox) {
                                        const int64_t ix = ox * stride - padding + kx;
                                        if (ix < 0 || ix >= w) continue;
                                        acc += gp[oy * ow + ox] * xc[iy * w + ix];
                                    }
                                }
                            }
                            pw->grad[((oc * cig + icg) * kh + ky) * kw + kx] += acc;
                        }
                }
        }
        if (px->requires_grad) {
            px->ensure_grad();
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static)
#endif
            for (int64_t in = 0; in < n; ++in)
                for (int64_t c = 0; c < ci; ++c) {
                    const int64_t gi = c / cig;
                    const int64_t icg = c % cig;
                    double* dxc = px->grad.data() + (in * ci + c) * h * w;
                    for (int64_t iy = 0; iy < h; ++iy)
                        for (int64_t ix = 0; ix < w; ++ix) {
                            double acc = 0.0;
                            for (int64_t oc = gi * co_per_g; oc < (gi + 1) * co_per_g; ++oc) {
                                const double* gp = g + (in * co + oc) * oh * ow;
                                const double* wc = wp + (oc * cig + icg) * kh * kw;
                                for (int64_t ky = 0; ky < kh; ++ky) {
                                    const int64_t num_y = iy + padding - ky;
                                    if (num_y < 0 || num_y % stride) continue;
                                    const int64_t oy = num_y / stride;
                                    if (oy >= oh) continue;
                                    for (int64_t kx = 0; kx < kw; ++kx) {
                                        const int64_t num_x = ix + padding - kx;
                                        if (num_x < 0 || num_x % stride) continue;
                                        const int64_t ox = num_x / stride;
                                        if (ox >= ow) continue;
                                        acc += gp[oy * ow + ox] * wc[ky * kw + kx];
                                    }
                                }
                            }
                            dxc[iy * w + ix] += acc;
                        }
                }
        }
    };
    std::vector<Tensor> parents{x, weight};
    if (bias.defined()) parents.push_back(bias);
    return make_op_result({n, co, oh, ow}, std::move(out), std::move(parents), std::move(bw));
}

// ---- deformable convolution --------------------------------------------------

namespace {

struct BilinearTap {
    // corner indices (-1 when outside) and weights
    int64_t idx[4];
    double wgt[4];
    // d(sample)/d(py), d(sample)/d(px) need the corner values; keep geometry
    int64_t y0, x0;
    double fy, fx;
};

inline void bilinear_geometry(double py, double px, int64_t h, int64_t w, BilinearTap& t) {
    const double fy0 = std::floor(py);
    const double fx0 = std::floor(px);
    const int64_t y0 = static_cast<int64_t>(fy0);
    const int64_t x0 = static_cast<int64_t>(fx0);
    const double dy = py - fy0;
    const double dx = px - fx0;
    t.y0 = y0;
    t.x0 = x0;
    t.fy = dy;
    t.fx = dx;
    const int64_t ys[2] = {y0, y0 + 1};
    const int64_t xs[2] = {x0, x0 + 1};
    const double wy[2] = {1.0 - dy, dy};
    const double wx[2] = {1.0 - dx, dx};
    int k = 0;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b, ++k) {
            if (ys[a] < 0 || ys[a] >= h || xs[b] < 0 || xs[b] >= w) {
                t.idx[k] = -1;
                t.wgt[k] = 0.0;
            } else {
                t.idx[k] = ys[a] * w + xs[b];
                t.wgt[k] = wy[a] * wx[b];
            }
        }
}

inline double bilinear_value(const double* plane, const BilinearTap& t) {
    double v = 0.0;
    for (int k = 0; k < 4; ++k)
        if (t.idx[k] >= 0) v += t.wgt[k] * plane[t.idx[k]];
    return v;
}

// derivative of the sampled value w.r.t. (py, px)
inline void bilinear_pos_grad(const double* plane, const BilinearTap& t, int64_t h, int64_t w,
                              double& dpy, double& dpx) {
    auto at = [&](int64_t y, int64_t x) -> double {
        if (y < 0 || y >= h || x < 0 || x >= w) return 0.0;
        return plane[y * w + x];
    };
    const double v00 = at(t.y0, t.x0), v01 = at(t.y0, t.x0 + 1);
    const double v10 = at(t.y0 + 1, t.x0), v11 = at(t.y0 + 1, t.x0 + 1);
    dpy = (1.0 - t.fx) * (v10 - v00) + t.fx * (v11 - v01);
    dpx = (1.0 - t.fy) * (v01 - v00) + t.fy * (v11 - v10);
}

}  // namespace

Tensor deformable_conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
                         const Tensor& offsets) {
    const Shape& xs = x.shape();
    const Shape& ws = weight.shape();
    const Shape& os = offsets.shape();
    require(xs.size() == 4 && ws.size() == 4 && os.size() == 4,
            "deformable_conv2d: 4D tensors expected");
    const int64_t n = xs[0], ci = xs[1], h = xs[2], w = xs[3];
    const int64_t co = ws[0], k = ws[2];
    require(ws[1] == ci && ws[3] == k && k % 2 == 1, "deformable_conv2d: weight must be [Co,Ci,k,k], k odd");
    require(os[0] == n && os[1] == 2 * k * k && os[2] == h && os[3] == w,
            "deformable_conv2d: offsets must be [N, 2*k*k, H, W]");
    if (bias.defined()) require(bias.numel() == co, "deformable_conv2d: bias size mismatch");
    const int64_t pad = k / 2;
    const int64_t kk = k * k;

    std::vector<double> out(static_cast<size_t>(n * co * h * w));
    const double* xp = x.impl_->data.data();
    const double* wp = weight.impl_->data.data();
    const double* bp = bias.defined() ? bias.impl_->data.data() : nullptr;
    const double* op = offsets.impl_->data.data();

#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static)
#endif
    for (int64_t in = 0; in < n; ++in)
        for (int64_t oy = 0; oy < h; ++oy) {
            std::vector<double> val(static_cast<size_t>(ci * kk));
            std::vector<BilinearTap> taps(static_cast<size_t>(kk));
            for (int64_t ox = 0; ox < w; ++ox) {
                for (int64_t t = 0; t < kk; ++t) {
                    const int64_t ky = t / k, kx = t % k;
                    const double dy = op[((in * 2 * kk + 2 * t) * h + oy) * w + ox];
                    const double dx = op[((in * 2 * kk + 2 * t + 1) * h + oy) * w + ox];
                    bilinear_geometry(oy - pad + ky + dy, ox - pad + kx + dx, h, w, taps[t]);
                }
                for (int64_t c = 0; c < ci; ++c) {
                    const double* plane = xp + (in * ci + c) * h * w;
                    for (int64_t t = 0; t < kk; ++t) val[c * kk + t] = bilinear_value(plane, taps[t]);
                }
                for (int64_t oc = 0; oc < co; ++oc) {
                    double acc = bp ? bp[oc] : 0.0;
                    const double* wc = wp + oc * ci * kk;
                    for (int64_t i = 0; i < ci * kk; ++i) acc += wc[i] * val[i];
                    out[((in * co + oc) * h + oy) * w + ox] = acc;
                }
            }
        }

    auto px = x.impl_;
    auto pw = weight.impl_;
    auto pb = bias.defined() ? bias.impl_ : nullptr;
    auto po = offsets.impl_;
    auto bw = [px, pw, pb, po, n, ci, h, w, co, k, kk, pad](TensorImpl& self) {
        const double* g = self.grad.data();
        const double* xp = px->data.data();
        const double* wp = pw->data.data();
        const double* op = po->data.data();
        const bool need_x = px->requires_grad;
        const bool need_w = pw->requires_grad;
        const bool need_o = po->requires_grad;
        const bool need_b = pb && pb->requires_grad;
        if (need_x) px->ensure_grad();
        if (need_w) pw->ensure_grad();
        if (need_o) po->ensure_grad();
        if (need_b) pb->ensure_grad();

        const int64_t wlen = co * ci * kk;
        std::vector<std::vector<double>> dw_local(static_cast<size_t>(n));
        std::vector<std::vector<double>> db_local(static_cast<size_t>(n));

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (int64_t in = 0; in < n; ++in) {
            std::vector<double>& dw = dw_local[in];
            std::vector<double>& db = db_local[in];
            if (need_w) dw.assign(static_cast<size_t>(wlen), 0.0);
            if (need_b) db.assign(static_cast<size_t>(co), 0.0);
            std::vector<double> val(static_cast<size_t>(ci * kk));
            std::vector<double> dval(static_cast<size_t>(ci * kk));
            std::vector<BilinearTap> taps(static_cast<size_t>(kk));
            for (int64_t oy = 0; oy < h; ++oy)
                for (int64_t ox = 0; ox < w; ++ox) {
                    for (int64_t t = 0; t < kk; ++t) {
                        const int64_t ky = t / k, kx = t % k;
                        const double dy = op[((in * 2 * kk + 2 * t) * h + oy) * w + ox];
                        const double dx = op[((in * 2 * kk + 2 * t + 1) * h + oy) * w + ox];
                        bilinear_geometry(oy - pad + ky + dy, ox - pad + kx + dx, h, w, taps[t]);
                    }
                    if (need_w) {
                        for (int64_t c = 0; c < ci; ++c) {
                            const double* plane = xp + (in * ci + c) * h * w;
                            for (int64_t t = 0; t < kk; ++t)
                                val[c * kk + t] = bilinear_value(plane, taps[t]);
                        }
                    }
                    std::fill(dval.begin(), dval.end(), 0.0);
                    for (int64_t oc = 0; oc < co; ++oc) {
                        const double gv = g[((in * co + oc) * h + oy) * w + ox];
                        if (gv == 0.0) continue;
                        if (need_b) db[oc] += gv;
                        const double* wc = wp + oc * ci * kk;
                        for (int64_t i = 0; i < ci * kk; ++i) dval[i] += gv * wc[i];
                        if (need_w) {
                            double* dwc = dw.data() + oc * ci * kk;
                            for (int64_t i = 0; i < ci * kk; ++i) dwc[i] += gv * val[i];
                        }
                    }
                    if (need_x) {
                        for (int64_t c = 0; c < ci; ++c) {
                            double* dplane = px->grad.data() + (in * ci + c) * h * w;
                            for (int64_t t = 0; t < kk; ++t) {
                                const double dv = dval[c * kk + t];
                                if (dv == 0.0) continue;
                                const BilinearTap& tp = taps[t];
                                for (int q = 0; q < 4; ++q)
                                    if (tp.idx[q] >= 0) dplane[tp.idx[q]] += dv * tp.wgt[q];
                            }
                        }
                    }
                    if (need_o) {
                        for (int64_t t = 0; t < kk; ++t) {
                            double gy = 0.0, gx = 0.0;
                            for (int64_t c = 0; c < ci; ++c) {
                                const double dv = dval[c * kk + t];
                                if (dv == 0.0) continue;
                                double dpy, dpx;
                                bilinear_pos_grad(xp + (in * ci + c) * h * w, taps[t], h, w, dpy,
                                                  dpx);
                                gy += dv * dpy;
                                gx += dv * dpx;
                            }
                            po->grad[((in * 2 * kk + 2 * t) * h + oy) * w + ox] += gy;
                            po->grad[((in * 2 * kk + 2 * t + 1) * h + oy) * w + ox] += gx;
                        }
                    }
                }
        }
        if (need_w)
            for (int64_t in = 0; in < n; ++in)
                for (int64_t i = 0; i < wlen; ++i) pw->grad[i] += dw_local[in][i];
        if (need_b)
            for (int64_t in = 0; in < n; ++in)
                for (int64_t oc = 0; oc < co; ++oc) pb->grad[oc] += db_local[in][oc];
    };
    std::vector<Tensor> parents{x, weight, offsets};
    if (bias.defined()) parents.push_back(bias);
    return make_op_result({n, co, h, w}, std::move(out), std::move(parents), std::move(bw));
}

// ---- pooling ------------------------------------------------------------------

Tensor maxpool2d(const Tensor& x) {
    const Shape& s = x.shape();
    require(s.size() == 4, "maxpool2d: 4D tensor expected");
    const int64_t n = s[0], c = s[1], h = s[2], w = s[3];
    require(h % 2 == 0 && w % 2 == 0, "maxpool2d: spatial dims must be even");
    const int64_t oh = h / 2, ow = w / 2;
    std::vector<double> out(static_cast<size_t>(n * c * oh * ow));
    auto argmax = std::make_shared<std::vector<int64_t>>(out.size());
    const double* xp = x.impl_->data.data();
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int64_t nc = 0; nc < n * c; ++nc) {
        const double* plane = xp + nc * h * w;
        double* o = out.data() + nc * oh * ow;
        int64_t* am = argmax->data() + nc * oh * ow;
        for (int64_t oy = 0; oy < oh; ++oy)
            for (int64_t ox = 0; ox < ow; ++ox) {
                int64_t base = (2 * oy) * w + 2 * ox;
                int64_t best = base;
                double bv = plane[base];
                const int64_t cands[3] = {base + 1, base + w, base + w + 1};
                for (int64_t cand : cands)
                    if (plane[cand] > bv) {
                        bv = plane[cand];
                        best = cand;
                    }
                o[oy * ow + ox] = bv;
                am[oy * ow + ox] = best;
            }
    }
    auto px = x.impl_;
    return make_op_result({n, c, oh, ow}, std::move(out), {x},
                          [px, argmax, n, c, h, w, oh, ow](TensorImpl& self) {
                              px->ensure_grad();
                              for (int64_t nc = 0; nc < n * c; ++nc) {
                                  double* dplane = px->grad.data() + nc * h * w;
                                  const double* g = self.grad.data() + nc * oh * ow;
                                  const int64_t* am = argmax->data() + nc * oh * ow;
                                  for (int64_t i = 0; i < oh * ow; ++i) dplane[am[i]] += g[i];
                              }
                          });
}

// ---- normalization --------------------------------------------------------------

Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                   Tensor& running_var, bool training, double momentum, double eps) {
    const Shape& s = x.shape();
    require(s.size() == 4, "batchnorm2d: 4D tensor expected");
    const int64_t n = s[0], c = s[1], h = s[2], w = s[3];
    require(gamma.numel() == c && beta.numel() == c && running_mean.numel() == c &&
                running_var.numel() == c,
            "batchnorm2d: parameter size mismatch");
    const int64_t m = n * h * w;
    const int64_t plane = h * w;
    const double* xp = x.impl_->data.data();
    const double* gp = gamma.impl_->data.data();
    const double* bp = beta.impl_->data.data();
    std::vector<double> out(x.numel());

    auto mu = std::make_shared<std::vector<double>>(c);
    auto invstd = std::make_shared<std::vector<double>>(c);

    if (training) {
        require(m >= 2, "batchnorm2d: training needs at least 2 samples per channel");
        double* rm = running_mean.impl_->data.data();
        double* rv = running_var.impl_->data.data();
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (int64_t ch = 0; ch < c; ++ch) {
            double acc = 0.0;
            for (int64_t in = 0; in < n; ++in) {
                const double* p = xp + (in * c + ch) * plane;
                for (int64_t i = 0; i < plane; ++i) acc += p[i];
            }
            const double mean_c = acc / static_cast<double>(m);
            double vacc = 0.0;
            for (int64_t in = 0; in < n; ++in) {
                const double* p = xp + (in * c + ch) * plane;
                for (int64_t i = 0; i < plane; ++i) {
                    const double d = p[i] - mean_c;
                    vacc += d * d;
                }
            }
            const double var_c = vacc / static_cast<double>(m);
            (*mu)[ch] = mean_c;
            (*invstd)[ch] = 1.0 / std::sqrt(var_c + eps);
            rm[ch] = (1.0 - momentum) * rm[ch] + momentum * mean_c;
            rv[ch] = (1.0 - momentum) * rv[ch] +
                     momentum * vacc / static_cast<double>(m - 1);
            for (int64_t in = 0; in < n; ++in) {
                const double* p = xp + (in * c + ch) * plane;
                double* o = out.data() + (in * c + ch) * plane;
                for (int64_t i = 0; i < plane; ++i)
                    o[i] = gp[ch] * (p[i] - mean_c) * (*invstd)[ch] + bp[ch];
            }
        }
    } else {
        const double* rm = running_mean.impl_->data.data();
        const double* rv = running_var.impl_->data.data();
        for (int64_t ch = 0; ch < c; ++ch) {
            (*mu)[ch] = rm[ch];
            (*invstd)[ch] = 1.0 / std::sqrt(rv[ch] + eps);
        }
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t in = 0; in < n; ++in) {
                const double* p = xp + (in * c + ch) * plane;
                double* o = out.data() + (in * c + ch) * plane;
                for (int64_t i = 0; i < plane; ++i)
                    o[i] = gp[ch] * (p[i] - (*mu)[ch]) * (*invstd)[ch] + bp[ch];
            }
    }

    auto px = x.impl_;
    auto pg = gamma.impl_;
    auto pbeta = beta.impl_;
    auto bw = [px, pg, pbeta, mu, invstd, n, c, plane, m, training](TensorImpl& self) {
        const double* g = self.grad.data();
        const double* xp = px->data.data();
        const bool need_x = px->requires_grad;
        const bool need_g = pg->requires_grad;
        const bool need_b = pbeta->requires_grad;
        if (need_x) px->ensure_grad();
        if (need_g) pg->ensure_grad();
        if (need_b) pbeta->ensure_grad();
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (int64_t ch = 0; ch < c; ++ch) {
            const double mc = (*mu)[ch];
            const double is = (*invstd)[ch];
            const double gam = pg->data[ch];
            double sum_g = 0.0, sum_gx = 0.0;
            for (int64_t in = 0; in < n; ++in) {
                const double* gpp = g + (in * c + ch) * plane;
                const double* xpp = xp + (in * c + ch) * plane;
                for (int64_t i = 0; i < plane; ++i) {
                    sum_g += gpp[i];
                    sum_gx += gpp[i] * (xpp[i] - mc) * is;
                }
            }
            if (need_b) pbeta->grad[ch] += sum_g;
            if (need_g) pg->grad[ch] += sum_gx;
            if (need_x) {
                if (training) {
                    const double inv_m = 1.0 / static_cast<double>(m);
                    for (int64_t in = 0; in < n; ++in) {
                        const double* gpp = g + (in * c + ch) * plane;
                        const double* xpp = xp + (in * c + ch) * plane;
                        double* dx = px->grad.data() + (in * c + ch) * plane;
                        for (int64_t i = 0; i < plane; ++i) {
                            const double xhat = (xpp[i] - mc) * is;
                            dx[i] += gam * is * (gpp[i] - inv_m * sum_g - xhat * inv_m * sum_gx);
                        }
                    }
                } else {
                    for (int64_t in = 0; in < n; ++in) {
                        const double* gpp = g + (in * c + ch) * plane;
                        double* dx = px->grad.data() + (in * c + ch) * plane;
                        for (int64_t i = 0; i < plane; ++i) dx[i] += gam * is * gpp[i];
                    }
                }
            }
        }
    };
    return make_op_result(s, std::move(out), {x, gamma, beta}, std::move(bw));
}

Tensor layernorm_chan(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    const Shape& s = x.shape();
    require(s.size() == 4, "layernorm_chan: 4D tensor expected");
    const int64_t n = s[0], c = s[1], h = s[2], w = s[3];
    require(gamma.numel() == c && beta.numel() == c, "layernorm_chan: parameter size mismatch");
    const int64_t plane = h * w;
    const double* xp = x.impl_->data.data();
    const double* gp = gamma.impl_->data.data();
    const double* bp = beta.impl_->data.data();
    std::vector<double> out(x.numel());
    auto invstd = std::make_shared<std::vector<double>>(static_cast<size_t>(n * plane));
    auto mu = std::make_shared<std::vector<double>>(static_cast<size_t>(n * plane));
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int64_t in = 0; in < n; ++in)
        for (int64_t i = 0; i < plane; ++i) {
            double acc = 0.0;
            for (int64_t ch = 0; ch < c; ++ch) acc += xp[(in * c + ch) * plane + i];
            const double m = acc / static_cast<double>(c);
            double v = 0.0;
            for (int64_t ch = 0; ch < c; ++ch) {
                const double d = xp[(in * c + ch) * plane + i] - m;
                v += d * d;
            }
            v /= static_cast<double>(c);
            const double is = 1.0 / std::sqrt(v + eps);
            (*mu)[in * plane + i] = m;
            (*invstd)[in * plane + i] = is;
            for (int64_t ch = 0; ch < c; ++ch)
                out[(in * c + ch) * plane + i] = gp[ch] * (xp[(in * c + ch) * plane + i] - m) * is + bp[ch];
        }
    auto px = x.impl_;
    auto pg = gamma.impl_;
    auto pbeta = beta.impl_;
    auto bw = [px, pg, pbeta, mu, invstd, n, c, plane](TensorImpl& self) {
        const double* g = self.grad.data();
        const double* xp = px->data.data();
        const bool need_x = px->requires_grad;
        if (need_x) px->ensure_grad();
        pg->ensure_grad();
        pbeta->ensure_grad();
        // per-position normalization backward; channel affine grads accumulated serially
        for (int64_t in = 0; in < n; ++in)
            for (int64_t i = 0; i < plane; ++i) {
                const double m = (*mu)[in * plane + i];
                const double is = (*invstd)[in * plane + i];
                double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                for (int64_t ch = 0; ch < c; ++ch) {
                    const double xhat = (xp[(in * c + ch) * plane + i] - m) * is;
                    const double gv = g[(in * c + ch) * plane + i];
                    const double dxhat = gv * pg->data[ch];
                    sum_dxhat += dxhat;
                    sum_dxhat_xhat += dxhat * xhat;
                    if (pg->requires_grad) pg->grad[ch] += gv * xhat;
                    if (pbeta->requires_grad) pbeta->grad[ch] += gv;
                }
                if (need_x) {
                    const double inv_c = 1.0 / static_cast<double>(c);
                    for (int64_t ch = 0; ch < c; ++ch) {
                        const double xhat = (xp[(in * c + ch) * plane + i] - m) * is;
                        const double dxhat = g[(in * c + ch) * plane + i] * pg->data[ch];
                        px->grad[(in * c + ch) * plane + i] +=
                            is * (dxhat - inv_c * sum_dxhat - xhat * inv_c * sum_dxhat_xhat);
                    }
                }
            }
    };
    return make_op_result(s, std::move(out), {x, gamma, beta}, std::move(bw));
}

// ---- linear / pooling over space -------------------------------------------------

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    const Shape& xs = x.shape();
    const Shape& ws = weight.shape();
    require(xs.size() == 2 && ws.size() == 2 && ws[1] == xs[1], "linear: shape mismatch");
    const int64_t n = xs[0], in_dim = xs[1], out_dim = ws[0];
    if (bias.defined()) require(bias.numel() == out_dim, "linear: bias size mismatch");
    std::vector<double> out(static_cast<size_t>(n * out_dim));
    const double* xp = x.impl_->data.data();
    const double* wp = weight.impl_->data.data();
    const double* bp = bias.defined() ? bias.impl_->data.data() : nullptr;
    for (int64_t i = 0; i < n; ++i)
        for (int64_t o = 0; o < out_dim; ++o) {
            double acc = bp ? bp[o] : 0.0;
            for (int64_t j = 0; j < in_dim; ++j) acc += xp[i * in_dim + j] * wp[o * in_dim + j];
            out[i * out_dim + o] = acc;
        }
    auto px = x.impl_;
    auto pw = weight.impl_;
    auto pb = bias.defined() ? bias.impl_ : nullptr;
    auto bw = [px, pw, pb, n, in_dim, out_dim](TensorImpl& self) {
        const double* g = self.grad.data();
        if (px->requires_grad) {
            px->ensure_grad();
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = 0; j < in_dim; ++j) {
                    double acc = 0.0;
                    for (int64_t o = 0; o < out_dim; ++o)
                        acc += g[i * out_dim + o] * pw->data[o * in_dim + j];
                    px->grad[i * in_dim + j] += acc;
                }
        }
        if (pw->requires_grad) {
            pw->ensure_grad();
            for (int64_t o = 0; o < out_dim; ++o)
                for (int64_t j = 0; j < in_dim; ++j) {
                    double acc = 0.0;
                    for (int64_t i = 0; i < n; ++i)
                        acc += g[i * out_dim + o] * px->data[i * in_dim + j];
                    pw->grad[o * in_dim + j] += acc;
                }
        }
        if (pb && pb->requires_grad) {
            pb->ensure_grad();
            for (int64_t o = 0; o < out_dim; ++o) {
                double acc = 0.0;
                for (int64_t i = 0; i < n; ++i) acc += g[i * out_dim + o];
                pb->grad[o] += acc;
            }
        }
    };
    std::vector<Tensor> parents{x, weight};
    if (bias.defined()) parents.push_back(bias);
    return make_op_result({n, out_dim}, std::move(out), std::move(parents), std::move(bw));
}

Tensor gap(const Tensor& x) {
    const Shape& s = x.shape();
    require(s.size() == 4, "gap: 4D tensor expected");
    const int64_t n = s[0], c = s[1], plane = s[2] * s[3];
    std::vector<double> out(static_cast<size_t>(n * c));
    const double* xp = x.impl_->data.data();
    for (int64_t nc = 0; nc < n * c; ++nc) {
        double acc = 0.0;
        const double* p = xp + nc * plane;
        for (int64_t i = 0; i < plane; ++i) acc += p[i];
        out[nc] = acc / static_cast<double>(plane);
    }
    auto px = x.impl_;
    return make_op_result({n, c}, std::move(out), {x}, [px, n, c, plane](TensorImpl& self) {
        px->ensure_grad();
        for (int64_t nc = 0; nc < n * c; ++nc) {
            const double g = self.grad[nc] / static_cast<double>(plane);
            double* dp = px->grad.data() + nc * plane;
            for (int64_t i = 0; i < plane; ++i) dp[i] += g;
        }
    });
}

Tensor gmp(const Tensor& x) {
    const Shape& s = x.shape();
    require(s.size() == 4, "gmp: 4D tensor expected");
    const int64_t n = s[0], c = s[1], plane = s[2] * s[3];
    std::vector<double> out(static_cast<size_t>(n * c));
    auto argmax = std::make_shared<std::vector<int64_t>>(out.size());
    const double* xp = x.impl_->data.data();
    for (int64_t nc = 0; nc < n * c; ++nc) {
        const double* p = xp + nc * plane;
        int64_t best = 0;
        for (int64_t i = 1; i < plane; ++i)
            if (p[i] > p[best]) best = i;
        out[nc] = p[best];
        (*argmax)[nc] = best;
    }
    auto px = x.impl_;
    return make_op_result({n, c}, std::move(out), {x}, [px, argmax, n, c, plane](TensorImpl& self) {
        px->ensure_grad();
        for (int64_t nc = 0; nc < n * c; ++nc)
            px->grad[nc * plane + (*argmax)[nc]] += self.grad[nc];
    });
}

Tensor channel_mean(const Tensor& x) {
    const Shape& s = x.shape();
    require(s.size() == 4, "channel_mean: 4D tensor expected");
    const int64_t n = s[0], c = s[1], plane = s[2] * s[3];
    std::vector<double> out(static_cast<size_t>(n * plane));
    const double* xp = x.impl_->data.data();
    for (int64_t in = 0; in < n; ++in)
        for (int64_t i = 0; i < plane; ++i) {
            double acc = 0.0;
            for (int64_t ch = 0; ch < c; ++ch) acc += xp[(in * c + ch) * plane + i];
            out[in * plane + i] = acc / static_cast<double>(c);
        }
    auto px = x.impl_;
    return make_op_result({n, 1, s[2], s[3]}, std::move(out), {x},
                          [px, n, c, plane](TensorImpl& self) {
                              px->ensure_grad();
                              for (int64_t in = 0; in < n; ++in)
                                  for (int64_t i = 0; i < plane; ++i) {
                                      const double g = self.grad[in * plane + i] / static_cast<double>(c);
                                      for (int64_t ch = 0; ch < c; ++ch)
                                          px->grad[(in * c + ch) * plane + i] += g;
                                  }
                          });
}

Tensor channel_max(const Tensor& x) {
    const Shape& s = x.shape();
    require(s.size() == 4, "channel_max: 4D tensor expected");
    const int64_t n = s[0], c = s[1], plane = s[2] * s[3];
    std::vector<double> out(static_cast<size_t>(n * plane));
    auto argmax = std::make_shared<std::vector<int64_t>>(out.size());
    const double* xp = x.impl_->data.data();
    for (int64_t in = 0; in < n; ++in)
        for (int64_t i = 0; i < plane; ++i) {
            int64_t best = 0;
            for (int64_t ch = 1; ch < c; ++ch)
                if (xp[(in * c + ch) * plane + i] > xp[(in * c + best) * plane + i]) best = ch;
            out[in * plane + i] = xp[(in * c + best) * plane + i];
            (*argmax)[in * plane + i] = best;
        }
    auto px = x.impl_;
    return make_op_result({n, 1, s[2], s[3]}, std::move(out), {x},
                          [px, argmax, n, c, plane](TensorImpl& self) {
                              px->ensure_grad();
                              for (int64_t in = 0; in < n; ++in)
                                  for (int64_t i = 0; i < plane; ++i) {
                                      const int64_t ch = (*argmax)[in * plane + i];
                                      px->grad[(in * c + ch) * plane + i] += self.grad[in * plane + i];
                                  }
                          });
}

Tensor mul_channel_gate(const Tensor& x, const Tensor& gate) {
    const Shape& s = x.shape();
    require(s.size() == 4, "mul_channel_gate: 4D tensor expected");
    const int64_t n = s[0], c = s[1], plane = s[2] * s[3];
    require(gate.shape() == Shape({n, c}), "mul_channel_gate: gate must be [N, C]");
    std::vector<double> out(x.numel());
    const double* xp = x.impl_->data.data();
    const double* gp = gate.impl_->data.data();
    for (int64_t nc = 0; nc < n * c; ++nc) {
        const double gv = gp[nc];
        const double* p = xp + nc * plane;
        double* o = out.data() + nc * plane;
        for (int64_t i = 0; i < plane; ++i) o[i] = p[i] * gv;
    }
    auto px = x.impl_;
    auto pg = gate.impl_;
    return make_op_result(s, std::move(out), {x, gate}, [px, pg, n, c, plane](TensorImpl& self) {
        if (px->requires_grad) {
            px->ensure_grad();
            for (int64_t nc = 0; nc < n * c; ++nc) {
                const double gv = pg->data[nc];
                const double* g = self.grad.data() + nc * plane;
                double* dp = px->grad.data() + nc * plane;
                for (int64_t i = 0; i < plane; ++i) dp[i] += g[i] * gv;
            }
        }
        if (pg->requires_grad) {
            pg->ensure_grad();
            for (int64_t nc = 0; nc < n * c; ++nc) {
                const double* g = self.grad.data() + nc * plane;
                const double* p = px->data.data() + nc * plane;
                double acc = 0.0;
                for (int64_t i = 0; i < plane; ++i) acc += g[i] * p[i];
                pg->grad[nc] += acc;
            }
        }
    });
}

Tensor mul_spatial_gate(const Tensor& x, const Tensor& gate) {
    const Shape& s = x.shape();
    require(s.size() == 4, "mul_spatial_gate: 4D tensor expected");
    const int64_t n = s[0], c = s[1], plane = s[2] * s[3];
    require(gate.shape() == Shape({n, 1, s[2], s[3]}), "mul_spatial_gate: gate must be [N,1,H,W]");
    std::vector<double> out(x.numel());
    const double* xp = x.impl_->data.data();
    const double* gp = gate.impl_->data.data();
    for (int64_t in = 0; in < n; ++in)
        for (int64_t ch = 0; ch < c; ++ch) {
            const double* p = xp + (in * c + ch) * plane;
            const double* gv = gp + in * plane;
            double* o = out.data() + (in * c + ch) * plane;
            for (int64_t i = 0; i < plane; ++i) o[i] = p[i] * gv[i];
        }
    auto px = x.impl_;
    auto pg = gate.impl_;
    return make_op_result(s, std::move(out), {x, gate}, [px, pg, n, c, plane](TensorImpl& self) {
        if (px->requires_grad) {
            px->ensure_grad();
            for (int64_t in = 0; in < n; ++in)
                for (int64_t ch = 0; ch < c; ++ch) {
                    const double* g = self.grad.data() + (in * c + ch) * plane;
                    const double* gv = pg->data.data() + in * plane;
                    double* dp = px->grad.data() + (in * c + ch) * plane;
                    for (int64_t i = 0; i < plane; ++i) dp[i] += g[i] * gv[i];
                }
        }
        if (pg->requires_grad) {
            pg->ensure_grad();
            for (int64_t in = 0; in < n; ++in)
                for (int64_t i = 0; i < plane; ++i) {
                    double acc = 0.0;
                    for (int64_t ch = 0; ch < c; ++ch)
                        acc += self.grad[(in * c + ch) * plane + i] * px->data[(in * c + ch) * plane + i];
                    pg->grad[in * plane + i] += acc;
                }
        }
    });
}

Tensor bilinear_resize(const Tensor& x, int64_t out_h, int64_t out_w) {
    const Shape& s = x.shape();
    require(s.size() == 4, "bilinear_resize: 4D tensor expected");
    require(out_h >= 1 && out_w >= 1, "bilinear_resize: bad output size");
    const int64_t n = s[0], c = s[1], h = s[2], w = s[3];
    if (out_h == h && out_w == w) return mul_scalar(x, 1.0);
    const double sy = static_cast<double>(h) / static_cast<double>(out_h);
    const double sx = static_cast<double>(w) / static_cast<double>(out_w);

    struct Interp {
        int64_t i0, i1;
        double f;
    };
    auto make_axis = [](int64_t out_n, int64_t in_n, double scale) {
        std::vector<Interp> v(out_n);
        for (int64_t o = 0; o < out_n; ++o) {
            double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
            src = std::max(0.0, std::min(src, static_cast<double>(in_n - 1)));
            const int64_t i0 = static_cast<int64_t>(std::floor(src));
            v[o] = {i0, std::min(i0 + 1, in_n - 1), src - static_cast<double>(i0)};
        }
        return v;
    };
    auto ay = std::make_shared<std::vector<Interp>>(make_axis(out_h, h, sy));
    auto ax = std::make_shared<std::vector<Interp>>(make_axis(out_w, w, sx));

    std::vector<double> out(static_cast<size_t>(n * c * out_h * out_w));
    const double* xp = x.impl_->data.data();
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int64_t nc = 0; nc < n * c; ++nc) {
        const double* plane = xp + nc * h * w;
        double* o = out.data() + nc * out_h * out_w;
        for (int64_t oy = 0; oy < out_h; ++oy) {
            const auto& iy = (*ay)[oy];
            for (int64_t ox = 0; ox < out_w; ++ox) {
                const auto& ix = (*ax)[ox];
                const double v00 = plane[iy.i0 * w + ix.i0];
                const double v01 = plane[iy.i0 * w + ix.i1];
                const double v10 = plane[iy.i1 * w + ix.i0];
                const double v11 = plane[iy.i1 * w + ix.i1];
                const double top = v00 + (v01 - v00) * ix.f;
                const double bot = v10 + (v11 - v10) * ix.f;
                o[oy * out_w + ox] = top + (bot - top) * iy.f;
            }
        }
    }
    auto px = x.impl_;
    return make_op_result({n, c, out_h, out_w}, std::move(out), {x},
                          [px, ay, ax, n, c, h, w, out_h, out_w](TensorImpl& self) {
                              px->ensure_grad();
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
                              for (int64_t nc = 0; nc < n * c; ++nc) {
                                  double* dplane = px->grad.data() + nc * h * w;
                                  const double* g = self.grad.data() + nc * out_h * out_w;
                                  for (int64_t oy = 0; oy < out_h; ++oy) {
                                      const auto& iy = (*ay)[oy];
                                      for (int64_t ox = 0; ox < out_w; ++ox) {
                                          const auto& ix = (*ax)[ox];
                                          const double gv = g[oy * out_w + ox];
                                          dplane[iy.i0 * w + ix.i0] += gv * (1 - iy.f) * (1 - ix.f);
                                          dplane[iy.i0 * w + ix.i1] += gv * (1 - iy.f) * ix.f;
                                          dplane[iy.i1 * w + ix.i0] += gv * iy.f * (1 - ix.f);
                                          dplane[iy.i1 * w + ix.i1] += gv * iy.f * ix.f;
                                      }
                                  }
                              }
                          });
}

Tensor add_broadcast_batch(const Tensor& x, const Tensor& p) {
    const Shape& s = x.shape();
    require(s.size() == 4 && p.shape().size() == 4, "add_broadcast_batch: 4D tensors expected");
    require(p.shape()[0] == 1 && p.shape()[1] == s[1] && p.shape()[2] == s[2] &&
                p.shape()[3] == s[3],
            "add_broadcast_batch: p must be [1,C,H,W] matching x");
    const int64_t n = s[0];
    const int64_t per = p.numel();
    std::vector<double> out(x.numel());
    const double* xp = x.impl_->data.data();
    const double* pp = p.impl_->data.data();
    for (int64_t in = 0; in < n; ++in)
        for (int64_t i = 0; i < per; ++i) out[in * per + i] = xp[in * per + i] + pp[i];
    auto px = x.impl_;
    auto ppi = p.impl_;
    return make_op_result(s, std::move(out), {x, p}, [px, ppi, n, per](TensorImpl& self) {
        if (px->requires_grad) {
            px->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) px->grad[i] += self.grad[i];
        }
        if (ppi->requires_grad) {
            ppi->ensure_grad();
            for (int64_t in = 0; in < n; ++in)
                for (int64_t i = 0; i < per; ++i) ppi->grad[i] += self.grad[in * per + i];
        }
    });
}

// ---- Haar transform on the tape ----------------------------------------------

namespace {
inline void haar_block_fwd(double x00, double x01, double x10, double x11, double& ll, double& lh,
                           double& hl, double& hh) {
    ll = 0.5 * (x00 + x01 + x10 + x11);
    lh = 0.5 * (x00 + x01 - x10 - x11);
    hl = 0.5 * (x00 - x01 + x10 - x11);
    hh = 0.5 * (x00 - x01 - x10 + x11);
}
inline void haar_block_inv(double ll, double lh, double hl, double hh, double& x00, double& x01,
                           double& x10, double& x11) {
    x00 = 0.5 * (ll + lh + hl + hh);
    x01 = 0.5 * (ll + lh - hl - hh);
    x10 = 0.5 * (ll - lh + hl - hh);
    x11 = 0.5 * (ll - lh - hl + hh);
}
}  // namespace

Tensor dwt2(const Tensor& x) {
    const Shape& s = x.shape();
    require(s.size() == 4, "dwt2: 4D tensor expected");
    const int64_t n = s[0], c = s[1], h = s[2], w = s[3];
    require(h % 2 == 0 && w % 2 == 0, "dwt2: spatial dims must be even");
    const int64_t oh = h / 2, ow = w / 2, plane = oh * ow;
    std::vector<double> out(static_cast<size_t>(n * 4 * c * plane));
    const double* xp = x.impl_->data.data();
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int64_t nc = 0; nc < n * c; ++nc) {
        const int64_t in = nc / c, ch = nc % c;
        const double* p = xp + nc * h * w;
        double* ll = out.data() + ((in * 4 * c) + ch) * plane;
        double* lh = out.data() + ((in * 4 * c) + c + ch) * plane;
        double* hl = out.data() + ((in * 4 * c) + 2 * c + ch) * plane;
        double* hh = out.data() + ((in * 4 * c) + 3 * c + ch) * plane;
        for (int64_t oy = 0; oy < oh; ++oy)
            for (int64_t ox = 0; ox < ow; ++ox) {
                const int64_t base = (2 * oy) * w + 2 * ox;
                haar_block_fwd(p[base], p[base + 1], p[base + w], p[base + w + 1],
                               ll[oy * ow + ox], lh[oy * ow + ox], hl[oy * ow + ox],
                               hh[oy * ow + ox]);
            }
    }
    auto px = x.impl_;
    return make_op_result({n, 4 * c, oh, ow}, std::move(out), {x},
                          [px, n, c, h, w, oh, ow, plane](TensorImpl& self) {
                              px->ensure_grad();
                              const double* g = self.grad.data();
                              for (int64_t nc = 0; nc < n * c; ++nc) {
                                  const int64_t in = nc / c, ch = nc % c;
                                  double* dp = px->grad.data() + nc * h * w;
                                  const double* gll = g + ((in * 4 * c) + ch) * plane;
                                  const double* glh = g + ((in * 4 * c) + c + ch) * plane;
                                  const double* ghl = g + ((in * 4 * c) + 2 * c + ch) * plane;
                                  const double* ghh = g + ((in * 4 * c) + 3 * c + ch) * plane;
                                  for (int64_t oy = 0; oy < oh; ++oy)
                                      for (int64_t ox = 0; ox < ow; ++ox) {
                                          double a, b2, c2, d;
                                          haar_block_inv(gll[oy * ow + ox], glh[oy * ow + ox],
                                                         ghl[oy * ow + ox], ghh[oy * ow + ox], a,
                                                         b2, c2, d);
                                          const int64_t base = (2 * oy) * w + 2 * ox;
                                          dp[base] += a;
                                          dp[base + 1] += b2;
                                          dp[base + w] += c2;
                                          dp[base + w + 1] += d;
                                      }
                              }
                          });
}

Tensor idwt2(const Tensor& bands) {
    const Shape& s = bands.shape();
    require(s.size() == 4, "idwt2: 4D tensor expected");
    require(s[1] % 4 == 0, "idwt2: channel count must be 4*C");
    const int64_t n = s[0], c = s[1] / 4, oh = s[2], ow = s[3], plane = oh * ow;
    const int64_t h = 2 * oh, w = 2 * ow;
    std::vector<double> out(static_cast<size_t>(n * c * h * w));
    const double* bp = bands.impl_->data.data();
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int64_t nc = 0; nc < n * c; ++nc) {
        const int64_t in = nc / c, ch = nc % c;
        double* p = out.data() + nc * h * w;
        const double* ll = bp + ((in * 4 * c) + ch) * plane;
        const double* lh = bp + ((in * 4 * c) + c + ch) * plane;
        const double* hl = bp + ((in * 4 * c) + 2 * c + ch) * plane;
        const double* hh = bp + ((in * 4 * c) + 3 * c + ch) * plane;
        for (int64_t oy = 0; oy < oh; ++oy)
            for (int64_t ox = 0; ox < ow; ++ox) {
                const int64_t base = (2 * oy) * w + 2 * ox;
                haar_block_inv(ll[oy * ow + ox], lh[oy * ow + ox], hl[oy * ow + ox],
                               hh[oy * ow + ox], p[base], p[base + 1], p[base + w], p[base + w + 1]);
            }
    }
    auto pb = bands.impl_;
    return make_op_result({n, c, h, w}, std::move(out), {bands},
                          [pb, n, c, h, w, oh, ow, plane](TensorImpl& self) {
                              pb->ensure_grad();
                              const double* g = self.grad.data();
                              for (int64_t nc = 0; nc < n * c; ++nc) {
                                  const int64_t in = nc / c, ch = nc % c;
                                  const double* gp = g + nc * h * w;
                                  double* ll = pb->grad.data() + ((in * 4 * c) + ch) * plane;
                                  double* lh = pb->grad.data() + ((in * 4 * c) + c + ch) * plane;
                                  double* hl = pb->grad.data() + ((in * 4 * c) + 2 * c + ch) * plane;
                                  double* hh = pb->grad.data() + ((in * 4 * c) + 3 * c + ch) * plane;
                                  for (int64_t oy = 0; oy < oh; ++oy)
                                      for (int64_t ox = 0; ox < ow; ++ox) {
                                          const int64_t base = (2 * oy) * w + 2 * ox;
                                          double a, b2, c2, d;
                                          haar_block_fwd(gp[base], gp[base + 1], gp[base + w],
                                                         gp[base + w + 1], a, b2, c2, d);
                                          ll[oy * ow + ox] += a;
                                          lh[oy * ow + ox] += b2;
                                          hl[oy * ow + ox] += c2;
                                          hh[oy * ow + ox] += d;
                                      }
                              }
                          });
}

}  // namespace sarfah
