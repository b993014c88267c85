#include "sarfah/ssm.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

#include "sarfah/layers.hpp"

namespace sarfah {

double zoh_phi1_direct(double z) { return std::expm1(z) / z; }

double zoh_phi1_series(double z) { return 1.0 + z * (0.5 + z * (1.0 / 6.0)); }

double zoh_phi1(double z) { return std::fabs(z) < 1e-8 ? zoh_phi1_series(z) : zoh_phi1_direct(z); }

double zoh_phi1_deriv(double z) {
    if (std::fabs(z) < 1e-3) return 0.5 + z * (1.0 / 3.0 + z * 0.125);
    return (std::exp(z) * (z - 1.0) + 1.0) / (z * z);
}

ZohResult zoh_discretize(std::span<const double> a_diag, std::span<const double> b, double delta) {
    if (!(delta > 0.0)) throw std::invalid_argument("zoh_discretize: delta must be positive");
    if (a_diag.size() != b.size() || a_diag.empty())
        throw std::invalid_argument("zoh_discretize: A and B must be same nonzero length");
    ZohResult r;
    r.a_bar.resize(a_diag.size());
    r.b_bar.resize(a_diag.size());
    for (size_t i = 0; i < a_diag.size(); ++i) {
        const double z = delta * a_diag[i];
        r.a_bar[i] = std::exp(z);
        r.b_bar[i] = zoh_phi1(z) * delta * b[i];
    }
    return r;
}

std::vector<double> ssm_scan(std::span<const double> x, const DiscreteSSM& p) {
    if (x.empty()) throw std::invalid_argument("ssm_scan: sequence must be nonempty");
    const size_t L = p.a_bar.size();
    if (p.b_bar.size() != L || p.c.size() != L || L == 0)
        throw std::invalid_argument("ssm_scan: state vectors must be same nonzero length");
    std::vector<double> h(L, 0.0);
    std::vector<double> y(x.size());
    for (size_t s = 0; s < x.size(); ++s) {
        double acc = p.d * x[s];
        for (size_t l = 0; l < L; ++l) {
            h[l] = p.a_bar[l] * h[l] + p.b_bar[l] * x[s];
            acc += p.c[l] * h[l];
        }
        y[s] = acc;
    }
    return y;
}

std::vector<double> ssm_scan(std::span<const double> x, const SSMParams& p) {
    if (!(p.delta > 0.0)) throw std::invalid_argument("ssm_scan: delta must be positive");
    ZohResult z = zoh_discretize(p.a_diag, p.b, p.delta);
    return ssm_scan(x, DiscreteSSM{std::move(z.a_bar), std::move(z.b_bar), p.c, p.d});
}

// ---- fused four-direction selective scan ---------------------------------------

namespace {

inline int64_t traversal_pos(int dir, int64_t s, int64_t h, int64_t w) {
    const int64_t S = h * w;
    switch (dir) {
        case 0: return s;                                  // row-major forward
        case 1: return S - 1 - s;                          // row-major backward
        case 2: return (s % h) * w + (s / h);              // column-major forward
        default: {                                         // column-major backward
            const int64_t r = S - 1 - s;
            return (r % h) * w + (r / h);
        }
    }
}

struct Ss2dSaved {
    int64_t S = 0, C = 0, L = 0;
    // indexed [pair][...] with pair = n*4 + dir
    std::vector<double> delta;  // pair * S*C
    std::vector<double> bv;     // pair * S*L
    std::vector<double> cv;     // pair * S*L
    std::vector<double> h;      // pair * S*C*L
};

}  // namespace

Tensor ss2d_scan(const Tensor& x, const std::array<Ss2dDirectionParams, 4>& dirs) {
    const Shape& s = x.shape();
    if (s.size() != 4) throw std::invalid_argument("ss2d_scan: 4D tensor expected");
    const int64_t N = s[0], C = s[1], H = s[2], W = s[3];
    const int64_t S = H * W, plane = H * W;
    const int64_t L = dirs[0].a.shape()[1];
    for (const auto& d : dirs) {
        if (d.a.shape() != Shape({C, L}) || d.w_b.shape() != Shape({L, C}) ||
            d.b_b.shape() != Shape({L}) || d.w_c.shape() != Shape({L, C}) ||
            d.b_c.shape() != Shape({L}) || d.w_dt.shape() != Shape({C, C}) ||
            d.b_dt.shape() != Shape({C}) || d.d.shape() != Shape({C}))
            throw std::invalid_argument("ss2d_scan: direction parameter shape mismatch");
    }

    auto saved = std::make_shared<Ss2dSaved>();
    saved->S = S;
    saved->C = C;
    saved->L = L;
    const int64_t pairs = N * 4;
    saved->delta.resize(pairs * S * C);
    saved->bv.resize(pairs * S * L);
    saved->cv.resize(pairs * S * L);
    saved->h.resize(pairs * S * C * L);

    std::vector<double> partial(static_cast<size_t>(pairs * C * plane), 0.0);
    const double* xp = x.impl_->data.data();

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int64_t pair = 0; pair < pairs; ++pair) {
        const int64_t n = pair / 4;
        const int dir = static_cast<int>(pair % 4);
        const auto& P = dirs[dir];
        const double* A = P.a.impl_->data.data();
        const double* wb = P.w_b.impl_->data.data();
        const double* bb = P.b_b.impl_->data.data();
        const double* wc = P.w_c.impl_->data.data();
        const double* bc = P.b_c.impl_->data.data();
        const double* wdt = P.w_dt.impl_->data.data();
        const double* bdt = P.b_dt.impl_->data.data();
        const double* dskip = P.d.impl_->data.data();

        double* dl = saved->delta.data() + pair * S * C;
        double* bvp = saved->bv.data() + pair * S * L;
        double* cvp = saved->cv.data() + pair * S * L;
        double* hp = saved->h.data() + pair * S * C * L;
        double* out = partial.data() + pair * C * plane;

        for (int64_t st = 0; st < S; ++st) {
            const int64_t pos = traversal_pos(dir, st, H, W);
            const double* tok_base = xp + n * C * plane + pos;
            double* bvs = bvp + st * L;
            double* cvs = cvp + st * L;
            for (int64_t l = 0; l < L; ++l) {
                double accb = bb[l], accc = bc[l];
                const double* wbl = wb + l * C;
                const double* wcl = wc + l * C;
                for (int64_t j = 0; j < C; ++j) {
                    const double t = tok_base[j * plane];
                    accb += wbl[j] * t;
                    accc += wcl[j] * t;
                }
                bvs[l] = accb;
                cvs[l] = accc;
            }
            for (int64_t c = 0; c < C; ++c) {
                double pre = bdt[c];
                const double* wdc = wdt + c * C;
                for (int64_t j = 0; j < C; ++j) pre += wdc[j] * tok_base[j * plane];
                const double dt = softplus_scalar(pre);
                dl[st * C + c] = dt;
                const double xval = tok_base[c * plane];
                double yacc = dskip[c] * xval;
                const double* hprev = st > 0 ? hp + ((st - 1) * C + c) * L : nullptr;
                double* hcur = hp + (st * C + c) * L;
                const double* ac = A + c * L;
                for (int64_t l = 0; l < L; ++l) {
                    const double z = dt * ac[l];
                    const double abar = std::exp(z);
                    const double bbar = zoh_phi1(z) * dt * bvs[l];
                    const double hval = abar * (hprev ? hprev[l] : 0.0) + bbar * xval;
                    hcur[l] = hval;
                    yacc += cvs[l] * hval;
                }
                out[c * plane + pos] = yacc;
            }
        }
    }

    // deterministic recombination across directions
    std::vector<double> out(static_cast<size_t>(N * C * plane), 0.0);
    for (int64_t n = 0; n < N; ++n)
        for (int dir = 0; dir < 4; ++dir) {
            const double* p = partial.data() + (n * 4 + dir) * C * plane;
            double* o = out.data() + n * C * plane;
            for (int64_t i = 0; i < C * plane; ++i) o[i] += p[i];
        }

    std::vector<Tensor> parents{x};
    for (const auto& d : dirs)
        for (const Tensor* t : {&d.a, &d.w_b, &d.b_b, &d.w_c, &d.b_c, &d.w_dt, &d.b_dt, &d.d})
            parents.push_back(*t);

    auto px = x.impl_;
    std::array<std::array<std::shared_ptr<TensorImpl>, 8>, 4> pp;
    for (int dir = 0; dir < 4; ++dir)
        pp[dir] = {dirs[dir].a.impl_,    dirs[dir].w_b.impl_, dirs[dir].b_b.impl_,
                   dirs[dir].w_c.impl_,  dirs[dir].b_c.impl_, dirs[dir].w_dt.impl_,
                   dirs[dir].b_dt.impl_, dirs[dir].d.impl_};

    auto bw = [px, pp, saved, N, C, L, H, W, plane, S](TensorImpl& self) {
        const double* g = self.grad.data();
        const double* xp = px->data.data();
        const int64_t pairs = N * 4;

        struct LocalGrads {
            std::vector<double> da, dwb, dbb, dwc, dbc, dwdt, dbdt, dd, dx;
        };
        std::vector<LocalGrads> locals(static_cast<size_t>(pairs));

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (int64_t pair = 0; pair < pairs; ++pair) {
            const int64_t n = pair / 4;
            const int dir = static_cast<int>(pair % 4);
            const double* A = pp[dir][0]->data.data();
            const double* wb = pp[dir][1]->data.data();
            const double* wc = pp[dir][3]->data.data();
            const double* wdt = pp[dir][5]->data.data();
            const double* dskip = pp[dir][7]->data.data();

            LocalGrads& lg = locals[pair];
            lg.da.assign(C * L, 0.0);
            lg.dwb.assign(L * C, 0.0);
            lg.dbb.assign(L, 0.0);
            lg.dwc.assign(L * C, 0.0);
            lg.dbc.assign(L, 0.0);
            lg.dwdt.assign(C * C, 0.0);
            lg.dbdt.assign(C, 0.0);
            lg.dd.assign(C, 0.0);
            lg.dx.assign(C * plane, 0.0);

            const double* dl = saved->delta.data() + pair * S * C;
            const double* bvp = saved->bv.data() + pair * S * L;
            const double* cvp = saved->cv.data() + pair * S * L;
            const double* hp = saved->h.data() + pair * S * C * L;

            std::vector<double> mu(C * L, 0.0);
            std::vector<double> dB(L), dC(L), dpre(C);

            for (int64_t st = S - 1; st >= 0; --st) {
                const int64_t pos = traversal_pos(dir, st, H, W);
                const double* tok_base = xp + n * C * plane + pos;
                const double* bvs = bvp + st * L;
                const double* cvs = cvp + st * L;
                std::fill(dB.begin(), dB.end(), 0.0);

                // dC_s[l] = sum_c go[c] h_s[c,l]; mu[c,l] += go[c] C_s[l]
                for (int64_t l = 0; l < L; ++l) dC[l] = 0.0;
                for (int64_t c = 0; c < C; ++c) {
                    const double go = g[(n * C + c) * plane + pos];
                    const double* hs = hp + (st * C + c) * L;
                    double* muc = mu.data() + c * L;
                    for (int64_t l = 0; l < L; ++l) {
                        muc[l] += go * cvs[l];
                        dC[l] += go * hs[l];
                    }
                }

                for (int64_t c = 0; c < C; ++c) {
                    const double go = g[(n * C + c) * plane + pos];
                    const double xval = tok_base[c * plane];
                    const double dt = dl[st * C + c];
                    lg.dd[c] += go * xval;
                    double dxv = go * dskip[c];
                    double ddl = 0.0;
                    const double* ac = A + c * L;
                    const double* hprev = st > 0 ? hp + ((st - 1) * C + c) * L : nullptr;
                    double* muc = mu.data() + c * L;
                    for (int64_t l = 0; l < L; ++l) {
                        const double z = dt * ac[l];
                        const double abar = std::exp(z);
                        const double phi = zoh_phi1(z);
                        const double phip = zoh_phi1_deriv(z);
                        const double bbar = phi * dt * bvs[l];
                        const double m = muc[l];
                        const double hprev_v = hprev ? hprev[l] : 0.0;
                        const double dabar = m * hprev_v;
                        const double dbbar = m * xval;
                        const double dz = dabar * abar + dbbar * dt * bvs[l] * phip;
                        ddl += dz * ac[l] + dbbar * phi * bvs[l];
                        lg.da[c * L + l] += dz * dt;
                        dB[l] += dbbar * phi * dt;
                        dxv += m * bbar;
                        muc[l] = m * abar;
                    }
                    dpre[c] = ddl * (1.0 - std::exp(-dt));  // sigmoid(pre) via softplus identity
                    lg.dx[c * plane + pos] += dxv;
                }

                for (int64_t j = 0; j < C; ++j) {
                    double acc = 0.0;
                    for (int64_t l = 0; l < L; ++l)
                        acc += dB[l] * wb[l * C + j] + dC[l] * wc[l * C + j];
                    for (int64_t c = 0; c < C; ++c) acc += dpre[c] * wdt[c * C + j];
                    lg.dx[j * plane + pos] += acc;
                }
                for (int64_t l = 0; l < L; ++l) {
                    lg.dbb[l] += dB[l];
                    lg.dbc[l] += dC[l];
                    double* wbl = lg.dwb.data() + l * C;
                    double* wcl = lg.dwc.data() + l * C;
                    for (int64_t j = 0; j < C; ++j) {
                        const double t = tok_base[j * plane];
                        wbl[j] += dB[l] * t;
                        wcl[j] += dC[l] * t;
                    }
                }
                for (int64_t c = 0; c < C; ++c) {
                    lg.dbdt[c] += dpre[c];
                    double* wdc = lg.dwdt.data() + c * C;
                    for (int64_t j = 0; j < C; ++j) wdc[j] += dpre[c] * tok_base[j * plane];
                }
            }
        }

        // fixed-order reduction: batch outer, direction inner
        const bool need_x = px->requires_grad;
        if (need_x) px->ensure_grad();
        for (int64_t n = 0; n < N; ++n)
            for (int dir = 0; dir < 4; ++dir) {
                const LocalGrads& lg = locals[n * 4 + dir];
                if (need_x) {
                    double* dx = px->grad.data() + n * C * plane;
                    for (int64_t i = 0; i < C * plane; ++i) dx[i] += lg.dx[i];
                }
                auto addinto = [](const std::shared_ptr<TensorImpl>& t,
                                  const std::vector<double>& src) {
                    if (!t->requires_grad) return;
                    t->ensure_grad();
                    for (size_t i = 0; i < src.size(); ++i) t->grad[i] += src[i];
                };
                addinto(pp[dir][0], lg.da);
                addinto(pp[dir][1], lg.dwb);
                addinto(pp[dir][2], lg.dbb);
                addinto(pp[dir][3], lg.dwc);
                addinto(pp[dir][4], lg.dbc);
                addinto(pp[dir][5], lg.dwdt);
                addinto(pp[dir][6], lg.dbdt);
                addinto(pp[dir][7], lg.dd);
            }
    };

    return make_op_result({N, C, H, W}, std::move(out), std::move(parents), std::move(bw));
}

// ---- layers -------------------------------------------------------------------

namespace {
Ss2dDirectionParams make_direction(ParamTree& pt, const std::string& prefix, int64_t channels,
                                   int64_t state_dim, Rng& rng) {
    Ss2dDirectionParams p;
    p.a = pt.create(prefix + ".a", {channels, state_dim});
    for (int64_t c = 0; c < channels; ++c)
        for (int64_t l = 0; l < state_dim; ++l)
            p.a.data()[c * state_dim + l] = -static_cast<double>(l + 1);
    const double proj_std = 1.0 / std::sqrt(static_cast<double>(channels));
    p.w_b = pt.create_randn(prefix + ".w_b", {state_dim, channels}, rng, proj_std);
    p.b_b = pt.create(prefix + ".b_b", {state_dim});
    p.w_c = pt.create_randn(prefix + ".w_c", {state_dim, channels}, rng, proj_std);
    p.b_c = pt.create(prefix + ".b_c", {state_dim});
    p.w_dt = pt.create(prefix + ".w_dt", {channels, channels});
    // softplus(b_dt) = 0.1 at init
    p.b_dt = pt.create_full(prefix + ".b_dt", {channels}, std::log(std::expm1(0.1)));
    p.d = pt.create_full(prefix + ".d", {channels}, 1.0);
    return p;
}
}  // namespace

Ss2d::Ss2d(ParamTree& pt, const std::string& prefix, int64_t channels, int64_t state_dim, Rng& rng,
           bool tied) {
    if (tied) {
        Ss2dDirectionParams shared = make_direction(pt, prefix + ".shared", channels, state_dim, rng);
        dirs_ = {shared, shared, shared, shared};
    } else {
        for (int d = 0; d < 4; ++d)
            dirs_[d] = make_direction(pt, prefix + ".dir" + std::to_string(d), channels, state_dim,
                                      rng);
    }
}

VssBlock::VssBlock(ParamTree& pt, const std::string& prefix, int64_t channels, Rng& rng,
                   const VssOptions& opt) {
    in_proj_ = Conv2d(pt, prefix + ".in_proj", channels, channels, 1, rng);
    pos_embed_ = pt.create(prefix + ".pos_embed", {1, channels, opt.pos_h, opt.pos_w});
    ln_in_ = LayerNormChan(pt, prefix + ".ln_in", channels);
    gate_fc_ = Conv2d(pt, prefix + ".gate_fc", channels, channels, 1, rng);
    dw_ = Conv2d(pt, prefix + ".dw", channels, channels, 3, rng, 1, -1,
                 static_cast<int>(channels));
    scan_fc_ = Conv2d(pt, prefix + ".scan_fc", channels, channels, 1, rng, 1, -1, 1,
                      opt.zero_init_probe);
    ss2d_ = Ss2d(pt, prefix + ".ss2d", channels, opt.state_dim, rng);
    ln_scan_ = LayerNormChan(pt, prefix + ".ln_scan", channels);
    ffn1_ = Conv2d(pt, prefix + ".ffn1", channels, 2 * channels, 1, rng);
    ffn2_ = Conv2d(pt, prefix + ".ffn2", 2 * channels, channels, 1, rng, 1, -1, 1,
                   opt.zero_init_probe);
}

Tensor VssBlock::normalized_input(const Tensor& x) const {
    Tensor lifted = in_proj_.forward(x);
    Tensor pos = pos_embed_;
    if (pos.shape()[2] != x.shape()[2] || pos.shape()[3] != x.shape()[3])
        pos = bilinear_resize(pos, x.shape()[2], x.shape()[3]);
    return ln_in_.forward(add_broadcast_batch(lifted, pos));
}

Tensor VssBlock::forward(const Tensor& x) const {
    Tensor fm = normalized_input(x);
    Tensor gate = silu(gate_fc_.forward(fm));
    Tensor scan = ln_scan_.forward(ss2d_.forward(silu(scan_fc_.forward(dw_.forward(fm)))));
    Tensor mixed = add(mul(gate, scan), fm);
    return add(mixed, ffn2_.forward(gelu(ffn1_.forward(mixed))));
}

}  // namespace sarfah
