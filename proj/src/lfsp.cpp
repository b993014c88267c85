#include "sarfah/lfsp.hpp"

#include <stdexcept>

namespace sarfah {

Tensor ode_solve(const Tensor& u0, const std::function<Tensor(const Tensor&, double)>& field,
                 const OdeConfig& cfg, uint64_t seed) {
    if (cfg.steps < 1) throw std::invalid_argument("ode_solve: step count must be positive");
    if (!(cfg.horizon > 0.0)) throw std::invalid_argument("ode_solve: horizon must be positive");
    const double h = cfg.horizon / static_cast<double>(cfg.steps);
    Rng jitter(seed);
    Tensor u = u0;
    for (int i = 0; i < cfg.steps; ++i) {
        const double ti = static_cast<double>(i) * h;
        const double tau = cfg.randomized ? ti + jitter.uniform() * h : ti;
        u = add(u, mul_scalar(field(u, tau), h));
    }
    return u;
}

LfspOde::LfspOde(ParamTree& pt, const std::string& prefix, int64_t channels, const OdeConfig& ode,
                 Rng& rng, const LfspOptions& opt)
    : ode_(ode), opt_(opt) {
    if (ode.steps < 1) throw std::invalid_argument("LfspOde: step count must be positive");
    blocks_.reserve(7);
    for (int i = 0; i < 7; ++i) {
        const int64_t in_ch = i == 0 ? channels + 1 : channels;
        blocks_.emplace_back(pt, prefix + ".block" + std::to_string(i + 1), in_ch, channels, 3,
                             rng);
    }
    if (opt.dass) {
        DassOptions d;
        d.experts = opt.dass_experts;
        d.use_dcn = opt.dcn_in_dass;
        d.vss = opt.vss;
        dass_a_ = Dass(pt, prefix + ".dass1", channels, rng, d);
        dass_b_ = Dass(pt, prefix + ".dass2", channels, rng, d);
    }
}

Tensor LfspOde::field_with_tplane(const Tensor& u, const Tensor& tplane, bool training) const {
    Tensor z = concat_channels({u, tplane});
    for (int i = 0; i < 3; ++i) z = blocks_[i].forward(z, training);
    if (opt_.dass) z = dass_a_.forward(z, training);
    for (int i = 3; i < 6; ++i) z = blocks_[i].forward(z, training);
    if (opt_.dass) z = dass_b_.forward(z, training);
    return blocks_[6].forward(z, training);
}

Tensor LfspOde::field(const Tensor& u, double t, bool training) const {
    const Shape& s = u.shape();
    Tensor tplane = Tensor::full({s[0], 1, s[2], s[3]}, t);
    return field_with_tplane(u, tplane, training);
}

Tensor LfspOde::forward(const Tensor& u0, bool training, uint64_t seed) const {
    if (!opt_.use_node) return field(u0, 0.0, training);
    OdeConfig cfg = ode_;
    cfg.randomized = ode_.randomized && training;
    return ode_solve(u0, [&](const Tensor& u, double t) { return field(u, t, training); }, cfg,
                     seed);
}

}  // namespace sarfah
