#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sarfah/attention.hpp"
#include "sarfah/nn.hpp"

namespace sarfah {

struct OdeConfig {
    double horizon = 1.0;  // T
    int steps = 4;         // N
    bool randomized = true;
};

// Fixed-grid Euler over t_i = i*T/N. When randomized, the field is evaluated
// at a uniformly jittered time inside each step (training); evaluation uses
// the left endpoint and is deterministic.
Tensor ode_solve(const Tensor& u0, const std::function<Tensor(const Tensor&, double)>& field,
                 const OdeConfig& cfg, uint64_t seed);

struct LfspOptions {
    bool dass = true;
    int64_t dass_experts = 4;
    bool dcn_in_dass = true;
    VssOptions vss;
    bool use_node = true;  // false = single field application (the w/o-NODE row)
};

// Low-frequency denoiser: the LFSP vector field (7 Conv-BN-ReLU blocks with
// DASS modules after blocks 3 and 6, the state concatenated with a constant
// t plane) integrated by the randomized Euler solver.
class LfspOde {
public:
    LfspOde() = default;
    LfspOde(ParamTree& pt, const std::string& prefix, int64_t channels, const OdeConfig& ode,
            Rng& rng, const LfspOptions& opt = {});

    Tensor field(const Tensor& u, double t, bool training) const;
    // t supplied as an explicit plane so its gradient can be probed
    Tensor field_with_tplane(const Tensor& u, const Tensor& tplane, bool training) const;
    Tensor forward(const Tensor& u0, bool training, uint64_t seed) const;

    const OdeConfig& ode() const { return ode_; }

private:
    std::vector<ConvBnRelu> blocks_;
    Dass dass_a_, dass_b_;
    OdeConfig ode_;
    LfspOptions opt_;
};

}  // namespace sarfah
