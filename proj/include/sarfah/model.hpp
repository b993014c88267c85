#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "sarfah/hfde.hpp"
#include "sarfah/image.hpp"
#include "sarfah/lfsp.hpp"

namespace sarfah {

struct ModelConfig {
    int64_t channels = 16;  // must be even (the HFDE stem squeezes to C/2)
    OdeConfig ode{1.0, 2, true};
    bool shared_hfde = false;
    DeforPlacement deforconv = DeforPlacement::kDecoder;
    bool dass_in_lfsp = true;
    bool dass_in_hfde = true;
    bool dcn_in_dass = true;
    bool use_node = true;
    int64_t state_dim = 8;
    int64_t experts = 4;
    // pos-embed training resolution hint (patch edge in pixels); the embeds
    // are bilinearly resized for other input sizes
    int64_t pos_resolution = 64;
};

std::string model_config_to_text(const ModelConfig& cfg);
ModelConfig model_config_from_text(const std::string& text);
// one key=value per line, '#' comments
std::map<std::string, std::string> parse_key_value_text(const std::string& text);

// Mean absolute deviation over all elements (batch-averaged).
Tensor loss_l1(const Tensor& pred, const Tensor& target);

// The fixed plumbing around the network: scale to unit range, Haar split,
// per-band processing, inverse Haar, scale back. band_transform maps the
// [N,4,H/2,W/2] coefficient stack to a same-shape stack; with an identity
// transform the pipeline reduces to the DWT/IDWT round trip.
Tensor sarfah_pipeline(const Tensor& img, const std::function<Tensor(const Tensor&)>& band_transform);

class SarFahModel {
public:
    explicit SarFahModel(const ModelConfig& cfg, uint64_t init_seed = 1);

    // x is [N,1,H,W] in [0,255], H and W divisible by 4
    Tensor forward(const Tensor& x, bool training, uint64_t ode_seed = 0) const;

    // eval-mode convenience on a single image; output clamped to [0,255]
    Image despeckle(const Image& img) const;

    int64_t param_count() const { return params_->trainable_count(); }
    ParamTree& params() { return *params_; }
    const ParamTree& params() const { return *params_; }
    const ModelConfig& config() const { return cfg_; }

    void save_checkpoint(const std::string& path, const std::string& extra_config = "") const;
    void load_checkpoint(const std::string& path);
    // builds the model from the config echoed in the checkpoint header
    static SarFahModel from_checkpoint(const std::string& path);

private:
    ModelConfig cfg_;
    std::shared_ptr<ParamTree> params_;
    std::vector<Conv2d> lift_;
    LfspOde lfsp_;
    std::vector<std::shared_ptr<Hfde>> hfde_;  // 3 instances, aliased when shared
    Conv2d cfre_fuse_;
    Conv2d res_conv1_, res_conv2_;
    BatchNorm2d res_bn1_, res_bn2_;
    Conv2d cfre_proj_;
};

int64_t param_count(const ModelConfig& cfg);

}  // namespace sarfah
