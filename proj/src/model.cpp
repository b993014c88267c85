#include "sarfah/model.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace sarfah {

std::map<std::string, std::string> parse_key_value_text(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto last = line.find_last_not_of(" \t\r");
        line = line.substr(first, last - first + 1);
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected key=value, got '" + line + "'");
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t");
            const auto b = s.find_last_not_of(" \t");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

std::string model_config_to_text(const ModelConfig& c) {
    std::ostringstream os;
    os << "channels=" << c.channels << "\n";
    os << "ode_steps=" << c.ode.steps << "\n";
    os << "ode_horizon=" << c.ode.horizon << "\n";
    os << "ode_randomized=" << (c.ode.randomized ? 1 : 0) << "\n";
    os << "shared_hfde=" << (c.shared_hfde ? 1 : 0) << "\n";
    os << "deforconv=" << to_string(c.deforconv) << "\n";
    os << "dass_in_lfsp=" << (c.dass_in_lfsp ? 1 : 0) << "\n";
    os << "dass_in_hfde=" << (c.dass_in_hfde ? 1 : 0) << "\n";
    os << "dcn_in_dass=" << (c.dcn_in_dass ? 1 : 0) << "\n";
    os << "use_node=" << (c.use_node ? 1 : 0) << "\n";
    os << "state_dim=" << c.state_dim << "\n";
    os << "experts=" << c.experts << "\n";
    os << "pos_resolution=" << c.pos_resolution << "\n";
    return os.str();
}

namespace {
bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "1" || v == "true" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "no") return false;
    throw std::invalid_argument("config: boolean expected for " + key + ", got '" + v + "'");
}
}  // namespace

ModelConfig model_config_from_text(const std::string& text) {
    ModelConfig c;
    for (const auto& [k, v] : parse_key_value_text(text)) {
        if (k == "channels") c.channels = std::stoll(v);
        else if (k == "ode_steps") c.ode.steps = std::stoi(v);
        else if (k == "ode_horizon") c.ode.horizon = std::stod(v);
        else if (k == "ode_randomized") c.ode.randomized = parse_bool(v, k);
        else if (k == "shared_hfde") c.shared_hfde = parse_bool(v, k);
        else if (k == "deforconv") c.deforconv = defor_placement_from_string(v);
        else if (k == "dass_in_lfsp") c.dass_in_lfsp = parse_bool(v, k);
        else if (k == "dass_in_hfde") c.dass_in_hfde = parse_bool(v, k);
        else if (k == "dcn_in_dass") c.dcn_in_dass = parse_bool(v, k);
        else if (k == "use_node") c.use_node = parse_bool(v, k);
        else if (k == "state_dim") c.state_dim = std::stoll(v);
        else if (k == "experts") c.experts = std::stoll(v);
        else if (k == "pos_resolution") c.pos_resolution = std::stoll(v);
        // unknown keys are tolerated: checkpoints may carry trainer settings
    }
    return c;
}

Tensor loss_l1(const Tensor& pred, const Tensor& target) {
    if (pred.shape() != target.shape())
        throw std::invalid_argument("loss_l1: shape mismatch " + shape_str(pred.shape()) + " vs " +
                                    shape_str(target.shape()));
    return mean(abs_val(sub(pred, target)));
}

Tensor sarfah_pipeline(const Tensor& img,
                       const std::function<Tensor(const Tensor&)>& band_transform) {
    const Shape& s = img.shape();
    if (s.size() != 4 || s[1] != 1)
        throw std::invalid_argument("sarfah_pipeline: expected [N,1,H,W] input");
    if (s[2] % 4 != 0 || s[3] % 4 != 0)
        throw std::invalid_argument("sarfah_pipeline: H and W must be divisible by 4");
    Tensor scaled = mul_scalar(img, 1.0 / 255.0);
    Tensor bands = dwt2(scaled);
    Tensor processed = band_transform(bands);
    if (processed.shape() != bands.shape())
        throw std::invalid_argument("sarfah_pipeline: band transform must preserve shape");
    return mul_scalar(idwt2(processed), 255.0);
}

SarFahModel::SarFahModel(const ModelConfig& cfg, uint64_t init_seed)
    : cfg_(cfg), params_(std::make_shared<ParamTree>()) {
    if (cfg.channels < 2 || cfg.channels % 2 != 0)
        throw std::invalid_argument("ModelConfig: channels must be even and >= 2");
    Rng rng(init_seed);
    ParamTree& pt = *params_;

    VssOptions vss;
    vss.state_dim = cfg.state_dim;
    vss.pos_h = std::max<int64_t>(1, cfg.pos_resolution / 2);
    vss.pos_w = vss.pos_h;

    static const char* kBand[4] = {"ll", "lh", "hl", "hh"};
    lift_.reserve(4);
    for (int i = 0; i < 4; ++i)
        lift_.emplace_back(pt, std::string("lift.") + kBand[i], 1, cfg.channels, 3, rng);

    LfspOptions lo;
    lo.dass = cfg.dass_in_lfsp;
    lo.dass_experts = cfg.experts;
    lo.dcn_in_dass = cfg.dcn_in_dass;
    lo.vss = vss;
    lo.use_node = cfg.use_node;
    lfsp_ = LfspOde(pt, "lfsp", cfg.channels, cfg.ode, rng, lo);

    HfdeOptions ho;
    ho.placement = cfg.deforconv;
    ho.dass = cfg.dass_in_hfde;
    ho.dass_experts = cfg.experts;
    ho.dcn_in_dass = cfg.dcn_in_dass;
    ho.vss = vss;
    ho.vss.pos_h = std::max<int64_t>(1, cfg.pos_resolution / 8);
    ho.vss.pos_w = ho.vss.pos_h;
    if (cfg.shared_hfde) {
        auto shared = std::make_shared<Hfde>(pt, "hfde.shared", cfg.channels, rng, ho);
        hfde_ = {shared, shared, shared};
    } else {
        hfde_ = {std::make_shared<Hfde>(pt, "hfde.lh", cfg.channels, rng, ho),
                 std::make_shared<Hfde>(pt, "hfde.hl", cfg.channels, rng, ho),
                 std::make_shared<Hfde>(pt, "hfde.hh", cfg.channels, rng, ho)};
    }

    const int64_t fc = 4 * cfg.channels;
    cfre_fuse_ = Conv2d(pt, "cfre.fuse", fc, fc, 1, rng);
    res_conv1_ = Conv2d(pt, "cfre.res.conv1", fc, fc, 3, rng);
    res_bn1_ = BatchNorm2d(pt, "cfre.res.bn1", fc);
    res_conv2_ = Conv2d(pt, "cfre.res.conv2", fc, fc, 3, rng);
    res_bn2_ = BatchNorm2d(pt, "cfre.res.bn2", fc);
    cfre_proj_ = Conv2d(pt, "cfre.proj", fc, 4, 1, rng);
}

Tensor SarFahModel::forward(const Tensor& x, bool training, uint64_t ode_seed) const {
    return sarfah_pipeline(x, [&](const Tensor& bands) {
        Tensor feats[4];
        for (int i = 0; i < 4; ++i)
            feats[i] = lift_[i].forward(slice_channels(bands, i, i + 1));
        Tensor fll = lfsp_.forward(feats[0], training, ode_seed);
        Tensor flh = hfde_[0]->forward(feats[1], training);
        Tensor fhl = hfde_[1]->forward(feats[2], training);
        Tensor fhh = hfde_[2]->forward(feats[3], training);

        Tensor fused = cfre_fuse_.forward(concat_channels({fll, flh, fhl, fhh}));
        Tensor r = relu(res_bn1_.forward(res_conv1_.forward(fused), training));
        r = res_bn2_.forward(res_conv2_.forward(r), training);
        Tensor enhanced = add(fused, r);
        return cfre_proj_.forward(enhanced);
    });
}

Image SarFahModel::despeckle(const Image& img) const {
    if (img.h % 4 != 0 || img.w % 4 != 0)
        throw std::invalid_argument("despeckle: image dimensions must be divisible by 4");
    NoGradGuard ng;
    Tensor x = Tensor::from_data({1, 1, img.h, img.w}, img.px);
    Tensor y = forward(x, /*training=*/false);
    Image out(img.h, img.w);
    auto data = y.data();
    for (int64_t i = 0; i < out.size(); ++i)
        out.px[i] = std::clamp(data[i], 0.0, 255.0);
    return out;
}

void SarFahModel::save_checkpoint(const std::string& path, const std::string& extra_config) const {
    params_->save(path, model_config_to_text(cfg_) + extra_config);
}

void SarFahModel::load_checkpoint(const std::string& path) { params_->load(path); }

SarFahModel SarFahModel::from_checkpoint(const std::string& path) {
    ModelConfig cfg = model_config_from_text(ParamTree::read_config(path));
    SarFahModel model(cfg);
    model.load_checkpoint(path);
    return model;
}

int64_t param_count(const ModelConfig& cfg) {
    SarFahModel model(cfg, /*init_seed=*/1);
    return model.param_count();
}

}  // namespace sarfah
