#include "sarfah/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "sarfah/metrics.hpp"
#include "sarfah/speckle.hpp"

namespace sarfah {

std::string train_config_to_text(const TrainConfig& cfg) {
    std::ostringstream os;
    os << "epochs=" << cfg.epochs << "\n";
    os << "lr_start=" << cfg.lr_start << "\n";
    os << "lr_end=" << cfg.lr_end << "\n";
    os << "batch_size=" << cfg.batch_size << "\n";
    os << "patch_size=" << cfg.patch_size << "\n";
    os << "looks=" << cfg.looks << "\n";
    os << "seed=" << cfg.seed << "\n";
    os << "augment=" << (cfg.augment ? 1 : 0) << "\n";
    os << "val_fraction=" << cfg.val_fraction << "\n";
    os << "max_patches=" << cfg.max_patches << "\n";
    return os.str() + model_config_to_text(cfg.model);
}

TrainConfig train_config_from_kv(const std::map<std::string, std::string>& kv, TrainConfig base) {
    std::ostringstream model_text;
    for (const auto& [k, v] : kv) {
        if (k == "epochs") base.epochs = std::stoi(v);
        else if (k == "lr_start") base.lr_start = std::stod(v);
        else if (k == "lr_end") base.lr_end = std::stod(v);
        else if (k == "batch_size") base.batch_size = std::stoll(v);
        else if (k == "patch_size") base.patch_size = std::stoll(v);
        else if (k == "looks") base.looks = std::stod(v);
        else if (k == "seed") base.seed = std::stoull(v);
        else if (k == "augment") base.augment = v == "1" || v == "true";
        else if (k == "val_fraction") base.val_fraction = std::stod(v);
        else if (k == "max_patches") base.max_patches = std::stoll(v);
        else if (k == "out_dir") base.out_dir = v;
        else model_text << k << "=" << v << "\n";
    }
    base.model = model_config_from_text(model_config_to_text(base.model) + model_text.str());
    if (!(base.lr_start >= base.lr_end) || !(base.lr_end > 0.0))
        throw std::invalid_argument("TrainConfig: need lr_start >= lr_end > 0");
    if (base.patch_size % 4 != 0)
        throw std::invalid_argument("TrainConfig: patch size must be divisible by 4");
    return base;
}

double cosine_lr(int64_t step, int64_t total_steps, double lr_start, double lr_end) {
    if (step < 0 || step > total_steps)
        throw std::invalid_argument("cosine_lr: step outside [0, total]");
    const double phase =
        3.14159265358979323846 * static_cast<double>(step) / static_cast<double>(total_steps);
    return lr_end + 0.5 * (lr_start - lr_end) * (1.0 + std::cos(phase));
}

void Adam::step(ParamTree& params, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    params.for_each_trainable([&](const std::string& path, Tensor& p) {
        auto& m = m_[path];
        auto& v = v_[path];
        if (m.empty()) {
            m.assign(p.numel(), 0.0);
            v.assign(p.numel(), 0.0);
        }
        if (!p.has_grad()) return;
        auto g = p.grad();
        auto data = p.data();
        for (int64_t i = 0; i < p.numel(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            data[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
        }
    });
}

namespace {

Tensor batch_from_patches(const std::vector<Patch>& patches, const std::vector<int64_t>& idx,
                          size_t first, size_t count) {
    const int64_t p = patches[idx[first]].clean.h;
    Tensor out = Tensor::zeros({static_cast<int64_t>(count), 1, p, p});
    auto data = out.data();
    for (size_t b = 0; b < count; ++b) {
        const Image& img = patches[idx[first + b]].clean;
        std::copy(img.px.begin(), img.px.end(), data.begin() + b * p * p);
    }
    return out;
}

Tensor speckle_batch(const Tensor& clean, double looks, uint64_t run_seed, uint64_t epoch,
                     const std::vector<Patch>& patches, const std::vector<int64_t>& idx,
                     size_t first) {
    const Shape& s = clean.shape();
    Tensor noisy = clean.detach();
    auto data = noisy.data();
    const int64_t per = s[2] * s[3];
    for (int64_t b = 0; b < s[0]; ++b) {
        const uint64_t patch_seed =
            mix_seed(run_seed, epoch, static_cast<uint64_t>(patches[idx[first + b]].index));
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (int64_t i = 0; i < per; ++i) {
            Rng rng(mix_seed(patch_seed, static_cast<uint64_t>(i)));
            data[b * per + i] *= rng.gamma(looks, 1.0 / looks);
        }
    }
    return noisy;
}

double grad_norm(ParamTree& params) {
    double acc = 0.0;
    params.for_each_trainable([&](const std::string&, Tensor& p) {
        if (!p.has_grad()) return;
        for (double g : p.grad()) acc += g * g;
    });
    return std::sqrt(acc);
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const Corpus& corpus, std::ostream& log) {
    if (cfg.epochs < 1) throw std::invalid_argument("train: epochs must be positive");
    if (cfg.batch_size < 1) throw std::invalid_argument("train: batch size must be positive");
    if (!(cfg.looks > 0.0)) throw std::invalid_argument("train: looks must be positive");

    std::vector<Patch> patches = make_patches(corpus, cfg.patch_size, cfg.augment, cfg.seed);
    if (cfg.max_patches > 0 && static_cast<int64_t>(patches.size()) > cfg.max_patches)
        patches.resize(cfg.max_patches);
    if (patches.size() < 2) throw std::invalid_argument("train: need at least 2 patches");

    const int64_t n = static_cast<int64_t>(patches.size());
    const int64_t val_n = std::max<int64_t>(1, std::llround(cfg.val_fraction * n));
    const int64_t train_n = n - val_n;
    if (train_n < 1) throw std::invalid_argument("train: no training patches after the split");

    std::vector<int64_t> train_idx(train_n), val_idx(val_n);
    for (int64_t i = 0; i < train_n; ++i) train_idx[i] = i;
    for (int64_t i = 0; i < val_n; ++i) val_idx[i] = train_n + i;

    SarFahModel model(cfg.model, cfg.seed);
    Adam adam;
    const int64_t steps_per_epoch = (train_n + cfg.batch_size - 1) / cfg.batch_size;
    const int64_t total_steps = steps_per_epoch * cfg.epochs;

    std::filesystem::create_directories(cfg.out_dir);
    const std::string best_path = cfg.out_dir + "/best.ckpt";
    const std::string final_path = cfg.out_dir + "/final.ckpt";
    const std::string config_echo = train_config_to_text(cfg);

    auto validate = [&](double& val_l1, double& val_psnr) {
        NoGradGuard ng;
        double l1 = 0.0, ps = 0.0;
        for (int64_t vi : val_idx) {
            Tensor clean = batch_from_patches(patches, {vi}, 0, 1);
            std::vector<int64_t> one{vi};
            Tensor noisy = speckle_batch(clean, cfg.looks, mix_seed(cfg.seed, 0x76616cULL), 0,
                                         patches, one, 0);
            Tensor pred = model.forward(noisy, /*training=*/false);
            l1 += loss_l1(pred, clean).item();
            Image ip(cfg.patch_size, cfg.patch_size), cp(cfg.patch_size, cfg.patch_size);
            auto pd = pred.data();
            for (int64_t i = 0; i < ip.size(); ++i) {
                ip.px[i] = std::clamp(pd[i], 0.0, 255.0);
                cp.px[i] = clean.data()[i];
            }
            const double p = psnr(cp, ip);
            ps += std::isinf(p) ? 99.0 : p;
        }
        val_l1 = l1 / static_cast<double>(val_n);
        val_psnr = ps / static_cast<double>(val_n);
    };

    TrainResult result;
    double best_val = std::numeric_limits<double>::infinity();
    int64_t global_step = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // deterministic reshuffle per epoch
        std::vector<int64_t> order = train_idx;
        Rng shuffle_rng(mix_seed(cfg.seed, 0x6f72646572ULL, static_cast<uint64_t>(epoch)));
        for (int64_t i = train_n - 1; i > 0; --i) {
            const int64_t j = static_cast<int64_t>(shuffle_rng.next_u64() % (i + 1));
            std::swap(order[i], order[j]);
        }

        double epoch_l1 = 0.0;
        int64_t epoch_batches = 0;
        for (int64_t first = 0; first < train_n; first += cfg.batch_size) {
            const size_t count = static_cast<size_t>(std::min(cfg.batch_size, train_n - first));
            Tensor clean = batch_from_patches(patches, order, first, count);
            Tensor noisy = speckle_batch(clean, cfg.looks, cfg.seed,
                                         static_cast<uint64_t>(epoch) + 1, patches, order, first);

            const double lr = cosine_lr(global_step, total_steps, cfg.lr_start, cfg.lr_end);
            model.params().zero_grads();
            Tensor pred = model.forward(noisy, /*training=*/true,
                                        mix_seed(cfg.seed, 0x6f6465ULL, global_step));
            Tensor loss = loss_l1(pred, clean);
            const double lval = loss.item();
            if (!std::isfinite(lval)) {
                backward(loss);
                log << "abort: non-finite loss at step " << global_step << " lr " << lr
                    << " grad-norm " << grad_norm(model.params()) << "\n";
                throw std::runtime_error("train: non-finite loss at step " +
                                         std::to_string(global_step));
            }
            backward(loss);
            adam.step(model.params(), lr);

            epoch_l1 += lval;
            ++epoch_batches;
            ++global_step;
            log << epoch << "," << global_step << "," << lr << "," << lval << ",,\n";
        }

        double val_l1 = 0.0, val_psnr = 0.0;
        validate(val_l1, val_psnr);
        const double train_l1 = epoch_l1 / static_cast<double>(epoch_batches);
        log << epoch << "," << global_step << ","
            << cosine_lr(global_step, total_steps, cfg.lr_start, cfg.lr_end) << "," << train_l1
            << "," << val_l1 << "," << val_psnr << "\n";
        result.epochs.push_back({epoch, train_l1, val_l1, val_psnr});

        if (val_l1 < best_val) {
            best_val = val_l1;
            model.save_checkpoint(best_path, config_echo);
        }
    }

    model.save_checkpoint(final_path, config_echo);
    result.best_checkpoint = best_path;
    result.final_checkpoint = final_path;
    return result;
}

}  // namespace sarfah
