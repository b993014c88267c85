#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "sarfah/dataset.hpp"
#include "sarfah/model.hpp"

namespace sarfah {

struct TrainConfig {
    int epochs = 5;
    double lr_start = 1e-3;
    double lr_end = 1e-6;
    int64_t batch_size = 8;
    int64_t patch_size = 64;  // must be divisible by 4
    double looks = 1.0;
    uint64_t seed = 1;
    bool augment = true;
    double val_fraction = 0.1;
    int64_t max_patches = 0;  // cap on the patch stream, 0 = all
    std::string out_dir = ".";
    ModelConfig model;
};

std::string train_config_to_text(const TrainConfig& cfg);
// overlays key=value pairs onto defaults (or a given base)
TrainConfig train_config_from_kv(const std::map<std::string, std::string>& kv,
                                 TrainConfig base = {});

// lr_end + (lr_start - lr_end)(1 + cos(pi step/total))/2
double cosine_lr(int64_t step, int64_t total_steps, double lr_start, double lr_end);

// Adam with bias correction; one slot pair per trainable leaf.
class Adam {
public:
    Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {}
    void step(ParamTree& params, double lr);
    int64_t steps_taken() const { return t_; }

private:
    double beta1_, beta2_, eps_;
    int64_t t_ = 0;
    std::map<std::string, std::vector<double>> m_, v_;
};

struct EpochStats {
    int epoch;
    double train_l1;
    double val_l1;
    double val_psnr;
};

struct TrainResult {
    std::string best_checkpoint;
    std::string final_checkpoint;
    std::vector<EpochStats> epochs;
};

// Runs the training loop: per step, sample clean patches, synthesize speckle
// on the fly (fresh seed per patch per epoch), forward, L1 loss, backward,
// Adam update on the cosine schedule; per epoch, validation L1/PSNR on the
// held-out split with fixed validation noise. Log lines go to `log` as
// `epoch,step,lr,train_l1,val_l1,val_psnr`.
TrainResult train(const TrainConfig& cfg, const Corpus& corpus, std::ostream& log);

}  // namespace sarfah
