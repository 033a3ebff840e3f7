#pragma once

#include <functional>
#include <string>
#include <vector>

#include "attack/attacks.h"
#include "core/tensor.h"
#include "nn/model.h"

namespace fatlab::fat {

enum class Method { FgsmRs, FgsmMep };

struct RegSettings {
    bool aux = false;
    double alpha_aux = 1e-2;
    double fd_h = 1e-2;
    bool aux_per_example = false;

    bool outlier = false;
    double eta = 10.0;
    double alpha_reg = 1e-5;
    bool outlier_signed = false;

    bool l2 = false;
    double lam_l2 = 5e-4;

    bool clip = false;  // shares eta

    bool r_pred = false;
    double beta = 10.0;
};

struct TrainSettings {
    int epochs = 30;
    double lr_max = 0.1;
    double lr_peak = 0.4;
    int batch = 128;
    double momentum = 0.9;
    float xi = 16.0f / 255.0f;
    float eps_scale = 1.25f;  // fgsm step = eps_scale * xi
    Method method = Method::FgsmRs;
    double mep_mu = 0.9;
    attack::InitNoise init_noise = attack::InitNoise::Uniform;
    uint64_t seed = 0;
    RegSettings regs;

    // evaluation protocol per epoch
    int eval_clean_n = 400;
    int eval_pgd_n = 256;
    int pgd_steps = 10;
    int pgd_restarts = 1;
};

struct EpochStats {
    double clean = 0, perturbed = 0, fgsm = 0, pgd10 = 0;
    double maxr = 0;
    double train_loss_adv = 0;    // epoch mean of the minimized objective
    double train_loss_clean = 0;  // eval-mode CE on a fixed train subset
    double reg_aux = 0, reg_outlier = 0, reg_l2 = 0, reg_rpred = 0;
    double lr_last = 0;
};

struct Dataset {
    Tensor x;  // (N, C, H, W) in [0,1]
    std::vector<int> y;
    int num_classes = 0;
    int64_t n() const { return x.numel() == 0 ? 0 : x.dim(0); }
};

struct TrainResult {
    std::vector<EpochStats> history;
    Tensor trigger_bank;  // (K, C, H, W)
    bool co = false;
    int co_epoch = -1;
    double seconds = 0;
    // set when a non-finite loss aborted the run; the model is rolled back
    // to the last completed epoch
    bool aborted = false;
    std::string abort_reason;
};

struct EvalScores {
    double clean = 0, perturbed = 0, fgsm = 0, pgd10 = 0;
};

EvalScores evaluate(nn::Model& m, const Dataset& test, float xi, uint64_t seed,
                    int clean_n = 400, int pgd_n = 256, int pgd_steps = 10,
                    int pgd_restarts = 1);

// First epoch whose pgd10 drops below ratio * (peak over strictly earlier
// epochs) while fgsm stays within `gap` of clean. All-zero histories never
// fire.
bool co_detect(const std::vector<EpochStats>& hist, double ratio, double gap, int* epoch);

// Per-epoch callback; return false to stop early.
using EpochHook = std::function<bool(int epoch, const EpochStats&, nn::Model&, const Tensor& bank)>;

TrainResult train_fat(nn::Model& m, const Dataset& train, const Dataset& test,
                      const TrainSettings& cfg, const EpochHook& hook = nullptr);

// Accuracy on a plain batch set, eval mode.
double accuracy(nn::Model& m, const Tensor& x, const std::vector<int>& y, int batch = 256);

void gather_batch(const Dataset& d, const std::vector<int64_t>& idx, int64_t lo, int64_t hi,
                  Tensor* x, std::vector<int>* y);

}  // namespace fatlab::fat
