#pragma once

#include <string>
#include <vector>

#include "core/tensor.h"
#include "fat/train.h"

namespace fatlab::poison {

enum class PoisonMode { ClassWise, SampleWise };

struct PoisonSpec {
    float budget = 4.0f / 255.0f;
    PoisonMode mode = PoisonMode::ClassWise;
    int generator_epochs = 30;
};

struct SurrogateCfg {
    int surrogate_steps = 10;  // model updates per outer pass
    int pert_steps = 20;       // perturbation updates per outer pass
    int batch = 128;
    double lr = 0.1;
    double momentum = 0.9;
    double stop_acc = 99.0;  // stop once surrogate fits perturbed data this well
    uint64_t seed = 0;
};

struct PoisonedDataset {
    fat::Dataset base;  // original images; labels unchanged
    Tensor perts;       // (K,C,H,W) class-wise or (N,C,H,W) sample-wise
    PoisonMode mode = PoisonMode::ClassWise;
    float budget = 0;
    int outer_passes = 0;
    double surrogate_acc = 0;
    bool zero_budget = false;  // budget 0: unperturbed passthrough, warn upstream

    // materialize clamp(x + pert, 0, 1) with the original labels
    fat::Dataset apply() const;
};

// Error-minimizing perturbations via the alternating bi-level loop: fit the
// surrogate on perturbed data, then step the perturbations downhill on the
// same loss under an inf-ball projection.
PoisonedDataset generate_poison(const fat::Dataset& data, const PoisonSpec& spec,
                                const SurrogateCfg& cfg);

// Uniform noise counter-measure; only meaningful against sample-wise poison.
fat::Dataset random_noise_defense(const PoisonedDataset& poisoned, float noise_scale,
                                  uint64_t seed);

enum class TransferTrainer { Standard, Adversarial, StandardOutlierReg };

std::string transfer_trainer_name(TransferTrainer t);

struct TransferCfg {
    int epochs = 20;
    double lr_max = 0.2;
    double lr_peak = 0.4;
    int batch = 128;
    double momentum = 0.9;
    uint64_t seed = 0;
    float at_xi = 0;  // adversarial trainer's radius; 0 -> poison budget
    int at_steps = 10;
    double eta = 10.0;      // outlier-reg trainer
    double alpha_reg = 1e-5;
    int eval_n = 1024;
};

struct TransferRow {
    std::string trainer;
    double clean_acc = 0;
    double seconds = 0;
};

struct TransferTable {
    float budget = 0;
    std::vector<TransferRow> rows;
};

// Trains one model per trainer on the (already poisoned) train set. All
// trainers see identical batch order per seed; only the objective differs.
TransferTable transfer_experiment(const fat::Dataset& poisoned_train,
                                  const fat::Dataset& test, const PoisonSpec& spec,
                                  const TransferCfg& cfg,
                                  const std::vector<TransferTrainer>& trainers = {
                                      TransferTrainer::Standard,
                                      TransferTrainer::Adversarial,
                                      TransferTrainer::StandardOutlierReg});

// Single trainer run; returns final clean-test accuracy. Exposed for tests.
double train_transfer(nn::Model& m, const fat::Dataset& train, const fat::Dataset& test,
                      TransferTrainer kind, const PoisonSpec& spec, const TransferCfg& cfg);

}  // namespace fatlab::poison
