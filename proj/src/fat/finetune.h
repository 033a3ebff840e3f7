#pragma once

#include <string>

#include "fat/train.h"

namespace fatlab::fat {

enum class Recipe { VFT, LP, RF, RFT, RSFT };

struct FinetuneSettings {
    Recipe kind = Recipe::VFT;
    int k = 2;                 // layer prefix; default = first conv block (conv + bn)
    double lambda_shift = 0.1;  // RSFT only
    int epochs = 1;
    bool adversarial_data = false;  // clean-data protocol by default
    double lr = 0.01;               // 0.1 * lr_max convention
    double momentum = 0.9;
    int batch = 128;
    uint64_t seed = 0;
    bool rsft_raw_inner = false;  // flag: -<theta, theta_init> instead of 1-cos
    // attack parameters when adversarial_data is set
    float xi = 16.0f / 255.0f;
    float eps_scale = 1.25f;
};

struct FinetuneReport {
    EvalScores pre;
    EvalScores post;
    double seconds = 0;
};

const char* recipe_name(Recipe r);
bool parse_recipe(const std::string& s, Recipe* out);

// Applies one recovery recipe in place. Freeze masks are restored to
// all-trainable before return so follow-up probes start clean.
FinetuneReport apply_recipe(nn::Model& m, const Dataset& train, const Dataset& test,
                            const FinetuneSettings& cfg);

// Continued FGSM-RS from a recovered model; reports whether CO fires again.
struct RecurrenceReport {
    TrainResult probe;
    bool recurred = false;
    int epoch = -1;
};
RecurrenceReport recurrence_probe(nn::Model& m, const Dataset& train, const Dataset& test,
                                  const TrainSettings& fat_cfg, int extra_epochs);

// 1 - cos(theta, theta_init) over flattened parameters (the RSFT penalty).
double cosine_shift_penalty(const std::vector<float>& theta, const std::vector<float>& theta_init);

}  // namespace fatlab::fat
