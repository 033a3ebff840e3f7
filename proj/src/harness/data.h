#pragma once

#include <cstdint>
#include <string>

#include "core/tensor.h"
#include "fat/train.h"

namespace fatlab::harness {

enum class Source { Synthetic, Cifar10Binary, MnistIdx };

Source parse_source(const std::string& s);
std::string source_name(Source s);

// Texture of the synthetic classes: every class owns a smooth delta field and
// a dense sign pattern (both under the attack budget at defaults), classes in
// a group share a robust blob, and each draw adds smooth plus white noise.
struct SynthParams {
    int blob_group = 4;      // classes per shared blob; 0 disables blobs
    float blob_amp = 0.22f;
    float delta_amp = 0.04f;
    float patt_amp = 0.045f;
    float noise_smooth = 0.08f;
    float noise_white = 0.02f;
    float bright = 0.05f;
};

struct DatasetSpec {
    Source source = Source::Synthetic;
    int subset_train = 4096;
    int subset_test = 1024;
    int classes = 8;
    int hw = 16;  // synthetic image side
    uint64_t seed = 0;
    std::string root;  // directory holding cifar/mnist files
    SynthParams synth;
};

// Deterministic per spec.seed; subsets are class-balanced. For synthetic
// data, `class_means` (optional) receives the per-class dense sign pattern,
// which tests use as ground truth for trigger alignment.
void load_dataset(const DatasetSpec& spec, fat::Dataset* train, fat::Dataset* test,
                  Tensor* class_patterns = nullptr);

}  // namespace fatlab::harness
