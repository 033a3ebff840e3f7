#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "core/tensor.h"
#include "nn/model.h"

namespace fatlab::harness {

// Versioned binary container: named float32 tensors plus scalar/string
// metadata, written little-endian with explicit shape records. Checkpoints,
// trigger banks and poison tensors all use it.
struct Container {
    std::vector<std::pair<std::string, Tensor>> tensors;
    std::vector<std::pair<std::string, std::string>> strings;
    std::vector<std::pair<std::string, int64_t>> ints;
    std::vector<std::pair<std::string, double>> reals;

    const Tensor* tensor(const std::string& name) const;
    const std::string* str(const std::string& name) const;
    const int64_t* integer(const std::string& name) const;
    const double* real(const std::string& name) const;
};

void write_container(const std::string& path, const Container& c);
Container read_container(const std::string& path);

struct CheckpointMeta {
    uint64_t rng_seed = 0;
    int epoch = 0;
};

// Model parameters plus BN running statistics under their layer names, and
// the input geometry so a model can be rebuilt from the file alone.
void save_checkpoint(const std::string& path, nn::Model& m, uint64_t rng_seed, int epoch);
// Strict: every stored tensor must match the model's shapes exactly.
CheckpointMeta load_checkpoint(const std::string& path, nn::Model* m);
// Constructs the model from the stored geometry, then loads into it.
std::unique_ptr<nn::Model> open_model_checkpoint(const std::string& path,
                                                 CheckpointMeta* meta);

}  // namespace fatlab::harness
