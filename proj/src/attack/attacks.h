#pragma once

#include <vector>

#include "core/rng.h"
#include "core/tensor.h"
#include "nn/model.h"

namespace fatlab::attack {

enum class InitNoise { Uniform, GaussianClip };

// Gradient of mean cross-entropy with respect to the input batch.
double input_gradient(nn::Model& m, const Tensor& x, const std::vector<int>& y,
                      nn::Mode mode, bool update_running, Tensor* gx);

// sign(grad of mean CE at clamp(x+d0)) with sign(0) = 0.
void fgsm_sign(nn::Model& m, const Tensor& x, const Tensor& d0, const std::vector<int>& y,
               nn::Mode mode, bool update_running, Tensor* signs);

// One FGSM step from a given start: d_sign = sign(grad) with sign(0) = 0,
// d = clip_xi(d0 + eps * d_sign). Written as a plain array op so tests can
// pin it against a scalar reference loop bit for bit.
void fgsm_rs_delta(const Tensor& d0, const Tensor& grad, float eps, float xi,
                   Tensor* d_sign, Tensor* d);

// Momentum variant's buffer update: row = clip_xi(mu * row + eps * sign).
void mep_buffer_update(Tensor& buffer_rows, const Tensor& d_sign, float mu, float eps,
                       float xi);

// Per-example momentum perturbation store keyed by stable example ids.
struct MepBuffer {
    Tensor rows;  // (num_examples, C, H, W)
    float xi = 0;
    float mu = 0.9f;

    void init_random(Rng& rng, const std::vector<int64_t>& image_shape, int64_t n, float budget);
    // gather stored rows for a batch, clipped to the budget
    void fetch(const std::vector<int64_t>& ids, Tensor* d0) const;
    // row <- clip_xi(mu*row + eps*signs) for each id
    void update(const std::vector<int64_t>& ids, const Tensor& signs, float eps);
};

void draw_init_noise(Rng& rng, InitNoise kind, float xi, Tensor* d0);

struct FgsmOut {
    Tensor x0;      // clamp(x + d0, 0, 1), the point the gradient is taken at
    Tensor d_sign;  // sign of that gradient
    Tensor x_adv;   // clamp(x + clip_xi(d0 + eps*sign), 0, 1)
};

// Full FGSM crafting pass. Training uses Train mode with running-stat
// updates; evaluation attacks use Eval mode.
void craft_fgsm(nn::Model& m, const Tensor& x, const std::vector<int>& y, const Tensor& d0,
                float eps, float xi, nn::Mode grad_mode, bool update_running, FgsmOut* out);

// PGD with uniform restarts; keeps the per-example worst case by final loss.
// Runs the model in Eval mode throughout.
Tensor pgd(nn::Model& m, const Tensor& x, const std::vector<int>& y, float xi, int steps,
           float step, int restarts, uint64_t seed);

}  // namespace fatlab::attack
