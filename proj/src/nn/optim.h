#pragma once

#include <algorithm>
#include <vector>

#include "nn/model.h"

namespace fatlab::nn {

// SGD with classical momentum: v <- m*v + g, w <- w - lr*v.
struct SgdMomentum {
    double momentum = 0.9;

    void step(std::vector<Param*>& params, double lr) const {
        for (Param* p : params) {
            if (!p->trainable) continue;
            float* w = p->w.data();
            float* g = p->grad.data();
            float* v = p->mom.data();
            const int64_t n = p->w.numel();
            const float m = static_cast<float>(momentum);
            const float lrf = static_cast<float>(lr);
            for (int64_t i = 0; i < n; ++i) {
                v[i] = m * v[i] + g[i];
                w[i] -= lrf * v[i];
            }
        }
    }
};

// Triangular cyclic schedule: 0 -> lr_max over the first `peak` fraction of
// training, then back to 0 at the end. `ep_frac` is epoch + batch fraction.
inline double cyclic_lr(double ep_frac, double total_epochs, double lr_max,
                        double peak = 0.4) {
    double t = ep_frac / total_epochs;
    if (t < peak) return lr_max * (t / peak);
    return lr_max * std::max(0.0, (1.0 - t) / (1.0 - peak));
}

}  // namespace fatlab::nn
