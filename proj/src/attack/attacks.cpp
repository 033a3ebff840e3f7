#include "attack/attacks.h"

#include "core/error.h"

namespace fatlab::attack {

void fgsm_sign(nn::Model& m, const Tensor& x, const Tensor& d0, const std::vector<int>& y,
               nn::Mode mode, bool update_running, Tensor* signs) {
    Tensor x0(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) x0[i] = clampf(x[i] + d0[i], 0.0f, 1.0f);
    Tensor gx;
    input_gradient(m, x0, y, mode, update_running, &gx);
    if (!signs->same_shape(x)) signs->reshape_alloc(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) (*signs)[i] = sign0(gx[i]);
}

void MepBuffer::init_random(Rng& rng, const std::vector<int64_t>& image_shape, int64_t n,
                            float budget) {
    xi = budget;
    std::vector<int64_t> shape = image_shape;
    shape.insert(shape.begin(), n);
    rows.reshape_alloc(shape);
    draw_init_noise(rng, InitNoise::Uniform, xi, &rows);
}

void MepBuffer::fetch(const std::vector<int64_t>& ids, Tensor* d0) const {
    const int64_t n = rows.dim(0);
    const int64_t img = rows.numel() / n;
    std::vector<int64_t> shape = rows.shape();
    shape[0] = static_cast<int64_t>(ids.size());
    if (d0->numel() != static_cast<int64_t>(ids.size()) * img) d0->reshape_alloc(shape);
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= n)
            throw_input("mep buffer id out of range: " + std::to_string(ids[i]));
        const float* src = rows.data() + ids[i] * img;
        float* dst = d0->data() + static_cast<int64_t>(i) * img;
        for (int64_t j = 0; j < img; ++j) dst[j] = clampf(src[j], -xi, xi);
    }
}

void MepBuffer::update(const std::vector<int64_t>& ids, const Tensor& signs, float eps) {
    const int64_t n = rows.dim(0);
    const int64_t img = rows.numel() / n;
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= n)
            throw_input("mep buffer id out of range: " + std::to_string(ids[i]));
        float* dst = rows.data() + ids[i] * img;
        const float* s = signs.data() + static_cast<int64_t>(i) * img;
        for (int64_t j = 0; j < img; ++j) dst[j] = clampf(mu * dst[j] + eps * s[j], -xi, xi);
    }
}

double input_gradient(nn::Model& m, const Tensor& x, const std::vector<int>& y,
                      nn::Mode mode, bool update_running, Tensor* gx) {
    nn::FwdCache cache;
    m.forward(x, mode, update_running, cache);
    Tensor dlogits;
    double loss = nn::cross_entropy(cache.logits, y, &dlogits);
    m.backward(cache, dlogits, /*accum_param_grads=*/false, gx);
    return loss;
}

void fgsm_rs_delta(const Tensor& d0, const Tensor& grad, float eps, float xi,
                   Tensor* d_sign, Tensor* d) {
    const int64_t n = d0.numel();
    if (d_sign && !d_sign->same_shape(d0)) d_sign->reshape_alloc(d0.shape());
    if (d && !d->same_shape(d0)) d->reshape_alloc(d0.shape());
    for (int64_t i = 0; i < n; ++i) {
        float s = sign0(grad[i]);
        if (d_sign) (*d_sign)[i] = s;
        if (d) (*d)[i] = clampf(d0[i] + eps * s, -xi, xi);
    }
}

void mep_buffer_update(Tensor& buffer_rows, const Tensor& d_sign, float mu, float eps,
                       float xi) {
    const int64_t n = buffer_rows.numel();
    for (int64_t i = 0; i < n; ++i)
        buffer_rows[i] = clampf(mu * buffer_rows[i] + eps * d_sign[i], -xi, xi);
}

void draw_init_noise(Rng& rng, InitNoise kind, float xi, Tensor* d0) {
    const int64_t n = d0->numel();
    if (kind == InitNoise::Uniform) {
        for (int64_t i = 0; i < n; ++i) (*d0)[i] = rng.uniform(-xi, xi);
    } else {
        for (int64_t i = 0; i < n; ++i) (*d0)[i] = clampf(rng.normal(0.0f, xi), -xi, xi);
    }
}

void craft_fgsm(nn::Model& m, const Tensor& x, const std::vector<int>& y, const Tensor& d0,
                float eps, float xi, nn::Mode grad_mode, bool update_running, FgsmOut* out) {
    out->x0.reshape_alloc(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) out->x0[i] = clampf(x[i] + d0[i], 0.0f, 1.0f);
    Tensor gx;
    input_gradient(m, out->x0, y, grad_mode, update_running, &gx);
    Tensor d;
    fgsm_rs_delta(d0, gx, eps, xi, &out->d_sign, &d);
    out->x_adv.reshape_alloc(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) out->x_adv[i] = clampf(x[i] + d[i], 0.0f, 1.0f);
}

Tensor pgd(nn::Model& m, const Tensor& x, const std::vector<int>& y, float xi, int steps,
           float step, int restarts, uint64_t seed) {
    Rng rng(seed);
    const int64_t n = x.numel();
    const int nb = static_cast<int>(x.dim(0));
    Tensor best = x;
    std::vector<double> best_loss(static_cast<size_t>(nb), -1e30);
    Tensor d(x.shape()), xa(x.shape()), gx;
    const int64_t img_sz = n / nb;
    auto compete = [&](const Tensor& cand) {
        nn::FwdCache cache;
        m.forward(cand, nn::Mode::Eval, false, cache);
        std::vector<double> lf;
        nn::cross_entropy_each(cache.logits, y, &lf, nullptr);
        for (int b = 0; b < nb; ++b) {
            if (lf[static_cast<size_t>(b)] > best_loss[static_cast<size_t>(b)]) {
                best_loss[static_cast<size_t>(b)] = lf[static_cast<size_t>(b)];
                std::copy(cand.data() + b * img_sz, cand.data() + (b + 1) * img_sz,
                          best.data() + b * img_sz);
            }
        }
    };
    for (int r = 0; r < restarts; ++r) {
        for (int64_t i = 0; i < n; ++i) d[i] = rng.uniform(-xi, xi);
        // the start point itself competes, so the result is never weaker
        // than the random start it grew from
        for (int64_t i = 0; i < n; ++i) xa[i] = clampf(x[i] + d[i], 0.0f, 1.0f);
        compete(xa);
        for (int s = 0; s < steps; ++s) {
            for (int64_t i = 0; i < n; ++i) xa[i] = clampf(x[i] + d[i], 0.0f, 1.0f);
            nn::FwdCache cache;
            m.forward(xa, nn::Mode::Eval, false, cache);
            Tensor dlogits;
            nn::cross_entropy_each(cache.logits, y, nullptr, &dlogits);
            m.backward(cache, dlogits, false, &gx);
            for (int64_t i = 0; i < n; ++i) {
                float nd = clampf(d[i] + step * sign0(gx[i]), -xi, xi);
                // project back into the image box
                d[i] = clampf(x[i] + nd, 0.0f, 1.0f) - x[i];
            }
        }
        for (int64_t i = 0; i < n; ++i) xa[i] = clampf(x[i] + d[i], 0.0f, 1.0f);
        compete(xa);
    }
    return best;
}

}  // namespace fatlab::attack
