#include "poison/unlearnable.h"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "attack/attacks.h"
#include "core/error.h"
#include "core/rng.h"
#include "fat/regularizers.h"
#include "nn/optim.h"

namespace fatlab::poison {

namespace {

using clock_t_ = std::chrono::steady_clock;

double seconds_since(clock_t_::time_point t0) {
    return std::chrono::duration<double>(clock_t_::now() - t0).count();
}

void add_pert_clamped(const fat::Dataset& base, const Tensor& perts, PoisonMode mode,
                      const std::vector<int64_t>& idx, int64_t lo, int64_t hi, Tensor* x,
                      std::vector<int>* y) {
    fat::gather_batch(base, idx, lo, hi, x, y);
    const int64_t img = x->numel() / x->dim(0);
    for (int64_t i = 0; i < hi - lo; ++i) {
        const int64_t src = idx[static_cast<size_t>(lo + i)];
        const int64_t prow =
            mode == PoisonMode::SampleWise
                ? src
                : static_cast<int64_t>(base.y[static_cast<size_t>(src)]);
        const float* p = perts.data() + prow * img;
        float* xr = x->data() + i * img;
        for (int64_t j = 0; j < img; ++j) xr[j] = clampf(xr[j] + p[j], 0.0f, 1.0f);
    }
}

}  // namespace

fat::Dataset PoisonedDataset::apply() const {
    fat::Dataset out;
    out.x = base.x;
    out.y = base.y;
    out.num_classes = base.num_classes;
    if (zero_budget || perts.numel() == 0) return out;
    const int64_t n = base.n();
    const int64_t img = base.x.numel() / n;
    for (int64_t i = 0; i < n; ++i) {
        const int64_t prow =
            mode == PoisonMode::SampleWise
                ? i
                : static_cast<int64_t>(base.y[static_cast<size_t>(i)]);
        const float* p = perts.data() + prow * img;
        float* xr = out.x.data() + i * img;
        for (int64_t j = 0; j < img; ++j) xr[j] = clampf(xr[j] + p[j], 0.0f, 1.0f);
    }
    return out;
}

PoisonedDataset generate_poison(const fat::Dataset& data, const PoisonSpec& spec,
                                const SurrogateCfg& cfg) {
    if (spec.budget < 0) throw_input("generate_poison: negative budget");
    if (data.n() == 0) throw_input("generate_poison: empty dataset");

    PoisonedDataset out;
    out.base.x = data.x;
    out.base.y = data.y;
    out.base.num_classes = data.num_classes;
    out.mode = spec.mode;
    out.budget = spec.budget;

    const int64_t n = data.n();
    const int64_t img = data.x.numel() / n;
    std::vector<int64_t> pshape = data.x.shape();
    pshape[0] = spec.mode == PoisonMode::SampleWise
                    ? n
                    : static_cast<int64_t>(data.num_classes);
    out.perts.reshape_alloc(pshape);
    out.perts.fill(0.0f);
    if (spec.budget == 0.0f) {
        out.zero_budget = true;
        return out;
    }

    nn::Model surrogate(static_cast<int>(data.x.dim(1)), static_cast<int>(data.x.dim(2)),
                        static_cast<int>(data.x.dim(3)), data.num_classes);
    Rng init_rng(cfg.seed);
    surrogate.init_params(init_rng);
    nn::SgdMomentum opt{cfg.momentum};
    auto params = surrogate.params();

    Rng rng(cfg.seed + 101);
    std::vector<int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    const int64_t bs = cfg.batch;
    const float step = spec.budget / 10.0f;

    Tensor xb, gx;
    std::vector<int> yb;
    int64_t cursor = 0;
    auto next_range = [&](int64_t* lo, int64_t* hi) {
        if (cursor >= n) {
            rng.shuffle(order.data(), static_cast<int64_t>(order.size()));
            cursor = 0;
        }
        *lo = cursor;
        *hi = std::min(n, cursor + bs);
        cursor = *hi;
    };
    rng.shuffle(order.data(), static_cast<int64_t>(order.size()));

    for (int pass = 0; pass < spec.generator_epochs; ++pass) {
        out.outer_passes = pass + 1;
        for (int s = 0; s < cfg.surrogate_steps; ++s) {
            int64_t lo, hi;
            next_range(&lo, &hi);
            add_pert_clamped(out.base, out.perts, spec.mode, order, lo, hi, &xb, &yb);
            nn::FwdCache cache;
            surrogate.forward(xb, nn::Mode::Train, true, cache);
            Tensor dlogits;
            nn::cross_entropy(cache.logits, yb, &dlogits);
            surrogate.zero_grads();
            surrogate.backward(cache, dlogits, true, nullptr);
            opt.step(params, cfg.lr);
        }

        // stop once the surrogate fits the perturbed data
        {
            const int64_t m = std::min<int64_t>(n, 2048);
            std::vector<int64_t> head(order.begin(), order.begin() + m);
            add_pert_clamped(out.base, out.perts, spec.mode, head, 0, m, &xb, &yb);
            out.surrogate_acc = fat::accuracy(surrogate, xb, yb);
            if (out.surrogate_acc > cfg.stop_acc) break;
        }

        for (int s = 0; s < cfg.pert_steps; ++s) {
            int64_t lo, hi;
            next_range(&lo, &hi);
            add_pert_clamped(out.base, out.perts, spec.mode, order, lo, hi, &xb, &yb);
            attack::input_gradient(surrogate, xb, yb, nn::Mode::Eval, false, &gx);
            // descend the loss: error-minimizing noise
            for (int64_t i = 0; i < hi - lo; ++i) {
                const int64_t src = order[static_cast<size_t>(lo + i)];
                const int64_t prow =
                    spec.mode == PoisonMode::SampleWise
                        ? src
                        : static_cast<int64_t>(out.base.y[static_cast<size_t>(src)]);
                float* p = out.perts.data() + prow * img;
                const float* g = gx.data() + i * img;
                for (int64_t j = 0; j < img; ++j)
                    p[j] = clampf(p[j] - step * sign0(g[j]), -spec.budget, spec.budget);
            }
        }
    }
    return out;
}

fat::Dataset random_noise_defense(const PoisonedDataset& poisoned, float noise_scale,
                                  uint64_t seed) {
    if (poisoned.mode != PoisonMode::SampleWise)
        throw_input("random_noise_defense: requires sample-wise poison");
    fat::Dataset out = poisoned.apply();
    if (noise_scale == 0.0f) return out;
    Rng rng(seed);
    float* x = out.x.data();
    const int64_t total = out.x.numel();
    for (int64_t i = 0; i < total; ++i)
        x[i] = clampf(x[i] + rng.uniform(-noise_scale, noise_scale), 0.0f, 1.0f);
    return out;
}

std::string transfer_trainer_name(TransferTrainer t) {
    switch (t) {
        case TransferTrainer::Standard: return "standard";
        case TransferTrainer::Adversarial: return "adversarial";
        case TransferTrainer::StandardOutlierReg: return "standard+l_reg";
    }
    return "?";
}

double train_transfer(nn::Model& m, const fat::Dataset& train, const fat::Dataset& test,
                      TransferTrainer kind, const PoisonSpec& spec, const TransferCfg& cfg) {
    const int64_t n = train.n();
    if (n == 0) throw_input("train_transfer: empty train set");
    nn::SgdMomentum opt{cfg.momentum};
    auto params = m.params();
    const int64_t bs = cfg.batch;
    const int64_t nb = (n + bs - 1) / bs;
    const float at_xi = cfg.at_xi > 0 ? cfg.at_xi : spec.budget;
    const float at_step = at_xi / 4.0f;

    // batch order comes only from this rng so every trainer sees the same data
    Rng order_rng(cfg.seed);
    std::vector<int64_t> perm(static_cast<size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);

    Tensor xb, xadv;
    std::vector<int> yb;
    for (int ep = 0; ep < cfg.epochs; ++ep) {
        order_rng.shuffle(perm.data(), static_cast<int64_t>(perm.size()));
        for (int64_t bi = 0; bi < nb; ++bi) {
            const int64_t lo = bi * bs;
            const int64_t hi = std::min(n, lo + bs);
            fat::gather_batch(train, perm, lo, hi, &xb, &yb);
            const double lr = nn::cyclic_lr(ep + static_cast<double>(bi) / nb,
                                            cfg.epochs, cfg.lr_max, cfg.lr_peak);
            const Tensor* xin = &xb;
            if (kind == TransferTrainer::Adversarial) {
                xadv = attack::pgd(m, xb, yb, at_xi, cfg.at_steps, at_step, 1,
                                   cfg.seed + 31 * static_cast<uint64_t>(ep) + bi);
                xin = &xadv;
            }
            nn::FwdCache cache;
            m.forward(*xin, nn::Mode::Train, true, cache);
            Tensor dlogits;
            nn::cross_entropy(cache.logits, yb, &dlogits);
            m.zero_grads();
            m.backward(cache, dlogits, true, nullptr);
            if (kind == TransferTrainer::StandardOutlierReg)
                fat::weight_outlier_loss_grad(m, cfg.eta, cfg.alpha_reg, false);
            opt.step(params, lr);
        }
    }
    const int64_t en = std::min<int64_t>(test.n(), cfg.eval_n);
    Tensor xe;
    std::vector<int> ye;
    std::vector<int64_t> eidx(static_cast<size_t>(en));
    std::iota(eidx.begin(), eidx.end(), 0);
    fat::gather_batch(test, eidx, 0, en, &xe, &ye);
    return fat::accuracy(m, xe, ye);
}

TransferTable transfer_experiment(const fat::Dataset& poisoned_train,
                                  const fat::Dataset& test, const PoisonSpec& spec,
                                  const TransferCfg& cfg,
                                  const std::vector<TransferTrainer>& trainers) {
    TransferTable table;
    table.budget = spec.budget;
    for (TransferTrainer kind : trainers) {
        nn::Model m(static_cast<int>(poisoned_train.x.dim(1)),
                    static_cast<int>(poisoned_train.x.dim(2)),
                    static_cast<int>(poisoned_train.x.dim(3)), poisoned_train.num_classes);
        Rng init_rng(cfg.seed);
        m.init_params(init_rng);
        auto t0 = clock_t_::now();
        TransferRow row;
        row.trainer = transfer_trainer_name(kind);
        row.clean_acc = train_transfer(m, poisoned_train, test, kind, spec, cfg);
        row.seconds = seconds_since(t0);
        table.rows.push_back(std::move(row));
    }
    return table;
}

}  // namespace fatlab::poison
