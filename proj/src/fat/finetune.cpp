#include "fat/finetune.h"

#include <chrono>
#include <cmath>
#include <cstring>
#include <numeric>

#include "nn/optim.h"

namespace fatlab::fat {

const char* recipe_name(Recipe r) {
    switch (r) {
        case Recipe::VFT: return "vft";
        case Recipe::LP: return "lp";
        case Recipe::RF: return "rf";
        case Recipe::RFT: return "rft";
        case Recipe::RSFT: return "rsft";
    }
    return "?";
}

bool parse_recipe(const std::string& s, Recipe* out) {
    if (s == "vft") *out = Recipe::VFT;
    else if (s == "lp") *out = Recipe::LP;
    else if (s == "rf") *out = Recipe::RF;
    else if (s == "rft") *out = Recipe::RFT;
    else if (s == "rsft") *out = Recipe::RSFT;
    else return false;
    return true;
}

double cosine_shift_penalty(const std::vector<float>& theta,
                            const std::vector<float>& theta_init) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < theta.size(); ++i) {
        dot += static_cast<double>(theta[i]) * theta_init[i];
        na += static_cast<double>(theta[i]) * theta[i];
        nb += static_cast<double>(theta_init[i]) * theta_init[i];
    }
    double den = std::sqrt(na) * std::sqrt(nb);
    if (den <= 0.0) return 0.0;
    return 1.0 - dot / den;
}

// adds lambda * d(1 - cos(theta, theta_init))/dtheta into param grads
static void add_cosine_shift_grad(std::vector<nn::Param*>& params,
                                  const std::vector<float>& theta_init, double lambda,
                                  bool raw_inner) {
    std::vector<float> theta;
    for (nn::Param* p : params)
        theta.insert(theta.end(), p->w.data(), p->w.data() + p->w.numel());
    size_t off = 0;
    if (raw_inner) {
        for (nn::Param* p : params) {
            for (int64_t i = 0; i < p->w.numel(); ++i)
                p->grad[i] += static_cast<float>(-lambda * theta_init[off + i]);
            off += static_cast<size_t>(p->w.numel());
        }
        return;
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < theta.size(); ++i) {
        dot += static_cast<double>(theta[i]) * theta_init[i];
        na += static_cast<double>(theta[i]) * theta[i];
        nb += static_cast<double>(theta_init[i]) * theta_init[i];
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    if (na <= 0.0 || nb <= 0.0) return;
    const double inv = 1.0 / (na * nb);
    const double proj = dot / (na * na * na * nb);
    for (nn::Param* p : params) {
        for (int64_t i = 0; i < p->w.numel(); ++i) {
            double dcos = theta_init[off + i] * inv - proj * theta[off + i];
            p->grad[i] += static_cast<float>(-lambda * dcos);
        }
        off += static_cast<size_t>(p->w.numel());
    }
}

FinetuneReport apply_recipe(nn::Model& m, const Dataset& train, const Dataset& test,
                            const FinetuneSettings& cfg) {
    auto t0 = std::chrono::steady_clock::now();
    FinetuneReport rep;
    rep.pre = evaluate(m, test, cfg.xi, cfg.seed);

    const int L = m.num_layers();
    for (int l = 0; l < L; ++l) m.set_layer_trainable(l, true);

    Rng reinit_rng(cfg.seed + 1000003);
    switch (cfg.kind) {
        case Recipe::VFT:
            break;
        case Recipe::LP:
            for (int l = cfg.k; l < L; ++l) m.set_layer_trainable(l, false);
            break;
        case Recipe::RF:
            for (int l = 0; l < cfg.k; ++l) {
                m.reinit_layer(l, reinit_rng);
                m.set_layer_trainable(l, false);
            }
            break;
        case Recipe::RFT:
        case Recipe::RSFT:
            for (int l = 0; l < cfg.k; ++l) m.reinit_layer(l, reinit_rng);
            break;
    }
    const bool shift_pen = cfg.kind == Recipe::RSFT && cfg.lambda_shift > 0.0;
    std::vector<float> theta_init;
    if (shift_pen) theta_init = m.flatten_params();

    auto params = m.params();
    for (nn::Param* p : params) p->mom.zero();
    nn::SgdMomentum opt;
    opt.momentum = cfg.momentum;

    Rng gen(cfg.seed);
    const int64_t n = train.n();
    std::vector<int64_t> perm(static_cast<size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    Tensor xb;
    std::vector<int> yb;
    for (int ep = 0; ep < cfg.epochs; ++ep) {
        gen.shuffle(perm.data(), n);
        for (int64_t lo = 0; lo < n; lo += cfg.batch) {
            int64_t hi = std::min(n, lo + cfg.batch);
            gather_batch(train, perm, lo, hi, &xb, &yb);
            const Tensor* xin = &xb;
            attack::FgsmOut atk;
            if (cfg.adversarial_data) {
                Tensor d0(xb.shape());
                attack::draw_init_noise(gen, attack::InitNoise::Uniform, cfg.xi, &d0);
                attack::craft_fgsm(m, xb, yb, d0, cfg.eps_scale * cfg.xi, cfg.xi,
                                   nn::Mode::Train, true, &atk);
                xin = &atk.x_adv;
            }
            m.zero_grads();
            nn::FwdCache cache;
            m.forward(*xin, nn::Mode::Train, true, cache);
            Tensor dlogits;
            nn::cross_entropy(cache.logits, yb, &dlogits);
            m.backward(cache, dlogits, true, nullptr);
            if (shift_pen)
                add_cosine_shift_grad(params, theta_init, cfg.lambda_shift,
                                      cfg.rsft_raw_inner);
            opt.step(params, cfg.lr);
        }
    }
    for (int l = 0; l < L; ++l) m.set_layer_trainable(l, true);
    rep.post = evaluate(m, test, cfg.xi, cfg.seed);
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

RecurrenceReport recurrence_probe(nn::Model& m, const Dataset& train, const Dataset& test,
                                  const TrainSettings& fat_cfg, int extra_epochs) {
    RecurrenceReport rep;
    TrainSettings cfg = fat_cfg;
    cfg.epochs = extra_epochs;
    // Seed the detector with the recovered model's scores so a collapse during
    // the very first probe epoch still counts (the probe history alone would
    // have no prior peak to fall from).
    EpochStats before;
    {
        EvalScores ev = evaluate(m, test, cfg.xi, cfg.seed, cfg.eval_clean_n, cfg.eval_pgd_n,
                                 cfg.pgd_steps, cfg.pgd_restarts);
        before.clean = ev.clean;
        before.perturbed = ev.perturbed;
        before.fgsm = ev.fgsm;
        before.pgd10 = ev.pgd10;
    }
    rep.probe = train_fat(m, train, test, cfg);
    std::vector<EpochStats> merged;
    merged.reserve(rep.probe.history.size() + 1);
    merged.push_back(before);
    merged.insert(merged.end(), rep.probe.history.begin(), rep.probe.history.end());
    int ep = -1;
    rep.recurred = co_detect(merged, 0.2, 5.0, &ep);
    rep.epoch = rep.recurred ? ep - 1 : -1;
    return rep;
}

}  // namespace fatlab::fat
