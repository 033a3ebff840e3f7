#include "fat/train.h"

#include <chrono>
#include <cmath>
#include <numeric>

#include "fat/regularizers.h"
#include "nn/optim.h"

namespace fatlab::fat {

void gather_batch(const Dataset& d, const std::vector<int64_t>& idx, int64_t lo, int64_t hi,
                  Tensor* x, std::vector<int>* y) {
    const int64_t img = d.x.numel() / d.n();
    const int64_t nb = hi - lo;
    std::vector<int64_t> shape = d.x.shape();
    shape[0] = nb;
    if (x->numel() != nb * img) x->reshape_alloc(shape);
    else x->reshape_view(shape);
    y->resize(static_cast<size_t>(nb));
    for (int64_t i = 0; i < nb; ++i) {
        int64_t src = idx[static_cast<size_t>(lo + i)];
        std::copy(d.x.data() + src * img, d.x.data() + (src + 1) * img, x->data() + i * img);
        (*y)[static_cast<size_t>(i)] = d.y[static_cast<size_t>(src)];
    }
}

double accuracy(nn::Model& m, const Tensor& x, const std::vector<int>& y, int batch) {
    const int64_t n = x.dim(0);
    const int64_t img = x.numel() / n;
    int64_t correct = 0;
    nn::FwdCache cache;
    Tensor xb;
    for (int64_t lo = 0; lo < n; lo += batch) {
        int64_t hi = std::min(n, lo + batch);
        std::vector<int64_t> shape = x.shape();
        shape[0] = hi - lo;
        xb.reshape_alloc(shape);
        std::copy(x.data() + lo * img, x.data() + hi * img, xb.data());
        m.forward(xb, nn::Mode::Eval, false, cache);
        for (int64_t i = 0; i < hi - lo; ++i)
            if (nn::argmax_row(cache.logits, static_cast<int>(i)) ==
                y[static_cast<size_t>(lo + i)])
                ++correct;
    }
    return 100.0 * static_cast<double>(correct) / static_cast<double>(n);
}

static Tensor head_slice(const Tensor& x, int64_t n) {
    std::vector<int64_t> shape = x.shape();
    shape[0] = n;
    Tensor out(shape);
    std::copy(x.data(), x.data() + out.numel(), out.data());
    return out;
}

EvalScores evaluate(nn::Model& m, const Dataset& test, float xi, uint64_t seed, int clean_n,
                    int pgd_n, int pgd_steps, int pgd_restarts) {
    EvalScores s;
    const int64_t nc = std::min<int64_t>(clean_n, test.n());
    const int64_t np = std::min<int64_t>(pgd_n, test.n());
    Tensor xc = head_slice(test.x, nc);
    std::vector<int> yc(test.y.begin(), test.y.begin() + nc);
    Rng ev(seed + 777);

    s.clean = accuracy(m, xc, yc);

    Tensor xpert(xc.shape());
    for (int64_t i = 0; i < xc.numel(); ++i)
        xpert[i] = clampf(xc[i] + ev.uniform(-xi, xi), 0.0f, 1.0f);
    s.perturbed = accuracy(m, xpert, yc);

    // FGSM with random start, eval-mode gradients, batched at 256
    const float eps = 1.25f * xi;
    int64_t correct = 0;
    const int64_t img = xc.numel() / nc;
    for (int64_t lo = 0; lo < nc; lo += 256) {
        int64_t hi = std::min(nc, lo + 256);
        std::vector<int64_t> shape = xc.shape();
        shape[0] = hi - lo;
        Tensor xb(shape);
        std::copy(xc.data() + lo * img, xc.data() + hi * img, xb.data());
        std::vector<int> yb(yc.begin() + lo, yc.begin() + hi);
        Tensor d0(shape);
        for (int64_t i = 0; i < d0.numel(); ++i) d0[i] = ev.uniform(-xi, xi);
        attack::FgsmOut out;
        attack::craft_fgsm(m, xb, yb, d0, eps, xi, nn::Mode::Eval, false, &out);
        nn::FwdCache cache;
        m.forward(out.x_adv, nn::Mode::Eval, false, cache);
        for (int64_t i = 0; i < hi - lo; ++i)
            if (nn::argmax_row(cache.logits, static_cast<int>(i)) == yb[static_cast<size_t>(i)])
                ++correct;
    }
    s.fgsm = 100.0 * static_cast<double>(correct) / static_cast<double>(nc);

    Tensor xp = head_slice(test.x, np);
    std::vector<int> yp(test.y.begin(), test.y.begin() + np);
    Tensor xadv = attack::pgd(m, xp, yp, xi, pgd_steps, xi / 4.0f, pgd_restarts, seed);
    s.pgd10 = accuracy(m, xadv, yp);
    return s;
}

bool co_detect(const std::vector<EpochStats>& hist, double ratio, double gap, int* epoch) {
    double peak = 0.0;
    for (size_t e = 0; e < hist.size(); ++e) {
        if (e > 0 && peak > 0.0 && hist[e].pgd10 < ratio * peak &&
            hist[e].fgsm >= hist[e].clean - gap) {
            if (epoch) *epoch = static_cast<int>(e);
            return true;
        }
        peak = std::max(peak, hist[e].pgd10);
    }
    if (epoch) *epoch = -1;
    return false;
}

// Swaps every param grad with a scratch buffer so probe backwards can run
// without disturbing the accumulated main gradient.
struct GradStash {
    std::vector<Tensor> saved;
    void swap_out(std::vector<nn::Param*>& ps) {
        saved.resize(ps.size());
        for (size_t i = 0; i < ps.size(); ++i) {
            std::swap(saved[i], ps[i]->grad);
            if (ps[i]->grad.numel() != ps[i]->w.numel())
                ps[i]->grad.reshape_alloc(ps[i]->w.shape());
            ps[i]->grad.zero();
        }
    }
    void swap_in(std::vector<nn::Param*>& ps) {
        for (size_t i = 0; i < ps.size(); ++i) std::swap(saved[i], ps[i]->grad);
    }
};

// full mutable training state for the numeric-abort rollback
struct ModelSnapshot {
    std::vector<Tensor> tensors;
    void capture(nn::Model& m) {
        tensors.clear();
        for (nn::Param* p : m.params()) {
            tensors.push_back(p->w);
            tensors.push_back(p->mom);
        }
        for (auto& bs : m.bn_states()) {
            tensors.push_back(bs.running_mu);
            tensors.push_back(bs.running_var);
        }
    }
    void restore(nn::Model& m) const {
        size_t i = 0;
        for (nn::Param* p : m.params()) {
            p->w = tensors[i++];
            p->mom = tensors[i++];
        }
        for (auto& bs : m.bn_states()) {
            bs.running_mu = tensors[i++];
            bs.running_var = tensors[i++];
        }
    }
};

TrainResult train_fat(nn::Model& m, const Dataset& train, const Dataset& test,
                      const TrainSettings& cfg, const EpochHook& hook) {
    auto t0 = std::chrono::steady_clock::now();
    TrainResult res;
    Rng gen(cfg.seed);
    nn::SgdMomentum opt;
    opt.momentum = cfg.momentum;
    auto params = m.params();
    for (nn::Param* p : params) p->mom.zero();

    const int64_t n = train.n();
    const int64_t img = train.x.numel() / n;
    const float xi = cfg.xi;
    const float eps = cfg.eps_scale * xi;
    const int K = train.num_classes;

    std::vector<int64_t> bank_shape = train.x.shape();
    bank_shape[0] = K;
    res.trigger_bank.reshape_alloc(bank_shape);

    Tensor mep;
    if (cfg.method == Method::FgsmMep) {
        mep.reshape_alloc(train.x.shape());
        attack::draw_init_noise(gen, attack::InitNoise::Uniform, xi, &mep);
    }

    std::vector<int64_t> perm(static_cast<size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    const int64_t nbatch = (n + cfg.batch - 1) / cfg.batch;

    Tensor xb, d0, u, probe;
    std::vector<int> yb;
    std::vector<Tensor> gp(params.size()), gm(params.size());

    ModelSnapshot last_good;
    last_good.capture(m);
    const bool use_rpred = cfg.regs.r_pred && cfg.regs.beta != 0.0;

    for (int ep = 0; ep < cfg.epochs; ++ep) {
        gen.shuffle(perm.data(), n);
        double loss_sum = 0.0;
        double aux_sum = 0.0, outlier_sum = 0.0, l2_sum = 0.0, rpred_sum = 0.0;
        double lr = 0.0;
        for (int64_t bi = 0; bi < nbatch; ++bi) {
            int64_t lo = bi * cfg.batch;
            int64_t hi = std::min(n, lo + cfg.batch);
            gather_batch(train, perm, lo, hi, &xb, &yb);
            const int64_t nb = hi - lo;
            lr = nn::cyclic_lr(ep + static_cast<double>(bi) / static_cast<double>(nbatch),
                               cfg.epochs, cfg.lr_max, cfg.lr_peak);

            if (d0.numel() != nb * img) d0.reshape_alloc(xb.shape());
            if (cfg.method == Method::FgsmMep) {
                for (int64_t i = 0; i < nb; ++i) {
                    int64_t src = perm[static_cast<size_t>(lo + i)];
                    for (int64_t j = 0; j < img; ++j)
                        d0[i * img + j] = clampf(mep[src * img + j], -xi, xi);
                }
            } else {
                attack::draw_init_noise(gen, cfg.init_noise, xi, &d0);
            }

            attack::FgsmOut atk;
            attack::craft_fgsm(m, xb, yb, d0, eps, xi, nn::Mode::Train, true, &atk);

            m.zero_grads();
            nn::FwdCache cache_adv;
            m.forward(atk.x_adv, nn::Mode::Train, true, cache_adv);
            Tensor dlogits;
            double loss = nn::cross_entropy(cache_adv.logits, yb, &dlogits);

            nn::FwdCache cache0;
            Tensor dlogits0;
            if (use_rpred) {
                m.forward(atk.x0, nn::Mode::Train, true, cache0);
                dlogits0.reshape_alloc(dlogits.shape());
                const double beta = cfg.regs.beta;
                double rp = 0.0;
                const float* a = cache_adv.logits.data();
                const float* b = cache0.logits.data();
                const double scale = 2.0 * beta / static_cast<double>(nb);
                for (int64_t i = 0; i < dlogits.numel(); ++i) {
                    double diff = static_cast<double>(a[i]) - b[i];
                    rp += diff * diff;
                    dlogits[i] += static_cast<float>(scale * diff);
                    dlogits0[i] = static_cast<float>(-scale * diff);
                }
                double rpv = beta * rp / static_cast<double>(nb);
                loss += rpv;
                rpred_sum += rpv;
            }

            m.backward(cache_adv, dlogits, true, nullptr);
            if (use_rpred) m.backward(cache0, dlogits0, true, nullptr);
            if (cfg.regs.outlier) {
                double lv = weight_outlier_loss_grad(m, cfg.regs.eta, cfg.regs.alpha_reg,
                                                     cfg.regs.outlier_signed);
                loss += lv;
                outlier_sum += lv;
            }
            if (cfg.regs.l2 && cfg.regs.lam_l2 != 0.0) {
                double lv = l2_conv_loss(m, cfg.regs.lam_l2, true);
                loss += lv;
                l2_sum += lv;
            }

            if (cfg.regs.aux) {
                aux_loss_u(res.trigger_bank, atk.d_sign, yb, cfg.regs.alpha_aux,
                           cfg.regs.aux_per_example, &u);
                double unorm = std::sqrt(dsum_sq(u.data(), u.numel()));
                double h = cfg.regs.fd_h / std::max(unorm, 1e-12);
                if (unorm > 1e-12) {
                    if (probe.numel() != xb.numel()) probe.reshape_alloc(xb.shape());
                    GradStash stash;
                    stash.swap_out(params);
                    for (int64_t i = 0; i < xb.numel(); ++i)
                        probe[i] = atk.x0[i] + static_cast<float>(h) * u[i];
                    nn::FwdCache pc;
                    m.forward(probe, nn::Mode::Train, true, pc);
                    Tensor dl;
                    nn::cross_entropy(pc.logits, yb, &dl);
                    m.backward(pc, dl, true, nullptr);
                    for (size_t i = 0; i < params.size(); ++i) gp[i] = params[i]->grad;
                    for (auto* p : params) p->grad.zero();
                    for (int64_t i = 0; i < xb.numel(); ++i)
                        probe[i] = atk.x0[i] - static_cast<float>(h) * u[i];
                    m.forward(probe, nn::Mode::Train, true, pc);
                    nn::cross_entropy(pc.logits, yb, &dl);
                    m.backward(pc, dl, true, nullptr);
                    for (size_t i = 0; i < params.size(); ++i) gm[i] = params[i]->grad;
                    stash.swap_in(params);
                    const float inv2h = static_cast<float>(1.0 / (2.0 * h));
                    for (size_t i = 0; i < params.size(); ++i) {
                        float* dst = params[i]->grad.data();
                        const float* a = gp[i].data();
                        const float* b = gm[i].data();
                        for (int64_t j = 0; j < params[i]->grad.numel(); ++j)
                            dst[j] += (a[j] - b[j]) * inv2h;
                    }
                    double lv = aux_loss_value(res.trigger_bank, atk.d_sign, yb,
                                               cfg.regs.alpha_aux, cfg.regs.aux_per_example);
                    loss += lv;
                    aux_sum += lv;
                }
            }

            if (!std::isfinite(loss)) {
                last_good.restore(m);
                res.aborted = true;
                res.abort_reason = "non-finite loss at epoch " + std::to_string(ep) +
                                   " batch " + std::to_string(bi);
                break;
            }

            trigger_bank_update(res.trigger_bank, atk.d_sign, yb);
            opt.step(params, lr);

            if (cfg.method == Method::FgsmMep) {
                for (int64_t i = 0; i < nb; ++i) {
                    int64_t src = perm[static_cast<size_t>(lo + i)];
                    for (int64_t j = 0; j < img; ++j)
                        mep[src * img + j] = clampf(
                            static_cast<float>(cfg.mep_mu) * mep[src * img + j] +
                                eps * atk.d_sign[i * img + j],
                            -xi, xi);
                }
            }
            loss_sum += loss;
        }
        if (res.aborted) break;
        // Loss alone can miss a blow-up: BN renormalizes huge activations and
        // ReLU maps NaN to zero, so check the weights themselves once per epoch.
        bool finite = true;
        for (const nn::Param* p : m.params())
            for (int64_t i = 0; i < p->w.numel() && finite; ++i)
                if (!std::isfinite(p->w[i])) finite = false;
        if (!finite) {
            last_good.restore(m);
            res.aborted = true;
            res.abort_reason = "non-finite parameters at epoch " + std::to_string(ep);
            break;
        }
        if (cfg.regs.clip) clip_conv_weights(m, cfg.regs.eta);
        last_good.capture(m);

        EvalScores ev = evaluate(m, test, xi, cfg.seed, cfg.eval_clean_n, cfg.eval_pgd_n,
                                 cfg.pgd_steps, cfg.pgd_restarts);
        EpochStats st;
        st.clean = ev.clean;
        st.perturbed = ev.perturbed;
        st.fgsm = ev.fgsm;
        st.pgd10 = ev.pgd10;
        st.maxr = max_dev_ratio(m);
        st.train_loss_adv = loss_sum / static_cast<double>(nbatch);
        st.reg_aux = aux_sum / static_cast<double>(nbatch);
        st.reg_outlier = outlier_sum / static_cast<double>(nbatch);
        st.reg_l2 = l2_sum / static_cast<double>(nbatch);
        st.reg_rpred = rpred_sum / static_cast<double>(nbatch);
        st.lr_last = lr;
        // clean train loss on a fixed prefix, eval mode so dynamics are
        // untouched
        {
            const int64_t ns = std::min<int64_t>(512, n);
            std::vector<int64_t> idx(static_cast<size_t>(ns));
            std::iota(idx.begin(), idx.end(), 0);
            Tensor xs;
            std::vector<int> ys;
            gather_batch(train, idx, 0, ns, &xs, &ys);
            nn::FwdCache cache;
            m.forward(xs, nn::Mode::Eval, false, cache);
            st.train_loss_clean = nn::cross_entropy(cache.logits, ys, nullptr);
        }
        res.history.push_back(st);
        if (hook && !hook(ep, st, m, res.trigger_bank)) break;
    }
    res.co = co_detect(res.history, 0.2, 5.0, &res.co_epoch);
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

}  // namespace fatlab::fat
