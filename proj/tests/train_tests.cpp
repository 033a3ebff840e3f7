// Training-loop invariants: attack feasibility, bit-exact reductions when a
// regularizer's coefficient is zero, freeze-mask soundness of the recovery
// recipes, determinism, and the numeric-abort rollback. These run real (tiny)
// training jobs, so the data is a fast-learnable toy problem.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "attack/attacks.h"
#include "core/rng.h"
#include "core/tensor.h"
#include "fat/finetune.h"
#include "fat/train.h"
#include "nn/model.h"
#include "nn/optim.h"

using namespace fatlab;

namespace {

// 4-class toy set: per-class sign pattern + per-sample noise, trivially
// learnable in a couple of epochs.
fat::Dataset toy_data(int64_t n, uint64_t seed, int classes = 4) {
    fat::Dataset d;
    d.num_classes = classes;
    d.x.reshape_alloc({n, 3, 8, 8});
    d.y.resize(static_cast<size_t>(n));
    const int64_t img = 3 * 8 * 8;
    std::vector<std::vector<float>> patt(static_cast<size_t>(classes));
    for (int k = 0; k < classes; ++k) {
        Rng pr(1000 + static_cast<uint64_t>(k));
        patt[static_cast<size_t>(k)].resize(static_cast<size_t>(img));
        for (auto& v : patt[static_cast<size_t>(k)]) v = pr.uniform(0.0f, 1.0f) < 0.5f ? -1.0f : 1.0f;
    }
    Rng rng(seed);
    for (int64_t i = 0; i < n; ++i) {
        int k = static_cast<int>(i % classes);
        d.y[static_cast<size_t>(i)] = k;
        for (int64_t j = 0; j < img; ++j) {
            float v = 0.5f + 0.18f * patt[static_cast<size_t>(k)][static_cast<size_t>(j)] +
                      rng.uniform(-0.1f, 0.1f);
            d.x[i * img + j] = clampf(v, 0.0f, 1.0f);
        }
    }
    return d;
}

nn::Model small_model(uint64_t seed, int classes = 4) {
    nn::Model m(3, 8, 8, classes, {8, 16});
    Rng rng(seed);
    m.init_params(rng);
    return m;
}

fat::TrainSettings tiny_settings() {
    fat::TrainSettings s;
    s.epochs = 2;
    s.lr_max = 0.1;
    s.batch = 32;
    s.xi = 16.0f / 255.0f;
    s.seed = 11;
    s.eval_clean_n = 64;
    s.eval_pgd_n = 32;
    return s;
}

bool same_history(const std::vector<fat::EpochStats>& a, const std::vector<fat::EpochStats>& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i) {
        const auto& p = a[i];
        const auto& q = b[i];
        if (p.clean != q.clean || p.perturbed != q.perturbed || p.fgsm != q.fgsm ||
            p.pgd10 != q.pgd10 || p.maxr != q.maxr || p.train_loss_adv != q.train_loss_adv ||
            p.train_loss_clean != q.train_loss_clean || p.reg_aux != q.reg_aux ||
            p.reg_outlier != q.reg_outlier || p.reg_l2 != q.reg_l2 ||
            p.reg_rpred != q.reg_rpred || p.lr_last != q.lr_last)
            return false;
    }
    return true;
}

bool starts_with(const std::string& s, const std::string& pre) {
    return s.rfind(pre, 0) == 0;
}

// params wholly inside layers [0, k) for the block/bn/head layer indexing
bool in_layer_prefix(const std::string& name, int k, int num_blocks) {
    for (int l = 0; l < k; ++l) {
        int bi = l / 2;
        if (l < 2 * num_blocks) {
            std::string pre = (l % 2 == 0 ? "conv" : "bn") + std::to_string(bi) + ".";
            if (starts_with(name, pre)) return true;
        } else if (starts_with(name, "head.")) {
            return true;
        }
    }
    return false;
}

double max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
    REQUIRE(a.size() == b.size());
    double r = 0;
    for (size_t i = 0; i < a.size(); ++i) r = std::max(r, std::abs(double(a[i]) - b[i]));
    return r;
}

}  // namespace

TEST_CASE("crafted attacks stay feasible") {
    auto m = small_model(3);
    auto d = toy_data(32, 21);
    const float xi = 16.0f / 255.0f;
    Rng rng(5);
    Tensor d0(d.x.shape());
    attack::draw_init_noise(rng, attack::InitNoise::Uniform, xi, &d0);

    attack::FgsmOut out;
    attack::craft_fgsm(m, d.x, d.y, d0, 1.25f * xi, xi, nn::Mode::Train, true, &out);
    for (int64_t i = 0; i < out.x_adv.numel(); ++i) {
        CHECK(out.x_adv[i] >= 0.0f);
        CHECK(out.x_adv[i] <= 1.0f);
        CHECK(std::abs(out.x_adv[i] - d.x[i]) <= xi + 1e-6f);
        float s = out.d_sign[i];
        CHECK((s == -1.0f || s == 0.0f || s == 1.0f));
    }

    Tensor xp = attack::pgd(m, d.x, d.y, xi, 10, xi / 4.0f, 2, 9);
    for (int64_t i = 0; i < xp.numel(); ++i) {
        CHECK(xp[i] >= 0.0f);
        CHECK(xp[i] <= 1.0f);
        CHECK(std::abs(xp[i] - d.x[i]) <= xi + 1e-6f);
    }
}

TEST_CASE("zero-coefficient regularizers reduce bit-exactly to the plain loop") {
    auto train = toy_data(96, 31);
    auto test = toy_data(64, 32);
    auto cfg = tiny_settings();

    auto m0 = small_model(17);
    auto base = fat::train_fat(m0, train, test, cfg);
    auto theta0 = m0.flatten_params();

    SUBCASE("l2 with lambda 0") {
        auto cfg2 = cfg;
        cfg2.regs.l2 = true;
        cfg2.regs.lam_l2 = 0.0;
        auto m = small_model(17);
        auto r = fat::train_fat(m, train, test, cfg2);
        CHECK(same_history(base.history, r.history));
        CHECK(max_abs_diff(theta0, m.flatten_params()) == 0.0);
    }
    SUBCASE("r_pred with beta 0") {
        auto cfg2 = cfg;
        cfg2.regs.r_pred = true;
        cfg2.regs.beta = 0.0;
        auto m = small_model(17);
        auto r = fat::train_fat(m, train, test, cfg2);
        CHECK(same_history(base.history, r.history));
        CHECK(max_abs_diff(theta0, m.flatten_params()) == 0.0);
    }
    SUBCASE("aux with alpha 0") {
        auto cfg2 = cfg;
        cfg2.regs.aux = true;
        cfg2.regs.alpha_aux = 0.0;
        auto m = small_model(17);
        auto r = fat::train_fat(m, train, test, cfg2);
        CHECK(same_history(base.history, r.history));
        CHECK(max_abs_diff(theta0, m.flatten_params()) == 0.0);
    }
}

TEST_CASE("training is deterministic in the seed") {
    auto train = toy_data(96, 41);
    auto test = toy_data(64, 42);
    auto cfg = tiny_settings();

    auto ma = small_model(23);
    auto ra = fat::train_fat(ma, train, test, cfg);
    auto mb = small_model(23);
    auto rb = fat::train_fat(mb, train, test, cfg);
    CHECK(same_history(ra.history, rb.history));
    CHECK(max_abs_diff(ma.flatten_params(), mb.flatten_params()) == 0.0);
    // trigger banks identical as well
    REQUIRE(ra.trigger_bank.numel() == rb.trigger_bank.numel());
    for (int64_t i = 0; i < ra.trigger_bank.numel(); ++i)
        CHECK(ra.trigger_bank[i] == rb.trigger_bank[i]);

    auto cfg2 = cfg;
    cfg2.seed = cfg.seed + 1;
    auto mc = small_model(23);
    auto rc = fat::train_fat(mc, train, test, cfg2);
    CHECK_FALSE(same_history(ra.history, rc.history));
}

TEST_CASE("history bookkeeping: length, ranges, bank bounds, lr schedule") {
    auto train = toy_data(96, 51);
    auto test = toy_data(64, 52);
    auto cfg = tiny_settings();
    cfg.epochs = 3;
    auto m = small_model(29);
    auto r = fat::train_fat(m, train, test, cfg);

    REQUIRE(static_cast<int>(r.history.size()) == cfg.epochs);
    for (const auto& e : r.history) {
        for (double acc : {e.clean, e.perturbed, e.fgsm, e.pgd10}) {
            CHECK(acc >= 0.0);
            CHECK(acc <= 100.0);
        }
        CHECK(e.maxr >= 0.0);
        CHECK(std::isfinite(e.train_loss_adv));
    }
    // bank rows are momentum means of sign tensors, so magnitudes stay <= 1
    for (int64_t i = 0; i < r.trigger_bank.numel(); ++i) {
        CHECK(r.trigger_bank[i] <= 1.0f);
        CHECK(r.trigger_bank[i] >= -1.0f);
    }
    // last recorded lr is the schedule value of the last batch
    const int64_t nb = (train.n() + cfg.batch - 1) / cfg.batch;
    double expect = nn::cyclic_lr(cfg.epochs - 1 + double(nb - 1) / double(nb), cfg.epochs,
                                  cfg.lr_max, cfg.lr_peak);
    CHECK(r.history.back().lr_last == doctest::Approx(expect).epsilon(1e-12));
    CHECK_FALSE(r.aborted);
    CHECK(r.co_epoch == -1);
}

TEST_CASE("epoch hook can stop training early") {
    auto train = toy_data(64, 61);
    auto test = toy_data(64, 62);
    auto cfg = tiny_settings();
    cfg.epochs = 5;
    auto m = small_model(31);
    int calls = 0;
    auto r = fat::train_fat(m, train, test, cfg,
                            [&](int, const fat::EpochStats&, nn::Model&, const Tensor&) {
                                ++calls;
                                return false;
                            });
    CHECK(calls == 1);
    CHECK(r.history.size() == 1);
}

TEST_CASE("stronger pgd is not weaker") {
    auto train = toy_data(256, 71);
    auto test = toy_data(128, 72);
    auto cfg = tiny_settings();
    cfg.epochs = 4;
    auto m = small_model(37);
    fat::train_fat(m, train, test, cfg);

    const float xi = 16.0f / 255.0f;
    Tensor x10 = attack::pgd(m, test.x, test.y, xi, 10, xi / 4.0f, 1, 5);
    Tensor x50 = attack::pgd(m, test.x, test.y, xi, 50, xi / 4.0f, 1, 5);
    double a10 = fat::accuracy(m, x10, test.y);
    double a50 = fat::accuracy(m, x50, test.y);
    CHECK(a50 <= a10 + 1.0);
}

TEST_CASE("numeric blow-up aborts and rolls back to finite weights") {
    auto train = toy_data(64, 81);
    auto test = toy_data(64, 82);
    auto cfg = tiny_settings();
    cfg.epochs = 4;
    cfg.lr_max = 1e9;
    auto m = small_model(41);
    auto r = fat::train_fat(m, train, test, cfg);
    CHECK(r.aborted);
    CHECK_FALSE(r.abort_reason.empty());
    for (const auto* p : m.params())
        for (int64_t i = 0; i < p->w.numel(); ++i) REQUIRE(std::isfinite(p->w[i]));
}

TEST_CASE("lp freezes everything outside the prefix and restores masks") {
    auto train = toy_data(96, 91);
    auto test = toy_data(64, 92);
    auto m = small_model(43);
    auto cfg0 = tiny_settings();
    cfg0.epochs = 1;
    fat::train_fat(m, train, test, cfg0);

    std::vector<std::vector<float>> before;
    for (const auto* p : m.params())
        before.emplace_back(p->w.data(), p->w.data() + p->w.numel());

    fat::FinetuneSettings fs;
    fs.kind = fat::Recipe::LP;
    fs.k = 2;
    fs.lr = 0.05;
    fs.seed = 13;
    fat::apply_recipe(m, train, test, fs);

    auto params = m.params();
    const int nblocks = 2;
    for (size_t i = 0; i < params.size(); ++i) {
        const auto* p = params[i];
        bool inside = in_layer_prefix(p->name, fs.k, nblocks);
        bool moved = std::memcmp(before[i].data(), p->w.data(),
                                 sizeof(float) * static_cast<size_t>(p->w.numel())) != 0;
        if (inside)
            CHECK_MESSAGE(moved, p->name);
        else
            CHECK_MESSAGE(!moved, p->name);
        CHECK(p->trainable);  // masks restored
    }
}

TEST_CASE("lp over the whole stack is exactly vft") {
    auto train = toy_data(96, 101);
    auto test = toy_data(64, 102);
    auto cfg0 = tiny_settings();
    cfg0.epochs = 1;

    auto ma = small_model(47);
    fat::train_fat(ma, train, test, cfg0);
    auto mb = ma.clone();  // identical starting point

    fat::FinetuneSettings fs;
    fs.lr = 0.05;
    fs.seed = 19;
    fs.kind = fat::Recipe::VFT;
    fat::apply_recipe(ma, train, test, fs);
    fs.kind = fat::Recipe::LP;
    fs.k = ma.num_layers();
    fat::apply_recipe(mb, train, test, fs);

    CHECK(max_abs_diff(ma.flatten_params(), mb.flatten_params()) == 0.0);
}

TEST_CASE("rsft with zero shift penalty is exactly rft") {
    auto train = toy_data(96, 111);
    auto test = toy_data(64, 112);
    auto cfg0 = tiny_settings();
    cfg0.epochs = 1;

    auto ma = small_model(53);
    fat::train_fat(ma, train, test, cfg0);
    auto mb = ma.clone();

    fat::FinetuneSettings fs;
    fs.lr = 0.05;
    fs.seed = 23;
    fs.k = 2;
    fs.kind = fat::Recipe::RFT;
    fat::apply_recipe(ma, train, test, fs);
    fs.kind = fat::Recipe::RSFT;
    fs.lambda_shift = 0.0;
    fat::apply_recipe(mb, train, test, fs);

    CHECK(max_abs_diff(ma.flatten_params(), mb.flatten_params()) == 0.0);
}

TEST_CASE("rsft shift penalty pulls weights toward the reinit point") {
    auto train = toy_data(96, 121);
    auto test = toy_data(64, 122);
    auto cfg0 = tiny_settings();
    cfg0.epochs = 1;

    auto ma = small_model(59);
    fat::train_fat(ma, train, test, cfg0);
    auto mb = ma.clone();

    fat::FinetuneSettings fs;
    fs.lr = 0.05;
    fs.seed = 29;
    fs.k = 2;
    fs.epochs = 5;  // enough drift from the reinit point for the pull to show
    fs.kind = fat::Recipe::RFT;
    fat::apply_recipe(ma, train, test, fs);

    // capture the shared post-reinit starting point by replaying the reinit
    auto mc = mb.clone();
    {
        Rng rr(fs.seed + 1000003);
        for (int l = 0; l < fs.k; ++l) mc.reinit_layer(l, rr);
    }
    auto theta_init = mc.flatten_params();

    fs.kind = fat::Recipe::RSFT;
    fs.lambda_shift = 50.0;  // strong pull
    fat::apply_recipe(mb, train, test, fs);

    CHECK(max_abs_diff(ma.flatten_params(), mb.flatten_params()) > 0.0);
    double pen_rft = fat::cosine_shift_penalty(ma.flatten_params(), theta_init);
    double pen_rsft = fat::cosine_shift_penalty(mb.flatten_params(), theta_init);
    CHECK(pen_rsft < pen_rft);
}

TEST_CASE("rf reinitializes the prefix, freezes it, and is deterministic") {
    auto train = toy_data(96, 131);
    auto test = toy_data(64, 132);
    auto cfg0 = tiny_settings();
    cfg0.epochs = 1;

    auto ma = small_model(61);
    fat::train_fat(ma, train, test, cfg0);
    auto mb = ma.clone();

    std::vector<std::vector<float>> before;
    for (const auto* p : ma.params())
        before.emplace_back(p->w.data(), p->w.data() + p->w.numel());

    fat::FinetuneSettings fs;
    fs.kind = fat::Recipe::RF;
    fs.k = 2;
    fs.lr = 0.05;
    fs.seed = 31;
    fat::apply_recipe(ma, train, test, fs);
    fat::apply_recipe(mb, train, test, fs);
    CHECK(max_abs_diff(ma.flatten_params(), mb.flatten_params()) == 0.0);

    // prefix params were reinitialized (differ from pre-recipe values)
    auto params = ma.params();
    for (size_t i = 0; i < params.size(); ++i) {
        if (!in_layer_prefix(params[i]->name, fs.k, 2)) continue;
        if (params[i]->name == "bn0.bias") continue;  // reinit zeroes it; it may already be near zero
        bool moved = std::memcmp(before[i].data(), params[i]->w.data(),
                                 sizeof(float) * static_cast<size_t>(params[i]->w.numel())) != 0;
        CHECK_MESSAGE(moved, params[i]->name);
    }
}

TEST_CASE("recurrence probe covers the requested horizon and reports plumbing") {
    auto train = toy_data(96, 141);
    auto test = toy_data(64, 142);
    auto m = small_model(67);
    auto cfg = tiny_settings();
    cfg.epochs = 1;
    fat::train_fat(m, train, test, cfg);

    auto rep = fat::recurrence_probe(m, train, test, cfg, 2);
    CHECK(rep.probe.history.size() == 2);
    // fresh toy model has no robust peak to collapse from
    CHECK_FALSE(rep.recurred);
    CHECK(rep.epoch == -1);
}

TEST_CASE("co detector fires only on a collapse with closed fgsm gap") {
    using fat::EpochStats;
    auto row = [](double pgd, double fgsm, double clean) {
        EpochStats e;
        e.pgd10 = pgd;
        e.fgsm = fgsm;
        e.clean = clean;
        return e;
    };
    int ep = -1;
    // healthy run: never fires
    std::vector<EpochStats> h = {row(10, 40, 80), row(20, 45, 82), row(30, 50, 84)};
    CHECK_FALSE(fat::co_detect(h, 0.2, 5.0, &ep));
    // collapse with leak: fires at the collapsing epoch
    h = {row(10, 40, 80), row(42, 50, 84), row(3, 83, 85)};
    CHECK(fat::co_detect(h, 0.2, 5.0, &ep));
    CHECK(ep == 2);
    // collapse without the fgsm-clean gap closing: not CO
    h = {row(10, 40, 80), row(42, 50, 84), row(3, 60, 85)};
    CHECK_FALSE(fat::co_detect(h, 0.2, 5.0, &ep));
    // all-zero history never fires
    h = {row(0, 80, 80), row(0, 80, 80), row(0, 80, 80)};
    CHECK_FALSE(fat::co_detect(h, 0.2, 5.0, &ep));
    // drop measured against the running peak, not the previous epoch
    h = {row(40, 40, 80), row(10, 45, 82), row(7, 83, 85)};
    CHECK(fat::co_detect(h, 0.2, 5.0, &ep));
    CHECK(ep == 2);
}

TEST_CASE("evaluate is pure: repeated calls agree and leave the model alone") {
    auto train = toy_data(96, 151);
    auto test = toy_data(64, 152);
    auto m = small_model(71);
    auto cfg = tiny_settings();
    cfg.epochs = 1;
    fat::train_fat(m, train, test, cfg);

    auto theta = m.flatten_params();
    auto a = fat::evaluate(m, test, cfg.xi, 3);
    auto b = fat::evaluate(m, test, cfg.xi, 3);
    CHECK(a.clean == b.clean);
    CHECK(a.perturbed == b.perturbed);
    CHECK(a.fgsm == b.fgsm);
    CHECK(a.pgd10 == b.pgd10);
    CHECK(max_abs_diff(theta, m.flatten_params()) == 0.0);
}

TEST_CASE("mep training is deterministic and keeps the buffer inside the ball") {
    auto train = toy_data(96, 161);
    auto test = toy_data(64, 162);
    auto cfg = tiny_settings();
    cfg.method = fat::Method::FgsmMep;
    cfg.epochs = 2;

    auto ma = small_model(73);
    auto ra = fat::train_fat(ma, train, test, cfg);
    auto mb = small_model(73);
    auto rb = fat::train_fat(mb, train, test, cfg);
    CHECK(same_history(ra.history, rb.history));
    CHECK(max_abs_diff(ma.flatten_params(), mb.flatten_params()) == 0.0);
}

TEST_CASE("toy problem actually trains") {
    auto train = toy_data(256, 171);
    auto test = toy_data(128, 172);
    auto cfg = tiny_settings();
    cfg.epochs = 4;
    auto m = small_model(79);
    auto r = fat::train_fat(m, train, test, cfg);
    CHECK(r.history.back().clean > 60.0);  // 4 classes, chance is 25
}
